use std::path::PathBuf;
use std::sync::Arc;

use super::{
    evaluate, train_task, Checkpoint, MetricsRow, MetricsTable, QuestionEncoder, StudentModel, Teachers, TrainConfig,
};
use crate::bridge::TeacherHandle;
use crate::losses::LossBreakdown;
use crate::taskstream::{
    load_task, load_task_split, ClassDescriptor, ImbalanceLedger, Split, StreamManifest, TaskDataset,
};
use crate::weights::WeightTraceRow;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub train: TrainConfig,
    pub hidden: [usize; 2],
    /// Directory for one checkpoint per task; none are written when unset.
    pub checkpoint_dir: Option<PathBuf>,
    pub config_digest: [u8; 32],
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden: [64, 32],
            checkpoint_dir: None,
            config_digest: [0; 32],
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub table: MetricsTable,
    pub trace: Vec<WeightTraceRow>,
    /// `(t, batch-mean losses)` in optimization order.
    pub batches: Vec<(usize, LossBreakdown)>,
    pub model: StudentModel,
    pub prev_queries: u64,
    pub checkpoints: Vec<PathBuf>,
}

fn eval_split(manifest: &StreamManifest, t: usize) -> Result<TaskDataset> {
    if manifest.task(t)?.test.is_some() {
        load_task_split(manifest, t, Split::Test)
    } else {
        load_task(manifest, t)
    }
}

/// Trains over every task of the stream in order.
///
/// After each task the student is evaluated on the held-out split of every
/// task seen so far (the training split when a task has none) and then
/// frozen as the previous teacher for the next task.
pub fn run_continual(manifest: &StreamManifest, cfg: &EngineConfig, llm: Option<&TeacherHandle>) -> Result<RunOutcome> {
    let order = manifest.task_indices();
    if order.is_empty() {
        return Err(Error::Config(vec!["manifest lists no tasks".into()]));
    }
    let encoder = Arc::new(QuestionEncoder::new(manifest.load_vocab()?, manifest.feature_len));
    let mut student: Option<StudentModel> = None;
    let mut prev: Option<TeacherHandle> = None;
    let mut ledger = ImbalanceLedger::new();
    let mut seen: Vec<TaskDataset> = Vec::new();
    let mut table = MetricsTable::default();
    let mut trace = Vec::new();
    let mut batches = Vec::new();
    let mut prev_queries = 0;
    let mut checkpoints = Vec::new();

    for &t in &order {
        let task = load_task(manifest, t)?;
        let model = match student.as_mut() {
            Some(m) => {
                let new: Vec<_> = task
                    .class_ids()
                    .into_iter()
                    .filter(|&c| m.class_index(c).is_none())
                    .collect();
                m.grow_head(&new)?;
                m
            }
            None => student.insert(StudentModel::new(
                encoder.input_dim(),
                cfg.hidden,
                &task.class_ids(),
                cfg.train.seed,
            )?),
        };
        ledger.update(&task);
        let head: Vec<ClassDescriptor> = model
            .classes()
            .iter()
            .map(|&c| manifest.descriptor(c).ok_or_else(|| Error::UnknownClass(c.to_string())))
            .collect::<Result<_>>()?;

        let teachers = Teachers {
            prev: prev.as_ref(),
            llm,
        };
        let report = train_task(model, teachers, &task, &encoder, &head, &ledger, &cfg.train)?;
        trace.extend(report.trace);
        batches.extend(report.batches.into_iter().map(|b| (t, b)));
        if let Some(p) = &prev {
            prev_queries += p.query_count();
        }

        seen.push(eval_split(manifest, t)?);
        let entries = seen
            .iter()
            .map(|d| evaluate(model, &encoder, d, cfg.train.exec))
            .collect::<Result<Vec<_>>>()?;
        table.rows.push(MetricsRow { t, entries });

        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(format!("task{t}.ckpt"));
            Checkpoint {
                model: model.clone(),
                labels: head.iter().map(|d| d.name.clone()).collect(),
                task_index: t,
                trace: trace.clone(),
                config_digest: cfg.config_digest,
            }
            .save(&path)?;
            checkpoints.push(path);
        }
        prev = Some(TeacherHandle::previous(model.clone(), encoder.clone()));
    }
    Ok(RunOutcome {
        table,
        trace,
        batches,
        model: student.expect("at least one task"),
        prev_queries,
        checkpoints,
    })
}
