//! Runs a configured experiment and writes its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bridge::{FixtureStore, FixtureTeacher, NoisyOracleTeacher, ServiceTeacher, Teacher, TeacherHandle};
use crate::config::{LlmTeacherConfig, RunConfig};
use crate::engine::{evaluate, run_continual, Checkpoint, MetricsRow, QuestionEncoder, RunOutcome};
use crate::taskstream::{load_task, load_task_split, Split, StreamManifest};
use crate::weights::weight_trace_csv;
use crate::{Error, Exec, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const LOSSES_FILE: &str = "losses.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const RUN_INFO_FILE: &str = "run_info.json";

/// Reproduction record stored in every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub tool: String,
    pub version: String,
    pub config_digest: String,
    pub seed: u64,
    pub mode: String,
    pub parallel_build: bool,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub outcome: RunOutcome,
    pub run_dir: PathBuf,
    pub llm_queries: u64,
}

/// Builds the configured LLM teacher, if any.
pub fn build_llm_teacher(cfg: &RunConfig, manifest: &StreamManifest) -> Result<Option<TeacherHandle>> {
    let vocab_size = manifest.load_vocab()?.len();
    let teacher = match &cfg.teacher.llm {
        LlmTeacherConfig::None => return Ok(None),
        LlmTeacherConfig::NoisyOracle { accuracy, seed } => {
            Teacher::NoisyOracle(NoisyOracleTeacher::new(*accuracy, seed.unwrap_or(cfg.seed))?)
        }
        LlmTeacherConfig::Fixture { path, eps } => Teacher::Fixture(FixtureTeacher::new(
            FixtureStore::load(path)?,
            manifest.max_label_tokens,
            vocab_size,
            *eps,
        )),
        LlmTeacherConfig::Service { eps, .. } => Teacher::Service(ServiceTeacher::new(
            cfg.service_config().expect("service config"),
            manifest.max_label_tokens,
            vocab_size,
            *eps,
        )),
    };
    Ok(Some(TeacherHandle::new(teacher)))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn losses_csv(outcome: &RunOutcome) -> String {
    let mut s = String::from("t,batch,l0,l_kd_prev,l_kd_llm,total\n");
    let mut last_t = 0;
    let mut k = 0;
    for (t, b) in &outcome.batches {
        if *t != last_t {
            last_t = *t;
            k = 0;
        }
        writeln!(
            s,
            "{t},{k},{:.9},{:.9},{:.9},{:.9}",
            b.l0, b.l_kd_prev, b.l_kd_llm, b.total
        )
        .unwrap();
        k += 1;
    }
    s
}

/// Validates `cfg`, runs the stream and writes all artifacts to
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let manifest = StreamManifest::load(&cfg.manifest)?;
    let llm = build_llm_teacher(cfg, &manifest)?;
    let engine = cfg.engine_config();
    let run_dir = cfg.output_dir.clone();
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    write(&run_dir.join(RESOLVED_CONFIG_FILE), &cfg.to_toml())?;
    let info = RunInfo {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_digest: hex::encode(engine.config_digest),
        seed: cfg.seed,
        mode: format!("{:?}", cfg.mode).to_lowercase(),
        parallel_build: cfg!(feature = "parallel"),
    };
    write(
        &run_dir.join(RUN_INFO_FILE),
        &(serde_json::to_string_pretty(&info).expect("run info serializes") + "\n"),
    )?;

    let outcome = run_continual(&manifest, &engine, llm.as_ref())?;
    write(&run_dir.join(METRICS_FILE), &outcome.table.to_csv())?;
    write(&run_dir.join(WEIGHTS_FILE), &weight_trace_csv(&outcome.trace))?;
    write(&run_dir.join(LOSSES_FILE), &losses_csv(&outcome))?;
    Ok(ExperimentReport {
        llm_queries: llm.as_ref().map_or(0, |l| l.query_count()),
        outcome,
        run_dir,
    })
}

/// Scores a checkpoint on the given tasks, or on every task up to the
/// checkpoint's own index. Held-out splits are used when present.
pub fn evaluate_checkpoint(
    checkpoint: &Checkpoint,
    manifest: &StreamManifest,
    tasks: Option<&[usize]>,
    exec: Exec,
) -> Result<MetricsRow> {
    let encoder = QuestionEncoder::new(manifest.load_vocab()?, manifest.feature_len);
    if encoder.input_dim() != checkpoint.model.input_dim() {
        return Err(Error::Dimension(format!(
            "checkpoint expects input length {}, manifest gives {}",
            checkpoint.model.input_dim(),
            encoder.input_dim()
        )));
    }
    for (c, name) in checkpoint.model.classes().iter().zip(&checkpoint.labels) {
        if manifest.class_id(name) != Some(*c) {
            return Err(Error::UnknownClass(format!(
                "checkpoint label {name:?} does not map to {c} in this manifest"
            )));
        }
    }
    let indices: Vec<usize> = match tasks {
        Some(t) => t.to_vec(),
        None => manifest
            .task_indices()
            .into_iter()
            .filter(|&t| t <= checkpoint.task_index)
            .collect(),
    };
    let mut entries = Vec::with_capacity(indices.len());
    for t in indices {
        let data = if manifest.task(t)?.test.is_some() {
            load_task_split(manifest, t, Split::Test)?
        } else {
            load_task(manifest, t)?
        };
        entries.push(evaluate(&checkpoint.model, &encoder, &data, exec)?);
    }
    Ok(MetricsRow {
        t: checkpoint.task_index,
        entries,
    })
}
