use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{QuestionEncoder, StudentModel};
use crate::bridge::TeacherHandle;
use crate::losses::{combined_loss, hard_label_loss_with_grad, kd_loss_with_grad, ClassMask, LossBreakdown};
use crate::taskstream::{ClassDescriptor, ImbalanceLedger, TaskDataset};
use crate::weights::{accuracy_from_logits, assemble_weights, Recompute, WeightConfig, WeightTraceRow, WeightTriple};
use crate::{Error, Exec, Result};

/// How `(α, β, χ)` are chosen for a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightPolicy {
    Adaptive(WeightConfig),
    Fixed(WeightTriple),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub temperature: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: WeightPolicy,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            temperature: 2.0,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            weights: WeightPolicy::Adaptive(WeightConfig::default()),
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            p.push(format!("temperature must be > 0, got {}", self.temperature));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            p.push(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            p.push("batch_size must be positive".into());
        }
        match &self.weights {
            WeightPolicy::Adaptive(w) => p.extend(w.problems()),
            WeightPolicy::Fixed(w) => {
                if let Err(Error::Config(e)) = w.validate() {
                    p.extend(e);
                }
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Teachers<'a> {
    pub prev: Option<&'a TeacherHandle>,
    pub llm: Option<&'a TeacherHandle>,
}

/// Everything recorded while training one task.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub trace: Vec<WeightTraceRow>,
    /// Batch-mean loss terms, in optimization order.
    pub batches: Vec<LossBreakdown>,
}

/// Sample visiting order for one epoch.
pub fn epoch_order(seed: u64, task_index: usize, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((task_index as u64) << 32) | epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

struct Resolved {
    weights: WeightTriple,
    row: WeightTraceRow,
    prev_logits: Option<Vec<Vec<f64>>>,
    llm_logits: Option<Vec<Vec<f64>>>,
}

/// Trains `student` on one task with hard labels and up to two teachers.
///
/// `head` must describe the student's output rows in order. The previous
/// teacher is distilled over the classes it knows; the LLM teacher over
/// the full head. A task without a previous teacher is trained on hard
/// labels only.
pub fn train_task(
    student: &mut StudentModel,
    teachers: Teachers<'_>,
    task: &TaskDataset,
    encoder: &QuestionEncoder,
    head: &[ClassDescriptor],
    ledger: &ImbalanceLedger,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if head.len() != student.output_dim() || head.iter().zip(student.classes()).any(|(d, &c)| d.id != c) {
        return Err(Error::Dimension(
            "head descriptors do not match the student's classes".into(),
        ));
    }
    let mut label_idx = Vec::with_capacity(task.len());
    for s in &task.samples {
        label_idx.push(
            student
                .class_index(s.answer)
                .ok_or_else(|| Error::UnknownClass(format!("{} is not in the student head", s.answer)))?,
        );
    }

    let prev_mask_desc: Vec<ClassDescriptor> = match teachers.prev.and_then(|p| p.known_classes()) {
        Some(known) => known
            .iter()
            .map(|&id| {
                head.iter()
                    .find(|d| d.id == id)
                    .cloned()
                    .ok_or_else(|| Error::UnknownClass(format!("previous teacher class {id} is not in the head")))
            })
            .collect::<Result<_>>()?,
        None => head.to_vec(),
    };
    let prev_mask = match teachers.prev {
        Some(_) => Some(ClassMask::new(
            prev_mask_desc
                .iter()
                .map(|d| student.class_index(d.id).unwrap())
                .collect(),
        )?),
        None => None,
    };
    let full_mask = ClassMask::all(student.output_dim())?;

    let resolved = resolve_weights(teachers, task, head, &prev_mask_desc, ledger, cfg)?;
    let w = resolved.weights;
    let inputs: Vec<Vec<f64>> = cfg.exec.map(&task.samples, |s| encoder.input_vector(s));

    let mut report = TrainReport::default();
    if !matches!(&cfg.weights, WeightPolicy::Adaptive(c) if c.recompute == Recompute::PerEpoch) {
        report.trace.push(resolved.row);
    }

    let step = |i: usize, model: &StudentModel| -> Result<(LossBreakdown, Vec<f64>)> {
        let cache = model.forward(&inputs[i])?;
        let z = &cache.logits;
        let (l0, g0) = hard_label_loss_with_grad(z, label_idx[i])?;
        let mut dz: Vec<f64> = g0.iter().map(|g| w.alpha * g).collect();
        let mut l_prev = 0.0;
        if w.beta > 0.0 {
            let t = &resolved.prev_logits.as_ref().unwrap()[i];
            let (l, g) = kd_loss_with_grad(t, z, cfg.temperature, prev_mask.as_ref().unwrap())?;
            l_prev = l;
            dz.iter_mut().zip(&g).for_each(|(d, g)| *d += w.beta * g);
        }
        let mut l_llm = 0.0;
        if w.chi > 0.0 {
            let t = &resolved.llm_logits.as_ref().unwrap()[i];
            let (l, g) = kd_loss_with_grad(t, z, cfg.temperature, &full_mask)?;
            l_llm = l;
            dz.iter_mut().zip(&g).for_each(|(d, g)| *d += w.chi * g);
        }
        let b = combined_loss(l0, l_prev, l_llm, &w)?;
        Ok((b, model.backward(&cache, &dz)))
    };

    for epoch in 0..cfg.epochs {
        if matches!(&cfg.weights, WeightPolicy::Adaptive(c) if c.recompute == Recompute::PerEpoch) {
            report.trace.push(WeightTraceRow { epoch, ..resolved.row });
        }
        let order = epoch_order(cfg.seed, task.task_index, epoch, task.len());
        for batch in order.chunks(cfg.batch_size) {
            let results = cfg.exec.try_map(batch, |&i| step(i, student))?;
            let n = batch.len() as f64;
            let mut grad = vec![0.0; student.num_params()];
            let mut mean = LossBreakdown::default();
            for (b, g) in &results {
                grad.iter_mut().zip(g).for_each(|(a, v)| *a += v);
                mean.l0 += b.l0;
                mean.l_kd_prev += b.l_kd_prev;
                mean.l_kd_llm += b.l_kd_llm;
                mean.total += b.total;
            }
            mean.l0 /= n;
            mean.l_kd_prev /= n;
            mean.l_kd_llm /= n;
            mean.total /= n;
            if !mean.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "batch loss {} at task {} epoch {epoch}",
                    mean.total, task.task_index
                )));
            }
            grad.iter_mut().for_each(|g| *g /= n);
            student.apply_gradient(&grad, cfg.learning_rate)?;
            report.batches.push(mean);
        }
    }
    if !student.params_finite() {
        return Err(Error::NonFinite(format!(
            "student parameters after task {}",
            task.task_index
        )));
    }
    Ok(report)
}

fn resolve_weights(
    teachers: Teachers<'_>,
    task: &TaskDataset,
    head: &[ClassDescriptor],
    prev_mask: &[ClassDescriptor],
    ledger: &ImbalanceLedger,
    cfg: &TrainConfig,
) -> Result<Resolved> {
    let ir = ledger.imbalance_ratio();
    let supervised = |ir| Resolved {
        weights: WeightTriple::FINE_TUNE,
        row: WeightTraceRow {
            t: task.task_index,
            epoch: 0,
            breakdown: None,
            ir,
            weights: WeightTriple::FINE_TUNE,
        },
        prev_logits: None,
        llm_logits: None,
    };
    let Some(prev) = teachers.prev else {
        return Ok(supervised(ir));
    };
    let query = |t: &TeacherHandle, classes: &[ClassDescriptor]| t.query_batch(&task.samples, classes, cfg.exec);
    match &cfg.weights {
        WeightPolicy::Fixed(w) => {
            if w.chi > 0.0 && teachers.llm.is_none() {
                return Err(Error::InvalidArgument(
                    "chi > 0 but no LLM teacher is configured".into(),
                ));
            }
            let prev_logits = if w.beta > 0.0 {
                Some(query(prev, prev_mask)?)
            } else {
                None
            };
            let llm_logits = match teachers.llm {
                Some(llm) if w.chi > 0.0 => Some(query(llm, head)?),
                _ => None,
            };
            Ok(Resolved {
                weights: *w,
                row: WeightTraceRow {
                    t: task.task_index,
                    epoch: 0,
                    breakdown: None,
                    ir,
                    weights: *w,
                },
                prev_logits,
                llm_logits,
            })
        }
        WeightPolicy::Adaptive(wc) => {
            let llm = teachers
                .llm
                .ok_or_else(|| Error::InvalidArgument("adaptive weights need an LLM teacher".into()))?;
            let prev_logits = query(prev, prev_mask)?;
            let llm_logits = query(llm, head)?;
            let acc_prev = accuracy_from_logits(task, prev_mask, &prev_logits)?;
            let acc_llm = accuracy_from_logits(task, head, &llm_logits)?;
            let log_base = wc.log_base_for(ledger.class_count());
            let (weights, breakdown) = assemble_weights(wc, acc_prev, acc_llm, ir, log_base)?;
            Ok(Resolved {
                weights,
                row: WeightTraceRow {
                    t: task.task_index,
                    epoch: 0,
                    breakdown: Some(breakdown),
                    ir,
                    weights,
                },
                prev_logits: Some(prev_logits),
                llm_logits: Some(llm_logits),
            })
        }
    }
}
