//! Adaptive loss weights.
//!
//! `α` is a fixed hyperparameter. The remaining `1 − α` is split between the
//! previous-task teacher (`β`) and the general-knowledge teacher (`χ`) by
//! two shares: one from the teachers' accuracies on the current training
//! data (domain shift), one from the cumulative imbalance ratio (data
//! imbalance), mixed by `θ_DS` and `θ_DI` with `θ_DS + θ_DI = 1 − α`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bridge::TeacherHandle;
use crate::taskstream::{ClassDescriptor, TaskDataset};
use crate::{Error, Result};

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recompute {
    #[default]
    PerTask,
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub alpha: f64,
    pub theta_ds: f64,
    pub theta_di: f64,
    /// Logarithm base for the imbalance share; `None` uses the cumulative
    /// class count (at least 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_base: Option<f64>,
    #[serde(default)]
    pub recompute: Recompute,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            theta_ds: 0.25,
            theta_di: 0.25,
            log_base: None,
            recompute: Recompute::PerTask,
        }
    }
}

impl WeightConfig {
    /// Every violated constraint, in a stable order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.alpha) {
            out.push(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if !(self.theta_ds >= 0.0) {
            out.push(format!("theta_ds must be >= 0, got {}", self.theta_ds));
        }
        if !(self.theta_di >= 0.0) {
            out.push(format!("theta_di must be >= 0, got {}", self.theta_di));
        }
        if !((self.theta_ds + self.theta_di) - (1.0 - self.alpha))
            .abs()
            .le(&SUM_TOL)
        {
            out.push(format!(
                "theta_ds + theta_di must equal 1 - alpha ({} + {} != 1 - {})",
                self.theta_ds, self.theta_di, self.alpha
            ));
        }
        if let Some(b) = self.log_base {
            if !(b > 1.0) || !b.is_finite() {
                out.push(format!("log_base must be > 1, got {b}"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Configured base, else the class count floored at 2.
    pub fn log_base_for(&self, class_count: usize) -> f64 {
        self.log_base.unwrap_or_else(|| (class_count as f64).max(2.0))
    }
}

/// Normalized `(α, β, χ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightTriple {
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
}

impl WeightTriple {
    pub const FINE_TUNE: WeightTriple = WeightTriple {
        alpha: 1.0,
        beta: 0.0,
        chi: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, chi: f64) -> Result<Self> {
        let w = Self { alpha, beta, chi };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("chi", self.chi)] {
            if !(0.0..=1.0).contains(&v) {
                p.push(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        let sum = self.alpha + self.beta + self.chi;
        if !((sum - 1.0).abs() <= SUM_TOL) {
            p.push(format!("weights must sum to 1, got {sum}"));
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    pub fn uses_prev_teacher(&self) -> bool {
        self.beta > 0.0
    }

    pub fn uses_llm_teacher(&self) -> bool {
        self.chi > 0.0
    }
}

/// Intermediate quantities behind a [`WeightTriple`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightBreakdown {
    pub beta_ds: f64,
    pub chi_ds: f64,
    pub beta_di: f64,
    pub chi_di: f64,
    pub acc_prev: f64,
    pub acc_llm: f64,
    pub ir: f64,
    pub log_base: f64,
}

fn check_accuracy(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {v}")))
    }
}

/// Accuracy-proportional shares; `(0.5, 0.5)` when both accuracies are 0.
pub fn ds_shares(acc_prev: f64, acc_llm: f64) -> Result<(f64, f64)> {
    check_accuracy("acc_prev", acc_prev)?;
    check_accuracy("acc_llm", acc_llm)?;
    let total = acc_prev + acc_llm;
    if total == 0.0 {
        return Ok((0.5, 0.5));
    }
    let beta = acc_prev / total;
    Ok((beta, 1.0 - beta))
}

/// `(1/(1+log_b IR), log_b IR/(1+log_b IR))`.
pub fn di_shares(ir: f64, log_base: f64) -> Result<(f64, f64)> {
    if !(ir >= 1.0) || !ir.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "imbalance ratio must be >= 1, got {ir}"
        )));
    }
    if !(log_base > 1.0) || !log_base.is_finite() {
        return Err(Error::InvalidArgument(format!("log base must be > 1, got {log_base}")));
    }
    let l = ir.ln() / log_base.ln();
    let beta = 1.0 / (1.0 + l);
    Ok((beta, 1.0 - beta))
}

pub fn assemble_weights(
    cfg: &WeightConfig,
    acc_prev: f64,
    acc_llm: f64,
    ir: f64,
    log_base: f64,
) -> Result<(WeightTriple, WeightBreakdown)> {
    cfg.validate()?;
    let (beta_ds, chi_ds) = ds_shares(acc_prev, acc_llm)?;
    let (beta_di, chi_di) = di_shares(ir, log_base)?;
    let beta = cfg.theta_ds * beta_ds + cfg.theta_di * beta_di;
    let chi = cfg.theta_ds * chi_ds + cfg.theta_di * chi_di;
    let triple = WeightTriple::new(cfg.alpha, beta, chi)?;
    Ok((
        triple,
        WeightBreakdown {
            beta_ds,
            chi_ds,
            beta_di,
            chi_di,
            acc_prev,
            acc_llm,
            ir,
            log_base,
        },
    ))
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in xs.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Top-1 accuracy of per-sample teacher logits aligned with `mask`.
///
/// A sample whose label is not in `mask` counts as wrong.
pub fn accuracy_from_logits(task: &TaskDataset, mask: &[ClassDescriptor], logits: &[Vec<f64>]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::InvalidArgument(
            "teacher accuracy over an empty class mask".into(),
        ));
    }
    if task.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "task {} has no samples",
            task.task_index
        )));
    }
    let mut correct = 0usize;
    for (s, z) in task.samples.iter().zip(logits) {
        if z.len() != mask.len() {
            return Err(Error::Dimension(format!(
                "teacher gave {} logits for {} candidates",
                z.len(),
                mask.len()
            )));
        }
        if argmax(z).map(|i| mask[i].id) == Some(s.answer) {
            correct += 1;
        }
    }
    Ok(correct as f64 / task.len() as f64)
}

/// Queries `teacher` on every sample of `task` with `mask` as candidates.
pub fn measure_teacher_accuracy(teacher: &TeacherHandle, task: &TaskDataset, mask: &[ClassDescriptor]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::InvalidArgument(
            "teacher accuracy over an empty class mask".into(),
        ));
    }
    let logits = teacher.query_batch(&task.samples, mask, crate::Exec::default())?;
    accuracy_from_logits(task, mask, &logits)
}

/// One weight recompute event. Accuracy and share columns are empty when
/// the weights were fixed rather than derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightTraceRow {
    pub t: usize,
    pub epoch: usize,
    pub breakdown: Option<WeightBreakdown>,
    pub ir: f64,
    pub weights: WeightTriple,
}

pub const WEIGHT_TRACE_HEADER: &str = "t,epoch,acc_prev,acc_llm,ir,beta_ds,chi_ds,beta_di,chi_di,alpha,beta,chi";

impl WeightTraceRow {
    pub fn csv_line(&self) -> String {
        let f = |v: f64| format!("{v:.6}");
        let opt = |g: fn(&WeightBreakdown) -> f64| self.breakdown.as_ref().map(g).map(f).unwrap_or_default();
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.epoch,
            opt(|b| b.acc_prev),
            opt(|b| b.acc_llm),
            f(self.ir),
            opt(|b| b.beta_ds),
            opt(|b| b.chi_ds),
            opt(|b| b.beta_di),
            opt(|b| b.chi_di),
            f(self.weights.alpha),
            f(self.weights.beta),
            f(self.weights.chi),
        )
        .unwrap();
        s
    }
}

pub fn weight_trace_csv(rows: &[WeightTraceRow]) -> String {
    let mut s = String::from(WEIGHT_TRACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}
