//! Temperature-softened softmax, cross-entropy and response-based
//! distillation losses, with analytic gradients w.r.t. student logits.
//!
//! Teacher distributions are treated as constants: gradients only flow
//! into the student. No `δ²` rescaling is applied to distillation terms;
//! callers who want the Hinton-style factor can fold it into the weights.

use crate::weights::WeightTriple;
use crate::{Error, Result};

/// Lower clamp on probabilities inside `log`.
pub const PROB_EPS: f64 = 1e-12;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check_logits(z: &[f64], delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {delta}")));
    }
    if z.is_empty() {
        return Err(Error::InvalidArgument("empty logits".into()));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("logit {bad}")));
    }
    Ok(())
}

/// `log σ(z/δ)`, computed stably.
pub fn log_softened_softmax(z: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_logits(z, delta)?;
    let scaled: Vec<f64> = z.iter().map(|v| v / delta).collect();
    let lse = log_sum_exp(&scaled);
    Ok(scaled.into_iter().map(|s| s - lse).collect())
}

/// `σ(z/δ)`; `δ = 1` is the ordinary softmax.
pub fn softened_softmax(z: &[f64], delta: f64) -> Result<Vec<f64>> {
    Ok(log_softened_softmax(z, delta)?.into_iter().map(f64::exp).collect())
}

/// `-Σ target·log(max(prediction, ε))`.
pub fn cross_entropy(target: &[f64], prediction: &[f64]) -> Result<f64> {
    if target.len() != prediction.len() {
        return Err(Error::Dimension(format!(
            "cross-entropy over {} targets and {} predictions",
            target.len(),
            prediction.len()
        )));
    }
    Ok(target
        .iter()
        .zip(prediction)
        .filter(|(&t, _)| t != 0.0)
        .map(|(&t, &p)| -t * p.max(PROB_EPS).ln())
        .sum())
}

/// Student indices a teacher's logits are aligned with.
///
/// Teacher logits passed alongside a mask are in mask order: entry `k`
/// of the teacher vector corresponds to student logit `mask[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask(Vec<usize>);

impl ClassMask {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty class mask".into()));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate index in class mask".into()));
        }
        Ok(Self(indices))
    }

    /// Mask covering the first `n` student outputs.
    pub fn all(n: usize) -> Result<Self> {
        Self::new((0..n).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn gather(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.0
            .iter()
            .map(|&i| {
                z.get(i)
                    .copied()
                    .ok_or_else(|| Error::Dimension(format!("mask index {i} outside {} student logits", z.len())))
            })
            .collect()
    }
}

/// Distillation loss `CE(σ(t/δ), σ(s/δ))` over `mask`.
pub fn kd_loss(teacher: &[f64], student: &[f64], delta: f64, mask: &ClassMask) -> Result<f64> {
    Ok(kd_loss_with_grad(teacher, student, delta, mask)?.0)
}

/// Distillation loss and its gradient w.r.t. the full student logit vector.
pub fn kd_loss_with_grad(teacher: &[f64], student: &[f64], delta: f64, mask: &ClassMask) -> Result<(f64, Vec<f64>)> {
    if teacher.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "teacher gives {} logits for a mask of {}",
            teacher.len(),
            mask.len()
        )));
    }
    let student_masked = mask.gather(student)?;
    let target = softened_softmax(teacher, delta)?;
    let (loss, g) = soft_target_ce(&target, &student_masked, delta)?;
    let mut grad = vec![0.0; student.len()];
    for (&i, gi) in mask.indices().iter().zip(g) {
        grad[i] = gi;
    }
    Ok((loss, grad))
}

/// Hard-label loss `CE(one_hot(label), σ(z))` and its gradient.
pub fn hard_label_loss_with_grad(z: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= z.len() {
        return Err(Error::Dimension(format!("label {label} outside {} logits", z.len())));
    }
    let mut target = vec![0.0; z.len()];
    target[label] = 1.0;
    soft_target_ce(&target, z, 1.0)
}

/// `-Σ q·clamp(log σ(z/δ))` and the gradient w.r.t. `z`, for a fixed target `q`.
fn soft_target_ce(q: &[f64], z: &[f64], delta: f64) -> Result<(f64, Vec<f64>)> {
    let logp = log_softened_softmax(z, delta)?;
    let floor = PROB_EPS.ln();
    let mut loss = 0.0;
    let mut q_live = 0.0;
    for (&qi, &lp) in q.iter().zip(&logp) {
        if lp >= floor {
            q_live += qi;
            loss -= qi * lp;
        } else {
            loss -= qi * floor;
        }
    }
    let grad = q
        .iter()
        .zip(&logp)
        .map(|(&qi, &lp)| {
            let own = if lp >= floor { qi } else { 0.0 };
            (lp.exp() * q_live - own) / delta
        })
        .collect();
    Ok((loss, grad))
}

/// The three loss terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l0: f64,
    pub l_kd_prev: f64,
    pub l_kd_llm: f64,
    pub total: f64,
}

/// `α·L0 + β·L_prev + χ·L_llm`.
pub fn combined_loss(l0: f64, l_prev: f64, l_llm: f64, w: &WeightTriple) -> Result<LossBreakdown> {
    w.validate()?;
    for (name, v) in [("l0", l0), ("l_kd_prev", l_prev), ("l_kd_llm", l_llm)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} = {v}")));
        }
        if v < 0.0 {
            return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
        }
    }
    Ok(LossBreakdown {
        l0,
        l_kd_prev: l_prev,
        l_kd_llm: l_llm,
        total: w.alpha * l0 + w.beta * l_prev + w.chi * l_llm,
    })
}

/// The teachers' joint soft target over the full head: the β,χ-weighted sum
/// of `σ(z_prev/δ)` (scattered onto `prev_mask`, zero elsewhere) and
/// `σ(z_llm/δ)`, renormalized by `β + χ`.
pub fn fused_teacher_target(
    prev: &[f64],
    prev_mask: &ClassMask,
    llm: &[f64],
    delta: f64,
    beta: f64,
    chi: f64,
) -> Result<Vec<f64>> {
    if prev.len() != prev_mask.len() {
        return Err(Error::Dimension(format!(
            "previous teacher gives {} logits for a mask of {}",
            prev.len(),
            prev_mask.len()
        )));
    }
    if !(beta >= 0.0 && chi >= 0.0 && beta + chi > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "teacher weights need beta, chi >= 0 with a positive sum, got {beta}, {chi}"
        )));
    }
    let p = softened_softmax(prev, delta)?;
    let q = softened_softmax(llm, delta)?;
    let mut out: Vec<f64> = q.iter().map(|v| chi * v).collect();
    for (&i, pi) in prev_mask.indices().iter().zip(p) {
        let slot = out
            .get_mut(i)
            .ok_or_else(|| Error::Dimension(format!("mask index {i} outside {} LLM logits", llm.len())))?;
        *slot += beta * pi;
    }
    let s = beta + chi;
    Ok(out.into_iter().map(|v| v / s).collect())
}

/// KL(p ‖ uniform) = ln n − H(p).
pub fn kl_to_uniform(p: &[f64]) -> f64 {
    let n = p.len() as f64;
    p.iter().filter(|&&v| v > 0.0).map(|&v| v * (v * n).ln()).sum()
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}
