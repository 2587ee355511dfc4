//! Embedding-to-logits bridge for generative teachers.
//!
//! A teacher that scores each candidate label token by token produces an
//! N×(M+1)×P tensor of pre-softmax vocabulary scores. We flatten it to
//! N(M+1) rows, take the cross-entropy of each row against that position's
//! target token, sum the M+1 positions of every candidate into `V`, and
//! invert: `z(j) = 1 / max(V(j), eps)`. Pause positions are summed too.

use super::TokenizedLabelSet;
use crate::losses::log_sum_exp;
use crate::{Error, Result};

/// Clamp applied to `V` before inversion.
pub const DEFAULT_INVERSION_EPS: f64 = 1e-6;

/// Candidate × position × vocabulary scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTensor {
    dims: [usize; 3],
    scores: Vec<f64>,
}

impl EmbeddingTensor {
    pub fn new(candidates: usize, positions: usize, vocab: usize, scores: Vec<f64>) -> Result<Self> {
        let expected = candidates * positions * vocab;
        if scores.len() != expected {
            return Err(Error::Dimension(format!(
                "tensor {candidates}x{positions}x{vocab} needs {expected} scores, got {}",
                scores.len()
            )));
        }
        Ok(Self {
            dims: [candidates, positions, vocab],
            scores,
        })
    }

    pub fn zeros(candidates: usize, positions: usize, vocab: usize) -> Self {
        Self {
            dims: [candidates, positions, vocab],
            scores: vec![0.0; candidates * positions * vocab],
        }
    }

    /// (N, M+1, P).
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Vocabulary row for (candidate, position).
    pub fn row(&self, candidate: usize, position: usize) -> &[f64] {
        let [_, m1, p] = self.dims;
        let start = (candidate * m1 + position) * p;
        &self.scores[start..start + p]
    }

    pub fn row_mut(&mut self, candidate: usize, position: usize) -> &mut [f64] {
        let [_, m1, p] = self.dims;
        let start = (candidate * m1 + position) * p;
        &mut self.scores[start..start + p]
    }

    fn check_against(&self, labels: &TokenizedLabelSet) -> Result<()> {
        let want = [labels.len(), labels.positions(), labels.vocab_size()];
        if self.dims != want {
            return Err(Error::Dimension(format!(
                "embedding dims {:?} do not match tokenized labels {:?}",
                self.dims, want
            )));
        }
        if let Some(bad) = self.scores.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding score {bad}")));
        }
        Ok(())
    }
}

/// Summed per-candidate token cross-entropy `V` (length N).
pub fn label_token_losses(e: &EmbeddingTensor, labels: &TokenizedLabelSet) -> Result<Vec<f64>> {
    e.check_against(labels)?;
    let [n, m1, _] = e.dims;
    let rows = e.scores.chunks_exact(e.dims[2]);
    let row_ce: Vec<f64> = rows
        .enumerate()
        .map(|(r, row)| log_sum_exp(row) - row[labels.target(r) as usize])
        .collect();
    Ok((0..n).map(|j| row_ce[j * m1..(j + 1) * m1].iter().sum()).collect())
}

/// Teacher logits from token-level scores; all entries are positive.
pub fn transform_embeddings_to_logits(e: &EmbeddingTensor, labels: &TokenizedLabelSet, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("inversion eps must be > 0, got {eps}")));
    }
    let v = label_token_losses(e, labels)?;
    Ok(v.into_iter().map(|x| 1.0 / x.max(eps)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::TokenVocab;
    use crate::losses::softened_softmax;

    fn labels(n: usize, m: usize, p: usize) -> TokenizedLabelSet {
        let seqs = (0..n)
            .map(|j| vec![(1 + j % (p - 1)) as u32; m.min(1 + j % 2)])
            .collect();
        TokenizedLabelSet::from_token_sequences(seqs, m, p).unwrap()
    }

    #[test]
    fn identical_flat_rows_give_uniform_distribution() {
        let set = labels(3, 2, 4);
        let mut e = EmbeddingTensor::zeros(3, 3, 4);
        for j in 0..3 {
            for pos in 0..3 {
                e.row_mut(j, pos).fill(0.7);
            }
        }
        let v = label_token_losses(&e, &set).unwrap();
        assert!(v.iter().all(|&x| (x - 3.0 * 4f64.ln()).abs() < 1e-12));
        let z = transform_embeddings_to_logits(&e, &set, 1e-6).unwrap();
        for p in softened_softmax(&z, 1.0).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn confident_candidate_wins() {
        let vocab = TokenVocab::char_level(["ab", "ba"]);
        let set = TokenizedLabelSet::tokenize(&["ab", "ba"], &vocab, 2).unwrap();
        let mut e = EmbeddingTensor::zeros(2, 3, vocab.len());
        for pos in 0..3 {
            let target = set.sequences()[0][pos] as usize;
            e.row_mut(0, pos)[target] = 1e4;
        }
        let v = label_token_losses(&e, &set).unwrap();
        assert!(v[0] < 1e-12);
        assert!((v[1] - 3.0 * (vocab.len() as f64).ln()).abs() < 1e-12);
        let z = transform_embeddings_to_logits(&e, &set, DEFAULT_INVERSION_EPS).unwrap();
        assert_eq!(z[0], 1.0 / DEFAULT_INVERSION_EPS);
        assert!(z[0] > z[1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let set = labels(2, 1, 3);
        let e = EmbeddingTensor::zeros(3, 2, 3);
        assert!(matches!(
            transform_embeddings_to_logits(&e, &set, 1e-6),
            Err(Error::Dimension(_))
        ));
        let mut e = EmbeddingTensor::zeros(2, 2, 3);
        e.row_mut(1, 1)[0] = f64::NAN;
        assert!(matches!(
            transform_embeddings_to_logits(&e, &set, 1e-6),
            Err(Error::NonFinite(_))
        ));
        let e = EmbeddingTensor::zeros(2, 2, 3);
        assert!(transform_embeddings_to_logits(&e, &set, 0.0).is_err());
        assert!(EmbeddingTensor::new(2, 2, 3, vec![0.0; 11]).is_err());
    }
}
