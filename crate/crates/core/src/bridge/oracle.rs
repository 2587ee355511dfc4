use sha2::{Digest, Sha256};

use crate::taskstream::{ClassDescriptor, Sample};

/// Pre-softmax gap between the peaked class and the rest.
pub const ORACLE_MARGIN: f64 = 2.0;

/// Stand-in general-knowledge teacher with a configurable hit rate.
///
/// Whether a sample is answered correctly, and which wrong class is
/// chosen otherwise, depends only on `(seed, sample id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyOracleTeacher {
    accuracy: f64,
    seed: u64,
}

impl NoisyOracleTeacher {
    pub fn new(accuracy: f64, seed: u64) -> crate::Result<Self> {
        if !(accuracy > 0.0 && accuracy <= 1.0) {
            return Err(crate::Error::InvalidArgument(format!(
                "oracle accuracy must be in (0, 1], got {accuracy}"
            )));
        }
        Ok(Self { accuracy, seed })
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    fn draws(&self, sample_id: &str) -> (f64, u64) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(sample_id.as_bytes());
        let d: [u8; 32] = h.finalize().into();
        let u = u64::from_le_bytes(d[..8].try_into().unwrap());
        let pick = u64::from_le_bytes(d[8..16].try_into().unwrap());
        ((u >> 11) as f64 / (1u64 << 53) as f64, pick)
    }

    pub fn query(&self, sample: &Sample, classes: &[ClassDescriptor]) -> Vec<f64> {
        let mut z = vec![0.0; classes.len()];
        if classes.is_empty() {
            return z;
        }
        let (u, pick) = self.draws(&sample.id);
        let truth = classes.iter().position(|c| c.id == sample.answer);
        let peak = match truth {
            Some(t) if u < self.accuracy => t,
            Some(t) if classes.len() > 1 => {
                let k = (pick % (classes.len() as u64 - 1)) as usize;
                if k >= t {
                    k + 1
                } else {
                    k
                }
            }
            Some(t) => t,
            None => (pick % classes.len() as u64) as usize,
        };
        z[peak] = ORACLE_MARGIN;
        z
    }
}
