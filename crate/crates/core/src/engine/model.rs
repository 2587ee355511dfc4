use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::taskstream::ClassId;
use crate::{Error, Result};

/// Standard deviation of freshly added output rows.
pub const HEAD_INIT_STD: f64 = 0.01;

/// Two tanh hidden layers and a linear head over the cumulative label space.
///
/// Output row `i` scores `classes()[i]`. Each head row is initialized from
/// an RNG keyed by `(seed, class id)`, so the result of growing the head
/// does not depend on how the growth was batched.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    input_dim: usize,
    hidden: [usize; 2],
    seed: u64,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: Vec<f64>,
    classes: Vec<ClassId>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    pub logits: Vec<f64>,
}

fn matvec(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    w.chunks_exact(x.len())
        .zip(b)
        .map(|(row, &bi)| bi + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn class_rng(seed: u64, class: ClassId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + class.0 as u64);
    rng
}

impl StudentModel {
    pub fn new(input_dim: usize, hidden: [usize; 2], classes: &[ClassId], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "model dims must be positive (input {input_dim}, hidden {hidden:?})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_in: usize, fan_out: usize| -> Vec<f64> {
            let n = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).unwrap();
            (0..fan_in * fan_out).map(|_| n.sample(&mut rng)).collect()
        };
        let w1 = layer(input_dim, hidden[0]);
        let w2 = layer(hidden[0], hidden[1]);
        let mut m = Self {
            input_dim,
            hidden,
            seed,
            w1,
            b1: vec![0.0; hidden[0]],
            w2,
            b2: vec![0.0; hidden[1]],
            w3: Vec::new(),
            b3: Vec::new(),
            classes: Vec::new(),
        };
        m.grow_head(classes)?;
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> [usize; 2] {
        self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn output_dim(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, id: ClassId) -> Option<usize> {
        self.classes.iter().position(|&c| c == id)
    }

    /// Appends output rows for `new_classes`; existing logits are untouched.
    pub fn grow_head(&mut self, new_classes: &[ClassId]) -> Result<()> {
        for (i, c) in new_classes.iter().enumerate() {
            if self.classes.contains(c) || new_classes[..i].contains(c) {
                return Err(Error::InvalidArgument(format!("class {c} is already in the head")));
            }
        }
        let n = Normal::new(0.0, HEAD_INIT_STD).unwrap();
        for &c in new_classes {
            let mut rng = class_rng(self.seed, c);
            self.w3.extend((0..self.hidden[1]).map(|_| n.sample(&mut rng)));
            self.b3.push(0.0);
            self.classes.push(c);
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + self.b3.len()
    }

    /// Flat parameters in the order w1, b1, w2, b2, w3, b3 (row-major).
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for part in [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3] {
            p.extend_from_slice(part);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "{} parameters for a model with {}",
                p.len(),
                self.num_params()
            )));
        }
        let mut rest = p;
        for part in [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// In-place `θ ← θ − lr·g` for a flat gradient.
    pub fn apply_gradient(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "gradient of {} for {} parameters",
                grad.len(),
                self.num_params()
            )));
        }
        let mut rest = grad;
        for part in [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ] {
            let (head, tail) = rest.split_at(part.len());
            for (w, g) in part.iter_mut().zip(head) {
                *w -= lr * g;
            }
            rest = tail;
        }
        Ok(())
    }

    pub fn params_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "input of length {} for a model expecting {}",
                x.len(),
                self.input_dim
            )));
        }
        let a1: Vec<f64> = matvec(&self.w1, &self.b1, x).into_iter().map(f64::tanh).collect();
        let a2: Vec<f64> = matvec(&self.w2, &self.b2, &a1).into_iter().map(f64::tanh).collect();
        let logits = if self.classes.is_empty() {
            Vec::new()
        } else {
            matvec(&self.w3, &self.b3, &a2)
        };
        Ok(ForwardCache {
            x: x.to_vec(),
            a1,
            a2,
            logits,
        })
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.logits)
    }

    /// Flat parameter gradient given `dL/dlogits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64]) -> Vec<f64> {
        let [h1, h2] = self.hidden;
        let d = self.input_dim;
        let c = self.classes.len();
        let mut g = vec![0.0; self.num_params()];
        let (gw1, rest) = g.split_at_mut(h1 * d);
        let (gb1, rest) = rest.split_at_mut(h1);
        let (gw2, rest) = rest.split_at_mut(h2 * h1);
        let (gb2, rest) = rest.split_at_mut(h2);
        let (gw3, gb3) = rest.split_at_mut(c * h2);

        let mut da2 = vec![0.0; h2];
        for k in 0..c {
            let dz = dlogits[k];
            if dz == 0.0 {
                continue;
            }
            gb3[k] = dz;
            let row = &self.w3[k * h2..(k + 1) * h2];
            let grow = &mut gw3[k * h2..(k + 1) * h2];
            for j in 0..h2 {
                grow[j] = dz * cache.a2[j];
                da2[j] += dz * row[j];
            }
        }
        let dz2: Vec<f64> = da2.iter().zip(&cache.a2).map(|(d, a)| d * (1.0 - a * a)).collect();
        let mut da1 = vec![0.0; h1];
        for j in 0..h2 {
            gb2[j] = dz2[j];
            let row = &self.w2[j * h1..(j + 1) * h1];
            let grow = &mut gw2[j * h1..(j + 1) * h1];
            for i in 0..h1 {
                grow[i] = dz2[j] * cache.a1[i];
                da1[i] += dz2[j] * row[i];
            }
        }
        for i in 0..h1 {
            let dz1 = da1[i] * (1.0 - cache.a1[i] * cache.a1[i]);
            gb1[i] = dz1;
            let grow = &mut gw1[i * d..(i + 1) * d];
            for (gw, &xv) in grow.iter_mut().zip(&cache.x) {
                *gw = dz1 * xv;
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;

    fn ids(r: std::ops::Range<u32>) -> Vec<ClassId> {
        r.map(ClassId).collect()
    }

    fn probe(n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..d).map(|j| ((i * 31 + j * 17) % 11) as f64 / 5.0 - 1.0).collect())
            .collect()
    }

    #[test]
    fn growth_keeps_existing_logits_bit_identical() {
        let mut m = StudentModel::new(6, [8, 5], &ids(0..4), 3).unwrap();
        let xs = probe(10, 6);
        let before: Vec<_> = xs.iter().map(|x| m.logits(x).unwrap()).collect();
        m.grow_head(&ids(4..6)).unwrap();
        for (x, b) in xs.iter().zip(&before) {
            let after = m.logits(x).unwrap();
            assert_eq!(after.len(), 6);
            assert_eq!(&after[..4], &b[..]);
        }
    }

    #[test]
    fn growth_is_batching_independent() {
        let mut a = StudentModel::new(4, [3, 3], &ids(0..2), 9).unwrap();
        let mut b = a.clone();
        a.grow_head(&ids(2..3)).unwrap();
        a.grow_head(&ids(3..5)).unwrap();
        b.grow_head(&ids(2..5)).unwrap();
        assert_eq!(a.params(), b.params());
        let c = StudentModel::new(4, [3, 3], &ids(0..5), 9).unwrap();
        assert_eq!(a.params(), c.params());
    }

    #[test]
    fn empty_and_duplicate_growth() {
        let mut m = StudentModel::new(4, [3, 3], &ids(0..2), 1).unwrap();
        let before = m.clone();
        m.grow_head(&[]).unwrap();
        assert_eq!(m, before);
        assert!(m.grow_head(&[ClassId(1)]).is_err());
        assert!(m.grow_head(&[ClassId(7), ClassId(7)]).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut m = StudentModel::new(5, [4, 3], &ids(0..3), 2).unwrap();
        let mut p = m.params();
        assert_eq!(p.len(), 5 * 4 + 4 + 4 * 3 + 3 + 3 * 3 + 3);
        p[0] = 42.0;
        m.set_params(&p).unwrap();
        assert_eq!(m.params(), p);
        assert!(m.set_params(&p[1..]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = StudentModel::new(5, [6, 4], &ids(0..3), 4).unwrap();
        let x = vec![0.3, -0.7, 1.1, 0.0, 0.5];
        let weights = [0.7, -1.3, 0.4];
        let f = |p: &[f64]| {
            let mut mm = m.clone();
            mm.set_params(p).unwrap();
            let c = mm.forward(&x).unwrap();
            let loss = c.logits.iter().zip(&weights).map(|(z, w)| z * w).sum::<f64>();
            (loss, mm.backward(&c, &weights))
        };
        let r = grad_check(f, &m.params(), 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-7, "{r:?}");
    }
}
