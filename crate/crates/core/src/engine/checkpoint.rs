use std::fs;
use std::io::Write;
use std::path::Path;

use super::StudentModel;
use crate::taskstream::ClassId;
use crate::weights::{WeightBreakdown, WeightTraceRow, WeightTriple};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CLCK";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Student state after a task, with enough context to resume or evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: StudentModel,
    /// Names of the head classes, aligned with `model.classes()`.
    pub labels: Vec<String>,
    pub task_index: usize,
    pub trace: Vec<WeightTraceRow>,
    pub config_digest: [u8; 32],
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend(v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.0.extend((v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend(v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("label is not UTF-8".into()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut w = Writer(Vec::new());
        w.0.extend(CHECKPOINT_MAGIC);
        w.u16(CHECKPOINT_VERSION);
        w.0.extend(self.config_digest);
        w.u64(m.seed());
        w.u32(self.task_index);
        w.u32(m.input_dim());
        w.u32(m.hidden()[0]);
        w.u32(m.hidden()[1]);
        w.u32(m.classes().len());
        for (c, name) in m.classes().iter().zip(&self.labels) {
            w.u32(c.index());
            w.str(name);
        }
        w.u32(self.trace.len());
        for r in &self.trace {
            w.u32(r.t);
            w.u32(r.epoch);
            w.f64(r.ir);
            w.f64(r.weights.alpha);
            w.f64(r.weights.beta);
            w.f64(r.weights.chi);
            match &r.breakdown {
                None => w.u8(0),
                Some(b) => {
                    w.u8(1);
                    for v in [
                        b.beta_ds, b.chi_ds, b.beta_di, b.chi_di, b.acc_prev, b.acc_llm, b.ir, b.log_base,
                    ] {
                        w.f64(v);
                    }
                }
            }
        }
        let params = m.params();
        w.u64(params.len() as u64);
        for p in params {
            w.f64(p);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let config_digest: [u8; 32] = r.take(32)?.try_into().unwrap();
        let seed = r.u64()?;
        let task_index = r.u32()?;
        let input_dim = r.u32()?;
        let hidden = [r.u32()?, r.u32()?];
        let n_classes = r.u32()?;
        let mut classes = Vec::with_capacity(n_classes);
        let mut labels = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            classes.push(ClassId(r.u32()? as u32));
            labels.push(r.str()?);
        }
        let n_trace = r.u32()?;
        let mut trace = Vec::with_capacity(n_trace);
        for _ in 0..n_trace {
            let t = r.u32()?;
            let epoch = r.u32()?;
            let ir = r.f64()?;
            let weights = WeightTriple {
                alpha: r.f64()?,
                beta: r.f64()?,
                chi: r.f64()?,
            };
            let breakdown = match r.u8()? {
                0 => None,
                1 => Some(WeightBreakdown {
                    beta_ds: r.f64()?,
                    chi_ds: r.f64()?,
                    beta_di: r.f64()?,
                    chi_di: r.f64()?,
                    acc_prev: r.f64()?,
                    acc_llm: r.f64()?,
                    ir: r.f64()?,
                    log_base: r.f64()?,
                }),
                f => return Err(Error::Checkpoint(format!("bad breakdown flag {f}"))),
            };
            trace.push(WeightTraceRow {
                t,
                epoch,
                breakdown,
                ir,
                weights,
            });
        }
        let n_params = r.u64()? as usize;
        let mut model = StudentModel::new(input_dim, hidden, &classes, seed)
            .map_err(|e| Error::Checkpoint(format!("bad architecture: {e}")))?;
        if n_params != model.num_params() {
            return Err(Error::Checkpoint(format!(
                "{n_params} parameters stored for an architecture with {}",
                model.num_params()
            )));
        }
        let params = (0..n_params).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        model.set_params(&params)?;
        if !r.buf.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.buf.len())));
        }
        Ok(Self {
            model,
            labels,
            task_index,
            trace,
            config_digest,
        })
    }

    /// Writes to a sibling temp file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_checkpoint() -> Checkpoint {
        let classes: Vec<ClassId> = (0..3).map(ClassId).collect();
        let mut model = StudentModel::new(4, [5, 3], &classes, 8).unwrap();
        let p: Vec<f64> = model.params().iter().map(|v| v * 1.5 + 0.001).collect();
        model.set_params(&p).unwrap();
        let weights = WeightTriple {
            alpha: 0.5,
            beta: 0.3,
            chi: 0.2,
        };
        Checkpoint {
            model,
            labels: vec!["cutting".into(), "idle".into(), "kidney stone".into()],
            task_index: 2,
            trace: vec![
                WeightTraceRow {
                    t: 1,
                    epoch: 0,
                    breakdown: None,
                    ir: 1.0,
                    weights: WeightTriple::FINE_TUNE,
                },
                WeightTraceRow {
                    t: 2,
                    epoch: 0,
                    ir: 3.0,
                    weights,
                    breakdown: Some(WeightBreakdown {
                        beta_ds: 0.6,
                        chi_ds: 0.4,
                        beta_di: 0.5,
                        chi_di: 0.5,
                        acc_prev: 0.3,
                        acc_llm: 0.2,
                        ir: 3.0,
                        log_base: 3.0,
                    }),
                },
            ],
            config_digest: [7; 32],
        }
    }

    #[test]
    fn round_trip_reproduces_forward_outputs() {
        let c = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t2.ckpt");
        c.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, c);
        for i in 0..5 {
            let x: Vec<f64> = (0..4).map(|j| (i * 4 + j) as f64 * 0.1 - 0.8).collect();
            assert_eq!(back.model.logits(&x).unwrap(), c.model.logits(&x).unwrap());
        }
        assert!(!path.with_extension("tmp").exists());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample_checkpoint().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
