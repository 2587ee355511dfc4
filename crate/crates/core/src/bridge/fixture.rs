//! File-backed teacher embeddings.
//!
//! Layout (little-endian): magic `LLME`, `u16` version, then records until
//! end of file. Each record is a `u16` id length, the UTF-8 sample id,
//! `u32` N, `u32` M+1, `u32` P and N·(M+1)·P `f32` scores in
//! (candidate, position, vocabulary) row-major order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::RwLock;

use super::{class_set_digest, transform_embeddings_to_logits, EmbeddingTensor, TokenizedLabelSet};
use crate::taskstream::ClassDescriptor;
use crate::{Error, Result, TeacherError};

pub const FIXTURE_MAGIC: &[u8; 4] = b"LLME";
pub const FIXTURE_VERSION: u16 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureStore {
    records: Vec<(String, EmbeddingTensor)>,
    index: HashMap<String, usize>,
}

impl FixtureStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces the tensor for `sample_id`.
    pub fn insert(&mut self, sample_id: impl Into<String>, tensor: EmbeddingTensor) {
        let id = sample_id.into();
        match self.index.get(&id) {
            Some(&i) => self.records[i].1 = tensor,
            None => {
                self.index.insert(id.clone(), self.records.len());
                self.records.push((id, tensor));
            }
        }
    }

    pub fn get(&self, sample_id: &str) -> Option<&EmbeddingTensor> {
        self.index.get(sample_id).map(|&i| &self.records[i].1)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FIXTURE_MAGIC);
        out.extend_from_slice(&FIXTURE_VERSION.to_le_bytes());
        for (id, t) in &self.records {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.scores() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TeacherError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != FIXTURE_MAGIC {
            return Err(TeacherError::Fixture("missing LLME magic".into()));
        }
        let version = r.u16()?;
        if version != FIXTURE_VERSION {
            return Err(TeacherError::Fixture(format!("unsupported version {version}")));
        }
        let mut store = Self::new();
        while r.pos < bytes.len() {
            let len = r.u16()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|e| TeacherError::Fixture(format!("sample id is not UTF-8: {e}")))?
                .to_owned();
            let (n, m1, p) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
            let count = n
                .checked_mul(m1)
                .and_then(|x| x.checked_mul(p))
                .ok_or_else(|| TeacherError::Fixture("tensor size overflows".into()))?;
            let raw = r.take(
                count
                    .checked_mul(4)
                    .ok_or_else(|| TeacherError::Fixture("tensor size overflows".into()))?,
            )?;
            let scores = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let tensor = EmbeddingTensor::new(n, m1, p, scores).map_err(|e| TeacherError::Fixture(e.to_string()))?;
            store.insert(id, tensor);
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TeacherError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TeacherError::Fixture(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, TeacherError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, TeacherError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

type MemoKey = (String, [u8; 32]);

/// Teacher that replays stored embeddings through the logits transform.
#[derive(Debug)]
pub struct FixtureTeacher {
    store: FixtureStore,
    max_label_tokens: usize,
    vocab_size: usize,
    eps: f64,
    memo: RwLock<HashMap<MemoKey, Vec<f64>>>,
}

impl FixtureTeacher {
    pub fn new(store: FixtureStore, max_label_tokens: usize, vocab_size: usize, eps: f64) -> Self {
        Self {
            store,
            max_label_tokens,
            vocab_size,
            eps,
            memo: RwLock::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }

    pub fn memo_len(&self) -> usize {
        self.memo.read().unwrap().len()
    }

    pub(crate) fn label_set(&self, classes: &[ClassDescriptor]) -> Result<TokenizedLabelSet> {
        TokenizedLabelSet::from_token_sequences(
            classes.iter().map(|c| c.tokens.clone()).collect(),
            self.max_label_tokens,
            self.vocab_size,
        )
    }

    pub fn query(&self, sample_id: &str, classes: &[ClassDescriptor]) -> Result<Vec<f64>> {
        let key = (sample_id.to_owned(), class_set_digest(classes));
        if let Some(z) = self.memo.read().unwrap().get(&key) {
            return Ok(z.clone());
        }
        let tensor = self
            .store
            .get(sample_id)
            .ok_or_else(|| TeacherError::MissingSample(sample_id.to_owned()))?;
        let labels = self.label_set(classes)?;
        let z = transform_embeddings_to_logits(tensor, &labels, self.eps).map_err(|e| match e {
            Error::Dimension(m) => Error::Teacher(TeacherError::Dimension(m)),
            other => other,
        })?;
        self.memo.write().unwrap().insert(key, z.clone());
        Ok(z)
    }
}
