use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{FixtureTeacher, NoisyOracleTeacher, ServiceTeacher};
use crate::engine::{QuestionEncoder, StudentModel};
use crate::taskstream::{ClassDescriptor, ClassId, Sample};
use crate::{Error, Exec, Result, TeacherError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeacherKind {
    PreviousModel,
    Fixture,
    Service,
    NoisyOracle,
}

/// Frozen copy of the student from the previous time step.
#[derive(Debug, Clone)]
pub struct PreviousModelTeacher {
    model: StudentModel,
    encoder: Arc<QuestionEncoder>,
}

impl PreviousModelTeacher {
    pub fn new(model: StudentModel, encoder: Arc<QuestionEncoder>) -> Self {
        Self { model, encoder }
    }

    pub fn model(&self) -> &StudentModel {
        &self.model
    }

    fn query(&self, sample: &Sample, classes: &[ClassDescriptor]) -> Result<Vec<f64>> {
        let x = self.encoder.input_vector(sample);
        let z = self.model.logits(&x)?;
        classes
            .iter()
            .map(|c| {
                self.model.class_index(c.id).map(|i| z[i]).ok_or_else(|| {
                    TeacherError::Dimension(format!("previous model does not know class {:?}", c.name)).into()
                })
            })
            .collect()
    }
}

#[derive(Debug)]
pub enum Teacher {
    PreviousModel(PreviousModelTeacher),
    Fixture(FixtureTeacher),
    Service(ServiceTeacher),
    NoisyOracle(NoisyOracleTeacher),
}

/// Uniform query surface over every teacher kind, with a query counter.
#[derive(Debug)]
pub struct TeacherHandle {
    teacher: Teacher,
    queries: AtomicU64,
}

impl TeacherHandle {
    pub fn new(teacher: Teacher) -> Self {
        Self {
            teacher,
            queries: AtomicU64::new(0),
        }
    }

    pub fn previous(model: StudentModel, encoder: Arc<QuestionEncoder>) -> Self {
        Self::new(Teacher::PreviousModel(PreviousModelTeacher::new(model, encoder)))
    }

    pub fn kind(&self) -> TeacherKind {
        match &self.teacher {
            Teacher::PreviousModel(_) => TeacherKind::PreviousModel,
            Teacher::Fixture(_) => TeacherKind::Fixture,
            Teacher::Service(_) => TeacherKind::Service,
            Teacher::NoisyOracle(_) => TeacherKind::NoisyOracle,
        }
    }

    pub fn teacher(&self) -> &Teacher {
        &self.teacher
    }

    /// Classes the teacher can score, or `None` for open-vocabulary teachers
    /// that accept any candidate list.
    pub fn known_classes(&self) -> Option<&[ClassId]> {
        match &self.teacher {
            Teacher::PreviousModel(p) => Some(p.model.classes()),
            _ => None,
        }
    }

    /// Number of per-sample queries answered so far.
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    /// Logits for `sample`, one per entry of `classes`, in that order.
    pub fn query(&self, sample: &Sample, classes: &[ClassDescriptor]) -> Result<Vec<f64>> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        let z = match &self.teacher {
            Teacher::PreviousModel(p) => p.query(sample, classes)?,
            Teacher::Fixture(f) => f.query(&sample.id, classes)?,
            Teacher::Service(s) => s.query(sample, classes)?,
            Teacher::NoisyOracle(o) => o.query(sample, classes),
        };
        if z.len() != classes.len() {
            return Err(TeacherError::Dimension(format!(
                "teacher returned {} logits for {} candidates",
                z.len(),
                classes.len()
            ))
            .into());
        }
        if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "teacher logit {bad} for sample {:?}",
                sample.id
            )));
        }
        Ok(z)
    }

    pub fn query_batch(&self, samples: &[Sample], classes: &[ClassDescriptor], exec: Exec) -> Result<Vec<Vec<f64>>> {
        exec.try_map(samples, |s| self.query(s, classes))
    }
}

/// SHA-256 over the ordered candidate names.
pub fn class_set_digest(classes: &[ClassDescriptor]) -> [u8; 32] {
    let mut h = Sha256::new();
    for c in classes {
        h.update((c.name.len() as u64).to_le_bytes());
        h.update(c.name.as_bytes());
    }
    h.finalize().into()
}
