//! Task-stream data model: samples, per-task datasets, the stream manifest,
//! cumulative imbalance accounting and the synthetic stream generator.

mod generator;
mod io;
mod ledger;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use generator::{generate_synthetic_stream, GeneratedStream, GeneratorParams, Sidecar, SidecarTask};
pub use io::{load_task, load_task_split, read_task_file, write_task, LabelEntry, Split, StreamManifest, TaskEntry};
pub use ledger::ImbalanceLedger;

/// Stable class identifier: the index of the class name in the cumulative
/// label vocabulary, assigned on first appearance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDescriptor {
    pub id: ClassId,
    pub name: String,
    /// Label token ids, without trailing pause padding.
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub question: String,
    pub answer: ClassId,
}

/// One time step's labeled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub task_index: usize,
    pub name: String,
    pub samples: Vec<Sample>,
    /// Classes declared for the task, ordered by id.
    pub classes: Vec<ClassDescriptor>,
    pub class_counts: BTreeMap<ClassId, usize>,
}

impl TaskDataset {
    /// Builds a dataset and recounts classes from the samples.
    pub fn new(
        task_index: usize,
        name: impl Into<String>,
        samples: Vec<Sample>,
        mut classes: Vec<ClassDescriptor>,
    ) -> crate::Result<Self> {
        classes.sort_by_key(|c| c.id);
        classes.dedup_by_key(|c| c.id);
        let class_counts = count_classes(&samples);
        for &id in class_counts.keys() {
            if classes.binary_search_by_key(&id, |c| c.id).is_err() {
                return Err(crate::Error::UnknownClass(format!(
                    "{id} appears in task {task_index} samples but not in its class list"
                )));
            }
        }
        Ok(Self {
            task_index,
            name: name.into(),
            samples,
            classes,
            class_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_ids(&self) -> Vec<ClassId> {
        self.classes.iter().map(|c| c.id).collect()
    }

    pub fn feature_len(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }
}

pub(crate) fn count_classes(samples: &[Sample]) -> BTreeMap<ClassId, usize> {
    let mut counts = BTreeMap::new();
    for s in samples {
        *counts.entry(s.answer).or_insert(0) += 1;
    }
    counts
}
