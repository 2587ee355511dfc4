use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassDescriptor, ClassId, Sample, TaskDataset};
use crate::bridge::TokenVocab;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub name: String,
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub index: usize,
    pub name: String,
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Class names of this task; each must be in the label vocabulary.
    pub classes: Vec<String>,
}

/// Ordered list of tasks plus the cumulative label vocabulary.
///
/// Label ids are positions in `labels`, so a name keeps one id for the
/// whole stream. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub feature_len: usize,
    pub token_vocab: PathBuf,
    /// Maximum label length in tokens before the final pause token.
    pub max_label_tokens: usize,
    pub labels: Vec<LabelEntry>,
    pub tasks: Vec<TaskEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl StreamManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: StreamManifest = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_owned(),
            line: e.line(),
            message: e.to_string(),
        })?;
        manifest.base_dir = path.parent().map(Path::to_owned).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.feature_len == 0 {
            problems.push("feature_len must be positive".to_owned());
        }
        let mut seen = HashSet::new();
        for label in &self.labels {
            if !seen.insert(label.name.as_str()) {
                problems.push(format!("label {:?} listed twice", label.name));
            }
        }
        let mut last = 0;
        for task in &self.tasks {
            if task.index <= last {
                problems.push(format!(
                    "task indices must be strictly increasing from 1 (got {} after {last})",
                    task.index
                ));
            }
            last = task.index;
            for c in &task.classes {
                if !seen.contains(c.as_str()) {
                    problems.push(format!("task {} names unknown class {c:?}", task.index));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_vocab(&self) -> Result<TokenVocab> {
        TokenVocab::load(self.resolve(&self.token_vocab))
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.labels
            .iter()
            .position(|l| l.name == name)
            .map(|i| ClassId(i as u32))
    }

    pub fn descriptor(&self, id: ClassId) -> Option<ClassDescriptor> {
        self.labels.get(id.index()).map(|l| ClassDescriptor {
            id,
            name: l.name.clone(),
            tokens: l.tokens.clone(),
        })
    }

    pub fn descriptors(&self) -> Vec<ClassDescriptor> {
        (0..self.labels.len())
            .map(|i| self.descriptor(ClassId(i as u32)).unwrap())
            .collect()
    }

    pub fn task(&self, t: usize) -> Result<&TaskEntry> {
        self.tasks.iter().find(|e| e.index == t).ok_or(Error::MissingTask(t))
    }

    pub fn task_indices(&self) -> Vec<usize> {
        self.tasks.iter().map(|e| e.index).collect()
    }
}

/// Loads the training split of task `t`.
pub fn load_task(manifest: &StreamManifest, t: usize) -> Result<TaskDataset> {
    load_task_split(manifest, t, Split::Train)
}

pub fn load_task_split(manifest: &StreamManifest, t: usize, split: Split) -> Result<TaskDataset> {
    let entry = manifest.task(t)?;
    let file = match split {
        Split::Train => &entry.train,
        Split::Test => entry
            .test
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("task {t} has no test split in the manifest")))?,
    };
    let mut classes = Vec::with_capacity(entry.classes.len());
    for name in &entry.classes {
        let id = manifest
            .class_id(name)
            .ok_or_else(|| Error::UnknownClass(name.clone()))?;
        classes.push(manifest.descriptor(id).unwrap());
    }
    let by_name: HashMap<&str, ClassId> = classes.iter().map(|c| (c.name.as_str(), c.id)).collect();
    let samples = read_task_file(&manifest.resolve(file), manifest.feature_len, &by_name)?;
    TaskDataset::new(t, entry.name.clone(), samples, classes)
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    features: Vec<f64>,
    question: String,
    answer: String,
}

/// Reads a line-delimited task file; answers outside `classes` are rejected.
pub fn read_task_file(path: &Path, feature_len: usize, classes: &HashMap<&str, ClassId>) -> Result<Vec<Sample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_owned(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if rec.features.len() != feature_len {
            return Err(Error::FeatureLength {
                sample_id: rec.id,
                expected: feature_len,
                found: rec.features.len(),
            });
        }
        let answer = *classes
            .get(rec.answer.as_str())
            .ok_or_else(|| Error::UnknownClass(rec.answer.clone()))?;
        samples.push(Sample {
            id: rec.id,
            features: rec.features,
            question: rec.question,
            answer,
        });
    }
    Ok(samples)
}

/// Writes a task's samples in file order, one record per line.
pub fn write_task(dataset: &TaskDataset, path: &Path) -> Result<()> {
    let names: HashMap<ClassId, &str> = dataset.classes.iter().map(|c| (c.id, c.name.as_str())).collect();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in &dataset.samples {
        let answer = names
            .get(&s.answer)
            .ok_or_else(|| Error::UnknownClass(s.answer.to_string()))?;
        let rec = Record {
            id: s.id.clone(),
            features: s.features.clone(),
            question: s.question.clone(),
            answer: (*answer).to_owned(),
        };
        serde_json::to_writer(&mut out, &rec).expect("record serializes");
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest_with(dir: &Path, feature_len: usize, records: &[&str]) -> StreamManifest {
        fs::write(dir.join("vocab.txt"), "<pause>\na\nb\n").unwrap();
        fs::write(dir.join("t1.jsonl"), records.join("\n")).unwrap();
        let manifest = StreamManifest {
            feature_len,
            token_vocab: "vocab.txt".into(),
            max_label_tokens: 2,
            labels: vec![
                LabelEntry {
                    name: "a".into(),
                    tokens: vec![1],
                },
                LabelEntry {
                    name: "b".into(),
                    tokens: vec![2],
                },
            ],
            tasks: vec![TaskEntry {
                index: 1,
                name: "one".into(),
                train: "t1.jsonl".into(),
                test: None,
                classes: vec!["a".into(), "b".into()],
            }],
            base_dir: dir.to_owned(),
        };
        manifest.save(dir.join("manifest.json")).unwrap();
        StreamManifest::load(dir.join("manifest.json")).unwrap()
    }

    #[test]
    fn loads_and_recounts() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest_with(
            dir.path(),
            2,
            &[
                r#"{"id":"s0","features":[0.0,1.0],"question":"q","answer":"a"}"#,
                r#"{"id":"s1","features":[0.5,1.0],"question":"q","answer":"b"}"#,
                r#"{"id":"s2","features":[0.5,1.5],"question":"q","answer":"a"}"#,
                r#"{"id":"s3","features":[0.1,1.0],"question":"q","answer":"a"}"#,
            ],
        );
        let task = load_task(&m, 1).unwrap();
        assert_eq!(task.len(), 4);
        assert_eq!(task.class_counts[&ClassId(0)], 3);
        assert_eq!(task.class_counts[&ClassId(1)], 1);
        let ids: Vec<_> = task.samples.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["s0", "s1", "s2", "s3"]);
    }

    #[test]
    fn feature_length_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let feats8 = ["0.0"; 8].join(",");
        let rec = format!(r#"{{"id":"s0","features":[{feats8}],"question":"q","answer":"a"}}"#);
        let m = manifest_with(dir.path(), 16, &[&rec]);
        match load_task(&m, 1) {
            Err(Error::FeatureLength {
                expected: 16, found: 8, ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_class_and_malformed_records() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest_with(
            dir.path(),
            1,
            &[r#"{"id":"s0","features":[0.0],"question":"q","answer":"zebra"}"#],
        );
        assert!(matches!(load_task(&m, 1), Err(Error::UnknownClass(_))));

        let m = manifest_with(dir.path(), 1, &[r#"{"id":"s0","features":"#]);
        assert!(matches!(load_task(&m, 1), Err(Error::Malformed { line: 1, .. })));
        assert!(matches!(load_task(&m, 2), Err(Error::MissingTask(2))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest_with(dir.path(), 1, &[]);
        fs::remove_file(dir.path().join("t1.jsonl")).unwrap();
        assert!(matches!(load_task(&m, 1), Err(Error::Io { .. })));
    }

    #[test]
    fn manifest_validation_collects_problems() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest_with(dir.path(), 1, &[]);
        m.labels.push(LabelEntry {
            name: "a".into(),
            tokens: vec![1],
        });
        m.tasks.push(m.tasks[0].clone());
        match m.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 2, "{p:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
