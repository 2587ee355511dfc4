use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{QuestionEncoder, StudentModel};
use crate::taskstream::{ClassId, TaskDataset};
use crate::weights::argmax;
use crate::{Error, Exec, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEntry {
    pub dataset: String,
    pub accuracy: f64,
    pub f_score: f64,
}

/// Top-1 accuracy and macro F1 over the classes present in `truth`.
pub fn score_predictions(truth: &[ClassId], predicted: &[ClassId]) -> Result<(f64, f64)> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty dataset".into()));
    }
    // (tp, fp, fn) per class
    let mut tally: BTreeMap<ClassId, [usize; 3]> = BTreeMap::new();
    let mut hits = 0usize;
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == p {
            hits += 1;
            tally.entry(t).or_default()[0] += 1;
        } else {
            tally.entry(p).or_default()[1] += 1;
            tally.entry(t).or_default()[2] += 1;
        }
    }
    let mut f_sum = 0.0;
    let mut supported = 0usize;
    for [tp, fp, fn_] in tally.values().copied() {
        if tp + fn_ == 0 {
            continue;
        }
        supported += 1;
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f_sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok((hits as f64 / truth.len() as f64, f_sum / supported as f64))
}

pub fn predict(
    model: &StudentModel,
    encoder: &QuestionEncoder,
    dataset: &TaskDataset,
    exec: Exec,
) -> Result<Vec<ClassId>> {
    exec.try_map(&dataset.samples, |s| {
        let z = model.logits(&encoder.input_vector(s))?;
        argmax(&z)
            .map(|i| model.classes()[i])
            .ok_or_else(|| Error::Dimension("model head is empty".into()))
    })
}

/// Scores `model` on `dataset`. Every class in the dataset must be in the head.
pub fn evaluate(
    model: &StudentModel,
    encoder: &QuestionEncoder,
    dataset: &TaskDataset,
    exec: Exec,
) -> Result<EvalEntry> {
    if let Some(c) = dataset.class_counts.keys().find(|&&c| model.class_index(c).is_none()) {
        return Err(Error::UnknownClass(format!(
            "{c} in {} is not in the model head",
            dataset.name
        )));
    }
    let predicted = predict(model, encoder, dataset, exec)?;
    let truth: Vec<ClassId> = dataset.samples.iter().map(|s| s.answer).collect();
    let (accuracy, f_score) = score_predictions(&truth, &predicted)?;
    Ok(EvalEntry {
        dataset: dataset.name.clone(),
        accuracy,
        f_score,
    })
}

/// Evaluation of every dataset seen so far, after training at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    pub entries: Vec<EvalEntry>,
}

impl MetricsRow {
    pub fn avg_accuracy(&self) -> f64 {
        self.entries.iter().map(|e| e.accuracy).sum::<f64>() / self.entries.len() as f64
    }

    pub fn avg_f_score(&self) -> f64 {
        self.entries.iter().map(|e| e.f_score).sum::<f64>() / self.entries.len() as f64
    }

    pub fn entry(&self, dataset: &str) -> Option<&EvalEntry> {
        self.entries.iter().find(|e| e.dataset == dataset)
    }
}

pub const METRICS_HEADER: &str = "t,dataset,accuracy,f_score";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, t: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.t == t)
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.rows {
            for e in &r.entries {
                writeln!(s, "{},{},{:.6},{:.6}", r.t, e.dataset, e.accuracy, e.f_score).unwrap();
            }
            writeln!(s, "{},Avg,{:.6},{:.6}", r.t, r.avg_accuracy(), r.avg_f_score()).unwrap();
        }
        s
    }

    /// Human-readable accuracy table, one line per time step.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            write!(s, "t={}", r.t).unwrap();
            for e in &r.entries {
                write!(s, "  {}: {:.4}/{:.4}", e.dataset, e.accuracy, e.f_score).unwrap();
            }
            writeln!(s, "  Avg.: {:.4}/{:.4}", r.avg_accuracy(), r.avg_f_score()).unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<ClassId> {
        v.iter().map(|&i| ClassId(i)).collect()
    }

    #[test]
    fn perfect_predictions() {
        let t = ids(&[0, 1, 2, 1]);
        assert_eq!(score_predictions(&t, &t).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        let (acc, f) = score_predictions(&ids(&[0, 0, 1, 1]), &ids(&[0, 0, 0, 0])).unwrap();
        assert_eq!(acc, 0.5);
        assert!((f - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unsupported_predicted_class_is_excluded() {
        // class 9 is predicted but has no support: it lowers class 0's F1 only
        let (_, f) = score_predictions(&ids(&[0, 0]), &ids(&[0, 9])).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn avg_is_mean_and_csv_layout() {
        let row = MetricsRow {
            t: 2,
            entries: vec![
                EvalEntry {
                    dataset: "a".into(),
                    accuracy: 0.5,
                    f_score: 0.25,
                },
                EvalEntry {
                    dataset: "b".into(),
                    accuracy: 1.0,
                    f_score: 0.75,
                },
            ],
        };
        assert_eq!(row.avg_accuracy(), 0.75);
        let csv = MetricsTable { rows: vec![row] }.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[3], "2,Avg,0.750000,0.500000");
    }
}
