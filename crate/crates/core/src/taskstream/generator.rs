use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ClassDescriptor, ClassId, LabelEntry, Sample, StreamManifest, TaskDataset, TaskEntry};
use crate::bridge::TokenVocab;
use crate::{Error, Result};

const LABEL_POOL: &[&str] = &[
    "cutting",
    "idle",
    "grasping",
    "suturing",
    "retraction",
    "clipping",
    "cauterization",
    "dissection",
    "irrigation",
    "suction",
    "stapling",
    "kidney",
    "tissue manipulation",
    "needle passing",
    "blunt dissection",
    "tool manipulation",
    "ultrasound sensing",
    "knot tying",
    "coagulation",
    "aspiration",
    "stone removal",
    "vessel sealing",
    "packing",
    "drainage",
];

const QUESTION_TEMPLATES: &[&str] = &[
    "what is the {tool} doing",
    "what action is the {tool} performing",
    "which operation does the {tool} carry out",
    "what is happening with the {tool}",
    "what is the state of the {tool}",
];

const TOOLS: &[&str] = &[
    "forceps",
    "scissors",
    "needle driver",
    "grasper",
    "clip applier",
    "hook",
    "retractor",
    "probe",
];

/// Synthetic stream generator settings. Every field has a default, so a
/// partial TOML table is accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub tasks: usize,
    pub classes_per_task: usize,
    /// Fraction of a task's classes carried over from the previous task.
    pub overlap: f64,
    /// max/min per-class sample count within each task.
    pub target_ir: f64,
    /// Norm of the per-task domain offset added to every feature vector.
    pub shift_magnitude: f64,
    /// Samples per task, both splits together.
    pub samples_per_task: usize,
    pub feature_len: usize,
    pub test_fraction: f64,
    /// Per-dimension spread of class centers.
    pub center_spread: f64,
    /// Per-dimension noise around a center.
    pub cluster_std: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            tasks: 3,
            classes_per_task: 6,
            overlap: 0.3,
            target_ir: 8.0,
            shift_magnitude: 4.0,
            samples_per_task: 600,
            feature_len: 16,
            test_fraction: 0.2,
            center_spread: 1.0,
            cluster_std: 1.0,
        }
    }
}

impl GeneratorParams {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {}", path.display(), e.message())]))
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.tasks == 0 {
            p.push("tasks must be >= 1".to_string());
        }
        if self.classes_per_task < 2 {
            p.push(format!("classes_per_task must be >= 2, got {}", self.classes_per_task));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            p.push(format!("overlap must be in [0, 1], got {}", self.overlap));
        }
        if !(self.target_ir >= 1.0) || !self.target_ir.is_finite() {
            p.push(format!("target_ir must be >= 1, got {}", self.target_ir));
        }
        if !(self.shift_magnitude >= 0.0) || !self.shift_magnitude.is_finite() {
            p.push(format!("shift_magnitude must be >= 0, got {}", self.shift_magnitude));
        }
        if self.feature_len == 0 {
            p.push("feature_len must be >= 1".to_string());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            p.push(format!("test_fraction must be in [0, 1), got {}", self.test_fraction));
        }
        for (name, v) in [("center_spread", self.center_spread), ("cluster_std", self.cluster_std)] {
            if !(v > 0.0) || !v.is_finite() {
                p.push(format!("{name} must be > 0, got {v}"));
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Number of names task t shares with task t-1.
    pub fn shared_per_task(&self) -> usize {
        ((self.overlap * self.classes_per_task as f64).ceil() as usize).min(self.classes_per_task)
    }
}

/// Ground truth written next to a generated stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub seed: u64,
    pub params: GeneratorParams,
    pub centers: BTreeMap<String, Vec<f64>>,
    pub tasks: Vec<SidecarTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarTask {
    pub index: usize,
    pub classes: Vec<String>,
    pub shared_with_previous: Vec<String>,
    pub domain_offset: Vec<f64>,
    /// Samples per class over both splits.
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct GeneratedStream {
    pub manifest: StreamManifest,
    pub manifest_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub sidecar: Sidecar,
}

/// Geometric per-class counts from `min` to `target_ir * min` summing to
/// `total`, rounded by largest remainder.
pub fn imbalanced_counts(classes: usize, total: usize, target_ir: f64) -> Result<Vec<usize>> {
    if classes == 0 {
        return Ok(Vec::new());
    }
    let denom = (classes.max(2) - 1) as f64;
    let raw: Vec<f64> = (0..classes).map(|i| target_ir.powf(i as f64 / denom)).collect();
    let scale = total as f64 / raw.iter().sum::<f64>();
    let exact: Vec<f64> = raw.iter().map(|r| r * scale).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    let min = *counts.iter().min().unwrap();
    let max = *counts.iter().max().unwrap();
    if min < 2 {
        return Err(Error::Infeasible(format!(
            "{total} samples over {classes} classes at IR {target_ir} leaves the rarest class with {min} sample(s); \
             at least 2 are needed, so raise samples_per_task or lower target_ir"
        )));
    }
    let achieved = max as f64 / min as f64;
    if (achieved - target_ir).abs() > 0.1 * target_ir {
        return Err(Error::Infeasible(format!(
            "{total} samples over {classes} classes realize IR {achieved:.3}, more than 10% away from {target_ir}; \
             raise samples_per_task"
        )));
    }
    Ok(counts)
}

fn label_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let base = LABEL_POOL[i % LABEL_POOL.len()];
            match i / LABEL_POOL.len() {
                0 => base.to_string(),
                k => format!("{base} {}", ["alpha", "beta", "gamma", "delta", "epsilon"][(k - 1) % 5]),
            }
        })
        .collect()
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let d = Normal::new(0.0, std).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Writes a seeded synthetic task stream into `dir`.
///
/// Each class has a Gaussian cluster center; task t adds a domain offset of
/// norm `shift_magnitude` (zero for the first task) to all of its samples.
/// Produces `manifest.json`, `vocab.txt`, per-task `task{t}_train.jsonl` /
/// `task{t}_test.jsonl` and `sidecar.json`.
pub fn generate_synthetic_stream(params: &GeneratorParams, seed: u64, dir: &Path) -> Result<GeneratedStream> {
    params.validate()?;
    let k = params.classes_per_task;
    let shared = params.shared_per_task();
    let total_names = k + (params.tasks - 1) * (k - shared);
    let names = label_names(total_names);
    let counts = imbalanced_counts(k, params.samples_per_task, params.target_ir)?;

    let mut set_rng = stream(seed, 0);
    let mut task_sets: Vec<Vec<usize>> = vec![(0..k).collect()];
    let mut next = k;
    for _ in 1..params.tasks {
        let prev = task_sets.last().unwrap();
        let mut carried: Vec<usize> = prev.choose_multiple(&mut set_rng, shared).copied().collect();
        carried.sort_unstable();
        carried.extend(next..next + (k - shared));
        next += k - shared;
        task_sets.push(carried);
    }

    let mut center_rng = stream(seed, 1);
    let centers: Vec<Vec<f64>> = (0..total_names)
        .map(|_| gaussian(&mut center_rng, params.feature_len, params.center_spread))
        .collect();

    let mut question_words: Vec<&str> = QUESTION_TEMPLATES
        .iter()
        .chain(TOOLS)
        .flat_map(|s| s.split_whitespace())
        .filter(|w| *w != "{tool}")
        .collect();
    let mut label_words: Vec<&str> = names.iter().flat_map(|n| n.split_whitespace()).collect();
    question_words.append(&mut label_words);
    question_words.sort_unstable();
    question_words.dedup();
    let vocab = TokenVocab::new(question_words.iter().copied())?;

    let mut labels = Vec::with_capacity(total_names);
    for n in &names {
        labels.push(LabelEntry {
            name: n.clone(),
            tokens: vocab.encode_label(n)?,
        });
    }
    let max_label_tokens = labels.iter().map(|l| l.tokens.len()).max().unwrap_or(1);

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vocab_path = dir.join("vocab.txt");
    vocab.save(&vocab_path)?;

    let mut manifest = StreamManifest {
        feature_len: params.feature_len,
        token_vocab: PathBuf::from("vocab.txt"),
        max_label_tokens,
        labels,
        tasks: Vec::new(),
        base_dir: dir.to_owned(),
    };
    let mut sidecar = Sidecar {
        seed,
        params: params.clone(),
        centers: names.iter().cloned().zip(centers.iter().cloned()).collect(),
        tasks: Vec::new(),
    };

    for (ti, set) in task_sets.iter().enumerate() {
        let t = ti + 1;
        let mut rng = stream(seed, 2 + ti as u64);
        let offset = if ti == 0 || params.shift_magnitude == 0.0 {
            vec![0.0; params.feature_len]
        } else {
            let dir = gaussian(&mut rng, params.feature_len, 1.0);
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.iter().map(|v| v / norm * params.shift_magnitude).collect()
        };
        let mut ranked = set.clone();
        ranked.shuffle(&mut rng);
        let noise = Normal::new(0.0, params.cluster_std).unwrap();
        let classes: Vec<ClassDescriptor> = set
            .iter()
            .map(|&c| manifest.descriptor(ClassId(c as u32)).unwrap())
            .collect();

        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut class_counts = BTreeMap::new();
        let mut serial = 0usize;
        for (&c, &n) in ranked.iter().zip(&counts) {
            class_counts.insert(names[c].clone(), n);
            let n_test = if params.test_fraction > 0.0 {
                ((n as f64 * params.test_fraction).round() as usize).clamp(1, n - 1)
            } else {
                0
            };
            for j in 0..n {
                let features: Vec<f64> = centers[c]
                    .iter()
                    .zip(&offset)
                    .map(|(m, d)| m + d + noise.sample(&mut rng))
                    .collect();
                let template = QUESTION_TEMPLATES[rng.gen_range(0..QUESTION_TEMPLATES.len())];
                let tool = TOOLS[rng.gen_range(0..TOOLS.len())];
                let sample = Sample {
                    id: format!("t{t}-{serial:05}"),
                    features,
                    question: template.replace("{tool}", tool),
                    answer: ClassId(c as u32),
                };
                serial += 1;
                if j < n_test {
                    test.push(sample);
                } else {
                    train.push(sample);
                }
            }
        }
        train.shuffle(&mut rng);
        test.shuffle(&mut rng);

        let name = format!("synthetic-{t}");
        let train_file = PathBuf::from(format!("task{t}_train.jsonl"));
        super::write_task(
            &TaskDataset::new(t, &name, train, classes.clone())?,
            &dir.join(&train_file),
        )?;
        let test_file = if test.is_empty() {
            None
        } else {
            let f = PathBuf::from(format!("task{t}_test.jsonl"));
            super::write_task(&TaskDataset::new(t, &name, test, classes)?, &dir.join(&f))?;
            Some(f)
        };
        let prev_set: &[usize] = if ti == 0 { &[] } else { &task_sets[ti - 1] };
        sidecar.tasks.push(SidecarTask {
            index: t,
            classes: set.iter().map(|&c| names[c].clone()).collect(),
            shared_with_previous: set
                .iter()
                .filter(|c| prev_set.contains(c))
                .map(|&c| names[c].clone())
                .collect(),
            domain_offset: offset,
            counts: class_counts,
        });
        manifest.tasks.push(TaskEntry {
            index: t,
            name,
            train: train_file,
            test: test_file,
            classes: set.iter().map(|&c| names[c].clone()).collect(),
        });
    }

    manifest.validate()?;
    let manifest_path = dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    let sidecar_path = dir.join("sidecar.json");
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&sidecar_path, text + "\n").map_err(|e| Error::io(&sidecar_path, e))?;
    Ok(GeneratedStream {
        manifest,
        manifest_path,
        sidecar_path,
        sidecar,
    })
}
