#![allow(dead_code)]

use std::path::Path;

use mtcl_core::bridge::{NoisyOracleTeacher, Teacher, TeacherHandle};
use mtcl_core::engine::{EngineConfig, TrainConfig, WeightPolicy};
use mtcl_core::taskstream::{generate_synthetic_stream, GeneratorParams, StreamManifest};
use mtcl_core::weights::{WeightConfig, WeightTriple};
use mtcl_core::Exec;

/// A stream small enough for quick end-to-end runs.
pub fn small_params() -> GeneratorParams {
    GeneratorParams {
        classes_per_task: 4,
        samples_per_task: 160,
        feature_len: 8,
        target_ir: 4.0,
        ..GeneratorParams::default()
    }
}

pub fn stream(dir: &Path, params: &GeneratorParams, seed: u64) -> StreamManifest {
    generate_synthetic_stream(params, seed, dir).unwrap().manifest
}

pub fn oracle(accuracy: f64, seed: u64) -> TeacherHandle {
    TeacherHandle::new(Teacher::NoisyOracle(NoisyOracleTeacher::new(accuracy, seed).unwrap()))
}

pub fn engine(weights: WeightPolicy, epochs: usize, exec: Exec) -> EngineConfig {
    EngineConfig {
        train: TrainConfig {
            epochs,
            seed: 5,
            weights,
            exec,
            ..TrainConfig::default()
        },
        hidden: [16, 12],
        ..EngineConfig::default()
    }
}

pub fn adaptive() -> WeightPolicy {
    WeightPolicy::Adaptive(WeightConfig {
        alpha: 0.1,
        theta_ds: 0.225,
        theta_di: 0.675,
        ..WeightConfig::default()
    })
}

pub fn fixed(alpha: f64, beta: f64, chi: f64) -> WeightPolicy {
    WeightPolicy::Fixed(WeightTriple::new(alpha, beta, chi).unwrap())
}

use std::sync::Arc;

use mtcl_core::engine::{train_task, QuestionEncoder, StudentModel, Teachers};
use mtcl_core::taskstream::{load_task, ClassDescriptor, ImbalanceLedger, TaskDataset};

/// Student after plain training on task 1, ready to grow for task 2.
pub struct AfterFirstTask {
    pub manifest: StreamManifest,
    pub encoder: Arc<QuestionEncoder>,
    pub student: StudentModel,
    pub ledger: ImbalanceLedger,
    pub task2: TaskDataset,
}

pub fn head_of(manifest: &StreamManifest, model: &StudentModel) -> Vec<ClassDescriptor> {
    model
        .classes()
        .iter()
        .map(|&c| manifest.descriptor(c).unwrap())
        .collect()
}

pub fn after_first_task(dir: &Path, epochs: usize) -> AfterFirstTask {
    let manifest = stream(dir, &small_params(), 3);
    let encoder = Arc::new(QuestionEncoder::new(
        manifest.load_vocab().unwrap(),
        manifest.feature_len,
    ));
    let task1 = load_task(&manifest, 1).unwrap();
    let mut student = StudentModel::new(encoder.input_dim(), [16, 12], &task1.class_ids(), 11).unwrap();
    let mut ledger = ImbalanceLedger::new();
    ledger.update(&task1);
    let head = head_of(&manifest, &student);
    let cfg = TrainConfig {
        epochs,
        seed: 5,
        weights: fixed(1.0, 0.0, 0.0),
        ..TrainConfig::default()
    };
    train_task(
        &mut student,
        Teachers::default(),
        &task1,
        &encoder,
        &head,
        &ledger,
        &cfg,
    )
    .unwrap();
    let task2 = load_task(&manifest, 2).unwrap();
    let new: Vec<_> = task2
        .class_ids()
        .into_iter()
        .filter(|&c| student.class_index(c).is_none())
        .collect();
    student.grow_head(&new).unwrap();
    ledger.update(&task2);
    AfterFirstTask {
        manifest,
        encoder,
        student,
        ledger,
        task2,
    }
}

fn softmax(z: &[f64], delta: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - m) / delta).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Single-teacher LwF written out directly: `α·CE(y, σ(z)) + (1−α)·CE(σ(t/δ), σ(z_old/δ))`
/// with the teacher's logits taken straight from the frozen model and the
/// distillation restricted to the classes it knows. Returns the per-batch mean
/// total loss; `student` ends at the final parameters.
#[allow(clippy::too_many_arguments)]
pub fn lwf_oracle(
    student: &mut StudentModel,
    teacher: &StudentModel,
    task: &TaskDataset,
    encoder: &QuestionEncoder,
    alpha: f64,
    delta: f64,
    lr: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Vec<f64> {
    let mask: Vec<usize> = teacher
        .classes()
        .iter()
        .map(|&c| student.class_index(c).unwrap())
        .collect();
    let mut losses = Vec::new();
    for epoch in 0..epochs {
        let order = mtcl_core::engine::epoch_order(seed, task.task_index, epoch, task.len());
        for batch in order.chunks(batch_size) {
            let mut grad = vec![0.0; student.num_params()];
            let mut total = 0.0;
            for &i in batch {
                let s = &task.samples[i];
                let x = encoder.input_vector(s);
                let cache = student.forward(&x).unwrap();
                let z = &cache.logits;
                let y = student.class_index(s.answer).unwrap();
                let p = softmax(z, 1.0);
                let l0 = -p[y].ln();
                let q = softmax(&teacher.logits(&x).unwrap(), delta);
                let zm: Vec<f64> = mask.iter().map(|&k| z[k]).collect();
                let sm = softmax(&zm, delta);
                let lkd: f64 = q.iter().zip(&sm).map(|(a, b)| -a * b.ln()).sum();
                total += alpha * l0 + (1.0 - alpha) * lkd;
                let mut dz: Vec<f64> = p.iter().map(|v| alpha * v).collect();
                dz[y] -= alpha;
                for (j, &k) in mask.iter().enumerate() {
                    dz[k] += (1.0 - alpha) * (sm[j] - q[j]) / delta;
                }
                for (g, v) in grad.iter_mut().zip(student.backward(&cache, &dz)) {
                    *g += v;
                }
            }
            let n = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            student.apply_gradient(&grad, lr).unwrap();
            losses.push(total / n);
        }
    }
    losses
}

use mtcl_core::bridge::{EmbeddingTensor, FixtureStore};
use mtcl_core::config::RunConfig;
use mtcl_core::engine::Checkpoint;
use mtcl_core::experiment::run_experiment;
use mtcl_core::taskstream::{write_task, ClassId, LabelEntry, Sample, TaskEntry};
use mtcl_core::weights::WeightTraceRow;
use rand::{Rng, SeedableRng};

pub const CASE_LABELS: [&str; 3] = ["cutting", "idle", "kidney"];
pub const PROBE_ID: &str = "probe";

/// The probe's teacher outputs and the weights the run recorded for it.
pub struct CaseStudy {
    pub prev_logits: Vec<f64>,
    pub llm_logits: Vec<f64>,
    pub row: WeightTraceRow,
    pub temperature: f64,
}

/// Per-class scores at every position for `position_scores[n]`, with all
/// other tokens at zero: a larger score means a lower label NLL.
fn fixture_tensor(position_scores: [f64; 3], vocab_size: usize) -> EmbeddingTensor {
    let tokens = [[1u32, 0], [2, 0], [3, 0]];
    let mut scores = vec![0.0; 3 * 2 * vocab_size];
    for n in 0..3 {
        for m in 0..2 {
            scores[(n * 2 + m) * vocab_size + tokens[n][m] as usize] = position_scores[n];
        }
    }
    EmbeddingTensor::new(3, 2, vocab_size, scores).unwrap()
}

/// Two-task run over cutting/idle then cutting/kidney with a fixture LLM
/// teacher. The probe is a task-2 "cutting" sample placed on the idle side
/// of the first task's boundary; the fixture scores it kidney > cutting.
pub fn case_study(dir: &Path) -> CaseStudy {
    let centers = [(-2.0, 0.0), (2.0, 0.0), (0.0, 3.0)];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
    let mut draw = |id: String, c: usize| Sample {
        features: vec![
            centers[c].0 + rng.gen_range(-0.8..0.8),
            centers[c].1 + rng.gen_range(-0.8..0.8),
        ],
        id,
        question: "what is happening".into(),
        answer: ClassId(c as u32),
    };
    let labels: Vec<LabelEntry> = CASE_LABELS
        .iter()
        .enumerate()
        .map(|(i, n)| LabelEntry {
            name: n.to_string(),
            tokens: vec![i as u32 + 1],
        })
        .collect();
    let desc = |i: usize| ClassDescriptor {
        id: ClassId(i as u32),
        name: CASE_LABELS[i].into(),
        tokens: vec![i as u32 + 1],
    };

    let t1: Vec<Sample> = (0..80).map(|k| draw(format!("a{k}"), k % 2)).collect();
    let mut t2: Vec<Sample> = (0..60)
        .map(|k| draw(format!("b{k}"), if k % 2 == 0 { 0 } else { 2 }))
        .collect();
    t2.push(Sample {
        id: PROBE_ID.into(),
        features: vec![0.15, 0.0],
        question: "what is happening".into(),
        answer: ClassId(0),
    });
    write_task(
        &TaskDataset::new(1, "first", t1, vec![desc(0), desc(1)]).unwrap(),
        &dir.join("t1.jsonl"),
    )
    .unwrap();
    write_task(
        &TaskDataset::new(2, "second", t2.clone(), vec![desc(0), desc(2)]).unwrap(),
        &dir.join("t2.jsonl"),
    )
    .unwrap();
    std::fs::write(
        dir.join("vocab.txt"),
        "<pause>\t0\ncutting\t1\nidle\t2\nkidney\t3\nwhat\t4\n",
    )
    .unwrap();
    let task = |index: usize, name: &str, file: &str, classes: [&str; 2]| TaskEntry {
        index,
        name: name.into(),
        train: file.into(),
        test: None,
        classes: classes.iter().map(|s| s.to_string()).collect(),
    };
    StreamManifest {
        feature_len: 2,
        token_vocab: "vocab.txt".into(),
        max_label_tokens: 1,
        labels,
        tasks: vec![
            task(1, "first", "t1.jsonl", ["cutting", "idle"]),
            task(2, "second", "t2.jsonl", ["cutting", "kidney"]),
        ],
        base_dir: dir.to_owned(),
    }
    .save(dir.join("manifest.json"))
    .unwrap();

    let mut store = FixtureStore::new();
    for s in &t2 {
        let mut sc = [0.0; 3];
        if s.id == PROBE_ID {
            sc = [2.9, 0.0, 3.0];
        } else {
            sc[s.answer.index()] = 4.0;
        }
        store.insert(s.id.clone(), fixture_tensor(sc, 5));
    }
    store.save(dir.join("llm.llme")).unwrap();

    let cfg_text = r#"
manifest = "manifest.json"
mode = "ours"
seed = 3
temperature = 2.0
output_dir = "run"

[optimizer]
learning_rate = 0.1
epochs = 40
batch_size = 16

[model]
hidden = [8, 8]

[teacher.llm]
kind = "fixture"
path = "llm.llme"
"#;
    std::fs::write(dir.join("case.toml"), cfg_text).unwrap();
    let cfg = RunConfig::load(&dir.join("case.toml"), None).unwrap();
    let report = run_experiment(&cfg).unwrap();

    let manifest = StreamManifest::load(dir.join("manifest.json")).unwrap();
    let encoder = QuestionEncoder::new(manifest.load_vocab().unwrap(), manifest.feature_len);
    let probe = t2.iter().find(|s| s.id == PROBE_ID).unwrap();
    let x = encoder.input_vector(probe);
    let prev = Checkpoint::load(&report.outcome.checkpoints[0]).unwrap();
    let prev_logits = prev.model.logits(&x).unwrap();
    let llm = mtcl_core::experiment::build_llm_teacher(&cfg, &manifest)
        .unwrap()
        .unwrap();
    let llm_logits = llm.query(probe, &[desc(0), desc(1), desc(2)]).unwrap();
    let row = *report.outcome.trace.iter().find(|r| r.t == 2).unwrap();
    CaseStudy {
        prev_logits,
        llm_logits,
        row,
        temperature: cfg.temperature,
    }
}

use mtcl_core::bridge::PAUSE;

// Per-class token NLL written out from the one-hot definition: every row of
// the reshaped tensor is scored against a dense one-hot target, with the
// softmax computed directly.
pub fn brute_force_logits(scores: &[f64], seqs: &[Vec<u32>], m1: usize, p: usize, eps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for (j, seq) in seqs.iter().enumerate() {
        let mut padded = seq.clone();
        while padded.len() < m1 {
            padded.push(PAUSE);
        }
        let mut v = 0.0;
        for pos in 0..m1 {
            let row = &scores[(j * m1 + pos) * p..(j * m1 + pos + 1) * p];
            let mut onehot = vec![0.0; p];
            onehot[padded[pos] as usize] = 1.0;
            let denom: f64 = row.iter().map(|x| x.exp()).sum();
            for k in 0..p {
                if onehot[k] != 0.0 {
                    v -= onehot[k] * (row[k].exp() / denom).ln();
                }
            }
        }
        out.push(1.0 / if v > eps { v } else { eps });
    }
    out
}
