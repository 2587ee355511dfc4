//! Experiment configuration file (TOML).
//!
//! ```toml
//! manifest = "data/manifest.json"
//! mode = "ours"            # ours | ft | lwf
//! seed = 17
//! temperature = 2.0
//! output_dir = "runs/ours"
//!
//! [weights]
//! alpha = 0.5
//! theta_ds = 0.25
//! theta_di = 0.25
//! recompute = "per-task"   # or "per-epoch"
//!
//! [optimizer]
//! learning_rate = 0.05
//! epochs = 30
//! batch_size = 32
//!
//! [model]
//! hidden = [64, 32]
//!
//! [teacher.llm]
//! kind = "noisy-oracle"    # none | noisy-oracle | fixture | service
//! accuracy = 0.7
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::{ServiceConfig, Want, DEFAULT_INVERSION_EPS};
use crate::engine::{EngineConfig, TrainConfig, WeightPolicy};
use crate::weights::{WeightConfig, WeightTriple};
use crate::{Error, Exec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Hard labels plus both teachers with adaptive weights.
    #[default]
    Ours,
    /// Hard labels only.
    Ft,
    /// Hard labels plus the previous-task teacher.
    Lwf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: [usize; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: [64, 32] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LlmTeacherConfig {
    #[default]
    None,
    NoisyOracle {
        accuracy: f64,
        /// Defaults to the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Fixture {
        path: PathBuf,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Service {
        endpoint: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        retries: u32,
        #[serde(default)]
        want: Want,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_eps() -> f64 {
    DEFAULT_INVERSION_EPS
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub llm: LlmTeacherConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    pub output_dir: PathBuf,
    /// Per-sample work on the rayon pool when true.
    #[serde(default = "default_true")]
    pub parallel: bool,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub teacher: TeacherConfig,
}

fn default_temperature() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    /// Parses a config file. Relative paths resolve against the file's
    /// directory, except `output_dir`, which resolves against
    /// `output_root` when one is given.
    pub fn load(path: &Path, output_root: Option<&Path>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(v) => Error::Config(v.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base, output_root);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path, output_root: Option<&Path>) {
        let join = |root: &Path, p: &Path| if p.is_absolute() { p.to_owned() } else { root.join(p) };
        self.manifest = join(base, &self.manifest);
        self.output_dir = join(output_root.unwrap_or(base), &self.output_dir);
        if let LlmTeacherConfig::Fixture { path, .. } = &mut self.teacher.llm {
            *path = join(base, path);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    /// Every violated constraint.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            p.push(format!("temperature must be > 0, got {}", self.temperature));
        }
        p.extend(self.weights.problems());
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || !o.learning_rate.is_finite() {
            p.push(format!("optimizer.learning_rate must be > 0, got {}", o.learning_rate));
        }
        if o.epochs == 0 {
            p.push("optimizer.epochs must be >= 1".into());
        }
        if o.batch_size == 0 {
            p.push("optimizer.batch_size must be >= 1".into());
        }
        if self.model.hidden.contains(&0) {
            p.push(format!(
                "model.hidden widths must be positive, got {:?}",
                self.model.hidden
            ));
        }
        match &self.teacher.llm {
            LlmTeacherConfig::None if self.mode == Mode::Ours => {
                p.push("mode \"ours\" needs a teacher.llm (noisy-oracle, fixture or service)".into())
            }
            LlmTeacherConfig::NoisyOracle { accuracy, .. } if !(*accuracy > 0.0 && *accuracy <= 1.0) => {
                p.push(format!("teacher.llm.accuracy must be in (0, 1], got {accuracy}"))
            }
            LlmTeacherConfig::Fixture { eps, .. } | LlmTeacherConfig::Service { eps, .. } if !(*eps > 0.0) => {
                p.push(format!("teacher.llm.eps must be > 0, got {eps}"))
            }
            LlmTeacherConfig::Service { endpoint, .. } if endpoint.is_empty() => {
                p.push("teacher.llm.endpoint must not be empty".into())
            }
            _ => {}
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Weight policy implied by the mode.
    pub fn weight_policy(&self) -> WeightPolicy {
        match self.mode {
            Mode::Ours => WeightPolicy::Adaptive(self.weights.clone()),
            Mode::Ft => WeightPolicy::Fixed(WeightTriple::FINE_TUNE),
            Mode::Lwf => WeightPolicy::Fixed(WeightTriple {
                alpha: self.weights.alpha,
                beta: 1.0 - self.weights.alpha,
                chi: 0.0,
            }),
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            train: TrainConfig {
                temperature: self.temperature,
                learning_rate: self.optimizer.learning_rate,
                epochs: self.optimizer.epochs,
                batch_size: self.optimizer.batch_size,
                seed: self.seed,
                weights: self.weight_policy(),
                exec: if self.parallel {
                    Exec::Parallel
                } else {
                    Exec::Sequential
                },
            },
            hidden: self.model.hidden,
            checkpoint_dir: Some(self.output_dir.join("checkpoints")),
            config_digest: self.digest(),
        }
    }

    pub fn service_config(&self) -> Option<ServiceConfig> {
        match &self.teacher.llm {
            LlmTeacherConfig::Service {
                endpoint,
                timeout_ms,
                retries,
                want,
                ..
            } => Some(ServiceConfig {
                endpoint: endpoint.clone(),
                timeout: Duration::from_millis(*timeout_ms),
                retries: *retries,
                want: *want,
            }),
            _ => None,
        }
    }
}
