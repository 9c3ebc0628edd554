//! The run configuration: one TOML file whose sections feed every stage.
//!
//! ```toml
//! [data]
//! size = 64
//! sigmas = [10.0, 30.0, 50.0, 80.0]
//!
//! [loss]
//! w3 = 0.0
//!
//! [train]
//! steps_joint = 200
//! ```
//!
//! Omitted keys take their defaults; [`RunConfig::to_toml`] writes the
//! fully resolved form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    corrupt_dataset, derive_seed, load_dataset_dir, make_shapes_corpus, make_shapes_dataset, Dataset, SampleTriplet,
    BENCHMARK_SIGMAS, DEFAULT_SIZE,
};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::optim::AdamConfig;
use crate::train::{NetConfig, Phase, TrainConfig};

/// File name of the resolved config written next to outputs.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub size: usize,
    /// Noise levels (standard deviations on the 0-255 scale) used to
    /// corrupt training images.
    pub sigmas: Vec<f64>,
    pub seed: u64,
    /// Shapes-corpus sizes used when no dataset directory is given.
    pub train_count: usize,
    pub test_count: usize,
    /// Directory with `images/` and `masks/`; the shapes corpus otherwise.
    pub dir: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            size: DEFAULT_SIZE,
            sigmas: BENCHMARK_SIGMAS.to_vec(),
            seed: 0,
            train_count: 500,
            test_count: 100,
            dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub eps: f64,
    /// Mean squared error instead of the L2 norm for content and cycle terms.
    pub l2_squared: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self { w1: w.w1, w2: w.w2, w3: w.w3, eps: w.eps, l2_squared: false }
    }
}

impl LossConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights { w1: self.w1, w2: self.w2, w3: self.w3, eps: self.eps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub d_steps_per_g: usize,
    pub clip_norm: f64,
    pub checkpoint_every: usize,
    pub steps_denoise: usize,
    pub steps_sod: usize,
    pub steps_joint: usize,
    pub adam: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            gen_lr: t.gen_lr,
            disc_lr: t.disc_lr,
            d_steps_per_g: t.d_steps_per_g,
            clip_norm: t.clip_norm,
            checkpoint_every: t.checkpoint_every,
            steps_denoise: 500,
            steps_sod: 1000,
            steps_joint: 500,
            adam: t.adam,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    pub freeze_g1: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub sigmas: Vec<f64>,
    pub seed: u64,
    /// Number of images rendered as panels per noise level.
    pub panels: usize,
    /// Datasets to evaluate; the held-out shapes split when empty.
    pub dirs: Vec<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { sigmas: BENCHMARK_SIGMAS.to_vec(), seed: 1, panels: 0, dirs: Vec::new() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub net: NetConfig,
    pub loss: LossConfig,
    pub train: TrainSection,
    pub joint: JointConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Writes the resolved config into `dir` and returns its path.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.size == 0 || self.data.size % 16 != 0 {
            return Err(Error::Config(format!("data.size {} is not a positive multiple of 16", self.data.size)));
        }
        for s in self.data.sigmas.iter().chain(&self.eval.sigmas) {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(Error::Config(format!("noise level {s} must be finite and >= 0")));
            }
        }
        if self.data.sigmas.is_empty() {
            return Err(Error::Config("data.sigmas is empty".into()));
        }
        for phase in Phase::ALL {
            self.phase_config(phase).validate()?;
        }
        Ok(())
    }

    /// Training triplets from `data.dir`, or the shapes corpus.
    pub fn training_set(&self) -> Result<Vec<SampleTriplet>> {
        let d = &self.data;
        match &d.dir {
            Some(dir) => corrupt_dataset(&load_dataset_dir(dir, d.size)?, &d.sigmas, d.seed),
            None => make_shapes_corpus(d.train_count, d.size, &d.sigmas, d.seed),
        }
    }

    /// Evaluation datasets from `eval.dirs`, or a held-out shapes split.
    pub fn eval_datasets(&self) -> Result<Vec<Dataset>> {
        if self.eval.dirs.is_empty() {
            let seed = derive_seed(self.data.seed, &[0x7465_7374]);
            return Ok(vec![make_shapes_dataset("shapes", self.data.test_count, self.data.size, seed)?]);
        }
        self.eval.dirs.iter().map(|dir| load_dataset_dir(dir, self.data.size)).collect()
    }

    pub fn steps(&self, phase: Phase) -> usize {
        match phase {
            Phase::PretrainDenoise => self.train.steps_denoise,
            Phase::PretrainSod => self.train.steps_sod,
            Phase::Joint => self.train.steps_joint,
        }
    }

    pub fn phase_config(&self, phase: Phase) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            phase,
            batch_size: t.batch_size,
            steps: self.steps(phase),
            gen_lr: t.gen_lr,
            disc_lr: t.disc_lr,
            d_steps_per_g: t.d_steps_per_g,
            weights: self.loss.weights(),
            seed: self.data.seed,
            checkpoint_every: t.checkpoint_every,
            l2_squared: self.loss.l2_squared,
            clip_norm: t.clip_norm,
            freeze_g1: self.joint.freeze_g1,
            adam: t.adam,
        }
    }
}
