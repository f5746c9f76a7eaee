//! Run configuration shared by every subcommand.
//!
//! Every field has a default and unknown keys are rejected. Command-line
//! flags override values read from the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pesanet_core::model::{ModelConfig, Variant};
use pesanet_core::pde::{Coefficients, IcConfig, SystemKind, SystemSpec};
use pesanet_core::train::{Precision, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub name: SystemKind,
    pub grid: usize,
    /// Side length; the system's standard domain when absent.
    pub domain_size: Option<f64>,
    /// Solver step; the system's standard step when absent.
    pub dt: Option<f64>,
    /// Exactly the system's coefficient names; defaults when absent.
    pub coefficients: Option<BTreeMap<String, f64>>,
    /// Solver steps per stored snapshot.
    pub save_stride: usize,
    /// Stored snapshots after the initial condition.
    pub steps: usize,
    pub trajectories: usize,
    pub ic: IcConfig,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            name: SystemKind::Burgers,
            grid: 32,
            domain_size: None,
            dt: None,
            coefficients: None,
            save_stride: 10,
            steps: 199,
            trajectories: 2,
            ic: IcConfig::default(),
        }
    }
}

impl SystemSection {
    pub fn spec(&self) -> pesanet_core::Result<SystemSpec> {
        let coefficients = match &self.coefficients {
            Some(map) => Coefficients::from_map(self.name, map)?,
            None => Coefficients::default_for(self.name),
        };
        SystemSpec::new(
            self.domain_size.unwrap_or(self.name.standard_domain()),
            self.grid,
            self.dt.unwrap_or(self.name.standard_dt()),
            coefficients,
        )
    }
}

/// Overrides for the model built from the system section. Grid, spacing,
/// step and PyConv coefficients follow the data unless set here.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub pi_channels: Option<usize>,
    pub pi_layers: Option<usize>,
    pub kernel_size: Option<usize>,
    pub modes: Option<[usize; 2]>,
    pub enc_width: Option<usize>,
    pub dec_width: Option<usize>,
    pub attn_hidden: Option<usize>,
    pub variant: Option<Variant>,
    pub pyconv_init: Option<Vec<f64>>,
    pub pyconv_trainable: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_dir: "data".into(),
            checkpoint_dir: "checkpoints".into(),
            report_dir: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub precision: Precision,
    pub system: SystemSection,
    pub model: ModelSection,
    pub train: Option<TrainConfig>,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Training settings: the file's section, or the system's defaults, with
    /// the run's seed and precision applied.
    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone().unwrap_or_else(|| TrainConfig::for_system(self.system.name));
        t.seed = self.seed;
        t.precision = self.precision;
        t
    }

    /// Model for data of the given shape and snapshot spacing.
    pub fn model_config(&self, spec: &SystemSpec, snapshot_dt: f64) -> ModelConfig {
        let n = spec.grid();
        let mut c = ModelConfig::new(n, n, spec.spacing(), snapshot_dt);
        c.pyconv_init = spec.coefficients().diffusivities().to_vec();
        c.seed = self.seed;
        let m = &self.model;
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = m.$f.clone() { c.$f = v; } )* };
        }
        apply!(pi_channels, pi_layers, kernel_size, modes, enc_width, dec_width, attn_hidden, variant, pyconv_init, pyconv_trainable);
        c
    }
}
