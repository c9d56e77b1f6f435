//! Flat key-value run configuration.
//!
//! Values resolve with precedence command-line overrides > config file >
//! defaults. The output directory may also be set through
//! [`OUTPUT_DIR_ENV`], which sits between the file and explicit overrides.
//!
//! ```toml
//! dataset = "spirals"
//! samples = 1000
//! sampling_count = 4
//! seed = 3
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{make_parity, make_spirals, make_two_moons, Dataset, PARITY_BITS};
use crate::egs::MAX_ENUMERATED_OPS;
use crate::error::{Error, Result};
use crate::search::{DeriveMode, RetrainConfig, SearchConfig};
use crate::space::{OutputRule, Primitive, DEFAULT_LAMBDA};

pub const OUTPUT_DIR_ENV: &str = "EGSNAS_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Spirals,
    Moons,
    Parity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `spirals`, `moons` or `parity`.
    pub dataset: DatasetKind,
    pub samples: usize,
    pub noise: f64,
    /// Spiral turns.
    pub turns: f64,
    pub parity_bits: usize,
    pub data_seed: u64,

    /// Cell node count, input node included.
    pub nodes: usize,
    pub hidden: usize,
    pub ops: Vec<Primitive>,
    /// `sum` or `concat` of the intermediate nodes.
    pub output: OutputRule,
    /// Ensemble size `M`.
    pub sampling_count: usize,
    /// Weight of the effectiveness credit against the efficiency credit.
    pub lambda: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub lr_weights: f64,
    pub momentum: f64,
    /// Bound on the weight-gradient L2 norm; 0 disables clipping.
    pub grad_clip: f64,
    pub lr_arch: f64,
    /// Batch-standardize cell nodes during search only.
    pub normalize_nodes: bool,
    pub epochs: usize,
    pub batch_size: usize,
    /// `mode-sample` or `max-marginal`.
    pub derive: String,

    pub retrain_epochs: usize,
    pub baseline_epochs: usize,
    pub budget: usize,
    pub resample_empty_edges: bool,

    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let search = SearchConfig::default();
        let retrain = RetrainConfig::default();
        Self {
            dataset: DatasetKind::Spirals,
            samples: 1000,
            noise: 0.1,
            turns: 1.5,
            parity_bits: 6,
            data_seed: 0,
            nodes: search.nodes,
            hidden: search.hidden,
            ops: search.ops,
            output: search.output,
            sampling_count: search.sampling_count,
            lambda: DEFAULT_LAMBDA,
            tau_start: search.tau_start,
            tau_end: search.tau_end,
            lr_weights: search.lr_weights,
            momentum: search.momentum,
            grad_clip: search.grad_clip.unwrap_or(0.0),
            lr_arch: search.lr_arch,
            normalize_nodes: search.normalize_nodes,
            epochs: search.epochs,
            batch_size: search.batch_size,
            derive: "mode-sample".into(),
            retrain_epochs: retrain.epochs,
            baseline_epochs: 10,
            budget: 10,
            resample_empty_edges: true,
            seed: 0,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            field: e
                .span()
                .map_or_else(|| "<file>".to_string(), |s| format!("<file> bytes {}..{}", s.start, s.end)),
            reason: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Overrides one field from a `key=value` string. The value is read as
    /// a TOML value, falling back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "expected key=value"))?;
        let key = key.trim();
        let raw = raw.trim();
        let value: toml::Value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut table = toml::Table::try_from(&*self).expect("config serializes");
        if !table.contains_key(key) {
            return Err(Error::config(key, "unknown field"));
        }
        table.insert(key.to_string(), value);
        *self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(key, e.message().to_string()))?;
        Ok(())
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("samples", self.samples),
            ("hidden", self.hidden),
            ("sampling_count", self.sampling_count),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("retrain_epochs", self.retrain_epochs),
            ("baseline_epochs", self.baseline_epochs),
            ("budget", self.budget),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.nodes < 2 {
            return Err(Error::config("nodes", "a cell needs at least 2 nodes"));
        }
        if self.ops.is_empty() || self.ops.len() > MAX_ENUMERATED_OPS {
            return Err(Error::config("ops", format!("need between 1 and {MAX_ENUMERATED_OPS} ops")));
        }
        let mut seen = self.ops.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.ops.len() {
            return Err(Error::config("ops", "duplicate op"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda", "must lie in [0, 1]"));
        }
        for (field, tau) in [("tau_start", self.tau_start), ("tau_end", self.tau_end)] {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.tau_end > self.tau_start {
            return Err(Error::config("tau_end", "must not exceed tau_start"));
        }
        for (field, v) in [
            ("lr_weights", self.lr_weights),
            ("lr_arch", self.lr_arch),
            ("momentum", self.momentum),
            ("grad_clip", self.grad_clip),
            ("noise", self.noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, "must be a finite non-negative number"));
            }
        }
        if self.momentum >= 1.0 {
            return Err(Error::config("momentum", "must be below 1"));
        }
        self.derive_mode()?;
        match self.dataset {
            DatasetKind::Spirals | DatasetKind::Moons if self.samples < 10 => {
                return Err(Error::config("samples", "need at least 10 samples"));
            }
            DatasetKind::Spirals if !(self.turns.is_finite() && self.turns > 0.0) => {
                return Err(Error::config("turns", "must be positive"));
            }
            DatasetKind::Parity if !PARITY_BITS.contains(&self.parity_bits) => {
                return Err(Error::config("parity_bits", format!("must be in {PARITY_BITS:?}")));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn derive_mode(&self) -> Result<DeriveMode> {
        self.derive
            .parse()
            .map_err(|_| Error::config("derive", "expected `mode-sample` or `max-marginal`"))
    }

    pub fn build_dataset(&self) -> Result<Dataset> {
        match self.dataset {
            DatasetKind::Spirals => make_spirals(self.samples, self.turns, self.noise, self.data_seed),
            DatasetKind::Moons => make_two_moons(self.samples, self.noise, self.data_seed),
            DatasetKind::Parity => make_parity(self.parity_bits, self.data_seed),
        }
    }

    pub fn search_config(&self) -> Result<SearchConfig> {
        Ok(SearchConfig {
            nodes: self.nodes,
            hidden: self.hidden,
            ops: self.ops.clone(),
            output: self.output,
            sampling_count: self.sampling_count,
            lambda: self.lambda,
            tau_start: self.tau_start,
            tau_end: self.tau_end,
            lr_weights: self.lr_weights,
            momentum: self.momentum,
            grad_clip: self.clip(),
            lr_arch: self.lr_arch,
            normalize_nodes: self.normalize_nodes,
            epochs: self.epochs,
            batch_size: self.batch_size,
            derive: self.derive_mode()?,
            seed: self.seed,
        })
    }

    fn clip(&self) -> Option<f64> {
        (self.grad_clip > 0.0).then_some(self.grad_clip)
    }

    pub fn retrain_config(&self) -> RetrainConfig {
        RetrainConfig {
            hidden: self.hidden,
            output: self.output,
            epochs: self.retrain_epochs,
            batch_size: self.batch_size,
            lr: self.lr_weights,
            momentum: self.momentum,
            grad_clip: self.clip(),
            seed: self.seed,
        }
    }
}
