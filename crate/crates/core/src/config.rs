use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assignment::feasibility_check;
use crate::error::{invalid, Error, Result};
use crate::straggler::StragglerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "GC")]
    Gc,
    #[serde(rename = "GC-SC")]
    GcSc,
    #[serde(rename = "GC-DC")]
    GcDc,
    #[serde(rename = "LB")]
    Lb,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Gc, Scheme::GcSc, Scheme::GcDc, Scheme::Lb];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Gc => "GC",
            Scheme::GcSc => "GC-SC",
            Scheme::GcDc => "GC-DC",
            Scheme::Lb => "LB",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GC" => Ok(Scheme::Gc),
            "GC-SC" | "GCSC" => Ok(Scheme::GcSc),
            "GC-DC" | "GCDC" => Ok(Scheme::GcDc),
            "LB" => Ok(Scheme::Lb),
            _ => Err(invalid(format!("unknown scheme '{s}' (expected GC, GC-SC, GC-DC or LB)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub workers: usize,
    pub clusters: usize,
    pub load: usize,
    pub replication: usize,
    pub iterations: usize,
    pub runs: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    #[serde(flatten)]
    pub straggler: StragglerConfig,
    pub verify_gradients: bool,
    /// Model dimension of the verification learner.
    pub verify_dim: usize,
    /// Requested training-set size of the verification learner; rounded up
    /// to a multiple of the worker count.
    pub verify_samples: usize,
    pub learning_rate: f64,
    /// Keep per-iteration placements for CSV dumps.
    pub record_placements: bool,
    pub parallel: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            workers: 12,
            clusters: 4,
            load: 2,
            replication: 2,
            iterations: 400,
            runs: 30,
            seed: 0,
            schemes: Scheme::ALL.to_vec(),
            straggler: StragglerConfig::default(),
            verify_gradients: false,
            verify_dim: 100,
            verify_samples: 400,
            learning_rate: 0.1,
            record_placements: false,
            parallel: true,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn cluster_size(&self) -> usize {
        self.workers / self.clusters
    }

    pub fn has(&self, scheme: Scheme) -> bool {
        self.schemes.contains(&scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 || self.clusters == 0 || !self.workers.is_multiple_of(self.clusters) {
            return Err(invalid(format!("cluster count {} must divide worker count {}", self.clusters, self.workers)));
        }
        let ell = self.cluster_size();
        if self.load == 0 || self.load > ell {
            return Err(invalid(format!("computation load {} must lie in 1..={ell}", self.load)));
        }
        if self.replication == 0 || self.replication > self.clusters {
            return Err(invalid(format!("replication {} must lie in 1..={}", self.replication, self.clusters)));
        }
        if self.schemes.is_empty() {
            return Err(invalid("scheme list is empty"));
        }
        if self.iterations == 0 || self.runs == 0 {
            return Err(invalid("iterations and runs must be positive"));
        }
        if self.verify_gradients && (self.verify_dim == 0 || self.verify_samples == 0) {
            return Err(invalid("verification learner needs positive dimension and sample count"));
        }
        self.straggler.validate(self.workers)
    }

    /// Whether Phase II swaps are guaranteed to exist for this shape.
    pub fn is_feasible(&self) -> bool {
        feasibility_check(self.workers, self.clusters, self.replication)
    }

    /// Training-set size for the verification learner: the requested size
    /// rounded up to a multiple of `K`.
    pub fn verify_train_size(&self) -> usize {
        self.verify_samples.div_ceil(self.workers) * self.workers
    }
}
