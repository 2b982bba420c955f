//! Reconstruction reports: final field, iteration history, error metrics
//! and run provenance, serialised as JSON.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CdiiError, Result};
use crate::grid::ScalarField;
use crate::picard::{PicardIterate, PicardOutcome};
use crate::vip::{VipIterate, VipOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Vip,
    Picard,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Vip => "vip",
            Algorithm::Picard => "picard",
        })
    }
}

impl FromStr for Algorithm {
    type Err = CdiiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vip" => Ok(Algorithm::Vip),
            "picard" => Ok(Algorithm::Picard),
            other => Err(CdiiError::OutOfRange {
                key: "algo".into(),
                message: format!("expected `vip` or `picard`, got `{other}`"),
            }),
        }
    }
}

/// Error of a reconstruction against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `‖σ − σ*‖ / ‖σ*‖`, or the absolute error when `σ* = 0`.
    pub l2_error: f64,
    pub relative: bool,
    pub max_error: f64,
}

impl Metrics {
    pub fn compute(sigma: &ScalarField, truth: &ScalarField) -> Result<Self> {
        let diff = sigma.sub(truth)?;
        let t = truth.norm_l2();
        let relative = t > 0.0;
        Ok(Self {
            l2_error: if relative { diff.norm_l2() / t } else { diff.norm_l2() },
            relative,
            max_error: diff.norm_max(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum History {
    Vip(Vec<VipIterate>),
    Picard(Vec<PicardIterate>),
}

impl History {
    pub fn len(&self) -> usize {
        match self {
            History::Vip(h) => h.len(),
            History::Picard(h) => h.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: Option<u64>,
    /// Effective configuration, one entry per key.
    pub config: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(seed: Option<u64>, config: BTreeMap<String, String>) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconReport {
    pub algorithm: Algorithm,
    pub n_cells: usize,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub metrics: Option<Metrics>,
    pub history: History,
    pub provenance: Provenance,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub sigma: ScalarField,
}

impl ReconReport {
    pub fn from_vip(outcome: VipOutcome, wall_time_s: f64) -> Self {
        Self {
            algorithm: Algorithm::Vip,
            n_cells: outcome.sigma.grid().n_cells(),
            iterations: outcome.history.len(),
            converged: outcome.converged,
            wall_time_s,
            metrics: None,
            history: History::Vip(outcome.history),
            provenance: Provenance::default(),
            notes: vec!["multiplier estimate mu = -beta*sigma - smoothed gradient".into()],
            sigma: outcome.sigma,
        }
    }

    pub fn from_picard(outcome: PicardOutcome, wall_time_s: f64) -> Self {
        let clamped: usize = outcome.history.iter().map(|h| h.clamped).sum();
        let mut notes = Vec::new();
        if clamped > 0 {
            notes.push(format!("{clamped} non-positive conductivity values clamped"));
        }
        Self {
            algorithm: Algorithm::Picard,
            n_cells: outcome.sigma.grid().n_cells(),
            iterations: outcome.history.len(),
            converged: outcome.converged,
            wall_time_s,
            metrics: None,
            history: History::Picard(outcome.history),
            provenance: Provenance::default(),
            notes,
            sigma: outcome.sigma,
        }
    }

    pub fn with_truth(mut self, truth: &ScalarField) -> Result<Self> {
        self.metrics = Some(Metrics::compute(&self.sigma, truth)?);
        Ok(self)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
