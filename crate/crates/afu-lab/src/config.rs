//! TOML experiment configuration.
//!
//! ```toml
//! grid = 4096
//! seed = 7
//! out = "out"
//!
//! [map]
//! family = "shifted_beta"      # doubling | golden_beta | shifted_beta | mp_first_return
//! params = { beta = 2.5, alpha = 0.3 }
//!
//! [roof]
//! kind = "one_plus_x_sq"       # const | one_plus_x_sq | table
//! eps0 = 0.5
//! # value = 1.0                # const
//! # knots = [[0.0, 1.0], [1.0, 2.0]]   # table
//!
//! [caps]                       # truncation and enumeration caps
//! power_cap = 8
//!
//! [scan]
//! sigma = [0.0]
//! b = [20.0, 40.0, 80.0]
//! resolvent_b = [20.0, 40.0, 80.0, 160.0]
//!
//! [correlation]
//! samples = 1000000
//! t_max = 10.0
//! t_step = 0.25
//! ```
//!
//! Every key is optional except `[map].family`.

use crate::dolgopyat_harness::HarnessConfig;
use crate::interval_map::{Caps, MapSpec, Roof, RoofKind};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapParams {
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub t_max: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub family: String,
    #[serde(default)]
    pub params: MapParams,
}

impl MapConfig {
    pub fn build(&self) -> Result<MapSpec> {
        let p = &self.params;
        match self.family.as_str() {
            "doubling" => Ok(MapSpec::doubling()),
            "golden_beta" => Ok(MapSpec::golden_beta()),
            "beta" | "shifted_beta" => MapSpec::shifted_beta(
                p.beta.ok_or_else(|| Error::Config("shifted_beta needs params.beta".into()))?,
                p.alpha.unwrap_or(0.0),
            ),
            "mp_first_return" => MapSpec::mp_first_return(p.alpha.unwrap_or(1.0), p.gamma.unwrap_or(0.8), p.t_max.unwrap_or(40)),
            other => Err(Error::Config(format!("unknown map family {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoofConfig {
    #[serde(default = "default_roof_kind")]
    pub kind: String,
    pub value: Option<f64>,
    pub knots: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
}

fn default_roof_kind() -> String {
    "one_plus_x_sq".into()
}

fn default_eps0() -> f64 {
    0.5
}

impl Default for RoofConfig {
    fn default() -> Self {
        RoofConfig { kind: default_roof_kind(), value: None, knots: None, eps0: default_eps0() }
    }
}

impl RoofConfig {
    pub fn build(&self) -> Result<Roof> {
        let kind = match self.kind.as_str() {
            "const" => RoofKind::Const { value: self.value.ok_or_else(|| Error::Config("const roof needs value".into()))? },
            "one_plus_x_sq" => RoofKind::OnePlusXSq,
            "table" => {
                let knots = self.knots.clone().ok_or_else(|| Error::Config("table roof needs knots".into()))?;
                if knots.len() < 2 || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::Config("table knots must have increasing x and at least two entries".into()));
                }
                RoofKind::Table { knots }
            }
            other => return Err(Error::Config(format!("unknown roof kind {other:?}"))),
        };
        Ok(Roof { kind, eps0: self.eps0 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub sigma: Vec<f64>,
    pub b: Vec<f64>,
    pub resolvent_b: Vec<f64>,
    /// twist used by uni/cone/l2
    pub b_single: f64,
    pub m_max: usize,
    pub family_size: usize,
    pub cone_pairs: usize,
    pub cone_iterations: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            sigma: vec![0.0],
            b: vec![20.0, 40.0, 80.0],
            resolvent_b: vec![20.0, 40.0, 80.0, 160.0],
            b_single: 50.0,
            m_max: 8,
            family_size: 6,
            cone_pairs: 16,
            cone_iterations: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationConfig {
    pub samples: usize,
    pub t_max: f64,
    pub t_step: f64,
    /// also run the constant-roof control with the same observables
    pub control: bool,
    pub control_roof: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig { samples: 1_000_000, t_max: 10.0, t_step: 0.25, control: true, control_roof: 1.0 }
    }
}

impl CorrelationConfig {
    pub fn t_grid(&self) -> Vec<f64> {
        let n = (self.t_max / self.t_step).floor() as usize;
        (0..n).map(|i| i as f64 * self.t_step).collect()
    }
}

/// Overrides of acceptance tolerances used by the CLI exit codes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub residual: f64,
    pub lambda: f64,
    pub violation: f64,
    pub cone_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { residual: 1e-8, lambda: 1e-6, violation: 1e-8, cone_slack: 1.1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub map: MapConfig,
    #[serde(default)]
    pub roof: RoofConfig,
    #[serde(default)]
    pub caps: Option<Caps>,
    #[serde(default)]
    pub harness: HarnessConfig,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub correlation: CorrelationConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Doubling with roof 1 + x² and defaults everywhere else.
    pub fn doubling() -> ExperimentConfig {
        ExperimentConfig::from_toml("[map]\nfamily = \"doubling\"\n").expect("static config")
    }

    pub fn map(&self) -> Result<MapSpec> {
        self.map.build()
    }

    pub fn roof(&self) -> Result<Roof> {
        self.roof.build()
    }

    /// Harness settings with the top-level grid, seed and caps folded in.
    pub fn harness(&self) -> HarnessConfig {
        let mut h = self.harness.clone();
        if let Some(g) = self.grid {
            h.grid = g;
        }
        if let Some(s) = self.seed {
            h.seed = s;
        }
        if let Some(c) = &self.caps {
            h.caps = c.clone();
        }
        h
    }
}
