use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, HyperGrid, Method, MissingnessConfig};
use crate::baselines::ClassifierConfig;
use crate::datagen::SyntheticDgpSpec;
use crate::error::{Error, Result};
use crate::mtrnet::MTRNetConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small grid that finishes in minutes on one core.
    Desk,
    /// Wide grid over every tunable setting.
    Full,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(Error::invalid(format!("unknown preset '{s}' (expected desk or full)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Full => "full",
        })
    }
}

fn half_decades() -> Vec<f64> {
    (-4..=2).map(|k| 10f64.powf(k as f64 / 2.0)).collect()
}

impl Preset {
    pub fn base(self) -> MTRNetConfig {
        MTRNetConfig {
            rep_layer_size: 50,
            hyp_layer_size: 50,
            iterations: match self {
                Preset::Desk => 1000,
                Preset::Full => 300,
            },
            batch_size: 100,
            learning_rate: 1e-3,
            dropout_rate: 0.0,
            l2_lambda: 1e-4,
            alpha: 1.0,
            beta: 1.0,
            ..MTRNetConfig::default()
        }
    }

    pub fn grid(self) -> HyperGrid {
        match self {
            Preset::Desk => HyperGrid {
                alpha: vec![0.1, 1.0],
                beta: vec![0.1, 1.0],
                ..HyperGrid::default()
            },
            Preset::Full => HyperGrid {
                rep_layer_size: vec![50, 100, 200],
                hyp_layer_size: vec![50, 100, 200],
                iterations: vec![100, 200, 300],
                batch_size: vec![50, 70, 100],
                learning_rate: vec![0.01, 0.005, 0.001, 0.0005, 0.0001],
                dropout_rate: vec![0.1, 0.2, 0.3],
                l2_lambda: vec![0.0005, 0.0001, 0.00005],
                alpha: half_decades(),
                beta: half_decades(),
            },
        }
    }

    /// Every method on the shifted synthetic process with strong
    /// missingness shift.
    pub fn experiment(self, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic {
                spec: SyntheticDgpSpec::shifted(2000, 10, 0),
            },
            missingness: MissingnessConfig { m: 0.5, q: 0.9 },
            methods: Method::all(),
            base: self.base(),
            grid: self.grid(),
            method_grids: Default::default(),
            classifier: ClassifierConfig::default(),
            num_runs: 10,
            seed,
            metrics: Vec::new(),
            out: None,
        }
    }

    /// Replaces the network settings and grid of an existing config.
    pub fn apply(self, config: &mut ExperimentConfig) {
        config.base = MTRNetConfig {
            seed: config.base.seed,
            ..self.base()
        };
        config.grid = self.grid();
        config.method_grids.clear();
    }
}
