use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineSpec, ClassifierConfig, Estimator};
use crate::datagen::SyntheticDgpSpec;
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::mtrnet::MTRNetConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Regenerated every run; the spec's own seed is replaced by a derived one.
    Synthetic { spec: SyntheticDgpSpec },
    Csv { path: PathBuf },
}

/// Missingness applied every run with a derived seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingnessConfig {
    pub m: f64,
    pub q: f64,
}

/// MTRNet or one of the nine baselines, written by name (`MTRNet`, `TARNet_del`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mtrnet,
    Baseline(Estimator, crate::baselines::MissingDataStrategy),
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Mtrnet => "MTRNet".to_string(),
            Method::Baseline(e, s) => format!("{}_{}", e.label(), s.suffix()),
        }
    }

    /// Whether the method trains a network.
    pub fn is_network(&self) -> bool {
        !matches!(self, Method::Baseline(Estimator::Ols, _))
    }

    /// MTRNet plus the nine baselines.
    pub fn all() -> Vec<Method> {
        let mut v = vec![Method::Mtrnet];
        v.extend(BaselineSpec::all().into_iter().map(|b| Method::Baseline(b.estimator, b.strategy)));
        v
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("mtrnet") {
            return Ok(Method::Mtrnet);
        }
        let b: BaselineSpec = s.parse()?;
        Ok(Method::Baseline(b.estimator, b.strategy))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Values tried by cross-validation. Empty lists keep the base value.
/// `alpha` is ignored by TARNet, `beta` by everything but MTRNet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperGrid {
    pub rep_layer_size: Vec<usize>,
    pub hyp_layer_size: Vec<usize>,
    pub iterations: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub dropout_rate: Vec<f64>,
    pub l2_lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl HyperGrid {
    /// Grid points for `method` in lexicographic order, last axis fastest.
    /// OLS has a single point.
    pub fn expand(&self, method: Method, base: &MTRNetConfig) -> Vec<MTRNetConfig> {
        if !method.is_network() {
            return vec![base.clone()];
        }
        let (use_alpha, use_beta) = match method {
            Method::Mtrnet => (true, true),
            Method::Baseline(Estimator::Cfrmmd, _) => (true, false),
            _ => (false, false),
        };
        let alphas = if use_alpha { axis(&self.alpha, base.alpha) } else { vec![0.0] };
        let betas = if use_beta { axis(&self.beta, base.beta) } else { vec![0.0] };
        let mut out = Vec::new();
        for &rep in &axis(&self.rep_layer_size, base.rep_layer_size) {
            for &hyp in &axis(&self.hyp_layer_size, base.hyp_layer_size) {
                for &iters in &axis(&self.iterations, base.iterations) {
                    for &bs in &axis(&self.batch_size, base.batch_size) {
                        for &lr in &axis(&self.learning_rate, base.learning_rate) {
                            for &dr in &axis(&self.dropout_rate, base.dropout_rate) {
                                for &l2 in &axis(&self.l2_lambda, base.l2_lambda) {
                                    for &a in &alphas {
                                        for &b in &betas {
                                            out.push(MTRNetConfig {
                                                rep_layer_size: rep,
                                                hyp_layer_size: hyp,
                                                iterations: iters,
                                                batch_size: bs,
                                                learning_rate: lr,
                                                dropout_rate: dr,
                                                l2_lambda: l2,
                                                alpha: a,
                                                beta: b,
                                                ..base.clone()
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn default_runs() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub missingness: MissingnessConfig,
    pub methods: Vec<Method>,
    /// Network settings not covered by the grid.
    #[serde(default)]
    pub base: MTRNetConfig,
    #[serde(default)]
    pub grid: HyperGrid,
    /// Per-method grids replacing `grid`, keyed by method name.
    #[serde(default)]
    pub method_grids: std::collections::BTreeMap<String, HyperGrid>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default = "default_runs")]
    pub num_runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Metrics to report; empty means every computable one.
    #[serde(default)]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("experiment needs at least one method"));
        }
        if self.num_runs == 0 {
            return Err(Error::invalid("num_runs must be at least 1"));
        }
        for name in self.method_grids.keys() {
            name.parse::<Method>()?;
        }
        if let DataSource::Synthetic { spec } = &self.data {
            spec.validate()?;
        }
        crate::datagen::MissingnessSpec {
            m: self.missingness.m,
            q: self.missingness.q,
            seed: 0,
        }
        .validate()?;
        for method in &self.methods {
            for c in self.grid_for(*method) {
                c.validate()?;
            }
        }
        Ok(())
    }

    pub fn grid_for(&self, method: Method) -> Vec<MTRNetConfig> {
        self.method_grids
            .get(&method.name())
            .unwrap_or(&self.grid)
            .expand(method, &self.base)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::MissingDataStrategy;
    use crate::harness::Preset;

    #[test]
    fn method_names_roundtrip() {
        for m in Method::all() {
            let back: Method = m.name().parse().unwrap();
            assert_eq!(back, m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<Method>(&json).unwrap(), m);
        }
        assert_eq!(Method::all().len(), 10);
        assert!("TARNet_xyz".parse::<Method>().is_err());
        assert_eq!("mtrnet".parse::<Method>().unwrap(), Method::Mtrnet);
    }

    #[test]
    fn grid_sizes_per_method() {
        let base = MTRNetConfig::default();
        let grid = HyperGrid {
            learning_rate: vec![1e-3, 1e-2],
            alpha: vec![0.1, 1.0, 10.0],
            beta: vec![0.5, 2.0],
            ..Default::default()
        };
        let mtr = grid.expand(Method::Mtrnet, &base);
        assert_eq!(mtr.len(), 12);
        assert_eq!((mtr[0].learning_rate, mtr[0].alpha, mtr[0].beta), (1e-3, 0.1, 0.5));
        assert_eq!((mtr[1].alpha, mtr[1].beta), (0.1, 2.0));
        assert_eq!(mtr[11].learning_rate, 1e-2);
        let tar = grid.expand(Method::Baseline(Estimator::Tarnet, MissingDataStrategy::Delete), &base);
        assert_eq!(tar.len(), 2);
        assert!(tar.iter().all(|c| c.alpha == 0.0 && c.beta == 0.0));
        let cfr = grid.expand(Method::Baseline(Estimator::Cfrmmd, MissingDataStrategy::Impute), &base);
        assert_eq!(cfr.len(), 6);
        assert!(cfr.iter().all(|c| c.beta == 0.0));
        let ols = grid.expand(Method::Baseline(Estimator::Ols, MissingDataStrategy::Reweight), &base);
        assert_eq!(ols.len(), 1);
        assert_eq!(HyperGrid::default().expand(Method::Mtrnet, &base), vec![base]);
    }

    #[test]
    fn config_json_roundtrip_and_validation() {
        let cfg = Preset::Desk.experiment(3);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);

        let mut bad = cfg.clone();
        bad.methods.clear();
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.num_runs = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.missingness.m = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.method_grids.insert("nope".into(), HyperGrid::default());
        assert!(bad.validate().is_err());
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let json = r#"{
            "data": {"kind": "csv", "path": "data.csv"},
            "missingness": {"m": 0.3, "q": 0.5},
            "methods": ["MTRNet", "OLS_del"]
        }"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(cfg.num_runs, 10);
        assert_eq!(cfg.methods[1], Method::Baseline(Estimator::Ols, MissingDataStrategy::Delete));
        assert_eq!(cfg.grid_for(Method::Mtrnet).len(), 1);
    }
}
