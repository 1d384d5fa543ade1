//! Per-arm OLS, TARNet and CFR-MMD, each combined with deletion,
//! imputation or reweighting of rows with missing treatment.

mod classifier;
mod ols;

pub use classifier::{fit_observedness, fit_treatment, ClassifierConfig, LogisticClassifier, ObservednessModel};
pub use ols::{ols_fit, LinearFit, OlsModel};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::mtrnet::{train_with, LossRecord, MTRNetConfig, MTRNetModel, Regularizer};
use crate::nn::mmd_value;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingDataStrategy {
    Delete,
    Impute,
    Reweight,
}

impl MissingDataStrategy {
    pub const ALL: [Self; 3] = [Self::Delete, Self::Impute, Self::Reweight];

    pub fn suffix(self) -> &'static str {
        match self {
            Self::Delete => "del",
            Self::Impute => "imp",
            Self::Reweight => "rew",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ols,
    Tarnet,
    Cfrmmd,
}

impl Estimator {
    pub const ALL: [Self; 3] = [Self::Ols, Self::Tarnet, Self::Cfrmmd];

    pub fn label(self) -> &'static str {
        match self {
            Self::Ols => "OLS",
            Self::Tarnet => "TARNet",
            Self::Cfrmmd => "CFRMMD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub estimator: Estimator,
    pub strategy: MissingDataStrategy,
    /// Network settings for TARNet / CFR-MMD; `alpha` is the MMD weight.
    #[serde(default)]
    pub config: MTRNetConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
}

impl BaselineSpec {
    pub fn new(estimator: Estimator, strategy: MissingDataStrategy) -> Self {
        Self {
            estimator,
            strategy,
            config: MTRNetConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }

    /// Name such as `OLS_del` or `CFRMMD_rew`.
    pub fn name(&self) -> String {
        format!("{}_{}", self.estimator.label(), self.strategy.suffix())
    }

    /// All nine estimator × strategy combinations.
    pub fn all() -> Vec<Self> {
        Estimator::ALL
            .iter()
            .flat_map(|&e| MissingDataStrategy::ALL.iter().map(move |&s| Self::new(e, s)))
            .collect()
    }
}

impl fmt::Display for BaselineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for BaselineSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (e, st) = s
            .split_once('_')
            .ok_or_else(|| Error::invalid(format!("baseline name '{s}' is not ESTIMATOR_STRATEGY")))?;
        let estimator = Estimator::ALL
            .into_iter()
            .find(|x| x.label().eq_ignore_ascii_case(e))
            .ok_or_else(|| Error::invalid(format!("unknown estimator '{e}'")))?;
        let strategy = MissingDataStrategy::ALL
            .into_iter()
            .find(|x| x.suffix().eq_ignore_ascii_case(st))
            .ok_or_else(|| Error::invalid(format!("unknown strategy '{st}'")))?;
        Ok(Self::new(estimator, strategy))
    }
}

/// Dataset with every treatment known, plus per-row weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteData {
    pub data: Dataset,
    pub weights: Vec<f64>,
}

fn strip_truth(mut data: Dataset) -> Dataset {
    data.y0 = None;
    data.y1 = None;
    data.tau = None;
    data.t_true = None;
    data
}

/// Applies a missing-data strategy: deletion keeps observed rows with unit
/// weights; imputation fills missing treatments with `p̂(T=1|x,R=1) ≥ 0.5`;
/// reweighting keeps observed rows with weight `1/p̂(R=1|x)`.
pub fn apply_strategy(data: &Dataset, strategy: MissingDataStrategy, cfg: &ClassifierConfig) -> Result<CompleteData> {
    let observed = data.observed_indices();
    if observed.is_empty() {
        return Err(Error::EmptyData("no rows with observed treatment".into()));
    }
    match strategy {
        MissingDataStrategy::Delete => Ok(CompleteData {
            data: strip_truth(data.subset(&observed)),
            weights: vec![1.0; observed.len()],
        }),
        MissingDataStrategy::Reweight => {
            let weights = if observed.len() == data.n() {
                vec![1.0; data.n()]
            } else {
                let model = fit_observedness(data, cfg)?;
                observed.iter().map(|&i| 1.0 / model.predict_row(data.x.row(i))).collect()
            };
            Ok(CompleteData {
                data: strip_truth(data.subset(&observed)),
                weights,
            })
        }
        MissingDataStrategy::Impute => {
            let mut out = strip_truth(data.clone());
            if observed.len() < data.n() {
                let model = fit_treatment(data, cfg)?;
                for i in data.missing_indices() {
                    out.t[i] = Some(model.predict_row(data.x.row(i)) >= 0.5);
                    out.r[i] = true;
                }
            }
            Ok(CompleteData {
                weights: vec![1.0; out.n()],
                data: out,
            })
        }
    }
}

/// Biased (V-statistic) squared MMD with kernel `exp(−‖a − b‖²/(2·bandwidth²))`.
pub fn mmd_rbf_squared(a: &Matrix, b: &Matrix, bandwidth: f64) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::invalid("mmd of an empty sample"));
    }
    if a.cols() != b.cols() {
        return Err(Error::invalid("mmd samples have different widths"));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("mmd bandwidth must be positive"));
    }
    let mut values = a.as_slice().to_vec();
    values.extend_from_slice(b.as_slice());
    let z = Matrix::new(a.rows() + b.rows(), a.cols(), values)?;
    let set_a: Vec<usize> = (0..a.rows()).collect();
    let set_b: Vec<usize> = (a.rows()..z.rows()).collect();
    Ok(mmd_value(&z, &set_a, &set_b, bandwidth).max(0.0))
}

/// MTRNet architecture without discriminators.
pub fn tarnet_train(data: &Dataset, weights: &[f64], config: &MTRNetConfig) -> Result<(MTRNetModel, Vec<LossRecord>)> {
    train_with(data, Some(weights), config, Regularizer::None)
}

/// TARNet plus `alpha · MMD²` between arm-wise batch representations.
pub fn cfrmmd_train(data: &Dataset, weights: &[f64], config: &MTRNetConfig) -> Result<(MTRNetModel, Vec<LossRecord>)> {
    train_with(data, Some(weights), config, Regularizer::Mmd)
}

/// Any trained CATE estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CateModel {
    Ols(OlsModel),
    Network(Box<MTRNetModel>),
}

impl CateModel {
    pub fn predict_cate(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            CateModel::Ols(m) => m.predict_cate(x),
            CateModel::Network(m) => m.predict_cate(x),
        }
    }

    pub fn predict_outcome(&self, x: &Matrix, t: bool) -> Result<Vec<f64>> {
        match self {
            CateModel::Ols(m) => m.predict_outcome(x, t),
            CateModel::Network(m) => m.predict_outcome(x, t),
        }
    }
}

pub fn fit_baseline(spec: &BaselineSpec, data: &Dataset) -> Result<CateModel> {
    let complete = apply_strategy(data, spec.strategy, &spec.classifier)?;
    let (d, w) = (&complete.data, &complete.weights);
    Ok(match spec.estimator {
        Estimator::Ols => CateModel::Ols(ols_fit(d, w)?),
        Estimator::Tarnet => CateModel::Network(Box::new(tarnet_train(d, w, &spec.config)?.0)),
        Estimator::Cfrmmd => CateModel::Network(Box::new(cfrmmd_train(d, w, &spec.config)?.0)),
    })
}
