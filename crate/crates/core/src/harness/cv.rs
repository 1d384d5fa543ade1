use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::baselines::{fit_baseline, BaselineSpec, CateModel, ClassifierConfig};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{pehe_nn, policy_risk};
use crate::mtrnet::{train, MTRNetConfig};

/// Validation criterion used to pick a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    PeheNn,
    PolicyRisk,
}

impl Selection {
    /// Policy risk for randomized-subset data without potential outcomes,
    /// nn-PEHE otherwise.
    pub fn for_data(data: &Dataset) -> Selection {
        let has_truth = data.tau.is_some() || (data.y0.is_some() && data.y1.is_some());
        if !has_truth && data.e.is_some() {
            Selection::PolicyRisk
        } else {
            Selection::PeheNn
        }
    }
}

pub fn fit_method(method: Method, data: &Dataset, config: &MTRNetConfig, classifier: &ClassifierConfig) -> Result<CateModel> {
    match method {
        Method::Mtrnet => Ok(CateModel::Network(Box::new(train(data, config)?.0))),
        Method::Baseline(estimator, strategy) => fit_baseline(
            &BaselineSpec {
                estimator,
                strategy,
                config: config.clone(),
                classifier: classifier.clone(),
            },
            data,
        ),
    }
}

/// Scores a model on validation rows using only observed treatments.
pub fn validation_score(selection: Selection, model: &CateModel, val: &Dataset) -> Result<f64> {
    let tau_hat = model.predict_cate(&val.x)?;
    let score = match selection {
        Selection::PeheNn => pehe_nn(&tau_hat, &val.x, &val.t, &val.y)?,
        Selection::PolicyRisk => {
            let e = val
                .e
                .as_ref()
                .ok_or_else(|| Error::MetricUnavailable("policy risk needs a randomized-subset flag".into()))?;
            let obs = val.observed_indices();
            let pick = |v: &[f64]| obs.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let t: Vec<bool> = obs.iter().map(|&i| val.t[i].unwrap_or(false)).collect();
            let e: Vec<bool> = obs.iter().map(|&i| e[i]).collect();
            policy_risk(&pick(&tau_hat), &pick(&val.y), &t, &e)?
        }
    };
    if score.is_finite() {
        Ok(score)
    } else {
        Err(Error::invalid("non-finite validation score"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub index: usize,
    pub config: MTRNetConfig,
    pub selection: Selection,
    /// Score per grid point, `None` where training or scoring failed.
    pub scores: Vec<Option<f64>>,
    /// Fingerprints of every row passed in, sorted.
    pub seen_rows: Vec<u64>,
}

/// Trains each grid point on `train`, scores it on `val` and returns the
/// lowest score, ties going to the earlier point.
pub fn cross_validate(
    train_set: &Dataset,
    val: &Dataset,
    method: Method,
    grid: &[MTRNetConfig],
    classifier: &ClassifierConfig,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    if val.n() == 0 {
        return Err(Error::EmptyData("validation split is empty".into()));
    }
    let selection = Selection::for_data(train_set);
    let attempts: Vec<Result<f64>> = grid
        .par_iter()
        .map(|cfg| {
            let model = fit_method(method, train_set, cfg, classifier)?;
            validation_score(selection, &model, val)
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    let mut causes = Vec::new();
    let mut scores = Vec::with_capacity(grid.len());
    for (i, a) in attempts.into_iter().enumerate() {
        match a {
            Ok(s) => {
                scores.push(Some(s));
                if best.is_none_or(|(_, b)| s < b) {
                    best = Some((i, s));
                }
            }
            Err(e) => {
                causes.push(format!("grid point {i}: {e}"));
                scores.push(None);
            }
        }
    }
    let (index, _) = best.ok_or(Error::AllFailed(causes))?;

    let mut seen_rows: Vec<u64> = (0..train_set.n())
        .map(|i| train_set.row_fingerprint(i))
        .chain((0..val.n()).map(|i| val.row_fingerprint(i)))
        .collect();
    seen_rows.sort_unstable();
    Ok(CvOutcome {
        index,
        config: grid[index].clone(),
        selection,
        scores,
        seen_rows,
    })
}
