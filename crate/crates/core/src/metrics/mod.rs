//! PEHE, observed PEHE, policy risk and nearest-neighbour PEHE, with
//! evaluation split by whether the treatment was observed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Scalar;

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{what}: lengths {a} and {b} differ")));
    }
    if a == 0 {
        return Err(Error::invalid(format!("{what}: empty input")));
    }
    Ok(())
}

fn mse<T: Scalar>(a: &[T], b: impl Iterator<Item = T>) -> T {
    let sum: T = a.iter().zip(b).map(|(&p, q)| (p - q) * (p - q)).sum();
    sum / T::lit(a.len() as f64)
}

/// Mean squared CATE error against the true effect.
pub fn pehe_true<T: Scalar>(tau_hat: &[T], tau: &[T]) -> Result<T> {
    check_len(tau_hat.len(), tau.len(), "pehe")?;
    Ok(mse(tau_hat, tau.iter().copied()))
}

/// Mean squared CATE error against realized `y1 − y0`.
pub fn pehe_observed<T: Scalar>(tau_hat: &[T], y1: &[T], y0: &[T]) -> Result<T> {
    check_len(tau_hat.len(), y1.len(), "observed pehe")?;
    check_len(tau_hat.len(), y0.len(), "observed pehe")?;
    Ok(mse(tau_hat, y1.iter().zip(y0).map(|(&a, &b)| a - b)))
}

/// `1 − (E[Y1 | π=1] p(π=1) + E[Y0 | π=0] p(π=0))` on the rows with `e`,
/// where `π = 1` iff `tau_hat > 0`.
pub fn policy_risk<T: Scalar>(tau_hat: &[T], y: &[T], t: &[bool], e: &[bool]) -> Result<T> {
    check_len(tau_hat.len(), y.len(), "policy risk")?;
    check_len(tau_hat.len(), t.len(), "policy risk")?;
    check_len(tau_hat.len(), e.len(), "policy risk")?;
    let mut n_pi = [0usize; 2];
    let mut sum = [T::zero(); 2];
    let mut cnt = [0usize; 2];
    for i in 0..y.len() {
        if !e[i] {
            continue;
        }
        let pi = tau_hat[i] > T::zero();
        n_pi[pi as usize] += 1;
        if t[i] == pi {
            sum[pi as usize] += y[i];
            cnt[pi as usize] += 1;
        }
    }
    let n_rand = n_pi[0] + n_pi[1];
    if n_rand == 0 {
        return Err(Error::StratumEmpty("no randomized rows".into()));
    }
    let mut value = T::zero();
    for arm in [1usize, 0] {
        if n_pi[arm] == 0 {
            continue;
        }
        if cnt[arm] == 0 {
            return Err(Error::StratumEmpty(format!(
                "no randomized rows with t = {arm} and policy = {arm}"
            )));
        }
        let mean = sum[arm] / T::lit(cnt[arm] as f64);
        value += mean * T::lit(n_pi[arm] as f64 / n_rand as f64);
    }
    Ok(T::one() - value)
}

/// PEHE against nearest-opposite-arm surrogates `(1 − 2t_i)(y_j(i) − y_i)`
/// over rows with a known treatment. Neighbours are Euclidean with ties
/// going to the lowest row index.
pub fn pehe_nn<T: Scalar>(tau_hat: &[T], x: &Matrix<T>, t: &[Option<bool>], y: &[T]) -> Result<T> {
    check_len(tau_hat.len(), x.rows(), "nn pehe")?;
    check_len(tau_hat.len(), t.len(), "nn pehe")?;
    check_len(tau_hat.len(), y.len(), "nn pehe")?;
    let arms: [Vec<usize>; 2] = [false, true].map(|a| (0..t.len()).filter(|&i| t[i] == Some(a)).collect());
    if arms[0].is_empty() || arms[1].is_empty() {
        return Err(Error::DegenerateArm("nn pehe needs both arms".into()));
    }
    let mut acc = T::zero();
    let mut count = 0usize;
    for i in 0..t.len() {
        let Some(ti) = t[i] else { continue };
        let xi = x.row(i);
        let mut best = (T::infinity(), usize::MAX);
        for &j in &arms[!ti as usize] {
            let d: T = xi.iter().zip(x.row(j)).map(|(&a, &b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        let sign = if ti { -T::one() } else { T::one() };
        let surrogate = sign * (y[best.1] - y[i]);
        acc += (tau_hat[i] - surrogate) * (tau_hat[i] - surrogate);
        count += 1;
    }
    Ok(acc / T::lit(count as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SqrtPehe,
    Pehe,
    SqrtPeheObserved,
    PolicyRisk,
    PeheNn,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::SqrtPehe,
        Metric::Pehe,
        Metric::SqrtPeheObserved,
        Metric::PolicyRisk,
        Metric::PeheNn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::SqrtPehe => "sqrt_pehe",
            Metric::Pehe => "pehe",
            Metric::SqrtPeheObserved => "sqrt_pehe_observed",
            Metric::PolicyRisk => "policy_risk",
            Metric::PeheNn => "pehe_nn",
        }
    }

    pub fn parse(s: &str) -> Result<Metric> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric '{s}'")))
    }
}

/// Values on all rows and on the observed / missing treatment domains;
/// `None` where a domain is empty or the metric cannot be computed there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainValues {
    pub overall: Option<f64>,
    pub t_observed: Option<f64>,
    pub t_missing: Option<f64>,
    pub n_overall: usize,
    pub n_observed: usize,
    pub n_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub seed: u64,
    pub m: Option<f64>,
    pub q: Option<f64>,
    pub metrics: BTreeMap<Metric, DomainValues>,
}

fn metric_on(metric: Metric, data: &Dataset, tau_hat: &[f64]) -> Result<f64> {
    let unavailable = |what: &str| Error::MetricUnavailable(format!("{} needs {what}", metric.name()));
    match metric {
        Metric::Pehe | Metric::SqrtPehe => {
            let tau = data.tau.as_ref().ok_or_else(|| unavailable("tau"))?;
            let v = pehe_true(tau_hat, tau)?;
            Ok(if metric == Metric::Pehe { v } else { v.sqrt() })
        }
        Metric::SqrtPeheObserved => {
            let (y0, y1) = match (&data.y0, &data.y1) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(unavailable("y0 and y1")),
            };
            Ok(pehe_observed(tau_hat, y1, y0)?.sqrt())
        }
        Metric::PolicyRisk => {
            let e = data.e.as_ref().ok_or_else(|| unavailable("a randomized-subset flag"))?;
            let t: Option<Vec<bool>> = (0..data.n()).map(|i| data.true_treatment(i)).collect();
            let t = t.ok_or_else(|| unavailable("known treatments"))?;
            policy_risk(tau_hat, &data.y, &t, e)
        }
        Metric::PeheNn => {
            let t: Vec<Option<bool>> = (0..data.n()).map(|i| data.true_treatment(i)).collect();
            pehe_nn(tau_hat, &data.x, &t, &data.y)
        }
    }
}

/// Metric on all rows, on `r = 1` rows and on `r = 0` rows.
pub fn domain_split_eval(metric: Metric, data: &Dataset, tau_hat: &[f64]) -> Result<DomainValues> {
    if tau_hat.len() != data.n() {
        return Err(Error::invalid("prediction count differs from row count"));
    }
    let obs = data.observed_indices();
    let mis = data.missing_indices();
    let on = |idx: &[usize]| -> Option<f64> {
        if idx.is_empty() {
            return None;
        }
        let sub = data.subset(idx);
        let th: Vec<f64> = idx.iter().map(|&i| tau_hat[i]).collect();
        metric_on(metric, &sub, &th).ok().filter(|v| v.is_finite())
    };
    let overall = match metric_on(metric, data, tau_hat) {
        Ok(v) => Some(v),
        Err(e @ Error::MetricUnavailable(_)) => return Err(e),
        Err(Error::StratumEmpty(_) | Error::DegenerateArm(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(DomainValues {
        overall,
        t_observed: on(&obs),
        t_missing: on(&mis),
        n_overall: data.n(),
        n_observed: obs.len(),
        n_missing: mis.len(),
    })
}

/// Metrics computable from the columns present in `data`.
pub fn available_metrics(data: &Dataset) -> Vec<Metric> {
    Metric::ALL
        .into_iter()
        .filter(|m| match m {
            Metric::Pehe | Metric::SqrtPehe => data.tau.is_some(),
            Metric::SqrtPeheObserved => data.y0.is_some() && data.y1.is_some(),
            Metric::PolicyRisk => data.e.is_some(),
            Metric::PeheNn => true,
        })
        .collect()
}

/// Every available metric split by domain.
pub fn evaluate(data: &Dataset, tau_hat: &[f64], method: &str, seed: u64) -> Result<EvalReport> {
    let mut metrics = BTreeMap::new();
    for m in available_metrics(data) {
        metrics.insert(m, domain_split_eval(m, data, tau_hat)?);
    }
    Ok(EvalReport {
        method: method.to_string(),
        seed,
        m: None,
        q: None,
        metrics,
    })
}
