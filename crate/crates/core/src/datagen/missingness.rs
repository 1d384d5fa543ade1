use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::Matrix;

/// Parameters of the covariate-dependent treatment-missingness mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingnessSpec {
    /// Target fraction of rows with missing treatment.
    pub m: f64,
    /// Shift magnitude; 0.5 means missingness independent of covariates.
    pub q: f64,
    pub seed: u64,
}

impl MissingnessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m < 1.0) {
            return Err(Error::invalid(format!("m = {} outside (0, 1)", self.m)));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid(format!("q = {} outside (0, 1)", self.q)));
        }
        Ok(())
    }
}

pub fn column_means(x: &Matrix) -> Vec<f64> {
    let n = x.rows() as f64;
    let mut means = vec![0.0; x.cols()];
    for row in x.iter_rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    means
}

/// Number of coordinates strictly above their column mean.
pub fn above_mean_count(row: &[f64], means: &[f64]) -> usize {
    row.iter().zip(means).filter(|(v, m)| v > m).count()
}

/// Missingness probability for a row with `above` of `d` coordinates above
/// the mean:
///
/// `q^a (1−q)^(d−a) / (q^a (1−q)^(d−a) + (1−q)^a q^(d−a))`
///
/// evaluated as `sigmoid((2a − d)·ln(q/(1−q)))`, which does not underflow
/// for large `d`.
pub fn missingness_probability_from_count(above: usize, d: usize, q: f64) -> f64 {
    let k = 2.0 * above as f64 - d as f64;
    sigmoid(k * (q / (1.0 - q)).ln())
}

pub fn missingness_probability(row: &[f64], means: &[f64], q: f64) -> f64 {
    missingness_probability_from_count(above_mean_count(row, means), row.len(), q)
}

/// Masks treatments: draws `r_i ~ Bernoulli(1 − p_m(i))`, then flips
/// uniformly chosen rows in the needed direction until exactly
/// `round(m·n)` rows are missing.
///
/// The unmasked treatment is retained in `t_true`. Covariates, outcomes and
/// ground truth are left untouched.
pub fn apply_missingness(data: &Dataset, spec: &MissingnessSpec) -> Result<Dataset> {
    spec.validate()?;
    if data.r.iter().any(|&r| !r) {
        return Err(Error::invalid("apply_missingness expects a fully observed dataset"));
    }
    let n = data.n();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = column_means(&data.x);

    let mut r: Vec<bool> = data
        .x
        .iter_rows()
        .map(|row| {
            let p_missing = missingness_probability(row, &means, spec.q);
            rng.random::<f64>() >= p_missing
        })
        .collect();

    let target_missing = (spec.m * n as f64).round() as usize;
    let missing = r.iter().filter(|&&v| !v).count();
    if missing != target_missing {
        // flip from the over-represented side
        let (from, count) = if missing > target_missing {
            (false, missing - target_missing)
        } else {
            (true, target_missing - missing)
        };
        let mut pool: Vec<usize> = (0..n).filter(|&i| r[i] == from).collect();
        pool.shuffle(&mut rng);
        for &i in pool.iter().take(count) {
            r[i] = !from;
        }
    }

    let t_true: Vec<bool> = match &data.t_true {
        Some(tt) => tt.clone(),
        None => data.t.iter().map(|t| t.expect("fully observed")).collect(),
    };
    let mut out = data.clone();
    out.t = t_true
        .iter()
        .zip(&r)
        .map(|(&t, &obs)| obs.then_some(t))
        .collect();
    out.r = r;
    out.t_true = Some(t_true);
    Ok(out)
}
