use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::Matrix;

const RIDGE: f64 = 1e-8;
/// Cholesky pivots below this fraction of the largest diagonal entry mean
/// the design is singular even after the ridge.
const PIVOT_TOL: f64 = 1e-10;

/// Intercept followed by one coefficient per covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearFit {
    pub fn eval(&self, row: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(row).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Weighted least squares fitted separately on each treatment arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub arm0: LinearFit,
    pub arm1: LinearFit,
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `k × k`).
fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>, k: usize, arm: u8) -> Result<Vec<f64>> {
    let max_diag = (0..k).map(|i| a[i * k + i]).fold(0.0, f64::max);
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !(d > PIVOT_TOL * max_diag) {
            return Err(Error::SingularDesign { arm });
        }
        let l = d.sqrt();
        a[j * k + j] = l;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / l;
        }
    }
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= a[i * k + p] * b[p];
        }
        b[i] = s / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = b[i];
        for p in i + 1..k {
            s -= a[p * k + i] * b[p];
        }
        b[i] = s / a[i * k + i];
    }
    Ok(b)
}

fn fit_arm(x: &Matrix, y: &[f64], w: &[f64], rows: &[usize], arm: u8) -> Result<LinearFit> {
    let d = x.cols();
    let k = d + 1;
    let effective = rows.iter().filter(|&&i| w[i] > 0.0).count();
    if effective < k {
        return Err(Error::SingularDesign { arm });
    }
    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    let mut z = vec![1.0; k];
    for &i in rows {
        z[1..].copy_from_slice(x.row(i));
        let wi = w[i];
        for a in 0..k {
            xty[a] += wi * z[a] * y[i];
            for b in 0..=a {
                xtx[a * k + b] += wi * z[a] * z[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[b * k + a] = xtx[a * k + b];
        }
        xtx[a * k + a] += RIDGE;
    }
    let beta = cholesky_solve(xtx, xty, k, arm)?;
    Ok(LinearFit {
        intercept: beta[0],
        coef: beta[1..].to_vec(),
    })
}

/// Fits both arms of a dataset whose treatments are all known.
pub fn ols_fit(data: &Dataset, weights: &[f64]) -> Result<OlsModel> {
    if weights.len() != data.n() {
        return Err(Error::invalid("weight count differs from row count"));
    }
    let mut arms: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for i in 0..data.n() {
        match data.t[i] {
            Some(t) => arms[t as usize].push(i),
            None => return Err(Error::invalid(format!("row {i}: OLS needs a known treatment"))),
        }
    }
    Ok(OlsModel {
        arm0: fit_arm(&data.x, &data.y, weights, &arms[0], 0)?,
        arm1: fit_arm(&data.x, &data.y, weights, &arms[1], 1)?,
    })
}

impl OlsModel {
    pub fn predict_outcome(&self, x: &Matrix, t: bool) -> Result<Vec<f64>> {
        let fit = if t { &self.arm1 } else { &self.arm0 };
        if x.cols() != fit.coef.len() {
            return Err(Error::invalid(format!(
                "OLS model expects {} covariates, got {}",
                fit.coef.len(),
                x.cols()
            )));
        }
        Ok(x.iter_rows().map(|r| fit.eval(r)).collect())
    }

    pub fn predict_cate(&self, x: &Matrix) -> Result<Vec<f64>> {
        let y1 = self.predict_outcome(x, true)?;
        let y0 = self.predict_outcome(x, false)?;
        Ok(y1.iter().zip(&y0).map(|(a, b)| a - b).collect())
    }
}
