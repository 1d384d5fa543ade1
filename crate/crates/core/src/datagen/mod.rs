//! Datasets with partially missing treatments: semi-synthetic generation,
//! the covariate-dependent missingness mechanism, splitting, and CSV I/O.

mod csv_io;
mod dgp;
mod missingness;
mod split;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv};
pub use dgp::{generate, OutcomeFn, SyntheticDgpSpec};
pub use missingness::{
    above_mean_count, apply_missingness, column_means, missingness_probability,
    missingness_probability_from_count, MissingnessSpec,
};
pub use split::{split, split_indices, DEFAULT_FRACTIONS};

use crate::error::{Error, Result};
use crate::Matrix;

/// Rows of covariates, a possibly missing binary treatment, its observedness
/// flag, the factual outcome, and optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    /// Treatment, `None` exactly where `r` is false.
    pub t: Vec<Option<bool>>,
    pub r: Vec<bool>,
    pub y: Vec<f64>,
    pub y0: Option<Vec<f64>>,
    pub y1: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    /// Randomized-subset flag.
    pub e: Option<Vec<bool>>,
    /// Treatment before masking; kept for evaluation only.
    pub t_true: Option<Vec<bool>>,
    pub names: Vec<String>,
}

pub(crate) fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

impl Dataset {
    /// Fully observed dataset from covariates, treatments and outcomes.
    pub fn new(x: Matrix, t: Vec<bool>, y: Vec<f64>) -> Result<Self> {
        let n = x.rows();
        let d = x.cols();
        let data = Self {
            x,
            r: vec![true; t.len()],
            t: t.iter().map(|&v| Some(v)).collect(),
            y,
            y0: None,
            y1: None,
            tau: None,
            e: None,
            t_true: None,
            names: default_names(d),
        };
        if data.t.len() != n {
            return Err(Error::invalid("treatment length differs from row count"));
        }
        data.validate()?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let check_len = |name: &str, len: usize| {
            if len != n {
                Err(Error::invalid(format!("column {name} has {len} rows, expected {n}")))
            } else {
                Ok(())
            }
        };
        check_len("t", self.t.len())?;
        check_len("r", self.r.len())?;
        check_len("y", self.y.len())?;
        for (name, col) in [("y0", &self.y0), ("y1", &self.y1), ("tau", &self.tau)] {
            if let Some(c) = col {
                check_len(name, c.len())?;
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("column {name} has non-finite values")));
                }
            }
        }
        if let Some(e) = &self.e {
            check_len("e", e.len())?;
        }
        if let Some(tt) = &self.t_true {
            check_len("t_true", tt.len())?;
        }
        if self.names.len() != self.d() {
            return Err(Error::invalid("covariate names do not match column count"));
        }
        if !self.x.is_finite() || self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite covariate or outcome"));
        }
        for i in 0..n {
            if self.t[i].is_some() != self.r[i] {
                return Err(Error::invalid(format!(
                    "row {i}: treatment must be present exactly when r = 1"
                )));
            }
        }
        if let (Some(y0), Some(y1)) = (&self.y0, &self.y1) {
            for i in 0..n {
                if let Some(t) = self.true_treatment(i) {
                    let yt = if t { y1[i] } else { y0[i] };
                    if yt != self.y[i] {
                        return Err(Error::invalid(format!(
                            "row {i}: factual outcome differs from the potential outcome of its treatment"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Known treatment for row `i`: the observed one, else the retained truth.
    pub fn true_treatment(&self, i: usize) -> Option<bool> {
        self.t[i].or_else(|| self.t_true.as_ref().map(|tt| tt[i]))
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.r[i]).collect()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.r[i]).collect()
    }

    pub fn num_observed(&self) -> usize {
        self.r.iter().filter(|&&r| r).count()
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_b = |v: &Vec<bool>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            x: self.x.select_rows(idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            r: pick_b(&self.r),
            y: pick(&self.y),
            y0: self.y0.as_ref().map(pick),
            y1: self.y1.as_ref().map(pick),
            tau: self.tau.as_ref().map(pick),
            e: self.e.as_ref().map(pick_b),
            t_true: self.t_true.as_ref().map(pick_b),
            names: self.names.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.d() != other.d() {
            return Err(Error::invalid("cannot concatenate datasets of different width"));
        }
        fn join<T: Clone>(a: &Option<Vec<T>>, b: &Option<Vec<T>>) -> Option<Vec<T>> {
            match (a, b) {
                (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
                _ => None,
            }
        }
        let mut values = self.x.as_slice().to_vec();
        values.extend_from_slice(other.x.as_slice());
        Ok(Self {
            x: Matrix::new(self.n() + other.n(), self.d(), values)?,
            t: self.t.iter().chain(&other.t).copied().collect(),
            r: self.r.iter().chain(&other.r).copied().collect(),
            y: self.y.iter().chain(&other.y).copied().collect(),
            y0: join(&self.y0, &other.y0),
            y1: join(&self.y1, &other.y1),
            tau: join(&self.tau, &other.tau),
            e: join(&self.e, &other.e),
            t_true: join(&self.t_true, &other.t_true),
            names: self.names.clone(),
        })
    }

    /// Stable fingerprint of row `i` (covariates and factual outcome).
    pub fn row_fingerprint(&self, i: usize) -> u64 {
        let mut h = crate::harness::seeds::Fnv1a::default();
        for v in self.x.row(i) {
            h.write(&v.to_bits().to_le_bytes());
        }
        h.write(&self.y[i].to_bits().to_le_bytes());
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let x = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]).unwrap();
        Dataset::new(x, vec![true, false, true], vec![1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn validate_catches_missing_treatment_mismatch() {
        let mut d = tiny();
        d.t[1] = None;
        assert!(d.validate().is_err());
        d.r[1] = false;
        assert!(d.validate().is_ok());
    }

    #[test]
    fn validate_checks_consistency_with_potential_outcomes() {
        let mut d = tiny();
        d.y0 = Some(vec![0.0, 2.0, 0.0]);
        d.y1 = Some(vec![1.0, 0.0, 3.0]);
        assert!(d.validate().is_ok());
        d.y[0] = 1.5;
        assert!(d.validate().is_err());
    }

    #[test]
    fn subset_and_concat() {
        let d = tiny();
        let a = d.subset(&[2, 0]);
        assert_eq!(a.y, vec![3.0, 1.0]);
        assert_eq!(a.x.row(0), &[4.0, 5.0]);
        let b = a.concat(&d.subset(&[1])).unwrap();
        assert_eq!(b.n(), 3);
        assert_eq!(b.t, vec![Some(true), Some(true), Some(false)]);
    }
}
