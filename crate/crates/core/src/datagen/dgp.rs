use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{default_names, Dataset};
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::Matrix;

/// Conditional mean of a potential outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeFn {
    /// `intercept + coef·x`
    Linear { intercept: f64, coef: Vec<f64> },
    /// `intercept + coef·x + Σ quad_j x_j²`
    Quadratic {
        intercept: f64,
        coef: Vec<f64>,
        quad: Vec<f64>,
    },
    /// `intercept + coef·x + Σ step_j [x_j > threshold_j]`
    Piecewise {
        intercept: f64,
        coef: Vec<f64>,
        threshold: Vec<f64>,
        step: Vec<f64>,
    },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl OutcomeFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            OutcomeFn::Linear { intercept, coef } => intercept + dot(coef, x),
            OutcomeFn::Quadratic { intercept, coef, quad } => {
                intercept + dot(coef, x) + quad.iter().zip(x).map(|(q, v)| q * v * v).sum::<f64>()
            }
            OutcomeFn::Piecewise {
                intercept,
                coef,
                threshold,
                step,
            } => {
                let jumps: f64 = threshold
                    .iter()
                    .zip(step)
                    .zip(x)
                    .map(|((&c, &s), &v)| if v > c { s } else { 0.0 })
                    .sum();
                intercept + dot(coef, x) + jumps
            }
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        let lens: Vec<usize> = match self {
            OutcomeFn::Linear { coef, .. } => vec![coef.len()],
            OutcomeFn::Quadratic { coef, quad, .. } => vec![coef.len(), quad.len()],
            OutcomeFn::Piecewise {
                coef, threshold, step, ..
            } => vec![coef.len(), threshold.len(), step.len()],
        };
        if lens.iter().any(|&l| l != d) {
            return Err(Error::invalid(format!(
                "outcome function coefficient lengths {lens:?} do not match d = {d}"
            )));
        }
        Ok(())
    }
}

/// Semi-synthetic data-generating process with known potential outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDgpSpec {
    pub n: usize,
    pub d: usize,
    /// Optional `d × d` mixing matrix applied to standard-normal draws.
    #[serde(default)]
    pub mixing: Option<Vec<Vec<f64>>>,
    /// Propensity coefficients: `p(T=1|x) = sigmoid(propensity·x + propensity_intercept)`.
    pub propensity: Vec<f64>,
    #[serde(default)]
    pub propensity_intercept: f64,
    pub mu0: OutcomeFn,
    pub mu1: OutcomeFn,
    pub noise_sd: f64,
    /// Randomized assignment with probability 0.5; every row is flagged `e = 1`.
    #[serde(default)]
    pub rct: bool,
    pub seed: u64,
}

impl SyntheticDgpSpec {
    /// Linear outcomes, linear propensity.
    pub fn linear(n: usize, d: usize, noise_sd: f64, seed: u64) -> Self {
        let coef0: Vec<f64> = (0..d).map(|j| 0.5 + 0.25 * j as f64).collect();
        let coef1: Vec<f64> = (0..d).map(|j| if j % 2 == 0 { 1.0 } else { -0.5 }).collect();
        Self {
            n,
            d,
            mixing: None,
            propensity: (0..d).map(|j| if j % 2 == 0 { 0.4 } else { -0.2 }).collect(),
            propensity_intercept: 0.0,
            mu0: OutcomeFn::Linear {
                intercept: 1.0,
                coef: coef0,
            },
            mu1: OutcomeFn::Linear {
                intercept: 3.0,
                coef: coef1,
            },
            noise_sd,
            rct: false,
            seed,
        }
    }

    /// Nonlinear surfaces, strong confounding through the same covariates
    /// that drive missingness, used for the relative-ordering experiments.
    pub fn shifted(n: usize, d: usize, seed: u64) -> Self {
        let coef0: Vec<f64> = (0..d).map(|j| if j < d / 2 { 0.6 } else { 0.1 }).collect();
        let coef1: Vec<f64> = (0..d).map(|j| if j < d / 2 { 0.9 } else { -0.2 }).collect();
        let quad: Vec<f64> = (0..d).map(|j| if j < 3 { 0.5 } else { 0.0 }).collect();
        let threshold = vec![0.5; d];
        let step: Vec<f64> = (0..d).map(|j| if j < 3 { 1.0 } else { 0.0 }).collect();
        Self {
            n,
            d,
            mixing: None,
            propensity: (0..d).map(|j| if j < d / 2 { 0.8 } else { 0.0 }).collect(),
            propensity_intercept: 0.0,
            mu0: OutcomeFn::Linear {
                intercept: 1.0,
                coef: coef0,
            },
            mu1: OutcomeFn::Quadratic {
                intercept: 2.0,
                coef: coef1,
                quad,
            },
            noise_sd: 1.0,
            rct: false,
            seed,
        }
        .with_piecewise_control(threshold, step)
    }

    fn with_piecewise_control(mut self, threshold: Vec<f64>, step: Vec<f64>) -> Self {
        if let OutcomeFn::Linear { intercept, coef } = self.mu0.clone() {
            self.mu0 = OutcomeFn::Piecewise {
                intercept,
                coef,
                threshold,
                step,
            };
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::invalid("n and d must be at least 1"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::invalid("noise_sd must be nonnegative"));
        }
        if self.propensity.len() != self.d {
            return Err(Error::invalid("propensity length must equal d"));
        }
        if let Some(mx) = &self.mixing {
            if mx.len() != self.d || mx.iter().any(|r| r.len() != self.d) {
                return Err(Error::invalid("mixing matrix must be d x d"));
            }
        }
        self.mu0.check(self.d)?;
        self.mu1.check(self.d)
    }
}

/// Draws a fully observed dataset with potential outcomes and noiseless CATE.
pub fn generate(spec: &SyntheticDgpSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut xs = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        match &spec.mixing {
            Some(mx) => xs.extend(mx.iter().map(|row| dot(row, &z))),
            None => xs.extend_from_slice(&z),
        }
    }
    let x = Matrix::new(n, d, xs)?;

    let mut t = Vec::with_capacity(n);
    let (mut y, mut y0, mut y1, mut tau) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for i in 0..n {
        let xi = x.row(i);
        let p = if spec.rct {
            0.5
        } else {
            sigmoid(dot(&spec.propensity, xi) + spec.propensity_intercept)
        };
        let ti = rng.random::<f64>() < p;
        let (m0, m1) = (spec.mu0.eval(xi), spec.mu1.eval(xi));
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let (v0, v1) = (m0 + spec.noise_sd * e0, m1 + spec.noise_sd * e1);
        t.push(ti);
        y0.push(v0);
        y1.push(v1);
        y.push(if ti { v1 } else { v0 });
        tau.push(m1 - m0);
    }

    let data = Dataset {
        x,
        t: t.iter().map(|&v| Some(v)).collect(),
        r: vec![true; n],
        y,
        y0: Some(y0),
        y1: Some(y1),
        tau: Some(tau),
        e: spec.rct.then(|| vec![true; n]),
        t_true: Some(t),
        names: default_names(d),
    };
    data.validate()?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_linear_outcomes_are_exact() {
        let spec = SyntheticDgpSpec::linear(200, 4, 0.0, 1);
        let data = generate(&spec).unwrap();
        for i in 0..data.n() {
            let xi = data.x.row(i);
            let expected = if data.t[i].unwrap() {
                spec.mu1.eval(xi)
            } else {
                spec.mu0.eval(xi)
            };
            assert_eq!(data.y[i], expected);
        }
    }

    #[test]
    fn zero_propensity_gives_half_treated() {
        let mut spec = SyntheticDgpSpec::linear(10_000, 3, 1.0, 7);
        spec.propensity = vec![0.0; 3];
        let data = generate(&spec).unwrap();
        let frac = data.t.iter().filter(|t| t.unwrap()).count() as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.03, "treated fraction {frac}");
    }

    #[test]
    fn equal_surfaces_give_zero_effect() {
        let mut spec = SyntheticDgpSpec::shifted(300, 5, 3);
        spec.mu1 = spec.mu0.clone();
        let data = generate(&spec).unwrap();
        assert!(data.tau.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_per_seed_and_rct_flag() {
        let mut spec = SyntheticDgpSpec::shifted(50, 4, 9);
        spec.rct = true;
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        assert_eq!(a.e.as_ref().unwrap().len(), 50);
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = SyntheticDgpSpec::shifted(10, 4, 2);
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SyntheticDgpSpec>(&s).unwrap(), spec);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = SyntheticDgpSpec::linear(10, 3, 0.0, 0);
        spec.propensity.pop();
        assert!(generate(&spec).is_err());
        let mut spec = SyntheticDgpSpec::linear(10, 3, 0.0, 0);
        spec.noise_sd = -1.0;
        assert!(generate(&spec).is_err());
    }
}
