use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            learning_rate: 0.5,
            l2: 1e-4,
            p_min: 0.01,
            p_max: 0.99,
        }
    }
}

/// Logistic regression on standardized covariates, fit by full-batch
/// gradient descent on the mean cross-entropy. Predictions are clamped to
/// `[p_min, p_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticClassifier {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub p_min: f64,
    pub p_max: f64,
}

/// Estimate of `p(R = 1 | x)`.
pub type ObservednessModel = LogisticClassifier;

impl LogisticClassifier {
    pub fn fit(x: &Matrix, labels: &[bool], cfg: &ClassifierConfig) -> Result<Self> {
        let (n, d) = x.shape();
        if labels.len() != n {
            return Err(Error::invalid("label count differs from row count"));
        }
        if !(0.0 < cfg.p_min && cfg.p_min <= cfg.p_max && cfg.p_max < 1.0) {
            return Err(Error::invalid("clamp bounds must satisfy 0 < p_min <= p_max < 1"));
        }
        let positives = labels.iter().filter(|&&l| l).count();
        if positives == 0 || positives == n {
            return Err(Error::DegenerateLabels(format!("{positives} positives among {n} rows")));
        }
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for j in 0..d {
            let col = x.col_values(j);
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean[j] = m;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let z: Vec<Vec<f64>> = x
            .iter_rows()
            .map(|row| row.iter().enumerate().map(|(j, v)| (v - mean[j]) / scale[j]).collect())
            .collect();
        let y: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();

        let mut coef = vec![0.0; d];
        let mut intercept = (positives as f64 / (n - positives) as f64).ln();
        let mut grad = vec![0.0; d];
        for _ in 0..cfg.iterations {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut g0 = 0.0;
            for (zi, &yi) in z.iter().zip(&y) {
                let logit = intercept + zi.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
                let err = sigmoid(logit) - yi;
                g0 += err;
                for (g, &v) in grad.iter_mut().zip(zi) {
                    *g += err * v;
                }
            }
            intercept -= cfg.learning_rate * g0 / n as f64;
            for (c, g) in coef.iter_mut().zip(&grad) {
                *c -= cfg.learning_rate * (g / n as f64 + cfg.l2 * *c);
            }
        }
        Ok(Self {
            mean,
            scale,
            coef,
            intercept,
            p_min: cfg.p_min,
            p_max: cfg.p_max,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let logit = self.intercept
            + row
                .iter()
                .enumerate()
                .map(|(j, v)| self.coef[j] * (v - self.mean[j]) / self.scale[j])
                .sum::<f64>();
        sigmoid(logit).clamp(self.p_min, self.p_max)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.coef.len() {
            return Err(Error::invalid(format!(
                "classifier expects {} covariates, got {}",
                self.coef.len(),
                x.cols()
            )));
        }
        Ok(x.iter_rows().map(|r| self.predict_row(r)).collect())
    }
}

/// Classifier for `p(R = 1 | x)` on all rows.
pub fn fit_observedness(data: &Dataset, cfg: &ClassifierConfig) -> Result<ObservednessModel> {
    LogisticClassifier::fit(&data.x, &data.r, cfg)
}

/// Classifier for `p(T = 1 | x, R = 1)` on the observed rows.
pub fn fit_treatment(data: &Dataset, cfg: &ClassifierConfig) -> Result<LogisticClassifier> {
    let obs = data.observed_indices();
    if obs.is_empty() {
        return Err(Error::EmptyData("no rows with observed treatment".into()));
    }
    let x = data.x.select_rows(&obs);
    let t: Vec<bool> = obs.iter().map(|&i| data.t[i].expect("observed")).collect();
    LogisticClassifier::fit(&x, &t, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_matrix(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::new(n, d, (0..n * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    /// Fraction of (positive, negative) pairs ranked correctly, ties count half.
    fn auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn uninformative_covariates_predict_base_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = normal_matrix(2000, 3, &mut rng);
        let r: Vec<bool> = (0..2000).map(|_| rng.random_bool(0.7)).collect();
        let rate = r.iter().filter(|&&v| v).count() as f64 / 2000.0;
        let model = LogisticClassifier::fit(&x, &r, &ClassifierConfig::default()).unwrap();
        for p in model.predict(&x).unwrap() {
            assert!((p - rate).abs() < 0.1, "{p} vs {rate}");
        }
    }

    #[test]
    fn separable_data_ranks_well_and_clamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = normal_matrix(400, 2, &mut rng);
        let r: Vec<bool> = x.iter_rows().map(|row| row[0] > 0.0).collect();
        let model = LogisticClassifier::fit(&x, &r, &ClassifierConfig::default()).unwrap();
        let p = model.predict(&x).unwrap();
        assert!(auc(&p, &r) > 0.95);
        assert!(p.iter().all(|&v| (0.01..=0.99).contains(&v)));
        assert!(p.iter().any(|&v| v == 0.99 || v == 0.01));
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Matrix::zeros(5, 2);
        assert!(matches!(
            LogisticClassifier::fit(&x, &[true; 5], &ClassifierConfig::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }
}
