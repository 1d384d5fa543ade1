//! Representation network with two outcome heads and two adversarial
//! discriminators (treatment and treatment-observedness).

mod model;
mod train;

pub use model::{MTRNetModel, FORMAT_VERSION};
pub use train::{train, train_with, LossRecord, Losses, Regularizer, Trainer};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MTRNetConfig {
    pub rep_layer_size: usize,
    pub hyp_layer_size: usize,
    #[serde(default = "three")]
    pub num_rep_layers: usize,
    #[serde(default = "three")]
    pub num_hyp_layers: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub l2_lambda: f64,
    /// Weight of the treatment discriminator (MMD weight for CFR-MMD).
    #[serde(default)]
    pub alpha: f64,
    /// Weight of the observedness discriminator.
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
}

fn three() -> usize {
    3
}

impl Default for MTRNetConfig {
    fn default() -> Self {
        Self {
            rep_layer_size: 50,
            hyp_layer_size: 50,
            num_rep_layers: 3,
            num_hyp_layers: 3,
            iterations: 1000,
            batch_size: 100,
            learning_rate: 1e-3,
            dropout_rate: 0.0,
            l2_lambda: 1e-4,
            alpha: 1.0,
            beta: 1.0,
            seed: 0,
        }
    }
}

impl MTRNetConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("rep_layer_size", self.rep_layer_size),
            ("hyp_layer_size", self.hyp_layer_size),
            ("num_rep_layers", self.num_rep_layers),
            ("num_hyp_layers", self.num_hyp_layers),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate must lie in [0, 1)"));
        }
        for (name, v) in [("l2_lambda", self.l2_lambda), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a nonnegative number")));
            }
        }
        Ok(())
    }
}

/// Per-row outcome weights over the observed rows of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedWeights {
    /// One weight per row with `r = 1`, in row order.
    pub w: Vec<f64>,
    /// Treated fraction among observed rows.
    pub u: f64,
    pub n_o: usize,
}

/// `w_i = t_i/(2u) + (1 − t_i)/(2(1 − u))` over observed rows, with `u` the
/// observed treated fraction.
pub fn compute_weights(t: &[Option<bool>], r: &[bool]) -> Result<ObservedWeights> {
    if t.len() != r.len() {
        return Err(Error::invalid("t and r lengths differ"));
    }
    let mut observed = Vec::new();
    for (i, (&ti, &ri)) in t.iter().zip(r).enumerate() {
        match (ri, ti) {
            (true, Some(v)) => observed.push(v),
            (true, None) => return Err(Error::invalid(format!("row {i}: r = 1 but t missing"))),
            (false, _) => {}
        }
    }
    let n_o = observed.len();
    let treated = observed.iter().filter(|&&v| v).count();
    if treated == 0 || treated == n_o {
        return Err(Error::DegenerateArm(format!(
            "{treated} treated among {n_o} observed rows"
        )));
    }
    let u = treated as f64 / n_o as f64;
    // 1/(2u) and 1/(2(1 − u)) written over integer counts to avoid rounding in u
    let wt = n_o as f64 / (2 * treated) as f64;
    let wc = n_o as f64 / (2 * (n_o - treated)) as f64;
    Ok(ObservedWeights {
        w: observed.iter().map(|&v| if v { wt } else { wc }).collect(),
        u,
        n_o,
    })
}

/// Mini-batch with per-row weights from a missing-data strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub x: Matrix,
    pub t: Vec<Option<bool>>,
    pub r: Vec<bool>,
    pub y: Vec<f64>,
    pub row_weights: Vec<f64>,
}

impl TrainingBatch {
    pub fn from_rows(data: &Dataset, idx: &[usize], row_weights: Option<&[f64]>) -> Self {
        Self {
            x: data.x.select_rows(idx),
            t: idx.iter().map(|&i| data.t[i]).collect(),
            r: idx.iter().map(|&i| data.r[i]).collect(),
            y: idx.iter().map(|&i| data.y[i]).collect(),
            row_weights: match row_weights {
                Some(w) => idx.iter().map(|&i| w[i]).collect(),
                None => vec![1.0; idx.len()],
            },
        }
    }

    pub fn full(data: &Dataset) -> Self {
        let idx: Vec<usize> = (0..data.n()).collect();
        Self::from_rows(data, &idx, None)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Both arms present among observed rows.
    pub fn has_both_arms(&self) -> bool {
        let mut seen = [false; 2];
        for (&t, &r) in self.t.iter().zip(&self.r) {
            if let (true, Some(v)) = (r, t) {
                seen[v as usize] = true;
            }
        }
        seen[0] && seen[1]
    }
}

const MAX_RESAMPLE: usize = 100;

/// Uniform draw with replacement, redrawn while an observed arm is missing.
pub fn sample_batch<R: Rng + ?Sized>(
    data: &Dataset,
    row_weights: Option<&[f64]>,
    batch_size: usize,
    rng: &mut R,
) -> Result<TrainingBatch> {
    let n = data.n();
    if n == 0 {
        return Err(Error::EmptyData("cannot sample from an empty dataset".into()));
    }
    for _ in 0..MAX_RESAMPLE {
        let idx: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..n)).collect();
        let batch = TrainingBatch::from_rows(data, &idx, row_weights);
        if batch.has_both_arms() {
            return Ok(batch);
        }
    }
    Err(Error::DegenerateArm(format!(
        "no batch of size {batch_size} with both observed arms after {MAX_RESAMPLE} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(t: &[u8]) -> Vec<Option<bool>> {
        t.iter().map(|&v| Some(v == 1)).collect()
    }

    #[test]
    fn balanced_arms_unit_weights() {
        let w = compute_weights(&obs(&[1, 0, 1, 0]), &[true; 4]).unwrap();
        assert_eq!(w.u, 0.5);
        assert_eq!(w.w, vec![1.0; 4]);
    }

    #[test]
    fn three_to_one() {
        let w = compute_weights(&obs(&[1, 1, 1, 0]), &[true; 4]).unwrap();
        assert_eq!(w.u, 0.75);
        assert_eq!(w.w, vec![1.0 / 1.5, 1.0 / 1.5, 1.0 / 1.5, 2.0]);
    }

    #[test]
    fn missing_rows_are_skipped() {
        let t = vec![Some(true), Some(false), Some(true), None];
        let w = compute_weights(&t, &[true, true, true, false]).unwrap();
        assert_eq!(w.n_o, 3);
        assert_eq!(w.u, 2.0 / 3.0);
        assert_eq!(w.w, vec![0.75, 1.5, 0.75]);
    }

    #[test]
    fn single_arm_is_degenerate() {
        assert!(matches!(
            compute_weights(&obs(&[1, 1]), &[true; 2]),
            Err(Error::DegenerateArm(_))
        ));
        assert!(matches!(
            compute_weights(&[Some(true), None], &[true, false]),
            Err(Error::DegenerateArm(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(MTRNetConfig::default().validate().is_ok());
        let bad = MTRNetConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MTRNetConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
