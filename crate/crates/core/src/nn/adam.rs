use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Moment accumulators for one parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdamState<T> {
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    pub step: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed state for parameters of the given flat lengths, with
    /// β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(shapes: &[usize]) -> Self {
        Self::with_hyper(shapes, T::lit(0.9), T::lit(0.999), T::lit(1e-8))
    }

    pub fn with_hyper(shapes: &[usize], beta1: T, beta2: T, eps: T) -> Self {
        Self {
            first: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }
}

/// Bias-corrected Adam update applied in place.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::invalid(format!(
            "adam: {} parameter blocks, {} gradient blocks, {} state blocks",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first[i].len() {
            return Err(Error::invalid(format!(
                "adam: block {i} has {} params, {} grads, {} state entries",
                p.len(),
                g.len(),
                state.first[i].len()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + (T::one() - b1) * gj;
            v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let g = vec![0.0; 3];
        let mut st = AdamState::new(&[3]);
        adam_step(&mut [&mut p[..]], &[&g[..]], &mut st, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        let mut p: Vec<f64> = vec![0.0, 0.0, 0.0];
        let g: Vec<f64> = vec![3.0, -0.01, 250.0];
        let mut st = AdamState::new(&[3]);
        let lr: f64 = 0.01;
        adam_step(&mut [&mut p[..]], &[&g[..]], &mut st, lr).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            assert!((pi + lr * gi.signum()).abs() < 1e-7 * lr.max(1.0), "{pi} vs {gi}");
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![0.0; 2];
        let g = vec![0.0; 3];
        let mut st = AdamState::new(&[2]);
        assert!(adam_step(&mut [&mut p[..]], &[&g[..]], &mut st, 0.1).is_err());
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut p = vec![0.5, -0.25];
            let mut st = AdamState::new(&[2]);
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| 2.0 * x + (k as f64).sin()).collect();
                adam_step(&mut [&mut p[..]], &[&g[..]], &mut st, 0.05).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}
