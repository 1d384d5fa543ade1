//! Stateless kernels: activations, masks, normalization and losses.
//!
//! The tape records the same kernels so forward values computed here and
//! through [`Tape`](super::Tape) agree bitwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DenseLayer, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-wise affine map: output row i = weights · input_i + bias.
pub fn dense_forward<T: Scalar>(layer: &DenseLayer<T>, input: &Matrix<T>) -> Result<Matrix<T>> {
    affine(input, &layer.weights, &layer.bias)
}

pub(crate) fn affine<T: Scalar>(input: &Matrix<T>, weights: &Matrix<T>, bias: &[T]) -> Result<Matrix<T>> {
    if input.cols() != weights.cols() {
        return Err(Error::invalid(format!(
            "dense input has {} features, layer expects {}",
            input.cols(),
            weights.cols()
        )));
    }
    if bias.len() != weights.rows() {
        return Err(Error::invalid(format!(
            "bias length {} does not match {} outputs",
            bias.len(),
            weights.rows()
        )));
    }
    let (n, out) = (input.rows(), weights.rows());
    let mut result = Matrix::zeros(n, out);
    for i in 0..n {
        let x = input.row(i);
        let o = result.row_mut(i);
        for (k, ok) in o.iter_mut().enumerate() {
            let w = weights.row(k);
            let mut acc = bias[k];
            for (&wj, &xj) in w.iter().zip(x) {
                acc += wj * xj;
            }
            *ok = acc;
        }
    }
    Ok(result)
}

#[inline]
pub fn elu_scalar<T: Scalar>(x: T, alpha: T) -> T {
    if x > T::zero() {
        x
    } else {
        alpha * x.exp_m1()
    }
}

#[inline]
pub(crate) fn elu_derivative<T: Scalar>(x: T, alpha: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        alpha * x.exp()
    }
}

/// Exponential linear unit, elementwise.
pub fn elu<T: Scalar>(x: &Matrix<T>, alpha: T) -> Matrix<T> {
    x.map(|v| elu_scalar(v, alpha))
}

/// Inverted-dropout mask: entries are `0` or `1/(1-rate)`.
pub fn dropout_mask<T: Scalar>(shape: (usize, usize), rate: f64, seed: u64) -> Result<Matrix<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_mask_with_rng(shape, rate, &mut rng)
}

pub fn dropout_mask_with_rng<T: Scalar, R: Rng + ?Sized>(
    (rows, cols): (usize, usize),
    rate: f64,
    rng: &mut R,
) -> Result<Matrix<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if rate == 0.0 {
        return Ok(Matrix::filled(rows, cols, T::one()));
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let values = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    Matrix::new(rows, cols, values)
}

/// Euclidean norm of every row.
pub(crate) fn row_norms<T: Scalar>(x: &Matrix<T>) -> Vec<T> {
    x.iter_rows()
        .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect()
}

/// Projects every row onto the unit sphere; rows shorter than `eps` are
/// divided by `eps` instead.
pub fn unit_normalize_rows<T: Scalar>(x: &Matrix<T>, eps: T) -> Matrix<T> {
    let norms = row_norms(x);
    normalize_with(x, &norms, eps)
}

pub(crate) fn normalize_with<T: Scalar>(x: &Matrix<T>, norms: &[T], eps: T) -> Matrix<T> {
    let mut out = x.clone();
    for (i, &n) in norms.iter().enumerate() {
        let d = if n < eps { eps } else { n };
        for v in out.row_mut(i) {
            *v = *v / d;
        }
    }
    out
}

/// Mean squared error.
pub fn squared_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    if pred.len() != target.len() {
        return Err(Error::invalid(format!(
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("squared loss of empty vectors"));
    }
    let sum: T = pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum();
    Ok(sum / T::lit(pred.len() as f64))
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + exp(z))` without overflow.
#[inline]
pub(crate) fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Per-row binary cross-entropy from a logit.
#[inline]
pub(crate) fn bce_term<T: Scalar>(logit: T, label: T) -> T {
    softplus(logit) - logit * label
}

pub(crate) fn check_binary<T: Scalar>(labels: &[T]) -> Result<()> {
    match labels.iter().position(|&l| l != T::zero() && l != T::one()) {
        Some(i) => Err(Error::invalid(format!("label at index {i} is not 0 or 1"))),
        None => Ok(()),
    }
}

/// Mean binary cross-entropy computed from logits.
pub fn bce_loss<T: Scalar>(logit: &[T], label: &[T]) -> Result<T> {
    if logit.len() != label.len() {
        return Err(Error::invalid(format!(
            "logit length {} vs label length {}",
            logit.len(),
            label.len()
        )));
    }
    if logit.is_empty() {
        return Err(Error::invalid("bce loss of empty vectors"));
    }
    check_binary(label)?;
    let sum: T = logit.iter().zip(label).map(|(&z, &y)| bce_term(z, y)).sum();
    Ok(sum / T::lit(logit.len() as f64))
}
