//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] is built fresh for every forward pass. Each recorded node
//! keeps its forward value plus whatever it needs to push gradients back to
//! its inputs. [`Tape::backward`] walks the nodes in reverse insertion order,
//! which is a valid topological order because a node can only reference
//! nodes recorded before it.

use super::ops::{self, bce_term, check_binary, elu_derivative, elu_scalar, sigmoid};
use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    /// `input · weightsᵀ + bias` with bias stored as a `1 × out` node.
    Dense { input: Var, weights: Var, bias: Var },
    Elu { input: Var, alpha: T },
    Mask { input: Var, mask: Matrix<T> },
    UnitNormRows { input: Var, norms: Vec<T>, eps: T },
    /// Identity forward; backward multiplies by `-scale`.
    GradReverse { input: Var, scale: T },
    /// `Σ_i weight_i (pred_i − target_i)² / denom` over a single-column input.
    WeightedSquared { pred: Var, target: Vec<T>, weights: Vec<T>, denom: T },
    /// `Σ_i weight_i bce(logit_i, label_i) / denom` over a single-column input.
    WeightedBce { logit: Var, labels: Vec<T>, weights: Vec<T>, denom: T },
    Sum { input: Var },
    SumSquares { input: Var },
    Scale { input: Var, factor: T },
    Add { a: Var, b: Var },
    /// Biased squared MMD with an RBF kernel between two row subsets.
    MmdRbf { input: Var, set_a: Vec<usize>, set_b: Vec<usize>, bandwidth: T },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Recorded computation graph.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar loss with respect to every node on the tape.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `var`; zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Matrix<T> {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Matrix::zeros(r, c)
            }
        }
    }

    /// Gradient if any flowed to `var`.
    pub fn get(&self, var: Var) -> Option<&Matrix<T>> {
        self.grads[var.0].as_ref()
    }
}

fn mmd_kernel<T: Scalar>(a: &[T], b: &[T], inv_two_bw2: T) -> T {
    let d2: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    (-d2 * inv_two_bw2).exp()
}

/// Forward value of the biased squared-MMD estimate between two row subsets.
pub(crate) fn mmd_value<T: Scalar>(z: &Matrix<T>, set_a: &[usize], set_b: &[usize], bandwidth: T) -> T {
    let inv = T::one() / (T::lit(2.0) * bandwidth * bandwidth);
    let mean_within = |set: &[usize]| {
        let mut acc = T::zero();
        for &i in set {
            for &j in set {
                acc += mmd_kernel(z.row(i), z.row(j), inv);
            }
        }
        acc / T::lit((set.len() * set.len()) as f64)
    };
    let mut cross = T::zero();
    for &i in set_a {
        for &j in set_b {
            cross += mmd_kernel(z.row(i), z.row(j), inv);
        }
    }
    cross /= T::lit((set_a.len() * set_b.len()) as f64);
    mean_within(set_a) + mean_within(set_b) - T::lit(2.0) * cross
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.as_slice()[0]
    }

    /// Parameter or input.
    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let b = self.value(bias);
        if b.rows() != 1 {
            return Err(Error::invalid("bias node must be a single row"));
        }
        let out = ops::affine(self.value(input), self.value(weights), b.as_slice())?;
        Ok(self.push(out, Op::Dense { input, weights, bias }))
    }

    pub fn elu(&mut self, input: Var, alpha: T) -> Var {
        let out = self.value(input).map(|v| elu_scalar(v, alpha));
        self.push(out, Op::Elu { input, alpha })
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, input: Var, mask: Matrix<T>) -> Result<Var> {
        let x = self.value(input);
        if x.shape() != mask.shape() {
            return Err(Error::invalid(format!(
                "mask shape {:?} vs input {:?}",
                mask.shape(),
                x.shape()
            )));
        }
        let mut out = x.clone();
        for (o, &m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *o *= m;
        }
        Ok(self.push(out, Op::Mask { input, mask }))
    }

    pub fn unit_normalize_rows(&mut self, input: Var, eps: T) -> Var {
        let x = self.value(input);
        let norms = ops::row_norms(x);
        let out = ops::normalize_with(x, &norms, eps);
        self.push(out, Op::UnitNormRows { input, norms, eps })
    }

    /// Identity on the forward pass; gradients are multiplied by `-scale`.
    pub fn grad_reverse(&mut self, input: Var, scale: T) -> Var {
        let out = self.value(input).clone();
        self.push(out, Op::GradReverse { input, scale })
    }

    pub fn weighted_squared_loss(&mut self, pred: Var, target: Vec<T>, weights: Vec<T>, denom: T) -> Result<Var> {
        let p = self.value(pred);
        if p.cols() != 1 || p.rows() != target.len() || p.rows() != weights.len() {
            return Err(Error::invalid(format!(
                "squared loss over {:?} with {} targets and {} weights",
                p.shape(),
                target.len(),
                weights.len()
            )));
        }
        let mut acc = T::zero();
        for ((&pi, &ti), &wi) in p.as_slice().iter().zip(&target).zip(&weights) {
            if wi != T::zero() {
                acc += wi * (pi - ti) * (pi - ti);
            }
        }
        let out = Matrix::filled(1, 1, acc / denom);
        Ok(self.push(out, Op::WeightedSquared { pred, target, weights, denom }))
    }

    pub fn weighted_bce_loss(&mut self, logit: Var, labels: Vec<T>, weights: Vec<T>, denom: T) -> Result<Var> {
        let z = self.value(logit);
        if z.cols() != 1 || z.rows() != labels.len() || z.rows() != weights.len() {
            return Err(Error::invalid(format!(
                "bce loss over {:?} with {} labels and {} weights",
                z.shape(),
                labels.len(),
                weights.len()
            )));
        }
        check_binary(&labels)?;
        let mut acc = T::zero();
        for ((&zi, &yi), &wi) in z.as_slice().iter().zip(&labels).zip(&weights) {
            if wi != T::zero() {
                acc += wi * bce_term(zi, yi);
            }
        }
        let out = Matrix::filled(1, 1, acc / denom);
        Ok(self.push(out, Op::WeightedBce { logit, labels, weights, denom }))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum { input })
    }

    pub fn sum_squares(&mut self, input: Var) -> Var {
        let s: T = self.value(input).as_slice().iter().map(|&v| v * v).sum();
        self.push(Matrix::filled(1, 1, s), Op::SumSquares { input })
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let out = self.value(input).scaled(factor);
        self.push(out, Op::Scale { input, factor })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b))?;
        Ok(self.push(out, Op::Add { a, b }))
    }

    /// Squared MMD (biased V-statistic, RBF kernel) between the rows
    /// `set_a` and `set_b` of `input`.
    pub fn mmd_rbf(&mut self, input: Var, set_a: Vec<usize>, set_b: Vec<usize>, bandwidth: T) -> Result<Var> {
        if set_a.is_empty() || set_b.is_empty() {
            return Err(Error::invalid("mmd needs two nonempty row sets"));
        }
        if bandwidth <= T::zero() {
            return Err(Error::invalid("mmd bandwidth must be positive"));
        }
        let z = self.value(input);
        if let Some(&bad) = set_a.iter().chain(&set_b).find(|&&i| i >= z.rows()) {
            return Err(Error::invalid(format!("mmd row index {bad} out of range")));
        }
        let v = mmd_value(z, &set_a, &set_b, bandwidth);
        Ok(self.push(Matrix::filled(1, 1, v), Op::MmdRbf { input, set_a, set_b, bandwidth }))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::invalid(format!("backward needs a scalar loss, got {shape:?}")));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, T::one()));

        fn accumulate<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, x) in existing.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *e += *x;
                    }
                }
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let g_kept = g.clone();
            match &node.op {
                Op::Leaf => {}
                Op::Dense { input, weights, bias } => {
                    let x = self.value(*input);
                    let w = self.value(*weights);
                    // dX = G·W, dW = Gᵀ·X, db = Σ_rows G
                    let dx = g.matmul(w)?;
                    let dw = g.transpose().matmul(x)?;
                    let mut db = Matrix::zeros(1, g.cols());
                    for row in g.iter_rows() {
                        for (d, &v) in db.as_mut_slice().iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                    accumulate(&mut grads, *weights, dw);
                    accumulate(&mut grads, *bias, db);
                }
                Op::Elu { input, alpha } => {
                    let x = self.value(*input);
                    let mut dx = g;
                    for (d, &xv) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        *d *= elu_derivative(xv, *alpha);
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::Mask { input, mask } => {
                    let mut dx = g;
                    for (d, &m) in dx.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                        *d *= m;
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::UnitNormRows { input, norms, eps } => {
                    let y = &node.value;
                    let mut dx = g;
                    for (i, &nrm) in norms.iter().enumerate() {
                        let yi = y.row(i);
                        let gi = dx.row_mut(i);
                        if nrm < *eps {
                            for v in gi.iter_mut() {
                                *v = *v / *eps;
                            }
                        } else {
                            // (I − y yᵀ) g / ‖x‖
                            let dot: T = yi.iter().zip(gi.iter()).map(|(&a, &b)| a * b).sum();
                            for (v, &yv) in gi.iter_mut().zip(yi) {
                                *v = (*v - yv * dot) / nrm;
                            }
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::GradReverse { input, scale } => {
                    if *scale != T::zero() {
                        accumulate(&mut grads, *input, g.scaled(-*scale));
                    }
                }
                Op::WeightedSquared { pred, target, weights, denom } => {
                    let g0 = g.as_slice()[0];
                    let p = self.value(*pred);
                    let two = T::lit(2.0);
                    let values = p
                        .as_slice()
                        .iter()
                        .zip(target)
                        .zip(weights)
                        .map(|((&pi, &ti), &wi)| {
                            if wi == T::zero() {
                                T::zero()
                            } else {
                                g0 * two * wi * (pi - ti) / *denom
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *pred, Matrix::column(values));
                }
                Op::WeightedBce { logit, labels, weights, denom } => {
                    let g0 = g.as_slice()[0];
                    let z = self.value(*logit);
                    let values = z
                        .as_slice()
                        .iter()
                        .zip(labels)
                        .zip(weights)
                        .map(|((&zi, &yi), &wi)| {
                            if wi == T::zero() {
                                T::zero()
                            } else {
                                g0 * wi * (sigmoid(zi) - yi) / *denom
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *logit, Matrix::column(values));
                }
                Op::Sum { input } => {
                    let (r, c) = self.value(*input).shape();
                    accumulate(&mut grads, *input, Matrix::filled(r, c, g.as_slice()[0]));
                }
                Op::SumSquares { input } => {
                    let two_g = T::lit(2.0) * g.as_slice()[0];
                    accumulate(&mut grads, *input, self.value(*input).scaled(two_g));
                }
                Op::Scale { input, factor } => {
                    accumulate(&mut grads, *input, g.scaled(*factor));
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::MmdRbf { input, set_a, set_b, bandwidth } => {
                    let g0 = g.as_slice()[0];
                    let z = self.value(*input);
                    let mut dz = Matrix::zeros(z.rows(), z.cols());
                    let bw2 = *bandwidth * *bandwidth;
                    let inv = T::one() / (T::lit(2.0) * bw2);
                    // term c·k(z_i, z_j): ∂/∂z_i = −c·k·(z_i − z_j)/bw², ∂/∂z_j = −∂/∂z_i
                    let mut pair_terms = |s1: &[usize], s2: &[usize], c: T| {
                        for &i in s1 {
                            for &j in s2 {
                                if i == j {
                                    continue;
                                }
                                let k = mmd_kernel(z.row(i), z.row(j), inv);
                                let coef = -c * k / bw2;
                                for col in 0..z.cols() {
                                    let diff = z[(i, col)] - z[(j, col)];
                                    dz[(i, col)] += coef * diff;
                                    dz[(j, col)] -= coef * diff;
                                }
                            }
                        }
                    };
                    let na = T::lit(set_a.len() as f64);
                    let nb = T::lit(set_b.len() as f64);
                    pair_terms(set_a, set_a, g0 / (na * na));
                    pair_terms(set_b, set_b, g0 / (nb * nb));
                    pair_terms(set_a, set_b, -T::lit(2.0) * g0 / (na * nb));
                    accumulate(&mut grads, *input, dz);
                }
            }
            grads[idx] = Some(g_kept);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        let v = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::new(rows, cols, v).unwrap()
    }

    /// Central differences of `f` at `params[which]`, independent of the tape's backward.
    fn finite_diff(
        params: &[Matrix<f64>],
        which: usize,
        f: &dyn Fn(&[Matrix<f64>]) -> f64,
    ) -> Matrix<f64> {
        let h = 1e-5;
        let mut out = Matrix::zeros(params[which].rows(), params[which].cols());
        for k in 0..params[which].as_slice().len() {
            let mut plus = params.to_vec();
            plus[which].as_mut_slice()[k] += h;
            let mut minus = params.to_vec();
            minus[which].as_mut_slice()[k] -= h;
            out.as_mut_slice()[k] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    fn assert_close(analytic: &Matrix<f64>, numeric: &Matrix<f64>) {
        for (a, n) in analytic.as_slice().iter().zip(numeric.as_slice()) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-4, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn grad_reverse_forward_is_identity() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[1.0, 2.0]]));
        let y = t.grad_reverse(x, 1.0);
        assert_eq!(t.value(y), t.value(x));
        let s = t.sum(y);
        assert_eq!(t.backward(s).unwrap().wrt(x).as_slice(), &[-1.0, -1.0]);
    }

    #[test]
    fn grad_reverse_zero_scale_blocks_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[1.0, 2.0]]));
        let y = t.grad_reverse(x, 0.0);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.wrt(x).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn sum_of_dense_gradient_is_input_structure() {
        // loss = Σ (W·x); ∂/∂W_kj = x_j for every output k.
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[2.0, -3.0, 0.5]]));
        let w = t.leaf(m(&[&[0.1, 0.2, 0.3], &[-1.0, 0.0, 1.0]]));
        let b = t.leaf(m(&[&[0.0, 0.0]]));
        let y = t.dense(x, w, b).unwrap();
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(w).as_slice(), &[2.0, -3.0, 0.5, 2.0, -3.0, 0.5]);
        assert_eq!(g.wrt(b).as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn unused_parameter_has_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[1.0, 2.0]]));
        let unused = t.leaf(m(&[&[5.0]]));
        let s = t.sum_squares(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(unused).as_slice(), &[0.0]);
        assert_eq!(g.wrt(x).as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[1.0, 2.0]]));
        assert!(matches!(t.backward(x), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn shared_node_accumulates() {
        // loss = sum(x) + sum(x) ⇒ gradient 2.
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[1.0, -1.0]]));
        let a = t.sum(x);
        let b = t.sum(x);
        let s = t.add(a, b).unwrap();
        assert_eq!(t.backward(s).unwrap().wrt(x).as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 6;
        let x = random(n, 3, &mut rng);
        let mask = ops::dropout_mask_with_rng((n, 4), 0.3, &mut rng).unwrap();
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let weights: Vec<f64> = (0..n).map(|i| if i == 2 { 0.0 } else { 0.5 + i as f64 }).collect();
        let params = vec![
            random(4, 3, &mut rng),
            random(1, 4, &mut rng),
            random(1, 4, &mut rng),
            random(1, 1, &mut rng),
        ];
        let build = |p: &[Matrix<f64>], t: &mut Tape<f64>| -> Vec<Var> {
            let xi = t.leaf(x.clone());
            let vars: Vec<Var> = p.iter().map(|pm| t.leaf(pm.clone())).collect();
            let h = t.dense(xi, vars[0], vars[1]).unwrap();
            let h = t.elu(h, 1.0);
            let h = t.mask(h, mask.clone()).unwrap();
            let z = t.unit_normalize_rows(h, 1e-8);
            let rev = t.grad_reverse(z, 0.7);
            let head_b = t.leaf(Matrix::zeros(1, 1));
            let logit = t.dense(rev, vars[2], vars[3]).unwrap();
            let out = t.dense(z, vars[2], head_b).unwrap();
            let l1 = t.weighted_squared_loss(out, targets.clone(), weights.clone(), 5.0).unwrap();
            let l2 = t.weighted_bce_loss(logit, labels.clone(), weights.clone(), 3.0).unwrap();
            let l3 = t.mmd_rbf(z, vec![0, 1, 2], vec![3, 4, 5], 0.8).unwrap();
            let l3 = t.scale(l3, 2.5);
            let l4 = t.sum_squares(vars[0]);
            let rest = t.add(l1, l3).unwrap();
            let rest = t.add(rest, l4).unwrap();
            let total = t.add(rest, l2).unwrap();
            let mut out = vars;
            out.extend([rest, l2, total]);
            out
        };
        // component 0: losses not crossing the reversal, 1: the reversed bce term
        let f = |p: &[Matrix<f64>], component: usize| {
            let mut t = Tape::new();
            let v = build(p, &mut t);
            t.scalar(v[4 + component])
        };
        let f_rest = |p: &[Matrix<f64>]| f(p, 0);
        let f_rev = |p: &[Matrix<f64>]| f(p, 1);
        let mut tape = Tape::new();
        let vars = build(&params, &mut tape);
        let grads = tape.backward(vars[6]).unwrap();
        for k in 0..params.len() {
            let rest = finite_diff(&params, k, &f_rest);
            let rev = finite_diff(&params, k, &f_rev);
            // parameters 0 and 1 sit upstream of the reversal node
            let factor = if k < 2 { -0.7 } else { 1.0 };
            let mut expected = rest.clone();
            for (e, r) in expected.as_mut_slice().iter_mut().zip(rev.as_slice()) {
                *e += factor * r;
            }
            assert_close(&grads.wrt(vars[k]), &expected);
        }
    }

    #[test]
    fn mmd_identical_sets_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random(4, 3, &mut rng);
        let v = mmd_value(&z, &[0, 1, 2, 3], &[0, 1, 2, 3], 1.0);
        assert!(v.abs() <= 1e-12);
    }
}
