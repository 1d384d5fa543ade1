//! Exact generalization-bound quantities on finite worlds.
//!
//! A world has finitely many covariate values with masses `p(x)`,
//! Bernoulli laws `p(T=1|x)` and `p(R=1|x)`, and finite-support outcome
//! laws per arm. `R` and `T` are conditionally independent given `x` by
//! construction. Representations are permutations of the covariate
//! indices and the function family is the sup-norm unit ball, so every
//! integral is a finite sum and every IPM is `Σ_z |p1(z) − p2(z)|`.

mod random;

pub use random::{random_model, random_world, sweep, SweepSummary};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OutcomeLaw<T> {
    pub support: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> OutcomeLaw<T> {
    pub fn point(value: T) -> Self {
        Self {
            support: vec![value],
            probs: vec![T::one()],
        }
    }

    pub fn mean(&self) -> T {
        self.support.iter().zip(&self.probs).map(|(&y, &p)| y * p).sum()
    }

    /// `E[(Y − c)²]`.
    pub fn expected_sq_error(&self, c: T) -> T {
        self.support.iter().zip(&self.probs).map(|(&y, &p)| (y - c) * (y - c) * p).sum()
    }

    pub fn variance(&self) -> T {
        self.expected_sq_error(self.mean())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DiscreteWorld<T> {
    pub px: Vec<T>,
    /// `p(T = 1 | x)`
    pub p_t1: Vec<T>,
    /// `p(R = 1 | x)`
    pub p_r1: Vec<T>,
    pub y0: Vec<OutcomeLaw<T>>,
    pub y1: Vec<OutcomeLaw<T>>,
}

/// Representation as a permutation of `0..K` plus outcome tables over the
/// representation space: `f_t(x) = h_t[phi[x]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TabularModel<T> {
    pub phi: Vec<usize>,
    pub h0: Vec<T>,
    pub h1: Vec<T>,
}

/// 1e-9, or a few ulps for scalars too coarse to resolve it.
fn mass_tol<T: Scalar>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(16.0))
}

fn check_simplex<T: Scalar>(p: &[T], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
        return Err(Error::invalid(format!("{what}: negative or non-finite mass")));
    }
    let s: T = p.iter().copied().sum();
    if (s - T::one()).abs() > mass_tol() {
        return Err(Error::invalid(format!("{what}: masses sum to {s}, not 1")));
    }
    Ok(())
}

impl<T: Scalar> DiscreteWorld<T> {
    pub fn k(&self) -> usize {
        self.px.len()
    }

    /// Masses form distributions, `0 < p(T=1|x) < 1`, `0 < p(R=1|x) ≤ 1`.
    /// `p(R=1|x) = 1` everywhere is allowed and leaves the `R = 0` domain empty.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::invalid("world has no covariate values"));
        }
        if [self.p_t1.len(), self.p_r1.len(), self.y0.len(), self.y1.len()]
            .iter()
            .any(|&l| l != k)
        {
            return Err(Error::invalid("world tables have inconsistent lengths"));
        }
        check_simplex(&self.px, "p(x)")?;
        for x in 0..k {
            if !(self.p_t1[x] > T::zero() && self.p_t1[x] < T::one()) {
                return Err(Error::invalid(format!("p(T=1|x{x}) must lie strictly inside (0, 1)")));
            }
            if !(self.p_r1[x] > T::zero() && self.p_r1[x] <= T::one()) {
                return Err(Error::invalid(format!("p(R=1|x{x}) must lie in (0, 1]")));
            }
            for law in [&self.y0[x], &self.y1[x]] {
                if law.support.len() != law.probs.len() || law.support.is_empty() {
                    return Err(Error::invalid(format!("outcome law at x{x} is malformed")));
                }
                check_simplex(&law.probs, "outcome law")?;
            }
        }
        Ok(())
    }

    fn law(&self, x: usize, t: bool) -> &OutcomeLaw<T> {
        if t {
            &self.y1[x]
        } else {
            &self.y0[x]
        }
    }

    /// `p(T = t | x)`
    pub fn pt(&self, x: usize, t: bool) -> T {
        if t {
            self.p_t1[x]
        } else {
            T::one() - self.p_t1[x]
        }
    }

    /// `p(R = r | x)`
    pub fn pr(&self, x: usize, r: bool) -> T {
        if r {
            self.p_r1[x]
        } else {
            T::one() - self.p_r1[x]
        }
    }

    /// `E[Y_t | x]`
    pub fn m(&self, x: usize, t: bool) -> T {
        self.law(x, t).mean()
    }

    pub fn tau(&self, x: usize) -> T {
        self.m(x, true) - self.m(x, false)
    }
}

impl<T: Scalar> TabularModel<T> {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.phi.len() != k || self.h0.len() != k || self.h1.len() != k {
            return Err(Error::invalid("model tables must have one entry per covariate value"));
        }
        let mut seen = vec![false; k];
        for &z in &self.phi {
            if z >= k || seen[z] {
                return Err(Error::invalid("phi is not a permutation"));
            }
            seen[z] = true;
        }
        Ok(())
    }

    pub fn f(&self, x: usize, t: bool) -> T {
        let z = self.phi[x];
        if t {
            self.h1[z]
        } else {
            self.h0[z]
        }
    }

    /// `Ψ = Φ⁻¹`
    pub fn psi(&self) -> Vec<usize> {
        let mut inv = vec![0; self.phi.len()];
        for (x, &z) in self.phi.iter().enumerate() {
            inv[z] = x;
        }
        inv
    }
}

fn check_pair<T: Scalar>(world: &DiscreteWorld<T>, model: &TabularModel<T>) -> Result<()> {
    world.validate()?;
    model.validate(world.k())
}

/// Expected squared loss `l(x, t) = E[(Y_t − h_t(Φ(x)))² | x]`.
pub fn loss_point<T: Scalar>(world: &DiscreteWorld<T>, model: &TabularModel<T>, x: usize, t: bool) -> Result<T> {
    if x >= world.k() || x >= model.phi.len() {
        return Err(Error::invalid(format!("unknown covariate value {x}")));
    }
    Ok(world.law(x, t).expected_sq_error(model.f(x, t)))
}

/// `sup_{‖g‖∞ ≤ 1} |Σ g (p1 − p2)| = Σ |p1 − p2|`.
pub fn ipm_supnorm<T: Scalar>(p1: &[T], p2: &[T]) -> Result<T> {
    if p1.len() != p2.len() {
        return Err(Error::invalid("ipm: distributions over different sets"));
    }
    check_simplex(p1, "ipm p1")?;
    check_simplex(p2, "ipm p2")?;
    Ok(p1.iter().zip(p2).map(|(&a, &b)| (a - b).abs()).sum())
}

/// Pushes masses over `x` to the representation space.
pub fn pushforward<T: Scalar>(p: &[T], phi: &[usize]) -> Vec<T> {
    let mut out = vec![T::zero(); p.len()];
    for (x, &z) in phi.iter().enumerate() {
        out[z] += p[x];
    }
    out
}

fn normalized<T: Scalar>(w: Vec<T>) -> (Vec<T>, T) {
    let s: T = w.iter().copied().sum();
    if s > T::zero() {
        (w.into_iter().map(|v| v / s).collect(), s)
    } else {
        (w, s)
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Every loss, variance and distance term of the bound chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EpsTerms<T> {
    pub pehe: T,
    pub f: T,
    pub cf: T,
    pub f_r1: T,
    pub f_r0: T,
    pub cf_r1: T,
    pub cf_r0: T,
    pub f_r1_t1: T,
    pub f_r1_t0: T,
    pub cf_r1_t1: T,
    pub cf_r1_t0: T,
    /// `σ²_{Y_t}(p(x, r, T = t'))` indexed `[t][t']`.
    pub sigma2: [[T; 2]; 2],
    pub sigma2_y: T,
    /// `Σ (f_t − m_t)² p(x, r, t)` and its counterfactual analogue.
    pub mean_err_f: T,
    pub mean_err_cf: T,
    /// `p(R = 0)`
    pub v: T,
    /// `p(T = 0 | R = 1)`
    pub u: T,
    /// `p(T = 0)`
    pub u_marginal: T,
    pub b_phi: T,
    /// IPM between representation laws of the missing and observed domains.
    pub ipm_r: T,
    /// IPM between control and treated representation laws within `R = 1`.
    pub ipm_t: T,
}

pub fn eps_terms<T: Scalar>(world: &DiscreteWorld<T>, model: &TabularModel<T>) -> Result<EpsTerms<T>> {
    check_pair(world, model)?;
    let k = world.k();
    let xs = 0..k;
    let l: [Vec<T>; 2] = [false, true].map(|t| xs.clone().map(|x| world.law(x, t).expected_sq_error(model.f(x, t))).collect());
    let var: [Vec<T>; 2] = [false, true].map(|t| xs.clone().map(|x| world.law(x, t).variance()).collect());
    let err: [Vec<T>; 2] = [false, true].map(|t| {
        xs.clone()
            .map(|x| {
                let d = model.f(x, t) - world.m(x, t);
                d * d
            })
            .collect()
    });
    // p(x, T = t), summed over r
    let pxt: [Vec<T>; 2] = [false, true].map(|t| xs.clone().map(|x| world.px[x] * world.pt(x, t)).collect());

    let pehe = xs
        .clone()
        .map(|x| {
            let d = (model.f(x, true) - model.f(x, false)) - world.tau(x);
            d * d * world.px[x]
        })
        .sum();
    let f = dot(&l[1], &pxt[1]) + dot(&l[0], &pxt[0]);
    let cf = dot(&l[1], &pxt[0]) + dot(&l[0], &pxt[1]);

    // p(x, T = t | R = r)
    let cond_r = |r: bool| -> ([Vec<T>; 2], T) {
        let joint: [Vec<T>; 2] = [false, true].map(|t| {
            xs.clone()
                .map(|x| world.px[x] * world.pr(x, r) * world.pt(x, t))
                .collect()
        });
        let mass: T = joint.iter().flat_map(|v| v.iter().copied()).sum();
        if mass > T::zero() {
            (joint.map(|v| v.into_iter().map(|p| p / mass).collect()), mass)
        } else {
            (joint, mass)
        }
    };
    let (p_r1, mass_r1) = cond_r(true);
    let (p_r0, mass_r0) = cond_r(false);
    let f_r = |p: &[Vec<T>; 2]| dot(&l[1], &p[1]) + dot(&l[0], &p[0]);
    let cf_r = |p: &[Vec<T>; 2]| dot(&l[1], &p[0]) + dot(&l[0], &p[1]);

    // p(x | R = 1, T = t)
    let (p11, m11) = normalized(p_r1[1].clone());
    let (p10, m10) = normalized(p_r1[0].clone());
    let u = m10 / (m10 + m11);

    let sigma2 = [0, 1].map(|t| [0, 1].map(|tp| dot(&var[t], &pxt[tp])));
    let s_t: [T; 2] = [0, 1].map(|t| sigma2[t][0].min(sigma2[t][1]));

    let b_raw = l[0].iter().chain(&l[1]).copied().fold(T::zero(), T::max);
    let b_phi = if b_raw > T::zero() { b_raw } else { T::one() };

    let marg = |p: &[Vec<T>; 2]| -> Vec<T> { p[0].iter().zip(&p[1]).map(|(&a, &b)| a + b).collect() };
    let ipm_r = if mass_r0 > T::zero() {
        ipm_supnorm(&pushforward(&marg(&p_r0), &model.phi), &pushforward(&marg(&p_r1), &model.phi))?
    } else {
        T::zero()
    };
    let ipm_t = ipm_supnorm(&pushforward(&p10, &model.phi), &pushforward(&p11, &model.phi))?;

    Ok(EpsTerms {
        pehe,
        f,
        cf,
        f_r1: f_r(&p_r1),
        f_r0: f_r(&p_r0),
        cf_r1: cf_r(&p_r1),
        cf_r0: cf_r(&p_r0),
        f_r1_t1: dot(&l[1], &p11),
        f_r1_t0: dot(&l[0], &p10),
        cf_r1_t1: dot(&l[1], &p10),
        cf_r1_t0: dot(&l[0], &p11),
        sigma2,
        sigma2_y: s_t[0].min(s_t[1]),
        mean_err_f: dot(&err[1], &pxt[1]) + dot(&err[0], &pxt[0]),
        mean_err_cf: dot(&err[1], &pxt[0]) + dot(&err[0], &pxt[1]),
        v: mass_r0 / (mass_r0 + mass_r1),
        u,
        u_marginal: pxt[0].iter().copied().sum(),
        b_phi,
        ipm_r,
        ipm_t,
    })
}

impl<T: Scalar> EpsTerms<T> {
    /// Bound on PEHE from the factual and counterfactual errors: `2(ε_F + ε_CF − 4σ²_Y)`.
    pub fn pehe_bound(&self) -> T {
        T::lit(2.0) * (self.f + self.cf - T::lit(4.0) * self.sigma2_y)
    }

    /// Bound after splitting off the missing-treatment domain.
    pub fn observed_domain_bound(&self) -> T {
        let two = T::lit(2.0);
        two * (self.f_r1 + self.cf_r1 + two * self.v * self.b_phi * self.ipm_r - T::lit(4.0) * self.sigma2_y)
    }

    /// Final bound as a function of the two IPM terms.
    pub fn final_bound_with(&self, ipm_t: T, ipm_r: T) -> T {
        let two = T::lit(2.0);
        two * (self.f_r1_t1 + self.f_r1_t0 + self.b_phi * ipm_t + two * self.v * self.b_phi * ipm_r
            - T::lit(4.0) * self.sigma2_y)
    }

    pub fn final_bound(&self) -> T {
        self.final_bound_with(self.ipm_t, self.ipm_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `value` is `lhs − rhs` and should be zero.
    Identity,
    /// `value` is `rhs − lhs` and should be nonnegative.
    Inequality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CheckEntry<T> {
    pub name: String,
    pub kind: CheckKind,
    pub value: T,
}

impl<T: Scalar> CheckEntry<T> {
    pub fn holds(&self, tol: T) -> bool {
        match self.kind {
            CheckKind::Identity => self.value.abs() <= tol,
            CheckKind::Inequality => self.value >= -tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CheckReport<T> {
    pub entries: Vec<CheckEntry<T>>,
}

impl<T: Scalar> CheckReport<T> {
    fn push(&mut self, name: &str, kind: CheckKind, value: T) {
        self.entries.push(CheckEntry {
            name: name.to_string(),
            kind,
            value,
        });
    }

    pub fn violations(&self, tol: T) -> Vec<&CheckEntry<T>> {
        self.entries.iter().filter(|e| !e.holds(tol)).collect()
    }

    pub fn get(&self, name: &str) -> Option<T> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.value)
    }

    /// One line per entry: name, kind, value.
    pub fn table(&self) -> String {
        let width = self.entries.iter().map(|e| e.name.len()).max().unwrap_or(4);
        let mut s = String::new();
        for e in &self.entries {
            let kind = match e.kind {
                CheckKind::Identity => "residual",
                CheckKind::Inequality => "slack",
            };
            s.push_str(&format!("{:width$}  {kind:8}  {:+.3e}\n", e.name, e.value.to_f64_lossy()));
        }
        s
    }
}

/// Residuals of the exact decompositions.
pub fn check_decompositions<T: Scalar>(world: &DiscreteWorld<T>, model: &TabularModel<T>) -> Result<CheckReport<T>> {
    let e = eps_terms(world, model)?;
    let one = T::one();
    let mut rep = CheckReport { entries: Vec::new() };
    use CheckKind::Identity as I;
    rep.push(
        "variance_identity_f",
        I,
        e.mean_err_f - (e.f - e.sigma2[1][1] - e.sigma2[0][0]),
    );
    rep.push(
        "variance_identity_cf",
        I,
        e.mean_err_cf - (e.cf - e.sigma2[1][0] - e.sigma2[0][1]),
    );
    rep.push("domain_split_f", I, e.f - ((one - e.v) * e.f_r1 + e.v * e.f_r0));
    rep.push("domain_split_cf", I, e.cf - ((one - e.v) * e.cf_r1 + e.v * e.cf_r0));
    rep.push(
        "arm_split_f",
        I,
        e.f_r1 - ((one - e.u) * e.f_r1_t1 + e.u * e.f_r1_t0),
    );
    rep.push(
        "arm_split_cf",
        I,
        e.cf_r1 - (e.u * e.cf_r1_t1 + (one - e.u) * e.cf_r1_t0),
    );
    Ok(rep)
}

/// Slacks of every inequality in the bound chain.
pub fn check_bounds<T: Scalar>(world: &DiscreteWorld<T>, model: &TabularModel<T>) -> Result<CheckReport<T>> {
    let e = eps_terms(world, model)?;
    let two = T::lit(2.0);
    let one = T::one();
    let mut rep = CheckReport { entries: Vec::new() };
    use CheckKind::Inequality as Q;
    rep.push("variance_bound_f", Q, (e.f - two * e.sigma2_y) - e.mean_err_f);
    rep.push("variance_bound_cf", Q, (e.cf - two * e.sigma2_y) - e.mean_err_cf);
    rep.push("pehe_bound", Q, e.pehe_bound() - e.pehe);
    rep.push(
        "domain_shift_bound",
        Q,
        (e.f_r1 + e.cf_r1 + two * e.v * e.b_phi * e.ipm_r) - (e.f + e.cf),
    );
    rep.push(
        "arm_shift_bound",
        Q,
        (e.u * e.f_r1_t1 + (one - e.u) * e.f_r1_t0 + e.b_phi * e.ipm_t) - e.cf_r1,
    );
    rep.push("chain_step_1", Q, e.pehe_bound() - e.pehe);
    rep.push("chain_step_2", Q, e.observed_domain_bound() - e.pehe_bound());
    rep.push("chain_step_3", Q, e.final_bound() - e.observed_domain_bound());
    rep.push("final_bound", Q, e.final_bound() - e.pehe);
    Ok(rep)
}
