use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_bounds, check_decompositions, CheckKind, DiscreteWorld, OutcomeLaw, TabularModel};
use crate::error::{Error, Result};
use crate::harness::seeds::derive_seed;
use crate::scalar::Scalar;

fn simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn law<T: Scalar, R: Rng>(max_support: usize, rng: &mut R) -> OutcomeLaw<T> {
    let n = rng.random_range(1..=max_support);
    OutcomeLaw {
        support: (0..n).map(|_| T::lit(rng.random_range(-3.0..3.0))).collect(),
        probs: simplex(n, rng).into_iter().map(T::lit).collect(),
    }
}

/// World with `k` covariate values, outcome supports of at most
/// `max_support` points and positivity bounded away from 0 and 1.
pub fn random_world<T: Scalar, R: Rng>(k: usize, max_support: usize, rng: &mut R) -> DiscreteWorld<T> {
    let px = simplex(k, rng);
    let p_t1 = (0..k).map(|_| T::lit(rng.random_range(0.05..0.95))).collect();
    let p_r1 = (0..k).map(|_| T::lit(rng.random_range(0.05..0.95))).collect();
    let y0 = (0..k).map(|_| law(max_support, rng)).collect();
    let y1 = (0..k).map(|_| law(max_support, rng)).collect();
    let mut px: Vec<T> = px.into_iter().map(T::lit).collect();
    // absorb rounding so the masses sum to one in T
    let rest: T = px[1..].iter().copied().sum();
    px[0] = T::one() - rest;
    DiscreteWorld { px, p_t1, p_r1, y0, y1 }
}

pub fn random_model<T: Scalar, R: Rng>(k: usize, rng: &mut R) -> TabularModel<T> {
    let mut phi: Vec<usize> = (0..k).collect();
    phi.shuffle(rng);
    TabularModel {
        phi,
        h0: (0..k).map(|_| T::lit(rng.random_range(-3.0..3.0))).collect(),
        h1: (0..k).map(|_| T::lit(rng.random_range(-3.0..3.0))).collect(),
    }
}

/// Extremes of every check over a sweep of random worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub worlds: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Largest `|residual|` per identity.
    pub max_abs_residual: BTreeMap<String, f64>,
    /// Smallest slack per inequality.
    pub min_slack: BTreeMap<String, f64>,
    pub violations: usize,
}

impl SweepSummary {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{} worlds, seed {}, tolerance {:e}, {} violations\n",
            self.worlds, self.seed, self.tolerance, self.violations
        );
        for (name, v) in &self.max_abs_residual {
            s.push_str(&format!("  {name:22} max |residual| {v:.3e}\n"));
        }
        for (name, v) in &self.min_slack {
            s.push_str(&format!("  {name:22} min slack      {v:+.3e}\n"));
        }
        s
    }
}

/// Checks `n_worlds` random worlds with `K ≤ max_k` and outcome supports of at
/// most 4 points. World `i` is drawn from `derive_seed(seed, i, "world")`.
pub fn sweep<T: Scalar>(n_worlds: usize, seed: u64, max_k: usize, tol: T) -> Result<SweepSummary> {
    if max_k == 0 {
        return Err(Error::invalid("max_k must be positive"));
    }
    let per_world: Vec<Vec<(String, CheckKind, f64, bool)>> = (0..n_worlds)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, "world"));
            let k = rng.random_range(1..=max_k);
            let world = random_world::<T, _>(k, 4, &mut rng);
            let model = random_model::<T, _>(k, &mut rng);
            let mut out = Vec::new();
            for rep in [check_decompositions(&world, &model)?, check_bounds(&world, &model)?] {
                for e in rep.entries {
                    let ok = e.holds(tol);
                    out.push((e.name, e.kind, e.value.to_f64_lossy(), ok));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut summary = SweepSummary {
        worlds: n_worlds,
        seed,
        tolerance: tol.to_f64_lossy(),
        max_abs_residual: BTreeMap::new(),
        min_slack: BTreeMap::new(),
        violations: 0,
    };
    for (name, kind, value, ok) in per_world.into_iter().flatten() {
        if !ok {
            summary.violations += 1;
        }
        match kind {
            CheckKind::Identity => {
                let e = summary.max_abs_residual.entry(name).or_insert(0.0);
                *e = e.max(value.abs());
            }
            CheckKind::Inequality => {
                let e = summary.min_slack.entry(name).or_insert(f64::INFINITY);
                *e = e.min(value);
            }
        }
    }
    Ok(summary)
}
