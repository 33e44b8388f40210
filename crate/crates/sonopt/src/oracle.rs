//! Exhaustive reference solvers for small instances. These exist to check
//! the two decoupling claims the fast paths rely on: at fixed powers, the
//! per-cluster serving argmin solves the joint assignment problem, and the
//! per-sector tilt argmin solves the joint tilt problem. Both oracles
//! enumerate the full product space and evaluate every configuration through
//! a full cross-link rebuild, sharing no shortcuts with the iterations under
//! test. A bisection on the feasibility question doubles as an independent
//! route to the eigen-level.

use crate::coupling::build_crosslink;
use crate::duality::ExtendedCoupling;
use crate::scenario::{ClusterMap, Scenario};
use crate::utility::{self, UtilityConfig};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct OracleBudget {
    /// Hard cap on enumerated configurations; larger spaces are refused.
    pub max_configs: usize,
    /// Relative interval width at which the bisection stops.
    pub bisect_tol: f64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_configs: 4096,
            bisect_tol: 1e-9,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{configs} configurations exceed the oracle budget of {cap}")]
    Refused { configs: usize, cap: usize },
}

/// Calls `f` with every tuple in `{0..base}^digits`, counting in mixed
/// radix, lowest digit first.
fn for_each_config(base: usize, digits: usize, mut f: impl FnMut(&[usize])) {
    let mut tuple = vec![0usize; digits];
    loop {
        f(&tuple);
        let mut pos = 0;
        loop {
            if pos == digits {
                return;
            }
            tuple[pos] += 1;
            if tuple[pos] < base {
                break;
            }
            tuple[pos] = 0;
            pos += 1;
        }
    }
}

fn checked_space(base: usize, digits: usize, cap: usize) -> Result<usize, OracleError> {
    let mut configs = 1usize;
    for _ in 0..digits {
        configs = configs.saturating_mul(base);
        if configs > cap {
            return Err(OracleError::Refused { configs, cap });
        }
    }
    Ok(configs)
}

/// Exact maximizer of `min_c q_c / (gamma_c I_c)` over all joint assignments
/// `allowed^C` at fixed powers and tilts. Returns the best value and one
/// maximizing assignment (the one found first).
pub fn brute_force_assignment(
    s: &Scenario,
    cm: &ClusterMap,
    theta_deg: &[f64],
    q: &[f64],
    allowed: &[usize],
    cfg: &UtilityConfig,
    budget: &OracleBudget,
) -> Result<(f64, Vec<usize>), OracleError> {
    checked_space(allowed.len(), cm.n_clusters, budget.max_configs)?;
    let mut best = f64::NEG_INFINITY;
    let mut best_b = vec![allowed[0]; cm.n_clusters];
    for_each_config(allowed.len(), cm.n_clusters, |tuple| {
        let b: Vec<usize> = tuple.iter().map(|&i| allowed[i]).collect();
        let x = build_crosslink(s, cm, &b, theta_deg);
        let ivals = utility::joint_interference(&x, cm, q, cfg);
        let value = (0..cm.n_clusters)
            .map(|c| q[c] / (s.gamma[c] * ivals[c]))
            .fold(f64::INFINITY, f64::min);
        if value > best {
            best = value;
            best_b = b;
        }
    });
    Ok((best, best_b))
}

/// Exact maximizer of `min_n r_n / Î_n` over all joint tilt configurations
/// `grid^N` at fixed assignment, shares, and budgets. Idle sectors do not
/// enter the objective. Returns the best value and one maximizing tilt
/// index vector.
pub fn brute_force_tilt(
    s: &Scenario,
    cm: &ClusterMap,
    b: &[usize],
    beta: &[f64],
    r: &[f64],
    cfg: &UtilityConfig,
    budget: &OracleBudget,
) -> Result<(f64, Vec<usize>), OracleError> {
    let grid = s.tilt_grid_deg.len();
    checked_space(grid, s.n_bs, budget.max_configs)?;
    let mut best = f64::NEG_INFINITY;
    let mut best_tilts = vec![0usize; s.n_bs];
    for_each_config(grid, s.n_bs, |tuple| {
        let theta: Vec<f64> = tuple.iter().map(|&t| s.tilt_grid_deg[t]).collect();
        let x = build_crosslink(s, cm, b, &theta);
        let ihat = utility::bs_interference(&x, cm, b, beta, r, &s.gamma, cfg, s.n_bs);
        let value = (0..s.n_bs)
            .filter(|&n| ihat[n] > 0.0)
            .map(|n| r[n] / ihat[n])
            .fold(f64::INFINITY, f64::min);
        if value > best {
            best = value;
            best_tilts = tuple.to_vec();
        }
    });
    Ok((best, best_tilts))
}

/// Largest uniform utility target that stays feasible, found by bisection on
/// the feasibility question "does the scaled coupling stay contractive".
/// Never computes an eigenvalue: feasibility is decided through
/// Collatz-Wielandt bounds, so this is an independent route to the balanced
/// level `1/ρ(Λ)`.
pub fn bisection_maxmin(ext: &ExtendedCoupling, budget: &OracleBudget) -> f64 {
    let m = &ext.lambda;
    let dim = m.nrows();
    let feasible = |t: f64| -> bool {
        let mut x = vec![1.0 / dim as f64; dim];
        for _ in 0..100_000 {
            let y: Vec<f64> = (0..dim)
                .map(|c| t * (0..dim).map(|cc| m[[c, cc]] * x[cc]).sum::<f64>())
                .collect();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for (yc, xc) in y.iter().zip(&x) {
                let ratio = yc / xc;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
            if hi < 1.0 {
                return true;
            }
            if lo >= 1.0 {
                return false;
            }
            let norm: f64 = y.iter().sum();
            x = y.into_iter().map(|v| v / norm).collect();
        }
        // Bounds straddling 1 after the cap: treat as infeasible.
        false
    };

    let (mut lo, mut hi);
    if feasible(1.0) {
        lo = 1.0;
        hi = 2.0;
        while feasible(hi) {
            lo = hi;
            hi *= 2.0;
            assert!(hi.is_finite(), "no infeasible level found");
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        while !feasible(lo) {
            hi = lo;
            lo /= 2.0;
            assert!(lo > f64::MIN_POSITIVE, "no feasible level found");
        }
    }
    while (hi - lo) > budget.bisect_tol * lo {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
