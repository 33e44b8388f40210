//! Normalized fixed-point iteration for monotone, strictly subhomogeneous
//! interference maps, and the two scaled iterations built on it: cluster
//! powers under per-sector budgets (with the serving-sector argmin embedded)
//! and sector budgets under a sum-power budget (with the tilt argmin
//! embedded).
//!
//! The engine iterates `x⁺ = target_level * f(x) / l(f(x))` for a positive
//! map `f` and a monotone homogeneous functional `l`. Every iterate after the
//! first satisfies `l(x) = target_level` by construction; for strictly
//! subhomogeneous `f` the sequence converges to the unique fixed point, where
//! all coordinate ratios `x_c / f_c(x)` share one value, the balanced level.

use crate::coupling::TiltedGains;
use crate::scenario::{ClusterMap, Scenario};
use crate::utility::{self, UtilityConfig};
use thiserror::Error;

/// One recorded iteration: the new iterate, the relative change that produced
/// it, and the balancing level applied at this step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub x: Vec<f64>,
    /// `‖x⁽ᵗ⁾ − x⁽ᵗ⁻¹⁾‖∞ / ‖x⁽ᵗ⁻¹⁾‖∞`.
    pub residual: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    /// CSV with the fixed header `t,residual,level`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,residual,level\n");
        for row in &self.rows {
            out.push_str(&format!("{},{},{}\n", row.t, row.residual, row.level));
        }
        out
    }

    pub fn last_level(&self) -> Option<f64> {
        self.rows.last().map(|r| r.level)
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(
        "fixed-point iteration did not converge in {iterations} iterations \
         (last residual {residual:.3e}, tolerance {eps:.1e})"
    )]
    NoConvergence {
        iterations: usize,
        residual: f64,
        eps: f64,
        /// Iterates up to the failure point.
        trace: Trace,
        /// Last iterate.
        x: Vec<f64>,
    },
}

impl SolveError {
    pub fn trace(&self) -> &Trace {
        match self {
            SolveError::NoConvergence { trace, .. } => trace,
        }
    }
}

/// A normalized fixed-point problem: interference map, normalization, the
/// level the normalization is held at, and stopping parameters.
pub struct FixedPointProblem<F, L>
where
    F: FnMut(&[f64]) -> Vec<f64>,
    L: FnMut(&[f64]) -> f64,
{
    pub dim: usize,
    /// Positive monotone map; strict subhomogeneity is the caller's contract.
    pub f: F,
    /// Monotone, positively homogeneous functional (a norm on the positive cone).
    pub l: L,
    /// Value `l(x)` is pinned to; the constraint budget.
    pub target_level: f64,
    pub eps: f64,
    pub max_iter: usize,
}

pub(crate) fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn relative_step(prev: &[f64], next: &[f64]) -> f64 {
    let diff = prev
        .iter()
        .zip(next)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / inf_norm(prev)
}

/// Runs `x⁺ = target_level * f(x)/l(f(x))` from `x0` until the relative
/// ∞-norm step falls to `eps`. Returns the fixed point and the full trace; on
/// iteration exhaustion, the error carries the partial trace.
pub fn solve_normalized<F, L>(
    prob: &mut FixedPointProblem<F, L>,
    x0: &[f64],
) -> Result<(Vec<f64>, Trace), SolveError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
    L: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), prob.dim);
    assert!(x0.iter().all(|v| *v > 0.0), "start must be positive");
    let mut x = x0.to_vec();
    let mut trace = Trace::default();
    let mut residual = f64::INFINITY;
    for t in 1..=prob.max_iter {
        let fx = (prob.f)(&x);
        let lv = (prob.l)(&fx);
        debug_assert!(lv > 0.0 && lv.is_finite());
        let level = prob.target_level / lv;
        let next: Vec<f64> = fx.iter().map(|v| v * level).collect();
        residual = relative_step(&x, &next);
        trace.rows.push(TraceRow {
            t,
            x: next.clone(),
            residual,
            level,
        });
        x = next;
        if residual <= prob.eps {
            return Ok((x, trace));
        }
    }
    Err(SolveError::NoConvergence {
        iterations: prob.max_iter,
        residual,
        eps: prob.eps,
        trace,
        x,
    })
}

/// Inputs of the scaled cluster-power iteration. Tilts and budgets are those
/// of the current outer round; `allowed` restricts serving candidates to
/// sectors that still hold a positive budget.
pub struct ClusterIteration<'a> {
    pub s: &'a Scenario,
    pub cm: &'a ClusterMap,
    pub gains: &'a TiltedGains,
    pub tilt_idx: &'a [usize],
    pub gamma: &'a [f64],
    pub cfg: &'a UtilityConfig,
    pub p_max_per_bs: &'a [f64],
    pub allowed: &'a [usize],
    pub eps: f64,
    pub max_iter: usize,
}

/// Iterations without a relative residual improvement of at least 1e-6
/// before the direct cluster iteration is declared stuck and the alternating
/// fallback takes over.
const STALL_WINDOW: usize = 64;

impl ClusterIteration<'_> {
    /// One scaled update at interference values `ivals` grouped by `b`:
    /// divide the weighted interference by the worst per-sector budget ratio,
    /// so the binding sector lands exactly on its budget.
    fn scaled_update(&self, ivals: &[f64], b: &[usize]) -> (Vec<f64>, f64) {
        let weighted: Vec<f64> = ivals.iter().zip(self.gamma).map(|(i, g)| i * g).collect();
        let mut lv = 0.0f64;
        for (n, served) in ClusterMap::clusters_per_bs(b, self.s.n_bs).iter().enumerate() {
            if served.is_empty() {
                continue;
            }
            let sum: f64 = served.iter().map(|&c| weighted[c]).sum();
            lv = lv.max(sum / self.p_max_per_bs[n]);
        }
        debug_assert!(lv > 0.0 && lv.is_finite());
        (weighted.iter().map(|v| v / lv).collect(), lv)
    }
}

/// Scaled fixed-point iteration on cluster powers,
/// `q_c⁺ = γ_c I_c(q) / max_n (Σ_{c∈C_n} γ_c I_c(q) / Pmax_n)`,
/// where each `I_c` embeds the per-cluster serving-sector argmin. At every
/// iterate the per-sector sums respect the budgets, with equality at the
/// binding sector. Returns converged powers, the final assignment, and the
/// trace.
///
/// The per-step argmin can enter a limit cycle when the budgets are very
/// skewed: a cluster hops between sectors as the power scale swings, and the
/// normalization jumps with it. When the residual stops improving for
/// `STALL_WINDOW` iterations, the solver switches to alternation: converge
/// the powers under a frozen assignment, re-derive the assignment, repeat
/// until it is stable. A stable point satisfies the original fixed-point
/// equation, so both paths agree where the direct iteration converges.
pub fn scaled_cluster_iteration(
    it: &ClusterIteration<'_>,
    q0: &[f64],
) -> Result<(Vec<f64>, Vec<usize>, Trace), SolveError> {
    assert!(q0.iter().all(|v| *v > 0.0), "start must be positive");
    assert!(!it.allowed.is_empty(), "no candidate sectors with budget");
    let c_total = it.cm.n_clusters;
    assert_eq!(q0.len(), c_total);

    let mut q = q0.to_vec();
    let mut b = vec![it.allowed[0]; c_total];
    let mut trace = Trace::default();
    let mut residual = f64::INFINITY;
    let exhausted = |residual: f64, trace: Trace, q: Vec<f64>| {
        Err(SolveError::NoConvergence {
            iterations: it.max_iter,
            residual,
            eps: it.eps,
            trace,
            x: q,
        })
    };

    let mut t = 0usize;
    let mut best_resid = f64::INFINITY;
    let mut best_t = 0usize;
    let mut stalled = false;
    while t < it.max_iter {
        t += 1;
        let (b_new, ivals) = utility::min_assignment_interference(
            it.s, it.cm, it.gains, &q, it.tilt_idx, it.allowed, it.cfg,
        );
        b = b_new;
        let (next, lv) = it.scaled_update(&ivals, &b);
        residual = relative_step(&q, &next);
        trace.rows.push(TraceRow {
            t,
            x: next.clone(),
            residual,
            level: 1.0 / lv,
        });
        q = next;
        if residual <= it.eps {
            return Ok((q, b, trace));
        }
        if residual < best_resid * (1.0 - 1e-6) {
            best_resid = residual;
            best_t = t;
        } else if t >= 2 * STALL_WINDOW && t - best_t >= STALL_WINDOW {
            stalled = true;
            break;
        }
    }
    if !stalled {
        return exhausted(residual, trace, q);
    }

    // Alternating fallback. `converged_under` holds the assignment of the
    // last fixed-assignment solve; if the argmin confirms it, the pair is a
    // fixed point of the embedded-argmin map. A repeated assignment means
    // the alternation itself cycles; the best converged candidate wins then.
    let mut converged_under: Option<Vec<usize>> = None;
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    loop {
        let (b_fix, _) = utility::min_assignment_interference(
            it.s, it.cm, it.gains, &q, it.tilt_idx, it.allowed, it.cfg,
        );
        if converged_under.as_ref() == Some(&b_fix) {
            return Ok((q, b_fix, trace));
        }
        if seen.contains(&b_fix) {
            let (_, qb, bb) = best.expect("repeat implies a converged candidate");
            return Ok((qb, bb, trace));
        }
        seen.push(b_fix.clone());
        loop {
            if t >= it.max_iter {
                return exhausted(residual, trace, q);
            }
            t += 1;
            let ivals = utility::assignment_interference(
                it.s, it.cm, it.gains, &q, it.tilt_idx, &b_fix, it.cfg,
            );
            let (next, lv) = it.scaled_update(&ivals, &b_fix);
            residual = relative_step(&q, &next);
            trace.rows.push(TraceRow {
                t,
                x: next.clone(),
                residual,
                level: 1.0 / lv,
            });
            q = next;
            if residual <= it.eps {
                break;
            }
        }
        let level = trace.rows.last().expect("solve pushed rows").level;
        if best.as_ref().is_none_or(|(bl, _, _)| level > *bl) {
            best = Some((level, q.clone(), b_fix.clone()));
        }
        converged_under = Some(b_fix);
    }
}

/// Inputs of the scaled sector-budget iteration; assignment and load shares
/// are fixed, tilts are re-optimized per sector inside every step.
pub struct BsIteration<'a> {
    pub s: &'a Scenario,
    pub cm: &'a ClusterMap,
    pub gains: &'a TiltedGains,
    pub b: &'a [usize],
    pub beta: &'a [f64],
    pub gamma: &'a [f64],
    pub cfg: &'a UtilityConfig,
    pub p_max_total: f64,
    pub tilt_idx: &'a [usize],
    pub eps: f64,
    pub max_iter: usize,
}

impl BsIteration<'_> {
    /// `Î(r)` with the per-sector tilt argmin folded in; also returns the
    /// minimizing tilt indices. Idle sectors report 0 and keep their tilt.
    fn bs_map(&self, r: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let q = crate::coupling::bs_to_cluster_power(self.b, self.beta, r);
        let weight: Vec<f64> = self
            .gamma
            .iter()
            .zip(self.beta)
            .map(|(g, be)| g / be)
            .collect();
        let (tilt_idx, ivals) = utility::min_tilt_interference(
            self.s, self.cm, self.gains, &q, self.b, &weight, self.cfg, self.tilt_idx,
        );
        let mut ihat = vec![0.0f64; self.s.n_bs];
        for c in 0..self.cm.n_clusters {
            let n = self.b[c];
            ihat[n] = ihat[n].max(weight[c] * ivals[c]);
        }
        (ihat, tilt_idx)
    }
}

/// Scaled fixed-point iteration on sector budgets,
/// `r⁺ = Pmax * Î(r) / ‖Î(r)‖₁`, with `Î` embedding the tilt argmin. At
/// convergence the sum power equals `Pmax` and the sector utilities
/// `r_n / Î_n` are balanced across serving sectors. Returns budgets, the
/// final tilt indices, and the trace.
pub fn scaled_bs_iteration(
    it: &BsIteration<'_>,
    r0: &[f64],
) -> Result<(Vec<f64>, Vec<usize>, Trace), SolveError> {
    assert_eq!(r0.len(), it.s.n_bs);
    let serving = |n: usize| it.b.contains(&n);
    assert!(
        (0..it.s.n_bs).all(|n| !serving(n) || r0[n] > 0.0),
        "serving sectors need positive initial budget"
    );

    let mut r = r0.to_vec();
    let mut trace = Trace::default();
    let mut residual = f64::INFINITY;
    for t in 1..=it.max_iter {
        let (ihat, tilt_idx) = it.bs_map(&r);
        let lv: f64 = ihat.iter().sum();
        debug_assert!(lv > 0.0 && lv.is_finite());
        let scale = it.p_max_total / lv;
        let next: Vec<f64> = ihat.iter().map(|v| v * scale).collect();
        residual = relative_step(&r, &next);
        trace.rows.push(TraceRow {
            t,
            x: next.clone(),
            residual,
            level: scale,
        });
        r = next;
        if residual <= it.eps {
            return Ok((r, tilt_idx, trace));
        }
    }
    Err(SolveError::NoConvergence {
        iterations: it.max_iter,
        residual,
        eps: it.eps,
        trace,
        x: r,
    })
}
