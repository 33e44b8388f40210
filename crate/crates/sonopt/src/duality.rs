//! Sum-power balancing through the extended coupling matrix. Folding the
//! noise into the matrix as a rank-one term turns "balance all weighted
//! capacity utilities under `‖q‖₁ = P`" into a Perron eigenproblem: the
//! optimal level is `1/ρ(Λ)` and the balancing powers are the Perron vector
//! scaled to the budget. The uplink and downlink matrices are transposes up
//! to a diagonal similarity, so their radii coincide whenever the
//! load-weighted per-cluster noise is one shared value; that is what lets an
//! uplink-shaped search drive downlink assignment.

use crate::coupling::{self, CrossLink, Direction};
use crate::fpsolver::{SolveError, Trace, TraceRow};
use crate::jointopt::{optimize_uplink, OptimizeError, OptimizeParams, Solution};
use crate::scenario::{ClusterMap, Scenario};
use crate::utility::{self, UtilityConfig};
use ndarray::Array2;
use thiserror::Error;

/// `C x C` nonnegative matrix coupling cluster powers under a sum-power
/// budget; entry `(c, c')` scales how cluster `c'`'s power loads cluster `c`,
/// with the noise folded in via the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedCoupling {
    pub direction: Direction,
    pub lambda: Array2<f64>,
    /// Budget the rank-one noise term was built against.
    pub p_max_total: f64,
}

#[derive(Debug, Error)]
pub enum DualityError {
    #[error("coupling matrix maps the positive cone to zero")]
    ZeroMatrix,
    #[error("power iteration did not settle in {0} iterations")]
    NoConvergence(usize),
}

/// Per-sector cluster gain aggregates at fixed tilts:
/// `g[(n, c)] = Σ_{k∈c} α_k gain(n, k; θ_n)`. Everything in both coupling
/// matrices reduces to lookups here, which is also what makes re-assigning a
/// single cluster cheap.
struct GainTable {
    g: Array2<f64>,
    sizes: Vec<f64>,
    /// Plain (unweighted) per-cluster noise sums, one per direction argument.
    z: Vec<f64>,
}

impl GainTable {
    fn build(s: &Scenario, cm: &ClusterMap, theta_deg: &[f64], noise: &[f64]) -> GainTable {
        assert_eq!(theta_deg.len(), s.n_bs);
        for t in theta_deg {
            assert!(s.tilt_grid_deg.contains(t), "tilt {t} not on the grid");
        }
        let mut g = Array2::zeros((s.n_bs, cm.n_clusters));
        for n in 0..s.n_bs {
            for (c, members) in cm.members.iter().enumerate() {
                g[[n, c]] = members
                    .iter()
                    .map(|&k| cm.alpha[k] * coupling::tilted_gain(s, n, k, theta_deg[n]))
                    .sum();
            }
        }
        let sizes = cm.members.iter().map(|m| m.len() as f64).collect();
        let z = cm
            .members
            .iter()
            .map(|m| m.iter().map(|&k| noise[k]).sum())
            .collect();
        GainTable { g, sizes, z }
    }

    /// Row `c` of the uplink matrix for serving sector `n`: only this row
    /// changes when cluster `c` moves to `n`.
    fn uplink_row(&self, s: &Scenario, c: usize, n: usize, gamma: f64, out: &mut [f64]) {
        let g_c = self.g[[n, c]];
        let scale = self.sizes[c] * gamma / g_c;
        let noise = self.z[c] / s.p_max_total;
        for (cc, slot) in out.iter_mut().enumerate() {
            let m = if cc == c {
                (self.sizes[c] - 1.0) * g_c
            } else {
                self.sizes[c] * self.g[[n, cc]]
            };
            *slot = scale * (m + noise);
        }
    }
}

/// Downlink extended coupling at assignment `b` and tilts `theta_deg`:
/// `Λ_{cc'} = (γ_c |K_c|/g_c)(Σ_{k∈c} ṽ(b_{c'}, k) α-share + z_c/P)`, so
/// that `Λ q = Γ I^dl(q)` on the budget face `‖q‖₁ = P`.
pub fn build_lambda_dl(
    s: &Scenario,
    cm: &ClusterMap,
    b: &[usize],
    theta_deg: &[f64],
) -> ExtendedCoupling {
    let table = GainTable::build(s, cm, theta_deg, &s.noise_dl);
    let c_total = cm.n_clusters;
    let mut lambda = Array2::zeros((c_total, c_total));
    for c in 0..c_total {
        let g_c = table.g[[b[c], c]];
        let scale = table.sizes[c] * s.gamma[c] / g_c;
        let noise = table.z[c] / s.p_max_total;
        for cc in 0..c_total {
            // Σ_{k∈c} H(b_{c'}, k) = |K_c| * α-weighted sum, uniform shares.
            let m = if cc == c {
                (table.sizes[c] - 1.0) * g_c
            } else {
                table.sizes[c] * table.g[[b[cc], c]]
            };
            lambda[[c, cc]] = scale * (m + noise);
        }
    }
    ExtendedCoupling {
        direction: Direction::Downlink,
        lambda,
        p_max_total: s.p_max_total,
    }
}

/// Uplink counterpart; rows depend only on their own cluster's serving
/// sector.
pub fn build_lambda_ul(
    s: &Scenario,
    cm: &ClusterMap,
    b: &[usize],
    theta_deg: &[f64],
) -> ExtendedCoupling {
    let table = GainTable::build(s, cm, theta_deg, &s.noise_ul);
    let c_total = cm.n_clusters;
    let mut lambda = Array2::zeros((c_total, c_total));
    for c in 0..c_total {
        let mut row = vec![0.0; c_total];
        table.uplink_row(s, c, b[c], s.gamma[c], &mut row);
        for (cc, v) in row.into_iter().enumerate() {
            lambda[[c, cc]] = v;
        }
    }
    ExtendedCoupling {
        direction: Direction::Uplink,
        lambda,
        p_max_total: s.p_max_total,
    }
}

const POWER_ITER_CAP: usize = 200_000;

/// Spectral radius and ℓ1-normalized Perron vector of a nonnegative matrix
/// by power iteration, accurate to a relative 1e-13 eigen-residual.
pub fn spectral_radius(m: &Array2<f64>) -> Result<(f64, Vec<f64>), DualityError> {
    let dim = m.nrows();
    spectral_radius_from(m, &vec![1.0 / dim as f64; dim])
}

/// Same, warm-started; `x0` must be a nonnegative nonzero direction.
pub fn spectral_radius_from(
    m: &Array2<f64>,
    x0: &[f64],
) -> Result<(f64, Vec<f64>), DualityError> {
    let dim = m.nrows();
    assert_eq!(m.ncols(), dim);
    assert_eq!(x0.len(), dim);
    let norm: f64 = x0.iter().sum();
    assert!(norm > 0.0 && x0.iter().all(|v| *v >= 0.0));
    let mut x: Vec<f64> = x0.iter().map(|v| v / norm).collect();
    for _ in 0..POWER_ITER_CAP {
        let mut y = vec![0.0f64; dim];
        for (c, yc) in y.iter_mut().enumerate() {
            *yc = (0..dim).map(|cc| m[[c, cc]] * x[cc]).sum();
        }
        let lam: f64 = y.iter().sum();
        if lam <= 0.0 {
            return Err(DualityError::ZeroMatrix);
        }
        // ‖Mx − λx‖∞ against the scale of x: y is Mx, so the residual is
        // available without another multiply.
        let resid = x
            .iter()
            .zip(&y)
            .fold(0.0f64, |r, (xi, yi)| r.max((yi - lam * xi).abs()));
        let x_max = x.iter().fold(0.0f64, |a, v| a.max(*v));
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / lam;
        }
        if resid <= 1e-13 * lam * x_max {
            return Ok((lam, x));
        }
    }
    Err(DualityError::NoConvergence(POWER_ITER_CAP))
}

/// Best common utility level under the sum-power budget and the powers that
/// attain it: `(1/ρ, q̂)` with `‖q̂‖₁ = P`.
pub fn balanced_level(ext: &ExtendedCoupling) -> Result<(f64, Vec<f64>), DualityError> {
    let (rho, x) = spectral_radius(&ext.lambda)?;
    let q = x.iter().map(|v| v * ext.p_max_total).collect();
    Ok((1.0 / rho, q))
}

#[derive(Debug, Error)]
pub enum DownlinkError {
    #[error("uplink stage failed: {0}")]
    Uplink(#[from] OptimizeError),
    #[error(transparent)]
    Spectral(#[from] DualityError),
    #[error("downlink balancing failed: {0}")]
    Balance(#[from] SolveError),
}

impl DownlinkError {
    pub fn trace(&self) -> Option<&Trace> {
        match self {
            DownlinkError::Uplink(e) => Some(e.trace()),
            DownlinkError::Spectral(_) => None,
            DownlinkError::Balance(e) => Some(e.trace()),
        }
    }
}

/// Downlink solve from scratch: runs the uplink optimization for tilts and
/// an initial assignment, then hands over to [`solve_downlink_from`].
pub fn solve_downlink(
    s: &Scenario,
    cm: &ClusterMap,
    mu: f64,
    params: &OptimizeParams,
    enforce_per_bs: bool,
) -> Result<Solution, DownlinkError> {
    let cfg_ul = UtilityConfig::new(mu, s.noise_ul.clone());
    let uplink = optimize_uplink(s, cm, &cfg_ul, params)?;
    solve_downlink_from(s, cm, mu, params, &uplink, enforce_per_bs)
}

/// Downlink solution reusing tilts (and, as a starting point, the
/// assignment) of an uplink solution.
///
/// For the pure capacity objective the solve is exact given the assignment:
/// powers come from the Perron vector of the downlink coupling matrix, and
/// the assignment itself is improved by coordinate descent on the uplink
/// radius, which shares its optimum with the downlink radius whenever the
/// load-weighted per-cluster noise is uniform. For blended objectives the
/// coverage term has no eigen-form, so powers come from the normalized
/// fixed-point iteration on the downlink interference instead and the
/// assignment stays as handed over.
///
/// With `enforce_per_bs` the returned powers are scaled down to meet every
/// per-sector cap, trading the exact sum-power budget for feasibility.
pub fn solve_downlink_from(
    s: &Scenario,
    cm: &ClusterMap,
    mu: f64,
    params: &OptimizeParams,
    uplink: &Solution,
    enforce_per_bs: bool,
) -> Result<Solution, DownlinkError> {
    let mut b = uplink.b.clone();
    let theta = uplink.tilt_deg.clone();
    let cfg_dl = UtilityConfig::new(mu, s.noise_dl.clone());
    let mut trace = Trace::default();

    if mu == 1.0 {
        let table = GainTable::build(s, cm, &theta, &s.noise_ul);
        let ext = build_lambda_ul(s, cm, &b, &theta);
        let mut lambda = ext.lambda;
        let (mut rho, mut vec_ul) = spectral_radius(&lambda)?;
        let c_total = cm.n_clusters;
        let mut row_buf = vec![0.0; c_total];
        let mut prev_row = vec![0.0; c_total];
        for pass in 1..=params.outer_cap {
            let rho_at_pass_start = rho;
            for c in 0..c_total {
                for n in 0..s.n_bs {
                    if n == b[c] {
                        continue;
                    }
                    table.uplink_row(s, c, n, s.gamma[c], &mut row_buf);
                    for cc in 0..c_total {
                        prev_row[cc] = lambda[[c, cc]];
                        lambda[[c, cc]] = row_buf[cc];
                    }
                    let (rho_new, vec_new) = spectral_radius_from(&lambda, &vec_ul)?;
                    if rho_new < rho * (1.0 - 1e-12) {
                        rho = rho_new;
                        vec_ul = vec_new;
                        b[c] = n;
                    } else {
                        for cc in 0..c_total {
                            lambda[[c, cc]] = prev_row[cc];
                        }
                    }
                }
            }
            let ext_dl = build_lambda_dl(s, cm, &b, &theta);
            let (level, q) = balanced_level(&ext_dl)?;
            trace.rows.push(TraceRow {
                t: pass,
                x: q,
                residual: (rho_at_pass_start - rho) / rho_at_pass_start,
                level,
            });
            if rho >= rho_at_pass_start * (1.0 - 1e-8) {
                break;
            }
        }
        let ext_dl = build_lambda_dl(s, cm, &b, &theta);
        let (rho_dl, _) = spectral_radius(&ext_dl.lambda)?;
        let (_, q) = balanced_level(&ext_dl)?;
        let sol = assemble(
            s, cm, mu, &b, &theta, q, trace,
            Some(rho), Some(rho_dl), enforce_per_bs, &cfg_dl,
        );
        return Ok(sol);
    }

    // Blended objective: balance the downlink joint interference at the sum
    // budget with fixed assignment and tilts.
    let x = downlink_crosslink(s, cm, &b, &theta);
    let gamma = s.gamma.clone();
    let cm_inner = cm.clone();
    let cfg_inner = cfg_dl.clone();
    let mut prob = crate::fpsolver::FixedPointProblem {
        dim: cm.n_clusters,
        f: move |q: &[f64]| {
            utility::joint_interference(&x, &cm_inner, q, &cfg_inner)
                .into_iter()
                .zip(&gamma)
                .map(|(i, g)| i * g)
                .collect()
        },
        l: |v: &[f64]| v.iter().sum(),
        target_level: s.p_max_total,
        eps: params.eps1,
        max_iter: params.inner_max_iter,
    };
    let start = vec![s.p_max_total / cm.n_clusters as f64; cm.n_clusters];
    let (q, fp_trace) = crate::fpsolver::solve_normalized(&mut prob, &start)?;
    let rho_ul = spectral_radius(&build_lambda_ul(s, cm, &b, &theta).lambda)?.0;
    let rho_dl = spectral_radius(&build_lambda_dl(s, cm, &b, &theta).lambda)?.0;
    Ok(assemble(
        s, cm, mu, &b, &theta, q, fp_trace,
        Some(rho_ul), Some(rho_dl), enforce_per_bs, &cfg_dl,
    ))
}

/// Cross-link matrix seen by downlink receivers: same gains, transposed
/// off-diagonal coupling.
pub fn downlink_crosslink(s: &Scenario, cm: &ClusterMap, b: &[usize], theta: &[f64]) -> CrossLink {
    let x = coupling::build_crosslink(s, cm, b, theta);
    CrossLink {
        v_tilde: x.v_tilde.t().to_owned(),
        v: x.v,
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    s: &Scenario,
    cm: &ClusterMap,
    mu: f64,
    b: &[usize],
    theta: &[f64],
    mut q: Vec<f64>,
    trace: Trace,
    rho_ul: Option<f64>,
    rho_dl: Option<f64>,
    enforce_per_bs: bool,
    cfg_dl: &UtilityConfig,
) -> Solution {
    let mut r = coupling::cluster_to_bs_power(b, &q, s.n_bs);
    if enforce_per_bs {
        let excess = r
            .iter()
            .zip(&s.p_max_per_bs)
            .fold(0.0f64, |m, (rn, cap)| m.max(rn / cap));
        if excess > 1.0 {
            for v in q.iter_mut().chain(r.iter_mut()) {
                *v /= excess;
            }
        }
    }
    // The level reported is the one the returned powers actually achieve,
    // not the solver's last normalization value; the two differ by the
    // final residual (and by the cap scaling above).
    let x = downlink_crosslink(s, cm, b, theta);
    let ivals = utility::joint_interference(&x, cm, &q, cfg_dl);
    let level = q
        .iter()
        .zip(&s.gamma)
        .zip(&ivals)
        .map(|((qc, g), i)| qc / (g * i))
        .fold(f64::INFINITY, f64::min);
    let beta: Vec<f64> = (0..cm.n_clusters).map(|c| q[c] / r[b[c]]).collect();
    let p = coupling::cluster_to_user_power(cm, &q);
    let xm = coupling::build_crosslink(s, cm, b, theta);
    let sinr_ul = coupling::sinr(Direction::Uplink, &xm, &p, &s.noise_ul);
    let sinr_dl = coupling::sinr(Direction::Downlink, &xm, &p, &s.noise_dl);
    Solution {
        direction: Direction::Downlink,
        mu,
        b: b.to_vec(),
        tilt_deg: theta.to_vec(),
        q,
        r,
        p,
        beta,
        level,
        feasible: level > 1.0,
        sinr_ul,
        sinr_dl,
        outer_trace: trace,
        rho_ul,
        rho_dl,
    }
}
