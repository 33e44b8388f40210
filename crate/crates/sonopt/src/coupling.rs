//! Link coupling: tilt-dependent gains, user cross-coupling matrices, power
//! transforms between the cluster/sector/user levels, and SINR evaluation.
//!
//! The central object is [`CrossLink`]: for a fixed serving assignment and
//! tilt configuration, `v[[k, l]]` is the gain between the sector serving
//! user `k` (at that sector's tilt) and user `l`. Row `k` therefore describes
//! what user `k`'s receiver hears on the uplink; column `k` describes what
//! user `k` hears on the downlink. `v_tilde` is the same matrix with the
//! diagonal (the useful links) zeroed, leaving pure interference coupling.

use crate::scenario::{db_to_lin, AntennaPattern, ClusterMap, Scenario};
use ndarray::Array2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

/// User-to-user coupling for one (assignment, tilt) configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossLink {
    /// K x K; `v[[k, l]]` = gain(serving sector of k @ its tilt, user l).
    pub v: Array2<f64>,
    /// `v` with a zeroed diagonal.
    pub v_tilde: Array2<f64>,
}

/// Parabolic vertical pattern as a linear gain factor: attenuation
/// `min(12 ((elev - tilt)/beamwidth)^2, max_att)` dB below boresight.
pub fn vertical_pattern(tilt_deg: f64, elev_deg: f64, beamwidth_deg: f64, max_att_db: f64) -> f64 {
    let att_db = (12.0 * ((elev_deg - tilt_deg) / beamwidth_deg).powi(2)).min(max_att_db);
    db_to_lin(-att_db)
}

/// Downward elevation angle from sector `n`'s antenna to user `k`, degrees.
/// Positive when the antenna sits above the user.
pub fn elevation_deg(s: &Scenario, n: usize, k: usize, bs_height_m: f64, user_height_m: f64) -> f64 {
    let dx = s.user_pos[k][0] - s.bs_pos[n][0];
    let dy = s.user_pos[k][1] - s.bs_pos[n][1];
    let d = (dx * dx + dy * dy).sqrt();
    (bs_height_m - user_height_m).atan2(d).to_degrees()
}

/// Full linear gain between sector `n` at downtilt `tilt_deg` and user `k`.
pub fn tilted_gain(s: &Scenario, n: usize, k: usize, tilt_deg: f64) -> f64 {
    match s.antenna {
        AntennaPattern::Omni => s.pathloss_gain[[n, k]],
        AntennaPattern::Tilted {
            beamwidth_deg,
            max_attenuation_db,
            bs_height_m,
            user_height_m,
        } => {
            let elev = elevation_deg(s, n, k, bs_height_m, user_height_m);
            s.pathloss_gain[[n, k]]
                * vertical_pattern(tilt_deg, elev, beamwidth_deg, max_attenuation_db)
        }
    }
}

/// Dense cache of `tilted_gain` over the whole tilt grid, laid out so that a
/// (sector, tilt) row over users is contiguous. The tilt search and the
/// assignment search walk these rows in their inner loops.
pub struct TiltedGains {
    n_tilts: usize,
    n_users: usize,
    g: Vec<f64>,
}

impl TiltedGains {
    pub fn build(s: &Scenario) -> Self {
        let (n_bs, n_users) = (s.n_bs, s.n_users);
        let n_tilts = s.tilt_grid_deg.len();
        let mut g = vec![0.0; n_bs * n_tilts * n_users];
        for n in 0..n_bs {
            for (t, &tilt) in s.tilt_grid_deg.iter().enumerate() {
                let base = (n * n_tilts + t) * n_users;
                for k in 0..n_users {
                    g[base + k] = tilted_gain(s, n, k, tilt);
                }
            }
        }
        TiltedGains { n_tilts, n_users, g }
    }

    #[inline]
    pub fn at(&self, n: usize, t: usize, k: usize) -> f64 {
        self.g[(n * self.n_tilts + t) * self.n_users + k]
    }

    /// All user gains for sector `n` at tilt index `t`.
    #[inline]
    pub fn row(&self, n: usize, t: usize) -> &[f64] {
        let base = (n * self.n_tilts + t) * self.n_users;
        &self.g[base..base + self.n_users]
    }
}

/// Builds the cross-coupling for assignment `b` (cluster -> sector) and tilts
/// `theta_deg` (per sector). Users of one cluster share a serving sector, so
/// their rows of `v` coincide.
pub fn build_crosslink(s: &Scenario, cm: &ClusterMap, b: &[usize], theta_deg: &[f64]) -> CrossLink {
    assert_eq!(b.len(), cm.n_clusters);
    assert_eq!(theta_deg.len(), s.n_bs);
    let k_total = s.n_users;
    let mut v = Array2::zeros((k_total, k_total));
    for (c, members) in cm.members.iter().enumerate() {
        let n = b[c];
        let row: Vec<f64> = (0..k_total)
            .map(|l| tilted_gain(s, n, l, theta_deg[n]))
            .collect();
        for &k in members {
            v.row_mut(k).assign(&ndarray::ArrayView1::from(&row[..]));
        }
    }
    let mut v_tilde = v.clone();
    for k in 0..k_total {
        v_tilde[[k, k]] = 0.0;
    }
    CrossLink { v, v_tilde }
}

/// Spreads cluster powers to users: `p_k = alpha_k * q_{c(k)}`.
pub fn cluster_to_user_power(cm: &ClusterMap, q: &[f64]) -> Vec<f64> {
    assert_eq!(q.len(), cm.n_clusters);
    cm.membership
        .iter()
        .zip(&cm.alpha)
        .map(|(&c, &a)| a * q[c])
        .collect()
}

/// Splits sector powers to clusters: `q_c = beta_c * r_{b(c)}`.
pub fn bs_to_cluster_power(b: &[usize], beta: &[f64], r: &[f64]) -> Vec<f64> {
    assert_eq!(b.len(), beta.len());
    b.iter().zip(beta).map(|(&n, &be)| be * r[n]).collect()
}

/// Aggregates cluster powers to the sectors carrying them: `r_n = sum of q_c
/// over clusters assigned to n`.
pub fn cluster_to_bs_power(b: &[usize], q: &[f64], n_bs: usize) -> Vec<f64> {
    let mut r = vec![0.0; n_bs];
    for (&n, &qc) in b.iter().zip(q) {
        r[n] += qc;
    }
    r
}

/// Per-user SINR at user powers `p`. On the uplink, user `k`'s signal and the
/// interfering users are both heard at `k`'s serving sector (row `k` of `v`);
/// on the downlink, user `k` hears every serving sector (column `k`).
pub fn sinr(dir: Direction, x: &CrossLink, p: &[f64], noise: &[f64]) -> Vec<f64> {
    let k_total = p.len();
    assert_eq!(x.v.nrows(), k_total);
    assert_eq!(noise.len(), k_total);
    (0..k_total)
        .map(|k| {
            let interf: f64 = match dir {
                Direction::Uplink => (0..k_total).map(|l| x.v_tilde[[k, l]] * p[l]).sum(),
                Direction::Downlink => (0..k_total).map(|l| x.v_tilde[[l, k]] * p[l]).sum(),
            };
            p[k] * x.v[[k, k]] / (interf + noise[k])
        })
        .collect()
}
