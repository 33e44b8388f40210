//! Network scenarios: sector geometry, link gains, user clustering, and the
//! versioned JSON file format (`scenario.v1`).
//!
//! A [`Scenario`] is an immutable description of the radio network: sector
//! positions and azimuths, user positions, the tilt-independent part of the
//! link gain matrix (pathloss + horizontal pattern + optional shadowing),
//! the allowed downtilt grid, noise powers, and power limits. Everything
//! downstream (coupling matrices, utilities, optimizers) is a pure function
//! of a `Scenario` plus a [`ClusterMap`].
//!
//! Internally all gains and powers are linear (watts); dB/dBm appear only at
//! I/O boundaries. The JSON files store the canonical linear values (so a
//! save/load round trip is exact) together with derived dB annotations for
//! human inspection; annotations are ignored on load.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const SCENARIO_SCHEMA: &str = "scenario.v1";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    Schema { expected: String, found: String },
    #[error("scenario i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Decibel ratio to linear scale.
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear ratio to decibels.
pub fn lin_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// dBm to watts.
pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Watts to dBm.
pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Vertical antenna behaviour of a sector.
///
/// `Omni` ignores tilt entirely (gain factor 1); fixtures use it so that the
/// declared gain table is the whole channel. `Tilted` applies the standard
/// parabolic vertical pattern around the electrical downtilt, with elevation
/// computed from the scenario geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AntennaPattern {
    Omni,
    Tilted {
        beamwidth_deg: f64,
        max_attenuation_db: f64,
        bs_height_m: f64,
        user_height_m: f64,
    },
}

impl AntennaPattern {
    /// 3GPP-style defaults: 10 degree vertical beamwidth, 20 dB floor,
    /// 32 m sector height, 1.5 m user height.
    pub fn tilted_default() -> Self {
        AntennaPattern::Tilted {
            beamwidth_deg: 10.0,
            max_attenuation_db: 20.0,
            bs_height_m: 32.0,
            user_height_m: 1.5,
        }
    }
}

/// Immutable network description. See the module docs for conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Number of sectors N (each tri-sectored site contributes 3).
    pub n_bs: usize,
    /// Number of users K.
    pub n_users: usize,
    /// Sector positions, meters.
    pub bs_pos: Vec<[f64; 2]>,
    /// Sector boresight azimuths, degrees.
    pub bs_azimuth_deg: Vec<f64>,
    /// User positions, meters.
    pub user_pos: Vec<[f64; 2]>,
    /// N x K tilt-independent linear gains (pathloss + horizontal pattern + shadowing).
    pub pathloss_gain: Array2<f64>,
    /// Allowed downtilt grid, degrees, strictly increasing.
    pub tilt_grid_deg: Vec<f64>,
    /// Per-user downlink noise power, watts.
    pub noise_dl: Vec<f64>,
    /// Per-user uplink noise power, watts.
    pub noise_ul: Vec<f64>,
    /// Network sum power budget, watts.
    pub p_max_total: f64,
    /// Per-sector power budget, watts.
    pub p_max_per_bs: Vec<f64>,
    /// Per-cluster utility targets, linear scale; length C once clusters exist,
    /// empty until then.
    pub gamma: Vec<f64>,
    pub antenna: AntennaPattern,
}

impl Scenario {
    /// Checks all structural invariants. `clusters`, when given, is validated
    /// against this scenario too (including `gamma` length C).
    pub fn validate(&self, clusters: Option<&ClusterMap>) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Validation(msg));
        if self.n_bs == 0 || self.n_users == 0 {
            return fail("need at least one sector and one user".into());
        }
        if self.bs_pos.len() != self.n_bs || self.bs_azimuth_deg.len() != self.n_bs {
            return fail("sector position/azimuth lengths disagree with n_bs".into());
        }
        if self.user_pos.len() != self.n_users {
            return fail("user position length disagrees with n_users".into());
        }
        if self.pathloss_gain.dim() != (self.n_bs, self.n_users) {
            return fail("pathloss_gain shape is not n_bs x n_users".into());
        }
        if !self.pathloss_gain.iter().all(|g| g.is_finite() && *g > 0.0) {
            return fail("pathloss gains must be finite and strictly positive".into());
        }
        if self.tilt_grid_deg.is_empty() {
            return fail("tilt grid is empty".into());
        }
        if !self.tilt_grid_deg.windows(2).all(|w| w[0] < w[1]) {
            return fail("tilt grid must be strictly increasing".into());
        }
        for (name, v) in [("noise_dl", &self.noise_dl), ("noise_ul", &self.noise_ul)] {
            if v.len() != self.n_users {
                return fail(format!("{name} length disagrees with n_users"));
            }
            if !v.iter().all(|x| x.is_finite() && *x > 0.0) {
                return fail(format!("{name} must be finite and strictly positive"));
            }
        }
        if !(self.p_max_total.is_finite() && self.p_max_total > 0.0) {
            return fail("p_max_total must be strictly positive".into());
        }
        if self.p_max_per_bs.len() != self.n_bs
            || !self.p_max_per_bs.iter().all(|x| x.is_finite() && *x > 0.0)
        {
            return fail("p_max_per_bs must have length n_bs, all strictly positive".into());
        }
        if !self.gamma.iter().all(|g| g.is_finite() && *g > 0.0) {
            return fail("gamma entries must be finite and strictly positive".into());
        }
        if let Some(cm) = clusters {
            cm.validate(self.n_bs, self.n_users)?;
            if self.gamma.len() != cm.n_clusters {
                return fail(format!(
                    "gamma has length {}, expected one target per cluster ({})",
                    self.gamma.len(),
                    cm.n_clusters
                ));
            }
        }
        Ok(())
    }

    /// Sets a uniform per-cluster target, sizing `gamma` to `n_clusters`.
    pub fn set_uniform_gamma(&mut self, n_clusters: usize, gamma: f64) {
        self.gamma = vec![gamma; n_clusters];
    }
}

/// Partition of users into clusters, each anchored to an initial home sector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMap {
    pub n_clusters: usize,
    /// user -> cluster.
    pub membership: Vec<usize>,
    /// cluster -> sector serving it initially.
    pub home_bs_initial: Vec<usize>,
    /// Intra-cluster power sharing, alpha_k = 1/|K_c| for k in cluster c.
    pub alpha: Vec<f64>,
    /// cluster -> member users, derived from `membership` (ascending user index).
    pub members: Vec<Vec<usize>>,
}

impl ClusterMap {
    /// Builds the map from a membership vector, deriving member lists and alpha.
    pub fn new(membership: Vec<usize>, home_bs_initial: Vec<usize>) -> Result<Self, ScenarioError> {
        let n_clusters = home_bs_initial.len();
        let mut members = vec![Vec::new(); n_clusters];
        for (k, &c) in membership.iter().enumerate() {
            if c >= n_clusters {
                return Err(ScenarioError::Validation(format!(
                    "user {k} assigned to cluster {c}, but only {n_clusters} clusters exist"
                )));
            }
            members[c].push(k);
        }
        if let Some(c) = members.iter().position(|m| m.is_empty()) {
            return Err(ScenarioError::Validation(format!("cluster {c} is empty")));
        }
        let mut alpha = vec![0.0; membership.len()];
        for m in &members {
            let a = 1.0 / m.len() as f64;
            for &k in m {
                alpha[k] = a;
            }
        }
        Ok(ClusterMap {
            n_clusters,
            membership,
            home_bs_initial,
            alpha,
            members,
        })
    }

    pub fn validate(&self, n_bs: usize, n_users: usize) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Validation(msg));
        if self.n_clusters == 0 {
            return fail("no clusters".into());
        }
        if self.membership.len() != n_users {
            return fail("membership length disagrees with n_users".into());
        }
        if self.home_bs_initial.len() != self.n_clusters {
            return fail("home_bs_initial length disagrees with n_clusters".into());
        }
        if self.home_bs_initial.iter().any(|&n| n >= n_bs) {
            return fail("home_bs_initial references a sector out of range".into());
        }
        let rebuilt = ClusterMap::new(self.membership.clone(), self.home_bs_initial.clone())?;
        if rebuilt.members != self.members || rebuilt.alpha != self.alpha {
            return fail("derived member lists or alpha are inconsistent with membership".into());
        }
        Ok(())
    }

    /// Clusters served by each sector under an assignment `b` (cluster -> sector).
    pub fn clusters_per_bs(b: &[usize], n_bs: usize) -> Vec<Vec<usize>> {
        let mut by_bs = vec![Vec::new(); n_bs];
        for (c, &n) in b.iter().enumerate() {
            by_bs[n].push(c);
        }
        by_bs
    }
}

/// Knobs of the hexagonal scenario generator. Defaults follow common macro-cell
/// system-simulation practice.
#[derive(Debug, Clone)]
pub struct GeneratorParams {
    pub isd_m: f64,
    pub min_dist_m: f64,
    pub tilt_grid_deg: Vec<f64>,
    pub p_max_per_bs_dbm: f64,
    pub noise_dl_dbm: f64,
    pub noise_ul_dbm: f64,
    /// Log-normal shadowing standard deviation in dB; 0 disables shadowing.
    pub shadowing_std_db: f64,
    pub horiz_beamwidth_deg: f64,
    pub horiz_max_att_db: f64,
    pub antenna: AntennaPattern,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            isd_m: 500.0,
            min_dist_m: 35.0,
            tilt_grid_deg: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
            p_max_per_bs_dbm: 46.0,
            noise_dl_dbm: -95.0,
            noise_ul_dbm: -99.0,
            shadowing_std_db: 0.0,
            horiz_beamwidth_deg: 70.0,
            horiz_max_att_db: 25.0,
            antenna: AntennaPattern::tilted_default(),
        }
    }
}

/// Positions of `n` sites on a hexagonal lattice: center first, then rings
/// outward, each ring walked in a fixed order.
fn hex_site_positions(n_sites: usize, isd: f64) -> Vec<[f64; 2]> {
    // Axial coordinates; distance between neighbouring sites equals isd.
    let to_xy = |q: i64, r: i64| {
        [
            isd * (q as f64 + r as f64 / 2.0),
            isd * (3f64.sqrt() / 2.0) * r as f64,
        ]
    };
    const DIRS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
    let mut out = vec![[0.0, 0.0]];
    let mut ring = 1i64;
    while out.len() < n_sites {
        // Start each ring at (-ring, ring) and walk the six sides.
        let (mut q, mut r) = (-ring, ring);
        for side in DIRS {
            for _ in 0..ring {
                if out.len() == n_sites {
                    return out;
                }
                out.push(to_xy(q, r));
                q += side.0;
                r += side.1;
            }
        }
        ring += 1;
    }
    out
}

fn wrap_deg(mut a: f64) -> f64 {
    while a > 180.0 {
        a -= 360.0;
    }
    while a < -180.0 {
        a += 360.0;
    }
    a
}

/// Tilt-independent linear gain between a sector and a user: distance pathloss
/// plus the parabolic horizontal pattern, both in dB, plus optional shadowing.
fn pathloss_gain_entry(
    bs: [f64; 2],
    azimuth_deg: f64,
    user: [f64; 2],
    p: &GeneratorParams,
    shadow_db: f64,
) -> f64 {
    let dx = user[0] - bs[0];
    let dy = user[1] - bs[1];
    let d_m = (dx * dx + dy * dy).sqrt().max(p.min_dist_m);
    let pl_db = 128.1 + 37.6 * (d_m / 1000.0).log10();
    let phi = wrap_deg(dy.atan2(dx).to_degrees() - azimuth_deg);
    let horiz_db = (12.0 * (phi / p.horiz_beamwidth_deg).powi(2)).min(p.horiz_max_att_db);
    db_to_lin(-(pl_db + horiz_db) - shadow_db)
}

/// Generates a tri-sectored hexagonal-layout scenario with `3 * n_sites`
/// sectors and `users_per_bs * 3 * n_sites` users placed uniformly over the
/// coverage disc. Deterministic for a fixed seed. `gamma` is left empty;
/// callers size it after clustering.
pub fn generate_hex_scenario(
    n_sites: usize,
    users_per_bs: usize,
    seed: u64,
    params: &GeneratorParams,
) -> Result<Scenario, ScenarioError> {
    if n_sites == 0 || users_per_bs == 0 {
        return Err(ScenarioError::Parameter(
            "n_sites and users_per_bs must be at least 1".into(),
        ));
    }
    let sites = hex_site_positions(n_sites, params.isd_m);
    let n_bs = 3 * n_sites;
    let mut bs_pos = Vec::with_capacity(n_bs);
    let mut bs_azimuth_deg = Vec::with_capacity(n_bs);
    for site in &sites {
        for s in 0..3 {
            bs_pos.push(*site);
            bs_azimuth_deg.push(120.0 * s as f64);
        }
    }

    let n_users = users_per_bs * n_bs;
    let r_cov = sites
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
        .fold(0.0, f64::max)
        + params.isd_m / 2.0;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut user_pos = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let r = r_cov * rng.random_range(0.0..1.0f64).sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        user_pos.push([r * phi.cos(), r * phi.sin()]);
    }

    let mut gain = Array2::zeros((n_bs, n_users));
    for n in 0..n_bs {
        for k in 0..n_users {
            let shadow_db = if params.shadowing_std_db > 0.0 {
                // Box-Muller; one independent draw per link.
                let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                params.shadowing_std_db
                    * (-2.0 * u1.ln()).sqrt()
                    * (std::f64::consts::TAU * u2).cos()
            } else {
                0.0
            };
            gain[[n, k]] =
                pathloss_gain_entry(bs_pos[n], bs_azimuth_deg[n], user_pos[k], params, shadow_db);
        }
    }

    let p_bs = dbm_to_w(params.p_max_per_bs_dbm);
    let s = Scenario {
        n_bs,
        n_users,
        bs_pos,
        bs_azimuth_deg,
        user_pos,
        pathloss_gain: gain,
        tilt_grid_deg: params.tilt_grid_deg.clone(),
        noise_dl: vec![dbm_to_w(params.noise_dl_dbm); n_users],
        noise_ul: vec![dbm_to_w(params.noise_ul_dbm); n_users],
        p_max_total: p_bs * n_bs as f64,
        p_max_per_bs: vec![p_bs; n_bs],
        gamma: Vec::new(),
        antenna: params.antenna.clone(),
    };
    s.validate(None)?;
    Ok(s)
}

/// Reference tilt used for cluster construction: the grid median.
pub fn reference_tilt(s: &Scenario) -> f64 {
    s.tilt_grid_deg[(s.tilt_grid_deg.len() - 1) / 2]
}

/// Groups users into clusters: attach each user to its strongest-gain sector
/// at the reference tilt, then split each sector's users into up to
/// `clusters_per_bs` quantile groups of a wideband SINR proxy (serving gain
/// over the sum of all other gains plus downlink noise). Sectors with fewer
/// users than groups get fewer clusters; sectors with no users get none.
pub fn cluster_users(s: &Scenario, clusters_per_bs: usize) -> Result<ClusterMap, ScenarioError> {
    if clusters_per_bs == 0 {
        return Err(ScenarioError::Parameter("clusters_per_bs must be at least 1".into()));
    }
    let tilt = reference_tilt(s);
    let gain_at = |n: usize, k: usize| crate::coupling::tilted_gain(s, n, k, tilt);

    // Strongest-gain attachment; ties to the lowest sector index.
    let mut attached: Vec<Vec<usize>> = vec![Vec::new(); s.n_bs];
    let mut proxy = vec![0.0f64; s.n_users];
    for k in 0..s.n_users {
        let mut best = 0usize;
        for n in 1..s.n_bs {
            if gain_at(n, k) > gain_at(best, k) {
                best = n;
            }
        }
        let serving = gain_at(best, k);
        let mut others = 0.0;
        for n in 0..s.n_bs {
            if n != best {
                others += gain_at(n, k);
            }
        }
        proxy[k] = serving / (others + s.noise_dl[k]);
        attached[best].push(k);
    }

    let mut membership = vec![usize::MAX; s.n_users];
    let mut home = Vec::new();
    for (n, users) in attached.iter().enumerate() {
        if users.is_empty() {
            continue;
        }
        let mut sorted = users.clone();
        sorted.sort_by(|&a, &b| proxy[a].partial_cmp(&proxy[b]).unwrap().then(a.cmp(&b)));
        let groups = clusters_per_bs.min(sorted.len());
        // Quantile split: sizes as equal as possible, low-proxy groups first.
        let base = sorted.len() / groups;
        let rem = sorted.len() % groups;
        let mut start = 0;
        for g in 0..groups {
            let len = base + usize::from(g < rem);
            let c = home.len();
            for &k in &sorted[start..start + len] {
                membership[k] = c;
            }
            home.push(n);
            start += len;
        }
    }
    ClusterMap::new(membership, home)
}

// ---------------------------------------------------------------------------
// serialization: scenario.v1
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ClustersV1 {
    membership: Vec<usize>,
    home_bs_initial: Vec<usize>,
}

/// Derived dB/dBm views of the canonical linear fields, written for human
/// inspection and ignored on load.
#[derive(Serialize, Deserialize, Default)]
#[serde(default)]
struct AnnotationsV1 {
    p_max_total_dbm: f64,
    p_max_per_bs_dbm: Vec<f64>,
    noise_dl_dbm: Vec<f64>,
    noise_ul_dbm: Vec<f64>,
    gamma_db: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFileV1 {
    schema: String,
    n_bs: usize,
    n_users: usize,
    bs_pos_m: Vec<[f64; 2]>,
    bs_azimuth_deg: Vec<f64>,
    user_pos_m: Vec<[f64; 2]>,
    /// Row-major N x K linear gains.
    pathloss_gain: Vec<Vec<f64>>,
    tilt_grid_deg: Vec<f64>,
    noise_dl_w: Vec<f64>,
    noise_ul_w: Vec<f64>,
    p_max_total_w: f64,
    p_max_per_bs_w: Vec<f64>,
    gamma: Vec<f64>,
    antenna: AntennaPattern,
    clusters: Option<ClustersV1>,
    annotations: AnnotationsV1,
}

/// Serializes a scenario (and optional clustering) to `scenario.v1` JSON text.
pub fn scenario_to_json(s: &Scenario, cm: Option<&ClusterMap>) -> Result<String, ScenarioError> {
    s.validate(cm)?;
    let file = ScenarioFileV1 {
        schema: SCENARIO_SCHEMA.to_string(),
        n_bs: s.n_bs,
        n_users: s.n_users,
        bs_pos_m: s.bs_pos.clone(),
        bs_azimuth_deg: s.bs_azimuth_deg.clone(),
        user_pos_m: s.user_pos.clone(),
        pathloss_gain: s
            .pathloss_gain
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        tilt_grid_deg: s.tilt_grid_deg.clone(),
        noise_dl_w: s.noise_dl.clone(),
        noise_ul_w: s.noise_ul.clone(),
        p_max_total_w: s.p_max_total,
        p_max_per_bs_w: s.p_max_per_bs.clone(),
        gamma: s.gamma.clone(),
        antenna: s.antenna.clone(),
        clusters: cm.map(|m| ClustersV1 {
            membership: m.membership.clone(),
            home_bs_initial: m.home_bs_initial.clone(),
        }),
        annotations: AnnotationsV1 {
            p_max_total_dbm: w_to_dbm(s.p_max_total),
            p_max_per_bs_dbm: s.p_max_per_bs.iter().map(|&w| w_to_dbm(w)).collect(),
            noise_dl_dbm: s.noise_dl.iter().map(|&w| w_to_dbm(w)).collect(),
            noise_ul_dbm: s.noise_ul.iter().map(|&w| w_to_dbm(w)).collect(),
            gamma_db: s.gamma.iter().map(|&g| lin_to_db(g)).collect(),
        },
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Parses `scenario.v1` JSON text, validating the result.
pub fn scenario_from_json(text: &str) -> Result<(Scenario, Option<ClusterMap>), ScenarioError> {
    let file: ScenarioFileV1 = serde_json::from_str(text)?;
    if file.schema != SCENARIO_SCHEMA {
        return Err(ScenarioError::Schema {
            expected: SCENARIO_SCHEMA.to_string(),
            found: file.schema,
        });
    }
    let rows = file.pathloss_gain.len();
    let cols = file.pathloss_gain.first().map_or(0, Vec::len);
    if rows != file.n_bs || file.pathloss_gain.iter().any(|r| r.len() != cols) {
        return Err(ScenarioError::Validation(
            "pathloss_gain rows are ragged or disagree with n_bs".into(),
        ));
    }
    let flat: Vec<f64> = file.pathloss_gain.into_iter().flatten().collect();
    let gain = Array2::from_shape_vec((rows, cols), flat)
        .map_err(|e| ScenarioError::Validation(format!("pathloss_gain shape: {e}")))?;
    let s = Scenario {
        n_bs: file.n_bs,
        n_users: file.n_users,
        bs_pos: file.bs_pos_m,
        bs_azimuth_deg: file.bs_azimuth_deg,
        user_pos: file.user_pos_m,
        pathloss_gain: gain,
        tilt_grid_deg: file.tilt_grid_deg,
        noise_dl: file.noise_dl_w,
        noise_ul: file.noise_ul_w,
        p_max_total: file.p_max_total_w,
        p_max_per_bs: file.p_max_per_bs_w,
        gamma: file.gamma,
        antenna: file.antenna,
    };
    let cm = file
        .clusters
        .map(|c| ClusterMap::new(c.membership, c.home_bs_initial))
        .transpose()?;
    s.validate(cm.as_ref())?;
    Ok((s, cm))
}

pub fn save_scenario(
    s: &Scenario,
    cm: Option<&ClusterMap>,
    path: impl AsRef<Path>,
) -> Result<(), ScenarioError> {
    let text = scenario_to_json(s, cm)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_scenario(
    path: impl AsRef<Path>,
) -> Result<(Scenario, Option<ClusterMap>), ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    scenario_from_json(&text)
}

// ---------------------------------------------------------------------------
// fixtures and randomized instances
// ---------------------------------------------------------------------------

/// Canonical symmetric two-cell fixture: two sectors, two singleton clusters,
/// serving gain 1, cross gain 0.1, noise 0.1 W, per-sector budget 1 W, unit
/// targets. All balancing quantities have closed forms (balanced level 5 at
/// q = (1, 1)), which the test suites pin.
pub fn two_cell_fixture() -> (Scenario, ClusterMap) {
    let s = Scenario {
        n_bs: 2,
        n_users: 2,
        bs_pos: vec![[0.0, 0.0], [500.0, 0.0]],
        bs_azimuth_deg: vec![0.0, 180.0],
        user_pos: vec![[100.0, 0.0], [400.0, 0.0]],
        pathloss_gain: Array2::from_shape_vec((2, 2), vec![1.0, 0.1, 0.1, 1.0]).unwrap(),
        tilt_grid_deg: vec![0.0],
        noise_dl: vec![0.1, 0.1],
        noise_ul: vec![0.1, 0.1],
        p_max_total: 2.0,
        p_max_per_bs: vec![1.0, 1.0],
        gamma: vec![1.0, 1.0],
        antenna: AntennaPattern::Omni,
    };
    let cm = ClusterMap::new(vec![0, 1], vec![0, 1]).unwrap();
    debug_assert!(s.validate(Some(&cm)).is_ok());
    (s, cm)
}

/// How randomized instances draw per-user noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseStyle {
    /// Independent log-uniform draw per user.
    Independent,
    /// One shared noise power for every user, so each cluster's load-weighted
    /// noise equals the same value. This is the regime in which uplink and
    /// downlink balancing are exactly dual.
    ClusterUniform,
}

/// Shape of a randomized test instance.
#[derive(Debug, Clone)]
pub struct RandomInstanceSpec {
    pub n_bs: usize,
    pub n_clusters: usize,
    pub n_users: usize,
    pub tilt_grid_deg: Vec<f64>,
    pub noise: NoiseStyle,
}

impl Default for RandomInstanceSpec {
    fn default() -> Self {
        RandomInstanceSpec {
            n_bs: 3,
            n_clusters: 4,
            n_users: 10,
            tilt_grid_deg: vec![0.0, 4.0, 8.0, 12.0],
            noise: NoiseStyle::Independent,
        }
    }
}

/// Small randomized instance with real geometry (so tilt matters), a random
/// non-uniform cluster partition, and noise per `spec.noise`. Deterministic
/// in the seed. Used by oracle-equivalence and property suites.
pub fn random_instance(seed: u64, spec: &RandomInstanceSpec) -> (Scenario, ClusterMap) {
    assert!(spec.n_clusters >= 1 && spec.n_users >= spec.n_clusters && spec.n_bs >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = GeneratorParams::default();

    let mut bs_pos = Vec::with_capacity(spec.n_bs);
    let mut bs_azimuth_deg = Vec::with_capacity(spec.n_bs);
    for _ in 0..spec.n_bs {
        let r = 600.0 * rng.random_range(0.0..1.0f64).sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        bs_pos.push([r * phi.cos(), r * phi.sin()]);
        bs_azimuth_deg.push(rng.random_range(0.0..360.0));
    }
    let mut user_pos = Vec::with_capacity(spec.n_users);
    for _ in 0..spec.n_users {
        let r = 900.0 * rng.random_range(0.0..1.0f64).sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        user_pos.push([r * phi.cos(), r * phi.sin()]);
    }

    let mut gain = Array2::zeros((spec.n_bs, spec.n_users));
    for n in 0..spec.n_bs {
        for k in 0..spec.n_users {
            gain[[n, k]] =
                pathloss_gain_entry(bs_pos[n], bs_azimuth_deg[n], user_pos[k], &params, 0.0);
        }
    }

    // Random partition into n_clusters non-empty groups: seed each cluster with
    // one user, scatter the rest.
    let mut membership = vec![0usize; spec.n_users];
    for (c, slot) in membership.iter_mut().take(spec.n_clusters).enumerate() {
        *slot = c;
    }
    for slot in membership.iter_mut().skip(spec.n_clusters) {
        *slot = rng.random_range(0..spec.n_clusters);
    }

    let noise_ul: Vec<f64> = match spec.noise {
        NoiseStyle::Independent => (0..spec.n_users)
            .map(|_| db_to_lin(rng.random_range(-128.0..-122.0)))
            .collect(),
        NoiseStyle::ClusterUniform => {
            let total = db_to_lin(rng.random_range(-118.0..-112.0));
            vec![total / spec.n_clusters as f64; spec.n_users]
        }
    };
    let noise_dl = noise_ul.clone();

    let p_bs = dbm_to_w(rng.random_range(40.0..46.0));
    let s = Scenario {
        n_bs: spec.n_bs,
        n_users: spec.n_users,
        bs_pos,
        bs_azimuth_deg,
        user_pos,
        pathloss_gain: gain,
        tilt_grid_deg: spec.tilt_grid_deg.clone(),
        noise_dl,
        noise_ul,
        p_max_total: p_bs * spec.n_bs as f64,
        p_max_per_bs: vec![p_bs; spec.n_bs],
        gamma: (0..spec.n_clusters)
            .map(|_| db_to_lin(rng.random_range(-8.0..0.0)))
            .collect(),
        antenna: params.antenna,
    };

    let ref_tilt = reference_tilt(&s);
    let mut members = vec![Vec::new(); spec.n_clusters];
    for (k, &c) in membership.iter().enumerate() {
        members[c].push(k);
    }
    let home: Vec<usize> = members
        .iter()
        .map(|m| {
            (0..spec.n_bs)
                .max_by(|&a, &b| {
                    let ga: f64 = m.iter().map(|&k| crate::coupling::tilted_gain(&s, a, k, ref_tilt)).sum();
                    let gb: f64 = m.iter().map(|&k| crate::coupling::tilted_gain(&s, b, k, ref_tilt)).sum();
                    ga.partial_cmp(&gb).unwrap()
                })
                .unwrap()
        })
        .collect();
    let cm = ClusterMap::new(membership, home).unwrap();
    debug_assert!(s.validate(Some(&cm)).is_ok());
    (s, cm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_counts_minimal() {
        let s = generate_hex_scenario(1, 1, 7, &GeneratorParams::default()).unwrap();
        assert_eq!(s.n_bs, 3);
        assert_eq!(s.n_users, 3);
        s.validate(None).unwrap();
    }

    #[test]
    fn hex_counts_fifteen_site() {
        let s = generate_hex_scenario(15, 30, 1, &GeneratorParams::default()).unwrap();
        assert_eq!(s.n_bs, 45);
        assert_eq!(s.n_users, 1350);
        assert!((s.p_max_per_bs[0] - dbm_to_w(46.0)).abs() < 1e-12);
    }

    #[test]
    fn generator_deterministic() {
        let p = GeneratorParams::default();
        let a = generate_hex_scenario(3, 4, 42, &p).unwrap();
        let b = generate_hex_scenario(3, 4, 42, &p).unwrap();
        assert_eq!(a, b);
        let ja = scenario_to_json(&a, None).unwrap();
        let jb = scenario_to_json(&b, None).unwrap();
        assert_eq!(ja, jb);
        let c = generate_hex_scenario(3, 4, 43, &p).unwrap();
        assert_ne!(a.user_pos, c.user_pos);
    }

    #[test]
    fn hex_sites_are_isd_spaced() {
        let sites = hex_site_positions(7, 500.0);
        assert_eq!(sites.len(), 7);
        // Every ring-1 site sits exactly one inter-site distance from the center.
        for site in &sites[1..7] {
            let d = (site[0] * site[0] + site[1] * site[1]).sqrt();
            assert!((d - 500.0).abs() < 1e-9, "ring-1 distance {d}");
        }
    }

    #[test]
    fn invalid_generator_counts() {
        assert!(matches!(
            generate_hex_scenario(0, 1, 1, &GeneratorParams::default()),
            Err(ScenarioError::Parameter(_))
        ));
        assert!(matches!(
            generate_hex_scenario(1, 0, 1, &GeneratorParams::default()),
            Err(ScenarioError::Parameter(_))
        ));
    }

    #[test]
    fn clustering_single_group_per_bs() {
        let s = generate_hex_scenario(1, 4, 5, &GeneratorParams::default()).unwrap();
        let cm = cluster_users(&s, 1).unwrap();
        // One cluster per sector that attracted at least one user.
        let occupied: std::collections::BTreeSet<usize> =
            cm.home_bs_initial.iter().copied().collect();
        assert_eq!(cm.n_clusters, occupied.len());
        assert_eq!(cm.membership.len(), s.n_users);
        cm.validate(s.n_bs, s.n_users).unwrap();
    }

    #[test]
    fn clustering_identical_users_share_cluster() {
        let mut s = generate_hex_scenario(2, 3, 9, &GeneratorParams::default()).unwrap();
        s.user_pos[1] = s.user_pos[0];
        for n in 0..s.n_bs {
            s.pathloss_gain[[n, 1]] = s.pathloss_gain[[n, 0]];
        }
        let cm = cluster_users(&s, 2).unwrap();
        assert_eq!(cm.membership[0], cm.membership[1]);
    }

    #[test]
    fn clustering_partition_and_alpha() {
        let s = generate_hex_scenario(3, 7, 11, &GeneratorParams::default()).unwrap();
        let cm = cluster_users(&s, 3).unwrap();
        cm.validate(s.n_bs, s.n_users).unwrap();
        let total: usize = cm.members.iter().map(Vec::len).sum();
        assert_eq!(total, s.n_users);
        for m in &cm.members {
            assert!(!m.is_empty());
            let sum: f64 = m.iter().map(|&k| cm.alpha[k]).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_cell_fixture_shape() {
        let (s, cm) = two_cell_fixture();
        s.validate(Some(&cm)).unwrap();
        assert_eq!(cm.n_clusters, 2);
        assert_eq!(cm.alpha, vec![1.0, 1.0]);
        assert_eq!(cm.members, vec![vec![0], vec![1]]);
        assert_eq!(s.pathloss_gain[[0, 0]], 1.0);
        assert_eq!(s.pathloss_gain[[0, 1]], 0.1);
    }

    #[test]
    fn roundtrip_two_cell() {
        let (s, cm) = two_cell_fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t2.json");
        save_scenario(&s, Some(&cm), &path).unwrap();
        let (s2, cm2) = load_scenario(&path).unwrap();
        assert_eq!(s, s2);
        assert_eq!(Some(cm), cm2);
    }

    #[test]
    fn roundtrip_generated_exact() {
        let s = generate_hex_scenario(2, 5, 77, &GeneratorParams::default()).unwrap();
        let mut s = s;
        let cm = cluster_users(&s, 2).unwrap();
        s.set_uniform_gamma(cm.n_clusters, db_to_lin(-6.5));
        let text = scenario_to_json(&s, Some(&cm)).unwrap();
        let (s2, cm2) = scenario_from_json(&text).unwrap();
        assert_eq!(s, s2);
        assert_eq!(Some(cm), cm2);
        // Saving the parsed copy reproduces the bytes.
        assert_eq!(text, scenario_to_json(&s2, cm2.as_ref()).unwrap());
    }

    #[test]
    fn load_rejects_negative_noise() {
        let (s, cm) = two_cell_fixture();
        let mut text = scenario_to_json(&s, Some(&cm)).unwrap();
        text = text.replace("\"noise_ul_w\": [\n    0.1,\n    0.1\n  ]", "\"noise_ul_w\": [\n    -0.1,\n    0.1\n  ]");
        assert!(text.contains("-0.1"), "fixture edit failed: {text}");
        match scenario_from_json(&text) {
            Err(ScenarioError::Validation(msg)) => assert!(msg.contains("noise_ul")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_schema_mismatch_and_truncation() {
        let (s, _) = two_cell_fixture();
        let text = scenario_to_json(&s, None).unwrap();
        let bad = text.replace("scenario.v1", "scenario.v9");
        assert!(matches!(
            scenario_from_json(&bad),
            Err(ScenarioError::Schema { .. })
        ));
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            scenario_from_json(truncated),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn random_instance_cluster_noise_is_uniform_per_cluster() {
        let spec = RandomInstanceSpec {
            noise: NoiseStyle::ClusterUniform,
            ..Default::default()
        };
        let (s, cm) = random_instance(3, &spec);
        // Load-weighted per-cluster noise is one shared value.
        let per_cluster: Vec<f64> = cm
            .members
            .iter()
            .map(|m| m.iter().map(|&k| cm.alpha[k] * s.noise_dl[k]).sum::<f64>())
            .collect();
        for z in &per_cluster {
            assert!((z - per_cluster[0]).abs() <= 1e-18 + 1e-12 * z.abs());
        }
        // And the cluster partition is not all-equal-sized, so the uniformity
        // above is not an artifact of symmetry.
        let sizes: Vec<usize> = cm.members.iter().map(Vec::len).collect();
        assert!(sizes.iter().any(|n| *n != sizes[0]));
    }

    #[test]
    fn random_instance_deterministic_and_valid() {
        let spec = RandomInstanceSpec::default();
        let (s1, cm1) = random_instance(9, &spec);
        let (s2, cm2) = random_instance(9, &spec);
        assert_eq!(s1, s2);
        assert_eq!(cm1, cm2);
        s1.validate(Some(&cm1)).unwrap();
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Arbitrary memberships either build a consistent partition or
            // come back as a validation error; never a panic or a bad map.
            #[test]
            fn cluster_map_from_arbitrary_membership(
                membership in proptest::collection::vec(0usize..6, 1..40),
                n_clusters in 1usize..6,
            ) {
                let homes = vec![0usize; n_clusters];
                match ClusterMap::new(membership.clone(), homes) {
                    Ok(cm) => {
                        for (k, &c) in membership.iter().enumerate() {
                            prop_assert!(cm.members[c].contains(&k));
                        }
                        let placed: usize = cm.members.iter().map(Vec::len).sum();
                        prop_assert_eq!(placed, membership.len());
                        for m in &cm.members {
                            prop_assert!(!m.is_empty());
                            let share: f64 = m.iter().map(|&k| cm.alpha[k]).sum();
                            prop_assert!((share - 1.0).abs() < 1e-12);
                        }
                        cm.validate(1, membership.len()).unwrap();
                    }
                    Err(e) => prop_assert!(matches!(e, ScenarioError::Validation(_))),
                }
            }
        }
    }
}
