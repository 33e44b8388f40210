//! Cross-checks the fast solver paths against exhaustive enumeration on
//! instances small enough to brute-force: the per-cluster assignment argmin,
//! the per-sector tilt argmin, and the bisection route to the eigen-level.

use sonopt::coupling::{bs_to_cluster_power, TiltedGains};
use sonopt::oracle::{
    bisection_maxmin, brute_force_assignment, brute_force_tilt, OracleBudget,
};
use sonopt::duality::{balanced_level, build_lambda_dl};
use sonopt::scenario::{random_instance, ClusterMap, NoiseStyle, RandomInstanceSpec};
use sonopt::utility::{min_assignment_interference, min_tilt_interference, UtilityConfig};

fn main() {
    let budget = OracleBudget::default();
    let spec = RandomInstanceSpec::default();
    let mut worst_assign = 0.0f64;
    let mut worst_tilt = 0.0f64;
    let mut worst_bisect = 0.0f64;

    for seed in 0..8 {
        let (s, cm) = random_instance(seed, &spec);
        let gains = TiltedGains::build(&s);
        let cfg = UtilityConfig::new(0.5, s.noise_ul.clone());
        let mid = (s.tilt_grid_deg.len() - 1) / 2;
        let tilt_idx = vec![mid; s.n_bs];
        let theta = vec![s.tilt_grid_deg[mid]; s.n_bs];
        let allowed: Vec<usize> = (0..s.n_bs).collect();
        let q = vec![s.p_max_total / cm.n_clusters as f64; cm.n_clusters];

        // assignment: fast per-cluster argmin vs all |N|^C configurations
        let (_, ivals) = min_assignment_interference(&s, &cm, &gains, &q, &tilt_idx, &allowed, &cfg);
        let fast = (0..cm.n_clusters)
            .map(|c| q[c] / (s.gamma[c] * ivals[c]))
            .fold(f64::INFINITY, f64::min);
        let (exact, _) = brute_force_assignment(&s, &cm, &theta, &q, &allowed, &cfg, &budget).unwrap();
        worst_assign = worst_assign.max((fast - exact).abs() / exact);

        // tilt: fast per-sector argmin vs all |Theta|^N configurations
        let b = cm.home_bs_initial.clone();
        let by_bs = ClusterMap::clusters_per_bs(&b, s.n_bs);
        let mut beta = vec![0.0; cm.n_clusters];
        for served in &by_bs {
            for &c in served {
                beta[c] = 1.0 / served.len() as f64;
            }
        }
        let r: Vec<f64> = by_bs
            .iter()
            .map(|cs| if cs.is_empty() { 0.0 } else { 1.0 })
            .collect();
        let qb = bs_to_cluster_power(&b, &beta, &r);
        let weight: Vec<f64> = s.gamma.iter().zip(&beta).map(|(g, be)| g / be).collect();
        let (_, tvals) = min_tilt_interference(&s, &cm, &gains, &qb, &b, &weight, &cfg, &tilt_idx);
        let mut ihat = vec![0.0f64; s.n_bs];
        for c in 0..cm.n_clusters {
            ihat[b[c]] = ihat[b[c]].max(weight[c] * tvals[c]);
        }
        let fast_tilt = (0..s.n_bs)
            .filter(|&n| ihat[n] > 0.0)
            .map(|n| r[n] / ihat[n])
            .fold(f64::INFINITY, f64::min);
        let (exact_tilt, _) = brute_force_tilt(&s, &cm, &b, &beta, &r, &cfg, &budget).unwrap();
        worst_tilt = worst_tilt.max((fast_tilt - exact_tilt).abs() / exact_tilt);

        // level: bisection on feasibility bounds vs the Perron route
        let dual_spec = RandomInstanceSpec {
            noise: NoiseStyle::ClusterUniform,
            ..RandomInstanceSpec::default()
        };
        let (sd, cmd) = random_instance(seed, &dual_spec);
        let theta_d = vec![sd.tilt_grid_deg[mid]; sd.n_bs];
        let ext = build_lambda_dl(&sd, &cmd, &cmd.home_bs_initial, &theta_d);
        let (eigen, _) = balanced_level(&ext).unwrap();
        let bisected = bisection_maxmin(&ext, &budget);
        worst_bisect = worst_bisect.max((bisected - eigen).abs() / eigen);
    }

    println!("worst relative gap over 8 seeds");
    println!("  assignment argmin vs enumeration: {worst_assign:.3e}");
    println!("  tilt argmin vs enumeration:       {worst_tilt:.3e}");
    println!("  bisection vs eigen-level:         {worst_bisect:.3e}");
    assert!(worst_assign < 1e-9 && worst_tilt < 1e-9 && worst_bisect < 1e-6);
    println!("all within tolerance");
}
