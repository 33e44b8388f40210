//! Sweeps the blend weight between pure coverage (0) and pure capacity (1)
//! and tabulates what each setting buys: worst-user SINR falls as the mean
//! rises.

use sonopt::jointopt::{optimize_uplink, OptimizeParams};
use sonopt::scenario::{cluster_users, db_to_lin, generate_hex_scenario, lin_to_db, GeneratorParams};
use sonopt::utility::{mean_sinr, UtilityConfig};

fn main() {
    let mut s = generate_hex_scenario(4, 12, 9, &GeneratorParams::default()).unwrap();
    let cm = cluster_users(&s, 2).unwrap();
    s.set_uniform_gamma(cm.n_clusters, db_to_lin(-6.5));
    let params = OptimizeParams::default();

    println!("{:>5} {:>14} {:>14} {:>12}", "mu", "min_sinr_db", "mean_sinr_db", "level");
    let mut extremes = Vec::new();
    for i in 0..=10 {
        let mu = i as f64 / 10.0;
        let cfg = UtilityConfig::new(mu, s.noise_ul.clone());
        let sol = optimize_uplink(&s, &cm, &cfg, &params).unwrap();
        let min = sol.sinr_ul.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = mean_sinr(&sol.sinr_ul);
        println!(
            "{mu:>5.1} {:>14.3} {:>14.3} {:>12.5e}",
            lin_to_db(min),
            lin_to_db(mean),
            sol.level
        );
        if i == 0 || i == 10 {
            extremes.push(min);
        }
    }
    // The coverage end protects the worst user better than the capacity end.
    assert!(extremes[0] >= extremes[1]);
}
