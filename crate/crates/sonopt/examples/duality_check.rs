//! The uplink and downlink coupling matrices share their spectral radius when
//! every cluster carries the same load-weighted noise. This builds both
//! matrices on such an instance, compares the radii, and then solves the
//! downlink by the eigen route.

use sonopt::duality::{balanced_level, build_lambda_dl, build_lambda_ul, solve_downlink, spectral_radius};
use sonopt::jointopt::OptimizeParams;
use sonopt::scenario::{random_instance, NoiseStyle, RandomInstanceSpec};

fn main() {
    let spec = RandomInstanceSpec {
        noise: NoiseStyle::ClusterUniform,
        ..RandomInstanceSpec::default()
    };
    let (s, cm) = random_instance(2024, &spec);
    let mid = (s.tilt_grid_deg.len() - 1) / 2;
    let theta = vec![s.tilt_grid_deg[mid]; s.n_bs];
    let b = cm.home_bs_initial.clone();

    let ul = build_lambda_ul(&s, &cm, &b, &theta);
    let dl = build_lambda_dl(&s, &cm, &b, &theta);
    let (rho_ul, _) = spectral_radius(&ul.lambda).unwrap();
    let (rho_dl, _) = spectral_radius(&dl.lambda).unwrap();
    println!("spectral radius uplink   {rho_ul:.12}");
    println!("spectral radius downlink {rho_dl:.12}");
    println!("relative gap {:.3e}", (rho_ul - rho_dl).abs() / rho_ul);
    assert!((rho_ul - rho_dl).abs() / rho_ul < 1e-9);

    let (level, q) = balanced_level(&dl).unwrap();
    println!(
        "balanced downlink level {level:.6e} at sum power {:.3} W",
        q.iter().sum::<f64>()
    );

    // Full solve: optimizes the assignment on the uplink radius, then lifts
    // the downlink powers from the Perron vector.
    let sol = solve_downlink(&s, &cm, 1.0, &OptimizeParams::default(), false).unwrap();
    println!(
        "optimized: level={:.6e} rho_ul={:.9} rho_dl={:.9}",
        sol.level,
        sol.rho_ul.unwrap(),
        sol.rho_dl.unwrap()
    );
}
