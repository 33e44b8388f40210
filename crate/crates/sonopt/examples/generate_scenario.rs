//! Synthesizes a hexagonal multi-site scenario, clusters its users, and
//! round-trips everything through the JSON scenario format.

use sonopt::scenario::{
    cluster_users, db_to_lin, generate_hex_scenario, load_scenario, save_scenario,
    GeneratorParams,
};

fn main() {
    let params = GeneratorParams {
        shadowing_std_db: 6.0,
        ..GeneratorParams::default()
    };
    let mut s = generate_hex_scenario(7, 20, 42, &params).expect("valid generator inputs");
    let cm = cluster_users(&s, 3).expect("clusters per sector > 0");
    s.set_uniform_gamma(cm.n_clusters, db_to_lin(-6.5));

    println!(
        "{} sectors on {} sites, {} users, {} clusters",
        s.n_bs,
        s.n_bs / 3,
        s.n_users,
        cm.n_clusters
    );
    println!(
        "sum power budget {:.1} W, tilt grid {:?} deg",
        s.p_max_total, s.tilt_grid_deg
    );
    let sizes: Vec<usize> = cm.members.iter().map(|m| m.len()).collect();
    println!(
        "cluster sizes: min {} / max {}",
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap()
    );

    let path = std::env::temp_dir().join("sonopt_example_scenario.json");
    save_scenario(&s, Some(&cm), &path).expect("writable temp dir");
    let (s2, cm2) = load_scenario(&path).expect("file just written");
    let cm2 = cm2.expect("cluster map was saved");
    assert_eq!(s2.n_users, s.n_users);
    assert_eq!(cm2.n_clusters, cm.n_clusters);
    assert_eq!(s2.gamma, s.gamma);
    println!("round trip via {} ok", path.display());
}
