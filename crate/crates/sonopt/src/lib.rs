//! Self-organizing network optimizer: joint tuning of antenna downtilts, user-cluster
//! assignments, and power budgets in a multi-cell network, maximizing the worst
//! cluster utility (a tunable blend of coverage and capacity).
//!
//! The optimizer works in the uplink, where interference decouples per receiver, and
//! solves the downlink through the spectral (Perron-Frobenius) duality between the
//! two directions. All power control reduces to normalized fixed-point iterations on
//! standard interference functions.
//!
//! The library is the primary interface; each major capability has a runnable example:
//!
//! ```text
//! examples/
//!   generate_scenario.rs    hexagonal scenario synthesis + clustering + JSON round trip
//!   balance_powers.rs       normalized fixed-point power balancing on a closed-form fixture
//!   joint_optimization.rs   full alternating uplink optimization with outer trace
//!   duality_check.rs        extended coupling matrices, spectral radii, downlink solve
//!   mu_tradeoff.rs          coverage/capacity trade-off sweep over the blend weight
//!   verify_oracles.rs       brute-force oracle equivalence report
//! ```
//!
//! Run one with `cargo run --release -p sonopt --example <name>`.
//!
//! A thin `sonopt` binary wraps the same entry points as subcommands
//! (`generate`, `optimize`, `sweep`, `verify`) for scripted use.

pub mod cli;
pub mod coupling;
pub mod duality;
pub mod fpsolver;
pub mod jointopt;
pub mod oracle;
pub mod scenario;
pub mod utility;

pub use scenario::{ClusterMap, Scenario};
