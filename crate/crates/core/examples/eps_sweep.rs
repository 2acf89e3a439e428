//! Regularized solutions for decreasing eps and their space-time distances.
//!
//! cargo run --release --example eps_sweep

use chemoflow::harness::sweep::eps_consistency_sweep;
use chemoflow::harness::ScenarioConfig;

fn main() {
    let cfg = ScenarioConfig::from_toml(include_str!("../scenarios/eps_sweep.toml")).unwrap();
    let r = eps_consistency_sweep(&cfg, &[1e-1, 1e-2, 1e-3, 1e-4], false).unwrap();
    for p in &r.pairs {
        println!(
            "{:e} vs {:e}: n1 {:.3e} n2 {:.3e} c {:.3e} u {:.3e}",
            p.eps_a, p.eps_b, p.distance[0], p.distance[1], p.distance[2], p.distance[3]
        );
    }
    println!("Cauchy: {}", r.is_cauchy());
}
