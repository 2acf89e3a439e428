//! Weak competition: both species settle at the interior equilibrium while
//! the signal is consumed and the fluid comes to rest.
//!
//! cargo run --release --example coexistence [overrides...]

use chemoflow::harness::stabilize::{stabilization_experiment, Case};
use chemoflow::harness::RunOptions;

fn main() {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let opts = RunOptions { quiet: true, ..RunOptions::default() };
    let (report, out) = stabilization_experiment(Case::Coexistence, &overrides, &opts).unwrap();
    for r in out.records.iter().step_by(10) {
        let d = r.distance.unwrap();
        println!(
            "t {:>5.1}  |n1-N1| {:.2e}  |n2-N2| {:.2e}  max c {:.2e}  max|u| {:.2e}  G {:.6}",
            r.t, d[0], d[1], d[2], d[3], r.energy_g.unwrap()
        );
    }
    println!("passed: {} {:?}", report.passed, report.reasons);
}
