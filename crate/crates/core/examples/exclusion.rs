//! Strong competition against the first species: n1 dies out and n2 fills
//! the domain.
//!
//! cargo run --release --example exclusion [overrides...]

use chemoflow::harness::stabilize::{stabilization_experiment, Case};
use chemoflow::harness::RunOptions;

fn main() {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let opts = RunOptions { quiet: true, ..RunOptions::default() };
    let (report, out) = stabilization_experiment(Case::Exclusion, &overrides, &opts).unwrap();
    for r in out.records.iter().step_by(10) {
        println!(
            "t {:>5.1}  mass n1 {:.4e}  mass n2 {:.6}  max c {:.2e}",
            r.t, r.mass[0], r.mass[1], r.max[2]
        );
    }
    println!("min n1 over the run {:e}", report.summary.audit.min_n1);
    println!("passed: {} {:?}", report.passed, report.reasons);
}
