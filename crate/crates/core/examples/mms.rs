//! Convergence orders from manufactured solutions.
//!
//! cargo run --release --example mms [suite]

use chemoflow::harness::mms::{mms_convergence, MmsSuite};

fn main() {
    let suites: Vec<MmsSuite> = match std::env::args().nth(1) {
        Some(s) => vec![s.parse().unwrap()],
        None => MmsSuite::ALL.to_vec(),
    };
    for suite in suites {
        let r = mms_convergence(suite).unwrap();
        let verdict = if r.passed { "ok" } else { "below bound" };
        if r.levels.iter().all(|l| l.error == 0.0) {
            println!("{suite}: exact at every level ({verdict})");
        } else {
            println!("{suite}: order {:.3} ({verdict})", r.order);
        }
        for l in &r.levels {
            println!("  {:>4} cells  dt {:.3e}  error {:.4e}", l.cells, l.dt, l.error);
        }
    }
}
