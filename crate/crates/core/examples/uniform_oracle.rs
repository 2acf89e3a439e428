//! Spatially uniform data against the RK4 solution of the kinetics ODE.
//!
//! cargo run --release --example uniform_oracle

use chemoflow::harness::oracle::{ode_oracle, uniform_equivalence_test};
use chemoflow::harness::ScenarioConfig;

fn main() {
    let cfg = ScenarioConfig::from_toml(include_str!("../scenarios/uniform.toml")).unwrap();
    let ode = ode_oracle(&cfg.params, [0.6, 0.6, 1.0], cfg.run.t_end, 1e-4);
    for t in [0.0, 1.0, 5.0, 10.0] {
        let y = ode.at(t);
        println!("t {t:>4}: n1 {:.8} n2 {:.8} c {:.8e}", y[0], y[1], y[2]);
    }
    let r = uniform_equivalence_test(&cfg, 1e-4).unwrap();
    println!(
        "solver vs ODE over {} outputs: relative deviation n1 {:.2e} n2 {:.2e} c {:.2e}, max|u| {:e}",
        r.outputs, r.deviation[0], r.deviation[1], r.deviation[2], r.max_velocity
    );
}
