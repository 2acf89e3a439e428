//! Residuals of the four weak identities under simultaneous refinement of
//! the mesh and the step.
//!
//! cargo run --release --example weak_residuals [levels]

use chemoflow::harness::weak::weak_residual_study;
use chemoflow::harness::ScenarioConfig;

fn main() {
    let levels = std::env::args().nth(1).map_or(2, |s| s.parse().unwrap());
    let cfg = ScenarioConfig::from_toml(include_str!("../scenarios/weak.toml")).unwrap();
    let study = weak_residual_study(&cfg, levels).unwrap();
    println!("test modes {:?}", study.tests.modes);
    for l in &study.levels {
        let r = l.residuals;
        println!("{:?} dt {:.1e}: {:.3e} {:.3e} {:.3e} {:.3e}", l.cells, l.dt, r[0], r[1], r[2], r[3]);
    }
    for r in &study.ratios {
        println!("ratio {:.3} {:.3} {:.3} {:.3}", r[0], r[1], r[2], r[3]);
    }
}
