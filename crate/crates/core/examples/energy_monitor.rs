//! Energy, dissipation and blow-up monitoring along a short run.

use chemoflow::diagnostics::{dissipation_terms, energy_terms};
use chemoflow::harness::stabilize::Case;
use chemoflow::harness::{run_scenario, RunOptions};

fn main() {
    let cfg = Case::Coexistence
        .config(&["grid.cells=[32,32]".into(), "run.t_end=5".into()])
        .unwrap();
    let out = run_scenario(&cfg, &RunOptions { keep_frames: true, quiet: true, ..RunOptions::default() }).unwrap();
    println!("    t        F          G      D_n1      D_c4    D_hess       D_u   blow-up");
    for (r, s) in out.records.iter().zip(&out.frames).step_by(2) {
        let e = energy_terms(s, &cfg.energy).unwrap();
        let d = dissipation_terms(s).unwrap();
        println!(
            "{:>5.1} {:>9.5} {:>9.5} {:>9.2e} {:>9.2e} {:>9.2e} {:>9.2e} {:>9.4}",
            r.t,
            e.total(),
            r.energy_g.unwrap(),
            d.d_n1,
            d.d_c4,
            d.d_hess,
            d.d_u,
            r.blow_up
        );
    }
    let a = out.summary.accumulators;
    println!("A1 {:.4e}  A2 {:.4e}  A_u {:.4e}  A_c {:.4e}", a.a1, a.a2, a.a_u, a.a_c);
    println!("K = max F - F(0) = {:.3e}", out.summary.energy.f_bound);
}
