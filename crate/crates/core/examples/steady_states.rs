//! Regime classification and the constant equilibria of the kinetics.

use chemoflow::model::{lv_reaction, steady_states, ModelParams};

fn main() {
    for (a1, a2) in [(0.5, 0.5), (0.2, 0.9), (1.5, 0.5), (1.0, 0.3), (1.5, 1.5)] {
        let p = ModelParams { a1, a2, ..ModelParams::default() };
        let s = steady_states(&p);
        match s.limits() {
            Some([n1, n2]) => {
                let (r1, r2) = lv_reaction(n1, n2, &p);
                println!("a1 {a1:<4} a2 {a2:<4} {:?}: ({n1:.4}, {n2:.4}), kinetics ({r1:e}, {r2:e})", s.regime);
            }
            None => println!("a1 {a1:<4} a2 {a2:<4} {:?}: no limit asserted", s.regime),
        }
    }
}
