mod common;

use chemoflow::diagnostics::{
    blow_up_indicator, dissipation_terms, energy_f, energy_g, log_hessian_density, EnergyConfig,
};
use chemoflow::flow::{project, FlowSettings, PressureSolver};
use chemoflow::grid::{Grid, ScalarField};
use chemoflow::model::{steady_states, ModelParams};
use chemoflow::transport::State;
use common::{random_cells, random_faces};
use proptest::prelude::*;
use std::f64::consts::{E, PI};

fn state(g: &Grid, seed: u64, lo: f64, hi: f64) -> State {
    let (u, _) = project(&PressureSolver::new(g), &random_faces(g, seed ^ 3), &FlowSettings::default()).unwrap();
    State {
        t: 0.0,
        n1: random_cells(g, seed, lo, hi),
        n2: random_cells(g, seed ^ 1, lo, hi),
        c: random_cells(g, seed ^ 2, 0.0, hi),
        u,
        p: ScalarField::zeros(g),
    }
}

fn weights() -> impl Strategy<Value = EnergyConfig> {
    (0.1f64..5.0, 0.1f64..5.0, 0.1f64..5.0).prop_map(|(chi, kbar, b)| EnergyConfig { chi, kbar, b })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_energy_is_bounded_below(seed in any::<u64>(), cfg in weights(), dim in 2usize..=3) {
        let g = Grid::new(&[1.0, 0.7, 1.3][..dim], &[6, 5, 4][..dim]).unwrap();
        let s = state(&g, seed, 1e-6, 1.0);
        let f = energy_f(&s, &cfg).unwrap();
        prop_assert!(f >= -2.0 * g.domain_volume() / E);
    }

    #[test]
    fn lyapunov_functional_dominates_its_minimum(seed in any::<u64>(), cfg in weights(), a1 in 0.0f64..0.99, a2 in 0.0f64..0.99) {
        let g = Grid::unit(2, 8).unwrap();
        let s = state(&g, seed, 1e-4, 4.0);
        let t = steady_states(&ModelParams { a1, a2, ..ModelParams::default() });
        let gv = energy_g(&s, &cfg, &t).unwrap();
        prop_assert!(gv >= (t.n1_limit + t.n2_limit) * g.domain_volume() - 1e-12);
    }

    #[test]
    fn dissipation_terms_are_nonnegative(seed in any::<u64>()) {
        let g = Grid::unit(2, 8).unwrap();
        let d = dissipation_terms(&state(&g, seed, 1e-4, 4.0)).unwrap();
        for v in [d.d_n1, d.d_n2, d.d_c4, d.d_hess, d.d_u] {
            prop_assert!(v >= 0.0 && v.is_finite());
        }
    }
}

#[test]
fn log_hessian_vanishes_for_exponential_of_linear() {
    let g = Grid::unit(3, 8).unwrap();
    let c = ScalarField::from_fn(&g, |x| (0.7 * x[0] - 1.2 * x[1] + 0.4 * x[2]).exp());
    let (dens, underflow) = log_hessian_density(&c);
    assert!(!underflow);
    let cells = g.cells();
    let mut interior = 0;
    chemoflow::grid::for_each_index(cells, |i, n| {
        if (0..3).all(|a| i[a] > 0 && i[a] + 1 < cells[a]) {
            interior += 1;
            assert!(dens.values()[n].abs() <= 1e-18, "{:e}", dens.values()[n]);
        }
    });
    assert_eq!(interior, 6 * 6 * 6);
    let flat = log_hessian_density(&ScalarField::constant(&g, 2.5)).0;
    assert_eq!(flat.max_abs(), 0.0);
}

#[test]
fn tiny_signal_is_flagged_not_fatal() {
    let g = Grid::unit(2, 6).unwrap();
    let mut s = state(&g, 1, 0.1, 1.0);
    s.c.values_mut()[4] = 0.0;
    let d = dissipation_terms(&s).unwrap();
    assert!(d.underflow && d.d_hess.is_finite());
}

#[test]
fn entropy_energy_quadrature_converges() {
    let cfg = EnergyConfig::default();
    let f = |n: usize| {
        let g = Grid::unit(2, n).unwrap();
        let field = |a: f64, k: f64| ScalarField::from_fn(&g, |x| a + 0.3 * (k * PI * x[0]).cos() * (PI * x[1]).cos());
        let s = State {
            t: 0.0,
            n1: field(0.7, 1.0),
            n2: field(0.9, 2.0),
            c: field(1.0, 1.0),
            u: chemoflow::grid::FaceField::zeros(&g),
            p: ScalarField::zeros(&g),
        };
        energy_f(&s, &cfg).unwrap()
    };
    let (coarse, fine) = (f(64), f(512));
    assert!((coarse - fine).abs() <= 1e-3 * fine.abs().max(1.0), "{coarse} vs {fine}");
}

#[test]
fn blow_up_indicator_flags_nan() {
    let g = Grid::unit(2, 6).unwrap();
    let mut s = state(&g, 2, 0.1, 1.0);
    assert!(!blow_up_indicator(&s, 4.0, 1e6).flagged);
    s.n2.values_mut()[0] = f64::NAN;
    let b = blow_up_indicator(&s, 4.0, 1e6);
    assert!(b.flagged && b.value.is_nan());
}
