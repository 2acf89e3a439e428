mod common;

use chemoflow::flow::{project, FlowSettings, PressureSolver};
use chemoflow::grid::{Grid, ScalarField};
use chemoflow::model::ModelParams;
use chemoflow::transport::{scalar_step, stable_dt, DiffusionSolver, State, TransportSettings};
use common::{random_cells, random_faces};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams> {
    (
        (0.0f64..2.0, 0.0f64..2.0, 0.0f64..2.0, 0.0f64..2.0),
        (0.1f64..2.0, 0.1f64..2.0, 0.0f64..2.0, 0.0f64..2.0),
        prop::sample::select(vec![0.0, 1e-3, 1e-1]),
    )
        .prop_map(|((chi1, chi2, a1, a2), (mu1, mu2, alpha, beta), eps)| ModelParams {
            chi1,
            chi2,
            a1,
            a2,
            mu1,
            mu2,
            alpha,
            beta,
            eps,
            ..ModelParams::default()
        })
}

fn state(grid: &Grid, seed: u64, speed: f64) -> State {
    let (mut u, _) = project(&PressureSolver::new(grid), &random_faces(grid, seed ^ 7), &FlowSettings::default()).unwrap();
    u.scale(speed / u.max_abs().max(1e-300));
    State {
        t: 0.0,
        n1: random_cells(grid, seed, 1e-3, 3.0),
        n2: random_cells(grid, seed ^ 1, 1e-3, 3.0),
        c: random_cells(grid, seed ^ 2, 0.0, 2.0),
        u,
        p: ScalarField::zeros(grid),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scalar_steps_keep_structure(p in params(), seed in any::<u64>(), dim in 2usize..=3, speed in 0.0f64..2.0) {
        let g = Grid::unit(dim, if dim == 2 { 12 } else { 6 }).unwrap();
        let settings = TransportSettings::default();
        let diffusion = DiffusionSolver::new(&g, settings.diffusion_tol);
        let mut s = state(&g, seed, speed);
        let vol = g.cell_volume();
        let bound = [
            (s.n1.sum() * vol).max(g.domain_volume()) + 1e-8,
            (s.n2.sum() * vol).max(g.domain_volume()) + 1e-8,
        ];
        for _ in 0..6 {
            let dt = stable_dt(&s, &p, &settings, 0.4).min();
            let step = scalar_step(&s, &p, dt, &settings, 0.4, &diffusion).unwrap();
            prop_assert!(step.n1.min() > 0.0 && step.n2.min() > 0.0);
            prop_assert!(step.c.min() >= 0.0);
            prop_assert!(step.c.max() <= s.c.max() + 1e-12);
            for i in 0..2 {
                let r = step.report;
                prop_assert!(r.ledger_error[i] <= 1e-10 * r.mass_before[i], "ledger {:e}", r.ledger_error[i]);
            }
            prop_assert!(step.n1.sum() * vol <= bound[0]);
            prop_assert!(step.n2.sum() * vol <= bound[1]);
            s.n1 = step.n1;
            s.n2 = step.n2;
            s.c = step.c;
            s.t += dt;
        }
    }
}

#[test]
fn oversized_step_is_rejected() {
    let g = Grid::unit(2, 8).unwrap();
    let s = state(&g, 5, 1.0);
    let p = ModelParams::default();
    let set = TransportSettings::default();
    let dt = stable_dt(&s, &p, &set, 0.4).min();
    let d = DiffusionSolver::new(&g, set.diffusion_tol);
    assert!(scalar_step(&s, &p, 2.0 * dt, &set, 0.4, &d).is_err());
}

#[test]
fn mass_above_domain_volume_decays() {
    let g = Grid::unit(2, 8).unwrap();
    let mut s = state(&g, 9, 0.0);
    s.n1 = ScalarField::constant(&g, 3.0);
    let p = ModelParams::default();
    let set = TransportSettings::default();
    let d = DiffusionSolver::new(&g, set.diffusion_tol);
    let before = s.n1.sum();
    let dt = stable_dt(&s, &p, &set, 0.4).min();
    let step = scalar_step(&s, &p, dt, &set, 0.4, &d).unwrap();
    assert!(step.n1.sum() < before);
}
