//! One time step for the two populations and the signal.
//!
//! Splitting order per step: fluid advection, chemotactic drift, implicit
//! diffusion, then reaction and consumption. Advection and drift use
//! donor-cell fluxes under a step restriction that keeps every cell
//! coefficient nonnegative; diffusion is backward Euler (an M-matrix
//! solve); the kinetics use a Patankar-type update. Nothing is clipped.

use crate::grid::{for_each_index, FaceField, Grid, ScalarField, VelocityField};
use crate::model::{chemo_mobility, consumption_rate, ModelParams};
use crate::ops::{advect_upwind, divergence_faces, gradient_faces, laplacian_neumann_into, max_outflow_rate};
use crate::solver::{iteration_cap, pcg, AxisKind, SeparableInverse, SolverError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Values below this count as a positivity failure (roundoff allowance).
pub const POSITIVITY_FLOOR: f64 = -1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("dt = {dt:e} exceeds the stability limit {limit:e} ({which}); reduce dt")]
    Cfl {
        dt: f64,
        limit: f64,
        which: &'static str,
    },
    #[error("positivity lost in {field}: minimum {min:e} after {stage}")]
    Positivity {
        field: &'static str,
        min: f64,
        stage: &'static str,
    },
    #[error("implicit diffusion solve failed: {0}")]
    Diffusion(#[from] SolverError),
}

/// One slice of the coupled system.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub n1: ScalarField,
    pub n2: ScalarField,
    pub c: ScalarField,
    pub u: VelocityField,
    /// Pressure in the `+grad P` convention.
    pub p: ScalarField,
}

impl State {
    pub fn grid(&self) -> &Grid {
        self.n1.grid()
    }
}

/// Step-size policy for the scalar equations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSettings {
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub diffusion_tol: f64,
}

impl Default for TransportSettings {
    fn default() -> Self {
        TransportSettings {
            cfl_safety: 0.4,
            dt_max: 0.02,
            dt_min: 1e-8,
            diffusion_tol: 1e-12,
        }
    }
}

/// Implicit diffusion on the Neumann box.
#[derive(Clone, Debug)]
pub struct DiffusionSolver {
    grid: Grid,
    inverse: SeparableInverse,
    tol: f64,
}

impl DiffusionSolver {
    pub fn new(grid: &Grid, tol: f64) -> Self {
        DiffusionSolver {
            grid: *grid,
            inverse: SeparableInverse::new(grid, grid.cells(), &[AxisKind::NeumannCell; 3]),
            tol,
        }
    }

    /// Solve `(I - dt lap) x = b`, warm-started from `b`.
    pub fn solve(&self, b: &ScalarField, dt: f64) -> Result<ScalarField, SolverError> {
        let grid = self.grid;
        let mut x = b.values().to_vec();
        let apply = |v: &[f64], o: &mut [f64]| {
            laplacian_neumann_into(&grid, v, o);
            for k in 0..v.len() {
                o[k] = v[k] - dt * o[k];
            }
        };
        let precond = |r: &[f64], z: &mut [f64]| self.inverse.apply(1.0, dt, r, z);
        pcg(apply, precond, b.values(), &mut x, self.tol, iteration_cap(&grid))?;
        Ok(ScalarField::from_values(&grid, x).expect("grid-sized buffer"))
    }
}

/// Conservative chemotactic drift `div(chi m(n) grad c)` with the mobility
/// taken from the donor cell: the face flux `chi m grad c` flows up the
/// signal gradient, so the donor is the cell on the low-`c` side.
pub fn chemotaxis_div(n: &ScalarField, c: &ScalarField, chi: f64, eps: f64) -> ScalarField {
    let grid = *n.grid();
    if chi == 0.0 {
        return ScalarField::zeros(&grid);
    }
    let vals = n.values();
    let cs = grid.strides();
    let mut flux = gradient_faces(c);
    for a in 0..grid.dim() {
        let n_a = grid.cells()[a];
        let comp = flux.comp_mut(a);
        for_each_index(grid.face_shape(a), |i, k| {
            let p = i[a];
            if p > 0 && p < n_a {
                let hi = grid.index(i);
                let g = comp[k];
                let donor = if g > 0.0 { vals[hi - cs[a]] } else { vals[hi] };
                comp[k] = chi * chemo_mobility(donor, eps) * g;
            }
        });
    }
    divergence_faces(&flux)
}

/// Patankar-type kinetics update
/// `n_i' = n_i (1 + dt mu_i) / (1 + dt mu_i (n_i + a_i n_j))`.
/// Positive for any `dt > 0`; fixed exactly where the competition terms vanish.
#[inline]
pub fn reaction_update(n1: f64, n2: f64, params: &ModelParams, dt: f64) -> (f64, f64) {
    let r1 = dt * params.mu1;
    let r2 = dt * params.mu2;
    (
        n1 * (1.0 + r1) / (1.0 + r1 * (n1 + params.a1 * n2)),
        n2 * (1.0 + r2) / (1.0 + r2 * (n2 + params.a2 * n1)),
    )
}

/// Individual step limits; the controller takes the minimum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtLimits {
    /// `safety * min(h) / max|u|`
    pub fluid: f64,
    /// `safety * min(h) / max|chi grad c|`
    pub chemotaxis: f64,
    /// Cellwise outflow bound: keeps every donor-cell coefficient positive
    /// for both the fluid and the drift sub-steps.
    pub outflow: f64,
    /// `dt mu_i (1 + n_i + a_i n_j) < 1` with the safety factor applied.
    pub reaction: f64,
}

impl DtLimits {
    pub fn min(&self) -> f64 {
        self.fluid
            .min(self.chemotaxis)
            .min(self.outflow)
            .min(self.reaction)
    }

    pub fn binding(&self) -> &'static str {
        let m = self.min();
        if m == self.fluid {
            "fluid CFL"
        } else if m == self.chemotaxis {
            "chemotactic CFL"
        } else if m == self.outflow {
            "donor-cell outflow"
        } else {
            "reaction bound"
        }
    }
}

/// Drift speeds `chi m(n_donor) grad c / n_donor <= chi |grad c|` per face,
/// used for the outflow bound.
fn drift_outflow_rate(c: &ScalarField, chi: f64) -> f64 {
    if chi == 0.0 {
        return 0.0;
    }
    let mut g = gradient_faces(c);
    g.scale(chi);
    // Outflow of a cell through a face happens when the cell is the donor;
    // a cell is donor on a face iff the drift points away from it.
    max_outflow_rate(&g)
}

pub fn stable_dt(state: &State, params: &ModelParams, settings: &TransportSettings, fluid_safety: f64) -> DtLimits {
    let grid = state.grid();
    let h = grid.min_spacing();
    let umax = state.u.max_abs().max(1e-12);
    let chi = params.chi1.max(params.chi2);
    let gc = gradient_faces(&state.c).max_abs();
    let drift = (chi * gc).max(1e-12);
    let fluid_rate = max_outflow_rate(&state.u);
    let drift_rate = drift_outflow_rate(&state.c, chi);
    let outflow = settings.cfl_safety / fluid_rate.max(drift_rate).max(1e-12);
    let react = state
        .n1
        .values()
        .iter()
        .zip(state.n2.values())
        .map(|(&a, &b)| {
            (params.mu1 * (1.0 + a + params.a1 * b)).max(params.mu2 * (1.0 + b + params.a2 * a))
        })
        .fold(0.0, f64::max);
    DtLimits {
        fluid: fluid_safety * h / umax,
        chemotaxis: settings.cfl_safety * h / drift,
        outflow,
        reaction: settings.cfl_safety / react.max(1e-12),
    }
}

/// Per-step bookkeeping from [`scalar_step`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalarStepReport {
    /// `|Delta int n_i - dt int R_i|` where `dt R_i` is the Patankar increment.
    pub ledger_error: [f64; 2],
    /// `int n_i` at the start of the step.
    pub mass_before: [f64; 2],
    /// `dt int R_i`.
    pub reaction_mass: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct ScalarStep {
    pub n1: ScalarField,
    pub n2: ScalarField,
    pub c: ScalarField,
    pub report: ScalarStepReport,
}

fn check_positive(f: &ScalarField, field: &'static str, stage: &'static str) -> Result<(), TransportError> {
    let min = f.min();
    if !(min >= POSITIVITY_FLOOR) {
        return Err(TransportError::Positivity { field, min, stage });
    }
    Ok(())
}

fn transport_population(
    n: &ScalarField,
    state: &State,
    chi: f64,
    eps: f64,
    dt: f64,
    diffusion: &DiffusionSolver,
    field: &'static str,
) -> Result<ScalarField, TransportError> {
    let mut a = n.clone();
    if state.u.max_abs() > 0.0 {
        let adv = advect_upwind(n, &state.u);
        for (v, d) in a.values_mut().iter_mut().zip(adv.values()) {
            *v -= dt * d;
        }
        check_positive(&a, field, "advection")?;
    }
    if chi != 0.0 {
        let drift = chemotaxis_div(&a, &state.c, chi, eps);
        for (v, d) in a.values_mut().iter_mut().zip(drift.values()) {
            *v -= dt * d;
        }
        check_positive(&a, field, "chemotaxis")?;
    }
    let out = diffusion.solve(&a, dt)?;
    check_positive(&out, field, "diffusion")?;
    Ok(out)
}

/// Advance `(n1, n2, c)` by `dt` with the velocity frozen at `state.u`.
pub fn scalar_step(
    state: &State,
    params: &ModelParams,
    dt: f64,
    settings: &TransportSettings,
    fluid_safety: f64,
    diffusion: &DiffusionSolver,
) -> Result<ScalarStep, TransportError> {
    let limits = stable_dt(state, params, settings, fluid_safety);
    let limit = limits.min();
    if dt > limit * (1.0 + 1e-12) {
        return Err(TransportError::Cfl {
            dt,
            limit,
            which: limits.binding(),
        });
    }
    let vol = state.grid().cell_volume();
    let mass_before = [state.n1.sum() * vol, state.n2.sum() * vol];

    let n1t = transport_population(&state.n1, state, params.chi1, params.eps, dt, diffusion, "n1")?;
    let n2t = transport_population(&state.n2, state, params.chi2, params.eps, dt, diffusion, "n2")?;

    let mut c = state.c.clone();
    if state.u.max_abs() > 0.0 {
        let adv = advect_upwind(&state.c, &state.u);
        for (v, d) in c.values_mut().iter_mut().zip(adv.values()) {
            *v -= dt * d;
        }
        check_positive(&c, "c", "advection")?;
    }
    let mut c = diffusion.solve(&c, dt)?;
    check_positive(&c, "c", "diffusion")?;

    let mut n1 = n1t.clone();
    let mut n2 = n2t.clone();
    {
        let (v1, v2, vc) = (n1.values_mut(), n2.values_mut(), c.values_mut());
        for k in 0..v1.len() {
            let (a, b) = (n1t.values()[k], n2t.values()[k]);
            let (na, nb) = reaction_update(a, b, params, dt);
            v1[k] = na;
            v2[k] = nb;
            // Integrating factor with the rate at the sub-step midpoint.
            let g = consumption_rate(0.5 * (a + na), 0.5 * (b + nb), params);
            vc[k] *= (-dt * g).exp();
        }
    }
    check_positive(&n1, "n1", "reaction")?;
    check_positive(&n2, "n2", "reaction")?;

    let after_transport = [n1t.sum() * vol, n2t.sum() * vol];
    let after = [n1.sum() * vol, n2.sum() * vol];
    let mut report = ScalarStepReport {
        mass_before,
        ..Default::default()
    };
    for s in 0..2 {
        report.reaction_mass[s] = after[s] - after_transport[s];
        report.ledger_error[s] = ((after[s] - mass_before[s]) - report.reaction_mass[s]).abs();
    }
    Ok(ScalarStep { n1, n2, c, report })
}

/// Convenience used by tests and the harness: a velocity field that is zero.
pub fn rest_velocity(grid: &Grid) -> VelocityField {
    FaceField::zeros(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::steady_states;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn reaction_fixed_points() {
        let p = params();
        assert_eq!(reaction_update(0.0, 0.4, &p, 0.1).0, 0.0);
        let s = steady_states(&p);
        for dt in [1e-3, 0.1, 1.0, 10.0] {
            let (a, b) = reaction_update(s.n1_limit, s.n2_limit, &p, dt);
            assert!((a - s.n1_limit).abs() < 1e-15 && (b - s.n2_limit).abs() < 1e-15);
        }
    }

    #[test]
    fn reaction_matches_rates_to_first_order() {
        let p = ModelParams { a1: 0.3, a2: 1.2, mu1: 2.0, mu2: 0.7, ..params() };
        for &(n1, n2) in &[(0.2, 0.9), (1.4, 0.3), (0.7, 0.7)] {
            let (r1, r2) = crate::model::lv_reaction(n1, n2, &p);
            let mut errs = vec![];
            for dt in [1e-2, 5e-3] {
                let (a, b) = reaction_update(n1, n2, &p, dt);
                errs.push(((a - n1) / dt - r1).abs().max(((b - n2) / dt - r2).abs()));
            }
            let ratio = errs[0] / errs[1];
            assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn no_consumers_leaves_signal_unchanged() {
        let g = Grid::unit(2, 8).unwrap();
        let c0 = 0.8;
        let mut p = params();
        p.mu1 = 1.0;
        let state = State {
            t: 0.0,
            n1: ScalarField::zeros(&g),
            n2: ScalarField::zeros(&g),
            c: ScalarField::constant(&g, c0),
            u: rest_velocity(&g),
            p: ScalarField::zeros(&g),
        };
        let d = DiffusionSolver::new(&g, 1e-12);
        let out = scalar_step(&state, &p, 0.01, &TransportSettings::default(), 0.4, &d).unwrap();
        assert!(out.c.values().iter().all(|&v| v == c0));
        assert_eq!(out.n1.max_abs(), 0.0);
    }

    #[test]
    fn chemotaxis_trivial_cases() {
        let g = Grid::unit(2, 8).unwrap();
        let n = ScalarField::from_fn(&g, |x| 1.0 + x[0] * x[1]);
        let c = ScalarField::constant(&g, 2.0);
        assert_eq!(chemotaxis_div(&n, &c, 1.0, 0.0).max_abs(), 0.0);
        let c = ScalarField::from_fn(&g, |x| (x[0] * 3.0).cos());
        assert_eq!(chemotaxis_div(&ScalarField::zeros(&g), &c, 1.0, 0.1).max_abs(), 0.0);
    }

    #[test]
    fn oversized_dt_rejected() {
        let g = Grid::unit(2, 8).unwrap();
        let state = State {
            t: 0.0,
            n1: ScalarField::constant(&g, 1.0),
            n2: ScalarField::constant(&g, 1.0),
            c: ScalarField::from_fn(&g, |x| 1.0 + x[0]),
            u: rest_velocity(&g),
            p: ScalarField::zeros(&g),
        };
        let d = DiffusionSolver::new(&g, 1e-12);
        let err = scalar_step(&state, &params(), 5.0, &TransportSettings::default(), 0.4, &d).unwrap_err();
        assert!(matches!(err, TransportError::Cfl { .. }));
    }
}
