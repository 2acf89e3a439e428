//! Fluid subsystem: the discrete Stokes operator, the Yosida smoothing
//! `(I + eps A)^-1`, Chorin projection, and one velocity step.
//!
//! The momentum equation is advanced as
//!
//! ```text
//! u_t + kappa (Y_eps u . grad) u = lap u + grad P + (gamma n1 + delta n2) grad Phi,   div u = 0
//! ```
//!
//! with explicit skew-symmetric advection, backward-Euler diffusion,
//! explicit forcing and a final non-incremental projection. The pressure is
//! reported with the `+grad P` sign of the equation above.

use crate::grid::{for_each_index, FaceField, Grid, ScalarField, VelocityField};
use crate::model::ModelParams;
use crate::ops::{divergence_faces, gradient_faces, laplacian_neumann_into};
use crate::solver::{iteration_cap, pcg, AxisKind, SeparableInverse, SolverError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("pressure Poisson solve failed: {0}")]
    Poisson(SolverError),
    #[error("implicit velocity solve failed: {0}")]
    Helmholtz(SolverError),
    #[error("dt = {dt:e} violates the advective CFL limit {limit:e}; reduce dt")]
    Cfl { dt: f64, limit: f64 },
    #[error("velocity and forcing live on different grids")]
    GridMismatch,
}

/// Solver tolerances and the advective safety factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSettings {
    pub poisson_tol: f64,
    pub helmholtz_tol: f64,
    pub cfl_safety: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            poisson_tol: 1e-12,
            helmholtz_tol: 1e-12,
            cfl_safety: 0.4,
        }
    }
}

/// Componentwise no-slip vector Laplacian `A_h = -lap_h` on the MAC grid.
///
/// Along its own axis a velocity component lives on faces with the two end
/// faces pinned to zero; across the other axes it sees antisymmetric ghost
/// values so that the wall average vanishes.
#[derive(Clone, Debug)]
pub struct StokesOperator {
    grid: Grid,
    inverses: Vec<SeparableInverse>,
}

impl StokesOperator {
    pub fn new(grid: &Grid) -> Self {
        let inverses = (0..grid.dim())
            .map(|a| {
                let mut kinds = [AxisKind::DirichletCell; 3];
                kinds[a] = AxisKind::DirichletNode;
                SeparableInverse::new(grid, grid.face_shape(a), &kinds)
            })
            .collect();
        StokesOperator {
            grid: *grid,
            inverses,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `out = A_h u` for component `axis`; pinned boundary faces map to 0.
    pub fn apply_component(&self, axis: usize, u: &[f64], out: &mut [f64]) {
        neg_vector_laplacian_component(&self.grid, axis, u, out);
    }

    pub fn apply(&self, u: &VelocityField) -> VelocityField {
        let mut out = FaceField::zeros(&self.grid);
        for a in 0..self.grid.dim() {
            self.apply_component(a, u.comp(a), out.comp_mut(a));
        }
        out
    }

    /// Solve `(I + scale A_h) v = rhs` per component by preconditioned CG.
    /// `guess` seeds the iteration.
    pub fn solve_shifted(
        &self,
        scale: f64,
        rhs: &VelocityField,
        guess: &VelocityField,
        tol: f64,
    ) -> Result<VelocityField, SolverError> {
        let mut out = guess.clone();
        if scale == 0.0 {
            return Ok(rhs.clone());
        }
        let cap = iteration_cap(&self.grid);
        for a in 0..self.grid.dim() {
            let inv = &self.inverses[a];
            let apply = |x: &[f64], y: &mut [f64]| {
                self.apply_component(a, x, y);
                for k in 0..x.len() {
                    y[k] = x[k] + scale * y[k];
                }
            };
            let precond = |r: &[f64], z: &mut [f64]| inv.apply(1.0, scale, r, z);
            pcg(apply, precond, rhs.comp(a), out.comp_mut(a), tol, cap)?;
        }
        out.enforce_boundary();
        Ok(out)
    }

    /// Eigenvalue sums of `A_h` per storage entry of component `axis`
    /// (NaN on pinned faces).
    pub fn eigenvalues(&self, axis: usize) -> &[f64] {
        self.inverses[axis].eigenvalues()
    }
}

/// No-slip `-lap_h` applied to velocity component `axis`.
pub fn neg_vector_laplacian_component(grid: &Grid, axis: usize, u: &[f64], out: &mut [f64]) {
    let shape = grid.face_shape(axis);
    let fs = grid.face_strides(axis);
    let cells = grid.cells();
    let dim = grid.dim();
    let h = grid.spacing();
    for_each_index(shape, |i, n| {
        if grid.is_boundary_face(axis, i) {
            out[n] = 0.0;
            return;
        }
        let v = u[n];
        let mut acc = 0.0;
        for b in 0..dim {
            let inv_h2 = 1.0 / (h[b] * h[b]);
            let s = fs[b];
            let (up, dn) = if b == axis {
                let up = if i[b] + 1 < cells[b] { u[n + s] } else { 0.0 };
                let dn = if i[b] > 1 { u[n - s] } else { 0.0 };
                (up, dn)
            } else {
                let up = if i[b] + 1 < cells[b] { u[n + s] } else { -v };
                let dn = if i[b] > 0 { u[n - s] } else { -v };
                (up, dn)
            };
            acc += (2.0 * v - up - dn) * inv_h2;
        }
        out[n] = acc;
    });
}

/// Discrete `int |grad u|^2 = <u, A_h u>`.
pub fn velocity_gradient_sq(u: &VelocityField) -> f64 {
    let grid = *u.grid();
    let mut out = FaceField::zeros(&grid);
    for a in 0..grid.dim() {
        neg_vector_laplacian_component(&grid, a, u.comp(a), out.comp_mut(a));
    }
    u.dot(&out)
}

/// Pure-Neumann Poisson solver with mean-zero gauge.
#[derive(Clone, Debug)]
pub struct PressureSolver {
    grid: Grid,
    inverse: SeparableInverse,
}

impl PressureSolver {
    pub fn new(grid: &Grid) -> Self {
        PressureSolver {
            grid: *grid,
            inverse: SeparableInverse::new(grid, grid.cells(), &[AxisKind::NeumannCell; 3]),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solve `lap phi = rhs - mean(rhs)`. Returns mean-zero `phi`.
    pub fn solve(&self, rhs: &ScalarField, tol: f64) -> Result<ScalarField, SolverError> {
        let grid = self.grid;
        // Only the mean-free part is in the range of the Neumann operator.
        let mean = rhs.sum() / grid.n_cells() as f64;
        let neg_rhs: Vec<f64> = rhs.values().iter().map(|v| mean - v).collect();
        let mut x = vec![0.0; grid.n_cells()];
        let apply = |v: &[f64], o: &mut [f64]| {
            laplacian_neumann_into(&grid, v, o);
            o.iter_mut().for_each(|w| *w = -*w);
        };
        let precond = |r: &[f64], z: &mut [f64]| self.inverse.apply(0.0, 1.0, r, z);
        pcg(apply, precond, &neg_rhs, &mut x, tol, iteration_cap(&grid))?;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        Ok(ScalarField::from_values(&grid, x).expect("grid-sized buffer"))
    }
}

/// Operator handles shared by every velocity step on one grid.
#[derive(Clone, Debug)]
pub struct FlowContext {
    pub stokes: StokesOperator,
    pub pressure: PressureSolver,
    pub settings: FlowSettings,
}

impl FlowContext {
    pub fn new(grid: &Grid, settings: FlowSettings) -> Self {
        FlowContext {
            stokes: StokesOperator::new(grid),
            pressure: PressureSolver::new(grid),
            settings,
        }
    }
}

/// Yosida smoothing `v = (I + eps A_h)^-1 u`; identity for `eps = 0`.
pub fn yosida_apply(
    stokes: &StokesOperator,
    u: &VelocityField,
    eps: f64,
    settings: &FlowSettings,
) -> Result<VelocityField, FlowError> {
    if eps == 0.0 {
        return Ok(u.clone());
    }
    stokes
        .solve_shifted(eps, u, u, settings.helmholtz_tol)
        .map_err(FlowError::Helmholtz)
}

/// Chorin projection: solve `lap phi = div u*` and return `(u* - grad phi, phi)`.
pub fn project(
    solver: &PressureSolver,
    u_star: &VelocityField,
    settings: &FlowSettings,
) -> Result<(VelocityField, ScalarField), FlowError> {
    let div = divergence_faces(u_star);
    let phi = solver
        .solve(&div, settings.poisson_tol)
        .map_err(FlowError::Poisson)?;
    let mut u = u_star.clone();
    u.axpy(-1.0, &gradient_faces(&phi));
    Ok((u, phi))
}

/// Skew-symmetric momentum transport `C(w) u` on the staggered grid.
///
/// Each velocity component is treated as a scalar on its own staggered
/// control volumes. With `F` the outward advecting flux through a
/// control-volume face and `u_nb` the neighbour across it,
/// `(C u)_i = sum_faces F u_nb / (2 V)`. This equals the average of the
/// divergence and advective forms, and `<u, C(w) u> = 0` holds exactly for
/// any `w`.
pub fn momentum_advection(w: &VelocityField, u: &VelocityField) -> VelocityField {
    let grid = *u.grid();
    let dim = grid.dim();
    let cells = grid.cells();
    let h = grid.spacing();
    let mut out = FaceField::zeros(&grid);
    for a in 0..dim {
        let fs = grid.face_strides(a);
        let ua = u.comp(a);
        let wa = w.comp(a);
        let mut acc = vec![0.0; ua.len()];
        for_each_index(grid.face_shape(a), |i, n| {
            if grid.is_boundary_face(a, i) {
                return;
            }
            let mut s = 0.0;
            for b in 0..dim {
                let inv2h = 0.5 / h[b];
                if b == a {
                    // Control-volume faces sit at the adjacent cell centers.
                    let f_up = 0.5 * (wa[n] + wa[n + fs[a]]);
                    let f_dn = 0.5 * (wa[n - fs[a]] + wa[n]);
                    s += (f_up * ua[n + fs[a]] - f_dn * ua[n - fs[a]]) * inv2h;
                } else {
                    // Edge fluxes: w_b averaged over the two cells sharing
                    // this a-face, taken on the b-faces above and below.
                    let wb = w.comp(b);
                    let bs = grid.face_strides(b);
                    let mut lo_cell = i;
                    lo_cell[a] -= 1;
                    let hi_cell = i;
                    let bl = grid.face_index(b, lo_cell);
                    let bh = grid.face_index(b, hi_cell);
                    let f_up = 0.5 * (wb[bl + bs[b]] + wb[bh + bs[b]]);
                    let f_dn = 0.5 * (wb[bl] + wb[bh]);
                    let u_up = if i[b] + 1 < cells[b] { ua[n + fs[b]] } else { 0.0 };
                    let u_dn = if i[b] > 0 { ua[n - fs[b]] } else { 0.0 };
                    s += (f_up * u_up - f_dn * u_dn) * inv2h;
                }
            }
            acc[n] = s;
        });
        out.comp_mut(a).copy_from_slice(&acc);
    }
    out
}

/// Largest step allowed by the advective CFL rule
/// `dt <= safety * min(h) / max|u|`.
pub fn cfl_limit(u: &VelocityField, settings: &FlowSettings) -> f64 {
    settings.cfl_safety * u.grid().min_spacing() / u.max_abs().max(1e-12)
}

/// Result of one velocity step.
#[derive(Clone, Debug)]
pub struct VelocityStep {
    pub u: VelocityField,
    /// Pressure in the `+grad P` convention, mean zero.
    pub pressure: ScalarField,
}

/// Advance the velocity by `dt`: advection by `kappa Y_eps u`, backward-Euler
/// diffusion, explicit forcing, projection.
pub fn velocity_step(
    ctx: &FlowContext,
    u: &VelocityField,
    forcing: &FaceField,
    params: &ModelParams,
    dt: f64,
) -> Result<VelocityStep, FlowError> {
    if u.grid() != forcing.grid() {
        return Err(FlowError::GridMismatch);
    }
    let limit = cfl_limit(u, &ctx.settings);
    if dt > limit {
        return Err(FlowError::Cfl { dt, limit });
    }
    let mut u1 = u.clone();
    if params.kappa != 0 && u.max_abs() > 0.0 {
        let w = yosida_apply(&ctx.stokes, u, params.eps, &ctx.settings)?;
        let adv = momentum_advection(&w, u);
        u1.axpy(-dt * params.kappa as f64, &adv);
    }
    let mut u2 = ctx
        .stokes
        .solve_shifted(dt, &u1, &u1, ctx.settings.helmholtz_tol)
        .map_err(FlowError::Helmholtz)?;
    u2.axpy(dt, forcing);
    let (u3, phi) = project(&ctx.pressure, &u2, &ctx.settings)?;
    let pressure = phi.map(|v| -v / dt);
    Ok(VelocityStep { u: u3, pressure })
}

/// Per-step kinetic energy budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KineticLedger {
    /// `<u, (Y u . grad) u>`; vanishes for the skew-symmetric form.
    pub advection_work: f64,
    /// `int |grad u|^2` at the new time level.
    pub viscous_dissipation: f64,
    /// `<u, f>` at the new time level.
    pub forcing_work: f64,
    pub energy_before: f64,
    pub energy_after: f64,
}

pub fn kinetic_energy_ledger(
    ctx: &FlowContext,
    before: &VelocityField,
    after: &VelocityField,
    forcing: &FaceField,
    params: &ModelParams,
) -> Result<KineticLedger, FlowError> {
    let advection_work = if params.kappa != 0 && before.max_abs() > 0.0 {
        let w = yosida_apply(&ctx.stokes, before, params.eps, &ctx.settings)?;
        before.dot(&momentum_advection(&w, before))
    } else {
        0.0
    };
    Ok(KineticLedger {
        advection_work,
        viscous_dissipation: after.dot(&ctx.stokes.apply(after)),
        forcing_work: after.dot(forcing),
        energy_before: before.norm_sq(),
        energy_after: after.norm_sq(),
    })
}
