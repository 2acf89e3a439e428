//! Manufactured-solution convergence studies.
//!
//! Each suite injects the forcing that makes a chosen smooth field an exact
//! solution, steps it with the library operators and reports the error at
//! the final time on a ladder of resolutions. Observed orders are
//! least-squares slopes of `log error` against `log h` (or `log dt`).

use super::config::ScenarioConfig;
use super::oracle::uniform_equivalence_test;
use super::run::HarnessError;
use crate::flow::{momentum_advection, neg_vector_laplacian_component, velocity_step, FlowContext, FlowSettings};
use crate::grid::{FaceField, Grid, ScalarField};
use crate::model::ModelParams;
use crate::ops::advect_upwind;
use crate::transport::{chemotaxis_div, DiffusionSolver};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmsSuite {
    /// Heat equation, spatial order with `dt ~ h^2`.
    Diffusion,
    /// Advection-diffusion by a fixed solenoidal flow, `dt ~ h`.
    Advection,
    /// Advection, chemotactic drift and diffusion together, `dt ~ h`.
    Chemotaxis,
    /// Velocity step (advection, viscosity, projection), temporal order.
    Stokes,
    /// Full split scheme on uniform data against the ODE oracle, temporal.
    Temporal,
    /// Exact states with zero forcing; errors must stay at roundoff.
    Zero,
}

impl MmsSuite {
    pub const ALL: [MmsSuite; 6] = [
        MmsSuite::Diffusion,
        MmsSuite::Advection,
        MmsSuite::Chemotaxis,
        MmsSuite::Stokes,
        MmsSuite::Temporal,
        MmsSuite::Zero,
    ];

    /// Smallest acceptable observed order and, where one applies, the
    /// largest.
    pub fn expected(self) -> (f64, Option<f64>) {
        match self {
            MmsSuite::Diffusion => (1.8, None),
            MmsSuite::Advection => (0.9, Some(1.5)),
            MmsSuite::Chemotaxis | MmsSuite::Stokes | MmsSuite::Temporal => (0.9, None),
            MmsSuite::Zero => (f64::NAN, None),
        }
    }
}

impl fmt::Display for MmsSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MmsSuite::Diffusion => "diffusion",
            MmsSuite::Advection => "advection",
            MmsSuite::Chemotaxis => "chemotaxis",
            MmsSuite::Stokes => "stokes",
            MmsSuite::Temporal => "temporal",
            MmsSuite::Zero => "zero",
        };
        f.write_str(s)
    }
}

impl FromStr for MmsSuite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        MmsSuite::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("unknown suite `{s}` (diffusion, advection, chemotaxis, stokes, temporal, zero, all)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsLevel {
    pub cells: usize,
    pub dt: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsResult {
    pub suite: MmsSuite,
    pub levels: Vec<MmsLevel>,
    /// NaN for the zero-forcing suite.
    pub order: f64,
    pub passed: bool,
}

/// Least-squares slope of `log y` against `log x`.
pub fn observed_order(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn l2_error(a: &ScalarField, b: &ScalarField) -> f64 {
    let d = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    (d * a.grid().cell_volume()).sqrt()
}

/// `cos(pi x) cos(pi y)` and its derivatives on the unit square.
struct Mode;

impl Mode {
    fn v(x: [f64; 3]) -> f64 {
        (PI * x[0]).cos() * (PI * x[1]).cos()
    }
    fn grad(x: [f64; 3]) -> [f64; 2] {
        [
            -PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
            -PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
        ]
    }
    fn lap(x: [f64; 3]) -> f64 {
        -2.0 * PI * PI * Self::v(x)
    }
}

/// Stream function `sin^2(pi x) sin^2(pi y)`.
fn stream(x: [f64; 3]) -> f64 {
    ((PI * x[0]).sin() * (PI * x[1]).sin()).powi(2)
}

/// Velocity `(d_y s, -d_x s)` of the stream function above.
fn stream_velocity(x: [f64; 3]) -> [f64; 2] {
    let (sx, cx, sy, cy) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
    [2.0 * PI * sx * sx * sy * cy, -2.0 * PI * sx * cx * sy * sy]
}

/// Discrete curl of a stream function sampled at cell edges: discretely
/// solenoidal with zero normal flux through the walls.
pub fn discrete_curl(grid: &Grid, s: impl Fn([f64; 3]) -> f64, scale: f64) -> FaceField {
    let h = grid.spacing();
    FaceField::from_fn(grid, |a, x| {
        let (axis, sign) = match a {
            0 => (1, 1.0),
            1 => (0, -1.0),
            _ => return 0.0,
        };
        let (mut up, mut dn) = (x, x);
        up[axis] += 0.5 * h[axis];
        dn[axis] -= 0.5 * h[axis];
        scale * sign * (s(up) - s(dn)) / h[axis]
    })
}

fn diffusion_level(cells: usize, t_end: f64, exact_mode: bool) -> Result<MmsLevel, HarnessError> {
    let grid = Grid::unit(2, cells)?;
    let h = grid.spacing()[0];
    let steps = (t_end / (h * h)).ceil() as usize;
    let dt = t_end / steps as f64;
    let amp = if exact_mode { 1.0 } else { 0.0 };
    let exact = |t: f64| ScalarField::from_fn(&grid, |x| 2.0 + amp * Mode::v(x) * (-2.0 * PI * PI * t).exp());
    let solver = DiffusionSolver::new(&grid, 1e-13);
    let mut n = exact(0.0);
    for _ in 0..steps {
        n = solver.solve(&n, dt).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    }
    Ok(MmsLevel {
        cells,
        dt,
        error: l2_error(&n, &exact(t_end)),
    })
}

/// Advection-diffusion (`chi = 0`) or the full drift system with the
/// mobility of the unregularized model.
fn transport_level(cells: usize, chi: f64, zero: bool) -> Result<MmsLevel, HarnessError> {
    let grid = Grid::unit(2, cells)?;
    let h = grid.spacing()[0];
    let (amp, u_amp, c_amp) = if zero { (0.0, 0.0, 0.0) } else { (0.3, 0.5, 0.5) };
    let t_end = 0.25;
    let steps = (t_end / (0.2 * h)).ceil() as usize;
    let dt = t_end / steps as f64;
    let u = discrete_curl(&grid, stream, u_amp);
    let c = ScalarField::from_fn(&grid, |x| 1.0 + c_amp * Mode::v(x));
    let exact_at = |x: [f64; 3], t: f64| 1.0 + amp * (-t).exp() * Mode::v(x);
    let forcing = |x: [f64; 3], t: f64| -> f64 {
        let e = amp * (-t).exp();
        let n = exact_at(x, t);
        let gn = Mode::grad(x).map(|g| e * g);
        let gc = Mode::grad(x).map(|g| c_amp * g);
        let uv = stream_velocity(x).map(|v| u_amp * v);
        let n_t = -e * Mode::v(x);
        let adv = uv[0] * gn[0] + uv[1] * gn[1];
        let lap_n = e * Mode::lap(x);
        let drift = gn[0] * gc[0] + gn[1] * gc[1] + n * c_amp * Mode::lap(x);
        n_t + adv - lap_n + chi * drift
    };
    let solver = DiffusionSolver::new(&grid, 1e-13);
    let mut n = ScalarField::from_fn(&grid, |x| exact_at(x, 0.0));
    for k in 0..steps {
        let t = k as f64 * dt;
        let f = ScalarField::from_fn(&grid, |x| forcing(x, t));
        let adv = advect_upwind(&n, &u);
        let drift = if chi != 0.0 {
            chemotaxis_div(&n, &c, chi, 0.0)
        } else {
            ScalarField::zeros(&grid)
        };
        let mut rhs = n.clone();
        for (i, v) in rhs.values_mut().iter_mut().enumerate() {
            *v += dt * (f.values()[i] - adv.values()[i] - drift.values()[i]);
        }
        n = solver.solve(&rhs, dt).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    }
    let exact = ScalarField::from_fn(&grid, |x| exact_at(x, t_end));
    Ok(MmsLevel {
        cells,
        dt,
        error: l2_error(&n, &exact),
    })
}

/// Velocity step against the semi-discrete solution `e^{-t} curl_h s`.
fn stokes_level(cells: usize, dt: f64, amp: f64) -> Result<MmsLevel, HarnessError> {
    let grid = Grid::unit(2, cells)?;
    let params = ModelParams { kappa: 1, eps: 0.0, ..Default::default() };
    let ctx = FlowContext::new(&grid, FlowSettings::default());
    let base = discrete_curl(&grid, stream, amp);
    let mut a_base = FaceField::zeros(&grid);
    for a in 0..grid.dim() {
        neg_vector_laplacian_component(&grid, a, base.comp(a), a_base.comp_mut(a));
    }
    let at = |t: f64| {
        let mut v = base.clone();
        v.scale((-t).exp());
        v
    };
    let t_end = 0.5;
    let steps = (t_end / dt).round() as usize;
    let mut u = at(0.0);
    for k in 0..steps {
        let t1 = (k + 1) as f64 * dt;
        let ue = at(t1);
        // d/dt u + A u + C(u) u at the new time level
        let mut f = momentum_advection(&ue, &ue);
        f.axpy((-t1).exp(), &a_base);
        f.axpy(-1.0, &ue);
        let step = velocity_step(&ctx, &u, &f, &params, dt).map_err(|e| HarnessError::Invalid(e.to_string()))?;
        u = step.u;
    }
    let mut diff = u.clone();
    diff.axpy(-1.0, &at(t_end));
    Ok(MmsLevel {
        cells,
        dt,
        error: diff.norm_sq().sqrt(),
    })
}

const UNIFORM: &str = include_str!("../../scenarios/uniform.toml");

fn temporal_levels() -> Result<Vec<MmsLevel>, HarnessError> {
    let mut levels = Vec::new();
    for dt in [8e-3, 4e-3, 2e-3, 1e-3] {
        let cfg = ScenarioConfig::from_toml_with(
            UNIFORM,
            &[
                format!("transport.dt_max={dt}"),
                "run.t_end=2.0".into(),
                "run.output_every=0.1".into(),
                "grid.cells=[8, 8]".into(),
            ],
        )?;
        let r = uniform_equivalence_test(&cfg, 1e-4)?;
        levels.push(MmsLevel { cells: 8, dt, error: r.max_deviation });
    }
    Ok(levels)
}

pub fn mms_convergence(suite: MmsSuite) -> Result<MmsResult, HarnessError> {
    let (levels, by_dt) = match suite {
        MmsSuite::Diffusion => (
            [32, 64, 128].into_iter().map(|n| diffusion_level(n, 0.02, true)).collect::<Result<Vec<_>, _>>()?,
            false,
        ),
        MmsSuite::Advection => (
            [32, 64, 128].into_iter().map(|n| transport_level(n, 0.0, false)).collect::<Result<Vec<_>, _>>()?,
            false,
        ),
        MmsSuite::Chemotaxis => (
            [32, 64, 128].into_iter().map(|n| transport_level(n, 1.0, false)).collect::<Result<Vec<_>, _>>()?,
            false,
        ),
        MmsSuite::Stokes => (
            [0.01, 0.005, 0.0025, 0.00125].into_iter().map(|dt| stokes_level(16, dt, 0.5)).collect::<Result<Vec<_>, _>>()?,
            true,
        ),
        MmsSuite::Temporal => (temporal_levels()?, true),
        MmsSuite::Zero => (
            vec![
                diffusion_level(16, 0.02, false)?,
                transport_level(16, 1.0, true)?,
                stokes_level(16, 0.01, 0.0)?,
            ],
            false,
        ),
    };
    let (min, max) = suite.expected();
    let (order, passed) = if suite == MmsSuite::Zero {
        (f64::NAN, levels.iter().all(|l| l.error <= 1e-13))
    } else {
        let x: Vec<f64> = levels
            .iter()
            .map(|l| if by_dt { l.dt } else { 1.0 / l.cells as f64 })
            .collect();
        let y: Vec<f64> = levels.iter().map(|l| l.error).collect();
        let p = observed_order(&x, &y);
        (p, p >= min && max.is_none_or(|m| p <= m))
    };
    Ok(MmsResult { suite, levels, order, passed })
}
