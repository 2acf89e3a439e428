//! Energy functionals, dissipation integrals, bound accumulators, the
//! blow-up monitor, weak-form residuals and distances to the large-time
//! limits.
//!
//! The weights `chi`, `kbar` and `B` of the functionals are user inputs; the
//! functionals are monitors, not certified Lyapunov functions.

use crate::flow::{velocity_gradient_sq, yosida_apply, FlowError, FlowSettings, StokesOperator};
use crate::grid::{for_each_index, FaceField, Grid, ScalarField};
use crate::model::{buoyancy_force, chemo_mobility, consumption_rate, ModelParams, Regime, SteadyState};
use crate::ops::{face_sq_to_cells, gradient_faces, integrate};
use crate::transport::State;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Cells with signal below this value are skipped in `|grad c|^2 / c` type
/// integrands and raise the underflow flag.
pub const SIGNAL_UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("{field} must be strictly positive for this functional (minimum {min:e})")]
    NonPositive { field: &'static str, min: f64 },
    #[error("no limit is asserted for this parameter regime")]
    OutOfScope,
    #[error("test-function window [0, {window}] exceeds the stored trajectory span {span}")]
    Window { window: f64, span: f64 },
    #[error("trajectory needs at least two frames at uniform cadence")]
    Trajectory,
    #[error("energy weight {name} must be positive, got {value}")]
    Weight { name: &'static str, value: f64 },
    #[error("smoothing the advecting velocity failed: {0}")]
    Yosida(FlowError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    /// Weight of `int |grad c|^2 / c`.
    pub chi: f64,
    /// Weight of `int |u|^2` (multiplied by `chi`).
    pub kbar: f64,
    /// Weight of `int c^2` in the Lyapunov functional.
    #[serde(rename = "B")]
    pub b: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            chi: 1.0,
            kbar: 1.0,
            b: 1.0,
        }
    }
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        for (name, value) in [("chi", self.chi), ("kbar", self.kbar), ("B", self.b)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(DiagnosticsError::Weight { name, value });
            }
        }
        Ok(())
    }
}

fn require_positive(f: &ScalarField, field: &'static str) -> Result<(), DiagnosticsError> {
    let min = f.min();
    if !(min > 0.0) {
        return Err(DiagnosticsError::NonPositive { field, min });
    }
    Ok(())
}

/// The four pieces of the entropy-type energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub nlogn1: f64,
    pub nlogn2: f64,
    /// `(chi/2) int |grad c|^2 / c`
    pub signal: f64,
    /// `kbar chi int |u|^2`
    pub kinetic: f64,
    /// Some cell had `c < 1e-300` and was skipped in the signal term.
    pub underflow: bool,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.nlogn1 + self.nlogn2 + self.signal + self.kinetic
    }
}

fn n_log_n(n: &ScalarField) -> f64 {
    integrate(&n.map(|v| v * v.ln()))
}

pub fn energy_terms(state: &State, cfg: &EnergyConfig) -> Result<EnergyTerms, DiagnosticsError> {
    require_positive(&state.n1, "n1")?;
    require_positive(&state.n2, "n2")?;
    let g2 = face_sq_to_cells(&gradient_faces(&state.c));
    let mut underflow = false;
    let mut acc = 0.0;
    for (&g, &c) in g2.values().iter().zip(state.c.values()) {
        if c < SIGNAL_UNDERFLOW {
            underflow = true;
        } else {
            acc += g / c;
        }
    }
    let vol = state.grid().cell_volume();
    Ok(EnergyTerms {
        nlogn1: n_log_n(&state.n1),
        nlogn2: n_log_n(&state.n2),
        signal: 0.5 * cfg.chi * acc * vol,
        kinetic: cfg.kbar * cfg.chi * state.u.norm_sq(),
        underflow,
    })
}

/// `int n1 log n1 + int n2 log n2 + (chi/2) int |grad c|^2/c + kbar chi int |u|^2`.
pub fn energy_f(state: &State, cfg: &EnergyConfig) -> Result<f64, DiagnosticsError> {
    Ok(energy_terms(state, cfg)?.total())
}

/// Dissipation integrals appearing in the energy inequality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dissipation {
    /// `int |grad n1|^2 / n1`
    pub d_n1: f64,
    /// `int |grad n2|^2 / n2`
    pub d_n2: f64,
    /// `int |grad c|^4 / c^3`
    pub d_c4: f64,
    /// `int c |D^2 log c|^2`
    pub d_hess: f64,
    /// `int |grad u|^2`
    pub d_u: f64,
    pub underflow: bool,
}

/// Per-cell `c |D^2 log c|^2` with centered second differences and mirrored
/// ghost cells. Cells with `c < 1e-300` contribute 0; the flag reports them.
pub fn log_hessian_density(c: &ScalarField) -> (ScalarField, bool) {
    let grid = *c.grid();
    let dim = grid.dim();
    let cells = grid.cells();
    let h = grid.spacing();
    let underflow = c.values().iter().any(|&v| v < SIGNAL_UNDERFLOW);
    let logc = c.map(|v| v.max(SIGNAL_UNDERFLOW).ln());
    let l = logc.values();
    let at = |mut i: [usize; 3], da: [isize; 3]| -> f64 {
        for a in 0..dim {
            let p = i[a] as isize + da[a];
            // mirrored ghost: -1 -> 0, n -> n-1
            i[a] = p.clamp(0, cells[a] as isize - 1) as usize;
        }
        l[grid.index(i)]
    };
    let mut out = ScalarField::zeros(&grid);
    let vals = out.values_mut();
    for_each_index(cells, |i, n| {
        let cv = c.values()[n];
        if cv < SIGNAL_UNDERFLOW {
            return;
        }
        let mut s = 0.0;
        for a in 0..dim {
            let mut e = [0isize; 3];
            e[a] = 1;
            let m = [-e[0], -e[1], -e[2]];
            let haa = (at(i, e) - 2.0 * l[n] + at(i, m)) / (h[a] * h[a]);
            s += haa * haa;
            for b in (a + 1)..dim {
                let mut pp = [0isize; 3];
                pp[a] = 1;
                pp[b] = 1;
                let mut pm = pp;
                pm[b] = -1;
                let mut mp = pp;
                mp[a] = -1;
                let mut mm = mp;
                mm[b] = -1;
                let hab = (at(i, pp) - at(i, pm) - at(i, mp) + at(i, mm)) / (4.0 * h[a] * h[b]);
                s += 2.0 * hab * hab;
            }
        }
        vals[n] = cv * s;
    });
    (out, underflow)
}

pub fn dissipation_terms(state: &State) -> Result<Dissipation, DiagnosticsError> {
    require_positive(&state.n1, "n1")?;
    require_positive(&state.n2, "n2")?;
    let vol = state.grid().cell_volume();
    let fisher = |n: &ScalarField| -> f64 {
        let g2 = face_sq_to_cells(&gradient_faces(n));
        g2.values()
            .iter()
            .zip(n.values())
            .map(|(g, v)| g / v)
            .sum::<f64>()
            * vol
    };
    let g2c = face_sq_to_cells(&gradient_faces(&state.c));
    let mut d_c4 = 0.0;
    for (&g, &c) in g2c.values().iter().zip(state.c.values()) {
        if c >= SIGNAL_UNDERFLOW {
            d_c4 += g * g / (c * c * c);
        }
    }
    let (hess, underflow) = log_hessian_density(&state.c);
    Ok(Dissipation {
        d_n1: fisher(&state.n1),
        d_n2: fisher(&state.n2),
        d_c4: d_c4 * vol,
        d_hess: integrate(&hess),
        d_u: velocity_gradient_sq(&state.u).max(0.0),
        underflow,
    })
}

/// Lyapunov functional for the attracting state:
/// coexistence `int (n_i - N_i log(n_i/N_i)) + (B/2) int c^2`,
/// exclusion `int n1 + int (n2 - log n2) + (B/2) int c^2`.
pub fn energy_g(state: &State, cfg: &EnergyConfig, target: &SteadyState) -> Result<f64, DiagnosticsError> {
    let c2 = 0.5 * cfg.b * integrate(&state.c.map(|v| v * v));
    match target.regime {
        Regime::OutOfScope => Err(DiagnosticsError::OutOfScope),
        Regime::Coexistence => {
            require_positive(&state.n1, "n1")?;
            require_positive(&state.n2, "n2")?;
            let (a, b) = (target.n1_limit, target.n2_limit);
            let t1 = integrate(&state.n1.map(|v| v - a * (v / a).ln()));
            let t2 = integrate(&state.n2.map(|v| v - b * (v / b).ln()));
            Ok(t1 + t2 + c2)
        }
        Regime::Exclusion => {
            require_positive(&state.n2, "n2")?;
            let t1 = integrate(&state.n1);
            let t2 = integrate(&state.n2.map(|v| v - v.ln()));
            Ok(t1 + t2 + c2)
        }
    }
}

/// Discrete `W^{1,q}` norm `(int |c|^q + int |grad c|^q)^(1/q)`, gradients
/// averaged from faces to cells.
pub fn signal_w1q_norm(c: &ScalarField, q: f64) -> f64 {
    let g2 = face_sq_to_cells(&gradient_faces(c));
    let s: f64 = c
        .values()
        .iter()
        .zip(g2.values())
        .map(|(v, g)| v.abs().powf(q) + g.sqrt().powf(q))
        .sum();
    (s * c.grid().cell_volume()).powf(1.0 / q)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    pub value: f64,
    /// Value above the ceiling or not finite.
    pub flagged: bool,
}

/// `max n1 + max n2 + ||c||_{W^{1,q}} + ||grad u||_{L^2}`. The last term
/// stands in for the fractional Stokes power in the continuation criterion.
pub fn blow_up_indicator(state: &State, q: f64, ceiling: f64) -> BlowUp {
    let value = state.n1.max_abs()
        + state.n2.max_abs()
        + signal_w1q_norm(&state.c, q)
        + velocity_gradient_sq(&state.u).max(0.0).sqrt();
    let finite = state.n1.is_finite() && state.n2.is_finite() && state.c.is_finite() && state.u.is_finite();
    let value = if finite { value } else { f64::NAN };
    BlowUp {
        value,
        flagged: !value.is_finite() || value > ceiling,
    }
}

/// `(max|n1 - n1_inf|, max|n2 - n2_inf|, max|c|, max|u|)`.
pub fn distance_to_limit(state: &State, target: &SteadyState) -> Result<[f64; 4], DiagnosticsError> {
    let [l1, l2] = target.limits().ok_or(DiagnosticsError::OutOfScope)?;
    let d1 = state.n1.values().iter().fold(0.0f64, |m, v| m.max((v - l1).abs()));
    let d2 = state.n2.values().iter().fold(0.0f64, |m, v| m.max((v - l2).abs()));
    Ok([d1, d2, state.c.max_abs(), state.u.cell_speed().max_abs()])
}

/// Running space-time integrals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulators {
    /// `int int (n1 - n1_inf)^2`; stays 0 when no limit is asserted.
    pub a1: f64,
    /// `int int (n2 - n2_inf)^2`
    pub a2: f64,
    /// `int int |grad u|^2`
    pub a_u: f64,
    /// `int int |grad c|^4 / c^3`
    pub a_c: f64,
}

/// One output row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    pub mass: [f64; 3],
    /// max n1, max n2, max c, max |u|
    pub max: [f64; 4],
    pub energy_f: f64,
    pub energy_g: Option<f64>,
    pub dissipation: Dissipation,
    pub nlogn: [f64; 2],
    pub accumulators: Accumulators,
    pub distance: Option<[f64; 4]>,
    pub blow_up: f64,
}

/// Column order of the diagnostics CSV.
pub const CSV_COLUMNS: [&str; 30] = [
    "t", "dt", "mass_n1", "mass_n2", "mass_c", "max_n1", "max_n2", "max_c", "max_u", "F", "G",
    "D_n1", "D_n2", "D_c4", "D_hess", "D_u", "nlogn1", "nlogn2", "A1", "A2", "A_u", "A_c",
    "dist_n1", "dist_n2", "dist_c", "dist_u", "dist_sup", "blowup", "underflow", "regime_limits",
];

impl DiagnosticsRecord {
    /// Evaluate every diagnostic at the current state; `acc` carries the
    /// running integrals.
    pub fn evaluate(
        state: &State,
        dt: f64,
        cfg: &EnergyConfig,
        target: &SteadyState,
        acc: Accumulators,
        q: f64,
    ) -> Result<Self, DiagnosticsError> {
        let terms = energy_terms(state, cfg)?;
        let mut dissipation = dissipation_terms(state)?;
        dissipation.underflow |= terms.underflow;
        let energy_g = match target.regime {
            Regime::OutOfScope => None,
            _ => Some(energy_g(state, cfg, target)?),
        };
        let distance = distance_to_limit(state, target).ok();
        Ok(DiagnosticsRecord {
            t: state.t,
            dt,
            mass: [integrate(&state.n1), integrate(&state.n2), integrate(&state.c)],
            max: [
                state.n1.max(),
                state.n2.max(),
                state.c.max(),
                state.u.cell_speed().max_abs(),
            ],
            energy_f: terms.total(),
            energy_g,
            dissipation,
            nlogn: [terms.nlogn1, terms.nlogn2],
            accumulators: acc,
            distance,
            blow_up: blow_up_indicator(state, q, f64::INFINITY).value,
        })
    }

    pub fn is_finite(&self) -> bool {
        let d = &self.dissipation;
        let a = &self.accumulators;
        let mut vals = vec![self.t, self.dt, self.energy_f, self.blow_up];
        vals.extend(self.mass);
        vals.extend(self.max);
        vals.extend(self.nlogn);
        vals.extend([d.d_n1, d.d_n2, d.d_c4, d.d_hess, d.d_u, a.a1, a.a2, a.a_u, a.a_c]);
        vals.extend(self.energy_g);
        vals.extend(self.distance.into_iter().flatten());
        vals.iter().all(|v| v.is_finite())
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    /// One CSV line in [`CSV_COLUMNS`] order. Quantities that are undefined
    /// for the regime are left empty.
    pub fn csv_row(&self) -> String {
        let f = |v: f64| format!("{v:e}");
        let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
        let d = &self.dissipation;
        let a = &self.accumulators;
        let has = self.distance.is_some();
        let dist = self.distance.unwrap_or([0.0; 4]);
        let cols = [
            f(self.t),
            f(self.dt),
            f(self.mass[0]),
            f(self.mass[1]),
            f(self.mass[2]),
            f(self.max[0]),
            f(self.max[1]),
            f(self.max[2]),
            f(self.max[3]),
            f(self.energy_f),
            opt(self.energy_g),
            f(d.d_n1),
            f(d.d_n2),
            f(d.d_c4),
            f(d.d_hess),
            f(d.d_u),
            f(self.nlogn[0]),
            f(self.nlogn[1]),
            if has { f(a.a1) } else { String::new() },
            if has { f(a.a2) } else { String::new() },
            f(a.a_u),
            f(a.a_c),
            opt(has.then_some(dist[0])),
            opt(has.then_some(dist[1])),
            opt(has.then_some(dist[2])),
            opt(has.then_some(dist[3])),
            opt(has.then(|| dist.iter().copied().fold(0.0, f64::max))),
            f(self.blow_up),
            (d.underflow as u8).to_string(),
            (has as u8).to_string(),
        ];
        cols.join(",")
    }
}

/// Add `dt` times the current integrands to the running totals.
pub fn update_accumulators(acc: &Accumulators, state: &State, dt: f64, target: &SteadyState) -> Accumulators {
    let mut out = *acc;
    if let Some([l1, l2]) = target.limits() {
        out.a1 += dt * integrate(&state.n1.map(|v| (v - l1) * (v - l1)));
        out.a2 += dt * integrate(&state.n2.map(|v| (v - l2) * (v - l2)));
    }
    out.a_u += dt * velocity_gradient_sq(&state.u).max(0.0);
    let g2c = face_sq_to_cells(&gradient_faces(&state.c));
    let mut c4 = 0.0;
    for (&g, &c) in g2c.values().iter().zip(state.c.values()) {
        if c >= SIGNAL_UNDERFLOW {
            c4 += g * g / (c * c * c);
        }
    }
    out.a_c += dt * c4 * state.grid().cell_volume();
    out
}

/// Smooth test functions for the weak identities.
///
/// Scalars: `phi = prod_a cos(k_a pi x_a / L_a) * theta(t)`, which has zero
/// normal derivative on the walls. Velocity: `psi = curl(0, 0, s) theta(t)`
/// with `s = prod_a sin^2(pi x_a / L_a)`, discretised as a discrete curl of
/// `s` sampled on cell edges so that `psi` is discretely solenoidal and
/// vanishes on the walls. The time profile `theta(t) = cos^2(pi t / 2T)`
/// equals 1 at `t = 0` and vanishes with its derivative at the window end `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctions {
    pub modes: [u32; 3],
    pub window: f64,
}

impl TestFunctions {
    /// Deterministic choice of cosine wavenumbers in `{1, 2}` from `seed`.
    pub fn from_seed(seed: u64, window: f64) -> Self {
        // splitmix64
        let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut modes = [1u32; 3];
        for m in modes.iter_mut() {
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            *m = 1 + (z % 2) as u32;
        }
        TestFunctions { modes, window }
    }

    pub fn theta(&self, t: f64) -> f64 {
        if t >= self.window {
            return 0.0;
        }
        let c = (PI * t / (2.0 * self.window)).cos();
        c * c
    }

    fn wave(&self, grid: &Grid, a: usize) -> f64 {
        self.modes[a] as f64 * PI / grid.lengths()[a]
    }

    /// Spatial part of `phi`.
    pub fn phi(&self, grid: &Grid, x: [f64; 3]) -> f64 {
        (0..grid.dim()).map(|a| (self.wave(grid, a) * x[a]).cos()).product()
    }

    /// Spatial gradient of `phi`, component `axis`.
    pub fn grad_phi(&self, grid: &Grid, x: [f64; 3], axis: usize) -> f64 {
        (0..grid.dim())
            .map(|a| {
                let k = self.wave(grid, a);
                if a == axis {
                    -k * (k * x[a]).sin()
                } else {
                    (k * x[a]).cos()
                }
            })
            .product()
    }

    fn stream(&self, grid: &Grid, x: [f64; 3]) -> f64 {
        (0..grid.dim())
            .map(|a| (PI * x[a] / grid.lengths()[a]).sin().powi(2))
            .product()
    }

    /// Discretely solenoidal `psi` on faces (spatial part).
    pub fn psi(&self, grid: &Grid) -> FaceField {
        let h = grid.spacing();
        FaceField::from_fn(grid, |a, x| {
            // psi_0 = d s / d x_1, psi_1 = -d s / d x_0, psi_2 = 0
            match a {
                0 => {
                    let mut up = x;
                    let mut dn = x;
                    up[1] += 0.5 * h[1];
                    dn[1] -= 0.5 * h[1];
                    (self.stream(grid, up) - self.stream(grid, dn)) / h[1]
                }
                1 => {
                    let mut up = x;
                    let mut dn = x;
                    up[0] += 0.5 * h[0];
                    dn[0] -= 0.5 * h[0];
                    -(self.stream(grid, up) - self.stream(grid, dn)) / h[0]
                }
                _ => 0.0,
            }
        })
    }

    /// Analytic `d psi_a / d x_b` of the continuous `psi` (spatial part).
    pub fn grad_psi(&self, grid: &Grid, x: [f64; 3], a: usize, b: usize) -> f64 {
        // s = prod f_k(x_k), f = sin^2(w x): f' = w sin(2 w x), f'' = 2 w^2 cos(2 w x)
        let dim = grid.dim();
        let w = |k: usize| PI / grid.lengths()[k];
        let f = |k: usize, order: u32| -> f64 {
            let wk = w(k);
            match order {
                0 => (wk * x[k]).sin().powi(2),
                1 => wk * (2.0 * wk * x[k]).sin(),
                _ => 2.0 * wk * wk * (2.0 * wk * x[k]).cos(),
            }
        };
        let deriv = |orders: [u32; 3]| -> f64 { (0..dim).map(|k| f(k, orders[k])).product() };
        let (sign, first) = match a {
            0 => (1.0, 1),
            1 => (-1.0, 0),
            _ => return 0.0,
        };
        let mut orders = [0u32; 3];
        orders[first] += 1;
        orders[b] += 1;
        sign * deriv(orders)
    }
}

/// Inputs shared by the four weak identities.
pub struct WeakProblem<'a> {
    pub params: &'a ModelParams,
    /// Exact potential gradient on faces.
    pub grad_phi: &'a FaceField,
}

/// `|LHS - RHS|` of the four weak identities (`n1`, `n2`, `c`, `u`) over a
/// trajectory stored at uniform cadence starting at the initial data.
///
/// Time derivatives are applied by discrete summation by parts, which is
/// exact for stationary trajectories; all other space-time integrals use
/// trapezoidal time quadrature and midpoint/face quadrature in space.
pub fn weak_residuals(
    frames: &[State],
    tests: &TestFunctions,
    problem: &WeakProblem<'_>,
) -> Result<[f64; 4], DiagnosticsError> {
    if frames.len() < 2 {
        return Err(DiagnosticsError::Trajectory);
    }
    let t0 = frames[0].t;
    let span = frames.last().unwrap().t - t0;
    if tests.window > span * (1.0 + 1e-12) {
        return Err(DiagnosticsError::Window {
            window: tests.window,
            span,
        });
    }
    let grid = *frames[0].grid();
    let p = problem.params;
    let vol = grid.cell_volume();
    let phi = ScalarField::from_fn(&grid, |x| tests.phi(&grid, x));
    let grad_phi_test = FaceField::from_fn(&grid, |a, x| tests.grad_phi(&grid, x, a));
    let psi = tests.psi(&grid);
    let mut psi_lap = FaceField::zeros(&grid);
    for a in 0..grid.dim() {
        crate::flow::neg_vector_laplacian_component(&grid, a, psi.comp(a), psi_lap.comp_mut(a));
    }
    // grad psi at cell centers, [a][b]
    let mut grad_psi = vec![[[0.0; 3]; 3]; grid.n_cells()];
    for_each_index(grid.cells(), |i, n| {
        let x = grid.cell_center(i);
        for a in 0..grid.dim() {
            for b in 0..grid.dim() {
                grad_psi[n][a][b] = tests.grad_psi(&grid, x, a, b);
            }
        }
    });

    // Face average of a cell field times face values.
    let face_avg_dot = |f: &ScalarField, g: &FaceField, h: &FaceField| -> f64 {
        let cs = grid.strides();
        let mut s = 0.0;
        for a in 0..grid.dim() {
            let (gc, hc) = (g.comp(a), h.comp(a));
            for_each_index(grid.face_shape(a), |i, n| {
                if !grid.is_boundary_face(a, i) {
                    let hi = grid.index(i);
                    let fa = 0.5 * (f.values()[hi] + f.values()[hi - cs[a]]);
                    s += fa * gc[n] * hc[n];
                }
            });
        }
        s * vol
    };

    // Spatial integrand of every right-hand side and the convective terms
    // at one frame, before multiplying by theta(t).
    let stokes = StokesOperator::new(&grid);
    let spatial = |s: &State| -> Result<[f64; 4], DiagnosticsError> {
        let mut out = [0.0; 4];
        let gc = gradient_faces(&s.c);
        for (k, (n, chi, mu, ak, other)) in [
            (&s.n1, p.chi1, p.mu1, p.a1, &s.n2),
            (&s.n2, p.chi2, p.mu2, p.a2, &s.n1),
        ]
        .into_iter()
        .enumerate()
        {
            let conv = face_avg_dot(n, &s.u, &grad_phi_test);
            let diff = gradient_faces(n).dot(&grad_phi_test);
            let chemo = chi * face_avg_dot(&n.map(|v| chemo_mobility(v, p.eps)), &gc, &grad_phi_test);
            let react: f64 = n
                .values()
                .iter()
                .zip(other.values())
                .zip(phi.values())
                .map(|((&v, &w), &f)| mu * v * (1.0 - v - ak * w) * f)
                .sum::<f64>()
                * vol;
            // LHS convective part is subtracted: -(conv) - RHS
            out[k] = -conv - (-diff + chemo + react);
        }
        {
            let conv = face_avg_dot(&s.c, &s.u, &grad_phi_test);
            let diff = gc.dot(&grad_phi_test);
            let cons: f64 = s
                .c
                .values()
                .iter()
                .zip(s.n1.values().iter().zip(s.n2.values()))
                .zip(phi.values())
                .map(|((&c, (&a, &b)), &f)| consumption_rate(a, b, p) * c * f)
                .sum::<f64>()
                * vol;
            out[2] = -conv - (-diff - cons);
        }
        {
            // u (x) Y u : grad psi at cell centers
            let dim = grid.dim();
            let smoothed;
            let w = if p.kappa != 0 && p.eps > 0.0 {
                smoothed = yosida_apply(&stokes, &s.u, p.eps, &FlowSettings::default())
                    .map_err(DiagnosticsError::Yosida)?;
                &smoothed
            } else {
                &s.u
            };
            let centers = |v: &FaceField| {
                let mut c = vec![[0.0; 3]; grid.n_cells()];
                for a in 0..dim {
                    let fs = grid.face_strides(a)[a];
                    let comp = v.comp(a);
                    for_each_index(grid.cells(), |i, n| {
                        let f = grid.face_index(a, i);
                        c[n][a] = 0.5 * (comp[f] + comp[f + fs]);
                    });
                }
                c
            };
            let (uc, wc) = (centers(&s.u), centers(w));
            let mut conv = 0.0;
            for n in 0..grid.n_cells() {
                for a in 0..dim {
                    for b in 0..dim {
                        conv += uc[n][a] * wc[n][b] * grad_psi[n][a][b];
                    }
                }
            }
            conv *= vol * p.kappa as f64;
            let visc = s.u.dot(&psi_lap);
            let force = buoyancy_force(&s.n1, &s.n2, problem.grad_phi, p)
                .expect("frames share one grid")
                .dot(&psi);
            out[3] = -conv - (-visc + force);
        }
        Ok(out)
    };

    let mut res = [0.0; 4];
    let mut prev: Option<(&State, f64, [f64; 4])> = None;
    for s in frames {
        let tau = s.t - t0;
        if tau > tests.window * (1.0 + 1e-12) {
            break;
        }
        let th = tests.theta(tau);
        let sp = spatial(s)?;
        if let Some((ps, pth, psp)) = prev {
            let dt = s.t - ps.t;
            let mid = 0.5 * (th + pth);
            // time derivative term: sum (v^{k+1} - v^k) . (phi^k + phi^{k+1}) / 2
            let dn1: f64 = s.n1.values().iter().zip(ps.n1.values()).zip(phi.values()).map(|((a, b), f)| (a - b) * f).sum::<f64>() * vol;
            let dn2: f64 = s.n2.values().iter().zip(ps.n2.values()).zip(phi.values()).map(|((a, b), f)| (a - b) * f).sum::<f64>() * vol;
            let dc: f64 = s.c.values().iter().zip(ps.c.values()).zip(phi.values()).map(|((a, b), f)| (a - b) * f).sum::<f64>() * vol;
            let mut du = s.u.clone();
            du.axpy(-1.0, &ps.u);
            let duv = du.dot(&psi);
            for (k, d) in [dn1, dn2, dc, duv].into_iter().enumerate() {
                res[k] += d * mid + 0.5 * dt * (sp[k] * th + psp[k] * pth);
            }
        }
        prev = Some((s, th, sp));
    }
    Ok(res.map(f64::abs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::steady_states;

    fn uniform(grid: &Grid, n1: f64, n2: f64, c: f64) -> State {
        State {
            t: 0.0,
            n1: ScalarField::constant(grid, n1),
            n2: ScalarField::constant(grid, n2),
            c: ScalarField::constant(grid, c),
            u: FaceField::zeros(grid),
            p: ScalarField::zeros(grid),
        }
    }

    #[test]
    fn energy_f_examples() {
        let g = Grid::unit(2, 8).unwrap();
        let cfg = EnergyConfig::default();
        assert_eq!(energy_f(&uniform(&g, 1.0, 1.0, 0.3), &cfg).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let cfg2 = EnergyConfig { chi: 3.0, kbar: 0.2, b: 7.0 };
        assert!((energy_f(&uniform(&g, e, 1.0, 2.0), &cfg2).unwrap() - e).abs() < 1e-13);
        let mut bad = uniform(&g, 1.0, 1.0, 1.0);
        bad.n2.values_mut()[0] = 0.0;
        assert!(energy_f(&bad, &cfg).is_err());
    }

    #[test]
    fn signal_underflow_flagged() {
        let g = Grid::unit(2, 8).unwrap();
        let mut s = uniform(&g, 1.0, 1.0, 1.0);
        s.c.values_mut()[3] = 0.0;
        let t = energy_terms(&s, &EnergyConfig::default()).unwrap();
        assert!(t.underflow && t.signal.is_finite());
        assert!(dissipation_terms(&s).unwrap().underflow);
    }

    #[test]
    fn uniform_state_has_no_dissipation() {
        let g = Grid::unit(3, 5).unwrap();
        let d = dissipation_terms(&uniform(&g, 0.4, 2.0, 0.7)).unwrap();
        assert_eq!([d.d_n1, d.d_n2, d.d_c4, d.d_hess, d.d_u], [0.0; 5]);
    }

    #[test]
    fn g_examples() {
        let g = Grid::unit(2, 8).unwrap();
        let cfg = EnergyConfig::default();
        let p = ModelParams::default();
        let s = steady_states(&p);
        let at_eq = uniform(&g, s.n1_limit, s.n2_limit, 0.0);
        assert!((energy_g(&at_eq, &cfg, &s).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        let ex = steady_states(&ModelParams { a1: 1.5, ..p });
        let mut st = uniform(&g, 1e-300, 1.0, 0.0);
        st.n1 = ScalarField::zeros(&g);
        assert!((energy_g(&st, &cfg, &ex).unwrap() - 1.0).abs() < 1e-14);
        let oos = steady_states(&ModelParams { a1: 2.0, a2: 2.0, ..p });
        assert_eq!(energy_g(&at_eq, &cfg, &oos), Err(DiagnosticsError::OutOfScope));
    }

    #[test]
    fn blow_up_examples() {
        let g = Grid::unit(2, 8).unwrap();
        let s = uniform(&g, 1.0, 1.0, 1.0);
        let b = blow_up_indicator(&s, 4.0, 1e6);
        assert!((b.value - 3.0).abs() < 1e-14 && !b.flagged);
        let mut s2 = s.clone();
        s2.n1 = s2.n1.map(|v| 2.0 * v);
        assert!(blow_up_indicator(&s2, 4.0, 1e6).value > b.value);
        s2.n1.values_mut()[0] = f64::NAN;
        assert!(blow_up_indicator(&s2, 4.0, 1e6).flagged);
        let mut s3 = s;
        s3.n2.values_mut()[0] = 2e6;
        assert!(blow_up_indicator(&s3, 4.0, 1e6).flagged);
    }

    #[test]
    fn distance_examples() {
        let g = Grid::unit(2, 8).unwrap();
        let s = steady_states(&ModelParams::default());
        let d = distance_to_limit(&uniform(&g, 1.0, 1.0, 0.0), &s).unwrap();
        assert!((d[0] - 1.0 / 3.0).abs() < 1e-15 && (d[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(&d[2..], &[0.0, 0.0]);
        let exact = uniform(&g, s.n1_limit, s.n2_limit, 0.0);
        assert_eq!(distance_to_limit(&exact, &s).unwrap(), [0.0; 4]);
    }

    #[test]
    fn accumulators_frozen_at_equilibrium() {
        let g = Grid::unit(2, 8).unwrap();
        let s = steady_states(&ModelParams::default());
        let st = uniform(&g, s.n1_limit, s.n2_limit, 0.0);
        let acc = update_accumulators(&Accumulators::default(), &st, 0.5, &s);
        assert_eq!(acc, Accumulators::default());
    }

    #[test]
    fn csv_row_matches_header() {
        let g = Grid::unit(2, 8).unwrap();
        let s = steady_states(&ModelParams::default());
        let st = uniform(&g, 0.5, 0.7, 1.0);
        let rec = DiagnosticsRecord::evaluate(&st, 0.01, &EnergyConfig::default(), &s, Accumulators::default(), 4.0).unwrap();
        assert!(rec.is_finite());
        assert_eq!(rec.csv_row().split(',').count(), CSV_COLUMNS.len());
    }

    #[test]
    fn zero_test_functions_give_zero_residuals() {
        let g = Grid::unit(2, 8).unwrap();
        let p = ModelParams::default();
        let frames: Vec<State> = (0..5)
            .map(|k| State { t: 0.1 * k as f64, ..uniform(&g, 0.3 + 0.01 * k as f64, 0.9, 0.5) })
            .collect();
        let gp = FaceField::zeros(&g);
        // window of zero length makes theta vanish on every frame but t=0,
        // where the time weights are zero.
        let tf = TestFunctions { modes: [1, 1, 1], window: 0.0 };
        let r = weak_residuals(&frames, &tf, &WeakProblem { params: &p, grad_phi: &gp }).unwrap();
        assert_eq!(r, [0.0; 4]);
        let tf = TestFunctions { modes: [1, 1, 1], window: 1.0 };
        assert!(weak_residuals(&frames, &tf, &WeakProblem { params: &p, grad_phi: &gp }).is_err());
    }
}
