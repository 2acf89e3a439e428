//! Physical parameters, competitive kinetics, the regularized nonlinearities
//! and admissibility checks for initial data.

use crate::expr::{Expr, ExprError};
use crate::flow::{self, FlowError, PressureSolver};
use crate::grid::{for_each_index, FaceField, Grid, GridError, ScalarField, VelocityField};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter {name} = {value} violates {rule}")]
    Parameter {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
    #[error("initial {field} must be strictly positive; minimum is {min:e}")]
    NonPositiveInitial { field: &'static str, min: f64 },
    #[error("initial {field} contains non-finite values")]
    NonFiniteInitial { field: &'static str },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("initial velocity projection failed: {0}")]
    Projection(#[from] FlowError),
}

/// Constants of the coupled system plus the regularization parameter.
/// `eps = 0` selects the unregularized system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub chi1: f64,
    pub chi2: f64,
    pub a1: f64,
    pub a2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// 1 for Navier-Stokes, 0 for the Stokes variant.
    pub kappa: u8,
    pub eps: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            chi1: 0.5,
            chi2: 0.5,
            a1: 0.5,
            a2: 0.5,
            mu1: 1.0,
            mu2: 1.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 1.0,
            kappa: 1,
            eps: 1e-3,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let nonneg = [
            ("chi1", self.chi1),
            ("chi2", self.chi2),
            ("a1", self.a1),
            ("a2", self.a2),
            ("eps", self.eps),
        ];
        for (name, value) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::Parameter {
                    name,
                    value,
                    rule: ">= 0",
                });
            }
        }
        let pos = [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ];
        for (name, value) in pos {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::Parameter {
                    name,
                    value,
                    rule: "> 0",
                });
            }
        }
        if self.kappa > 1 {
            return Err(ModelError::Parameter {
                name: "kappa",
                value: self.kappa as f64,
                rule: "kappa in {0, 1}",
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Coexistence,
    Exclusion,
    OutOfScope,
}

/// Large-time limit of the two populations. For [`Regime::OutOfScope`] no
/// limit is asserted and both values are reported as zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub n1_limit: f64,
    pub n2_limit: f64,
    pub regime: Regime,
}

impl SteadyState {
    pub fn limits(&self) -> Option<[f64; 2]> {
        match self.regime {
            Regime::OutOfScope => None,
            _ => Some([self.n1_limit, self.n2_limit]),
        }
    }
}

/// Classify the competition coefficients and return the attracting state.
///
/// Weak competition (`a1, a2 < 1`) gives coexistence at
/// `((1-a1)/(1-a1 a2), (1-a2)/(1-a1 a2))`; `a1 >= 1 > a2` drives species 1
/// extinct with species 2 at carrying capacity.
pub fn steady_states(params: &ModelParams) -> SteadyState {
    let (a1, a2) = (params.a1, params.a2);
    if (0.0..1.0).contains(&a1) && (0.0..1.0).contains(&a2) {
        let det = 1.0 - a1 * a2;
        SteadyState {
            n1_limit: (1.0 - a1) / det,
            n2_limit: (1.0 - a2) / det,
            regime: Regime::Coexistence,
        }
    } else if a1 >= 1.0 && (0.0..1.0).contains(&a2) {
        SteadyState {
            n1_limit: 0.0,
            n2_limit: 1.0,
            regime: Regime::Exclusion,
        }
    } else {
        SteadyState {
            n1_limit: 0.0,
            n2_limit: 0.0,
            regime: Regime::OutOfScope,
        }
    }
}

/// Lotka-Volterra competition terms `(mu1 n1 (1-n1-a1 n2), mu2 n2 (1-a2 n1-n2))`.
pub fn lv_reaction(n1: f64, n2: f64, params: &ModelParams) -> (f64, f64) {
    (
        params.mu1 * n1 * (1.0 - n1 - params.a1 * n2),
        params.mu2 * n2 * (1.0 - params.a2 * n1 - n2),
    )
}

/// Saturated chemotactic mobility `n / (1 + eps n)`.
#[inline]
pub fn chemo_mobility(n: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        n
    } else {
        n / (1.0 + eps * n)
    }
}

/// Per-unit-signal consumption rate: `alpha n1 + beta n2`, or its
/// logarithmic regularization `log(1 + eps (alpha n1 + beta n2)) / eps`.
#[inline]
pub fn consumption_rate(n1: f64, n2: f64, params: &ModelParams) -> f64 {
    let s = params.alpha * n1 + params.beta * n2;
    if params.eps == 0.0 {
        s
    } else {
        (params.eps * s).ln_1p() / params.eps
    }
}

/// Buoyancy `(gamma n1 + delta n2) grad(Phi)` on interior faces, with the
/// density interpolated as the mean of the two adjacent cells.
pub fn buoyancy_force(
    n1: &ScalarField,
    n2: &ScalarField,
    grad_phi: &FaceField,
    params: &ModelParams,
) -> Result<FaceField, GridError> {
    let grid = *n1.grid();
    if *n2.grid() != grid || *grad_phi.grid() != grid {
        return Err(GridError::Mismatch);
    }
    let rho: Vec<f64> = n1
        .values()
        .iter()
        .zip(n2.values())
        .map(|(a, b)| params.gamma * a + params.delta * b)
        .collect();
    let cs = grid.strides();
    let mut out = FaceField::zeros(&grid);
    for a in 0..grid.dim() {
        let gp = grad_phi.comp(a);
        let comp = out.comp_mut(a);
        for_each_index(grid.face_shape(a), |i, n| {
            if !grid.is_boundary_face(a, i) {
                let hi = grid.index(i);
                comp[n] = 0.5 * (rho[hi] + rho[hi - cs[a]]) * gp[n];
            }
        });
    }
    Ok(out)
}

/// Time-independent gravitational potential with its exact gradient.
#[derive(Clone, Debug)]
pub struct Potential {
    expr: Expr,
    grad: [Expr; 3],
}

impl Potential {
    pub fn new(expr: Expr) -> Self {
        let grad = [expr.derivative(0), expr.derivative(1), expr.derivative(2)];
        Potential { expr, grad }
    }

    pub fn parse(src: &str) -> Result<Self, ExprError> {
        Ok(Self::new(Expr::parse(src)?))
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        self.expr.eval(x)
    }

    /// Exact gradient sampled at interior face centers.
    pub fn grad_faces(&self, grid: &Grid) -> FaceField {
        FaceField::from_fn(grid, |a, x| self.grad[a].eval(x))
    }
}

/// Initial data that passed admissibility checks.
#[derive(Clone, Debug)]
pub struct InitialData {
    pub n1: ScalarField,
    pub n2: ScalarField,
    pub c: ScalarField,
    /// Discretely solenoidal, no-slip.
    pub u: VelocityField,
}

/// Check strict positivity of the scalars and project the velocity onto the
/// discretely divergence-free subspace.
pub fn validate_initial_data(
    n1: ScalarField,
    n2: ScalarField,
    c: ScalarField,
    u: VelocityField,
) -> Result<InitialData, ModelError> {
    let grid = *n1.grid();
    if *n2.grid() != grid || *c.grid() != grid || *u.grid() != grid {
        return Err(GridError::Mismatch.into());
    }
    for (field, f) in [("n1", &n1), ("n2", &n2), ("c", &c)] {
        if !f.is_finite() {
            return Err(ModelError::NonFiniteInitial { field });
        }
        let min = f.min();
        if min <= 0.0 {
            return Err(ModelError::NonPositiveInitial { field, min });
        }
    }
    if !u.is_finite() {
        return Err(ModelError::NonFiniteInitial { field: "u" });
    }
    let mut u = u;
    u.enforce_boundary();
    let solver = PressureSolver::new(&grid);
    let (u, _) = flow::project(&solver, &u, &flow::FlowSettings::default())?;
    Ok(InitialData { n1, n2, c, u })
}
