//! Spatially homogeneous reduction: with uniform data and a flat potential
//! every spatial operator vanishes and the system collapses to three ODEs,
//! integrated here with classical RK4.

use super::config::ScenarioConfig;
use super::run::{run_scenario, HarnessError, InvariantAudit, RunOptions};
use crate::model::{consumption_rate, lv_reaction, ModelParams};
use serde::{Deserialize, Serialize};

/// `(n1, n2, c)` right-hand side of the homogeneous system.
pub fn ode_rhs(params: &ModelParams, y: [f64; 3]) -> [f64; 3] {
    let (r1, r2) = lv_reaction(y[0], y[1], params);
    [r1, r2, -consumption_rate(y[0], y[1], params) * y[2]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeSeries {
    pub params: ModelParams,
    pub t: Vec<f64>,
    pub y: Vec<[f64; 3]>,
}

fn rk4_step(params: &ModelParams, y: [f64; 3], h: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = ode_rhs(params, y);
    let k2 = ode_rhs(params, add(y, k1, 0.5 * h));
    let k3 = ode_rhs(params, add(y, k2, 0.5 * h));
    let k4 = ode_rhs(params, add(y, k3, h));
    let mut out = y;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrate from `y0` to `t_end` with steps of at most `dt_ode`.
pub fn ode_oracle(params: &ModelParams, y0: [f64; 3], t_end: f64, dt_ode: f64) -> OdeSeries {
    let steps = (t_end / dt_ode).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut t = vec![0.0];
    let mut y = vec![y0];
    for k in 1..=steps {
        let next = rk4_step(params, y[k - 1], h);
        y.push(next);
        t.push(k as f64 * h);
    }
    OdeSeries { params: *params, t, y }
}

impl OdeSeries {
    /// Cubic Hermite interpolation between stored steps.
    pub fn at(&self, t: f64) -> [f64; 3] {
        let n = self.t.len();
        if n == 1 || t <= self.t[0] {
            return self.y[0];
        }
        let h = self.t[1] - self.t[0];
        let k = (((t - self.t[0]) / h).floor() as usize).min(n - 2);
        let s = (t - self.t[k]) / h;
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        let (f0, f1) = (ode_rhs(&self.params, y0), ode_rhs(&self.params, y1));
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformReport {
    /// Largest relative deviation over cells and output times, per field.
    pub deviation: [f64; 3],
    pub max_deviation: f64,
    pub max_velocity: f64,
    /// Largest step the solver took.
    pub dt: f64,
    pub outputs: usize,
    pub audit: InvariantAudit,
}

/// Run the full solver on uniform data and compare against the ODE oracle
/// at every output time.
pub fn uniform_equivalence_test(config: &ScenarioConfig, dt_ode: f64) -> Result<UniformReport, HarnessError> {
    if !config.is_uniform()? {
        return Err(HarnessError::Invalid(
            "the homogeneous oracle needs constant initial data and a potential with zero gradient".into(),
        ));
    }
    let out = run_scenario(
        config,
        &RunOptions {
            keep_frames: true,
            quiet: true,
            ..Default::default()
        },
    )?;
    let first = &out.frames[0];
    let y0 = [first.n1.values()[0], first.n2.values()[0], first.c.values()[0]];
    let ode = ode_oracle(&config.params, y0, config.run.t_end, dt_ode);
    let mut deviation = [0.0f64; 3];
    let mut max_velocity = 0.0f64;
    for s in &out.frames {
        let y = ode.at(s.t);
        for (i, f) in [&s.n1, &s.n2, &s.c].into_iter().enumerate() {
            for v in f.values() {
                deviation[i] = deviation[i].max((v - y[i]).abs() / y[i].abs());
            }
        }
        max_velocity = max_velocity.max(s.u.max_abs());
    }
    Ok(UniformReport {
        deviation,
        max_deviation: deviation.iter().copied().fold(0.0, f64::max),
        max_velocity,
        dt: out.summary.dt_max_used,
        outputs: out.frames.len(),
        audit: out.summary.audit,
    })
}
