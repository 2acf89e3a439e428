//! Weak-form consistency: residuals of the four integral identities on a
//! ladder of simultaneous `(h, dt)` refinements.

use super::config::ScenarioConfig;
use super::run::{run_scenario, HarnessError, InvariantAudit, RunOptions};
use crate::diagnostics::{weak_residuals, TestFunctions, WeakProblem};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakLevel {
    pub cells: Vec<usize>,
    pub dt: f64,
    /// `|LHS - RHS|` for the `n1`, `n2`, `c` and `u` identities.
    pub residuals: [f64; 4],
    pub audit: InvariantAudit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakStudy {
    pub tests: TestFunctions,
    pub levels: Vec<WeakLevel>,
    /// Residual ratio coarse/fine between consecutive levels.
    pub ratios: Vec<[f64; 4]>,
}

/// Residuals of one run. The step is pinned to `transport.dt_max`, which
/// must also be the output cadence, and the test functions span the run.
pub fn weak_residuals_for(config: &ScenarioConfig) -> Result<([f64; 4], TestFunctions, InvariantAudit), HarnessError> {
    let out = run_scenario(
        config,
        &RunOptions {
            keep_frames: true,
            quiet: true,
            ..Default::default()
        },
    )?;
    if out.summary.dt_min_used < config.transport.dt_max * (1.0 - 1e-9) {
        return Err(HarnessError::Invalid(format!(
            "the stability limit cut the step to {:e}, below transport.dt_max = {}; the study needs a fixed step",
            out.summary.dt_min_used,
            config.transport.dt_max
        )));
    }
    let grid = config.build_grid()?;
    let grad_phi = config.potential()?.grad_faces(&grid);
    let tests = TestFunctions::from_seed(config.run.seed, config.run.t_end);
    let problem = WeakProblem {
        params: &config.params,
        grad_phi: &grad_phi,
    };
    let r = weak_residuals(&out.frames, &tests, &problem).map_err(|source| HarnessError::Diagnostics {
        t: out.summary.final_time,
        source,
    })?;
    Ok((r, tests, out.summary.audit))
}

/// Halve `h` and `dt` `levels - 1` times starting from `config`.
pub fn weak_residual_study(config: &ScenarioConfig, levels: usize) -> Result<WeakStudy, HarnessError> {
    let mut out = Vec::new();
    let mut tests = None;
    for k in 0..levels {
        let f = (1usize << k) as f64;
        let mut cfg = config.clone();
        cfg.grid.cells = config.grid.cells.iter().map(|c| c << k).collect();
        cfg.transport.dt_max = config.transport.dt_max / f;
        cfg.run.output_every = cfg.transport.dt_max;
        cfg.transport.dt_min = cfg.transport.dt_min.min(cfg.transport.dt_max);
        let (residuals, t, audit) = weak_residuals_for(&cfg)?;
        tests = Some(t);
        out.push(WeakLevel {
            cells: cfg.grid.cells.clone(),
            dt: cfg.transport.dt_max,
            residuals,
            audit,
        });
    }
    let ratios = out
        .windows(2)
        .map(|w| {
            let mut r = [0.0; 4];
            for i in 0..4 {
                r[i] = w[0].residuals[i] / w[1].residuals[i];
            }
            r
        })
        .collect();
    Ok(WeakStudy {
        tests: tests.ok_or_else(|| HarnessError::Invalid("at least one level is required".into()))?,
        levels: out,
        ratios,
    })
}
