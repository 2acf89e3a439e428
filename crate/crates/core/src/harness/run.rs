//! Scenario execution: the adaptive time loop, per-step invariant audit,
//! diagnostics at the output cadence and the run summary.

use super::config::{ConfigError, ScenarioConfig};
use super::output;
use crate::diagnostics::{
    blow_up_indicator, update_accumulators, Accumulators, DiagnosticsError, DiagnosticsRecord,
};
use crate::flow::{velocity_step, FlowContext, FlowError};
use crate::grid::{FaceField, Grid, GridError, ScalarField};
use crate::model::{buoyancy_force, steady_states, ModelParams, Regime, SteadyState};
use crate::ops::{divergence_faces, integrate};
use crate::transport::{scalar_step, stable_dt, DiffusionSolver, State, TransportError};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("at t = {t}: {source}")]
    Transport { t: f64, source: TransportError },
    #[error("at t = {t}: {source}")]
    Flow { t: f64, source: FlowError },
    #[error("at t = {t}: {source}")]
    Diagnostics { t: f64, source: DiagnosticsError },
    #[error("at t = {t}: step {dt:e} fell below transport.dt_min ({binding} limit)")]
    StepTooSmall { t: f64, dt: f64, binding: &'static str },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}")]
    Invalid(String),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Configuration problems as opposed to failures during stepping.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Invalid(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The blow-up indicator crossed the ceiling or went non-finite.
    BlowUp,
}

/// Worst values of the per-step structural checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantAudit {
    pub steps: usize,
    pub min_n1: f64,
    pub min_n2: f64,
    pub min_c: f64,
    /// Largest step-to-step increase of `max c`.
    pub max_c_increase: f64,
    pub max_divergence: f64,
    /// Largest per-step mass-reaction ledger error relative to the mass.
    pub max_ledger_error: f64,
    /// Largest `int n_i - max(int n_i(0), |Omega|)`.
    pub max_mass_excess: f64,
    pub violations: usize,
    /// The first few violations in words.
    pub first_violations: Vec<String>,
}

pub const MAX_C_SLACK: f64 = 1e-12;
pub const DIVERGENCE_TOL: f64 = 1e-10;
pub const LEDGER_TOL: f64 = 1e-10;
pub const MASS_SLACK: f64 = 1e-8;

impl InvariantAudit {
    fn new() -> Self {
        InvariantAudit {
            steps: 0,
            min_n1: f64::INFINITY,
            min_n2: f64::INFINITY,
            min_c: f64::INFINITY,
            max_c_increase: f64::NEG_INFINITY,
            max_divergence: 0.0,
            max_ledger_error: 0.0,
            max_mass_excess: f64::NEG_INFINITY,
            violations: 0,
            first_violations: Vec::new(),
        }
    }

    fn flag(&mut self, t: f64, what: String) {
        self.violations += 1;
        if self.first_violations.len() < 8 {
            self.first_violations.push(format!("t = {t}: {what}"));
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub f_initial: f64,
    pub f_max: f64,
    /// `max_t F(t) - F(0)` over the recorded times.
    pub f_bound: f64,
    pub g_initial: Option<f64>,
    pub g_final: Option<f64>,
}

/// Reproducible summary of one run; wall-clock time is kept out of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub final_time: f64,
    pub steps: usize,
    pub regime: Regime,
    pub limits: Option<[f64; 2]>,
    /// `(max|n1-N1|, max|n2-N2|, max c, max|u|)` at the final time.
    pub final_distances: Option<[f64; 4]>,
    pub accumulators: Accumulators,
    pub energy: EnergySummary,
    pub audit: InvariantAudit,
    pub max_c_nonincreasing: bool,
    pub blow_up_max: f64,
    /// The velocity part of the blow-up monitor.
    pub blow_up_velocity_norm: String,
    pub signal_underflow: bool,
    pub dt_min_used: f64,
    pub dt_max_used: f64,
    pub config_hash: String,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub snapshots: bool,
    /// Keep every output-time state in memory.
    pub keep_frames: bool,
    pub quiet: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub records: Vec<DiagnosticsRecord>,
    pub frames: Vec<State>,
    pub wall_seconds: f64,
}

/// Everything a run needs, built once from a config.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: Grid,
    pub grad_phi: FaceField,
    pub target: SteadyState,
    pub initial: State,
}

impl Scenario {
    pub fn new(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        config.check()?;
        let grid = config.build_grid()?;
        let grad_phi = config.potential()?.grad_faces(&grid);
        let init = config.initial_data(&grid)?;
        Ok(Scenario {
            config: config.clone(),
            grid,
            grad_phi,
            target: steady_states(&config.params),
            initial: State {
                t: 0.0,
                n1: init.n1,
                n2: init.n2,
                c: init.c,
                u: init.u,
                p: ScalarField::zeros(&grid),
            },
        })
    }

    /// Build from a prescribed initial state, bypassing the expression
    /// layer. The scalars must still be strictly positive.
    pub fn with_state(config: &ScenarioConfig, state: State) -> Result<Self, ConfigError> {
        let mut s = Scenario::new(config)?;
        let init = crate::model::validate_initial_data(state.n1, state.n2, state.c, state.u)?;
        if init.n1.grid() != &s.grid {
            return Err(ConfigError::Grid(GridError::Mismatch));
        }
        s.initial = State {
            t: 0.0,
            n1: init.n1,
            n2: init.n2,
            c: init.c,
            u: init.u,
            p: ScalarField::zeros(&s.grid),
        };
        Ok(s)
    }
}

fn masses(s: &State) -> [f64; 2] {
    [integrate(&s.n1), integrate(&s.n2)]
}

pub fn run_scenario(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutput, HarnessError> {
    run_prepared(&Scenario::new(config)?, opts)
}

pub fn run_prepared(scn: &Scenario, opts: &RunOptions) -> Result<RunOutput, HarnessError> {
    let clock = Instant::now();
    let cfg = &scn.config;
    let params: &ModelParams = &cfg.params;
    let grid = scn.grid;
    let ctx = FlowContext::new(&grid, cfg.flow);
    let diffusion = DiffusionSolver::new(&grid, cfg.transport.diffusion_tol);
    let out_dir = opts.out_dir.clone().or_else(|| cfg.run.out_dir.clone());
    let snapshots = opts.snapshots || cfg.run.snapshots;
    if let Some(d) = &out_dir {
        std::fs::create_dir_all(d)?;
    }

    let mut state = scn.initial.clone();
    let t_end = cfg.run.t_end;
    let every = cfg.run.output_every;
    let mass0 = masses(&state);
    let mass_cap = mass0.map(|m| m.max(grid.domain_volume()) + MASS_SLACK);

    let mut audit = InvariantAudit::new();
    let mut acc = Accumulators::default();
    let mut records = Vec::new();
    let mut frames = Vec::new();
    let mut blow_up_max = 0.0f64;
    let mut status = RunStatus::Completed;
    let (mut dt_lo, mut dt_hi) = (f64::INFINITY, 0.0f64);
    let q = cfg.run.w1q;

    let diag_err = |t: f64| move |source| HarnessError::Diagnostics { t, source };
    let emit = |state: &State, dt: f64, acc: Accumulators, records: &mut Vec<DiagnosticsRecord>, frames: &mut Vec<State>| -> Result<(), HarnessError> {
        let rec = DiagnosticsRecord::evaluate(state, dt, &cfg.energy, &scn.target, acc, q).map_err(diag_err(state.t))?;
        if snapshots {
            if let Some(d) = &out_dir {
                output::write_snapshot(&d.join("snapshots"), records.len(), state)?;
            }
        }
        if !opts.quiet {
            eprintln!(
                "t = {:>10.4}  F = {:>12.5e}  max n1 = {:.4e}  max n2 = {:.4e}  max c = {:.4e}  max|u| = {:.3e}",
                rec.t, rec.energy_f, rec.max[0], rec.max[1], rec.max[2], rec.max[3]
            );
        }
        records.push(rec);
        if opts.keep_frames {
            frames.push(state.clone());
        }
        Ok(())
    };

    emit(&state, 0.0, acc, &mut records, &mut frames)?;
    let b0 = blow_up_indicator(&state, q, cfg.run.blowup_ceiling);
    blow_up_max = blow_up_max.max(b0.value);
    if b0.flagged {
        status = RunStatus::BlowUp;
    }

    let mut next_out = 1usize;
    while status == RunStatus::Completed && state.t < t_end {
        let target_t = (next_out as f64 * every).min(t_end);
        let limits = stable_dt(&state, params, &cfg.transport, cfg.flow.cfl_safety);
        let mut dt = limits.min().min(cfg.transport.dt_max);
        let rem = target_t - state.t;
        // A cadence that is a multiple of dt_max must not leave slivers.
        let cap_binds = cfg.transport.dt_max <= limits.min();
        let hit = dt >= rem || (cap_binds && rem <= dt * (1.0 + 1e-9));
        if hit {
            dt = rem;
        } else if dt > 0.5 * rem {
            dt = 0.5 * rem;
        }
        if !hit && dt < cfg.transport.dt_min {
            return Err(HarnessError::StepTooSmall {
                t: state.t,
                dt,
                binding: limits.binding(),
            });
        }
        let t = state.t;
        let step = scalar_step(&state, params, dt, &cfg.transport, cfg.flow.cfl_safety, &diffusion)
            .map_err(|source| HarnessError::Transport { t, source })?;
        let forcing = buoyancy_force(&step.n1, &step.n2, &scn.grad_phi, params)?;
        let vel = velocity_step(&ctx, &state.u, &forcing, params, dt).map_err(|source| HarnessError::Flow { t, source })?;
        let new = State {
            t: if hit { target_t } else { t + dt },
            n1: step.n1,
            n2: step.n2,
            c: step.c,
            u: vel.u,
            p: vel.pressure,
        };

        audit.steps += 1;
        let tn = new.t;
        let (m1, m2, mc) = (new.n1.min(), new.n2.min(), new.c.min());
        audit.min_n1 = audit.min_n1.min(m1);
        audit.min_n2 = audit.min_n2.min(m2);
        audit.min_c = audit.min_c.min(mc);
        if !(m1 > 0.0 && m2 > 0.0) {
            audit.flag(tn, format!("population minimum not positive ({m1:e}, {m2:e})"));
        }
        if !(mc >= 0.0) {
            audit.flag(tn, format!("signal minimum negative ({mc:e})"));
        }
        let dc = new.c.max() - state.c.max();
        audit.max_c_increase = audit.max_c_increase.max(dc);
        if dc > MAX_C_SLACK {
            audit.flag(tn, format!("max c increased by {dc:e}"));
        }
        let div = divergence_faces(&new.u).max_abs();
        audit.max_divergence = audit.max_divergence.max(div);
        if div > DIVERGENCE_TOL {
            audit.flag(tn, format!("divergence {div:e}"));
        }
        let m = masses(&new);
        for s in 0..2 {
            let rel = step.report.ledger_error[s] / step.report.mass_before[s];
            audit.max_ledger_error = audit.max_ledger_error.max(rel);
            if rel > LEDGER_TOL {
                audit.flag(tn, format!("mass ledger error {rel:e} for n{}", s + 1));
            }
            audit.max_mass_excess = audit.max_mass_excess.max(m[s] - (mass_cap[s] - MASS_SLACK));
            if m[s] > mass_cap[s] {
                audit.flag(tn, format!("mass of n{} exceeds its bound", s + 1));
            }
        }

        acc = update_accumulators(&acc, &new, dt, &scn.target);
        dt_lo = dt_lo.min(dt);
        dt_hi = dt_hi.max(dt);
        state = new;

        let b = blow_up_indicator(&state, q, cfg.run.blowup_ceiling);
        blow_up_max = if b.value.is_finite() { blow_up_max.max(b.value) } else { f64::INFINITY };
        if b.flagged {
            status = RunStatus::BlowUp;
            if !opts.quiet {
                eprintln!("numerical blow-up at t = {}: indicator {:e}", state.t, b.value);
            }
            break;
        }
        if hit {
            emit(&state, dt, acc, &mut records, &mut frames)?;
            next_out += 1;
        }
    }

    let first = &records[0];
    let last = records.last().expect("initial record");
    let f_max = records.iter().map(|r| r.energy_f).fold(f64::NEG_INFINITY, f64::max);
    let summary = RunSummary {
        status,
        final_time: state.t,
        steps: audit.steps,
        regime: scn.target.regime,
        limits: scn.target.limits(),
        final_distances: last.distance,
        accumulators: acc,
        energy: EnergySummary {
            f_initial: first.energy_f,
            f_max,
            f_bound: f_max - first.energy_f,
            g_initial: first.energy_g,
            g_final: last.energy_g,
        },
        max_c_nonincreasing: audit.max_c_increase <= MAX_C_SLACK,
        audit,
        blow_up_max,
        blow_up_velocity_norm: "L2 norm of grad u (in place of the fractional Stokes power)".into(),
        signal_underflow: records.iter().any(|r| r.dissipation.underflow),
        dt_min_used: if dt_lo.is_finite() { dt_lo } else { 0.0 },
        dt_max_used: dt_hi,
        config_hash: cfg.hash(),
    };
    if let Some(d) = &out_dir {
        output::write_csv(&d.join("diagnostics.csv"), &records)?;
        output::write_json(&d.join("summary.json"), &summary)?;
    }
    Ok(RunOutput {
        summary,
        records,
        frames,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}
