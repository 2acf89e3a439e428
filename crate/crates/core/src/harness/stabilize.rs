//! Large-time experiments: run a canonical scenario and check that the
//! state reaches the attracting constant state of its competition regime.

use super::config::{ConfigError, ScenarioConfig};
use super::run::{run_scenario, HarnessError, RunOptions, RunOutput, RunStatus, RunSummary};
use crate::model::Regime;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const COEXISTENCE: &str = include_str!("../../scenarios/coexistence.toml");
pub const EXCLUSION: &str = include_str!("../../scenarios/exclusion.toml");

/// Distance tolerance at the final time.
pub const TOLERANCE: f64 = 1e-2;
/// Share of the run, counted from the end, over which the distances must
/// not grow.
pub const TAIL_FRACTION: f64 = 0.2;
pub const TAIL_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Coexistence,
    Exclusion,
}

impl Case {
    pub fn scenario(self) -> &'static str {
        match self {
            Case::Coexistence => COEXISTENCE,
            Case::Exclusion => EXCLUSION,
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            Case::Coexistence => Regime::Coexistence,
            Case::Exclusion => Regime::Exclusion,
        }
    }

    pub fn config(self, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
        ScenarioConfig::from_toml_with(self.scenario(), overrides)
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::Coexistence => "coexistence",
            Case::Exclusion => "exclusion",
        })
    }
}

impl FromStr for Case {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "coexistence" | "i" => Ok(Case::Coexistence),
            "exclusion" | "ii" => Ok(Case::Exclusion),
            _ => Err(format!("unknown case `{s}` (coexistence or exclusion)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    pub case: Case,
    pub tolerance: f64,
    pub final_distances: Option<[f64; 4]>,
    pub tail_monotone: bool,
    /// Largest step-to-step growth of any distance over the tail.
    pub tail_worst_increase: f64,
    pub passed: bool,
    pub reasons: Vec<String>,
    pub summary: RunSummary,
}

/// Judge a finished run against the limits of `case`.
pub fn evaluate(case: Case, out: &RunOutput) -> StabilizationReport {
    let s = &out.summary;
    let mut reasons = Vec::new();
    if s.regime != case.regime() {
        reasons.push(format!("parameters fall in the {:?} regime, not {case}", s.regime));
    }
    if s.status != RunStatus::Completed {
        reasons.push("run stopped on the blow-up monitor".into());
    }
    if !s.audit.passed() {
        reasons.push(format!("{} structural invariant violations", s.audit.violations));
    }
    let labels = ["n1", "n2", "c", "|u|"];
    match s.final_distances {
        Some(d) => {
            for (k, v) in d.iter().enumerate() {
                if !(*v <= TOLERANCE) {
                    reasons.push(format!("final distance in {} is {v:e} > {TOLERANCE:e}", labels[k]));
                }
            }
        }
        None => reasons.push("no limit is asserted for these parameters".into()),
    }
    let t_tail = s.final_time * (1.0 - TAIL_FRACTION);
    let tail: Vec<[f64; 4]> = out
        .records
        .iter()
        .filter(|r| r.t >= t_tail - 1e-12)
        .filter_map(|r| r.distance)
        .collect();
    let mut worst = f64::NEG_INFINITY;
    for w in tail.windows(2) {
        for k in 0..4 {
            worst = worst.max(w[1][k] - w[0][k]);
        }
    }
    let tail_monotone = worst <= TAIL_SLACK;
    if !tail_monotone {
        reasons.push(format!("distances grew by {worst:e} over the final {}% of the run", TAIL_FRACTION * 100.0));
    }
    StabilizationReport {
        case,
        tolerance: TOLERANCE,
        final_distances: s.final_distances,
        tail_monotone,
        tail_worst_increase: if worst.is_finite() { worst } else { 0.0 },
        passed: reasons.is_empty(),
        reasons,
        summary: s.clone(),
    }
}

pub fn stabilization_experiment(
    case: Case,
    overrides: &[String],
    opts: &RunOptions,
) -> Result<(StabilizationReport, RunOutput), HarnessError> {
    let cfg = case.config(overrides)?;
    let out = run_scenario(&cfg, opts)?;
    Ok((evaluate(case, &out), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_scenarios_parse() {
        for case in [Case::Coexistence, Case::Exclusion] {
            let cfg = case.config(&[]).unwrap();
            assert_eq!(cfg.grid.cells, vec![64, 64]);
            assert_eq!(cfg.run.t_end, 60.0);
            assert_eq!(crate::model::steady_states(&cfg.params).regime, case.regime());
        }
    }

    #[test]
    fn equilibrium_start_passes_immediately() {
        let o: Vec<String> = [
            "grid.cells=[8, 8]",
            "init.n1=\"2/3\"",
            "init.n2=\"2/3\"",
            "init.c=\"1e-14\"",
            "init.stream=\"0\"",
            "run.t_end=1",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let (r, _) = stabilization_experiment(Case::Coexistence, &o, &RunOptions { quiet: true, ..Default::default() }).unwrap();
        assert!(r.passed, "{:?}", r.reasons);
    }

    #[test]
    fn wrong_regime_fails() {
        let o: Vec<String> = ["grid.cells=[8, 8]", "run.t_end=0.5", "params.a1=0.5"].iter().map(|s| s.to_string()).collect();
        let (r, _) = stabilization_experiment(Case::Exclusion, &o, &RunOptions { quiet: true, ..Default::default() }).unwrap();
        assert!(!r.passed);
    }
}
