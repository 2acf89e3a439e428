//! Consistency of the regularization: identical scenarios across a
//! decreasing list of `eps`, compared in the space-time `L2` norm.

use super::config::ScenarioConfig;
use super::run::{run_scenario, HarnessError, InvariantAudit, RunOptions};
use crate::transport::State;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPair {
    pub eps_a: f64,
    pub eps_b: f64,
    /// `L2(Omega x (0,T))` distances for `(n1, n2, c, u)`.
    pub distance: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub eps: Vec<f64>,
    pub pairs: Vec<SweepPair>,
    /// Invariant audit of each finished member run.
    pub audits: Vec<InvariantAudit>,
    /// Set when a member run failed; `pairs` then holds what was finished.
    pub aborted: Option<String>,
}

impl SweepResult {
    /// Consecutive distances strictly decrease for every field.
    pub fn is_cauchy(&self) -> bool {
        self.aborted.is_none()
            && self
                .pairs
                .windows(2)
                .all(|w| (0..4).all(|k| w[1].distance[k] < w[0].distance[k]))
    }
}

/// Space-time distance between two trajectories recorded at the same times,
/// trapezoidal in time.
pub fn spacetime_distance(a: &[State], b: &[State]) -> Result<[f64; 4], HarnessError> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.t != y.t) {
        return Err(HarnessError::Invalid("trajectories are recorded at different times".into()));
    }
    let sq = |x: &State, y: &State| -> [f64; 4] {
        let vol = x.grid().cell_volume();
        let s = |f: &[f64], g: &[f64]| f.iter().zip(g).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() * vol;
        let mut du = x.u.clone();
        du.axpy(-1.0, &y.u);
        [
            s(x.n1.values(), y.n1.values()),
            s(x.n2.values(), y.n2.values()),
            s(x.c.values(), y.c.values()),
            du.norm_sq(),
        ]
    };
    let mut acc = [0.0; 4];
    for k in 1..a.len() {
        let dt = a[k].t - a[k - 1].t;
        let (p, q) = (sq(&a[k - 1], &b[k - 1]), sq(&a[k], &b[k]));
        for i in 0..4 {
            acc[i] += 0.5 * dt * (p[i] + q[i]);
        }
    }
    Ok(acc.map(f64::sqrt))
}

/// Run `config` once per entry of `eps_list` (nonnegative, strictly
/// decreasing) and compare consecutive runs.
pub fn eps_consistency_sweep(config: &ScenarioConfig, eps_list: &[f64], quiet: bool) -> Result<SweepResult, HarnessError> {
    if eps_list.iter().any(|e| !(e.is_finite() && *e >= 0.0)) || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HarnessError::Invalid("eps list must be nonnegative and strictly decreasing".into()));
    }
    let mut result = SweepResult {
        eps: eps_list.to_vec(),
        pairs: Vec::new(),
        audits: Vec::new(),
        aborted: None,
    };
    let mut prev: Option<(f64, Vec<State>)> = None;
    for &eps in eps_list {
        let mut cfg = config.clone();
        cfg.params.eps = eps;
        let opts = RunOptions {
            keep_frames: true,
            quiet: true,
            ..Default::default()
        };
        let frames = match run_scenario(&cfg, &opts) {
            Ok(out) => {
                result.audits.push(out.summary.audit);
                out.frames
            }
            Err(e) if e.is_config() => return Err(e),
            Err(e) => {
                result.aborted = Some(format!("eps = {eps}: {e}"));
                return Ok(result);
            }
        };
        if !quiet {
            eprintln!("eps = {eps:e} done");
        }
        if let Some((eps_a, a)) = prev {
            result.pairs.push(SweepPair {
                eps_a,
                eps_b: eps,
                distance: spacetime_distance(&a, &frames)?,
            });
        }
        prev = Some((eps, frames));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_lists_rejected_and_singleton_is_empty() {
        let cfg = ScenarioConfig::from_toml(
            r#"
[grid]
dim = 2
cells = [4, 4]
[init]
n1 = "1"
n2 = "1"
c = "1"
[run]
t_end = 0.1
output_every = 0.05
"#,
        )
        .unwrap();
        assert!(eps_consistency_sweep(&cfg, &[1e-2, 1e-1], true).is_err());
        assert!(eps_consistency_sweep(&cfg, &[-1.0], true).is_err());
        let r = eps_consistency_sweep(&cfg, &[0.0], true).unwrap();
        assert!(r.pairs.is_empty() && r.aborted.is_none());
    }
}
