//! Scenario files.
//!
//! A scenario is a TOML document with the sections `grid`, `params`, `init`,
//! `energy`, `flow`, `transport` and `run`. Unknown keys are rejected and
//! parse errors carry the line and column. Overrides of the form
//! `section.key=value` are applied to the parsed document before it is
//! typed, so they obey the same schema.

use crate::diagnostics::EnergyConfig;
use crate::expr::{Expr, ExprError};
use crate::flow::FlowSettings;
use crate::grid::{FaceField, Grid, GridError, ScalarField};
use crate::model::{validate_initial_data, InitialData, ModelError, ModelParams, Potential};
use crate::transport::TransportSettings;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("override `{0}` must look like section.key=value")]
    Override(String),
    #[error("{key}: {source}")]
    Expr { key: String, source: ExprError },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub cells: Vec<usize>,
    #[serde(default)]
    pub lengths: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, GridError> {
        if self.cells.len() != self.dim {
            return Err(GridError::Dimension(self.dim));
        }
        let lengths = self.lengths.clone().unwrap_or_else(|| vec![1.0; self.dim]);
        Grid::new(&lengths, &self.cells)
    }
}

/// Closed-form initial data. The velocity is given either componentwise
/// (`u`) or through a stream function (`stream`, velocity
/// `(d_y s, -d_x s, 0)`); it is projected onto the discretely solenoidal
/// subspace either way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub n1: String,
    pub n2: String,
    pub c: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<String>,
    #[serde(default = "zero_expr")]
    pub phi: String,
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub t_end: f64,
    /// Diagnostics are recorded at every multiple of this interval.
    pub output_every: f64,
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_ceiling")]
    pub blowup_ceiling: f64,
    /// Exponent of the `W^{1,q}` signal norm in the blow-up monitor.
    #[serde(default = "default_q")]
    pub w1q: f64,
    /// Seed of the weak-form test-function family.
    #[serde(default)]
    pub seed: u64,
}

fn default_ceiling() -> f64 {
    1e6
}

fn default_q() -> f64 {
    4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub params: ModelParams,
    pub init: InitSpec,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub flow: FlowSettings,
    #[serde(default)]
    pub transport: TransportSettings,
    pub run: RunSpec,
}

fn parse_value(text: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>()
        .map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Parse `section.key=value`; the value is read as TOML and falls back to a
/// bare string.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.into()))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.len() < 2 || keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(spec.into()));
    }
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v was just written"),
        Err(_) => toml::Value::String(raw.trim().into()),
    };
    let mut table = doc;
    for k in &keys[..keys.len() - 1] {
        table = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(spec.into()))?;
    }
    let last = keys[keys.len() - 1];
    // Expression keys hold strings; accept bare numbers for them.
    let value = match (table.get(last), value) {
        (Some(toml::Value::String(_)), toml::Value::Integer(_) | toml::Value::Float(_)) => {
            toml::Value::String(raw.trim().into())
        }
        (_, v) => v,
    };
    table.insert(last.to_string(), value);
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with(text, &[])
    }

    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            let mut doc = parse_value(text)?;
            for o in overrides {
                apply_override(&mut doc, o)?;
            }
            toml::Value::Table(doc)
                .try_into()
                .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Schema-level checks that need no grid.
    pub fn check(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        self.energy
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("energy: {e}")))?;
        let r = &self.run;
        let positive = [
            ("run.t_end", r.t_end),
            ("run.output_every", r.output_every),
            ("run.blowup_ceiling", r.blowup_ceiling),
            ("flow.poisson_tol", self.flow.poisson_tol),
            ("flow.helmholtz_tol", self.flow.helmholtz_tol),
            ("flow.cfl_safety", self.flow.cfl_safety),
            ("transport.cfl_safety", self.transport.cfl_safety),
            ("transport.dt_max", self.transport.dt_max),
            ("transport.dt_min", self.transport.dt_min),
            ("transport.diffusion_tol", self.transport.diffusion_tol),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{k} must be positive, got {v}")));
            }
        }
        if self.transport.dt_min > self.transport.dt_max {
            return Err(ConfigError::Invalid("transport.dt_min exceeds transport.dt_max".into()));
        }
        if !(r.w1q > 1.0) {
            return Err(ConfigError::Invalid(format!("run.w1q must exceed 1, got {}", r.w1q)));
        }
        if self.flow.cfl_safety >= 1.0 || self.transport.cfl_safety >= 1.0 {
            return Err(ConfigError::Invalid("CFL safety factors must be below 1".into()));
        }
        if self.grid.cells.len() != self.grid.dim {
            return Err(ConfigError::Invalid(format!(
                "grid.cells has {} entries for grid.dim = {}",
                self.grid.cells.len(),
                self.grid.dim
            )));
        }
        if self.init.u.is_some() && self.init.stream.is_some() {
            return Err(ConfigError::Invalid("give init.u or init.stream, not both".into()));
        }
        if let Some(u) = &self.init.u {
            if u.len() != self.grid.dim {
                return Err(ConfigError::Invalid(format!(
                    "init.u has {} components for a {}-dimensional grid",
                    u.len(),
                    self.grid.dim
                )));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Grid, ConfigError> {
        Ok(self.grid.build()?)
    }

    pub fn potential(&self) -> Result<Potential, ConfigError> {
        Potential::parse(&self.init.phi).map_err(|source| ConfigError::Expr {
            key: "init.phi".into(),
            source,
        })
    }

    /// Evaluate, check and project the initial data.
    pub fn initial_data(&self, grid: &Grid) -> Result<InitialData, ConfigError> {
        let field = |key: &str, src: &str| -> Result<ScalarField, ConfigError> {
            let e = expr(key, src)?;
            Ok(ScalarField::from_fn(grid, |x| e.eval(x)))
        };
        let n1 = field("init.n1", &self.init.n1)?;
        let n2 = field("init.n2", &self.init.n2)?;
        let c = field("init.c", &self.init.c)?;
        let u = if let Some(comps) = &self.init.u {
            let exprs = comps
                .iter()
                .enumerate()
                .map(|(a, s)| expr(&format!("init.u[{a}]"), s))
                .collect::<Result<Vec<_>, _>>()?;
            FaceField::from_fn(grid, |a, x| exprs[a].eval(x))
        } else if let Some(s) = &self.init.stream {
            let e = expr("init.stream", s)?;
            let (dy, dx) = (e.derivative(1), e.derivative(0));
            FaceField::from_fn(grid, |a, x| match a {
                0 => dy.eval(x),
                1 => -dx.eval(x),
                _ => 0.0,
            })
        } else {
            FaceField::zeros(grid)
        };
        Ok(validate_initial_data(n1, n2, c, u)?)
    }

    /// True when every initial expression is constant and the potential has
    /// a vanishing gradient.
    pub fn is_uniform(&self) -> Result<bool, ConfigError> {
        let mut exprs = vec![
            expr("init.n1", &self.init.n1)?,
            expr("init.n2", &self.init.n2)?,
            expr("init.c", &self.init.c)?,
        ];
        if let Some(u) = &self.init.u {
            for (a, s) in u.iter().enumerate() {
                exprs.push(expr(&format!("init.u[{a}]"), s)?);
            }
        }
        if let Some(s) = &self.init.stream {
            let e = expr("init.stream", s)?;
            exprs.push(e.derivative(0));
            exprs.push(e.derivative(1));
        }
        let phi = expr("init.phi", &self.init.phi)?;
        let flat_phi = (0..3).all(|a| {
            let d = phi.derivative(a);
            d.is_constant() && d.eval([0.0; 3]) == 0.0
        });
        Ok(exprs.iter().all(Expr::is_constant) && flat_phi)
    }
}

fn expr(key: &str, src: &str) -> Result<Expr, ConfigError> {
    Expr::parse(src).map_err(|source| ConfigError::Expr {
        key: key.into(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
dim = 2
cells = [8, 8]

[init]
n1 = "0.5 + 0.1*cos(pi*x)"
n2 = "0.5"
c = "1"

[run]
t_end = 1.0
output_every = 0.5
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.params, ModelParams::default());
        assert_eq!(cfg.run.blowup_ceiling, 1e6);
        assert_eq!(cfg.init.phi, "0");
        assert!(!cfg.is_uniform().unwrap());
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        let again = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let bad = MINIMAL.replace("[run]", "[run]\nbogus = 3");
        let err = ScenarioConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("line"), "{err}");
    }

    #[test]
    fn overrides_apply_before_typing() {
        let cfg = ScenarioConfig::from_toml_with(
            MINIMAL,
            &["params.a1=1.5".into(), "init.c=0.25".into(), "grid.cells=[6, 6]".into()],
        )
        .unwrap();
        assert_eq!(cfg.params.a1, 1.5);
        assert_eq!(cfg.init.c, "0.25");
        assert_eq!(cfg.grid.cells, vec![6, 6]);
        assert!(ScenarioConfig::from_toml_with(MINIMAL, &["a1".into()]).is_err());
        assert!(ScenarioConfig::from_toml_with(MINIMAL, &["params.nope=1".into()]).is_err());
    }

    #[test]
    fn zero_population_rejected_before_stepping() {
        let cfg = ScenarioConfig::from_toml_with(MINIMAL, &["init.n1=\"0\"".into()]).unwrap();
        let grid = cfg.build_grid().unwrap();
        assert!(matches!(
            cfg.initial_data(&grid),
            Err(ConfigError::Model(ModelError::NonPositiveInitial { field: "n1", .. }))
        ));
    }

    #[test]
    fn stream_function_gives_solenoidal_velocity() {
        let cfg = ScenarioConfig::from_toml_with(
            MINIMAL,
            &["init.stream=\"0.01*sin(pi*x)^2*sin(pi*y)^2\"".into()],
        )
        .unwrap();
        let grid = cfg.build_grid().unwrap();
        let init = cfg.initial_data(&grid).unwrap();
        assert!(init.u.max_abs() > 1e-3);
        assert!(crate::ops::divergence_faces(&init.u).max_abs() < 1e-10);
    }

    #[test]
    fn bad_values_rejected() {
        for o in ["params.mu1=0", "run.t_end=-1", "params.kappa=2", "energy.B=0", "transport.dt_min=1.0"] {
            assert!(ScenarioConfig::from_toml_with(MINIMAL, &[o.into()]).is_err(), "{o}");
        }
    }
}
