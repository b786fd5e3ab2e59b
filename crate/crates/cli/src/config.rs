//! Experiment configuration files.
//!
//! ```json
//! {
//!   "algebra": [2],
//!   "states": {
//!     "phi": {"diagonal": [0.75, 0.25]},
//!     "omega": {"random": true, "seed": 7, "rank": 2},
//!     "psi": {"density": [[[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]]]}
//!   },
//!   "grid": {"T": 40, "dt": 0.01},
//!   "lambda_grid": {"L": 60, "dlambda": 0.01},
//!   "seed": 1,
//!   "experiments": [{"name": "haagerup_trace", "params": {"mu": [0, 0.5, 1]}}],
//!   "tolerances": {"haagerup": 1e-5}
//! }
//! ```
//!
//! Every top-level key is optional. Random states are `G G†` with `G`
//! complex Gaussian with `rank` columns per block (default: full rank),
//! drawn from ChaCha8 seeded by `seed`, normalized to unit mass.

use std::collections::BTreeMap;

use modtrace_core::algebra::random_state;
use modtrace_core::lambda::LambdaGrid;
use modtrace_core::section::TimeGrid;
use modtrace_core::{AlgebraElement, FiniteAlgebra, Functional, Tolerances};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::suites::Experiment;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t: 40.0, dt: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaConfig {
    #[serde(rename = "L")]
    pub l: f64,
    pub dlambda: f64,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self {
            l: 60.0,
            dlambda: 0.01,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_algebra")]
    algebra: Vec<usize>,
    #[serde(default)]
    states: BTreeMap<String, Value>,
    #[serde(default)]
    grid: GridConfig,
    #[serde(default)]
    lambda_grid: LambdaConfig,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    experiments: Vec<RawExperiment>,
    #[serde(default)]
    tolerances: Value,
}

fn default_algebra() -> Vec<usize> {
    vec![2]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: String,
    #[serde(default)]
    params: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomState {
    #[allow(dead_code)]
    random: bool,
    seed: u64,
    rank: Option<usize>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algebra: FiniteAlgebra,
    pub states: BTreeMap<String, Functional>,
    pub grid: GridConfig,
    pub lambda_grid: LambdaConfig,
    /// Base seed for random draws inside suites.
    pub seed: u64,
    pub experiments: Vec<Experiment>,
    pub tolerances: Tolerances,
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub grid_t: Option<f64>,
    pub grid_dt: Option<f64>,
    pub seed: Option<u64>,
    pub tol_scale: Option<f64>,
}

fn parse_state(name: &str, v: &Value, alg: &FiniteAlgebra) -> CliResult<Functional> {
    let field = format!("states.{name}");
    let obj = v
        .as_object()
        .ok_or_else(|| CliError::config(&field, "expected an object"))?;
    let tol = Tolerances::default();
    let state = if obj.contains_key("random") {
        if !obj.contains_key("seed") {
            return Err(CliError::config(
                format!("{field}.seed"),
                "random states need a seed",
            ));
        }
        let r: RandomState =
            serde_json::from_value(v.clone()).map_err(|e| CliError::config(&field, e))?;
        if r.rank == Some(0) {
            return Err(CliError::config(
                format!("{field}.rank"),
                "rank must be positive",
            ));
        }
        random_state(alg, r.rank, &mut ChaCha8Rng::seed_from_u64(r.seed))
    } else if let Some(d) = obj.get("diagonal") {
        let values: Vec<f64> = serde_json::from_value(d.clone())
            .map_err(|e| CliError::config(format!("{field}.diagonal"), e))?;
        Functional::diagonal_in(alg, &values)
            .map_err(|e| CliError::config(format!("{field}.diagonal"), e))?
    } else if let Some(d) = obj.get("density") {
        let density: AlgebraElement = serde_json::from_value(serde_json::json!({
            "blocks": alg.blocks(),
            "values": d,
        }))
        .map_err(|e| CliError::config(format!("{field}.density"), e))?;
        Functional::new(density, &tol)
            .map_err(|e| CliError::config(format!("{field}.density"), e))?
    } else {
        return Err(CliError::config(
            &field,
            "expected one of `random`, `diagonal`, `density`",
        ));
    };
    if state.algebra() != *alg {
        return Err(CliError::config(
            &field,
            "state does not live on the configured algebra",
        ));
    }
    Ok(state)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| {
            CliError::config(format!("line {}, column {}", e.line(), e.column()), e)
        })?;
        let algebra =
            FiniteAlgebra::new(raw.algebra).map_err(|e| CliError::config("algebra", e))?;
        let mut states = BTreeMap::new();
        for (name, v) in &raw.states {
            states.insert(name.clone(), parse_state(name, v, &algebra)?);
        }
        let tolerances: Tolerances = if raw.tolerances.is_null() {
            Tolerances::default()
        } else {
            serde_json::from_value(raw.tolerances).map_err(|e| CliError::config("tolerances", e))?
        };
        TimeGrid::new(raw.grid.t, raw.grid.dt).map_err(|e| CliError::config("grid", e))?;
        LambdaGrid::new(raw.lambda_grid.l, raw.lambda_grid.dlambda)
            .map_err(|e| CliError::config("lambda_grid", e))?;
        let experiments = raw
            .experiments
            .iter()
            .enumerate()
            .map(|(i, e)| Experiment::parse(i, &e.name, &e.params, &states))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(Self {
            algebra,
            states,
            grid: raw.grid,
            lambda_grid: raw.lambda_grid,
            seed: raw.seed,
            experiments,
            tolerances,
        })
    }

    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        if let Some(t) = o.grid_t {
            self.grid.t = t;
        }
        if let Some(dt) = o.grid_dt {
            self.grid.dt = dt;
        }
        TimeGrid::new(self.grid.t, self.grid.dt)
            .map_err(|e| CliError::config("--grid-T/--grid-dt", e))?;
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(f) = o.tol_scale {
            if !(f > 0.0 && f.is_finite()) {
                return Err(CliError::config("--tol-scale", "must be positive"));
            }
            self.tolerances = self.tolerances.scaled(f);
        }
        Ok(())
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.grid.t, self.grid.dt).expect("validated grid")
    }

    pub fn lambda(&self) -> LambdaGrid {
        LambdaGrid::new(self.lambda_grid.l, self.lambda_grid.dlambda).expect("validated grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(text: &str) -> String {
        match ExperimentConfig::from_json(text) {
            Err(CliError::ConfigInvalid { field, .. }) => field,
            other => panic!("expected ConfigInvalid, got {other:?}"),
        }
    }

    #[test]
    fn empty_object_uses_defaults() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c.algebra.blocks(), &[2]);
        assert_eq!(c.grid, GridConfig::default());
        assert!(c.experiments.is_empty());
    }

    #[test]
    fn states_parse() {
        let c = ExperimentConfig::from_json(
            r#"{"algebra": [2, 1], "states": {
                "a": {"diagonal": [0.5, 0.25, 0.25]},
                "b": {"random": true, "seed": 3, "rank": 1},
                "c": {"density": [[[[0.5,0],[0,0]],[[0,0],[0.25,0]]], [[[0.25,0]]]]}
            }}"#,
        )
        .unwrap();
        assert_eq!(c.states["a"].density(), c.states["c"].density());
        assert_eq!(c.states["b"].support_rank(), 2);
        let again = ExperimentConfig::from_json(
            r#"{"algebra": [2, 1], "states": {"b": {"random": true, "seed": 3, "rank": 1}}}"#,
        )
        .unwrap();
        assert_eq!(again.states["b"].density(), c.states["b"].density());
    }

    #[test]
    fn diagnostics_name_the_field() {
        assert_eq!(
            field_of(
                r#"{"states": {"phi": {"diagonal": [0.75, 0.25]}}, "experiments": [{"name": "haagerup_trace"}, {"name": "nope"}]}"#
            ),
            "experiments[1].name"
        );
        assert_eq!(
            field_of(r#"{"states": {"w": {"random": true}}}"#),
            "states.w.seed"
        );
        assert_eq!(
            field_of(r#"{"states": {"w": {"diagonal": [1, -1]}}}"#),
            "states.w.diagonal"
        );
        assert_eq!(field_of(r#"{"tolerances": {"bogus": 1}}"#), "tolerances");
        assert_eq!(field_of(r#"{"grid": {"T": -1, "dt": 0.1}}"#), "grid");
        assert!(field_of("{\n  \"algebra\": [2],\n  oops\n}").starts_with("line 3"));
        assert_eq!(
            field_of(
                r#"{"states": {"phi": {"diagonal": [0.75, 0.25]}}, "experiments": [{"name": "haagerup_trace", "params": {"mu": "x"}}]}"#
            ),
            "experiments[0].params"
        );
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::from_json("{}").unwrap();
        c.apply(&Overrides {
            grid_t: Some(20.0),
            grid_dt: Some(0.02),
            seed: Some(9),
            tol_scale: Some(2.0),
        })
        .unwrap();
        assert_eq!(c.grid, GridConfig { t: 20.0, dt: 0.02 });
        assert_eq!(c.seed, 9);
        assert_eq!(c.tolerances.haagerup, 2e-5);
        assert!(c
            .apply(&Overrides {
                tol_scale: Some(-1.0),
                ..Default::default()
            })
            .is_err());
    }
}
