//! Scenario configuration: strict JSON, validated before any run.

use std::path::PathBuf;
use std::sync::Arc;

use fracgame_core::dynamics::{Catalog, GameDynamics, SampleSpec};
use fracgame_core::game::{DecisionGrid, TREE_BUDGET};
use fracgame_core::library::LibrarySpec;
use fracgame_core::testfunc::NuParams;
use fracgame_core::PathSpace;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Fine cells N on [0, T].
    pub fine: usize,
    /// Decision steps K of the scenario trees.
    pub decision: usize,
}

/// A control point: a bare number for scalar controls or a vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlPoint {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ControlPoint {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            ControlPoint::Scalar(v) => vec![*v],
            ControlPoint::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub catalog_id: String,
    #[serde(default)]
    pub params: Option<Value>,
    #[serde(rename = "P")]
    pub p: Vec<ControlPoint>,
    #[serde(rename = "Q")]
    pub q: Vec<ControlPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub grid: GridConfig,
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub library: LibrarySpec,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    /// Defaults to T/4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Initial state of the constant base path; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub samples: SampleSpec,
    /// Offset of the perturbed candidate in the doubling run.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    /// Test nodes are every `node_stride` fine cells; defaults to the decision spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_stride: Option<usize>,
}

fn default_eps() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}

fn default_trials() -> usize {
    100
}

fn default_perturbation() -> f64 {
    1e-3
}

/// A validated scenario with the derived objects every subcommand needs.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub digest: String,
    pub space: Arc<PathSpace>,
    pub dynamics: Arc<GameDynamics>,
    pub params: NuParams,
    pub theta: f64,
    pub decisions: DecisionGrid,
    pub x0: Vec<f64>,
    pub nodes: Vec<usize>,
}

/// 1-based line of the first occurrence of `"key"`, or of the document end.
fn key_line(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
        .unwrap_or_else(|| text.lines().count().max(1))
}

fn invalid(text: &str, key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config {
        line: key_line(text, key),
        message: format!("{key}: {msg}"),
    }
}

pub fn parse(text: &str) -> Result<ScenarioConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config {
        line: e.line(),
        message: e.to_string(),
    })
}

fn catalog(text: &str, d: &DynamicsConfig) -> Result<Catalog, CliError> {
    let params = match &d.params {
        None => None,
        Some(Value::Object(m)) if m.is_empty() => None,
        Some(v) => Some(v.clone()),
    };
    let tagged = match params {
        None => Value::String(d.catalog_id.clone()),
        Some(p) => {
            let mut m = serde_json::Map::new();
            m.insert(d.catalog_id.clone(), p);
            Value::Object(m)
        }
    };
    serde_json::from_value(tagged).map_err(|e| {
        let key = if d.params.is_some() { "params" } else { "catalog_id" };
        invalid(text, key, format!("catalog '{}': {e}", d.catalog_id))
    })
}

/// Parses and validates; `seed` overrides the configured seed.
pub fn load(text: &str, seed: Option<u64>) -> Result<Scenario, CliError> {
    let mut config = parse(text)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let seed = config.seed;
    let space = PathSpace::uniform(config.alpha, config.horizon, config.grid.fine).map_err(|e| {
        let key = if !(config.alpha > 0.0 && config.alpha < 1.0) {
            "alpha"
        } else if !(config.horizon > 0.0) {
            "T"
        } else {
            "fine"
        };
        invalid(text, key, e)
    })?;
    let catalog = catalog(text, &config.dynamics)?;
    let p: Vec<Vec<f64>> = config.dynamics.p.iter().map(ControlPoint::to_vec).collect();
    let q: Vec<Vec<f64>> = config.dynamics.q.iter().map(ControlPoint::to_vec).collect();
    let dynamics = GameDynamics::new(
        catalog,
        p,
        q,
        config.dynamics.c_star,
        config.dynamics.lambda_star,
    )
    .map_err(|e| invalid(text, "dynamics", e))?;
    if config.eps.is_empty() {
        return Err(invalid(text, "eps", "at least one value is required"));
    }
    let mut params = None;
    for &e in &config.eps {
        let pr = NuParams::new(e, config.alpha, config.beta, config.horizon).map_err(|err| {
            let key = if config.beta.is_some() { "beta" } else { "eps" };
            invalid(text, key, err)
        })?;
        params.get_or_insert(pr);
    }
    let params = params.expect("eps is nonempty");
    let theta = config.theta.unwrap_or(0.25 * config.horizon);
    if !(theta > 0.0 && theta < config.horizon) {
        return Err(invalid(text, "theta", format!("{theta} outside (0, T)")));
    }
    let decisions = DecisionGrid::new(config.grid.fine, config.grid.decision)
        .map_err(|e| invalid(text, "decision", e))?;
    let leaves = ((dynamics.p.len() * dynamics.q.len()) as f64).powi(config.grid.decision as i32);
    if leaves > TREE_BUDGET {
        return Err(invalid(
            text,
            "decision",
            format!("tree with {leaves:.3e} leaves exceeds the budget {TREE_BUDGET:.0e}"),
        ));
    }
    let lib = &config.library;
    if lib.paths == 0 || !(lib.k > 0.0) || lib.blocks == 0 {
        return Err(invalid(text, "library", "paths, k and blocks must be positive"));
    }
    let x0 = config.x0.clone().unwrap_or_else(|| vec![0.0; dynamics.dim()]);
    if x0.len() != dynamics.dim() || x0.iter().any(|v| !v.is_finite()) {
        return Err(invalid(
            text,
            "x0",
            format!("expected {} finite components", dynamics.dim()),
        ));
    }
    if config.trials == 0 {
        return Err(invalid(text, "trials", "must be positive"));
    }
    if config.samples.samples == 0
        || !(config.samples.state_radius > 0.0)
        || !(config.samples.covector_radius > 0.0)
    {
        return Err(invalid(text, "samples", "counts and radii must be positive"));
    }
    if !config.perturbation.is_finite() {
        return Err(invalid(text, "perturbation", "must be finite"));
    }
    let nodes = match config.node_stride {
        Some(0) => return Err(invalid(text, "node_stride", "must be positive")),
        Some(s) => {
            let mut v: Vec<usize> = (0..config.grid.fine).step_by(s).collect();
            v.push(config.grid.fine);
            v
        }
        None => decisions.nodes.clone(),
    };
    let canonical = serde_json::to_vec(&config).expect("config serializes");
    let digest = fracgame_core::report::digest_bytes(&canonical);
    Ok(Scenario {
        config,
        seed,
        digest,
        space,
        dynamics: Arc::new(dynamics),
        params,
        theta,
        decisions,
        x0,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
  "alpha": 0.5,
  "T": 1.0,
  "grid": {"fine": 16, "decision": 2},
  "dynamics": {
    "catalog_id": "pursuit_1d",
    "P": [-1, 0, 1],
    "Q": [-0.5, 0, 0.5]
  }
}"#;

    #[test]
    fn minimal_config_loads() {
        let s = load(BASE, None).unwrap();
        assert_eq!(s.dynamics.p.len(), 3);
        assert_eq!(s.seed, 0);
        assert_eq!(s.nodes, vec![0, 8, 16]);
        assert!((s.theta - 0.25).abs() < 1e-15);
    }

    #[test]
    fn seed_changes_digest() {
        let a = load(BASE, Some(1)).unwrap();
        let b = load(BASE, Some(2)).unwrap();
        assert_ne!(a.digest, b.digest);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = BASE.replace("\"T\": 1.0,", "\"T\": 1.0,\n  \"thetta\": 0.1,");
        match load(&text, None) {
            Err(CliError::Config { line, message }) => {
                assert_eq!(line, 4, "{message}");
                assert!(message.contains("thetta"));
            }
            _ => panic!("expected a config error"),
        }
    }

    #[test]
    fn semantic_error_points_at_key() {
        let text = BASE.replace("\"alpha\": 0.5", "\"alpha\": 1.5");
        match load(&text, None) {
            Err(CliError::Config { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.starts_with("alpha"));
            }
            _ => panic!("expected a config error"),
        }
    }

    #[test]
    fn catalog_params_are_checked() {
        let text = BASE.replace(
            "\"catalog_id\": \"pursuit_1d\",",
            "\"catalog_id\": \"linear_scalar\",\n    \"params\": {\"a\": 1.0},",
        );
        match load(&text, None) {
            Err(CliError::Config { line, .. }) => assert_eq!(line, 7),
            _ => panic!("expected a config error"),
        }
    }
}
