//! JSON run configuration. Matrices are row-major nested arrays; graph
//! edges are one-based `[source, target]` pairs. Every error names the
//! offending field.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::linalg::{from_rows, Mat, Vector};
use crate::lmi::NodeGains;
use crate::plant::{NetworkModel, NodeMeasurement, PlantModel, Scenario};
use crate::schedule::SamplingSchedule;
use crate::solver::{GammaSearch, ScalarGrid, SolverBudget, SynthesisResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub c: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
    pub dbar2: Vec<Vec<f64>>,
    /// Defaults to the identity.
    #[serde(default)]
    pub h: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub node_count: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Either `step` (uniform) or `times` (explicit), plus the horizon.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    /// Seeded disturbed scenarios; an unperturbed run from the plant's `x0`
    /// always comes first.
    pub count: usize,
    /// Appended after the seeded ones.
    pub scenarios: Vec<Scenario>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            count: 20,
            scenarios: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt: f64,
    /// Defaults to the unperturbed run from the plant's `x0`.
    pub scenario: Option<Scenario>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            scenario: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificationConfig {
    pub tolerance: f64,
    /// `0` disables the Lyapunov diagnostic.
    pub lyapunov_stride: usize,
}

impl Default for CertificationConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.05,
            lyapunov_stride: 10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub steps: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            steps: vec![0.2, 0.1, 0.05],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    pub plant: PlantConfig,
    pub nodes: Vec<NodeConfig>,
    pub graph: GraphConfig,
    pub schedule: ScheduleConfig,
    /// Fixed `γ`; bisection when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub gamma_search: GammaSearch,
    #[serde(default)]
    pub grid: ScalarGrid,
    #[serde(default)]
    pub budget: SolverBudget,
    #[serde(default)]
    pub battery: BatteryConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub certification: CertificationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Gains file for `analyze` and `simulate`: a synthesis report or a bare
    /// array of `{k, l}`. Relative to the config file.
    #[serde(default)]
    pub gains: Option<PathBuf>,
    /// Synthesis report for `certify`, relative to the config file.
    #[serde(default)]
    pub result: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn config_err<T>(path: impl Into<String>, message: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        path: path.into(),
        message: message.into(),
    })
}

/// Parses JSON text, reporting the path of the first field that fails.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

fn matrix(path: &str, rows: &[Vec<f64>]) -> Result<Mat> {
    let m = from_rows(rows).or_else(|msg| config_err(path, msg))?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return config_err(path, "matrix is empty");
    }
    if m.iter().any(|v| !v.is_finite()) {
        return config_err(path, "matrix has non-finite entries");
    }
    Ok(m)
}

fn expect_shape(path: &str, m: &Mat, rows: Option<usize>, cols: Option<usize>) -> Result<()> {
    let bad_r = rows.is_some_and(|r| m.nrows() != r);
    let bad_c = cols.is_some_and(|c| m.ncols() != c);
    if bad_r || bad_c {
        let show = |d: Option<usize>| d.map_or("*".to_string(), |v| v.to_string());
        return config_err(
            path,
            format!(
                "expected {}x{}, got {}x{}",
                show(rows),
                show(cols),
                m.nrows(),
                m.ncols()
            ),
        );
    }
    Ok(())
}

/// A loaded configuration with its validated model objects.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ToolConfig,
    pub base_dir: PathBuf,
    pub model: NetworkModel,
    pub graph: DirectedGraph,
    pub schedule: SamplingSchedule,
}

impl Setup {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: "<file>".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        let config: ToolConfig = parse_json(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_config(config, base_dir)
    }

    pub fn from_config(config: ToolConfig, base_dir: PathBuf) -> Result<Self> {
        let model = build_model(&config)?;
        let graph = build_graph(&config)?;
        let schedule = build_schedule("schedule", &config.schedule, None)?;
        check_settings(&config)?;
        Ok(Self {
            config,
            base_dir,
            model,
            graph,
            schedule,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Uniform schedule with step `h` over the configured horizon.
    pub fn schedule_with_step(&self, h: f64) -> Result<SamplingSchedule> {
        build_schedule("sweep.steps", &self.config.schedule, Some(h))
    }

    /// Unperturbed run from the plant's `x0`, then `battery.count` seeded
    /// scenarios, then the listed ones.
    pub fn battery(&self, seed: u64) -> Result<Vec<Scenario>> {
        let align = self
            .schedule
            .uniform_step()
            .unwrap_or(self.config.simulation.dt);
        let mut out = vec![Scenario::unperturbed(
            "nominal",
            self.model.plant().x0().clone(),
            &self.model,
        )];
        out.extend(Scenario::battery(
            &self.model,
            self.config.battery.count,
            seed,
            align,
        )?);
        for (i, s) in self.config.battery.scenarios.iter().enumerate() {
            s.validate(&self.model)
                .or_else(|e| config_err(format!("battery.scenarios[{i}]"), e.to_string()))?;
            out.push(s.clone());
        }
        Ok(out)
    }

    pub fn simulation_scenario(&self) -> Result<Scenario> {
        match &self.config.simulation.scenario {
            Some(s) => {
                s.validate(&self.model)
                    .or_else(|e| config_err("simulation.scenario", e.to_string()))?;
                Ok(s.clone())
            }
            None => Ok(Scenario::unperturbed(
                "nominal",
                self.model.plant().x0().clone(),
                &self.model,
            )),
        }
    }
}

fn build_model(config: &ToolConfig) -> Result<NetworkModel> {
    let a = matrix("plant.a", &config.plant.a)?;
    if a.nrows() != a.ncols() {
        return config_err(
            "plant.a",
            format!("must be square, got {}x{}", a.nrows(), a.ncols()),
        );
    }
    let n = a.nrows();
    let b2 = matrix("plant.b2", &config.plant.b2)?;
    expect_shape("plant.b2", &b2, Some(n), None)?;
    if config.plant.x0.len() != n {
        return config_err(
            "plant.x0",
            format!("expected length {n}, got {}", config.plant.x0.len()),
        );
    }
    let plant = PlantModel::new(a, b2.clone(), Vector::from_vec(config.plant.x0.clone()))
        .or_else(|e| config_err("plant", e.to_string()))?;
    if config.nodes.len() != config.graph.node_count {
        return config_err(
            "nodes",
            format!(
                "{} entries for graph.node_count = {}",
                config.nodes.len(),
                config.graph.node_count
            ),
        );
    }
    let mut nodes = Vec::with_capacity(config.nodes.len());
    for (i, nc) in config.nodes.iter().enumerate() {
        let at = |f: &str| format!("nodes[{i}].{f}");
        let c = matrix(&at("c"), &nc.c)?;
        expect_shape(&at("c"), &c, None, Some(n))?;
        let r = c.nrows();
        let d2 = matrix(&at("d2"), &nc.d2)?;
        expect_shape(&at("d2"), &d2, Some(r), Some(b2.ncols()))?;
        let dbar2 = matrix(&at("dbar2"), &nc.dbar2)?;
        expect_shape(&at("dbar2"), &dbar2, Some(r), None)?;
        let h =
            nc.h.as_ref()
                .map(|rows| matrix(&at("h"), rows))
                .transpose()?;
        if let Some(h) = &h {
            expect_shape(&at("h"), h, None, Some(n))?;
        }
        let node = NodeMeasurement::new(&plant, c, d2, dbar2, h)
            .or_else(|e| config_err(format!("nodes[{i}]"), e.to_string()))?;
        nodes.push(node);
    }
    NetworkModel::new(plant, nodes).or_else(|e| config_err("nodes", e.to_string()))
}

fn build_graph(config: &ToolConfig) -> Result<DirectedGraph> {
    DirectedGraph::from_one_based(config.graph.node_count, &config.graph.edges)
        .or_else(|e| config_err("graph.edges", e.to_string()))
}

fn build_schedule(
    path: &str,
    s: &ScheduleConfig,
    step_override: Option<f64>,
) -> Result<SamplingSchedule> {
    let uniform = |step: f64| {
        let horizon = s
            .horizon
            .or_else(|| s.times.as_ref().and_then(|t| t.last().copied()));
        match horizon {
            Some(horizon) => SamplingSchedule::uniform(step, horizon),
            None => config_err("schedule.horizon", "required with a uniform step"),
        }
    };
    let made = match (step_override, s.step, &s.times) {
        (Some(step), _, _) => uniform(step),
        (None, Some(step), None) => uniform(step),
        (None, None, Some(times)) => SamplingSchedule::explicit(times.clone(), s.horizon),
        (None, Some(_), Some(_)) => {
            return config_err("schedule", "give either `step` or `times`, not both")
        }
        (None, None, None) => return config_err("schedule", "missing `step` or `times`"),
    };
    made.or_else(|e| match e {
        Error::Config { .. } => Err(e),
        other => config_err(path, other.to_string()),
    })
}

fn check_settings(config: &ToolConfig) -> Result<()> {
    if let Some(g) = config.gamma {
        if !(g > 0.0) || !g.is_finite() {
            return config_err("gamma", format!("must be positive and finite, got {g}"));
        }
    }
    config
        .grid
        .validate()
        .or_else(|e| config_err("grid", e.to_string()))?;
    if !(config.simulation.dt > 0.0) {
        return config_err("simulation.dt", "must be positive");
    }
    if !(config.certification.tolerance >= 0.0) {
        return config_err("certification.tolerance", "must be nonnegative");
    }
    if config.sweep.steps.iter().any(|h| !(*h > 0.0)) {
        return config_err("sweep.steps", "every step must be positive");
    }
    Ok(())
}

/// Gains from a synthesis report or a bare array. Returns the report's `γ`
/// when present.
pub fn load_gains(path: &Path) -> Result<(Vec<NodeGains>, Option<f64>, Option<SynthesisResult>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: "gains".into(),
        message: format!("{}: {e}", path.display()),
    })?;
    let value: serde_json::Value = parse_json(&text)?;
    if value.is_array() {
        let gains: Vec<NodeGains> = parse_json(&text)?;
        return Ok((gains, None, None));
    }
    let result: SynthesisResult = parse_json(&text)?;
    Ok((result.gains.clone(), Some(result.gamma), Some(result)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "plant": {"a": [[0.05, 1.0], [0.0, -1.0]], "b2": [[1.0], [0.5]], "x0": [1.0, -1.0]},
        "nodes": [
            {"c": [[1.0, 0.0]], "d2": [[0.1]], "dbar2": [[0.1]]},
            {"c": [[1.0, 1.0]], "d2": [[0.1]], "dbar2": [[0.1]]},
            {"c": [[0.5, 1.0]], "d2": [[0.1]], "dbar2": [[0.1]]}
        ],
        "graph": {"node_count": 3, "edges": [[1, 2], [2, 3], [3, 1]]},
        "schedule": {"step": 0.1, "horizon": 5.0}
    }"#;

    fn load(text: &str) -> Result<Setup> {
        Setup::from_config(parse_json(text)?, PathBuf::new())
    }

    fn path_of(e: Error) -> String {
        match e {
            Error::Config { path, .. } => path,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn base_config_matches_the_ring() {
        let s = load(BASE).unwrap();
        assert_eq!(s.graph, DirectedGraph::ring(3).unwrap());
        assert_eq!(s.schedule.len(), 51);
        assert_eq!(s.battery(7).unwrap().len(), 21);
        assert_eq!(s.battery(7).unwrap(), s.battery(7).unwrap());
    }

    #[test]
    fn wrong_output_width_names_the_field() {
        let text = BASE.replacen("[[1.0, 1.0]]", "[[1.0, 1.0, 0.0]]", 1);
        assert_eq!(path_of(load(&text).unwrap_err()), "nodes[1].c");
    }

    #[test]
    fn schema_errors_carry_paths() {
        let text = BASE.replace("\"x0\": [1.0, -1.0]", "\"x0\": [1.0, \"a\"]");
        assert_eq!(path_of(load(&text).unwrap_err()), "plant.x0[1]");
        let text = BASE.replace("\"horizon\": 5.0", "\"horizon\": 5.0, \"stride\": 2");
        assert_eq!(path_of(load(&text).unwrap_err()), "schedule.stride");
        let text = BASE.replace("[3, 1]", "[3, 3]");
        assert_eq!(path_of(load(&text).unwrap_err()), "graph.edges");
        let text = BASE.replace("\"step\": 0.1, ", "");
        assert_eq!(path_of(load(&text).unwrap_err()), "schedule");
        let text = BASE.replace("\"b2\": [[1.0], [0.5]]", "\"b2\": [[1.0]]");
        assert_eq!(path_of(load(&text).unwrap_err()), "plant.b2");
    }
}
