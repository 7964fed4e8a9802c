//! Serde model of a scenario file. Agents and graph nodes are numbered
//! from 1 in the file and from 0 everywhere else.

use serde::{Deserialize, Serialize};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub graph: GraphSpec,
    pub agents: Vec<AgentFile>,
    pub law: LawSpec,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    pub integration: IntegrationSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    /// Independent copies of the problem, one per output coordinate.
    #[serde(default = "one")]
    pub axes: usize,
    #[serde(default)]
    pub generator_start: GeneratorStartSpec,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: usize,
    /// `[i, j]` or `[i, j, weight]`, undirected.
    pub edges: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub plant: PlantSpec,
    #[serde(default)]
    pub disturbance: Option<DisturbanceSpec>,
    pub cost: CostSpec,
    /// Plant state; drawn from `initial` when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub z0: Option<f64>,
    #[serde(default)]
    pub lambda0: Option<f64>,
    #[serde(default)]
    pub poles: Option<PoleOverrides>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    /// Omitted when the agent has no exosystem.
    #[serde(rename = "E", default)]
    pub e: Option<Rows>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    #[serde(rename = "S")]
    pub s: Rows,
    pub w0: Vec<f64>,
    /// Disturbance reaches the plant from this time on; absent means always.
    #[serde(default)]
    pub enabled_from: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostSpec {
    #[serde(flatten)]
    pub kind: CostKindSpec,
    pub d: ResourceSpec,
    /// Interval on which curvature bounds are sampled for non-quadratic costs.
    #[serde(default)]
    pub interval: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostKindSpec {
    Quadratic { a: f64, b: f64, c: f64 },
    QuadLog { delta: f64 },
    LogSumExp2 { p: f64, q: f64 },
    SqrtFrac { s: f64, c: f64 },
}

/// A number, or `"y0"` for the agent's initial output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResourceSpec {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKindSpec {
    StateFeedback,
    OutputFeedback,
    RealtimeGradient,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub kind: LawKindSpec,
    #[serde(default)]
    pub eps: Option<f64>,
    /// `[c0, …, c_{r-1}]` of the high-gain polynomial.
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub rejection_enabled_from: Option<f64>,
    #[serde(default)]
    pub poles: Option<PoleOverrides>,
    /// Seed for the randomised multi-output observer construction.
    #[serde(default)]
    pub observer_seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleOverrides {
    #[serde(default)]
    pub k1: Option<Vec<PoleSpec>>,
    #[serde(default)]
    pub lbar: Option<Vec<PoleSpec>>,
    #[serde(default)]
    pub lhat: Option<Vec<PoleSpec>>,
}

/// Real pole, or `[re, im]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoleSpec {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventActionSpec {
    EnableDisturbance,
    EnableRejection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub time: f64,
    pub action: EventActionSpec,
    #[serde(default)]
    pub agent: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSpec {
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_decimate")]
    pub decimate: usize,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_decimate() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_range")]
    pub range: [f64; 2],
}

fn default_seed() -> u64 {
    1
}

fn default_range() -> [f64; 2] {
    [-10.0, 10.0]
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec {
            seed: default_seed(),
            range: default_range(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorStartSpec {
    #[default]
    AtOutput,
    AtRest,
}
