//! Scenario documents.
//!
//! A scenario is a JSON object:
//!
//! ```json
//! {
//!   "name": "central-outbreak",
//!   "network": {"grid": {"n": 9, "neighborhood": "moore"}},
//!   "ground_state": [1, 2, 1, ...],
//!   "strategy": "srh",
//!   "steps": 1,
//!   "inflow": {"explicit": [[0, 0, ...]]},
//!   "dissipation": "none",
//!   "tiebreak": "lowest_id"
//! }
//! ```
//!
//! `network` is either `{"grid": {"n", "neighborhood"}}` or
//! `{"graph": {"p", "edges", "hub", "thresholds"}}`. Node ids are 1-based and
//! every vector is a flat row-major list of length `p`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{DissipationPolicy, InflowSchedule, ScenarioSpec, SiteDistribution, StepOptions, Strategy};
use crate::engine::DEFAULT_MOVE_CAP;
use crate::metrics::DEFAULT_CRITICAL_MARGIN;
use crate::network::{
    build_graph, build_grid, build_grid_with_hub, GridSpec, Layout, Neighborhood, Network, NetworkError, NodeId,
};
use crate::sandpile::{is_almost_stable, unstable_nodes, Configuration, Perturbation, DEFAULT_TOPPLING_CAP};
use crate::standard::TieBreak;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("strategy {0} needs a hub but the network has none")]
    MissingHub(&'static str),
    #[error("{field} has {got} entries, expected {expected}")]
    Length { field: String, expected: usize, got: usize },
    #[error("ground state is not almost stable: node {0} is at or above its threshold")]
    UnstableGround(usize),
    #[error("{field} refers to unknown node {id}")]
    UnknownNode { field: String, id: usize },
    #[error("{field} is {value}, above the supported maximum {max}")]
    TooLarge { field: String, value: u64, max: u64 },
}

/// Largest accepted network size.
pub const MAX_NODES: u64 = 1 << 20;
/// Largest accepted height, threshold or per-step count.
pub const MAX_LOAD: u64 = 1 << 32;

fn check_max(field: &str, value: u64, max: u64) -> Result<(), ValidationError> {
    if value > max {
        Err(ValidationError::TooLarge { field: field.to_owned(), value, max })
    } else {
        Ok(())
    }
}

fn check_all<'a>(field: &str, values: impl IntoIterator<Item = &'a u64>) -> Result<(), ValidationError> {
    values.into_iter().try_for_each(|&v| check_max(field, v, MAX_LOAD))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSection {
    Grid {
        n: usize,
        neighborhood: Neighborhood,
    },
    Graph {
        p: usize,
        edges: Vec<(usize, usize)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hub: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thresholds: Option<Vec<u64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteName {
    Uniform,
    Hub,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SitesSection {
    Named(SiteName),
    Nodes(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub sites: SitesSection,
    pub per_step: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InflowSection {
    Explicit(Vec<Vec<u64>>),
    Repeat(Vec<u64>),
    Generator(GeneratorSection),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDissipationSection {
    #[serde(default)]
    pub seed: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DissipationSection {
    #[default]
    None,
    Explicit(Vec<Vec<u64>>),
    Random(RandomDissipationSection),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TieBreakSection {
    #[default]
    LowestId,
    Seed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsSection {
    #[serde(default = "default_toppling_cap")]
    pub topplings: usize,
    #[serde(default = "default_move_cap")]
    pub moves: usize,
}

impl Default for CapsSection {
    fn default() -> Self {
        CapsSection { topplings: DEFAULT_TOPPLING_CAP, moves: DEFAULT_MOVE_CAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Report,
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

fn default_name() -> String {
    "scenario".to_owned()
}
fn default_strategy() -> Strategy {
    Strategy::Srh
}
fn default_steps() -> usize {
    1
}
fn default_margin() -> u64 {
    DEFAULT_CRITICAL_MARGIN
}
fn default_toppling_cap() -> usize {
    DEFAULT_TOPPLING_CAP
}
fn default_move_cap() -> usize {
    DEFAULT_MOVE_CAP
}

/// The scenario document as written on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_name")]
    pub name: String,
    pub network: NetworkSection,
    pub ground_state: Vec<u64>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub inflow: InflowSection,
    #[serde(default)]
    pub dissipation: DissipationSection,
    #[serde(default)]
    pub tiebreak: TieBreakSection,
    #[serde(default = "default_margin")]
    pub margin: u64,
    #[serde(default)]
    pub caps: CapsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

/// Parses the document without semantic validation.
pub fn parse_document(text: &str) -> Result<ScenarioFile, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    Ok(parse_document(text)?.into_spec()?)
}

/// Writes `spec` back out as a scenario document.
pub fn serialize_scenario(spec: &ScenarioSpec) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_spec(spec)).expect("scenario serializes")
}

fn check_len(field: impl Into<String>, expected: usize, got: usize) -> Result<(), ValidationError> {
    if expected == got {
        Ok(())
    } else {
        Err(ValidationError::Length { field: field.into(), expected, got })
    }
}

fn vectors<T: From<Vec<u64>>>(field: &str, rows: &[Vec<u64>], steps: usize, p: usize) -> Result<Vec<T>, ValidationError> {
    check_len(field, steps, rows.len())?;
    rows.iter()
        .enumerate()
        .map(|(k, row)| {
            check_len(format!("{field}[{k}]"), p, row.len())?;
            Ok(T::from(row.clone()))
        })
        .collect()
}

impl NetworkSection {
    fn check_size(&self) -> Result<(), ValidationError> {
        match self {
            NetworkSection::Grid { n, .. } => {
                check_max("network.grid.n", *n as u64, (MAX_NODES as f64).sqrt() as u64)
            }
            NetworkSection::Graph { p, thresholds, .. } => {
                check_max("network.graph.p", *p as u64, MAX_NODES)?;
                check_all("network.graph.thresholds", thresholds.iter().flatten())
            }
        }
    }

    fn build(&self, needs_hub: Option<&'static str>) -> Result<Network, ValidationError> {
        self.check_size()?;
        let net = match self {
            NetworkSection::Grid { n, neighborhood } => {
                let spec = GridSpec::new(*n, *neighborhood);
                if needs_hub.is_some() {
                    build_grid_with_hub(spec)?
                } else {
                    build_grid(spec)?
                }
            }
            NetworkSection::Graph { p, edges, hub, thresholds } => {
                build_graph(*p, edges, *hub, thresholds.as_deref())?
            }
        };
        match needs_hub {
            Some(strategy) if net.hub().is_none() => Err(ValidationError::MissingHub(strategy)),
            _ => Ok(net),
        }
    }

    fn from_network(net: &Network) -> Self {
        match net.layout() {
            Layout::Grid(spec) => NetworkSection::Grid { n: spec.n, neighborhood: spec.neighborhood },
            Layout::Graph => {
                let degrees: Vec<u64> = net.nodes().map(|v| net.degree(v).unwrap_or(0) as u64).collect();
                NetworkSection::Graph {
                    p: net.len(),
                    edges: net.edges().iter().map(|&(a, b)| (a.get(), b.get())).collect(),
                    hub: net.hub().map(NodeId::get),
                    thresholds: (net.thresholds() != degrees.as_slice()).then(|| net.thresholds().to_vec()),
                }
            }
        }
    }
}

impl ScenarioFile {
    pub fn into_spec(self) -> Result<ScenarioSpec, ValidationError> {
        let needs_hub = match self.strategy {
            Strategy::AsmOpen => None,
            s => Some(s.name()),
        };
        let network = self.network.build(needs_hub)?;
        let p = network.len();

        check_len("ground_state", p, self.ground_state.len())?;
        check_all("ground_state", &self.ground_state)?;
        match &self.inflow {
            InflowSection::Explicit(rows) => check_all("inflow.explicit", rows.iter().flatten())?,
            InflowSection::Repeat(row) => check_all("inflow.repeat", row)?,
            InflowSection::Generator(g) => check_max("inflow.generator.per_step", g.per_step, MAX_LOAD)?,
        }
        match &self.dissipation {
            DissipationSection::None => {}
            DissipationSection::Explicit(rows) => check_all("dissipation.explicit", rows.iter().flatten())?,
            DissipationSection::Random(r) => check_max("dissipation.random.budget", r.budget, MAX_LOAD)?,
        }
        let ground_state = Configuration::new(self.ground_state);
        if !is_almost_stable(&network, &ground_state) {
            let bad = unstable_nodes(&network, &ground_state)
                .into_iter()
                .find(|&v| Some(v) != network.hub())
                .map_or(0, NodeId::get);
            return Err(ValidationError::UnstableGround(bad));
        }

        let node = |field: &str, id: usize| {
            NodeId::new(id)
                .filter(|&v| network.contains(v))
                .ok_or_else(|| ValidationError::UnknownNode { field: field.to_owned(), id })
        };
        let inflow = match &self.inflow {
            InflowSection::Explicit(rows) => InflowSchedule::Explicit(vectors("inflow.explicit", rows, self.steps, p)?),
            InflowSection::Repeat(row) => {
                check_len("inflow.repeat", p, row.len())?;
                InflowSchedule::Repeat(Perturbation::new(row.clone()))
            }
            InflowSection::Generator(g) => {
                let sites = match &g.sites {
                    SitesSection::Named(SiteName::Uniform) => SiteDistribution::Uniform,
                    SitesSection::Named(SiteName::Hub) => {
                        if network.hub().is_none() {
                            return Err(ValidationError::MissingHub("inflow.generator"));
                        }
                        SiteDistribution::Hub
                    }
                    SitesSection::Nodes(ids) => {
                        if ids.is_empty() {
                            return Err(ValidationError::Length {
                                field: "inflow.generator.sites".into(),
                                expected: 1,
                                got: 0,
                            });
                        }
                        SiteDistribution::Nodes(
                            ids.iter()
                                .map(|&i| node("inflow.generator.sites", i))
                                .collect::<Result<_, _>>()?,
                        )
                    }
                };
                InflowSchedule::Generator { sites, per_step: g.per_step, seed: g.seed }
            }
        };
        let dissipation = match &self.dissipation {
            DissipationSection::None => DissipationPolicy::None,
            DissipationSection::Explicit(rows) => {
                DissipationPolicy::Explicit(vectors("dissipation.explicit", rows, self.steps, p)?)
            }
            DissipationSection::Random(r) => DissipationPolicy::RandomAdmissible { seed: r.seed, budget: r.budget },
        };
        let tiebreak = match self.tiebreak {
            TieBreakSection::LowestId => TieBreak::LowestId,
            TieBreakSection::Seed(s) => TieBreak::SeededRandom(s),
        };

        Ok(ScenarioSpec {
            name: self.name,
            network,
            ground_state,
            strategy: self.strategy,
            steps: self.steps,
            inflow,
            dissipation,
            tiebreak,
            options: StepOptions {
                margin: self.margin,
                max_topplings: self.caps.topplings,
                max_moves: self.caps.moves,
            },
        })
    }

    pub fn from_spec(spec: &ScenarioSpec) -> Self {
        let rows = |list: &[Perturbation]| list.iter().map(|w| w.values().to_vec()).collect();
        ScenarioFile {
            name: spec.name.clone(),
            network: NetworkSection::from_network(&spec.network),
            ground_state: spec.ground_state.values().to_vec(),
            strategy: spec.strategy,
            steps: spec.steps,
            inflow: match &spec.inflow {
                InflowSchedule::Explicit(list) => InflowSection::Explicit(rows(list)),
                InflowSchedule::Repeat(w) => InflowSection::Repeat(w.values().to_vec()),
                InflowSchedule::Generator { sites, per_step, seed } => InflowSection::Generator(GeneratorSection {
                    sites: match sites {
                        SiteDistribution::Uniform => SitesSection::Named(SiteName::Uniform),
                        SiteDistribution::Hub => SitesSection::Named(SiteName::Hub),
                        SiteDistribution::Nodes(ids) => SitesSection::Nodes(ids.iter().map(|v| v.get()).collect()),
                    },
                    per_step: *per_step,
                    seed: *seed,
                }),
            },
            dissipation: match &spec.dissipation {
                DissipationPolicy::None => DissipationSection::None,
                DissipationPolicy::Explicit(list) => DissipationSection::Explicit(rows(list)),
                DissipationPolicy::RandomAdmissible { seed, budget } => {
                    DissipationSection::Random(RandomDissipationSection { seed: *seed, budget: *budget })
                }
            },
            tiebreak: match spec.tiebreak {
                TieBreak::LowestId => TieBreakSection::LowestId,
                TieBreak::SeededRandom(s) => TieBreakSection::Seed(s),
            },
            margin: spec.options.margin,
            caps: CapsSection { topplings: spec.options.max_topplings, moves: spec.options.max_moves },
            output: None,
        }
    }
}
