use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::dde::{BlockHistory, Vector};
use crate::error::{Error, Result};
use crate::linalg::{rows, Mat};
use crate::model::AgentModel;
use crate::protocol::CouplingMode;
use crate::topology::Topology;

pub const SCHEMA_VERSION: u32 = 1;
/// Relative synchronization tolerance used when a scenario sets none.
pub const DEFAULT_TOLERANCE: f64 = 1e-2;
/// Seed for generated initial states when a scenario gives neither states nor
/// a seed.
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema_version: u32,
    #[serde(default)]
    name: Option<String>,
    tau_bar: f64,
    delays: Vec<f64>,
    #[serde(default)]
    coupling: Option<String>,
    #[serde(default)]
    t_max: Option<f64>,
    model: RawModel,
    topology: RawTopology,
    #[serde(default)]
    initial: Option<RawInitial>,
    #[serde(default)]
    overrides: Option<RawOverrides>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    #[serde(default)]
    agents: Option<usize>,
    #[serde(default)]
    adjacency: Option<Vec<Vec<f64>>>,
    /// `[from, to]` or `[from, to, weight]`, one-based.
    #[serde(default)]
    edges: Option<Vec<Vec<f64>>>,
    roots: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    agents: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    exo: Option<Vec<f64>>,
    #[serde(default)]
    history: Vec<RawHistory>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHistory {
    agent: usize,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverrides {
    rho: Option<f64>,
    epsilon: Option<f64>,
    #[serde(rename = "K")]
    k: Option<Vec<Vec<f64>>>,
    /// `[re, im]` pairs.
    desired_poles: Option<Vec<[f64; 2]>>,
    step_size: Option<f64>,
    tolerance: Option<f64>,
}

/// Caller-supplied replacements for designed or default quantities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub k: Option<Mat>,
    pub desired_poles: Option<Vec<Complex64>>,
    pub step_size: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct InitialConditions {
    pub agents: Vec<Vector>,
    pub exo: Vector,
    /// Optional initial function of each agent on `[-tau_bar, 0]`; constant
    /// `x_i(0)` otherwise.
    pub histories: Vec<Option<BlockHistory>>,
    /// Seed the states were drawn from, if generated.
    pub seed: Option<u64>,
}

impl InitialConditions {
    /// Agent and exosystem states drawn uniformly from `[-1, 1]`.
    pub fn seeded(seed: u64, agents: usize, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let agent_states = (0..agents).map(|_| draw()).collect();
        let exo = draw();
        Self {
            agents: agent_states,
            exo,
            histories: vec![None; agents],
            seed: Some(seed),
        }
    }
}

/// A validated simulation scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: AgentModel,
    pub topology: Topology,
    pub delays: Vec<f64>,
    pub tau_bar: f64,
    pub coupling: CouplingMode,
    pub initial: InitialConditions,
    pub t_max: Option<f64>,
    pub overrides: Overrides,
    pub tolerance: f64,
}

impl Scenario {
    pub fn num_agents(&self) -> usize {
        self.topology.num_agents()
    }

    /// Re-checks the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.model.n();
        let agents = self.topology.num_agents();
        if !(self.tau_bar.is_finite() && self.tau_bar >= 0.0) {
            return Err(Error::invalid(format!("tau_bar must be >= 0, got {}", self.tau_bar)));
        }
        if self.delays.len() != agents {
            return Err(Error::invalid(format!(
                "delays: {} entries for {agents} agents",
                self.delays.len()
            )));
        }
        for (i, &d) in self.delays.iter().enumerate() {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::invalid(format!("delays[{}] = {d} must be >= 0", i + 1)));
            }
            if d > self.tau_bar {
                return Err(Error::invalid(format!(
                    "delays[{}] = {d} exceeds tau_bar = {}",
                    i + 1,
                    self.tau_bar
                )));
            }
        }
        if !self.topology.check_membership() {
            return Err(Error::invalid(
                "topology: some agent is not reachable from the root set",
            ));
        }
        if self.coupling == CouplingMode::FullState && !self.model.has_full_state_output() {
            return Err(Error::invalid("coupling: full-state coupling requires C = I"));
        }
        if self.initial.agents.len() != agents || self.initial.histories.len() != agents {
            return Err(Error::invalid(format!(
                "initial: {} agent states for {agents} agents",
                self.initial.agents.len()
            )));
        }
        if let Some(bad) = self.initial.agents.iter().position(|x| x.len() != n) {
            return Err(Error::invalid(format!(
                "initial.agents[{}] has dimension {}, expected {n}",
                bad + 1,
                self.initial.agents[bad].len()
            )));
        }
        if self.initial.exo.len() != n {
            return Err(Error::invalid(format!("initial.exo must have dimension {n}")));
        }
        if let Some(t) = self.t_max {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::invalid(format!("t_max must be positive, got {t}")));
            }
        }
        if let Some(h) = self.overrides.step_size {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid(format!("overrides.step_size must be positive, got {h}")));
            }
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid("overrides.tolerance must be positive"));
        }
        Ok(())
    }
}

/// Coupling chosen from `C`: full-state exactly when `C = I`.
pub fn auto_coupling(model: &AgentModel) -> CouplingMode {
    if model.has_full_state_output() {
        CouplingMode::FullState
    } else {
        CouplingMode::PartialState
    }
}

fn matrix(field: &str, rows_in: &[Vec<f64>]) -> Result<Mat> {
    rows::from_rows(rows_in).map_err(|e| Error::invalid(format!("{field}: {e}")))
}

fn build(raw: RawScenario) -> Result<Scenario> {
    if raw.schema_version != SCHEMA_VERSION {
        return Err(Error::invalid(format!(
            "schema_version: unsupported version {} (expected {SCHEMA_VERSION})",
            raw.schema_version
        )));
    }
    let model = AgentModel::new(
        matrix("model.A", &raw.model.a)?,
        matrix("model.B", &raw.model.b)?,
        matrix("model.C", &raw.model.c)?,
    )
    .map_err(|e| Error::invalid(format!("model: {}", strip(&e))))?;
    let n = model.n();

    let topology = build_topology(&raw.topology, raw.delays.len())?;
    let agents = topology.num_agents();

    let coupling = match raw.coupling.as_deref() {
        None | Some("auto") => auto_coupling(&model),
        Some("full") | Some("full_state") => CouplingMode::FullState,
        Some("partial") | Some("partial_state") => CouplingMode::PartialState,
        Some(other) => {
            return Err(Error::invalid(format!(
                "coupling: unknown mode {other:?} (auto, full, partial)"
            )))
        }
    };

    let initial = build_initial(raw.initial, agents, n, raw.tau_bar)?;

    let ov = raw.overrides.unwrap_or_default();
    let overrides = Overrides {
        rho: ov.rho,
        epsilon: ov.epsilon,
        k: ov.k.as_deref().map(|k| matrix("overrides.K", k)).transpose()?,
        desired_poles: ov
            .desired_poles
            .map(|p| p.iter().map(|&[re, im]| Complex64::new(re, im)).collect()),
        step_size: ov.step_size,
    };

    let scenario = Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        model,
        topology,
        delays: raw.delays,
        tau_bar: raw.tau_bar,
        coupling,
        initial,
        t_max: raw.t_max,
        overrides,
        tolerance: ov.tolerance.unwrap_or(DEFAULT_TOLERANCE),
    };
    scenario.validate()?;
    Ok(scenario)
}

fn strip(e: &Error) -> String {
    match e {
        Error::InvalidInput(m) => m.clone(),
        other => other.to_string(),
    }
}

fn build_topology(raw: &RawTopology, delay_count: usize) -> Result<Topology> {
    let roots: Vec<usize> = raw
        .roots
        .iter()
        .map(|&r| {
            r.checked_sub(1)
                .ok_or_else(|| Error::invalid("topology.roots: indices are one-based"))
        })
        .collect::<Result<_>>()?;
    let topo = match (&raw.adjacency, &raw.edges) {
        (Some(_), Some(_)) => {
            return Err(Error::invalid(
                "topology: give either adjacency or edges, not both",
            ))
        }
        (Some(adj), None) => Topology::new(matrix("topology.adjacency", adj)?, roots),
        (None, edges) => {
            let agents = raw.agents.unwrap_or(delay_count);
            let mut list = Vec::new();
            for (k, e) in edges.iter().flatten().enumerate() {
                let (from, to, w) = match e.as_slice() {
                    [f, t] => (*f, *t, 1.0),
                    [f, t, w] => (*f, *t, *w),
                    _ => {
                        return Err(Error::invalid(format!(
                            "topology.edges[{}]: expected [from, to] or [from, to, weight]",
                            k + 1
                        )))
                    }
                };
                let index = |v: f64| {
                    if v.fract() == 0.0 && v >= 1.0 {
                        Ok(v as usize - 1)
                    } else {
                        Err(Error::invalid(format!(
                            "topology.edges[{}]: node {v} is not a one-based index",
                            k + 1
                        )))
                    }
                };
                list.push((index(from)?, index(to)?, w));
            }
            Topology::from_edges(agents, &list, roots)
        }
    };
    topo.map_err(|e| Error::invalid(format!("topology: {}", strip(&e))))
}

fn build_initial(
    raw: Option<RawInitial>,
    agents: usize,
    n: usize,
    tau_bar: f64,
) -> Result<InitialConditions> {
    let Some(raw) = raw else {
        return Ok(InitialConditions::seeded(DEFAULT_SEED, agents, n));
    };
    let mut init = match (raw.agents, raw.exo) {
        (Some(states), Some(exo)) => {
            if raw.seed.is_some() {
                return Err(Error::invalid("initial: give either seed or explicit states"));
            }
            if states.len() != agents {
                return Err(Error::invalid(format!(
                    "initial.agents: {} states for {agents} agents",
                    states.len()
                )));
            }
            InitialConditions {
                agents: states.into_iter().map(DVector::from_vec).collect(),
                exo: DVector::from_vec(exo),
                histories: vec![None; agents],
                seed: None,
            }
        }
        (None, None) => InitialConditions::seeded(raw.seed.unwrap_or(DEFAULT_SEED), agents, n),
        _ => {
            return Err(Error::invalid(
                "initial: agents and exo must be given together",
            ))
        }
    };
    for h in raw.history {
        let i = h
            .agent
            .checked_sub(1)
            .filter(|&i| i < agents)
            .ok_or_else(|| Error::invalid(format!("initial.history: agent {} out of range", h.agent)))?;
        if h.times.first().is_none_or(|&t| t > -tau_bar) || h.times.last() != Some(&0.0) {
            return Err(Error::invalid(format!(
                "initial.history for agent {}: times must span [-tau_bar, 0]",
                h.agent
            )));
        }
        if h.values.iter().any(|v| v.len() != n) {
            return Err(Error::invalid(format!(
                "initial.history for agent {}: values must have dimension {n}",
                h.agent
            )));
        }
        let values: Vec<Vector> = h.values.into_iter().map(DVector::from_vec).collect();
        init.agents[i] = values.last().cloned().unwrap_or_else(|| DVector::zeros(n));
        init.histories[i] = Some(
            BlockHistory::from_samples(&h.times, &values)
                .map_err(|e| Error::invalid(format!("initial.history: {}", strip(&e))))?,
        );
    }
    Ok(init)
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| Error::invalid(e.message().to_string()))?;
    build(raw)
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::Scenario {
            path: path.to_path_buf(),
            msg,
        },
        other => other,
    })
}
