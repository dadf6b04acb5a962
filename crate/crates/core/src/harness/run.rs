use std::time::Instant;

use serde::Serialize;

use super::scenario::Scenario;
use crate::dde::{BlockHistory, InitialHistory, Trajectory, Vector};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::protocol::{
    self, build_closed_loop, BlockKind, ClosedLoopSystem, Design, DesignOptions, FrequencyGrid,
    MarginReport, RHO_MARGIN,
};

/// Horizons computed from the dominant pole are capped here.
pub const T_MAX_CAP: f64 = 1e4;
/// Time constants of the slowest delay-free mode covered by the default horizon.
pub const T_MAX_TIME_CONSTANTS: f64 = 50.0;
/// Step used when no delay is positive and no step is given.
const DELAY_FREE_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub converged: bool,
    /// Relative tolerance on `sync_error(t) / sync_error(0)`.
    pub tolerance: f64,
    pub initial_error: f64,
    pub final_error: f64,
    pub final_relative_error: f64,
    /// Largest `||x_i - x_j||` at the final time.
    pub final_pairwise_error: f64,
    /// First time the relative error drops below the tolerance.
    pub first_crossing: Option<f64>,
    /// Time after which the relative error stays below the tolerance.
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ResultSet {
    pub scenario: String,
    pub delays: Vec<f64>,
    pub trajectory: Trajectory,
    /// `max_i ||x_i(t) - x_r(t)||` per sample.
    pub sync_error: Vec<f64>,
    /// `u_i(t) = -rho B^T P chi_i(t)`, stacked over agents, per sample.
    pub inputs: Vec<Vector>,
    pub design: Design,
    pub margin: MarginReport,
    pub convergence: Convergence,
    pub step_size: f64,
    pub t_max: f64,
    pub wall_time_s: f64,
}

/// Compact, serializable view of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub scenario: &'a str,
    pub agents: usize,
    pub delays: Vec<f64>,
    pub params: &'a protocol::ProtocolParams,
    pub selection: &'a protocol::EpsilonSelection,
    pub margin: &'a MarginReport,
    pub convergence: &'a Convergence,
    pub step_size: f64,
    pub t_max: f64,
    pub samples: usize,
    pub wall_time_s: f64,
}

impl ResultSet {
    pub fn summary(&self) -> RunSummary<'_> {
        let agents = self
            .trajectory
            .layout
            .as_ref()
            .map_or(0, |l| l.num_agents());
        RunSummary {
            scenario: &self.scenario,
            agents,
            delays: self.delays.clone(),
            params: &self.design.params,
            selection: &self.design.selection,
            margin: &self.margin,
            convergence: &self.convergence,
            step_size: self.step_size,
            t_max: self.t_max,
            samples: self.trajectory.len(),
            wall_time_s: self.wall_time_s,
        }
    }
}

/// Options forwarded to the protocol design for this scenario.
pub fn design_options(scenario: &Scenario) -> DesignOptions {
    DesignOptions {
        coupling: Some(scenario.coupling),
        rho: scenario.overrides.rho,
        rho_margin: RHO_MARGIN,
        epsilon: scenario.overrides.epsilon,
        k: scenario.overrides.k.clone(),
        desired_poles: scenario.overrides.desired_poles.clone(),
    }
}

/// Designs the protocol for the scenario's model and delay bound.
pub fn design_for(scenario: &Scenario) -> Result<Design> {
    protocol::design(&scenario.model, scenario.tau_bar, &design_options(scenario))
}

/// `min(tau)/4` over positive delays, tightened if needed so that
/// `h |lambda| <= 1` for every eigenvalue of the delay-free loop.
pub fn default_step(system: &ClosedLoopSystem) -> Result<f64> {
    let radius = linalg::eigenvalues(&system.delay_free_matrix())?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let stiff = if radius > 0.0 { 1.0 / radius } else { f64::INFINITY };
    let base = system.dde().max_step().unwrap_or(DELAY_FREE_STEP);
    Ok(base.min(stiff))
}

/// `50 / |Re lambda_dom|` of the delay-free loop without the exosystem,
/// capped at [`T_MAX_CAP`].
pub fn default_t_max(system: &ClosedLoopSystem) -> Result<f64> {
    let slowest = linalg::eigenvalues(&system.delay_free_without_exo())?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(slowest < 0.0) {
        return Ok(T_MAX_CAP);
    }
    Ok((T_MAX_TIME_CONSTANTS / -slowest).min(T_MAX_CAP))
}

/// Initial function of the stacked state: each agent's `phi_i`, zero for the
/// protocol and observer states, constant `x_r(0)` for the exosystem.
pub fn initial_history(scenario: &Scenario, system: &ClosedLoopSystem) -> Result<InitialHistory> {
    let layout = system.layout();
    let n = layout.block_size();
    let mut blocks = Vec::new();
    for b in layout.blocks() {
        let hist = match (b.kind, b.agent) {
            (BlockKind::X, Some(i)) => scenario.initial.histories[i]
                .clone()
                .unwrap_or_else(|| BlockHistory::Constant(scenario.initial.agents[i].clone())),
            (BlockKind::Exo, _) => BlockHistory::Constant(scenario.initial.exo.clone()),
            _ => BlockHistory::Constant(Vector::zeros(n)),
        };
        blocks.push((b.offset, n, hist));
    }
    InitialHistory::from_blocks(layout.dim(), blocks)
}

/// `max_i ||x_i - x_r||` and `max_{i,j} ||x_i - x_j||` of one sample.
fn errors(layout: &protocol::StateLayout, z: &Vector) -> (f64, f64) {
    let n = layout.block_size();
    let xr = z.rows(layout.offset(BlockKind::Exo, 0), n);
    let xs: Vec<_> = (0..layout.num_agents())
        .map(|i| z.rows(layout.offset(BlockKind::X, i), n))
        .collect();
    let tracking = xs.iter().map(|x| (x - xr).norm()).fold(0.0, f64::max);
    let mut pairwise: f64 = 0.0;
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            pairwise = pairwise.max((xs[i] - xs[j]).norm());
        }
    }
    (tracking, pairwise)
}

/// Tracking error of every sample.
pub fn sync_error(traj: &Trajectory) -> Result<Vec<f64>> {
    let layout = traj
        .layout
        .as_ref()
        .ok_or_else(|| Error::invalid("trajectory has no state layout"))?;
    if !layout.has_exo() {
        return Err(Error::invalid("sync error needs the exosystem state"));
    }
    Ok(traj.states.iter().map(|z| errors(layout, z).0).collect())
}

/// Judges convergence on the final tenth of the horizon.
pub fn assess(times: &[f64], sync: &[f64], final_pairwise: f64, tolerance: f64) -> Convergence {
    let initial = sync.first().copied().unwrap_or(0.0);
    let scale = if initial > 0.0 { initial } else { 1.0 };
    let rel: Vec<f64> = sync.iter().map(|e| e / scale).collect();
    let t_end = times.last().copied().unwrap_or(0.0);
    let window_start = 0.9 * t_end;
    let converged = !rel.is_empty()
        && times
            .iter()
            .zip(&rel)
            .filter(|(t, _)| **t >= window_start)
            .all(|(_, r)| *r < tolerance);
    let first_crossing = times.iter().zip(&rel).find(|(_, r)| **r < tolerance).map(|(t, _)| *t);
    let settling_time = match rel.iter().rposition(|r| !(*r < tolerance)) {
        None => times.first().copied(),
        Some(k) if k + 1 < times.len() => Some(times[k + 1]),
        Some(_) => None,
    };
    let final_error = sync.last().copied().unwrap_or(0.0);
    Convergence {
        converged,
        tolerance,
        initial_error: initial,
        final_error,
        final_relative_error: final_error / scale,
        final_pairwise_error: final_pairwise,
        first_crossing,
        settling_time,
    }
}

/// Designs, assembles and simulates one scenario.
pub fn run_scenario(scenario: &Scenario) -> Result<ResultSet> {
    let started = Instant::now();
    scenario.validate()?;
    let design = design_for(scenario)?;
    let params = &design.params;
    let margin = protocol::verify_frequency_condition(
        &scenario.model,
        &params.p,
        params.rho,
        params.tau_bar,
        &FrequencyGrid::default(),
    )?;
    let system = build_closed_loop(
        &scenario.model,
        &scenario.topology,
        params,
        &scenario.delays,
        true,
    )?;
    let step_size = match scenario.overrides.step_size {
        Some(h) => h,
        None => default_step(&system)?,
    };
    let t_max = match scenario.t_max {
        Some(t) => t,
        None => default_t_max(&system)?,
    };
    let history = initial_history(scenario, &system)?;
    let trajectory = system.simulate(&history, step_size, t_max)?;

    let layout = system.layout();
    let sync = sync_error(&trajectory)?;
    let final_pairwise = trajectory
        .final_state()
        .map_or(0.0, |z| errors(layout, z).1);
    let convergence = assess(&trajectory.times, &sync, final_pairwise, scenario.tolerance);
    let inputs = control_inputs(&trajectory, &params.feedback_gain(scenario.model.b()))?;

    Ok(ResultSet {
        scenario: scenario.name.clone(),
        delays: scenario.delays.clone(),
        trajectory,
        sync_error: sync,
        inputs,
        design,
        margin,
        convergence,
        step_size,
        t_max,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// `u_i(t) = -F chi_i(t)` for every agent and sample.
pub fn control_inputs(traj: &Trajectory, feedback: &Mat) -> Result<Vec<Vector>> {
    let layout = traj
        .layout
        .as_ref()
        .ok_or_else(|| Error::invalid("trajectory has no state layout"))?;
    let (m, n) = feedback.shape();
    let agents = layout.num_agents();
    Ok(traj
        .states
        .iter()
        .map(|z| {
            let mut u = Vector::zeros(agents * m);
            for i in 0..agents {
                let chi = z.rows(layout.offset(BlockKind::Chi, i), n);
                u.rows_mut(i * m, m).copy_from(&(-(feedback * chi)));
            }
            u
        })
        .collect())
}
