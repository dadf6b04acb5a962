use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::cases::topology_for_size;
use super::run::run_scenario;
use super::scenario::{InitialConditions, Scenario, DEFAULT_SEED};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Number of agents; uses the example graph of that size when one exists
    /// and a directed path otherwise. Template delays are repeated cyclically.
    N,
    /// One common delay for every agent.
    Delays,
    Epsilon,
    Rho,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n" | "agents" => Ok(SweepAxis::N),
            "delays" | "delay" | "tau" => Ok(SweepAxis::Delays),
            "epsilon" | "eps" => Ok(SweepAxis::Epsilon),
            "rho" => Ok(SweepAxis::Rho),
            other => Err(Error::invalid(format!(
                "unknown sweep axis {other:?} (n, delays, epsilon, rho)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub converged: Option<bool>,
    pub final_sync_error: Option<f64>,
    pub final_relative_error: Option<f64>,
    pub first_crossing: Option<f64>,
    /// Serialized protocol parameters of the run.
    pub params: Option<String>,
    pub wall_time_s: f64,
    pub error: Option<String>,
    /// CLI exit code the error maps to.
    pub error_code: Option<i32>,
}

/// The template with one axis set to `value`.
pub fn variant(template: &Scenario, axis: SweepAxis, value: f64) -> Result<Scenario> {
    let mut s = template.clone();
    match axis {
        SweepAxis::N => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(Error::invalid(format!("agent count must be a positive integer, got {value}")));
            }
            let n = value as usize;
            s.topology = topology_for_size(n)?;
            s.delays = (0..n).map(|i| template.delays[i % template.delays.len()]).collect();
            let seed = template.initial.seed.unwrap_or(DEFAULT_SEED);
            s.initial = InitialConditions::seeded(seed, n, template.model.n());
        }
        SweepAxis::Delays => s.delays = vec![value; s.delays.len()],
        SweepAxis::Epsilon => s.overrides.epsilon = Some(value),
        SweepAxis::Rho => s.overrides.rho = Some(value),
    }
    s.name = format!("{}[{axis:?}={value}]", template.name);
    s.validate()?;
    Ok(s)
}

/// Runs every value independently and in parallel; failures are recorded per
/// entry and do not stop the sweep.
pub fn sweep(template: &Scenario, axis: SweepAxis, values: &[f64]) -> Vec<SweepEntry> {
    values
        .par_iter()
        .map(|&value| {
            let started = Instant::now();
            let outcome = variant(template, axis, value).and_then(|s| run_scenario(&s));
            let wall_time_s = started.elapsed().as_secs_f64();
            match outcome {
                Ok(r) => SweepEntry {
                    value,
                    converged: Some(r.convergence.converged),
                    final_sync_error: Some(r.convergence.final_error),
                    final_relative_error: Some(r.convergence.final_relative_error),
                    first_crossing: r.convergence.first_crossing,
                    params: Some(r.design.params.to_json()),
                    wall_time_s,
                    error: None,
                    error_code: None,
                },
                Err(e) => SweepEntry {
                    value,
                    converged: None,
                    final_sync_error: None,
                    final_relative_error: None,
                    first_crossing: None,
                    params: None,
                    wall_time_s,
                    error: Some(e.to_string()),
                    error_code: Some(e.exit_code()),
                },
            }
        })
        .collect()
}
