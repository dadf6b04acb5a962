//! Scale-free protocol design and closed-loop assembly.
//!
//! Design operations take only the agent model and the delay bound; no graph
//! information enters [`design`]. The resulting [`ProtocolParams`] are then
//! combined with a concrete topology and delay assignment by
//! [`build_closed_loop`].

mod closed_loop;
mod design;
mod frequency;
mod observer;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat};

pub use closed_loop::{
    build_closed_loop, BlockKind, ClosedLoopSystem, StateLayout, MAX_STATE_DIM,
};
pub use design::{
    delay_margin, design, design_rho, select_epsilon, theta_for, Design, DesignOptions,
    EpsilonCriterion, EpsilonSelection, DELAY_MARGIN_SLACK, RHO_MARGIN,
};
pub use frequency::{verify_frequency_condition, FrequencyGrid, MarginReport};
pub use observer::{default_observer_poles, design_observer_gain, observer_gain_by_riccati};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Agents exchange full states (`C = I`).
    FullState,
    /// Agents exchange outputs and run a local observer.
    PartialState,
}

/// Everything a single agent's controller needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolParams {
    pub rho: f64,
    pub epsilon: f64,
    /// Riccati solution at `epsilon`.
    #[serde(with = "linalg::rows")]
    pub p: Mat,
    /// Observer gain, present in partial-state mode.
    #[serde(with = "linalg::rows::option")]
    pub k: Option<Mat>,
    pub tau_bar: f64,
    pub coupling: CouplingMode,
}

impl ProtocolParams {
    /// Feedback gain `rho B^T P` so that `u = -F chi`.
    pub fn feedback_gain(&self, b: &Mat) -> Mat {
        b.transpose() * &self.p * self.rho
    }

    /// `rho B B^T P`, the matrix acting on the delayed protocol state.
    pub fn delayed_gain(&self, b: &Mat) -> Mat {
        b * b.transpose() * &self.p * self.rho
    }

    /// Canonical JSON encoding, stable across runs.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("protocol parameters serialize")
    }
}
