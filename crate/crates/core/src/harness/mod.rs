//! Scenario files, runs, sweeps and CSV export.

pub mod cases;
mod export;
mod run;
mod scenario;
mod sweep;

pub use export::{csv_header, export_csv};
pub use run::{
    assess, control_inputs, default_step, default_t_max, design_for, design_options,
    initial_history, run_scenario, sync_error, Convergence, ResultSet, RunSummary, T_MAX_CAP,
};
pub use scenario::{
    auto_coupling, load_scenario, parse_scenario, InitialConditions, Overrides, Scenario,
    DEFAULT_SEED, DEFAULT_TOLERANCE, SCHEMA_VERSION,
};
pub use sweep::{sweep, variant, SweepAxis, SweepEntry};
