//! Configuration, scenario presets, and experiment execution for the
//! cell-free power-control workbench binary.

pub mod config;
pub mod experiment;
pub mod presets;

pub use config::{CliError, ExperimentConfig, parse_config};
pub use experiment::run_experiment;
pub use presets::{ScenarioPreset, preset, preset_names};

pub type Result<T> = std::result::Result<T, CliError>;
