//! Flat `section.key = value` experiment configuration.
//!
//! A config names a scenario preset; the preset expands into a full
//! configuration and the remaining lines override individual keys.
//! Unknown keys and invariant violations are rejected with the offending
//! line number. The effective configuration can be emitted back as text
//! that reparses to an identical value.

use std::fmt::Write as _;
use std::path::Path;

use cfpc_core::Error as CoreError;
use cfpc_core::bo_loop::{CodecMode, Method};
use thiserror::Error;

use crate::presets::{preset, preset_names};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config error at line {line}: {msg}")]
    ConfigAt { line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigAt { .. } => 2,
            CliError::Core(CoreError::NumericalError(_)) => 3,
            CliError::Core(_) => 2,
            CliError::Io { .. } => 1,
        }
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub methods: Vec<Method>,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    pub out_dir: String,
    pub codec: CodecMode,
    pub tie_ul_power: bool,
    pub observation_noise: f64,
    pub gp_restarts: usize,
    pub n_mc_samples: usize,
    pub n_restarts: usize,
    pub raw_candidates: usize,
    pub network: cfpc_core::topology::NetworkConfig,
}

impl ExperimentConfig {
    pub fn from_preset_name(name: &str) -> Result<Self, CliError> {
        let p = preset(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown scenario `{name}`; available: {}",
                preset_names().join(", ")
            ))
        })?;
        Ok(ExperimentConfig {
            scenario: p.name.to_string(),
            methods: p.methods,
            budget: p.budget,
            seeds: p.seeds,
            batch_size: 1,
            out_dir: format!("runs/{name}"),
            codec: p.codec,
            tie_ul_power: false,
            observation_noise: 0.0,
            gp_restarts: 8,
            n_mc_samples: 128,
            n_restarts: 10,
            raw_candidates: 512,
            network: p.network,
        })
    }

    /// Applies one `section.key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse::<T>()
                .map_err(|_| format!("invalid value `{v}` for key `{key}`"))
        }
        let positive = |key: &str, v: f64| -> Result<f64, String> {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(format!("key `{key}` must be positive, got {v}"))
            }
        };
        match key {
            "experiment.scenario" => {
                // Handled during expansion; accepted here so emitted
                // configs reparse.
                if preset(value).is_none() {
                    return Err(format!("unknown scenario `{value}`"));
                }
                self.scenario = value.to_string();
            }
            "experiment.methods" => {
                let methods = value
                    .split(',')
                    .map(|m| Method::parse(m.trim()).map_err(|e| e.to_string()))
                    .collect::<Result<Vec<_>, _>>()?;
                if methods.is_empty() {
                    return Err("experiment.methods must not be empty".into());
                }
                self.methods = methods;
            }
            "experiment.budget" => {
                self.budget = num(key, value)?;
                if self.budget == 0 {
                    return Err("experiment.budget must be at least 1".into());
                }
            }
            "experiment.seeds" => {
                let seeds = value
                    .split(',')
                    .map(|s| num::<u64>(key, s.trim()))
                    .collect::<Result<Vec<_>, _>>()?;
                if seeds.is_empty() {
                    return Err("experiment.seeds must not be empty".into());
                }
                self.seeds = seeds;
            }
            "experiment.batch_size" => {
                self.batch_size = num(key, value)?;
                if self.batch_size == 0 {
                    return Err("experiment.batch_size must be at least 1".into());
                }
            }
            "experiment.out_dir" => self.out_dir = value.to_string(),
            "experiment.codec" => {
                self.codec = CodecMode::parse(value).map_err(|e| e.to_string())?;
            }
            "experiment.tie_ul_power" => {
                self.tie_ul_power = num(key, value)?;
            }
            "experiment.observation_noise" => {
                let v: f64 = num(key, value)?;
                if v < 0.0 {
                    return Err("experiment.observation_noise must be >= 0".into());
                }
                self.observation_noise = v;
            }
            "experiment.gp_restarts" => {
                self.gp_restarts = num(key, value)?;
                if self.gp_restarts == 0 {
                    return Err("experiment.gp_restarts must be at least 1".into());
                }
            }
            "acquisition.n_mc_samples" => {
                self.n_mc_samples = num(key, value)?;
                if self.n_mc_samples < 16 {
                    return Err("acquisition.n_mc_samples must be >= 16".into());
                }
            }
            "acquisition.n_restarts" => {
                self.n_restarts = num(key, value)?;
                if self.n_restarts == 0 {
                    return Err("acquisition.n_restarts must be at least 1".into());
                }
            }
            "acquisition.raw_candidates" => {
                self.raw_candidates = num(key, value)?;
                if self.raw_candidates == 0 {
                    return Err("acquisition.raw_candidates must be at least 1".into());
                }
            }
            "network.num_aps" => self.network.num_aps = num(key, value)?,
            "network.num_ues" => {
                self.network.num_ues = num(key, value)?;
            }
            "network.antennas_per_ap" => self.network.antennas_per_ap = num(key, value)?,
            "network.area_side" => {
                self.network.area_side = positive(key, num(key, value)?)?;
            }
            "network.min_dist_ap_ue" => {
                self.network.min_dist_ap_ue = positive(key, num(key, value)?)?;
            }
            "network.min_dist_ue_ue" => {
                self.network.min_dist_ue_ue = positive(key, num(key, value)?)?;
            }
            "network.min_dist_ap_ap" => {
                self.network.min_dist_ap_ap = positive(key, num(key, value)?)?;
            }
            "network.coherence_len" => self.network.coherence_len = num(key, value)?,
            "network.pilot_len" => self.network.pilot_len = num(key, value)?,
            "network.correlation_magnitude" => {
                let v: f64 = num(key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!(
                        "network.correlation_magnitude must be in [0,1], got {v}"
                    ));
                }
                self.network.correlation_magnitude = v;
            }
            "network.shadow_std_db" => {
                let v: f64 = num(key, value)?;
                if v < 0.0 {
                    return Err("network.shadow_std_db must be >= 0".into());
                }
                self.network.shadow_std_db = v;
            }
            "network.noise_power_ul" => {
                self.network.noise_power_ul = positive(key, num(key, value)?)?;
            }
            "network.noise_power_dl" => {
                self.network.noise_power_dl = positive(key, num(key, value)?)?;
            }
            "network.p_max_ul" => {
                self.network.p_max_ul = positive(key, num(key, value)?)?;
            }
            "network.p_max_dl" => {
                self.network.p_max_dl = positive(key, num(key, value)?)?;
            }
            "network.seed" => self.network.seed = num(key, value)?,
            "network.top_aps_per_ue" => {
                let v: usize = num(key, value)?;
                self.network.top_aps_per_ue = if v == 0 { None } else { Some(v) };
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Consistency checks beyond individual keys.
    pub fn validate(&self) -> Result<(), CliError> {
        self.network
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.methods.is_empty() {
            return Err(CliError::Config("no methods selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("no seeds selected".into()));
        }
        Ok(())
    }

    /// Canonical text form; reparses to an identical configuration.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# effective configuration");
        let _ = writeln!(out, "experiment.scenario = {}", self.scenario);
        let methods: Vec<&str> = self.methods.iter().map(|m| m.as_str()).collect();
        let _ = writeln!(out, "experiment.methods = {}", methods.join(","));
        let _ = writeln!(out, "experiment.budget = {}", self.budget);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "experiment.seeds = {}", seeds.join(","));
        let _ = writeln!(out, "experiment.batch_size = {}", self.batch_size);
        let _ = writeln!(out, "experiment.out_dir = {}", self.out_dir);
        let _ = writeln!(out, "experiment.codec = {}", self.codec.as_str());
        let _ = writeln!(out, "experiment.tie_ul_power = {}", self.tie_ul_power);
        let _ = writeln!(
            out,
            "experiment.observation_noise = {:?}",
            self.observation_noise
        );
        let _ = writeln!(out, "experiment.gp_restarts = {}", self.gp_restarts);
        let _ = writeln!(out, "acquisition.n_mc_samples = {}", self.n_mc_samples);
        let _ = writeln!(out, "acquisition.n_restarts = {}", self.n_restarts);
        let _ = writeln!(out, "acquisition.raw_candidates = {}", self.raw_candidates);
        let n = &self.network;
        let _ = writeln!(out, "network.num_aps = {}", n.num_aps);
        let _ = writeln!(out, "network.num_ues = {}", n.num_ues);
        let _ = writeln!(out, "network.antennas_per_ap = {}", n.antennas_per_ap);
        let _ = writeln!(out, "network.area_side = {:?}", n.area_side);
        let _ = writeln!(out, "network.min_dist_ap_ue = {:?}", n.min_dist_ap_ue);
        let _ = writeln!(out, "network.min_dist_ue_ue = {:?}", n.min_dist_ue_ue);
        let _ = writeln!(out, "network.min_dist_ap_ap = {:?}", n.min_dist_ap_ap);
        let _ = writeln!(out, "network.coherence_len = {}", n.coherence_len);
        let _ = writeln!(out, "network.pilot_len = {}", n.pilot_len);
        let _ = writeln!(
            out,
            "network.correlation_magnitude = {:?}",
            n.correlation_magnitude
        );
        let _ = writeln!(out, "network.shadow_std_db = {:?}", n.shadow_std_db);
        let _ = writeln!(out, "network.noise_power_ul = {:?}", n.noise_power_ul);
        let _ = writeln!(out, "network.noise_power_dl = {:?}", n.noise_power_dl);
        let _ = writeln!(out, "network.p_max_ul = {:?}", n.p_max_ul);
        let _ = writeln!(out, "network.p_max_dl = {:?}", n.p_max_dl);
        let _ = writeln!(out, "network.seed = {}", n.seed);
        let _ = writeln!(
            out,
            "network.top_aps_per_ue = {}",
            n.top_aps_per_ue.unwrap_or(0)
        );
        out
    }
}

/// One `key = value` assignment with its source line.
#[derive(Debug, Clone)]
pub struct ConfigEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits config text into assignments; comments (`#`) and blank lines
/// are skipped.
pub fn parse_entries(text: &str) -> Result<Vec<ConfigEntry>, CliError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(CliError::ConfigAt {
                line,
                msg: format!("expected `section.key = value`, got `{stripped}`"),
            });
        };
        out.push(ConfigEntry {
            line,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

/// Builds the effective configuration: scenario expansion first, then the
/// remaining assignments in order.
pub fn resolve(
    entries: &[ConfigEntry],
    cli_scenario: Option<&str>,
) -> Result<ExperimentConfig, CliError> {
    let scenario = entries
        .iter()
        .find(|e| e.key == "experiment.scenario")
        .map(|e| e.value.as_str())
        .or(cli_scenario)
        .ok_or_else(|| {
            CliError::Config(format!(
                "no scenario selected; set experiment.scenario or pass --scenario \
                 (available: {})",
                preset_names().join(", ")
            ))
        })?;
    let mut cfg = ExperimentConfig::from_preset_name(scenario)?;
    for e in entries {
        cfg.set(&e.key, &e.value)
            .map_err(|msg| CliError::ConfigAt { line: e.line, msg })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a config file into the effective configuration.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let entries = parse_entries(&text)?;
    resolve(&entries, None)
}
