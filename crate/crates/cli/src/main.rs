use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cfpc_cli::config::{self, CliError, ConfigEntry, ExperimentConfig};
use cfpc_cli::{preset_names, run_experiment};

/// Cell-free power-control workbench: closed-form spectral efficiencies
/// optimized with multi-objective Bayesian optimization against a
/// quasi-Monte-Carlo baseline.
#[derive(Parser)]
#[command(name = "cfpc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV artifacts.
    Run(RunArgs),
    /// List the built-in scenario presets.
    Presets,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Config file with `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario preset name (overrides the config file's scenario).
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated methods: nehvi, ehvi, sobol.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated replicate seeds.
    #[arg(long)]
    seed: Option<String>,
    /// Evaluation budget per run.
    #[arg(long)]
    budget: Option<usize>,
    /// Candidates proposed per iteration.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Output directory for the CSV artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Extra `section.key=value` overrides, applied last.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut entries: Vec<ConfigEntry> = Vec::new();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        entries = config::parse_entries(&text)?;
    }
    // CLI pseudo-entries apply after the file, in flag order.
    let mut push = |key: &str, value: String| {
        entries.push(ConfigEntry {
            line: 0,
            key: key.to_string(),
            value,
        });
    };
    if let Some(m) = &args.method {
        push("experiment.methods", m.clone());
    }
    if let Some(s) = &args.seed {
        push("experiment.seeds", s.clone());
    }
    if let Some(b) = args.budget {
        push("experiment.budget", b.to_string());
    }
    if let Some(q) = args.batch_size {
        push("experiment.batch_size", q.to_string());
    }
    if let Some(dir) = &args.out_dir {
        push("experiment.out_dir", dir.display().to_string());
    }
    for pair in &args.overrides {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(CliError::Config(format!(
                "--override expects KEY=VALUE, got `{pair}`"
            )));
        };
        push(key.trim(), value.trim().to_string());
    }
    // A --scenario flag wins over the file's scenario, so the preset it
    // names expands first; the file's other keys still apply on top.
    if let Some(s) = &args.scenario {
        entries.retain(|e| e.key != "experiment.scenario");
        config::resolve(&entries, Some(s))
    } else {
        config::resolve(&entries, None)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => match build_config(&args).and_then(|cfg| run_experiment(&cfg)) {
            Ok(out) => {
                println!("wrote {} files to {}", out.files.len(), out.out_dir.display());
                ExitCode::SUCCESS
            }
            Err(err) => {
                eprintln!("error: {err}");
                ExitCode::from(err.exit_code() as u8)
            }
        },
    }
}
