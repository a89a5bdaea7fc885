//! Experiment execution and bit-stable CSV emission.
//!
//! Every file is written to a `.partial` name first and renamed on
//! success, so an interrupted run leaves only flagged partial files.
//! Floats are printed in shortest round-trip form, which keeps reruns
//! byte-identical.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cfpc_core::acquisition::AcquisitionConfig;
use cfpc_core::bo_loop::{
    AggregateRow, BatchResult, ExperimentSetup, RunConfig, RunResult, replicate,
};

use crate::config::{CliError, ExperimentConfig};

pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub hv_reference: f64,
    pub best_total_se: f64,
    pub wall_clock_s: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `content` through a `.partial` staging file.
fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    let partial = path.with_extension(format!(
        "{}.partial",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&partial).map_err(io_err(&partial))?;
        f.write_all(content.as_bytes()).map_err(io_err(&partial))?;
    }
    std::fs::rename(&partial, path).map_err(io_err(path))?;
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" ")
}

fn trace_csv(run: &RunResult) -> String {
    let mut out = String::from(
        "iteration,method,hv,log_hv_difference,best_total_se,normalized_total_se,flag\n",
    );
    for row in &run.trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.iteration,
            row.method.as_str(),
            fmt_f64(row.hv),
            fmt_f64(row.log_hv_difference),
            fmt_f64(row.best_total_se),
            fmt_f64(row.normalized_total_se),
            row.flag
        );
    }
    out
}

fn observations_csv(run: &RunResult) -> String {
    let mut out = String::from(
        "iteration,se_ul,se_dl,total_se,min_fairness_se,cube_point,p_ul,p_dl,w_ul,w_dl\n",
    );
    for o in &run.observations {
        let _ = writeln!(
            out,
            "{},{},{},{},{},\"{}\",\"{}\",\"{}\",\"{}\",\"{}\"",
            o.iteration,
            fmt_f64(o.objectives[0]),
            fmt_f64(o.objectives[1]),
            fmt_f64(o.total_se),
            fmt_f64(o.min_fairness_se),
            join_f64(&o.cube_point),
            join_f64(&o.allocation.p_ul),
            join_f64(&o.allocation.p_dl),
            join_f64(&o.allocation.w_ul),
            join_f64(&o.allocation.w_dl),
        );
    }
    out
}

/// Final front of every seed of one method, with the iteration at which
/// each point was collected, for color-by-iteration front plots.
fn pareto_csv(runs: &[&RunResult]) -> String {
    let mut out = String::from("seed,iteration,se_ul,se_dl\n");
    for run in runs {
        let mut front = run.archive.front();
        front.sort_by_key(|e| e.iteration);
        for entry in front {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                run.seed,
                entry.iteration,
                fmt_f64(entry.objectives[0]),
                fmt_f64(entry.objectives[1]),
            );
        }
    }
    out
}

fn summary_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "method,iteration,hv_mean,hv_std,hv_min,hv_max,\
         log_hv_diff_mean,log_hv_diff_std,log_hv_diff_min,log_hv_diff_max,\
         norm_se_mean,norm_se_std,norm_se_min,norm_se_max\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method.as_str(),
            r.iteration,
            fmt_f64(r.hv_mean),
            fmt_f64(r.hv_std),
            fmt_f64(r.hv_min),
            fmt_f64(r.hv_max),
            fmt_f64(r.log_hv_diff_mean),
            fmt_f64(r.log_hv_diff_std),
            fmt_f64(r.log_hv_diff_min),
            fmt_f64(r.log_hv_diff_max),
            fmt_f64(r.norm_se_mean),
            fmt_f64(r.norm_se_std),
            fmt_f64(r.norm_se_min),
            fmt_f64(r.norm_se_max),
        );
    }
    out
}

/// Builds the scenario, runs every (method, seed) pair, writes the CSV
/// artifacts, and prints the final hypervolume table.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    config.validate()?;
    let started = Instant::now();
    let setup = ExperimentSetup::new(&config.network, config.codec, config.tie_ul_power)?;

    let mut base = RunConfig::new(config.methods[0], config.budget, config.seeds[0]);
    base.acquisition = AcquisitionConfig {
        n_mc_samples: config.n_mc_samples,
        batch_size: config.batch_size,
        n_restarts: config.n_restarts,
        raw_candidates: config.raw_candidates,
        seed: 0,
    };
    base.gp_restarts = config.gp_restarts;
    base.observation_noise = config.observation_noise;

    let batch: BatchResult = replicate(&setup, &base, &config.methods, &config.seeds)?;

    let out_dir = PathBuf::from(&config.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let mut files = Vec::new();
    let emit = |name: String, content: String| -> Result<PathBuf, CliError> {
        let path = out_dir.join(name);
        write_file(&path, &content)?;
        Ok(path)
    };

    files.push(emit("effective_config.cfg".into(), config.emit())?);
    files.push(emit(
        "topology_snapshot.txt".into(),
        setup.topology.snapshot(),
    )?);
    for run in &batch.runs {
        files.push(emit(
            format!("trace_{}_{}.csv", run.method.as_str(), run.seed),
            trace_csv(run),
        )?);
        files.push(emit(
            format!("observations_{}_{}.csv", run.method.as_str(), run.seed),
            observations_csv(run),
        )?);
    }
    for &method in &config.methods {
        let runs: Vec<&RunResult> = batch
            .runs
            .iter()
            .filter(|r| r.method == method)
            .collect();
        files.push(emit(
            format!("pareto_{}.csv", method.as_str()),
            pareto_csv(&runs),
        )?);
    }
    files.push(emit("summary.csv".into(), summary_csv(&batch.aggregated))?);

    let wall_clock_s = started.elapsed().as_secs_f64();

    // Final hypervolume table.
    println!(
        "scenario {} ({} evaluations per run, hv reference {:.6e})",
        config.scenario, config.budget, batch.hv_reference
    );
    println!("{:<8} {:>6} {:>14} {:>14}", "method", "seed", "final_hv", "best_total_se");
    for run in &batch.runs {
        let last = run.trace.last().expect("nonempty trace");
        println!(
            "{:<8} {:>6} {:>14.6e} {:>14.6}",
            run.method.as_str(),
            run.seed,
            last.hv,
            last.best_total_se
        );
    }
    for &method in &config.methods {
        let finals: Vec<f64> = batch
            .runs
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.trace.last().expect("nonempty trace").hv)
            .collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        println!("{:<8} {:>6} {:>14.6e} (mean over seeds)", method.as_str(), "-", mean);
    }
    println!("wall clock: {wall_clock_s:.1} s");

    Ok(ExperimentOutput {
        out_dir,
        files,
        hv_reference: batch.hv_reference,
        best_total_se: batch.best_total_se,
        wall_clock_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_entries, resolve};

    fn tiny_config(out_dir: &Path) -> ExperimentConfig {
        let text = format!(
            "experiment.scenario = link1x1_powers\n\
             experiment.methods = nehvi,sobol\n\
             experiment.budget = 8\n\
             experiment.seeds = 0,1\n\
             experiment.out_dir = {}\n\
             acquisition.raw_candidates = 32\n\
             acquisition.n_restarts = 2\n\
             experiment.gp_restarts = 2\n\
             network.antennas_per_ap = 4\n",
            out_dir.display()
        );
        let entries = parse_entries(&text).unwrap();
        resolve(&entries, None).unwrap()
    }

    #[test]
    fn file_inventory_matches_contract() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let out = run_experiment(&cfg).unwrap();
        let names: Vec<String> = out
            .files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        // 2 methods x 2 seeds trace + observations, one pareto per
        // method, summary, effective config, topology snapshot.
        for expect in [
            "effective_config.cfg",
            "topology_snapshot.txt",
            "trace_nehvi_0.csv",
            "trace_nehvi_1.csv",
            "trace_sobol_0.csv",
            "trace_sobol_1.csv",
            "observations_nehvi_0.csv",
            "observations_nehvi_1.csv",
            "observations_sobol_0.csv",
            "observations_sobol_1.csv",
            "pareto_nehvi.csv",
            "pareto_sobol.csv",
            "summary.csv",
        ] {
            assert!(names.contains(&expect.to_string()), "missing {expect}");
        }
        // No stray partial files.
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let name = entry.unwrap().file_name();
            assert!(!name.to_string_lossy().contains("partial"), "{name:?}");
        }
        // The effective config reparses to the same value.
        let reparsed =
            crate::config::parse_config(&dir.path().join("effective_config.cfg")).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut cfg_a = tiny_config(dir_a.path());
        let out_a = run_experiment(&cfg_a).unwrap();
        cfg_a.out_dir = dir_b.path().display().to_string();
        let out_b = run_experiment(&cfg_a).unwrap();
        for (a, b) in out_a.files.iter().zip(&out_b.files) {
            let name_a = a.file_name().unwrap();
            assert_eq!(name_a, b.file_name().unwrap());
            if name_a.to_string_lossy().ends_with(".cfg") {
                continue; // differs by out_dir, by construction
            }
            let ca = std::fs::read(a).unwrap();
            let cb = std::fs::read(b).unwrap();
            assert_eq!(ca, cb, "{name_a:?}");
        }
    }

    #[test]
    fn budget_one_yields_single_row_traces() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.budget = 1;
        run_experiment(&cfg).unwrap();
        let trace = std::fs::read_to_string(dir.path().join("trace_sobol_0.csv")).unwrap();
        let lines: Vec<&str> = trace.lines().collect();
        assert_eq!(lines.len(), 2); // header + one row
        assert!(lines[1].starts_with("1,sobol,"));
    }
}
