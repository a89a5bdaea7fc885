//! End-to-end optimization driver: constraint-respecting decision
//! encoding, initial design, surrogate refit, acquisition maximization,
//! archive updates, and trace logging.
//!
//! Feasibility is guaranteed by construction: every cube point decodes to
//! an allocation that satisfies the power and weight constraints exactly,
//! so the optimizers only ever see a box-constrained problem.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::acquisition::{AcquisitionConfig, NehviEstimator, QehviEstimator, optimize_acquisition};
use crate::error::{Error, Result};
use crate::gp::{FitConfig, fit_per_objective};
use crate::link_metrics::{LinkStatTables, PowerAllocation, objectives};
use crate::pareto::{self, ParetoArchive};
use crate::rng;
use crate::sobol::{Scramble, SobolSeq};
use crate::topology::{NetworkConfig, NetworkTopology};

/// Which decision variables the optimizer controls; the rest are frozen
/// to seeded values drawn once per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecMode {
    /// Free uplink and downlink data powers; weights frozen.
    PowersOnly,
    /// Free time-fraction weights; powers frozen.
    WeightsOnly,
    /// Free downlink power and total data fraction; uplink power and the
    /// uplink share frozen.
    Mixed,
    /// Everything free.
    Full,
}

impl CodecMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "powers_only" => Ok(CodecMode::PowersOnly),
            "weights_only" => Ok(CodecMode::WeightsOnly),
            "mixed" => Ok(CodecMode::Mixed),
            "full" => Ok(CodecMode::Full),
            other => Err(Error::InvalidConfig(format!("unknown codec mode `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CodecMode::PowersOnly => "powers_only",
            CodecMode::WeightsOnly => "weights_only",
            CodecMode::Mixed => "mixed",
            CodecMode::Full => "full",
        }
    }
}

/// Optimization method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Nehvi,
    Ehvi,
    Sobol,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nehvi" => Ok(Method::Nehvi),
            "ehvi" => Ok(Method::Ehvi),
            "sobol" => Ok(Method::Sobol),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Nehvi => "nehvi",
            Method::Ehvi => "ehvi",
            Method::Sobol => "sobol",
        }
    }
}

/// Maps unit-cube points to feasible power allocations.
///
/// Cube coordinates come in four blocks, in order: uplink power fraction,
/// downlink power fraction, total data fraction `a`, and uplink share `b`
/// (so `w_ul = a b` and `w_dl = a (1 - b)`, which enforces
/// `w_ul + w_dl <= 1`). Raw downlink powers are rescaled per AP by
/// `min(1, budget / sum)` so the per-AP sum constraint always holds. A
/// mode frees a subset of the blocks; frozen blocks keep seeded values.
#[derive(Debug, Clone)]
pub struct DecisionCodec {
    mode: CodecMode,
    n_links: usize,
    num_ues: usize,
    num_aps: usize,
    ap_of_link: Vec<usize>,
    ue_of_link: Vec<usize>,
    p_max_ul: f64,
    p_max_dl: f64,
    /// One uplink power coordinate per UE instead of per link.
    tie_ul_power: bool,
    frozen_p_ul: Vec<f64>,
    frozen_p_dl: Vec<f64>,
    frozen_a: Vec<f64>,
    frozen_b: Vec<f64>,
}

impl DecisionCodec {
    pub fn new(topo: &NetworkTopology, mode: CodecMode, tie_ul_power: bool, seed: u64) -> Self {
        let n = topo.num_links();
        let mut stream = rng::stream(seed, "codec-frozen");
        let ul_len = if tie_ul_power { topo.config.num_ues } else { n };
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| stream.random::<f64>()).collect()
        };
        DecisionCodec {
            mode,
            n_links: n,
            num_ues: topo.config.num_ues,
            num_aps: topo.config.num_aps,
            ap_of_link: topo.links().iter().map(|l| l.ap).collect(),
            ue_of_link: topo.links().iter().map(|l| l.ue).collect(),
            p_max_ul: topo.config.p_max_ul,
            p_max_dl: topo.config.p_max_dl,
            tie_ul_power,
            frozen_p_ul: draw(ul_len),
            frozen_p_dl: draw(n),
            frozen_a: draw(n),
            frozen_b: draw(n),
        }
    }

    /// Overrides the frozen coordinate values (testing hook).
    pub fn with_frozen(
        mut self,
        p_ul: Option<Vec<f64>>,
        p_dl: Option<Vec<f64>>,
        a: Option<Vec<f64>>,
        b: Option<Vec<f64>>,
    ) -> Self {
        if let Some(v) = p_ul {
            self.frozen_p_ul = v;
        }
        if let Some(v) = p_dl {
            self.frozen_p_dl = v;
        }
        if let Some(v) = a {
            self.frozen_a = v;
        }
        if let Some(v) = b {
            self.frozen_b = v;
        }
        self
    }

    pub fn mode(&self) -> CodecMode {
        self.mode
    }

    fn ul_len(&self) -> usize {
        if self.tie_ul_power {
            self.num_ues
        } else {
            self.n_links
        }
    }

    fn free_blocks(&self) -> (bool, bool, bool, bool) {
        match self.mode {
            CodecMode::PowersOnly => (true, true, false, false),
            CodecMode::WeightsOnly => (false, false, true, true),
            CodecMode::Mixed => (false, true, true, false),
            CodecMode::Full => (true, true, true, true),
        }
    }

    /// Number of free cube dimensions.
    pub fn dimension(&self) -> usize {
        let (pu, pd, a, b) = self.free_blocks();
        let mut d = 0;
        if pu {
            d += self.ul_len();
        }
        if pd {
            d += self.n_links;
        }
        if a {
            d += self.n_links;
        }
        if b {
            d += self.n_links;
        }
        d
    }

    /// Decodes a cube point into a feasible allocation; a total map.
    pub fn decode(&self, u: &[f64]) -> PowerAllocation {
        debug_assert_eq!(u.len(), self.dimension());
        let (pu_free, pd_free, a_free, b_free) = self.free_blocks();
        let mut off = 0usize;
        let mut take = |len: usize, free: bool, frozen: &[f64]| -> Vec<f64> {
            if free {
                let out = u[off..off + len].to_vec();
                off += len;
                out
            } else {
                frozen.to_vec()
            }
        };
        let pu = take(self.ul_len(), pu_free, &self.frozen_p_ul);
        let pd = take(self.n_links, pd_free, &self.frozen_p_dl);
        let a = take(self.n_links, a_free, &self.frozen_a);
        let b = take(self.n_links, b_free, &self.frozen_b);

        let p_ul: Vec<f64> = (0..self.n_links)
            .map(|i| {
                let coord = if self.tie_ul_power {
                    pu[self.ue_of_link[i]]
                } else {
                    pu[i]
                };
                coord * self.p_max_ul
            })
            .collect();
        // Raw downlink powers, then the per-AP rescale onto the budget.
        let raw_dl: Vec<f64> = pd.iter().map(|&v| v * self.p_max_dl).collect();
        let mut ap_sum = vec![0.0; self.num_aps];
        for i in 0..self.n_links {
            ap_sum[self.ap_of_link[i]] += raw_dl[i];
        }
        let scale: Vec<f64> = ap_sum
            .iter()
            .map(|&s| if s > self.p_max_dl { self.p_max_dl / s } else { 1.0 })
            .collect();
        let p_dl: Vec<f64> = (0..self.n_links)
            .map(|i| raw_dl[i] * scale[self.ap_of_link[i]])
            .collect();
        let w_ul: Vec<f64> = (0..self.n_links).map(|i| a[i] * b[i]).collect();
        let w_dl: Vec<f64> = (0..self.n_links).map(|i| a[i] * (1.0 - b[i])).collect();
        PowerAllocation {
            p_ul,
            p_dl,
            w_ul,
            w_dl,
        }
    }

    /// Recovers the free cube coordinates from an allocation. Exact
    /// whenever no per-AP downlink rescale was binding; the rescale is a
    /// many-to-one projection otherwise.
    pub fn encode(&self, alloc: &PowerAllocation) -> Vec<f64> {
        let (pu_free, pd_free, a_free, b_free) = self.free_blocks();
        let mut u = Vec::with_capacity(self.dimension());
        if pu_free {
            if self.tie_ul_power {
                let mut per_ue = vec![0.0; self.num_ues];
                for i in 0..self.n_links {
                    per_ue[self.ue_of_link[i]] = alloc.p_ul[i] / self.p_max_ul;
                }
                u.extend(per_ue);
            } else {
                u.extend(alloc.p_ul.iter().map(|&p| p / self.p_max_ul));
            }
        }
        if pd_free {
            u.extend(alloc.p_dl.iter().map(|&p| p / self.p_max_dl));
        }
        let a_vals: Vec<f64> = (0..self.n_links)
            .map(|i| alloc.w_ul[i] + alloc.w_dl[i])
            .collect();
        if a_free {
            u.extend(a_vals.iter().copied());
        }
        if b_free {
            u.extend((0..self.n_links).map(|i| {
                if a_vals[i] > 0.0 {
                    alloc.w_ul[i] / a_vals[i]
                } else {
                    self.frozen_b[i]
                }
            }));
        }
        u
    }
}

/// One evaluated design, in evaluation order.
#[derive(Debug, Clone)]
pub struct ObservationRecord {
    pub iteration: usize,
    pub cube_point: Vec<f64>,
    pub allocation: PowerAllocation,
    pub objectives: [f64; 2],
    pub total_se: f64,
    pub min_fairness_se: f64,
    pub wall_clock_s: f64,
}

/// Convergence trace, one row per evaluation. The batch-relative columns
/// (log-HV difference, normalized total SE) are NaN until
/// [`finalize_traces`] fills them against the batch references.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iteration: usize,
    pub method: Method,
    pub hv: f64,
    pub log_hv_difference: f64,
    pub best_total_se: f64,
    pub normalized_total_se: f64,
    /// Empty normally; "fallback" when the surrogate failed and the
    /// iteration fell back to a Sobol point, "hv_above_reference" when
    /// the log-HV gap clamped.
    pub flag: String,
}

/// Scenario-level state shared by every run: the network, its link
/// statistics, and the decision codec.
pub struct ExperimentSetup {
    pub topology: NetworkTopology,
    pub tables: LinkStatTables,
    pub codec: DecisionCodec,
}

impl ExperimentSetup {
    pub fn new(config: &NetworkConfig, mode: CodecMode, tie_ul_power: bool) -> Result<Self> {
        let topology = NetworkTopology::generate(config)?;
        let tables = LinkStatTables::from_topology(&topology)?;
        // Frozen coordinates derive from the network seed so every method
        // and replicate seed optimizes the same scenario.
        let codec = DecisionCodec::new(&topology, mode, tie_ul_power, config.seed);
        Ok(ExperimentSetup {
            topology,
            tables,
            codec,
        })
    }
}

/// Per-run knobs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub budget: usize,
    pub seed: u64,
    pub acquisition: AcquisitionConfig,
    pub gp_restarts: usize,
    /// Std of optional Gaussian noise injected into the observed
    /// objectives; zero keeps the evaluation deterministic.
    pub observation_noise: f64,
}

impl RunConfig {
    pub fn new(method: Method, budget: usize, seed: u64) -> Self {
        RunConfig {
            method,
            budget,
            seed,
            acquisition: AcquisitionConfig::default(),
            gp_restarts: 8,
            observation_noise: 0.0,
        }
    }
}

/// Result of one run.
pub struct RunResult {
    pub method: Method,
    pub seed: u64,
    pub archive: ParetoArchive,
    pub trace: Vec<TraceRow>,
    pub observations: Vec<ObservationRecord>,
}

/// Initial-design size: 2d+1 capped so the budget keeps most evaluations
/// for the model-based iterations.
pub fn initial_design_size(dimension: usize, budget: usize) -> usize {
    (2 * dimension + 1).min((budget / 5).max(5)).min(budget).max(1)
}

/// Runs one method on a scenario. Deterministic per `(setup, cfg)`.
pub fn run(setup: &ExperimentSetup, cfg: &RunConfig) -> Result<RunResult> {
    cfg.acquisition.validate()?;
    if cfg.budget == 0 {
        return Err(Error::InvalidConfig("budget must be at least 1".into()));
    }
    let d = setup.codec.dimension();
    let q = cfg.acquisition.batch_size;
    let mut design_stream =
        SobolSeq::new(d, Scramble::Seeded(rng::derive_seed(cfg.seed, "design")));
    let mut noise_stream = rng::stream(cfg.seed, "observation-noise");

    let mut archive = ParetoArchive::new();
    let mut observations: Vec<ObservationRecord> = Vec::with_capacity(cfg.budget);

    let evaluate = |u: Vec<f64>,
                    archive: &mut ParetoArchive,
                    observations: &mut Vec<ObservationRecord>,
                    noise_stream: &mut rng::Stream,
                    started: Instant| {
        let alloc = setup.codec.decode(&u);
        let eval = objectives(&alloc, &setup.tables);
        let mut y = eval.objectives;
        if cfg.observation_noise > 0.0 {
            for v in y.iter_mut() {
                *v += cfg.observation_noise * noise_stream.sample::<f64, _>(StandardNormal);
            }
        }
        let iteration = observations.len() + 1;
        archive.insert(u.clone(), y.to_vec(), iteration);
        observations.push(ObservationRecord {
            iteration,
            cube_point: u,
            allocation: alloc,
            objectives: y,
            total_se: eval.total_se,
            min_fairness_se: eval.min_fairness_se,
            wall_clock_s: started.elapsed().as_secs_f64(),
        });
    };

    // Initial design, identical for every method at a given seed.
    let n_init = initial_design_size(d, cfg.budget);
    for _ in 0..n_init {
        let started = Instant::now();
        let u = design_stream.next_point();
        evaluate(u, &mut archive, &mut observations, &mut noise_stream, started);
    }

    // Reference point: componentwise nadir of the initial observations
    // minus 10% of each objective's observed range, frozen from here on.
    let mut reference = vec![0.0; 2];
    for (t, r_t) in reference.iter_mut().enumerate() {
        let lo = archive
            .entries()
            .iter()
            .map(|e| e.objectives[t])
            .fold(f64::INFINITY, f64::min);
        let hi = archive
            .entries()
            .iter()
            .map(|e| e.objectives[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut pad = 0.1 * (hi - lo);
        if !(pad > 0.0) {
            pad = (1e-3 * lo.abs()).max(1e-9);
        }
        *r_t = lo - pad;
    }
    archive.set_reference(reference);

    let mut trace: Vec<TraceRow> = Vec::with_capacity(cfg.budget);
    let mut best_total = f64::NEG_INFINITY;
    let push_trace = |trace: &mut Vec<TraceRow>,
                          observations: &[ObservationRecord],
                          best_total: &mut f64,
                          iteration: usize,
                          hv: f64,
                          flag: String| {
        *best_total = best_total.max(observations[iteration - 1].total_se);
        trace.push(TraceRow {
            iteration,
            method: cfg.method,
            hv,
            log_hv_difference: f64::NAN,
            best_total_se: *best_total,
            normalized_total_se: f64::NAN,
            flag,
        });
    };

    for i in 1..=n_init {
        let hv = archive.hypervolume_prefix(i)?;
        push_trace(&mut trace, &observations, &mut best_total, i, hv, String::new());
    }

    // Model-based (or quasi-MC) evaluations up to the budget.
    while observations.len() < cfg.budget {
        let iter_idx = observations.len() as u64;
        let remaining = cfg.budget - observations.len();
        let take = q.min(remaining);
        let started = Instant::now();

        let (batch, flag): (Vec<Vec<f64>>, String) = match cfg.method {
            Method::Sobol => (
                (0..take).map(|_| design_stream.next_point()).collect(),
                String::new(),
            ),
            Method::Ehvi | Method::Nehvi => {
                let x: Vec<Vec<f64>> =
                    archive.entries().iter().map(|e| e.point.clone()).collect();
                let y: Vec<Vec<f64>> = archive
                    .entries()
                    .iter()
                    .map(|e| e.objectives.clone())
                    .collect();
                let fit_cfg = FitConfig {
                    restarts: cfg.gp_restarts.max(1),
                    ..FitConfig::default()
                };
                let models = fit_per_objective(
                    &x,
                    &y,
                    &fit_cfg,
                    rng::derive_seed(cfg.seed, "gp-refit") ^ iter_idx,
                );
                let r = archive.reference().expect("reference set after init");
                let base_seed = rng::derive_seed(cfg.seed, "acq-base") ^ iter_idx;
                let opt_seed = rng::derive_seed(cfg.seed, "acq-opt") ^ iter_idx;
                let mut acq_cfg = cfg.acquisition.clone();
                acq_cfg.batch_size = take;
                let picked: Option<Vec<Vec<f64>>> = match models {
                    Err(_) => None,
                    Ok(models) => match cfg.method {
                        Method::Ehvi => QehviEstimator::new(
                            &models,
                            &archive.front_objectives(),
                            r,
                            &acq_cfg,
                            base_seed,
                        )
                        .ok()
                        .and_then(|est| {
                            let best = optimize_acquisition(
                                &|c: &[Vec<f64>]| est.eval(c),
                                d,
                                &acq_cfg,
                                opt_seed,
                            );
                            est.eval(&best).is_finite().then_some(best)
                        }),
                        Method::Nehvi => NehviEstimator::new(&models, &x, r, &acq_cfg, base_seed)
                            .ok()
                            .and_then(|est| {
                                let best = optimize_acquisition(
                                    &|c: &[Vec<f64>]| est.eval(c),
                                    d,
                                    &acq_cfg,
                                    opt_seed,
                                );
                                est.eval(&best).is_finite().then_some(best)
                            }),
                        Method::Sobol => unreachable!(),
                    },
                };
                match picked {
                    Some(batch) => (batch, String::new()),
                    None => (
                        (0..take).map(|_| design_stream.next_point()).collect(),
                        "fallback".to_string(),
                    ),
                }
            }
        };

        for (j, u) in batch.into_iter().enumerate() {
            evaluate(u, &mut archive, &mut observations, &mut noise_stream, started);
            let iteration = observations.len();
            let hv = archive.hypervolume()?;
            let row_flag = if j == 0 { flag.clone() } else { String::new() };
            push_trace(&mut trace, &observations, &mut best_total, iteration, hv, row_flag);
        }
    }

    Ok(RunResult {
        method: cfg.method,
        seed: cfg.seed,
        archive,
        trace,
        observations,
    })
}

/// Fills the batch-relative trace columns: log-HV difference against the
/// best hypervolume any run in the batch reached, and total SE normalized
/// by the batch-best total SE. Returns `(hv_reference, best_total_se)`.
pub fn finalize_traces(runs: &mut [RunResult]) -> (f64, f64) {
    let hv_reference = runs
        .iter()
        .flat_map(|r| r.trace.iter().map(|t| t.hv))
        .fold(0.0f64, f64::max);
    let best_total = runs
        .iter()
        .flat_map(|r| r.trace.iter().map(|t| t.best_total_se))
        .fold(f64::NEG_INFINITY, f64::max);
    for run in runs.iter_mut() {
        for row in run.trace.iter_mut() {
            let (v, clamped) = pareto::log_hv_difference(hv_reference, row.hv);
            row.log_hv_difference = v;
            if clamped && row.flag.is_empty() {
                row.flag = "hv_above_reference".to_string();
            }
            row.normalized_total_se = if best_total > 0.0 {
                row.best_total_se / best_total
            } else {
                0.0
            };
        }
    }
    (hv_reference, best_total)
}

/// Per-iteration aggregate across seeds for one method.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub method: Method,
    pub iteration: usize,
    pub hv_mean: f64,
    pub hv_std: f64,
    pub hv_min: f64,
    pub hv_max: f64,
    pub log_hv_diff_mean: f64,
    pub log_hv_diff_std: f64,
    pub log_hv_diff_min: f64,
    pub log_hv_diff_max: f64,
    pub norm_se_mean: f64,
    pub norm_se_std: f64,
    pub norm_se_min: f64,
    pub norm_se_max: f64,
}

/// Everything a replicated experiment produces: the per-seed runs with
/// finalized traces, the batch references, and the aggregates.
pub struct BatchResult {
    pub runs: Vec<RunResult>,
    pub hv_reference: f64,
    pub best_total_se: f64,
    pub aggregated: Vec<AggregateRow>,
}

/// Runs every (method, seed) combination and aggregates per-iteration
/// mean and spread bands across seeds.
pub fn replicate(
    setup: &ExperimentSetup,
    base: &RunConfig,
    methods: &[Method],
    seeds: &[u64],
) -> Result<BatchResult> {
    if seeds.is_empty() || methods.is_empty() {
        return Err(Error::InvalidConfig(
            "replicate needs at least one method and one seed".into(),
        ));
    }
    let mut runs: Vec<RunResult> = Vec::with_capacity(methods.len() * seeds.len());
    for &method in methods {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.method = method;
            cfg.seed = seed;
            runs.push(run(setup, &cfg)?);
        }
    }
    let (hv_reference, best_total_se) = finalize_traces(&mut runs);
    let aggregated = aggregate(&runs, methods);
    Ok(BatchResult {
        runs,
        hv_reference,
        best_total_se,
        aggregated,
    })
}

/// Recomputes aggregates from finalized per-seed traces.
pub fn aggregate(runs: &[RunResult], methods: &[Method]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &method in methods {
        let traces: Vec<&Vec<TraceRow>> = runs
            .iter()
            .filter(|r| r.method == method)
            .map(|r| &r.trace)
            .collect();
        if traces.is_empty() {
            continue;
        }
        let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
        for i in 0..len {
            let stat = |pick: &dyn Fn(&TraceRow) -> f64| -> (f64, f64, f64, f64) {
                let vals: Vec<f64> = traces.iter().map(|t| pick(&t[i])).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = if vals.len() > 1 {
                    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (mean, var.sqrt(), lo, hi)
            };
            let (hv_mean, hv_std, hv_min, hv_max) = stat(&|t| t.hv);
            let (lg_mean, lg_std, lg_min, lg_max) = stat(&|t| t.log_hv_difference);
            let (ns_mean, ns_std, ns_min, ns_max) = stat(&|t| t.normalized_total_se);
            out.push(AggregateRow {
                method,
                iteration: i + 1,
                hv_mean,
                hv_std,
                hv_min,
                hv_max,
                log_hv_diff_mean: lg_mean,
                log_hv_diff_std: lg_std,
                log_hv_diff_min: lg_min,
                log_hv_diff_max: lg_max,
                norm_se_mean: ns_mean,
                norm_se_std: ns_std,
                norm_se_min: ns_min,
                norm_se_max: ns_max,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_setup(mode: CodecMode) -> ExperimentSetup {
        let mut c = NetworkConfig::new(2, 2, 2);
        c.area_side = 800.0;
        c.seed = 5;
        ExperimentSetup::new(&c, mode, false).unwrap()
    }

    fn link1x1_setup(mode: CodecMode, antennas: usize) -> ExperimentSetup {
        let mut c = NetworkConfig::new(1, 1, antennas);
        c.area_side = 500.0;
        c.seed = 7;
        ExperimentSetup::new(&c, mode, false).unwrap()
    }

    #[test]
    fn codec_dimensions_per_mode() {
        let setup = small_setup(CodecMode::Full);
        let n = setup.topology.num_links();
        assert_eq!(setup.codec.dimension(), 4 * n);
        let topo = &setup.topology;
        assert_eq!(
            DecisionCodec::new(topo, CodecMode::PowersOnly, false, 1).dimension(),
            2 * n
        );
        assert_eq!(
            DecisionCodec::new(topo, CodecMode::WeightsOnly, false, 1).dimension(),
            2 * n
        );
        assert_eq!(
            DecisionCodec::new(topo, CodecMode::Mixed, false, 1).dimension(),
            2 * n
        );
        // Tied uplink power: one coordinate per UE.
        assert_eq!(
            DecisionCodec::new(topo, CodecMode::PowersOnly, true, 1).dimension(),
            topo.config.num_ues + n
        );
    }

    #[test]
    fn decode_zeros_and_saturation() {
        let setup = small_setup(CodecMode::Full);
        let d = setup.codec.dimension();
        let zero = setup.codec.decode(&vec![0.0; d]);
        assert!(zero.p_ul.iter().all(|&p| p == 0.0));
        assert!(zero.p_dl.iter().all(|&p| p == 0.0));
        assert!(zero.w_ul.iter().all(|&w| w == 0.0));
        assert!(zero.w_dl.iter().all(|&w| w == 0.0));

        // All ones: two links per AP, so each downlink power lands at
        // exactly half the AP budget and the sum meets it with equality.
        let one = setup.codec.decode(&vec![1.0; d]);
        let mut per_ap = vec![0.0; setup.topology.config.num_aps];
        for (i, &ap) in setup.codec.ap_of_link.iter().enumerate() {
            per_ap[ap] += one.p_dl[i];
            assert_relative_eq!(one.p_dl[i], setup.topology.config.p_max_dl / 2.0);
        }
        for &s in &per_ap {
            assert_relative_eq!(s, setup.topology.config.p_max_dl);
        }
        one.validate(&setup.topology).unwrap();
    }

    #[test]
    fn decode_always_feasible() {
        for mode in [
            CodecMode::PowersOnly,
            CodecMode::WeightsOnly,
            CodecMode::Mixed,
            CodecMode::Full,
        ] {
            let setup = small_setup(mode);
            let d = setup.codec.dimension();
            let mut stream = rng::stream(9, "audit");
            for _ in 0..20_000 {
                let u: Vec<f64> = (0..d).map(|_| stream.random::<f64>()).collect();
                let alloc = setup.codec.decode(&u);
                alloc.validate(&setup.topology).unwrap();
            }
        }
    }

    #[test]
    fn encode_round_trips_where_rescale_is_slack() {
        let setup = small_setup(CodecMode::Full);
        let d = setup.codec.dimension();
        let n = setup.topology.num_links();
        let mut stream = rng::stream(11, "roundtrip");
        for _ in 0..200 {
            let mut u: Vec<f64> = (0..d).map(|_| stream.random::<f64>()).collect();
            // Keep the per-AP downlink sums inside the budget: with two
            // links per AP, raw fractions below 0.5 never rescale.
            for v in u[n..2 * n].iter_mut() {
                *v *= 0.49;
            }
            let alloc = setup.codec.decode(&u);
            let back = setup.codec.encode(&alloc);
            for (x, y) in u.iter().zip(&back) {
                assert_relative_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tied_uplink_power_shares_coordinates() {
        let setup = small_setup(CodecMode::Full);
        let codec = DecisionCodec::new(&setup.topology, CodecMode::PowersOnly, true, 3);
        let d = codec.dimension();
        let mut u = vec![0.5; d];
        u[0] = 0.25; // UE 0's uplink fraction
        u[1] = 0.75; // UE 1's uplink fraction
        let alloc = codec.decode(&u);
        for (i, link) in setup.topology.links().iter().enumerate() {
            let expect = if link.ue == 0 { 0.25 } else { 0.75 };
            assert_relative_eq!(alloc.p_ul[i], expect * setup.topology.config.p_max_ul);
        }
    }

    #[test]
    fn initial_design_sizing() {
        assert_eq!(initial_design_size(2, 50), 5); // 2d+1 = 5 under the cap
        assert_eq!(initial_design_size(100, 50), 10); // capped at budget/5
        assert_eq!(initial_design_size(100, 8), 5); // floor of 5
        assert_eq!(initial_design_size(100, 3), 3); // never above budget
        assert_eq!(initial_design_size(1, 50), 3); // 2d+1 = 3
    }

    #[test]
    fn sobol_run_archive_is_front_of_raw_evaluations() {
        let setup = link1x1_setup(CodecMode::PowersOnly, 4);
        let cfg = RunConfig::new(Method::Sobol, 24, 3);
        let result = run(&setup, &cfg).unwrap();
        assert_eq!(result.observations.len(), 24);
        let pts: Vec<Vec<f64>> = result
            .observations
            .iter()
            .map(|o| o.objectives.to_vec())
            .collect();
        let mut expect: Vec<Vec<f64>> = pareto::pareto_front_indices(&pts)
            .into_iter()
            .map(|i| pts[i].clone())
            .collect();
        let mut got = result.archive.front_objectives();
        let key = |v: &Vec<f64>| (v[0].to_bits(), v[1].to_bits());
        expect.sort_by_key(key);
        got.sort_by_key(key);
        assert_eq!(got, expect);
    }

    #[test]
    fn monotone_single_effective_dimension_reaches_boundary() {
        // Freeze the weights so only the uplink matters: b = 1 makes
        // w_dl = 0, so objective 1 is identically zero and objective 0 is
        // monotone in the single effective coordinate p_ul.
        let base = link1x1_setup(CodecMode::PowersOnly, 4);
        let codec = DecisionCodec::new(&base.topology, CodecMode::PowersOnly, false, 0)
            .with_frozen(None, None, Some(vec![1.0]), Some(vec![1.0]));
        let setup = ExperimentSetup { codec, ..base };
        let cfg = RunConfig::new(Method::Nehvi, 30, 5);
        let result = run(&setup, &cfg).unwrap();
        let best = result
            .observations
            .iter()
            .max_by(|a, b| a.objectives[0].partial_cmp(&b.objectives[0]).unwrap())
            .unwrap();
        assert!(
            best.cube_point[0] > 0.95,
            "best uplink fraction {:?}",
            best.cube_point
        );
    }

    #[test]
    fn traces_are_bit_identical_across_reruns() {
        let setup = small_setup(CodecMode::Full);
        for method in [Method::Sobol, Method::Ehvi, Method::Nehvi] {
            let mut cfg = RunConfig::new(method, 14, 11);
            cfg.acquisition.raw_candidates = 64;
            cfg.acquisition.n_restarts = 2;
            cfg.gp_restarts = 2;
            let a = run(&setup, &cfg).unwrap();
            let b = run(&setup, &cfg).unwrap();
            assert_eq!(a.trace.len(), b.trace.len());
            for (x, y) in a.trace.iter().zip(&b.trace) {
                assert_eq!(x.hv.to_bits(), y.hv.to_bits(), "{method:?}");
                assert_eq!(
                    x.best_total_se.to_bits(),
                    y.best_total_se.to_bits(),
                    "{method:?}"
                );
            }
            for (x, y) in a.observations.iter().zip(&b.observations) {
                assert_eq!(x.cube_point, y.cube_point);
            }
        }
    }

    #[test]
    fn archive_hv_nondecreasing_and_budget_respected() {
        let setup = small_setup(CodecMode::Full);
        for method in [Method::Sobol, Method::Nehvi] {
            let mut cfg = RunConfig::new(method, 18, 2);
            cfg.acquisition.raw_candidates = 64;
            cfg.acquisition.n_restarts = 2;
            cfg.gp_restarts = 2;
            let result = run(&setup, &cfg).unwrap();
            assert_eq!(result.trace.len(), 18);
            let mut last = 0.0;
            for row in &result.trace {
                assert!(row.hv >= last - 1e-12, "{method:?}");
                last = row.hv;
            }
        }
    }

    #[test]
    fn budget_of_one_produces_single_row() {
        let setup = link1x1_setup(CodecMode::PowersOnly, 2);
        let cfg = RunConfig::new(Method::Sobol, 1, 1);
        let result = run(&setup, &cfg).unwrap();
        assert_eq!(result.trace.len(), 1);
        assert!(result.trace[0].hv > 0.0);
    }

    #[test]
    fn observation_noise_exercises_noisy_path() {
        let setup = link1x1_setup(CodecMode::PowersOnly, 2);
        let mut cfg = RunConfig::new(Method::Nehvi, 12, 4);
        cfg.observation_noise = 0.05;
        cfg.acquisition.raw_candidates = 32;
        cfg.acquisition.n_restarts = 2;
        cfg.gp_restarts = 2;
        let result = run(&setup, &cfg).unwrap();
        // Noisy observations differ from the deterministic evaluation.
        assert!(
            result
                .observations
                .iter()
                .any(|o| (o.objectives[0] + o.objectives[1] - o.total_se).abs() > 1e-9)
        );
    }

    #[test]
    fn replicate_zero_spread_for_identical_seeds() {
        let setup = link1x1_setup(CodecMode::PowersOnly, 2);
        let mut base = RunConfig::new(Method::Sobol, 10, 0);
        base.acquisition.raw_candidates = 32;
        let batch = replicate(&setup, &base, &[Method::Sobol], &[3, 3]).unwrap();
        for row in &batch.aggregated {
            assert_eq!(row.hv_std, 0.0);
            assert_eq!(row.hv_min, row.hv_max);
        }
    }

    #[test]
    fn replicate_normalized_se_in_unit_interval_and_reaggregates() {
        let setup = small_setup(CodecMode::Full);
        let mut base = RunConfig::new(Method::Sobol, 12, 0);
        base.acquisition.raw_candidates = 32;
        base.acquisition.n_restarts = 2;
        base.gp_restarts = 2;
        let methods = [Method::Sobol, Method::Nehvi];
        let batch = replicate(&setup, &base, &methods, &[1, 2, 3]).unwrap();
        for row in &batch.aggregated {
            assert!(row.norm_se_mean >= 0.0 && row.norm_se_max <= 1.0 + 1e-12);
        }
        // Reaggregation from the finalized per-seed traces is identical.
        let again = aggregate(&batch.runs, &methods);
        assert_eq!(batch.aggregated.len(), again.len());
        for (a, b) in batch.aggregated.iter().zip(&again) {
            assert_eq!(a.hv_mean.to_bits(), b.hv_mean.to_bits());
            assert_eq!(a.norm_se_mean.to_bits(), b.norm_se_mean.to_bits());
        }
        // Every method saw the same evaluation count.
        let counts: Vec<usize> = batch.runs.iter().map(|r| r.observations.len()).collect();
        assert!(counts.iter().all(|&c| c == counts[0]));
    }

    #[test]
    fn log_hv_difference_monotone_after_finalize() {
        let setup = small_setup(CodecMode::Full);
        let mut base = RunConfig::new(Method::Sobol, 16, 0);
        base.acquisition.raw_candidates = 32;
        let batch = replicate(&setup, &base, &[Method::Sobol], &[5, 6]).unwrap();
        for run in &batch.runs {
            let mut last = f64::INFINITY;
            for row in &run.trace {
                assert!(row.log_hv_difference <= last + 1e-12);
                last = row.log_hv_difference;
                assert!(row.log_hv_difference.is_finite());
                assert!(row.normalized_total_se.is_finite());
            }
        }
    }
}
