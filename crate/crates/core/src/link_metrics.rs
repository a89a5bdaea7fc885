//! Closed-form link metrics and their Monte-Carlo realization oracle.
//!
//! The closed-form path reduces each SINR to trace products of the link
//! covariances with two cached per-link matrices: `G = F^-1 R` and
//! `B = R F^-1 R`, where `F` is the pilot-correlated received-signal
//! covariance. Every trace the four interference sums need is precomputed
//! once per topology in [`LinkStatTables`], so evaluating an allocation is
//! O(n_links^2) scalar work.
//!
//! The Monte-Carlo path draws actual channel realizations, runs pilot
//! training, MMSE estimation, and maximum-ratio combining/precoding, and
//! averages instantaneous rates. It exists to sanity-check the closed
//! form; with many antennas the two agree within Monte-Carlo error.

use nalgebra::{Cholesky, Dyn};

use crate::cmat::{self, C64, CMat, CVec};
use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::topology::{CovarianceSet, NetworkTopology, PilotBook};

/// Transmission direction; uplink and downlink share the SINR shape but
/// differ in which end's statistics normalize the interference terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

/// Per-link data powers and time-fraction weights, aligned with the
/// topology's canonical link order.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p_ul: Vec<f64>,
    pub p_dl: Vec<f64>,
    pub w_ul: Vec<f64>,
    pub w_dl: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(n_links: usize) -> Self {
        PowerAllocation {
            p_ul: vec![0.0; n_links],
            p_dl: vec![0.0; n_links],
            w_ul: vec![0.0; n_links],
            w_dl: vec![0.0; n_links],
        }
    }

    pub fn len(&self) -> usize {
        self.p_ul.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_ul.is_empty()
    }

    /// Checks the power-control constraints: per-link uplink budget,
    /// per-AP downlink sum budget, and weight fractions with
    /// `w_ul + w_dl <= 1`.
    pub fn validate(&self, topo: &NetworkTopology) -> Result<()> {
        let n = topo.num_links();
        if self.p_ul.len() != n
            || self.p_dl.len() != n
            || self.w_ul.len() != n
            || self.w_dl.len() != n
        {
            return Err(Error::InvalidInput(format!(
                "allocation length mismatch: expected {n} links"
            )));
        }
        let tol = 1e-9;
        for i in 0..n {
            if self.p_ul[i] < -tol || self.p_ul[i] > topo.config.p_max_ul * (1.0 + tol) {
                return Err(Error::InvalidInput(format!(
                    "p_ul[{i}] = {} outside [0, {}]",
                    self.p_ul[i], topo.config.p_max_ul
                )));
            }
            if self.p_dl[i] < -tol {
                return Err(Error::InvalidInput(format!("p_dl[{i}] negative")));
            }
            if self.w_ul[i] < -tol || self.w_dl[i] < -tol {
                return Err(Error::InvalidInput(format!("negative weight on link {i}")));
            }
            if self.w_ul[i] + self.w_dl[i] > 1.0 + tol {
                return Err(Error::InvalidInput(format!(
                    "w_ul + w_dl = {} > 1 on link {i}",
                    self.w_ul[i] + self.w_dl[i]
                )));
            }
        }
        let mut per_ap = vec![0.0; topo.config.num_aps];
        for (i, link) in topo.links().iter().enumerate() {
            per_ap[link.ap] += self.p_dl[i];
        }
        for (ap, &sum) in per_ap.iter().enumerate() {
            if sum > topo.config.p_max_dl * (1.0 + tol) {
                return Err(Error::InvalidInput(format!(
                    "downlink sum {} at AP {ap} exceeds budget {}",
                    sum, topo.config.p_max_dl
                )));
            }
        }
        Ok(())
    }
}

/// Pilot-correlated received-signal covariances `F` with cached Cholesky
/// factors. `F` depends on a link only through its pilot, so one matrix
/// per pilot in use is stored and looked up per link.
pub struct PrecodingStats {
    pilot_f: Vec<CMat>,
    pilot_chol: Vec<Cholesky<C64, Dyn>>,
    pilot_of_link: Vec<usize>,
    pub tau_p: f64,
    pub sigma2_ul: f64,
}

impl PrecodingStats {
    /// F_{l,k} = sum over connected links (i,j) of
    /// R_{i,j} |psi_{i,j}^H psi_{l,k}|^2 + sigma_ul^2 ||psi_{l,k}||^2 I.
    /// With an orthogonal book the sum collapses to the links sharing the
    /// pilot, with weight tau_p^2.
    pub fn compute(covs: &CovarianceSet, pilots: &PilotBook, sigma2_ul: f64) -> Result<Self> {
        let m = covs.antennas;
        let tau_p = pilots.norm_sq();
        let n_pilots = pilots.pilot_len();
        let mut pilot_f: Vec<CMat> = vec![CMat::zeros(m, m); n_pilots];
        for link in 0..covs.len() {
            let p = pilots.pilot_of(link);
            pilot_f[p] += covs.matrix(link) * C64::new(tau_p * tau_p, 0.0);
        }
        for f in pilot_f.iter_mut() {
            for d in 0..m {
                f[(d, d)] += C64::new(sigma2_ul * tau_p, 0.0);
            }
        }
        let pilot_chol = pilot_f
            .iter()
            .map(cmat::cholesky_jittered)
            .collect::<Result<Vec<_>>>()?;
        Ok(PrecodingStats {
            pilot_f,
            pilot_chol,
            pilot_of_link: pilots.assignment.clone(),
            tau_p,
            sigma2_ul,
        })
    }

    pub fn f_matrix(&self, link: usize) -> &CMat {
        &self.pilot_f[self.pilot_of_link[link]]
    }

    /// Solves F x = rhs for the link's pilot group.
    pub fn solve(&self, link: usize, rhs: &CMat) -> CMat {
        self.pilot_chol[self.pilot_of_link[link]].solve(rhs)
    }

    pub fn solve_vec(&self, link: usize, rhs: &CVec) -> CVec {
        self.pilot_chol[self.pilot_of_link[link]].solve(rhs)
    }
}

/// The additive pieces of one link's SINR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrBreakdown {
    pub array_gain: f64,
    pub coherent_interference: f64,
    pub incoherent_interference: f64,
    pub noise: f64,
}

impl SinrBreakdown {
    pub fn sinr(&self) -> f64 {
        self.array_gain / (self.coherent_interference + self.incoherent_interference + self.noise)
    }
}

/// Per-link spectral efficiencies with the aggregates the objectives use.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEfficiency {
    pub per_link_ul: Vec<f64>,
    pub per_link_dl: Vec<f64>,
    pub sum_ul: f64,
    pub sum_dl: f64,
    pub sum_total: f64,
    /// min over links of (UL + DL) rate: the max-min fairness objective.
    pub min_link_total: f64,
}

/// All trace products the closed-form SINR needs, precomputed per
/// topology. Immutable and shareable across threads.
pub struct LinkStatTables {
    n: usize,
    pub tau_p: f64,
    pub prelog: f64,
    pub sigma2_ul: f64,
    pub sigma2_dl: f64,
    /// t[v] = Tr(R_v F_v^-1 R_v).
    t: Vec<f64>,
    /// incoh_by_victim[v * n + a] = Tr(R_a B_v) with B_v = R_v F_v^-1 R_v
    /// (contiguous over interferers `a` for the uplink victim `v`).
    incoh_by_victim: Vec<f64>,
    /// Transpose layout: incoh_by_source[v * n + b] = Tr(R_v B_b)
    /// (contiguous over sources `b` for the downlink victim `v`).
    incoh_by_source: Vec<f64>,
    /// Same-pilot links per link, excluding the link itself; ascending.
    pilot_peers: Vec<Vec<usize>>,
    /// coh[v], aligned with pilot_peers[v]: |Tr(R_peer G_v)|^2 where
    /// G_v = F_v^-1 R_v (uplink coherent numerator, normalized by t[v]).
    coh: Vec<Vec<f64>>,
    /// coh_t[v], aligned with pilot_peers[v]: |Tr(R_v G_peer)|^2
    /// (downlink coherent numerator, normalized by t[peer]).
    coh_t: Vec<Vec<f64>>,
    /// AP index per link, for per-AP aggregation.
    pub ap_of_link: Vec<usize>,
}

struct Column {
    t: f64,
    incoh: Vec<f64>,
    coh: Vec<f64>,
}

impl LinkStatTables {
    pub fn compute(
        topo: &NetworkTopology,
        covs: &CovarianceSet,
        pilots: &PilotBook,
        stats: &PrecodingStats,
    ) -> Result<Self> {
        let n = covs.len();
        let tau_p = pilots.norm_sq();
        let prelog = 1.0 - tau_p / topo.config.coherence_len as f64;

        let pilot_peers: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                (0..n)
                    .filter(|&a| a != v && pilots.same_pilot(a, v))
                    .collect()
            })
            .collect();

        // One pass per link v: G_v = F_v^-1 R_v, B_v = R_v G_v, then the
        // trace products against every other link's covariance.
        let columns: Vec<Column> = par::par_map_indexed(n, |v| {
            let r_v = covs.matrix(v);
            let g_v = stats.solve(v, r_v);
            let b_v = r_v * &g_v;
            let t = cmat::trace_re(&b_v);
            let incoh: Vec<f64> = (0..n)
                .map(|a| cmat::herm_trace_inner(covs.matrix(a), &b_v))
                .collect();
            let coh: Vec<f64> = pilot_peers[v]
                .iter()
                .map(|&a| cmat::frob_inner(covs.matrix(a), &g_v).norm_sqr())
                .collect();
            Column { t, incoh, coh }
        });

        let mut t = Vec::with_capacity(n);
        let mut incoh_by_victim = vec![0.0; n * n];
        let mut coh = Vec::with_capacity(n);
        let mut coh_t: Vec<Vec<f64>> = pilot_peers
            .iter()
            .map(|peers| vec![0.0; peers.len()])
            .collect();
        for (v, col) in columns.into_iter().enumerate() {
            if !col.t.is_finite() || col.t <= 0.0 {
                return Err(Error::NumericalError(format!(
                    "nonpositive estimation trace t[{v}] = {}",
                    col.t
                )));
            }
            incoh_by_victim[v * n..(v + 1) * n].copy_from_slice(&col.incoh);
            t.push(col.t);
            // |Tr(R_a G_v)|^2 is the downlink coherent numerator of victim
            // a against source v; scatter it to a's list at v's slot.
            for (peer_pos, &a) in pilot_peers[v].iter().enumerate() {
                let pos_in_a = pilot_peers[a]
                    .binary_search(&v)
                    .expect("pilot peer relation is symmetric");
                coh_t[a][pos_in_a] = col.coh[peer_pos];
            }
            coh.push(col.coh);
        }
        let mut incoh_by_source = vec![0.0; n * n];
        for v in 0..n {
            for a in 0..n {
                incoh_by_source[a * n + v] = incoh_by_victim[v * n + a];
            }
        }
        Ok(LinkStatTables {
            n,
            tau_p,
            prelog,
            sigma2_ul: stats.sigma2_ul,
            sigma2_dl: topo.config.noise_power_dl,
            t,
            incoh_by_victim,
            incoh_by_source,
            pilot_peers,
            coh,
            coh_t,
            ap_of_link: topo.links().iter().map(|l| l.ap).collect(),
        })
    }

    pub fn num_links(&self) -> usize {
        self.n
    }

    /// Tr(R_v F_v^-1 R_v).
    pub fn estimation_trace(&self, link: usize) -> f64 {
        self.t[link]
    }

    /// Full topology pipeline: covariances, pilot book, F factors, tables.
    pub fn from_topology(topo: &NetworkTopology) -> Result<Self> {
        let covs = CovarianceSet::from_topology(topo)?;
        let pilots = crate::topology::assign_pilots(topo, &covs, topo.config.pilot_len)?;
        let stats = PrecodingStats::compute(&covs, &pilots, topo.config.noise_power_ul)?;
        LinkStatTables::compute(topo, &covs, &pilots, &stats)
    }
}

/// Closed-form SINR decomposition for one link and direction.
pub fn sinr(
    link: usize,
    direction: Direction,
    alloc: &PowerAllocation,
    tables: &LinkStatTables,
) -> SinrBreakdown {
    let n = tables.n;
    let v = link;
    let tau_sq = tables.tau_p * tables.tau_p;
    let (p_own, powers, noise) = match direction {
        Direction::Uplink => (alloc.p_ul[v], &alloc.p_ul, tables.sigma2_ul),
        Direction::Downlink => (alloc.p_dl[v], &alloc.p_dl, tables.sigma2_dl),
    };
    let array_gain = p_own * tau_sq * tables.t[v];

    let mut coherent = 0.0;
    match direction {
        Direction::Uplink => {
            for (pos, &a) in tables.pilot_peers[v].iter().enumerate() {
                coherent += powers[a] * tables.coh[v][pos];
            }
            coherent *= tau_sq / tables.t[v];
        }
        Direction::Downlink => {
            for (pos, &a) in tables.pilot_peers[v].iter().enumerate() {
                coherent += powers[a] * tables.coh_t[v][pos] / tables.t[a];
            }
            coherent *= tau_sq;
        }
    }

    let mut incoherent = 0.0;
    match direction {
        Direction::Uplink => {
            let row = &tables.incoh_by_victim[v * n..(v + 1) * n];
            for a in 0..n {
                if a != v {
                    incoherent += powers[a] * row[a];
                }
            }
            incoherent /= tables.t[v];
        }
        Direction::Downlink => {
            let row = &tables.incoh_by_source[v * n..(v + 1) * n];
            for b in 0..n {
                if b != v {
                    incoherent += powers[b] * row[b] / tables.t[b];
                }
            }
        }
    }

    SinrBreakdown {
        array_gain,
        coherent_interference: coherent,
        incoherent_interference: incoherent,
        noise,
    }
}

/// Ergodic spectral efficiency of one link:
/// `w (1 - tau_p / tau_c) log2(1 + SINR)`, bits/s/Hz.
pub fn ergodic_se(
    link: usize,
    direction: Direction,
    alloc: &PowerAllocation,
    tables: &LinkStatTables,
) -> f64 {
    let w = match direction {
        Direction::Uplink => alloc.w_ul[link],
        Direction::Downlink => alloc.w_dl[link],
    };
    if w == 0.0 {
        return 0.0;
    }
    w * tables.prelog * (1.0 + sinr(link, direction, alloc, tables).sinr()).log2()
}

/// Evaluates every link in both directions. Per-link terms run in
/// parallel; the reduction is an ordered sequential sum so totals are
/// bit-reproducible.
pub fn spectral_efficiency(alloc: &PowerAllocation, tables: &LinkStatTables) -> SpectralEfficiency {
    let n = tables.n;
    let per_link: Vec<(f64, f64)> = par::par_map_indexed(n, |v| {
        (
            ergodic_se(v, Direction::Uplink, alloc, tables),
            ergodic_se(v, Direction::Downlink, alloc, tables),
        )
    });
    let per_link_ul: Vec<f64> = per_link.iter().map(|x| x.0).collect();
    let per_link_dl: Vec<f64> = per_link.iter().map(|x| x.1).collect();
    let sum_ul: f64 = per_link_ul.iter().sum();
    let sum_dl: f64 = per_link_dl.iter().sum();
    let min_link_total = per_link
        .iter()
        .map(|&(u, d)| u + d)
        .fold(f64::INFINITY, f64::min);
    SpectralEfficiency {
        per_link_ul,
        per_link_dl,
        sum_ul,
        sum_dl,
        sum_total: sum_ul + sum_dl,
        min_link_total,
    }
}

/// The two-objective vector (sum uplink SE, sum downlink SE) plus scalar
/// diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub objectives: [f64; 2],
    pub total_se: f64,
    pub min_fairness_se: f64,
}

pub fn objectives(alloc: &PowerAllocation, tables: &LinkStatTables) -> ObjectiveEval {
    let se = spectral_efficiency(alloc, tables);
    ObjectiveEval {
        objectives: [se.sum_ul, se.sum_dl],
        total_se: se.sum_total,
        min_fairness_se: se.min_link_total,
    }
}

/// Monte-Carlo spectral-efficiency estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSeEstimate {
    pub se: f64,
    pub std_error: f64,
    pub n_realizations: usize,
}

/// Channel-realization oracle for one link: pilot training, MMSE
/// estimation, and maximum-ratio combining (UL) or precoding (DL), with
/// the instantaneous rate averaged over realizations.
#[allow(clippy::too_many_arguments)]
pub fn mc_validate_se<R: rand::Rng>(
    link: usize,
    direction: Direction,
    alloc: &PowerAllocation,
    covs: &CovarianceSet,
    pilots: &PilotBook,
    stats: &PrecodingStats,
    tables: &LinkStatTables,
    n_realizations: usize,
    rng: &mut R,
) -> Result<McSeEstimate> {
    if n_realizations == 0 {
        return Err(Error::InvalidConfig(
            "mc_validate_se needs at least one realization".into(),
        ));
    }
    let n = covs.len();
    let m = covs.antennas;
    let tau_p = pilots.norm_sq();
    let chols: Vec<CMat> = (0..n)
        .map(|i| Ok(cmat::cholesky_jittered(covs.matrix(i))?.l()))
        .collect::<Result<Vec<_>>>()?;

    let w = match direction {
        Direction::Uplink => alloc.w_ul[link],
        Direction::Downlink => alloc.w_dl[link],
    };
    let base_seed: u64 = rng.random();
    let vals: Vec<f64> = par::par_map_indexed(n_realizations, |real| {
        let mut stream = rng::indexed_stream(base_seed, "mc-realization", real as u64);
        // Channels for every connected link.
        let h: Vec<CVec> = (0..n)
            .map(|i| cmat::correlated_cn(&chols[i], &mut stream))
            .collect();
        // Pilot observation projected on a link's pilot:
        // Y psi = tau_p * sum over same-pilot links of h + projected noise,
        // where the projected noise is CN(0, sigma_ul^2 tau_p I).
        let noise_scale = (stats.sigma2_ul * tau_p).sqrt();
        let estimate = |v: usize, stream: &mut rng::Stream| -> CVec {
            let mut ypsi = cmat::standard_cn(m, stream) * C64::new(noise_scale, 0.0);
            for (j, h_j) in h.iter().enumerate() {
                if pilots.same_pilot(j, v) {
                    ypsi += h_j * C64::new(tau_p, 0.0);
                }
            }
            covs.matrix(v) * stats.solve_vec(v, &ypsi) * C64::new(tau_p, 0.0)
        };
        let sinr_inst = match direction {
            Direction::Uplink => {
                let h_hat = estimate(link, &mut stream);
                let sig = alloc.p_ul[link] * h_hat.dotc(&h[link]).norm_sqr();
                let mut den = stats.sigma2_ul * h_hat.norm_squared();
                for (j, h_j) in h.iter().enumerate() {
                    if j != link {
                        den += alloc.p_ul[j] * h_hat.dotc(h_j).norm_sqr();
                    }
                }
                sig / den
            }
            Direction::Downlink => {
                // Precoders for every link, unit mean power:
                // w_j = h_hat_j / sqrt(tau_p^2 Tr(R_j F_j^-1 R_j)).
                let mut sig = 0.0;
                let mut den = tables.sigma2_dl;
                for j in 0..n {
                    let h_hat_j = estimate(j, &mut stream);
                    let norm_sq = tau_p * tau_p * tables.estimation_trace(j);
                    let gain = h[link].dotc(&h_hat_j).norm_sqr() / norm_sq;
                    if j == link {
                        sig = alloc.p_dl[j] * gain;
                    } else {
                        den += alloc.p_dl[j] * gain;
                    }
                }
                sig / den
            }
        };
        w * tables.prelog * (1.0 + sinr_inst).log2()
    });
    let mean = vals.iter().sum::<f64>() / n_realizations as f64;
    let var = if n_realizations > 1 {
        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_realizations - 1) as f64
    } else {
        0.0
    };
    Ok(McSeEstimate {
        se: mean,
        std_error: (var / n_realizations as f64).sqrt(),
        n_realizations,
    })
}
