//! Random cell-free network generation: uniform placement under
//! minimum-distance constraints, large-scale fading, spatial covariance
//! matrices for uniform linear arrays, and the pilot book.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::Normal;

use crate::cmat::{C64, CMat, CVec, trace_product};
use crate::error::{Error, Result};
use crate::rng;

/// Total rejection-sampling budget for one network.
const PLACEMENT_RETRY_CAP: u64 = 1_000_000;

/// Static description of a network scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    pub antennas_per_ap: usize,
    /// Side of the square deployment area, meters.
    pub area_side: f64,
    pub min_dist_ap_ue: f64,
    pub min_dist_ue_ue: f64,
    pub min_dist_ap_ap: f64,
    /// Coherence block length in symbols.
    pub coherence_len: usize,
    /// Uplink training length in symbols.
    pub pilot_len: usize,
    /// Spatial correlation magnitude, in [0, 1].
    pub correlation_magnitude: f64,
    /// Log-normal shadow-fading standard deviation, dB.
    pub shadow_std_db: f64,
    /// Receiver noise power, watts.
    pub noise_power_ul: f64,
    pub noise_power_dl: f64,
    /// Per-link uplink power budget, watts.
    pub p_max_ul: f64,
    /// Per-AP downlink power budget, watts.
    pub p_max_dl: f64,
    pub seed: u64,
    /// Keep only the strongest N APs (by fading gain) per UE; `None`
    /// keeps full connectivity.
    pub top_aps_per_ue: Option<usize>,
}

impl NetworkConfig {
    /// Defaults for anything the scenario does not pin: 200-symbol
    /// coherence blocks, one dedicated pilot per UE, moderate antenna
    /// correlation, 4 dB shadowing, and -94 dBm noise (20 MHz, 7 dB noise
    /// figure).
    pub fn new(num_aps: usize, num_ues: usize, antennas_per_ap: usize) -> Self {
        let noise_w = 10f64.powf((-94.0 - 30.0) / 10.0);
        NetworkConfig {
            num_aps,
            num_ues,
            antennas_per_ap,
            area_side: 500.0,
            min_dist_ap_ue: 40.0,
            min_dist_ue_ue: 5.0,
            min_dist_ap_ap: 100.0,
            coherence_len: 200,
            pilot_len: num_ues,
            correlation_magnitude: 0.5,
            shadow_std_db: 4.0,
            noise_power_ul: noise_w,
            noise_power_dl: noise_w,
            p_max_ul: 0.2,
            p_max_dl: 0.2 * num_ues as f64,
            seed: 0,
            top_aps_per_ue: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_aps == 0 || self.num_ues == 0 {
            return fail("network needs at least one AP and one UE".into());
        }
        if self.antennas_per_ap == 0 {
            return fail("antennas_per_ap must be positive".into());
        }
        if !(self.area_side > 0.0) {
            return fail(format!("area_side must be positive, got {}", self.area_side));
        }
        for (name, v) in [
            ("min_dist_ap_ue", self.min_dist_ap_ue),
            ("min_dist_ue_ue", self.min_dist_ue_ue),
            ("min_dist_ap_ap", self.min_dist_ap_ap),
        ] {
            if !(v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if self.pilot_len < self.num_ues || self.pilot_len > self.num_ues * self.num_aps {
            return fail(format!(
                "pilot_len must satisfy K <= tau_p <= K*L, got tau_p={} with K={}, L={}",
                self.pilot_len, self.num_ues, self.num_aps
            ));
        }
        if self.pilot_len >= self.coherence_len {
            return fail(format!(
                "pilot_len {} must be below coherence_len {}",
                self.pilot_len, self.coherence_len
            ));
        }
        if !(0.0..=1.0).contains(&self.correlation_magnitude) {
            return fail(format!(
                "correlation_magnitude must be in [0,1], got {}",
                self.correlation_magnitude
            ));
        }
        if !(self.shadow_std_db >= 0.0) {
            return fail(format!(
                "shadow_std_db must be nonnegative, got {}",
                self.shadow_std_db
            ));
        }
        for (name, v) in [
            ("noise_power_ul", self.noise_power_ul),
            ("noise_power_dl", self.noise_power_dl),
            ("p_max_ul", self.p_max_ul),
            ("p_max_dl", self.p_max_dl),
        ] {
            if !(v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(n) = self.top_aps_per_ue {
            if n == 0 {
                return fail("top_aps_per_ue must be at least 1 when set".into());
            }
        }
        Ok(())
    }
}

/// One UE-AP link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinkId {
    pub ap: usize,
    pub ue: usize,
}

/// A realized network: geometry, connectivity, and large-scale fading.
/// Immutable after creation.
#[derive(Debug, Clone)]
pub struct NetworkTopology {
    pub config: NetworkConfig,
    pub ap_positions: Vec<[f64; 2]>,
    pub ue_positions: Vec<[f64; 2]>,
    /// K x L, UE-major.
    connectivity: Vec<bool>,
    distance: Vec<f64>,
    angle: Vec<f64>,
    beta: Vec<f64>,
    shadow_db: Vec<f64>,
    /// Connected links in canonical (UE-major) order.
    links: Vec<LinkId>,
    link_index: Vec<Option<usize>>,
}

impl NetworkTopology {
    fn flat(&self, ue: usize, ap: usize) -> usize {
        ue * self.config.num_aps + ap
    }

    pub fn is_connected(&self, ue: usize, ap: usize) -> bool {
        self.connectivity[self.flat(ue, ap)]
    }

    pub fn distance(&self, ue: usize, ap: usize) -> f64 {
        self.distance[self.flat(ue, ap)]
    }

    /// Geometric bearing from AP to UE, radians.
    pub fn angle(&self, ue: usize, ap: usize) -> f64 {
        self.angle[self.flat(ue, ap)]
    }

    /// Linear large-scale fading gain.
    pub fn beta(&self, ue: usize, ap: usize) -> f64 {
        self.beta[self.flat(ue, ap)]
    }

    pub fn shadow_db(&self, ue: usize, ap: usize) -> f64 {
        self.shadow_db[self.flat(ue, ap)]
    }

    /// Connected links in canonical order; all per-link vectors elsewhere
    /// in the crate are aligned with this.
    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    /// Canonical index of a connected link.
    pub fn link_index(&self, link: LinkId) -> Option<usize> {
        self.link_index[link.ue * self.config.num_aps + link.ap]
    }

    /// Plain-text snapshot (positions and fading table) for
    /// reproducibility records.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# ap positions (x_m, y_m)");
        for (i, p) in self.ap_positions.iter().enumerate() {
            let _ = writeln!(out, "ap {} {:?} {:?}", i, p[0], p[1]);
        }
        let _ = writeln!(out, "# ue positions (x_m, y_m)");
        for (i, p) in self.ue_positions.iter().enumerate() {
            let _ = writeln!(out, "ue {} {:?} {:?}", i, p[0], p[1]);
        }
        let _ = writeln!(out, "# links: ue ap connected distance_m beta_linear");
        for ue in 0..self.config.num_ues {
            for ap in 0..self.config.num_aps {
                let _ = writeln!(
                    out,
                    "link {} {} {} {:?} {:?}",
                    ue,
                    ap,
                    u8::from(self.is_connected(ue, ap)),
                    self.distance(ue, ap),
                    self.beta(ue, ap)
                );
            }
        }
        out
    }

    /// Builds a topology from explicit geometry, for synthetic test
    /// networks. Connectivity is full; fading derives from the geometry
    /// with zero shadowing.
    pub fn from_positions(
        config: NetworkConfig,
        ap_positions: Vec<[f64; 2]>,
        ue_positions: Vec<[f64; 2]>,
    ) -> Result<Self> {
        if ap_positions.len() != config.num_aps || ue_positions.len() != config.num_ues {
            return Err(Error::InvalidInput(
                "position counts do not match the configured unit counts".into(),
            ));
        }
        let zeros = vec![0.0; config.num_ues * config.num_aps];
        let mut topo = NetworkTopology {
            config,
            ap_positions,
            ue_positions,
            connectivity: Vec::new(),
            distance: zeros.clone(),
            angle: zeros.clone(),
            beta: zeros.clone(),
            shadow_db: zeros,
            links: Vec::new(),
            link_index: Vec::new(),
        };
        topo.fill_geometry()?;
        topo.fill_connectivity();
        Ok(topo)
    }

    fn fill_geometry(&mut self) -> Result<()> {
        for ue in 0..self.config.num_ues {
            for ap in 0..self.config.num_aps {
                let i = ue * self.config.num_aps + ap;
                let dx = self.ue_positions[ue][0] - self.ap_positions[ap][0];
                let dy = self.ue_positions[ue][1] - self.ap_positions[ap][1];
                let d = dx.hypot(dy);
                self.distance[i] = d;
                self.angle[i] = dy.atan2(dx);
                self.beta[i] = large_scale_fading(d, self.shadow_db[i])?;
            }
        }
        Ok(())
    }

    fn fill_connectivity(&mut self) {
        let (k, l) = (self.config.num_ues, self.config.num_aps);
        let mut conn = vec![true; k * l];
        if let Some(top_n) = self.config.top_aps_per_ue {
            if top_n < l {
                for ue in 0..k {
                    let mut order: Vec<usize> = (0..l).collect();
                    order.sort_by(|&a, &b| {
                        self.beta[ue * l + b]
                            .partial_cmp(&self.beta[ue * l + a])
                            .unwrap()
                            .then(a.cmp(&b))
                    });
                    for &ap in &order[top_n..] {
                        conn[ue * l + ap] = false;
                    }
                }
            }
        }
        self.connectivity = conn;
        self.links.clear();
        self.link_index = vec![None; k * l];
        for ue in 0..k {
            for ap in 0..l {
                if self.connectivity[ue * l + ap] {
                    self.link_index[ue * l + ap] = Some(self.links.len());
                    self.links.push(LinkId { ap, ue });
                }
            }
        }
    }

    /// Convenience constructor: derives placement and shadowing streams
    /// from `config.seed`.
    pub fn generate(config: &NetworkConfig) -> Result<Self> {
        let mut stream = rng::stream(config.seed, "topology");
        place_units(config, &mut stream)
    }
}

/// Uniform placement on the square with rejection sampling against the
/// three minimum-distance constraints, then shadowing and fading.
pub fn place_units<R: Rng>(config: &NetworkConfig, rng: &mut R) -> Result<NetworkTopology> {
    config.validate()?;
    let mut retries: u64 = 0;
    let mut draw = |rng: &mut R,
                    placed: &[[f64; 2]],
                    min_same: f64,
                    others: &[[f64; 2]],
                    min_other: f64|
     -> Result<[f64; 2]> {
        loop {
            if retries >= PLACEMENT_RETRY_CAP {
                return Err(Error::PlacementInfeasible {
                    retries,
                    reason: format!(
                        "area {} m too small for the configured minimum distances",
                        config.area_side
                    ),
                });
            }
            retries += 1;
            let p = [
                rng.random::<f64>() * config.area_side,
                rng.random::<f64>() * config.area_side,
            ];
            let ok_same = placed
                .iter()
                .all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= min_same);
            let ok_other = others
                .iter()
                .all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= min_other);
            if ok_same && ok_other {
                return Ok(p);
            }
        }
    };

    let mut ap_positions: Vec<[f64; 2]> = Vec::with_capacity(config.num_aps);
    for _ in 0..config.num_aps {
        let p = draw(rng, &ap_positions, config.min_dist_ap_ap, &[], 0.0)?;
        ap_positions.push(p);
    }
    let mut ue_positions: Vec<[f64; 2]> = Vec::with_capacity(config.num_ues);
    for _ in 0..config.num_ues {
        let p = draw(
            rng,
            &ue_positions,
            config.min_dist_ue_ue,
            &ap_positions,
            config.min_dist_ap_ue,
        )?;
        ue_positions.push(p);
    }

    let (k, l) = (config.num_ues, config.num_aps);
    let mut shadow_db = vec![0.0; k * l];
    for s in shadow_db.iter_mut() {
        *s = draw_shadow_db(config.shadow_std_db, rng);
    }

    let zeros = vec![0.0; k * l];
    let mut topo = NetworkTopology {
        config: config.clone(),
        ap_positions,
        ue_positions,
        connectivity: Vec::new(),
        distance: zeros.clone(),
        angle: zeros.clone(),
        beta: zeros,
        shadow_db,
        links: Vec::new(),
        link_index: Vec::new(),
    };
    topo.fill_geometry()?;
    topo.fill_connectivity();
    Ok(topo)
}

/// Log-normal shadow-fading term in dB: `N(0, sigma_z^2)`.
pub fn draw_shadow_db<R: Rng>(sigma_z_db: f64, rng: &mut R) -> f64 {
    if sigma_z_db == 0.0 {
        return 0.0;
    }
    rng.sample(Normal::new(0.0, sigma_z_db).expect("valid shadow std"))
}

/// Large-scale fading gain, linear scale:
/// beta[dB] = -148.1 - 37.6 log10(d / 1 km) + z.
pub fn large_scale_fading(distance_m: f64, shadow_db: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::InvalidDistance(distance_m));
    }
    let beta_db = -148.1 - 37.6 * (distance_m / 1000.0).log10() + shadow_db;
    Ok(10f64.powf(beta_db / 10.0))
}

/// Spatial covariance of a uniform linear array under the exponential
/// correlation model: entry (m, n) = beta * (mu e^{j theta})^{m-n} for
/// m >= n, conjugate-symmetric above the diagonal.
pub fn spatial_covariance(beta: f64, theta: f64, mu: f64, m: usize) -> Result<CMat> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidCorrelation(mu));
    }
    let base = C64::from_polar(mu, theta);
    let mut row0: Vec<C64> = Vec::with_capacity(m);
    let mut acc = C64::new(1.0, 0.0);
    for i in 0..m {
        if i > 0 {
            acc *= base;
        }
        row0.push(acc);
    }
    Ok(CMat::from_fn(m, m, |r, c| {
        let v = if r >= c { row0[r - c] } else { row0[c - r].conj() };
        v * beta
    }))
}

/// Hermitian PSD covariance matrices for every connected link, aligned
/// with `topology.links()`.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub antennas: usize,
    mats: Vec<CMat>,
}

impl CovarianceSet {
    pub fn from_topology(topo: &NetworkTopology) -> Result<Self> {
        let m = topo.config.antennas_per_ap;
        let mu = topo.config.correlation_magnitude;
        let mats = topo
            .links()
            .iter()
            .map(|&LinkId { ap, ue }| {
                spatial_covariance(topo.beta(ue, ap), topo.angle(ue, ap), mu, m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CovarianceSet { antennas: m, mats })
    }

    /// For synthetic tests: covariances supplied directly.
    pub fn from_matrices(mats: Vec<CMat>) -> Self {
        let antennas = mats.first().map_or(0, CMat::nrows);
        CovarianceSet { antennas, mats }
    }

    pub fn matrix(&self, link: usize) -> &CMat {
        &self.mats[link]
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }
}

/// Mutually orthogonal pilots of squared norm tau_p plus the link-to-pilot
/// assignment.
#[derive(Debug, Clone)]
pub struct PilotBook {
    pub pilots: Vec<CVec>,
    /// Pilot index per canonical link index.
    pub assignment: Vec<usize>,
}

impl PilotBook {
    pub fn pilot_len(&self) -> usize {
        self.pilots.len()
    }

    pub fn pilot_of(&self, link: usize) -> usize {
        self.assignment[link]
    }

    /// Squared pilot norm; all pilots share it.
    pub fn norm_sq(&self) -> f64 {
        self.pilots.len() as f64
    }

    pub fn same_pilot(&self, a: usize, b: usize) -> bool {
        self.assignment[a] == self.assignment[b]
    }
}

/// Normalized covariance similarity |Tr(Ra Rb)| / (||Ra||_F ||Rb||_F).
pub fn covariance_similarity(a: &CMat, b: &CMat) -> f64 {
    let num = trace_product(a, b).norm();
    let den = a.norm() * b.norm();
    if den == 0.0 { 0.0 } else { num / den }
}

/// Assigns pilots to links. With tau_p >= K every UE gets a dedicated
/// orthogonal pilot shared across its serving APs. With tau_p < K, greedy
/// grouping places each UE into the pilot group with the smallest summed
/// covariance similarity to its members, averaged over common serving APs.
pub fn assign_pilots(
    topo: &NetworkTopology,
    covs: &CovarianceSet,
    tau_p: usize,
) -> Result<PilotBook> {
    if tau_p < 1 {
        return Err(Error::InvalidConfig("pilot_len must be at least 1".into()));
    }
    let k = topo.config.num_ues;
    let pilot_of_ue: Vec<usize> = if tau_p >= k {
        (0..k).collect()
    } else {
        greedy_pilot_groups(topo, covs, tau_p)
    };

    // Orthogonal book: scaled standard basis vectors, psi_i = sqrt(tau_p) e_i,
    // so cross inner products are exactly zero.
    let scale = (tau_p as f64).sqrt();
    let pilots: Vec<CVec> = (0..tau_p)
        .map(|i| CVec::from_fn(tau_p, |r, _| C64::new(if r == i { scale } else { 0.0 }, 0.0)))
        .collect();
    let assignment = topo.links().iter().map(|l| pilot_of_ue[l.ue]).collect();
    Ok(PilotBook { pilots, assignment })
}

fn greedy_pilot_groups(topo: &NetworkTopology, covs: &CovarianceSet, tau_p: usize) -> Vec<usize> {
    let k = topo.config.num_ues;
    // Pairwise UE similarity, averaged over APs serving both UEs.
    let mut sim = vec![0.0; k * k];
    for a in 0..k {
        for b in (a + 1)..k {
            let mut acc = 0.0;
            let mut count = 0usize;
            for ap in 0..topo.config.num_aps {
                let (ia, ib) = (
                    topo.link_index(LinkId { ap, ue: a }),
                    topo.link_index(LinkId { ap, ue: b }),
                );
                if let (Some(ia), Some(ib)) = (ia, ib) {
                    acc += covariance_similarity(covs.matrix(ia), covs.matrix(ib));
                    count += 1;
                }
            }
            let s = if count > 0 { acc / count as f64 } else { 0.0 };
            sim[a * k + b] = s;
            sim[b * k + a] = s;
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); tau_p];
    let mut pilot_of_ue = vec![0usize; k];
    for ue in 0..k {
        let mut best = (f64::INFINITY, 0usize);
        for (g, members) in groups.iter().enumerate() {
            let cost: f64 = members.iter().map(|&j| sim[ue * k + j]).sum();
            if cost < best.0 {
                best = (cost, g);
            }
        }
        groups[best.1].push(ue);
        pilot_of_ue[ue] = best.1;
    }
    pilot_of_ue
}
