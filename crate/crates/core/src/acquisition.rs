//! Acquisition functions: Monte-Carlo batch expected hypervolume
//! improvement, its noisy variant, the multi-start derivative-free
//! maximizer, and the quasi-Monte-Carlo candidate source.
//!
//! Both estimators average hypervolume improvement over joint posterior
//! draws. The draws use a scrambled-Sobol base sequence mapped through the
//! inverse normal CDF, and the base is frozen per estimator so the
//! acquisition surface is deterministic while it is being maximized.
//!
//! The noisy variant integrates over the posterior at the previously
//! evaluated points: each draw carries its own Pareto front over the drawn
//! values there, cached once, and candidates are sampled conditionally on
//! those draws through the block-Cholesky identity, so one candidate
//! evaluation costs O(n^2) after the per-iteration setup.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gp::{GpModel, cholesky_sampler};
use crate::par;
use crate::pareto::SortedFront;
use crate::rng;
use crate::sobol::{Scramble, SobolSeq};

/// Monte-Carlo and search-budget knobs.
#[derive(Debug, Clone)]
pub struct AcquisitionConfig {
    pub n_mc_samples: usize,
    pub batch_size: usize,
    pub n_restarts: usize,
    pub raw_candidates: usize,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            n_mc_samples: 128,
            batch_size: 1,
            n_restarts: 10,
            raw_candidates: 512,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mc_samples < 16 {
            return Err(Error::InvalidConfig(format!(
                "n_mc_samples must be >= 16, got {}",
                self.n_mc_samples
            )));
        }
        if self.batch_size < 1 || self.n_restarts < 1 {
            return Err(Error::InvalidConfig(
                "batch_size and n_restarts must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// First `n` points of a scrambled Sobol sequence in `[0,1)^d`.
pub fn sobol_candidates(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    SobolSeq::new(d, Scramble::Seeded(seed)).take_points(n)
}

/// Standard-normal base samples from a scrambled Sobol stream:
/// `rows x cols`, one sequence point per row.
fn sobol_normals(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let norm = Normal::new(0.0, 1.0).expect("unit normal");
    let mut seq = SobolSeq::new(cols.max(1), Scramble::Seeded(seed));
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let p = seq.next_point();
        for j in 0..cols {
            out[(i, j)] = norm.inverse_cdf(p[j].clamp(1e-12, 1.0 - 1e-12));
        }
    }
    out
}

/// qEHVI estimator with a frozen MC base, evaluating candidate batches
/// against a fixed front.
pub struct QehviEstimator<'a> {
    models: &'a [GpModel],
    front: SortedFront,
    /// Per objective: n_mc x q_max standard normals.
    base: Vec<DMatrix<f64>>,
    n_mc: usize,
}

impl<'a> QehviEstimator<'a> {
    pub fn new(
        models: &'a [GpModel],
        front_points: &[Vec<f64>],
        r: &[f64],
        cfg: &AcquisitionConfig,
        base_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if models.len() != 2 || r.len() != 2 {
            return Err(Error::Unsupported(
                "acquisition estimators are implemented for exactly 2 objectives".into(),
            ));
        }
        let q = cfg.batch_size;
        let all = sobol_normals(cfg.n_mc_samples, 2 * q, base_seed);
        let base = (0..2)
            .map(|obj| DMatrix::from_fn(cfg.n_mc_samples, q, |i, j| all[(i, obj * q + j)]))
            .collect();
        Ok(QehviEstimator {
            models,
            front: SortedFront::from_points(front_points, r),
            base,
            n_mc: cfg.n_mc_samples,
        })
    }

    /// Mean hypervolume improvement of the candidate batch over the MC
    /// draws; `NEG_INFINITY` if the posterior factorization fails.
    pub fn eval(&self, x_cand: &[Vec<f64>]) -> f64 {
        let q = x_cand.len();
        debug_assert!(q <= self.base[0].ncols());
        // Per objective: draws[(i, j)] = mean_j + (L eps_i)_j.
        let mut draws: Vec<DMatrix<f64>> = Vec::with_capacity(2);
        for (obj, model) in self.models.iter().enumerate() {
            let (mean, cov) = model.posterior_joint(x_cand);
            let Ok(chol) = cholesky_sampler(&cov) else {
                return f64::NEG_INFINITY;
            };
            let l = chol.l();
            let mut d = DMatrix::zeros(self.n_mc, q);
            for i in 0..self.n_mc {
                for j in 0..q {
                    let mut v = mean[j];
                    for k in 0..=j {
                        v += l[(j, k)] * self.base[obj][(i, k)];
                    }
                    d[(i, j)] = v;
                }
            }
            draws.push(d);
        }
        let mut acc = 0.0;
        let mut pts = vec![[0.0f64; 2]; q];
        for i in 0..self.n_mc {
            for (j, p) in pts.iter_mut().enumerate() {
                *p = [draws[0][(i, j)], draws[1][(i, j)]];
            }
            acc += self.front.hvi_batch(&pts);
        }
        acc / self.n_mc as f64
    }
}

/// MC estimate of the batch expected hypervolume improvement of `x_cand`
/// against `front`: the mean over joint posterior draws of
/// HVI(draw | front, r).
pub fn qehvi<R: Rng>(
    models: &[GpModel],
    x_cand: &[Vec<f64>],
    front: &[Vec<f64>],
    r: &[f64],
    cfg: &AcquisitionConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut cfg = cfg.clone();
    cfg.batch_size = cfg.batch_size.max(x_cand.len());
    let est = QehviEstimator::new(models, front, r, &cfg, rng.random())?;
    Ok(est.eval(x_cand))
}

struct NehviObjective {
    /// Posterior mean at the observed points.
    mean_obs: DVector<f64>,
    /// Lower Cholesky factor of the posterior covariance there.
    l_obs: DMatrix<f64>,
    /// Frozen standard normals, n_mc x n_obs.
    eps_obs: DMatrix<f64>,
    /// Frozen candidate normals, n_mc x q_max.
    eps_cand: DMatrix<f64>,
    /// Cached (K + noise I)^-1 k(X, x_obs_j) per observed point, so the
    /// candidate-to-observed posterior cross covariance costs O(n d + n^2)
    /// per candidate instead of O(n^2 d).
    obs_solved: Vec<DVector<f64>>,
}

/// NEHVI estimator: per-draw Pareto fronts over the posterior at the
/// observed designs, computed once, with candidates drawn conditionally
/// on those frozen draws.
pub struct NehviEstimator<'a> {
    models: &'a [GpModel],
    x_observed: &'a [Vec<f64>],
    objectives: Vec<NehviObjective>,
    fronts: Vec<SortedFront>,
    n_mc: usize,
}

impl<'a> NehviEstimator<'a> {
    pub fn new(
        models: &'a [GpModel],
        x_observed: &'a [Vec<f64>],
        r: &[f64],
        cfg: &AcquisitionConfig,
        base_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if models.len() != 2 || r.len() != 2 {
            return Err(Error::Unsupported(
                "acquisition estimators are implemented for exactly 2 objectives".into(),
            ));
        }
        let n = x_observed.len();
        let q = cfg.batch_size;
        let n_mc = cfg.n_mc_samples;
        let all = sobol_normals(n_mc, 2 * (n + q), base_seed);
        let mut objectives = Vec::with_capacity(2);
        for (obj, model) in models.iter().enumerate() {
            let (mean_obs, cov) = model.posterior_joint(x_observed);
            let l_obs = cholesky_sampler(&cov)?.l();
            let off = obj * (n + q);
            let eps_obs = DMatrix::from_fn(n_mc, n, |i, j| all[(i, off + j)]);
            let eps_cand = DMatrix::from_fn(n_mc, q, |i, j| all[(i, off + n + j)]);
            let obs_solved = (0..n)
                .map(|j| model.solved_kernel_vec(&x_observed[j]))
                .collect();
            objectives.push(NehviObjective {
                mean_obs,
                l_obs,
                eps_obs,
                eps_cand,
                obs_solved,
            });
        }
        // Per-draw fronts over the drawn values at the observed designs.
        let fronts: Vec<SortedFront> = par::par_map_indexed(n_mc, |i| {
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|j| {
                    objectives
                        .iter()
                        .map(|o| {
                            let mut v = o.mean_obs[j];
                            for k in 0..=j {
                                v += o.l_obs[(j, k)] * o.eps_obs[(i, k)];
                            }
                            v
                        })
                        .collect()
                })
                .collect();
            SortedFront::from_points(&pts, r)
        });
        Ok(NehviEstimator {
            models,
            x_observed,
            objectives,
            fronts,
            n_mc,
        })
    }

    /// Mean over draws of the candidate batch's improvement against that
    /// draw's front; `NEG_INFINITY` on factorization failure.
    pub fn eval(&self, x_cand: &[Vec<f64>]) -> f64 {
        let q = x_cand.len();
        let n = self.x_observed.len();
        // Conditional draws per objective via the block-Cholesky identity:
        // f(cand) | f(obs) draw i has mean mu_c + W eps_obs_i and
        // covariance S_cc - W W^T, with W = S_co L^-T.
        let mut draws: Vec<DMatrix<f64>> = Vec::with_capacity(2);
        for (obj, model) in self.models.iter().enumerate() {
            let state = &self.objectives[obj];
            let (mean_c, cov_c) = model.posterior_joint(x_cand);
            // Posterior cross covariance via the cached obs-side solves:
            // cov(x, obs_j) = k(x, obs_j) - k(x, X) . solved_j, and since
            // the observed set is the training set, k(x, obs_j) is entry j
            // of the candidate's kernel vector.
            let kx: Vec<DVector<f64>> = x_cand.iter().map(|x| model.kernel_vector(x)).collect();
            let scale = model.output_scale_sq();
            let w_rows: Vec<DVector<f64>> = (0..q)
                .map(|j| {
                    let c_j = DVector::from_fn(n, |k, _| {
                        (kx[j][k] - kx[j].dot(&state.obs_solved[k])) * scale
                    });
                    solve_lower(&state.l_obs, &c_j)
                })
                .collect();
            let cond_cov =
                DMatrix::from_fn(q, q, |a, b| cov_c[(a, b)] - w_rows[a].dot(&w_rows[b]));
            let Ok(chol) = cholesky_sampler(&cond_cov) else {
                return f64::NEG_INFINITY;
            };
            let l_c = chol.l();
            let mut d = DMatrix::zeros(self.n_mc, q);
            for i in 0..self.n_mc {
                for j in 0..q {
                    let mut v = mean_c[j];
                    for k in 0..n {
                        v += w_rows[j][k] * state.eps_obs[(i, k)];
                    }
                    for k in 0..=j {
                        v += l_c[(j, k)] * state.eps_cand[(i, k)];
                    }
                    d[(i, j)] = v;
                }
            }
            draws.push(d);
        }
        let mut acc = 0.0;
        let mut pts = vec![[0.0f64; 2]; q];
        for i in 0..self.n_mc {
            for (j, p) in pts.iter_mut().enumerate() {
                *p = [draws[0][(i, j)], draws[1][(i, j)]];
            }
            acc += self.fronts[i].hvi_batch(&pts);
        }
        acc / self.n_mc as f64
    }
}

fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut x = b.clone();
    for i in 0..n {
        let mut v = x[i];
        for k in 0..i {
            v -= l[(i, k)] * x[k];
        }
        x[i] = v / l[(i, i)];
    }
    x
}

/// Noisy expected hypervolume improvement: the EHVI integrated over the
/// posterior at the previously evaluated designs.
pub fn nehvi<R: Rng>(
    models: &[GpModel],
    x_cand: &[Vec<f64>],
    x_observed: &[Vec<f64>],
    r: &[f64],
    cfg: &AcquisitionConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut cfg = cfg.clone();
    cfg.batch_size = cfg.batch_size.max(x_cand.len());
    let est = NehviEstimator::new(models, x_observed, r, &cfg, rng.random())?;
    Ok(est.eval(x_cand))
}

/// Maximizes a batch acquisition over the unit cube: scrambled-Sobol
/// probing, then compass pattern search from the best probes. The result
/// is never worse (in acquisition value) than the best raw probe.
pub fn optimize_acquisition<F>(
    acq: &F,
    dims: usize,
    cfg: &AcquisitionConfig,
    seed: u64,
) -> Vec<Vec<f64>>
where
    F: Fn(&[Vec<f64>]) -> f64 + Sync,
{
    let q = cfg.batch_size;
    let flat_dims = dims * q;
    let unflatten = |flat: &[f64]| -> Vec<Vec<f64>> {
        (0..q)
            .map(|j| flat[j * dims..(j + 1) * dims].to_vec())
            .collect()
    };
    let eval_flat = |flat: &[f64]| acq(&unflatten(flat));

    let probes = sobol_candidates(
        cfg.raw_candidates.max(1),
        flat_dims,
        rng::derive_seed(seed, "acq-probes"),
    );
    let scores: Vec<f64> = par::par_map_slice(&probes, |p| eval_flat(p));
    let mut order: Vec<usize> = (0..probes.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let n_restarts = cfg.n_restarts.min(probes.len());
    let starts: Vec<(Vec<f64>, f64)> = order[..n_restarts]
        .iter()
        .map(|&i| (probes[i].clone(), scores[i]))
        .collect();

    // Compass search; in high dimension each sweep visits a rotating
    // seeded subset of coordinates to keep the evaluation budget flat.
    let searched: Vec<(Vec<f64>, f64)> = par::par_map_indexed(starts.len(), |s| {
        let (mut x, mut fx) = starts[s].clone();
        let mut stream = rng::indexed_stream(seed, "acq-coords", s as u64);
        let sweep_size = flat_dims.min(32);
        let mut step = 0.25f64;
        let budget = 64 + 8 * sweep_size;
        let mut evals = 0usize;
        while step >= 1e-3 && evals < budget {
            let coords: Vec<usize> = if flat_dims <= sweep_size {
                (0..flat_dims).collect()
            } else {
                (0..sweep_size)
                    .map(|_| (stream.random::<u64>() % flat_dims as u64) as usize)
                    .collect()
            };
            let mut improved = false;
            for &c in &coords {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[c] = (y[c] + dir * step).clamp(0.0, 1.0);
                    if y[c] == x[c] {
                        continue;
                    }
                    let fy = eval_flat(&y);
                    evals += 1;
                    if fy > fx {
                        x = y;
                        fx = fy;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (x, fx)
    });

    let mut best = starts[0].clone();
    for cand in searched {
        if cand.1 > best.1 || (cand.1 == best.1 && cand.0 < best.0) {
            best = cand;
        }
    }
    unflatten(&best.0)
}
