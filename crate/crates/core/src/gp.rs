//! Gaussian-process surrogates, one independent model per objective.
//!
//! Matérn-5/2 kernel with per-dimension lengthscales. Targets are
//! standardized to zero mean and unit variance; inputs live in the unit
//! cube (callers with other boxes go through [`BoxBounds`]). Noise
//! variance is a fitted hyperparameter with a 1e-8 floor.
//!
//! Hyperparameters maximize the log marginal likelihood by multi-start
//! Nelder-Mead ascent in log space. Above [`ARD_FIT_LIMIT`] input
//! dimensions the lengthscales are tied to a single fitted scalar during
//! the search (the stored model still carries the per-dimension vector);
//! a derivative-free search over thousands of independent lengthscales is
//! not informative with the few dozen observations a run collects.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::par;
use crate::rng;

/// Lower bound kept on the fitted noise variance (standardized scale).
pub const NOISE_FLOOR: f64 = 1e-8;

/// Above this input dimension the lengthscale search is tied.
pub const ARD_FIT_LIMIT: usize = 16;

/// Hyperparameters on the standardized-target scale.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    fn validate(&self, dims: usize) -> Result<()> {
        if self.lengthscales.len() != dims {
            return Err(Error::InvalidInput(format!(
                "expected {dims} lengthscales, got {}",
                self.lengthscales.len()
            )));
        }
        if self.lengthscales.iter().any(|&l| !(l > 0.0)) || !(self.signal_variance > 0.0) {
            return Err(Error::InvalidInput(
                "lengthscales and signal variance must be strictly positive".into(),
            ));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::InvalidInput("noise variance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Min-max normalization box for inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    pub fn unit(dims: usize) -> Self {
        BoxBounds {
            lo: vec![0.0; dims],
            hi: vec![1.0; dims],
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    pub fn decode(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&lo, &hi))| lo + v * (hi - lo))
            .collect()
    }
}

/// Matérn-5/2 on the scaled distance r: s^2 (1 + a + a^2/3) e^{-a},
/// a = sqrt(5) r.
fn matern52(r2: f64, signal_variance: f64) -> f64 {
    let a = (5.0 * r2).sqrt();
    signal_variance * (1.0 + a + a * a / 3.0) * (-a).exp()
}

fn scaled_sq_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((x, y), l) in a.iter().zip(b).zip(ls) {
        let d = (x - y) / l;
        acc += d * d;
    }
    acc
}

/// Cholesky with an escalating relative jitter for real symmetric PSD
/// matrices; mirrors the complex-matrix helper. The ladder runs from
/// 1e-10 to `max_rel` times the mean diagonal.
fn cholesky_jittered_upto(a: &DMatrix<f64>, max_rel: f64) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Ok(ch);
    }
    let n = a.nrows();
    let scale = (a.trace() / n as f64).abs().max(1e-12);
    let mut jitter = 1e-10;
    while jitter <= max_rel {
        let mut j = a.clone();
        for i in 0..n {
            j[(i, i)] += jitter * scale;
        }
        if let Some(ch) = Cholesky::new(j) {
            return Ok(ch);
        }
        jitter *= 10.0;
    }
    Err(Error::NumericalError(format!(
        "Cholesky failed for {n}x{n} covariance even with jitter"
    )))
}

/// Fit-path factorization: jitter up to 1e-4 of the mean diagonal.
pub(crate) fn cholesky_jittered_real(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    cholesky_jittered_upto(a, 1e-4)
}

/// Sampler-path factorization for posterior covariances. A posterior that
/// has collapsed to numerical zero can be indefinite by more than 1e-4 of
/// its own (tiny) diagonal, so the ladder extends to the full diagonal
/// scale; the injected noise stays at the collapsed magnitude.
pub(crate) fn cholesky_sampler(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    cholesky_jittered_upto(a, 1.0)
}

/// A fitted surrogate. Immutable; safe to share across threads.
pub struct GpModel {
    train_x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    params: KernelParams,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lml: f64,
}

/// Fitting configuration; the defaults implement the standard recipe.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_evals_per_restart: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 8,
            max_evals_per_restart: 160,
        }
    }
}

impl GpModel {
    /// Fits hyperparameters by multi-start Nelder-Mead on the log marginal
    /// likelihood and returns the model at the best parameters seen
    /// (which is never worse than any restart's initialization).
    pub fn fit<R: Rng>(x: &[Vec<f64>], y: &[f64], cfg: &FitConfig, rng: &mut R) -> Result<GpModel> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidData(format!(
                "need at least 2 matching observations, got {} points / {} targets",
                n,
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite training target".into()));
        }
        let dims = x[0].len();
        let (y_mean, y_scale, y_std) = standardize(y);

        let tied = dims > ARD_FIT_LIMIT;
        // Base squared distances with unit lengthscales; the tied search
        // only rescales them, so the kernel matrix build drops from
        // O(n^2 d) to O(n^2) per likelihood evaluation.
        let base_d2: Option<DMatrix<f64>> = if tied {
            let ones = vec![1.0; dims];
            Some(DMatrix::from_fn(n, n, |i, j| {
                scaled_sq_dist(&x[i], &x[j], &ones)
            }))
        } else {
            None
        };

        // Median-distance heuristic anchors the lengthscale search.
        let mut d2_sum = 0.0;
        let mut pairs = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                d2_sum += scaled_sq_dist(&x[i], &x[j], &vec![1.0; dims]);
                pairs += 1.0;
            }
        }
        let ls0 = (d2_sum / pairs.max(1.0)).sqrt().max(1e-3);

        let theta_dims = if tied { 3 } else { dims + 2 };
        let unpack = |theta: &[f64]| -> KernelParams {
            let clamp = |v: f64, lo: f64, hi: f64| v.clamp(lo.ln(), hi.ln()).exp();
            if tied {
                KernelParams {
                    lengthscales: vec![clamp(theta[0], 1e-3, 1e4); dims],
                    signal_variance: clamp(theta[1], 1e-6, 1e6),
                    noise_variance: clamp(theta[2], NOISE_FLOOR, 1e2),
                }
            } else {
                KernelParams {
                    lengthscales: theta[..dims].iter().map(|&t| clamp(t, 1e-3, 1e4)).collect(),
                    signal_variance: clamp(theta[dims], 1e-6, 1e6),
                    noise_variance: clamp(theta[dims + 1], NOISE_FLOOR, 1e2),
                }
            }
        };
        let lml_of = |theta: &[f64]| -> f64 {
            let p = unpack(theta);
            log_marginal(x, &y_std, &p, base_d2.as_ref()).unwrap_or(f64::NEG_INFINITY)
        };

        // Restart 0 starts at the heuristic; the rest perturb it in log
        // space from the caller's stream.
        let mut inits: Vec<Vec<f64>> = Vec::with_capacity(cfg.restarts.max(1));
        let base_theta = |ls: f64, sv: f64, nv: f64| -> Vec<f64> {
            if tied {
                vec![ls.ln(), sv.ln(), nv.ln()]
            } else {
                let mut t = vec![ls.ln(); dims];
                t.push(sv.ln());
                t.push(nv.ln());
                t
            }
        };
        inits.push(base_theta(ls0, 1.0, 1e-6));
        for _ in 1..cfg.restarts.max(1) {
            let jitter = |range: f64, rng: &mut R| (rng.random::<f64>() * 2.0 - 1.0) * range;
            let ls = ls0 * 10f64.powf(jitter(1.5, rng));
            let sv = 10f64.powf(jitter(1.0, rng));
            let nv = 1e-6 * 10f64.powf(jitter(2.0, rng));
            let mut t = base_theta(ls, sv, nv);
            if !tied {
                for v in t[..dims].iter_mut() {
                    *v += jitter(0.5, rng);
                }
            }
            inits.push(t);
        }

        let results: Vec<(Vec<f64>, f64)> = par::par_map_slice(&inits, |init| {
            nelder_mead_max(&lml_of, init, 0.7, cfg.max_evals_per_restart)
        });
        let mut best: Option<(Vec<f64>, f64)> = None;
        for (theta, val) in results {
            let better = match &best {
                Some((_, b)) => val > *b,
                None => true,
            };
            if better {
                best = Some((theta, val));
            }
        }
        let (theta, _) = best.ok_or_else(|| {
            Error::NumericalError("all hyperparameter restarts failed".into())
        })?;
        let params = unpack(&theta);
        let _ = theta_dims;
        Self::assemble(x.to_vec(), y_mean, y_scale, y_std, params)
    }

    /// Builds the model at explicitly given hyperparameters (no search).
    pub fn fit_with_params(x: &[Vec<f64>], y: &[f64], params: KernelParams) -> Result<GpModel> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(Error::InvalidData("empty or mismatched training set".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite training target".into()));
        }
        params.validate(x[0].len())?;
        let (y_mean, y_scale, y_std) = standardize(y);
        Self::assemble(x.to_vec(), y_mean, y_scale, y_std, params)
    }

    fn assemble(
        train_x: Vec<Vec<f64>>,
        y_mean: f64,
        y_scale: f64,
        y_std_targets: DVector<f64>,
        params: KernelParams,
    ) -> Result<GpModel> {
        let n = train_x.len();
        let mut k = DMatrix::from_fn(n, n, |i, j| {
            matern52(
                scaled_sq_dist(&train_x[i], &train_x[j], &params.lengthscales),
                params.signal_variance,
            )
        });
        for i in 0..n {
            k[(i, i)] += params.noise_variance.max(NOISE_FLOOR);
        }
        let chol = cholesky_jittered_real(&k)?;
        let alpha = chol.solve(&y_std_targets);
        let lml = lml_from_chol(&chol, &y_std_targets, &alpha);
        Ok(GpModel {
            train_x,
            y_mean,
            y_scale,
            params,
            chol,
            alpha,
            lml,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn num_train(&self) -> usize {
        self.train_x.len()
    }

    pub fn dims(&self) -> usize {
        self.train_x.first().map_or(0, Vec::len)
    }

    /// Log marginal likelihood of the training data at the fitted
    /// hyperparameters (standardized scale).
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Prior kernel vector k(x, X_train) on the standardized scale.
    pub fn kernel_vector(&self, x: &[f64]) -> DVector<f64> {
        self.kernel_vec(x)
    }

    /// (K + noise I)^-1 k(X, x), cached by samplers that repeatedly form
    /// posterior cross covariances against the training set.
    pub fn solved_kernel_vec(&self, x: &[f64]) -> DVector<f64> {
        self.chol.solve(&self.kernel_vec(x))
    }

    /// Squared de-standardization factor for covariances.
    pub fn output_scale_sq(&self) -> f64 {
        self.y_scale * self.y_scale
    }

    fn kernel_vec(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.train_x.len(), |i, _| {
            matern52(
                scaled_sq_dist(&self.train_x[i], x, &self.params.lengthscales),
                self.params.signal_variance,
            )
        })
    }

    /// Posterior mean and variance of the latent function at `x`,
    /// de-standardized. Variance is clamped at zero.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let ks = self.kernel_vec(x);
        let mean_std = ks.dot(&self.alpha);
        let v = self.chol.solve(&ks);
        let var_std = (self.params.signal_variance - ks.dot(&v)).max(0.0);
        (
            mean_std * self.y_scale + self.y_mean,
            var_std * self.y_scale * self.y_scale,
        )
    }

    /// Joint posterior mean vector and covariance matrix over `points`
    /// (latent function, de-standardized).
    pub fn posterior_joint(&self, points: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let q = points.len();
        let ks: Vec<DVector<f64>> = points.iter().map(|p| self.kernel_vec(p)).collect();
        let solves: Vec<DVector<f64>> = ks.iter().map(|k| self.chol.solve(k)).collect();
        let mean = DVector::from_fn(q, |i, _| {
            ks[i].dot(&self.alpha) * self.y_scale + self.y_mean
        });
        let s2 = self.y_scale * self.y_scale;
        let cov = DMatrix::from_fn(q, q, |i, j| {
            let prior = matern52(
                scaled_sq_dist(&points[i], &points[j], &self.params.lengthscales),
                self.params.signal_variance,
            );
            (prior - ks[i].dot(&solves[j])) * s2
        });
        (mean, cov)
    }

    /// Posterior covariance between two point sets (de-standardized).
    pub fn posterior_cross_cov(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
        let ka: Vec<DVector<f64>> = a.iter().map(|p| self.kernel_vec(p)).collect();
        let kb_solved: Vec<DVector<f64>> =
            b.iter().map(|p| self.chol.solve(&self.kernel_vec(p))).collect();
        let s2 = self.y_scale * self.y_scale;
        DMatrix::from_fn(a.len(), b.len(), |i, j| {
            let prior = matern52(
                scaled_sq_dist(&a[i], &b[j], &self.params.lengthscales),
                self.params.signal_variance,
            );
            (prior - ka[i].dot(&kb_solved[j])) * s2
        })
    }

    /// Draws from the joint posterior over `points`; factorized posterior
    /// covariance with jitter, deterministic per seed. Returns
    /// `n_samples` rows of `points.len()` values.
    pub fn sample_joint<R: Rng>(
        &self,
        points: &[Vec<f64>],
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        let (mean, cov) = self.posterior_joint(points);
        let q = points.len();
        let chol = cholesky_sampler(&cov)?;
        let l = chol.l();
        let mut out = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let eps = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
            let draw = &mean + &l * eps;
            out.push(draw.iter().copied().collect());
        }
        Ok(out)
    }
}

fn standardize(y: &[f64]) -> (f64, f64, DVector<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (
        mean,
        scale,
        DVector::from_iterator(y.len(), y.iter().map(|v| (v - mean) / scale)),
    )
}

fn lml_from_chol(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * y.dot(alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

fn log_marginal(
    x: &[Vec<f64>],
    y_std: &DVector<f64>,
    params: &KernelParams,
    base_d2: Option<&DMatrix<f64>>,
) -> Result<f64> {
    let n = x.len();
    let mut k = match base_d2 {
        Some(d2) => {
            let inv_l2 = 1.0 / (params.lengthscales[0] * params.lengthscales[0]);
            DMatrix::from_fn(n, n, |i, j| {
                matern52(d2[(i, j)] * inv_l2, params.signal_variance)
            })
        }
        None => DMatrix::from_fn(n, n, |i, j| {
            matern52(
                scaled_sq_dist(&x[i], &x[j], &params.lengthscales),
                params.signal_variance,
            )
        }),
    };
    for i in 0..n {
        k[(i, i)] += params.noise_variance.max(NOISE_FLOOR);
    }
    let chol = Cholesky::new(k).ok_or_else(|| {
        Error::NumericalError("kernel matrix not positive definite".into())
    })?;
    let alpha = chol.solve(y_std);
    Ok(lml_from_chol(&chol, y_std, &alpha))
}

/// Nelder-Mead ascent tracking the best point ever evaluated (including
/// the initialization, so the result never regresses below it).
fn nelder_mead_max(
    f: &(impl Fn(&[f64]) -> f64 + ?Sized),
    x0: &[f64],
    step: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut evals = 0usize;
    let mut best = (x0.to_vec(), f(x0));
    evals += 1;
    let eval = |x: &[f64], best: &mut (Vec<f64>, f64), evals: &mut usize| -> f64 {
        let v = f(x);
        *evals += 1;
        if v > best.1 {
            *best = (x.to_vec(), v);
        }
        v
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), best.1));
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += step;
        let v = eval(&p, &mut best, &mut evals);
        simplex.push((p, v));
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let spread = simplex[0].1 - simplex[d].1;
        if spread.abs() < 1e-9 {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|(p, _)| p[k]).sum::<f64>() / d as f64)
            .collect();
        let worst = simplex[d].clone();
        let combine = |a: f64, b: f64| -> Vec<f64> {
            (0..d).map(|k| a * centroid[k] + b * worst.0[k]).collect()
        };
        let refl = combine(2.0, -1.0);
        let refl_v = eval(&refl, &mut best, &mut evals);
        if refl_v > simplex[0].1 {
            let exp = combine(3.0, -2.0);
            let exp_v = eval(&exp, &mut best, &mut evals);
            simplex[d] = if exp_v > refl_v { (exp, exp_v) } else { (refl, refl_v) };
        } else if refl_v > simplex[d - 1].1 {
            simplex[d] = (refl, refl_v);
        } else {
            let con = combine(0.5, 0.5);
            let con_v = eval(&con, &mut best, &mut evals);
            if con_v > worst.1 {
                simplex[d] = (con, con_v);
            } else {
                // Shrink toward the best vertex.
                let anchor = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = (0..d)
                        .map(|k| 0.5 * (item.0[k] + anchor[k]))
                        .collect();
                    let v = eval(&p, &mut best, &mut evals);
                    *item = (p, v);
                }
            }
        }
    }
    best
}

/// Convenience: fit one GP per objective column with substreams derived
/// from a single seed.
pub fn fit_per_objective(
    x: &[Vec<f64>],
    objectives: &[Vec<f64>],
    cfg: &FitConfig,
    seed: u64,
) -> Result<Vec<GpModel>> {
    let t = objectives.first().map_or(0, Vec::len);
    (0..t)
        .map(|obj| {
            let y: Vec<f64> = objectives.iter().map(|row| row[obj]).collect();
            let mut stream = rng::indexed_stream(seed, "gp-fit", obj as u64);
            GpModel::fit(x, &y, cfg, &mut stream)
        })
        .collect()
}
