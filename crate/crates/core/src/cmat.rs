//! Complex Hermitian matrix utilities shared by the channel model.
//!
//! Thin layer over `nalgebra`: jittered Cholesky factorization, Frobenius
//! trace products, circularly-symmetric Gaussian sampling, and a real
//! 2M x 2M embedding used as an eigenvalue oracle in tests.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Largest Hermitian asymmetry `max |a_ij - conj(a_ji)|`.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let d = (a[(i, j)] - a[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Real part of the trace.
pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// Tr(A B) for Hermitian `a` and arbitrary `b` of matching size.
///
/// Uses Tr(AB) = sum_{m,n} A[m,n] B[n,m]; for Hermitian pairs the result
/// is real up to roundoff, so callers take `.re` where appropriate.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..n {
        for k in 0..a.ncols() {
            acc += a[(m, k)] * b[(k, m)];
        }
    }
    acc
}

/// Frobenius inner product `<A, B> = sum_ij conj(a_ij) b_ij`.
///
/// For Hermitian `a` this equals Tr(A B) for arbitrary `b`, which is how
/// the SINR pipeline evaluates its trace products over contiguous storage.
pub fn frob_inner(a: &CMat, b: &CMat) -> C64 {
    debug_assert_eq!(a.shape(), b.shape());
    let mut acc = C64::new(0.0, 0.0);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        acc += x.conj() * y;
    }
    acc
}

/// Tr(A B) for a Hermitian pair; real by construction.
pub fn herm_trace_inner(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    let mut acc = 0.0;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        acc = x.re.mul_add(y.re, acc);
        acc = x.im.mul_add(y.im, acc);
    }
    acc
}

/// Cholesky of a Hermitian PSD matrix with an escalating diagonal jitter.
///
/// Jitter starts at `1e-10 * mean diagonal` and multiplies by 10 up to
/// `1e-4 * mean diagonal` before giving up.
pub fn cholesky_jittered(a: &CMat) -> Result<Cholesky<C64, Dyn>> {
    let n = a.nrows();
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Ok(ch);
    }
    let scale = (trace_re(a) / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut jitter = 1e-10;
    while jitter <= 1e-4 {
        let mut j = a.clone();
        for i in 0..n {
            j[(i, i)] += C64::new(jitter * scale, 0.0);
        }
        if let Some(ch) = Cholesky::new(j) {
            return Ok(ch);
        }
        jitter *= 10.0;
    }
    Err(Error::NumericalError(format!(
        "Cholesky failed for {n}x{n} Hermitian matrix even with jitter"
    )))
}

/// Embeds a Hermitian complex matrix as the real symmetric
/// `[[Re, -Im], [Im, Re]]`; its spectrum is that of the original with
/// every eigenvalue doubled in multiplicity.
pub fn real_embedding(a: &CMat) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            out[(i, j)] = v.re;
            out[(i, j + n)] = -v.im;
            out[(i + n, j)] = v.im;
            out[(i + n, j + n)] = v.re;
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix (ascending), via the real embedding.
///
/// Each eigenvalue appears twice in the embedding; the deduplicated half
/// is returned. Intended for validation, not hot paths.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let sym = nalgebra::SymmetricEigen::new(real_embedding(a));
    let mut ev: Vec<f64> = sym.eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    // Doubled multiplicities: keep every other one.
    ev.into_iter().step_by(2).collect()
}

/// Draws a standard circularly-symmetric complex Gaussian vector,
/// `CN(0, I)`: real and imaginary parts are iid `N(0, 1/2)`.
pub fn standard_cn<R: Rng>(n: usize, rng: &mut R) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Draws `CN(0, cov)` given the Cholesky factor of `cov`.
pub fn correlated_cn<R: Rng>(chol_l: &CMat, rng: &mut R) -> CVec {
    chol_l * standard_cn(chol_l.nrows(), rng)
}
