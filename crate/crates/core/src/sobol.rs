//! Scrambled Sobol low-discrepancy sequences in arbitrary dimension.
//!
//! Direction numbers: the first eight dimensions use the classical
//! Joe-Kuo parameters; higher dimensions pair the canonical enumeration of
//! primitive polynomials over GF(2) (ascending degree, then ascending
//! interior-coefficient encoding, which reproduces the Joe-Kuo polynomial
//! order) with odd initial values drawn from a fixed internal stream, so
//! the unscrambled sequence is a stable object across runs and versions.
//!
//! Scrambling is Matousek linear matrix scrambling plus a random digital
//! shift, both derived from the caller's seed.
//!
//! Index convention: the degenerate point at sequence index 0 (the origin)
//! is skipped; the first emitted point of the unscrambled sequence is
//! 0.5 in every coordinate.

use std::sync::Mutex;
use std::sync::OnceLock;

use rand::Rng;

use crate::rng;

const BITS: usize = 32;

/// Joe-Kuo (a, m) parameters for dimensions 1..=7 (dimension 0 is the
/// van der Corput radical inverse, m_i = 1 for all i).
const LOW_DIM_PARAMS: [(u64, &[u32]); 7] = [
    (0, &[1]),
    (1, &[1, 3]),
    (1, &[1, 3, 1]),
    (2, &[1, 1, 1]),
    (1, &[1, 1, 3, 3]),
    (4, &[1, 3, 5, 13]),
    (2, &[1, 1, 5, 5, 17]),
];

/// Carry-less multiply of GF(2) polynomials modulo `p` of degree `s`.
fn pmul_mod(mut a: u64, mut b: u64, p: u64, s: u32) -> u64 {
    let mut r = 0u64;
    while b != 0 {
        if b & 1 != 0 {
            r ^= a;
        }
        b >>= 1;
        a <<= 1;
        if (a >> s) & 1 != 0 {
            a ^= p;
        }
    }
    r
}

fn ppow_mod(mut base: u64, mut e: u64, p: u64, s: u32) -> u64 {
    let mut r = 1u64;
    while e != 0 {
        if e & 1 != 0 {
            r = pmul_mod(r, base, p, s);
        }
        base = pmul_mod(base, base, p, s);
        e >>= 1;
    }
    r
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// True iff x has multiplicative order 2^s - 1 in GF(2)[x]/(p), which is
/// equivalent to p being primitive of degree s.
fn is_primitive(p: u64, s: u32) -> bool {
    let e = (1u64 << s) - 1;
    if ppow_mod(0b10, e, p, s) != 1 {
        return false;
    }
    for q in prime_factors(e) {
        if ppow_mod(0b10, e / q, p, s) == 1 {
            return false;
        }
    }
    true
}

/// Canonical primitive-polynomial list, extended on demand and cached for
/// the process lifetime. Entry k is the polynomial for dimension k + 1.
fn primitive_polys(count: usize) -> Vec<u64> {
    static CACHE: OnceLock<Mutex<Vec<u64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
    let mut polys = cache.lock().unwrap_or_else(|e| e.into_inner());
    let mut degree = polys.last().map_or(1, |p| 63 - p.leading_zeros());
    while polys.len() < count {
        // Resume enumeration from the start of `degree`; duplicates within
        // a partially-scanned degree are avoided by rebuilding that degree.
        polys.retain(|p| 63 - p.leading_zeros() < degree);
        for a in 0..(1u64 << (degree.max(1) - 1)) {
            let p = (1u64 << degree) | (a << 1) | 1;
            if is_primitive(p, degree) {
                polys.push(p);
            }
        }
        degree += 1;
    }
    polys[..count].to_vec()
}

fn direction_vectors(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (j, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (BITS - 1 - j);
        }
        return v;
    }
    let (a, m): (u64, Vec<u32>) = if dim <= LOW_DIM_PARAMS.len() {
        let (a, m) = LOW_DIM_PARAMS[dim - 1];
        (a, m.to_vec())
    } else {
        let poly = primitive_polys(dim)[dim - 1];
        let s = (63 - poly.leading_zeros()) as usize;
        let a = (poly >> 1) & ((1 << (s - 1)) - 1);
        let mut stream = rng::indexed_stream(0x536f_626f_6c21, "sobol-initials", dim as u64);
        let m = (1..=s)
            .map(|i| {
                let half = 1u32 << (i - 1);
                2 * (stream.random::<u32>() % half) + 1
            })
            .collect();
        (a, m)
    };
    let s = m.len();
    for (j, &mj) in m.iter().enumerate() {
        v[j] = mj << (BITS - 1 - j);
    }
    for i in s..BITS {
        let j = i - s;
        v[i] = v[j] ^ (v[j] >> s);
        for k in 0..s.saturating_sub(1) {
            if (a >> k) & 1 != 0 {
                v[i] ^= v[j + 1 + k];
            }
        }
    }
    v
}

/// Applies a random nonsingular lower-triangular bit matrix to each
/// direction vector (Matousek linear matrix scrambling). Digit t of the
/// output mixes digits 1..=t of the input, where digit 1 is the most
/// significant fractional bit.
fn scramble_directions(v: &mut [u32; BITS], stream: &mut rng::Stream) {
    let mut rows = [0u32; BITS];
    for (t, row) in rows.iter_mut().enumerate() {
        let own = 1u32 << (BITS - 1 - t);
        let above = if t == 0 {
            0
        } else {
            // Random subset of the strictly more significant bits.
            (stream.random::<u32>() >> (BITS - t)) << (BITS - t)
        };
        *row = own | above;
    }
    for vj in v.iter_mut() {
        let mut out = 0u32;
        for (t, row) in rows.iter().enumerate() {
            if ((*row & *vj).count_ones() & 1) != 0 {
                out |= 1 << (BITS - 1 - t);
            }
        }
        *vj = out;
    }
}

/// Scrambling mode for a [`SobolSeq`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scramble {
    /// Raw Joe-Kuo-style sequence; first point is 0.5 everywhere.
    None,
    /// Linear matrix scramble plus digital shift, derived from the seed.
    Seeded(u64),
}

/// Incremental Sobol generator over `[0,1)^d`.
pub struct SobolSeq {
    dirs: Vec<[u32; BITS]>,
    shift: Vec<u32>,
    state: Vec<u32>,
    index: u64,
}

impl SobolSeq {
    pub fn new(dims: usize, scramble: Scramble) -> Self {
        assert!(dims >= 1, "Sobol sequence needs at least one dimension");
        let mut dirs: Vec<[u32; BITS]> = (0..dims).map(direction_vectors).collect();
        let mut shift = vec![0u32; dims];
        if let Scramble::Seeded(seed) = scramble {
            for (d, v) in dirs.iter_mut().enumerate() {
                let mut stream = rng::indexed_stream(seed, "sobol-scramble", d as u64);
                scramble_directions(v, &mut stream);
                shift[d] = stream.random::<u32>();
            }
        }
        SobolSeq {
            dirs,
            shift,
            state: vec![0; dims],
            index: 0,
        }
    }

    pub fn dims(&self) -> usize {
        self.state.len()
    }

    /// Next point, in generation order (sequence index 0 is skipped).
    pub fn next_point(&mut self) -> Vec<f64> {
        self.index += 1;
        let bit = self.index.trailing_zeros() as usize;
        assert!(bit < BITS, "Sobol sequence exhausted");
        let scale = 1.0 / (1u64 << BITS) as f64;
        self.state
            .iter_mut()
            .zip(self.dirs.iter())
            .zip(self.shift.iter())
            .map(|((x, v), s)| {
                *x ^= v[bit];
                f64::from(*x ^ *s) * scale
            })
            .collect()
    }

    pub fn take_points(&mut self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.next_point()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn unscrambled_head_is_half_everywhere() {
        let mut seq = SobolSeq::new(5, Scramble::None);
        let p = seq.next_point();
        assert!(p.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn coordinates_stay_in_unit_interval() {
        let mut seq = SobolSeq::new(23, Scramble::Seeded(11));
        for _ in 0..512 {
            let p = seq.next_point();
            assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a: Vec<_> = SobolSeq::new(9, Scramble::Seeded(3)).take_points(64);
        let b: Vec<_> = SobolSeq::new(9, Scramble::Seeded(3)).take_points(64);
        let c: Vec<_> = SobolSeq::new(9, Scramble::Seeded(4)).take_points(64);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn first_1024_points_of_low_dims_are_balanced() {
        // Every dyadic interval of length 1/8 receives n/8 points from an
        // aligned (0, m, 1)-net block; skipping the origin offsets the
        // window by one point, so counts may deviate by at most one.
        let mut seq = SobolSeq::new(8, Scramble::Seeded(5));
        let pts = seq.take_points(1024);
        for d in 0..8 {
            let mut counts = [0usize; 8];
            for p in &pts {
                counts[(p[d] * 8.0) as usize] += 1;
            }
            assert!(
                counts.iter().all(|&c| (127..=129).contains(&c)),
                "dim {d}: {counts:?}"
            );
        }
    }

    #[test]
    fn high_dimension_generation_works() {
        let mut seq = SobolSeq::new(3000, Scramble::Seeded(1));
        let p = seq.next_point();
        assert_eq!(p.len(), 3000);
        assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    /// Exact 2-D star discrepancy oracle over the corner-candidate grid.
    fn star_discrepancy_2d(pts: &[Vec<f64>]) -> f64 {
        let n = pts.len() as f64;
        let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let mut ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
        xs.push(1.0);
        ys.push(1.0);
        let mut worst = 0.0f64;
        for &x in &xs {
            for &y in &ys {
                let mut closed = 0usize;
                let mut open = 0usize;
                for p in pts {
                    if p[0] <= x && p[1] <= y {
                        closed += 1;
                    }
                    if p[0] < x && p[1] < y {
                        open += 1;
                    }
                }
                let vol = x * y;
                worst = worst.max((closed as f64 / n - vol).abs());
                worst = worst.max((open as f64 / n - vol).abs());
            }
        }
        worst
    }

    #[test]
    fn beats_uniform_sampling_discrepancy() {
        let mut sobol_d = Vec::new();
        let mut unif_d = Vec::new();
        for seed in 0..10u64 {
            let pts = SobolSeq::new(2, Scramble::Seeded(seed)).take_points(256);
            sobol_d.push(star_discrepancy_2d(&pts));
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let upts: Vec<Vec<f64>> = (0..256)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect();
            unif_d.push(star_discrepancy_2d(&upts));
        }
        sobol_d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        unif_d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med_sobol = 0.5 * (sobol_d[4] + sobol_d[5]);
        let med_unif = 0.5 * (unif_d[4] + unif_d[5]);
        assert!(
            med_sobol < med_unif,
            "median discrepancy sobol={med_sobol} uniform={med_unif}"
        );
    }

    #[test]
    fn generated_directions_extend_known_table() {
        // Dimension 8 is the first generated one; its stream must still
        // produce a valid net in the first 256 points (1-D balance).
        let mut seq = SobolSeq::new(9, Scramble::None);
        let pts = seq.take_points(256);
        let mut counts = [0usize; 4];
        for p in &pts {
            counts[(p[8] * 4.0) as usize] += 1;
        }
        assert!(
            counts.iter().all(|&c| (63..=65).contains(&c)),
            "{counts:?}"
        );
    }
}
