//! Dominance, Pareto-front extraction, exact bi-objective hypervolume,
//! and hypervolume improvement. Maximization convention throughout.

use crate::error::{Error, Result};

/// Floor inside the log-hypervolume difference.
pub const LOG_HV_EPS: f64 = 1e-12;

/// True iff `a` dominates `b`: componentwise >= with at least one strict.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "objective dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dominates_unchecked(a, b))
}

pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the nondominated members of `points`.
pub fn pareto_front_indices(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, other)| j != i && dominates_unchecked(other, &points[i]))
        })
        .collect()
}

/// Exact hypervolume dominated by `front` above the reference point `r`,
/// bi-objective only. Points below `r` in any coordinate are clipped to
/// `r` (contributing zero area in that direction), never rejected.
pub fn hypervolume(front: &[Vec<f64>], r: &[f64]) -> Result<f64> {
    if r.len() != 2 || front.iter().any(|v| v.len() != 2) {
        return Err(Error::Unsupported(
            "exact hypervolume is implemented for exactly 2 objectives".into(),
        ));
    }
    let mut pts: Vec<[f64; 2]> = front
        .iter()
        .map(|v| [v[0].max(r[0]), v[1].max(r[1])])
        .collect();
    sort_desc(&mut pts);
    Ok(sweep(&pts, r))
}

/// HV(front ∪ candidates | r) − HV(front | r); nonnegative, and zero when
/// every candidate is dominated.
pub fn hvi(candidates: &[Vec<f64>], front: &[Vec<f64>], r: &[f64]) -> Result<f64> {
    let base = hypervolume(front, r)?;
    let mut union: Vec<Vec<f64>> = front.to_vec();
    union.extend(candidates.iter().cloned());
    Ok((hypervolume(&union, r)? - base).max(0.0))
}

/// log10(hv_reference − hv + ε) with ε = 1e-12. Returns the value and a
/// flag set when `hv` exceeded the reference and the gap was clamped.
pub fn log_hv_difference(hv_reference: f64, hv: f64) -> (f64, bool) {
    let gap = hv_reference - hv;
    if gap < 0.0 {
        (LOG_HV_EPS.log10(), true)
    } else {
        ((gap + LOG_HV_EPS).log10(), false)
    }
}

fn sort_desc(pts: &mut [[f64; 2]]) {
    pts.sort_by(|a, b| {
        b[0].partial_cmp(&a[0])
            .unwrap()
            .then(b[1].partial_cmp(&a[1]).unwrap())
    });
}

/// Rectangle sweep over points sorted descending by the first objective.
/// Dominated and duplicate points contribute nothing.
fn sweep(sorted: &[[f64; 2]], r: &[f64]) -> f64 {
    let mut hv = 0.0;
    let mut level = r[1];
    for p in sorted {
        if p[1] > level {
            hv += (p[0] - r[0]) * (p[1] - level);
            level = p[1];
        }
    }
    hv
}

/// A clipped, pre-sorted front with cached hypervolume, for the hot
/// per-draw improvement queries inside the acquisition estimators.
#[derive(Debug, Clone)]
pub struct SortedFront {
    pts: Vec<[f64; 2]>,
    r: [f64; 2],
    hv: f64,
}

impl SortedFront {
    pub fn from_points(points: &[Vec<f64>], r: &[f64]) -> Self {
        let mut pts: Vec<[f64; 2]> = points
            .iter()
            .map(|v| [v[0].max(r[0]), v[1].max(r[1])])
            .collect();
        sort_desc(&mut pts);
        let hv = sweep(&pts, r);
        SortedFront {
            pts,
            r: [r[0], r[1]],
            hv,
        }
    }

    pub fn hv(&self) -> f64 {
        self.hv
    }

    /// HVI of a batch of points against this front.
    pub fn hvi_batch(&self, cands: &[[f64; 2]]) -> f64 {
        let mut union: Vec<[f64; 2]> = self
            .pts
            .iter()
            .copied()
            .chain(
                cands
                    .iter()
                    .map(|p| [p[0].max(self.r[0]), p[1].max(self.r[1])]),
            )
            .collect();
        sort_desc(&mut union);
        (sweep(&union, &self.r) - self.hv).max(0.0)
    }
}

/// One evaluated design with its objective vector.
#[derive(Debug, Clone)]
pub struct ArchiveEntry {
    pub point: Vec<f64>,
    pub objectives: Vec<f64>,
    pub iteration: usize,
}

/// Archive of all observations with a cached nondominated front and a
/// reference point for hypervolume bookkeeping. Single-writer.
#[derive(Debug, Clone, Default)]
pub struct ParetoArchive {
    entries: Vec<ArchiveEntry>,
    front: Vec<usize>,
    reference: Option<Vec<f64>>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, point: Vec<f64>, objectives: Vec<f64>, iteration: usize) {
        let idx = self.entries.len();
        let dominated = self
            .front
            .iter()
            .any(|&f| dominates_unchecked(&self.entries[f].objectives, &objectives));
        if !dominated {
            self.front
                .retain(|&f| !dominates_unchecked(&objectives, &self.entries[f].objectives));
            self.front.push(idx);
        }
        self.entries.push(ArchiveEntry {
            point,
            objectives,
            iteration,
        });
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn front(&self) -> Vec<&ArchiveEntry> {
        self.front.iter().map(|&i| &self.entries[i]).collect()
    }

    pub fn front_objectives(&self) -> Vec<Vec<f64>> {
        self.front
            .iter()
            .map(|&i| self.entries[i].objectives.clone())
            .collect()
    }

    /// Freezes the reference point; later insertions below it are clipped
    /// during hypervolume computation.
    pub fn set_reference(&mut self, r: Vec<f64>) {
        self.reference = Some(r);
    }

    pub fn reference(&self) -> Option<&[f64]> {
        self.reference.as_deref()
    }

    /// Hypervolume of the cached front against the frozen reference point.
    pub fn hypervolume(&self) -> Result<f64> {
        let r = self.reference.as_ref().ok_or_else(|| {
            Error::InvalidInput("archive reference point has not been set".into())
        })?;
        hypervolume(&self.front_objectives(), r)
    }

    /// Hypervolume of the front restricted to the first `n` entries, used
    /// to reconstruct the trace over the initial design.
    pub fn hypervolume_prefix(&self, n: usize) -> Result<f64> {
        let r = self.reference.as_ref().ok_or_else(|| {
            Error::InvalidInput("archive reference point has not been set".into())
        })?;
        let pts: Vec<Vec<f64>> = self.entries[..n.min(self.entries.len())]
            .iter()
            .map(|e| e.objectives.clone())
            .collect();
        let front: Vec<Vec<f64>> = pareto_front_indices(&pts)
            .into_iter()
            .map(|i| pts[i].clone())
            .collect();
        hypervolume(&front, r)
    }
}
