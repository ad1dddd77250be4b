//! Carrier-phase positioning on L1: float ambiguities from a code fix,
//! bounded exhaustive integer search, and the phase-only position fix.
//!
//! With undifferenced phases and an unknown receiver clock, adding the same
//! integer to every ambiguity is indistinguishable from a clock change of one
//! wavelength. The search therefore ranks equivalence classes of integer
//! vectors (vectors differing by a common shift); the member of the winning
//! class is then chosen by the code clock, i.e. the shift that best matches
//! the float estimates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::geo::{wavelength_l1, SPEED_OF_LIGHT};
use crate::measurement::{ObservationEpoch, SatelliteState};
use crate::solver::{solve_pvt, InitialGuess, PvtSolution, RangeMeasurement, SolverConfig};
use crate::{Error, Result};

/// L1 carrier phase of one satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMeasurement {
    pub satellite: SatelliteState,
    /// cycles
    pub phase: f64,
}

impl PhaseMeasurement {
    pub fn l1(epoch: &ObservationEpoch) -> Vec<Self> {
        epoch
            .observations
            .iter()
            .map(|o| PhaseMeasurement {
                satellite: o.satellite,
                phase: o.phase.phase_l1,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ambiguity {
    /// cycles
    pub float_estimate: f64,
    pub resolved: Option<i64>,
    /// Post-fit phase residual with the resolved integers, cycles.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AmbiguitySet {
    pub entries: BTreeMap<u32, Ambiguity>,
    /// Second-best over best residual sum of squares; infinite when the best
    /// fit is exact or unchallenged.
    pub ratio: Option<f64>,
}

impl AmbiguitySet {
    pub fn resolved(&self, svn: u32) -> Option<i64> {
        self.entries.get(&svn).and_then(|a| a.resolved)
    }

    pub fn is_resolved(&self) -> bool {
        !self.entries.is_empty() && self.entries.values().all(|a| a.resolved.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolveConfig {
    /// cycles around each rounded float
    pub search_radius: u32,
    pub ratio_threshold: f64,
    pub max_candidates: f64,
}

impl Default for ResolveConfig {
    fn default() -> Self {
        Self {
            search_radius: 3,
            ratio_threshold: 1.5,
            max_candidates: 1e7,
        }
    }
}

/// `phase - (range + c (d_s - d_r)) / lambda` at the code fix.
pub fn float_ambiguities(code: &PvtSolution, phases: &[PhaseMeasurement]) -> Result<AmbiguitySet> {
    if !code.converged {
        return Err(Error::NotConverged);
    }
    let lambda = wavelength_l1();
    let mut entries = BTreeMap::new();
    for p in phases {
        let range = p.satellite.position.distance(code.position);
        let predicted = range + SPEED_OF_LIGHT * (p.satellite.clock_bias - code.clock_bias);
        entries.insert(
            p.satellite.id.svn,
            Ambiguity {
                float_estimate: p.phase - predicted / lambda,
                resolved: None,
                residual: 0.0,
            },
        );
    }
    Ok(AmbiguitySet {
        entries,
        ratio: None,
    })
}

/// Orthonormal basis (as rows) of the complement of the design-matrix column
/// space at `position`: the directions a position/clock re-fit cannot absorb.
fn residual_space(phases: &[PhaseMeasurement], code: &PvtSolution) -> Result<DMatrix<f64>> {
    let n = phases.len();
    let mut g = DMatrix::zeros(n, 4);
    for (i, p) in phases.iter().enumerate() {
        let los = p.satellite.position.to_vector() - code.position.to_vector();
        let u = los / los.norm();
        g[(i, 0)] = -u.x;
        g[(i, 1)] = -u.y;
        g[(i, 2)] = -u.z;
        g[(i, 3)] = 1.0;
    }
    let gtg = g.transpose() * &g;
    let inv = gtg.try_inverse().ok_or(Error::DegenerateGeometry)?;
    let projector = DMatrix::identity(n, n) - &g * inv * g.transpose();
    let eig = SymmetricEigen::new(projector);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    if keep.len() != n - 4 {
        return Err(Error::DegenerateGeometry);
    }
    let mut basis = DMatrix::zeros(keep.len(), n);
    for (r, &i) in keep.iter().enumerate() {
        basis.row_mut(r).copy_from(&eig.eigenvectors.column(i).transpose());
    }
    Ok(basis)
}

#[derive(Debug, Clone)]
struct Ranked {
    score: f64,
    candidate: Vec<i64>,
}

/// Depth-first branch and bound over the integer box.
///
/// A subtree is cut when the real-valued minimum of its remaining terms
/// already exceeds the runner-up score, so every candidate that could change
/// the best or second-best class is still scored.
struct Search<'a> {
    /// basis columns scaled by lambda, satellite-major, `dim` entries each
    columns: Vec<f64>,
    dim: usize,
    /// per depth, orthonormal vectors spanning the columns not yet fixed
    spans: Vec<Vec<f64>>,
    center: &'a [i64],
    lower: &'a [i64],
    upper: &'a [i64],
    best: Option<Ranked>,
    second: Option<f64>,
    current: Vec<i64>,
    /// residual vector per depth, `dim` entries each
    stack: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram-Schmidt from the last column backwards: `spans[d]` is an orthonormal
/// basis of the columns `d..n`.
fn build_spans(columns: &[f64], dim: usize, n: usize) -> Vec<Vec<f64>> {
    let mut spans = vec![Vec::new(); n + 1];
    let mut basis: Vec<f64> = Vec::new();
    for d in (0..n).rev() {
        if basis.len() < dim * dim {
            let mut v = columns[d * dim..(d + 1) * dim].to_vec();
            for _ in 0..2 {
                for q in basis.chunks(dim) {
                    let p = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
                }
            }
            let norm = dot(&v, &v).sqrt();
            let scale = dot(&columns[d * dim..(d + 1) * dim], &columns[d * dim..(d + 1) * dim]).sqrt();
            if norm > 1e-10 * scale {
                basis.extend(v.iter().map(|x| x / norm));
            }
        }
        spans[d] = basis.clone();
    }
    spans
}

/// Values of `lo..=hi` ordered by distance from `c`, lower first on ties.
fn zigzag(c: i64, lo: i64, hi: i64) -> impl Iterator<Item = i64> {
    let c = c.clamp(lo, hi);
    let reach = (c - lo).max(hi - c);
    std::iter::once(c).chain((1..=reach).flat_map(move |k| {
        [c - k, c + k]
            .into_iter()
            .filter(move |v| (lo..=hi).contains(v))
    }))
}

impl Search<'_> {
    /// Whether two candidates differ by a common shift.
    fn same_class(a: &[i64], b: &[i64]) -> bool {
        let d = a[0] - b[0];
        a.iter().zip(b).all(|(x, y)| x - y == d)
    }

    fn offer(&mut self, score: f64) {
        let Some(best) = &self.best else {
            self.best = Some(Ranked {
                score,
                candidate: self.current.clone(),
            });
            return;
        };
        if Self::same_class(&best.candidate, &self.current) {
            return;
        }
        let wins = score < best.score
            || (score == best.score && self.current.as_slice() < best.candidate.as_slice());
        if wins {
            self.second = Some(best.score);
            self.best = Some(Ranked {
                score,
                candidate: self.current.clone(),
            });
        } else if self.second.is_none_or(|s| score < s) {
            self.second = Some(score);
        }
    }

    /// Squared distance of `s` from the span of the unfixed columns.
    fn lower_bound(&self, depth: usize, s: &[f64]) -> f64 {
        let m = self.dim;
        let span = &self.spans[depth];
        if span.len() == m * m {
            return 0.0;
        }
        let mut r = s.to_vec();
        for q in span.chunks(m) {
            let p = dot(q, &r);
            r.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
        }
        dot(&r, &r)
    }

    fn pruned(&self, bound: f64) -> bool {
        self.second.is_some_and(|s| bound > s * (1.0 + 1e-9) + 1e-18)
    }

    fn descend(&mut self, depth: usize) {
        let m = self.dim;
        let n = self.current.len();
        let parent = self.stack[depth * m..(depth + 1) * m].to_vec();
        if depth == n {
            self.offer(dot(&parent, &parent));
            return;
        }
        if self.pruned(self.lower_bound(depth, &parent)) {
            return;
        }
        let col = self.columns[depth * m..(depth + 1) * m].to_vec();
        let center = if depth + 1 == n {
            // vertex of the last one-dimensional parabola
            (dot(&parent, &col) / dot(&col, &col)).round() as i64
        } else {
            self.center[depth]
        };
        let (lo, hi) = (self.lower[depth], self.upper[depth]);
        for value in zigzag(center, lo, hi) {
            self.current[depth] = value;
            let base = (depth + 1) * m;
            for k in 0..m {
                self.stack[base + k] = parent[k] - col[k] * value as f64;
            }
            self.descend(depth + 1);
        }
    }
}

/// Bounded exhaustive integer search.
///
/// Every integer vector within `search_radius` of the rounded floats is
/// scored by the residual sum of squares (m^2) of a position-and-clock re-fit
/// of the phase ranges, linearized at the code fix. Vectors that differ by a
/// common shift score identically and count as one candidate; the best
/// class must beat the runner-up by `ratio_threshold`. Within the winning
/// class the shift closest to the floats is kept.
pub fn resolve_integers(
    floats: &AmbiguitySet,
    phases: &[PhaseMeasurement],
    code: &PvtSolution,
    config: &ResolveConfig,
) -> Result<AmbiguitySet> {
    let n = phases.len();
    if n < 5 {
        return Err(Error::InsufficientSatellites { needed: 5, got: n });
    }
    let f: Vec<f64> = phases
        .iter()
        .map(|p| {
            floats
                .entries
                .get(&p.satellite.id.svn)
                .map(|a| a.float_estimate)
                .ok_or(Error::UnknownSatellite(p.satellite.id.svn))
        })
        .collect::<Result<_>>()?;
    let width = 2.0 * config.search_radius as f64 + 1.0;
    let candidates = width.powi(n as i32);
    if candidates > config.max_candidates {
        return Err(Error::RadiusTooLarge {
            candidates,
            cap: config.max_candidates,
        });
    }

    let lambda = wavelength_l1();
    let basis = residual_space(phases, code)?;
    let float_vec = DVector::from_column_slice(&f);
    let target = &basis * &float_vec * lambda;
    let m = basis.nrows();
    let mut columns = Vec::with_capacity(n * m);
    for j in 0..n {
        columns.extend(basis.column(j).iter().map(|v| v * lambda));
    }
    let r = config.search_radius as i64;
    let rounded: Vec<i64> = f.iter().map(|v| v.round() as i64).collect();
    let lower: Vec<i64> = rounded.iter().map(|v| v - r).collect();
    let upper: Vec<i64> = rounded.iter().map(|v| v + r).collect();

    let mut stack = vec![0.0; (n + 1) * m];
    stack[..m].copy_from_slice(target.as_slice());
    let spans = build_spans(&columns, m, n);
    let mut search = Search {
        columns,
        dim: m,
        spans,
        center: &rounded,
        lower: &lower,
        upper: &upper,
        best: None,
        second: None,
        current: vec![0; n],
        stack,
    };
    search.descend(0);
    let best = search.best.ok_or(Error::DegenerateGeometry)?;
    let ratio = match search.second {
        None => f64::INFINITY,
        Some(s) if best.score == 0.0 => {
            if s > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        }
        Some(s) => s / best.score,
    };
    if ratio < config.ratio_threshold {
        return Err(Error::AmbiguityNotResolved {
            ratio,
            threshold: config.ratio_threshold,
        });
    }

    // Pick the class member nearest the floats, staying inside the box.
    let mean_offset = f
        .iter()
        .zip(&best.candidate)
        .map(|(fi, ni)| fi - *ni as f64)
        .sum::<f64>()
        / n as f64;
    let shift_lo = (0..n).map(|i| lower[i] - best.candidate[i]).max().unwrap_or(0);
    let shift_hi = (0..n).map(|i| upper[i] - best.candidate[i]).min().unwrap_or(0);
    let shift = (mean_offset.round() as i64).clamp(shift_lo, shift_hi);
    let integers: Vec<i64> = best.candidate.iter().map(|v| v + shift).collect();

    let misfit = DVector::from_iterator(n, f.iter().zip(&integers).map(|(fi, ni)| fi - *ni as f64));
    let residuals = basis.transpose() * (&basis * misfit);

    let mut entries = BTreeMap::new();
    for (i, p) in phases.iter().enumerate() {
        entries.insert(
            p.satellite.id.svn,
            Ambiguity {
                float_estimate: f[i],
                resolved: Some(integers[i]),
                residual: residuals[i],
            },
        );
    }
    Ok(AmbiguitySet {
        entries,
        ratio: Some(ratio),
    })
}

/// Position and clock from phase ranges `lambda (phase - N)`.
pub fn phase_position(
    phases: &[PhaseMeasurement],
    resolved: &AmbiguitySet,
    initial: &PvtSolution,
    config: &SolverConfig,
) -> Result<PvtSolution> {
    let lambda = wavelength_l1();
    let ranges: Vec<RangeMeasurement> = phases
        .iter()
        .map(|p| {
            let svn = p.satellite.id.svn;
            let n = resolved
                .resolved(svn)
                .ok_or(Error::UnresolvedAmbiguity(svn))?;
            Ok(RangeMeasurement::new(p.satellite, lambda * (p.phase - n as f64)))
        })
        .collect::<Result<_>>()?;
    solve_pvt(&ranges, InitialGuess::from(initial), config)
}
