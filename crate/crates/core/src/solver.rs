//! Position and clock estimation from pseudoranges.
//!
//! The measurement model is `pr = |sat - pos| + c d_s + b` where the clock
//! state `b = -c d_r` is carried in metres, so a geometry-matrix row is
//! `(-u, 1)` with `u` the unit receiver-to-satellite vector.

use std::collections::BTreeSet;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3};

use crate::atmosphere::iono_free_pseudorange;
use crate::constellation::{visible_satellites, Constellation};
use crate::geo::{ecef_to_geodetic, Ecef, Epoch, EARTH_RADIUS, SPEED_OF_LIGHT};
use crate::measurement::{ObservationEpoch, SatelliteState};
use crate::{Error, Result};

/// Singular-value ratio below which a design matrix is treated as singular.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop once the 4-vector update norm falls below this, m.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 20,
        }
    }
}

/// One pseudorange paired with the broadcast state of its satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeMeasurement {
    pub satellite: SatelliteState,
    /// m
    pub pseudorange: f64,
}

impl RangeMeasurement {
    pub fn new(satellite: SatelliteState, pseudorange: f64) -> Self {
        Self {
            satellite,
            pseudorange,
        }
    }

    /// Single-frequency L1 code ranges.
    pub fn l1(epoch: &ObservationEpoch) -> Vec<Self> {
        epoch
            .observations
            .iter()
            .map(|o| Self::new(o.satellite, o.code.pr_l1))
            .collect()
    }

    /// Normalized ionosphere-free code ranges.
    pub fn iono_free(epoch: &ObservationEpoch) -> Vec<Self> {
        epoch
            .observations
            .iter()
            .map(|o| Self::new(o.satellite, iono_free_pseudorange(o.code.pr_l1, o.code.pr_l2).normalized))
            .collect()
    }

    /// `observed - predicted` and the unit line of sight at `position`.
    fn residual(&self, position: &Vector3<f64>, clock_m: f64) -> Result<(f64, Vector3<f64>)> {
        let sat = self.satellite.position.to_vector();
        let (range, range_lo) = compensated_distance(&sat, position);
        if range == 0.0 {
            return Err(Error::CoincidentPoints);
        }
        let los = (sat - position) / range;
        let residual = ((self.pseudorange - range) - range_lo)
            - SPEED_OF_LIGHT * self.satellite.clock_bias
            - clock_m;
        Ok((residual, los))
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `|a - b|` as an unevaluated sum `hi + lo`, accurate to well below one ulp
/// of `hi`. Near convergence the pseudorange residual is the small difference
/// of two ~2e7 m numbers, so plain evaluation leaves a few nm of noise that
/// would otherwise stall a 1e-8 m step criterion.
fn compensated_distance(a: &Vector3<f64>, b: &Vector3<f64>) -> (f64, f64) {
    let mut sum = 0.0;
    let mut err = 0.0;
    for k in 0..3 {
        let (d, d_lo) = two_sum(a[k], -b[k]);
        let sq = d * d;
        let sq_lo = d.mul_add(d, -sq);
        let (s, e) = two_sum(sum, sq);
        sum = s;
        err += e + sq_lo + 2.0 * d * d_lo + d_lo * d_lo;
    }
    let hi = sum.sqrt();
    if hi == 0.0 {
        return (0.0, 0.0);
    }
    let lo = ((-hi).mul_add(hi, sum) + err) / (2.0 * hi);
    (hi, lo)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopValues {
    pub gdop: f64,
    pub pdop: f64,
    pub hdop: f64,
    pub vdop: f64,
    pub tdop: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvtSolution {
    pub position: Ecef,
    /// Receiver clock offset `d_r`, s.
    pub clock_bias: f64,
    /// Post-fit `observed - predicted`, m, in measurement order.
    pub residuals: Vec<f64>,
    pub svns: Vec<u32>,
    pub iterations: usize,
    pub converged: bool,
    pub dop: DopValues,
}

impl PvtSolution {
    /// Clock state in metres, `-c d_r`.
    pub fn clock_term(&self) -> f64 {
        -SPEED_OF_LIGHT * self.clock_bias
    }

    pub fn residual_rms(&self) -> f64 {
        if self.residuals.is_empty() {
            return 0.0;
        }
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / self.residuals.len() as f64).sqrt()
    }
}

/// Initial state for the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InitialGuess {
    pub position: Ecef,
    /// s
    pub clock_bias: f64,
}

impl InitialGuess {
    /// Earth centre, zero clock.
    pub const EARTH_CENTER: InitialGuess = InitialGuess {
        position: Ecef::ORIGIN,
        clock_bias: 0.0,
    };
}

impl From<&PvtSolution> for InitialGuess {
    fn from(s: &PvtSolution) -> Self {
        Self {
            position: s.position,
            clock_bias: s.clock_bias,
        }
    }
}

/// Direction-cosine design matrix, one `(-u, 1)` row per satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryMatrix {
    pub rows: DMatrix<f64>,
    pub receiver: Ecef,
}

pub fn geometry_matrix(sat_positions: &[Ecef], receiver: Ecef) -> Result<GeometryMatrix> {
    if sat_positions.len() < 4 {
        return Err(Error::InsufficientSatellites {
            needed: 4,
            got: sat_positions.len(),
        });
    }
    geometry_rows(sat_positions, receiver)
}

fn geometry_rows(sat_positions: &[Ecef], receiver: Ecef) -> Result<GeometryMatrix> {
    let mut rows = DMatrix::zeros(sat_positions.len(), 4);
    let r = receiver.to_vector();
    for (i, s) in sat_positions.iter().enumerate() {
        let los = s.to_vector() - r;
        let n = los.norm();
        if n == 0.0 {
            return Err(Error::CoincidentPoints);
        }
        let u = los / n;
        rows[(i, 0)] = -u.x;
        rows[(i, 1)] = -u.y;
        rows[(i, 2)] = -u.z;
        rows[(i, 3)] = 1.0;
    }
    Ok(GeometryMatrix { rows, receiver })
}

fn is_rank_deficient(m: &DMatrix<f64>) -> bool {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    !(max > 0.0) || min / max < RANK_TOLERANCE || sv.len() < m.ncols()
}

/// `Q = (G^T G)^-1`; horizontal and vertical terms in the local east-north-up frame.
pub fn dilution_of_precision(g: &GeometryMatrix) -> Result<DopValues> {
    if g.rows.nrows() < 4 || is_rank_deficient(&g.rows) {
        return Err(Error::DegenerateGeometry);
    }
    let gtg = g.rows.transpose() * &g.rows;
    let normal = Matrix4::from_iterator(gtg.iter().copied());
    let q = normal.try_inverse().ok_or(Error::DegenerateGeometry)?;
    let q_pos: Matrix3<f64> = q.fixed_view::<3, 3>(0, 0).into_owned();
    let [e, n, u] = ecef_to_geodetic(g.receiver)?.enu_basis();
    let rot = Matrix3::from_rows(&[e.transpose(), n.transpose(), u.transpose()]);
    let q_enu = rot * q_pos * rot.transpose();
    let dop = DopValues {
        gdop: q.trace().sqrt(),
        pdop: (q[(0, 0)] + q[(1, 1)] + q[(2, 2)]).sqrt(),
        hdop: (q_enu[(0, 0)] + q_enu[(1, 1)]).sqrt(),
        vdop: q_enu[(2, 2)].sqrt(),
        tdop: q[(3, 3)].sqrt(),
    };
    if [dop.gdop, dop.pdop, dop.hdop, dop.vdop, dop.tdop]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
    {
        Ok(dop)
    } else {
        Err(Error::DegenerateGeometry)
    }
}

/// Least-squares step for `rows * step = residuals`.
fn lsq_step(rows: &DMatrix<f64>, residuals: &DVector<f64>) -> Result<DVector<f64>> {
    if is_rank_deficient(rows) {
        return Err(Error::DegenerateGeometry);
    }
    rows.clone()
        .svd(true, true)
        .solve(residuals, 0.0)
        .map_err(|_| Error::DegenerateGeometry)
}

struct Linearization {
    rows: DMatrix<f64>,
    residuals: DVector<f64>,
}

fn linearize(meas: &[RangeMeasurement], position: &Vector3<f64>, clock_m: f64) -> Result<Linearization> {
    let n = meas.len();
    let mut rows = DMatrix::zeros(n, 4);
    let mut residuals = DVector::zeros(n);
    for (i, m) in meas.iter().enumerate() {
        let (residual, u) = m.residual(position, clock_m)?;
        rows[(i, 0)] = -u.x;
        rows[(i, 1)] = -u.y;
        rows[(i, 2)] = -u.z;
        rows[(i, 3)] = 1.0;
        residuals[i] = residual;
    }
    Ok(Linearization { rows, residuals })
}

fn finish(
    meas: &[RangeMeasurement],
    position: Vector3<f64>,
    clock_m: f64,
    iterations: usize,
    converged: bool,
    extra_row: Option<[f64; 4]>,
) -> Result<PvtSolution> {
    let lin = linearize(meas, &position, clock_m)?;
    let mut rows = lin.rows;
    if let Some(row) = extra_row {
        let n = rows.nrows();
        rows = rows.insert_row(n, 0.0);
        for (j, v) in row.iter().enumerate() {
            rows[(n, j)] = *v;
        }
    }
    let receiver = Ecef::from_vector(&position);
    let dop = dilution_of_precision(&GeometryMatrix { rows, receiver })?;
    Ok(PvtSolution {
        position: receiver,
        clock_bias: -clock_m / SPEED_OF_LIGHT,
        residuals: lin.residuals.iter().copied().collect(),
        svns: meas.iter().map(|m| m.satellite.id.svn).collect(),
        iterations,
        converged,
        dop,
    })
}

fn gauss_newton(
    meas: &[RangeMeasurement],
    initial: InitialGuess,
    config: &SolverConfig,
) -> Result<PvtSolution> {
    let mut position = initial.position.to_vector();
    let mut clock_m = -SPEED_OF_LIGHT * initial.clock_bias;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let lin = linearize(meas, &position, clock_m)?;
        let step = lsq_step(&lin.rows, &lin.residuals)?;
        position += Vector3::new(step[0], step[1], step[2]);
        clock_m += step[3];
        if !(position.iter().all(|v| v.is_finite()) && clock_m.is_finite()) {
            break;
        }
        if step.norm() < config.tolerance {
            converged = true;
            break;
        }
    }
    if !(position.iter().all(|v| v.is_finite()) && clock_m.is_finite()) {
        return Err(Error::DegenerateGeometry);
    }
    finish(meas, position, clock_m, iterations, converged, None)
}

/// Iterative least-squares position and receiver clock.
///
/// Needs at least four satellites. If the iteration fails to converge from
/// `initial`, it is restarted once from the feasible three-sphere
/// intersection of the first three measurements; a still-unconverged result
/// is returned with `converged = false`.
pub fn solve_pvt(
    meas: &[RangeMeasurement],
    initial: InitialGuess,
    config: &SolverConfig,
) -> Result<PvtSolution> {
    if meas.len() < 4 {
        return Err(Error::InsufficientSatellites {
            needed: 4,
            got: meas.len(),
        });
    }
    let first = gauss_newton(meas, initial, config);
    match first {
        Ok(ref s) if s.converged => first,
        _ => {
            let centers = [0, 1, 2].map(|i| meas[i].satellite.position);
            let ranges = [0, 1, 2].map(|i| {
                meas[i].pseudorange - SPEED_OF_LIGHT * meas[i].satellite.clock_bias
            });
            let restart = trilaterate_three_spheres(centers, ranges)
                .and_then(|t| select_feasible(&t))
                .and_then(|p| {
                    gauss_newton(
                        meas,
                        InitialGuess {
                            position: p,
                            clock_bias: 0.0,
                        },
                        config,
                    )
                });
            match (first, restart) {
                (_, Ok(r)) if r.converged => Ok(r),
                (Ok(f), _) => Ok(f),
                (Err(_), Ok(r)) => Ok(r),
                (Err(e), Err(_)) => Err(e),
            }
        }
    }
}

fn constraint_radius(meas: &[RangeMeasurement], known_altitude: f64) -> Result<f64> {
    if meas.len() < 3 {
        return Err(Error::InsufficientSatellites {
            needed: 3,
            got: meas.len(),
        });
    }
    let target = EARTH_RADIUS + known_altitude;
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "altitude {known_altitude} m puts the constraint sphere inside the Earth centre"
        )));
    }
    Ok(target)
}

/// Unit vector towards the mean satellite position.
fn centroid_direction(meas: &[RangeMeasurement]) -> Result<Vector3<f64>> {
    let centroid: Vector3<f64> = meas.iter().map(|m| m.satellite.position.to_vector()).sum();
    if centroid.norm() == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    Ok(centroid.normalize())
}

fn constrained_gauss_newton(
    meas: &[RangeMeasurement],
    target: f64,
    position: Vector3<f64>,
    mut clock_m: f64,
    config: &SolverConfig,
) -> Result<PvtSolution> {
    if position.norm() == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    // Gauss-Newton in the tangent plane, projected back onto the sphere.
    let mut position = position.normalize() * target;
    let max_range = meas.iter().map(|m| m.pseudorange.abs()).fold(0.0, f64::max);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let lin = linearize(meas, &position, clock_m)?;
        let radial = position.normalize();
        let helper = if radial.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let t1 = radial.cross(&helper).normalize();
        let t2 = radial.cross(&t1);
        let mut reduced = DMatrix::zeros(meas.len(), 3);
        for i in 0..meas.len() {
            let u = Vector3::new(lin.rows[(i, 0)], lin.rows[(i, 1)], lin.rows[(i, 2)]);
            reduced[(i, 0)] = u.dot(&t1);
            reduced[(i, 1)] = u.dot(&t2);
            reduced[(i, 2)] = 1.0;
        }
        let step = lsq_step(&reduced, &lin.residuals)?;
        // Near-tangent roots amplify rounding in the residuals; no step can be
        // resolved below this.
        let floor = f64::EPSILON * max_range / reduced.clone().svd(false, false).singular_values.min();
        position = (position + t1 * step[0] + t2 * step[1]).normalize() * target;
        clock_m += step[2];
        if !(position.iter().all(|v| v.is_finite()) && clock_m.is_finite()) {
            return Err(Error::DegenerateGeometry);
        }
        if step.norm() < config.tolerance.max(floor) {
            converged = true;
            break;
        }
    }
    let radial = position.normalize();
    finish(
        meas,
        position,
        clock_m,
        iterations,
        converged,
        Some([radial.x, radial.y, radial.z, 0.0]),
    )
}

/// Three satellites plus the constraint `|pos| = EARTH_RADIUS + altitude`.
///
/// The constraint is enforced exactly at every step (equality-constrained
/// Gauss-Newton), so with more than three satellites it holds while the
/// pseudorange residuals absorb any inconsistency. An Earth-centre initial
/// position is replaced by the sub-satellite centroid lifted to the
/// constraint sphere.
///
/// With three satellites the system generally has two exact solutions on
/// the sphere; this converges to the one the start leads to. See
/// [`altitude_aided_roots`] and [`solve_altitude_aided_with_almanac`].
pub fn solve_altitude_aided(
    meas: &[RangeMeasurement],
    known_altitude: f64,
    initial: InitialGuess,
    config: &SolverConfig,
) -> Result<PvtSolution> {
    let target = constraint_radius(meas, known_altitude)?;
    let mut position = initial.position.to_vector();
    if position.norm() < 1.0 {
        position = centroid_direction(meas)? * target;
    }
    constrained_gauss_newton(meas, target, position, -SPEED_OF_LIGHT * initial.clock_bias, config)
}

/// Distinct converged altitude-aided solutions reached from a spread of
/// starts on the constraint sphere around the sub-satellite centroid,
/// ordered by angular distance from it.
pub fn altitude_aided_roots(
    meas: &[RangeMeasurement],
    known_altitude: f64,
    config: &SolverConfig,
) -> Result<Vec<PvtSolution>> {
    let target = constraint_radius(meas, known_altitude)?;
    let axis = centroid_direction(meas)?;
    let helper = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    let mut starts = vec![axis];
    for tilt in [20f64, 40.0, 60.0] {
        let (st, ct) = tilt.to_radians().sin_cos();
        for k in 0..8 {
            let (sa, ca) = (std::f64::consts::TAU * k as f64 / 8.0).sin_cos();
            starts.push(axis * ct + (e1 * ca + e2 * sa) * st);
        }
    }
    let mut seeds = sphere_intersection_seeds(&meas[..3], target);
    seeds.extend(starts.into_iter().map(|d| (d * target, 0.0)));
    let mut roots: Vec<PvtSolution> = Vec::new();
    let mut last_err = Error::DegenerateGeometry;
    for (position, clock_m) in seeds {
        match constrained_gauss_newton(meas, target, position, clock_m, config) {
            Ok(s) if s.converged => {
                if roots.iter().all(|r| r.position.distance(s.position) > 1.0) {
                    roots.push(s);
                }
            }
            Ok(_) => last_err = Error::NotConverged,
            Err(e) => last_err = e,
        }
    }
    if roots.is_empty() {
        return Err(last_err);
    }
    let angle = |s: &PvtSolution| s.position.to_vector().normalize().dot(&axis);
    roots.sort_by(|a, b| angle(b).total_cmp(&angle(a)));
    Ok(roots)
}

/// Candidate (position, clock) pairs for three ranges on a sphere of radius
/// `target`. Subtracting `|x|^2 = target^2` from each range equation leaves
/// a linear system in `x` whose solution is quadratic in the clock, so
/// the constraint becomes a quartic in the clock term.
fn sphere_intersection_seeds(meas: &[RangeMeasurement], target: f64) -> Vec<(Vector3<f64>, f64)> {
    let sats: Vec<Vector3<f64>> = meas.iter().map(|m| m.satellite.position.to_vector()).collect();
    let a = Matrix3::from_rows(&[sats[0].transpose(), sats[1].transpose(), sats[2].transpose()]);
    let Some(inv) = a.try_inverse() else { return Vec::new() };
    // rhs_i = (R^2 + |s_i|^2 - p_i^2)/2 + p_i b - b^2/2, with b in units of `scale`
    let scale = 1e7;
    let pr = Vector3::from_fn(|i, _| meas[i].pseudorange);
    let c0 = Vector3::from_fn(|i, _| 0.5 * (target * target + sats[i].norm_squared() - pr[i] * pr[i]));
    let p0 = inv * c0;
    let p1 = inv * pr * scale;
    let p2 = inv * Vector3::repeat(-0.5 * scale * scale);
    let coeffs = [
        p2.norm_squared(),
        2.0 * p1.dot(&p2),
        p1.norm_squared() + 2.0 * p0.dot(&p2),
        2.0 * p0.dot(&p1),
        p0.norm_squared() - target * target,
    ];
    if !(coeffs.iter().all(|c| c.is_finite()) && coeffs[0] > 0.0) {
        return Vec::new();
    }
    let mut companion = Matrix4::zeros();
    for j in 0..4 {
        companion[(0, j)] = -coeffs[j + 1] / coeffs[0];
    }
    for i in 1..4 {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .filter_map(|b| {
            let x = p0 + p1 * b + p2 * b * b;
            (x.norm() > 0.0 && x.iter().all(|v| v.is_finite())).then(|| (x.normalize() * target, b * scale))
        })
        .collect()
}

/// Cold-start altitude-aided fix for a receiver that tracks every
/// satellite above `mask`. Among the candidate roots it prefers, in order:
/// fewest tracked satellites the almanac puts below the mask, fewest
/// untracked ones it puts above, smallest residual.
pub fn solve_altitude_aided_with_almanac(
    meas: &[RangeMeasurement],
    known_altitude: f64,
    almanac: &Constellation,
    t: Epoch,
    mask: f64,
    config: &SolverConfig,
) -> Result<PvtSolution> {
    let tracked: BTreeSet<u32> = meas.iter().map(|m| m.satellite.id.svn).collect();
    let mut best: Option<((usize, usize), f64, PvtSolution)> = None;
    for root in altitude_aided_roots(meas, known_altitude, config)? {
        let g = ecef_to_geodetic(root.position)?;
        let predicted: BTreeSet<u32> = visible_satellites(almanac, &g, mask, t)
            .iter()
            .map(|v| v.id.svn)
            .collect();
        let score = (
            tracked.difference(&predicted).count(),
            predicted.difference(&tracked).count(),
        );
        let rms = root.residual_rms();
        let better = match &best {
            None => true,
            Some((b, r, _)) => score < *b || (score == *b && rms < r - 1e-6),
        };
        if better {
            best = Some((score, rms, root));
        }
    }
    best.map(|(_, _, s)| s).ok_or(Error::DegenerateGeometry)
}

/// Altitude-aided fix for a sequence of epochs: warm-started from the last
/// fix when there is one, otherwise a cold start resolved by the almanac.
pub fn altitude_aided_fix(
    meas: &[RangeMeasurement],
    known_altitude: f64,
    last_fix: Option<&PvtSolution>,
    almanac: &Constellation,
    t: Epoch,
    mask: f64,
    config: &SolverConfig,
) -> Result<PvtSolution> {
    match last_fix {
        Some(prev) => solve_altitude_aided(meas, known_altitude, prev.into(), config),
        None => solve_altitude_aided_with_almanac(meas, known_altitude, almanac, t, mask, config),
    }
}

/// The two intersection points of three spheres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrilaterationResult {
    pub point_a: Ecef,
    pub point_b: Ecef,
}

pub fn trilaterate_three_spheres(centers: [Ecef; 3], ranges: [f64; 3]) -> Result<TrilaterationResult> {
    let [p1, p2, p3] = centers.map(|c| c.to_vector());
    let [r1, r2, r3] = ranges;
    let d_vec = p2 - p1;
    let d = d_vec.norm();
    let scale = d.max((p3 - p1).norm());
    if d == 0.0 || !scale.is_finite() {
        return Err(Error::DegenerateGeometry);
    }
    let ex = d_vec / d;
    let i = ex.dot(&(p3 - p1));
    let perp = p3 - p1 - i * ex;
    if perp.norm() <= 1e-9 * scale {
        return Err(Error::DegenerateGeometry);
    }
    let ey = perp.normalize();
    let ez = ex.cross(&ey);
    let j = ey.dot(&(p3 - p1));
    let x = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let y = (r1 * r1 - r3 * r3 + i * i + j * j) / (2.0 * j) - (i / j) * x;
    let z2 = r1 * r1 - x * x - y * y;
    let base = p1 + x * ex + y * ey;
    if z2 < 0.0 {
        let violations = [
            (base - p1).norm() - r1,
            (base - p2).norm() - r2,
            (base - p3).norm() - r3,
        ];
        return Err(Error::NoSolution { violations });
    }
    let z = z2.sqrt();
    Ok(TrilaterationResult {
        point_a: Ecef::from_vector(&(base + z * ez)),
        point_b: Ecef::from_vector(&(base - z * ez)),
    })
}

/// Radial tie threshold for [`select_feasible`], m.
pub const FEASIBILITY_TIE: f64 = 1.0;

/// Keeps the candidate whose distance from the Earth centre is closer to the
/// surface.
pub fn select_feasible(r: &TrilaterationResult) -> Result<Ecef> {
    let da = (r.point_a.norm() - EARTH_RADIUS).abs();
    let db = (r.point_b.norm() - EARTH_RADIUS).abs();
    if (da - db).abs() <= FEASIBILITY_TIE {
        return Err(Error::AmbiguousCandidates {
            separation: (da - db).abs(),
        });
    }
    Ok(if da < db { r.point_a } else { r.point_b })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdopSelection {
    /// Indices into the candidate slice, ascending.
    pub indices: Vec<usize>,
    pub dop: DopValues,
}

/// Exhaustive search for the `k`-subset with the lowest GDOP. Ties keep the
/// lexicographically first subset.
pub fn select_lowest_gdop(candidates: &[Ecef], receiver: Ecef, k: usize) -> Result<GdopSelection> {
    if k < 4 {
        return Err(Error::InvalidArgument(format!("subset size {k} below 4")));
    }
    if candidates.len() < k {
        return Err(Error::InsufficientSatellites {
            needed: k,
            got: candidates.len(),
        });
    }
    let mut best: Option<GdopSelection> = None;
    for indices in (0..candidates.len()).combinations(k) {
        let subset: Vec<Ecef> = indices.iter().map(|&i| candidates[i]).collect();
        let Ok(dop) = geometry_matrix(&subset, receiver).and_then(|g| dilution_of_precision(&g))
        else {
            continue;
        };
        if best.as_ref().is_none_or(|b| dop.gdop < b.dop.gdop) {
            best = Some(GdopSelection { indices, dop });
        }
    }
    best.ok_or(Error::DegenerateGeometry)
}

/// Altitude above which the export limit applies, m.
pub const EXPORT_ALTITUDE_LIMIT: f64 = 18_000.0;
/// Speed above which the export limit applies, m/s.
pub const EXPORT_SPEED_LIMIT: f64 = 515.0;

/// `true` when the receiver must stop reporting: both limits exceeded at once.
pub fn export_limit_check(position: Ecef, speed: f64) -> bool {
    position.altitude() > EXPORT_ALTITUDE_LIMIT && speed > EXPORT_SPEED_LIMIT
}
