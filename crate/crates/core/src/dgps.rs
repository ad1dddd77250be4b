//! Differential corrections: a reference station at a surveyed position
//! turns its own pseudoranges into per-satellite corrections that rovers add
//! to theirs.
//!
//! The station clock is unknown, so the raw differences carry a common
//! offset; the per-epoch mean is removed. The remaining common constant is
//! absorbed by the rover's clock estimate.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::geo::{Ecef, Epoch, Geodetic, EARTH_RADIUS, SPEED_OF_LIGHT};
use crate::measurement::{derive_seed, ObservationEpoch, SatelliteState};
use crate::solver::{solve_pvt, InitialGuess, PvtSolution, RangeMeasurement, SolverConfig};
use crate::{Error, Result};

/// Default correction staleness window, s.
pub const STALENESS_WINDOW: f64 = 5.0;
/// Default station-rover separation within which errors are fully common, m.
pub const CORRELATION_DISTANCE: f64 = 200e3;
/// Surveyed positions must lie within this distance of the surface, m.
const SURVEY_ALTITUDE_LIMIT: f64 = 10e3;

/// Approximate positions of the control-segment monitor stations:
/// (name, latitude deg, longitude deg, altitude m).
pub const PRESET_SITES: [(&str, f64, f64, f64); 5] = [
    ("hawaii", 21.56, -158.24, 0.0),
    ("kwajalein", 8.72, 167.73, 0.0),
    ("diego-garcia", -7.27, 72.37, 0.0),
    ("ascension", -7.95, -14.41, 0.0),
    ("colorado-springs", 38.80, -104.52, 1900.0),
];

pub fn preset_site(name: &str) -> Option<Geodetic> {
    PRESET_SITES
        .iter()
        .find(|(n, ..)| *n == name)
        .map(|&(_, lat, lon, alt)| Geodetic::from_degrees(lat, lon, alt))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStation {
    pub id: String,
    pub surveyed_position: Ecef,
}

impl ReferenceStation {
    pub fn new(id: impl Into<String>, surveyed_position: Ecef) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.contains([',', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!(
                "station id must be non-empty without commas or newlines, got {id:?}"
            )));
        }
        let alt = surveyed_position.norm() - EARTH_RADIUS;
        if !surveyed_position.is_finite() || alt.abs() > SURVEY_ALTITUDE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "surveyed position must be within 10 km of the surface, altitude {alt} m"
            )));
        }
        Ok(Self {
            id,
            surveyed_position,
        })
    }
}

/// Per-satellite pseudorange corrections from one station epoch, m.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionSet {
    pub epoch: Epoch,
    pub station: String,
    pub entries: BTreeMap<u32, f64>,
}

impl CorrectionSet {
    pub fn new(epoch: Epoch, station: impl Into<String>) -> Self {
        Self {
            epoch,
            station: station.into(),
            entries: BTreeMap::new(),
        }
    }
}

/// `prc_i = expected_i - pr_i - mean_j(expected_j - pr_j)` on L1, where the
/// expected value is the geometric range plus the broadcast satellite clock.
pub fn compute_corrections(station: &ReferenceStation, obs: &ObservationEpoch) -> Result<CorrectionSet> {
    if obs.len() < 4 {
        return Err(Error::CannotSeparateStationClock(obs.len()));
    }
    let raw: Vec<(u32, f64)> = obs
        .observations
        .iter()
        .map(|o| {
            let expected = o.satellite.position.distance(station.surveyed_position)
                + SPEED_OF_LIGHT * o.satellite.clock_bias;
            (o.satellite.id.svn, expected - o.code.pr_l1)
        })
        .collect();
    let clock = raw.iter().map(|(_, d)| d).sum::<f64>() / raw.len() as f64;
    let mut set = CorrectionSet::new(obs.epoch, station.id.clone());
    set.entries = raw.into_iter().map(|(svn, d)| (svn, d - clock)).collect();
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedEpoch {
    pub epoch: ObservationEpoch,
    /// satellites the station did not see
    pub dropped: usize,
    pub correction_epoch: Epoch,
}

/// Adds the corrections to L1 pseudoranges and drops satellites without one.
pub fn apply_corrections(rover: &ObservationEpoch, corr: &CorrectionSet, window: f64) -> Result<CorrectedEpoch> {
    let age = (rover.epoch.0 - corr.epoch.0).abs();
    if !(age <= window) {
        return Err(Error::StaleCorrections { age, window });
    }
    let mut out = rover.clone();
    out.observations.clear();
    for o in &rover.observations {
        if let Some(prc) = corr.entries.get(&o.satellite.id.svn) {
            let mut c = *o;
            c.code.pr_l1 += prc;
            out.observations.push(c);
        }
    }
    if out.is_empty() {
        return Err(Error::NoMatchedSatellites);
    }
    Ok(CorrectedEpoch {
        dropped: rover.len() - out.len(),
        epoch: out,
        correction_epoch: corr.epoch,
    })
}

/// Apply then solve on L1: the single per-epoch path shared by the
/// real-time and post-processed flows.
pub fn corrected_fix(
    rover: &ObservationEpoch,
    corr: &CorrectionSet,
    window: f64,
    config: &SolverConfig,
) -> Result<(CorrectedEpoch, PvtSolution)> {
    let corrected = apply_corrections(rover, corr, window)?;
    let fix = solve_pvt(&RangeMeasurement::l1(&corrected.epoch), InitialGuess::EARTH_CENTER, config)?;
    Ok((corrected, fix))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedSolution {
    pub epoch: Epoch,
    pub correction_epoch: Epoch,
    pub station: String,
    pub dropped: usize,
    pub solution: PvtSolution,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrectedSolutionLog {
    pub solutions: Vec<CorrectedSolution>,
    pub skipped: Vec<(Epoch, Error)>,
}

fn record(log: &mut CorrectedSolutionLog, rover: &ObservationEpoch, corr: &CorrectionSet, window: f64, config: &SolverConfig) {
    match corrected_fix(rover, corr, window, config) {
        Ok((c, solution)) => log.solutions.push(CorrectedSolution {
            epoch: rover.epoch,
            correction_epoch: c.correction_epoch,
            station: corr.station.clone(),
            dropped: c.dropped,
            solution,
        }),
        Err(e) => log.skipped.push((rover.epoch, e)),
    }
}

/// Streaming flow: each rover epoch uses the latest correction set not newer
/// than itself, subject to the staleness window.
pub fn realtime(
    rover: &[ObservationEpoch],
    stream: &[CorrectionSet],
    window: f64,
    config: &SolverConfig,
) -> CorrectedSolutionLog {
    let mut log = CorrectedSolutionLog::default();
    for e in rover {
        let latest = stream
            .iter()
            .filter(|c| c.epoch.0 <= e.epoch.0)
            .max_by(|a, b| a.epoch.0.total_cmp(&b.epoch.0));
        match latest {
            Some(c) => record(&mut log, e, c, window, config),
            None => log.skipped.push((e.epoch, Error::NoMatchedSatellites)),
        }
    }
    log
}

/// After-the-fact merge of rover and station logs on identical epochs.
pub fn post_process(
    rover: &[ObservationEpoch],
    reference: &[ObservationEpoch],
    station: &ReferenceStation,
    window: f64,
    config: &SolverConfig,
) -> CorrectedSolutionLog {
    let mut log = CorrectedSolutionLog::default();
    for e in rover {
        let Some(r) = reference.iter().find(|r| r.epoch == e.epoch) else {
            log.skipped.push((
                e.epoch,
                Error::InvalidArgument(format!("no reference epoch at {} s", e.epoch.0)),
            ));
            continue;
        };
        match compute_corrections(station, r) {
            Ok(c) => record(&mut log, e, &c, window, config),
            Err(err) => log.skipped.push((e.epoch, err)),
        }
    }
    log
}

/// A rover's standard fix, as sent to a central station.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetReport {
    pub rover_id: String,
    pub epoch: Epoch,
    pub solution: PvtSolution,
    pub satellites: Vec<SatelliteState>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertedFix {
    pub position: Ecef,
    /// s
    pub clock_bias: f64,
}

/// Central-station correction of reported fixes: the range corrections are
/// projected into (position, clock) space through the rover geometry,
/// `dx = (G^T G)^-1 G^T prc` with rows `(-u, 1)`.
pub fn inverted_dgps(reports: &[FleetReport], corr: &CorrectionSet, window: f64) -> Result<Vec<InvertedFix>> {
    reports
        .iter()
        .map(|r| {
            let age = (r.epoch.0 - corr.epoch.0).abs();
            if !(age <= window) {
                return Err(Error::StaleCorrections { age, window });
            }
            let n = r.satellites.len();
            if n < 4 {
                return Err(Error::InsufficientSatellites { needed: 4, got: n });
            }
            let mut g = DMatrix::zeros(n, 4);
            let mut prc = DVector::zeros(n);
            for (i, s) in r.satellites.iter().enumerate() {
                prc[i] = *corr
                    .entries
                    .get(&s.id.svn)
                    .ok_or(Error::UnknownSatellite(s.id.svn))?;
                let los = s.position.to_vector() - r.solution.position.to_vector();
                let u = los / los.norm();
                g[(i, 0)] = -u.x;
                g[(i, 1)] = -u.y;
                g[(i, 2)] = -u.z;
                g[(i, 3)] = 1.0;
            }
            let dx = g
                .svd(true, true)
                .solve(&prc, 1e-12)
                .map_err(|_| Error::DegenerateGeometry)?;
            Ok(InvertedFix {
                position: r.solution.position + Ecef::new(dx[0], dx[1], dx[2]),
                clock_bias: r.solution.clock_bias - dx[3] / SPEED_OF_LIGHT,
            })
        })
        .collect()
}

/// The rover's common-mode seed: shared with the station within the
/// correlation distance, independent beyond it.
pub fn rover_common_seed(common_seed: u64, separation: f64, correlation_distance: f64) -> u64 {
    if separation <= correlation_distance {
        common_seed
    } else {
        derive_seed(&[common_seed, 0x52_4F_56_45_52])
    }
}
