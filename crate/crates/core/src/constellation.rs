//! Nominal 24-satellite constellation, circular-orbit propagation and
//! visibility.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;

use crate::geo::{
    ecef_to_geodetic, inertial_to_ecef, Ecef, Epoch, Geodetic, INCLINATION, ORBIT_PERIOD,
    ORBIT_RADIUS,
};
use crate::{Error, Result};

pub const PLANES: usize = 6;
pub const SLOTS_PER_PLANE: usize = 4;
/// Extra in-plane phase applied per plane index, rad (Walker 24/6/1 phasing).
pub const PLANE_PHASE_OFFSET: f64 = 15.0 * std::f64::consts::PI / 180.0;

/// Orbital plane letter A-F.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Plane(u8);

impl Plane {
    pub fn new(letter: char) -> Result<Self> {
        match letter {
            'A'..='F' => Ok(Plane(letter as u8 - b'A')),
            _ => Err(Error::InvalidArgument(format!("plane {letter:?} not in A-F"))),
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index < PLANES {
            Ok(Plane(index as u8))
        } else {
            Err(Error::InvalidArgument(format!("plane index {index} out of range")))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }
}

/// Plane/slot designation (e.g. `B3`) plus the NAVSTAR space vehicle number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SatelliteId {
    pub plane: Plane,
    pub slot: u8,
    pub svn: u32,
}

impl SatelliteId {
    pub fn new(plane: Plane, slot: u8, svn: u32) -> Result<Self> {
        if !(1..=SLOTS_PER_PLANE as u8).contains(&slot) {
            return Err(Error::InvalidArgument(format!("slot {slot} not in 1-4")));
        }
        if svn == 0 {
            return Err(Error::InvalidArgument("svn must be positive".into()));
        }
        Ok(Self { plane, slot, svn })
    }
}

impl fmt::Display for SatelliteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{} (SVN {})", self.plane.letter(), self.slot, self.svn)
    }
}

/// Circular orbit of one satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalElements {
    pub id: SatelliteId,
    /// m
    pub radius: f64,
    /// rad
    pub inclination: f64,
    /// Right ascension of the ascending node, rad.
    pub raan: f64,
    /// Argument of latitude at t = 0, rad.
    pub phase_at_epoch: f64,
    /// s
    pub period: f64,
}

impl OrbitalElements {
    /// Argument of latitude at `t`.
    pub fn argument_of_latitude(&self, t: Epoch) -> f64 {
        self.phase_at_epoch + TAU * t.0 / self.period
    }

    /// Position in the inertial frame.
    pub fn inertial_position(&self, t: Epoch) -> Ecef {
        let (su, cu) = self.argument_of_latitude(t).sin_cos();
        let (si, ci) = self.inclination.sin_cos();
        let (so, co) = self.raan.sin_cos();
        Ecef::new(
            self.radius * (cu * co - su * ci * so),
            self.radius * (cu * so + su * ci * co),
            self.radius * su * si,
        )
    }

    /// Earth-fixed position at `t`.
    pub fn propagate(&self, t: Epoch) -> Ecef {
        inertial_to_ecef(self.inertial_position(t), t)
    }

    /// Circular orbital speed, m/s.
    pub fn speed(&self) -> f64 {
        TAU * self.radius / self.period
    }
}

/// Free-function form of [`OrbitalElements::propagate`].
pub fn propagate(el: &OrbitalElements, t: Epoch) -> Ecef {
    el.propagate(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub satellites: Vec<OrbitalElements>,
}

impl Constellation {
    /// Six planes A-F at 60 deg node spacing, four slots per plane at 90 deg,
    /// each plane shifted by [`PLANE_PHASE_OFFSET`] times its index. SVNs run
    /// sequentially from `svn_base` in plane-major order.
    pub fn nominal(svn_base: u32) -> Self {
        let svn_base = svn_base.max(1);
        let mut satellites = Vec::with_capacity(PLANES * SLOTS_PER_PLANE);
        for p in 0..PLANES {
            for s in 0..SLOTS_PER_PLANE {
                let id = SatelliteId {
                    plane: Plane(p as u8),
                    slot: s as u8 + 1,
                    svn: svn_base + (p * SLOTS_PER_PLANE + s) as u32,
                };
                satellites.push(OrbitalElements {
                    id,
                    radius: ORBIT_RADIUS,
                    inclination: INCLINATION,
                    raan: (p as f64 * 60.0).to_radians(),
                    phase_at_epoch: (s as f64 * 90.0).to_radians()
                        + p as f64 * PLANE_PHASE_OFFSET,
                    period: ORBIT_PERIOD,
                });
            }
        }
        Self { satellites }
    }

    pub fn len(&self) -> usize {
        self.satellites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.satellites.is_empty()
    }

    pub fn by_svn(&self, svn: u32) -> Option<&OrbitalElements> {
        self.satellites.iter().find(|s| s.id.svn == svn)
    }

    /// Earth-fixed positions of every satellite at `t`.
    pub fn positions(&self, t: Epoch) -> Vec<(SatelliteId, Ecef)> {
        self.satellites
            .iter()
            .map(|el| (el.id, el.propagate(t)))
            .collect()
    }
}

pub fn build_nominal_constellation(svn_base: u32) -> Constellation {
    Constellation::nominal(svn_base)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookAngles {
    /// rad, [-pi/2, pi/2]
    pub elevation: f64,
    /// rad from north through east, [0, 2 pi)
    pub azimuth: f64,
    /// m
    pub range: f64,
}

/// Elevation, azimuth and range from `observer` to an Earth-fixed point.
pub fn look_angles(observer: &Geodetic, sat: Ecef) -> Result<LookAngles> {
    let los = (sat - observer.to_ecef()).to_vector();
    let range = los.norm();
    if range == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let [east, north, up] = observer.enu_basis();
    let elevation = (los.dot(&up) / range).clamp(-1.0, 1.0).asin();
    let mut azimuth = los.dot(&east).atan2(los.dot(&north));
    if azimuth < 0.0 {
        azimuth += TAU;
    }
    if azimuth >= TAU {
        azimuth = 0.0;
    }
    Ok(LookAngles {
        elevation,
        azimuth,
        range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleSatellite {
    pub id: SatelliteId,
    pub look: LookAngles,
    /// Earth-fixed position at the query epoch.
    pub position: Ecef,
}

/// Satellites at or above `mask` elevation, highest first.
pub fn visible_satellites(
    constellation: &Constellation,
    observer: &Geodetic,
    mask: f64,
    t: Epoch,
) -> Vec<VisibleSatellite> {
    let mut visible: Vec<VisibleSatellite> = constellation
        .satellites
        .iter()
        .filter_map(|el| {
            let position = el.propagate(t);
            let look = look_angles(observer, position).ok()?;
            (look.elevation >= mask).then_some(VisibleSatellite {
                id: el.id,
                look,
                position,
            })
        })
        .collect();
    visible.sort_by(|a, b| {
        b.look
            .elevation
            .total_cmp(&a.look.elevation)
            .then(a.id.svn.cmp(&b.id.svn))
    });
    visible
}

/// Visibility query for an observer given in Earth-fixed coordinates.
pub fn visible_from(
    constellation: &Constellation,
    observer: Ecef,
    mask: f64,
    t: Epoch,
) -> Result<Vec<VisibleSatellite>> {
    let g = ecef_to_geodetic(observer)?;
    Ok(visible_satellites(constellation, &g, mask, t))
}

/// Checks an elevation mask lies in [0, pi/2).
pub fn validate_mask(mask: f64) -> Result<f64> {
    if (0.0..FRAC_PI_2).contains(&mask) {
        Ok(mask)
    } else {
        Err(Error::InvalidArgument(format!(
            "elevation mask {mask} rad outside [0, pi/2)"
        )))
    }
}
