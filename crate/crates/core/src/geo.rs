//! Physical constants, frames and conversions.
//!
//! The Earth is modelled as a sphere of radius [`EARTH_RADIUS`]. Inertial and
//! Earth-fixed frames share the z axis and coincide at `t = 0`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Sub};

use nalgebra::Vector3;

use crate::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Mean Earth radius, m.
pub const EARTH_RADIUS: f64 = 6_371_000.0;
/// Sidereal day, s.
pub const SIDEREAL_DAY: f64 = 86_164.1;
/// Earth rotation rate, rad/s.
pub const EARTH_ROTATION_RATE: f64 = TAU / SIDEREAL_DAY;
/// GPS fundamental clock frequency, Hz.
pub const F0: f64 = 10.23e6;
/// L1 carrier, 154 f0.
pub const F_L1: f64 = 154.0 * F0;
/// L2 carrier, 120 f0.
pub const F_L2: f64 = 120.0 * F0;
/// Nominal orbital radius, m.
pub const ORBIT_RADIUS: f64 = 26_600e3;
/// Nominal orbital period (11 h 58 min), s.
pub const ORBIT_PERIOD: f64 = 43_080.0;
/// Nominal orbital inclination, rad.
pub const INCLINATION: f64 = 55.0 * PI / 180.0;

/// L1 carrier wavelength, m.
pub fn wavelength_l1() -> f64 {
    SPEED_OF_LIGHT / F_L1
}

/// L2 carrier wavelength, m.
pub fn wavelength_l2() -> f64 {
    SPEED_OF_LIGHT / F_L2
}

/// Simulation time in seconds from scenario start.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Epoch(pub f64);

impl Epoch {
    pub fn seconds(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={}s", self.0)
    }
}

/// Earth-centred Cartesian position, m.
///
/// The same type carries inertial coordinates where a function says so.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Ecef {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Ecef {
    pub const ORIGIN: Ecef = Ecef { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm(self) -> f64 {
        self.to_vector().norm()
    }

    pub fn distance(self, other: Ecef) -> f64 {
        (self - other).norm()
    }

    /// Distance above the spherical Earth surface.
    pub fn altitude(self) -> f64 {
        self.norm() - EARTH_RADIUS
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Ecef {
    type Output = Ecef;
    fn add(self, rhs: Ecef) -> Ecef {
        Ecef::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Ecef {
    type Output = Ecef;
    fn sub(self, rhs: Ecef) -> Ecef {
        Ecef::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl From<Vector3<f64>> for Ecef {
    fn from(v: Vector3<f64>) -> Self {
        Ecef::from_vector(&v)
    }
}

/// Latitude/longitude in radians and altitude above the spherical Earth in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Geodetic {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

impl Geodetic {
    pub const fn new(latitude: f64, longitude: f64, altitude: f64) -> Self {
        Self {
            latitude,
            longitude,
            altitude,
        }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, altitude: f64) -> Self {
        Self::new(lat_deg.to_radians(), wrap_longitude(lon_deg.to_radians()), altitude)
    }

    pub fn to_ecef(self) -> Ecef {
        geodetic_to_ecef(self)
    }

    /// Unit vectors (east, north, up) of the local horizon frame.
    pub fn enu_basis(self) -> [Vector3<f64>; 3] {
        let (slat, clat) = self.latitude.sin_cos();
        let (slon, clon) = self.longitude.sin_cos();
        [
            Vector3::new(-slon, clon, 0.0),
            Vector3::new(-slat * clon, -slat * slon, clat),
            Vector3::new(clat * clon, clat * slon, slat),
        ]
    }
}

/// Wraps a longitude into (-pi, pi].
pub fn wrap_longitude(lon: f64) -> f64 {
    let mut l = lon.rem_euclid(TAU);
    if l > PI {
        l -= TAU;
    }
    l
}

pub fn geodetic_to_ecef(g: Geodetic) -> Ecef {
    let r = EARTH_RADIUS + g.altitude;
    let (slat, clat) = g.latitude.sin_cos();
    let (slon, clon) = g.longitude.sin_cos();
    Ecef::new(r * clat * clon, r * clat * slon, r * slat)
}

/// Inverse of [`geodetic_to_ecef`]. On the polar axis the longitude is 0.
pub fn ecef_to_geodetic(p: Ecef) -> Result<Geodetic> {
    let horizontal = p.x.hypot(p.y);
    let r = horizontal.hypot(p.z);
    if r == 0.0 || !r.is_finite() {
        return Err(Error::UndefinedDirection);
    }
    let latitude = p.z.atan2(horizontal);
    let longitude = if horizontal == 0.0 {
        0.0
    } else {
        wrap_longitude(p.y.atan2(p.x))
    };
    Ok(Geodetic::new(latitude, longitude, r - EARTH_RADIUS))
}

/// Earth rotation angle at `t`.
pub fn earth_rotation_angle(t: Epoch) -> f64 {
    EARTH_ROTATION_RATE * t.0
}

/// Rotates an inertial vector into the Earth-fixed frame at `t`.
pub fn inertial_to_ecef(p: Ecef, t: Epoch) -> Ecef {
    rotate_z(p, -earth_rotation_angle(t))
}

pub fn ecef_to_inertial(p: Ecef, t: Epoch) -> Ecef {
    rotate_z(p, earth_rotation_angle(t))
}

fn rotate_z(p: Ecef, angle: f64) -> Ecef {
    let (s, c) = angle.sin_cos();
    Ecef::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
}
