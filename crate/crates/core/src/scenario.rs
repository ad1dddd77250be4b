//! Scenario files, the simulate-solve pipeline, DOP survey maps and the
//! Monte Carlo harness.
//!
//! A scenario is line-oriented `key = value` text; `#` starts a comment.
//! Keys and defaults:
//!
//! ```text
//! constellation.svn_base = 1
//! receiver.lat_deg = 0          receiver.lon_deg = 0       receiver.alt_m = 0
//! receiver.clock_bias_s = 0
//! receiver.waypoint = t_s, lat_deg, lon_deg, alt_m     (repeatable)
//! epochs.start_s = 0            epochs.step_s = 30         epochs.count = 10
//! mask_deg = 15
//! errors.preset = nominal | survey | error-free       (applied before other errors.* keys)
//! errors.iono_l1_m = 0          errors.tropo = off         errors.tropo_dry_m = 2.25
//! errors.tropo_wet_m = 0.25     errors.multipath_m = 0     errors.code_sigma_m = 1
//! errors.phase_sigma_cyc = 0.01 errors.sa_sigma_m = 0      errors.max_ambiguity = 500
//! errors.sat_delay = svn, m                            (repeatable)
//! errors.ephemeris = svn, dx_m, dy_m, dz_m             (repeatable)
//! solver.mode = spp | iono-free | altitude-aided
//! solver.altitude_m = 0         solver.tolerance_m = 1e-8  solver.max_iterations = 20
//! dgps.enabled = false          dgps.site = <preset>       dgps.station_id = REF
//! dgps.lat_deg / dgps.lon_deg / dgps.alt_m              dgps.window_s = 5
//! dgps.correlation_km = 200     dgps.station_sigma_m = 0
//! seed = 0
//! ```

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::atmosphere::{IonosphereModel, TroposphereModel};
use crate::constellation::{visible_satellites, Constellation};
use crate::dgps::{
    compute_corrections, corrected_fix, preset_site, rover_common_seed, CorrectionSet,
    ReferenceStation, CORRELATION_DISTANCE, STALENESS_WINDOW,
};
use crate::format::{self, fixed, JsonLine, DEGREE_DIGITS, METRE_DIGITS};
use crate::geo::{wrap_longitude, Ecef, Epoch, Geodetic};
use crate::measurement::{derive_seed, simulate_epoch, ErrorBudget, ObservationEpoch, ReceiverState};
use crate::solver::{
    dilution_of_precision, geometry_matrix, altitude_aided_fix, solve_pvt, InitialGuess,
    PvtSolution, RangeMeasurement, SolverConfig,
};
use crate::{Error, Result};

const STATION_STREAM: u64 = 0x5354_4154;
const COMMON_STREAM: u64 = 0x434F_4D4D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Spp,
    IonoFree,
    AltitudeAided,
}

impl SolverMode {
    pub fn name(self) -> &'static str {
        match self {
            SolverMode::Spp => "spp",
            SolverMode::IonoFree => "iono-free",
            SolverMode::AltitudeAided => "altitude-aided",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "spp" => Some(SolverMode::Spp),
            "iono-free" => Some(SolverMode::IonoFree),
            "altitude-aided" => Some(SolverMode::AltitudeAided),
            _ => None,
        }
    }
}

/// Noise presets for code and carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisePreset {
    /// 1 m code, 0.01 cycle phase
    Nominal,
    /// 5 cm code, 0.002 cycle phase
    Survey,
    ErrorFree,
}

impl NoisePreset {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "nominal" => Some(NoisePreset::Nominal),
            "survey" => Some(NoisePreset::Survey),
            "error-free" => Some(NoisePreset::ErrorFree),
            _ => None,
        }
    }

    pub fn budget(self) -> ErrorBudget {
        match self {
            NoisePreset::Nominal => ErrorBudget::default(),
            NoisePreset::Survey => ErrorBudget {
                code_noise_sigma: 0.05,
                phase_noise_sigma: 0.002,
                ..ErrorBudget::default()
            },
            NoisePreset::ErrorFree => ErrorBudget::error_free(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    /// s
    pub t: f64,
    pub position: Geodetic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Static(Geodetic),
    /// Linear in latitude, longitude (shortest way round) and altitude;
    /// held at the end points outside the covered span.
    Waypoints(Vec<Waypoint>),
}

impl Trajectory {
    pub fn at(&self, t: f64) -> Geodetic {
        match self {
            Trajectory::Static(g) => *g,
            Trajectory::Waypoints(w) => {
                let first = w[0];
                let last = w[w.len() - 1];
                if t <= first.t {
                    return first.position;
                }
                if t >= last.t {
                    return last.position;
                }
                let k = w.partition_point(|p| p.t <= t);
                let (a, b) = (w[k - 1], w[k]);
                let s = (t - a.t) / (b.t - a.t);
                let dlon = wrap_longitude(b.position.longitude - a.position.longitude);
                Geodetic::new(
                    a.position.latitude + s * (b.position.latitude - a.position.latitude),
                    wrap_longitude(a.position.longitude + s * dlon),
                    a.position.altitude + s * (b.position.altitude - a.position.altitude),
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpsSetup {
    pub station_id: String,
    pub station: Geodetic,
    /// s
    pub window: f64,
    /// m
    pub correlation_distance: f64,
    /// m
    pub station_code_sigma: f64,
}

impl Default for DgpsSetup {
    fn default() -> Self {
        Self {
            station_id: "REF".into(),
            station: Geodetic::default(),
            window: STALENESS_WINDOW,
            correlation_distance: CORRELATION_DISTANCE,
            station_code_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub svn_base: u32,
    pub trajectory: Trajectory,
    /// s
    pub clock_bias: f64,
    pub start: f64,
    pub step: f64,
    pub count: usize,
    pub mask_deg: f64,
    /// Seeds inside are overwritten from `seed` at run time.
    pub budget: ErrorBudget,
    pub mode: SolverMode,
    /// Constraint altitude for the aided mode, m.
    pub altitude: f64,
    pub solver: SolverConfig,
    pub dgps: Option<DgpsSetup>,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            svn_base: 1,
            trajectory: Trajectory::Static(Geodetic::default()),
            clock_bias: 0.0,
            start: 0.0,
            step: 30.0,
            count: 10,
            mask_deg: 15.0,
            budget: ErrorBudget::default(),
            mode: SolverMode::Spp,
            altitude: 0.0,
            solver: SolverConfig::default(),
            dgps: None,
            seed: 0,
        }
    }
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.line, self.key, message)
    }

    fn f64(&self) -> Result<f64> {
        let v: f64 = self
            .value
            .parse()
            .map_err(|_| self.err(format!("not a number: {:?}", self.value)))?;
        if !v.is_finite() {
            return Err(self.err("value must be finite"));
        }
        Ok(v)
    }

    fn non_negative(&self) -> Result<f64> {
        let v = self.f64()?;
        if v < 0.0 {
            return Err(self.err(format!("must be >= 0, got {v}")));
        }
        Ok(v)
    }

    fn u64(&self) -> Result<u64> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("not an unsigned integer: {:?}", self.value)))
    }

    fn bool(&self) -> Result<bool> {
        match self.value {
            "true" | "on" | "yes" => Ok(true),
            "false" | "off" | "no" => Ok(false),
            v => Err(self.err(format!("expected true/false, got {v:?}"))),
        }
    }

    fn list(&self, n: usize) -> Result<Vec<f64>> {
        let parts: Vec<&str> = self.value.split(',').map(str::trim).collect();
        if parts.len() != n {
            return Err(self.err(format!("expected {n} comma-separated values")));
        }
        parts
            .iter()
            .map(|p| {
                let v: f64 = p.parse().map_err(|_| self.err(format!("not a number: {p:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(self.err("value must be finite"))
                }
            })
            .collect()
    }

    fn latitude(&self) -> Result<f64> {
        let v = self.f64()?;
        if !(-90.0..=90.0).contains(&v) {
            return Err(self.err(format!("latitude must be within [-90, 90], got {v}")));
        }
        Ok(v)
    }
}

const REPEATABLE: [&str; 3] = ["receiver.waypoint", "errors.sat_delay", "errors.ephemeris"];

const KEYS: [&str; 36] = [
    "constellation.svn_base",
    "receiver.lat_deg",
    "receiver.lon_deg",
    "receiver.alt_m",
    "receiver.clock_bias_s",
    "receiver.waypoint",
    "epochs.start_s",
    "epochs.step_s",
    "epochs.count",
    "mask_deg",
    "errors.preset",
    "errors.iono_l1_m",
    "errors.tropo",
    "errors.tropo_dry_m",
    "errors.tropo_wet_m",
    "errors.multipath_m",
    "errors.code_sigma_m",
    "errors.phase_sigma_cyc",
    "errors.sa_sigma_m",
    "errors.max_ambiguity",
    "errors.sat_delay",
    "errors.ephemeris",
    "solver.mode",
    "solver.altitude_m",
    "solver.tolerance_m",
    "solver.max_iterations",
    "dgps.enabled",
    "dgps.site",
    "dgps.station_id",
    "dgps.lat_deg",
    "dgps.lon_deg",
    "dgps.alt_m",
    "dgps.window_s",
    "dgps.correlation_km",
    "dgps.station_sigma_m",
    "seed",
];

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(Error::parse(line, content, "expected `key = value`"));
        };
        let (key, value) = (k.trim(), v.trim());
        if !KEYS.contains(&key) {
            return Err(Error::parse(line, key, "unknown key"));
        }
        if value.is_empty() {
            return Err(Error::parse(line, key, "missing value"));
        }
        if !REPEATABLE.contains(&key) {
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(Error::parse(line, key, format!("duplicate key, first set on line {}", prev.line)));
            }
        }
        entries.push(Entry { line, key, value });
    }

    let mut s = Scenario::default();
    if let Some(e) = entries.iter().find(|e| e.key == "errors.preset") {
        s.budget = NoisePreset::from_name(e.value)
            .ok_or_else(|| e.err(format!("unknown preset {:?}", e.value)))?
            .budget();
    }
    let mut lat = 0.0;
    let mut lon = 0.0;
    let mut alt = 0.0;
    let mut waypoints: Vec<Waypoint> = Vec::new();
    let mut tropo_on: Option<bool> = None;
    let mut tropo = TroposphereModel::default();
    let mut dgps_enabled = false;
    let mut dgps = DgpsSetup::default();
    let mut station: [Option<f64>; 3] = [None; 3];
    let mut site: Option<Geodetic> = None;

    for e in &entries {
        match e.key {
            "constellation.svn_base" => {
                let v = e.u64()?;
                if v == 0 || v > u32::MAX as u64 - 24 {
                    return Err(e.err("svn_base must be a positive 32-bit integer"));
                }
                s.svn_base = v as u32;
            }
            "receiver.lat_deg" => lat = e.latitude()?,
            "receiver.lon_deg" => lon = e.f64()?,
            "receiver.alt_m" => alt = e.f64()?,
            "receiver.clock_bias_s" => s.clock_bias = e.f64()?,
            "receiver.waypoint" => {
                let v = e.list(4)?;
                if !(-90.0..=90.0).contains(&v[1]) {
                    return Err(e.err("waypoint latitude must be within [-90, 90]"));
                }
                if waypoints.last().is_some_and(|w| w.t >= v[0]) {
                    return Err(e.err("waypoint times must be strictly increasing"));
                }
                waypoints.push(Waypoint {
                    t: v[0],
                    position: Geodetic::from_degrees(v[1], v[2], v[3]),
                });
            }
            "epochs.start_s" => s.start = e.f64()?,
            "epochs.step_s" => {
                s.step = e.f64()?;
                if s.step <= 0.0 {
                    return Err(e.err("step must be > 0"));
                }
            }
            "epochs.count" => {
                s.count = e.u64()? as usize;
                if s.count == 0 {
                    return Err(e.err("count must be >= 1"));
                }
            }
            "mask_deg" => {
                s.mask_deg = e.f64()?;
                if !(0.0..90.0).contains(&s.mask_deg) {
                    return Err(e.err(format!("mask must be within [0, 90), got {}", s.mask_deg)));
                }
            }
            "errors.preset" => {}
            "errors.iono_l1_m" => {
                let v = e.non_negative()?;
                s.budget.iono = if v > 0.0 {
                    Some(IonosphereModel::with_l1_delay(v).map_err(|x| e.err(x.to_string()))?)
                } else {
                    None
                };
            }
            "errors.tropo" => tropo_on = Some(e.bool()?),
            "errors.tropo_dry_m" => {
                tropo.zenith_dry = e.non_negative()?;
                tropo_on.get_or_insert(true);
            }
            "errors.tropo_wet_m" => {
                tropo.zenith_wet = e.non_negative()?;
                tropo_on.get_or_insert(true);
            }
            "errors.multipath_m" => s.budget.multipath_amplitude = e.non_negative()?,
            "errors.code_sigma_m" => s.budget.code_noise_sigma = e.non_negative()?,
            "errors.phase_sigma_cyc" => s.budget.phase_noise_sigma = e.non_negative()?,
            "errors.sa_sigma_m" => s.budget.sa_sigma = e.non_negative()?,
            "errors.max_ambiguity" => {
                let v = e.u64()?;
                if v > 1_000_000 {
                    return Err(e.err("max_ambiguity must be <= 1000000"));
                }
                s.budget.max_ambiguity = v as u32;
            }
            "errors.sat_delay" => {
                let v = e.list(2)?;
                s.budget.satellite_delay.insert(svn_of(e, v[0])?, v[1]);
            }
            "errors.ephemeris" => {
                let v = e.list(4)?;
                s.budget
                    .ephemeris_error
                    .insert(svn_of(e, v[0])?, Ecef::new(v[1], v[2], v[3]));
            }
            "solver.mode" => {
                s.mode = SolverMode::from_name(e.value)
                    .ok_or_else(|| e.err(format!("unknown mode {:?}", e.value)))?
            }
            "solver.altitude_m" => s.altitude = e.f64()?,
            "solver.tolerance_m" => {
                s.solver.tolerance = e.f64()?;
                if s.solver.tolerance <= 0.0 {
                    return Err(e.err("tolerance must be > 0"));
                }
            }
            "solver.max_iterations" => {
                s.solver.max_iterations = e.u64()? as usize;
                if s.solver.max_iterations == 0 {
                    return Err(e.err("max_iterations must be >= 1"));
                }
            }
            "dgps.enabled" => dgps_enabled = e.bool()?,
            "dgps.site" => {
                site = Some(preset_site(e.value).ok_or_else(|| e.err(format!("unknown site {:?}", e.value)))?)
            }
            "dgps.station_id" => {
                if e.value.contains(',') {
                    return Err(e.err("station id must not contain commas"));
                }
                dgps.station_id = e.value.to_string();
            }
            "dgps.lat_deg" => station[0] = Some(e.latitude()?),
            "dgps.lon_deg" => station[1] = Some(e.f64()?),
            "dgps.alt_m" => station[2] = Some(e.f64()?),
            "dgps.window_s" => {
                dgps.window = e.f64()?;
                if dgps.window <= 0.0 {
                    return Err(e.err("window must be > 0"));
                }
            }
            "dgps.correlation_km" => dgps.correlation_distance = e.non_negative()? * 1e3,
            "dgps.station_sigma_m" => dgps.station_code_sigma = e.non_negative()?,
            "seed" => s.seed = e.u64()?,
            _ => unreachable!("key list checked above"),
        }
    }

    s.trajectory = if waypoints.is_empty() {
        Trajectory::Static(Geodetic::from_degrees(lat, lon, alt))
    } else {
        if let Some(e) = entries
            .iter()
            .find(|e| matches!(e.key, "receiver.lat_deg" | "receiver.lon_deg" | "receiver.alt_m"))
        {
            return Err(e.err("static position and waypoints are mutually exclusive"));
        }
        Trajectory::Waypoints(waypoints)
    };
    if tropo_on == Some(true) {
        s.budget.tropo = Some(tropo);
    }
    if dgps_enabled {
        let base = site.unwrap_or_default();
        dgps.station = Geodetic::new(
            station[0].map_or(base.latitude, f64::to_radians),
            station[1].map_or(base.longitude, |v| wrap_longitude(v.to_radians())),
            station[2].unwrap_or(base.altitude),
        );
        if site.is_none() && station[0].is_none() && station[1].is_none() {
            let e = entries.iter().find(|e| e.key == "dgps.enabled").expect("enabled");
            return Err(e.err("dgps needs dgps.site or dgps.lat_deg/dgps.lon_deg"));
        }
        if s.mode != SolverMode::Spp {
            let e = entries.iter().find(|e| e.key == "dgps.enabled").expect("enabled");
            return Err(e.err("dgps corrections apply to L1 and need solver.mode = spp"));
        }
        ReferenceStation::new(dgps.station_id.clone(), dgps.station.to_ecef())?;
        s.dgps = Some(dgps);
    }
    Ok(s)
}

fn svn_of(e: &Entry, v: f64) -> Result<u32> {
    if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(e.err(format!("bad svn {v}")));
    }
    Ok(v as u32)
}

impl Scenario {
    /// Canonical text: every key, in documentation order. Parses back to an
    /// equal scenario.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(o, "{k} = {v}");
        };
        kv("constellation.svn_base", self.svn_base.to_string());
        match &self.trajectory {
            Trajectory::Static(g) => {
                kv("receiver.lat_deg", g.latitude.to_degrees().to_string());
                kv("receiver.lon_deg", g.longitude.to_degrees().to_string());
                kv("receiver.alt_m", g.altitude.to_string());
            }
            Trajectory::Waypoints(w) => {
                for p in w {
                    kv(
                        "receiver.waypoint",
                        format!(
                            "{}, {}, {}, {}",
                            p.t,
                            p.position.latitude.to_degrees(),
                            p.position.longitude.to_degrees(),
                            p.position.altitude
                        ),
                    );
                }
            }
        }
        kv("receiver.clock_bias_s", self.clock_bias.to_string());
        kv("epochs.start_s", self.start.to_string());
        kv("epochs.step_s", self.step.to_string());
        kv("epochs.count", self.count.to_string());
        kv("mask_deg", self.mask_deg.to_string());
        let b = &self.budget;
        let l1 = b.iono.map_or(0.0, |m| m.delay(crate::geo::F_L1).unwrap_or(0.0));
        kv("errors.iono_l1_m", l1.to_string());
        kv("errors.tropo", if b.tropo.is_some() { "on" } else { "off" }.into());
        let t = b.tropo.unwrap_or_default();
        kv("errors.tropo_dry_m", t.zenith_dry.to_string());
        kv("errors.tropo_wet_m", t.zenith_wet.to_string());
        kv("errors.multipath_m", b.multipath_amplitude.to_string());
        kv("errors.code_sigma_m", b.code_noise_sigma.to_string());
        kv("errors.phase_sigma_cyc", b.phase_noise_sigma.to_string());
        kv("errors.sa_sigma_m", b.sa_sigma.to_string());
        kv("errors.max_ambiguity", b.max_ambiguity.to_string());
        for (svn, d) in &b.satellite_delay {
            kv("errors.sat_delay", format!("{svn}, {d}"));
        }
        for (svn, d) in &b.ephemeris_error {
            kv("errors.ephemeris", format!("{svn}, {}, {}, {}", d.x, d.y, d.z));
        }
        kv("solver.mode", self.mode.name().into());
        kv("solver.altitude_m", self.altitude.to_string());
        kv("solver.tolerance_m", self.solver.tolerance.to_string());
        kv("solver.max_iterations", self.solver.max_iterations.to_string());
        kv("dgps.enabled", self.dgps.is_some().to_string());
        if let Some(d) = &self.dgps {
            kv("dgps.station_id", d.station_id.clone());
            kv("dgps.lat_deg", d.station.latitude.to_degrees().to_string());
            kv("dgps.lon_deg", d.station.longitude.to_degrees().to_string());
            kv("dgps.alt_m", d.station.altitude.to_string());
            kv("dgps.window_s", d.window.to_string());
            kv("dgps.correlation_km", (d.correlation_distance / 1e3).to_string());
            kv("dgps.station_sigma_m", d.station_code_sigma.to_string());
        }
        kv("seed", self.seed.to_string());
        o
    }

    pub fn epochs(&self) -> impl Iterator<Item = Epoch> + '_ {
        (0..self.count).map(|k| Epoch(self.start + k as f64 * self.step))
    }

    pub fn rover_budget(&self) -> ErrorBudget {
        let mut b = self.budget.clone();
        b.rng_seed = self.seed;
        b.common_seed = derive_seed(&[self.seed, COMMON_STREAM]);
        b
    }

    fn mask(&self) -> f64 {
        self.mask_deg.to_radians()
    }
}

/// Outcome of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: Epoch,
    pub truth: Geodetic,
    pub visible: usize,
    /// satellites dropped for lack of a correction
    pub dropped: usize,
    pub outcome: Result<PvtSolution>,
}

impl EpochRecord {
    /// (3-D, horizontal, vertical) error against truth, m.
    pub fn errors(&self) -> Option<(f64, f64, f64)> {
        let s = self.outcome.as_ref().ok()?;
        let d = s.position.to_vector() - self.truth.to_ecef().to_vector();
        let [e, n, u] = self.truth.enu_basis();
        let up = d.dot(&u);
        Some((d.norm(), d.dot(&e).hypot(d.dot(&n)), up.abs()))
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub epochs: usize,
    pub solved: usize,
    pub converged: usize,
    pub rms_3d: f64,
    pub rms_horizontal: f64,
    pub rms_vertical: f64,
    pub max_3d: f64,
    pub mean_gdop: f64,
    pub mean_pdop: f64,
}

impl Summary {
    pub fn from_records(records: &[EpochRecord]) -> Self {
        let mut sq3 = CompensatedSum::default();
        let mut sqh = CompensatedSum::default();
        let mut sqv = CompensatedSum::default();
        let mut gdop = CompensatedSum::default();
        let mut pdop = CompensatedSum::default();
        let mut solved = 0;
        let mut converged = 0;
        let mut max_3d: f64 = 0.0;
        for r in records {
            let (Ok(s), Some((d3, dh, dv))) = (&r.outcome, r.errors()) else {
                continue;
            };
            solved += 1;
            converged += s.converged as usize;
            sq3.add(d3 * d3);
            sqh.add(dh * dh);
            sqv.add(dv * dv);
            gdop.add(s.dop.gdop);
            pdop.add(s.dop.pdop);
            max_3d = max_3d.max(d3);
        }
        let n = solved.max(1) as f64;
        let nan_if_none = |v: f64| if solved == 0 { f64::NAN } else { v };
        Summary {
            epochs: records.len(),
            solved,
            converged,
            rms_3d: nan_if_none((sq3.value() / n).sqrt()),
            rms_horizontal: nan_if_none((sqh.value() / n).sqrt()),
            rms_vertical: nan_if_none((sqv.value() / n).sqrt()),
            max_3d: nan_if_none(max_3d),
            mean_gdop: nan_if_none(gdop.value() / n),
            mean_pdop: nan_if_none(pdop.value() / n),
        }
    }

    pub fn to_json(&self) -> JsonLine {
        JsonLine::new()
            .int("epochs", self.epochs as i64)
            .int("solved", self.solved as i64)
            .int("converged", self.converged as i64)
            .num("rms_3d_m", self.rms_3d, METRE_DIGITS)
            .num("rms_horizontal_m", self.rms_horizontal, METRE_DIGITS)
            .num("rms_vertical_m", self.rms_vertical, METRE_DIGITS)
            .num("max_3d_m", self.max_3d, METRE_DIGITS)
            .num("mean_gdop", self.mean_gdop, METRE_DIGITS)
            .num("mean_pdop", self.mean_pdop, METRE_DIGITS)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: Scenario,
    pub observations: Vec<ObservationEpoch>,
    pub corrections: Vec<CorrectionSet>,
    pub records: Vec<EpochRecord>,
    pub summary: Summary,
}

impl RunReport {
    pub fn observation_csv(&self) -> String {
        format::write_observations(&self.observations)
    }

    pub fn corrections_csv(&self) -> String {
        format::write_corrections(&self.corrections)
    }

    pub fn solutions_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = match &r.outcome {
                Ok(s) => {
                    let (d3, dh, dv) = r.errors().expect("solved");
                    format::solution_json(r.epoch, s)
                        .int("visible", r.visible as i64)
                        .int("dropped", r.dropped as i64)
                        .num("error_3d_m", d3, METRE_DIGITS)
                        .num("error_horizontal_m", dh, METRE_DIGITS)
                        .num("error_vertical_m", dv, METRE_DIGITS)
                }
                Err(e) => format::failure_json(r.epoch, e).int("visible", r.visible as i64),
            };
            out.push_str(&line.finish());
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let mut line = self
            .summary
            .to_json()
            .string("seed", &self.scenario.seed.to_string())
            .string("config", &self.scenario.to_text())
            .finish();
        line.push('\n');
        line
    }
}

fn solve_epoch(
    s: &Scenario,
    obs: &ObservationEpoch,
    almanac: &Constellation,
    last_fix: Option<&PvtSolution>,
) -> Result<PvtSolution> {
    match s.mode {
        SolverMode::Spp => solve_pvt(&RangeMeasurement::l1(obs), InitialGuess::EARTH_CENTER, &s.solver),
        SolverMode::IonoFree => solve_pvt(&RangeMeasurement::iono_free(obs), InitialGuess::EARTH_CENTER, &s.solver),
        SolverMode::AltitudeAided => altitude_aided_fix(
            &RangeMeasurement::l1(obs),
            s.altitude,
            last_fix,
            almanac,
            obs.epoch,
            s.mask(),
            &s.solver,
        ),
    }
}

/// Simulate, optionally correct, and solve every epoch. Per-epoch failures
/// are recorded; the run fails only when no epoch produced a fix.
pub fn run_scenario(s: &Scenario) -> Result<RunReport> {
    crate::constellation::validate_mask(s.mask())?;
    let constellation = Constellation::nominal(s.svn_base);
    let rover_budget = s.rover_budget();
    rover_budget.validate()?;
    let station = match &s.dgps {
        Some(d) => Some(ReferenceStation::new(d.station_id.clone(), d.station.to_ecef())?),
        None => None,
    };
    let mut observations = Vec::with_capacity(s.count);
    let mut corrections = Vec::new();
    let mut records: Vec<EpochRecord> = Vec::with_capacity(s.count);
    for t in s.epochs() {
        let truth = s.trajectory.at(t.0);
        let rcvr = ReceiverState::at(truth.to_ecef()).with_clock(s.clock_bias);
        let mut budget = rover_budget.clone();
        let obs = match (&s.dgps, &station) {
            (Some(d), Some(st)) => {
                let separation = st.surveyed_position.distance(rcvr.position);
                budget.common_seed = rover_common_seed(rover_budget.common_seed, separation, d.correlation_distance);
                simulate_epoch(&constellation, &rcvr, t, s.mask(), &budget)?
            }
            _ => simulate_epoch(&constellation, &rcvr, t, s.mask(), &budget)?,
        };
        let (outcome, dropped) = match (&s.dgps, &station) {
            (Some(d), Some(st)) => {
                let station_budget = ErrorBudget {
                    rng_seed: derive_seed(&[s.seed, STATION_STREAM]),
                    code_noise_sigma: d.station_code_sigma,
                    ..rover_budget.clone()
                };
                let ref_obs = simulate_epoch(
                    &constellation,
                    &ReceiverState::at(st.surveyed_position),
                    t,
                    s.mask(),
                    &station_budget,
                )?;
                match compute_corrections(st, &ref_obs) {
                    Ok(c) => {
                        let out = corrected_fix(&obs, &c, d.window, &s.solver);
                        corrections.push(c);
                        match out {
                            Ok((ce, fix)) => (Ok(fix), ce.dropped),
                            Err(e) => (Err(e), 0),
                        }
                    }
                    Err(e) => (Err(e), 0),
                }
            }
            _ => {
                let last_fix = records.iter().rev().find_map(|r| r.outcome.as_ref().ok());
                (solve_epoch(s, &obs, &constellation, last_fix), 0)
            }
        };
        records.push(EpochRecord {
            epoch: t,
            truth,
            visible: obs.len(),
            dropped,
            outcome,
        });
        observations.push(obs);
    }
    if records.iter().all(|r| r.outcome.is_err()) {
        let first = records
            .iter()
            .find_map(|r| r.outcome.as_ref().err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        return Err(Error::AllEpochsFailed(first));
    }
    let summary = Summary::from_records(&records);
    Ok(RunReport {
        scenario: s.clone(),
        observations,
        corrections,
        records,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopCell {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub visible: usize,
    pub gdop: Option<f64>,
    pub pdop: Option<f64>,
}

/// Visible count and DOP on a lat/lon grid at the scenario's first epoch and
/// receiver altitude. Latitudes run pole to pole inclusive, longitudes over
/// [-180, 180).
pub fn dop_map(s: &Scenario, spacing_deg: f64) -> Result<Vec<DopCell>> {
    if !(spacing_deg > 0.0 && spacing_deg <= 90.0) {
        return Err(Error::InvalidArgument(format!(
            "grid spacing must be in (0, 90] degrees, got {spacing_deg}"
        )));
    }
    crate::constellation::validate_mask(s.mask())?;
    let constellation = Constellation::nominal(s.svn_base);
    let t = Epoch(s.start);
    let altitude = s.trajectory.at(s.start).altitude;
    let n_lat = (180.0 / spacing_deg + 1e-9).floor() as usize + 1;
    let n_lon = (360.0 / spacing_deg - 1e-9).ceil() as usize;
    let mut cells = Vec::with_capacity(n_lat * n_lon);
    for i in 0..n_lat {
        let lat = -90.0 + i as f64 * spacing_deg;
        for j in 0..n_lon {
            let lon = -180.0 + j as f64 * spacing_deg;
            let g = Geodetic::from_degrees(lat, lon, altitude);
            let vis = visible_satellites(&constellation, &g, s.mask(), t);
            let positions: Vec<Ecef> = vis.iter().map(|v| v.position).collect();
            let dop = if positions.len() >= 4 {
                geometry_matrix(&positions, g.to_ecef())
                    .and_then(|m| dilution_of_precision(&m))
                    .ok()
            } else {
                None
            };
            cells.push(DopCell {
                lat_deg: lat,
                lon_deg: lon,
                visible: vis.len(),
                gdop: dop.map(|d| d.gdop),
                pdop: dop.map(|d| d.pdop),
            });
        }
    }
    Ok(cells)
}

/// `lat_deg,lon_deg,visible_count,gdop,pdop`; DOP fields empty below four
/// satellites.
pub fn dop_map_csv(cells: &[DopCell]) -> String {
    let mut out = String::from("lat_deg,lon_deg,visible_count,gdop,pdop\n");
    for c in cells {
        let opt = |v: Option<f64>| v.map(|x| fixed(x, METRE_DIGITS)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fixed(c.lat_deg, DEGREE_DIGITS),
            fixed(c.lon_deg, DEGREE_DIGITS),
            c.visible,
            opt(c.gdop),
            opt(c.pdop)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub trials: usize,
    /// per trial, in trial order
    pub summaries: Vec<Result<Summary>>,
    /// over every solved epoch of every trial, m
    pub rms_3d: f64,
    pub mean_pdop: f64,
    pub failed_trials: usize,
}

impl MonteCarloReport {
    pub fn to_json(&self) -> String {
        JsonLine::new()
            .int("trials", self.trials as i64)
            .int("failed_trials", self.failed_trials as i64)
            .num("rms_3d_m", self.rms_3d, METRE_DIGITS)
            .num("mean_pdop", self.mean_pdop, METRE_DIGITS)
            .finish()
    }
}

/// Repeats the scenario with per-trial seeds derived from its own seed.
pub fn monte_carlo(s: &Scenario, trials: usize) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let summaries: Vec<Result<Summary>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut trial = s.clone();
            trial.seed = derive_seed(&[s.seed, i as u64]);
            run_scenario(&trial).map(|r| r.summary)
        })
        .collect();
    let mut sq = CompensatedSum::default();
    let mut pdop = CompensatedSum::default();
    let mut n = 0usize;
    for sm in summaries.iter().flatten() {
        sq.add(sm.rms_3d * sm.rms_3d * sm.solved as f64);
        pdop.add(sm.mean_pdop * sm.solved as f64);
        n += sm.solved;
    }
    let failed_trials = summaries.iter().filter(|r| r.is_err()).count();
    let denom = if n == 0 { f64::NAN } else { n as f64 };
    Ok(MonteCarloReport {
        trials,
        rms_3d: (sq.value() / denom).sqrt(),
        mean_pdop: pdop.value() / denom,
        failed_trials,
        summaries,
    })
}
