//! Text artifacts: observation log CSV, correction stream, JSON lines.
//!
//! Every number is written as fixed-point decimal text (6 fractional digits
//! for metres, degrees and seconds of epoch, 9 for cycles, 12 for clock
//! seconds). Values held in a row are already quantized to their text form,
//! so writing and re-parsing a row is exact.

use std::fmt::Write as _;

use crate::constellation::{Constellation, LookAngles};
use crate::dgps::CorrectionSet;
use crate::geo::{ecef_to_geodetic, Ecef, Epoch};
use crate::measurement::{
    CarrierPhaseObservation, Observation, ObservationEpoch, PseudorangeObservation, ReceiverState,
    SatelliteState,
};
use crate::solver::PvtSolution;
use crate::{Error, Result};

pub const METRE_DIGITS: usize = 6;
pub const DEGREE_DIGITS: usize = 6;
pub const CYCLE_DIGITS: usize = 9;
pub const CLOCK_DIGITS: usize = 12;
pub const EPOCH_DIGITS: usize = 6;

pub const OBSERVATION_HEADER: &str =
    "epoch_s,svn,pr_l1_m,pr_l2_m,phase_l1_cyc,phase_l2_cyc,elev_deg,azim_deg";
pub const CORRECTION_HEADER: &str = "epoch_s,station_id,svn,prc_m";

/// Fixed-point text with round-half-even on exact ties. Negative values that
/// round to zero print without a sign; non-finite values print as `nan`,
/// `inf` or `-inf`.
pub fn fixed(value: f64, digits: usize) -> String {
    if !value.is_finite() {
        return if value.is_nan() {
            "nan".into()
        } else if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let s = format!("{value:.digits$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// The value its `fixed` text parses back to.
pub fn quantize(value: f64, digits: usize) -> f64 {
    fixed(value, digits).parse().unwrap_or(value)
}

fn parse_f64(line: usize, key: &str, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, key, format!("not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, key, "value must be finite"));
    }
    Ok(v)
}

fn parse_u32(line: usize, key: &str, field: &str) -> Result<u32> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, key, format!("not an unsigned integer: {field:?}")))
}

/// One line of the observation log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRow {
    pub epoch_s: f64,
    pub svn: u32,
    pub pr_l1_m: f64,
    pub pr_l2_m: f64,
    pub phase_l1_cyc: f64,
    pub phase_l2_cyc: f64,
    pub elev_deg: f64,
    pub azim_deg: f64,
}

impl ObservationRow {
    pub fn from_observation(epoch: Epoch, o: &Observation) -> Self {
        Self {
            epoch_s: quantize(epoch.0, EPOCH_DIGITS),
            svn: o.satellite.id.svn,
            pr_l1_m: quantize(o.code.pr_l1, METRE_DIGITS),
            pr_l2_m: quantize(o.code.pr_l2, METRE_DIGITS),
            phase_l1_cyc: quantize(o.phase.phase_l1, CYCLE_DIGITS),
            phase_l2_cyc: quantize(o.phase.phase_l2, CYCLE_DIGITS),
            elev_deg: quantize(o.look.elevation.to_degrees(), DEGREE_DIGITS),
            azim_deg: quantize(o.look.azimuth.to_degrees(), DEGREE_DIGITS),
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            fixed(self.epoch_s, EPOCH_DIGITS),
            self.svn,
            fixed(self.pr_l1_m, METRE_DIGITS),
            fixed(self.pr_l2_m, METRE_DIGITS),
            fixed(self.phase_l1_cyc, CYCLE_DIGITS),
            fixed(self.phase_l2_cyc, CYCLE_DIGITS),
            fixed(self.elev_deg, DEGREE_DIGITS),
            fixed(self.azim_deg, DEGREE_DIGITS),
        )
    }
}

pub fn observation_rows(epochs: &[ObservationEpoch]) -> Vec<ObservationRow> {
    epochs
        .iter()
        .flat_map(|e| e.observations.iter().map(move |o| ObservationRow::from_observation(e.epoch, o)))
        .collect()
}

pub fn write_observation_rows(rows: &[ObservationRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(OBSERVATION_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

pub fn write_observations(epochs: &[ObservationEpoch]) -> String {
    write_observation_rows(&observation_rows(epochs))
}

pub fn parse_observations(text: &str) -> Result<Vec<ObservationRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == OBSERVATION_HEADER => {}
        Some((_, h)) => {
            return Err(Error::parse(1, "header", format!("expected {OBSERVATION_HEADER:?}, got {h:?}")))
        }
        None => return Err(Error::parse(1, "header", "empty observation log")),
    }
    let names: Vec<&str> = OBSERVATION_HEADER.split(',').collect();
    let mut rows = Vec::new();
    for (i, raw) in lines {
        let n = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != names.len() {
            return Err(Error::parse(
                n,
                "row",
                format!("expected {} fields, got {}", names.len(), f.len()),
            ));
        }
        rows.push(ObservationRow {
            epoch_s: parse_f64(n, names[0], f[0])?,
            svn: parse_u32(n, names[1], f[1])?,
            pr_l1_m: parse_f64(n, names[2], f[2])?,
            pr_l2_m: parse_f64(n, names[3], f[3])?,
            phase_l1_cyc: parse_f64(n, names[4], f[4])?,
            phase_l2_cyc: parse_f64(n, names[5], f[5])?,
            elev_deg: parse_f64(n, names[6], f[6])?,
            azim_deg: parse_f64(n, names[7], f[7])?,
        });
    }
    Ok(rows)
}

/// Groups rows into epochs (in order of first appearance) and rebuilds the
/// broadcast satellite states from the constellation. The log carries no
/// truth: `receiver_truth` is left at the origin and ambiguities at zero.
pub fn rows_to_epochs(rows: &[ObservationRow], constellation: &Constellation) -> Result<Vec<ObservationEpoch>> {
    let mut epochs: Vec<ObservationEpoch> = Vec::new();
    for r in rows {
        let t = Epoch(r.epoch_s);
        if epochs.last().is_none_or(|e| e.epoch != t) {
            if epochs.iter().any(|e| e.epoch == t) {
                return Err(Error::InvalidArgument(format!(
                    "epoch {} appears in more than one block",
                    r.epoch_s
                )));
            }
            epochs.push(ObservationEpoch {
                epoch: t,
                receiver_truth: ReceiverState::at(Ecef::ORIGIN),
                observations: Vec::new(),
            });
        }
        let elements = constellation.by_svn(r.svn).ok_or(Error::UnknownSatellite(r.svn))?;
        let position = elements.propagate(t);
        let current = epochs.last_mut().expect("pushed above");
        if current.get(r.svn).is_some() {
            return Err(Error::InvalidArgument(format!(
                "svn {} repeated at epoch {}",
                r.svn, r.epoch_s
            )));
        }
        current.observations.push(Observation {
            satellite: SatelliteState::new(elements.id, position, 0.0)?,
            look: LookAngles {
                elevation: r.elev_deg.to_radians(),
                azimuth: r.azim_deg.to_radians(),
                range: f64::NAN,
            },
            code: PseudorangeObservation {
                svn: r.svn,
                pr_l1: r.pr_l1_m,
                pr_l2: r.pr_l2_m,
                epoch: t,
            },
            phase: CarrierPhaseObservation {
                svn: r.svn,
                phase_l1: r.phase_l1_cyc,
                phase_l2: r.phase_l2_cyc,
                ambiguity_l1: 0,
                ambiguity_l2: 0,
                epoch: t,
            },
        });
    }
    Ok(epochs)
}

pub fn read_observation_log(text: &str, constellation: &Constellation) -> Result<Vec<ObservationEpoch>> {
    rows_to_epochs(&parse_observations(text)?, constellation)
}

/// One line of the correction stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionRow {
    pub epoch_s: f64,
    pub station_id: String,
    pub svn: u32,
    pub prc_m: f64,
}

impl CorrectionRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{}",
            fixed(self.epoch_s, EPOCH_DIGITS),
            self.station_id,
            self.svn,
            fixed(self.prc_m, METRE_DIGITS)
        )
    }
}

pub fn correction_rows(set: &CorrectionSet) -> Vec<CorrectionRow> {
    set.entries
        .iter()
        .map(|(&svn, &prc)| CorrectionRow {
            epoch_s: quantize(set.epoch.0, EPOCH_DIGITS),
            station_id: set.station.clone(),
            svn,
            prc_m: quantize(prc, METRE_DIGITS),
        })
        .collect()
}

/// No header line; one line per satellite per epoch.
pub fn write_corrections(sets: &[CorrectionSet]) -> String {
    let mut out = String::new();
    for set in sets {
        for row in correction_rows(set) {
            out.push_str(&row.to_line());
            out.push('\n');
        }
    }
    out
}

/// Accepts an optional header line.
pub fn parse_corrections(text: &str) -> Result<Vec<CorrectionSet>> {
    let mut sets: Vec<CorrectionSet> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || (n == 1 && line == CORRECTION_HEADER) {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::parse(n, "row", format!("expected 4 fields, got {}", f.len())));
        }
        let epoch = Epoch(parse_f64(n, "epoch_s", f[0])?);
        let station = f[1].trim();
        if station.is_empty() {
            return Err(Error::parse(n, "station_id", "empty station id"));
        }
        let svn = parse_u32(n, "svn", f[2])?;
        let prc = parse_f64(n, "prc_m", f[3])?;
        let fresh = sets
            .last()
            .is_none_or(|s| s.epoch != epoch || s.station != station);
        if fresh {
            sets.push(CorrectionSet::new(epoch, station));
        }
        let set = sets.last_mut().expect("pushed above");
        if set.entries.insert(svn, prc).is_some() {
            return Err(Error::parse(n, "svn", format!("svn {svn} repeated in one epoch")));
        }
    }
    Ok(sets)
}

/// Builder for one JSON object on a single line, with fixed-decimal numbers.
#[derive(Debug, Default, Clone)]
pub struct JsonLine {
    body: String,
}

fn escape_into(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

impl JsonLine {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(&mut self, key: &str) {
        if !self.body.is_empty() {
            self.body.push(',');
        }
        escape_into(&mut self.body, key);
        self.body.push(':');
    }

    /// Non-finite values become `null`.
    pub fn num(mut self, key: &str, value: f64, digits: usize) -> Self {
        self.key(key);
        if value.is_finite() {
            self.body.push_str(&fixed(value, digits));
        } else {
            self.body.push_str("null");
        }
        self
    }

    pub fn opt_num(self, key: &str, value: Option<f64>, digits: usize) -> Self {
        self.num(key, value.unwrap_or(f64::NAN), digits)
    }

    pub fn int(mut self, key: &str, value: i64) -> Self {
        self.key(key);
        let _ = write!(self.body, "{value}");
        self
    }

    pub fn boolean(mut self, key: &str, value: bool) -> Self {
        self.key(key);
        self.body.push_str(if value { "true" } else { "false" });
        self
    }

    pub fn string(mut self, key: &str, value: &str) -> Self {
        self.key(key);
        escape_into(&mut self.body, value);
        self
    }

    pub fn ints(mut self, key: &str, values: impl IntoIterator<Item = i64>) -> Self {
        self.key(key);
        self.body.push('[');
        for (i, v) in values.into_iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            let _ = write!(self.body, "{v}");
        }
        self.body.push(']');
        self
    }

    /// Nested object.
    pub fn object(mut self, key: &str, inner: JsonLine) -> Self {
        self.key(key);
        self.body.push('{');
        self.body.push_str(&inner.body);
        self.body.push('}');
        self
    }

    pub fn finish(&self) -> String {
        format!("{{{}}}", self.body)
    }
}

/// Position, geodetic coordinates, clock, DOP and fit quality of one fix.
pub fn solution_json(epoch: Epoch, s: &PvtSolution) -> JsonLine {
    let g = ecef_to_geodetic(s.position).ok();
    JsonLine::new()
        .num("epoch_s", epoch.0, EPOCH_DIGITS)
        .boolean("ok", true)
        .num("x_m", s.position.x, METRE_DIGITS)
        .num("y_m", s.position.y, METRE_DIGITS)
        .num("z_m", s.position.z, METRE_DIGITS)
        .opt_num("lat_deg", g.map(|g| g.latitude.to_degrees()), 9)
        .opt_num("lon_deg", g.map(|g| g.longitude.to_degrees()), 9)
        .opt_num("alt_m", g.map(|g| g.altitude), METRE_DIGITS)
        .num("clock_s", s.clock_bias, CLOCK_DIGITS)
        .num("gdop", s.dop.gdop, METRE_DIGITS)
        .num("pdop", s.dop.pdop, METRE_DIGITS)
        .num("hdop", s.dop.hdop, METRE_DIGITS)
        .num("vdop", s.dop.vdop, METRE_DIGITS)
        .num("tdop", s.dop.tdop, METRE_DIGITS)
        .num("residual_rms_m", s.residual_rms(), METRE_DIGITS)
        .int("iterations", s.iterations as i64)
        .boolean("converged", s.converged)
        .ints("svns", s.svns.iter().map(|&v| v as i64))
}

/// Record for an epoch that produced no fix.
pub fn failure_json(epoch: Epoch, error: &Error) -> JsonLine {
    JsonLine::new()
        .num("epoch_s", epoch.0, EPOCH_DIGITS)
        .boolean("ok", false)
        .string("error", &error.to_string())
}
