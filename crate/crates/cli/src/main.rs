//! Command-line front end. Exit status: 0 on success, 1 on invalid input,
//! 2 when the computation itself fails.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use gpslab::atmosphere::{iono_free_carrier, iono_free_pseudorange, iono_free_wavelength};
use gpslab::carrier::{float_ambiguities, phase_position, resolve_integers, PhaseMeasurement, ResolveConfig};
use gpslab::constellation::{validate_mask, visible_satellites, Constellation};
use gpslab::dgps::{
    compute_corrections, inverted_dgps, post_process, preset_site, realtime, CorrectedSolutionLog,
    FleetReport, ReferenceStation, PRESET_SITES, STALENESS_WINDOW,
};
use gpslab::format::{self, fixed, JsonLine, CYCLE_DIGITS, DEGREE_DIGITS, METRE_DIGITS};
use gpslab::geo::{Epoch, Geodetic};
use gpslab::measurement::ObservationEpoch;
use gpslab::scenario::{dop_map, dop_map_csv, monte_carlo, parse_scenario, run_scenario, Scenario, SolverMode};
use gpslab::solver::{altitude_aided_fix, solve_pvt, InitialGuess, PvtSolution, RangeMeasurement, SolverConfig};

#[derive(Parser, Debug)]
#[command(name = "gpslab", version, about = "GPS constellation, measurement and positioning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Constellation queries
    Constellation {
        #[command(subcommand)]
        action: ConstellationAction,
    },
    /// Satellites above the mask for an observer
    Visible(VisibleArgs),
    /// Run a scenario and write its observation log
    Simulate(SimulateArgs),
    /// Position fixes from an observation log
    Solve(SolveArgs),
    /// Differential corrections between a reference and a rover log
    Dgps(DgpsArgs),
    /// Carrier-phase integer ambiguity resolution
    Ambiguity(AmbiguityArgs),
    /// Ionosphere-free combinations of dual-frequency observables
    Ionofree(IonofreeArgs),
    /// Visible count and DOP over a latitude/longitude grid
    DopMap(DopMapArgs),
    /// Repeat a scenario over derived seeds
    Montecarlo(MonteCarloArgs),
}

#[derive(Subcommand, Debug)]
enum ConstellationAction {
    /// Earth-fixed satellite positions as CSV
    Dump {
        #[arg(long, default_value_t = 0.0)]
        epoch: f64,
        #[arg(long, default_value_t = 1)]
        svn_base: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct VisibleArgs {
    #[arg(long, allow_hyphen_values = true)]
    lat: f64,
    #[arg(long, allow_hyphen_values = true)]
    lon: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alt: f64,
    #[arg(long, default_value_t = 0.0)]
    epoch: f64,
    /// Elevation mask, degrees
    #[arg(long, default_value_t = 15.0)]
    mask: f64,
    #[arg(long, default_value_t = 1)]
    svn_base: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Observation log; stdout when omitted
    #[arg(long)]
    obs: Option<PathBuf>,
    #[arg(long)]
    solutions: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Correction stream, when the scenario enables differential corrections
    #[arg(long)]
    corrections: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[arg(long, default_value_t = 20)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1)]
    svn_base: u32,
}

impl SolverArgs {
    fn config(&self) -> anyhow::Result<SolverConfig> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(invalid("tolerance must be > 0 and max-iterations >= 1"));
        }
        Ok(SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        })
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    obs: PathBuf,
    /// spp, iono-free or altitude-aided
    #[arg(long, default_value = "spp")]
    mode: String,
    /// Known altitude for altitude-aided mode, m
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alt: f64,
    /// Elevation mask the log was recorded with, deg (altitude-aided cold start)
    #[arg(long, default_value_t = 15.0)]
    mask: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DgpsArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    rover: PathBuf,
    /// Surveyed station position as lat,lon,alt (degrees, metres)
    #[arg(long, allow_hyphen_values = true, conflicts_with = "ref_site")]
    ref_pos: Option<String>,
    /// Named station preset
    #[arg(long)]
    ref_site: Option<String>,
    #[arg(long, default_value = "REF")]
    station_id: String,
    /// Match logs on identical epochs instead of streaming corrections
    #[arg(long)]
    post_process: bool,
    /// Correct the rover's reported fixes instead of its pseudoranges
    #[arg(long)]
    inverted: bool,
    /// Correction staleness window, s
    #[arg(long, default_value_t = STALENESS_WINDOW)]
    window: f64,
    /// Also write the correction stream here
    #[arg(long)]
    corrections_out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AmbiguityArgs {
    #[arg(long)]
    obs: PathBuf,
    /// Search radius, cycles
    #[arg(long, default_value_t = 3)]
    radius: u32,
    #[arg(long, default_value_t = 1.5)]
    ratio: f64,
    #[arg(long, default_value_t = 1e7)]
    max_candidates: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IonofreeArgs {
    /// L1 pseudorange, m
    #[arg(long, allow_hyphen_values = true, requires = "pr_l2")]
    pr_l1: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "pr_l1")]
    pr_l2: Option<f64>,
    /// L1 carrier phase, cycles
    #[arg(long, allow_hyphen_values = true, requires = "phi_l2")]
    phi_l1: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "phi_l1")]
    phi_l2: Option<f64>,
}

#[derive(Args, Debug)]
struct DopMapArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Grid spacing, degrees
    #[arg(long, default_value_t = 10.0)]
    spacing: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MonteCarloArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Marker for errors in the user's input.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Invalid(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<gpslab::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
    }
    2
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_scenario(path: &Path) -> anyhow::Result<Scenario> {
    parse_scenario(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_log(path: &Path, svn_base: u32) -> anyhow::Result<Vec<ObservationEpoch>> {
    let c = Constellation::nominal(svn_base);
    format::read_observation_log(&read(path)?, &c).with_context(|| format!("in {}", path.display()))
}

fn line(out: &mut String, json: JsonLine) {
    out.push_str(&json.finish());
    out.push('\n');
}

fn constellation_dump(epoch: f64, svn_base: u32, out: Option<&Path>) -> anyhow::Result<()> {
    if svn_base == 0 {
        return Err(invalid("svn-base must be >= 1"));
    }
    let c = Constellation::nominal(svn_base);
    let mut text = String::from("svn,plane,slot,x_m,y_m,z_m\n");
    for sat in &c.satellites {
        let p = sat.propagate(Epoch(epoch));
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sat.id.svn,
            sat.id.plane.letter(),
            sat.id.slot,
            fixed(p.x, METRE_DIGITS),
            fixed(p.y, METRE_DIGITS),
            fixed(p.z, METRE_DIGITS)
        ));
    }
    emit(out, &text)
}

fn visible(a: &VisibleArgs) -> anyhow::Result<()> {
    if !(-90.0..=90.0).contains(&a.lat) {
        return Err(invalid(format!("latitude {} outside [-90, 90]", a.lat)));
    }
    let mask = validate_mask(a.mask.to_radians())?;
    let c = Constellation::nominal(a.svn_base.max(1));
    let g = Geodetic::from_degrees(a.lat, a.lon, a.alt);
    let mut text = String::from("svn,plane,slot,elev_deg,azim_deg,range_m\n");
    for v in visible_satellites(&c, &g, mask, Epoch(a.epoch)) {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            v.id.svn,
            v.id.plane.letter(),
            v.id.slot,
            fixed(v.look.elevation.to_degrees(), DEGREE_DIGITS),
            fixed(v.look.azimuth.to_degrees(), DEGREE_DIGITS),
            fixed(v.look.range, METRE_DIGITS)
        ));
    }
    emit(a.out.as_deref(), &text)
}

fn simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let mut s = load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    let report = run_scenario(&s)?;
    if let Some(p) = &a.solutions {
        emit(Some(p), &report.solutions_jsonl())?;
    }
    if let Some(p) = &a.summary {
        emit(Some(p), &report.summary_json())?;
    }
    if let Some(p) = &a.corrections {
        emit(Some(p), &report.corrections_csv())?;
    }
    emit(a.obs.as_deref(), &report.observation_csv())
}

fn solve(a: &SolveArgs) -> anyhow::Result<()> {
    let mode = SolverMode::from_name(&a.mode)
        .ok_or_else(|| invalid(format!("unknown mode {:?}; expected spp, iono-free or altitude-aided", a.mode)))?;
    let mask = validate_mask(a.mask.to_radians())?;
    let cfg = a.solver.config()?;
    let almanac = Constellation::nominal(a.solver.svn_base);
    let epochs = load_log(&a.obs, a.solver.svn_base)?;
    let mut text = String::new();
    let mut last_fix: Option<PvtSolution> = None;
    let mut solved = 0;
    let mut last_err = None;
    for e in &epochs {
        let result = match mode {
            SolverMode::Spp => solve_pvt(&RangeMeasurement::l1(e), InitialGuess::EARTH_CENTER, &cfg),
            SolverMode::IonoFree => solve_pvt(&RangeMeasurement::iono_free(e), InitialGuess::EARTH_CENTER, &cfg),
            SolverMode::AltitudeAided => {
                altitude_aided_fix(&RangeMeasurement::l1(e), a.alt, last_fix.as_ref(), &almanac, e.epoch, mask, &cfg)
            }
        };
        match result {
            Ok(s) => {
                solved += 1;
                line(&mut text, format::solution_json(e.epoch, &s).string("mode", mode.name()));
                last_fix = Some(s);
            }
            Err(err) => {
                line(&mut text, format::failure_json(e.epoch, &err));
                last_err = Some(err);
            }
        }
    }
    emit(a.out.as_deref(), &text)?;
    match (solved, last_err) {
        (0, Some(err)) => Err(anyhow::Error::new(gpslab::Error::AllEpochsFailed(err.to_string()))),
        (0, None) => Err(invalid("observation log has no epochs")),
        _ => Ok(()),
    }
}

fn station_position(a: &DgpsArgs) -> anyhow::Result<Geodetic> {
    match (&a.ref_pos, &a.ref_site) {
        (Some(p), None) => {
            let v: Vec<f64> = p
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| invalid(format!("--ref-pos expects lat,lon,alt, got {p:?}")))?;
            if v.len() != 3 || !(-90.0..=90.0).contains(&v[0]) {
                return Err(invalid(format!("--ref-pos expects lat,lon,alt, got {p:?}")));
            }
            Ok(Geodetic::from_degrees(v[0], v[1], v[2]))
        }
        (None, Some(name)) => preset_site(name).ok_or_else(|| {
            let names: Vec<&str> = PRESET_SITES.iter().map(|s| s.0).collect();
            invalid(format!("unknown site {name:?}; known: {}", names.join(", ")))
        }),
        _ => Err(invalid("give exactly one of --ref-pos or --ref-site")),
    }
}

fn write_log(text: &mut String, log: &CorrectedSolutionLog) {
    for s in &log.solutions {
        line(
            text,
            format::solution_json(s.epoch, &s.solution)
                .string("station", &s.station)
                .num("correction_epoch_s", s.correction_epoch.0, format::EPOCH_DIGITS)
                .int("dropped", s.dropped as i64),
        );
    }
    for (t, e) in &log.skipped {
        line(text, format::failure_json(*t, e).boolean("skipped", true));
    }
}

fn dgps(a: &DgpsArgs) -> anyhow::Result<()> {
    let cfg = a.solver.config()?;
    if !(a.window > 0.0) {
        return Err(invalid("--window must be > 0"));
    }
    let station = ReferenceStation::new(a.station_id.clone(), station_position(a)?.to_ecef())?;
    let reference = load_log(&a.reference, a.solver.svn_base)?;
    let rover = load_log(&a.rover, a.solver.svn_base)?;
    let mut stream = Vec::new();
    for r in &reference {
        match compute_corrections(&station, r) {
            Ok(c) => stream.push(c),
            Err(e) => eprintln!("reference epoch {} s: {e}", r.epoch.0),
        }
    }
    if let Some(p) = &a.corrections_out {
        emit(Some(p), &format::write_corrections(&stream))?;
    }
    let mut text = String::new();
    let solved;
    if a.inverted {
        let mut n = 0;
        for e in &rover {
            let fix = match solve_pvt(&RangeMeasurement::l1(e), InitialGuess::EARTH_CENTER, &cfg) {
                Ok(f) => f,
                Err(err) => {
                    line(&mut text, format::failure_json(e.epoch, &err));
                    continue;
                }
            };
            let Some(c) = stream.iter().find(|c| c.epoch == e.epoch) else {
                line(
                    &mut text,
                    format::failure_json(e.epoch, &gpslab::Error::NoMatchedSatellites).boolean("skipped", true),
                );
                continue;
            };
            let report = FleetReport {
                rover_id: "rover".into(),
                epoch: e.epoch,
                satellites: e.observations.iter().map(|o| o.satellite).collect(),
                solution: fix.clone(),
            };
            match inverted_dgps(std::slice::from_ref(&report), c, a.window) {
                Ok(v) => {
                    n += 1;
                    let mut corrected = fix;
                    corrected.position = v[0].position;
                    corrected.clock_bias = v[0].clock_bias;
                    line(
                        &mut text,
                        format::solution_json(e.epoch, &corrected)
                            .string("station", &c.station)
                            .string("mode", "inverted"),
                    );
                }
                Err(err) => line(&mut text, format::failure_json(e.epoch, &err)),
            }
        }
        solved = n;
    } else {
        let log = if a.post_process {
            post_process(&rover, &reference, &station, a.window, &cfg)
        } else {
            realtime(&rover, &stream, a.window, &cfg)
        };
        write_log(&mut text, &log);
        solved = log.solutions.len();
    }
    emit(a.out.as_deref(), &text)?;
    if solved == 0 {
        return Err(anyhow::Error::new(gpslab::Error::AllEpochsFailed(
            "no rover epoch could be corrected".into(),
        )));
    }
    Ok(())
}

fn ambiguity(a: &AmbiguityArgs) -> anyhow::Result<()> {
    let cfg = a.solver.config()?;
    if !(a.ratio >= 1.0) {
        return Err(invalid("--ratio must be >= 1"));
    }
    let resolve = ResolveConfig {
        search_radius: a.radius,
        ratio_threshold: a.ratio,
        max_candidates: a.max_candidates,
    };
    let epochs = load_log(&a.obs, a.solver.svn_base)?;
    let mut text = String::new();
    let mut fixed_epochs = 0;
    let mut last_err = None;
    for e in &epochs {
        let result = (|| {
            let code = solve_pvt(&RangeMeasurement::l1(e), InitialGuess::EARTH_CENTER, &cfg)?;
            let phases = PhaseMeasurement::l1(e);
            let floats = float_ambiguities(&code, &phases)?;
            let set = resolve_integers(&floats, &phases, &code, &resolve)?;
            let fix = phase_position(&phases, &set, &code, &cfg)?;
            Ok::<_, gpslab::Error>((set, fix))
        })();
        match result {
            Ok((set, fix)) => {
                fixed_epochs += 1;
                for (svn, amb) in &set.entries {
                    line(
                        &mut text,
                        JsonLine::new()
                            .num("epoch_s", e.epoch.0, format::EPOCH_DIGITS)
                            .string("record", "ambiguity")
                            .int("svn", *svn as i64)
                            .num("float_cyc", amb.float_estimate, CYCLE_DIGITS)
                            .int("integer_cyc", amb.resolved.unwrap_or_default())
                            .num("residual_cyc", amb.residual, CYCLE_DIGITS),
                    );
                }
                line(
                    &mut text,
                    format::solution_json(e.epoch, &fix)
                        .string("record", "fix")
                        .opt_num("ratio", set.ratio, METRE_DIGITS),
                );
            }
            Err(err) => {
                line(&mut text, format::failure_json(e.epoch, &err));
                last_err = Some(err);
            }
        }
    }
    emit(a.out.as_deref(), &text)?;
    match (fixed_epochs, last_err) {
        (0, Some(err)) => Err(anyhow::Error::new(err)),
        (0, None) => Err(invalid("observation log has no epochs")),
        _ => Ok(()),
    }
}

fn ionofree(a: &IonofreeArgs) -> anyhow::Result<()> {
    let w = iono_free_wavelength();
    let mut json = JsonLine::new()
        .num("frequency_hz", w.frequency, 3)
        .num("wavelength_m", w.wavelength, 9);
    let mut any = false;
    if let (Some(p1), Some(p2)) = (a.pr_l1, a.pr_l2) {
        let c = iono_free_pseudorange(p1, p2);
        json = json
            .num("pr_literal_m", c.literal, METRE_DIGITS)
            .num("pr_normalized_m", c.normalized, METRE_DIGITS);
        any = true;
    }
    if let (Some(f1), Some(f2)) = (a.phi_l1, a.phi_l2) {
        let c = iono_free_carrier(f1, f2);
        json = json
            .num("phase_literal_m", c.literal, METRE_DIGITS)
            .num("phase_normalized_m", c.normalized, METRE_DIGITS)
            .num("phase_cycles", c.cycles, CYCLE_DIGITS);
        any = true;
    }
    if !any {
        return Err(invalid("give --pr-l1/--pr-l2 and/or --phi-l1/--phi-l2"));
    }
    let mut text = String::new();
    line(&mut text, json);
    emit(None, &text)
}

fn dop_map_cmd(a: &DopMapArgs) -> anyhow::Result<()> {
    let s = load_scenario(&a.scenario)?;
    let cells = dop_map(&s, a.spacing)?;
    emit(a.out.as_deref(), &dop_map_csv(&cells))
}

fn montecarlo(a: &MonteCarloArgs) -> anyhow::Result<()> {
    let mut s = load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    let report = monte_carlo(&s, a.trials)?;
    let mut text = report.to_json();
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    if report.failed_trials == report.trials {
        return Err(anyhow!("every trial failed"));
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Constellation {
            action: ConstellationAction::Dump { epoch, svn_base, out },
        } => constellation_dump(epoch, svn_base, out.as_deref()),
        Command::Visible(a) => visible(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Solve(a) => solve(&a),
        Command::Dgps(a) => dgps(&a),
        Command::Ambiguity(a) => ambiguity(&a),
        Command::Ionofree(a) => ionofree(&a),
        Command::DopMap(a) => dop_map_cmd(&a),
        Command::Montecarlo(a) => montecarlo(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
