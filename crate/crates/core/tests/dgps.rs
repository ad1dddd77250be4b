mod common;

use gpslab::atmosphere::{IonosphereModel, TroposphereModel};
use gpslab::constellation::Constellation;
use gpslab::dgps::{
    apply_corrections, compute_corrections, corrected_fix, inverted_dgps, post_process, realtime, CorrectionSet,
    FleetReport, ReferenceStation, STALENESS_WINDOW,
};
use gpslab::geo::{Epoch, Geodetic};
use gpslab::measurement::{simulate_epoch, ErrorBudget, ObservationEpoch, ReceiverState};
use gpslab::solver::{solve_pvt, InitialGuess, RangeMeasurement, SolverConfig};
use gpslab::Error;

const MASK: f64 = 0.2617993877991494; // 15 deg

fn station() -> ReferenceStation {
    ReferenceStation::new("REF", Geodetic::from_degrees(38.8, -104.5, 0.0).to_ecef()).unwrap()
}

/// About 44 km north-east of the station.
fn rover_site() -> Geodetic {
    Geodetic::from_degrees(39.1, -104.2, 0.0)
}

fn common_mode(sa: f64) -> ErrorBudget {
    ErrorBudget {
        iono: Some(IonosphereModel::with_l1_delay(5.0).unwrap()),
        tropo: Some(TroposphereModel::default()),
        sa_sigma: sa,
        common_seed: 77,
        ..ErrorBudget::error_free()
    }
}

fn observe(site: Geodetic, clock: f64, t: f64, budget: &ErrorBudget) -> ObservationEpoch {
    let c = Constellation::nominal(1);
    let rcvr = ReceiverState::at(site.to_ecef()).with_clock(clock);
    simulate_epoch(&c, &rcvr, Epoch(t), MASK, budget).unwrap()
}

fn spp(e: &ObservationEpoch) -> gpslab::solver::PvtSolution {
    solve_pvt(&RangeMeasurement::l1(e), InitialGuess::EARTH_CENTER, &SolverConfig::default()).unwrap()
}

#[test]
fn error_free_world_gives_zero_corrections() {
    let st = station();
    for k in 0..20 {
        let t = 600.0 * k as f64;
        let obs = observe(Geodetic::from_degrees(38.8, -104.5, 0.0), 2e-4, t, &ErrorBudget::error_free());
        let corr = compute_corrections(&st, &obs).unwrap();
        assert!(corr.entries.values().all(|v| v.abs() < 1e-6), "{corr:?}");
        let rover = observe(rover_site(), -3e-4, t, &ErrorBudget::error_free());
        let (_, fixed) = corrected_fix(&rover, &corr, STALENESS_WINDOW, &SolverConfig::default()).unwrap();
        assert!(fixed.position.distance(spp(&rover).position) < 1e-6);
    }
}

#[test]
fn corrections_cover_only_satellites_the_station_sees() {
    let st = station();
    let obs = observe(Geodetic::from_degrees(38.8, -104.5, 0.0), 0.0, 0.0, &ErrorBudget::error_free());
    let corr = compute_corrections(&st, &obs).unwrap();
    assert_eq!(corr.entries.keys().copied().collect::<Vec<_>>(), {
        let mut v = obs.svns();
        v.sort();
        v
    });
}

#[test]
fn delay_on_one_satellite_shows_up_relative_to_the_rest() {
    let st = station();
    let base = observe(Geodetic::from_degrees(38.8, -104.5, 0.0), 0.0, 900.0, &ErrorBudget::error_free());
    let target = base.observations[1].satellite.id.svn;
    let mut budget = ErrorBudget::error_free();
    budget.satellite_delay.insert(target, 10.0);
    let obs = observe(Geodetic::from_degrees(38.8, -104.5, 0.0), 1e-4, 900.0, &budget);
    let corr = compute_corrections(&st, &obs).unwrap();
    let hit = corr.entries[&target];
    for (&svn, &v) in &corr.entries {
        if svn != target {
            assert!((hit - v + 10.0).abs() < 1e-6, "{hit} vs {v}");
        }
    }
    assert!(corr.entries.values().sum::<f64>().abs() < 1e-6);
}

#[test]
fn fully_common_errors_cancel() {
    let st = station();
    let budget = common_mode(10.0);
    for k in 0..30 {
        let t = 1200.0 * k as f64;
        let obs = observe(Geodetic::from_degrees(38.8, -104.5, 0.0), 1e-4, t, &budget.clone().with_seed(1));
        let corr = compute_corrections(&st, &obs).unwrap();
        let near = Geodetic::from_degrees(38.8009, -104.5, 0.0); // 100 m
        let rover = observe(near, -2e-4, t, &budget.clone().with_seed(2));
        let raw = spp(&rover).position.distance(near.to_ecef());
        let (_, fixed) = corrected_fix(&rover, &corr, STALENESS_WINDOW, &SolverConfig::default()).unwrap();
        let err = fixed.position.distance(near.to_ecef());
        assert!(err < 1e-3, "corrected {err} m, raw {raw} m");
        assert!(raw > 1.0);
    }
}

#[test]
fn zero_corrections_leave_matched_satellites_untouched() {
    let rover = observe(rover_site(), 0.0, 50.0, &common_mode(5.0));
    let mut corr = CorrectionSet::new(Epoch(50.0), "REF");
    for svn in rover.svns().into_iter().skip(1) {
        corr.entries.insert(svn, 0.0);
    }
    let out = apply_corrections(&rover, &corr, STALENESS_WINDOW).unwrap();
    assert_eq!(out.dropped, 1);
    assert_eq!(&out.epoch.observations[..], &rover.observations[1..]);
}

#[test]
fn stale_corrections_are_rejected() {
    let rover = observe(rover_site(), 0.0, 100.0, &ErrorBudget::error_free());
    let mut corr = CorrectionSet::new(Epoch(95.0), "REF");
    corr.entries = rover.svns().into_iter().map(|s| (s, 0.0)).collect();
    assert!(apply_corrections(&rover, &corr, 5.0).is_ok());
    corr.epoch = Epoch(94.9);
    assert!(matches!(
        apply_corrections(&rover, &corr, 5.0),
        Err(Error::StaleCorrections { .. })
    ));
    corr.epoch = Epoch(105.1);
    assert!(apply_corrections(&rover, &corr, 5.0).is_err());

    let log = realtime(std::slice::from_ref(&rover), &[CorrectionSet { epoch: Epoch(80.0), ..corr }], 5.0, &SolverConfig::default());
    assert!(log.solutions.is_empty());
    assert!(matches!(log.skipped[0].1, Error::StaleCorrections { .. }));
}

#[test]
fn station_needs_four_satellites() {
    let mut obs = observe(Geodetic::from_degrees(38.8, -104.5, 0.0), 0.0, 0.0, &ErrorBudget::error_free());
    obs.observations.truncate(3);
    assert_eq!(compute_corrections(&station(), &obs), Err(Error::CannotSeparateStationClock(3)));
}

fn logs(n: usize) -> (Vec<ObservationEpoch>, Vec<ObservationEpoch>) {
    let budget = common_mode(10.0);
    let mut rover_budget = budget.clone().with_seed(5);
    rover_budget.code_noise_sigma = 0.5;
    let times = (0..n).map(|k| 30.0 * k as f64);
    let reference = times
        .clone()
        .map(|t| observe(Geodetic::from_degrees(38.8, -104.5, 0.0), 3e-4, t, &budget))
        .collect();
    let rover = times.map(|t| observe(rover_site(), -1e-4, t, &rover_budget)).collect();
    (rover, reference)
}

#[test]
fn realtime_and_post_processed_agree_bit_for_bit() {
    let (rover, reference) = logs(40);
    let st = station();
    let stream: Vec<CorrectionSet> = reference.iter().map(|r| compute_corrections(&st, r).unwrap()).collect();
    let cfg = SolverConfig::default();
    let rt = realtime(&rover, &stream, STALENESS_WINDOW, &cfg);
    let pp = post_process(&rover, &reference, &st, STALENESS_WINDOW, &cfg);
    assert_eq!(rt.solutions.len(), 40);
    assert_eq!(rt, pp);
}

#[test]
fn missing_reference_epoch_is_skipped() {
    let (rover, mut reference) = logs(10);
    reference.remove(4);
    let log = post_process(&rover, &reference, &station(), STALENESS_WINDOW, &SolverConfig::default());
    assert_eq!(log.solutions.len(), 9);
    assert_eq!(log.skipped.len(), 1);
    assert_eq!(log.skipped[0].0, rover[4].epoch);
}

#[test]
fn corrected_fixes_beat_raw_ones() {
    let (rover, reference) = logs(60);
    let log = post_process(&rover, &reference, &station(), STALENESS_WINDOW, &SolverConfig::default());
    let truth = rover_site().to_ecef();
    let rms = |v: Vec<f64>| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let raw = rms(rover.iter().map(|e| spp(e).position.distance(truth)).collect());
    let fixed = rms(log.solutions.iter().map(|s| s.solution.position.distance(truth)).collect());
    assert!(fixed < 0.25 * raw, "corrected {fixed} raw {raw}");
    assert!(fixed < 2.5, "{fixed}");
}

fn report(e: &ObservationEpoch) -> FleetReport {
    FleetReport {
        rover_id: "R1".into(),
        epoch: e.epoch,
        solution: spp(e),
        satellites: e.observations.iter().map(|o| o.satellite).collect(),
    }
}

#[test]
fn inverted_mode_tracks_the_exact_re_solve() {
    let st = station();
    let budget = common_mode(3.0);
    let mut checked = 0;
    for k in 0..40 {
        let t = 700.0 * k as f64;
        let corr = compute_corrections(&st, &observe(Geodetic::from_degrees(38.8, -104.5, 0.0), 0.0, t, &budget)).unwrap();
        let rover = observe(rover_site(), 2e-4, t, &budget.clone().with_seed(9));
        if corr.entries.values().any(|v| v.abs() > 10.0) || rover.svns().iter().any(|s| !corr.entries.contains_key(s)) {
            continue;
        }
        let inv = inverted_dgps(&[report(&rover)], &corr, STALENESS_WINDOW).unwrap()[0];
        let (_, exact) = corrected_fix(&rover, &corr, STALENESS_WINDOW, &SolverConfig::default()).unwrap();
        let d = inv.position.distance(exact.position);
        assert!(d < 0.1, "{d}");
        assert!((inv.clock_bias - exact.clock_bias).abs() < 0.1 / 299_792_458.0);
        checked += 1;
    }
    assert!(checked > 20, "{checked}");
}

#[test]
fn inverted_mode_with_zero_corrections_is_identity() {
    let rover = observe(rover_site(), 2e-4, 10.0, &common_mode(3.0));
    let mut corr = CorrectionSet::new(rover.epoch, "REF");
    corr.entries = rover.svns().into_iter().map(|s| (s, 0.0)).collect();
    let r = report(&rover);
    let inv = inverted_dgps(std::slice::from_ref(&r), &corr, STALENESS_WINDOW).unwrap()[0];
    assert_eq!(inv.position, r.solution.position);
    assert_eq!(inv.clock_bias, r.solution.clock_bias);
}

#[test]
fn inverted_mode_rejects_unknown_satellites() {
    let rover = observe(rover_site(), 0.0, 10.0, &ErrorBudget::error_free());
    let mut corr = CorrectionSet::new(rover.epoch, "REF");
    let svns = rover.svns();
    corr.entries = svns[1..].iter().map(|&s| (s, 0.0)).collect();
    assert_eq!(
        inverted_dgps(&[report(&rover)], &corr, STALENESS_WINDOW),
        Err(Error::UnknownSatellite(svns[0]))
    );
}
