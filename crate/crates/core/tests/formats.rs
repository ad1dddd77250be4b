mod common;

use common::random_epoch;
use gpslab::constellation::Constellation;
use gpslab::dgps::CorrectionSet;
use gpslab::format::{
    correction_rows, fixed, observation_rows, parse_corrections, parse_observations, quantize, read_observation_log,
    solution_json, write_corrections, write_observation_rows, write_observations, ObservationRow, CORRECTION_HEADER,
};
use gpslab::geo::{Epoch, Geodetic};
use gpslab::measurement::{simulate_epoch, ErrorBudget, ReceiverState};
use gpslab::solver::{solve_pvt, InitialGuess, RangeMeasurement, SolverConfig};
use gpslab::Error;
use proptest::prelude::*;

fn row() -> impl Strategy<Value = ObservationRow> {
    (
        0.0..1e6f64,
        1u32..100,
        (1.9e7..2.6e7f64, 1.9e7..2.6e7f64),
        (-1.4e8..1.4e8f64, -1.1e8..1.1e8f64),
        (0.0..90.0f64, 0.0..360.0f64),
    )
        .prop_map(|(t, svn, (p1, p2), (f1, f2), (el, az))| ObservationRow {
            epoch_s: quantize(t, 6),
            svn,
            pr_l1_m: quantize(p1, 6),
            pr_l2_m: quantize(p2, 6),
            phase_l1_cyc: quantize(f1, 9),
            phase_l2_cyc: quantize(f2, 9),
            elev_deg: quantize(el, 6),
            azim_deg: quantize(az, 6),
        })
}

proptest! {
    #[test]
    fn observation_rows_round_trip(rows in prop::collection::vec(row(), 0..40)) {
        let text = write_observation_rows(&rows);
        let back = parse_observations(&text).unwrap();
        prop_assert_eq!(&back, &rows);
        prop_assert_eq!(write_observation_rows(&back), text);
    }

    #[test]
    fn corrections_round_trip(
        sets in prop::collection::vec(
            (0.0..1e5f64, "[A-Z]{1,6}", prop::collection::btree_map(1u32..64, -50.0..50.0f64, 1..12)),
            0..8,
        )
    ) {
        let sets: Vec<CorrectionSet> = sets
            .into_iter()
            .enumerate()
            .map(|(i, (t, id, entries))| CorrectionSet {
                // strictly increasing so consecutive sets never merge
                epoch: Epoch(quantize(t + 1e5 * i as f64, 6)),
                station: id,
                entries: entries.into_iter().map(|(k, v)| (k, quantize(v, 6))).collect(),
            })
            .collect();
        let text = write_corrections(&sets);
        let back = parse_corrections(&text).unwrap();
        prop_assert_eq!(&back, &sets);
        prop_assert_eq!(write_corrections(&back), text.clone());
        let with_header = format!("{CORRECTION_HEADER}\n{text}");
        prop_assert_eq!(parse_corrections(&with_header).unwrap(), back);
    }

    #[test]
    fn fixed_text_is_the_nearest_decimal(v in -1e8..1e8f64, digits in 0usize..10) {
        let s = fixed(v, digits);
        let frac = s.split('.').nth(1).map_or(0, str::len);
        prop_assert_eq!(frac, digits);
        let q: f64 = s.parse().unwrap();
        let half = 0.5 * 10f64.powi(-(digits as i32));
        prop_assert!((q - v).abs() <= half + 4.0 * f64::EPSILON * v.abs());
        prop_assert_eq!(fixed(q, digits), s.clone());
        prop_assert_eq!(quantize(q, digits), q);
    }
}

#[test]
fn simulated_logs_round_trip_bit_for_bit() {
    let budget = ErrorBudget::default();
    let epochs: Vec<_> = (0..30).map(|s| random_epoch(s, &budget, 10.0)).collect();
    let text = write_observations(&epochs);
    let rows = parse_observations(&text).unwrap();
    assert_eq!(rows, observation_rows(&epochs));
    assert_eq!(write_observation_rows(&rows), text);
    let again: Vec<_> = (0..30).map(|s| random_epoch(s, &budget, 10.0)).collect();
    assert_eq!(write_observations(&again), text);
}

#[test]
fn parsed_logs_still_solve() {
    let c = Constellation::nominal(1);
    let rcvr = ReceiverState::at(Geodetic::from_degrees(-33.9, 151.2, 0.0).to_ecef()).with_clock(1e-3);
    let epochs: Vec<_> = (0..10)
        .map(|k| simulate_epoch(&c, &rcvr, Epoch(30.0 * k as f64), 0.2617993877991494, &ErrorBudget::error_free()).unwrap())
        .collect();
    let back = read_observation_log(&write_observations(&epochs), &c).unwrap();
    assert_eq!(back.len(), epochs.len());
    for (e, b) in epochs.iter().zip(&back) {
        assert_eq!(b.epoch, e.epoch);
        let s = solve_pvt(&RangeMeasurement::l1(b), InitialGuess::EARTH_CENTER, &SolverConfig::default()).unwrap();
        // 6-decimal ranges perturb the fix by micrometres
        let d = s.position.distance(rcvr.position);
        assert!(d < 1e-4, "{d}");
    }
}

#[test]
fn malformed_rows_name_line_and_field() {
    let e = random_epoch(3, &ErrorBudget::default(), 15.0);
    let text = write_observations(std::slice::from_ref(&e));
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut f: Vec<String> = lines[2].split(',').map(String::from).collect();
    f[3] = "abc".into();
    lines[2] = f.join(",");
    match parse_observations(&lines.join("\n")) {
        Err(Error::Parse { line, key, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(key, "pr_l2_m");
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_observations("a,b\n"), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(
        parse_corrections("1.0,REF,5\n"),
        Err(Error::Parse { line: 1, .. })
    ));
    assert!(matches!(
        parse_corrections("1.0,REF,5,1.0\n1.0,REF,5,2.0\n"),
        Err(Error::Parse { line: 2, .. })
    ));
}

#[test]
fn correction_rows_are_quantized() {
    let mut set = CorrectionSet::new(Epoch(1.0 / 3.0), "REF");
    set.entries.insert(4, 2.0 / 3.0);
    let r = &correction_rows(&set)[0];
    assert_eq!(r.prc_m, 0.666667);
    assert_eq!(r.epoch_s, 0.333333);
    assert_eq!(r.to_line(), "0.333333,REF,4,0.666667");
}

#[test]
fn solution_lines_are_valid_json() {
    let e = random_epoch(11, &ErrorBudget::default(), 15.0);
    let s = solve_pvt(&RangeMeasurement::l1(&e), InitialGuess::EARTH_CENTER, &SolverConfig::default()).unwrap();
    let line = solution_json(e.epoch, &s).finish();
    assert!(!line.contains('\n'));
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["ok"], true);
    assert_eq!(v["svns"].as_array().unwrap().len(), e.len());
    let x = v["x_m"].as_f64().unwrap();
    assert_eq!(x, quantize(s.position.x, 6));
    assert_eq!(v["clock_s"].as_f64().unwrap(), quantize(s.clock_bias, 12));
}
