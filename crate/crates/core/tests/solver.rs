mod common;

use common::{dop_oracle, random_epoch, rng, surface_point};
use gpslab::constellation::{visible_from, Constellation};
use gpslab::geo::{Ecef, Epoch, Geodetic, EARTH_RADIUS, ORBIT_PERIOD, SPEED_OF_LIGHT};
use gpslab::measurement::{ErrorBudget, ReceiverState, simulate_epoch};
use gpslab::solver::{
    altitude_aided_roots, dilution_of_precision, geometry_matrix, select_feasible, select_lowest_gdop,
    solve_altitude_aided, solve_altitude_aided_with_almanac, solve_pvt, trilaterate_three_spheres, InitialGuess, RangeMeasurement, SolverConfig,
};
use gpslab::Error;
use itertools::Itertools;
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::Rng;

fn sat_at(g: &Geodetic, el_deg: f64, az_deg: f64) -> Vector3<f64> {
    let [e, n, u] = g.enu_basis();
    let (el, az) = (el_deg.to_radians(), az_deg.to_radians());
    let dir = e * (el.cos() * az.sin()) + n * (el.cos() * az.cos()) + u * el.sin();
    // distance to the orbit sphere along dir
    let p = g.to_ecef().to_vector();
    let b = p.dot(&dir);
    let r = 26_600e3;
    let d = -b + (b * b - p.norm_squared() + r * r).sqrt();
    p + dir * d
}

#[test]
fn geometry_rows_match_finite_differences() {
    let mut r = rng(1);
    for _ in 0..50 {
        let g = surface_point(&mut r);
        let p = g.to_ecef().to_vector();
        let sats: Vec<Ecef> = (0..5)
            .map(|k| Ecef::from_vector(&sat_at(&g, 20.0 + 12.0 * k as f64, 70.0 * k as f64)))
            .collect();
        let m = geometry_matrix(&sats, g.to_ecef()).unwrap();
        let h = 1.0;
        for (i, s) in sats.iter().enumerate() {
            for k in 0..3 {
                let mut step = Vector3::zeros();
                step[k] = h;
                let plus = (s.to_vector() - (p + step)).norm();
                let minus = (s.to_vector() - (p - step)).norm();
                let fd = (plus - minus) / (2.0 * h);
                assert!((m.rows[(i, k)] - fd).abs() < 1e-7, "{} vs {fd}", m.rows[(i, k)]);
            }
            assert_eq!(m.rows[(i, 3)], 1.0);
        }
    }
}

#[test]
fn dop_matches_explicit_inverse() {
    let mut r = rng(2);
    for _ in 0..200 {
        let g = surface_point(&mut r);
        let n = r.random_range(4..=9);
        let sats: Vec<Vector3<f64>> = (0..n)
            .map(|_| sat_at(&g, r.random_range(10.0..90.0), r.random_range(0.0..360.0)))
            .collect();
        let ecef: Vec<Ecef> = sats.iter().map(Ecef::from_vector).collect();
        let Ok(d) = geometry_matrix(&ecef, g.to_ecef()).and_then(|m| dilution_of_precision(&m)) else {
            continue;
        };
        let want = dop_oracle(&sats, &g).unwrap();
        let got = [d.gdop, d.pdop, d.hdop, d.vdop, d.tdop];
        for (a, b) in got.iter().zip(want) {
            assert!(((a - b) / b).abs() < 1e-9, "{got:?} vs {want:?}");
        }
        assert!((d.gdop.powi(2) - d.pdop.powi(2) - d.tdop.powi(2)).abs() < 1e-9 * d.gdop.powi(2));
        assert!((d.pdop.powi(2) - d.hdop.powi(2) - d.vdop.powi(2)).abs() < 1e-9 * d.pdop.powi(2));
    }
}

#[test]
fn clustered_satellites_dilute_more_than_spread_ones() {
    let g = Geodetic::from_degrees(40.0, -105.0, 0.0);
    let spread: Vec<Ecef> = [(90.0, 0.0), (20.0, 0.0), (20.0, 120.0), (20.0, 240.0)]
        .iter()
        .map(|&(el, az)| Ecef::from_vector(&sat_at(&g, el, az)))
        .collect();
    let clustered: Vec<Ecef> = [(80.0, 0.0), (75.0, 10.0), (78.0, 20.0), (72.0, 5.0)]
        .iter()
        .map(|&(el, az)| Ecef::from_vector(&sat_at(&g, el, az)))
        .collect();
    let ds = dilution_of_precision(&geometry_matrix(&spread, g.to_ecef()).unwrap()).unwrap();
    let dc = dilution_of_precision(&geometry_matrix(&clustered, g.to_ecef()).unwrap()).unwrap();
    assert!(ds.gdop < 3.0, "{ds:?}");
    assert!(dc.gdop > 10.0 * ds.gdop, "{dc:?} vs {ds:?}");
}

#[test]
fn lowest_gdop_subset_matches_exhaustive_oracle() {
    let c = Constellation::nominal(1);
    let mut r = rng(3);
    for _ in 0..20 {
        let g = surface_point(&mut r);
        let t = Epoch(r.random_range(0.0..ORBIT_PERIOD));
        let vis = visible_from(&c, g.to_ecef(), 5f64.to_radians(), t).unwrap();
        if vis.len() < 6 {
            continue;
        }
        let pos: Vec<Ecef> = vis.iter().map(|v| v.position).collect();
        let sel = select_lowest_gdop(&pos, g.to_ecef(), 4).unwrap();
        let best = (0..pos.len())
            .combinations(4)
            .filter_map(|ix| {
                let s: Vec<Vector3<f64>> = ix.iter().map(|&i| pos[i].to_vector()).collect();
                dop_oracle(&s, &g).map(|d| d[0])
            })
            .fold(f64::INFINITY, f64::min);
        assert!((sel.dop.gdop - best).abs() < 1e-9 * best, "{} vs {best}", sel.dop.gdop);
    }
}

#[test]
fn trilateration_picks_the_surface_point_every_time() {
    let c = Constellation::nominal(1);
    let mut r = rng(4);
    let mut trials = 0;
    while trials < 1000 {
        let g = surface_point(&mut r);
        let t = Epoch(r.random_range(0.0..ORBIT_PERIOD));
        let truth = g.to_ecef();
        let vis = visible_from(&c, truth, 15f64.to_radians(), t).unwrap();
        if vis.len() < 3 {
            continue;
        }
        trials += 1;
        let centers = [vis[0].position, vis[1].position, vis[2].position];
        let ranges = centers.map(|s| s.distance(truth));
        let pts = trilaterate_three_spheres(centers, ranges).unwrap();
        let pick = select_feasible(&pts).unwrap();
        assert!(pick.distance(truth) < 1e-3, "{}", pick.distance(truth));
    }
}

#[test]
fn three_satellites_are_not_enough() {
    let e = random_epoch(5, &ErrorBudget::error_free(), 15.0);
    let m = RangeMeasurement::l1(&e);
    assert_eq!(
        solve_pvt(&m[..3], InitialGuess::EARTH_CENTER, &SolverConfig::default()),
        Err(Error::InsufficientSatellites { needed: 4, got: 3 })
    );
}

#[test]
fn six_satellite_closed_loop() {
    let mut found = 0;
    for seed in 0..200 {
        let mut e = random_epoch(seed, &ErrorBudget::error_free(), 15.0);
        if e.len() < 6 {
            continue;
        }
        e.observations.truncate(6);
        let s = solve_pvt(&RangeMeasurement::l1(&e), InitialGuess::EARTH_CENTER, &SolverConfig::default()).unwrap();
        assert!(s.converged);
        assert!(s.position.distance(e.receiver_truth.position) < 1e-4);
        assert!((s.clock_bias - 1e-3).abs() < 1e-12);
        assert!(s.iterations <= 8, "{}", s.iterations);
        found += 1;
    }
    assert!(found > 50);
}

#[test]
fn residuals_are_orthogonal_to_the_geometry() {
    let budget = ErrorBudget {
        code_noise_sigma: 3.0,
        ..ErrorBudget::error_free()
    };
    for seed in 0..50 {
        let e = random_epoch(seed, &budget, 10.0);
        let s = solve_pvt(&RangeMeasurement::l1(&e), InitialGuess::EARTH_CENTER, &SolverConfig::default()).unwrap();
        let pos: Vec<Ecef> = e.observations.iter().map(|o| o.satellite.position).collect();
        let g = geometry_matrix(&pos, s.position).unwrap();
        let r = nalgebra::DVector::from_column_slice(&s.residuals);
        let gtr = g.rows.transpose() * &r;
        assert!(gtr.norm() < 1e-6 * r.norm().max(1.0), "{gtr}");
    }
}

#[test]
fn error_spread_follows_pdop_for_fixed_geometry() {
    let mut base = random_epoch(9, &ErrorBudget::error_free(), 15.0);
    while base.len() < 6 {
        base = random_epoch(base.len() as u64 + 100, &ErrorBudget::error_free(), 15.0);
    }
    let truth = base.receiver_truth;
    let c = Constellation::nominal(1);
    let sigma = 1.0;
    let mut sq = 0.0;
    let mut pdop = 0.0;
    let n = 2000;
    for k in 0..n {
        let budget = ErrorBudget {
            code_noise_sigma: sigma,
            ..ErrorBudget::error_free()
        }
        .with_seed(k);
        let e = simulate_epoch(&c, &truth, base.epoch, 15f64.to_radians(), &budget).unwrap();
        let s = solve_pvt(&RangeMeasurement::l1(&e), InitialGuess::EARTH_CENTER, &SolverConfig::default()).unwrap();
        sq += s.position.distance(truth.position).powi(2);
        pdop = s.dop.pdop;
    }
    let ratio = (sq / n as f64).sqrt() / sigma / pdop;
    assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
}

#[test]
fn altitude_aided_three_satellite_fix_at_sea_level() {
    let mut done = 0;
    for seed in 0..100 {
        let mut e = random_epoch(seed, &ErrorBudget::error_free(), 15.0);
        if e.len() < 3 {
            continue;
        }
        e.observations.truncate(3);
        let s = solve_altitude_aided(&RangeMeasurement::l1(&e), 0.0, InitialGuess::EARTH_CENTER, &SolverConfig::default())
            .unwrap();
        assert!(s.position.distance(e.receiver_truth.position) < 1e-3);
        assert!((s.position.norm() - EARTH_RADIUS).abs() < 1e-6);
        done += 1;
    }
    assert!(done > 80);
}

/// Exactly three satellites above an obstructed-horizon mask.
fn three_in_view(r: &mut rand_chacha::ChaCha8Rng) -> (gpslab::measurement::ObservationEpoch, f64) {
    let c = Constellation::nominal(1);
    loop {
        let g = surface_point(r);
        let t = Epoch(r.random_range(0.0..ORBIT_PERIOD));
        let mask = r.random_range(25.0f64..45.0).to_radians();
        let rcvr = ReceiverState::at(g.to_ecef()).with_clock(2e-4);
        let e = simulate_epoch(&c, &rcvr, t, mask, &ErrorBudget::error_free()).unwrap();
        if e.len() == 3 {
            return (e, mask);
        }
    }
}

#[test]
fn three_satellite_roots_include_the_truth() {
    let mut r = rng(12);
    let cfg = SolverConfig::default();
    for _ in 0..200 {
        let (e, _) = three_in_view(&mut r);
        let roots = altitude_aided_roots(&RangeMeasurement::l1(&e), 0.0, &cfg).unwrap();
        assert!((1..=2).contains(&roots.len()), "{}", roots.len());
        assert!(roots.iter().any(|s| s.position.distance(e.receiver_truth.position) < 1e-3));
        for s in &roots {
            assert!((s.position.norm() - EARTH_RADIUS).abs() < 1e-6);
            assert!(s.residual_rms() < 1e-6);
        }
    }
}

#[test]
fn almanac_rejects_roots_that_would_see_more_satellites() {
    let mut r = rng(13);
    let c = Constellation::nominal(1);
    let cfg = SolverConfig::default();
    let (mut centroid_wrong, mut almanac_wrong) = (0, 0);
    for _ in 0..1000 {
        let (e, mask) = three_in_view(&mut r);
        let m = RangeMeasurement::l1(&e);
        let truth = e.receiver_truth.position;
        let cold = solve_altitude_aided(&m, 0.0, InitialGuess::EARTH_CENTER, &cfg).unwrap();
        let aided = solve_altitude_aided_with_almanac(&m, 0.0, &c, e.epoch, mask, &cfg).unwrap();
        centroid_wrong += usize::from(cold.position.distance(truth) > 1e-3);
        almanac_wrong += usize::from(aided.position.distance(truth) > 1e-3);
    }
    assert!(almanac_wrong < centroid_wrong, "{almanac_wrong} vs {centroid_wrong}");
    assert!(almanac_wrong <= 10, "{almanac_wrong}");
}

#[test]
fn wrong_altitude_is_still_honoured() {
    let mut e = random_epoch(21, &ErrorBudget::error_free(), 15.0);
    e.observations.truncate(5);
    let s = solve_altitude_aided(&RangeMeasurement::l1(&e), 1000.0, InitialGuess::EARTH_CENTER, &SolverConfig::default())
        .unwrap();
    assert!((s.position.norm() - EARTH_RADIUS - 1000.0).abs() < 1e-6);
    assert!(s.residual_rms() > 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn constant_offset_moves_only_the_clock(seed in 0u64..500, b in -1e5f64..1e5) {
        let e = random_epoch(seed, &ErrorBudget::error_free(), 15.0);
        prop_assume!(e.len() >= 4);
        let cfg = SolverConfig::default();
        let base = solve_pvt(&RangeMeasurement::l1(&e), InitialGuess::EARTH_CENTER, &cfg).unwrap();
        let shifted: Vec<RangeMeasurement> = RangeMeasurement::l1(&e)
            .into_iter()
            .map(|m| RangeMeasurement::new(m.satellite, m.pseudorange + b))
            .collect();
        let s = solve_pvt(&shifted, InitialGuess::EARTH_CENTER, &cfg).unwrap();
        prop_assert!(s.position.distance(base.position) < 1e-6);
        let dclk = s.clock_bias - base.clock_bias;
        prop_assert!((dclk + b / SPEED_OF_LIGHT).abs() < 1e-15, "{} vs {}", dclk, -b / SPEED_OF_LIGHT);
    }

    #[test]
    fn receiver_clock_shifts_every_pseudorange(seed in 0u64..500, dt in -1e-3f64..1e-3) {
        let mut r = rng(seed);
        let g = surface_point(&mut r);
        let t = Epoch(r.random_range(0.0..ORBIT_PERIOD));
        let c = Constellation::nominal(1);
        let budget = ErrorBudget::error_free();
        let a = simulate_epoch(&c, &ReceiverState::at(g.to_ecef()), t, 0.2, &budget).unwrap();
        let b = simulate_epoch(&c, &ReceiverState::at(g.to_ecef()).with_clock(dt), t, 0.2, &budget).unwrap();
        for (x, y) in a.observations.iter().zip(&b.observations) {
            prop_assert!((y.code.pr_l1 - x.code.pr_l1 + SPEED_OF_LIGHT * dt).abs() < 1e-6);
        }
    }
}
