#![allow(dead_code)]

use gpslab::constellation::Constellation;
use gpslab::geo::{Epoch, Geodetic, ORBIT_PERIOD};
use gpslab::measurement::{simulate_epoch, ErrorBudget, ObservationEpoch, ReceiverState};
use nalgebra::{Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on the sphere surface.
pub fn surface_point(r: &mut ChaCha8Rng) -> Geodetic {
    let z: f64 = r.random_range(-1.0..1.0);
    Geodetic::new(z.asin(), r.random_range(-std::f64::consts::PI..std::f64::consts::PI), 0.0)
}

/// A random surface receiver with a 1 ms clock at a random time.
pub fn random_epoch(seed: u64, budget: &ErrorBudget, mask_deg: f64) -> ObservationEpoch {
    let mut r = rng(seed);
    let g = surface_point(&mut r);
    let t = Epoch(r.random_range(0.0..ORBIT_PERIOD));
    let rcvr = ReceiverState::at(g.to_ecef()).with_clock(1e-3);
    let c = Constellation::nominal(1);
    simulate_epoch(&c, &rcvr, t, mask_deg.to_radians(), &budget.clone().with_seed(seed)).unwrap()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan(m: [[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut a = [[0.0; 8]; 4];
    for i in 0..4 {
        a[i][..4].copy_from_slice(&m[i]);
        a[i][4 + i] = 1.0;
    }
    for col in 0..4 {
        let p = (col..4).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, p);
        let d = a[col][col];
        a[col].iter_mut().for_each(|v| *v /= d);
        for r in 0..4 {
            if r != col {
                let f = a[r][col];
                let pivot = a[col];
                a[r].iter_mut().zip(pivot).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        out[i].copy_from_slice(&a[i][4..]);
    }
    Some(out)
}

/// (gdop, pdop, hdop, vdop, tdop) by explicit normal-matrix inversion.
pub fn dop_oracle(sats: &[Vector3<f64>], rcvr: &Geodetic) -> Option<[f64; 5]> {
    let p = rcvr.to_ecef().to_vector();
    let mut n = [[0.0; 4]; 4];
    for s in sats {
        let u = (s - p).normalize();
        let row = [-u.x, -u.y, -u.z, 1.0];
        for i in 0..4 {
            for j in 0..4 {
                n[i][j] += row[i] * row[j];
            }
        }
    }
    let q = gauss_jordan(n)?;
    let qm = Matrix4::from_fn(|i, j| q[i][j]);
    let [e, nn, u] = rcvr.enu_basis();
    let q3 = qm.fixed_view::<3, 3>(0, 0).into_owned();
    let var = |v: Vector3<f64>| (v.transpose() * q3 * v)[(0, 0)];
    let h = var(e) + var(nn);
    let v = var(u);
    let t = q[3][3];
    let pos = q[0][0] + q[1][1] + q[2][2];
    Some([(pos + t).sqrt(), pos.sqrt(), h.sqrt(), v.sqrt(), t.sqrt()])
}
