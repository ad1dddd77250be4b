//! Forward model: dual-frequency code and carrier observables.
//!
//! A pseudorange on carrier `f` is
//!
//! ```text
//! pr_f = range + c (d_s - d_r) + a / f^2 + tropo + multipath + sa + bias + noise_f
//! ```
//!
//! and the carrier phase, in cycles, carries the same terms with the
//! ionospheric term negated, divided by the wavelength, plus an integer
//! ambiguity. Random terms come from independent substreams keyed by
//! `(seed, svn, epoch, observable)`, so toggling one error source never
//! changes the draws of another.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::atmosphere::{IonosphereModel, TroposphereModel};
use crate::constellation::{visible_satellites, Constellation, LookAngles, SatelliteId};
use crate::geo::{
    ecef_to_geodetic, wavelength_l1, wavelength_l2, Ecef, Epoch, EARTH_RADIUS, F_L1, F_L2,
    SPEED_OF_LIGHT,
};
use crate::{Error, Result};

/// Multipath e-folding elevation, rad (10 deg).
pub const MULTIPATH_SCALE: f64 = 10.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverState {
    pub position: Ecef,
    /// Receiver clock offset `d_r`, s.
    pub clock_bias: f64,
    /// m/s
    pub velocity: Vector3<f64>,
}

impl ReceiverState {
    pub fn at(position: Ecef) -> Self {
        Self {
            position,
            clock_bias: 0.0,
            velocity: Vector3::zeros(),
        }
    }

    pub fn with_clock(mut self, clock_bias: f64) -> Self {
        self.clock_bias = clock_bias;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteState {
    pub id: SatelliteId,
    pub position: Ecef,
    /// Satellite clock offset `d_s`, s.
    pub clock_bias: f64,
}

impl SatelliteState {
    pub fn new(id: SatelliteId, position: Ecef, clock_bias: f64) -> Result<Self> {
        if !(position.norm() > EARTH_RADIUS) {
            return Err(Error::InvalidArgument(format!(
                "satellite {id} position is not above the Earth surface"
            )));
        }
        Ok(Self {
            id,
            position,
            clock_bias,
        })
    }
}

/// Switches and magnitudes for every simulated error source.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBudget {
    pub iono: Option<IonosphereModel>,
    pub tropo: Option<TroposphereModel>,
    /// Peak of the deterministic bias `amplitude * exp(-el / 10 deg)`, m.
    pub multipath_amplitude: f64,
    /// Per-frequency code noise, m.
    pub code_noise_sigma: f64,
    /// Per-frequency carrier noise, cycles.
    pub phase_noise_sigma: f64,
    /// Selective-availability clock dither, m. Drawn from `common_seed`.
    pub sa_sigma: f64,
    /// Broadcast-minus-true satellite position error by SVN, m.
    pub ephemeris_error: BTreeMap<u32, Ecef>,
    /// Extra satellite-side range delay by SVN, m.
    pub satellite_delay: BTreeMap<u32, f64>,
    /// Integer ambiguities are drawn uniformly from `[-max, max]`.
    pub max_ambiguity: u32,
    /// Seed for receiver-side draws (noise, ambiguities).
    pub rng_seed: u64,
    /// Seed for satellite-side draws shared by every receiver (SA dither).
    pub common_seed: u64,
}

impl Default for ErrorBudget {
    fn default() -> Self {
        Self {
            iono: None,
            tropo: None,
            multipath_amplitude: 0.0,
            code_noise_sigma: 1.0,
            phase_noise_sigma: 0.01,
            sa_sigma: 0.0,
            ephemeris_error: BTreeMap::new(),
            satellite_delay: BTreeMap::new(),
            max_ambiguity: 500,
            rng_seed: 0,
            common_seed: 0,
        }
    }
}

impl ErrorBudget {
    /// Every error source off, zero noise, zero ambiguities.
    pub fn error_free() -> Self {
        Self {
            code_noise_sigma: 0.0,
            phase_noise_sigma: 0.0,
            max_ambiguity: 0,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("multipath_amplitude", self.multipath_amplitude),
            ("code_noise_sigma", self.code_noise_sigma),
            ("phase_noise_sigma", self.phase_noise_sigma),
            ("sa_sigma", self.sa_sigma),
        ];
        for (name, v) in sigmas {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn multipath(&self, elevation: f64) -> f64 {
        self.multipath_amplitude * (-elevation / MULTIPATH_SCALE).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudorangeObservation {
    pub svn: u32,
    /// m
    pub pr_l1: f64,
    /// m
    pub pr_l2: f64,
    pub epoch: Epoch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierPhaseObservation {
    pub svn: u32,
    /// cycles
    pub phase_l1: f64,
    /// cycles
    pub phase_l2: f64,
    /// True integer ambiguities; hidden from the solvers, kept for scoring.
    pub ambiguity_l1: i64,
    pub ambiguity_l2: i64,
    pub epoch: Epoch,
}

/// Everything observed from one satellite at one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Broadcast state: what a receiver believes about the satellite.
    pub satellite: SatelliteState,
    pub look: LookAngles,
    pub code: PseudorangeObservation,
    pub phase: CarrierPhaseObservation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationEpoch {
    pub epoch: Epoch,
    pub receiver_truth: ReceiverState,
    pub observations: Vec<Observation>,
}

impl ObservationEpoch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn svns(&self) -> Vec<u32> {
        self.observations.iter().map(|o| o.satellite.id.svn).collect()
    }

    pub fn get(&self, svn: u32) -> Option<&Observation> {
        self.observations.iter().find(|o| o.satellite.id.svn == svn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Stream {
    CodeL1 = 1,
    CodeL2 = 2,
    PhaseL1 = 3,
    PhaseL2 = 4,
    SelectiveAvailability = 5,
    AmbiguityL1 = 6,
    AmbiguityL2 = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parts` into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |h, &p| splitmix64(h ^ p))
}

fn substream(seed: u64, svn: u32, epoch: Epoch, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(&[seed, svn as u64, epoch.0.to_bits(), stream as u64]))
}

fn gaussian(sigma: f64, seed: u64, svn: u32, epoch: Epoch, stream: Stream) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = substream(seed, svn, epoch, stream).sample(StandardNormal);
    sigma * z
}

fn ambiguity(budget: &ErrorBudget, svn: u32, stream: Stream) -> i64 {
    if budget.max_ambiguity == 0 {
        return 0;
    }
    let m = budget.max_ambiguity as i64;
    // Keyed without the epoch: one draw per satellite pass.
    substream(budget.rng_seed, svn, Epoch(0.0), stream).random_range(-m..=m)
}

pub fn true_range(sat: Ecef, rcvr: Ecef) -> Result<f64> {
    let d = sat.distance(rcvr);
    if d == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(d)
}

/// Deterministic and satellite-common terms shared by code and phase.
#[derive(Debug, Clone, Copy)]
struct Terms {
    geometric: f64,
    clock: f64,
    non_dispersive: f64,
    iono_l1: f64,
    iono_l2: f64,
}

fn terms(
    sat: &SatelliteState,
    rcvr: &ReceiverState,
    look: &LookAngles,
    budget: &ErrorBudget,
    epoch: Epoch,
) -> Result<Terms> {
    if look.elevation <= 0.0 {
        return Err(Error::BelowHorizon {
            elevation: look.elevation,
        });
    }
    let svn = sat.id.svn;
    let geometric = true_range(sat.position, rcvr.position)?;
    let clock = SPEED_OF_LIGHT * (sat.clock_bias - rcvr.clock_bias);
    let tropo = match &budget.tropo {
        Some(m) => m.delay(look.elevation)?.total(),
        None => 0.0,
    };
    let (iono_l1, iono_l2) = match &budget.iono {
        Some(m) => (m.delay(F_L1)?, m.delay(F_L2)?),
        None => (0.0, 0.0),
    };
    let sa = gaussian(
        budget.sa_sigma,
        budget.common_seed,
        svn,
        epoch,
        Stream::SelectiveAvailability,
    );
    let bias = budget.satellite_delay.get(&svn).copied().unwrap_or(0.0);
    Ok(Terms {
        geometric,
        clock,
        non_dispersive: tropo + budget.multipath(look.elevation) + sa + bias,
        iono_l1,
        iono_l2,
    })
}

pub fn simulate_pseudorange(
    sat: &SatelliteState,
    rcvr: &ReceiverState,
    look: &LookAngles,
    budget: &ErrorBudget,
    epoch: Epoch,
) -> Result<PseudorangeObservation> {
    let t = terms(sat, rcvr, look, budget, epoch)?;
    let svn = sat.id.svn;
    let common = t.geometric + t.clock + t.non_dispersive;
    let sigma = budget.code_noise_sigma;
    Ok(PseudorangeObservation {
        svn,
        pr_l1: common + t.iono_l1 + gaussian(sigma, budget.rng_seed, svn, epoch, Stream::CodeL1),
        pr_l2: common + t.iono_l2 + gaussian(sigma, budget.rng_seed, svn, epoch, Stream::CodeL2),
        epoch,
    })
}

pub fn simulate_carrier_phase(
    sat: &SatelliteState,
    rcvr: &ReceiverState,
    look: &LookAngles,
    budget: &ErrorBudget,
    epoch: Epoch,
) -> Result<CarrierPhaseObservation> {
    let t = terms(sat, rcvr, look, budget, epoch)?;
    let svn = sat.id.svn;
    let common = t.geometric + t.clock + t.non_dispersive;
    let n1 = ambiguity(budget, svn, Stream::AmbiguityL1);
    let n2 = ambiguity(budget, svn, Stream::AmbiguityL2);
    let sigma = budget.phase_noise_sigma;
    Ok(CarrierPhaseObservation {
        svn,
        phase_l1: (common - t.iono_l1) / wavelength_l1()
            + n1 as f64
            + gaussian(sigma, budget.rng_seed, svn, epoch, Stream::PhaseL1),
        phase_l2: (common - t.iono_l2) / wavelength_l2()
            + n2 as f64
            + gaussian(sigma, budget.rng_seed, svn, epoch, Stream::PhaseL2),
        ambiguity_l1: n1,
        ambiguity_l2: n2,
        epoch,
    })
}

/// One observation pair per satellite above `mask`, highest elevation first.
///
/// Signals leave the true orbit; the stored satellite state is the broadcast
/// one (true position plus any ephemeris error, zero clock).
pub fn simulate_epoch(
    constellation: &Constellation,
    rcvr: &ReceiverState,
    t: Epoch,
    mask: f64,
    budget: &ErrorBudget,
) -> Result<ObservationEpoch> {
    budget.validate()?;
    let observer = ecef_to_geodetic(rcvr.position)?;
    let mut observations = Vec::new();
    for vis in visible_satellites(constellation, &observer, mask, t) {
        if vis.look.elevation <= 0.0 {
            continue;
        }
        let truth = SatelliteState {
            id: vis.id,
            position: vis.position,
            clock_bias: 0.0,
        };
        let broadcast = SatelliteState {
            position: vis.position
                + budget
                    .ephemeris_error
                    .get(&vis.id.svn)
                    .copied()
                    .unwrap_or_default(),
            ..truth
        };
        observations.push(Observation {
            satellite: broadcast,
            look: vis.look,
            code: simulate_pseudorange(&truth, rcvr, &vis.look, budget, t)?,
            phase: simulate_carrier_phase(&truth, rcvr, &vis.look, budget, t)?,
        });
    }
    Ok(ObservationEpoch {
        epoch: t,
        receiver_truth: *rcvr,
        observations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{Geodetic, ORBIT_RADIUS};

    fn setup() -> (SatelliteState, ReceiverState, LookAngles) {
        let c = Constellation::nominal(1);
        let rcvr = ReceiverState::at(Geodetic::from_degrees(30.0, 10.0, 0.0).to_ecef());
        let g = ecef_to_geodetic(rcvr.position).unwrap();
        let vis = visible_satellites(&c, &g, 0.2, Epoch(600.0))[0];
        (
            SatelliteState::new(vis.id, vis.position, 0.0).unwrap(),
            rcvr,
            vis.look,
        )
    }

    #[test]
    fn range_basics() {
        assert_eq!(true_range(Ecef::ORIGIN, Ecef::new(3.0, 4.0, 0.0)), Ok(5.0));
        assert_eq!(true_range(Ecef::new(3.0, 4.0, 0.0), Ecef::ORIGIN), Ok(5.0));
        assert_eq!(true_range(Ecef::ORIGIN, Ecef::ORIGIN), Err(Error::CoincidentPoints));
        let zenith = true_range(
            Ecef::new(0.0, 0.0, ORBIT_RADIUS),
            Ecef::new(0.0, 0.0, EARTH_RADIUS),
        );
        assert_eq!(zenith, Ok(20_229e3));
    }

    #[test]
    fn error_free_pseudorange_is_geometric_range() {
        let (sat, rcvr, look) = setup();
        let obs =
            simulate_pseudorange(&sat, &rcvr, &look, &ErrorBudget::error_free(), Epoch(600.0))
                .unwrap();
        let rho = sat.position.distance(rcvr.position);
        assert_eq!(obs.pr_l1, rho);
        assert_eq!(obs.pr_l2, rho);
    }

    #[test]
    fn receiver_clock_shifts_by_minus_c_dt() {
        let (sat, rcvr, look) = setup();
        let b = ErrorBudget::error_free();
        let base = simulate_pseudorange(&sat, &rcvr, &look, &b, Epoch(0.0)).unwrap();
        let late = simulate_pseudorange(&sat, &rcvr.with_clock(1e-3), &look, &b, Epoch(0.0)).unwrap();
        assert!((late.pr_l1 - base.pr_l1 + 299_792.458).abs() < 1e-6);
        assert!((late.pr_l2 - base.pr_l2 + 299_792.458).abs() < 1e-6);
    }

    #[test]
    fn ionosphere_separates_frequencies() {
        let (sat, rcvr, look) = setup();
        let b = ErrorBudget {
            iono: Some(IonosphereModel::with_l1_delay(5.0).unwrap()),
            ..ErrorBudget::error_free()
        };
        let obs = simulate_pseudorange(&sat, &rcvr, &look, &b, Epoch(0.0)).unwrap();
        assert!((obs.pr_l2 - obs.pr_l1 - 3.2347).abs() < 1e-4);
    }

    #[test]
    fn below_horizon_is_rejected() {
        let (sat, rcvr, mut look) = setup();
        look.elevation = -0.01;
        let b = ErrorBudget::error_free();
        assert!(matches!(
            simulate_pseudorange(&sat, &rcvr, &look, &b, Epoch(0.0)),
            Err(Error::BelowHorizon { .. })
        ));
        assert!(simulate_carrier_phase(&sat, &rcvr, &look, &b, Epoch(0.0)).is_err());
    }

    #[test]
    fn error_free_phase_counts_wavelengths() {
        let (sat, rcvr, look) = setup();
        let p = simulate_carrier_phase(&sat, &rcvr, &look, &ErrorBudget::error_free(), Epoch(0.0))
            .unwrap();
        let rho = sat.position.distance(rcvr.position);
        assert_eq!(p.ambiguity_l1, 0);
        assert!((p.phase_l1 - rho / wavelength_l1()).abs() < 1e-6);
        assert!((wavelength_l1() - 0.1903).abs() < 1e-4);
    }

    #[test]
    fn ambiguity_adds_whole_cycles() {
        let (sat, rcvr, look) = setup();
        let b = ErrorBudget {
            max_ambiguity: 50,
            ..ErrorBudget::error_free().with_seed(7)
        };
        let p0 = simulate_carrier_phase(&sat, &rcvr, &look, &ErrorBudget::error_free(), Epoch(0.0))
            .unwrap();
        let p = simulate_carrier_phase(&sat, &rcvr, &look, &b, Epoch(0.0)).unwrap();
        assert!(p.ambiguity_l1.abs() <= 50);
        assert!((p.phase_l1 - p0.phase_l1 - p.ambiguity_l1 as f64).abs() < 1e-6);
        // same seed, later epoch: same pass, same integer
        let later = simulate_carrier_phase(&sat, &rcvr, &look, &b, Epoch(30.0)).unwrap();
        assert_eq!(later.ambiguity_l1, p.ambiguity_l1);
    }

    #[test]
    fn code_minus_carrier_diverges_with_ionosphere() {
        let (sat, rcvr, look) = setup();
        let mut last = 0.0;
        for delay in [0.0, 2.0, 4.0, 8.0] {
            let b = ErrorBudget {
                iono: Some(IonosphereModel::with_l1_delay(delay).unwrap()),
                ..ErrorBudget::error_free()
            };
            let code = simulate_pseudorange(&sat, &rcvr, &look, &b, Epoch(0.0)).unwrap();
            let phase = simulate_carrier_phase(&sat, &rcvr, &look, &b, Epoch(0.0)).unwrap();
            let cmc = code.pr_l1 - phase.phase_l1 * wavelength_l1();
            assert!((cmc - 2.0 * delay).abs() < 1e-6);
            if delay > 0.0 {
                assert!(cmc > last);
            }
            last = cmc;
        }
    }

    #[test]
    fn multipath_shape() {
        let b = ErrorBudget {
            multipath_amplitude: 2.0,
            ..ErrorBudget::error_free()
        };
        assert_eq!(b.multipath(0.0), 2.0);
        assert!((b.multipath(MULTIPATH_SCALE) - 2.0 / std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn invalid_budget_rejected() {
        let b = ErrorBudget {
            code_noise_sigma: -1.0,
            ..ErrorBudget::default()
        };
        assert!(b.validate().is_err());
    }
}
