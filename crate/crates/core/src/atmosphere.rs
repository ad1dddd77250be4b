//! Tropospheric and first-order ionospheric delays, and the dual-frequency
//! ionosphere-free combinations.

use crate::geo::{wavelength_l1, wavelength_l2, F_L1, F_L2, SPEED_OF_LIGHT};
use crate::{Error, Result};

/// Zenith delays of the hydrostatic and wet troposphere, mapped with 1/sin(el).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TroposphereModel {
    /// m
    pub zenith_dry: f64,
    /// m
    pub zenith_wet: f64,
}

impl Default for TroposphereModel {
    /// 2.25 m dry + 0.25 m wet: a 90/10 split of a 2.5 m zenith delay.
    fn default() -> Self {
        Self {
            zenith_dry: 2.25,
            zenith_wet: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TropoDelay {
    pub dry: f64,
    pub wet: f64,
}

impl TropoDelay {
    pub fn total(&self) -> f64 {
        self.dry + self.wet
    }
}

impl TroposphereModel {
    pub fn new(zenith_dry: f64, zenith_wet: f64) -> Result<Self> {
        if zenith_dry < 0.0 || zenith_wet < 0.0 || !zenith_dry.is_finite() || !zenith_wet.is_finite()
        {
            return Err(Error::InvalidArgument(
                "zenith tropospheric delays must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            zenith_dry,
            zenith_wet,
        })
    }

    pub fn delay(&self, elevation: f64) -> Result<TropoDelay> {
        if elevation <= 0.0 || elevation.is_nan() {
            return Err(Error::BelowHorizon { elevation });
        }
        let mapping = 1.0 / elevation.sin();
        Ok(TropoDelay {
            dry: self.zenith_dry * mapping,
            wet: self.zenith_wet * mapping,
        })
    }
}

pub fn tropo_delay(model: &TroposphereModel, elevation: f64) -> Result<TropoDelay> {
    model.delay(elevation)
}

/// First-order ionosphere: group delay `a / f^2` metres, with `a` in m Hz^2.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IonosphereModel {
    pub a: f64,
}

impl IonosphereModel {
    pub fn new(a: f64) -> Result<Self> {
        if a < 0.0 || !a.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ionospheric parameter must be finite and non-negative, got {a}"
            )));
        }
        Ok(Self { a })
    }

    /// Model producing `delay_m` of group delay on L1.
    pub fn with_l1_delay(delay_m: f64) -> Result<Self> {
        Self::new(delay_m * F_L1 * F_L1)
    }

    pub fn delay(&self, frequency: f64) -> Result<f64> {
        if frequency <= 0.0 || frequency.is_nan() {
            return Err(Error::NonPositiveFrequency(frequency));
        }
        Ok(self.a / (frequency * frequency))
    }
}

pub fn iono_delay(model: &IonosphereModel, frequency: f64) -> Result<f64> {
    model.delay(frequency)
}

/// `(f_L2 / f_L1)^2`
pub fn gamma() -> f64 {
    let r = F_L2 / F_L1;
    r * r
}

/// Both forms of the ionosphere-free pseudorange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonoFreePseudorange {
    /// `pr_l1 - (f_L2^2 / f_L1^2) pr_l2`: geometry and clocks scaled by `1 - gamma`.
    pub literal: f64,
    /// `literal / (1 - gamma)`: unit gain on geometry and clocks.
    pub normalized: f64,
}

pub fn iono_free_pseudorange(pr_l1: f64, pr_l2: f64) -> IonoFreePseudorange {
    let g = gamma();
    let literal = pr_l1 - g * pr_l2;
    // Same value as literal / (1 - g), evaluated through the L2-L1 difference,
    // which is exact for nearby inputs, so the large common term passes
    // through unrounded.
    let normalized = pr_l1 - g / (1.0 - g) * (pr_l2 - pr_l1);
    IonoFreePseudorange {
        literal,
        normalized,
    }
}

/// Effective carrier of the ionosphere-free combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonoFreeWavelength {
    /// m
    pub wavelength: f64,
    /// Hz
    pub frequency: f64,
}

pub fn iono_free_wavelength() -> IonoFreeWavelength {
    let frequency = (F_L1 * F_L1 - F_L2 * F_L2) / F_L1;
    IonoFreeWavelength {
        wavelength: SPEED_OF_LIGHT / frequency,
        frequency,
    }
}

/// Ionosphere-free carrier combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonoFreeCarrier {
    /// Phase-derived ranges combined as `L1 - gamma L2`, m.
    pub literal: f64,
    /// `literal / (1 - gamma)`, m. Ambiguity term is not an integer multiple
    /// of any wavelength.
    pub normalized: f64,
    /// `normalized` in cycles of the effective wavelength; equals
    /// `phi_l1 - (f_L2 / f_L1) phi_l2`.
    pub cycles: f64,
    pub wavelength: f64,
}

pub fn iono_free_carrier(phi_l1: f64, phi_l2: f64) -> IonoFreeCarrier {
    let g = gamma();
    let range_l1 = phi_l1 * wavelength_l1();
    let range_l2 = phi_l2 * wavelength_l2();
    let literal = range_l1 - g * range_l2;
    let normalized = range_l1 - g / (1.0 - g) * (range_l2 - range_l1);
    let wl = iono_free_wavelength().wavelength;
    IonoFreeCarrier {
        literal,
        normalized,
        cycles: normalized / wl,
        wavelength: wl,
    }
}
