//! Rate-power function of an interference-free AWGN data link.
//!
//! Rates are in bits per slot, powers in watts. A link's rate depends only
//! on its own power and gain, so zeroing one link never reduces another's
//! rate.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WpcnError};

/// Converts a noise density in dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityParams {
    /// Hz.
    bandwidth: f64,
    /// W/Hz.
    noise_density: f64,
    /// Largest channel power gain |g|^2 the policy will see; draws above it
    /// are clipped.
    max_gain_sq: f64,
}

impl CapacityParams {
    pub fn new(bandwidth: f64, noise_density: f64, max_gain_sq: f64) -> Result<Self> {
        for (name, v) in [
            ("bandwidth", bandwidth),
            ("noise_density", noise_density),
            ("max_gain_sq", max_gain_sq),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(WpcnError::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(Self {
            bandwidth,
            noise_density,
            max_gain_sq,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn noise_density(&self) -> f64 {
        self.noise_density
    }

    pub fn max_gain_sq(&self) -> f64 {
        self.max_gain_sq
    }

    /// Noise power over the band, `W N0`.
    pub fn noise_power(&self) -> f64 {
        self.bandwidth * self.noise_density
    }

    /// `W log2(1 + p |g|^2 / (W N0))` for a power gain `gain_sq = |g|^2`.
    pub fn rate(&self, power: f64, gain_sq: f64) -> Result<f64> {
        if !(power >= 0.0) {
            return Err(WpcnError::Contract(format!("negative link power {power}")));
        }
        Ok(self.rate_unchecked(power, gain_sq))
    }

    #[inline]
    pub(crate) fn rate_unchecked(&self, power: f64, gain_sq: f64) -> f64 {
        if power == 0.0 {
            return 0.0;
        }
        self.bandwidth * (power * gain_sq / self.noise_power()).ln_1p() / LN_2
    }

    /// Rate of a link with complex gain `g`.
    pub fn link_capacity(&self, power: f64, g: Complex64) -> Result<f64> {
        self.rate(power, g.norm_sqr())
    }

    /// Slope bound: `rate(p, g) <= delta * p` whenever `|g|^2 <= max_gain_sq`.
    ///
    /// The derivative at zero power, `|g|^2 / (N0 ln 2)`, is the supremum of the
    /// slope because the rate is concave in `p`.
    pub fn delta_bound(&self) -> f64 {
        self.max_gain_sq / (self.noise_density * LN_2)
    }

    /// Per-slot rate bound `C_m`, reached at peak power and maximum gain.
    pub fn capacity_max(&self, p_max: f64) -> f64 {
        self.rate_unchecked(p_max, self.max_gain_sq)
    }

    /// Scales `g` down onto the gain ceiling if `|g|^2` exceeds it. Returns the
    /// possibly clipped gain and whether a clip happened.
    pub fn clip_gain(&self, g: Complex64) -> (Complex64, bool) {
        let sq = g.norm_sqr();
        if sq > self.max_gain_sq {
            let clipped = g * (self.max_gain_sq / sq).sqrt();
            // rounding may leave |g|^2 one ulp above the ceiling
            let clipped = if clipped.norm_sqr() > self.max_gain_sq {
                Complex64::from_polar(self.max_gain_sq.sqrt() * (1.0 - f64::EPSILON), g.arg())
            } else {
                clipped
            };
            (clipped, true)
        } else {
            (g, false)
        }
    }
}
