//! Block Rician fading for data links and energy links.
//!
//! Energy links are M-vectors whose line-of-sight component is the steering
//! vector of a uniform linear array at the node's angle. Data links are
//! scalar (single-antenna nodes). Realizations are independent across slots.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, WpcnError};
use crate::model::NetworkTopology;

/// Rician factors at or above this are treated as pure line of sight.
pub const PURE_LOS_K: f64 = 1e12;

/// Steering vector of an M-element uniform linear array,
/// `a_m = exp(i 2 pi spacing m sin(theta))`.
pub fn ula_steering(theta: f64, antennas: usize, spacing: f64) -> Vec<Complex64> {
    let phase = 2.0 * PI * spacing * theta.sin();
    (0..antennas)
        .map(|m| Complex64::from_polar(1.0, phase * m as f64))
        .collect()
}

/// Distance-based mean power gain `g0 * d^-eta`.
pub fn path_gain(g0: f64, distance: f64, exponent: f64) -> f64 {
    g0 * distance.powf(-exponent)
}

/// Standard circular complex Gaussian, `E|z|^2 = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One Rician draw `sqrt(mean_gain) (sqrt(K/(K+1)) los + sqrt(1/(K+1)) z)`.
pub fn sample_rician<R: Rng + ?Sized>(
    mean_gain: f64,
    k_factor: f64,
    los: Complex64,
    rng: &mut R,
) -> Complex64 {
    let amplitude = mean_gain.sqrt();
    if k_factor >= PURE_LOS_K {
        return los * amplitude;
    }
    let los_weight = (k_factor / (k_factor + 1.0)).sqrt();
    let scatter_weight = (1.0 / (k_factor + 1.0)).sqrt();
    (los * los_weight + complex_gaussian(rng) * scatter_weight) * amplitude
}

/// Entry-wise Rician draw around a line-of-sight vector.
pub fn sample_rician_vector<R: Rng + ?Sized>(
    mean_gain: f64,
    k_factor: f64,
    los: &[Complex64],
    rng: &mut R,
) -> Vec<Complex64> {
    los.iter()
        .map(|&a| sample_rician(mean_gain, k_factor, a, rng))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub rician_k: f64,
    /// Mean power gain of each data link.
    pub data_gain: Vec<f64>,
    /// Mean per-antenna power gain of each node's energy link.
    pub energy_gain: Vec<f64>,
    /// Node angles seen from the array, radians.
    pub node_angles: Vec<f64>,
    /// Antenna spacing in wavelengths.
    pub spacing: f64,
    /// Line-of-sight phase of each data link, radians.
    pub data_los_phase: Vec<f64>,
}

impl ChannelConfig {
    pub fn validate(&self, topology: &NetworkTopology) -> Result<()> {
        if !(self.rician_k.is_finite() && self.rician_k >= 0.0) {
            return Err(WpcnError::param("rician_k", "must be finite and >= 0"));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(WpcnError::param("spacing", "must be finite and > 0"));
        }
        let checks: [(&'static str, &[f64], usize); 4] = [
            ("data_gain", &self.data_gain, topology.link_count()),
            ("energy_gain", &self.energy_gain, topology.node_count()),
            ("node_angles", &self.node_angles, topology.node_count()),
            ("data_los_phase", &self.data_los_phase, topology.link_count()),
        ];
        for (name, values, len) in checks {
            if values.len() != len {
                return Err(WpcnError::param(name, format!("expected {len} entries, got {}", values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(WpcnError::param(name, "entries must be finite"));
            }
        }
        if self.data_gain.iter().chain(&self.energy_gain).any(|g| *g <= 0.0) {
            return Err(WpcnError::param("path gain", "mean gains must be > 0"));
        }
        Ok(())
    }
}

/// Channel state of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub slot: u64,
    /// Data-link gains `g_l`.
    pub data: Vec<Complex64>,
    /// Energy-link vectors `h_n`, each of length M.
    pub energy: Vec<Vec<Complex64>>,
}

/// Draws a fresh realization using precomputed line-of-sight vectors.
pub fn draw_slot<R: Rng + ?Sized>(
    config: &ChannelConfig,
    energy_los: &[Vec<Complex64>],
    slot: u64,
    rng: &mut R,
) -> ChannelRealization {
    let data = config
        .data_gain
        .iter()
        .zip(&config.data_los_phase)
        .map(|(&gain, &phase)| sample_rician(gain, config.rician_k, Complex64::from_polar(1.0, phase), rng))
        .collect();
    let energy = config
        .energy_gain
        .iter()
        .zip(energy_los)
        .map(|(&gain, los)| sample_rician_vector(gain, config.rician_k, los, rng))
        .collect();
    ChannelRealization { slot, data, energy }
}

/// Per-run channel generator owning its random stream.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    config: ChannelConfig,
    energy_los: Vec<Vec<Complex64>>,
    rng: ChaCha12Rng,
}

impl ChannelSampler {
    pub fn new(config: ChannelConfig, topology: &NetworkTopology, seed: u64) -> Result<Self> {
        config.validate(topology)?;
        let energy_los = config
            .node_angles
            .iter()
            .map(|&theta| ula_steering(theta, topology.antenna_count(), config.spacing))
            .collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            energy_los,
            rng,
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn draw(&mut self, slot: u64) -> ChannelRealization {
        draw_slot(&self.config, &self.energy_los, slot, &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn steering_examples() {
        for a in ula_steering(0.0, 4, 0.5) {
            assert!(close(a, Complex64::new(1.0, 0.0)));
        }
        assert_eq!(ula_steering(1.234, 1, 0.5), vec![Complex64::new(1.0, 0.0)]);
        let endfire = ula_steering(PI / 2.0, 2, 0.5);
        assert!(close(endfire[0], Complex64::new(1.0, 0.0)));
        assert!(close(endfire[1], Complex64::new(-1.0, 0.0)));
    }

    #[test]
    fn steering_norm_is_antenna_count() {
        for m in 1..20 {
            let norm: f64 = ula_steering(0.3 * m as f64, m, 0.5).iter().map(|a| a.norm_sqr()).sum();
            assert!((norm - m as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_los_limit() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let los = Complex64::from_polar(1.0, 0.4);
        let x = sample_rician(2.5, PURE_LOS_K, los, &mut rng);
        assert_eq!(x, los * 2.5f64.sqrt());
    }

    #[test]
    fn config_validation() {
        let t = NetworkTopology::five_node_relay(4).unwrap();
        let good = ChannelConfig {
            rician_k: 1.0,
            data_gain: vec![1.0; 6],
            energy_gain: vec![1.0; 5],
            node_angles: vec![0.0; 5],
            spacing: 0.5,
            data_los_phase: vec![0.0; 6],
        };
        assert!(good.validate(&t).is_ok());
        assert!(ChannelConfig { rician_k: -1.0, ..good.clone() }.validate(&t).is_err());
        assert!(ChannelConfig { spacing: 0.0, ..good.clone() }.validate(&t).is_err());
        assert!(ChannelConfig { data_gain: vec![1.0; 5], ..good.clone() }.validate(&t).is_err());
        assert!(ChannelConfig { energy_gain: vec![0.0; 5], ..good }.validate(&t).is_err());
    }
}
