//! Energy-link control: beam selection and the on/off EAP power rule.
//!
//! Beam weights `w` act on a node's energy channel as `w . h_n` (no
//! conjugation), so node `n` harvests `p_AP |w . h_n|^2`. With
//! `H = sum_n J_n h_n h_n^H` and `u` its dominant eigenvector, the optimal
//! weights are `w = conj(u)` and `sum_n J_n |w . h_n|^2 = lambda_max`.

use num_complex::Complex64;

use crate::eigen::{max_eigvec, EigenMethod, EigenOptions, HermitianMatrix};

/// `w . h = sum_m w_m h_m`.
pub fn beam_gain(weights: &[Complex64], channel: &[Complex64]) -> f64 {
    weights
        .iter()
        .zip(channel)
        .map(|(w, h)| w * h)
        .sum::<Complex64>()
        .norm_sqr()
}

/// Weighted sum-channel matrix `sum_n J_n h_n h_n^H`.
pub fn build_sum_channel(power_coefficients: &[f64], energy: &[Vec<Complex64>], antennas: usize) -> HermitianMatrix {
    let mut h = HermitianMatrix::zeros(antennas);
    for (&j, channel) in power_coefficients.iter().zip(energy) {
        if j > 0.0 {
            h.add_outer(j, channel);
        }
    }
    h
}

/// `P_APm` when `V < sum_n |w . h_n|^2 J_n`, otherwise zero (ties stay off).
pub fn eap_power_decision(
    v: f64,
    weights: &[Complex64],
    energy: &[Vec<Complex64>],
    power_coefficients: &[f64],
    p_ap_max: f64,
) -> f64 {
    let objective: f64 = energy
        .iter()
        .zip(power_coefficients)
        .map(|(h, &j)| beam_gain(weights, h) * j)
        .sum();
    if v < objective {
        p_ap_max
    } else {
        0.0
    }
}

/// `Q_n = p_AP |w . h_n|^2`.
pub fn harvested_power(p_ap: f64, weights: &[Complex64], energy: &[Vec<Complex64>]) -> Vec<f64> {
    energy.iter().map(|h| p_ap * beam_gain(weights, h)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDecision {
    /// Unit-norm beam weights.
    pub weights: Vec<Complex64>,
    /// Either 0 or `P_APm`.
    pub p_ap: f64,
    /// Harvested power per node.
    pub harvest: Vec<f64>,
    pub lambda_max: f64,
    pub method: EigenMethod,
}

/// One slot of energy-link control.
pub fn schedule_energy(
    power_coefficients: &[f64],
    energy: &[Vec<Complex64>],
    antennas: usize,
    v: f64,
    p_ap_max: f64,
    options: &EigenOptions,
) -> EnergyDecision {
    let h = build_sum_channel(power_coefficients, energy, antennas);
    let dominant = max_eigvec(&h, options);
    let weights: Vec<Complex64> = dominant.vector.iter().map(|z| z.conj()).collect();
    let p_ap = eap_power_decision(v, &weights, energy, power_coefficients, p_ap_max);
    let harvest = harvested_power(p_ap, &weights, energy);
    EnergyDecision {
        weights,
        p_ap,
        harvest,
        lambda_max: dominant.value,
        method: dominant.method,
    }
}
