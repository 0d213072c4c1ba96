//! Data-link control: stream selection, link powers and rate allocation.
//!
//! Every link carries at most one stream per slot, the one with the largest
//! data coefficient, and gets the whole link capacity. Link powers minimize
//! `sum_l J_{T(l)} p_l - W_l C_l(p)`, which decomposes per link when links do
//! not interfere.

use std::f64::consts::LN_2;

use crate::capacity::CapacityParams;
use crate::lyapunov::Coefficients;
use crate::model::{NetworkState, NetworkTopology, SystemConstants};

/// `(argmax_s W[s], max_s W[s])`, lowest index on ties. `None` when empty.
pub fn select_stream(weights: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (s, &w) in weights.iter().enumerate() {
        match best {
            Some((_, current)) if w <= current => {}
            _ => best = Some((s, w)),
        }
    }
    best
}

/// Minimizer of `J p - W C(p, g)` over `[0, p_cap]` for the AWGN rate.
///
/// The objective is convex, so the clamped stationary point
/// `W B / (J ln 2) - B N0 / |g|^2` is the global minimizer.
pub fn optimal_link_power(
    j_tx: f64,
    w_max: f64,
    gain_sq: f64,
    params: &CapacityParams,
    p_cap: f64,
) -> f64 {
    if w_max <= 0.0 || gain_sq <= 0.0 || p_cap <= 0.0 {
        return 0.0;
    }
    if j_tx <= 0.0 {
        return p_cap;
    }
    // slope of the objective at p = 0 is J - W |g|^2 / (N0 ln 2)
    let initial_slope = w_max * gain_sq / (params.noise_density() * LN_2);
    if initial_slope <= j_tx {
        return 0.0;
    }
    let stationary = params.bandwidth() / LN_2 * (w_max / j_tx) - params.noise_power() / gain_sq;
    stationary.clamp(0.0, p_cap)
}

/// Per-link objective `J p - W C(p, g)`.
pub fn link_objective(j_tx: f64, w_max: f64, gain_sq: f64, params: &CapacityParams, power: f64) -> f64 {
    j_tx * power - w_max * params.rate_unchecked(power, gain_sq)
}

/// Solver for the data-link power vector. Interfering rate models plug in
/// here; the crate ships the decomposable interference-free solver.
pub trait PowerSolver {
    /// `tx_weights[l] = J_{T(l)}`, `link_weights[l] = W_l`, `gains_sq[l] = |g_l|^2`.
    fn solve(
        &self,
        tx_weights: &[f64],
        link_weights: &[f64],
        gains_sq: &[f64],
        params: &CapacityParams,
        p_cap: f64,
    ) -> Vec<f64>;
}

/// Closed-form per-link solve for interference-free AWGN links.
#[derive(Debug, Clone, Copy, Default)]
pub struct InterferenceFree;

impl PowerSolver for InterferenceFree {
    fn solve(
        &self,
        tx_weights: &[f64],
        link_weights: &[f64],
        gains_sq: &[f64],
        params: &CapacityParams,
        p_cap: f64,
    ) -> Vec<f64> {
        tx_weights
            .iter()
            .zip(link_weights)
            .zip(gains_sq)
            .map(|((&j, &w), &g)| optimal_link_power(j, w, g, params, p_cap))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataDecision {
    /// Link powers, watts.
    pub powers: Vec<f64>,
    /// Stream served by each link, `None` when the link is silent.
    pub assigned: Vec<Option<usize>>,
    /// `rates[l][s]`, bits per slot.
    pub rates: Vec<Vec<f64>>,
    /// Nodes whose outgoing powers were scaled down to fit their battery.
    pub projections: usize,
}

/// Scales node `n`'s outgoing powers so that their sum fits `budget`.
fn project_onto_budget(topology: &NetworkTopology, n: usize, powers: &mut [f64], budget: f64) -> bool {
    let total = topology.outgoing_power(n, powers);
    if total <= budget {
        return false;
    }
    let mut factor = budget / total;
    loop {
        let scaled: Vec<f64> = topology.outgoing(n).iter().map(|&l| powers[l] * factor).collect();
        let sum: f64 = scaled.iter().sum();
        if sum <= budget {
            for (&l, p) in topology.outgoing(n).iter().zip(scaled) {
                powers[l] = p;
            }
            return true;
        }
        factor *= 1.0 - f64::EPSILON;
    }
}

/// One slot of data-link control.
///
/// `gains_sq[l]` are the (already clipped) data-link power gains.
pub fn route<S: PowerSolver + ?Sized>(
    topology: &NetworkTopology,
    state: &NetworkState,
    gains_sq: &[f64],
    coefficients: &Coefficients,
    constants: &SystemConstants,
    params: &CapacityParams,
    solver: &S,
) -> DataDecision {
    let link_count = topology.link_count();
    let selected: Vec<Option<(usize, f64)>> = coefficients.data.iter().map(|w| select_stream(w)).collect();
    let link_weights: Vec<f64> = selected.iter().map(|sel| sel.map_or(0.0, |(_, w)| w)).collect();
    let tx_weights: Vec<f64> = topology
        .links()
        .iter()
        .map(|link| coefficients.power[link.tx])
        .collect();

    let mut powers = solver.solve(&tx_weights, &link_weights, gains_sq, params, constants.p_max());

    let mut projections = 0;
    for n in 0..topology.node_count() {
        if project_onto_budget(topology, n, &mut powers, state.battery[n]) {
            projections += 1;
        }
    }

    let mut rates = vec![vec![0.0; topology.stream_count()]; link_count];
    let mut assigned = vec![None; link_count];
    for l in 0..link_count {
        if powers[l] == 0.0 {
            continue;
        }
        if let Some((s, _)) = selected[l] {
            rates[l][s] = params.rate_unchecked(powers[l], gains_sq[l]);
            assigned[l] = Some(s);
        }
    }
    DataDecision {
        powers,
        assigned,
        rates,
        projections,
    }
}
