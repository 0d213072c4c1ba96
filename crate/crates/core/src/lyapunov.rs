//! Perturbed Lyapunov function, congestion sets, control coefficients and the
//! per-slot pathwise drift bound.
//!
//! With `c = energy_scale` and `u0 = threshold`, a queue `(n, s)` is
//! *congested* when `U > u0` and *critically congested* when additionally
//! `U > c E_n`. Both comparisons are strict.

use crate::model::{ArrivalBatch, NetworkState, NetworkTopology, SystemConstants};

/// `sum_{n,s} U^2/2 + (U - cE)^2/2 * 1{U > cE}`.
pub fn lyapunov_value(state: &NetworkState, energy_scale: f64) -> f64 {
    state
        .backlog
        .iter()
        .zip(&state.battery)
        .flat_map(|(row, &e)| row.iter().map(move |&u| (u, energy_scale * e)))
        .map(|(u, ce)| {
            let gap = u - ce;
            0.5 * u * u + if gap > 0.0 { 0.5 * gap * gap } else { 0.0 }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CongestionSets {
    congested: Vec<Vec<bool>>,
    critical: Vec<Vec<bool>>,
}

impl CongestionSets {
    /// `U_n^s > u0`.
    pub fn is_congested(&self, n: usize, s: usize) -> bool {
        self.congested[n][s]
    }

    /// `U_n^s > max(u0, c E_n)`.
    pub fn is_critical(&self, n: usize, s: usize) -> bool {
        self.critical[n][s]
    }

    pub fn congested_count(&self) -> usize {
        self.congested.iter().flatten().filter(|b| **b).count()
    }

    pub fn critical_count(&self) -> usize {
        self.critical.iter().flatten().filter(|b| **b).count()
    }
}

pub fn congestion_sets(state: &NetworkState, constants: &SystemConstants) -> CongestionSets {
    let u0 = constants.threshold();
    let c = constants.energy_scale();
    let mut congested = Vec::with_capacity(state.backlog.len());
    let mut critical = Vec::with_capacity(state.backlog.len());
    for (row, &e) in state.backlog.iter().zip(&state.battery) {
        let level = u0.max(c * e);
        congested.push(row.iter().map(|&u| u > u0).collect());
        critical.push(row.iter().map(|&u| u > level).collect());
    }
    CongestionSets { congested, critical }
}

/// Contribution of queue `(n, s)` to a data coefficient, from the side that
/// holds the queue.
fn queue_weight(n: usize, s: usize, state: &NetworkState, sets: &CongestionSets, c: f64) -> f64 {
    let u = state.backlog[n][s];
    let mut w = 0.0;
    if sets.is_critical(n, s) {
        w += u - c * state.battery[n];
    }
    if sets.is_congested(n, s) {
        w += u;
    }
    w
}

/// Battery-adjusted differential backlog of stream `s` over link `l`.
pub fn data_coefficient(
    topology: &NetworkTopology,
    l: usize,
    s: usize,
    state: &NetworkState,
    sets: &CongestionSets,
    energy_scale: f64,
) -> f64 {
    let link = topology.link(l);
    queue_weight(link.tx, s, state, sets, energy_scale)
        - queue_weight(link.rx, s, state, sets, energy_scale)
}

/// `c * sum_s (U_n^s - c E_n)` over the critically congested queues of node `n`.
pub fn power_coefficient(n: usize, state: &NetworkState, sets: &CongestionSets, energy_scale: f64) -> f64 {
    let ce = energy_scale * state.battery[n];
    let excess: f64 = state.backlog[n]
        .iter()
        .enumerate()
        .filter(|&(s, _)| sets.is_critical(n, s))
        .map(|(_, &u)| u - ce)
        .sum();
    energy_scale * excess
}

/// All coefficients of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    /// `data[l][s]`.
    pub data: Vec<Vec<f64>>,
    /// `power[n]`, never negative.
    pub power: Vec<f64>,
}

impl Coefficients {
    pub fn compute(topology: &NetworkTopology, state: &NetworkState, sets: &CongestionSets, energy_scale: f64) -> Self {
        let data = (0..topology.link_count())
            .map(|l| {
                (0..topology.stream_count())
                    .map(|s| data_coefficient(topology, l, s, state, sets, energy_scale))
                    .collect()
            })
            .collect();
        let power = (0..topology.node_count())
            .map(|n| power_coefficient(n, state, sets, energy_scale))
            .collect();
        Self { data, power }
    }
}

/// The additive constants of the pathwise drift bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    /// `N * max(b0, b1, b2)`.
    pub b: f64,
}

impl BoundConstants {
    pub fn new(topology: &NetworkTopology, constants: &SystemConstants) -> Self {
        let n = topology.node_count() as f64;
        let n_out = topology.max_outgoing() as f64;
        let n_in = topology.max_incoming() as f64;
        let u0 = constants.threshold();
        let a_m = constants.arrival_peak();
        let c_m = constants.capacity_max();
        let p_m = constants.p_max();
        let p_ap = constants.p_ap_max();
        let c = constants.energy_scale();

        let b0 = (u0 + a_m + n_in * c_m).powi(2);
        let b1 = 0.5 * (n_out * n_out + n_in * n_in) * c_m * c_m
            + 0.5 * a_m * a_m
            + a_m * n_in * c_m
            + 0.5 * (a_m + n_in * c_m + c * n_out * p_m).powi(2);
        let b2 = (n_out * n_out + n_in * n_in) * c_m * c_m
            + a_m * a_m
            + 2.0 * a_m * n_in * c_m
            + 0.5 * c * c * n_out * n_out * p_m * p_m
            + 0.5 * c * c * p_ap * p_ap
            + c * p_ap
            + 0.5 * n_out * c_m
            + n_out * n_in * p_m * c_m
            + a_m * n_out * p_m;
        let b = n * b0.max(b1).max(b2);
        Self { b0, b1, b2, b }
    }
}

/// Realized control actions and exogenous inputs of one slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotActions<'a> {
    pub powers: &'a [f64],
    /// `rates[l][s]`.
    pub rates: &'a [Vec<f64>],
    pub harvest: &'a [f64],
    pub arrivals: &'a ArrivalBatch,
}

/// Outcome of one pathwise drift bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCheck {
    pub passed: bool,
    /// `L(t+1) - L(t)`.
    pub drift: f64,
    /// Right-hand side of the bound.
    pub bound: f64,
    /// `bound - drift`.
    pub slack: f64,
}

/// Relative tolerance applied to the bound magnitude.
pub const DRIFT_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Checks `L(t+1) - L(t) <= B + sum_{congested} [A + in - out] U
/// + sum_{critical} ([A + in - out] - c [Q - sum p]) (U - cE)` with realized values.
pub fn pathwise_drift_bound_check(
    topology: &NetworkTopology,
    constants: &SystemConstants,
    bounds: &BoundConstants,
    prev: &NetworkState,
    actions: SlotActions<'_>,
    next: &NetworkState,
) -> DriftCheck {
    let c = constants.energy_scale();
    let sets = congestion_sets(prev, constants);
    let drift = lyapunov_value(next, c) - lyapunov_value(prev, c);

    let mut bound = bounds.b;
    for n in 0..topology.node_count() {
        let net_energy = actions.harvest[n] - topology.outgoing_power(n, actions.powers);
        for s in 0..topology.stream_count() {
            if !sets.is_congested(n, s) {
                continue;
            }
            let inflow: f64 = topology.incoming(n).iter().map(|&l| actions.rates[l][s]).sum();
            let outflow: f64 = topology.outgoing(n).iter().map(|&l| actions.rates[l][s]).sum();
            let net_bits = actions.arrivals.get(n, s) + inflow - outflow;
            let u = prev.backlog[n][s];
            bound += net_bits * u;
            if sets.is_critical(n, s) {
                let excess = u - c * prev.battery[n];
                bound += (net_bits - c * net_energy) * excess;
            }
        }
    }
    let slack = bound - drift;
    DriftCheck {
        passed: drift <= bound + DRIFT_RELATIVE_TOLERANCE * bound.abs(),
        drift,
        bound,
        slack,
    }
}
