//! Runtime oracle suite.
//!
//! Each check recomputes a quantity a second way (grid search, a dense
//! eigen-decomposition, the defining formula) and compares. [`Injection`]
//! deliberately corrupts one code path so the suite can show that it notices.

use std::f64::consts::{LN_2, SQRT_2};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::capacity::CapacityParams;
use crate::channel::sample_rician;
use crate::eigen::{max_eigvec, residual, EigenOptions, HermitianMatrix};
use crate::error::Result;
use crate::lyapunov::{congestion_sets, data_coefficient, power_coefficient};
use crate::model::{congestion_threshold, energy_scale, NetworkState, OPTIMAL_ALPHA};
use crate::policy_data::optimal_link_power;
use crate::simulator::{run, RunConfig};

/// Mutation hooks for sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Injection {
    #[default]
    None,
    /// Negates every data coefficient before it reaches the oracle.
    DataCoefficientSignFlip,
    /// Stops power iteration after three steps with no fallback.
    EigenEarlyStop,
}

impl std::str::FromStr for Injection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "data-sign-flip" => Ok(Self::DataCoefficientSignFlip),
            "eigen-early-stop" => Ok(Self::EigenEarlyStop),
            other => Err(format!(
                "unknown injection `{other}` (expected none, data-sign-flip or eigen-early-stop)"
            )),
        }
    }
}

/// Sample counts for each check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationScale {
    pub power_instances: usize,
    pub power_grid: usize,
    pub coefficient_states: usize,
    pub eigen_matrices: usize,
    pub simulation_slots: u64,
    pub rician_samples: usize,
    pub capacity_samples: usize,
}

impl Default for ValidationScale {
    fn default() -> Self {
        Self {
            power_instances: 2_000,
            power_grid: 2_000,
            coefficient_states: 2_000,
            eigen_matrices: 200,
            simulation_slots: 20_000,
            rician_samples: 50_000,
            capacity_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Runs every check against `config`.
pub fn run_suite(config: &RunConfig, scale: &ValidationScale, injection: Injection) -> Result<ValidationReport> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let checks = vec![
        threshold_algebra(config),
        capacity_bound(config, scale, &mut rng),
        power_oracle(config, scale, &mut rng),
        data_coefficient_oracle(config, scale, injection, &mut rng),
        power_coefficient_oracle(config, scale, &mut rng),
        eigen_oracle(config, scale, injection, &mut rng),
        rician_moments(scale, &mut rng),
        closed_loop(config, scale)?,
    ];
    Ok(ValidationReport { checks })
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn threshold_algebra(config: &RunConfig) -> CheckOutcome {
    let delta = config.constants.delta();
    let p_max = config.constants.p_max();
    let u0_gap = relative_gap(
        congestion_threshold(delta, p_max, OPTIMAL_ALPHA),
        (3.0 + 2.0 * SQRT_2) * delta * p_max,
    );
    let c_gap = relative_gap(energy_scale(delta, OPTIMAL_ALPHA), (2.0 + SQRT_2) * delta);
    let argmin = (1..=9000)
        .map(|k| 1.0 + k as f64 * 1e-3)
        .map(|a| (a, congestion_threshold(delta, p_max, a)))
        .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0;
    let passed = u0_gap <= 1e-12 && c_gap <= 1e-12 && (argmin - OPTIMAL_ALPHA).abs() <= 1e-3;
    outcome(
        "threshold-algebra",
        passed,
        format!("U0 gap {u0_gap:.1e}, C gap {c_gap:.1e}, alpha grid argmin {argmin:.3}"),
    )
}

fn awgn_rate(params: &CapacityParams, power: f64, gain_sq: f64) -> f64 {
    params.bandwidth() * (1.0 + power * gain_sq / params.noise_power()).log2()
}

fn capacity_bound(config: &RunConfig, scale: &ValidationScale, rng: &mut ChaCha12Rng) -> CheckOutcome {
    let params = &config.capacity;
    let delta = params.delta_bound();
    let p_max = config.constants.p_max();
    let mut worst: f64 = 0.0;
    let mut zero_ok = true;
    for _ in 0..scale.capacity_samples {
        let raw = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            * (8.0 * params.max_gain_sq()).sqrt();
        let (g, _) = params.clip_gain(raw);
        let p = rng.random::<f64>() * p_max;
        let c = params.link_capacity(p, g).unwrap_or(f64::INFINITY);
        if p > 0.0 {
            worst = worst.max(c / (delta * p));
        }
        zero_ok &= params.link_capacity(0.0, g) == Ok(0.0);
    }
    outcome(
        "capacity-bound",
        zero_ok && worst <= 1.0 + 1e-12,
        format!("max C/(delta p) = {worst:.12}, C(0) = 0: {zero_ok}"),
    )
}

fn power_oracle(config: &RunConfig, scale: &ValidationScale, rng: &mut ChaCha12Rng) -> CheckOutcome {
    let params = &config.capacity;
    let p_max = config.constants.p_max();
    let grid = scale.power_grid.max(2);
    let step = p_max / (grid - 1) as f64;
    let mut worst_objective: f64 = 0.0;
    let mut worst_argmin: f64 = 0.0;
    for _ in 0..scale.power_instances {
        let gain_sq = params.max_gain_sq() * rng.random_range(1e-3..=1.0);
        let w = rng.random_range(1.0..1e8);
        let slope0 = w * gain_sq / (params.noise_density() * LN_2);
        let j = slope0 * rng.random_range(0.02..1.5);
        let f = |p: f64| j * p - w * awgn_rate(params, p, gain_sq);
        let p_star = optimal_link_power(j, w, gain_sq, params, p_max);
        let (p_grid, f_grid) = (0..grid)
            .map(|k| k as f64 * step)
            .map(|p| (p, f(p)))
            .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        let scale_f = (j * p_max).max(w * awgn_rate(params, p_max, gain_sq));
        worst_objective = worst_objective.max((f(p_star) - f_grid) / scale_f);
        worst_argmin = worst_argmin.max((p_grid - p_star).abs() / step);
    }
    outcome(
        "power-oracle",
        worst_objective <= 1e-9 && worst_argmin <= 1.0,
        format!("worst objective excess {worst_objective:.2e}, worst argmin distance {worst_argmin:.3} steps"),
    )
}

/// A random state with a mix of empty, sub-threshold and congested queues.
fn random_state(config: &RunConfig, rng: &mut ChaCha12Rng) -> NetworkState {
    let topo = &config.topology;
    let u0 = config.constants.threshold();
    let c = config.constants.energy_scale();
    let backlog = (0..topo.node_count())
        .map(|_| {
            (0..topo.stream_count())
                .map(|_| match rng.random_range(0..4) {
                    0 => 0.0,
                    1 => rng.random_range(0.0..u0),
                    _ => rng.random_range(0.0..20.0 * u0),
                })
                .collect()
        })
        .collect();
    let battery = (0..topo.node_count())
        .map(|_| rng.random_range(0.0..20.0 * u0 / c))
        .collect();
    NetworkState { backlog, battery, slot: 0 }
}

/// `W_l^s` straight from its definition.
fn reference_data_coefficient(config: &RunConfig, state: &NetworkState, l: usize, s: usize) -> f64 {
    let u0 = config.constants.threshold();
    let c = config.constants.energy_scale();
    let side = |n: usize| {
        let u = state.backlog[n][s];
        let e = state.battery[n];
        let congested = if u > u0 { u } else { 0.0 };
        let critical = if u > u0.max(c * e) { u - c * e } else { 0.0 };
        congested + critical
    };
    let link = config.topology.link(l);
    side(link.tx) - side(link.rx)
}

fn data_coefficient_oracle(
    config: &RunConfig,
    scale: &ValidationScale,
    injection: Injection,
    rng: &mut ChaCha12Rng,
) -> CheckOutcome {
    let c = config.constants.energy_scale();
    let mut mismatches = 0usize;
    let mut compared = 0usize;
    for _ in 0..scale.coefficient_states {
        let state = random_state(config, rng);
        let sets = congestion_sets(&state, &config.constants);
        for l in 0..config.topology.link_count() {
            for s in 0..config.topology.stream_count() {
                let mut value = data_coefficient(&config.topology, l, s, &state, &sets, c);
                if injection == Injection::DataCoefficientSignFlip {
                    value = -value;
                }
                let expected = reference_data_coefficient(config, &state, l, s);
                let tolerance = 1e-12 * state.max_backlog().max(1.0);
                compared += 1;
                if (value - expected).abs() > tolerance {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(
        "data-coefficient-oracle",
        mismatches == 0,
        format!("{mismatches} of {compared} coefficients disagree"),
    )
}

fn power_coefficient_oracle(config: &RunConfig, scale: &ValidationScale, rng: &mut ChaCha12Rng) -> CheckOutcome {
    let u0 = config.constants.threshold();
    let c = config.constants.energy_scale();
    let mut mismatches = 0usize;
    let mut negative = 0usize;
    for _ in 0..scale.coefficient_states {
        let state = random_state(config, rng);
        let sets = congestion_sets(&state, &config.constants);
        for n in 0..config.topology.node_count() {
            let value = power_coefficient(n, &state, &sets, c);
            let ce = c * state.battery[n];
            let expected: f64 = state.backlog[n]
                .iter()
                .filter(|&&u| u > u0.max(ce))
                .map(|&u| c * (u - ce))
                .sum();
            if value < 0.0 {
                negative += 1;
            }
            if relative_gap(value, expected) > 1e-12 && (value - expected).abs() > 0.0 {
                mismatches += 1;
            }
        }
    }
    outcome(
        "power-coefficient-oracle",
        mismatches == 0 && negative == 0,
        format!("{mismatches} mismatches, {negative} negative"),
    )
}

/// A random PSD matrix `sum_k c_k x_k x_k^H` of random rank.
fn random_psd(dim: usize, rng: &mut ChaCha12Rng) -> HermitianMatrix {
    let mut h = HermitianMatrix::zeros(dim);
    let rank = rng.random_range(1..=dim);
    for _ in 0..rank {
        let x: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        h.add_outer(rng.random_range(0.01..10.0), &x);
    }
    h
}

/// Largest eigenvalue from a dense Hermitian eigen-decomposition.
pub fn dense_max_eigenvalue(h: &HermitianMatrix) -> f64 {
    let m = DMatrix::from_fn(h.dim(), h.dim(), |i, j| h.get(i, j));
    m.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn eigen_oracle(
    config: &RunConfig,
    scale: &ValidationScale,
    injection: Injection,
    rng: &mut ChaCha12Rng,
) -> CheckOutcome {
    let options = match injection {
        Injection::EigenEarlyStop => EigenOptions {
            max_iterations: 3,
            fallback: false,
            ..config.eigen
        },
        _ => config.eigen,
    };
    let mut residual_failures = 0usize;
    let mut value_failures = 0usize;
    let mut worst_residual: f64 = 0.0;
    for _ in 0..scale.eigen_matrices {
        let dim = rng.random_range(1..=16);
        let h = random_psd(dim, rng);
        let found = max_eigvec(&h, &options);
        let limit = 1e-8 * h.frobenius_norm().max(1.0);
        let r = residual(&h, &found.vector, found.value);
        worst_residual = worst_residual.max(r / limit);
        if r > limit {
            residual_failures += 1;
        }
        if relative_gap(found.value, dense_max_eigenvalue(&h)) > 1e-9 {
            value_failures += 1;
        }
    }
    outcome(
        "eigen-oracle",
        residual_failures == 0 && value_failures == 0,
        format!(
            "{residual_failures} residual and {value_failures} eigenvalue failures, worst residual {worst_residual:.2e} of limit"
        ),
    )
}

fn rician_moments(scale: &ValidationScale, rng: &mut ChaCha12Rng) -> CheckOutcome {
    let n = scale.rician_samples.max(1) as f64;
    let los = Complex64::new(0.6, 0.8);
    let mut mean_k0 = Complex64::new(0.0, 0.0);
    let mut power_k1 = 0.0;
    for _ in 0..scale.rician_samples {
        mean_k0 += sample_rician(2.0, 0.0, los, rng);
        power_k1 += sample_rician(2.0, 1.0, los, rng).norm_sqr();
    }
    mean_k0 /= n;
    power_k1 /= n;
    // 5 standard errors of the sample mean of a CN(0, 2) variable
    let mean_limit = 5.0 * (2.0 / n).sqrt();
    let power_gap = (power_k1 / 2.0 - 1.0).abs();
    outcome(
        "rician-moments",
        mean_k0.norm() <= mean_limit && power_gap <= 0.02,
        format!("K=0 |mean| {:.2e} (limit {mean_limit:.2e}), K=1 power gap {power_gap:.2e}", mean_k0.norm()),
    )
}

fn closed_loop(config: &RunConfig, scale: &ValidationScale) -> Result<CheckOutcome> {
    let mut short = config.clone();
    short.horizon = scale.simulation_slots.max(1);
    short.verification.drift_check_every = 1;
    short.verification.battery_safety = true;
    let m = run(&short)?;
    let passed = m.drift_failures == 0
        && m.drift_checks == short.horizon
        && m.battery_outages == 0
        && m.low_battery_transmissions == 0;
    Ok(outcome(
        "closed-loop",
        passed,
        format!(
            "{} slots: {} drift failures in {} checks, {} outages, {} low-battery transmissions",
            m.slots, m.drift_failures, m.drift_checks, m.battery_outages, m.low_battery_transmissions
        ),
    ))
}
