use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use wpcn_core::capacity::{dbm_per_hz_to_watts, CapacityParams};
use wpcn_core::channel::ula_steering;
use wpcn_core::config::ConfigFile;
use wpcn_core::eigen::{max_eigvec, residual, EigenOptions, HermitianMatrix};
use wpcn_core::lyapunov::{
    congestion_sets, lyapunov_value, pathwise_drift_bound_check, BoundConstants, Coefficients, SlotActions,
};
use wpcn_core::model::{ArrivalBatch, NetworkState, OPTIMAL_ALPHA};
use wpcn_core::policy_data::{optimal_link_power, route, InterferenceFree};
use wpcn_core::policy_energy::{beam_gain, build_sum_channel, eap_power_decision, schedule_energy};
use wpcn_core::simulator::{angle_grid, beam_pattern, RunConfig, Simulation};
use wpcn_core::SystemConstants;

fn bundled() -> RunConfig {
    ConfigFile::bundled().build().unwrap()
}

fn random_state(config: &RunConfig, rng: &mut ChaCha12Rng, min_battery: f64) -> NetworkState {
    let u0 = config.constants.threshold();
    let c = config.constants.energy_scale();
    let topo = &config.topology;
    NetworkState {
        backlog: (0..topo.node_count())
            .map(|_| {
                (0..topo.stream_count())
                    .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..20.0 * u0) })
                    .collect()
            })
            .collect(),
        battery: (0..topo.node_count())
            .map(|_| min_battery + rng.random_range(0.0..20.0 * u0 / c))
            .collect(),
        slot: 0,
    }
}

#[test]
fn congestion_and_coefficients_match_their_definitions() {
    let config = bundled();
    let topo = &config.topology;
    let u0 = config.constants.threshold();
    let c = config.constants.energy_scale();
    let mut rng = ChaCha12Rng::seed_from_u64(21);
    for _ in 0..10_000 {
        let state = random_state(&config, &mut rng, 0.0);
        let sets = congestion_sets(&state, &config.constants);
        let coefficients = Coefficients::compute(topo, &state, &sets, c);
        let congested = |n: usize, s: usize| state.backlog[n][s] > u0;
        let critical = |n: usize, s: usize| state.backlog[n][s] > u0.max(c * state.battery[n]);
        for n in 0..topo.node_count() {
            for s in 0..topo.stream_count() {
                assert_eq!(sets.is_congested(n, s), congested(n, s));
                assert_eq!(sets.is_critical(n, s), critical(n, s));
            }
            let mut j = 0.0;
            for s in 0..topo.stream_count() {
                if critical(n, s) {
                    j += c * (state.backlog[n][s] - c * state.battery[n]);
                }
            }
            assert!(coefficients.power[n] >= 0.0);
            assert!((coefficients.power[n] - j).abs() <= 1e-12 * j.abs().max(1.0));
        }
        for (l, link) in topo.links().iter().enumerate() {
            for s in 0..topo.stream_count() {
                let side = |n: usize| {
                    let u = state.backlog[n][s];
                    let mut w = 0.0;
                    if congested(n, s) {
                        w += u;
                    }
                    if critical(n, s) {
                        w += u - c * state.battery[n];
                    }
                    w
                };
                let w = side(link.tx) - side(link.rx);
                assert!((coefficients.data[l][s] - w).abs() <= 1e-9 * w.abs().max(1.0));
            }
        }
    }
}

#[test]
fn routing_matches_a_brute_force_power_grid() {
    let config = bundled();
    let topo = &config.topology;
    let params = &config.capacity;
    let p_max = config.constants.p_max();
    let c = config.constants.energy_scale();
    let grid = 2001;
    let step = p_max / (grid - 1) as f64;
    let mut rng = ChaCha12Rng::seed_from_u64(22);
    let rate = |p: f64, g: f64| params.bandwidth() * (1.0 + p * g / params.noise_power()).log2();
    for _ in 0..300 {
        // batteries large enough that no node needs projecting
        let state = random_state(&config, &mut rng, 3.0 * p_max);
        let sets = congestion_sets(&state, &config.constants);
        let coefficients = Coefficients::compute(topo, &state, &sets, c);
        let gains: Vec<f64> = (0..topo.link_count())
            .map(|_| params.max_gain_sq() * rng.random_range(0.01..1.0))
            .collect();
        let decision = route(topo, &state, &gains, &coefficients, &config.constants, params, &InterferenceFree);
        assert_eq!(decision.projections, 0);
        let mut total_route = 0.0;
        let mut total_grid = 0.0;
        for (l, link) in topo.links().iter().enumerate() {
            let w = coefficients.data[l].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let j = coefficients.power[link.tx];
            let f = |p: f64| j * p - w.max(0.0) * rate(p, gains[l]);
            let (p_best, f_best) = (0..grid)
                .map(|k| k as f64 * step)
                .map(|p| (p, f(p)))
                .fold((0.0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
            total_route += f(decision.powers[l]);
            total_grid += f_best;
            assert!((decision.powers[l] - p_best).abs() <= step, "link {l}: {} vs {p_best}", decision.powers[l]);
        }
        let scale = total_grid.abs().max(1.0);
        assert!(total_route <= total_grid + 1e-9 * scale, "{total_route} > {total_grid}");
    }
}

#[test]
fn links_never_spend_more_than_the_battery_holds() {
    let config = bundled();
    let topo = &config.topology;
    let c = config.constants.energy_scale();
    let mut rng = ChaCha12Rng::seed_from_u64(23);
    for _ in 0..2_000 {
        let mut state = random_state(&config, &mut rng, 0.0);
        for e in state.battery.iter_mut() {
            *e = rng.random_range(0.0..3.0 * config.constants.p_max());
        }
        let sets = congestion_sets(&state, &config.constants);
        let coefficients = Coefficients::compute(topo, &state, &sets, c);
        let gains = vec![config.capacity.max_gain_sq(); topo.link_count()];
        let d = route(topo, &state, &gains, &coefficients, &config.constants, &config.capacity, &InterferenceFree);
        for n in 0..topo.node_count() {
            let spent = topo.outgoing_power(n, &d.powers);
            assert!(spent <= state.battery[n]);
            if state.battery[n] <= config.constants.p_max() {
                assert_eq!(spent, 0.0, "node {n} at E = {}", state.battery[n]);
            }
        }
    }
}

fn capacity() -> CapacityParams {
    CapacityParams::new(1e4, dbm_per_hz_to_watts(-135.0), 5e-6).unwrap()
}

proptest! {
    #[test]
    fn link_power_is_invariant_to_common_weight_scaling(
        j in 1e3..1e18f64, w in 1.0..1e8f64, g in 1e-9..5e-6f64, k in 1e-3..1e3f64,
    ) {
        let c = capacity();
        let a = optimal_link_power(j, w, g, &c, 4e-6);
        let b = optimal_link_power(j * k, w * k, g, &c, 4e-6);
        prop_assert!((a - b).abs() <= 1e-9 * 4e-6);
    }

    #[test]
    fn link_power_stays_in_range(j in 0.0..1e18f64, w in -1e8..1e8f64, g in 0.0..5e-6f64) {
        let p = optimal_link_power(j, w, g, &capacity(), 4e-6);
        prop_assert!((0.0..=4e-6).contains(&p));
        if w <= 0.0 {
            prop_assert_eq!(p, 0.0);
        }
    }
}

fn random_psd(dim: usize, rng: &mut ChaCha12Rng) -> HermitianMatrix {
    let mut h = HermitianMatrix::zeros(dim);
    for _ in 0..rng.random_range(1..=dim) {
        let x: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        h.add_outer(rng.random_range(0.01..10.0), &x);
    }
    h
}

fn dense(h: &HermitianMatrix) -> DMatrix<Complex64> {
    DMatrix::from_fn(h.dim(), h.dim(), |i, j| h.get(i, j))
}

fn random_unit(dim: usize, rng: &mut ChaCha12Rng) -> Vec<Complex64> {
    let x: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    x.into_iter().map(|z| z / norm).collect()
}

#[test]
fn dominant_eigenpair_matches_a_dense_decomposition() {
    let mut rng = ChaCha12Rng::seed_from_u64(24);
    for _ in 0..500 {
        let dim = rng.random_range(1..=16);
        let h = random_psd(dim, &mut rng);
        let found = max_eigvec(&h, &EigenOptions::default());
        let eig = dense(&h).symmetric_eigen();
        let top = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((found.value - top).abs() <= 1e-9 * top.abs(), "{} vs {top}", found.value);
        assert!(residual(&h, &found.vector, found.value) <= 1e-8 * h.frobenius_norm().max(1.0));
        let norm: f64 = found.vector.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let largest = found.vector.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let lead = found.vector.iter().find(|z| z.norm() > 1e-12 * largest).unwrap();
        assert!(lead.im == 0.0 && lead.re > 0.0);
        for _ in 0..20 {
            let x = random_unit(dim, &mut rng);
            assert!(h.quadratic_form(&x) <= found.value * (1.0 + 1e-12));
        }
    }
}

#[test]
fn sum_channel_is_hermitian_psd() {
    let mut rng = ChaCha12Rng::seed_from_u64(25);
    for _ in 0..200 {
        let energy: Vec<Vec<Complex64>> = (0..5).map(|_| random_unit(8, &mut rng)).collect();
        let j: Vec<f64> = (0..5).map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0.0..1e12) }).collect();
        let h = build_sum_channel(&j, &energy, 8);
        for a in 0..8 {
            for b in 0..8 {
                assert!((h.get(a, b) - h.get(b, a).conj()).norm() <= 1e-12 * h.frobenius_norm().max(1.0));
            }
        }
        for _ in 0..10 {
            let x = random_unit(8, &mut rng);
            assert!(h.quadratic_form(&x) >= -1e-12 * h.frobenius_norm());
        }
    }
}

#[test]
fn relabeling_nodes_leaves_the_beam_unchanged() {
    let mut rng = ChaCha12Rng::seed_from_u64(26);
    for _ in 0..100 {
        let energy: Vec<Vec<Complex64>> = (0..5).map(|_| random_unit(8, &mut rng)).collect();
        let j: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1e12)).collect();
        let order = [3, 0, 4, 1, 2];
        let energy_p: Vec<_> = order.iter().map(|&i| energy[i].clone()).collect();
        let j_p: Vec<f64> = order.iter().map(|&i| j[i]).collect();
        let a = schedule_energy(&j, &energy, 8, 1.0, 4.0, &EigenOptions::default());
        let b = schedule_energy(&j_p, &energy_p, 8, 1.0, 4.0, &EigenOptions::default());
        assert!((a.lambda_max - b.lambda_max).abs() <= 1e-9 * a.lambda_max);
        assert_eq!(a.p_ap, b.p_ap);
        // the beam is unique up to phase when the top eigenvalue is simple
        let overlap: Complex64 = a.weights.iter().zip(&b.weights).map(|(x, y)| x.conj() * y).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-6);
        for (k, &i) in order.iter().enumerate() {
            assert!((a.harvest[i] - b.harvest[k]).abs() <= 1e-6 * a.harvest[i].max(1e-12));
        }
    }
}

#[test]
fn one_needy_node_gets_the_whole_beam() {
    let m = 8;
    let step = std::f64::consts::PI / 360.0;
    for n0 in 0..5 {
        for &theta0 in &[0.2, 0.9, 1.3, 2.0, 2.7] {
            let energy: Vec<Vec<Complex64>> = (0..5)
                .map(|n| {
                    let theta = if n == n0 { theta0 } else { 0.4 * n as f64 };
                    ula_steering(theta, m, 0.5).into_iter().map(|z| z * 1e-3).collect()
                })
                .collect();
            let mut j = vec![0.0; 5];
            j[n0] = 1e15;
            let d = schedule_energy(&j, &energy, m, 1.0, 4.0, &EigenOptions::default());
            assert_eq!(d.p_ap, 4.0);
            let pattern: Vec<f64> = angle_grid(360)
                .iter()
                .map(|&t| beam_gain(&d.weights, &ula_steering(t, m, 0.5)))
                .collect();
            let best = (0..360).fold(0, |b, k| if pattern[k] > pattern[b] { k } else { b });
            let theta = best as f64 * step;
            let folded = |t: f64| t.min(std::f64::consts::PI - t);
            assert!((folded(theta) - folded(theta0)).abs() <= step, "node {n0}: {theta} vs {theta0}");
        }
    }
}

#[test]
fn eap_ties_stay_off() {
    let h = vec![vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]];
    let w = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    assert_eq!(eap_power_decision(2.0, &w, &h, &[2.0], 4.0), 0.0);
    assert_eq!(eap_power_decision(1.999, &w, &h, &[2.0], 4.0), 4.0);
}

#[test]
fn averaged_pattern_is_mirror_symmetric_bit_for_bit() {
    let mut config = bundled();
    config.horizon = 3_000;
    for n in [360, 361, 64] {
        let (_, points) = beam_pattern(&config, &angle_grid(n)).unwrap();
        assert!(points.iter().any(|p| p.1 > 0.0));
        for k in 1..n {
            assert_eq!(points[k].1, points[n - k].1, "grid {n}, index {k}");
        }
    }
}

#[test]
fn zero_eap_power_gives_a_flat_zero_pattern() {
    let mut config = bundled();
    config.horizon = 500;
    config.constants = config.constants.with_v(1e30).unwrap();
    let (m, points) = beam_pattern(&config, &angle_grid(90)).unwrap();
    assert_eq!(m.avg_p_ap, 0.0);
    assert!(points.iter().all(|p| p.1 == 0.0));
}

#[test]
fn drift_bound_holds_along_a_closed_loop_run() {
    let mut config = bundled();
    config.horizon = 5_000;
    let mut sim = Simulation::new(config).unwrap();
    for _ in 0..5_000 {
        let record = sim.step().unwrap();
        let check = record.drift.expect("checked every slot");
        assert!(check.passed, "slot {}: drift {} bound {}", record.slot, check.drift, check.bound);
    }
}

#[test]
fn drift_checker_rejects_an_impossible_jump() {
    let config = bundled();
    let topo = &config.topology;
    // delta = p_max = 1 keep B small
    let constants = SystemConstants::new(1.0, 1.0, 1.0, 1.0, 1.0, OPTIMAL_ALPHA, 1.0).unwrap();
    let bounds = BoundConstants::new(topo, &constants);
    let prev = NetworkState::initial(topo, None).unwrap();
    let mut next = prev.clone();
    next.backlog[2][0] = 1e6;
    next.slot = 1;
    let zero_rates = vec![vec![0.0; 2]; topo.link_count()];
    let arrivals = ArrivalBatch::zero(topo);
    let actions = SlotActions {
        powers: &[0.0; 6],
        rates: &zero_rates,
        harvest: &[0.0; 5],
        arrivals: &arrivals,
    };
    let check = pathwise_drift_bound_check(topo, &constants, &bounds, &prev, actions, &next);
    assert!(!check.passed);
    assert!(check.slack < 0.0);
    assert_eq!(
        check.drift,
        lyapunov_value(&next, constants.energy_scale()) - lyapunov_value(&prev, constants.energy_scale())
    );
}
