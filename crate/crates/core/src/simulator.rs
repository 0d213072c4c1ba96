//! Slot-by-slot closed loop.
//!
//! Within a slot: channels are drawn, data gains clipped, coefficients
//! computed from the current state, both policies run, then batteries and
//! queues are updated and the arrivals of the slot appended.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::capacity::CapacityParams;
use crate::channel::{ula_steering, ChannelConfig, ChannelSampler};
use crate::eigen::{EigenMethod, EigenOptions};
use crate::error::{Result, WpcnError};
use crate::lyapunov::{congestion_sets, pathwise_drift_bound_check, BoundConstants, Coefficients, DriftCheck, SlotActions};
use crate::model::{advance, ArrivalBatch, NetworkState, NetworkTopology, SystemConstants};
use crate::policy_data::{route, InterferenceFree};
use crate::policy_energy::{beam_gain, schedule_energy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalDistribution {
    /// Exactly the mean every slot.
    Constant,
    /// Uniform on `[0, 2 mean]`.
    Uniform,
    /// The peak with probability `mean / peak`, otherwise nothing.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSpec {
    pub distribution: ArrivalDistribution,
    /// Mean bits per slot of each stream.
    pub mean: Vec<f64>,
}

impl ArrivalSpec {
    fn validate(&self, topology: &NetworkTopology, peak: f64) -> Result<()> {
        if self.mean.len() != topology.stream_count() {
            return Err(WpcnError::param(
                "arrivals.mean",
                format!("expected {} entries", topology.stream_count()),
            ));
        }
        for &m in &self.mean {
            if !(m.is_finite() && m >= 0.0) {
                return Err(WpcnError::param("arrivals.mean", "means must be finite and >= 0"));
            }
            let largest = match self.distribution {
                ArrivalDistribution::Uniform => 2.0 * m,
                ArrivalDistribution::Constant | ArrivalDistribution::Bernoulli => m,
            };
            if largest > peak {
                return Err(WpcnError::param(
                    "arrivals.mean",
                    format!("mean {m} does not fit under the arrival peak {peak}"),
                ));
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, peak: f64, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .map(|&m| match self.distribution {
                ArrivalDistribution::Constant => m,
                ArrivalDistribution::Uniform => 2.0 * m * rng.random::<f64>(),
                ArrivalDistribution::Bernoulli => {
                    if peak > 0.0 && rng.random::<f64>() < m / peak {
                        peak
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verification {
    /// Run the pathwise drift check every this many slots; 0 disables it.
    pub drift_check_every: u64,
    /// Count slots where a node at or below `P_m` transmits.
    pub battery_safety: bool,
}

impl Default for Verification {
    fn default() -> Self {
        Self {
            drift_check_every: 1,
            battery_safety: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub topology: NetworkTopology,
    pub constants: SystemConstants,
    pub channel: ChannelConfig,
    pub capacity: CapacityParams,
    pub arrivals: ArrivalSpec,
    /// Number of slots.
    pub horizon: u64,
    pub seed: u64,
    pub initial_battery: Option<Vec<f64>>,
    pub battery_cap: Option<f64>,
    pub verification: Verification,
    pub eigen: EigenOptions,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(WpcnError::param("horizon", "must be at least one slot"));
        }
        self.channel.validate(&self.topology)?;
        self.arrivals.validate(&self.topology, self.constants.arrival_peak())?;
        if let Some(cap) = self.battery_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(WpcnError::param("battery_cap", "must be finite and > 0"));
            }
        }
        NetworkState::initial(&self.topology, self.initial_battery.as_deref())?;
        Ok(())
    }

    /// Same run with a different trade-off parameter.
    pub fn with_v(&self, v: f64) -> Result<Self> {
        Ok(Self {
            constants: self.constants.with_v(v)?,
            ..self.clone()
        })
    }
}

/// Everything decided and observed in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    pub p_ap: f64,
    pub lambda_max: f64,
    pub weights: Vec<Complex64>,
    pub powers: Vec<f64>,
    /// `rates[l][s]`, bits per slot.
    pub rates: Vec<Vec<f64>>,
    pub harvest: Vec<f64>,
    /// `arrivals[n][s]`, bits.
    pub arrivals: Vec<Vec<f64>>,
    /// Backlog sum at the start of the slot.
    pub sum_backlog: f64,
    /// Lowest battery level at the start of the slot.
    pub min_battery: f64,
    pub projections: usize,
    pub gain_clips: usize,
    /// Nodes at or below `P_m` that transmitted anyway.
    pub low_battery_transmissions: usize,
    pub drift: Option<DriftCheck>,
    pub eigen_method: EigenMethod,
}

/// Hook called once per slot with the record and the start-of-slot state.
pub trait SlotObserver {
    fn observe(&mut self, record: &SlotRecord, state: &NetworkState) -> Result<()>;
}

impl SlotObserver for () {
    fn observe(&mut self, _: &SlotRecord, _: &NetworkState) -> Result<()> {
        Ok(())
    }
}

impl<A: SlotObserver, B: SlotObserver> SlotObserver for (A, B) {
    fn observe(&mut self, record: &SlotRecord, state: &NetworkState) -> Result<()> {
        self.0.observe(record, state)?;
        self.1.observe(record, state)
    }
}

impl<T: SlotObserver + ?Sized> SlotObserver for &mut T {
    fn observe(&mut self, record: &SlotRecord, state: &NetworkState) -> Result<()> {
        (**self).observe(record, state)
    }
}

/// Horizon aggregates of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub v: f64,
    pub slots: u64,
    pub seed: u64,
    pub avg_p_ap: f64,
    pub avg_sum_backlog: f64,
    pub max_backlog: f64,
    pub battery_outages: u64,
    pub low_battery_transmissions: u64,
    pub projection_events: u64,
    pub drift_checks: u64,
    pub drift_failures: u64,
    pub min_drift_slack: f64,
    pub gain_clips: u64,
    pub battery_clips: u64,
    pub eigen_fallbacks: u64,
    /// Seconds; not part of any deterministic output file.
    pub wall_clock: f64,
}

pub struct Simulation {
    config: RunConfig,
    bounds: BoundConstants,
    state: NetworkState,
    sampler: ChannelSampler,
    arrival_rng: ChaCha12Rng,
    totals: Totals,
}

#[derive(Default)]
struct Totals {
    p_ap: f64,
    backlog: f64,
    max_backlog: f64,
    low_battery: u64,
    projections: u64,
    drift_checks: u64,
    drift_failures: u64,
    min_slack: Option<f64>,
    gain_clips: u64,
    battery_clips: u64,
    eigen_fallbacks: u64,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let bounds = BoundConstants::new(&config.topology, &config.constants);
        let state = NetworkState::initial(&config.topology, config.initial_battery.as_deref())?;
        let sampler = ChannelSampler::new(config.channel.clone(), &config.topology, config.seed)?;
        let mut arrival_rng = ChaCha12Rng::seed_from_u64(config.seed);
        arrival_rng.set_stream(2);
        Ok(Self {
            config,
            bounds,
            state,
            sampler,
            arrival_rng,
            totals: Totals::default(),
        })
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn bounds(&self) -> &BoundConstants {
        &self.bounds
    }

    /// Advances one slot and returns its record.
    pub fn step(&mut self) -> Result<SlotRecord> {
        self.step_observed(&mut ())
    }

    fn step_observed(&mut self, observer: &mut dyn SlotObserver) -> Result<SlotRecord> {
        let cfg = &self.config;
        let topology = &cfg.topology;
        let constants = &cfg.constants;
        let slot = self.state.slot;

        let channels = self.sampler.draw(slot);
        let mut gain_clips = 0;
        let gains_sq: Vec<f64> = channels
            .data
            .iter()
            .map(|&g| {
                let (g, clipped) = cfg.capacity.clip_gain(g);
                gain_clips += usize::from(clipped);
                g.norm_sqr()
            })
            .collect();

        let sets = congestion_sets(&self.state, constants);
        let coefficients = Coefficients::compute(topology, &self.state, &sets, constants.energy_scale());
        let data = route(
            topology,
            &self.state,
            &gains_sq,
            &coefficients,
            constants,
            &cfg.capacity,
            &InterferenceFree,
        );
        let energy = schedule_energy(
            &coefficients.power,
            &channels.energy,
            topology.antenna_count(),
            constants.v(),
            constants.p_ap_max(),
            &cfg.eigen,
        );

        let low_battery_transmissions = if cfg.verification.battery_safety {
            (0..topology.node_count())
                .filter(|&n| {
                    self.state.battery[n] <= constants.p_max()
                        && topology.outgoing(n).iter().any(|&l| data.powers[l] > 0.0)
                })
                .count()
        } else {
            0
        };

        let per_stream = cfg.arrivals.sample(constants.arrival_peak(), &mut self.arrival_rng);
        let arrivals = ArrivalBatch::at_sources(topology, &per_stream, constants.arrival_peak())?;
        let transition = advance(
            topology,
            &self.state,
            &data.powers,
            &data.rates,
            &energy.harvest,
            &arrivals,
            cfg.battery_cap,
        )?;

        let every = cfg.verification.drift_check_every;
        let drift = (every > 0 && slot % every == 0).then(|| {
            let actions = SlotActions {
                powers: &data.powers,
                rates: &data.rates,
                harvest: &energy.harvest,
                arrivals: &arrivals,
            };
            pathwise_drift_bound_check(topology, constants, &self.bounds, &self.state, actions, &transition.state)
        });

        let record = SlotRecord {
            slot,
            p_ap: energy.p_ap,
            lambda_max: energy.lambda_max,
            weights: energy.weights,
            powers: data.powers,
            rates: data.rates,
            harvest: energy.harvest,
            arrivals: arrivals.bits().to_vec(),
            sum_backlog: self.state.total_backlog(),
            min_battery: self.state.min_battery(),
            projections: data.projections,
            gain_clips,
            low_battery_transmissions,
            drift,
            eigen_method: energy.method,
        };
        observer.observe(&record, &self.state)?;

        let t = &mut self.totals;
        t.p_ap += record.p_ap;
        t.backlog += record.sum_backlog;
        t.max_backlog = t.max_backlog.max(self.state.max_backlog()).max(transition.state.max_backlog());
        t.low_battery += low_battery_transmissions as u64;
        t.projections += data.projections as u64;
        t.gain_clips += gain_clips as u64;
        t.battery_clips += transition.battery_clips as u64;
        t.eigen_fallbacks += u64::from(record.eigen_method == EigenMethod::Jacobi);
        if let Some(check) = drift {
            t.drift_checks += 1;
            t.drift_failures += u64::from(!check.passed);
            t.min_slack = Some(t.min_slack.map_or(check.slack, |s: f64| s.min(check.slack)));
        }

        self.state = transition.state;
        Ok(record)
    }

    fn metrics(&self, wall_clock: f64) -> RunMetrics {
        let slots = self.state.slot;
        let t = &self.totals;
        let denom = slots.max(1) as f64;
        RunMetrics {
            v: self.config.constants.v(),
            slots,
            seed: self.config.seed,
            avg_p_ap: t.p_ap / denom,
            avg_sum_backlog: t.backlog / denom,
            max_backlog: t.max_backlog,
            battery_outages: 0,
            low_battery_transmissions: t.low_battery,
            projection_events: t.projections,
            drift_checks: t.drift_checks,
            drift_failures: t.drift_failures,
            min_drift_slack: t.min_slack.unwrap_or(f64::NAN),
            gain_clips: t.gain_clips,
            battery_clips: t.battery_clips,
            eigen_fallbacks: t.eigen_fallbacks,
            wall_clock,
        }
    }
}

/// Runs the full horizon.
pub fn run(config: &RunConfig) -> Result<RunMetrics> {
    run_observed(config, &mut ())
}

/// Runs the full horizon, feeding every slot to `observer`.
pub fn run_observed(config: &RunConfig, observer: &mut dyn SlotObserver) -> Result<RunMetrics> {
    let started = Instant::now();
    let mut sim = Simulation::new(config.clone())?;
    for _ in 0..config.horizon {
        sim.step_observed(observer)?;
    }
    Ok(sim.metrics(started.elapsed().as_secs_f64()))
}

/// Scalar per-slot series kept in memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalarSeries {
    pub p_ap: Vec<f64>,
    pub sum_backlog: Vec<f64>,
    pub min_battery: Vec<f64>,
}

impl SlotObserver for ScalarSeries {
    fn observe(&mut self, record: &SlotRecord, _: &NetworkState) -> Result<()> {
        self.p_ap.push(record.p_ap);
        self.sum_backlog.push(record.sum_backlog);
        self.min_battery.push(record.min_battery);
        Ok(())
    }
}

/// One row of a V sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub v: f64,
    pub metrics: RunMetrics,
}

/// Independent runs per V, sharing the seed so rows are paired. Rows come
/// back sorted by V. Runs execute on separate threads.
pub fn sweep_v(config: &RunConfig, v_list: &[f64]) -> Result<Vec<SweepRow>> {
    if v_list.len() < 2 {
        return Err(WpcnError::param("v_list", "a sweep needs at least two values"));
    }
    let configs = v_list.iter().map(|&v| config.with_v(v)).collect::<Result<Vec<_>>>()?;
    let results: Vec<Result<RunMetrics>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let mut rows = v_list
        .iter()
        .zip(results)
        .map(|(&v, r)| r.map(|metrics| SweepRow { v, metrics }))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.v.total_cmp(&b.v));
    Ok(rows)
}

/// `n` angles `k pi / n`, `k = 0..n`, covering `[0, pi)`.
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 * std::f64::consts::PI / n as f64).collect()
}

/// Time-averaged radiated pattern `(1/T) sum_t p_AP |w(t) . a(theta)|^2 / M`.
#[derive(Debug, Clone)]
pub struct PatternAccumulator {
    angles: Vec<f64>,
    steering: Vec<Vec<Complex64>>,
    sums: Vec<f64>,
    antennas: usize,
    slots: u64,
}

impl PatternAccumulator {
    pub fn new(angles: Vec<f64>, antennas: usize, spacing: f64) -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        let mut sorted: Vec<f64> = angles.iter().copied().filter(|t| *t <= FRAC_PI_2).collect();
        sorted.sort_by(f64::total_cmp);
        // an angle above pi/2 reuses the steering vector of its mirror image
        // when that is also on the grid, so mirror pairs agree bit-for-bit
        let fold = |theta: f64| {
            if theta <= FRAC_PI_2 {
                return theta;
            }
            let mirror = PI - theta;
            let i = sorted.partition_point(|&t| t < mirror);
            [i.checked_sub(1), Some(i)]
                .into_iter()
                .flatten()
                .filter_map(|j| sorted.get(j).copied())
                .find(|t| (t - mirror).abs() <= 1e-12)
                .unwrap_or(mirror)
        };
        let steering = angles
            .iter()
            .map(|&theta| ula_steering(fold(theta), antennas, spacing))
            .collect();
        let sums = vec![0.0; angles.len()];
        Self {
            angles,
            steering,
            sums,
            antennas,
            slots: 0,
        }
    }

    /// `(theta, average power)` pairs.
    pub fn finish(&self) -> Vec<(f64, f64)> {
        let denom = self.slots.max(1) as f64;
        self.angles
            .iter()
            .zip(&self.sums)
            .map(|(&theta, &sum)| (theta, sum / denom))
            .collect()
    }
}

impl SlotObserver for PatternAccumulator {
    fn observe(&mut self, record: &SlotRecord, _: &NetworkState) -> Result<()> {
        self.slots += 1;
        if record.p_ap > 0.0 {
            let m = self.antennas as f64;
            for (sum, a) in self.sums.iter_mut().zip(&self.steering) {
                *sum += record.p_ap * beam_gain(&record.weights, a) / m;
            }
        }
        Ok(())
    }
}

/// Runs `config` and returns the average EAP pattern over `angles`.
pub fn beam_pattern(config: &RunConfig, angles: &[f64]) -> Result<(RunMetrics, Vec<(f64, f64)>)> {
    let mut acc = PatternAccumulator::new(angles.to_vec(), config.topology.antenna_count(), config.channel.spacing);
    let metrics = run_observed(config, &mut acc)?;
    Ok((metrics, acc.finish()))
}
