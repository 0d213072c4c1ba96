//! Network topology, per-slot state, and the queue / battery dynamics.
//!
//! Node, link and stream identifiers are zero-based indices. Backlogs are
//! fluid (bits, real valued) and batteries are in joules; the slot duration
//! is normalized to one so power and per-slot energy are interchangeable.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WpcnError};

/// A directed data link from `tx` to `rx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub tx: usize,
    pub rx: usize,
}

/// A data stream injected at `source` and absorbed at `sink`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream {
    pub source: usize,
    pub sink: usize,
}

/// Immutable network graph plus the antenna count of the energy access point.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    node_count: usize,
    antenna_count: usize,
    links: Vec<Link>,
    streams: Vec<Stream>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

impl NetworkTopology {
    pub fn new(
        node_count: usize,
        antenna_count: usize,
        links: Vec<Link>,
        streams: Vec<Stream>,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(WpcnError::Topology("node count must be positive".into()));
        }
        if antenna_count == 0 {
            return Err(WpcnError::Topology("antenna count must be positive".into()));
        }
        let mut outgoing = vec![Vec::new(); node_count];
        let mut incoming = vec![Vec::new(); node_count];
        for (id, link) in links.iter().enumerate() {
            if link.tx >= node_count || link.rx >= node_count {
                return Err(WpcnError::Topology(format!(
                    "link {id} references a node outside 0..{node_count}"
                )));
            }
            if link.tx == link.rx {
                return Err(WpcnError::Topology(format!(
                    "link {id} has identical transmitter and receiver {}",
                    link.tx
                )));
            }
            outgoing[link.tx].push(id);
            incoming[link.rx].push(id);
        }
        for (id, stream) in streams.iter().enumerate() {
            if stream.source >= node_count || stream.sink >= node_count {
                return Err(WpcnError::Topology(format!(
                    "stream {id} references a node outside 0..{node_count}"
                )));
            }
            if stream.source == stream.sink {
                return Err(WpcnError::Topology(format!(
                    "stream {id} has identical source and sink"
                )));
            }
        }
        Ok(Self {
            node_count,
            antenna_count,
            links,
            streams,
            outgoing,
            incoming,
        })
    }

    /// Five nodes, two streams: 0 -> 3 and 1 -> 4, both relayed through node 2,
    /// with a bidirectional link between the two sinks.
    pub fn five_node_relay(antenna_count: usize) -> Result<Self> {
        let links = [(0, 2), (1, 2), (2, 3), (2, 4), (3, 4), (4, 3)]
            .into_iter()
            .map(|(tx, rx)| Link { tx, rx })
            .collect();
        let streams = vec![
            Stream { source: 0, sink: 3 },
            Stream { source: 1, sink: 4 },
        ];
        Self::new(5, antenna_count, links, streams)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn antenna_count(&self) -> usize {
        self.antenna_count
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn stream_count(&self) -> usize {
        self.streams.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: usize) -> Link {
        self.links[id]
    }

    pub fn streams(&self) -> &[Stream] {
        &self.streams
    }

    pub fn stream(&self, id: usize) -> Stream {
        self.streams[id]
    }

    /// Outgoing link ids of node `n`.
    pub fn outgoing(&self, n: usize) -> &[usize] {
        &self.outgoing[n]
    }

    /// Ingoing link ids of node `n`.
    pub fn incoming(&self, n: usize) -> &[usize] {
        &self.incoming[n]
    }

    /// Maximum out-degree over all nodes.
    pub fn max_outgoing(&self) -> usize {
        self.outgoing.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Maximum in-degree over all nodes.
    pub fn max_incoming(&self) -> usize {
        self.incoming.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_sink(&self, n: usize, s: usize) -> bool {
        self.streams[s].sink == n
    }

    /// Total power drawn by node `n` from its battery under link powers `powers`.
    ///
    /// Every battery-feasibility check in the crate sums in this order so
    /// that the projection and the battery update agree bit-for-bit.
    pub fn outgoing_power(&self, n: usize, powers: &[f64]) -> f64 {
        self.outgoing[n].iter().map(|&l| powers[l]).sum()
    }
}

/// Physical constants and the derived control thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConstants {
    p_max: f64,
    p_ap_max: f64,
    arrival_peak: f64,
    capacity_max: f64,
    delta: f64,
    alpha: f64,
    energy_scale: f64,
    threshold: f64,
    v: f64,
}

/// The perturbation constant that minimizes the congestion threshold.
pub const OPTIMAL_ALPHA: f64 = std::f64::consts::SQRT_2 + 1.0;

/// Energy normalization factor `2 delta / (1 - 1/alpha)`.
pub fn energy_scale(delta: f64, alpha: f64) -> f64 {
    2.0 * delta / (1.0 - 1.0 / alpha)
}

/// Congestion threshold `P_m (C + alpha delta)` as a function of `alpha`.
pub fn congestion_threshold(delta: f64, p_max: f64, alpha: f64) -> f64 {
    p_max * (energy_scale(delta, alpha) + alpha * delta)
}

impl SystemConstants {
    /// `capacity_max` is the per-slot rate bound C_m, `delta` the slope of the
    /// linear rate-power bound (bits per joule).
    pub fn new(
        p_max: f64,
        p_ap_max: f64,
        arrival_peak: f64,
        capacity_max: f64,
        delta: f64,
        alpha: f64,
        v: f64,
    ) -> Result<Self> {
        positive("p_max", p_max)?;
        positive("p_ap_max", p_ap_max)?;
        positive("capacity_max", capacity_max)?;
        positive("delta", delta)?;
        positive("v", v)?;
        if !(arrival_peak.is_finite() && arrival_peak >= 0.0) {
            return Err(WpcnError::param("arrival_peak", "must be finite and >= 0"));
        }
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(WpcnError::param("alpha", format!("must exceed 1, got {alpha}")));
        }
        let energy_scale = energy_scale(delta, alpha);
        let threshold = congestion_threshold(delta, p_max, alpha);
        Ok(Self {
            p_max,
            p_ap_max,
            arrival_peak,
            capacity_max,
            delta,
            alpha,
            energy_scale,
            threshold,
            v,
        })
    }

    /// Same constants with a different trade-off parameter.
    pub fn with_v(&self, v: f64) -> Result<Self> {
        positive("v", v)?;
        Ok(Self { v, ..*self })
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }
    pub fn p_ap_max(&self) -> f64 {
        self.p_ap_max
    }
    pub fn arrival_peak(&self) -> f64 {
        self.arrival_peak
    }
    pub fn capacity_max(&self) -> f64 {
        self.capacity_max
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    /// Energy normalization factor (bits per joule).
    pub fn energy_scale(&self) -> f64 {
        self.energy_scale
    }
    /// Congestion threshold U0 (bits).
    pub fn threshold(&self) -> f64 {
        self.threshold
    }
    pub fn v(&self) -> f64 {
        self.v
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(WpcnError::param(name, format!("must be finite and > 0, got {value}")))
    }
}

/// Queue backlogs and battery levels at the start of a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    /// `backlog[n][s]`, bits.
    pub backlog: Vec<Vec<f64>>,
    /// `battery[n]`, joules.
    pub battery: Vec<f64>,
    pub slot: u64,
}

impl NetworkState {
    /// Empty queues, batteries at `initial_battery` (defaults to zero).
    pub fn initial(topology: &NetworkTopology, initial_battery: Option<&[f64]>) -> Result<Self> {
        let battery = match initial_battery {
            Some(levels) => {
                if levels.len() != topology.node_count() {
                    return Err(WpcnError::param(
                        "initial_battery",
                        format!("expected {} entries", topology.node_count()),
                    ));
                }
                if levels.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                    return Err(WpcnError::param("initial_battery", "levels must be >= 0"));
                }
                levels.to_vec()
            }
            None => vec![0.0; topology.node_count()],
        };
        Ok(Self {
            backlog: vec![vec![0.0; topology.stream_count()]; topology.node_count()],
            battery,
            slot: 0,
        })
    }

    pub fn total_backlog(&self) -> f64 {
        self.backlog.iter().flatten().sum()
    }

    pub fn max_backlog(&self) -> f64 {
        self.backlog.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn min_battery(&self) -> f64 {
        self.battery.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Exogenous arrivals of one slot, `bits[n][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalBatch {
    bits: Vec<Vec<f64>>,
}

impl ArrivalBatch {
    pub fn new(topology: &NetworkTopology, bits: Vec<Vec<f64>>, peak: f64) -> Result<Self> {
        if bits.len() != topology.node_count()
            || bits.iter().any(|row| row.len() != topology.stream_count())
        {
            return Err(WpcnError::Contract("arrival matrix has the wrong shape".into()));
        }
        for (n, row) in bits.iter().enumerate() {
            for (s, &a) in row.iter().enumerate() {
                if !(a.is_finite() && (0.0..=peak).contains(&a)) {
                    return Err(WpcnError::Contract(format!(
                        "arrival {a} at node {n}, stream {s} outside [0, {peak}]"
                    )));
                }
                if a > 0.0 && topology.stream(s).source != n {
                    return Err(WpcnError::Contract(format!(
                        "stream {s} receives arrivals at node {n}, which is not its source"
                    )));
                }
            }
        }
        Ok(Self { bits })
    }

    pub fn zero(topology: &NetworkTopology) -> Self {
        Self {
            bits: vec![vec![0.0; topology.stream_count()]; topology.node_count()],
        }
    }

    /// Arrivals placed at each stream's source: `per_stream[s]` bits.
    pub fn at_sources(topology: &NetworkTopology, per_stream: &[f64], peak: f64) -> Result<Self> {
        let mut bits = vec![vec![0.0; topology.stream_count()]; topology.node_count()];
        for (s, stream) in topology.streams().iter().enumerate() {
            bits[stream.source][s] = per_stream[s];
        }
        Self::new(topology, bits, peak)
    }

    pub fn get(&self, n: usize, s: usize) -> f64 {
        self.bits[n][s]
    }

    pub fn bits(&self) -> &[Vec<f64>] {
        &self.bits
    }
}

/// What happens to bits delivered to their own stream's sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SinkPolicy {
    /// Delivered bits leave the network; the sink queue stays empty.
    #[default]
    Absorb,
    /// Delivered bits are enqueued like anywhere else (closed bookkeeping).
    Enqueue,
}

/// Queue recursion: outflow truncated at zero, then inflow and arrivals added.
///
/// `rates[l][s]` is the rate allocated to stream `s` on link `l`. The slot
/// index is left unchanged; see [`advance`] for the full slot transition.
pub fn step_queues(
    topology: &NetworkTopology,
    state: &NetworkState,
    rates: &[Vec<f64>],
    arrivals: &ArrivalBatch,
    sinks: SinkPolicy,
) -> Result<NetworkState> {
    if rates.len() != topology.link_count() {
        return Err(WpcnError::Contract("rate table has the wrong number of links".into()));
    }
    for (l, row) in rates.iter().enumerate() {
        if row.len() != topology.stream_count() {
            return Err(WpcnError::Contract(format!("rate row {l} has the wrong width")));
        }
        if let Some(bad) = row.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(WpcnError::Contract(format!("negative or non-finite rate {bad} on link {l}")));
        }
    }
    let mut next = state.clone();
    for n in 0..topology.node_count() {
        for s in 0..topology.stream_count() {
            if sinks == SinkPolicy::Absorb && topology.is_sink(n, s) {
                next.backlog[n][s] = 0.0;
                continue;
            }
            let out: f64 = topology.outgoing(n).iter().map(|&l| rates[l][s]).sum();
            let inflow: f64 = topology.incoming(n).iter().map(|&l| rates[l][s]).sum();
            let arrived = arrivals.get(n, s);
            next.backlog[n][s] = (state.backlog[n][s] - out).max(0.0) + inflow + arrived;
        }
    }
    Ok(next)
}

/// Battery recursion `E' = E - sum_{l in O_n} p_l + Q_n`.
///
/// Spending beyond the current level is a hard error, never a clamp. When
/// `cap` is set the new level is truncated to it; the number of truncated
/// nodes is returned alongside the new state.
pub fn step_batteries(
    topology: &NetworkTopology,
    state: &NetworkState,
    powers: &[f64],
    harvest: &[f64],
    cap: Option<f64>,
) -> Result<(NetworkState, usize)> {
    if powers.len() != topology.link_count() || harvest.len() != topology.node_count() {
        return Err(WpcnError::Contract("power or harvest vector has the wrong length".into()));
    }
    if let Some(bad) = powers.iter().chain(harvest).find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(WpcnError::Contract(format!("negative or non-finite power {bad}")));
    }
    let mut next = state.clone();
    let mut clipped = 0;
    for n in 0..topology.node_count() {
        let spent = topology.outgoing_power(n, powers);
        let level = state.battery[n];
        if spent > level {
            return Err(WpcnError::BatteryOverdraw {
                node: n,
                slot: state.slot,
                deficit: spent - level,
            });
        }
        let mut updated = level - spent + harvest[n];
        if let Some(cap) = cap {
            if updated > cap {
                updated = cap;
                clipped += 1;
            }
        }
        next.battery[n] = updated;
    }
    Ok((next, clipped))
}

/// Updated state of one full slot: batteries, then queues, then `t + 1`.
pub struct SlotTransition {
    pub state: NetworkState,
    pub battery_clips: usize,
}

pub fn advance(
    topology: &NetworkTopology,
    state: &NetworkState,
    powers: &[f64],
    rates: &[Vec<f64>],
    harvest: &[f64],
    arrivals: &ArrivalBatch,
    battery_cap: Option<f64>,
) -> Result<SlotTransition> {
    let (charged, battery_clips) = step_batteries(topology, state, powers, harvest, battery_cap)?;
    let mut next = step_queues(topology, &charged, rates, arrivals, SinkPolicy::Absorb)?;
    next.slot = state.slot + 1;
    Ok(SlotTransition {
        state: next,
        battery_clips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> NetworkTopology {
        // 0 -> 1 -> 2, one stream 0 -> 2
        NetworkTopology::new(
            3,
            1,
            vec![Link { tx: 0, rx: 1 }, Link { tx: 1, rx: 2 }],
            vec![Stream { source: 0, sink: 2 }],
        )
        .unwrap()
    }

    #[test]
    fn rejects_self_loop_and_bad_ids() {
        assert!(NetworkTopology::new(2, 1, vec![Link { tx: 1, rx: 1 }], vec![]).is_err());
        assert!(NetworkTopology::new(2, 1, vec![Link { tx: 0, rx: 2 }], vec![]).is_err());
        assert!(NetworkTopology::new(2, 1, vec![], vec![Stream { source: 0, sink: 5 }]).is_err());
        assert!(NetworkTopology::new(0, 1, vec![], vec![]).is_err());
    }

    #[test]
    fn degree_bookkeeping() {
        let t = NetworkTopology::five_node_relay(4).unwrap();
        assert_eq!(t.outgoing(2), &[2, 3]);
        assert_eq!(t.incoming(2), &[0, 1]);
        assert_eq!(t.max_outgoing(), 2);
        assert_eq!(t.max_incoming(), 2);
        for (l, link) in t.links().iter().enumerate() {
            assert!(t.outgoing(link.tx).contains(&l));
            assert!(t.incoming(link.rx).contains(&l));
        }
    }

    #[test]
    fn arrival_only_into_empty_queue() {
        let t = line();
        let s = NetworkState::initial(&t, None).unwrap();
        let a = ArrivalBatch::at_sources(&t, &[7.0], 10.0).unwrap();
        let rates = vec![vec![0.0]; 2];
        let next = step_queues(&t, &s, &rates, &a, SinkPolicy::Absorb).unwrap();
        assert_eq!(next.backlog[0][0], 7.0);
    }

    #[test]
    fn outflow_truncates_before_inflow() {
        // node 1: U = 10, outflow 25 on link 1, inflow 4 on link 0
        let t = line();
        let mut s = NetworkState::initial(&t, None).unwrap();
        s.backlog[1][0] = 10.0;
        let rates = vec![vec![4.0], vec![25.0]];
        let next = step_queues(&t, &s, &rates, &ArrivalBatch::zero(&t), SinkPolicy::Absorb).unwrap();
        assert_eq!(next.backlog[1][0], 4.0);
        assert_eq!(next.backlog[2][0], 0.0, "sink absorbs");
        let kept = step_queues(&t, &s, &rates, &ArrivalBatch::zero(&t), SinkPolicy::Enqueue).unwrap();
        assert_eq!(kept.backlog[2][0], 25.0);
    }

    #[test]
    fn negative_rate_is_contract_violation() {
        let t = line();
        let s = NetworkState::initial(&t, None).unwrap();
        let rates = vec![vec![-1.0], vec![0.0]];
        let err = step_queues(&t, &s, &rates, &ArrivalBatch::zero(&t), SinkPolicy::Absorb);
        assert!(matches!(err, Err(WpcnError::Contract(_))));
    }

    #[test]
    fn arrivals_outside_source_or_peak_rejected() {
        let t = line();
        assert!(ArrivalBatch::new(&t, vec![vec![0.0], vec![1.0], vec![0.0]], 10.0).is_err());
        assert!(ArrivalBatch::new(&t, vec![vec![11.0], vec![0.0], vec![0.0]], 10.0).is_err());
        assert!(ArrivalBatch::new(&t, vec![vec![-1.0], vec![0.0], vec![0.0]], 10.0).is_err());
    }

    #[test]
    fn battery_examples() {
        let t = line();
        let mut s = NetworkState::initial(&t, Some(&[5.0, 0.0, 0.0])).unwrap();
        let (idle, _) = step_batteries(&t, &s, &[0.0, 0.0], &[0.0; 3], None).unwrap();
        assert_eq!(idle.battery[0], 5.0);
        let (used, _) = step_batteries(&t, &s, &[2.0, 0.0], &[3.0, 0.0, 0.0], None).unwrap();
        assert_eq!(used.battery[0], 6.0);
        s.battery[0] = 1.0;
        s.slot = 9;
        match step_batteries(&t, &s, &[2.0, 0.0], &[0.0; 3], None) {
            Err(WpcnError::BatteryOverdraw { node, slot, deficit }) => {
                assert_eq!((node, slot), (0, 9));
                assert_eq!(deficit, 1.0);
            }
            other => panic!("expected overdraw, got {other:?}"),
        }
    }

    #[test]
    fn battery_cap_clips_and_counts() {
        let t = line();
        let s = NetworkState::initial(&t, Some(&[1.0, 1.0, 1.0])).unwrap();
        let (next, clips) = step_batteries(&t, &s, &[0.0, 0.0], &[5.0, 0.5, 0.0], Some(2.0)).unwrap();
        assert_eq!(next.battery, vec![2.0, 1.5, 1.0]);
        assert_eq!(clips, 1);
    }

    #[test]
    fn constants_threshold_identities() {
        let delta = 3.7e5;
        let p_max = 2.0e-3;
        let c = SystemConstants::new(p_max, 1.0, 10.0, 100.0, delta, OPTIMAL_ALPHA, 1.0).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(c.energy_scale() * (1.0 - 1.0 / c.alpha()), 2.0 * delta) < 1e-12);
        assert!(rel(c.threshold(), (3.0 + 2.0 * 2f64.sqrt()) * delta * p_max) < 1e-12);
        assert!(rel(c.energy_scale(), (2.0 + 2f64.sqrt()) * delta) < 1e-12);
        assert!(SystemConstants::new(p_max, 1.0, 10.0, 100.0, delta, 1.0, 1.0).is_err());
        assert!(SystemConstants::new(p_max, 1.0, 10.0, 100.0, delta, 2.0, 0.0).is_err());
        assert!(SystemConstants::new(-1.0, 1.0, 10.0, 100.0, delta, 2.0, 1.0).is_err());
    }

    #[test]
    fn advance_increments_slot() {
        let t = line();
        let s = NetworkState::initial(&t, Some(&[1.0, 0.0, 0.0])).unwrap();
        let a = ArrivalBatch::at_sources(&t, &[3.0], 10.0).unwrap();
        let next = advance(&t, &s, &[0.5, 0.0], &[vec![2.0], vec![0.0]], &[0.0; 3], &a, None).unwrap();
        assert_eq!(next.state.slot, 1);
        assert_eq!(next.state.battery[0], 0.5);
        assert_eq!(next.state.backlog[0][0], 3.0);
        assert_eq!(next.state.backlog[1][0], 2.0);
    }
}
