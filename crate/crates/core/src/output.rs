//! CSV emitters. Header names carry units; floats use the shortest
//! round-trip representation so files are byte-identical across runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::TraceLevel;
use crate::error::Result;
use crate::model::NetworkState;
use crate::simulator::{RunMetrics, SlotObserver, SlotRecord, SweepRow};

pub const METRICS_HEADER: [&str; 15] = [
    "v",
    "slots",
    "seed",
    "avg_p_ap_w",
    "avg_sum_backlog_bits",
    "max_backlog_bits",
    "battery_outages",
    "low_battery_transmissions",
    "projection_events",
    "drift_checks",
    "drift_failures",
    "min_drift_slack",
    "gain_clips",
    "battery_clips",
    "eigen_fallbacks",
];

fn metrics_record(m: &RunMetrics) -> Vec<String> {
    vec![
        m.v.to_string(),
        m.slots.to_string(),
        m.seed.to_string(),
        m.avg_p_ap.to_string(),
        m.avg_sum_backlog.to_string(),
        m.max_backlog.to_string(),
        m.battery_outages.to_string(),
        m.low_battery_transmissions.to_string(),
        m.projection_events.to_string(),
        m.drift_checks.to_string(),
        m.drift_failures.to_string(),
        m.min_drift_slack.to_string(),
        m.gain_clips.to_string(),
        m.battery_clips.to_string(),
        m.eigen_fallbacks.to_string(),
    ]
}

/// One row per run.
pub fn write_metrics<W: Write>(out: W, runs: &[RunMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for m in runs {
        w.write_record(metrics_record(m))?;
    }
    w.flush()?;
    Ok(())
}

/// The `(V, power, backlog)` table of a sweep, plus the safety counters.
pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "v",
        "avg_p_ap_w",
        "avg_sum_backlog_bits",
        "battery_outages",
        "low_battery_transmissions",
        "drift_failures",
    ])?;
    for row in rows {
        let m = &row.metrics;
        w.write_record([
            row.v.to_string(),
            m.avg_p_ap.to_string(),
            m.avg_sum_backlog.to_string(),
            m.battery_outages.to_string(),
            m.low_battery_transmissions.to_string(),
            m.drift_failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Average EAP pattern. The first line is a `#` comment stating the
/// normalization.
pub fn write_pattern<W: Write>(mut out: W, points: &[(f64, f64)], antennas: usize) -> Result<()> {
    writeln!(
        out,
        "# avg_power_w = mean over slots of p_ap * |w . a(theta)|^2 / M, M = {antennas}"
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta_rad", "avg_power_w"])?;
    for (theta, power) in points {
        w.write_record([theta.to_string(), power.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Streams a per-slot trace: `t, p_ap_w, sum_backlog_bits, min_battery_j`,
/// and with [`TraceLevel::Full`] every backlog and battery level.
pub struct TraceWriter<W: Write> {
    writer: csv::Writer<W>,
    level: TraceLevel,
    header_written: bool,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path, level: TraceLevel) -> Result<Self> {
        Ok(Self::new(BufWriter::new(File::create(path)?), level))
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, level: TraceLevel) -> Self {
        Self {
            writer: csv::Writer::from_writer(out),
            level,
            header_written: false,
        }
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

impl<W: Write> SlotObserver for TraceWriter<W> {
    fn observe(&mut self, record: &SlotRecord, state: &NetworkState) -> Result<()> {
        if self.level == TraceLevel::Off {
            return Ok(());
        }
        let full = self.level == TraceLevel::Full;
        if !self.header_written {
            let mut header: Vec<String> = ["t", "p_ap_w", "sum_backlog_bits", "min_battery_j"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            if full {
                for (n, row) in state.backlog.iter().enumerate() {
                    for s in 0..row.len() {
                        header.push(format!("u_{n}_{s}_bits"));
                    }
                }
                for n in 0..state.battery.len() {
                    header.push(format!("e_{n}_j"));
                }
            }
            self.writer.write_record(&header)?;
            self.header_written = true;
        }
        let mut row = vec![
            record.slot.to_string(),
            record.p_ap.to_string(),
            record.sum_backlog.to_string(),
            record.min_battery.to_string(),
        ];
        if full {
            row.extend(state.backlog.iter().flatten().map(f64::to_string));
            row.extend(state.battery.iter().map(f64::to_string));
        }
        self.writer.write_record(&row)?;
        Ok(())
    }
}
