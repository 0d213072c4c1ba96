use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wpcn_core::config::{ConfigFile, TraceLevel};
use wpcn_core::output::{write_metrics, write_pattern, write_sweep, TraceWriter};
use wpcn_core::simulator::{angle_grid, beam_pattern, run_observed, sweep_v, RunMetrics};
use wpcn_core::validate::{run_suite, Injection, ValidationScale};
use wpcn_core::WpcnError;

const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;
const EXIT_ORACLE: u8 = 4;
const EXIT_IO: u8 = 1;

/// Simulate joint data routing and energy beamforming in a wireless-powered
/// multi-hop network.
///
/// Settings come from the TOML file given by --config (the bundled five-node
/// example when omitted). --set KEY=VALUE edits it in order given; --seed,
/// --out and --trace are applied last.
#[derive(Parser, Debug)]
#[command(name = "wpcn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One closed-loop run: metrics.csv and trace.csv.
    Run(Common),
    /// One run per V: sweep.csv and metrics.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated V values, overriding run.v_list.
        #[arg(long = "v-list", value_name = "CSV", value_delimiter = ',')]
        v_list: Option<Vec<f64>>,
    },
    /// Oracle suite at reduced scale; exit 4 if any check fails.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true, default_value = "none")]
        inject: Injection,
    },
    /// Time-averaged EAP radiation pattern over [0, pi): pattern.csv.
    Pattern {
        #[command(flatten)]
        common: Common,
        /// Number of angles.
        #[arg(long, default_value_t = 360, value_parser = clap::value_parser!(u32).range(8..))]
        grid: u32,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one dotted key, e.g. constants.v=3e12 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
    /// Output directory, overriding output.directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "LEVEL")]
    trace: Option<TraceLevel>,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    if key.trim().is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    Ok((key.trim().to_string(), value.trim().to_string()))
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<WpcnError> for Failure {
    fn from(err: WpcnError) -> Self {
        let code = match err {
            WpcnError::Topology(_) | WpcnError::Parameter { .. } | WpcnError::Config(_) => EXIT_CONFIG,
            WpcnError::Contract(_) | WpcnError::BatteryOverdraw { .. } => EXIT_INVARIANT,
            WpcnError::Io(_) => EXIT_IO,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        WpcnError::from(err).into()
    }
}

struct Loaded {
    file: ConfigFile,
    out: PathBuf,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(("run.seed".into(), seed.to_string()));
    }
    let mut file = match &common.config {
        Some(path) => ConfigFile::load(path, &overrides)?,
        None => ConfigFile::parse_with_overrides(wpcn_core::config::BUNDLED_FIVE_NODE, &overrides)?,
    };
    if let Some(level) = common.trace {
        file.output.trace = level;
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&file.output.directory));
    Ok(Loaded { file, out })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn invariant_violations(m: &RunMetrics) -> Vec<String> {
    let mut v = Vec::new();
    if m.battery_outages > 0 {
        v.push(format!("{} battery outages", m.battery_outages));
    }
    if m.low_battery_transmissions > 0 {
        v.push(format!("{} transmissions at E <= P_m", m.low_battery_transmissions));
    }
    if m.drift_failures > 0 {
        v.push(format!("{} drift-bound failures", m.drift_failures));
    }
    v
}

fn check_invariants(runs: &[RunMetrics]) -> Result<(), Failure> {
    let problems: Vec<String> = runs
        .iter()
        .flat_map(|m| invariant_violations(m).into_iter().map(move |p| format!("V = {}: {p}", m.v)))
        .collect();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_INVARIANT,
            message: format!("invariant failure: {}", problems.join("; ")),
        })
    }
}

fn summarize(m: &RunMetrics) {
    println!(
        "V = {:e}: {} slots, avg p_AP {:.6} W, avg sum backlog {:.6e} bits, outages {}, drift failures {} of {}",
        m.v, m.slots, m.avg_p_ap, m.avg_sum_backlog, m.battery_outages, m.drift_failures, m.drift_checks
    );
    eprintln!("wall clock {:.3} s", m.wall_clock);
}

fn cmd_run(common: &Common) -> Result<(), Failure> {
    let loaded = load(common)?;
    let config = loaded.file.build()?;
    let level = loaded.file.output.trace;
    let metrics = if level == TraceLevel::Off {
        run_observed(&config, &mut ())?
    } else {
        let mut trace = TraceWriter::new(create(&loaded.out, "trace.csv")?, level);
        let m = run_observed(&config, &mut trace)?;
        trace.finish()?;
        m
    };
    write_metrics(create(&loaded.out, "metrics.csv")?, std::slice::from_ref(&metrics))?;
    summarize(&metrics);
    check_invariants(&[metrics])
}

fn cmd_sweep(common: &Common, v_list: Option<&[f64]>) -> Result<(), Failure> {
    let loaded = load(common)?;
    let config = loaded.file.build()?;
    let values: Vec<f64> = v_list
        .map(<[f64]>::to_vec)
        .or_else(|| loaded.file.run.v_list.clone())
        .unwrap_or_default();
    if values.is_empty() {
        return Err(Failure {
            code: EXIT_CONFIG,
            message: "empty V list: pass --v-list or set run.v_list".into(),
        });
    }
    let rows = if values.len() == 1 {
        let cfg = config.with_v(values[0])?;
        vec![wpcn_core::simulator::SweepRow {
            v: values[0],
            metrics: run_observed(&cfg, &mut ())?,
        }]
    } else {
        sweep_v(&config, &values)?
    };
    write_sweep(create(&loaded.out, "sweep.csv")?, &rows)?;
    let metrics: Vec<RunMetrics> = rows.iter().map(|r| r.metrics.clone()).collect();
    write_metrics(create(&loaded.out, "metrics.csv")?, &metrics)?;
    for m in &metrics {
        summarize(m);
    }
    let power_decreasing = rows.windows(2).all(|w| w[1].metrics.avg_p_ap < w[0].metrics.avg_p_ap);
    let backlog_growing = rows
        .windows(2)
        .all(|w| w[1].metrics.avg_sum_backlog >= w[0].metrics.avg_sum_backlog * (1.0 - 1e-3));
    println!("trend: avg p_AP strictly decreasing in V: {}", yes_no(power_decreasing));
    println!("trend: avg backlog non-decreasing in V (0.1% slack): {}", yes_no(backlog_growing));
    check_invariants(&metrics)
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn cmd_validate(common: &Common, inject: Injection) -> Result<(), Failure> {
    let loaded = load(common)?;
    let config = loaded.file.build()?;
    let report = run_suite(&config, &ValidationScale::default(), inject)?;
    for check in &report.checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!("{status} {}: {}", check.name, check.detail);
    }
    if report.all_passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name).collect();
        Err(Failure {
            code: EXIT_ORACLE,
            message: format!("oracle failure: {}", names.join(", ")),
        })
    }
}

fn cmd_pattern(common: &Common, grid: u32) -> Result<(), Failure> {
    let loaded = load(common)?;
    let config = loaded.file.build()?;
    let angles = angle_grid(grid as usize);
    let (metrics, points) = beam_pattern(&config, &angles)?;
    write_pattern(create(&loaded.out, "pattern.csv")?, &points, config.topology.antenna_count())?;
    summarize(&metrics);
    let n = points.len();
    let symmetric = (1..n).all(|k| points[k].1 == points[n - k].1);
    let (peak_theta, peak_power) = points
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best });
    println!(
        "pattern: {n} angles, mirror symmetric: {}, global peak {:.6e} W at {:.2} deg",
        yes_no(symmetric),
        peak_power,
        peak_theta.to_degrees()
    );
    check_invariants(&[metrics])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => cmd_run(common),
        Command::Sweep { common, v_list } => cmd_sweep(common, v_list.as_deref()),
        Command::Validate { common, inject } => cmd_validate(common, *inject),
        Command::Pattern { common, grid } => cmd_pattern(common, *grid),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
