//! Monte Carlo harness: per-drop channel draws, baselines, paired sweeps and
//! their CSV / plot-script output.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{draw_channels, ChannelSet, PhaseConfig};
use crate::conic;
use crate::driver::{self, DriverSettings, RunReport, RunSetup};
use crate::error::{Error, Result};
use crate::scenario::{sample_user_positions, substream, units, Compression, CovarianceMode, ScenarioConfig, Stream};

pub const SCHEMA: &str = "irs-cran-sweep/1";

/// Users and channels of drop `drop`; identical for every variant.
pub fn draw_drop(cfg: &ScenarioConfig, drop: u64) -> Result<ChannelSet> {
    let users = sample_user_positions(cfg, &mut substream(cfg.seed, drop, Stream::Positions));
    draw_channels(cfg, &users, &mut substream(cfg.seed, drop, Stream::Channels))
}

/// Uniformly random phases kept fixed; only the covariances are optimized.
pub fn baseline_random_phase(cfg: &ScenarioConfig, ch: &ChannelSet, drop: u64, settings: &DriverSettings) -> Result<RunReport> {
    let phase = PhaseConfig::random(ch.num_elements(), &mut substream(cfg.seed, drop, Stream::BaselinePhase));
    driver::run_fixed_phase(cfg, ch, phase, settings)
}

/// The surfaces removed; only the covariances are optimized.
pub fn baseline_no_irs(cfg: &ScenarioConfig, ch: &ChannelSet, settings: &DriverSettings) -> Result<RunReport> {
    driver::run_fixed_phase(cfg, &ch.without_irs(), PhaseConfig::ones(0), settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Joint optimization.
    Proposed(Compression, CovarianceMode),
    /// Continuous joint optimization, then phases snapped to `b` bits.
    Discrete(Compression, u32),
    RandomPhase(Compression),
    NoIrs(Compression),
}

fn compression_tag(c: Compression) -> &'static str {
    match c {
        Compression::WynerZiv => "wz",
        Compression::PointToPoint => "p2p",
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Variant::Proposed(c, CovarianceMode::Full) => write!(f, "{}", compression_tag(c)),
            Variant::Proposed(c, CovarianceMode::ScalarBeta) => write!(f, "{}-approx", compression_tag(c)),
            Variant::Discrete(c, b) => write!(f, "{}-{b}bit", compression_tag(c)),
            Variant::RandomPhase(c) => write!(f, "{}-random", compression_tag(c)),
            Variant::NoIrs(c) => write!(f, "{}-noirs", compression_tag(c)),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// `wz`, `p2p`, `wz-approx`, `p2p-approx`, `wz-2bit`, `wz-random`,
    /// `wz-noirs`, and the same with the `p2p` prefix.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (head, rest) = s.split_once('-').unwrap_or((s.as_str(), ""));
        let c = match head {
            "wz" => Compression::WynerZiv,
            "p2p" => Compression::PointToPoint,
            _ => return Err(Error::Config(format!("unknown variant {s:?}"))),
        };
        let v = match rest {
            "" => Variant::Proposed(c, CovarianceMode::Full),
            "approx" => Variant::Proposed(c, CovarianceMode::ScalarBeta),
            "random" => Variant::RandomPhase(c),
            "noirs" => Variant::NoIrs(c),
            r => match r.strip_suffix("bit").and_then(|b| b.parse::<u32>().ok()) {
                Some(b) if b >= 1 => Variant::Discrete(c, b),
                _ => return Err(Error::Config(format!("unknown variant {s:?}"))),
            },
        };
        Ok(v)
    }
}

pub fn parse_variants(list: &str) -> Result<Vec<Variant>> {
    let out: Vec<Variant> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config("no variants given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptParameter {
    /// Elements per IRS.
    Elements,
    /// Uniform fronthaul capacity (bits/s/Hz).
    Capacity,
    /// Transmit power (dBm).
    Power,
}

impl fmt::Display for SweptParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweptParameter::Elements => "elements",
            SweptParameter::Capacity => "capacity",
            SweptParameter::Power => "power",
        })
    }
}

impl FromStr for SweptParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "elements" | "ni" | "n_i" => Ok(SweptParameter::Elements),
            "capacity" | "c" => Ok(SweptParameter::Capacity),
            "power" | "p" => Ok(SweptParameter::Power),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

impl SweptParameter {
    pub fn apply(&self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let cfg = match self {
            SweptParameter::Elements => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("element count {value} is not a whole number")));
                }
                ScenarioConfig { elements_per_irs: value as usize, ..cfg.clone() }
            }
            SweptParameter::Capacity => cfg.clone().with_uniform_capacity(value),
            SweptParameter::Power => ScenarioConfig { tx_power_dbm: value, ..cfg.clone() },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweptParameter,
    pub values: Vec<f64>,
    pub drops: usize,
    pub variants: Vec<Variant>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("sweep values must be strictly increasing".into()));
        }
        if self.drops == 0 {
            return Err(Error::Config("sweep needs at least one drop".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("sweep needs at least one variant".into()));
        }
        Ok(())
    }
}

/// One variant on one drop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropRecord {
    pub variant: String,
    pub value: f64,
    pub drop: u64,
    pub rate_bits: f64,
    pub iterations: usize,
    pub min_slack: f64,
    pub monotone: bool,
    pub termination: String,
    pub hypograph_error: f64,
    #[serde(skip)]
    pub millis: f64,
    #[serde(skip)]
    pub accepted_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub variant: String,
    pub value: f64,
    pub mean_rate: f64,
    pub stderr: f64,
    pub mean_iterations: f64,
    #[serde(skip)]
    pub mean_millis: f64,
    pub runs: usize,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct DropFailure {
    pub variant: String,
    pub value: f64,
    pub drop: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub rows: Vec<AggregateRow>,
    pub records: Vec<DropRecord>,
    pub failures: Vec<DropFailure>,
}

impl SweepResult {
    pub fn row(&self, variant: Variant, value: f64) -> Option<&AggregateRow> {
        let name = variant.to_string();
        self.rows.iter().find(|r| r.variant == name && r.value == value)
    }

    pub fn mean(&self, variant: Variant, value: f64) -> Option<f64> {
        self.row(variant, value).map(|r| r.mean_rate)
    }
}

fn is_monotone(rates: &[f64]) -> bool {
    rates.windows(2).all(|w| w[1] >= w[0] - 1e-12)
}

fn record(variant: Variant, value: f64, drop: u64, report: &RunReport) -> DropRecord {
    let accepted_rates = report.accepted_rates();
    DropRecord {
        variant: variant.to_string(),
        value,
        drop,
        rate_bits: report.rate_bits(),
        iterations: report.iterations(),
        min_slack: report.trace.iter().map(|r| r.min_slack).fold(f64::INFINITY, f64::min),
        monotone: is_monotone(&accepted_rates),
        termination: report.termination.to_string(),
        hypograph_error: report.max_hypograph_error(),
        millis: report.total_millis(),
        accepted_rates,
    }
}

/// Joint optimization on drop `drop` with its own initial-phase and rounding streams.
pub fn joint_run(
    cfg: &ScenarioConfig,
    ch: &ChannelSet,
    compression: Compression,
    covariance: CovarianceMode,
    drop: u64,
    settings: &DriverSettings,
) -> Result<RunReport> {
    let cfg = ScenarioConfig { compression_mode: compression, covariance_mode: covariance, ..cfg.clone() };
    let setup = RunSetup::new(&cfg, ch)?;
    let init = driver::initialize(&setup, &mut substream(cfg.seed, drop, Stream::InitialPhase), settings)?;
    Ok(driver::run_from(&setup, init, true, settings, &mut substream(cfg.seed, drop, Stream::Rounding)))
}

/// Runs every variant on one drop. Continuous runs are shared with the
/// discrete variants built on them.
pub fn run_drop(
    cfg: &ScenarioConfig,
    value: f64,
    drop: u64,
    variants: &[Variant],
    settings: &DriverSettings,
) -> Vec<std::result::Result<DropRecord, DropFailure>> {
    let fail = |v: &Variant, e: Error| DropFailure { variant: v.to_string(), value, drop, message: e.to_string() };
    let ch = match draw_drop(cfg, drop) {
        Ok(ch) => ch,
        Err(e) => return variants.iter().map(|v| Err(fail(v, Error::Config(e.to_string())))).collect(),
    };
    let mut continuous: HashMap<Compression, std::result::Result<RunReport, String>> = HashMap::new();
    let mut joint = |c: Compression, cov: CovarianceMode| -> std::result::Result<RunReport, String> {
        let run = || joint_run(cfg, &ch, c, cov, drop, settings);
        let check = |r: RunReport| match &r.termination {
            driver::Termination::SolverFailure(m) => Err(m.clone()),
            _ => Ok(r),
        };
        if cov == CovarianceMode::Full {
            continuous.entry(c).or_insert_with(|| run().map_err(|e| e.to_string()).and_then(check)).clone()
        } else {
            run().map_err(|e| e.to_string()).and_then(check)
        }
    };
    variants
        .iter()
        .map(|&v| {
            let outcome: Result<DropRecord> = match v {
                Variant::Proposed(c, cov) => joint(c, cov).map(|r| record(v, value, drop, &r)).map_err(Error::Config),
                Variant::Discrete(c, bits) => joint(c, CovarianceMode::Full).map_err(Error::Config).and_then(|r| {
                    discrete_record(cfg, &ch, c, bits, &r).map(|(rate, slack)| DropRecord {
                        variant: v.to_string(),
                        value,
                        drop,
                        rate_bits: rate,
                        iterations: r.iterations(),
                        min_slack: slack,
                        monotone: true,
                        termination: r.termination.to_string(),
                        hypograph_error: r.max_hypograph_error(),
                        millis: r.total_millis(),
                        accepted_rates: vec![rate],
                    })
                }),
                Variant::RandomPhase(c) => {
                    let cfg = ScenarioConfig { compression_mode: c, ..cfg.clone() };
                    baseline_random_phase(&cfg, &ch, drop, settings).map(|r| record(v, value, drop, &r))
                }
                Variant::NoIrs(c) => {
                    let cfg = ScenarioConfig { compression_mode: c, ..cfg.clone() };
                    baseline_no_irs(&cfg, &ch, settings).map(|r| record(v, value, drop, &r))
                }
            };
            outcome.map_err(|e| fail(&v, e))
        })
        .collect()
}

/// Rate (bits) and worst true slack after snapping the final phases of `report`.
fn discrete_record(cfg: &ScenarioConfig, ch: &ChannelSet, c: Compression, bits: u32, report: &RunReport) -> Result<(f64, f64)> {
    let cfg = ScenarioConfig { compression_mode: c, ..cfg.clone() };
    let setup = RunSetup::new(&cfg, ch)?;
    let proj = conic::project_discrete(
        &report.state.phase,
        bits,
        &setup.ch,
        &report.state.omega,
        c,
        &setup.caps_nats,
        setup.p,
        1.0,
        1e-6,
    )?;
    Ok((units::nats_to_bits(setup.rate(&proj.phase, &proj.omega)?), proj.min_slack))
}

fn aggregate(spec: &SweepSpec, records: &[DropRecord], failures: &[DropFailure]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &value in &spec.values {
        for v in &spec.variants {
            let name = v.to_string();
            let rs: Vec<&DropRecord> = records.iter().filter(|r| r.variant == name && r.value == value).collect();
            let n = rs.len();
            let mean = |f: &dyn Fn(&DropRecord) -> f64| if n == 0 { f64::NAN } else { rs.iter().map(|r| f(r)).sum::<f64>() / n as f64 };
            let mean_rate = mean(&|r| r.rate_bits);
            let stderr = if n > 1 {
                let var = rs.iter().map(|r| (r.rate_bits - mean_rate).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            rows.push(AggregateRow {
                variant: name.clone(),
                value,
                mean_rate,
                stderr,
                mean_iterations: mean(&|r| r.iterations as f64),
                mean_millis: mean(&|r| r.millis),
                runs: n,
                failures: failures.iter().filter(|f| f.variant == name && f.value == value).count(),
            });
        }
    }
    rows
}

/// Runs `spec.drops` paired drops per sweep value, in parallel over drops.
pub fn sweep(spec: &SweepSpec, cfg: &ScenarioConfig, settings: &DriverSettings) -> Result<SweepResult> {
    spec.validate()?;
    let configs: Vec<(f64, ScenarioConfig)> = spec.values.iter().map(|&v| spec.parameter.apply(cfg, v).map(|c| (v, c))).collect::<Result<_>>()?;
    let jobs: Vec<(f64, &ScenarioConfig, u64)> = configs
        .iter()
        .flat_map(|(v, c)| (0..spec.drops as u64).map(move |d| (*v, c, d)))
        .collect();
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(value, c, drop)| run_drop(c, value, drop, &spec.variants, settings))
        .collect();
    let mut result = SweepResult::default();
    for o in outcomes.into_iter().flatten() {
        match o {
            Ok(r) => result.records.push(r),
            Err(f) => {
                log::warn!("{} at {} drop {}: {}", f.variant, f.value, f.drop, f.message);
                result.failures.push(f);
            }
        }
    }
    result.rows = aggregate(spec, &result.records, &result.failures);
    Ok(result)
}

/// Aggregate CSV with a schema comment line. Wall-clock columns are kept out
/// so identical inputs give identical bytes.
pub fn write_rows_csv<W: Write>(spec: &SweepSpec, rows: &[AggregateRow], mut out: W) -> Result<()> {
    writeln!(out, "# schema: {SCHEMA}; parameter: {}", spec.parameter)?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_csv<W: Write>(records: &[DropRecord], mut out: W) -> Result<()> {
    writeln!(out, "# schema: {SCHEMA}-drops")?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-variant mean wall-clock; separate from the deterministic outputs.
pub fn write_timing_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["variant", "value", "mean_millis"])?;
    for r in rows {
        w.write_record([r.variant.clone(), r.value.to_string(), format!("{:.3}", r.mean_millis)])?;
    }
    w.flush()?;
    Ok(())
}

/// A gnuplot script drawing mean rate with error bars per variant.
pub fn plot_script(spec: &SweepSpec, csv_name: &str) -> String {
    let xlabel = match spec.parameter {
        SweptParameter::Elements => "elements per IRS",
        SweptParameter::Capacity => "fronthaul capacity (bits/s/Hz)",
        SweptParameter::Power => "transmit power (dBm)",
    };
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key left top\nset grid\n");
    s.push_str(&format!("set xlabel '{xlabel}'\nset ylabel 'average sum rate (bits/s/Hz)'\n"));
    s.push_str("set terminal pngcairo size 800,600\n");
    s.push_str(&format!("set output '{}.png'\n", csv_name.trim_end_matches(".csv")));
    let plots: Vec<String> = spec
        .variants
        .iter()
        .map(|v| format!("'{csv_name}' skip 2 using (strcol(1) eq '{v}' ? $2 : 1/0):3:4 with yerrorlines title '{v}'"))
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}

/// Full traces of the given variants for each element count on one drop.
pub fn converge(
    cfg: &ScenarioConfig,
    elements: &[usize],
    drop: u64,
    variants: &[Variant],
    settings: &DriverSettings,
) -> Result<Vec<(usize, Variant, RunReport)>> {
    let mut out = Vec::new();
    for &n in elements {
        let cfg = ScenarioConfig { elements_per_irs: n, ..cfg.clone() };
        cfg.validate()?;
        let ch = draw_drop(&cfg, drop)?;
        for &v in variants {
            let report = match v {
                Variant::Proposed(c, cov) => joint_run(&cfg, &ch, c, cov, drop, settings)?,
                Variant::RandomPhase(c) => baseline_random_phase(&ScenarioConfig { compression_mode: c, ..cfg.clone() }, &ch, drop, settings)?,
                Variant::NoIrs(c) => baseline_no_irs(&ScenarioConfig { compression_mode: c, ..cfg.clone() }, &ch, settings)?,
                Variant::Discrete(..) => return Err(Error::Config(format!("variant {v} has no iteration trace"))),
            };
            out.push((n, v, report));
        }
    }
    Ok(out)
}
