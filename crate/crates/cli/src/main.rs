use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use irs_cran::driver::{DriverSettings, Termination};
use irs_cran::experiment::{self, parse_variants, SweepSpec, SweptParameter, Variant};
use irs_cran::scenario::{default_paper_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "irs-cran", version, about = "IRS-aided C-RAN uplink: joint phase and fronthaul compression design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One drop, full iteration trace per variant.
    Run {
        #[command(flatten)]
        common: Common,
        /// Drop index within the seed.
        #[arg(long, default_value_t = 0)]
        drop: u64,
    },
    /// Mean rate over paired drops for each value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// elements, capacity or power.
        #[arg(long)]
        parameter: SweptParameter,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        drops: usize,
    },
    /// Convergence traces on one drop for a list of element counts.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        elements: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        drop: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the original-size layout instead of the desk-scale one.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    num_users: Option<usize>,
    #[arg(long)]
    antennas_per_rrh: Option<usize>,
    #[arg(long)]
    elements_per_irs: Option<usize>,
    #[arg(long)]
    tx_power_dbm: Option<f64>,
    #[arg(long)]
    noise_power_dbm: Option<f64>,
    /// Uniform fronthaul capacity in bits/s/Hz.
    #[arg(long)]
    capacity: Option<f64>,
    #[arg(long)]
    rician_factor_db: Option<f64>,
    #[arg(long)]
    user_disk_radius: Option<f64>,
    /// Comma-separated: wz, p2p, wz-approx, p2p-approx, wz-2bit, wz-random, wz-noirs, ...
    #[arg(long, default_value = "wz,p2p")]
    variants: String,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    rel_tol: f64,
    /// Worker threads for the drop pool (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Invalid configuration or arguments.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err<E: std::fmt::Display>(e: E) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::from_file(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
            None if self.full_scale => ScenarioConfig::full_scale(),
            None => default_paper_scenario(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.num_users {
            cfg.num_users = v;
        }
        if let Some(v) = self.antennas_per_rrh {
            cfg.antennas_per_rrh = v;
        }
        if let Some(v) = self.elements_per_irs {
            cfg.elements_per_irs = v;
        }
        if let Some(v) = self.tx_power_dbm {
            cfg.tx_power_dbm = v;
        }
        if let Some(v) = self.noise_power_dbm {
            cfg.noise_power_dbm = v;
        }
        if let Some(v) = self.capacity {
            cfg = cfg.with_uniform_capacity(v);
        }
        if let Some(v) = self.rician_factor_db {
            cfg.rician_factor_db = v;
        }
        if let Some(v) = self.user_disk_radius {
            cfg.user_disk_radius = v;
        }
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    fn settings(&self) -> Result<DriverSettings> {
        if self.max_iters == 0 || !(self.rel_tol >= 0.0) {
            return Err(config_err("max-iters must be positive and rel-tol non-negative"));
        }
        Ok(DriverSettings { max_iters: self.max_iters, rel_tol: self.rel_tol, ..Default::default() })
    }

    fn variants(&self) -> Result<Vec<Variant>> {
        parse_variants(&self.variants).map_err(config_err)
    }

    fn prepare(&self) -> Result<()> {
        if self.threads > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(self.threads).build_global().ok();
        }
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// `Ok(true)` when every run finished without a solver failure.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, drop } => {
            let cfg = common.scenario()?;
            let settings = common.settings()?;
            let variants = common.variants()?;
            if let Some(v) = variants.iter().find(|v| matches!(v, Variant::Discrete(..))) {
                return Err(config_err(format!("variant {v} has no iteration trace; use sweep")));
            }
            common.prepare()?;
            let mut clean = true;
            for (n, v, report) in experiment::converge(&cfg, &[cfg.elements_per_irs], drop, &variants, &settings)? {
                if let Termination::SolverFailure(m) = &report.termination {
                    log::error!("{v}: {m}");
                    clean = false;
                }
                println!("{v}\tN_I={n}\t{:.6} bits/s/Hz\t{} iterations\t{}", report.rate_bits(), report.iterations(), report.termination);
                report.write_csv(create(&common.out, &format!("run-{v}.csv"))?)?;
            }
            Ok(clean)
        }
        Command::Sweep { common, parameter, values, drops } => {
            let cfg = common.scenario()?;
            let settings = common.settings()?;
            let spec = SweepSpec { parameter, values, drops, variants: common.variants()? };
            spec.validate().map_err(config_err)?;
            for &v in &spec.values {
                parameter.apply(&cfg, v).map_err(config_err)?;
            }
            common.prepare()?;
            let res = experiment::sweep(&spec, &cfg, &settings)?;
            let stem = format!("sweep-{parameter}");
            experiment::write_rows_csv(&spec, &res.rows, create(&common.out, &format!("{stem}.csv"))?)?;
            experiment::write_records_csv(&res.records, create(&common.out, &format!("{stem}-drops.csv"))?)?;
            experiment::write_timing_csv(&res.rows, create(&common.out, &format!("{stem}-timing.csv"))?)?;
            std::fs::write(common.out.join(format!("{stem}.gp")), experiment::plot_script(&spec, &format!("{stem}.csv")))?;
            for r in &res.rows {
                println!("{}\t{}\t{:.4} ± {:.4}\t{} runs\t{} failures", r.variant, r.value, r.mean_rate, r.stderr, r.runs, r.failures);
            }
            Ok(res.failures.is_empty())
        }
        Command::Converge { common, elements, drop } => {
            let cfg = common.scenario()?;
            let settings = common.settings()?;
            let variants = common.variants()?;
            for &n in &elements {
                ScenarioConfig { elements_per_irs: n, ..cfg.clone() }.validate().map_err(config_err)?;
            }
            common.prepare()?;
            let mut clean = true;
            let mut w = csv::Writer::from_writer(create(&common.out, "converge.csv")?);
            w.write_record(["variant", "elements", "iteration", "rate_bits", "accepted"])?;
            for (n, v, report) in experiment::converge(&cfg, &elements, drop, &variants, &settings)? {
                if let Termination::SolverFailure(m) = &report.termination {
                    log::error!("{v} at N_I={n}: {m}");
                    clean = false;
                }
                for row in &report.trace {
                    w.write_record([v.to_string(), n.to_string(), row.iteration.to_string(), row.rate_bits.to_string(), row.accepted.to_string()])?;
                }
                println!("{v}\tN_I={n}\t{:.6} bits/s/Hz\t{} iterations", report.rate_bits(), report.iterations());
            }
            w.flush()?;
            Ok(clean)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one run hit a solver failure; partial results were written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<irs_cran::Error>() {
                _ if e.is::<ConfigError>() => 2,
                Some(irs_cran::Error::Config(_)) => 2,
                Some(irs_cran::Error::Io(_)) | None => 1,
                Some(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}
