//! `betacpd` command-line front end.
//!
//! Every subcommand reads flags and/or a TOML experiment config, calls one
//! library operation and writes CSV/JSON artefacts into the output
//! directory (`--out`, else `$BETACPD_OUT_DIR`, else `./betacpd-out`).
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 for
//! numerical failures.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use betacpd::experiments::{self, io as series_io};
use betacpd::inference::{self, FitOptions};
use betacpd::monitor::{self, MonitorPlan};
use betacpd::stat;
use betacpd::{Error, ExogOrder, ExperimentConfig, ExperimentKind, Result};
use clap::{Args, Parser, Subcommand};

const OUT_ENV: &str = "BETACPD_OUT_DIR";

#[derive(Parser)]
#[command(name = "betacpd", version, about = "Beta AR models and sequential change-point monitoring")]
struct Cli {
    /// Output directory (overrides $BETACPD_OUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Seed {
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one series from the model in a config; writes series.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Number of observations to record.
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        seed: Seed,
    },
    /// Conditional maximum-likelihood fit; writes fit.json.
    Fit {
        /// Series CSV (`x` or `value` column, optional `w`).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        p: usize,
        /// Exogenous order: `none` or the largest lag q.
        #[arg(long, default_value = "none")]
        q: ExogOrder,
    },
    /// AIC/MAE sweep over (p, q); writes sweep.csv and sweep.json.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "none")]
        q: Vec<ExogOrder>,
    },
    /// Quantile grid and long-run covariance of a series; writes gamma.json.
    Gamma {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = stat::DEFAULT_T_STAR)]
        t_star: usize,
    },
    /// Threshold table from a simulated reference; writes report.json and thresholds.csv.
    Threshold {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        seed: Seed,
        /// Cap replication counts for quick runs.
        #[arg(long)]
        fast: bool,
    },
    /// Calibrate one (gamma, alpha) monitor on a training series; writes plan.json.
    Calibrate {
        /// Training series CSV; its length is m.
        #[arg(long)]
        input: PathBuf,
        /// Config with a [monitoring] section.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        seed: Seed,
    },
    /// Run a monitor plan over `index,value` records (`-` reads stdin).
    Monitor {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// True change index, if known, to report the delay.
        #[arg(long)]
        true_change: Option<usize>,
    },
    /// Run an experiment config end to end.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's kind.
        #[arg(long)]
        kind: Option<ExperimentKind>,
        #[command(flatten)]
        seed: Seed,
        #[arg(long)]
        fast: bool,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("betacpd-out"))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    println!("{}", path.display());
    Ok(())
}

fn load_config(path: &Path, kind: Option<ExperimentKind>, fast: bool) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(kind) = kind {
        cfg.kind = kind;
    }
    if fast {
        cfg.apply_fast_profile();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let out = out_dir(cli.out);
    match cli.command {
        Command::Simulate { config, n, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let series = experiments::simulate_series(&cfg, n, seed.seed)?;
            write(&out, "series.csv", &series_io::series_to_csv(&series))
        }
        Command::Fit { input, p, q } => {
            let data = series_io::read_series(&input)?;
            let fit = inference::fit(p, q, &data, &FitOptions::default())?;
            write(&out, "fit.json", &serde_json::to_string_pretty(&fit)?)
        }
        Command::Sweep { input, p, q } => {
            let data = series_io::read_series(&input)?;
            let table = inference::model_selection_sweep(&data, &p, &q, &FitOptions::default())?;
            write(&out, "sweep.csv", &table.to_csv())?;
            write(&out, "sweep.json", &serde_json::to_string_pretty(&table)?)
        }
        Command::Gamma { input, d, t_star } => {
            let data = series_io::read_series(&input)?;
            let grid = stat::make_quantile_grid(&data.x, d)?;
            let kernel = stat::estimate_gamma(&data.x, &grid, t_star)?;
            let body = serde_json::json!({ "grid": grid, "kernel": kernel });
            write(&out, "gamma.json", &serde_json::to_string_pretty(&body)?)
        }
        Command::Threshold { config, seed, fast } => {
            let cfg = load_config(&config, None, fast)?;
            let report = experiments::ExperimentReport::ThresholdTable(experiments::run_threshold_table(&cfg, seed.seed)?);
            write_report(&out, &report)
        }
        Command::Calibrate { input, config, gamma, alpha, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            let mon = cfg.monitoring.as_mut().ok_or_else(|| Error::Config("[monitoring] is required".into()))?;
            mon.gammas = vec![gamma];
            mon.alphas = vec![alpha];
            cfg.validate()?;
            let training = series_io::read_series(&input)?;
            let cal = experiments::config_calibration(&cfg, &training.x, seed.seed)?;
            let plan = cal.plan(&training.x, gamma, alpha)?;
            write(&out, "plan.json", &plan.to_json()?)
        }
        Command::Monitor { plan, input, true_change } => {
            let plan_text = std::fs::read_to_string(&plan)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", plan.display())))?;
            let plan = MonitorPlan::from_json(&plan_text)?;
            let text = if input.as_os_str() == "-" {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s)?;
                s
            } else {
                std::fs::read_to_string(&input)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?
            };
            let records = monitor::parse_stream(&text)?;
            let report = monitor::monitor_records(&plan, &records, true_change)?;
            let json = serde_json::to_string_pretty(&report)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("report.json"), &json)?;
            std::fs::write(out.join("trajectory.csv"), report.trajectory_csv(plan.m))?;
            println!("{json}");
            Ok(())
        }
        Command::Experiment { config, kind, seed, fast } => {
            let cfg = load_config(&config, kind, fast)?;
            let report = experiments::run_experiment(&cfg, seed.seed)?;
            write_report(&out, &report)
        }
    }
}

fn write_report(dir: &Path, report: &experiments::ExperimentReport) -> Result<()> {
    for path in report.write_artifacts(dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
