use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rmt_crisis::evaluation::{RspMode, SharpeConvention};
use rmt_crisis::run::{self, ConfigFile, DataSource, Preset, RunConfig};
use rmt_crisis::Error;

#[derive(Parser)]
#[command(name = "rmt-crisis", version, about = "Spectral crisis indicators, calibration and backtest")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset into the run directory.
    Generate,
    /// Compute indicators, fit danger zones and write scatter files.
    Calibrate,
    /// Trade from the stored calibration and write the equity curve and report.
    Backtest {
        /// Run calibration first.
        #[arg(long)]
        calibrate: bool,
    },
    /// Simulate random same-proportion paths against the stored backtest.
    Rsp,
    /// Rebuild report.json and report.txt from stored artifacts.
    Report,
    /// Every stage in order.
    Run,
}

#[derive(Args)]
struct Options {
    /// TOML or JSON config file, or a run_manifest.json to repeat a run.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Dataset manifest to load instead of a synthetic scenario.
    #[arg(long, global = true, conflicts_with = "scenario_seed")]
    manifest: Option<PathBuf>,
    /// Seed for the bundled crash scenario.
    #[arg(long, global = true)]
    scenario_seed: Option<u64>,
    /// Parameter group: group1, group2 or group3.
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Drawdown threshold 𝒯 as a fraction.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Red-flag sensitivity 𝒮 in days out of the lookback.
    #[arg(long, global = true)]
    sensitivity: Option<u32>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true)]
    lookback: Option<usize>,
    /// Days between a decision and its execution.
    #[arg(long, global = true)]
    lag: Option<usize>,
    /// paper or daily.
    #[arg(long, global = true)]
    sharpe_convention: Option<SharpeConvention>,
    #[arg(long, global = true)]
    rsp_paths: Option<usize>,
    #[arg(long, global = true)]
    rsp_seed: Option<u64>,
    /// iid or permutation.
    #[arg(long, global = true)]
    rsp_mode: Option<RspMode>,
    #[arg(long, global = true)]
    replications: Option<usize>,
    #[arg(long, global = true)]
    reference_seed: Option<u64>,
    /// Write per-date eigenvalues during calibration.
    #[arg(long, global = true)]
    dump_spectra: bool,
    /// Write per-path RSP metrics.
    #[arg(long, global = true)]
    path_metrics: bool,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Options {
    fn resolve(&self) -> rmt_crisis::Result<RunConfig> {
        let mut f = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        if let Some(p) = &self.manifest {
            f.data = Some(DataSource::Manifest { path: p.clone() });
        }
        if let Some(seed) = self.scenario_seed {
            f.data = Some(DataSource::Crash { seed });
        }
        if self.preset.is_some() {
            f.preset = self.preset;
            f.threshold = None;
            f.sensitivity = None;
        }
        f.output_dir = self.output.clone().or(f.output_dir.take());
        f.threshold = self.threshold.or(f.threshold.take());
        f.sensitivity = self.sensitivity.or(f.sensitivity.take());
        f.horizon = self.horizon.or(f.horizon.take());
        f.lookback = self.lookback.or(f.lookback.take());
        f.execution_lag_days = self.lag.or(f.execution_lag_days.take());
        f.sharpe_convention = self.sharpe_convention.or(f.sharpe_convention.take());
        if self.dump_spectra {
            f.dump_spectra = Some(true);
        }
        if self.path_metrics {
            f.write_path_metrics = Some(true);
        }
        if self.rsp_paths.is_some() || self.rsp_seed.is_some() || self.rsp_mode.is_some() {
            let rsp = f.rsp.get_or_insert_with(Default::default);
            set(&mut rsp.n_paths, self.rsp_paths);
            set(&mut rsp.seed, self.rsp_seed);
            set(&mut rsp.mode, self.rsp_mode);
        }
        if self.replications.is_some() || self.reference_seed.is_some() {
            let refs = f.references.get_or_insert_with(Default::default);
            set(&mut refs.replications, self.replications);
            set(&mut refs.seed, self.reference_seed);
        }
        f.resolve()
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn execute(cli: &Cli) -> rmt_crisis::Result<()> {
    run::configure_threads(cli.opts.threads)?;
    let cfg = cli.opts.resolve()?;
    match cli.command {
        Command::Generate => {
            let manifest = run::cmd_generate(&cfg)?;
            println!("dataset written to {}", manifest.display());
        }
        Command::Calibrate => {
            let report = run::cmd_calibrate(&cfg)?;
            println!(
                "{} of {} indicators calibrated (T = {}, K = {})",
                report.calibrated_count(),
                report.indicators.len(),
                report.window,
                report.calibration_length
            );
        }
        Command::Backtest { calibrate } => {
            print!("{}", run::cmd_backtest(&cfg, calibrate)?.summary_text());
        }
        Command::Rsp => {
            run::cmd_rsp(&cfg)?;
            print!("{}", run::cmd_report(&cfg)?.summary_text());
        }
        Command::Report => print!("{}", run::cmd_report(&cfg)?.summary_text()),
        Command::Run => print!("{}", run::cmd_run(&cfg)?.summary_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.opts.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if Error::is_user_error(&e) { 1 } else { 2 })
        }
    }
}
