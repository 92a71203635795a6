//! Run configuration and the file-based pipeline stages behind the command line.
//!
//! Every stage reads and writes fixed filenames under the run directory and
//! records what it produced in `run_manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{forward_mdd, CalibrationReport, HorizonConfig, DEFAULT_HORIZON};
use crate::error::{Error, Result};
use crate::evaluation::{
    compare, curve_metrics, rsp_paths, summarize_rsp, write_fan_chart, write_path_metrics,
    PerformanceReport, RspConfig, RspSummary, SharpeConvention,
};
use crate::indicators::{write_spectrum_dump, IndicatorPanel, ReferenceConfig, ReferenceSet};
use crate::market_data::{load_dataset, write_dataset, Dataset, MANIFEST_FILE};
use crate::pipeline;
use crate::strategy::{run_backtest, EquityCurve, StrategyParams, DEFAULT_LOOKBACK};
use crate::synthetic::{generate, ScenarioSpec};

pub const DATASET_DIR: &str = "dataset";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const REFERENCES_FILE: &str = "references.json";
pub const INDICATORS_FILE: &str = "indicators.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const SCATTER_DIR: &str = "scatter";
pub const SPECTRA_DIR: &str = "spectra";
pub const CURVE_FILE: &str = "equity_curve.csv";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const RSP_SUMMARY_FILE: &str = "rsp_summary.json";
pub const RSP_PATHS_FILE: &str = "rsp_paths.csv";
pub const FAN_CHART_FILE: &str = "fan_chart.csv";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// Published parameter groups `(𝒯, 𝒮)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Group1,
    Group2,
    Group3,
}

impl Preset {
    pub fn params(self) -> (f64, u32) {
        match self {
            Preset::Group1 => (0.20, 75),
            Preset::Group2 => (0.15, 80),
            Preset::Group3 => (0.10, 70),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group1" => Ok(Preset::Group1),
            "group2" => Ok(Preset::Group2),
            "group3" => Ok(Preset::Group3),
            _ => Err(Error::Config(format!("unknown preset `{s}` (group1, group2, group3)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A dataset manifest on disk, relative to the config file.
    Manifest { path: PathBuf },
    /// The bundled crash scenario with the given seed.
    Crash { seed: u64 },
    Scenario { spec: ScenarioSpec },
}

/// Config file contents; unset fields fall back to the preset, then to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub data: Option<DataSource>,
    pub output_dir: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub threshold: Option<f64>,
    pub sensitivity: Option<u32>,
    pub horizon: Option<usize>,
    pub lookback: Option<usize>,
    pub execution_lag_days: Option<usize>,
    pub sharpe_convention: Option<SharpeConvention>,
    pub references: Option<ReferenceConfig>,
    pub rsp: Option<RspConfig>,
    pub dump_spectra: Option<bool>,
    pub write_path_metrics: Option<bool>,
}

/// Fully resolved settings of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub output_dir: PathBuf,
    pub threshold: f64,
    pub sensitivity: u32,
    pub horizon: usize,
    pub lookback: usize,
    pub execution_lag_days: usize,
    pub sharpe_convention: SharpeConvention,
    pub references: ReferenceConfig,
    pub rsp: RspConfig,
    pub dump_spectra: bool,
    pub write_path_metrics: bool,
}

impl ConfigFile {
    /// Read TOML or JSON by extension. A run manifest is accepted too, in which
    /// case its recorded configuration is used.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let mut cfg: ConfigFile = if is_json {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
            match value.get("config") {
                Some(inner) if value.get("version").is_some() => {
                    let rc: RunConfig = serde_json::from_value(inner.clone())
                        .map_err(|e| Error::json(path, e))?;
                    return Ok(rc.into());
                }
                _ => serde_json::from_value(value).map_err(|e| Error::json(path, e))?,
            }
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(DataSource::Manifest { path: p }) = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let (pt, ps) = self.preset.unwrap_or(Preset::Group1).params();
        let rc = RunConfig {
            data: self
                .data
                .ok_or_else(|| Error::Config("no data source given (config `data` or --manifest / --scenario-seed)".into()))?,
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("run")),
            threshold: self.threshold.unwrap_or(pt),
            sensitivity: self.sensitivity.unwrap_or(ps),
            horizon: self.horizon.unwrap_or(DEFAULT_HORIZON),
            lookback: self.lookback.unwrap_or(DEFAULT_LOOKBACK),
            execution_lag_days: self.execution_lag_days.unwrap_or(0),
            sharpe_convention: self.sharpe_convention.unwrap_or_default(),
            references: self.references.unwrap_or_default(),
            rsp: self.rsp.unwrap_or_default(),
            dump_spectra: self.dump_spectra.unwrap_or(false),
            write_path_metrics: self.write_path_metrics.unwrap_or(false),
        };
        rc.validate()?;
        Ok(rc)
    }
}

impl From<RunConfig> for ConfigFile {
    fn from(rc: RunConfig) -> Self {
        ConfigFile {
            data: Some(rc.data),
            output_dir: Some(rc.output_dir),
            preset: None,
            threshold: Some(rc.threshold),
            sensitivity: Some(rc.sensitivity),
            horizon: Some(rc.horizon),
            lookback: Some(rc.lookback),
            execution_lag_days: Some(rc.execution_lag_days),
            sharpe_convention: Some(rc.sharpe_convention),
            references: Some(rc.references),
            rsp: Some(rc.rsp),
            dump_spectra: Some(rc.dump_spectra),
            write_path_metrics: Some(rc.write_path_metrics),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        HorizonConfig::new(self.horizon, self.threshold).map_err(config_err)?;
        self.strategy_params().map_err(config_err)?;
        if self.references.replications == 0 || self.references.bins == 0 {
            return Err(Error::Config("reference replications and bins must be >= 1".into()));
        }
        if self.rsp.n_paths == 0 {
            return Err(Error::Config("rsp.n_paths must be >= 1".into()));
        }
        if let DataSource::Scenario { spec } = &self.data {
            spec.validate().map_err(config_err)?;
        }
        Ok(())
    }

    pub fn horizon_config(&self) -> Result<HorizonConfig> {
        HorizonConfig::new(self.horizon, self.threshold)
    }

    pub fn strategy_params(&self) -> Result<StrategyParams> {
        let p = StrategyParams {
            threshold: self.threshold,
            sensitivity: self.sensitivity,
            lookback: self.lookback,
            horizon: self.horizon,
            execution_lag_days: self.execution_lag_days,
        };
        p.validate()?;
        Ok(p)
    }

    /// sha256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) => Error::Config(m),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Output files relative to the run directory, with their sha256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub facts: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    fn new(cfg: &RunConfig) -> Self {
        let mut seeds = BTreeMap::new();
        seeds.insert("references".to_string(), cfg.references.seed);
        seeds.insert("references_r3".to_string(), cfg.references.r3_seed());
        seeds.insert("rsp".to_string(), cfg.rsp.seed);
        match &cfg.data {
            DataSource::Crash { seed } => {
                seeds.insert("scenario".into(), *seed);
            }
            DataSource::Scenario { spec } => {
                seeds.insert("scenario".into(), spec.seed);
            }
            DataSource::Manifest { .. } => {}
        }
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            seeds,
            config: cfg.clone(),
            stages: BTreeMap::new(),
        }
    }

    /// Record `outputs` for `stage`, keeping earlier stages of the same config.
    fn record(
        cfg: &RunConfig,
        stage: &str,
        outputs: &[PathBuf],
        facts: BTreeMap<String, serde_json::Value>,
    ) -> Result<()> {
        let path = cfg.path(RUN_MANIFEST_FILE);
        let mut manifest = match read_json::<RunManifest>(&path) {
            Ok(m) if m.config_hash == cfg.hash() => m,
            _ => RunManifest::new(cfg),
        };
        let mut hashes = BTreeMap::new();
        for out in outputs {
            let bytes = fs::read(out).map_err(|e| Error::io(out, e))?;
            let rel = out.strip_prefix(&cfg.output_dir).unwrap_or(out);
            hashes.insert(
                rel.to_string_lossy().replace('\\', "/"),
                hex::encode(Sha256::digest(&bytes)),
            );
        }
        manifest.stages.insert(stage.to_string(), StageRecord { outputs: hashes, facts });
        write_json(&path, &manifest)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require(path: PathBuf, stage: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        log::error!("{} is missing; run `{stage}` first", path.display());
        Err(Error::MissingArtifact(path))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Limit rayon's global pool; results do not depend on the thread count.
pub fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Write the synthetic dataset (and its scenario) into the run directory.
pub fn cmd_generate(cfg: &RunConfig) -> Result<PathBuf> {
    let spec = match &cfg.data {
        DataSource::Crash { seed } => ScenarioSpec::crash(*seed),
        DataSource::Scenario { spec } => spec.clone(),
        DataSource::Manifest { .. } => {
            return Err(Error::Config(
                "generate needs a synthetic data source (crash or scenario)".into(),
            ))
        }
    };
    ensure_dir(&cfg.output_dir)?;
    let ds = generate(&spec)?;
    let dir = cfg.path(DATASET_DIR);
    ensure_dir(&dir)?;
    let manifest = write_dataset(&dir, &ds)?;
    let scenario = cfg.path(SCENARIO_FILE);
    write_json(&scenario, &spec)?;
    let mut outputs: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&dir, err)))
        .collect::<Result<_>>()?;
    outputs.sort();
    outputs.push(scenario);
    RunManifest::record(cfg, "generate", &outputs, BTreeMap::new())?;
    log::info!("wrote {} dates x {} assets to {}", ds.n_dates(), ds.n_assets(), dir.display());
    Ok(manifest)
}

/// Load the configured dataset; synthetic sources must have been generated.
pub fn load_run_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = match &cfg.data {
        DataSource::Manifest { path } => path.clone(),
        _ => require(cfg.path(DATASET_DIR).join(MANIFEST_FILE), "generate")?,
    };
    let (ds, report) = load_dataset(&path)?;
    if report.total_fills() > 0 || report.dropped_dates > 0 {
        log::warn!(
            "dataset: {} gaps forward-filled, {} dates dropped by calendar intersection",
            report.total_fills(),
            report.dropped_dates
        );
    }
    Ok(ds)
}

/// One row per anchor with a defined forward drawdown.
fn write_scatter(
    path: &Path,
    panel: &IndicatorPanel,
    k: usize,
    prices: &[f64],
    report: &CalibrationReport,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["date", "value", "forward_mdd", "sample"])
        .map_err(|e| Error::csv(path, e))?;
    let last = prices.len().saturating_sub(report.horizon + 1);
    for t0 in panel.first_anchor..=last.min(panel.first_anchor + panel.len() - 1) {
        let mdd = forward_mdd(prices, t0, report.horizon)?;
        let sample = if t0 <= report.last_anchor { "in" } else { "out" };
        w.write_record([
            panel.dates[t0 - panel.first_anchor].to_string(),
            panel.value(k, t0).to_string(),
            mdd.to_string(),
            sample.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<CalibrationReport> {
    let ds = load_run_dataset(cfg)?;
    ensure_dir(&cfg.output_dir)?;
    let cal = pipeline::calibrate(&ds, cfg.horizon_config()?, &cfg.references)?;
    let panel = cal.panel();
    let mut outputs = vec![
        cfg.path(REFERENCES_FILE),
        cfg.path(INDICATORS_FILE),
        cfg.path(CALIBRATION_FILE),
    ];
    write_json(&outputs[0], &cal.references)?;
    panel.write_csv(&outputs[1])?;
    write_json(&outputs[2], &cal.report)?;
    let scatter = cfg.path(SCATTER_DIR);
    ensure_dir(&scatter)?;
    for (k, s) in panel.series.iter().enumerate() {
        let p = scatter.join(format!("{}.csv", s.id));
        write_scatter(&p, panel, k, &ds.index_price, &cal.report)?;
        outputs.push(p);
    }
    if cfg.dump_spectra {
        let dir = cfg.path(SPECTRA_DIR);
        ensure_dir(&dir)?;
        write_spectrum_dump(&dir, &ds, &cal.spectra, cal.spec.first_anchor())?;
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        files.sort();
        outputs.extend(files);
    }
    let mut facts = BTreeMap::new();
    facts.insert("window".into(), cal.spec.t.into());
    facts.insert("calibration_length".into(), cal.calibration_length.into());
    facts.insert("calibrated".into(), cal.report.calibrated_count().into());
    facts.insert("rho".into(), cal.references.rho.into());
    RunManifest::record(cfg, "calibrate", &outputs, facts)?;
    Ok(cal.report)
}

fn load_calibration(cfg: &RunConfig, ds: &Dataset) -> Result<(IndicatorPanel, CalibrationReport)> {
    let report: CalibrationReport = read_json(&require(cfg.path(CALIBRATION_FILE), "calibrate")?)?;
    if report.threshold != cfg.threshold || report.horizon != cfg.horizon {
        return Err(Error::Config(format!(
            "calibration was run with threshold {} and horizon {}; rerun `calibrate`",
            report.threshold, report.horizon
        )));
    }
    let _refs: ReferenceSet = read_json(&require(cfg.path(REFERENCES_FILE), "calibrate")?)?;
    let panel = IndicatorPanel::read_csv(&require(cfg.path(INDICATORS_FILE), "calibrate")?, ds)?;
    Ok((panel, report))
}

fn write_report(cfg: &RunConfig, report: &PerformanceReport) -> Result<Vec<PathBuf>> {
    let json = cfg.path(REPORT_FILE);
    let text = cfg.path(REPORT_TEXT_FILE);
    write_json(&json, report)?;
    fs::write(&text, report.summary_text()).map_err(|e| Error::io(&text, e))?;
    Ok(vec![json, text])
}

/// Backtest from the stored calibration, or calibrate first when `calibrate` is set.
pub fn cmd_backtest(cfg: &RunConfig, calibrate: bool) -> Result<PerformanceReport> {
    if calibrate {
        cmd_calibrate(cfg)?;
    }
    let ds = load_run_dataset(cfg)?;
    let (panel, report) = load_calibration(cfg, &ds)?;
    let params = cfg.strategy_params()?;
    let start = report.last_anchor + report.horizon;
    let curve = run_backtest(&ds, &panel, &report.zones(), &params, start)?;
    let curve_path = cfg.path(CURVE_FILE);
    curve.write_csv(&curve_path)?;
    let (pa, pp) = curve_metrics(&curve, cfg.sharpe_convention)?;
    let perf = compare(&curve, pa, pp, cfg.sharpe_convention, None);
    let mut outputs = vec![curve_path];
    outputs.extend(write_report(cfg, &perf)?);
    let counts = curve.order_counts();
    let mut facts = BTreeMap::new();
    facts.insert("buy".into(), counts.buy.into());
    facts.insert("stay".into(), counts.stay.into());
    facts.insert("sell".into(), counts.sell.into());
    RunManifest::record(cfg, "backtest", &outputs, facts)?;
    Ok(perf)
}

fn load_curve(cfg: &RunConfig) -> Result<EquityCurve> {
    let path = require(cfg.path(CURVE_FILE), "backtest")?;
    let report: CalibrationReport = read_json(&require(cfg.path(CALIBRATION_FILE), "calibrate")?)?;
    EquityCurve::read_csv(&path, report.last_anchor + report.horizon, cfg.execution_lag_days)
}

pub fn cmd_rsp(cfg: &RunConfig) -> Result<RspSummary> {
    let curve = load_curve(cfg)?;
    let (pa, _) = curve_metrics(&curve, cfg.sharpe_convention)?;
    let paths = rsp_paths(&curve, &cfg.rsp, cfg.sharpe_convention)?;
    let summary = summarize_rsp(&pa, &paths, &curve.orders, &cfg.rsp);
    let summary_path = cfg.path(RSP_SUMMARY_FILE);
    write_json(&summary_path, &summary)?;
    let fan = cfg.path(FAN_CHART_FILE);
    write_fan_chart(&fan, &curve, &paths)?;
    let mut outputs = vec![summary_path, fan];
    if cfg.write_path_metrics {
        let p = cfg.path(RSP_PATHS_FILE);
        write_path_metrics(&p, &paths)?;
        outputs.push(p);
    }
    RunManifest::record(cfg, "rsp", &outputs, BTreeMap::new())?;
    Ok(summary)
}

/// Rebuild `report.json` and `report.txt` from the stored curve and random-path summary.
pub fn cmd_report(cfg: &RunConfig) -> Result<PerformanceReport> {
    let curve = load_curve(cfg)?;
    let (pa, pp) = curve_metrics(&curve, cfg.sharpe_convention)?;
    let pr_path = cfg.path(RSP_SUMMARY_FILE);
    let pr = if pr_path.exists() {
        Some(read_json::<RspSummary>(&pr_path)?)
    } else {
        None
    };
    let report = compare(&curve, pa, pp, cfg.sharpe_convention, pr);
    let outputs = write_report(cfg, &report)?;
    RunManifest::record(cfg, "report", &outputs, BTreeMap::new())?;
    Ok(report)
}

/// All stages in order.
pub fn cmd_run(cfg: &RunConfig) -> Result<PerformanceReport> {
    if !matches!(cfg.data, DataSource::Manifest { .. }) {
        cmd_generate(cfg)?;
    }
    cmd_calibrate(cfg)?;
    cmd_backtest(cfg, false)?;
    cmd_rsp(cfg)?;
    cmd_report(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_groups() {
        assert_eq!(Preset::Group1.params(), (0.20, 75));
        assert_eq!(Preset::Group2.params(), (0.15, 80));
        assert_eq!(Preset::Group3.params(), (0.10, 70));
        assert!("group4".parse::<Preset>().is_err());
    }

    #[test]
    fn resolution_order() {
        let base = ConfigFile {
            data: Some(DataSource::Crash { seed: 1 }),
            preset: Some(Preset::Group3),
            ..Default::default()
        };
        let rc = base.clone().resolve().unwrap();
        assert_eq!((rc.threshold, rc.sensitivity), (0.10, 70));
        let rc = ConfigFile {
            sensitivity: Some(90),
            ..base
        }
        .resolve()
        .unwrap();
        assert_eq!((rc.threshold, rc.sensitivity), (0.10, 90));
        assert!(ConfigFile::default().resolve().is_err());
    }

    #[test]
    fn toml_parses_and_hash_is_stable() {
        let text = r#"
            output_dir = "out"
            preset = "group2"
            [data]
            kind = "crash"
            seed = 3
            [rsp]
            n_paths = 100
        "#;
        let cfg: ConfigFile = toml::from_str(text).unwrap();
        let rc = cfg.resolve().unwrap();
        assert_eq!(rc.rsp.n_paths, 100);
        assert_eq!(rc.sensitivity, 80);
        assert_eq!(rc.hash(), rc.clone().hash());
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&rc).unwrap()).unwrap();
        assert_eq!(back, rc);
        assert!(toml::from_str::<ConfigFile>("bogus = 1").is_err());
    }
}
