mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmt_crisis::calibration::{calibration_length, find_danger_zone, forward_mdd, CalibrationPoint, HorizonConfig};
use rmt_crisis::evaluation::{
    curve_metrics, full_period_mdd, rsp_paths, summarize_rsp, RspConfig, SharpeConvention,
};
use rmt_crisis::indicators::ReferenceConfig;
use rmt_crisis::market_data::{write_dataset, MANIFEST_FILE};
use rmt_crisis::pipeline::{backtest, calibrate};
use rmt_crisis::references::{
    marchenko_pastur_histogram, hellinger, simulate_pool, ReferenceKind, SpectralHistogram,
};
use rmt_crisis::run::{self, ConfigFile, DataSource, Preset, RunConfig};
use rmt_crisis::spectra::{build_a, build_weighted, matrix_eigenvalues, spectral_stat, svd_eigenvalues, window_length, SpectralStat, Weighting, WindowSpec};
use rmt_crisis::strategy::{decide, EquityCurve, OrderKind, StrategyParams};
use rmt_crisis::synthetic::{generate, Regime, ScenarioSpec};
use rmt_crisis::references::Tail;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(label: &str, elapsed: Duration, limit: Duration) -> (bool, String) {
    (
        elapsed <= limit,
        format!("{label} {:.1}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()),
    )
}

fn svd_vs_gram() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.random_range(1..=50);
        let t = rng.random_range(n + 1..=60);
        let m = common::gaussian_matrix(&mut rng, n, t);
        let fast = matrix_eigenvalues(&m).unwrap().eigenvalues;
        let slow = common::gram_eigenvalues(&m);
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    let (fast_enough, timing) = within("runtime", start.elapsed(), Duration::from_secs(30));
    outcome(
        worst <= 1e-8 && fast_enough,
        format!("max relative error {worst:.2e} (tol 1e-8) on 500 matrices; {timing}"),
    )
}

fn correlation_trace() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut windows = 0;
    while windows < 200 {
        let n = rng.random_range(2..=40);
        let spec = ScenarioSpec {
            n_assets: n,
            regimes: vec![Regime {
                length: 3 * window_length(n) + 10,
                volatility: rng.random_range(0.002..0.03),
                rho: rng.random_range(0.0..0.9),
                tail: if rng.random_bool(0.5) { Tail::Gaussian } else { Tail::Student3 },
                drift: rng.random_range(-0.3..0.3),
            }],
            seed: rng.random(),
            index_base: 1000.0,
            riskless_rate: 0.01,
            start_date: chrono::NaiveDate::from_ymd_opt(2012, 1, 2).unwrap(),
        };
        let ds = generate(&spec).unwrap();
        let returns = ds.returns().unwrap();
        let w = WindowSpec::for_assets(n).unwrap();
        for _ in 0..10 {
            let t0 = rng.random_range(w.first_anchor()..ds.n_dates());
            let a = build_a(&returns, t0, w).unwrap();
            let b0 = build_weighted(&a, Weighting::None, &ds, t0).unwrap();
            let trace = spectral_stat(&svd_eigenvalues(&b0).unwrap(), SpectralStat::Trace);
            worst = worst.max((trace - n as f64).abs());
            windows += 1;
        }
    }
    outcome(
        worst <= 1e-9,
        format!("max |trace - N| {worst:.2e} (tol 1e-9) over {windows} windows"),
    )
}

fn marchenko_pastur_convergence() -> Outcome {
    let start = Instant::now();
    let (n, t) = (100, 110);
    let pool = simulate_pool(ReferenceKind::R2, n, t, 0.0, 200, 20_170_601).unwrap();
    let edges = SpectralHistogram::edges_for_pool(&pool, 100).unwrap();
    let simulated = SpectralHistogram::from_values(&pool, &edges).unwrap();
    let analytic = marchenko_pastur_histogram(n, t, 1.0, &edges).unwrap();
    let d = hellinger(&simulated, &analytic).unwrap();
    let (fast_enough, timing) = within("runtime", start.elapsed(), Duration::from_secs(120));
    outcome(
        d < 0.1 && fast_enough,
        format!("Hellinger(R2 rho=0, R1) = {d:.4} (limit 0.1); {timing}"),
    )
}

fn random_walk(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut p = 100.0;
    (0..len)
        .map(|_| {
            p *= (rng.random_range(-0.05..0.05f64)).exp();
            p
        })
        .collect()
}

fn mdd_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let len = rng.random_range(2..=300);
        let prices = random_walk(&mut rng, len);
        if full_period_mdd(&prices) != common::brute_mdd(&prices) {
            mismatches += 1;
        }
        let h = rng.random_range(1..len);
        let t0 = rng.random_range(0..len - h);
        if forward_mdd(&prices, t0, h).unwrap() != common::brute_mdd(&prices[t0..=t0 + h]) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches against the pairwise oracle on 1000 series (exact)"),
    )
}

fn danger_zone_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut count_errors = 0;
    let mut worst_width = 0.0f64;
    let mut sets = 0;
    while sets < 200 {
        let len = rng.random_range(1..=500);
        let scale = 10f64.powi(rng.random_range(-3..=2));
        let points: Vec<CalibrationPoint> = (0..len)
            .map(|anchor| CalibrationPoint {
                anchor,
                value: scale * rng.random_range(-1.0..1.0f64),
                forward_mdd: rng.random_range(0.0..0.3),
            })
            .collect();
        let Ok(zone) = find_danger_zone(&points, 0.1) else {
            continue;
        };
        sets += 1;
        let values: Vec<f64> = points.iter().map(|p| p.value).collect();
        let survivor: Vec<bool> = points.iter().map(|p| p.forward_mdd >= 0.1).collect();
        let clip = (
            common::oracle_percentile(&values, 1.0),
            common::oracle_percentile(&values, 99.0),
        );
        let width = 0.15 * (clip.1 - clip.0);
        if zone.support_count != common::brute_zone_count(&values, &survivor, clip, width) {
            count_errors += 1;
        }
        worst_width = worst_width.max(((zone.hi - zone.lo) - width).abs());
    }
    outcome(
        count_errors == 0 && worst_width <= 1e-12,
        format!(
            "{count_errors} of {sets} sets below the brute-force optimum; max width error {worst_width:.2e} (tol 1e-12)"
        ),
    )
}

fn window_constants() -> Outcome {
    let published = [(420, 462, 512), (419, 461, 511), (147, 162, 500), (69, 76, 500), (37, 41, 500)];
    let got: Vec<(usize, usize)> = published
        .iter()
        .map(|&(n, _, _)| (window_length(n), calibration_length(window_length(n))))
        .collect();
    let pass = published.iter().zip(&got).all(|(p, g)| (p.1, p.2) == *g);
    outcome(pass, format!("(T, K) = {got:?}"))
}

fn decision_table() -> Outcome {
    let bad: Vec<usize> = (0..=29)
        .filter(|&g| {
            let expected = match g {
                0 | 1 => OrderKind::Buy,
                2..=4 => OrderKind::Stay,
                _ => OrderKind::Sell,
            };
            decide(g) != expected
        })
        .collect();
    outcome(bad.is_empty(), format!("mismatching gamma values {bad:?} over 0..=29"))
}

struct CrashRun {
    spec: ScenarioSpec,
    curve: EquityCurve,
}

fn crash_run(seed: u64) -> CrashRun {
    let spec = ScenarioSpec::crash(seed);
    let ds = generate(&spec).unwrap();
    let cal = calibrate(&ds, HorizonConfig::new(100, 0.10).unwrap(), &ReferenceConfig::default()).unwrap();
    let curve = backtest(&ds, &cal, &StrategyParams::new(0.10, 70).unwrap()).unwrap();
    CrashRun { spec, curve }
}

fn end_to_end_crash() -> Outcome {
    let start = Instant::now();
    let mut passed = 0;
    let mut failures = Vec::new();
    for seed in 1..=20 {
        let CrashRun { spec, curve } = crash_run(seed);
        let (pa, pp) = curve_metrics(&curve, SharpeConvention::Paper).unwrap();
        let (cs, ce) = spec.crash_window();
        let exits = (cs.max(curve.start)..ce).any(|d| curve.ir[d - curve.start] == 0.0);
        if pa.mdd < pp.mdd && exits {
            passed += 1;
        } else {
            failures.push(format!(
                "seed {seed}: mdd PA {:.3} PP {:.3}, IR hits 0 in crash {exits}",
                pa.mdd, pp.mdd
            ));
        }
    }
    let (fast_enough, timing) = within("runtime", start.elapsed(), Duration::from_secs(600));
    let mut detail = format!("{passed}/20 seeds pass (need 19); {timing}");
    if !failures.is_empty() {
        detail.push_str(&format!("; {}", failures.join("; ")));
    }
    outcome(passed >= 19 && fast_enough, detail)
}

fn rsp_contract() -> Outcome {
    let CrashRun { curve, .. } = crash_run(ScenarioSpec::FIXTURE_SEED);
    let cfg = RspConfig {
        n_paths: 10_000,
        fan_paths: 0,
        ..Default::default()
    };
    let (pa, _) = curve_metrics(&curve, SharpeConvention::Paper).unwrap();
    let paths = rsp_paths(&curve, &cfg, SharpeConvention::Paper).unwrap();
    let summary = summarize_rsp(&pa, &paths, &curve.orders, &cfg);
    let again = summarize_rsp(&pa, &rsp_paths(&curve, &cfg, SharpeConvention::Paper).unwrap(), &curve.orders, &cfg);
    let freq_err = summary
        .target_proportions
        .iter()
        .zip(&summary.realized_proportions)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let fractions = |s: &rmt_crisis::evaluation::RspSummary| {
        [&s.sharpe, &s.perf, &s.vol, &s.mdd, &s.calmar].map(|c| c.fraction_beaten.map(f64::to_bits))
    };
    let reproducible = fractions(&summary) == fractions(&again);
    let sharpe_beaten = summary.sharpe.fraction_beaten.unwrap_or(0.0);
    outcome(
        freq_err <= 0.01 && reproducible && sharpe_beaten >= 0.90,
        format!(
            "max frequency error {freq_err:.4} (tol 0.01); fractions bit-identical {reproducible}; PA beats {:.1}% of paths on Sharpe (need 90%)",
            100.0 * sharpe_beaten
        ),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn small_config(dir: &Path, data: DataSource) -> RunConfig {
    ConfigFile {
        data: Some(data),
        output_dir: Some(dir.to_path_buf()),
        references: Some(ReferenceConfig {
            replications: 20,
            ..Default::default()
        }),
        rsp: Some(RspConfig {
            n_paths: 2_000,
            ..Default::default()
        }),
        ..Default::default()
    }
    .resolve()
    .unwrap()
}

fn manifest_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    let mut spec = ScenarioSpec::crash(ScenarioSpec::FIXTURE_SEED);
    spec.n_assets = 12;
    let mut cfg = small_config(&run_dir, DataSource::Scenario { spec });
    cfg.dump_spectra = true;
    cfg.write_path_metrics = true;
    run::cmd_run(&cfg).unwrap();
    let before = snapshot(&run_dir);
    let manifest = tmp.path().join("saved_manifest.json");
    fs::copy(run_dir.join(run::RUN_MANIFEST_FILE), &manifest).unwrap();
    fs::remove_dir_all(&run_dir).unwrap();
    let repeat = ConfigFile::load(&manifest).unwrap().resolve().unwrap();
    run::cmd_run(&repeat).unwrap();
    let after = snapshot(&run_dir);
    let differing: Vec<String> = before
        .iter()
        .filter(|(k, v)| after.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    outcome(
        differing.is_empty() && before.len() == after.len(),
        format!(
            "{} files compared, {} differ {:?}",
            before.len(),
            differing.len(),
            differing
        ),
    )
}

fn paper_format_report() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (manifest, source) = match std::env::var_os("RMT_CRISIS_PANEL") {
        Some(p) => (PathBuf::from(p), "user panel"),
        None => {
            let mut spec = ScenarioSpec::crash(ScenarioSpec::FIXTURE_SEED);
            spec.n_assets = 12;
            let dir = tmp.path().join("panel");
            fs::create_dir_all(&dir).unwrap();
            write_dataset(&dir, &generate(&spec).unwrap()).unwrap();
            (dir.join(MANIFEST_FILE), "synthetic panel through the CSV loader")
        }
    };
    let mut missing = Vec::new();
    for preset in [Preset::Group1, Preset::Group2, Preset::Group3] {
        let dir = tmp.path().join(format!("{preset:?}"));
        let mut cfg = small_config(&dir, DataSource::Manifest { path: manifest.clone() });
        (cfg.threshold, cfg.sensitivity) = preset.params();
        run::cmd_calibrate(&cfg).unwrap();
        run::cmd_backtest(&cfg, false).unwrap();
        run::cmd_rsp(&cfg).unwrap();
        run::cmd_report(&cfg).unwrap();
        let report: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.join(run::REPORT_FILE)).unwrap()).unwrap();
        for side in ["pa", "pp"] {
            for metric in ["sharpe", "perf", "vol", "mdd", "calmar"] {
                if report[side].get(metric).is_none() {
                    missing.push(format!("{preset:?} {side}.{metric}"));
                }
            }
        }
        for metric in ["sharpe", "perf", "vol", "mdd", "calmar"] {
            let c = &report["pr"][metric];
            if c.get("distribution").is_none() || c.get("fraction_beaten").is_none() {
                missing.push(format!("{preset:?} pr.{metric}"));
            }
        }
    }
    outcome(
        missing.is_empty(),
        format!("group1..3 reports on {source}; missing fields {missing:?}"),
    )
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1 svd vs gram oracle", svd_vs_gram),
        ("2 correlation trace identity", correlation_trace),
        ("3 marchenko-pastur convergence", marchenko_pastur_convergence),
        ("4 drawdown oracle", mdd_oracle),
        ("5 danger-zone optimality", danger_zone_optimality),
        ("6 window and calibration constants", window_constants),
        ("7 decision table", decision_table),
        ("8 end-to-end synthetic crash", end_to_end_crash),
        ("9 random same-proportion contract", rsp_contract),
        ("10 determinism from manifest", manifest_determinism),
        ("11 paper-format report", paper_format_report),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let label = format!("criterion {name}");
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let r = check();
        if !r.pass {
            failed += 1;
        }
        println!("[{}] {label}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
