//! Performance metrics, random same-proportion baselines and the PA/PP/PR comparison.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::max_drawdown;
use crate::error::{Error, Result};
use crate::references::substream;
use crate::stats::{mean, percentile_sorted, sample_std};
use crate::strategy::{simulate_orders, EquityCurve, OrderCounts, OrderKind, Portfolio};

pub const DEFAULT_RSP_PATHS: usize = 50_000;
pub const DEFAULT_FAN_PATHS: usize = 10_000;
pub const FAN_PERCENTILES: [f64; 5] = [5.0, 25.0, 50.0, 75.0, 95.0];

pub fn investment_ratio(p: &Portfolio, price: f64) -> Result<f64> {
    let v = p.value(price);
    if v <= 0.0 {
        return Err(Error::ZeroValue);
    }
    Ok(p.shares as f64 * price / v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpeConvention {
    /// Monthly rate term and √12 scaling applied to daily returns, as printed.
    #[default]
    Paper,
    Daily,
}

impl std::str::FromStr for SharpeConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(SharpeConvention::Paper),
            "daily" => Ok(SharpeConvention::Daily),
            _ => Err(Error::Config(format!("unknown sharpe convention `{s}` (paper, daily)"))),
        }
    }
}

impl SharpeConvention {
    fn rate_divisor(self) -> f64 {
        match self {
            SharpeConvention::Paper => 12.0,
            SharpeConvention::Daily => 252.0,
        }
    }

    fn vol_scale(self) -> f64 {
        self.rate_divisor().sqrt()
    }
}

/// `A(t)/A(t-1) - TB(t-1)/d - 1` for each date after the first.
pub fn excess_returns(values: &[f64], rates: &[f64], convention: SharpeConvention) -> Vec<f64> {
    let d = convention.rate_divisor();
    (1..values.len())
        .map(|t| values[t] / values[t - 1] - rates[t - 1] / d - 1.0)
        .collect()
}

/// `(A(S)/A(S0))^(360/(S-S0)) - 1` with `S - S0` counted in trading days.
pub fn annualized_performance(values: &[f64]) -> f64 {
    let span = (values.len() - 1) as f64;
    (values[values.len() - 1] / values[0]).powf(360.0 / span) - 1.0
}

pub fn full_period_mdd(values: &[f64]) -> f64 {
    max_drawdown(values)
}

/// Perf / MDD; `None` when the curve never draws down.
pub fn calmar(perf: f64, mdd: f64) -> Option<f64> {
    (mdd > 0.0).then(|| perf / mdd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub perf: f64,
    pub vol: f64,
    pub sharpe: f64,
    pub mdd: f64,
    pub calmar: Option<f64>,
}

pub fn performance_metrics(
    values: &[f64],
    rates: &[f64],
    convention: SharpeConvention,
) -> Result<Metrics> {
    if values.len() < 2 {
        return Err(Error::Insufficient {
            what: "curve dates for performance metrics",
            need: 2,
            have: values.len(),
        });
    }
    if rates.len() != values.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rates for {} curve values",
            rates.len(),
            values.len()
        )));
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::ZeroValue);
    }
    let excess = excess_returns(values, rates, convention);
    let perf = annualized_performance(values);
    let vol = if excess.len() < 2 {
        0.0
    } else {
        sample_std(&excess) * convention.vol_scale()
    };
    let numerator = perf - mean(rates);
    let sharpe = if vol > 0.0 {
        numerator / vol
    } else if numerator == 0.0 {
        0.0
    } else {
        return Err(Error::ZeroVolatility);
    };
    let mdd = full_period_mdd(values);
    Ok(Metrics {
        perf,
        vol,
        sharpe,
        mdd,
        calmar: calmar(perf, mdd),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RspMode {
    /// Each date draws independently with PA's proportions.
    #[default]
    Iid,
    /// Each path is a random permutation of PA's order sequence.
    Permutation,
}

impl std::str::FromStr for RspMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(RspMode::Iid),
            "permutation" => Ok(RspMode::Permutation),
            _ => Err(Error::Config(format!("unknown rsp mode `{s}` (iid, permutation)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RspConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub mode: RspMode,
    /// Paths kept for the per-date fan chart.
    pub fan_paths: usize,
}

impl Default for RspConfig {
    fn default() -> Self {
        Self {
            n_paths: DEFAULT_RSP_PATHS,
            seed: 20_170_602,
            mode: RspMode::Iid,
            fan_paths: DEFAULT_FAN_PATHS,
        }
    }
}

/// Draw one order from `(p_buy, p_stay, p_sell)`.
pub fn draw_order<R: Rng>(rng: &mut R, proportions: &[f64; 3]) -> OrderKind {
    let u: f64 = rng.random();
    if u < proportions[0] {
        OrderKind::Buy
    } else if u < proportions[0] + proportions[1] {
        OrderKind::Stay
    } else {
        OrderKind::Sell
    }
}

/// Order sequence of random path `path`.
pub fn rsp_orders(pa_orders: &[OrderKind], cfg: &RspConfig, path: usize) -> Vec<OrderKind> {
    let mut rng = substream(cfg.seed, path as u64);
    match cfg.mode {
        RspMode::Iid => {
            let props = OrderCounts::from_orders(pa_orders).proportions();
            (0..pa_orders.len()).map(|_| draw_order(&mut rng, &props)).collect()
        }
        RspMode::Permutation => {
            let mut o = pa_orders.to_vec();
            o.shuffle(&mut rng);
            o
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RspPaths {
    pub metrics: Vec<Metrics>,
    /// Row-major `fan_paths x dates` portfolio values.
    pub fan_values: Vec<f32>,
    pub fan_rows: usize,
    pub counts: Vec<OrderCounts>,
}

/// Simulate random same-proportion paths over the curve's dates.
pub fn rsp_paths(curve: &EquityCurve, cfg: &RspConfig, convention: SharpeConvention) -> Result<RspPaths> {
    if curve.orders.is_empty() {
        return Err(Error::Insufficient {
            what: "active orders for random paths",
            need: 1,
            have: 0,
        });
    }
    let fan_rows = cfg.fan_paths.min(cfg.n_paths);
    let results = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let orders = rsp_orders(&curve.orders, cfg, path);
            let sim = simulate_orders(
                Portfolio::default(),
                &curve.index_price,
                &curve.riskless,
                &orders,
                curve.lag,
            );
            let m = performance_metrics(&sim.values, &curve.riskless, convention)?;
            let fan = (path < fan_rows).then(|| sim.values.iter().map(|v| *v as f32).collect::<Vec<_>>());
            Ok((m, fan, OrderCounts::from_orders(&orders)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = RspPaths {
        metrics: Vec::with_capacity(results.len()),
        fan_values: Vec::with_capacity(fan_rows * curve.len()),
        fan_rows,
        counts: Vec::with_capacity(results.len()),
    };
    for (m, fan, c) in results {
        out.metrics.push(m);
        out.counts.push(c);
        if let Some(f) = fan {
            out.fan_values.extend(f);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub mean: f64,
    pub p5: f64,
    pub median: f64,
    pub p95: f64,
    /// Paths where the metric is defined.
    pub count: usize,
}

impl Distribution {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            mean: mean(&s),
            p5: percentile_sorted(&s, 5.0),
            median: percentile_sorted(&s, 50.0),
            p95: percentile_sorted(&s, 95.0),
            count: s.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub distribution: Option<Distribution>,
    /// Share of paths strictly worse than PA on this metric.
    pub fraction_beaten: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RspSummary {
    pub n_paths: usize,
    pub seed: u64,
    pub mode: RspMode,
    pub target_proportions: [f64; 3],
    pub realized_proportions: [f64; 3],
    pub sharpe: MetricComparison,
    pub perf: MetricComparison,
    pub vol: MetricComparison,
    pub mdd: MetricComparison,
    pub calmar: MetricComparison,
}

fn fraction(pa: f64, paths: &[f64], higher_is_better: bool) -> Option<f64> {
    if paths.is_empty() {
        return None;
    }
    let beaten = paths
        .iter()
        .filter(|p| if higher_is_better { pa > **p } else { pa < **p })
        .count();
    Some(beaten as f64 / paths.len() as f64)
}

fn compare_metric(pa: Option<f64>, paths: Vec<f64>, higher_is_better: bool) -> MetricComparison {
    MetricComparison {
        distribution: Distribution::of(&paths),
        fraction_beaten: pa.and_then(|v| fraction(v, &paths, higher_is_better)),
    }
}

pub fn summarize_rsp(pa: &Metrics, paths: &RspPaths, pa_orders: &[OrderKind], cfg: &RspConfig) -> RspSummary {
    let col = |f: fn(&Metrics) -> f64| paths.metrics.iter().map(f).collect::<Vec<_>>();
    let total = paths.counts.iter().fold([0usize; 3], |a, c| [a[0] + c.buy, a[1] + c.stay, a[2] + c.sell]);
    let n = total.iter().sum::<usize>().max(1) as f64;
    RspSummary {
        n_paths: paths.metrics.len(),
        seed: cfg.seed,
        mode: cfg.mode,
        target_proportions: OrderCounts::from_orders(pa_orders).proportions(),
        realized_proportions: [total[0] as f64 / n, total[1] as f64 / n, total[2] as f64 / n],
        sharpe: compare_metric(Some(pa.sharpe), col(|m| m.sharpe), true),
        perf: compare_metric(Some(pa.perf), col(|m| m.perf), true),
        vol: compare_metric(Some(pa.vol), col(|m| m.vol), false),
        mdd: compare_metric(Some(pa.mdd), col(|m| m.mdd), false),
        calmar: compare_metric(
            pa.calmar,
            paths.metrics.iter().filter_map(|m| m.calmar).collect(),
            true,
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub perf: f64,
    pub vol: f64,
    pub sharpe: f64,
    pub mdd: f64,
    pub calmar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub convention: SharpeConvention,
    pub start_date: chrono::NaiveDate,
    pub end_date: chrono::NaiveDate,
    pub dates: usize,
    pub orders: OrderCounts,
    pub pa: Metrics,
    pub pp: Metrics,
    /// PA minus PP.
    pub delta: MetricDeltas,
    pub pr: Option<RspSummary>,
}

pub fn compare(
    curve: &EquityCurve,
    pa: Metrics,
    pp: Metrics,
    convention: SharpeConvention,
    pr: Option<RspSummary>,
) -> PerformanceReport {
    PerformanceReport {
        convention,
        start_date: curve.dates[0],
        end_date: *curve.dates.last().unwrap(),
        dates: curve.len(),
        orders: curve.order_counts(),
        pa,
        pp,
        delta: MetricDeltas {
            perf: pa.perf - pp.perf,
            vol: pa.vol - pp.vol,
            sharpe: pa.sharpe - pp.sharpe,
            mdd: pa.mdd - pp.mdd,
            calmar: pa.calmar.zip(pp.calmar).map(|(a, b)| a - b),
        },
        pr,
    }
}

/// PA and PP metrics for a backtest curve.
pub fn curve_metrics(curve: &EquityCurve, convention: SharpeConvention) -> Result<(Metrics, Metrics)> {
    Ok((
        performance_metrics(&curve.pa, &curve.riskless, convention)?,
        performance_metrics(&curve.pp, &curve.riskless, convention)?,
    ))
}

impl PerformanceReport {
    pub fn summary_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        let mut s = format!(
            "period {} .. {} ({} dates), orders: {} buy / {} stay / {} sell\n",
            self.start_date, self.end_date, self.dates, self.orders.buy, self.orders.stay, self.orders.sell
        );
        s.push_str(&format!(
            "{:<6} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            "", "perf", "vol", "sharpe", "mdd", "calmar"
        ));
        for (name, m) in [("PA", &self.pa), ("PP", &self.pp)] {
            s.push_str(&format!(
                "{:<6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10}\n",
                name,
                m.perf,
                m.vol,
                m.sharpe,
                m.mdd,
                opt(m.calmar)
            ));
        }
        if let Some(pr) = &self.pr {
            let mean = |c: &MetricComparison| opt(c.distribution.map(|d| d.mean));
            s.push_str(&format!(
                "{:<6} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
                "PR avg",
                mean(&pr.perf),
                mean(&pr.vol),
                mean(&pr.sharpe),
                mean(&pr.mdd),
                mean(&pr.calmar)
            ));
            s.push_str(&format!(
                "{:<6} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
                "beaten",
                opt(pr.perf.fraction_beaten),
                opt(pr.vol.fraction_beaten),
                opt(pr.sharpe.fraction_beaten),
                opt(pr.mdd.fraction_beaten),
                opt(pr.calmar.fraction_beaten)
            ));
            s.push_str(&format!("random paths: {} (seed {})\n", pr.n_paths, pr.seed));
        }
        s
    }
}

/// Per-date percentiles of the random-path values next to PA and PP.
pub fn write_fan_chart(path: &Path, curve: &EquityCurve, paths: &RspPaths) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["date".to_string(), "pa_value".into(), "pp_value".into()];
    header.extend(FAN_PERCENTILES.iter().map(|p| format!("pr_p{p}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    let n = curve.len();
    let mut column = vec![0.0f64; paths.fan_rows];
    for t in 0..n {
        for (r, c) in column.iter_mut().enumerate() {
            *c = paths.fan_values[r * n + t] as f64;
        }
        column.sort_by(f64::total_cmp);
        let mut rec = vec![curve.dates[t].to_string(), curve.pa[t].to_string(), curve.pp[t].to_string()];
        rec.extend(FAN_PERCENTILES.iter().map(|p| {
            if column.is_empty() {
                String::new()
            } else {
                percentile_sorted(&column, *p).to_string()
            }
        }));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row of metrics per random path.
pub fn write_path_metrics(path: &Path, paths: &RspPaths) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["path", "perf", "vol", "sharpe", "mdd", "calmar", "buy", "stay", "sell"])
        .map_err(|e| Error::csv(path, e))?;
    for (i, (m, c)) in paths.metrics.iter().zip(&paths.counts).enumerate() {
        w.write_record([
            i.to_string(),
            m.perf.to_string(),
            m.vol.to_string(),
            m.sharpe.to_string(),
            m.mdd.to_string(),
            m.calmar.map_or(String::new(), |c| c.to_string()),
            c.buy.to_string(),
            c.stay.to_string(),
            c.sell.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
