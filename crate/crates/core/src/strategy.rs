//! Red flags, the Γ vote, discrete trading rules and portfolio simulation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calibration::DangerZone;
use crate::error::{Error, Result};
use crate::indicators::IndicatorPanel;
use crate::market_data::Dataset;

pub const INITIAL_SHARES: u64 = 10_000;
pub const INITIAL_CASH: f64 = 10_000_000.0;
pub const DEFAULT_LOOKBACK: usize = 100;
/// Fraction of the current holding traded by one Buy or Sell order.
pub const TRADE_FRACTION: f64 = 0.10;
/// Day count used to turn an annual rate into a daily accrual.
pub const DAY_COUNT: f64 = 360.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    /// Drawdown threshold used in calibration; recorded with the run.
    pub threshold: f64,
    pub sensitivity: u32,
    pub lookback: usize,
    pub horizon: usize,
    pub execution_lag_days: usize,
}

impl StrategyParams {
    pub fn new(threshold: f64, sensitivity: u32) -> Result<Self> {
        let p = Self {
            threshold,
            sensitivity,
            lookback: DEFAULT_LOOKBACK,
            horizon: crate::calibration::DEFAULT_HORIZON,
            execution_lag_days: 0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensitivity > 100 {
            return Err(Error::InvalidParameter(format!(
                "sensitivity must lie in [0, 100], got {}",
                self.sensitivity
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "drawdown threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.lookback == 0 || self.horizon == 0 {
            return Err(Error::InvalidParameter("lookback and horizon must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderKind {
    Buy,
    Stay,
    Sell,
}

impl OrderKind {
    pub const ALL: [OrderKind; 3] = [OrderKind::Buy, OrderKind::Stay, OrderKind::Sell];

    pub fn as_str(self) -> &'static str {
        match self {
            OrderKind::Buy => "buy",
            OrderKind::Stay => "stay",
            OrderKind::Sell => "sell",
        }
    }
}

impl fmt::Display for OrderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "buy" => Ok(OrderKind::Buy),
            "stay" => Ok(OrderKind::Stay),
            "sell" => Ok(OrderKind::Sell),
            _ => Err(Error::InvalidParameter(format!("unknown order `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub kind: OrderKind,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub cash: f64,
    pub shares: u64,
}

impl Default for Portfolio {
    fn default() -> Self {
        Self {
            cash: INITIAL_CASH,
            shares: INITIAL_SHARES,
        }
    }
}

impl Portfolio {
    pub fn value(&self, price: f64) -> f64 {
        self.cash + self.shares as f64 * price
    }

    /// One day of interest at the annual `rate`.
    pub fn accrue(&mut self, rate: f64) {
        self.cash *= 1.0 + rate / DAY_COUNT;
    }

    /// Trade at `price`; constraints turn infeasible orders into no-ops.
    pub fn execute(&mut self, order: OrderKind, price: f64) {
        match order {
            OrderKind::Stay => {}
            OrderKind::Buy => {
                let affordable = (self.cash / price).floor();
                if affordable < 1.0 {
                    return;
                }
                let target = if self.shares == 0 {
                    ((TRADE_FRACTION * self.value(price)) / price).floor().max(1.0)
                } else {
                    (TRADE_FRACTION * self.shares as f64).floor().max(1.0)
                };
                let delta = target.min(affordable) as u64;
                self.shares += delta;
                self.cash -= delta as f64 * price;
                if self.cash < 0.0 {
                    self.cash = 0.0;
                }
            }
            OrderKind::Sell => {
                if self.shares == 0 {
                    return;
                }
                let delta = ((TRADE_FRACTION * self.shares as f64).floor() as u64)
                    .max(1)
                    .min(self.shares);
                self.shares -= delta;
                self.cash += delta as f64 * price;
            }
        }
    }
}

/// Accrue one day at `rate`, then execute `order` at `price`.
pub fn step_portfolio(mut p: Portfolio, order: OrderKind, price: f64, rate: f64) -> Portfolio {
    p.accrue(rate);
    p.execute(order, price);
    p
}

/// True when more than `sensitivity` of `window` fall inside `zone`.
pub fn red_flag(window: &[f64], zone: &DangerZone, sensitivity: u32) -> bool {
    window.iter().filter(|v| zone.contains(**v)).count() > sensitivity as usize
}

pub fn gamma(flags: &[bool]) -> usize {
    flags.iter().filter(|f| **f).count()
}

pub fn decide(gamma: usize) -> OrderKind {
    match gamma {
        0 | 1 => OrderKind::Buy,
        2..=4 => OrderKind::Stay,
        _ => OrderKind::Sell,
    }
}

/// Γ at decision date `t0` from indicator values on `[t0 - lookback, t0 - 1]`.
/// Indicators without a zone abstain.
pub fn gamma_at(
    panel: &IndicatorPanel,
    zones: &[Option<DangerZone>],
    t0: usize,
    params: &StrategyParams,
) -> Result<usize> {
    if zones.len() != panel.series.len() {
        return Err(Error::InvalidParameter(format!(
            "{} zones for {} indicator series",
            zones.len(),
            panel.series.len()
        )));
    }
    let from = t0.checked_sub(params.lookback).filter(|f| panel.contains_anchor(*f));
    let Some(from) = from.filter(|_| panel.contains_anchor(t0 - 1)) else {
        return Err(Error::Insufficient {
            what: "indicator history for red flags",
            need: params.lookback,
            have: t0.saturating_sub(panel.first_anchor),
        });
    };
    let lo = from - panel.first_anchor;
    let hi = t0 - panel.first_anchor;
    let flags: Vec<bool> = panel
        .series
        .iter()
        .zip(zones)
        .map(|(s, z)| z.as_ref().is_some_and(|z| red_flag(&s.values[lo..hi], z, params.sensitivity)))
        .collect();
    Ok(gamma(&flags))
}

/// Value and investment ratio of a portfolio run through `orders`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub values: Vec<f64>,
    pub ir: Vec<f64>,
    pub shares: Vec<u64>,
    pub cash: Vec<f64>,
}

/// Run `initial` through `orders[k]` decided on `prices[k]`'s date and executed
/// `lag` dates later. `rates[k]` accrues from date `k` to `k + 1`.
pub fn simulate_orders(
    initial: Portfolio,
    prices: &[f64],
    rates: &[f64],
    orders: &[OrderKind],
    lag: usize,
) -> Simulation {
    let n = prices.len();
    let mut sim = Simulation {
        values: Vec::with_capacity(n),
        ir: Vec::with_capacity(n),
        shares: Vec::with_capacity(n),
        cash: Vec::with_capacity(n),
    };
    let mut p = initial;
    for k in 0..n {
        if k > 0 {
            p.accrue(rates[k - 1]);
        }
        if k >= lag {
            if let Some(o) = orders.get(k - lag) {
                p.execute(*o, prices[k]);
            }
        }
        let v = p.value(prices[k]);
        sim.values.push(v);
        sim.ir.push(p.shares as f64 * prices[k] / v);
        sim.shares.push(p.shares);
        sim.cash.push(p.cash);
    }
    sim
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquityCurve {
    /// Date index of the first trading date.
    pub start: usize,
    pub dates: Vec<NaiveDate>,
    pub index_price: Vec<f64>,
    pub riskless: Vec<f64>,
    pub pa: Vec<f64>,
    pub pp: Vec<f64>,
    pub ir: Vec<f64>,
    pub gamma: Vec<usize>,
    pub orders: Vec<OrderKind>,
    pub lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderCounts {
    pub buy: usize,
    pub stay: usize,
    pub sell: usize,
}

impl OrderCounts {
    pub fn from_orders(orders: &[OrderKind]) -> Self {
        let count = |k| orders.iter().filter(|o| **o == k).count();
        Self {
            buy: count(OrderKind::Buy),
            stay: count(OrderKind::Stay),
            sell: count(OrderKind::Sell),
        }
    }

    pub fn total(&self) -> usize {
        self.buy + self.stay + self.sell
    }

    pub fn proportions(&self) -> [f64; 3] {
        let t = self.total().max(1) as f64;
        [self.buy as f64 / t, self.stay as f64 / t, self.sell as f64 / t]
    }
}

impl EquityCurve {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn order_counts(&self) -> OrderCounts {
        OrderCounts::from_orders(&self.orders)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["date", "index", "riskless", "pa_value", "pp_value", "ir", "gamma", "order"])
            .map_err(|e| Error::csv(path, e))?;
        for k in 0..self.len() {
            w.write_record([
                self.dates[k].to_string(),
                self.index_price[k].to_string(),
                self.riskless[k].to_string(),
                self.pa[k].to_string(),
                self.pp[k].to_string(),
                self.ir[k].to_string(),
                self.gamma[k].to_string(),
                self.orders[k].to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, start: usize, lag: usize) -> Result<Self> {
        let file = path.display().to_string();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut c = EquityCurve {
            start,
            dates: vec![],
            index_price: vec![],
            riskless: vec![],
            pa: vec![],
            pp: vec![],
            ir: vec![],
            gamma: vec![],
            orders: vec![],
            lag,
        };
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let err = |v: &str| Error::Parse {
                file: file.clone(),
                row: row + 1,
                value: v.into(),
            };
            let f = |i: usize| rec[i].parse::<f64>().map_err(|_| err(&rec[i]));
            c.dates
                .push(NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|_| err(&rec[0]))?);
            c.index_price.push(f(1)?);
            c.riskless.push(f(2)?);
            c.pa.push(f(3)?);
            c.pp.push(f(4)?);
            c.ir.push(f(5)?);
            c.gamma.push(rec[6].parse().map_err(|_| err(&rec[6]))?);
            c.orders.push(rec[7].parse()?);
        }
        Ok(c)
    }
}

/// Decide and trade every date from `start` to the end of the dataset, alongside
/// the buy-and-hold portfolio.
pub fn run_backtest(
    dataset: &Dataset,
    panel: &IndicatorPanel,
    zones: &[Option<DangerZone>],
    params: &StrategyParams,
    start: usize,
) -> Result<EquityCurve> {
    params.validate()?;
    let end = dataset.n_dates();
    if start >= end {
        return Err(Error::Insufficient {
            what: "out-of-sample dates",
            need: start + 1,
            have: end,
        });
    }
    let gammas = (start..end)
        .map(|t0| {
            gamma_at(panel, zones, t0, params)
                .map_err(|e| e.at(dataset.calendar.date(t0), "computing red flags"))
        })
        .collect::<Result<Vec<_>>>()?;
    let orders: Vec<OrderKind> = gammas.iter().map(|g| decide(*g)).collect();
    let prices = &dataset.index_price[start..end];
    let rates = &dataset.riskless_rate[start..end];
    let pa = simulate_orders(Portfolio::default(), prices, rates, &orders, params.execution_lag_days);
    let pp = simulate_orders(Portfolio::default(), prices, rates, &[], 0);
    Ok(EquityCurve {
        start,
        dates: dataset.calendar.dates()[start..end].to_vec(),
        index_price: prices.to_vec(),
        riskless: rates.to_vec(),
        pa: pa.values,
        pp: pp.values,
        ir: pa.ir,
        gamma: gammas,
        orders,
        lag: params.execution_lag_days,
    })
}
