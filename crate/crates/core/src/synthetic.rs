//! Synthetic market panels built from a sequence of one-factor regimes.

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{AssetSeries, Dataset, TradingCalendar};
use crate::references::{substream, OneFactorSampler, Tail};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub length: usize,
    /// Daily return volatility of each component.
    pub volatility: f64,
    pub rho: f64,
    pub tail: Tail,
    /// Total deterministic move over the regime, e.g. -0.3 for a 30% decline.
    pub drift: f64,
}

impl Regime {
    fn log_drift_per_day(&self) -> f64 {
        (1.0 + self.drift).ln() / self.length as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_assets: usize,
    pub regimes: Vec<Regime>,
    pub seed: u64,
    #[serde(default = "default_index_base")]
    pub index_base: f64,
    #[serde(default = "default_rate")]
    pub riskless_rate: f64,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

fn default_index_base() -> f64 {
    1000.0
}

fn default_rate() -> f64 {
    0.01
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date")
}

impl ScenarioSpec {
    pub fn days(&self) -> usize {
        self.regimes.iter().map(|r| r.length).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_assets < 2 {
            return Err(Error::InvalidParameter("scenario needs at least 2 assets".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::InvalidParameter("scenario needs at least one regime".into()));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            let bad = |what: &str| Err(Error::InvalidParameter(format!("regime {i}: {what}")));
            if r.length == 0 {
                return bad("length must be >= 1");
            }
            if !(r.volatility > 0.0 && r.volatility.is_finite()) {
                return bad("volatility must be > 0");
            }
            if !(0.0..1.0).contains(&r.rho) {
                return bad("rho must lie in [0, 1)");
            }
            if !(r.drift > -1.0 && r.drift.is_finite()) {
                return bad("drift must exceed -1");
            }
        }
        if !(self.index_base > 0.0) {
            return Err(Error::InvalidParameter("index base must be > 0".into()));
        }
        Ok(())
    }

    /// Seed of the bundled crash fixture.
    pub const FIXTURE_SEED: u64 = 1;

    /// Calm, agitated, calm, agitated, calm over 100 assets. Each agitated
    /// episode is a Student-t3 regime with correlation 0.8 that holds flat for
    /// 150 days and then falls 30% over 200. The first episode falls inside
    /// the calibration period, the second inside the trading period.
    pub fn crash(seed: u64) -> Self {
        let calm = |length: usize| Regime {
            length,
            volatility: 0.006,
            rho: 0.3,
            tail: Tail::Gaussian,
            drift: 0.1 * length as f64 / 250.0,
        };
        let agitated = |length, drift| Regime {
            length,
            volatility: 0.012,
            rho: 0.8,
            tail: Tail::Student3,
            drift,
        };
        Self {
            n_assets: 100,
            regimes: vec![
                calm(150),
                agitated(150, 0.0),
                agitated(200, -0.3),
                calm(450),
                agitated(150, 0.0),
                agitated(200, -0.3),
                calm(100),
            ],
            seed,
            index_base: 10_000.0,
            riskless_rate: 0.01,
            start_date: default_start(),
        }
    }

    /// Date span of the last run of consecutive agitated regimes, or `(0, 0)`
    /// when there is none.
    pub fn crash_window(&self) -> (usize, usize) {
        let Some(last) = self.regimes.iter().rposition(|r| r.tail == Tail::Student3) else {
            return (0, 0);
        };
        let mut first = last;
        while first > 0 && self.regimes[first - 1].tail == Tail::Student3 {
            first -= 1;
        }
        (self.regime_span(first).0, self.regime_span(last).1)
    }

    /// Date indices `[start, end)` of regime `i`.
    pub fn regime_span(&self, i: usize) -> (usize, usize) {
        let start: usize = self.regimes[..i].iter().map(|r| r.length).sum();
        (start, start + self.regimes[i].length)
    }
}

/// Build a dataset from `spec`; identical specs give identical datasets.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n_assets;
    let days = spec.days();
    let mut rng = substream(spec.seed, 0);
    let mut statics = substream(spec.seed, 1);

    let start_price: Vec<f64> = (0..n)
        .map(|_| 50.0 * (0.3 * statics.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let base_volume: Vec<f64> = (0..n)
        .map(|_| (13.0 + statics.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let base_mcap: Vec<f64> = (0..n)
        .map(|_| (22.0 + statics.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let base_leverage: Vec<f64> = (0..n)
        .map(|_| (-0.5 + 0.5 * statics.sample::<f64, _>(StandardNormal)).exp())
        .collect();

    let mut prices = vec![Vec::with_capacity(days); n];
    let mut log_p: Vec<f64> = start_price.iter().map(|p| p.ln()).collect();
    let mut shock = vec![0.0; n];
    let mut day = 0;
    for regime in &spec.regimes {
        let sampler = OneFactorSampler::new(regime.tail, regime.rho)?;
        let mu = regime.log_drift_per_day();
        for _ in 0..regime.length {
            if day > 0 {
                sampler.draw_cross_section(&mut rng, &mut shock);
                for (lp, s) in log_p.iter_mut().zip(&shock) {
                    *lp += mu + regime.volatility * s;
                }
            }
            for (series, lp) in prices.iter_mut().zip(&log_p) {
                series.push(lp.exp());
            }
            day += 1;
        }
    }

    let index_price: Vec<f64> = (0..days)
        .map(|d| {
            let rel: f64 = (0..n).map(|i| prices[i][d] / start_price[i]).sum::<f64>() / n as f64;
            spec.index_base * rel
        })
        .collect();

    let mut noisy = |base: f64, sd: f64| -> Vec<f64> {
        (0..days)
            .map(|_| base * (sd * statics.sample::<f64, _>(StandardNormal)).exp())
            .collect()
    };
    let components = prices
        .into_iter()
        .enumerate()
        .map(|(i, price)| AssetSeries {
            ticker: format!("S{:03}", i + 1),
            volume: noisy(base_volume[i], 0.2),
            market_cap: noisy(base_mcap[i], 0.02),
            leverage: noisy(base_leverage[i], 0.02),
            price,
        })
        .collect();
    Dataset::new(
        components,
        index_price,
        vec![spec.riskless_rate; days],
        TradingCalendar::business_days(spec.start_date, days),
    )
}
