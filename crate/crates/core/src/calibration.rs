//! Forward drawdown labels and danger-zone calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{IndicatorId, IndicatorPanel};
use crate::stats::percentile_sorted;

pub const DEFAULT_HORIZON: usize = 100;
/// Danger-zone width as a fraction of the outlier-clipped value range.
pub const ZONE_WIDTH_FRACTION: f64 = 0.15;
pub const CLIP_LOW_PERCENTILE: f64 = 1.0;
pub const CLIP_HIGH_PERCENTILE: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonConfig {
    pub horizon: usize,
    /// Drawdown threshold as a decimal, e.g. 0.2 for 20%.
    pub threshold: f64,
}

impl HorizonConfig {
    pub fn new(horizon: usize, threshold: f64) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::InvalidParameter("horizon must be >= 1".into()));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "drawdown threshold must lie in (0, 1), got {threshold}"
            )));
        }
        Ok(Self { horizon, threshold })
    }
}

/// Largest peak-to-trough loss `max_{t <= τ} 1 - P(τ)/P(t)` over the whole slice.
pub fn max_drawdown(prices: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &p in prices {
        if p > peak {
            peak = p;
        }
        let dd = 1.0 - p / peak;
        if dd > worst {
            worst = dd;
        }
    }
    worst
}

/// Maximum drawdown over the dates `t0 ..= t0 + horizon`.
pub fn forward_mdd(prices: &[f64], t0: usize, horizon: usize) -> Result<f64> {
    if t0 + horizon >= prices.len() {
        return Err(Error::Insufficient {
            what: "future prices for forward drawdown",
            need: t0 + horizon + 1,
            have: prices.len(),
        });
    }
    Ok(max_drawdown(&prices[t0..=t0 + horizon]))
}

/// In-sample calibration length `max(500, T + 50)`.
pub fn calibration_length(t: usize) -> usize {
    500.max(t + 50)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub anchor: usize,
    pub value: f64,
    pub forward_mdd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DangerZone {
    pub lo: f64,
    pub hi: f64,
    /// Surviving points inside `[lo, hi]`.
    pub support_count: usize,
    /// Points at or above the threshold within the clipped range.
    pub survivor_count: usize,
    pub clip_lo: f64,
    pub clip_hi: f64,
}

impl DangerZone {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Place the fixed-width window capturing the most points with `forward_mdd >= threshold`.
///
/// Values outside the [1st, 99th] percentile range of all points are discarded as
/// outliers; the window width is 15% of that clipped range. Candidate placements
/// start at each surviving value and at the two ends of the clipped range. Ties
/// go to the lowest `lo`.
pub fn find_danger_zone(points: &[CalibrationPoint], threshold: f64) -> Result<DangerZone> {
    if points.is_empty() {
        return Err(Error::NoSurvivors { threshold });
    }
    let mut all: Vec<f64> = points.iter().map(|p| p.value).collect();
    all.sort_by(f64::total_cmp);
    let clip_lo = percentile_sorted(&all, CLIP_LOW_PERCENTILE);
    let clip_hi = percentile_sorted(&all, CLIP_HIGH_PERCENTILE);
    let width = ZONE_WIDTH_FRACTION * (clip_hi - clip_lo);

    let mut survivors: Vec<f64> = points
        .iter()
        .filter(|p| p.forward_mdd >= threshold && p.value >= clip_lo && p.value <= clip_hi)
        .map(|p| p.value)
        .collect();
    if survivors.is_empty() {
        return Err(Error::NoSurvivors { threshold });
    }
    survivors.sort_by(f64::total_cmp);

    let mut candidates = survivors.clone();
    candidates.push(clip_lo);
    candidates.push(clip_hi - width);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best: Option<(f64, usize)> = None;
    for lo in candidates {
        let hi = lo + width;
        let start = survivors.partition_point(|v| *v < lo);
        let end = survivors.partition_point(|v| *v <= hi);
        let count = end - start;
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((lo, count));
        }
    }
    let (lo, support_count) = best.expect("at least one candidate");
    Ok(DangerZone {
        lo,
        hi: lo + width,
        support_count,
        survivor_count: survivors.len(),
        clip_lo,
        clip_hi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorCalibration {
    pub id: IndicatorId,
    /// `None` when no point reaches the threshold; such indicators abstain from voting.
    pub zone: Option<DangerZone>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub threshold: f64,
    pub horizon: usize,
    pub window: usize,
    pub calibration_length: usize,
    /// First and last calibration anchor date indices (inclusive).
    pub first_anchor: usize,
    pub last_anchor: usize,
    pub indicators: Vec<IndicatorCalibration>,
}

impl CalibrationReport {
    pub fn calibrated_count(&self) -> usize {
        self.indicators.iter().filter(|c| c.zone.is_some()).count()
    }

    pub fn zones(&self) -> Vec<Option<DangerZone>> {
        self.indicators.iter().map(|c| c.zone).collect()
    }
}

/// Calibration points of series `k` at anchors `first..=last`.
pub fn calibration_points(
    panel: &IndicatorPanel,
    k: usize,
    index_prices: &[f64],
    first: usize,
    last: usize,
    horizon: usize,
) -> Result<Vec<CalibrationPoint>> {
    (first..=last)
        .map(|t0| {
            Ok(CalibrationPoint {
                anchor: t0,
                value: panel.value(k, t0),
                forward_mdd: forward_mdd(index_prices, t0, horizon)?,
            })
        })
        .collect()
}

/// Calibrate every indicator of `panel` on the anchors `T+1 ..= K`.
pub fn calibrate_panel(
    panel: &IndicatorPanel,
    index_prices: &[f64],
    window: usize,
    horizon: HorizonConfig,
) -> Result<CalibrationReport> {
    let k = calibration_length(window);
    let first = window + 1;
    if !panel.contains_anchor(first) || !panel.contains_anchor(k) {
        return Err(Error::InvalidParameter(format!(
            "indicator panel does not cover calibration anchors {first}..={k}"
        )));
    }
    let indicators = panel
        .series
        .iter()
        .enumerate()
        .map(|(s, series)| {
            let pts = calibration_points(panel, s, index_prices, first, k, horizon.horizon)?;
            let zone = match find_danger_zone(&pts, horizon.threshold) {
                Ok(z) => Some(z),
                Err(Error::NoSurvivors { .. }) => {
                    log::warn!(
                        "indicator {} uncalibrated: no point reaches drawdown {}",
                        series.id,
                        horizon.threshold
                    );
                    None
                }
                Err(e) => return Err(e),
            };
            Ok(IndicatorCalibration {
                id: series.id,
                zone,
                points: pts.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationReport {
        threshold: horizon.threshold,
        horizon: horizon.horizon,
        window,
        calibration_length: k,
        first_anchor: first,
        last_anchor: k,
        indicators,
    })
}
