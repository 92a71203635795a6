//! Daily asset panels: loading, calendar alignment, gap filling and log-returns.
//!
//! A dataset on disk is a directory holding a JSON manifest plus six wide CSV
//! files (one per field). Every CSV has a `date` column in ISO-8601 format and
//! one column per ticker; an empty cell is a gap.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered list of trading days.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(dates: Vec<NaiveDate>) -> Result<Self> {
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "calendar dates must be strictly increasing".into(),
            ));
        }
        Ok(Self { dates })
    }

    /// Consecutive weekdays starting at `start`.
    pub fn business_days(start: NaiveDate, count: usize) -> Self {
        use chrono::{Datelike, Weekday};
        let mut dates = Vec::with_capacity(count);
        let mut d = start;
        while dates.len() < count {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                dates.push(d);
            }
            d = d.succ_opt().expect("date overflow");
        }
        Self { dates }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn date(&self, idx: usize) -> NaiveDate {
        self.dates[idx]
    }

    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSeries {
    pub ticker: String,
    pub price: Vec<f64>,
    pub volume: Vec<f64>,
    pub market_cap: Vec<f64>,
    /// Total debt over market capitalization.
    pub leverage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub components: Vec<AssetSeries>,
    pub index_price: Vec<f64>,
    /// Annualized decimal rate, e.g. 0.02 for 2%.
    pub riskless_rate: Vec<f64>,
    pub calendar: TradingCalendar,
}

impl Dataset {
    pub fn new(
        components: Vec<AssetSeries>,
        index_price: Vec<f64>,
        riskless_rate: Vec<f64>,
        calendar: TradingCalendar,
    ) -> Result<Self> {
        let ds = Self {
            components,
            index_price,
            riskless_rate,
            calendar,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_assets(&self) -> usize {
        self.components.len()
    }

    pub fn n_dates(&self) -> usize {
        self.calendar.len()
    }

    pub fn tickers(&self) -> Vec<String> {
        self.components.iter().map(|c| c.ticker.clone()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.components.len() < 2 {
            return Err(Error::Insufficient {
                what: "component assets",
                need: 2,
                have: self.components.len(),
            });
        }
        let d = self.calendar.len();
        let check_len = |name: &str, len: usize| {
            if len != d {
                Err(Error::InvalidParameter(format!(
                    "series `{name}` has {len} entries, calendar has {d}"
                )))
            } else {
                Ok(())
            }
        };
        check_len("index", self.index_price.len())?;
        check_len("riskless", self.riskless_rate.len())?;
        for c in &self.components {
            check_len(&c.ticker, c.price.len())?;
            check_len(&c.ticker, c.volume.len())?;
            check_len(&c.ticker, c.market_cap.len())?;
            check_len(&c.ticker, c.leverage.len())?;
            if let Some((i, &p)) = c.price.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
                return Err(Error::InvalidValue {
                    series: format!("{}:price", c.ticker),
                    date: self.calendar.date(i).to_string(),
                    value: p,
                });
            }
        }
        if let Some((i, &p)) = self.index_price.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
            return Err(Error::InvalidValue {
                series: "index".into(),
                date: self.calendar.date(i).to_string(),
                value: p,
            });
        }
        Ok(())
    }

    /// Rejects panels shorter than `K + H + 1` dates.
    pub fn check_length(&self, calibration_len: usize, horizon: usize) -> Result<()> {
        let need = calibration_len + horizon + 1;
        if self.n_dates() < need {
            return Err(Error::DatasetTooShort {
                have: self.n_dates(),
                need,
            });
        }
        Ok(())
    }

    pub fn returns(&self) -> Result<ReturnsPanel> {
        ReturnsPanel::from_dataset(self)
    }
}

/// Daily log-returns. Column `j` holds the return realised on date index `j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    pub returns: Vec<Vec<f64>>,
    pub index_returns: Vec<f64>,
}

impl ReturnsPanel {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let returns = ds
            .components
            .iter()
            .map(|c| log_returns(&c.price))
            .collect::<Result<Vec<_>>>()?;
        let index_returns = log_returns(&ds.index_price)?;
        Ok(Self {
            returns,
            index_returns,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.returns.len()
    }

    pub fn n_obs(&self) -> usize {
        self.index_returns.len()
    }

    /// Return of asset `i` realised on date index `date_idx` (≥ 1).
    pub fn at(&self, i: usize, date_idx: usize) -> f64 {
        self.returns[i][date_idx - 1]
    }

    /// Restrict to returns realised on date indices `[from, to)`.
    pub fn slice_dates(&self, from: usize, to: usize) -> Self {
        let from = from.max(1) - 1;
        let to = to - 1;
        Self {
            returns: self.returns.iter().map(|r| r[from..to].to_vec()).collect(),
            index_returns: self.index_returns[from..to].to_vec(),
        }
    }
}

/// Replace every gap with the most recent prior value.
pub fn forward_fill(values: &[Option<f64>]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(values.len());
    let mut last = None;
    for (i, v) in values.iter().enumerate() {
        match (v, last) {
            (Some(x), _) => {
                last = Some(*x);
                out.push(*x);
            }
            (None, Some(prev)) => out.push(prev),
            (None, None) => {
                return Err(Error::LeadingGap {
                    series: "<unnamed>".into(),
                    date: format!("position {i}"),
                })
            }
        }
    }
    Ok(out)
}

/// `ln(P_t / P_{t-1})` for consecutive prices.
pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::Insufficient {
            what: "prices for log-returns",
            need: 2,
            have: prices.len(),
        });
    }
    if let Some((index, &value)) = prices.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
        return Err(Error::NonPositivePrice { index, value });
    }
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Names the six field files and the ticker universe of an on-disk dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tickers: Vec<String>,
    #[serde(default = "default_files")]
    pub files: FieldFiles,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_index_column")]
    pub index_column: String,
    #[serde(default = "default_rate_column")]
    pub rate_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFiles {
    pub prices: String,
    pub volumes: String,
    pub mcap: String,
    pub leverage: String,
    pub index: String,
    pub riskless: String,
}

fn default_files() -> FieldFiles {
    FieldFiles {
        prices: "prices.csv".into(),
        volumes: "volumes.csv".into(),
        mcap: "mcap.csv".into(),
        leverage: "leverage.csv".into(),
        index: "index.csv".into(),
        riskless: "riskless.csv".into(),
    }
}

fn default_date_column() -> String {
    "date".into()
}
fn default_index_column() -> String {
    "index".into()
}
fn default_rate_column() -> String {
    "rate".into()
}

impl DatasetManifest {
    pub fn for_tickers(tickers: Vec<String>) -> Self {
        Self {
            tickers,
            files: default_files(),
            date_column: default_date_column(),
            index_column: default_index_column(),
            rate_column: default_rate_column(),
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Gap-fill counts per series, keyed `ticker:field` (plus `index` and `riskless`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub fills: BTreeMap<String, usize>,
    pub dropped_dates: usize,
}

impl LoadReport {
    pub fn total_fills(&self) -> usize {
        self.fills.values().sum()
    }
}

struct WideTable {
    dates: Vec<NaiveDate>,
    columns: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

impl WideTable {
    fn read(path: &Path, date_column: &str) -> Result<Self> {
        let file_name = path.display().to_string();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
        let date_idx = headers
            .iter()
            .position(|h| h.trim() == date_column)
            .ok_or_else(|| Error::MissingColumn {
                file: file_name.clone(),
                column: date_column.into(),
            })?;
        let columns: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
        let mut dated: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
        for (row_no, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let raw_date = rec.get(date_idx).unwrap_or("").trim();
            let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::Parse {
                file: file_name.clone(),
                row: row_no + 1,
                value: raw_date.into(),
            })?;
            let mut vals = Vec::with_capacity(columns.len());
            for (ci, cell) in rec.iter().enumerate() {
                if ci == date_idx {
                    vals.push(None);
                    continue;
                }
                let cell = cell.trim();
                if cell.is_empty() {
                    vals.push(None);
                } else {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        file: file_name.clone(),
                        row: row_no + 1,
                        value: cell.into(),
                    })?;
                    vals.push(if v.is_finite() { Some(v) } else { None });
                }
            }
            vals.resize(columns.len(), None);
            dated.push((date, vals));
        }
        dated.sort_by_key(|(d, _)| *d);
        if let Some(w) = dated.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                file: file_name,
                row: 0,
                value: format!("duplicate date {}", w[0].0),
            });
        }
        let (dates, rows) = dated.into_iter().unzip();
        Ok(Self {
            dates,
            columns,
            rows,
        })
    }

    fn column(&self, name: &str, file: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn {
                file: file.into(),
                column: name.into(),
            })
    }

    /// Values of `col` on each of `calendar`'s dates (which must all be present).
    fn project(&self, col: usize, calendar: &[NaiveDate]) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(calendar.len());
        let mut j = 0;
        for d in calendar {
            while self.dates[j] < *d {
                j += 1;
            }
            out.push(self.rows[j][col]);
        }
        out
    }
}

#[derive(Clone, Copy)]
enum FieldRule {
    /// Non-positive values are treated as gaps.
    Positive,
    /// Negative values are rejected; zero is allowed.
    NonNegative,
    Any,
}

fn fill_series(
    name: &str,
    raw: Vec<Option<f64>>,
    rule: FieldRule,
    calendar: &[NaiveDate],
    report: &mut LoadReport,
) -> Result<Vec<f64>> {
    let mut cleaned = Vec::with_capacity(raw.len());
    for (i, v) in raw.into_iter().enumerate() {
        cleaned.push(match (v, rule) {
            (Some(x), FieldRule::Positive) if x <= 0.0 => None,
            (Some(x), FieldRule::NonNegative) if x < 0.0 => {
                return Err(Error::InvalidValue {
                    series: name.into(),
                    date: calendar[i].to_string(),
                    value: x,
                })
            }
            (v, _) => v,
        });
    }
    let gaps = cleaned.iter().filter(|v| v.is_none()).count();
    let filled = forward_fill(&cleaned).map_err(|_| {
        let first = cleaned.iter().position(|v| v.is_some()).unwrap_or(cleaned.len());
        Error::LeadingGap {
            series: name.into(),
            date: calendar[first.min(calendar.len() - 1)].to_string(),
        }
    })?;
    report.fills.insert(name.into(), gaps);
    Ok(filled)
}

/// Load the dataset described by the manifest at `manifest_path`.
///
/// The calendar is the index's dates intersected with the dates of every
/// component field file; the riskless rate is joined as-of (last published
/// rate on or before each date).
pub fn load_dataset(manifest_path: &Path) -> Result<(Dataset, LoadReport)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::json(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    load_with_manifest(base, &manifest)
}

pub fn load_with_manifest(base: &Path, manifest: &DatasetManifest) -> Result<(Dataset, LoadReport)> {
    let dc = manifest.date_column.as_str();
    let path = |f: &str| base.join(f);
    let files = &manifest.files;
    let prices = WideTable::read(&path(&files.prices), dc)?;
    let volumes = WideTable::read(&path(&files.volumes), dc)?;
    let mcap = WideTable::read(&path(&files.mcap), dc)?;
    let leverage = WideTable::read(&path(&files.leverage), dc)?;
    let index = WideTable::read(&path(&files.index), dc)?;
    let riskless = WideTable::read(&path(&files.riskless), dc)?;

    let mut calendar: BTreeSet<NaiveDate> = index.dates.iter().copied().collect();
    let index_total = calendar.len();
    for t in [&prices, &volumes, &mcap, &leverage] {
        let s: BTreeSet<NaiveDate> = t.dates.iter().copied().collect();
        calendar = calendar.intersection(&s).copied().collect();
    }
    if calendar.is_empty() {
        return Err(Error::EmptyCalendar);
    }
    let cal: Vec<NaiveDate> = calendar.into_iter().collect();
    let mut report = LoadReport {
        dropped_dates: index_total - cal.len(),
        ..Default::default()
    };

    let mut components = Vec::with_capacity(manifest.tickers.len());
    for ticker in &manifest.tickers {
        let mut field = |table: &WideTable, file: &str, label: &str, rule| -> Result<Vec<f64>> {
            let col = table.column(ticker, file)?;
            fill_series(
                &format!("{ticker}:{label}"),
                table.project(col, &cal),
                rule,
                &cal,
                &mut report,
            )
        };
        let price = field(&prices, &files.prices, "price", FieldRule::Positive)?;
        let volume = field(&volumes, &files.volumes, "volume", FieldRule::NonNegative)?;
        let market_cap = field(&mcap, &files.mcap, "mcap", FieldRule::Positive)?;
        let lev = field(&leverage, &files.leverage, "leverage", FieldRule::NonNegative)?;
        components.push(AssetSeries {
            ticker: ticker.clone(),
            price,
            volume,
            market_cap,
            leverage: lev,
        });
    }

    let icol = index.column(&manifest.index_column, &files.index)?;
    let index_price = fill_series(
        "index",
        index.project(icol, &cal),
        FieldRule::Positive,
        &cal,
        &mut report,
    )?;

    let rcol = riskless.column(&manifest.rate_column, &files.riskless)?;
    let mut rate_raw = Vec::with_capacity(cal.len());
    let mut j = 0usize;
    let mut last: Option<f64> = None;
    for d in &cal {
        while j < riskless.dates.len() && riskless.dates[j] <= *d {
            if let Some(v) = riskless.rows[j][rcol] {
                last = Some(v);
            }
            j += 1;
        }
        rate_raw.push(last);
    }
    let riskless_rate = fill_series("riskless", rate_raw, FieldRule::Any, &cal, &mut report)?;

    let ds = Dataset::new(
        components,
        index_price,
        riskless_rate,
        TradingCalendar::new(cal)?,
    )?;
    Ok((ds, report))
}

/// Write `ds` in the on-disk CSV schema plus manifest. Returns the manifest path.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = DatasetManifest::for_tickers(ds.tickers());
    let dates = ds.calendar.dates();
    let files = &manifest.files;

    let write_wide = |name: &str, header: Vec<String>, cols: Vec<&[f64]>| -> Result<()> {
        let p = dir.join(name);
        let mut w = csv::Writer::from_path(&p).map_err(|e| Error::csv(&p, e))?;
        let mut h = vec!["date".to_string()];
        h.extend(header);
        w.write_record(&h).map_err(|e| Error::csv(&p, e))?;
        for (t, d) in dates.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(cols.iter().map(|c| c[t].to_string()));
            w.write_record(&rec).map_err(|e| Error::csv(&p, e))?;
        }
        w.flush().map_err(|e| Error::io(&p, e))
    };

    let tickers = ds.tickers();
    write_wide(
        &files.prices,
        tickers.clone(),
        ds.components.iter().map(|c| c.price.as_slice()).collect(),
    )?;
    write_wide(
        &files.volumes,
        tickers.clone(),
        ds.components.iter().map(|c| c.volume.as_slice()).collect(),
    )?;
    write_wide(
        &files.mcap,
        tickers.clone(),
        ds.components.iter().map(|c| c.market_cap.as_slice()).collect(),
    )?;
    write_wide(
        &files.leverage,
        tickers,
        ds.components.iter().map(|c| c.leverage.as_slice()).collect(),
    )?;
    write_wide(&files.index, vec!["index".into()], vec![&ds.index_price])?;
    write_wide(&files.riskless, vec!["rate".into()], vec![&ds.riskless_rate])?;

    let mp = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&mp, e))?;
    fs::write(&mp, text + "\n").map_err(|e| Error::io(&mp, e))?;
    Ok(mp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_fill_examples() {
        assert_eq!(
            forward_fill(&[Some(1.0), None, None, Some(4.0)]).unwrap(),
            vec![1.0, 1.0, 1.0, 4.0]
        );
        assert_eq!(
            forward_fill(&[Some(5.0), Some(6.0), Some(7.0)]).unwrap(),
            vec![5.0, 6.0, 7.0]
        );
        assert_eq!(forward_fill(&[Some(2.0), None]).unwrap(), vec![2.0, 2.0]);
        assert!(matches!(
            forward_fill(&[None, Some(1.0)]),
            Err(Error::LeadingGap { .. })
        ));
    }

    #[test]
    fn log_returns_examples() {
        assert_eq!(log_returns(&[100.0, 100.0]).unwrap(), vec![0.0]);
        let r = log_returns(&[100.0, 100.0 * std::f64::consts::E]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
        assert!(matches!(
            log_returns(&[1.0, 0.0]),
            Err(Error::NonPositivePrice { index: 1, .. })
        ));
        assert!(log_returns(&[1.0]).is_err());
    }

    #[test]
    fn calendar_rejects_unsorted() {
        let d = |s| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        assert!(TradingCalendar::new(vec![d("2020-01-02"), d("2020-01-02")]).is_err());
        assert!(TradingCalendar::new(vec![d("2020-01-03"), d("2020-01-02")]).is_err());
        let bd = TradingCalendar::business_days(d("2020-01-03"), 3);
        assert_eq!(bd.dates(), &[d("2020-01-03"), d("2020-01-06"), d("2020-01-07")]);
    }

    #[test]
    fn length_check_names_shortfall() {
        let cal = TradingCalendar::business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 10);
        let series = |t: &str| AssetSeries {
            ticker: t.into(),
            price: vec![1.0; 10],
            volume: vec![1.0; 10],
            market_cap: vec![1.0; 10],
            leverage: vec![1.0; 10],
        };
        let ds = Dataset::new(vec![series("A"), series("B")], vec![1.0; 10], vec![0.0; 10], cal).unwrap();
        let err = ds.check_length(8, 3).unwrap_err();
        assert!(err.to_string().contains("short by 2"), "{err}");
        assert!(ds.check_length(6, 3).is_ok());
    }
}
