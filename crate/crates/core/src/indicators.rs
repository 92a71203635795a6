//! The 29 daily crisis indicators.
//!
//! α-series: Hellinger distance between the binned spectrum of one of the five
//! matrix kinds and one of the three references (15 series). β-series: spectral
//! radius, trace or squared Frobenius norm of each kind (15 - 1 = 14 series; the
//! trace of the correlation matrix `B0` is identically `N` and is left out).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::market_data::{Dataset, ReturnsPanel};
use crate::references::{
    hellinger, marchenko_pastur_reference, mean_long_term_correlation, simulate_pool,
    ReferenceDistribution, ReferenceKind, ReferenceParams, SpectralHistogram, DEFAULT_BINS,
    DEFAULT_REPLICATIONS,
};
use crate::spectra::{spectra_at, spectral_stat, MatrixKind, SpectralStat, Spectrum, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndicatorId {
    Alpha {
        kind: MatrixKind,
        reference: ReferenceKind,
    },
    Beta {
        kind: MatrixKind,
        stat: SpectralStat,
    },
}

impl IndicatorId {
    pub fn alpha(kind: MatrixKind, reference: ReferenceKind) -> Self {
        IndicatorId::Alpha { kind, reference }
    }

    /// `None` for the excluded constant `(B0, trace)` indicator.
    pub fn beta(kind: MatrixKind, stat: SpectralStat) -> Option<Self> {
        if kind == MatrixKind::B0 && stat == SpectralStat::Trace {
            None
        } else {
            Some(IndicatorId::Beta { kind, stat })
        }
    }

    pub fn kind(&self) -> MatrixKind {
        match self {
            IndicatorId::Alpha { kind, .. } | IndicatorId::Beta { kind, .. } => *kind,
        }
    }

    pub fn is_alpha(&self) -> bool {
        matches!(self, IndicatorId::Alpha { .. })
    }
}

impl fmt::Display for IndicatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndicatorId::Alpha { kind, reference } => write!(f, "alpha_{reference}_{kind}"),
            IndicatorId::Beta { kind, stat } => write!(f, "beta_{stat}_{kind}"),
        }
    }
}

impl FromStr for IndicatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        enumerate_indicators()
            .into_iter()
            .find(|id| id.to_string() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown indicator `{s}`")))
    }
}

impl Serialize for IndicatorId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IndicatorId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All 29 indicator ids: the 15 α ids followed by the 14 β ids.
pub fn enumerate_indicators() -> Vec<IndicatorId> {
    let alpha = MatrixKind::ALL.iter().flat_map(|&kind| {
        ReferenceKind::ALL
            .iter()
            .map(move |&reference| IndicatorId::alpha(kind, reference))
    });
    let beta = MatrixKind::ALL.iter().flat_map(|&kind| {
        SpectralStat::ALL
            .iter()
            .filter_map(move |&stat| IndicatorId::beta(kind, stat))
    });
    alpha.chain(beta).collect()
}

pub const INDICATOR_COUNT: usize = 29;

/// Bin edges and the three reference histograms for one matrix kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindReferences {
    pub kind: MatrixKind,
    pub edges: Vec<f64>,
    pub references: Vec<ReferenceDistribution>,
}

impl KindReferences {
    pub fn get(&self, r: ReferenceKind) -> &ReferenceDistribution {
        &self.references[r.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoScope {
    #[default]
    InSample,
    FullSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceConfig {
    pub replications: usize,
    pub seed: u64,
    pub bins: usize,
    pub rho_scope: RhoScope,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            replications: DEFAULT_REPLICATIONS,
            seed: 20_170_601,
            bins: DEFAULT_BINS,
            rho_scope: RhoScope::InSample,
        }
    }
}

impl ReferenceConfig {
    /// Seed used for the R3 pool; R2 uses `seed` itself.
    pub fn r3_seed(&self) -> u64 {
        self.seed ^ 0x9E37_79B9_7F4A_7C15
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub n: usize,
    pub t: usize,
    pub rho: f64,
    pub config: ReferenceConfig,
    pub kinds: Vec<KindReferences>,
}

impl ReferenceSet {
    pub fn for_kind(&self, kind: MatrixKind) -> &KindReferences {
        &self.kinds[kind.index()]
    }

    /// Build references from the spectra of the in-sample anchors.
    ///
    /// `in_sample` holds the five spectra of every calibration anchor; the bin
    /// edges of each kind come from their pooled unit-mean eigenvalues. `rho_panel`
    /// supplies the returns whose mean pairwise correlation drives R2 and R3.
    pub fn build(
        spec: WindowSpec,
        in_sample: &[[Spectrum; 5]],
        rho_panel: &ReturnsPanel,
        config: &ReferenceConfig,
    ) -> Result<Self> {
        let rho = mean_long_term_correlation(rho_panel)?;
        let WindowSpec { n, t } = spec;
        let r2_pool = simulate_pool(ReferenceKind::R2, n, t, rho, config.replications, config.seed)?;
        let r3_seed = config.r3_seed();
        let r3_pool = simulate_pool(ReferenceKind::R3, n, t, rho, config.replications, r3_seed)?;
        let simulated = |seed| ReferenceParams::Simulated {
            n,
            t,
            rho,
            replications: config.replications,
            seed,
        };
        let mut kinds = Vec::with_capacity(5);
        for kind in MatrixKind::ALL {
            let pool: Vec<f64> = in_sample
                .iter()
                .flat_map(|s| s[kind.index()].unit_mean().eigenvalues)
                .collect();
            let edges = SpectralHistogram::edges_for_pool(&pool, config.bins)?;
            let r1 = marchenko_pastur_reference(n, t, &edges)?;
            let r2 = ReferenceDistribution {
                kind: ReferenceKind::R2,
                params: simulated(config.seed),
                histogram: SpectralHistogram::from_values(&r2_pool, &edges)?,
            };
            let r3 = ReferenceDistribution {
                kind: ReferenceKind::R3,
                params: simulated(r3_seed),
                histogram: SpectralHistogram::from_values(&r3_pool, &edges)?,
            };
            kinds.push(KindReferences {
                kind,
                edges,
                references: vec![r1, r2, r3],
            });
        }
        Ok(Self {
            n,
            t,
            rho,
            config: config.clone(),
            kinds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSeries {
    pub id: IndicatorId,
    pub values: Vec<f64>,
}

/// All 29 series over a run of consecutive anchor date indices.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorPanel {
    pub first_anchor: usize,
    pub dates: Vec<NaiveDate>,
    pub series: Vec<IndicatorSeries>,
}

impl IndicatorPanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Value of series `k` at anchor date index `t0`.
    pub fn value(&self, k: usize, t0: usize) -> f64 {
        self.series[k].values[t0 - self.first_anchor]
    }

    pub fn contains_anchor(&self, t0: usize) -> bool {
        t0 >= self.first_anchor && t0 < self.first_anchor + self.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["date".to_string()];
        header.extend(self.series.iter().map(|s| s.id.to_string()));
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for (r, d) in self.dates.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(self.series.iter().map(|s| s.values[r].to_string()));
            w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Read a panel written by [`IndicatorPanel::write_csv`], aligning it to `dataset`.
    pub fn read_csv(path: &Path, dataset: &Dataset) -> Result<Self> {
        let file = path.display().to_string();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
        let ids = headers
            .iter()
            .skip(1)
            .map(str::parse)
            .collect::<Result<Vec<IndicatorId>>>()?;
        let mut dates = Vec::new();
        let mut cols = vec![Vec::new(); ids.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let parse_err = |v: &str| Error::Parse {
                file: file.clone(),
                row: row + 1,
                value: v.into(),
            };
            let d = &rec[0];
            dates.push(NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|_| parse_err(d))?);
            for (k, cell) in rec.iter().skip(1).enumerate() {
                cols[k].push(cell.parse::<f64>().map_err(|_| parse_err(cell))?);
            }
        }
        let first = *dates.first().ok_or(Error::Insufficient {
            what: "indicator rows",
            need: 1,
            have: 0,
        })?;
        let first_anchor = dataset.calendar.position(first).ok_or_else(|| {
            Error::InvalidParameter(format!("indicator date {first} not in dataset calendar"))
        })?;
        if dataset.calendar.dates().get(first_anchor..first_anchor + dates.len()) != Some(&dates[..]) {
            return Err(Error::InvalidParameter(
                "indicator dates are not a contiguous run of the dataset calendar".into(),
            ));
        }
        Ok(Self {
            first_anchor,
            dates,
            series: ids
                .into_iter()
                .zip(cols)
                .map(|(id, values)| IndicatorSeries { id, values })
                .collect(),
        })
    }
}

/// Five spectra for each anchor in `anchors`, computed in parallel.
pub fn compute_spectra(
    dataset: &Dataset,
    panel: &ReturnsPanel,
    spec: WindowSpec,
    anchors: std::ops::Range<usize>,
) -> Result<Vec<[Spectrum; 5]>> {
    anchors
        .into_par_iter()
        .map(|t0| {
            spectra_at(dataset, panel, spec, t0)
                .map_err(|e| e.at(dataset.calendar.date(t0), "computing spectra"))
        })
        .collect()
}

/// Indicator values for pre-computed spectra of consecutive anchors starting at `first_anchor`.
pub fn panel_from_spectra(
    dataset: &Dataset,
    refs: &ReferenceSet,
    spectra: &[[Spectrum; 5]],
    first_anchor: usize,
) -> Result<IndicatorPanel> {
    let ids = enumerate_indicators();
    let rows = spectra
        .par_iter()
        .enumerate()
        .map(|(r, s)| {
            let date = dataset.calendar.date(first_anchor + r);
            indicator_row(&ids, refs, s).map_err(|(id, e)| e.at(date, format!("indicator {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let series = ids
        .iter()
        .enumerate()
        .map(|(k, id)| IndicatorSeries {
            id: *id,
            values: rows.iter().map(|row| row[k]).collect(),
        })
        .collect();
    Ok(IndicatorPanel {
        first_anchor,
        dates: dataset.calendar.dates()[first_anchor..first_anchor + spectra.len()].to_vec(),
        series,
    })
}

fn indicator_row(
    ids: &[IndicatorId],
    refs: &ReferenceSet,
    spectra: &[Spectrum; 5],
) -> std::result::Result<Vec<f64>, (IndicatorId, Error)> {
    let mut hist: [Option<SpectralHistogram>; 5] = Default::default();
    ids.iter()
        .map(|id| {
            let v = match *id {
                IndicatorId::Alpha { kind, reference } => {
                    let k = kind.index();
                    if hist[k].is_none() {
                        let unit = spectra[k].unit_mean();
                        hist[k] = Some(
                            SpectralHistogram::from_values(&unit.eigenvalues, &refs.kinds[k].edges)
                                .map_err(|e| (*id, e))?,
                        );
                    }
                    let empirical = hist[k].as_ref().unwrap();
                    hellinger(empirical, &refs.kinds[k].get(reference).histogram)
                        .map_err(|e| (*id, e))?
                }
                IndicatorId::Beta { kind, stat } => spectral_stat(&spectra[kind.index()], stat),
            };
            if !v.is_finite() {
                return Err((*id, Error::InvalidParameter(format!("non-finite value {v}"))));
            }
            Ok(v)
        })
        .collect()
}

/// Indicator series over anchor date indices `anchors`, given references.
pub fn compute_panel(
    dataset: &Dataset,
    spec: WindowSpec,
    refs: &ReferenceSet,
    anchors: std::ops::Range<usize>,
) -> Result<IndicatorPanel> {
    let panel = dataset.returns()?;
    if anchors.start < spec.first_anchor() || anchors.end > dataset.n_dates() {
        return Err(Error::InvalidParameter(format!(
            "anchor range {anchors:?} outside [{}, {})",
            spec.first_anchor(),
            dataset.n_dates()
        )));
    }
    let first = anchors.start;
    let spectra = compute_spectra(dataset, &panel, spec, anchors)?;
    panel_from_spectra(dataset, refs, &spectra, first)
}

/// Write one CSV per matrix kind with a row of eigenvalues per anchor date.
pub fn write_spectrum_dump(
    dir: &Path,
    dataset: &Dataset,
    spectra: &[[Spectrum; 5]],
    first_anchor: usize,
) -> Result<()> {
    for kind in MatrixKind::ALL {
        let path = dir.join(format!("spectra_{kind}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        let n = spectra.first().map_or(0, |s| s[0].len());
        let mut header = vec!["date".to_string()];
        header.extend((1..=n).map(|i| format!("lambda_{i}")));
        w.write_record(&header).map_err(|e| Error::csv(&path, e))?;
        for (r, s) in spectra.iter().enumerate() {
            let mut rec = vec![dataset.calendar.date(first_anchor + r).to_string()];
            rec.extend(s[kind.index()].eigenvalues.iter().map(|l| l.to_string()));
            w.write_record(&rec).map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn twenty_nine_unique_ids() {
        let ids = enumerate_indicators();
        assert_eq!(ids.len(), INDICATOR_COUNT);
        assert_eq!(ids.iter().filter(|i| i.is_alpha()).count(), 15);
        assert_eq!(ids.iter().filter(|i| !i.is_alpha()).count(), 14);
        let set: HashSet<_> = ids.iter().collect();
        assert_eq!(set.len(), 29);
        assert!(!ids.contains(&IndicatorId::Beta {
            kind: MatrixKind::B0,
            stat: SpectralStat::Trace
        }));
        assert!(ids.contains(&IndicatorId::Beta {
            kind: MatrixKind::A,
            stat: SpectralStat::Trace
        }));
        assert!(IndicatorId::beta(MatrixKind::B0, SpectralStat::Trace).is_none());
    }

    #[test]
    fn names_roundtrip() {
        let a = IndicatorId::alpha(MatrixKind::B3, ReferenceKind::R2);
        assert_eq!(a.to_string(), "alpha_R2_B3");
        let b = IndicatorId::beta(MatrixKind::A, SpectralStat::Radius).unwrap();
        assert_eq!(b.to_string(), "beta_radius_A");
        for id in enumerate_indicators() {
            assert_eq!(id.to_string().parse::<IndicatorId>().unwrap(), id);
        }
        assert!("beta_trace_B0".parse::<IndicatorId>().is_err());
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "\"alpha_R2_B3\"");
    }
}
