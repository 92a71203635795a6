//! Rolling return matrices and their eigenvalue spectra.
//!
//! At an anchor date index `t0` the window covers the `T` returns realised on
//! date indices `t0 - T ..= t0 - 1`. Five matrices are derived from it: the
//! centred and scaled returns `A`, its row-normalised form `B0` (whose Gram
//! matrix is the sample correlation matrix) and three weighted variants of
//! `B0` (volume, market cap, leverage).

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{Dataset, ReturnsPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatrixKind {
    A,
    B0,
    B1,
    B2,
    B3,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 5] = [
        MatrixKind::A,
        MatrixKind::B0,
        MatrixKind::B1,
        MatrixKind::B2,
        MatrixKind::B3,
    ];

    pub fn weighting(self) -> Option<Weighting> {
        match self {
            MatrixKind::A => None,
            MatrixKind::B0 => Some(Weighting::None),
            MatrixKind::B1 => Some(Weighting::Volume),
            MatrixKind::B2 => Some(Weighting::MarketCap),
            MatrixKind::B3 => Some(Weighting::Leverage),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MatrixKind::A => "A",
            MatrixKind::B0 => "B0",
            MatrixKind::B1 => "B1",
            MatrixKind::B2 => "B2",
            MatrixKind::B3 => "B3",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    None,
    Volume,
    MarketCap,
    Leverage,
}

impl Weighting {
    pub fn kind(self) -> MatrixKind {
        match self {
            Weighting::None => MatrixKind::B0,
            Weighting::Volume => MatrixKind::B1,
            Weighting::MarketCap => MatrixKind::B2,
            Weighting::Leverage => MatrixKind::B3,
        }
    }
}

/// `n` assets observed over a window of `t` trading days, `t > n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n: usize,
    pub t: usize,
}

impl WindowSpec {
    pub fn new(n: usize, t: usize) -> Result<Self> {
        if t <= n || n == 0 {
            return Err(Error::InvalidWindow { n, t });
        }
        Ok(Self { n, t })
    }

    /// Window with the default length for `n` assets.
    pub fn for_assets(n: usize) -> Result<Self> {
        Self::new(n, window_length(n))
    }

    /// First anchor date index with a full window of returns behind it.
    pub fn first_anchor(&self) -> usize {
        self.t + 1
    }
}

/// Rolling window length `ceil(1.1 * n)`, computed in integers.
pub fn window_length(n: usize) -> usize {
    (11 * n).div_ceil(10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingMatrix {
    pub kind: MatrixKind,
    /// Anchor date index `t0`; columns are dates `t0 - T ..= t0 - 1`.
    pub anchor: usize,
    pub values: DMatrix<f64>,
}

/// Centred log-returns scaled by `1/sqrt(T)`.
pub fn build_a(panel: &ReturnsPanel, t0: usize, spec: WindowSpec) -> Result<RollingMatrix> {
    let WindowSpec { n, t } = spec;
    if panel.n_assets() != n {
        return Err(Error::InvalidParameter(format!(
            "panel has {} assets, window expects {n}",
            panel.n_assets()
        )));
    }
    // returns realised on date indices t0-T ..= t0-1 live at columns t0-T-1 ..= t0-2
    if t0 < t + 1 || t0 - 1 > panel.n_obs() {
        return Err(Error::Insufficient {
            what: "return observations before the anchor",
            need: t,
            have: t0.saturating_sub(1).min(panel.n_obs()),
        });
    }
    let start = t0 - t - 1;
    let scale = 1.0 / (t as f64).sqrt();
    let mut values = DMatrix::zeros(n, t);
    for (i, row) in panel.returns.iter().enumerate() {
        let window = &row[start..start + t];
        let mean = window.iter().sum::<f64>() / t as f64;
        for (j, r) in window.iter().enumerate() {
            values[(i, j)] = (r - mean) * scale;
        }
    }
    Ok(RollingMatrix {
        kind: MatrixKind::A,
        anchor: t0,
        values,
    })
}

/// Derive `B0` (row-normalised) or one of its weighted variants from `A`.
///
/// Each row of `A` is divided by its Euclidean norm, which equals the population
/// standard deviation of the raw returns in the window, so `B0 B0ᵀ` is the sample
/// correlation matrix. Weights are read at date index `t0 - 1`.
pub fn build_weighted(
    base: &RollingMatrix,
    weighting: Weighting,
    dataset: &Dataset,
    t0: usize,
) -> Result<RollingMatrix> {
    if base.kind != MatrixKind::A || base.anchor != t0 {
        return Err(Error::InvalidParameter(
            "weighted matrices derive from kind A at the same anchor".into(),
        ));
    }
    let mut values = base.values.clone();
    for (i, mut row) in values.row_iter_mut().enumerate() {
        let norm = row.norm();
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm == 0.0 || norm <= 1e-13 * scale * (row.len() as f64).sqrt() {
            return Err(Error::ZeroVariance { row: i });
        }
        row /= norm;
    }
    let b0 = RollingMatrix {
        kind: MatrixKind::B0,
        anchor: t0,
        values,
    };
    if weighting == Weighting::None {
        Ok(b0)
    } else {
        reweight(&b0, weighting, dataset)
    }
}

fn weight_vector(dataset: &Dataset, weighting: Weighting, day: usize) -> Result<Vec<f64>> {
    let w: Vec<f64> = dataset
        .components
        .iter()
        .map(|c| match weighting {
            Weighting::None => 1.0,
            Weighting::Volume => c.volume[day],
            Weighting::MarketCap => c.market_cap[day],
            Weighting::Leverage => c.leverage[day],
        })
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeightSum);
    }
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Scale each row of a `B0` matrix by its asset's share of the weight total.
fn reweight(b0: &RollingMatrix, weighting: Weighting, dataset: &Dataset) -> Result<RollingMatrix> {
    let w = weight_vector(dataset, weighting, b0.anchor - 1)?;
    let mut values = b0.values.clone();
    for (i, mut row) in values.row_iter_mut().enumerate() {
        row *= w[i];
    }
    Ok(RollingMatrix {
        kind: weighting.kind(),
        anchor: b0.anchor,
        values,
    })
}

/// Eigenvalues of a Gram matrix `M Mᵀ`, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn from_unsorted(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self { eigenvalues }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Rescaled to unit mean eigenvalue; the zero spectrum is returned unchanged.
    pub fn unit_mean(&self) -> Spectrum {
        let trace: f64 = self.eigenvalues.iter().sum();
        if trace <= 0.0 {
            return self.clone();
        }
        let k = self.eigenvalues.len() as f64 / trace;
        Spectrum {
            eigenvalues: self.eigenvalues.iter().map(|l| l * k).collect(),
        }
    }
}

/// Squared singular values of `m`, i.e. the eigenvalues of `m mᵀ`, obtained
/// without forming the product.
pub fn svd_eigenvalues(m: &RollingMatrix) -> Result<Spectrum> {
    matrix_eigenvalues(&m.values)
}

pub fn matrix_eigenvalues(values: &DMatrix<f64>) -> Result<Spectrum> {
    let (rows, cols) = values.shape();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    if rows == 0 || cols == 0 {
        return Ok(Spectrum {
            eigenvalues: vec![0.0; rows],
        });
    }
    let max_iter = 1000 * rows.max(cols);
    let svd = values
        .clone()
        .try_svd(false, false, f64::EPSILON, max_iter)
        .ok_or(Error::SvdNonConvergence { rows, cols })?;
    let mut eig: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    // a wide matrix has min(rows, cols) singular values; pad to one per row
    eig.resize(rows, 0.0);
    Ok(Spectrum::from_unsorted(eig))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpectralStat {
    Radius,
    Trace,
    Frobenius,
}

impl SpectralStat {
    pub const ALL: [SpectralStat; 3] = [
        SpectralStat::Radius,
        SpectralStat::Trace,
        SpectralStat::Frobenius,
    ];
}

impl fmt::Display for SpectralStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpectralStat::Radius => "radius",
            SpectralStat::Trace => "trace",
            SpectralStat::Frobenius => "frobenius",
        })
    }
}

/// Largest eigenvalue, eigenvalue sum, or sum of squared eigenvalues.
pub fn spectral_stat(s: &Spectrum, stat: SpectralStat) -> f64 {
    match stat {
        SpectralStat::Radius => s.eigenvalues.iter().copied().fold(0.0, f64::max),
        SpectralStat::Trace => s.eigenvalues.iter().sum(),
        SpectralStat::Frobenius => s.eigenvalues.iter().map(|l| l * l).sum(),
    }
}

/// All five spectra at anchor `t0`, indexed by `MatrixKind::index`.
pub fn spectra_at(
    dataset: &Dataset,
    panel: &ReturnsPanel,
    spec: WindowSpec,
    t0: usize,
) -> Result<[Spectrum; 5]> {
    let a = build_a(panel, t0, spec)?;
    let sa = svd_eigenvalues(&a)?;
    let b0 = build_weighted(&a, Weighting::None, dataset, t0)?;
    let sb0 = svd_eigenvalues(&b0)?;
    let weighted = |w| reweight(&b0, w, dataset).and_then(|m| svd_eigenvalues(&m));
    Ok([
        sa,
        sb0,
        weighted(Weighting::Volume)?,
        weighted(Weighting::MarketCap)?,
        weighted(Weighting::Leverage)?,
    ])
}
