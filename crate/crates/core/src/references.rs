//! Reference spectral distributions and the Hellinger distance between
//! binned spectra.
//!
//! Three references are available: the analytic Marchenko-Pastur law (R1) and
//! two Monte-Carlo laws built from one-factor equicorrelated coefficients,
//! Gaussian (R2) and unit-variance Student t with 3 degrees of freedom (R3).
//! Simulated windows go through the same centring/scaling and SVD as market
//! data. Every spectrum, simulated or empirical, is rescaled to unit mean
//! eigenvalue before binning so that all matrix kinds share the reference scale.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::ReturnsPanel;
use crate::spectra::{build_a, svd_eigenvalues, Spectrum, WindowSpec};
use crate::stats::percentile;

pub const DEFAULT_BINS: usize = 100;
pub const DEFAULT_REPLICATIONS: usize = 200;
/// Upper bin edge percentile of the pooled in-sample eigenvalues.
pub const EDGE_PERCENTILE: f64 = 99.5;

/// Binned probability masses. Values beyond the last edge land in the top bin,
/// values below the first edge in the bottom bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralHistogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl SpectralHistogram {
    pub fn equal_width_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
        if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cannot build {bins} bins on [{lo}, {hi}]"
            )));
        }
        let w = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|b| lo + w * b as f64).collect();
        edges.push(hi);
        Ok(edges)
    }

    /// `bins` equal-width bins from zero to the given percentile of `pool`.
    pub fn edges_for_pool(pool: &[f64], bins: usize) -> Result<Vec<f64>> {
        if pool.is_empty() {
            return Err(Error::Insufficient {
                what: "pooled eigenvalues for bin edges",
                need: 1,
                have: 0,
            });
        }
        let hi = percentile(pool, EDGE_PERCENTILE);
        let hi = if hi > 0.0 {
            hi
        } else {
            pool.iter().copied().fold(0.0, f64::max).max(1.0)
        };
        Self::equal_width_edges(0.0, hi, bins)
    }

    pub fn from_values(values: &[f64], edges: &[f64]) -> Result<Self> {
        check_edges(edges)?;
        if values.is_empty() {
            return Err(Error::Insufficient {
                what: "values to bin",
                need: 1,
                have: 0,
            });
        }
        let bins = edges.len() - 1;
        let mut counts = vec![0u64; bins];
        for &v in values {
            counts[bin_of(v, edges)] += 1;
        }
        let total = values.len() as f64;
        Ok(Self {
            edges: edges.to_vec(),
            masses: counts.into_iter().map(|c| c as f64 / total).collect(),
        })
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "histogram edges must be strictly increasing with at least one bin".into(),
        ));
    }
    Ok(())
}

fn bin_of(v: f64, edges: &[f64]) -> usize {
    let bins = edges.len() - 1;
    // number of edges <= v, minus one, clamped into [0, bins)
    let k = edges.partition_point(|e| *e <= v);
    k.saturating_sub(1).min(bins - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReferenceKind {
    R1,
    R2,
    R3,
}

impl ReferenceKind {
    pub const ALL: [ReferenceKind; 3] = [ReferenceKind::R1, ReferenceKind::R2, ReferenceKind::R3];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceKind::R1 => "R1",
            ReferenceKind::R2 => "R2",
            ReferenceKind::R3 => "R3",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReferenceParams {
    Analytic {
        n: usize,
        t: usize,
        q: f64,
        sigma2: f64,
    },
    Simulated {
        n: usize,
        t: usize,
        rho: f64,
        replications: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDistribution {
    pub kind: ReferenceKind,
    pub params: ReferenceParams,
    pub histogram: SpectralHistogram,
}

/// Support `[λ-, λ+]` of the Marchenko-Pastur law with ratio `q` and variance `sigma2`.
pub fn marchenko_pastur_support(q: f64, sigma2: f64) -> (f64, f64) {
    let s = q.sqrt();
    (sigma2 * (1.0 - s).powi(2), sigma2 * (1.0 + s).powi(2))
}

pub fn marchenko_pastur_density(lambda: f64, q: f64, sigma2: f64) -> f64 {
    let (lm, lp) = marchenko_pastur_support(q, sigma2);
    if lambda <= lm || lambda >= lp {
        return 0.0;
    }
    ((lp - lambda) * (lambda - lm)).sqrt() / (2.0 * PI * sigma2 * q * lambda)
}

/// Probability mass of the Marchenko-Pastur law on `[a, b]`.
///
/// Integrates in the angle variable `λ = c - h cos θ`, which turns the square-root
/// edge behaviour into a smooth `sin² θ` integrand.
pub fn marchenko_pastur_mass(q: f64, sigma2: f64, a: f64, b: f64) -> f64 {
    let (lm, lp) = marchenko_pastur_support(q, sigma2);
    let a = a.max(lm);
    let b = b.min(lp);
    if b <= a {
        return 0.0;
    }
    let c = 0.5 * (lp + lm);
    let h = 0.5 * (lp - lm);
    let theta = |x: f64| ((c - x) / h).clamp(-1.0, 1.0).acos();
    let f = |th: f64| {
        let lambda = c - h * th.cos();
        let s = th.sin();
        h * h * s * s / (2.0 * PI * sigma2 * q * lambda)
    };
    adaptive_simpson(&f, theta(a), theta(b), 1e-13, 50)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Marchenko-Pastur law for an `n x t` window binned on `edges`.
pub fn marchenko_pastur_histogram(
    n: usize,
    t: usize,
    sigma2: f64,
    edges: &[f64],
) -> Result<SpectralHistogram> {
    check_edges(edges)?;
    let q = n as f64 / t as f64;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Marchenko-Pastur ratio q = N/T must lie in (0, 1), got {q}"
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter("sigma2 must be positive".into()));
    }
    let bins = edges.len() - 1;
    let mut masses: Vec<f64> = (0..bins)
        .map(|b| {
            let lo = if b == 0 { f64::NEG_INFINITY } else { edges[b] };
            let hi = if b == bins - 1 { f64::INFINITY } else { edges[b + 1] };
            marchenko_pastur_mass(q, sigma2, lo, hi)
        })
        .collect();
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    Ok(SpectralHistogram {
        edges: edges.to_vec(),
        masses,
    })
}

pub fn marchenko_pastur_reference(
    n: usize,
    t: usize,
    edges: &[f64],
) -> Result<ReferenceDistribution> {
    Ok(ReferenceDistribution {
        kind: ReferenceKind::R1,
        params: ReferenceParams::Analytic {
            n,
            t,
            q: n as f64 / t as f64,
            sigma2: 1.0,
        },
        histogram: marchenko_pastur_histogram(n, t, 1.0, edges)?,
    })
}

/// Mean off-diagonal Pearson correlation of the panel's log-returns, clamped to `[0, 0.99]`.
pub fn mean_long_term_correlation(panel: &ReturnsPanel) -> Result<f64> {
    let n = panel.n_assets();
    if n < 2 {
        return Err(Error::Insufficient {
            what: "assets for correlation",
            need: 2,
            have: n,
        });
    }
    let obs = panel.n_obs();
    if obs < 30 {
        return Err(Error::Insufficient {
            what: "observations for correlation",
            need: 30,
            have: obs,
        });
    }
    let standardized = panel
        .returns
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let m = r.iter().sum::<f64>() / obs as f64;
            let c: Vec<f64> = r.iter().map(|x| x - m).collect();
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = r.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            if !(norm > 1e-13 * scale * (obs as f64).sqrt()) || norm == 0.0 {
                return Err(Error::ZeroVariance { row: i });
            }
            Ok(c.into_iter().map(|x| x / norm).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += standardized[i]
                .iter()
                .zip(&standardized[j])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((total / pairs).clamp(0.0, 0.99))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Gaussian,
    /// Student t with 3 degrees of freedom, scaled to unit variance.
    Student3,
}

/// Draws one-factor equicorrelated coefficients `sqrt(ρ) z_j + sqrt(1-ρ) ε_ij`.
pub struct OneFactorSampler {
    tail: Tail,
    rho_loading: f64,
    idio_loading: f64,
    student: StudentT<f64>,
}

impl OneFactorSampler {
    pub fn new(tail: Tail, rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("rho must lie in [0, 1), got {rho}")));
        }
        Ok(Self {
            tail,
            rho_loading: rho.sqrt(),
            idio_loading: (1.0 - rho).sqrt(),
            student: StudentT::new(3.0).expect("valid degrees of freedom"),
        })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.tail {
            Tail::Gaussian => rng.sample(StandardNormal),
            Tail::Student3 => rng.sample(self.student) / 3f64.sqrt(),
        }
    }

    /// `n` coefficients sharing one common factor draw.
    pub fn draw_cross_section<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let z = self.draw(rng);
        for x in out.iter_mut() {
            *x = self.rho_loading * z + self.idio_loading * self.draw(rng);
        }
    }
}

/// Deterministic RNG substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pooled unit-mean eigenvalues of simulated windows, in replication order.
pub fn simulate_pool(
    kind: ReferenceKind,
    n: usize,
    t: usize,
    rho: f64,
    replications: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let tail = match kind {
        ReferenceKind::R1 => {
            return Err(Error::InvalidParameter(
                "R1 is analytic; use marchenko_pastur_histogram".into(),
            ))
        }
        ReferenceKind::R2 => Tail::Gaussian,
        ReferenceKind::R3 => Tail::Student3,
    };
    if replications == 0 {
        return Err(Error::InvalidParameter("replications must be >= 1".into()));
    }
    let spec = WindowSpec::new(n, t)?;
    let sampler = OneFactorSampler::new(tail, rho)?;
    let spectra = (0..replications)
        .into_par_iter()
        .map(|rep| simulate_window_spectrum(&sampler, spec, substream(seed, rep as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(spectra.into_iter().flat_map(|s| s.eigenvalues).collect())
}

fn simulate_window_spectrum(
    sampler: &OneFactorSampler,
    spec: WindowSpec,
    mut rng: ChaCha8Rng,
) -> Result<Spectrum> {
    let WindowSpec { n, t } = spec;
    let mut rows = vec![vec![0.0; t]; n];
    let mut column = vec![0.0; n];
    for j in 0..t {
        sampler.draw_cross_section(&mut rng, &mut column);
        for (row, x) in rows.iter_mut().zip(&column) {
            row[j] = *x;
        }
    }
    let panel = ReturnsPanel {
        returns: rows,
        index_returns: vec![0.0; t],
    };
    let a = build_a(&panel, t + 1, spec)?;
    Ok(svd_eigenvalues(&a)?.unit_mean())
}

/// Monte-Carlo reference R2 or R3 binned on `edges`.
pub fn simulate_reference(
    kind: ReferenceKind,
    n: usize,
    t: usize,
    rho: f64,
    replications: usize,
    seed: u64,
    edges: &[f64],
) -> Result<ReferenceDistribution> {
    let pool = simulate_pool(kind, n, t, rho, replications, seed)?;
    Ok(ReferenceDistribution {
        kind,
        params: ReferenceParams::Simulated {
            n,
            t,
            rho,
            replications,
            seed,
        },
        histogram: SpectralHistogram::from_values(&pool, edges)?,
    })
}

/// Probability-normalised Hellinger distance, in `[0, 1]`.
pub fn hellinger(p: &SpectralHistogram, q: &SpectralHistogram) -> Result<f64> {
    if p.edges != q.edges || p.masses.len() != q.masses.len() {
        return Err(Error::EdgeMismatch);
    }
    let ss: f64 = p
        .masses
        .iter()
        .zip(&q.masses)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok((0.5 * ss).sqrt().min(1.0))
}
