#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted descending.
pub fn jacobi_eigenvalues(sym: &DMatrix<f64>) -> Vec<f64> {
    let n = sym.nrows();
    let mut a = sym.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= 1e-32 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Eigenvalues of `m mᵀ` formed explicitly.
pub fn gram_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    jacobi_eigenvalues(&(m * m.transpose()))
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Largest peak-to-later-trough loss over every ordered pair.
pub fn brute_mdd(prices: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..prices.len() {
        for j in i..prices.len() {
            worst = worst.max(1.0 - prices[j] / prices[i]);
        }
    }
    worst
}

/// Linear-interpolation percentile on a fresh sort.
pub fn oracle_percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let below = rank.floor() as usize;
    let above = (below + 1).min(v.len() - 1);
    v[below] + (rank - below as f64) * (v[above] - v[below])
}

/// Best survivor count over every window `[lo, lo + width]` with `lo` at a
/// survivor, a survivor minus the width, or a range endpoint.
pub fn brute_zone_count(values: &[f64], survivor: &[bool], clip: (f64, f64), width: f64) -> usize {
    let inside: Vec<f64> = values
        .iter()
        .zip(survivor)
        .filter(|(v, s)| **s && **v >= clip.0 && **v <= clip.1)
        .map(|(v, _)| *v)
        .collect();
    let mut los: Vec<f64> = inside.clone();
    los.extend(inside.iter().map(|v| v - width));
    los.push(clip.0);
    los.push(clip.1 - width);
    los.iter()
        .map(|&lo| inside.iter().filter(|&&v| v >= lo && v <= lo + width).count())
        .max()
        .unwrap_or(0)
}
