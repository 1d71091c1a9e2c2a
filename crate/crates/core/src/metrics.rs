//! Sample-quality metrics for 2D point clouds.

use thiserror::Error;

use crate::data::GaussianMixture;
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("expected 2D points, got {0} columns")]
    Dimension(usize),
    #[error("k must be >= 1")]
    ZeroK,
    #[error("{0} must be >= 1")]
    ZeroCount(&'static str),
}

fn check_2d(x: &Tensor, need: usize) -> Result<(), MetricsError> {
    if x.cols() != 2 {
        return Err(MetricsError::Dimension(x.cols()));
    }
    if x.rows() < need {
        return Err(MetricsError::TooFewPoints { need, got: x.rows() });
    }
    Ok(())
}

/// Mean and (unbiased) covariance of a 2D sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub mean: [f64; 2],
    /// Row-major `[[s00, s01], [s10, s11]]`.
    pub covariance: [[f64; 2]; 2],
}

impl GaussianFit {
    pub fn fit(x: &Tensor) -> Result<Self, MetricsError> {
        check_2d(x, 2)?;
        let n = x.rows() as f64;
        let mut mean = [0.0; 2];
        for r in x.iter_rows() {
            mean[0] += r[0];
            mean[1] += r[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
        for r in x.iter_rows() {
            let (a, b) = (r[0] - mean[0], r[1] - mean[1]);
            s00 += a * a;
            s01 += a * b;
            s11 += b * b;
        }
        let d = n - 1.0;
        Ok(Self {
            mean,
            covariance: [[s00 / d, s01 / d], [s01 / d, s11 / d]],
        })
    }
}

type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Eigenvalues (descending) and unit eigenvectors (columns) of a symmetric
/// 2x2 matrix.
fn sym_eigen(a: &Mat2) -> ([f64; 2], Mat2) {
    let (p, q, r) = (a[0][0], 0.5 * (a[0][1] + a[1][0]), a[1][1]);
    let mid = 0.5 * (p + r);
    let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let (l1, l2) = (mid + rad, mid - rad);
    if q == 0.0 {
        return if p >= r {
            ([p, r], [[1.0, 0.0], [0.0, 1.0]])
        } else {
            ([r, p], [[0.0, 1.0], [1.0, 0.0]])
        };
    }
    // (q, l1 - p) and (l1 - r, q) both solve for l1; take the longer one
    let (v1, v2) = if (l1 - p).abs() > (l1 - r).abs() { (q, l1 - p) } else { (l1 - r, q) };
    let n = v1.hypot(v2);
    let (c, s) = (v1 / n, v2 / n);
    ([l1, l2], [[c, -s], [s, c]])
}

/// Square root of a symmetric positive semi-definite 2x2 matrix, with
/// negative eigenvalues clamped to zero.
fn sym_sqrt(a: &Mat2) -> Mat2 {
    let (l, v) = sym_eigen(a);
    let s = [l[0].max(0.0).sqrt(), l[1].max(0.0).sqrt()];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = v[i][0] * s[0] * v[j][0] + v[i][1] * s[1] * v[j][1];
        }
    }
    out
}

/// `Tr((S1 S2)^(1/2))`, through the symmetric product `S1^(1/2) S2 S1^(1/2)`
/// which shares its eigenvalues.
fn trace_sqrt_product(s1: &Mat2, s2: &Mat2) -> f64 {
    let r = sym_sqrt(s1);
    let m = mat_mul(&mat_mul(&r, s2), &r);
    let (l, _) = sym_eigen(&m);
    l[0].max(0.0).sqrt() + l[1].max(0.0).sqrt()
}

/// Squared Fréchet distance between Gaussian fits of two samples.
pub fn frechet_from_fits(a: &GaussianFit, b: &GaussianFit) -> f64 {
    let dm = (a.mean[0] - b.mean[0]).powi(2) + (a.mean[1] - b.mean[1]).powi(2);
    let (s1, s2) = (&a.covariance, &b.covariance);
    let tr = s1[0][0] + s1[1][1] + s2[0][0] + s2[1][1];
    (dm + tr - 2.0 * trace_sqrt_product(s1, s2)).max(0.0)
}

/// Squared Fréchet distance between Gaussian fits of `p` and `q`.
pub fn frechet_2d(p: &Tensor, q: &Tensor) -> Result<f64, MetricsError> {
    check_2d(p, 3)?;
    check_2d(q, 3)?;
    Ok(frechet_from_fits(&GaussianFit::fit(p)?, &GaussianFit::fit(q)?))
}

/// Mode coverage of `samples` against the components of `mixture`.
///
/// Returns `(modes_hit, high_quality_fraction)`: a mode is hit when at least
/// `min_count` samples lie within `radius_multiplier * sigma` of its center,
/// and a sample is high quality when it lies within that radius of any
/// center.
pub fn mode_coverage(
    samples: &Tensor,
    mixture: &GaussianMixture,
    radius_multiplier: f64,
    min_count: usize,
) -> Result<(usize, f64), MetricsError> {
    if min_count == 0 {
        return Err(MetricsError::ZeroCount("min_count"));
    }
    check_2d(samples, 0)?;
    if samples.rows() == 0 {
        return Ok((0, 0.0));
    }
    let r2 = (radius_multiplier * mixture.sigma()).powi(2);
    let mut counts = vec![0usize; mixture.len()];
    let mut good = 0usize;
    for s in samples.iter_rows() {
        let nearest = mixture
            .centers()
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (s[0] - c[0]).powi(2) + (s[1] - c[1]).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, d2)) = nearest {
            if d2 <= r2 {
                counts[i] += 1;
                good += 1;
            }
        }
    }
    let hit = counts.iter().filter(|&&c| c >= min_count).count();
    Ok((hit, good as f64 / samples.rows() as f64))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Squared distance from each point to its `k`-th nearest other point.
fn knn_radii2(x: &Tensor, k: usize) -> Vec<f64> {
    let rows: Vec<&[f64]> = x.iter_rows().take(x.rows()).collect();
    let mut buf = Vec::with_capacity(rows.len());
    rows.iter()
        .enumerate()
        .map(|(i, a)| {
            buf.clear();
            buf.extend(rows.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, b)| dist2(a, b)));
            let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

/// Fraction of `queries` inside the union of the k-NN balls of `support`.
fn coverage(support: &Tensor, radii2: &[f64], queries: &Tensor) -> f64 {
    let inside = queries
        .iter_rows()
        .take(queries.rows())
        .filter(|q| support.iter_rows().zip(radii2).any(|(s, &r2)| dist2(q, s) <= r2))
        .count();
    inside as f64 / queries.rows() as f64
}

/// k-NN precision and recall of `fake` against `real`.
pub fn knn_precision_recall(real: &Tensor, fake: &Tensor, k: usize) -> Result<(f64, f64), MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    check_2d(real, k + 1)?;
    check_2d(fake, k + 1)?;
    let precision = coverage(real, &knn_radii2(real, k), fake);
    let recall = coverage(fake, &knn_radii2(fake, k), real);
    Ok((precision, recall))
}
