//! Synthetic 2D Gaussian-mixture benchmarks, latent sampling and the CSV
//! point format shared by every tool.
//!
//! CSV layout: a header `x0,x1,..,x{d-1}` followed by one point per line,
//! each coordinate written with 17 significant digits so that a
//! write/read cycle reproduces the exact bits.

use std::f64::consts::FRAC_PI_4;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MixtureError {
    #[error("mixture needs at least one center")]
    NoCenters,
    #[error("sigma must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("centers {0} and {1} coincide")]
    DuplicateCenter(usize, usize),
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("missing header")]
    MissingHeader,
    #[error("line {line}: bad header {found:?}, expected x0,x1,..")]
    BadHeader { line: usize, found: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Equal-weight isotropic mixture in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    centers: Vec<[f64; 2]>,
    sigma: f64,
}

impl GaussianMixture {
    pub fn new(centers: Vec<[f64; 2]>, sigma: f64) -> Result<Self, MixtureError> {
        if centers.is_empty() {
            return Err(MixtureError::NoCenters);
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(MixtureError::Sigma(sigma));
        }
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                if centers[i] == centers[j] {
                    return Err(MixtureError::DuplicateCenter(i, j));
                }
            }
        }
        Ok(Self { centers, sigma })
    }

    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self, MixtureError> {
        Self::new(self.centers.clone(), sigma)
    }
}

/// Eight components on the radius-2 circle, `(2 cos(i pi/4), 2 sin(i pi/4))`
/// for `i = 1..=8`, standard deviation 0.02.
pub fn ring_mixture() -> GaussianMixture {
    let centers = (1..=8)
        .map(|i| {
            let (s, c) = (i as f64 * FRAC_PI_4).sin_cos();
            [2.0 * c, 2.0 * s]
        })
        .collect();
    GaussianMixture::new(centers, 0.02).expect("ring centers are distinct")
}

/// Twenty-five components at `(2i, 2j)` for `-2 <= i, j <= 2`, standard
/// deviation 0.02.
pub fn grid_mixture() -> GaussianMixture {
    let centers = (-2..=2)
        .flat_map(|i| (-2..=2).map(move |j| [2.0 * i as f64, 2.0 * j as f64]))
        .collect();
    GaussianMixture::new(centers, 0.02).expect("grid centers are distinct")
}

pub fn sample_mixture(m: &GaussianMixture, n: usize, seed: u64) -> Tensor {
    sample_mixture_with(m, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_mixture_with<R: rand::Rng + ?Sized>(m: &GaussianMixture, n: usize, rng: &mut R) -> Tensor {
    sample_mixture_labeled(m, n, rng).0
}

/// Samples together with the index of the component each row came from.
pub fn sample_mixture_labeled<R: rand::Rng + ?Sized>(
    m: &GaussianMixture,
    n: usize,
    rng: &mut R,
) -> (Tensor, Vec<usize>) {
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(0..m.centers.len());
        let c = m.centers[k];
        let dx: f64 = StandardNormal.sample(rng);
        let dy: f64 = StandardNormal.sample(rng);
        data.push(c[0] + m.sigma * dx);
        data.push(c[1] + m.sigma * dy);
        labels.push(k);
    }
    (Tensor::matrix(n, 2, data).expect("sized"), labels)
}

/// Standard-normal latent codes, `n x d_z`.
pub fn sample_latent(n: usize, d_z: usize, seed: u64) -> Tensor {
    sample_latent_with(n, d_z, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_latent_with<R: rand::Rng + ?Sized>(n: usize, d_z: usize, rng: &mut R) -> Tensor {
    let data = (0..n * d_z).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::matrix(n, d_z, data).expect("sized")
}

pub fn write_points_csv<W: Write>(mut w: W, points: &Tensor) -> io::Result<()> {
    let d = points.cols();
    let header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in points.iter_rows().take(points.rows()) {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",")?;
            }
            write!(w, "{v:.16e}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_points_csv<R: BufRead>(r: R) -> Result<Tensor, CsvError> {
    let mut lines = r.lines();
    let header = match lines.next() {
        None => return Err(CsvError::MissingHeader),
        Some(line) => line?,
    };
    let header = header.trim_end_matches('\r');
    if header.trim().is_empty() {
        return Err(CsvError::MissingHeader);
    }
    let dims = header.split(',').count();
    let well_formed = header
        .split(',')
        .enumerate()
        .all(|(i, name)| name.trim() == format!("x{i}"));
    if !well_formed {
        return Err(CsvError::BadHeader {
            line: 1,
            found: header.chars().take(80).collect(),
        });
    }

    let mut data = Vec::new();
    let mut rows = 0;
    let mut pending_blank = None;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            pending_blank.get_or_insert(line_no);
            continue;
        }
        if let Some(blank) = pending_blank {
            return Err(CsvError::Malformed {
                line: blank,
                message: "blank line inside data".into(),
            });
        }
        let mut count = 0;
        for field in line.split(',') {
            count += 1;
            if count > dims {
                break;
            }
            let v: f64 = field.trim().parse().map_err(|_| CsvError::Malformed {
                line: line_no,
                message: format!("field {count} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(CsvError::Malformed {
                    line: line_no,
                    message: format!("field {count} is not finite"),
                });
            }
            data.push(v);
        }
        if count != dims {
            return Err(CsvError::Malformed {
                line: line_no,
                message: format!("expected {dims} fields, found {}", line.split(',').count()),
            });
        }
        rows += 1;
    }
    Ok(Tensor::matrix(rows, dims, data).expect("sized"))
}

pub fn save_points(path: impl AsRef<Path>, points: &Tensor) -> io::Result<()> {
    write_points_csv(BufWriter::new(File::create(path)?), points)
}

pub fn load_points(path: impl AsRef<Path>) -> Result<Tensor, CsvError> {
    read_points_csv(BufReader::new(File::open(path)?))
}
