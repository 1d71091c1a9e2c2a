//! Latent neighbourhood sizes and mode attraction/distraction tests.
//!
//! For a generator pair `(G_t, G_t1)` around one update, the neighbourhood
//! radius of a latent `z1` is estimated as
//!
//! ```text
//! r_hat = eps_hat / (2 * min_z (|G_t(z1) - G_t(z)| + |G_t1(z1) - G_t1(z)|) / |z1 - z|)
//! ```
//!
//! with the minimum taken over a finite probe set.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cfg::{disc_input_grad, train, CfgError, Penalty, Snapshot, TrainConfig, TrainError, TrainRun};
use crate::data::{sample_latent_with, GaussianMixture};
use crate::nn::{MlpParams, NnError};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum NeighborhoodError {
    #[error("probe {index} coincides with z1")]
    CoincidentProbe { index: usize },
    #[error("need at least 2 probes, got {0}")]
    TooFewProbes(usize),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("latent width {got} does not match generator input {expected}")]
    LatentWidth { expected: usize, got: usize },
    #[error("generators map every probe onto z1's image; radius is unbounded")]
    Degenerate,
    #[error("no centers given")]
    NoCenters,
    #[error("need at least {need} seeds, got {got}")]
    TooFewSeeds { need: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Cfg(#[from] CfgError),
}

type Result<T> = std::result::Result<T, NeighborhoodError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NSizeEstimate {
    pub r_hat: f64,
    pub epsilon_hat: f64,
    pub probe_count: usize,
    pub ratio_min: f64,
}

impl NSizeEstimate {
    fn from_ratio(ratio_min: f64, epsilon_hat: f64, probe_count: usize) -> Result<Self> {
        if !(ratio_min > 0.0) {
            return Err(NeighborhoodError::Degenerate);
        }
        Ok(Self {
            r_hat: epsilon_hat / (2.0 * ratio_min),
            epsilon_hat,
            probe_count,
            ratio_min,
        })
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(NeighborhoodError::NonPositive { name, value })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_latents(g: &MlpParams, z1: &[f64], probes: &Tensor, epsilon_hat: f64) -> Result<Vec<f64>> {
    positive("epsilon_hat", epsilon_hat)?;
    for w in [z1.len(), probes.cols()] {
        if w != g.input_dim() {
            return Err(NeighborhoodError::LatentWidth {
                expected: g.input_dim(),
                got: w,
            });
        }
    }
    if probes.rows() < 2 {
        return Err(NeighborhoodError::TooFewProbes(probes.rows()));
    }
    probes
        .iter_rows()
        .take(probes.rows())
        .enumerate()
        .map(|(index, z)| {
            let d = dist(z1, z);
            if d > 1e-9 {
                Ok(d)
            } else {
                Err(NeighborhoodError::CoincidentProbe { index })
            }
        })
        .collect()
}

fn image_of(g: &MlpParams, z1: &[f64]) -> Result<Vec<f64>> {
    Ok(g.forward(&Tensor::row_vector(z1))?.into_data())
}

/// Minimum over probes of the two-generator ratio sum.
fn ratio_min_pair(
    at: &Tensor,
    at1: &Tensor,
    y: &[f64],
    y1: &[f64],
    dz: &[f64],
) -> f64 {
    at.iter_rows()
        .zip(at1.iter_rows())
        .zip(dz)
        .map(|((a, b), &d)| (dist(y, a) + dist(y1, b)) / d)
        .fold(f64::INFINITY, f64::min)
}

/// Neighbourhood radius of `z1` for the generator pair `(g_t, g_t1)`.
pub fn nsize_estimate(
    g_t: &MlpParams,
    g_t1: &MlpParams,
    z1: &[f64],
    probes: &Tensor,
    epsilon_hat: f64,
) -> Result<NSizeEstimate> {
    let dz = check_latents(g_t, z1, probes, epsilon_hat)?;
    let ratio = ratio_min_pair(
        &g_t.forward(probes)?,
        &g_t1.forward(probes)?,
        &image_of(g_t, z1)?,
        &image_of(g_t1, z1)?,
        &dz,
    );
    NSizeEstimate::from_ratio(ratio, epsilon_hat, probes.rows())
}

/// Functional-gradient transport parameters used by [`nsize_gp_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transport {
    pub penalty: Penalty,
    pub delta: f64,
    pub eta_m: f64,
    pub steps: usize,
}

/// Sum over the `steps` transport positions of the penalty-adjusted
/// gradient magnitude, one value per row of `x`.
fn adjusted_path_sums(x: &Tensor, d: &MlpParams, t: &Transport) -> Result<Vec<f64>> {
    let mut x = x.clone();
    let mut sums = vec![0.0; x.rows()];
    let step = t.eta_m * t.delta;
    for _ in 0..t.steps {
        let g = disc_input_grad(d, &x)?;
        for (s, row) in sums.iter_mut().zip(g.iter_rows()) {
            *s += t.penalty.adjusted_norm(row.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        x = x.zip_map(&g, |a, b| a + step * b);
    }
    Ok(sums)
}

/// Neighbourhood radius bound in which the updated generator is replaced by
/// `steps` transport steps along the discriminator gradient and its movement
/// is measured through the penalty-adjusted magnitudes `|g - 1|`, `g`, or
/// `g + eps'`.
///
/// The magnitudes are evaluated at each position `x_0, .., x_{M-1}` of the
/// transport path starting from `G_t(z)`.
pub fn nsize_gp_bound(
    g_t: &MlpParams,
    d: &MlpParams,
    transport: &Transport,
    z1: &[f64],
    probes: &Tensor,
    epsilon_hat: f64,
) -> Result<NSizeEstimate> {
    let dz = check_latents(g_t, z1, probes, epsilon_hat)?;
    positive("delta", transport.delta)?;
    positive("eta_m", transport.eta_m)?;
    let at = g_t.forward(probes)?;
    let y = image_of(g_t, z1)?;
    let q = adjusted_path_sums(&at, d, transport)?;
    let q1 = adjusted_path_sums(&Tensor::row_vector(&y), d, transport)?[0];
    let scale = transport.eta_m * transport.delta;
    let ratio = at
        .iter_rows()
        .zip(&q)
        .zip(&dz)
        .map(|((a, &qz), &d)| (2.0 * dist(&y, a) + scale * (qz + q1)) / d)
        .fold(f64::INFINITY, f64::min);
    NSizeEstimate::from_ratio(ratio, epsilon_hat, probes.rows())
}

/// Sample-to-mode assignment plus per-latent attraction flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    pub alpha: f64,
    pub assignments: Vec<Option<usize>>,
    pub attracted_flags: Vec<bool>,
    pub distracted_flags: Vec<bool>,
}

impl ModeReport {
    pub fn assigned_fraction(&self) -> f64 {
        if self.assignments.is_empty() {
            return 0.0;
        }
        self.assignments.iter().filter(|a| a.is_some()).count() as f64 / self.assignments.len() as f64
    }
}

fn nearest(p: &[f64], centers: &[[f64; 2]], skip: Option<usize>) -> Option<(usize, f64)> {
    centers
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != skip)
        .map(|(i, c)| (i, dist(p, c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Assigns each sample to its nearest center when that center is within
/// `alpha`.
pub fn assign_modes(samples: &Tensor, centers: &[[f64; 2]], alpha: f64) -> Result<ModeReport> {
    positive("alpha", alpha)?;
    if centers.is_empty() {
        return Err(NeighborhoodError::NoCenters);
    }
    let assignments = samples
        .iter_rows()
        .take(samples.rows())
        .map(|s| nearest(s, centers, None).and_then(|(i, d)| (d <= alpha).then_some(i)))
        .collect();
    Ok(ModeReport {
        alpha,
        assignments,
        attracted_flags: Vec::new(),
        distracted_flags: Vec::new(),
    })
}

/// `|y_k - x_t1| + eps_hat < |y_k - x_t|` on already generated points.
pub fn attracted_points(y_k: &[f64], x_t: &[f64], x_t1: &[f64], epsilon_hat: f64) -> bool {
    dist(y_k, x_t1) + epsilon_hat < dist(y_k, x_t)
}

/// `|y_m - x_t1| + (eps_hat / 2 - 2 alpha) < |y_k - x_t|` on already
/// generated points.
pub fn distracted_points(y_k: &[f64], y_m: &[f64], x_t: &[f64], x_t1: &[f64], epsilon_hat: f64, alpha: f64) -> bool {
    dist(y_m, x_t1) + (epsilon_hat / 2.0 - 2.0 * alpha) < dist(y_k, x_t)
}

/// Whether the update `G_t -> G_t1` moves `G(z)` towards the mode point
/// `y_k` by more than `epsilon_hat`.
pub fn attracted(z: &[f64], y_k: &[f64], g_t: &MlpParams, g_t1: &MlpParams, epsilon_hat: f64) -> Result<bool> {
    positive("epsilon_hat", epsilon_hat)?;
    Ok(attracted_points(y_k, &image_of(g_t, z)?, &image_of(g_t1, z)?, epsilon_hat))
}

/// Whether the update moves `G(z)` from near `y_k` to near the out-of-mode
/// point `y_m`.
pub fn distracted(
    z: &[f64],
    y_k: &[f64],
    y_m: &[f64],
    g_t: &MlpParams,
    g_t1: &MlpParams,
    epsilon_hat: f64,
    alpha: f64,
) -> Result<bool> {
    positive("epsilon_hat", epsilon_hat)?;
    positive("alpha", alpha)?;
    Ok(distracted_points(
        y_k,
        y_m,
        &image_of(g_t, z)?,
        &image_of(g_t1, z)?,
        epsilon_hat,
        alpha,
    ))
}

/// [`assign_modes`] on `G_t1(latents)` with attraction and distraction flags
/// for every latent.
///
/// A latent is tested for attraction towards the center nearest `G_t1(z)`,
/// and for distraction from the center nearest `G_t(z)` towards the nearest
/// other center.
pub fn mode_report(
    g_t: &MlpParams,
    g_t1: &MlpParams,
    latents: &Tensor,
    centers: &[[f64; 2]],
    alpha: f64,
    epsilon_hat: f64,
) -> Result<ModeReport> {
    positive("epsilon_hat", epsilon_hat)?;
    let xt = g_t.forward(latents)?;
    let xt1 = g_t1.forward(latents)?;
    let mut report = assign_modes(&xt1, centers, alpha)?;
    for (a, b) in xt.iter_rows().zip(xt1.iter_rows()).take(latents.rows()) {
        let (to, _) = nearest(b, centers, None).expect("centers non-empty");
        report.attracted_flags.push(attracted_points(&centers[to], a, b, epsilon_hat));
        let (from, _) = nearest(a, centers, None).expect("centers non-empty");
        let flag = nearest(b, centers, Some(from))
            .is_some_and(|(other, _)| distracted_points(&centers[from], &centers[other], a, b, epsilon_hat, alpha));
        report.distracted_flags.push(flag);
    }
    Ok(report)
}

/// Fraction of gradient components `d D / d x_j` that are `<= 0` over the
/// rows of `points`.
pub fn nonpositive_gradient_fraction(d: &MlpParams, points: &Tensor) -> Result<f64> {
    let g = disc_input_grad(d, points)?;
    if g.is_empty() {
        return Ok(0.0);
    }
    Ok(g.data().iter().filter(|&&v| v <= 0.0).count() as f64 / g.len() as f64)
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Sampling budget for radius estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NSizeOptions {
    pub epsilon_hat: f64,
    pub probes: usize,
    pub z1_draws: usize,
    pub seed: u64,
}

impl Default for NSizeOptions {
    fn default() -> Self {
        Self {
            epsilon_hat: 0.1,
            probes: 4096,
            z1_draws: 64,
            seed: 0,
        }
    }
}

/// Median radius of one generator pair over `z1_draws` random `z1`.
pub fn median_nsize(g_t: &MlpParams, g_t1: &MlpParams, opts: &NSizeOptions) -> Result<NSizeEstimate> {
    positive("epsilon_hat", opts.epsilon_hat)?;
    if opts.probes < 2 {
        return Err(NeighborhoodError::TooFewProbes(opts.probes));
    }
    let dz = g_t.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let probes = sample_latent_with(opts.probes, dz, &mut rng);
    let z1s = sample_latent_with(opts.z1_draws.max(1), dz, &mut rng);
    let (at, at1) = (g_t.forward(&probes)?, g_t1.forward(&probes)?);
    let (yt, yt1) = (g_t.forward(&z1s)?, g_t1.forward(&z1s)?);
    let mut ratios = Vec::with_capacity(z1s.rows());
    for (i, z1) in z1s.iter_rows().take(z1s.rows()).enumerate() {
        let d = check_latents(g_t, z1, &probes, opts.epsilon_hat)?;
        ratios.push(ratio_min_pair(&at, &at1, yt.row(i), yt1.row(i), &d));
    }
    NSizeEstimate::from_ratio(median(&mut ratios), opts.epsilon_hat, opts.probes)
}

/// One row of the ordering table.
#[derive(Debug, Clone, PartialEq)]
pub struct NSizeRow {
    pub penalty: String,
    pub seed: u64,
    /// Last epoch reached: the final epoch, or the epoch that diverged.
    pub epoch: usize,
    /// `None` for runs that diverged.
    pub estimate: Option<NSizeSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NSizeSummary {
    pub r_hat: f64,
    pub ratio_min: f64,
    pub grad_norm_mean: f64,
}

/// Median radius over a run's snapshot pairs, with the mean logged
/// gradient norm at those epochs.
pub fn summarize_snapshots(snapshots: &[Snapshot], opts: &NSizeOptions) -> Result<NSizeSummary> {
    let mut ratios = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        ratios.push(median_nsize(&s.before, &s.after, opts)?.ratio_min);
    }
    let grad_norm_mean = snapshots.iter().map(|s| s.grad_norm_mean).sum::<f64>() / snapshots.len().max(1) as f64;
    let ratio_min = median(&mut ratios);
    if !(ratio_min > 0.0) {
        return Err(NeighborhoodError::Degenerate);
    }
    Ok(NSizeSummary {
        r_hat: opts.epsilon_hat / (2.0 * ratio_min),
        ratio_min,
        grad_norm_mean,
    })
}

/// Row for a finished (or diverged) run.
pub fn nsize_row(
    penalty: &Penalty,
    seed: u64,
    run: &std::result::Result<TrainRun, TrainError>,
    opts: &NSizeOptions,
) -> Result<NSizeRow> {
    let label = penalty.kind.label().to_string();
    Ok(match run {
        Ok(run) => NSizeRow {
            penalty: label,
            seed,
            epoch: run.log.records.last().map_or(0, |r| r.epoch),
            estimate: Some(summarize_snapshots(&run.snapshots, opts)?),
        },
        Err(TrainError::Diverged { epoch, .. }) => NSizeRow {
            penalty: label,
            seed,
            epoch: *epoch,
            estimate: None,
        },
        Err(TrainError::Cfg(e)) => return Err(NeighborhoodError::Cfg(CfgError::Config(e.to_string()))),
    })
}

/// Trains one model per `(penalty, seed)` from `template` and estimates
/// their neighbourhood radii.
pub fn ordering_experiment(
    template: &TrainConfig,
    mixture: &GaussianMixture,
    penalties: &[Penalty],
    seeds: &[u64],
    opts: &NSizeOptions,
) -> Result<Vec<NSizeRow>> {
    if seeds.len() < 3 {
        return Err(NeighborhoodError::TooFewSeeds {
            need: 3,
            got: seeds.len(),
        });
    }
    let mut rows = Vec::with_capacity(penalties.len() * seeds.len());
    for p in penalties {
        for &seed in seeds {
            let cfg = TrainConfig {
                penalty: *p,
                seed,
                ..template.clone()
            };
            let run = train(&cfg, mixture);
            if let Err(TrainError::Cfg(e)) = run {
                return Err(e.into());
            }
            rows.push(nsize_row(p, seed, &run, opts)?);
        }
    }
    Ok(rows)
}

/// Median `r_hat` per penalty label over rows that trained, in first-seen
/// label order.
pub fn median_by_penalty(rows: &[NSizeRow]) -> Vec<(String, f64)> {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.penalty.as_str()) {
            labels.push(&r.penalty);
        }
    }
    labels
        .into_iter()
        .map(|l| {
            let mut v: Vec<f64> = rows
                .iter()
                .filter(|r| r.penalty == l)
                .filter_map(|r| r.estimate.map(|e| e.r_hat))
                .collect();
            (l.to_string(), median(&mut v))
        })
        .collect()
}

pub const NSIZE_HEADER: &str = "penalty,seed,epoch,r_hat,ratio_min,grad_norm_mean";

pub fn write_nsize_csv<W: Write>(mut w: W, rows: &[NSizeRow]) -> io::Result<()> {
    writeln!(w, "{NSIZE_HEADER}")?;
    for r in rows {
        match r.estimate {
            Some(e) => writeln!(
                w,
                "{},{},{},{:.10e},{:.10e},{:.10e}",
                r.penalty, r.seed, r.epoch, e.r_hat, e.ratio_min, e.grad_norm_mean
            )?,
            None => writeln!(w, "{},{},{},untrained,untrained,untrained", r.penalty, r.seed, r.epoch)?,
        }
    }
    w.flush()
}
