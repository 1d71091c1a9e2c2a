//! Subcommand bodies. Each validates its inputs before writing anything.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use licfg::cfg::{train_with, Penalty, PenaltyKind, Snapshot, TrainError, TrainRun};
use licfg::data::{load_points, sample_latent, sample_mixture, save_points, CsvError, GaussianMixture};
use licfg::dynamics::{dirac_simulate, DiracConfig, DynamicsError, Integrator};
use licfg::metrics::{frechet_2d, knn_precision_recall, mode_coverage, MetricsError};
use licfg::neighborhood::{median_by_penalty, ordering_experiment, write_nsize_csv, NeighborhoodError};
use licfg::nn::checkpoint::{self, CheckpointError};
use licfg::nn::MlpParams;
use licfg::tensor::Tensor;
use thiserror::Error;

use crate::config::{ConfigError, ConfigFile, Dataset, OutputSettings};
use crate::svg::emit_scatter_svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNTRAINED: i32 = 2;

/// Latent and reference-sample streams used for evaluation are offset from
/// the training seed so they never coincide with training draws.
const EVAL_LATENT_OFFSET: u64 = 0x6c61_7465_6e74;
const EVAL_REAL_OFFSET: u64 = 0x7265_616c;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: CsvError },
    #[error("{path}: {source}")]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn save_ckpt(p: &MlpParams, path: &Path) -> Result<(), CliError> {
    checkpoint::save(p, path).map_err(|source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_ckpt(path: &Path) -> Result<MlpParams, CliError> {
    checkpoint::load(path).map_err(|source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

fn load_csv(path: &Path) -> Result<Tensor, CliError> {
    load_points(path).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Sample-quality summary of a generator or a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub fd2: f64,
    pub precision: f64,
    pub recall: f64,
    pub modes_hit: usize,
    pub hq_fraction: f64,
}

impl EvalRow {
    pub const HEADER: &'static str = "fd2,precision,recall,modes_hit,hq_fraction";

    pub fn csv(&self) -> String {
        format!(
            "{:.10e},{:.6},{:.6},{},{:.6}",
            self.fd2, self.precision, self.recall, self.modes_hit, self.hq_fraction
        )
    }
}

pub fn evaluate_points(
    fake: &Tensor,
    real: &Tensor,
    mixture: &GaussianMixture,
    k: usize,
    min_count: usize,
) -> Result<EvalRow, CliError> {
    let fd2 = frechet_2d(real, fake)?;
    let (precision, recall) = knn_precision_recall(real, fake, k)?;
    let (modes_hit, hq_fraction) = mode_coverage(fake, mixture, 3.0, min_count)?;
    Ok(EvalRow {
        fd2,
        precision,
        recall,
        modes_hit,
        hq_fraction,
    })
}

/// Samples `eval_samples` points from the generator and scores them against
/// as many fresh real samples.
pub fn evaluate_generator(
    g: &MlpParams,
    mixture: &GaussianMixture,
    out: &OutputSettings,
    seed: u64,
) -> Result<(Tensor, EvalRow), CliError> {
    let z = sample_latent(out.eval_samples, g.input_dim(), seed ^ EVAL_LATENT_OFFSET);
    let fake = g
        .forward(&z)
        .map_err(|e| CliError::Usage(format!("generator does not accept {}-dim latents: {e}", g.input_dim())))?;
    let real = sample_mixture(mixture, out.eval_samples, seed ^ EVAL_REAL_OFFSET);
    let row = evaluate_points(&fake, &real, mixture, out.knn_k, out.min_count)?;
    Ok((fake, row))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainOutcome {
    Trained(EvalRow),
    Untrained { epoch: usize, quantity: &'static str },
}

impl TrainOutcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            TrainOutcome::Trained(_) => EXIT_OK,
            TrainOutcome::Untrained { .. } => EXIT_UNTRAINED,
        }
    }
}

pub const STATUS_FILE: &str = "status";
pub const LOG_FILE: &str = "train_log.csv";

fn snapshot_path(dir: &Path, epoch: usize, which: &str) -> PathBuf {
    dir.join(format!("epoch_{epoch:06}_{which}.ckpt"))
}

fn write_snapshots(dir: &Path, snapshots: &[Snapshot]) -> Result<(), CliError> {
    create_dir(dir)?;
    for s in snapshots {
        save_ckpt(&s.before, &snapshot_path(dir, s.epoch, "before"))?;
        save_ckpt(&s.after, &snapshot_path(dir, s.epoch, "after"))?;
        save_ckpt(&s.discriminator, &snapshot_path(dir, s.epoch, "disc"))?;
    }
    write_file(&dir.join("index.csv"), |w| {
        writeln!(w, "epoch,grad_norm_mean")?;
        for s in snapshots {
            writeln!(w, "{},{:.16e}", s.epoch, s.grad_norm_mean)?;
        }
        Ok(())
    })
}

/// Reads back the snapshots written by [`cmd_train`].
pub fn load_snapshots(dir: &Path) -> Result<Vec<Snapshot>, CliError> {
    let index = dir.join("index.csv");
    let text = fs::read_to_string(&index).map_err(io_err(&index))?;
    let bad = |line: usize| CliError::Usage(format!("{}: malformed line {line}", index.display()));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let (e, g) = line.split_once(',').ok_or_else(|| bad(i + 1))?;
        let epoch: usize = e.parse().map_err(|_| bad(i + 1))?;
        let grad_norm_mean: f64 = g.parse().map_err(|_| bad(i + 1))?;
        out.push(Snapshot {
            epoch,
            before: load_ckpt(&snapshot_path(dir, epoch, "before"))?,
            after: load_ckpt(&snapshot_path(dir, epoch, "after"))?,
            discriminator: load_ckpt(&snapshot_path(dir, epoch, "disc"))?,
            grad_norm_mean,
        });
    }
    Ok(out)
}

/// Trains from `cfg` and writes under `cfg.output.dir`:
/// `train_log.csv`, `generator.ckpt`, `discriminator.ckpt`, `snapshots/`,
/// `samples.csv`, `samples.svg`, `metrics.csv`, `config.resolved` and a
/// one-line `status`.
pub fn cmd_train(cfg: &ConfigFile) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let dir = &cfg.output.dir;
    let mixture = cfg.dataset.mixture();
    create_dir(dir)?;
    write_file(&dir.join("config.resolved"), |w| w.write_all(cfg.render().as_bytes()))?;

    let mut records = Vec::new();
    let every = (cfg.train.epochs / 20).max(1);
    let result = train_with(&cfg.train, &mixture, |r| {
        if r.epoch % every == 0 {
            log::info!(
                "epoch {}: d_loss {:.4} penalty {:.4} |grad| {:.4} g_loss {:.5}",
                r.epoch,
                r.d_loss,
                r.penalty,
                r.grad_norm_mean,
                r.g_loss
            );
        }
        records.push(r.clone());
    });
    let log = licfg::cfg::TrainLog { records };
    write_file(&dir.join(LOG_FILE), |w| log.write_csv(w, cfg.output.wall_clock))?;

    let run: TrainRun = match result {
        Ok(run) => run,
        Err(TrainError::Diverged { epoch, quantity, value }) => {
            log::warn!("untrained: {quantity} = {value} at epoch {epoch}");
            write_file(&dir.join(STATUS_FILE), |w| writeln!(w, "untrained epoch={epoch} quantity={quantity}"))?;
            return Ok(TrainOutcome::Untrained { epoch, quantity });
        }
        Err(e) => return Err(e.into()),
    };
    save_ckpt(&run.generator, &dir.join("generator.ckpt"))?;
    save_ckpt(&run.discriminator, &dir.join("discriminator.ckpt"))?;
    write_snapshots(&dir.join("snapshots"), &run.snapshots)?;

    let (fake, row) = evaluate_generator(&run.generator, &mixture, &cfg.output, cfg.train.seed)?;
    save_points(dir.join("samples.csv"), &fake).map_err(io_err(&dir.join("samples.csv")))?;
    emit_scatter_svg(&fake, mixture.centers(), dir.join("samples.svg")).map_err(io_err(&dir.join("samples.svg")))?;
    write_file(&dir.join("metrics.csv"), |w| writeln!(w, "{}\n{}", EvalRow::HEADER, row.csv()))?;
    write_file(&dir.join(STATUS_FILE), |w| writeln!(w, "trained"))?;
    log::info!("{} {}", EvalRow::HEADER, row.csv());
    Ok(TrainOutcome::Trained(row))
}

/// Penalties compared by the ordering experiment: 1-, 0- and eps-centred
/// with the configured coefficient.
pub fn ordering_penalties(cfg: &ConfigFile) -> [Penalty; 3] {
    let p = cfg.train.penalty;
    let gamma = if p.kind == PenaltyKind::None { 0.1 } else { p.gamma };
    let eps_norm = match p.kind {
        PenaltyKind::CenteredEps { eps_norm } => eps_norm,
        _ => 0.3,
    };
    [
        Penalty {
            kind: PenaltyKind::Centered1,
            gamma,
        },
        Penalty {
            kind: PenaltyKind::Centered0,
            gamma,
        },
        Penalty {
            kind: PenaltyKind::CenteredEps { eps_norm },
            gamma,
        },
    ]
}

/// Runs the neighbourhood-size ordering experiment and writes `nsize.csv`.
pub fn cmd_nsize(cfg: &ConfigFile) -> Result<Vec<(String, f64)>, CliError> {
    cfg.validate()?;
    if cfg.nsize.seeds.len() < 3 {
        return Err(CliError::Usage("the ordering experiment needs at least 3 seeds".into()));
    }
    if cfg.train.snapshot_interval == 0 || cfg.train.snapshot_interval > cfg.train.epochs {
        return Err(CliError::Usage("snapshot_interval must be in 1..=epochs".into()));
    }
    create_dir(&cfg.output.dir)?;
    let rows = ordering_experiment(
        &cfg.train,
        &cfg.dataset.mixture(),
        &ordering_penalties(cfg),
        &cfg.nsize.seeds,
        &cfg.nsize.options,
    )?;
    let path = cfg.output.dir.join("nsize.csv");
    write_file(&path, |w| write_nsize_csv(w, &rows))?;
    let medians = median_by_penalty(&rows);
    for (label, r) in &medians {
        log::info!("median r_hat {label}: {r:.6e}");
    }
    Ok(medians)
}

/// Scores the points in `fake` against `real` and returns the CSV header
/// and row.
pub fn cmd_metrics(real: &Path, fake: &Path, dataset: Dataset, k: usize, min_count: usize) -> Result<String, CliError> {
    if k == 0 || min_count == 0 {
        return Err(CliError::Usage("--k and --min-count must be >= 1".into()));
    }
    let (r, f) = (load_csv(real)?, load_csv(fake)?);
    let row = evaluate_points(&f, &r, &dataset.mixture(), k, min_count)?;
    Ok(format!("{}\n{}\n", EvalRow::HEADER, row.csv()))
}

#[derive(Debug, Clone)]
pub struct DynamicsArgs {
    pub penalties: Vec<Penalty>,
    pub steps: usize,
    pub lr: f64,
    pub init: (f64, f64),
    pub integrator: Integrator,
    pub eta_m: f64,
    pub delta: f64,
    pub out: Option<PathBuf>,
}

/// Simulates the Dirac problem once per penalty; writes `dirac_<label>.csv`
/// under `out` and returns one summary line per penalty.
pub fn cmd_dynamics(args: &DynamicsArgs) -> Result<Vec<String>, CliError> {
    let mut trajectories = Vec::new();
    for p in &args.penalties {
        let cfg = DiracConfig {
            integrator: args.integrator,
            eta_m: args.eta_m,
            delta: args.delta,
            ..DiracConfig::new(*p, args.steps, args.lr, args.init)
        };
        trajectories.push(dirac_simulate(&cfg)?);
    }
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        for t in &trajectories {
            write_file(&dir.join(format!("dirac_{}.csv", t.penalty.label())), |w| t.write_csv(w))?;
        }
    }
    let mut lines = vec!["penalty,integrator,steps,final_distance,diverged".to_string()];
    for t in &trajectories {
        lines.push(format!(
            "{},{},{},{:.6e},{}",
            t.penalty.label(),
            t.integrator.name(),
            t.points.len() - 1,
            t.final_distance(),
            t.diverged
        ));
    }
    Ok(lines)
}

/// Writes `n` samples of `dataset` to `out`, plus an optional scatter plot.
pub fn cmd_data(dataset: Dataset, n: usize, seed: u64, out: &Path, svg: Option<&Path>) -> Result<(), CliError> {
    let mixture = dataset.mixture();
    let pts = sample_mixture(&mixture, n, seed);
    save_points(out, &pts).map_err(io_err(out))?;
    if let Some(svg) = svg {
        emit_scatter_svg(&pts, mixture.centers(), svg).map_err(io_err(svg))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps_norm: f64,
    pub seed: u64,
    pub outcome: TrainOutcome,
}

pub const SWEEP_HEADER: &str = "eps_norm,seed,status,epoch,fd2,precision,recall,modes_hit,hq_fraction";

/// Trains one eps-centred model per `(eps_norm, seed)` under
/// `out/eps_<eps>_seed_<seed>/` and tabulates the outcomes in `sweep.csv`.
pub fn cmd_sweep(cfg: &ConfigFile, eps_values: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    if eps_values.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(CliError::Usage("eps values must be positive".into()));
    }
    if eps_values.is_empty() || seeds.is_empty() {
        return Err(CliError::Usage("sweep needs at least one eps value and one seed".into()));
    }
    let gamma = match cfg.train.penalty.kind {
        PenaltyKind::None => 0.1,
        _ => cfg.train.penalty.gamma,
    };
    create_dir(&cfg.output.dir)?;
    let mut rows = Vec::new();
    for &eps_norm in eps_values {
        for &seed in seeds {
            let mut run_cfg = cfg.clone();
            run_cfg.train.seed = seed;
            run_cfg.train.penalty = Penalty {
                kind: PenaltyKind::CenteredEps { eps_norm },
                gamma,
            };
            run_cfg.output.dir = cfg.output.dir.join(format!("eps_{eps_norm}_seed_{seed}"));
            let outcome = cmd_train(&run_cfg)?;
            log::info!("eps' = {eps_norm}, seed {seed}: {outcome:?}");
            rows.push(SweepRow { eps_norm, seed, outcome });
        }
    }
    write_file(&cfg.output.dir.join("sweep.csv"), |w| {
        writeln!(w, "{SWEEP_HEADER}")?;
        for r in &rows {
            match &r.outcome {
                TrainOutcome::Trained(e) => writeln!(
                    w,
                    "{},{},trained,{},{}",
                    r.eps_norm,
                    r.seed,
                    cfg.train.epochs,
                    e.csv()
                )?,
                TrainOutcome::Untrained { epoch, .. } => {
                    writeln!(w, "{},{},untrained,{epoch},,,,,", r.eps_norm, r.seed)?
                }
            }
        }
        Ok(())
    })?;
    Ok(rows)
}
