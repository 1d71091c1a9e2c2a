//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Trained runs are cached under the cargo target directory and reused while
//! their resolved configuration is unchanged. Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 1 9`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use licfg::autodiff::{fd_check, LeafKind, Tape};
use licfg::cfg::{disc_input_grad, disc_logistic_loss, penalty_term, penalty_value, Penalty, PenaltyKind};
use licfg::dynamics::{dirac_simulate, field_equivalence_check, loss_equivalence_check, DiracConfig};
use licfg::metrics::frechet_2d;
use licfg::neighborhood::{summarize_snapshots, NSizeOptions};
use licfg::nn::{mlp_forward, Activation, MlpParams};
use licfg::tensor::Tensor;
use licfg_cli::commands::{cmd_train, evaluate_generator, load_ckpt, load_snapshots, TrainOutcome, EXIT_OK, EXIT_UNTRAINED};
use licfg_cli::config::{ConfigFile, Dataset};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

type Verdict = Result<(bool, String), String>;
type Criterion = (u32, &'static str, fn(&mut RunCache) -> Verdict);

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut cache = RunCache::new(Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-runs"));
    let criteria: [Criterion; 11] = [
        (1, "autodiff vs finite differences", c1_autodiff),
        (2, "logistic loss identity", c2_loss_identity),
        (3, "generator field direction", c3_field_direction),
        (4, "penalty values and adjusted norms", c4_penalties),
        (5, "ring mode recovery", c5_ring_modes),
        (6, "grid penalty ordering", c6_grid_ordering),
        (7, "neighbourhood size ordering", c7_nsize_ordering),
        (8, "divergence regime", c8_divergence),
        (9, "frechet oracle", c9_frechet),
        (10, "dirac contrast", c10_dirac),
        (11, "training determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = f(&mut cache).unwrap_or_else(|e| (false, format!("error: {e}")));
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {tag}  {name}: {detail} [{:.1}s]", t.elapsed().as_secs_f64());
        if !pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn median_f(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn random_mlp(rng: &mut ChaCha8Rng, sizes: &[usize], activation: Activation, scale: f64) -> MlpParams {
    let zeros = MlpParams::zeros(sizes, activation).unwrap();
    let flat: Vec<f64> = (0..zeros.param_count()).map(|_| rng.random_range(-scale..scale)).collect();
    MlpParams::from_flat(sizes, activation, &flat).unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
    let data = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::matrix(n, d, data).unwrap()
}

fn c1_autodiff(_: &mut RunCache) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst1, mut worst2): (f64, f64) = (0.0, 0.0);
    for i in 0..100 {
        let d_in = rng.random_range(1..=3);
        let mut sizes = vec![d_in];
        for _ in 0..rng.random_range(1..=2) {
            sizes.push(rng.random_range(2..=5));
        }
        sizes.push(1);
        let d = random_mlp(&mut rng, &sizes, Activation::Tanh, 1.0);
        let penalty = match i % 4 {
            0 => Penalty::none(),
            1 => Penalty::new(PenaltyKind::Centered1, 0.7).unwrap(),
            2 => Penalty::new(PenaltyKind::Centered0, 0.7).unwrap(),
            _ => Penalty::new(PenaltyKind::CenteredEps { eps_norm: 0.3 }, 0.7).unwrap(),
        };
        let (real, fake, xhat) = (random_points(&mut rng, 3, d_in), random_points(&mut rng, 3, d_in), random_points(&mut rng, 3, d_in));

        let mut tape = Tape::new();
        let vars = d.bind(&mut tape, LeafKind::Param);
        let xr = tape.input(real);
        let xf = tape.input(fake);
        let lr = mlp_forward(&mut tape, &vars, xr).map_err(err)?;
        let lf = mlp_forward(&mut tape, &vars, xf).map_err(err)?;
        let loss = disc_logistic_loss(&mut tape, lr, lf).map_err(err)?;
        let pen = penalty_term(&mut tape, &penalty, &vars, &xhat).map_err(err)?;
        let root = tape.add(loss, pen.value);
        worst1 = worst1.max(fd_check(&mut tape, root, 1, 1e-6).map_err(err)?);
        worst2 = worst2.max(fd_check(&mut tape, root, 2, 1e-6).map_err(err)?);
    }
    Ok((
        worst1 <= 1e-4 && worst2 <= 1e-4,
        format!("max relative error first order {worst1:.2e}, second order {worst2:.2e} (limit 1e-4)"),
    ))
}

fn c2_loss_identity(_: &mut RunCache) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let real: Vec<f64> = (0..5000).map(|_| rng.random_range(-40.0..40.0)).collect();
    let fake: Vec<f64> = (0..5000).map(|_| rng.random_range(-40.0..40.0)).collect();
    let gap = loss_equivalence_check(&real, &fake).map_err(err)?;
    Ok((gap <= 1e-9, format!("max discrepancy {gap:.2e} over 10^4 logits in [-40, 40]")))
}

fn c3_field_direction(_: &mut RunCache) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut worst, mut compared, mut skipped) = (0.0f64, 0, 0);
    for _ in 0..256 {
        let dz = rng.random_range(1..=3);
        let h = rng.random_range(3..=8);
        let g = random_mlp(&mut rng, &[dz, h, 2], Activation::Tanh, 1.0);
        let d = random_mlp(&mut rng, &[2, h, 1], Activation::Tanh, 1.0);
        let z = random_points(&mut rng, 1, dz);
        let c = field_equivalence_check(&g, &d, &z, 0.25, 1.0).map_err(err)?;
        worst = worst.max(c.max_deviation);
        compared += c.compared;
        skipped += c.skipped;
    }
    Ok((
        worst <= 1e-9 && compared > 0,
        format!("max 1-cos {worst:.2e} over {compared} instances ({skipped} with a vanishing field)"),
    ))
}

fn c4_penalties(_: &mut RunCache) -> Verdict {
    let lin = MlpParams::from_flat(&[2, 1], Activation::Relu, &[1.0, 0.0, 0.0]).unwrap();
    let xhat = Tensor::from_rows(&[[0.3, -1.0], [2.0, 0.5], [-0.7, 0.1]]);
    let v1 = penalty_value(&Penalty::new(PenaltyKind::Centered1, 0.1).unwrap(), &lin, &xhat).map_err(err)?;
    let v0 = penalty_value(&Penalty::new(PenaltyKind::Centered0, 0.1).unwrap(), &lin, &xhat).map_err(err)?;
    let eps = Penalty::new(PenaltyKind::CenteredEps { eps_norm: 0.1 * 2f64.sqrt() }, 0.1).unwrap();
    let ve = penalty_value(&eps, &lin, &xhat).map_err(err)?;
    let worked = v1 == 0.0 && (v0 - 0.05).abs() <= 1e-15 && (ve - 0.041).abs() <= 1e-15;

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let c0 = Penalty::new(PenaltyKind::Centered0, 0.1).unwrap();
    let c1 = Penalty::new(PenaltyKind::Centered1, 0.1).unwrap();
    let (mut eps_ok, mut branch_ok, mut n) = (true, true, 0);
    for _ in 0..200 {
        let scale = rng.random_range(0.1..2.0);
        let d = random_mlp(&mut rng, &[2, 6, 1], Activation::Tanh, scale);
        let x = random_points(&mut rng, 16, 2);
        let g = disc_input_grad(&d, &x).map_err(err)?;
        for row in g.iter_rows().take(g.rows()) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let eps_norm = rng.random_range(0.01..5.0);
            let pe = Penalty::new(PenaltyKind::CenteredEps { eps_norm }, 0.1).unwrap();
            eps_ok &= pe.adjusted_norm(norm) > c0.adjusted_norm(norm);
            branch_ok &= (c0.adjusted_norm(norm) > c1.adjusted_norm(norm)) == (norm > 0.5);
            n += 1;
        }
    }
    Ok((
        worked && eps_ok && branch_ok,
        format!(
            "values ({v1}, {v0}, {ve}); q_eps > q_0 on all {n}: {eps_ok}; q_0 > q_1 iff g > 1/2: {branch_ok}"
        ),
    ))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, mean: [f64; 2], sd: f64) -> Tensor {
    let data = (0..n)
        .flat_map(|_| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            [mean[0] + sd * a, mean[1] + sd * b]
        })
        .collect();
    Tensor::matrix(n, 2, data).unwrap()
}

fn c9_frechet(_: &mut RunCache) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let n = 100_000;
    let p = gaussian(&mut rng, n, [0.0, 0.0], 1.0);
    let same = frechet_2d(&p, &p).map_err(err)?;
    let shifted = frechet_2d(&gaussian(&mut rng, n, [3.0, 4.0], 1.0), &gaussian(&mut rng, n, [0.0, 0.0], 1.0)).map_err(err)?;
    let scaled = frechet_2d(&gaussian(&mut rng, n, [0.0, 0.0], 2.0), &gaussian(&mut rng, n, [0.0, 0.0], 1.0)).map_err(err)?;
    Ok((
        same.abs() <= 1e-9 && (shifted - 25.0).abs() <= 0.5 && (scaled - 2.0).abs() <= 0.2,
        format!("{same:.2e}, {shifted:.4}, {scaled:.4} (expected 0, 25 +- 0.5, 2 +- 0.2)"),
    ))
}

fn c10_dirac(_: &mut RunCache) -> Verdict {
    let c0 = Penalty::new(PenaltyKind::Centered0, 1.0).unwrap();
    let pen = dirac_simulate(&DiracConfig::new(c0, 5000, 0.05, (1.0, 1.0))).map_err(err)?;
    let free = dirac_simulate(&DiracConfig::new(Penalty::none(), 5000, 0.05, (1.0, 1.0))).map_err(err)?;
    let (a, b) = (pen.final_distance(), free.final_distance());
    Ok((
        a <= 0.05 && b >= 10.0 * a,
        format!("0-centred final distance {a:.3e}, unpenalised {b:.3e}"),
    ))
}

fn c11_determinism(_: &mut RunCache) -> Verdict {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut cfg = ConfigFile::default();
    cfg.train.epochs = 25;
    cfg.train.snapshot_interval = 10;
    cfg.train.seed = 11;
    cfg.output.dir = dir.path().join("run");
    cmd_train(&cfg).map_err(err)?;
    let first = read_tree(&cfg.output.dir)?;
    fs::remove_dir_all(&cfg.output.dir).map_err(err)?;
    cmd_train(&cfg).map_err(err)?;
    let second = read_tree(&cfg.output.dir)?;
    let differing: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
    let ckpts = first.keys().filter(|k| k.ends_with(".ckpt")).count();
    Ok((
        differing.is_empty() && first.len() == second.len() && ckpts > 0 && first.contains_key("train_log.csv"),
        format!("{} files compared ({ckpts} checkpoints), differing: {differing:?}", first.len()),
    ))
}

fn read_tree(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(err)? {
            let path = entry.map_err(err)?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, fs::read(&path).map_err(err)?);
            }
        }
    }
    Ok(out)
}

/// A full-length training run from the default configuration.
struct RunResult {
    exit_code: i32,
    dir: PathBuf,
    cfg: ConfigFile,
}

struct RunCache {
    root: PathBuf,
}

impl RunCache {
    fn new(root: PathBuf) -> Self {
        Self { root }
    }

    fn run(&mut self, dataset: Dataset, penalty: Penalty, seed: u64) -> Result<RunResult, String> {
        let mut cfg = ConfigFile {
            dataset,
            ..ConfigFile::default()
        };
        cfg.train.penalty = penalty;
        cfg.train.seed = seed;
        let tag = match penalty.kind {
            PenaltyKind::CenteredEps { eps_norm } => format!("eps{eps_norm}"),
            k => k.label().to_string(),
        };
        let dir = self.root.join(format!("{}_{tag}_g{}_s{seed}", dataset.name(), penalty.gamma));
        cfg.output.dir = dir.clone();
        let fresh = fs::read_to_string(dir.join("config.resolved")).ok().as_deref() == Some(cfg.render().as_str());
        let status = fs::read_to_string(dir.join("status")).ok();
        let exit_code = match (fresh, status) {
            (true, Some(s)) if s.starts_with("trained") => EXIT_OK,
            (true, Some(s)) if s.starts_with("untrained") => EXIT_UNTRAINED,
            _ => {
                if dir.exists() {
                    fs::remove_dir_all(&dir).map_err(err)?;
                }
                let t = Instant::now();
                let outcome = cmd_train(&cfg).map_err(err)?;
                eprintln!(
                    "  trained {} in {:.0}s: {}",
                    dir.file_name().unwrap().to_string_lossy(),
                    t.elapsed().as_secs_f64(),
                    match &outcome {
                        TrainOutcome::Trained(r) => format!("modes {} hq {:.3}", r.modes_hit, r.hq_fraction),
                        TrainOutcome::Untrained { epoch, quantity } => format!("untrained at epoch {epoch} ({quantity})"),
                    }
                );
                outcome.exit_code()
            }
        };
        Ok(RunResult { exit_code, dir, cfg })
    }

    /// `(modes_hit, hq_fraction)` of a run's final generator; untrained runs
    /// score zero.
    fn quality(&mut self, dataset: Dataset, penalty: Penalty, seed: u64) -> Result<(usize, f64), String> {
        let r = self.run(dataset, penalty, seed)?;
        if r.exit_code != EXIT_OK {
            return Ok((0, 0.0));
        }
        let g = load_ckpt(&r.dir.join("generator.ckpt")).map_err(err)?;
        let (_, row) = evaluate_generator(&g, &dataset.mixture(), &r.cfg.output, seed).map_err(err)?;
        Ok((row.modes_hit, row.hq_fraction))
    }
}

fn eps(eps_norm: f64) -> Penalty {
    Penalty::new(PenaltyKind::CenteredEps { eps_norm }, 0.1).unwrap()
}

fn c0() -> Penalty {
    Penalty::new(PenaltyKind::Centered0, 0.1).unwrap()
}

fn c1() -> Penalty {
    Penalty::new(PenaltyKind::Centered1, 0.1).unwrap()
}

fn median_quality(cache: &mut RunCache, dataset: Dataset, p: Penalty) -> Result<(f64, f64, Vec<usize>), String> {
    let mut modes = Vec::new();
    let mut hq = Vec::new();
    for s in SEEDS {
        let (m, h) = cache.quality(dataset, p, s)?;
        modes.push(m);
        hq.push(h);
    }
    Ok((median_f(modes.iter().map(|&m| m as f64).collect()), median_f(hq), modes))
}

fn c5_ring_modes(cache: &mut RunCache) -> Verdict {
    let (m_eps, hq_eps, all_eps) = median_quality(cache, Dataset::Ring, eps(0.3))?;
    let (m_none, hq_none, all_none) = median_quality(cache, Dataset::Ring, Penalty::none())?;
    Ok((
        m_eps >= 7.0 && hq_eps >= 0.6 && m_none < m_eps,
        format!(
            "eps-centred median modes {m_eps} {all_eps:?} hq {hq_eps:.3}; unpenalised median modes {m_none} {all_none:?} hq {hq_none:.3}"
        ),
    ))
}

fn c6_grid_ordering(cache: &mut RunCache) -> Verdict {
    let (m_eps, _, a_eps) = median_quality(cache, Dataset::Grid, eps(0.3))?;
    let (m_0, _, a_0) = median_quality(cache, Dataset::Grid, c0())?;
    let (m_1, _, a_1) = median_quality(cache, Dataset::Grid, c1())?;
    Ok((
        m_eps >= m_0 && m_0 >= m_1 && m_eps > m_1,
        format!("median modes eps {m_eps} {a_eps:?}, 0-centred {m_0} {a_0:?}, 1-centred {m_1} {a_1:?}"),
    ))
}

fn c7_nsize_ordering(cache: &mut RunCache) -> Verdict {
    let opts = NSizeOptions::default();
    let mut medians = Vec::new();
    for p in [c1(), c0(), eps(0.3)] {
        let mut r = Vec::new();
        for s in SEEDS {
            let run = cache.run(Dataset::Ring, p, s)?;
            if run.exit_code != EXIT_OK {
                continue;
            }
            let snaps = load_snapshots(&run.dir.join("snapshots")).map_err(err)?;
            r.push(summarize_snapshots(&snaps, &opts).map_err(err)?.r_hat);
        }
        medians.push((p.kind.label(), r.len(), median_f(r)));
    }
    let (r1, r0, re) = (medians[0].2, medians[1].2, medians[2].2);
    let mut detail = medians
        .iter()
        .map(|(l, n, r)| format!("{l} {r:.4e} ({n} runs)"))
        .collect::<Vec<_>>()
        .join(", ");
    let (g0, ge) = (median_grad_norm(cache, c0())?, median_grad_norm(cache, eps(0.3))?);
    detail.push_str(&format!("; median mean |grad D| 0-centred {g0:.4}, eps-centred {ge:.4}"));
    Ok((r1 > r0 && r0 > re, detail))
}

/// Median over seeds of the run-average interpolate gradient norm.
fn median_grad_norm(cache: &mut RunCache, p: Penalty) -> Result<f64, String> {
    let mut out = Vec::new();
    for s in SEEDS {
        let run = cache.run(Dataset::Ring, p, s)?;
        let log = fs::read_to_string(run.dir.join("train_log.csv")).map_err(err)?;
        let vals: Vec<f64> = log
            .lines()
            .skip(1)
            .filter_map(|l| l.split(',').nth(3)?.parse().ok())
            .collect();
        if !vals.is_empty() {
            out.push(vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    Ok(median_f(out))
}

fn c8_divergence(cache: &mut RunCache) -> Verdict {
    let mut untrained = BTreeMap::new();
    for e in [0.1, 0.3, 1.0, 5.0] {
        let mut n = 0;
        for s in SEEDS {
            if cache.run(Dataset::Ring, eps(e), s)?.exit_code == EXIT_UNTRAINED {
                n += 1;
            }
        }
        untrained.insert(format!("{e}"), n);
    }
    let pass = untrained["5"] >= 3 && untrained["0.1"] == 0 && untrained["0.3"] == 0 && untrained["1"] == 0;
    Ok((pass, format!("untrained exits of 5 seeds per eps': {untrained:?}")))
}
