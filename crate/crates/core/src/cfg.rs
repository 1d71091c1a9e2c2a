//! Composite functional gradient (CFG) GAN training with an optional
//! gradient penalty on the discriminator.
//!
//! One epoch:
//! 1. `U` Adam steps on the discriminator, minimising the logistic loss
//!    plus the configured penalty evaluated at points interpolated between
//!    real and generated samples;
//! 2. `N` fresh latents are pushed through the generator and then moved
//!    `M` times along `delta * grad_x D` (the functional gradient step);
//! 3. the generator is regressed onto those transported points with a
//!    least-squares loss.
//!
//! The discriminator step reads the generator only as constant samples and
//! the regression step reads the discriminator only through the transported
//! targets, so neither update ever sees the other network's gradients.

use std::io::{self, Write};
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{input_grad, AutodiffError, LeafKind, Tape, Var};
use crate::data::{sample_latent_with, sample_mixture_with, GaussianMixture};
use crate::nn::{adam_step, mlp_forward, mlp_init_with, Activation, AdamState, MlpParams, MlpVars, NnError};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum CfgError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite discriminator gradient at row {row}")]
    NonFiniteGradient { row: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    /// The run left the trainable regime: a loss became non-finite or
    /// exceeded the divergence threshold.
    #[error("diverged at epoch {epoch}: {quantity} = {value}")]
    Diverged {
        epoch: usize,
        quantity: &'static str,
        value: f64,
    },
    #[error(transparent)]
    Cfg(#[from] CfgError),
}

/// Which gradient penalty the discriminator carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyKind {
    None,
    /// `(|grad| - 1)^2`
    Centered1,
    /// `|grad|^2`
    Centered0,
    /// `|grad - eps|^2` where `eps` has Euclidean norm `eps_norm` and equal
    /// positive entries.
    CenteredEps { eps_norm: f64 },
}

impl PenaltyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PenaltyKind::None => "none",
            PenaltyKind::Centered1 => "1-centered",
            PenaltyKind::Centered0 => "0-centered",
            PenaltyKind::CenteredEps { .. } => "eps-centered",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub kind: PenaltyKind,
    /// Coefficient `gamma`; the penalty is `gamma/2 * E[...]`.
    pub gamma: f64,
}

impl Penalty {
    pub fn new(kind: PenaltyKind, gamma: f64) -> Result<Self, CfgError> {
        let p = Self { kind, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn none() -> Self {
        Self {
            kind: PenaltyKind::None,
            gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), CfgError> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(CfgError::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if let PenaltyKind::CenteredEps { eps_norm } = self.kind {
            if !(eps_norm > 0.0 && eps_norm.is_finite()) {
                return Err(CfgError::NonPositive {
                    name: "eps_norm",
                    value: eps_norm,
                });
            }
        }
        Ok(())
    }

    /// The centring vector for dimension `d`: `eps_norm / sqrt(d)` in every
    /// coordinate. Empty for the other penalties.
    pub fn epsilon_vector(&self, d: usize) -> Vec<f64> {
        match self.kind {
            PenaltyKind::CenteredEps { eps_norm } => vec![eps_norm / (d as f64).sqrt(); d],
            _ => Vec::new(),
        }
    }

    /// Penalty-adjusted gradient magnitude entering the neighbourhood bound
    /// for a gradient of norm `grad_norm`: `|g - 1|`, `g`, or `g + eps'`.
    /// Without a penalty this is plain `g`.
    pub fn adjusted_norm(&self, grad_norm: f64) -> f64 {
        match self.kind {
            PenaltyKind::None | PenaltyKind::Centered0 => grad_norm,
            PenaltyKind::Centered1 => (grad_norm - 1.0).abs(),
            PenaltyKind::CenteredEps { eps_norm } => grad_norm + eps_norm,
        }
    }
}

/// Mean of `softplus(-real)` plus mean of `softplus(fake)`, recorded.
pub fn disc_logistic_loss(tape: &mut Tape, real_logits: Var, fake_logits: Var) -> Result<Var, CfgError> {
    if tape.value(real_logits).is_empty() || tape.value(fake_logits).is_empty() {
        return Err(CfgError::EmptyBatch);
    }
    let neg = tape.neg(real_logits);
    let sp_real = tape.softplus(neg);
    let real_term = tape.mean(sp_real);
    let sp_fake = tape.softplus(fake_logits);
    let fake_term = tape.mean(sp_fake);
    Ok(tape.add(real_term, fake_term))
}

/// Value-only [`disc_logistic_loss`].
pub fn logistic_loss(real_logits: &[f64], fake_logits: &[f64]) -> Result<f64, CfgError> {
    if real_logits.is_empty() || fake_logits.is_empty() {
        return Err(CfgError::EmptyBatch);
    }
    let mean = |xs: &[f64], f: &dyn Fn(f64) -> f64| xs.iter().map(|&x| f(x)).sum::<f64>() / xs.len() as f64;
    Ok(mean(real_logits, &|x| crate::autodiff::softplus(-x)) + mean(fake_logits, &crate::autodiff::softplus))
}

/// `t_i * real_i + (1 - t_i) * fake_i` with one `t_i ~ U(0, 1)` per row.
pub fn interpolate_pairs<R: rand::Rng + ?Sized>(
    real: &Tensor,
    fake: &Tensor,
    rng: &mut R,
) -> Result<Tensor, CfgError> {
    if real.shape() != fake.shape() {
        return Err(CfgError::SizeMismatch(real.rows(), fake.rows()));
    }
    let d = real.cols();
    let mut out = Vec::with_capacity(real.len());
    for (r, f) in real.iter_rows().zip(fake.iter_rows()).take(real.rows()) {
        let t: f64 = rng.random();
        out.extend(r.iter().zip(f).map(|(&a, &b)| t * a + (1.0 - t) * b));
    }
    Ok(Tensor::matrix(real.rows(), d, out).expect("sized"))
}

/// A recorded penalty together with the gradient statistics it was built
/// from.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyTerm {
    pub value: Var,
    /// Mean of `|grad_x D|` over the interpolates.
    pub grad_norm_mean: f64,
}

/// Records the gradient penalty of the discriminator `d` at `xhat`.
///
/// The input gradient is itself recorded, so the result can be
/// differentiated with respect to the discriminator parameters.
pub fn penalty_term(tape: &mut Tape, penalty: &Penalty, d: &MlpVars, xhat: &Tensor) -> Result<PenaltyTerm, CfgError> {
    let m = xhat.rows();
    if m == 0 {
        return Err(CfgError::EmptyBatch);
    }
    let x = tape.input(xhat.clone());
    let logits = mlp_forward(tape, d, x)?;
    let total = tape.sum(logits);
    let gx = input_grad(tape, total, x)?;
    let norms = tape.row_norm(gx);
    let grad_norm_mean = tape.value(norms).data().iter().sum::<f64>() / m as f64;

    let per_sample = match penalty.kind {
        PenaltyKind::None => {
            let zero = tape.constant(Tensor::scalar(0.0));
            return Ok(PenaltyTerm {
                value: zero,
                grad_norm_mean,
            });
        }
        PenaltyKind::Centered1 => {
            let shifted = tape.add_scalar(norms, -1.0);
            tape.square(shifted)
        }
        PenaltyKind::Centered0 => {
            let sq = tape.square(gx);
            tape.sum_rows(sq)
        }
        PenaltyKind::CenteredEps { .. } => {
            let eps: Vec<f64> = penalty.epsilon_vector(xhat.cols()).iter().map(|e| -e).collect();
            let neg_eps = tape.constant(Tensor::row_vector(&eps));
            let diff = tape.add_row(gx, neg_eps);
            let sq = tape.square(diff);
            tape.sum_rows(sq)
        }
    };
    let s = tape.sum(per_sample);
    let value = tape.scale(s, penalty.gamma / (2.0 * m as f64));
    Ok(PenaltyTerm { value, grad_norm_mean })
}

/// Value of the penalty for a fixed discriminator.
pub fn penalty_value(penalty: &Penalty, d: &MlpParams, xhat: &Tensor) -> Result<f64, CfgError> {
    let mut tape = Tape::new();
    let dv = d.bind(&mut tape, LeafKind::Param);
    let term = penalty_term(&mut tape, penalty, &dv, xhat)?;
    Ok(tape.value(term.value).item().expect("scalar"))
}

/// Output of one evaluation of the discriminator objective.
#[derive(Debug, Clone)]
pub struct DiscObjective {
    pub logistic: f64,
    pub penalty: f64,
    pub grad_norm_mean: f64,
    /// Gradients of `logistic + penalty` in [`MlpParams::tensors`] order.
    pub grads: Vec<Tensor>,
}

impl DiscObjective {
    pub fn total(&self) -> f64 {
        self.logistic + self.penalty
    }
}

pub fn disc_objective(
    d: &MlpParams,
    real: &Tensor,
    fake: &Tensor,
    xhat: &Tensor,
    penalty: &Penalty,
) -> Result<DiscObjective, CfgError> {
    let mut tape = Tape::new();
    let dv = d.bind(&mut tape, LeafKind::Param);
    let real_v = tape.constant(real.clone());
    let fake_v = tape.constant(fake.clone());
    let real_logits = mlp_forward(&mut tape, &dv, real_v)?;
    let fake_logits = mlp_forward(&mut tape, &dv, fake_v)?;
    let loss = disc_logistic_loss(&mut tape, real_logits, fake_logits)?;
    let pen = penalty_term(&mut tape, penalty, &dv, xhat)?;
    let total = tape.add(loss, pen.value);
    let grads = tape.grad(total, &dv.vars())?;
    Ok(DiscObjective {
        logistic: tape.value(loss).item().expect("scalar"),
        penalty: tape.value(pen.value).item().expect("scalar"),
        grad_norm_mean: pen.grad_norm_mean,
        grads: grads.into_iter().map(|g| tape.value(g).clone()).collect(),
    })
}

/// `grad_x D(x)` for every row of `x`.
pub fn disc_input_grad(d: &MlpParams, x: &Tensor) -> Result<Tensor, CfgError> {
    let mut tape = Tape::new();
    let dv = d.bind(&mut tape, LeafKind::Constant);
    let xv = tape.input(x.clone());
    let logits = mlp_forward(&mut tape, &dv, xv)?;
    let total = tape.sum(logits);
    let gx = input_grad(&mut tape, total, xv)?;
    Ok(tape.value(gx).clone())
}

fn check_step(delta: f64, eta_m: f64) -> Result<(), CfgError> {
    if !(delta > 0.0) {
        return Err(CfgError::NonPositive { name: "delta", value: delta });
    }
    if !(eta_m > 0.0) {
        return Err(CfgError::NonPositive { name: "eta_m", value: eta_m });
    }
    Ok(())
}

/// One functional gradient step: `x + eta_m * delta * grad_x D(x)`.
pub fn functional_step(points: &Tensor, d: &MlpParams, delta: f64, eta_m: f64) -> Result<Tensor, CfgError> {
    check_step(delta, eta_m)?;
    let g = disc_input_grad(d, points)?;
    if let Some(bad) = g.data().iter().position(|v| !v.is_finite()) {
        return Err(CfgError::NonFiniteGradient {
            row: bad / g.cols().max(1),
        });
    }
    let step = eta_m * delta;
    Ok(points.zip_map(&g, |x, gx| x + step * gx))
}

/// `steps` successive [`functional_step`]s against the same discriminator.
pub fn functional_update(
    points: &Tensor,
    d: &MlpParams,
    delta: f64,
    eta_m: f64,
    steps: usize,
) -> Result<Tensor, CfgError> {
    if steps == 0 {
        return Err(CfgError::Config("number of functional steps must be >= 1".into()));
    }
    let mut x = functional_step(points, d, delta, eta_m)?;
    for _ in 1..steps {
        x = functional_step(&x, d, delta, eta_m)?;
    }
    Ok(x)
}

/// Mean of `0.5 * |G(z) - target|^2` and its gradient.
fn regression_loss(g: &MlpParams, z: &Tensor, targets: &Tensor, with_grad: bool) -> Result<(f64, Vec<Tensor>), CfgError> {
    let mut tape = Tape::new();
    let kind = if with_grad { LeafKind::Param } else { LeafKind::Constant };
    let gv = g.bind(&mut tape, kind);
    let zv = tape.constant(z.clone());
    let out = mlp_forward(&mut tape, &gv, zv)?;
    let t = tape.constant(targets.clone());
    let diff = tape.sub(out, t);
    let sq = tape.square(diff);
    let s = tape.sum(sq);
    let loss = tape.scale(s, 0.5 / z.rows() as f64);
    let value = tape.value(loss).item().expect("scalar");
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    let grads = tape.grad(loss, &gv.vars())?;
    Ok((value, grads.into_iter().map(|v| tape.value(v).clone()).collect()))
}

/// Least-squares fit of the generator onto transported samples.
///
/// Returns `steps + 1` loss values: the loss before each Adam step and the
/// loss after the last one.
pub fn generator_regress(
    g: &mut MlpParams,
    z: &Tensor,
    targets: &Tensor,
    steps: usize,
    adam: &mut AdamState,
) -> Result<Vec<f64>, CfgError> {
    if z.rows() != targets.rows() {
        return Err(CfgError::SizeMismatch(z.rows(), targets.rows()));
    }
    if z.rows() == 0 {
        return Err(CfgError::EmptyBatch);
    }
    if targets.cols() != g.output_dim() {
        return Err(CfgError::Nn(NnError::InputWidth {
            expected: g.output_dim(),
            got: targets.cols(),
        }));
    }
    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let (loss, grads) = regression_loss(g, z, targets, true)?;
        losses.push(loss);
        adam_step(g, &grads, adam)?;
    }
    losses.push(regression_loss(g, z, targets, false)?.0);
    Ok(losses)
}

/// Every knob of a training run. `Default` gives the 2D benchmark settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Minibatch size `B` for discriminator updates.
    pub batch_size: usize,
    /// Discriminator updates per epoch, `U`.
    pub d_updates: usize,
    /// Examples transported and regressed per epoch, `N`.
    pub n_update: usize,
    /// Functional gradient steps per epoch, `M`.
    pub gen_steps: usize,
    pub eta_m: f64,
    pub delta: f64,
    pub penalty: Penalty,
    /// Adam learning rate for both networks.
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub latent_dim: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub g_activation: Activation,
    pub d_activation: Activation,
    pub epochs: usize,
    pub seed: u64,
    pub regression_steps: usize,
    /// Keep a generator before/after pair every this many epochs (0: never).
    pub snapshot_interval: usize,
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            d_updates: 1,
            n_update: 640,
            gen_steps: 15,
            eta_m: 0.25,
            delta: 1.0,
            penalty: Penalty {
                kind: PenaltyKind::CenteredEps { eps_norm: 0.3 },
                gamma: 0.1,
            },
            lr: 2.5e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            latent_dim: 2,
            g_hidden: vec![64, 64],
            d_hidden: vec![64, 64],
            g_activation: Activation::Tanh,
            d_activation: Activation::Relu,
            epochs: 2000,
            seed: 0,
            regression_steps: 10,
            snapshot_interval: 100,
            divergence_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CfgError> {
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("d_updates", self.d_updates),
            ("n_update", self.n_update),
            ("gen_steps", self.gen_steps),
            ("latent_dim", self.latent_dim),
        ] {
            if v == 0 {
                return Err(CfgError::Config(format!("{name} must be >= 1")));
            }
        }
        check_step(self.delta, self.eta_m)?;
        if !(self.lr >= 0.0) {
            return Err(CfgError::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(CfgError::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if self.g_hidden.contains(&0) || self.d_hidden.contains(&0) {
            return Err(CfgError::Config("hidden layer widths must be >= 1".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(CfgError::Config("divergence_threshold must be positive".into()));
        }
        self.penalty.validate()
    }

    pub fn generator_arch(&self, data_dim: usize) -> Vec<usize> {
        let mut a = vec![self.latent_dim];
        a.extend(&self.g_hidden);
        a.push(data_dim);
        a
    }

    pub fn discriminator_arch(&self, data_dim: usize) -> Vec<usize> {
        let mut a = vec![data_dim];
        a.extend(&self.d_hidden);
        a.push(1);
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Logistic loss plus penalty of the last discriminator update.
    pub d_loss: f64,
    pub penalty: f64,
    pub grad_norm_mean: f64,
    /// Regression loss after the epoch's generator update.
    pub g_loss: f64,
    /// Wall time spent in this epoch.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub const HEADER: &'static str = "epoch,d_loss,penalty,grad_norm_mean,g_loss,seconds";

    /// Writes the log as CSV. Wall time is written as 0 unless
    /// `wall_clock` is set, so that logs of identical runs compare equal.
    pub fn write_csv<W: Write>(&self, mut w: W, wall_clock: bool) -> io::Result<()> {
        writeln!(w, "{}", Self::HEADER)?;
        for r in &self.records {
            let secs = if wall_clock { r.seconds } else { 0.0 };
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.6}",
                r.epoch, r.d_loss, r.penalty, r.grad_norm_mean, r.g_loss, secs
            )?;
        }
        w.flush()
    }
}

/// Generator parameters around one epoch's update, with the discriminator
/// that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub before: MlpParams,
    pub after: MlpParams,
    pub discriminator: MlpParams,
    pub grad_norm_mean: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub generator: MlpParams,
    pub discriminator: MlpParams,
    pub log: TrainLog,
    pub snapshots: Vec<Snapshot>,
}

/// The two networks and optimiser states of a run in progress.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    mixture: GaussianMixture,
    rng: ChaCha8Rng,
    pub generator: MlpParams,
    pub discriminator: MlpParams,
    g_adam: AdamState,
    d_adam: AdamState,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, mixture: GaussianMixture) -> Result<Self, CfgError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let generator = mlp_init_with(&config.generator_arch(2), config.g_activation, &mut rng)?;
        let discriminator = mlp_init_with(&config.discriminator_arch(2), config.d_activation, &mut rng)?;
        let g_adam = AdamState::new(&generator, config.lr, config.adam_beta1, config.adam_beta2);
        let d_adam = AdamState::new(&discriminator, config.lr, config.adam_beta1, config.adam_beta2);
        Ok(Self {
            config,
            mixture,
            rng,
            generator,
            discriminator,
            g_adam,
            d_adam,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn diverged(&self, quantity: &'static str, value: f64) -> Option<TrainError> {
        (!value.is_finite() || value.abs() > self.config.divergence_threshold).then_some(TrainError::Diverged {
            epoch: self.epoch,
            quantity,
            value,
        })
    }

    /// One discriminator Adam step on a fresh minibatch.
    pub fn discriminator_step(&mut self) -> Result<DiscObjective, TrainError> {
        let c = &self.config;
        let real = sample_mixture_with(&self.mixture, c.batch_size, &mut self.rng);
        let z = sample_latent_with(c.batch_size, c.latent_dim, &mut self.rng);
        let fake = self.generator.forward(&z).map_err(CfgError::from)?;
        let xhat = interpolate_pairs(&real, &fake, &mut self.rng)?;
        let obj = disc_objective(&self.discriminator, &real, &fake, &xhat, &c.penalty)?;
        if let Some(e) = self.diverged("d_loss", obj.total()) {
            return Err(e);
        }
        adam_step(&mut self.discriminator, &obj.grads, &mut self.d_adam).map_err(|_| TrainError::Diverged {
            epoch: self.epoch,
            quantity: "d_grad",
            value: f64::NAN,
        })?;
        Ok(obj)
    }

    /// Transport fresh generated samples and regress the generator onto
    /// them. Returns the regression losses.
    pub fn generator_step(&mut self) -> Result<Vec<f64>, TrainError> {
        let c = &self.config;
        let z = sample_latent_with(c.n_update, c.latent_dim, &mut self.rng);
        let x0 = self.generator.forward(&z).map_err(CfgError::from)?;
        let targets = match functional_update(&x0, &self.discriminator, c.delta, c.eta_m, c.gen_steps) {
            Ok(t) => t,
            Err(CfgError::NonFiniteGradient { .. }) => {
                return Err(TrainError::Diverged {
                    epoch: self.epoch,
                    quantity: "grad_x_d",
                    value: f64::NAN,
                })
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(bad) = targets.data().iter().find(|v| !v.is_finite()) {
            return Err(TrainError::Diverged {
                epoch: self.epoch,
                quantity: "targets",
                value: *bad,
            });
        }
        let steps = c.regression_steps;
        let losses = match generator_regress(&mut self.generator, &z, &targets, steps, &mut self.g_adam) {
            Ok(l) => l,
            Err(CfgError::Nn(NnError::NonFiniteGradient { .. })) => {
                return Err(TrainError::Diverged {
                    epoch: self.epoch,
                    quantity: "g_grad",
                    value: f64::NAN,
                })
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(e) = self.diverged("g_loss", *losses.last().expect("non-empty")) {
            return Err(e);
        }
        Ok(losses)
    }

    /// Runs one full epoch and returns its log record together with the
    /// generator as it was before the update.
    pub fn run_epoch(&mut self) -> Result<(EpochRecord, MlpParams), TrainError> {
        let start = Instant::now();
        self.epoch += 1;
        let mut last = None;
        for _ in 0..self.config.d_updates {
            last = Some(self.discriminator_step()?);
        }
        let obj = last.expect("d_updates >= 1");
        let before = self.generator.clone();
        let losses = self.generator_step()?;
        let record = EpochRecord {
            epoch: self.epoch,
            d_loss: obj.total(),
            penalty: obj.penalty,
            grad_norm_mean: obj.grad_norm_mean,
            g_loss: *losses.last().expect("non-empty"),
            seconds: start.elapsed().as_secs_f64(),
        };
        Ok((record, before))
    }

    pub fn generate(&mut self, n: usize) -> Result<Tensor, CfgError> {
        let z = sample_latent_with(n, self.config.latent_dim, &mut self.rng);
        Ok(self.generator.forward(&z)?)
    }
}

/// Trains a CFG generator/discriminator pair on `mixture`.
pub fn train(config: &TrainConfig, mixture: &GaussianMixture) -> Result<TrainRun, TrainError> {
    train_with(config, mixture, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    config: &TrainConfig,
    mixture: &GaussianMixture,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainRun, TrainError> {
    let mut trainer = Trainer::new(config.clone(), mixture.clone())?;
    let mut log = TrainLog::default();
    let mut snapshots = Vec::new();
    for _ in 0..config.epochs {
        let (record, before) = trainer.run_epoch()?;
        let e = record.epoch;
        if config.snapshot_interval > 0 && e % config.snapshot_interval == 0 {
            snapshots.push(Snapshot {
                epoch: e,
                before,
                after: trainer.generator.clone(),
                discriminator: trainer.discriminator.clone(),
                grad_norm_mean: record.grad_norm_mean,
            });
        }
        on_epoch(&record);
        log.records.push(record);
    }
    Ok(TrainRun {
        generator: trainer.generator,
        discriminator: trainer.discriminator,
        log,
        snapshots,
    })
}
