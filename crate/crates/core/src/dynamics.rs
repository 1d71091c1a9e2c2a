//! Numerical checks of the CFG/GAN correspondence and a toy convergence
//! simulation.
//!
//! The toy problem is the one-dimensional Dirac GAN: the real distribution
//! is a point mass at `theta* = 0`, the generator is the constant
//! `G(z) = theta` and the discriminator is linear, `D(x) = psi * x`.

use std::io::{self, Write};

use thiserror::Error;

use crate::autodiff::{sigmoid, softplus, LeafKind, Tape};
use crate::cfg::{disc_input_grad, CfgError, Penalty, PenaltyKind};
use crate::nn::{mlp_forward, MlpParams, NnError};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("steps must be >= 1")]
    NoSteps,
    #[error("non-finite logit at index {0}")]
    NonFiniteLogit(usize),
    #[error("discriminator must map to a single logit, got {0} outputs")]
    DiscriminatorWidth(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Cfg(#[from] CfgError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
}

type Result<T> = std::result::Result<T, DynamicsError>;

/// `ln d` and `ln (1 - d)` with `d = 1 / (1 + exp(-x))`.
///
/// Evaluated literally where the exponentials are representable, and from
/// the leading-order expansions beyond that.
fn log_d_terms(x: f64) -> (f64, f64) {
    if x.abs() <= 30.0 {
        let e = (-x).exp();
        let d = 1.0 / (1.0 + e);
        let one_minus = e / (1.0 + e);
        (d.ln(), one_minus.ln())
    } else if x > 0.0 {
        // d = 1 - e^{-x} + O(e^{-2x})
        let e = (-x).exp();
        (-e, -x - e)
    } else {
        let e = x.exp();
        (x - e, -e)
    }
}

/// Largest absolute difference between the softplus form of the
/// discriminator loss and the log-loss written through the logistic
/// substitution, per sample and in aggregate.
pub fn loss_equivalence_check(real_logits: &[f64], fake_logits: &[f64]) -> Result<f64> {
    for (i, x) in real_logits.iter().chain(fake_logits).enumerate() {
        if !x.is_finite() {
            return Err(DynamicsError::NonFiniteLogit(i));
        }
    }
    let mut worst: f64 = 0.0;
    let (mut cfg_real, mut gan_real) = (0.0, 0.0);
    for &x in real_logits {
        let (a, b) = (softplus(-x), -log_d_terms(x).0);
        worst = worst.max((a - b).abs());
        cfg_real += a;
        gan_real += b;
    }
    let (mut cfg_fake, mut gan_fake) = (0.0, 0.0);
    for &x in fake_logits {
        let (a, b) = (softplus(x), -log_d_terms(x).1);
        worst = worst.max((a - b).abs());
        cfg_fake += a;
        gan_fake += b;
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let nr = real_logits.len();
    let nf = fake_logits.len();
    let agg = (mean(cfg_real, nr) + mean(cfg_fake, nf)) - (mean(gan_real, nr) + mean(gan_fake, nf));
    Ok(worst.max(agg.abs()))
}

/// The two generator parameter-space fields for a single latent.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    /// `grad_theta ln(1 - sigmoid(D(G(z))))`.
    pub gan: Vec<f64>,
    /// Gradient of `0.5 |G(z) - (G(z) + step * grad_x D(G(z)))|^2` with the
    /// target held fixed.
    pub cfg: Vec<f64>,
}

fn flat_grads(tape: &Tape, grads: &[crate::autodiff::Var]) -> Vec<f64> {
    grads.iter().flat_map(|&g| tape.value(g).data().to_vec()).collect()
}

/// Fields of both formulations at `z` (one row) with functional step
/// `step = eta_1 * delta`.
pub fn field_pair(g: &MlpParams, d: &MlpParams, z: &[f64], step: f64) -> Result<FieldPair> {
    if d.output_dim() != 1 {
        return Err(DynamicsError::DiscriminatorWidth(d.output_dim()));
    }
    let z = Tensor::row_vector(z);

    let mut tape = Tape::new();
    let gv = g.bind(&mut tape, LeafKind::Param);
    let dv = d.bind(&mut tape, LeafKind::Constant);
    let zv = tape.constant(z.clone());
    let x = mlp_forward(&mut tape, &gv, zv)?;
    let logit = mlp_forward(&mut tape, &dv, x)?;
    let sp = tape.softplus(logit);
    let log_one_minus = tape.neg(sp);
    let grads = tape.grad(log_one_minus, &gv.vars())?;
    let gan = flat_grads(&tape, &grads);

    let x0 = g.forward(&z)?;
    let gx = disc_input_grad(d, &x0)?;
    let target = x0.zip_map(&gx, |a, b| a + step * b);
    let mut tape = Tape::new();
    let gv = g.bind(&mut tape, LeafKind::Param);
    let zv = tape.constant(z);
    let out = mlp_forward(&mut tape, &gv, zv)?;
    let t = tape.constant(target);
    let diff = tape.sub(out, t);
    let sq = tape.square(diff);
    let s = tape.sum(sq);
    let loss = tape.scale(s, 0.5);
    let grads = tape.grad(loss, &gv.vars())?;
    Ok(FieldPair {
        gan,
        cfg: flat_grads(&tape, &grads),
    })
}

/// `1 - cos` between two vectors, or `None` when either is zero.
pub fn one_minus_cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some(1.0 - dot / (na * nb))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldCheck {
    /// Largest `1 - cos` over compared latents (0 when none compared).
    pub max_deviation: f64,
    pub compared: usize,
    /// Latents where either field vanished.
    pub skipped: usize,
}

/// Compares the directions of the two generator fields at every row of `z`
/// with a single functional step of size `eta_1 * delta`.
pub fn field_equivalence_check(
    g: &MlpParams,
    d: &MlpParams,
    z: &Tensor,
    eta_1: f64,
    delta: f64,
) -> Result<FieldCheck> {
    for (name, value) in [("eta_1", eta_1), ("delta", delta)] {
        if !(value > 0.0) {
            return Err(DynamicsError::NonPositive { name, value });
        }
    }
    let mut check = FieldCheck {
        max_deviation: 0.0,
        compared: 0,
        skipped: 0,
    };
    for row in z.iter_rows().take(z.rows()) {
        let pair = field_pair(g, d, row, eta_1 * delta)?;
        match one_minus_cosine(&pair.gan, &pair.cfg) {
            Some(dev) => {
                check.max_deviation = check.max_deviation.max(dev);
                check.compared += 1;
            }
            None => check.skipped += 1,
        }
    }
    Ok(check)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Both players step from the same state.
    Simultaneous,
    /// The discriminator steps first; the generator sees the updated
    /// discriminator.
    Alternating,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Simultaneous => "simultaneous",
            Integrator::Alternating => "alternating",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiracConfig {
    pub penalty: Penalty,
    pub steps: usize,
    pub lr: f64,
    /// Starting `(theta, psi)`.
    pub init: (f64, f64),
    pub integrator: Integrator,
    /// Functional step size and scale; the generator moves by
    /// `lr * eta_m * delta * psi` per step.
    pub eta_m: f64,
    pub delta: f64,
}

impl DiracConfig {
    pub fn new(penalty: Penalty, steps: usize, lr: f64, init: (f64, f64)) -> Self {
        Self {
            penalty,
            steps,
            lr,
            init,
            integrator: Integrator::Alternating,
            eta_m: 1.0,
            delta: 1.0,
        }
    }
}

pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(theta, psi)` after each step, starting with the initial point.
    pub points: Vec<(f64, f64)>,
    pub lr: f64,
    pub integrator: Integrator,
    pub penalty: PenaltyKind,
    pub diverged: bool,
}

impl Trajectory {
    /// Distance of the last point from the equilibrium `(0, 0)`.
    pub fn final_distance(&self) -> f64 {
        let &(t, p) = self.points.last().expect("trajectory holds the initial point");
        t.hypot(p)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,theta,psi")?;
        for (i, (t, p)) in self.points.iter().enumerate() {
            writeln!(w, "{i},{t:.16e},{p:.16e}")?;
        }
        w.flush()
    }
}

/// Derivative of the penalty with respect to `psi`; the input gradient of
/// `D` is `psi` everywhere.
fn penalty_grad(p: &Penalty, psi: f64) -> f64 {
    match p.kind {
        PenaltyKind::None => 0.0,
        PenaltyKind::Centered0 => p.gamma * psi,
        PenaltyKind::Centered1 => p.gamma * (psi.abs() - 1.0) * psi.signum(),
        PenaltyKind::CenteredEps { eps_norm } => p.gamma * (psi - eps_norm),
    }
}

/// Integrates the Dirac GAN under CFG training with explicit Euler steps.
///
/// The discriminator descends `softplus(-psi * theta*) + softplus(psi * theta)`
/// plus the penalty; the generator moves towards its functional-gradient
/// target `theta + eta_m * delta * psi`.
pub fn dirac_simulate(cfg: &DiracConfig) -> Result<Trajectory> {
    if cfg.steps == 0 {
        return Err(DynamicsError::NoSteps);
    }
    for (name, value) in [("lr", cfg.lr), ("eta_m", cfg.eta_m), ("delta", cfg.delta)] {
        if !(value > 0.0) {
            return Err(DynamicsError::NonPositive { name, value });
        }
    }
    cfg.penalty.validate()?;
    let (mut theta, mut psi) = cfg.init;
    let mut points = Vec::with_capacity(cfg.steps + 1);
    points.push((theta, psi));
    let d_grad = |theta: f64, psi: f64| theta * sigmoid(psi * theta) + penalty_grad(&cfg.penalty, psi);
    let g_speed = cfg.eta_m * cfg.delta;
    let mut diverged = false;
    for _ in 0..cfg.steps {
        match cfg.integrator {
            Integrator::Alternating => {
                psi -= cfg.lr * d_grad(theta, psi);
                theta += cfg.lr * g_speed * psi;
            }
            Integrator::Simultaneous => {
                let new_psi = psi - cfg.lr * d_grad(theta, psi);
                theta += cfg.lr * g_speed * psi;
                psi = new_psi;
            }
        }
        if !(theta.abs() <= DIVERGENCE_LIMIT && psi.abs() <= DIVERGENCE_LIMIT) {
            diverged = true;
            break;
        }
        points.push((theta, psi));
    }
    Ok(Trajectory {
        points,
        lr: cfg.lr,
        integrator: cfg.integrator,
        penalty: cfg.penalty.kind,
        diverged,
    })
}
