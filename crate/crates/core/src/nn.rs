//! Dense MLPs for the generator and discriminator, plus Adam.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{LeafKind, Tape, Var};
use crate::tensor::Tensor;

pub mod checkpoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("architecture needs at least an input and an output size")]
    EmptyArchitecture,
    #[error("layer size {index} is zero")]
    ZeroWidth { index: usize },
    #[error("input has {got} columns, network expects {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("gradient for {param} has shape {got:?}, expected {expected:?}")]
    GradientShape {
        param: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("expected {expected} gradient tensors, got {got}")]
    GradientCount { expected: usize, got: usize },
    #[error("non-finite gradient in {param}")]
    NonFiniteGradient { param: String },
    #[error("flat parameter vector has {got} values, architecture needs {expected}")]
    FlatLength { expected: usize, got: usize },
}

/// Hidden-layer nonlinearity. The last layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`, applied as `x W + b`.
    pub weight: Tensor,
    /// `1 x fan_out`
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
}

fn check_arch(sizes: &[usize]) -> Result<(), NnError> {
    if sizes.len() < 2 {
        return Err(NnError::EmptyArchitecture);
    }
    if let Some(index) = sizes.iter().position(|&s| s == 0) {
        return Err(NnError::ZeroWidth { index });
    }
    Ok(())
}

/// Uniform fan-in initialisation: weights in `±sqrt(3 / fan_in)` (standard
/// deviation `1/sqrt(fan_in)`), biases zero.
pub fn mlp_init(sizes: &[usize], activation: Activation, seed: u64) -> Result<MlpParams, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mlp_init_with(sizes, activation, &mut rng)
}

pub fn mlp_init_with<R: rand::Rng + ?Sized>(
    sizes: &[usize],
    activation: Activation,
    rng: &mut R,
) -> Result<MlpParams, NnError> {
    check_arch(sizes)?;
    let layers = sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (3.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            Layer {
                weight: Tensor::matrix(fan_in, fan_out, data).expect("sized"),
                bias: Tensor::zeros(1, fan_out),
            }
        })
        .collect();
    Ok(MlpParams {
        sizes: sizes.to_vec(),
        activation,
        layers,
    })
}

impl MlpParams {
    /// All weights and biases zero.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self, NnError> {
        check_arch(sizes)?;
        Self::from_flat(sizes, activation, &vec![0.0; param_count(sizes)])
    }

    /// Rebuilds a network from `[W0, b0, W1, b1, ..]` flattened row-major.
    pub fn from_flat(sizes: &[usize], activation: Activation, flat: &[f64]) -> Result<Self, NnError> {
        check_arch(sizes)?;
        let expected = param_count(sizes);
        if flat.len() != expected {
            return Err(NnError::FlatLength {
                expected,
                got: flat.len(),
            });
        }
        let mut rest = flat;
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let (wd, r) = rest.split_at(fan_in * fan_out);
            let (bd, r) = r.split_at(fan_out);
            rest = r;
            layers.push(Layer {
                weight: Tensor::matrix(fan_in, fan_out, wd.to_vec()).expect("sized"),
                bias: Tensor::matrix(1, fan_out, bd.to_vec()).expect("sized"),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            layers,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty architecture")
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.sizes)
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    /// Parameter tensors in `[W0, b0, W1, b1, ..]` order.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")])
            .collect()
    }

    /// Records the parameters as leaves of the given kind.
    pub fn bind(&self, tape: &mut Tape, kind: LeafKind) -> MlpVars {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.leaf(kind, l.weight.clone()), tape.leaf(kind, l.bias.clone())))
            .collect();
        MlpVars {
            layers,
            activation: self.activation,
            input_dim: self.input_dim(),
        }
    }

    /// Batched forward pass without keeping the graph.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, LeafKind::Constant);
        let xv = tape.constant(x.clone());
        let out = mlp_forward(&mut tape, &vars, xv)?;
        Ok(tape.value(out).clone())
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// An [`MlpParams`] recorded on a tape.
#[derive(Debug, Clone)]
pub struct MlpVars {
    layers: Vec<(Var, Var)>,
    activation: Activation,
    input_dim: usize,
}

impl MlpVars {
    /// Leaves in `[W0, b0, W1, b1, ..]` order.
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// Records `x -> MLP(x)` on `tape`; `x` is `batch x input_dim`.
pub fn mlp_forward(tape: &mut Tape, p: &MlpVars, x: Var) -> Result<Var, NnError> {
    let got = tape.value(x).cols();
    if got != p.input_dim {
        return Err(NnError::InputWidth {
            expected: p.input_dim,
            got,
        });
    }
    let last = p.layers.len() - 1;
    let mut h = x;
    for (i, &(w, b)) in p.layers.iter().enumerate() {
        let z = tape.matmul(h, w);
        h = tape.add_row(z, b);
        if i < last {
            h = match p.activation {
                Activation::Tanh => tape.tanh(h),
                Activation::Relu => tape.relu(h),
            };
        }
    }
    Ok(h)
}

/// Adam moments for one [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams, lr: f64, beta1: f64, beta2: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. `grads` follows [`MlpParams::tensors`]
/// order. Nothing is modified if any gradient is malformed or non-finite.
pub fn adam_step(params: &mut MlpParams, grads: &[Tensor], state: &mut AdamState) -> Result<(), NnError> {
    let names = params.param_names();
    if grads.len() != names.len() {
        return Err(NnError::GradientCount {
            expected: names.len(),
            got: grads.len(),
        });
    }
    for ((p, g), name) in params.tensors().zip(grads).zip(&names) {
        if p.shape() != g.shape() {
            return Err(NnError::GradientShape {
                param: name.clone(),
                expected: p.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(NnError::NonFiniteGradient { param: name.clone() });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let mut flat = params.flat();
    let mut offset = 0;
    for (k, g) in grads.iter().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (j, &gj) in g.data().iter().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            flat[offset + j] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
        offset += g.len();
    }
    *params = MlpParams::from_flat(&params.sizes, params.activation, &flat)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let a = mlp_init(&[2, 64, 64, 2], Activation::Tanh, 7).unwrap();
        let b = mlp_init(&[2, 64, 64, 2], Activation::Tanh, 7).unwrap();
        assert_eq!(a, b);
        let c = mlp_init(&[2, 64, 64, 2], Activation::Tanh, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_biases_are_zero() {
        for seed in 0..5 {
            let p = mlp_init(&[2, 1], Activation::Relu, seed).unwrap();
            assert!(p.layers()[0].bias.data().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_weight_std_matches_fan_in() {
        // 10^4 draws per layer: pool weights from repeated inits
        let arch = [2, 64, 64, 1];
        for (layer, &fan_in) in arch[..3].iter().enumerate() {
            let mut draws = Vec::new();
            let mut seed = 0;
            while draws.len() < 10_000 {
                let p = mlp_init(&arch, Activation::Relu, seed).unwrap();
                draws.extend_from_slice(p.layers()[layer].weight.data());
                seed += 1;
            }
            let n = draws.len() as f64;
            let mean = draws.iter().sum::<f64>() / n;
            let std = (draws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let target = 1.0 / (fan_in as f64).sqrt();
            assert!((std / target - 1.0).abs() < 0.2, "layer {layer}: std {std} vs {target}");
        }
    }

    #[test]
    fn empty_architecture_is_rejected() {
        assert_eq!(mlp_init(&[], Activation::Tanh, 0).unwrap_err(), NnError::EmptyArchitecture);
        assert_eq!(mlp_init(&[3], Activation::Tanh, 0).unwrap_err(), NnError::EmptyArchitecture);
        assert_eq!(
            mlp_init(&[2, 0, 1], Activation::Tanh, 0).unwrap_err(),
            NnError::ZeroWidth { index: 1 }
        );
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&[2, 8, 3], Activation::Tanh).unwrap();
        let x = Tensor::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let y = p.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_matches_hand_computation() {
        let p = MlpParams::from_flat(&[2, 3], Activation::Relu, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, -0.5, 1.5])
            .unwrap();
        let x = Tensor::from_rows(&[[1.0, -1.0], [0.25, 2.0]]);
        let y = p.forward(&x).unwrap();
        let w = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let b = [0.5, -0.5, 1.5];
        for (i, row) in x.iter_rows().enumerate() {
            for j in 0..3 {
                let want = row[0] * w[0][j] + row[1] * w[1][j] + b[j];
                assert!((y.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_rows_are_independent() {
        let p = mlp_init(&[2, 16, 16, 2], Activation::Tanh, 3).unwrap();
        let x = Tensor::from_rows(&[[0.1, 0.2], [-1.0, 0.7], [2.0, -0.3]]);
        let y = p.forward(&x).unwrap();
        for i in 0..3 {
            let yi = p.forward(&x.select_rows(&[i])).unwrap();
            assert_eq!(yi.data(), y.row(i));
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = mlp_init(&[2, 4, 1], Activation::Relu, 0).unwrap();
        let err = p.forward(&Tensor::zeros(5, 3)).unwrap_err();
        assert_eq!(err, NnError::InputWidth { expected: 2, got: 3 });
    }

    fn zero_grads(p: &MlpParams) -> Vec<Tensor> {
        p.tensors().map(|t| t.map(|_| 0.0)).collect()
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut p = mlp_init(&[2, 4, 1], Activation::Relu, 1).unwrap();
        let before = p.clone();
        let mut s = AdamState::new(&p, 1e-3, 0.5, 0.999);
        for _ in 0..5 {
            adam_step(&mut p, &zero_grads(&before), &mut s).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step(), 5);
    }

    #[test]
    fn adam_zero_lr_is_identity() {
        let mut p = mlp_init(&[2, 4, 1], Activation::Relu, 1).unwrap();
        let before = p.clone();
        let grads: Vec<Tensor> = p.tensors().map(|t| t.map(|_| 0.3)).collect();
        let mut s = AdamState::new(&p, 0.0, 0.5, 0.999);
        adam_step(&mut p, &grads, &mut s).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_constant_gradient_matches_scalar_recursion() {
        // independent scalar Adam recursion as the oracle
        let (lr, b1, b2, eps, g) = (0.01, 0.5, 0.999, 1e-8, 0.37);
        let mut p = MlpParams::from_flat(&[1, 1], Activation::Tanh, &[0.0, 0.0]).unwrap();
        let grads = vec![Tensor::scalar(g), Tensor::scalar(-g)];
        let mut s = AdamState::new(&p, lr, b1, b2);
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 0.0f64);
        let mut last_step = 0.0;
        for t in 1..=200 {
            adam_step(&mut p, &grads, &mut s).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let delta = lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            w -= delta;
            last_step = delta;
        }
        assert!((p.flat()[0] - w).abs() < 1e-12);
        assert!((p.flat()[1] + w).abs() < 1e-12);
        // sign-like step of magnitude lr
        assert!((last_step - lr).abs() < 1e-6, "{last_step}");
    }

    #[test]
    fn adam_rejects_non_finite_gradient_by_name() {
        let mut p = mlp_init(&[2, 3, 1], Activation::Relu, 1).unwrap();
        let before = p.clone();
        let mut grads = zero_grads(&p);
        grads[3] = Tensor::scalar(f64::NAN);
        let mut s = AdamState::new(&p, 1e-3, 0.5, 0.999);
        let err = adam_step(&mut p, &grads, &mut s).unwrap_err();
        assert_eq!(
            err,
            NnError::NonFiniteGradient {
                param: "layer1.bias".into()
            }
        );
        assert_eq!(p, before);
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = mlp_init(&[2, 8, 1], Activation::Tanh, 4).unwrap();
            let grads: Vec<Tensor> = p.tensors().map(|t| t.map(|x| x.sin() + 0.1)).collect();
            let mut s = AdamState::new(&p, 1e-2, 0.5, 0.999);
            for _ in 0..10 {
                adam_step(&mut p, &grads, &mut s).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
