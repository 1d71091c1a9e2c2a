//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records operations eagerly: every node stores its value the
//! moment it is pushed. [`Tape::grad`] runs a reverse sweep whose adjoint
//! computations are themselves pushed onto the same tape, so a gradient is
//! an ordinary node that can be fed into further operations and
//! differentiated again. This is what lets a gradient penalty on
//! `grad_x D(x)` be differentiated with respect to the discriminator
//! parameters.
//!
//! Operation builders panic on shape mismatches, like `ndarray` does for
//! arithmetic. [`Tape::forward_eval`] replays a recorded graph with new leaf
//! values and reports the same problems as errors instead.

use std::collections::HashMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{ShapeError, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("leaf {0} has no bound value")]
    UnboundLeaf(usize),
    #[error("gradient root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("node {0} is not a leaf")]
    NotALeaf(usize),
    #[error("node {0} does not belong to this tape")]
    UnknownNode(usize),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("finite-difference order must be 1 or 2, got {0}")]
    InvalidOrder(u8),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a leaf stands for. Only `Param` leaves receive adjoints from
/// [`param_grad`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Param,
    Input,
    Constant,
}

/// Leaf values substituted during [`Tape::forward_eval`].
pub type Bindings = HashMap<Var, Tensor>;

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf { kind: LeafKind, bound: bool },
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `m x n` plus a `1 x n` row added to every row.
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Tanh(Var),
    Relu(Var),
    /// Heaviside step `x > 0`; treated as locally constant.
    Step(Var),
    Sigmoid(Var),
    Softplus(Var),
    Square(Var),
    /// `1/x`, with `0` at `x == 0`.
    RecipOrZero(Var),
    /// Euclidean norm of each row, `m x n -> m x 1`.
    RowNorm(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastRows(Var, usize),
    BroadcastCols(Var, usize),
    BroadcastScalar(Var, usize, usize),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match *self {
            Leaf { .. } => vec![],
            MatMul { a, b, .. } | Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) => vec![a, b],
            Scale(a, _) | AddScalar(a, _) | Tanh(a) | Relu(a) | Step(a) | Sigmoid(a)
            | Softplus(a) | Square(a) | RecipOrZero(a) | RowNorm(a) | SumAll(a) | SumRows(a)
            | SumCols(a) | BroadcastRows(a, _) | BroadcastCols(a, _)
            | BroadcastScalar(a, _, _) => vec![a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
/// `tanh` through a single `exp`; absolute error within a few ulps of 1.
pub(crate) fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn matmul(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Result<Tensor> {
    let (ar, ac) = a.dims2()?;
    let (br, bc) = b.dims2()?;
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    if k != k2 {
        return Err(AutodiffError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; m * n];
    if m > 0 && n > 0 && k > 0 {
        let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
        let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
        // SAFETY: the strides describe the row-major buffers of `a` and `b`
        // (possibly transposed) and `out` is a fresh m x n row-major buffer.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data().as_ptr(),
                rsa,
                csa,
                b.data().as_ptr(),
                rsb,
                csb,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    Ok(Tensor::matrix(m, n, out)?)
}

fn eval_op<'a>(op: Op, get: impl Fn(Var) -> &'a Tensor) -> Result<Tensor> {
    use Op::*;
    Ok(match op {
        Leaf { .. } => unreachable!("leaves are not evaluated"),
        MatMul { a, b, ta, tb } => matmul(get(a), get(b), ta, tb)?,
        Add(a, b) => {
            same_shape("add", get(a), get(b))?;
            get(a).zip_map(get(b), |x, y| x + y)
        }
        Sub(a, b) => {
            same_shape("sub", get(a), get(b))?;
            get(a).zip_map(get(b), |x, y| x - y)
        }
        Mul(a, b) => {
            same_shape("mul", get(a), get(b))?;
            get(a).zip_map(get(b), |x, y| x * y)
        }
        AddRow(a, b) => {
            let (x, row) = (get(a), get(b));
            let (m, n) = x.dims2()?;
            if row.dims2()? != (1, n) {
                return Err(AutodiffError::ShapeMismatch {
                    op: "add_row",
                    left: x.shape().to_vec(),
                    right: row.shape().to_vec(),
                });
            }
            let mut data = x.data().to_vec();
            for chunk in data.chunks_mut(n.max(1)) {
                for (v, r) in chunk.iter_mut().zip(row.data()) {
                    *v += r;
                }
            }
            Tensor::matrix(m, n, data)?
        }
        Scale(a, c) => get(a).map(|x| c * x),
        AddScalar(a, c) => get(a).map(|x| x + c),
        Tanh(a) => get(a).map(tanh),
        Relu(a) => get(a).map(|x| x.max(0.0)),
        Step(a) => get(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 }),
        Sigmoid(a) => get(a).map(sigmoid),
        Softplus(a) => get(a).map(softplus),
        Square(a) => get(a).map(|x| x * x),
        RecipOrZero(a) => get(a).map(|x| if x == 0.0 { 0.0 } else { 1.0 / x }),
        RowNorm(a) => {
            let x = get(a);
            let (m, _) = x.dims2()?;
            let norms = x
                .iter_rows()
                .take(m)
                .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            Tensor::matrix(m, 1, norms)?
        }
        SumAll(a) => Tensor::scalar(get(a).data().iter().sum()),
        SumRows(a) => {
            let x = get(a);
            let (m, _) = x.dims2()?;
            let sums = x.iter_rows().take(m).map(|r| r.iter().sum()).collect();
            Tensor::matrix(m, 1, sums)?
        }
        SumCols(a) => {
            let x = get(a);
            let (_, n) = x.dims2()?;
            let mut sums = vec![0.0; n];
            for r in x.iter_rows() {
                for (s, v) in sums.iter_mut().zip(r) {
                    *s += v;
                }
            }
            Tensor::matrix(1, n, sums)?
        }
        BroadcastRows(a, m) => {
            let x = get(a);
            let (r, n) = x.dims2()?;
            if r != 1 {
                return Err(AutodiffError::ShapeMismatch {
                    op: "broadcast_rows",
                    left: x.shape().to_vec(),
                    right: vec![1, n],
                });
            }
            Tensor::matrix(m, n, x.data().repeat(m))?
        }
        BroadcastCols(a, n) => {
            let x = get(a);
            let (m, c) = x.dims2()?;
            if c != 1 {
                return Err(AutodiffError::ShapeMismatch {
                    op: "broadcast_cols",
                    left: x.shape().to_vec(),
                    right: vec![m, 1],
                });
            }
            let data = x
                .data()
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, n))
                .collect();
            Tensor::matrix(m, n, data)?
        }
        BroadcastScalar(a, m, n) => {
            let x = get(a);
            let v = x.item().ok_or_else(|| AutodiffError::ShapeMismatch {
                op: "broadcast_scalar",
                left: x.shape().to_vec(),
                right: vec![1, 1],
            })?;
            Tensor::filled(m, n, v)
        }
    })
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf_kind(&self, v: Var) -> Option<LeafKind> {
        match self.nodes.get(v.0)?.op {
            Op::Leaf { kind, .. } => Some(kind),
            _ => None,
        }
    }

    /// All parameter leaves in recording order.
    pub fn params(&self) -> Vec<Var> {
        (0..self.nodes.len())
            .map(Var)
            .filter(|&v| self.leaf_kind(v) == Some(LeafKind::Param))
            .collect()
    }

    pub fn leaf(&mut self, kind: LeafKind, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf { kind, bound: true },
            value,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(LeafKind::Param, value)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.leaf(LeafKind::Input, value)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(LeafKind::Constant, value)
    }

    /// A leaf without a value. Its recorded value is zeros of the given
    /// shape, which only serves to size downstream nodes; it must be bound
    /// when calling [`Tape::forward_eval`].
    pub fn placeholder(&mut self, kind: LeafKind, rows: usize, cols: usize) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf { kind, bound: false },
            value: Tensor::zeros(rows, cols),
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Var {
        let nodes = &self.nodes;
        let value = eval_op(op, |v| &nodes[v.0].value).unwrap_or_else(|e| panic!("{e}"));
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) * op(b)` where `op` optionally transposes.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        self.push(Op::MatMul { a, b, ta, tb })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        self.push(Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push(Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.push(Op::AddScalar(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.push(Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.push(Op::Relu(a))
    }

    pub fn step(&mut self, a: Var) -> Var {
        self.push(Op::Step(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.push(Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.push(Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.push(Op::Square(a))
    }

    pub fn recip_or_zero(&mut self, a: Var) -> Var {
        self.push(Op::RecipOrZero(a))
    }

    /// Row-wise Euclidean norm. The recorded derivative at a zero row is the
    /// zero vector.
    pub fn row_norm(&mut self, a: Var) -> Var {
        self.push(Op::RowNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push(Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        self.push(Op::SumRows(a))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        self.push(Op::SumCols(a))
    }

    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        self.push(Op::BroadcastRows(a, rows))
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Var {
        self.push(Op::BroadcastCols(a, cols))
    }

    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        self.push(Op::BroadcastScalar(a, rows, cols))
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(AutodiffError::UnknownNode(v.0));
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `out` (with adjoint `g`) for each of
    /// its inputs, recorded on the tape.
    fn vjp(&mut self, out: Var, op: Op, g: Var, wanted: impl Fn(Var) -> bool) -> Vec<(Var, Var)> {
        use Op::*;
        let mut contribs = Vec::with_capacity(2);
        match op {
            Leaf { .. } | Step(_) => {}
            MatMul { a, b, ta, tb } => {
                if wanted(a) {
                    let da = match (ta, tb) {
                        (false, false) => self.matmul_t(g, b, false, true),
                        (false, true) => self.matmul_t(g, b, false, false),
                        (true, false) => self.matmul_t(b, g, false, true),
                        (true, true) => self.matmul_t(b, g, true, true),
                    };
                    contribs.push((a, da));
                }
                if wanted(b) {
                    let db = match (ta, tb) {
                        (false, false) => self.matmul_t(a, g, true, false),
                        (false, true) => self.matmul_t(g, a, true, false),
                        (true, false) => self.matmul_t(a, g, false, false),
                        (true, true) => self.matmul_t(g, a, true, true),
                    };
                    contribs.push((b, db));
                }
            }
            Add(a, b) => {
                if wanted(a) {
                    contribs.push((a, g));
                }
                if wanted(b) {
                    contribs.push((b, g));
                }
            }
            Sub(a, b) => {
                if wanted(a) {
                    contribs.push((a, g));
                }
                if wanted(b) {
                    let nb = self.neg(g);
                    contribs.push((b, nb));
                }
            }
            Mul(a, b) => {
                if wanted(a) {
                    let da = self.mul(g, b);
                    contribs.push((a, da));
                }
                if wanted(b) {
                    let db = self.mul(g, a);
                    contribs.push((b, db));
                }
            }
            AddRow(a, b) => {
                if wanted(a) {
                    contribs.push((a, g));
                }
                if wanted(b) {
                    let db = self.sum_cols(g);
                    contribs.push((b, db));
                }
            }
            Scale(a, c) => {
                let da = self.scale(g, c);
                contribs.push((a, da));
            }
            AddScalar(a, _) => contribs.push((a, g)),
            Tanh(a) => {
                // 1 - y^2 with y the recorded output
                let y2 = self.square(out);
                let neg = self.scale(y2, -1.0);
                let d = self.add_scalar(neg, 1.0);
                let da = self.mul(g, d);
                contribs.push((a, da));
            }
            Relu(a) => {
                let mask = self.step(a);
                let da = self.mul(g, mask);
                contribs.push((a, da));
            }
            Sigmoid(a) => {
                let neg = self.scale(out, -1.0);
                let one_minus = self.add_scalar(neg, 1.0);
                let d = self.mul(out, one_minus);
                let da = self.mul(g, d);
                contribs.push((a, da));
            }
            Softplus(a) => {
                let s = self.sigmoid(a);
                let da = self.mul(g, s);
                contribs.push((a, da));
            }
            Square(a) => {
                let two_a = self.scale(a, 2.0);
                let da = self.mul(g, two_a);
                contribs.push((a, da));
            }
            RecipOrZero(a) => {
                let y2 = self.square(out);
                let d = self.scale(y2, -1.0);
                let da = self.mul(g, d);
                contribs.push((a, da));
            }
            RowNorm(a) => {
                let n = self.value(a).cols();
                let inv = self.recip_or_zero(out);
                let w = self.mul(g, inv);
                let wb = self.broadcast_cols(w, n);
                let da = self.mul(wb, a);
                contribs.push((a, da));
            }
            SumAll(a) => {
                let (m, n) = self.value(a).dims2().expect("rank checked at record time");
                let da = self.broadcast_scalar(g, m, n);
                contribs.push((a, da));
            }
            SumRows(a) => {
                let n = self.value(a).cols();
                let da = self.broadcast_cols(g, n);
                contribs.push((a, da));
            }
            SumCols(a) => {
                let m = self.value(a).rows();
                let da = self.broadcast_rows(g, m);
                contribs.push((a, da));
            }
            BroadcastRows(a, _) => {
                let da = self.sum_cols(g);
                contribs.push((a, da));
            }
            BroadcastCols(a, _) => {
                let da = self.sum_rows(g);
                contribs.push((a, da));
            }
            BroadcastScalar(a, _, _) => {
                let da = self.sum(g);
                contribs.push((a, da));
            }
        }
        contribs.retain(|&(input, _)| wanted(input));
        contribs
    }

    /// Gradients of the scalar `root` with respect to each node in `wrt`.
    ///
    /// The sweep is recorded: the returned nodes can be used in further
    /// operations and differentiated again. Nodes in `wrt` that `root` does
    /// not depend on get a constant zero gradient.
    pub fn grad(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        self.check(root)?;
        for &w in wrt {
            self.check(w)?;
        }
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(AutodiffError::NonScalarRoot(root_value.shape().to_vec()));
        }
        let n = root.0 + 1;

        // nodes that lie on some path from a `wrt` node
        let mut relevant = vec![false; n];
        for &w in wrt {
            if w.0 < n {
                relevant[w.0] = true;
            }
        }
        for i in 0..n {
            if !relevant[i] {
                relevant[i] = self.nodes[i].op.inputs().iter().any(|v| relevant[v.0]);
            }
        }

        let mut adjoint: Vec<Option<Var>> = vec![None; n];
        if relevant[root.0] {
            let seed = Tensor::new(root_value.shape().to_vec(), vec![1.0])?;
            adjoint[root.0] = Some(self.constant(seed));
        }
        for i in (0..n).rev() {
            let Some(g) = adjoint[i] else { continue };
            let op = self.nodes[i].op;
            if matches!(op, Op::Leaf { .. }) {
                continue;
            }
            for (input, contrib) in self.vjp(Var(i), op, g, |v| relevant[v.0]) {
                adjoint[input.0] = Some(match adjoint[input.0] {
                    None => contrib,
                    Some(prev) => self.add(prev, contrib),
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|&w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let zeros = self.value(w).map(|_| 0.0);
                    self.constant(zeros)
                }
            })
            .collect())
    }

    /// Re-evaluates the graph up to `root` with some leaves replaced.
    ///
    /// Bound leaves keep their recorded value unless overridden; placeholder
    /// leaves must appear in `bindings`.
    pub fn forward_eval(&self, root: Var, bindings: &Bindings) -> Result<Tensor> {
        self.check(root)?;
        for v in bindings.keys() {
            self.check(*v)?;
        }
        let mut values: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        for i in 0..=root.0 {
            let node = &self.nodes[i];
            let value = match node.op {
                Op::Leaf { bound, .. } => match bindings.get(&Var(i)) {
                    Some(t) => {
                        same_shape("binding", &node.value, t)?;
                        t.clone()
                    }
                    None if bound => node.value.clone(),
                    None => return Err(AutodiffError::UnboundLeaf(i)),
                },
                op => eval_op(op, |v| values[v.0].as_ref().expect("topological order"))?,
            };
            values[i] = Some(value);
        }
        Ok(values.pop().flatten().expect("root evaluated"))
    }
}

/// Adjoints of a scalar `root` for every parameter leaf on the tape.
pub fn param_grad(tape: &mut Tape, root: Var) -> Result<Vec<(Var, Tensor)>> {
    let params = tape.params();
    let grads = tape.grad(root, &params)?;
    Ok(params
        .into_iter()
        .zip(grads)
        .map(|(p, g)| (p, tape.value(g).clone()))
        .collect())
}

/// Gradient of `root` with respect to the leaf `wrt`, as a recorded node.
///
/// For a batched input the root is normally the sum of per-sample outputs,
/// which makes row `i` of the result the gradient of sample `i`.
pub fn input_grad(tape: &mut Tape, root: Var, wrt: Var) -> Result<Var> {
    tape.check(wrt)?;
    if tape.leaf_kind(wrt).is_none() {
        return Err(AutodiffError::NotALeaf(wrt.0));
    }
    Ok(tape.grad(root, &[wrt])?[0])
}

/// Relative error used by [`fd_check`]: `|a - b| / max(|a|, |b|, 1e-6)`.
///
/// The floor keeps coordinates whose true derivative is zero from turning
/// roundoff into an unbounded relative error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

/// Compares analytic derivatives of `root` against central differences over
/// every parameter leaf and returns the largest [`relative_error`].
///
/// `order == 1` checks `d root / d params` against differences of `root`.
/// `order == 2` checks the Hessian-vector product `d (v . grad root) / d params`
/// against differences of the recorded gradient, for a fixed pseudo-random
/// direction `v`.
pub fn fd_check(tape: &mut Tape, root: Var, order: u8, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(AutodiffError::InvalidStep(h));
    }
    let params = tape.params();
    let target = match order {
        1 => root,
        2 => {
            let grads = tape.grad(root, &params)?;
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let mut acc: Option<Var> = None;
            for g in grads {
                let (r, c) = tape.value(g).dims2()?;
                let dir = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
                let dir = tape.constant(Tensor::matrix(r, c, dir)?);
                let prod = tape.mul(g, dir);
                let s = tape.sum(prod);
                acc = Some(match acc {
                    None => s,
                    Some(prev) => tape.add(prev, s),
                });
            }
            match acc {
                Some(s) => s,
                None => return Ok(0.0),
            }
        }
        other => return Err(AutodiffError::InvalidOrder(other)),
    };
    let analytic = tape.grad(target, &params)?;

    let mut worst: f64 = 0.0;
    let mut bindings = Bindings::new();
    for (&p, &g) in params.iter().zip(&analytic) {
        let base = tape.value(p).clone();
        let grad = tape.value(g).clone();
        for j in 0..base.len() {
            let mut plus = base.clone().into_data();
            let mut minus = plus.clone();
            plus[j] += h;
            minus[j] -= h;
            bindings.insert(p, Tensor::new(base.shape().to_vec(), plus)?);
            let fp = tape.forward_eval(target, &bindings)?.item().unwrap_or(f64::NAN);
            bindings.insert(p, Tensor::new(base.shape().to_vec(), minus)?);
            let fm = tape.forward_eval(target, &bindings)?.item().unwrap_or(f64::NAN);
            let numeric = (fp - fm) / (2.0 * h);
            let err = relative_error(grad.data()[j], numeric);
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
        bindings.remove(&p);
    }
    Ok(worst)
}
