//! Tape-based reverse-mode automatic differentiation over a fixed op set.
//!
//! A [`Graph`] owns every value produced during a forward pass. Operations
//! whose inputs all have `requires_grad == false` are evaluated eagerly and
//! leave the tape untouched, so inference on frozen parameters records
//! nothing.

mod grad_check;
pub(crate) mod kernels;

use std::fmt;

pub use grad_check::{grad_check, relative_error};

use crate::error::{KanError, Result};
use crate::spline;
use crate::tensor::Tensor;
use kernels::{broadcast_shape, broadcast_strides, gemm, reduce_to, sigmoid, strides, walk2};

/// Handle to a value owned by a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Matmul,
    EinsumBig,
    Sin,
    Cos,
    AddBroadcast,
    MulBroadcast,
    SumAxes,
    Silu,
    Relu,
    Tanh,
    Exp,
    Scale,
    Reshape,
    BsplineBasis,
    SoftmaxCrossEntropy,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Matmul => "matmul",
            OpKind::EinsumBig => "einsum_big",
            OpKind::Sin => "sin",
            OpKind::Cos => "cos",
            OpKind::AddBroadcast => "add_broadcast",
            OpKind::MulBroadcast => "mul_broadcast",
            OpKind::SumAxes => "sum_axes",
            OpKind::Silu => "silu",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Exp => "exp",
            OpKind::Scale => "scale",
            OpKind::Reshape => "reshape",
            OpKind::BsplineBasis => "bspline_basis",
            OpKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Values an op keeps for its backward pass beyond its inputs and output.
#[derive(Debug)]
enum Saved {
    None,
    Matmul { trans_b: bool },
    SumAxes { axes: Vec<usize> },
    Scale(f64),
    Basis {
        knots: Vec<f64>,
        order: usize,
        /// order-1 bases, `[rows, n_basis + 1]`
        lower: Vec<f64>,
        /// false where the input was clamped
        inside: Vec<bool>,
    },
    Xent { probs: Vec<f64>, labels: Vec<usize> },
}

#[derive(Debug)]
struct TapeNode {
    kind: OpKind,
    inputs: Vec<Var>,
    output: Var,
    saved: Saved,
}

/// Ordered record of differentiable operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Op kinds in insertion order.
    pub fn kinds(&self) -> impl Iterator<Item = OpKind> + '_ {
        self.nodes.iter().map(|n| n.kind)
    }
}

/// Gradients produced by one [`Graph::backward`] call.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// A learnable (or frozen) tensor together with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn frozen(value: Tensor) -> Self {
        Parameter {
            trainable: false,
            ..Parameter::new(value)
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Adds `g` into the stored gradient. Frozen parameters ignore it.
    pub fn accumulate(&mut self, g: &Tensor) -> Result<()> {
        if !self.trainable {
            return Ok(());
        }
        self.grad.add_assign(g)
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    values: Vec<Tensor>,
    requires_grad: Vec<bool>,
    tape: Tape,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.values.push(t);
        self.requires_grad.push(requires_grad);
        Var(self.values.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires_grad[v.0]
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    fn push(&mut self, kind: OpKind, inputs: &[Var], out: Tensor, saved: Saved) -> Result<Var> {
        let id = self.values.len();
        if !out.all_finite() {
            return Err(KanError::NonFinite { op: kind.name(), node: id });
        }
        let rg = inputs.iter().any(|v| self.requires_grad[v.0]);
        self.values.push(out);
        self.requires_grad.push(rg);
        let output = Var(id);
        if rg {
            self.tape.nodes.push(TapeNode {
                kind,
                inputs: inputs.to_vec(),
                output,
                saved,
            });
        }
        Ok(output)
    }

    /// `a · b` for `a: [m, k]`, `b: [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 {
            return Err(KanError::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k) = (sa[0], sa[1]);
        let (kb, n) = if trans_b { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != kb {
            return Err(KanError::shape("matmul", format!("{sa:?} x {sb:?} (trans_b={trans_b})")));
        }
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, self.values[a.0].data(), false, self.values[b.0].data(), trans_b, &mut c);
        let out = Tensor::new(vec![m, n], c)?;
        self.push(OpKind::Matmul, &[a, b], out, Saved::Matmul { trans_b })
    }

    /// Contracts `amp: [out, in, grid]` with `feat: [batch, in, grid]` into
    /// `[batch, out]`.
    pub fn einsum_big(&mut self, amp: Var, feat: Var) -> Result<Var> {
        let (sa, sf) = (self.shape(amp), self.shape(feat));
        if sa.len() != 3 || sf.len() != 3 || sa[1] != sf[1] || sa[2] != sf[2] {
            return Err(KanError::shape("einsum_big", format!("{sa:?} with {sf:?}")));
        }
        let (o, b, j) = (sa[0], sf[0], sa[1] * sa[2]);
        let mut c = vec![0.0; b * o];
        gemm(b, j, o, self.values[feat.0].data(), false, self.values[amp.0].data(), true, &mut c);
        let out = Tensor::new(vec![b, o], c)?;
        self.push(OpKind::EinsumBig, &[amp, feat], out, Saved::None)
    }

    fn unary(&mut self, kind: OpKind, x: Var, f: impl Fn(f64) -> f64) -> Result<Var> {
        let out = self.values[x.0].map(f);
        self.push(kind, &[x], out, Saved::None)
    }

    pub fn sin(&mut self, x: Var) -> Result<Var> {
        self.unary(OpKind::Sin, x, f64::sin)
    }

    pub fn cos(&mut self, x: Var) -> Result<Var> {
        self.unary(OpKind::Cos, x, f64::cos)
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        self.unary(OpKind::Silu, x, |v| v * sigmoid(v))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(OpKind::Relu, x, |v| v.max(0.0))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(OpKind::Tanh, x, f64::tanh)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(OpKind::Exp, x, f64::exp)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.values[x.0].map(|v| v * c);
        self.push(OpKind::Scale, &[x], out, Saved::Scale(c))
    }

    fn binary(&mut self, kind: OpKind, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let shape = broadcast_shape(kind.name(), ta.shape(), tb.shape())?;
        let sa = broadcast_strides(ta.shape(), &shape);
        let sb = broadcast_strides(tb.shape(), &shape);
        let (da, db) = (ta.data(), tb.data());
        let mut out = vec![0.0; shape.iter().product()];
        walk2(&shape, &sa, &sb, |o, i, j| out[o] = f(da[i], db[j]));
        let out = Tensor::new(shape, out)?;
        self.push(kind, &[a, b], out, Saved::None)
    }

    /// Element-wise sum with same-rank broadcasting over size-1 axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(OpKind::AddBroadcast, a, b, |x, y| x + y)
    }

    /// Element-wise product with same-rank broadcasting over size-1 axes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(OpKind::MulBroadcast, a, b, |x, y| x * y)
    }

    /// Sums over `axes`, removing them from the shape.
    pub fn sum_axes(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if axes.iter().any(|&a| a >= shape.len()) {
            return Err(KanError::shape("sum_axes", format!("axes {axes:?} for {shape:?}")));
        }
        let kept: Vec<usize> = (0..shape.len())
            .filter(|d| !axes.contains(d))
            .map(|d| shape[d])
            .collect();
        let keep_dims: Vec<usize> = shape
            .iter()
            .enumerate()
            .map(|(d, &n)| if axes.contains(&d) { 1 } else { n })
            .collect();
        let summed = reduce_to(self.values[x.0].data(), &shape, &keep_dims);
        let out = Tensor::new(kept, summed)?;
        self.push(OpKind::SumAxes, &[x], out, Saved::SumAxes { axes })
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.shape(x).len()).collect();
        self.sum_axes(x, &axes)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.values[x.0].reshape(shape)?;
        self.push(OpKind::Reshape, &[x], out, Saved::None)
    }

    /// B-spline bases of `x: [batch, in]` into `[batch, in, n_basis]`.
    /// Inputs are clamped into the partition-of-unity range first; clamped
    /// entries get zero gradient.
    pub fn bspline_basis(&mut self, x: Var, knots: &[f64], order: usize) -> Result<Var> {
        let n = spline::basis_count(knots, order)?;
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 {
            return Err(KanError::shape("bspline_basis", format!("input {sx:?}")));
        }
        let (lo, hi) = spline::valid_range(knots, order);
        let rows = sx[0] * sx[1];
        let mut out = vec![0.0; rows * n];
        let mut lower = vec![0.0; rows * (n + 1)];
        let mut inside = vec![true; rows];
        let mut scratch = vec![0.0; knots.len() - 1];
        let xs = self.values[x.0].data();
        for r in 0..rows {
            let v = xs[r];
            let c = v.clamp(lo, hi);
            inside[r] = c == v;
            spline::eval_basis(
                c,
                knots,
                order,
                &mut scratch,
                &mut out[r * n..(r + 1) * n],
                Some(&mut lower[r * (n + 1)..(r + 1) * (n + 1)]),
            );
        }
        let clamped = inside.iter().filter(|&&i| !i).count();
        if clamped * 100 > rows {
            log::debug!("bspline_basis clamped {clamped} of {rows} inputs into [{lo}, {hi}]");
        }
        let out = Tensor::new(vec![sx[0], sx[1], n], out)?;
        let saved = Saved::Basis {
            knots: knots.to_vec(),
            order,
            lower,
            inside,
        };
        self.push(OpKind::BsplineBasis, &[x], out, saved)
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return Err(KanError::shape(
                "softmax_cross_entropy",
                format!("logits {s:?} with {} labels", labels.len()),
            ));
        }
        let (b, c) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(KanError::invalid(format!("label {bad} out of range for {c} classes")));
        }
        let z = self.values[logits.0].data();
        let mut probs = vec![0.0; b * c];
        let mut loss = 0.0;
        for r in 0..b {
            let row = &z[r * c..(r + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
            let lse = m + sum.ln();
            loss += lse - row[labels[r]];
            for k in 0..c {
                probs[r * c + k] = (row[k] - lse).exp();
            }
        }
        let out = Tensor::scalar(loss / b as f64);
        let saved = Saved::Xent {
            probs,
            labels: labels.to_vec(),
        };
        self.push(OpKind::SoftmaxCrossEntropy, &[logits], out, saved)
    }

    /// Mean squared difference between `pred` and a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        if self.shape(pred) != target.shape() {
            return Err(KanError::shape(
                "mse",
                format!("{:?} vs {:?}", self.shape(pred), target.shape()),
            ));
        }
        let n = target.numel() as f64;
        let neg = self.constant(target.map(|v| -v));
        let diff = self.add(pred, neg)?;
        let sq = self.mul(diff, diff)?;
        let total = self.sum_all(sq)?;
        self.scale(total, 1.0 / n)
    }

    /// Reverse sweep from a scalar `loss`. Each call starts from fresh
    /// gradient buffers.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = &self.values[loss.0];
        if !lt.is_scalar() {
            return Err(KanError::NonScalarLoss(lt.shape().to_vec()));
        }
        if self.tape.is_empty() {
            return Err(KanError::EmptyTape);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));
        for node in self.tape.nodes.iter().rev() {
            let Some(gy) = grads[node.output.0].take() else {
                continue;
            };
            let contribs = self.node_backward(node, &gy)?;
            grads[node.output.0] = Some(gy);
            for (input, g) in node.inputs.iter().zip(contribs) {
                let Some(g) = g else { continue };
                if !self.requires_grad[input.0] {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn node_backward(&self, node: &TapeNode, gy: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let inp = |i: usize| &self.values[node.inputs[i].0];
        let want = |i: usize| self.requires_grad[node.inputs[i].0];
        let y = &self.values[node.output.0];
        let g = gy.data();
        let elementwise = |d: &dyn Fn(f64, f64) -> f64| -> Result<Vec<Option<Tensor>>> {
            let x = inp(0);
            let data = x.data().iter().zip(y.data()).zip(g).map(|((&xv, &yv), &gv)| gv * d(xv, yv)).collect();
            Ok(vec![Some(Tensor::new(x.shape().to_vec(), data)?)])
        };
        match (&node.kind, &node.saved) {
            (OpKind::Matmul, Saved::Matmul { trans_b }) => {
                let (a, b) = (inp(0), inp(1));
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = y.shape()[1];
                let mut ga = None;
                let mut gb = None;
                if want(0) {
                    // dA = dY · op(B)ᵀ
                    let mut d = vec![0.0; m * k];
                    gemm(m, n, k, g, false, b.data(), !*trans_b, &mut d);
                    ga = Some(Tensor::new(vec![m, k], d)?);
                }
                if want(1) {
                    let mut d = vec![0.0; k * n];
                    if *trans_b {
                        // B is [n, k]: dB = dYᵀ · A
                        gemm(n, m, k, g, true, a.data(), false, &mut d);
                        gb = Some(Tensor::new(vec![n, k], d)?);
                    } else {
                        gemm(k, m, n, a.data(), true, g, false, &mut d);
                        gb = Some(Tensor::new(vec![k, n], d)?);
                    }
                }
                Ok(vec![ga, gb])
            }
            (OpKind::EinsumBig, _) => {
                let (amp, feat) = (inp(0), inp(1));
                let (o, b) = (amp.shape()[0], feat.shape()[0]);
                let j = amp.numel() / o;
                let mut ga = None;
                let mut gf = None;
                if want(0) {
                    let mut d = vec![0.0; o * j];
                    gemm(o, b, j, g, true, feat.data(), false, &mut d);
                    ga = Some(Tensor::new(amp.shape().to_vec(), d)?);
                }
                if want(1) {
                    let mut d = vec![0.0; b * j];
                    gemm(b, o, j, g, false, amp.data(), false, &mut d);
                    gf = Some(Tensor::new(feat.shape().to_vec(), d)?);
                }
                Ok(vec![ga, gf])
            }
            (OpKind::Sin, _) => elementwise(&|x, _| x.cos()),
            (OpKind::Cos, _) => elementwise(&|x, _| -x.sin()),
            (OpKind::Silu, _) => elementwise(&|x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }),
            (OpKind::Relu, _) => elementwise(&|x, _| if x > 0.0 { 1.0 } else { 0.0 }),
            (OpKind::Tanh, _) => elementwise(&|_, y| 1.0 - y * y),
            (OpKind::Exp, _) => elementwise(&|_, y| y),
            (OpKind::Scale, Saved::Scale(c)) => Ok(vec![Some(gy.map(|v| v * c))]),
            (OpKind::Reshape, _) => Ok(vec![Some(gy.reshape(inp(0).shape())?)]),
            (OpKind::AddBroadcast, _) => {
                let out = y.shape();
                let mut res = Vec::with_capacity(2);
                for i in 0..2 {
                    res.push(if want(i) {
                        let s = inp(i).shape();
                        Some(Tensor::new(s.to_vec(), reduce_to(g, out, s))?)
                    } else {
                        None
                    });
                }
                Ok(res)
            }
            (OpKind::MulBroadcast, _) => {
                let out = y.shape().to_vec();
                let own = strides(&out);
                let mut res = Vec::with_capacity(2);
                for i in 0..2 {
                    if !want(i) {
                        res.push(None);
                        continue;
                    }
                    let other = inp(1 - i);
                    let so = broadcast_strides(other.shape(), &out);
                    let od = other.data();
                    let mut prod = vec![0.0; g.len()];
                    walk2(&out, &own, &so, |l, _, j| prod[l] = g[l] * od[j]);
                    let s = inp(i).shape();
                    res.push(Some(Tensor::new(s.to_vec(), reduce_to(&prod, &out, s))?));
                }
                Ok(res)
            }
            (OpKind::SumAxes, Saved::SumAxes { axes }) => {
                let xs = inp(0).shape();
                let keep: Vec<usize> = xs
                    .iter()
                    .enumerate()
                    .map(|(d, &n)| if axes.contains(&d) { 1 } else { n })
                    .collect();
                let sg = broadcast_strides(&keep, xs);
                let own = strides(xs);
                let mut d = vec![0.0; inp(0).numel()];
                walk2(xs, &own, &sg, |l, _, j| d[l] = g[j]);
                Ok(vec![Some(Tensor::new(xs.to_vec(), d)?)])
            }
            (
                OpKind::BsplineBasis,
                Saved::Basis {
                    knots,
                    order,
                    lower,
                    inside,
                },
            ) => {
                let x = inp(0);
                let n = y.shape()[2];
                let mut deriv = vec![0.0; n];
                let mut d = vec![0.0; x.numel()];
                for (r, dr) in d.iter_mut().enumerate() {
                    if !inside[r] {
                        continue;
                    }
                    spline::basis_derivative(knots, *order, &lower[r * (n + 1)..(r + 1) * (n + 1)], &mut deriv);
                    *dr = deriv.iter().zip(&g[r * n..(r + 1) * n]).map(|(a, b)| a * b).sum();
                }
                Ok(vec![Some(Tensor::new(x.shape().to_vec(), d)?)])
            }
            (OpKind::SoftmaxCrossEntropy, Saved::Xent { probs, labels }) => {
                let s = inp(0).shape();
                let (b, c) = (s[0], s[1]);
                let scale = g[0] / b as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, &l) in labels.iter().enumerate() {
                    d[r * c + l] -= scale;
                }
                Ok(vec![Some(Tensor::new(s.to_vec(), d)?)])
            }
            (kind, _) => Err(KanError::invalid(format!("no backward rule for {kind}"))),
        }
    }
}
