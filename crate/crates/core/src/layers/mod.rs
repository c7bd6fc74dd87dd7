//! SineKAN, FourierKAN, B-SplineKAN and dense layers, and sequential stacks
//! of them.

mod bspline;
pub mod checkpoint;
mod dense;
mod fourier;
mod sinekan;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use bspline::{BSplineKanLayer, DEFAULT_GRID, DEFAULT_ORDER, GRID_RANGE};
pub use dense::{Activation, DenseLayer};
pub use fourier::FourierKanLayer;
pub use sinekan::{phase_table, SineKanLayer, FIRST_LAYER_STD};

use crate::autodiff::{Gradients, Graph, Parameter, Var};
use crate::error::{KanError, Result};
use crate::tensor::Tensor;

pub(crate) fn check_input(op: &'static str, g: &Graph, x: Var, d_in: usize) -> Result<usize> {
    let s = g.shape(x);
    if s.len() != 2 || s[1] != d_in {
        return Err(KanError::shape(op, format!("expected [batch, {d_in}], got {s:?}")));
    }
    Ok(s[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    SineKan,
    FourierKan,
    BSplineKan,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::SineKan, ModelKind::FourierKan, ModelKind::BSplineKan, ModelKind::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SineKan => "sinekan",
            ModelKind::FourierKan => "fourierkan",
            ModelKind::BSplineKan => "bsplinekan",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = KanError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| KanError::config("model", format!("unknown model kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Sine(SineKanLayer),
    Fourier(FourierKanLayer),
    BSpline(BSplineKanLayer),
    Dense(DenseLayer),
}

impl Layer {
    pub fn d_in(&self) -> usize {
        match self {
            Layer::Sine(l) => l.d_in(),
            Layer::Fourier(l) => l.d_in(),
            Layer::BSpline(l) => l.d_in(),
            Layer::Dense(l) => l.d_in(),
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            Layer::Sine(l) => l.d_out(),
            Layer::Fourier(l) => l.d_out(),
            Layer::BSpline(l) => l.d_out(),
            Layer::Dense(l) => l.d_out(),
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        match self {
            Layer::Sine(l) => l.parameters().to_vec(),
            Layer::Fourier(l) => l.parameters().to_vec(),
            Layer::BSpline(l) => l.parameters().to_vec(),
            Layer::Dense(l) => l.parameters().to_vec(),
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Layer::Sine(l) => l.parameters_mut().into_iter().collect(),
            Layer::Fourier(l) => l.parameters_mut().into_iter().collect(),
            Layer::BSpline(l) => l.parameters_mut().into_iter().collect(),
            Layer::Dense(l) => l.parameters_mut().into_iter().collect(),
        }
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.parameters().iter().filter(|p| p.trainable).map(|p| p.numel()).sum()
    }

    pub fn forward(&self, g: &mut Graph, x: Var, params: &[Var]) -> Result<Var> {
        match self {
            Layer::Sine(l) => l.forward(g, x, params),
            Layer::Fourier(l) => l.forward(g, x, params),
            Layer::BSpline(l) => l.forward(g, x, params),
            Layer::Dense(l) => l.forward(g, x, params),
        }
    }

    /// Inference on a plain tensor; records nothing.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let ps: Vec<Var> = self.parameters().iter().map(|p| g.constant(p.value.clone())).collect();
        let y = self.forward(&mut g, xv, &ps)?;
        Ok(g.value(y).clone())
    }
}

/// Derives the RNG seed of layer `index` from a model seed.
fn layer_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelStack {
    kind: ModelKind,
    layers: Vec<Layer>,
}

impl ModelStack {
    /// Builds a stack from `widths = [d_in, hidden.., d_out]`. MLP hidden
    /// layers use ReLU; the last dense layer is linear.
    pub fn build(kind: ModelKind, widths: &[usize], grid: usize, order: usize, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(KanError::config("widths", "need at least input and output width"));
        }
        if widths.contains(&0) {
            return Err(KanError::config("widths", "widths must be >= 1"));
        }
        if kind != ModelKind::Mlp && grid == 0 {
            return Err(KanError::config("grid", "grid size must be >= 1"));
        }
        if kind == ModelKind::BSplineKan && order == 0 {
            return Err(KanError::config("order", "spline order must be >= 1"));
        }
        let n = widths.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for (i, w) in widths.windows(2).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(layer_seed(seed, i));
            let (d_in, d_out) = (w[0], w[1]);
            layers.push(match kind {
                ModelKind::SineKan => Layer::Sine(SineKanLayer::new(d_in, d_out, grid, i == 0, &mut rng)?),
                ModelKind::FourierKan => Layer::Fourier(FourierKanLayer::new(d_in, d_out, grid, &mut rng)?),
                ModelKind::BSplineKan => Layer::BSpline(BSplineKanLayer::new(d_in, d_out, grid, order, &mut rng)?),
                ModelKind::Mlp => {
                    let act = if i + 1 < n { Activation::Relu } else { Activation::None };
                    Layer::Dense(DenseLayer::new(d_in, d_out, act, &mut rng)?)
                }
            });
        }
        Ok(ModelStack { kind, layers })
    }

    /// Wraps explicit layers, checking that adjacent widths chain.
    pub fn from_layers(kind: ModelKind, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(KanError::invalid("model needs at least one layer"));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].d_out() != w[1].d_in() {
                return Err(KanError::shape(
                    "model",
                    format!("layer {i} outputs {} but layer {} expects {}", w[0].d_out(), i + 1, w[1].d_in()),
                ));
            }
        }
        Ok(ModelStack { kind, layers })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn d_out(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.d_in()).chain(self.layers.iter().map(Layer::d_out)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(Layer::parameters).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(Layer::parameters_mut).collect()
    }

    pub fn zero_grads(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// Records the forward pass on `g`. Parameters enter as leaves that
    /// require grad when `train` is set and they are trainable; the leaves
    /// are returned in [`parameters`](Self::parameters) order.
    pub fn forward_graph(&self, g: &mut Graph, x: Var, train: bool) -> Result<(Var, Vec<Var>)> {
        let mut vars = Vec::new();
        let mut h = x;
        for layer in &self.layers {
            let ps: Vec<Var> = layer
                .parameters()
                .iter()
                .map(|p| g.leaf(p.value.clone(), train && p.trainable))
                .collect();
            h = layer.forward(g, h, &ps)?;
            vars.extend(ps);
        }
        Ok((h, vars))
    }

    /// Adds the gradients of `vars` (from [`forward_graph`](Self::forward_graph))
    /// into each parameter.
    pub fn accumulate_grads(&mut self, grads: &Gradients, vars: &[Var]) -> Result<()> {
        for (p, v) in self.parameters_mut().into_iter().zip(vars) {
            if let Some(gr) = grads.get(*v) {
                p.accumulate(gr)?;
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.apply(&h)?;
        }
        Ok(h)
    }

    /// Output of every layer in order.
    pub fn layer_outputs(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.apply(&h)?;
            outs.push(h.clone());
        }
        Ok(outs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LayerStats {
    pub layer: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Feeds `n_samples` standard-normal inputs through `model` and summarises
/// each layer's outputs.
pub fn layer_output_statistics(model: &ModelStack, n_samples: usize, seed: u64) -> Result<Vec<LayerStats>> {
    if n_samples == 0 {
        return Err(KanError::invalid("n_samples must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_fn(&[n_samples, model.d_in()], |_| StandardNormal.sample(&mut rng));
    Ok(model
        .layer_outputs(&x)?
        .iter()
        .enumerate()
        .map(|(i, t)| LayerStats {
            layer: i + 1,
            mean: t.mean(),
            std: t.std(),
            min: t.data().iter().cloned().fold(f64::INFINITY, f64::min),
            max: t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect())
}
