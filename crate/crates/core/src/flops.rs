//! Closed-form FLOP cost models, an op-counting reference forward pass that
//! checks them, and a wall-clock forward benchmark.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::Serialize;

use crate::error::{KanError, Result};
use crate::layers::{BSplineKanLayer, FourierKanLayer, Layer, ModelKind, ModelStack, SineKanLayer};
use crate::tensor::Tensor;

/// FLOPs charged per elementary operation. Comparisons and reshapes are
/// free.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    pub add_mul_sub: u64,
    pub div_exp: u64,
    pub trig: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            add_mul_sub: 1,
            div_exp: 5,
            trig: 10,
        }
    }
}

pub fn sinekan_flops(b: u64, d_in: u64, d_out: u64, g: u64) -> u64 {
    b * d_in * g * (2 * d_out + 12) + b * d_out
}

pub fn fourierkan_flops(b: u64, d_in: u64, d_out: u64, g: u64) -> u64 {
    b * d_in * g * (4 * d_out + 21) + b * d_out
}

/// Panics if `s == 0`; use [`layer_flops`] for a checked version.
pub fn bsplinekan_flops(b: u64, d_in: u64, d_out: u64, g: u64, s: u64) -> u64 {
    assert!(s >= 1, "spline order must be >= 1");
    13 * b * d_in + 2 * b * d_out * d_in + 17 * s * b * d_in * (g + 2 * s) + 2 * b * d_out * d_in * (g + s) + b * d_out
}

pub fn mlp_flops(b: u64, d_in: u64, d_out: u64) -> u64 {
    2 * b * d_out * d_in + b * d_out
}

/// Modeled FLOPs of one layer of `kind`.
pub fn layer_flops(kind: ModelKind, b: u64, d_in: u64, d_out: u64, g: u64, s: u64) -> Result<u64> {
    if b == 0 || d_in == 0 || d_out == 0 {
        return Err(KanError::invalid("dimensions must be >= 1"));
    }
    match kind {
        ModelKind::SineKan | ModelKind::FourierKan if g == 0 => Err(KanError::invalid("grid must be >= 1")),
        ModelKind::SineKan => Ok(sinekan_flops(b, d_in, d_out, g)),
        ModelKind::FourierKan => Ok(fourierkan_flops(b, d_in, d_out, g)),
        ModelKind::BSplineKan if g == 0 || s == 0 => Err(KanError::invalid("grid and spline order must be >= 1")),
        ModelKind::BSplineKan => Ok(bsplinekan_flops(b, d_in, d_out, g, s)),
        ModelKind::Mlp => Ok(mlp_flops(b, d_in, d_out)),
    }
}

/// Modeled FLOPs of a whole stack for a batch of `b`.
pub fn model_flops(model: &ModelStack, b: u64) -> Result<u64> {
    let mut total = 0;
    for layer in model.layers() {
        let (d_in, d_out) = (layer.d_in() as u64, layer.d_out() as u64);
        total += match layer {
            Layer::Sine(l) => sinekan_flops(b, d_in, d_out, l.grid() as u64),
            Layer::Fourier(l) => fourierkan_flops(b, d_in, d_out, l.grid() as u64),
            Layer::BSpline(l) => bsplinekan_flops(b, d_in, d_out, l.grid() as u64, l.order() as u64),
            Layer::Dense(_) => mlp_flops(b, d_in, d_out),
        };
    }
    Ok(total)
}

/// Elementary operations performed by a counted forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub add: u64,
    pub sub: u64,
    pub mul: u64,
    pub neg: u64,
    pub div: u64,
    pub exp: u64,
    pub trig: u64,
}

impl OpCounts {
    pub fn flops(&self, c: &CostModel) -> u64 {
        (self.add + self.sub + self.mul + self.neg) * c.add_mul_sub + (self.div + self.exp) * c.div_exp + self.trig * c.trig
    }

    fn add(&mut self, a: f64, b: f64) -> f64 {
        self.add += 1;
        a + b
    }

    fn sub(&mut self, a: f64, b: f64) -> f64 {
        self.sub += 1;
        a - b
    }

    fn mul(&mut self, a: f64, b: f64) -> f64 {
        self.mul += 1;
        a * b
    }

    fn neg(&mut self, a: f64) -> f64 {
        self.neg += 1;
        -a
    }

    fn div(&mut self, a: f64, b: f64) -> f64 {
        self.div += 1;
        a / b
    }

    fn exp(&mut self, a: f64) -> f64 {
        self.exp += 1;
        a.exp()
    }

    fn sin(&mut self, a: f64) -> f64 {
        self.trig += 1;
        a.sin()
    }

    fn cos(&mut self, a: f64) -> f64 {
        self.trig += 1;
        a.cos()
    }
}

/// How the counted B-spline pass sizes each recursion level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKernel {
    /// Every level computes `g + 2s` entries over a zero-padded array, as a
    /// vectorised implementation does.
    FixedWidth,
    /// Level `k` computes only its `g + 2s - k` live entries.
    Shrinking,
}

/// Scalar SineKAN forward with op counting.
pub fn count_sinekan(layer: &SineKanLayer, x: &Tensor) -> Result<(Tensor, OpCounts)> {
    let (b, d_in, d_out, g) = (rows(x, layer.d_in())?, layer.d_in(), layer.d_out(), layer.grid());
    let (a, w, bias, ph) = (
        layer.amplitudes.value.data(),
        layer.frequencies.value.data(),
        layer.bias.value.data(),
        layer.phases().data(),
    );
    let mut c = OpCounts::default();
    let mut out = vec![0.0; b * d_out];
    let mut s = vec![0.0; d_in * g];
    for r in 0..b {
        for j in 0..d_in {
            for k in 0..g {
                let arg = c.mul(w[k], x.data()[r * d_in + j]);
                let arg = c.add(arg, ph[j * g + k]);
                s[j * g + k] = c.sin(arg);
            }
        }
        for i in 0..d_out {
            let mut acc = 0.0;
            for n in 0..d_in * g {
                let p = c.mul(a[i * d_in * g + n], s[n]);
                acc = c.add(acc, p);
            }
            out[r * d_out + i] = c.add(acc, bias[i]);
        }
    }
    Ok((Tensor::new(vec![b, d_out], out)?, c))
}

/// Scalar FourierKAN forward with op counting.
pub fn count_fourierkan(layer: &FourierKanLayer, x: &Tensor) -> Result<(Tensor, OpCounts)> {
    let (b, d_in, d_out, g) = (rows(x, layer.d_in())?, layer.d_in(), layer.d_out(), layer.grid());
    let (sa, ca, bias) = (
        layer.sin_coeffs.value.data(),
        layer.cos_coeffs.value.data(),
        layer.bias.value.data(),
    );
    let mut c = OpCounts::default();
    let mut out = vec![0.0; b * d_out];
    let mut sn = vec![0.0; d_in * g];
    let mut cs = vec![0.0; d_in * g];
    for r in 0..b {
        for j in 0..d_in {
            for k in 0..g {
                let arg = c.mul((k + 1) as f64, x.data()[r * d_in + j]);
                sn[j * g + k] = c.sin(arg);
                cs[j * g + k] = c.cos(arg);
            }
        }
        for i in 0..d_out {
            let mut acc = 0.0;
            for n in 0..d_in * g {
                let p = c.mul(sa[i * d_in * g + n], sn[n]);
                acc = c.add(acc, p);
                let q = c.mul(ca[i * d_in * g + n], cs[n]);
                acc = c.add(acc, q);
            }
            out[r * d_out + i] = c.add(acc, bias[i]);
        }
    }
    Ok((Tensor::new(vec![b, d_out], out)?, c))
}

/// Scalar B-SplineKAN forward with op counting.
pub fn count_bsplinekan(layer: &BSplineKanLayer, x: &Tensor, kernel: BasisKernel) -> Result<(Tensor, OpCounts)> {
    let (b, d_in, d_out) = (rows(x, layer.d_in())?, layer.d_in(), layer.d_out());
    let (g, s) = (layer.grid(), layer.order());
    let nb = g + s;
    let width = g + 2 * s;
    let t = layer.knots();
    let h = t[1] - t[0];
    // virtual knots past the end keep the padded entries well defined
    let knot = |i: usize| if i < t.len() { t[i] } else { t[t.len() - 1] + (i + 1 - t.len()) as f64 * h };
    let (lo, hi) = (t[s], t[t.len() - 1 - s]);
    let (wb, ws, bias) = (
        layer.base_weight.value.data(),
        layer.spline_weight.value.data(),
        layer.bias.value.data(),
    );
    let mut c = OpCounts::default();
    let mut out = vec![0.0; b * d_out];
    let mut act = vec![0.0; d_in];
    let mut basis = vec![0.0; d_in * nb];
    for r in 0..b {
        for j in 0..d_in {
            let v = x.data()[r * d_in + j];
            // silu(v) = v / (1 + e^(-v))
            let e = c.neg(v);
            let e = c.exp(e);
            let den = c.add(1.0, e);
            let sig = c.div(1.0, den);
            act[j] = c.mul(v, sig);

            let v = v.clamp(lo, hi);
            let mut cur: Vec<f64> = (0..width)
                .map(|i| if v >= t[i] && v < t[i + 1] { 1.0 } else { 0.0 })
                .collect();
            for k in 1..=s {
                let live = width - k;
                let n = match kernel {
                    BasisKernel::FixedWidth => width,
                    BasisKernel::Shrinking => live,
                };
                let mut next = vec![0.0; n];
                for (i, slot) in next.iter_mut().enumerate() {
                    let left = cur.get(i).copied().unwrap_or(0.0);
                    let right = cur.get(i + 1).copied().unwrap_or(0.0);
                    let num1 = c.sub(v, knot(i));
                    let den1 = c.sub(knot(i + k), knot(i));
                    let w1 = c.div(num1, den1);
                    let num2 = c.sub(knot(i + k + 1), v);
                    let den2 = c.sub(knot(i + k + 1), knot(i + 1));
                    let w2 = c.div(num2, den2);
                    let p1 = c.mul(w1, left);
                    let p2 = c.mul(w2, right);
                    let sum = c.add(p1, p2);
                    *slot = if i < live { sum } else { 0.0 };
                }
                cur = next;
            }
            basis[j * nb..(j + 1) * nb].copy_from_slice(&cur[..nb]);
        }
        for i in 0..d_out {
            let mut acc = 0.0;
            for j in 0..d_in {
                let p = c.mul(wb[i * d_in + j], act[j]);
                acc = c.add(acc, p);
            }
            for n in 0..d_in * nb {
                let p = c.mul(ws[i * d_in * nb + n], basis[n]);
                acc = c.add(acc, p);
            }
            out[r * d_out + i] = c.add(acc, bias[i]);
        }
    }
    Ok((Tensor::new(vec![b, d_out], out)?, c))
}

fn rows(x: &Tensor, d_in: usize) -> Result<usize> {
    if x.ndim() != 2 || x.shape()[1] != d_in {
        return Err(KanError::shape("count", format!("expected [batch, {d_in}], got {:?}", x.shape())));
    }
    Ok(x.shape()[0])
}

/// Forward-timing sweep around a base point; each axis is varied with the
/// others held at their base values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchConfig {
    pub kinds: Vec<ModelKind>,
    pub d_in: usize,
    pub d_out: usize,
    pub grid: usize,
    pub order: usize,
    pub base_batch: usize,
    pub base_hidden: usize,
    pub base_depth: usize,
    pub batch_sizes: Vec<usize>,
    pub hidden_dims: Vec<usize>,
    pub depths: Vec<usize>,
    pub warmup: usize,
    pub passes: usize,
    /// Must be 1: timed sections always run on the calling thread.
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            kinds: vec![ModelKind::SineKan, ModelKind::FourierKan, ModelKind::BSplineKan],
            d_in: 784,
            d_out: 10,
            grid: 8,
            order: 3,
            base_batch: 128,
            base_hidden: 128,
            base_depth: 1,
            batch_sizes: vec![16, 32, 64, 128, 256, 512],
            hidden_dims: vec![16, 32, 64, 128, 256, 512],
            depths: vec![1, 2, 3, 4],
            warmup: 10,
            passes: 1000,
            threads: 1,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threads != 1 {
            return Err(KanError::config("threads", "timing runs are single-threaded; threads must be 1"));
        }
        if self.warmup < 10 {
            return Err(KanError::config("warmup", "at least 10 warmup passes are required"));
        }
        if self.passes < 100 {
            return Err(KanError::config("passes", "at least 100 timed passes are required"));
        }
        Ok(())
    }

    /// Distinct `(batch, hidden, depth)` points of the sweep, in order.
    pub fn points(&self) -> Vec<(usize, usize, usize)> {
        let mut pts = Vec::new();
        let mut push = |p| {
            if !pts.contains(&p) {
                pts.push(p);
            }
        };
        push((self.base_batch, self.base_hidden, self.base_depth));
        self.batch_sizes.iter().for_each(|&b| push((b, self.base_hidden, self.base_depth)));
        self.hidden_dims.iter().for_each(|&h| push((self.base_batch, h, self.base_depth)));
        self.depths.iter().for_each(|&d| push((self.base_batch, self.base_hidden, d)));
        pts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub kind: ModelKind,
    pub b: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub g: usize,
    pub s: usize,
    pub depth: usize,
    pub hidden: usize,
    pub mean_s: f64,
    pub min_s: f64,
    pub std_s: f64,
    pub flops: u64,
}

/// Times `passes` forward passes of `model` on a fixed uniform input after
/// `warmup` untimed passes. Returns `(mean, min, std)` in seconds.
pub fn time_forward(model: &ModelStack, b: usize, warmup: usize, passes: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new(0.0, 1.0).expect("valid range");
    let x = Tensor::from_fn(&[b, model.d_in()], |_| u.sample(&mut rng));
    for _ in 0..warmup {
        std::hint::black_box(model.forward(&x)?);
    }
    let mut times = Vec::with_capacity(passes);
    for _ in 0..passes {
        let t0 = Instant::now();
        std::hint::black_box(model.forward(&x)?);
        times.push(t0.elapsed().as_secs_f64());
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let std = (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok((mean, min, std))
}

/// Runs the sweep for every kind in `cfg`, calling `on_result` as each point
/// finishes.
pub fn bench_speed(cfg: &BenchConfig, mut on_result: impl FnMut(&BenchResult)) -> Result<Vec<BenchResult>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &kind in &cfg.kinds {
        for (b, hidden, depth) in cfg.points() {
            let mut widths = vec![cfg.d_in];
            widths.extend(std::iter::repeat_n(hidden, depth));
            widths.push(cfg.d_out);
            let model = ModelStack::build(kind, &widths, cfg.grid, cfg.order, cfg.seed)?;
            let (mean_s, min_s, std_s) = time_forward(&model, b, cfg.warmup, cfg.passes, cfg.seed)?;
            let r = BenchResult {
                kind,
                b,
                d_in: cfg.d_in,
                d_out: cfg.d_out,
                g: cfg.grid,
                s: cfg.order,
                depth,
                hidden,
                mean_s,
                min_s,
                std_s,
                flops: model_flops(&model, b as u64)?,
            };
            on_result(&r);
            out.push(r);
        }
    }
    Ok(out)
}

pub fn write_bench_csv(path: &Path, results: &[BenchResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| KanError::data(path, e.to_string()))?;
    w.write_record(["kind", "b", "d_in", "d_out", "g", "s", "depth", "hidden", "mean_s", "min_s", "std_s", "flops"])
        .map_err(|e| KanError::data(path, e.to_string()))?;
    for r in results {
        w.write_record([
            r.kind.to_string(),
            r.b.to_string(),
            r.d_in.to_string(),
            r.d_out.to_string(),
            r.g.to_string(),
            r.s.to_string(),
            r.depth.to_string(),
            r.hidden.to_string(),
            r.mean_s.to_string(),
            r.min_s.to_string(),
            r.std_s.to_string(),
            r.flops.to_string(),
        ])
        .map_err(|e| KanError::data(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_values() {
        assert_eq!(sinekan_flops(1, 784, 128, 8), 1_681_024);
        assert_eq!(sinekan_flops(1, 1, 1, 1), 15);
        assert_eq!(fourierkan_flops(1, 784, 128, 8), 3_343_104);
        assert_eq!(fourierkan_flops(1, 1, 1, 1), 26);
        assert_eq!(bsplinekan_flops(1, 784, 128, 8, 3), 2_978_544);
        assert_eq!(mlp_flops(1, 784, 128), 200_832);
        assert_eq!(mlp_flops(1, 1, 1), 3);
    }

    #[test]
    fn zero_order_rejected() {
        assert!(layer_flops(ModelKind::BSplineKan, 1, 4, 4, 8, 0).is_err());
    }

    #[test]
    fn sweep_points_are_distinct() {
        let cfg = BenchConfig::default();
        let p = cfg.points();
        assert_eq!(p.len(), 1 + 5 + 5 + 3);
        assert!(BenchConfig { threads: 2, ..cfg }.validate().is_err());
    }
}
