//! Scalar reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use kanlab::layers::{Activation, BSplineKanLayer, DenseLayer, FourierKanLayer, SineKanLayer};
use kanlab::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let u = Uniform::new(lo, hi).unwrap();
    Tensor::from_fn(shape, |_| u.sample(rng))
}

/// MNIST directory from `KANLAB_MNIST_DIR`, else `<workspace>/data/mnist`.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("KANLAB_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist")))
}

pub fn sinekan_oracle(l: &SineKanLayer, x: &Tensor) -> Vec<f64> {
    let (b, di, dout, g) = (x.shape()[0], l.d_in(), l.d_out(), l.grid());
    let a = l.amplitudes.value.data();
    let w = l.frequencies.value.data();
    let ph = l.phases().data();
    let mut y = vec![0.0; b * dout];
    for r in 0..b {
        for i in 0..dout {
            let mut acc = l.bias.value.data()[i];
            for j in 0..di {
                for k in 0..g {
                    acc += a[(i * di + j) * g + k] * (w[k] * x.data()[r * di + j] + ph[j * g + k]).sin();
                }
            }
            y[r * dout + i] = acc;
        }
    }
    y
}

pub fn fourierkan_oracle(l: &FourierKanLayer, x: &Tensor) -> Vec<f64> {
    let (b, di, dout, g) = (x.shape()[0], l.d_in(), l.d_out(), l.grid());
    let sa = l.sin_coeffs.value.data();
    let ca = l.cos_coeffs.value.data();
    let mut y = vec![0.0; b * dout];
    for r in 0..b {
        for i in 0..dout {
            let mut acc = l.bias.value.data()[i];
            for j in 0..di {
                let xv = x.data()[r * di + j];
                for k in 0..g {
                    let f = (k + 1) as f64 * xv;
                    let n = (i * di + j) * g + k;
                    acc += sa[n] * f.sin() + ca[n] * f.cos();
                }
            }
            y[r * dout + i] = acc;
        }
    }
    y
}

/// Textbook recursive Cox–de Boor definition.
pub fn cox_de_boor(t: &[f64], i: usize, k: usize, x: f64) -> f64 {
    if k == 0 {
        return if t[i] <= x && x < t[i + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let dl = t[i + k] - t[i];
    if dl != 0.0 {
        v += (x - t[i]) / dl * cox_de_boor(t, i, k - 1, x);
    }
    let dr = t[i + k + 1] - t[i + 1];
    if dr != 0.0 {
        v += (t[i + k + 1] - x) / dr * cox_de_boor(t, i + 1, k - 1, x);
    }
    v
}

pub fn bsplinekan_oracle(l: &BSplineKanLayer, x: &Tensor) -> Vec<f64> {
    let (b, di, dout) = (x.shape()[0], l.d_in(), l.d_out());
    let (s, t) = (l.order(), l.knots());
    let nb = l.grid() + s;
    let wb = l.base_weight.value.data();
    let ws = l.spline_weight.value.data();
    let mut y = vec![0.0; b * dout];
    for r in 0..b {
        for i in 0..dout {
            let mut acc = l.bias.value.data()[i];
            for j in 0..di {
                let xv = x.data()[r * di + j];
                acc += wb[i * di + j] * xv / (1.0 + (-xv).exp());
                let xc = xv.clamp(t[s], t[t.len() - 1 - s]);
                for m in 0..nb {
                    acc += ws[i * di * nb + j * nb + m] * cox_de_boor(t, m, s, xc);
                }
            }
            y[r * dout + i] = acc;
        }
    }
    y
}

pub fn dense_oracle(l: &DenseLayer, x: &Tensor) -> Vec<f64> {
    let (b, di, dout) = (x.shape()[0], l.d_in(), l.d_out());
    let w = l.weight.value.data();
    let mut y = vec![0.0; b * dout];
    for r in 0..b {
        for i in 0..dout {
            let mut acc = l.bias.value.data()[i];
            for j in 0..di {
                acc += w[i * di + j] * x.data()[r * di + j];
            }
            y[r * dout + i] = match l.activation() {
                Activation::None => acc,
                Activation::Relu => acc.max(0.0),
            };
        }
    }
    y
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
