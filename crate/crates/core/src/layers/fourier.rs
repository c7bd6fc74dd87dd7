use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Parameter, Var};
use crate::error::{KanError, Result};
use crate::tensor::Tensor;

use super::check_input;

/// Truncated Fourier series on every edge:
/// `y[b,i] = Σ_{j,k} A[i,j,k]·sin(k·x[b,j]) + B[i,j,k]·cos(k·x[b,j]) + bias[i]`
/// with fixed integer harmonics `k = 1..grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierKanLayer {
    d_in: usize,
    d_out: usize,
    grid: usize,
    pub sin_coeffs: Parameter,
    pub cos_coeffs: Parameter,
    pub bias: Parameter,
}

impl FourierKanLayer {
    pub fn new<R: Rng>(d_in: usize, d_out: usize, grid: usize, rng: &mut R) -> Result<Self> {
        let std = 1.0 / ((d_in * grid) as f64).sqrt();
        let n = Normal::new(0.0, std).expect("valid std");
        let shape = [d_out, d_in, grid];
        let a = Tensor::from_fn(&shape, |_| n.sample(rng));
        let b = Tensor::from_fn(&shape, |_| n.sample(rng));
        Self::from_parts(a, b, Tensor::zeros(&[d_out]))
    }

    pub fn from_parts(sin_coeffs: Tensor, cos_coeffs: Tensor, bias: Tensor) -> Result<Self> {
        let s = sin_coeffs.shape().to_vec();
        if s.len() != 3 || cos_coeffs.shape() != s.as_slice() || bias.shape() != [s[0]] {
            return Err(KanError::shape(
                "fourierkan",
                format!("A {s:?}, B {:?}, b {:?}", cos_coeffs.shape(), bias.shape()),
            ));
        }
        Ok(FourierKanLayer {
            d_in: s[1],
            d_out: s[0],
            grid: s[2],
            sin_coeffs: Parameter::new(sin_coeffs),
            cos_coeffs: Parameter::new(cos_coeffs),
            bias: Parameter::new(bias),
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn parameters(&self) -> [&Parameter; 3] {
        [&self.sin_coeffs, &self.cos_coeffs, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter; 3] {
        [&mut self.sin_coeffs, &mut self.cos_coeffs, &mut self.bias]
    }

    pub fn forward(&self, g: &mut Graph, x: Var, params: &[Var]) -> Result<Var> {
        let b = check_input("fourierkan", g, x, self.d_in)?;
        let xr = g.reshape(x, &[b, self.d_in, 1])?;
        let k = g.constant(Tensor::from_fn(&[1, 1, self.grid], |k| (k + 1) as f64));
        let arg = g.mul(xr, k)?;
        let s = g.sin(arg)?;
        let c = g.cos(arg)?;
        let ys = g.einsum_big(params[0], s)?;
        let yc = g.einsum_big(params[1], c)?;
        let y = g.add(ys, yc)?;
        let bias = g.reshape(params[2], &[1, self.d_out])?;
        g.add(y, bias)
    }
}
