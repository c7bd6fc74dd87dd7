use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::{Graph, Parameter, Var};
use crate::error::{KanError, Result};
use crate::tensor::Tensor;

use super::check_input;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

/// `y = act(x·Wᵀ + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    d_in: usize,
    d_out: usize,
    activation: Activation,
    /// `[d_out, d_in]`
    pub weight: Parameter,
    pub bias: Parameter,
}

impl DenseLayer {
    pub fn new<R: Rng>(d_in: usize, d_out: usize, activation: Activation, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (d_in as f64).sqrt();
        let u = Uniform::new_inclusive(-bound, bound).expect("valid bound");
        let w = Tensor::from_fn(&[d_out, d_in], |_| u.sample(rng));
        Self::from_parts(activation, w, Tensor::zeros(&[d_out]))
    }

    pub fn from_parts(activation: Activation, weight: Tensor, bias: Tensor) -> Result<Self> {
        let s = weight.shape().to_vec();
        if s.len() != 2 || bias.shape() != [s[0]] {
            return Err(KanError::shape("dense", format!("W {s:?}, b {:?}", bias.shape())));
        }
        Ok(DenseLayer {
            d_in: s[1],
            d_out: s[0],
            activation,
            weight: Parameter::new(weight),
            bias: Parameter::new(bias),
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn parameters(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn forward(&self, g: &mut Graph, x: Var, params: &[Var]) -> Result<Var> {
        check_input("dense", g, x, self.d_in)?;
        let y = g.matmul_nt(x, params[0])?;
        let bias = g.reshape(params[1], &[1, self.d_out])?;
        let y = g.add(y, bias)?;
        match self.activation {
            Activation::None => Ok(y),
            Activation::Relu => g.relu(y),
        }
    }
}
