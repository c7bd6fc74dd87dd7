use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::autodiff::{Graph, Parameter, Var};
use crate::error::{KanError, Result};
use crate::spline;
use crate::tensor::Tensor;

use super::check_input;

pub const DEFAULT_GRID: usize = 8;
pub const DEFAULT_ORDER: usize = 3;
pub const GRID_RANGE: (f64, f64) = (-1.0, 1.0);

/// Efficient-KAN style layer:
/// `y = W_base·silu(x) + W_spline·flatten(B(x)) + bias`, where `B(x)` are
/// order-`s` B-spline bases over a uniform grid on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BSplineKanLayer {
    d_in: usize,
    d_out: usize,
    grid: usize,
    order: usize,
    knots: Vec<f64>,
    /// `[d_out, d_in]`
    pub base_weight: Parameter,
    /// `[d_out, d_in * (grid + order)]`
    pub spline_weight: Parameter,
    pub bias: Parameter,
}

impl BSplineKanLayer {
    pub fn new<R: Rng>(d_in: usize, d_out: usize, grid: usize, order: usize, rng: &mut R) -> Result<Self> {
        if order < 1 {
            return Err(KanError::invalid("spline order must be >= 1"));
        }
        let bound = 1.0 / (d_in as f64).sqrt();
        let u = Uniform::new_inclusive(-bound, bound).expect("valid bound");
        let base = Tensor::from_fn(&[d_out, d_in], |_| u.sample(rng));
        let n = Normal::new(0.0, 0.1 * bound).expect("valid std");
        let spl = Tensor::from_fn(&[d_out, d_in * (grid + order)], |_| n.sample(rng));
        Self::from_parts(grid, order, base, spl, Tensor::zeros(&[d_out]))
    }

    pub fn from_parts(grid: usize, order: usize, base_weight: Tensor, spline_weight: Tensor, bias: Tensor) -> Result<Self> {
        if order < 1 || grid < 1 {
            return Err(KanError::invalid("grid and spline order must be >= 1"));
        }
        let s = base_weight.shape().to_vec();
        if s.len() != 2 || spline_weight.shape() != [s[0], s[1] * (grid + order)] || bias.shape() != [s[0]] {
            return Err(KanError::shape(
                "bsplinekan",
                format!(
                    "W_base {s:?}, W_spline {:?}, b {:?} for grid {grid}, order {order}",
                    spline_weight.shape(),
                    bias.shape()
                ),
            ));
        }
        Ok(BSplineKanLayer {
            d_in: s[1],
            d_out: s[0],
            grid,
            order,
            knots: spline::uniform_knots(grid, order, GRID_RANGE.0, GRID_RANGE.1),
            base_weight: Parameter::new(base_weight),
            spline_weight: Parameter::new(spline_weight),
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

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn parameters(&self) -> [&Parameter; 3] {
        [&self.base_weight, &self.spline_weight, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter; 3] {
        [&mut self.base_weight, &mut self.spline_weight, &mut self.bias]
    }

    pub fn forward(&self, g: &mut Graph, x: Var, params: &[Var]) -> Result<Var> {
        let b = check_input("bsplinekan", g, x, self.d_in)?;
        let act = g.silu(x)?;
        let base = g.matmul_nt(act, params[0])?;
        let basis = g.bspline_basis(x, &self.knots, self.order)?;
        let flat = g.reshape(basis, &[b, self.d_in * (self.grid + self.order)])?;
        let spl = g.matmul_nt(flat, params[1])?;
        let y = g.add(base, spl)?;
        let bias = g.reshape(params[2], &[1, self.d_out])?;
        g.add(y, bias)
    }
}
