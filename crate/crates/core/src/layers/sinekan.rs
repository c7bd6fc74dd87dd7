use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::autodiff::{Graph, Parameter, Var};
use crate::error::Result;
use crate::phase::{build_grid_phases, build_input_phases, ScaleConstants};
use crate::tensor::Tensor;

use super::check_input;

/// Standard deviation of first-layer amplitudes.
pub const FIRST_LAYER_STD: f64 = 0.4;

/// `y[b,i] = Σ_{j,k} A[i,j,k]·sin(ω[k]·x[b,j] + φ[j,k]) + bias[i]`, with
/// learnable amplitudes and frequencies over a fixed phase grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SineKanLayer {
    d_in: usize,
    d_out: usize,
    grid: usize,
    is_first: bool,
    /// `[d_out, d_in, grid]`
    pub amplitudes: Parameter,
    /// `[grid]`
    pub frequencies: Parameter,
    /// `[d_out]`
    pub bias: Parameter,
    /// `[d_in, grid]`, never trained
    phases: Tensor,
}

/// `φ[j,k] = input_phase[j] + grid_phase[k]`.
pub fn phase_table(d_in: usize, grid: usize) -> Result<Tensor> {
    let gp = build_grid_phases(grid, &ScaleConstants::default())?;
    let ip = build_input_phases(d_in)?;
    Ok(Tensor::from_fn(&[d_in, grid], |n| ip[n / grid] + gp[n % grid]))
}

impl SineKanLayer {
    pub fn new<R: Rng>(d_in: usize, d_out: usize, grid: usize, is_first: bool, rng: &mut R) -> Result<Self> {
        let shape = [d_out, d_in, grid];
        let amplitudes = if is_first {
            let n = Normal::new(0.0, FIRST_LAYER_STD).expect("valid std");
            Tensor::from_fn(&shape, |_| n.sample(rng))
        } else {
            let u = Uniform::new(-1.0, 1.0).expect("valid range");
            Tensor::from_fn(&shape, |_| u.sample(rng))
        };
        Self::from_parts(
            is_first,
            amplitudes,
            Tensor::from_fn(&[grid], |k| (k + 1) as f64),
            Tensor::zeros(&[d_out]),
        )
    }

    /// Assembles a layer from explicit parameter values; dimensions are
    /// taken from `amplitudes`.
    pub fn from_parts(is_first: bool, amplitudes: Tensor, frequencies: Tensor, bias: Tensor) -> Result<Self> {
        let s = amplitudes.shape();
        if s.len() != 3 || frequencies.shape() != [s[2]] || bias.shape() != [s[0]] {
            return Err(crate::KanError::shape(
                "sinekan",
                format!("A {s:?}, ω {:?}, b {:?}", frequencies.shape(), bias.shape()),
            ));
        }
        let (d_out, d_in, grid) = (s[0], s[1], s[2]);
        Ok(SineKanLayer {
            d_in,
            d_out,
            grid,
            is_first,
            phases: phase_table(d_in, grid)?,
            amplitudes: Parameter::new(amplitudes),
            frequencies: Parameter::new(frequencies),
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

    pub fn is_first(&self) -> bool {
        self.is_first
    }

    pub fn phases(&self) -> &Tensor {
        &self.phases
    }

    pub fn parameters(&self) -> [&Parameter; 3] {
        [&self.amplitudes, &self.frequencies, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter; 3] {
        [&mut self.amplitudes, &mut self.frequencies, &mut self.bias]
    }

    /// `params` are graph leaves for `[amplitudes, frequencies, bias]`.
    pub fn forward(&self, g: &mut Graph, x: Var, params: &[Var]) -> Result<Var> {
        let b = check_input("sinekan", g, x, self.d_in)?;
        let xr = g.reshape(x, &[b, self.d_in, 1])?;
        let w = g.reshape(params[1], &[1, 1, self.grid])?;
        let arg = g.mul(xr, w)?;
        let ph = g.constant(self.phases.reshape(&[1, self.d_in, self.grid])?);
        let arg = g.add(arg, ph)?;
        let s = g.sin(arg)?;
        let y = g.einsum_big(params[0], s)?;
        let bias = g.reshape(params[2], &[1, self.d_out])?;
        g.add(y, bias)
    }
}
