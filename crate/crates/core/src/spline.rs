//! Uniform-knot B-spline bases evaluated with the iterative Cox–de Boor
//! recursion.

use crate::error::{KanError, Result};

/// Knot vector of `grid + 2*order + 1` uniformly spaced points. The inner
/// `grid + 1` knots span `[lo, hi]`; `order` extra knots extend each side.
pub fn uniform_knots(grid: usize, order: usize, lo: f64, hi: f64) -> Vec<f64> {
    let h = (hi - lo) / grid as f64;
    (0..grid + 2 * order + 1)
        .map(|i| lo + (i as f64 - order as f64) * h)
        .collect()
}

/// Number of basis functions of the given order over `knots`.
pub fn basis_count(knots: &[f64], order: usize) -> Result<usize> {
    if order == 0 {
        return Err(KanError::invalid("spline order must be >= 1"));
    }
    if knots.len() < 2 * order + 2 {
        return Err(KanError::invalid(format!(
            "knot vector of length {} is too short for order {order}",
            knots.len()
        )));
    }
    Ok(knots.len() - order - 1)
}

/// Interval on which the bases form a partition of unity.
pub fn valid_range(knots: &[f64], order: usize) -> (f64, f64) {
    (knots[order], knots[knots.len() - 1 - order])
}

/// Evaluates all order-`order` bases at `x` into `out` (length
/// `knots.len() - order - 1`). When `lower` is given it receives the
/// order-`order - 1` bases (one more entry), which the derivative needs.
///
/// `scratch` must hold at least `knots.len() - 1` values.
pub fn eval_basis(
    x: f64,
    knots: &[f64],
    order: usize,
    scratch: &mut [f64],
    out: &mut [f64],
    lower: Option<&mut [f64]>,
) {
    let n0 = knots.len() - 1;
    let level = &mut scratch[..n0];
    for i in 0..n0 {
        level[i] = if x >= knots[i] && x < knots[i + 1] { 1.0 } else { 0.0 };
    }
    let mut lower = lower;
    for k in 1..=order {
        if k == order {
            if let Some(l) = lower.as_deref_mut() {
                l.copy_from_slice(&level[..n0 - k + 1]);
            }
        }
        for i in 0..n0 - k {
            let left = (x - knots[i]) / (knots[i + k] - knots[i]) * level[i];
            let right = (knots[i + k + 1] - x) / (knots[i + k + 1] - knots[i + 1]) * level[i + 1];
            level[i] = left + right;
        }
    }
    out.copy_from_slice(&level[..n0 - order]);
}

/// Derivative of every order-`order` basis at a point, from the
/// order-`order - 1` values saved by [`eval_basis`].
pub fn basis_derivative(knots: &[f64], order: usize, lower: &[f64], out: &mut [f64]) {
    let s = order as f64;
    for (i, d) in out.iter_mut().enumerate() {
        let a = s / (knots[i + order] - knots[i]) * lower[i];
        let b = s / (knots[i + order + 1] - knots[i + 1]) * lower[i + 1];
        *d = a - b;
    }
}
