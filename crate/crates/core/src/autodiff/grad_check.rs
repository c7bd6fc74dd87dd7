use super::{Graph, Var};
use crate::error::{KanError, Result};
use crate::tensor::Tensor;

/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences over every coordinate of `params`, returning the
/// largest [`relative_error`].
///
/// `f` receives a fresh graph and one leaf per entry of `params`, and must
/// return a scalar loss built from them.
pub fn grad_check<F>(params: &[Tensor], eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(KanError::invalid(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone(), true)).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.leaf(p.clone(), false)).collect();
        let l = f(&mut g, &vars)?;
        let v = g.value(l).item()?;
        if !v.is_finite() {
            return Err(KanError::NonFinite {
                op: "grad_check probe",
                node: l.index(),
            });
        }
        Ok(v)
    };

    let mut probe: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for i in 0..params[pi].numel() {
            let orig = params[pi].data()[i];
            probe[pi].data_mut()[i] = orig + eps;
            let up = eval(&probe)?;
            probe[pi].data_mut()[i] = orig - eps;
            let down = eval(&probe)?;
            probe[pi].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(grad.data()[i], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let err = grad_check(&[Tensor::scalar(3.0)], 1e-5, |g, v| g.mul(v[0], v[0])).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn eps_out_of_range() {
        assert!(grad_check(&[Tensor::scalar(3.0)], 1e-2, |g, v| g.mul(v[0], v[0])).is_err());
    }

    #[test]
    fn detects_wrong_gradient() {
        // relu at exactly 0 has a kink: the one-sided analytic value (0)
        // differs from the central difference (0.5).
        let err = grad_check(&[Tensor::scalar(0.0)], 1e-5, |g, v| g.relu(v[0])).unwrap();
        assert!((err - 0.5).abs() < 1e-9);
    }
}
