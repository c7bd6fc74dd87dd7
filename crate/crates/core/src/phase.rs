//! Fixed phase grids for SineKAN layers.
//!
//! Grid phases start from the symmetric spread `k·π/(g+1)`, `k = 1..g`, and
//! are multiplied by the cumulative scale factor
//! `S(g) = R(1)·R(2)·…·R(g-1)` with `R(m) = A·m^(-K) + C`. The fitter
//! recovers `(A, K, C)` by minimising the spread of the sum-of-sines ratio
//! `f(g+1, x) / f(g, x)` across grid sizes.

use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};

/// Largest grid size accepted by the phase builders.
pub const MAX_GRID: usize = 1_000_000;

/// Ratios whose denominator magnitude falls below this are excluded.
pub const RATIO_MASK: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleConstants {
    #[serde(rename = "A")]
    pub amplitude: f64,
    #[serde(rename = "K")]
    pub exponent: f64,
    #[serde(rename = "C")]
    pub asymptote: f64,
}

impl Default for ScaleConstants {
    fn default() -> Self {
        ScaleConstants {
            amplitude: 0.97241,
            exponent: 0.988440,
            asymptote: 0.999450,
        }
    }
}

impl ScaleConstants {
    pub fn new(amplitude: f64, exponent: f64, asymptote: f64) -> Self {
        ScaleConstants {
            amplitude,
            exponent,
            asymptote,
        }
    }
}

fn check_grid(g: usize) -> Result<()> {
    if g < 1 {
        return Err(KanError::invalid("grid size must be >= 1"));
    }
    if g > MAX_GRID {
        return Err(KanError::invalid(format!("grid size {g} exceeds {MAX_GRID}")));
    }
    Ok(())
}

/// `R(g) = A·g^(-K) + C`.
pub fn scale_ratio(g: usize, c: &ScaleConstants) -> Result<f64> {
    check_grid(g)?;
    Ok(c.amplitude * (g as f64).powf(-c.exponent) + c.asymptote)
}

/// Cumulative factor `S(g)`, with `S(1) = 1`.
pub fn cumulative_scale(g: usize, c: &ScaleConstants) -> Result<f64> {
    check_grid(g)?;
    let mut s = 1.0;
    for m in 1..g {
        s *= c.amplitude * (m as f64).powf(-c.exponent) + c.asymptote;
    }
    Ok(s)
}

/// Unscaled phases `k·π/(g+1)` for `k = 1..g`.
pub fn base_phases(g: usize) -> Result<Vec<f64>> {
    check_grid(g)?;
    let step = std::f64::consts::PI / (g + 1) as f64;
    Ok((1..=g).map(|k| k as f64 * step).collect())
}

pub fn build_grid_phases(g: usize, c: &ScaleConstants) -> Result<Vec<f64>> {
    let s = cumulative_scale(g, c)?;
    Ok(base_phases(g)?.into_iter().map(|p| p * s).collect())
}

/// Evenly spaced input-feature phases `j·π/d_in`, `j = 0..d_in`.
pub fn build_input_phases(d_in: usize) -> Result<Vec<f64>> {
    if d_in < 1 {
        return Err(KanError::invalid("input dimension must be >= 1"));
    }
    let step = std::f64::consts::PI / d_in as f64;
    Ok((0..d_in).map(|j| j as f64 * step).collect())
}

pub fn sum_of_sines(g: usize, x: f64, c: &ScaleConstants, apply_scaling: bool) -> Result<f64> {
    let phases = if apply_scaling {
        build_grid_phases(g, c)?
    } else {
        base_phases(g)?
    };
    Ok(phases.iter().map(|p| (x + p).sin()).sum())
}

/// Pooled statistics of the masked ratio `f(g+1, x) / f(g, x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioStats {
    pub mean: f64,
    pub std: f64,
    /// Sum over grid sizes of `var(r_g) + (1 - mean(r_g))²`; infinite when
    /// some grid size has no unmasked sample.
    pub objective: f64,
    pub samples: usize,
    /// Grid sizes where every sample was masked out.
    pub empty_grids: usize,
}

/// Sums of sines for every `x` at grid size `g`.
fn sums(g: usize, xs: &[f64], c: &ScaleConstants, apply_scaling: bool) -> Result<Vec<f64>> {
    let phases = if apply_scaling {
        build_grid_phases(g, c)?
    } else {
        base_phases(g)?
    };
    // sin(x + p) = sin x cos p + cos x sin p
    let (cs, ss) = phases
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.cos(), b + p.sin()));
    Ok(xs.iter().map(|x| x.sin() * cs + x.cos() * ss).collect())
}

pub fn ratio_stats(
    g_lo: usize,
    g_hi: usize,
    xs: &[f64],
    c: &ScaleConstants,
    apply_scaling: bool,
) -> Result<RatioStats> {
    if g_lo < 1 || g_hi < g_lo {
        return Err(KanError::invalid(format!("bad grid range [{g_lo}, {g_hi}]")));
    }
    let mut pooled = Vec::new();
    let mut objective = 0.0;
    let mut empty = 0;
    let mut next = sums(g_lo, xs, c, apply_scaling)?;
    for g in g_lo..=g_hi {
        let cur = next;
        next = sums(g + 1, xs, c, apply_scaling)?;
        let ratios: Vec<f64> = cur
            .iter()
            .zip(&next)
            .filter(|(d, _)| d.abs() >= RATIO_MASK)
            .map(|(d, n)| n / d)
            .collect();
        if ratios.is_empty() {
            empty += 1;
            objective = f64::INFINITY;
            continue;
        }
        let (m, v) = mean_var(&ratios);
        objective += v + (1.0 - m) * (1.0 - m);
        pooled.extend(ratios);
    }
    let (mean, var) = if pooled.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_var(&pooled)
    };
    Ok(RatioStats {
        mean,
        std: var.sqrt(),
        objective,
        samples: pooled.len(),
        empty_grids: empty,
    })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
}

/// `n` evenly spaced points covering `[-π, π]` inclusive.
pub fn symmetric_samples(n: usize) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    (0..n)
        .map(|i| -pi + 2.0 * pi * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FitResult {
    pub constants: ScaleConstants,
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; `constants` are then the best
    /// point seen.
    pub converged: bool,
}

const FIT_LOWER: [f64; 3] = [0.0, 0.0, 0.9];
const FIT_UPPER: [f64; 3] = [2.0, 2.0, 1.1];
const FIT_TOL: f64 = 1e-10;
const FIT_MAX_ITER: usize = 5000;

/// Least-squares fit of the scale constants over `g_lo..=g_hi` with a
/// bounded Nelder–Mead simplex started at `(1, 1, 1)`.
pub fn fit_scale_constants(g_lo: usize, g_hi: usize, xs: &[f64]) -> Result<FitResult> {
    if g_lo < 1 || g_hi < g_lo {
        return Err(KanError::invalid(format!("bad grid range [{g_lo}, {g_hi}]")));
    }
    if xs.is_empty() {
        return Err(KanError::invalid("no x samples"));
    }
    let objective = |p: &[f64; 3]| -> f64 {
        let inside = p
            .iter()
            .zip(FIT_LOWER.iter().zip(FIT_UPPER))
            .all(|(v, (lo, hi))| v > lo && *v < hi);
        if !inside {
            return f64::INFINITY;
        }
        let c = ScaleConstants::new(p[0], p[1], p[2]);
        match ratio_stats(g_lo, g_hi, xs, &c, true) {
            Ok(s) if s.objective.is_finite() => s.objective,
            _ => f64::INFINITY,
        }
    };
    let (best, value, iterations, converged) = nelder_mead(objective, [1.0, 1.0, 1.0], 0.1, FIT_TOL, FIT_MAX_ITER);
    if !converged {
        log::warn!("scale-constant fit stopped after {iterations} iterations without converging");
    }
    Ok(FitResult {
        constants: ScaleConstants::new(best[0], best[1], best[2]),
        objective: value,
        iterations,
        converged,
    })
}

/// Standard Nelder–Mead on three parameters. Stops when the spread of
/// simplex values drops below `tol`.
fn nelder_mead(
    f: impl Fn(&[f64; 3]) -> f64,
    start: [f64; 3],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> ([f64; 3], f64, usize, bool) {
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, f(&start)));
    for d in 0..3 {
        let mut p = start;
        p[d] -= step;
        simplex.push((p, f(&p)));
    }
    let lerp = |a: &[f64; 3], b: &[f64; 3], t: f64| -> [f64; 3] {
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
    };
    for iter in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[3].1);
        if best.is_finite() && (worst - best).abs() < tol {
            return (simplex[0].0, best, iter, true);
        }
        let mut centroid = [0.0; 3];
        for (p, _) in &simplex[..3] {
            for d in 0..3 {
                centroid[d] += p[d] / 3.0;
            }
        }
        let w = simplex[3].0;
        let reflected = lerp(&centroid, &w, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(&centroid, &w, -2.0);
            let fe = f(&expanded);
            simplex[3] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < simplex[3].1 {
                let p = lerp(&centroid, &w, -0.5);
                (p, f(&p))
            } else {
                let p = lerp(&centroid, &w, 0.5);
                (p, f(&p))
            };
            if fc < simplex[3].1.min(fr) {
                simplex[3] = (contracted, fc);
            } else {
                let b = simplex[0].0;
                for item in simplex.iter_mut().skip(1) {
                    let p = lerp(&b, &item.0, 0.5);
                    *item = (p, f(&p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, max_iter, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ratio_at_one() {
        let r = scale_ratio(1, &ScaleConstants::default()).unwrap();
        assert!((r - 1.971860).abs() < 1e-12);
    }

    #[test]
    fn ratio_tends_to_asymptote() {
        let c = ScaleConstants::default();
        let r = scale_ratio(1_000_000, &c).unwrap();
        assert!((r - 0.999451).abs() < 1e-6);
        assert!(r > c.asymptote);
    }

    #[test]
    fn zero_amplitude_is_flat() {
        let c = ScaleConstants::new(0.0, 0.98, 0.9994);
        for g in [1, 2, 10, 1000] {
            assert_eq!(scale_ratio(g, &c).unwrap(), 0.9994);
        }
    }

    #[test]
    fn ratio_decays_monotonically() {
        let c = ScaleConstants::default();
        let mut prev = scale_ratio(1, &c).unwrap();
        for g in 2..2000 {
            let r = scale_ratio(g, &c).unwrap();
            assert!(r < prev, "g={g}");
            prev = r;
        }
    }

    #[test]
    fn grid_bounds_rejected() {
        let c = ScaleConstants::default();
        assert!(scale_ratio(0, &c).is_err());
        assert!(build_grid_phases(MAX_GRID + 1, &c).is_err());
        assert!(build_input_phases(0).is_err());
    }

    #[test]
    fn single_grid_phase_is_half_pi() {
        let p = build_grid_phases(1, &ScaleConstants::default()).unwrap();
        assert_eq!(p, vec![PI / 2.0]);
    }

    #[test]
    fn two_point_grid_scaled_once() {
        let p = build_grid_phases(2, &ScaleConstants::default()).unwrap();
        let r1 = 1.971860;
        assert!((p[0] - PI / 3.0 * r1).abs() < 1e-12);
        assert!((p[1] - 2.0 * PI / 3.0 * r1).abs() < 1e-12);
    }

    #[test]
    fn phases_positive_and_finite() {
        let c = ScaleConstants::default();
        for g in 1..=512 {
            for p in build_grid_phases(g, &c).unwrap() {
                assert!(p > 0.0 && p.is_finite(), "g={g} p={p}");
            }
        }
    }

    #[test]
    fn input_phases_half_open() {
        assert_eq!(build_input_phases(1).unwrap(), vec![0.0]);
        let p = build_input_phases(4).unwrap();
        let expect = [0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(build_input_phases(2).unwrap().iter().all(|&v| v < PI));
        for w in build_input_phases(37).unwrap().windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn single_term_sum() {
        let c = ScaleConstants::default();
        for x in [-2.0, 0.0, 0.3, 3.0] {
            let s = sum_of_sines(1, x, &c, true).unwrap();
            assert!((s - (x + PI / 2.0).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn unscaled_sum_is_shifted_sine() {
        // Symmetric phases collapse to C(g)·sin(x + π/2): zeros at ±π/2.
        let c = ScaleConstants::default();
        for g in [2, 5, 13] {
            for z in [-PI / 2.0, PI / 2.0] {
                assert!(sum_of_sines(g, z, &c, false).unwrap().abs() < 1e-12);
            }
            let amp = sum_of_sines(g, 0.0, &c, false).unwrap();
            for x in [-1.0, 0.4, 2.2] {
                let s = sum_of_sines(g, x, &c, false).unwrap();
                assert!((s - amp * x.cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unscaled_ratio_is_x_independent() {
        let c = ScaleConstants::default();
        let xs = symmetric_samples(101);
        for g in 2..20 {
            let mut seen: Option<f64> = None;
            for &x in &xs {
                let d = sum_of_sines(g, x, &c, false).unwrap();
                if d.abs() < RATIO_MASK {
                    continue;
                }
                let r = sum_of_sines(g + 1, x, &c, false).unwrap() / d;
                match seen {
                    Some(s) => assert!((s - r).abs() < 1e-6),
                    None => seen = Some(r),
                }
            }
        }
    }

    #[test]
    fn sums_match_direct_evaluation() {
        let c = ScaleConstants::default();
        let xs = symmetric_samples(17);
        for g in [1, 4, 9] {
            let fast = sums(g, &xs, &c, true).unwrap();
            for (x, f) in xs.iter().zip(fast) {
                assert!((f - sum_of_sines(g, *x, &c, true).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_single_grid_range_fits() {
        let fit = fit_scale_constants(2, 2, &symmetric_samples(101)).unwrap();
        let k = fit.constants;
        assert!(k.amplitude.is_finite() && k.exponent.is_finite() && k.asymptote.is_finite());
        assert!(fit.objective.is_finite());
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let (p, v, _, ok) = nelder_mead(
            |p| (p[0] - 0.3).powi(2) + (p[1] + 0.2).powi(2) + 2.0 * (p[2] - 1.0).powi(2),
            [0.0, 0.0, 0.0],
            0.5,
            1e-14,
            5000,
        );
        assert!(ok);
        assert!(v < 1e-10);
        assert!((p[0] - 0.3).abs() < 1e-4 && (p[1] + 0.2).abs() < 1e-4 && (p[2] - 1.0).abs() < 1e-4);
    }
}
