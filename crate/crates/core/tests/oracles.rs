mod common;

use common::*;
use kanlab::layers::{Activation, BSplineKanLayer, DenseLayer, FourierKanLayer, Layer, SineKanLayer};
use kanlab::spline::{eval_basis, uniform_knots, valid_range};
use proptest::prelude::*;
use rand_distr::{Distribution, Uniform};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forwards_match_triple_loops(
        b in 1usize..=8,
        d_in in 1usize..=8,
        d_out in 1usize..=8,
        grid in 1usize..=8,
        order in 1usize..=3,
        first in any::<bool>(),
        relu in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let x = rand_tensor(&[b, d_in], -1.5, 1.5, &mut r);
        let s = SineKanLayer::new(d_in, d_out, grid, first, &mut r).unwrap();
        let f = FourierKanLayer::new(d_in, d_out, grid, &mut r).unwrap();
        let bs = BSplineKanLayer::new(d_in, d_out, grid, order, &mut r).unwrap();
        let act = if relu { Activation::Relu } else { Activation::None };
        let d = DenseLayer::new(d_in, d_out, act, &mut r).unwrap();
        prop_assert!(max_diff(Layer::Sine(s.clone()).apply(&x).unwrap().data(), &sinekan_oracle(&s, &x)) <= 1e-12);
        prop_assert!(max_diff(Layer::Fourier(f.clone()).apply(&x).unwrap().data(), &fourierkan_oracle(&f, &x)) <= 1e-12);
        prop_assert!(max_diff(Layer::BSpline(bs.clone()).apply(&x).unwrap().data(), &bsplinekan_oracle(&bs, &x)) <= 1e-12);
        prop_assert!(max_diff(Layer::Dense(d.clone()).apply(&x).unwrap().data(), &dense_oracle(&d, &x)) <= 1e-12);
    }

    #[test]
    fn iterative_basis_matches_recursion(grid in 1usize..=12, order in 1usize..=4, seed in any::<u64>()) {
        let t = uniform_knots(grid, order, -1.0, 1.0);
        let n = t.len() - order - 1;
        let mut r = rng(seed);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let mut scratch = vec![0.0; t.len() - 1];
        let mut out = vec![0.0; n];
        for _ in 0..50 {
            let x = u.sample(&mut r);
            eval_basis(x, &t, order, &mut scratch, &mut out, None);
            for (i, v) in out.iter().enumerate() {
                prop_assert!((v - cox_de_boor(&t, i, order, x)).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn basis_is_a_partition_of_unity() {
    let mut r = rng(5);
    for (grid, order) in [(1, 1), (3, 2), (8, 3), (5, 4), (20, 3)] {
        let t = uniform_knots(grid, order, -1.0, 1.0);
        let (lo, hi) = valid_range(&t, order);
        let u = Uniform::new_inclusive(lo, hi).unwrap();
        let mut scratch = vec![0.0; t.len() - 1];
        let mut out = vec![0.0; t.len() - order - 1];
        for _ in 0..10_000 {
            let x = u.sample(&mut r);
            eval_basis(x, &t, order, &mut scratch, &mut out, None);
            let s: f64 = out.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "g={grid} s={order} x={x}: {s}");
            assert!(out.iter().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn out_of_range_inputs_are_clamped() {
    let mut r = rng(9);
    let l = BSplineKanLayer::new(2, 3, 5, 3, &mut r).unwrap();
    let x = kanlab::Tensor::new(vec![2, 2], vec![3.0, -7.0, 1.0, -1.0]).unwrap();
    let y = Layer::BSpline(l.clone()).apply(&x).unwrap();
    assert!(max_diff(y.data(), &bsplinekan_oracle(&l, &x)) <= 1e-12);
}
