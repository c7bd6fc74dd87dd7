mod common;

use common::*;
use kanlab::flops::*;
use kanlab::layers::{BSplineKanLayer, FourierKanLayer, Layer, SineKanLayer};
use kanlab::{ModelKind, ModelStack};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn counted_passes_equal_formulas_and_real_outputs(
        b in 1usize..=4,
        d_in in 1usize..=4,
        d_out in 1usize..=4,
        g in 1usize..=8,
        s in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let cm = CostModel::default();
        let mut r = rng(seed);
        let x = rand_tensor(&[b, d_in], -1.2, 1.2, &mut r);
        let (b64, di, dout, g64, s64) = (b as u64, d_in as u64, d_out as u64, g as u64, s as u64);

        let l = SineKanLayer::new(d_in, d_out, g, false, &mut r).unwrap();
        let (y, ops) = count_sinekan(&l, &x).unwrap();
        prop_assert_eq!(ops.flops(&cm), sinekan_flops(b64, di, dout, g64));
        prop_assert!(y.max_abs_diff(&Layer::Sine(l).apply(&x).unwrap()) < 1e-12);

        let l = FourierKanLayer::new(d_in, d_out, g, &mut r).unwrap();
        let (y, ops) = count_fourierkan(&l, &x).unwrap();
        prop_assert_eq!(ops.flops(&cm), fourierkan_flops(b64, di, dout, g64));
        prop_assert!(y.max_abs_diff(&Layer::Fourier(l).apply(&x).unwrap()) < 1e-12);

        let l = BSplineKanLayer::new(d_in, d_out, g, s, &mut r).unwrap();
        let real = Layer::BSpline(l.clone()).apply(&x).unwrap();
        let (y, ops) = count_bsplinekan(&l, &x, BasisKernel::FixedWidth).unwrap();
        prop_assert_eq!(ops.flops(&cm), bsplinekan_flops(b64, di, dout, g64, s64));
        prop_assert!(y.max_abs_diff(&real) < 1e-12);

        // A kernel that skips dead entries at each level does less work.
        let (y, ops) = count_bsplinekan(&l, &x, BasisKernel::Shrinking).unwrap();
        let saved = 17 * b64 * di * s64 * (s64 + 1) / 2;
        prop_assert_eq!(ops.flops(&cm) + saved, bsplinekan_flops(b64, di, dout, g64, s64));
        prop_assert!(y.max_abs_diff(&real) < 1e-12);
    }

    #[test]
    fn ratios_approach_their_limits_monotonically(d_in in 1u64..1000, g in 1u64..16, s in 1u64..4) {
        // Leading d_out coefficients; the lone bias term keeps them off the
        // nominal 2 and (g+s+1)/g until d_in·g is large.
        let dg = (d_in * g) as f64;
        let f_lim = (4.0 * dg + 1.0) / (2.0 * dg + 1.0);
        let b_lim = (2.0 * (d_in * (1 + g + s)) as f64 + 1.0) / (2.0 * dg + 1.0);
        let mut prev: Option<(f64, f64)> = None;
        for d_out in [1u64, 4, 16, 64, 256, 1024, 4096, 1 << 20] {
            let sine = sinekan_flops(1, d_in, d_out, g) as f64;
            let f = fourierkan_flops(1, d_in, d_out, g) as f64 / sine;
            let b = bsplinekan_flops(1, d_in, d_out, g, s) as f64 / sine;
            if let Some((pf, pb)) = prev {
                prop_assert!((f - f_lim).abs() <= (pf - f_lim).abs() + 1e-12);
                prop_assert!((b - b_lim).abs() <= (pb - b_lim).abs() + 1e-12);
            }
            prev = Some((f, b));
        }
        let (f, b) = prev.unwrap();
        prop_assert!((f / f_lim - 1.0).abs() < 1e-3);
        prop_assert!((b / b_lim - 1.0).abs() < 1e-3);
        prop_assert!((f_lim - 2.0).abs() <= 1.0 / (2.0 * dg + 1.0) + 1e-12);
        let nominal = (g + s + 1) as f64 / g as f64;
        prop_assert!((b_lim - nominal).abs() <= nominal / (2.0 * dg + 1.0) + 1e-12);
    }
}

#[test]
fn reference_point_values() {
    assert_eq!(sinekan_flops(1, 784, 128, 8), 1_681_024);
    assert_eq!(fourierkan_flops(1, 784, 128, 8), 3_343_104);
    assert_eq!(bsplinekan_flops(1, 784, 128, 8, 3), 2_978_544);
    assert_eq!(mlp_flops(1, 784, 128), 200_832);
    assert_eq!(fourierkan_flops(1, 1, 1, 1), 26);
    assert_eq!(mlp_flops(1, 1, 1), 3);
    let ratio = sinekan_flops(1, 512, 512, 8) as f64 / mlp_flops(1, 512, 512) as f64;
    assert!((ratio / 8.0 - 1.0).abs() < 0.1, "{ratio}");
}

#[test]
fn model_flops_sum_layers() {
    let m = ModelStack::build(ModelKind::BSplineKan, &[784, 128, 10], 8, 3, 0).unwrap();
    assert_eq!(
        model_flops(&m, 2).unwrap(),
        bsplinekan_flops(2, 784, 128, 8, 3) + bsplinekan_flops(2, 128, 10, 8, 3)
    );
    assert!(layer_flops(ModelKind::SineKan, 1, 1, 1, 0, 0).is_err());
}

#[test]
fn forward_timing_reports_sane_numbers() {
    let m = ModelStack::build(ModelKind::SineKan, &[8, 4, 2], 4, 0, 0).unwrap();
    let (mean, min, std) = time_forward(&m, 16, 10, 100, 0).unwrap();
    assert!(min > 0.0 && min <= mean && std >= 0.0);
}
