mod common;

use kanlab::autodiff::Parameter;
use kanlab::data::{ClassificationDataset, Split};
use kanlab::training::{
    adamw_step, compute_metrics, cross_entropy_loss, mse_loss, train, AdamWConfig, AdamWState, MetricsRecord, TrainConfig,
};
use kanlab::{Layer, ModelKind, ModelStack, Tensor};
use rand::Rng;

/// Two blobs per class in 6 dimensions, features in [0, 1].
fn toy(n: usize, seed: u64, split: Split) -> ClassificationDataset {
    let mut r = common::rng(seed);
    let mut x = Vec::with_capacity(n * 6);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 3;
        for j in 0..6 {
            let centre = if j / 2 == c { 0.8 } else { 0.2 };
            x.push((centre + r.random_range(-0.15..0.15f64)).clamp(0.0, 1.0));
        }
        y.push(c);
    }
    ClassificationDataset::new(Tensor::new(vec![n, 6], x).unwrap(), y, split).unwrap()
}

fn quick_cfg(kind: ModelKind, epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig::preset(kind);
    cfg.epochs = epochs;
    cfg.batch_size = 16;
    cfg.eval_batch_size = 25;
    cfg
}

fn run(kind: ModelKind, cfg: &TrainConfig) -> (Vec<MetricsRecord>, ModelStack) {
    let (tr, va) = (toy(96, 1, Split::Train), toy(60, 2, Split::Validation));
    let mut m = ModelStack::build(kind, &[6, 5, 3], 4, 2, 3).unwrap();
    let out = train(&mut m, &tr, &va, cfg, |_| {}).unwrap();
    (out.records, m)
}

fn strip_time(rs: &[MetricsRecord]) -> Vec<MetricsRecord> {
    rs.iter()
        .map(|r| MetricsRecord {
            wall_time_s: 0.0,
            ..r.clone()
        })
        .collect()
}

#[test]
fn adam_finds_the_bottom_of_a_bowl() {
    let centre = [1.5, -2.0, 0.25, 3.0];
    let mut p = Parameter::new(Tensor::zeros(&[4]));
    let cfg = AdamWConfig::new(0.05, 0.0);
    let mut st = AdamWState::new(&[&p]);
    for _ in 0..500 {
        let g: Vec<f64> = p.value.data().iter().zip(centre).map(|(v, c)| 2.0 * (v - c)).collect();
        p.grad = Tensor::new(vec![4], g).unwrap();
        adamw_step(&mut [&mut p], &mut st, &cfg, cfg.lr).unwrap();
    }
    for (v, c) in p.value.data().iter().zip(centre) {
        assert!((v - c).abs() < 1e-6, "{v} vs {c}");
    }
}

#[test]
fn same_seed_gives_identical_metrics() {
    for kind in ModelKind::ALL {
        let cfg = quick_cfg(kind, 2);
        let (a, ma) = run(kind, &cfg);
        let (b, mb) = run(kind, &cfg);
        assert_eq!(strip_time(&a), strip_time(&b), "{kind}");
        assert_eq!(ma, mb);
    }
}

#[test]
fn zero_learning_rate_leaves_metrics_unchanged() {
    for kind in ModelKind::ALL {
        let mut cfg = quick_cfg(kind, 3);
        cfg.optimizer.lr = 0.0;
        let (recs, _) = run(kind, &cfg);
        let val: Vec<_> = recs.iter().filter(|r| r.split == "val").collect();
        assert_eq!(val.len(), 4);
        for r in &val[1..] {
            assert_eq!(r.loss, val[0].loss, "{kind}");
            assert_eq!(r.accuracy, val[0].accuracy);
        }
    }
}

#[test]
fn zero_epochs_is_a_single_evaluation() {
    let (recs, _) = run(ModelKind::Mlp, &quick_cfg(ModelKind::Mlp, 0));
    assert_eq!(recs.len(), 1);
    assert_eq!((recs[0].epoch, recs[0].split.as_str()), (0, "val"));
}

#[test]
fn records_follow_the_decay_schedule() {
    let cfg = quick_cfg(ModelKind::SineKan, 4);
    let (recs, _) = run(ModelKind::SineKan, &cfg);
    for r in recs.iter().filter(|r| r.split == "train") {
        assert_eq!(r.lr, cfg.optimizer.lr * 0.9f64.powi(r.epoch as i32 - 1));
    }
}

#[test]
fn phases_survive_training_bit_for_bit() {
    let before = ModelStack::build(ModelKind::SineKan, &[6, 5, 3], 4, 0, 3).unwrap();
    let (_, after) = run(ModelKind::SineKan, &quick_cfg(ModelKind::SineKan, 3));
    for (a, b) in before.layers().iter().zip(after.layers()) {
        let (Layer::Sine(a), Layer::Sine(b)) = (a, b) else { unreachable!() };
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.phases()), bits(b.phases()));
        assert_ne!(a.amplitudes.value, b.amplitudes.value);
    }
}

#[test]
fn toy_problem_is_learned() {
    for kind in ModelKind::ALL {
        let mut cfg = quick_cfg(kind, 15);
        cfg.optimizer.lr = 1e-2;
        cfg.optimizer.weight_decay = 0.0;
        let (recs, _) = run(kind, &cfg);
        let last = recs.last().unwrap();
        assert!(last.accuracy > 0.9, "{kind}: {}", last.accuracy);
    }
}

#[test]
fn three_class_metrics_by_hand() {
    // confusion rows = truth: [2 0 0], [1 1 0], [0 1 1]
    let truth = [0, 0, 1, 1, 2, 2];
    let pred = [0, 0, 0, 1, 1, 2];
    let m = compute_metrics(&pred, &truth, 3).unwrap();
    assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);
    let precision = (2.0 / 3.0 + 0.5 + 1.0) / 3.0;
    let recall = (1.0 + 0.5 + 0.5) / 3.0;
    let f1 = (0.8 + 0.5 + 2.0 / 3.0) / 3.0;
    assert!((m.precision - precision).abs() < 1e-12);
    assert!((m.recall - recall).abs() < 1e-12);
    assert!((m.f1 - f1).abs() < 1e-12);
}

#[test]
fn losses_match_loops() {
    let mut r = common::rng(4);
    for _ in 0..50 {
        let (b, c) = (r.random_range(1..10), r.random_range(2..10));
        let z = common::rand_tensor(&[b, c], -20.0, 20.0, &mut r);
        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..c)).collect();
        let mut want = 0.0;
        for i in 0..b {
            let row = &z.data()[i * c..(i + 1) * c];
            let mx = row.iter().cloned().fold(f64::MIN, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            want += lse - row[labels[i]];
        }
        want /= b as f64;
        assert!((cross_entropy_loss(&z, &labels).unwrap() - want).abs() < 1e-12);

        let t = common::rand_tensor(&[b, c], -1.0, 1.0, &mut r);
        let want: f64 = z.data().iter().zip(t.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (b * c) as f64;
        assert!((mse_loss(&z, &t).unwrap() - want).abs() < 1e-9);
    }
}
