//! AdamW, learning-rate decay, losses, metrics and the training loops.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Parameter};
use crate::data::{batch_indices, ClassificationDataset, Split};
use crate::error::{KanError, Result};
use crate::layers::{ModelKind, ModelStack};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamWConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    /// Learning rate and weight decay used for each model kind on MNIST.
    pub fn preset(kind: ModelKind) -> Self {
        match kind {
            ModelKind::SineKan => Self::new(4e-4, 0.5),
            ModelKind::FourierKan => Self::new(1e-4, 1.0),
            ModelKind::BSplineKan => Self::new(5e-3, 0.01),
            ModelKind::Mlp => Self::new(8e-4, 0.01),
        }
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed so a run can be frozen deliberately
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(KanError::config("lr", format!("must be finite and >= 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(KanError::config(name, format!("must be in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(KanError::config("eps", format!("must be > 0, got {}", self.eps)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(KanError::config("weight_decay", format!("must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

/// First and second moments per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamWState {
    pub fn new(params: &[&Parameter]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamWState { m: zeros(), v: zeros(), t: 0 }
    }
}

/// One decoupled-weight-decay Adam update at learning rate `lr`
/// (overriding `config.lr`). Frozen parameters are left alone. If any
/// gradient is non-finite nothing is modified.
pub fn adamw_step(params: &mut [&mut Parameter], state: &mut AdamWState, config: &AdamWConfig, lr: f64) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(KanError::invalid(format!(
            "optimizer state tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.trainable && !p.grad.all_finite() {
            return Err(KanError::invalid(format!("non-finite gradient in parameter {i}; step aborted")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let decay = 1.0 - lr * config.weight_decay;
    for (i, p) in params.iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let g = p.grad.data();
        let w = p.value.data_mut();
        for n in 0..w.len() {
            m[n] = config.beta1 * m[n] + (1.0 - config.beta1) * g[n];
            v[n] = config.beta2 * v[n] + (1.0 - config.beta2) * g[n] * g[n];
            let mh = m[n] / bc1;
            let vh = v[n] / bc2;
            w[n] = w[n] * decay - lr * mh / (vh.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LRSchedule {
    pub initial: f64,
    pub gamma: f64,
}

impl LRSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.initial * self.gamma.powi(epoch as i32)
    }
}

/// Mean softmax cross-entropy of `logits: [b, classes]`.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut g = Graph::new();
    let l = g.constant(logits.clone());
    let loss = g.softmax_cross_entropy(l, labels)?;
    g.value(loss).item()
}

/// Mean squared difference.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let p = g.constant(pred.clone());
    let loss = g.mse(p, target)?;
    g.value(loss).item()
}

/// Index of the largest entry in each row of `[b, c]` logits.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let c = logits.shape()[1];
    logits
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy and support-weighted precision, recall and F1. Classes that are
/// never predicted contribute zero precision.
pub fn compute_metrics(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<ClassMetrics> {
    if predictions.is_empty() {
        return Err(KanError::invalid("no predictions"));
    }
    if predictions.len() != labels.len() {
        return Err(KanError::invalid(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    let mut tp = vec![0usize; n_classes];
    let mut pred_n = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= n_classes || l >= n_classes {
            return Err(KanError::invalid(format!("class index out of range 0..{n_classes}")));
        }
        pred_n[p] += 1;
        support[l] += 1;
        if p == l {
            tp[l] += 1;
        }
    }
    let n = labels.len() as f64;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for c in 0..n_classes {
        let w = support[c] as f64 / n;
        let p = ratio(tp[c], pred_n[c]);
        let r = ratio(tp[c], support[c]);
        precision += w * p;
        recall += w * r;
        if p + r > 0.0 {
            f1 += w * 2.0 * p * r / (p + r);
        }
    }
    Ok(ClassMetrics {
        accuracy: tp.iter().sum::<usize>() as f64 / n,
        precision,
        recall,
        f1,
    })
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub lr: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: AdamWConfig,
    /// Per-epoch learning-rate decay factor.
    pub gamma: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Rows per forward pass during evaluation.
    pub eval_batch_size: usize,
}

impl TrainConfig {
    pub fn preset(kind: ModelKind) -> Self {
        TrainConfig {
            optimizer: AdamWConfig::preset(kind),
            gamma: 0.9,
            batch_size: 128,
            epochs: 30,
            seed: 0,
            eval_batch_size: 500,
        }
    }

    pub fn schedule(&self) -> LRSchedule {
        LRSchedule {
            initial: self.optimizer.lr,
            gamma: self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(KanError::config("batch_size", "must be >= 1"));
        }
        if self.eval_batch_size == 0 {
            return Err(KanError::config("eval_batch_size", "must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(KanError::config("gamma", format!("must be in (0, 1], got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    /// Copy of the model at the epoch with the best validation accuracy
    /// (the initial model if training never improved on it).
    pub best: ModelStack,
    pub best_epoch: usize,
    pub best_accuracy: f64,
}

/// Loss and metrics of `model` on `ds`, without recording gradients.
pub fn evaluate(model: &ModelStack, ds: &ClassificationDataset, eval_batch_size: usize) -> Result<(f64, ClassMetrics)> {
    if ds.is_empty() {
        return Err(KanError::invalid("empty evaluation set"));
    }
    let mut preds = Vec::with_capacity(ds.len());
    let mut loss_sum = 0.0;
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(eval_batch_size.max(1)) {
        let (x, y) = ds.gather(chunk);
        let logits = model.forward(&x)?;
        loss_sum += cross_entropy_loss(&logits, &y)? * chunk.len() as f64;
        preds.extend(argmax_rows(&logits));
    }
    let n_classes = model.d_out();
    Ok((loss_sum / ds.len() as f64, compute_metrics(&preds, &ds.labels, n_classes)?))
}

fn record(epoch: usize, split: Split, loss: f64, m: ClassMetrics, lr: f64, start: Instant) -> MetricsRecord {
    MetricsRecord {
        epoch,
        split: split.to_string(),
        loss,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        lr,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

fn diverged(epoch: usize, step: usize, e: KanError) -> KanError {
    match e {
        KanError::NonFinite { op, node } => KanError::Divergence {
            epoch,
            step,
            reason: format!("non-finite value from {op} at node {node}"),
        },
        other => other,
    }
}

/// Mini-batch classification training.
///
/// Epoch 0 is an evaluation of the initial model on `val`. Each later epoch
/// `e` trains one pass at learning rate `lr₀·γ^(e-1)` and appends a train
/// record (mean batch loss, metrics of the predictions made during the pass)
/// and a validation record. `on_record` sees every record as it is made.
pub fn train(
    model: &mut ModelStack,
    train_set: &ClassificationDataset,
    val_set: &ClassificationDataset,
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&MetricsRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(KanError::invalid("empty training set"));
    }
    if train_set.n_features() != model.d_in() || val_set.n_features() != model.d_in() {
        return Err(KanError::shape(
            "train",
            format!("model expects {} features, data has {}", model.d_in(), train_set.n_features()),
        ));
    }
    let start = Instant::now();
    let n_classes = model.d_out();
    let schedule = cfg.schedule();
    let mut records = Vec::with_capacity(2 * cfg.epochs + 1);

    let (loss, m) = evaluate(model, val_set, cfg.eval_batch_size)?;
    let r = record(0, Split::Validation, loss, m, schedule.lr(0), start);
    on_record(&r);
    records.push(r);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_accuracy = m.accuracy;

    let mut state = AdamWState::new(&model.parameters());
    for epoch in 1..=cfg.epochs {
        let lr = schedule.lr(epoch - 1);
        let mut loss_sum = 0.0;
        let mut preds = Vec::with_capacity(train_set.len());
        let mut seen = Vec::with_capacity(train_set.len());
        for (step, idx) in batch_indices(train_set.len(), cfg.batch_size, cfg.seed, epoch - 1).into_iter().enumerate() {
            let (x, y) = train_set.gather(&idx);
            let mut g = Graph::new();
            let xv = g.constant(x);
            let (logits, vars) = model.forward_graph(&mut g, xv, true).map_err(|e| diverged(epoch, step, e))?;
            let loss = g.softmax_cross_entropy(logits, &y).map_err(|e| diverged(epoch, step, e))?;
            let lv = g.value(loss).item()?;
            if !lv.is_finite() {
                return Err(KanError::Divergence {
                    epoch,
                    step,
                    reason: format!("loss is {lv}"),
                });
            }
            loss_sum += lv * idx.len() as f64;
            preds.extend(argmax_rows(g.value(logits)));
            seen.extend(y);
            let grads = g.backward(loss).map_err(|e| diverged(epoch, step, e))?;
            model.zero_grads();
            model.accumulate_grads(&grads, &vars)?;
            adamw_step(&mut model.parameters_mut(), &mut state, &cfg.optimizer, lr).map_err(|e| KanError::Divergence {
                epoch,
                step,
                reason: e.to_string(),
            })?;
        }
        let m = compute_metrics(&preds, &seen, n_classes)?;
        let r = record(epoch, Split::Train, loss_sum / train_set.len() as f64, m, lr, start);
        on_record(&r);
        records.push(r);

        let (loss, m) = evaluate(model, val_set, cfg.eval_batch_size)?;
        let r = record(epoch, Split::Validation, loss, m, lr, start);
        on_record(&r);
        records.push(r);
        if m.accuracy > best_accuracy {
            best_accuracy = m.accuracy;
            best_epoch = epoch;
            best = model.clone();
        }
    }
    Ok(TrainOutcome {
        records,
        best,
        best_epoch,
        best_accuracy,
    })
}

/// Full-batch MSE regression for `steps` AdamW steps at constant learning
/// rate. Returns the loss before each step followed by the final loss.
pub fn train_regression(model: &mut ModelStack, x: &Tensor, y: &Tensor, opt: &AdamWConfig, steps: usize) -> Result<Vec<f64>> {
    opt.validate()?;
    let mut state = AdamWState::new(&model.parameters());
    let mut history = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let (pred, vars) = model.forward_graph(&mut g, xv, true).map_err(|e| diverged(0, step, e))?;
        let loss = g.mse(pred, y).map_err(|e| diverged(0, step, e))?;
        history.push(g.value(loss).item()?);
        let grads = g.backward(loss).map_err(|e| diverged(0, step, e))?;
        model.zero_grads();
        model.accumulate_grads(&grads, &vars)?;
        adamw_step(&mut model.parameters_mut(), &mut state, opt, opt.lr).map_err(|e| KanError::Divergence {
            epoch: 0,
            step,
            reason: e.to_string(),
        })?;
    }
    history.push(mse_loss(&model.forward(x)?, y)?);
    Ok(history)
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| KanError::data(path, e.to_string()))?;
    for r in records {
        w.serialize(r).map_err(|e| KanError::data(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_jsonl(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| KanError::data(path, e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64, g: f64) -> Parameter {
        let mut p = Parameter::new(Tensor::full(&[1], v));
        p.grad = Tensor::full(&[1], g);
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_param(1.0, 1.0);
        let cfg = AdamWConfig::new(0.1, 0.0);
        let mut st = AdamWState::new(&[&p]);
        adamw_step(&mut [&mut p], &mut st, &cfg, 0.1).unwrap();
        assert!((p.value.data()[0] - 0.9).abs() < 1e-7);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_grad_decay() {
        let mut p = scalar_param(2.0, 0.0);
        let mut st = AdamWState::new(&[&p]);
        adamw_step(&mut [&mut p], &mut st, &AdamWConfig::new(0.1, 0.0), 0.1).unwrap();
        assert_eq!(p.value.data()[0], 2.0);
        adamw_step(&mut [&mut p], &mut st, &AdamWConfig::new(0.1, 0.5), 0.1).unwrap();
        assert!((p.value.data()[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = scalar_param(2.0, f64::NAN);
        let mut st = AdamWState::new(&[&p]);
        assert!(adamw_step(&mut [&mut p], &mut st, &AdamWConfig::new(0.1, 0.0), 0.1).is_err());
        assert_eq!(p.value.data()[0], 2.0);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn frozen_untouched() {
        let mut p = Parameter::frozen(Tensor::full(&[1], 3.0));
        p.grad = Tensor::full(&[1], 1.0);
        let mut st = AdamWState::new(&[&p]);
        adamw_step(&mut [&mut p], &mut st, &AdamWConfig::new(0.1, 1.0), 0.1).unwrap();
        assert_eq!(p.value.data()[0], 3.0);
    }

    #[test]
    fn schedule_is_exact() {
        let s = LRSchedule { initial: 4e-4, gamma: 0.9 };
        assert_eq!(s.lr(0), 4e-4);
        assert_eq!(s.lr(3), 4e-4 * 0.9f64.powi(3));
    }

    #[test]
    fn config_validation() {
        assert!(AdamWConfig::new(-1.0, 0.0).validate().is_err());
        assert!(AdamWConfig::new(1.0, -0.1).validate().is_err());
        let mut c = AdamWConfig::new(1.0, 0.0);
        c.beta2 = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn losses() {
        let l = Tensor::zeros(&[3, 10]);
        assert!((cross_entropy_loss(&l, &[0, 4, 9]).unwrap() - 10f64.ln()).abs() < 1e-12);
        let mut big = Tensor::zeros(&[1, 3]);
        big.data_mut()[1] = 100.0;
        assert!(cross_entropy_loss(&big, &[1]).unwrap() < 1e-40);
        assert!(cross_entropy_loss(&big, &[3]).is_err());
        let p = Tensor::from_fn(&[4, 2], |i| i as f64);
        assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);
        let q = p.map(|v| v + 0.5);
        assert!((mse_loss(&p, &q).unwrap() - 0.25).abs() < 1e-15);
        assert!(mse_loss(&p, &Tensor::zeros(&[8])).is_err());
    }

    #[test]
    fn metrics() {
        let m = compute_metrics(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        let m = compute_metrics(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.recall, 0.5);
        assert!((m.precision - 0.25).abs() < 1e-15);
        assert!(compute_metrics(&[], &[], 2).is_err());
        assert!(compute_metrics(&[0], &[0, 1], 2).is_err());
    }
}
