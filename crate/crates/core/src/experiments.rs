//! The regression experiments: 1-D function fits and continual learning on
//! a train of Gaussian bumps.

use serde::{Deserialize, Serialize};

use crate::data::{gen_function_dataset, gen_gaussian_wave, FunctionId, PeriodSchedule, RegressionDataset, Sampling};
use crate::error::{KanError, Result};
use crate::layers::{ModelKind, ModelStack};
use crate::training::{train_regression, AdamWConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Fit1dConfig {
    pub function: FunctionId,
    pub grid: usize,
    pub points: usize,
    pub domain: (f64, f64),
    pub steps: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Fit1dConfig {
    pub fn new(function: FunctionId) -> Self {
        Fit1dConfig {
            function,
            grid: 100,
            points: 1024,
            domain: (-1.0, 1.0),
            steps: 3000,
            optimizer: AdamWConfig::new(1e-2, 0.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fit1dResult {
    pub data: RegressionDataset,
    pub prediction: Vec<f64>,
    pub mse: f64,
    pub history: Vec<f64>,
    pub model: ModelStack,
}

/// Fits one 1→1 SineKAN layer to `cfg.function` on an even grid.
pub fn fit_1d(cfg: &Fit1dConfig) -> Result<Fit1dResult> {
    let data = gen_function_dataset(cfg.function, cfg.points, cfg.domain, Sampling::Grid)?;
    let mut model = ModelStack::build(ModelKind::SineKan, &[1, 1], cfg.grid, 0, cfg.seed)?;
    let (x, y) = data.tensors(None);
    let history = train_regression(&mut model, &x, &y, &cfg.optimizer, cfg.steps)?;
    let prediction = model.forward(&x)?.into_data();
    let mse = *history.last().expect("history holds the final loss");
    Ok(Fit1dResult {
        data,
        prediction,
        mse,
        history,
        model,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Sequential,
    Interleaved,
}

impl std::str::FromStr for ScheduleKind {
    type Err = KanError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(ScheduleKind::Sequential),
            "interleaved" => Ok(ScheduleKind::Interleaved),
            _ => Err(KanError::config("schedule", format!("expected sequential or interleaved, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinualConfig {
    pub schedule: ScheduleKind,
    pub widths: Vec<usize>,
    pub grid: usize,
    pub periods: usize,
    pub points_per_period: usize,
    pub peak_std: f64,
    pub steps_per_stage: usize,
    /// Stop after this many stages (all stages when `None`).
    pub max_stages: Option<usize>,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl ContinualConfig {
    pub fn new(schedule: ScheduleKind) -> Self {
        ContinualConfig {
            schedule,
            widths: vec![1, 8, 1],
            grid: 8,
            periods: 5,
            points_per_period: 100,
            peak_std: 0.1,
            steps_per_stage: 2000,
            max_stages: None,
            optimizer: AdamWConfig::new(1e-2, 0.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageResult {
    /// 1-based stage number.
    pub stage: usize,
    /// 1-based periods shown in this stage.
    pub periods: Vec<usize>,
    pub steps: usize,
    pub samples_per_step: usize,
    pub rmse_full: f64,
    pub rmse_per_period: Vec<f64>,
    /// Model output over the whole domain after the stage.
    pub prediction: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ContinualResult {
    pub data: RegressionDataset,
    pub schedule: PeriodSchedule,
    pub stages: Vec<StageResult>,
}

fn rmse(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len() as f64;
    (pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n).sqrt()
}

/// Trains on the visible periods of each stage in turn, measuring RMSE on
/// the full domain after every stage.
pub fn run_continual(cfg: &ContinualConfig) -> Result<ContinualResult> {
    let (data, seq) = gen_gaussian_wave(cfg.periods, cfg.points_per_period, cfg.peak_std)?;
    let schedule = match cfg.schedule {
        ScheduleKind::Sequential => seq,
        ScheduleKind::Interleaved => PeriodSchedule::interleaved(cfg.periods),
    };
    if schedule.stages.is_empty() {
        return Err(KanError::config("periods", "schedule has no stages"));
    }
    let mut model = ModelStack::build(ModelKind::SineKan, &cfg.widths, cfg.grid, 0, cfg.seed)?;
    if model.d_in() != 1 || model.d_out() != 1 {
        return Err(KanError::config("widths", "continual learning needs a 1 -> 1 model"));
    }
    let (x_all, _) = data.tensors(None);
    let n_stages = cfg.max_stages.unwrap_or(usize::MAX).min(schedule.stages.len());
    let mut stages = Vec::with_capacity(n_stages);
    for st in 0..n_stages {
        let idx = schedule.stage_indices(&data, st);
        let (x, y) = data.tensors(Some(&idx));
        train_regression(&mut model, &x, &y, &cfg.optimizer, cfg.steps_per_stage)?;
        let prediction = model.forward(&x_all)?.into_data();
        let rmse_per_period = (0..cfg.periods)
            .map(|p| {
                let i: Vec<usize> = (0..data.len()).filter(|&i| schedule.period_of(data.x[i]) == Some(p)).collect();
                let pp: Vec<f64> = i.iter().map(|&i| prediction[i]).collect();
                let tt: Vec<f64> = i.iter().map(|&i| data.y[i]).collect();
                rmse(&pp, &tt)
            })
            .collect();
        stages.push(StageResult {
            stage: st + 1,
            periods: schedule.stages[st].iter().map(|p| p + 1).collect(),
            steps: cfg.steps_per_stage,
            samples_per_step: idx.len(),
            rmse_full: rmse(&prediction, &data.y),
            rmse_per_period,
            prediction,
        });
    }
    Ok(ContinualResult { data, schedule, stages })
}
