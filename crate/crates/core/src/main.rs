use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use kanlab::data::{load_mnist, FunctionId};
use kanlab::experiments::{fit_1d, run_continual, ContinualConfig, Fit1dConfig, ScheduleKind};
use kanlab::flops::{self, BenchConfig};
use kanlab::layers::{checkpoint, layer_output_statistics};
use kanlab::phase::{fit_scale_constants, ratio_stats, symmetric_samples, ScaleConstants};
use kanlab::training::{self, AdamWConfig, TrainConfig};
use kanlab::{KanError, ModelKind, ModelStack, Result};

const DEFAULT_MNIST_DIR: &str = "data/mnist";

#[derive(Parser, Debug)]
#[command(name = "kanlab", version, about = "SineKAN and baseline KAN experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default, Clone)]
struct Common {
    /// TOML file with experiment settings; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<String>,
    /// Comma-separated layer widths, e.g. 784,64,10
    #[arg(long, global = true, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    order: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    wd: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long = "batch-size", global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long = "mnist-dir", global = true, env = "KANLAB_MNIST_DIR")]
    mnist_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train a classifier on MNIST
    Train {
        /// Use only the first N training images
        #[arg(long)]
        train_subset: Option<usize>,
    },
    /// Fit one 1->1 SineKAN layer to a 1-D function
    Fit1d {
        /// One of f, g, h, k, m, n
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Continual learning on a train of Gaussian bumps
    Continual {
        /// sequential or interleaved
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Time forward passes of the KAN layer kinds
    BenchSpeed {
        #[arg(long)]
        passes: Option<usize>,
    },
    /// Modeled FLOPs of one layer of every kind
    Flops {
        #[arg(long, default_value_t = 1)]
        batch: u64,
        #[arg(long = "d-in", default_value_t = 784)]
        d_in: u64,
        #[arg(long = "d-out", default_value_t = 128)]
        d_out: u64,
    },
    /// Per-layer output statistics of a deep stack on standard-normal inputs
    LayerStats {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Fit the phase scale constants A, K, C
    FitPhaseConstants {
        #[arg(long)]
        g_lo: Option<usize>,
        #[arg(long)]
        g_hi: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

/// Settings accepted in the config file. Every key is optional; unknown keys
/// are rejected.
#[derive(Deserialize, Serialize, Debug, Default, Clone)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<String>,
    widths: Option<Vec<usize>>,
    grid: Option<usize>,
    order: Option<usize>,
    lr: Option<f64>,
    wd: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps: Option<f64>,
    gamma: Option<f64>,
    batch_size: Option<usize>,
    eval_batch_size: Option<usize>,
    epochs: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    mnist_dir: Option<PathBuf>,
    train_subset: Option<usize>,
    function: Option<String>,
    points: Option<usize>,
    steps: Option<usize>,
    schedule: Option<String>,
    periods: Option<usize>,
    points_per_period: Option<usize>,
    peak_std: Option<f64>,
    stages: Option<usize>,
    samples: Option<usize>,
    passes: Option<usize>,
    warmup: Option<usize>,
    threads: Option<usize>,
    batch_sizes: Option<Vec<usize>>,
    hidden_dims: Option<Vec<usize>>,
    depths: Option<Vec<usize>>,
    g_lo: Option<usize>,
    g_hi: Option<usize>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| KanError::config("config", format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| KanError::config("config", format!("{}: {e}", path.display())))
    }

    fn apply(&mut self, c: &Common) {
        macro_rules! over {
            ($($f:ident),*) => { $( if c.$f.is_some() { self.$f = c.$f.clone(); } )* };
        }
        over!(model, widths, grid, order, lr, wd, epochs, batch_size, seed, out, mnist_dir);
    }

    fn model_kind(&self, default: ModelKind) -> Result<ModelKind> {
        self.model.as_deref().map_or(Ok(default), str::parse)
    }

    fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    fn optimizer(&self, base: AdamWConfig) -> Result<AdamWConfig> {
        let o = AdamWConfig {
            lr: self.lr.unwrap_or(base.lr),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            eps: self.eps.unwrap_or(base.eps),
            weight_decay: self.wd.unwrap_or(base.weight_decay),
        };
        o.validate()?;
        if o.lr == 0.0 {
            log::warn!("lr is 0: parameters will not change");
        }
        Ok(o)
    }
}

fn positive(field: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(KanError::config(field, "must be >= 1"));
    }
    Ok(v)
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    settings: &'a T,
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_manifest<T: Serialize>(dir: &Path, command: &str, seed: u64, settings: &T) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        settings,
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| KanError::data(dir, e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| KanError::data(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| KanError::data(path, e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    cfg.apply(&cli.common);
    match cli.cmd {
        Cmd::Train { train_subset } => cmd_train(cfg, train_subset),
        Cmd::Fit1d { function, steps } => cmd_fit1d(cfg, function, steps),
        Cmd::Continual { schedule, steps } => cmd_continual(cfg, schedule, steps),
        Cmd::BenchSpeed { passes } => cmd_bench(cfg, passes),
        Cmd::Flops { batch, d_in, d_out } => cmd_flops(cfg, batch, d_in, d_out),
        Cmd::LayerStats { samples } => cmd_layer_stats(cfg, samples),
        Cmd::FitPhaseConstants { g_lo, g_hi, samples } => cmd_fit_phase(cfg, g_lo, g_hi, samples),
    }
}

fn cmd_train(mut cfg: FileConfig, subset: Option<usize>) -> Result<()> {
    if subset.is_some() {
        cfg.train_subset = subset;
    }
    let kind = cfg.model_kind(ModelKind::SineKan)?;
    let widths = cfg.widths.clone().unwrap_or_else(|| vec![784, 128, 10]);
    let grid = positive("grid", cfg.grid.unwrap_or(8))?;
    let order = positive("order", cfg.order.unwrap_or(3))?;
    let base = TrainConfig::preset(kind);
    let tc = TrainConfig {
        optimizer: cfg.optimizer(base.optimizer)?,
        gamma: cfg.gamma.unwrap_or(base.gamma),
        batch_size: cfg.batch_size.unwrap_or(base.batch_size),
        epochs: cfg.epochs.unwrap_or(base.epochs),
        seed: cfg.seed.unwrap_or(base.seed),
        eval_batch_size: cfg.eval_batch_size.unwrap_or(base.eval_batch_size),
    };
    tc.validate()?;
    if let Some(0) = cfg.train_subset {
        return Err(KanError::config("train_subset", "must be >= 1"));
    }
    let mut model = ModelStack::build(kind, &widths, grid, order, tc.seed)?;
    let dir = cfg.mnist_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_MNIST_DIR));
    let (train_set, val_set) = load_mnist(&dir)?;
    let train_set = match cfg.train_subset {
        Some(n) => train_set.head(n),
        None => train_set,
    };
    let out = cfg.out_dir("runs/train");
    prepare_out(&out)?;
    cfg.model = Some(kind.to_string());
    cfg.widths = Some(widths);
    write_manifest(&out, "train", tc.seed, &(&cfg, &tc))?;
    log::info!("training {kind} with {} parameters", model.param_count());
    let outcome = training::train(&mut model, &train_set, &val_set, &tc, |r| {
        println!(
            "epoch {:>3} {:<5} loss {:.4} acc {:.4} f1 {:.4} lr {:.3e} {:.1}s",
            r.epoch, r.split, r.loss, r.accuracy, r.f1, r.lr, r.wall_time_s
        )
    })?;
    training::write_metrics_csv(&out.join("metrics.csv"), &outcome.records)?;
    training::write_metrics_jsonl(&out.join("metrics.jsonl"), &outcome.records)?;
    checkpoint::save(&model, &out.join("final.ckpt"))?;
    checkpoint::save(&outcome.best, &out.join("best.ckpt"))?;
    println!("best validation accuracy {:.4} at epoch {}", outcome.best_accuracy, outcome.best_epoch);
    Ok(())
}

#[derive(Serialize)]
struct FitRow {
    x: f64,
    y_true: f64,
    y_pred: f64,
}

fn cmd_fit1d(mut cfg: FileConfig, function: Option<String>, steps: Option<usize>) -> Result<()> {
    let id: FunctionId = function
        .or(cfg.function.clone())
        .unwrap_or_else(|| "g".into())
        .parse()
        .map_err(|e: KanError| KanError::config("function", e.to_string()))?;
    let mut fc = Fit1dConfig::new(id);
    fc.grid = positive("grid", cfg.grid.unwrap_or(fc.grid))?;
    fc.points = cfg.points.unwrap_or(fc.points);
    if fc.points < 2 {
        return Err(KanError::config("points", "must be >= 2"));
    }
    fc.steps = steps.or(cfg.steps).or(cfg.epochs).unwrap_or(fc.steps);
    fc.optimizer = cfg.optimizer(fc.optimizer)?;
    fc.seed = cfg.seed.unwrap_or(fc.seed);
    let out = cfg.out_dir("runs/fit1d");
    prepare_out(&out)?;
    cfg.function = Some(id.to_string());
    write_manifest(&out, "fit1d", fc.seed, &cfg)?;
    let r = fit_1d(&fc)?;
    let rows = r.data.x.iter().zip(&r.data.y).zip(&r.prediction).map(|((&x, &y_true), &y_pred)| FitRow { x, y_true, y_pred });
    write_csv(&out.join(format!("fit_{id}.csv")), rows)?;
    checkpoint::save(&r.model, &out.join(format!("fit_{id}.ckpt")))?;
    println!("function {id}: final MSE {:.3e}", r.mse);
    Ok(())
}

#[derive(Serialize)]
struct StageRow {
    stage: usize,
    periods: String,
    steps: usize,
    samples_per_step: usize,
    rmse_full: f64,
    rmse_per_period: String,
}

fn cmd_continual(mut cfg: FileConfig, schedule: Option<String>, steps: Option<usize>) -> Result<()> {
    let kind: ScheduleKind = schedule.or(cfg.schedule.clone()).unwrap_or_else(|| "sequential".into()).parse()?;
    let mut cc = ContinualConfig::new(kind);
    if let Some(w) = cfg.widths.clone() {
        cc.widths = w;
    }
    cc.grid = positive("grid", cfg.grid.unwrap_or(cc.grid))?;
    cc.periods = cfg.periods.unwrap_or(cc.periods);
    if cc.periods < 2 {
        return Err(KanError::config("periods", "must be >= 2"));
    }
    cc.points_per_period = positive("points_per_period", cfg.points_per_period.unwrap_or(cc.points_per_period))?;
    cc.peak_std = cfg.peak_std.unwrap_or(cc.peak_std);
    if !(cc.peak_std > 0.0) {
        return Err(KanError::config("peak_std", "must be > 0"));
    }
    cc.steps_per_stage = steps.or(cfg.steps).unwrap_or(cc.steps_per_stage);
    cc.max_stages = cfg.stages;
    cc.optimizer = cfg.optimizer(cc.optimizer)?;
    cc.seed = cfg.seed.unwrap_or(cc.seed);
    let out = cfg.out_dir("runs/continual");
    prepare_out(&out)?;
    cfg.schedule = Some(format!("{kind:?}").to_lowercase());
    write_manifest(&out, "continual", cc.seed, &cfg)?;
    let r = run_continual(&cc)?;
    let join = |v: &[String]| v.join(";");
    let rows = r.stages.iter().map(|s| StageRow {
        stage: s.stage,
        periods: join(&s.periods.iter().map(usize::to_string).collect::<Vec<_>>()),
        steps: s.steps,
        samples_per_step: s.samples_per_step,
        rmse_full: s.rmse_full,
        rmse_per_period: join(&s.rmse_per_period.iter().map(f64::to_string).collect::<Vec<_>>()),
    });
    write_csv(&out.join("stages.csv"), rows)?;
    for s in &r.stages {
        let rows = r.data.x.iter().zip(&r.data.y).zip(&s.prediction).map(|((&x, &y_true), &y_pred)| FitRow { x, y_true, y_pred });
        write_csv(&out.join(format!("predictions_stage{}.csv", s.stage)), rows)?;
        println!("stage {} (periods {:?}): full-domain RMSE {:.4}", s.stage, s.periods, s.rmse_full);
    }
    Ok(())
}

fn cmd_bench(cfg: FileConfig, passes: Option<usize>) -> Result<()> {
    let mut bc = BenchConfig::default();
    if let Some(m) = &cfg.model {
        bc.kinds = vec![m.parse()?];
    }
    bc.grid = positive("grid", cfg.grid.unwrap_or(bc.grid))?;
    bc.order = positive("order", cfg.order.unwrap_or(bc.order))?;
    bc.passes = passes.or(cfg.passes).unwrap_or(bc.passes);
    bc.warmup = cfg.warmup.unwrap_or(bc.warmup);
    bc.threads = cfg.threads.unwrap_or(bc.threads);
    bc.seed = cfg.seed.unwrap_or(bc.seed);
    if let Some(b) = cfg.batch_size {
        bc.base_batch = positive("batch_size", b)?;
    }
    if let Some(v) = cfg.batch_sizes.clone() {
        bc.batch_sizes = v;
    }
    if let Some(v) = cfg.hidden_dims.clone() {
        bc.hidden_dims = v;
    }
    if let Some(v) = cfg.depths.clone() {
        bc.depths = v;
    }
    if bc.batch_sizes.iter().chain(&bc.hidden_dims).chain(&bc.depths).any(|&v| v == 0) {
        return Err(KanError::config("batch_sizes/hidden_dims/depths", "entries must be >= 1"));
    }
    bc.validate()?;
    let out = cfg.out_dir("runs/bench");
    prepare_out(&out)?;
    write_manifest(&out, "bench-speed", bc.seed, &bc)?;
    let results = flops::bench_speed(&bc, |r| {
        println!(
            "{:<10} b={:<4} hidden={:<4} depth={} mean {:.3} ms (min {:.3}, std {:.3}) flops {}",
            r.kind,
            r.b,
            r.hidden,
            r.depth,
            r.mean_s * 1e3,
            r.min_s * 1e3,
            r.std_s * 1e3,
            r.flops
        )
    })?;
    flops::write_bench_csv(&out.join("bench.csv"), &results)
}

#[derive(Serialize)]
struct FlopsRow {
    kind: ModelKind,
    b: u64,
    d_in: u64,
    d_out: u64,
    g: u64,
    s: u64,
    flops: u64,
}

fn cmd_flops(cfg: FileConfig, b: u64, d_in: u64, d_out: u64) -> Result<()> {
    let g = positive("grid", cfg.grid.unwrap_or(8))? as u64;
    let s = positive("order", cfg.order.unwrap_or(3))? as u64;
    let mut rows = Vec::new();
    for kind in ModelKind::ALL {
        let f = flops::layer_flops(kind, b, d_in, d_out, g, s)?;
        println!("{kind:<10} {f}");
        rows.push(FlopsRow {
            kind,
            b,
            d_in,
            d_out,
            g,
            s,
            flops: f,
        });
    }
    if let Some(out) = &cfg.out {
        prepare_out(out)?;
        write_manifest(out, "flops", 0, &cfg)?;
        write_csv(&out.join("flops.csv"), rows)?;
    }
    Ok(())
}

fn cmd_layer_stats(cfg: FileConfig, samples: Option<usize>) -> Result<()> {
    let kind = cfg.model_kind(ModelKind::SineKan)?;
    let widths = cfg.widths.clone().unwrap_or_else(|| vec![1000; 6]);
    let grid = positive("grid", cfg.grid.unwrap_or(8))?;
    let order = positive("order", cfg.order.unwrap_or(3))?;
    let n = positive("samples", samples.or(cfg.samples).unwrap_or(100))?;
    let seed = cfg.seed.unwrap_or(0);
    let model = ModelStack::build(kind, &widths, grid, order, seed)?;
    let out = cfg.out_dir("runs/layer-stats");
    prepare_out(&out)?;
    write_manifest(&out, "layer-stats", seed, &cfg)?;
    let stats = layer_output_statistics(&model, n, seed)?;
    for s in &stats {
        println!("layer {} mean {:+.4} std {:.4} min {:+.3} max {:+.3}", s.layer, s.mean, s.std, s.min, s.max);
    }
    write_csv(&out.join(format!("layer_stats_{kind}.csv")), &stats)
}

#[derive(Serialize)]
struct PhaseReport {
    g_lo: usize,
    g_hi: usize,
    samples: usize,
    fitted: ScaleConstants,
    fitted_objective: f64,
    iterations: usize,
    converged: bool,
    reference: ScaleConstants,
    reference_objective: f64,
    unscaled_objective: f64,
}

fn cmd_fit_phase(cfg: FileConfig, g_lo: Option<usize>, g_hi: Option<usize>, samples: Option<usize>) -> Result<()> {
    let lo = positive("g_lo", g_lo.or(cfg.g_lo).unwrap_or(2))?;
    let hi = g_hi.or(cfg.g_hi).unwrap_or(30);
    if hi < lo {
        return Err(KanError::config("g_hi", "must be >= g_lo"));
    }
    let n = samples.or(cfg.samples).unwrap_or(1001);
    if n < 2 {
        return Err(KanError::config("samples", "must be >= 2"));
    }
    let out = cfg.out_dir("runs/phase");
    prepare_out(&out)?;
    write_manifest(&out, "fit-phase-constants", 0, &cfg)?;
    let xs = symmetric_samples(n);
    let fit = fit_scale_constants(lo, hi, &xs)?;
    let reference = ScaleConstants::default();
    let report = PhaseReport {
        g_lo: lo,
        g_hi: hi,
        samples: n,
        fitted: fit.constants,
        fitted_objective: fit.objective,
        iterations: fit.iterations,
        converged: fit.converged,
        reference,
        reference_objective: ratio_stats(lo, hi, &xs, &reference, true)?.objective,
        unscaled_objective: ratio_stats(lo, hi, &xs, &reference, false)?.objective,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| KanError::data(&out, e.to_string()))?;
    fs::write(out.join("phase_constants.json"), text + "\n")?;
    println!("{}", serde_json::to_string(&report).unwrap_or_default());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
