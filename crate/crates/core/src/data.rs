//! MNIST IDX loading and synthetic regression datasets.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KanError, Result};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const N_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "val",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationDataset {
    /// `[n, rows*cols]`, values in `[0, 1]`
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl ClassificationDataset {
    pub fn new(features: Tensor, labels: Vec<usize>, split: Split) -> Result<Self> {
        if features.ndim() != 2 || features.shape()[0] != labels.len() {
            return Err(KanError::shape(
                "dataset",
                format!("features {:?} with {} labels", features.shape(), labels.len()),
            ));
        }
        Ok(ClassificationDataset { features, labels, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.shape()[1]
    }

    /// Copies the rows at `idx` into a new `[idx.len(), n_features]` tensor.
    pub fn gather(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        let d = self.n_features();
        let src = self.features.data();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let x = Tensor::new(vec![idx.len(), d], data).expect("non-empty gather");
        (x, idx.iter().map(|&i| self.labels[i]).collect())
    }

    /// The first `n` samples (all of them when `n >= len`).
    pub fn head(&self, n: usize) -> ClassificationDataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        let (features, labels) = self.gather(&idx);
        ClassificationDataset { features, labels, split: self.split }
    }
}

fn open_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| KanError::data(path, e.to_string()))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| KanError::data(path, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| KanError::data(path, "truncated header"))
}

/// Reads an IDX image file and its label file; pixels are scaled by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<ClassificationDataset> {
    let img = open_maybe_gz(images_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(KanError::data(images_path, format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let d = rows * cols;
    if img.len() != 16 + n * d {
        return Err(KanError::data(
            images_path,
            format!("expected {} pixel bytes, found {}", n * d, img.len().saturating_sub(16)),
        ));
    }

    let lab = open_maybe_gz(labels_path)?;
    let magic = be_u32(&lab, 0, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(KanError::data(labels_path, format!("bad label magic {magic:#010x}")));
    }
    let nl = be_u32(&lab, 4, labels_path)? as usize;
    if nl != n {
        return Err(KanError::data(labels_path, format!("{nl} labels for {n} images")));
    }
    if lab.len() != 8 + n {
        return Err(KanError::data(labels_path, format!("expected {n} label bytes, found {}", lab.len().saturating_sub(8))));
    }
    let labels: Vec<usize> = lab[8..].iter().map(|&b| b as usize).collect();
    if n == 0 || d == 0 {
        return Err(KanError::data(images_path, "empty dataset"));
    }
    let features = Tensor::new(vec![n, d], img[16..].iter().map(|&p| p as f64 / 255.0).collect())?;
    ClassificationDataset::new(features, labels, split)
}

/// Writes raw (uncompressed) IDX image and label files.
pub fn write_idx(images_path: &Path, labels_path: &Path, rows: usize, cols: usize, pixels: &[u8], labels: &[u8]) -> Result<()> {
    let n = labels.len();
    if pixels.len() != n * rows * cols {
        return Err(KanError::invalid(format!("{} pixels for {n} images of {rows}x{cols}", pixels.len())));
    }
    let dim = |v: usize| u32::try_from(v).map_err(|_| KanError::invalid(format!("{v} does not fit in u32")));
    let mut w = BufWriter::new(File::create(images_path)?);
    for v in [IMAGE_MAGIC, dim(n)?, dim(rows)?, dim(cols)?] {
        w.write_all(&v.to_be_bytes())?;
    }
    w.write_all(pixels)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(labels_path)?);
    for v in [LABEL_MAGIC, dim(n)?] {
        w.write_all(&v.to_be_bytes())?;
    }
    w.write_all(labels)?;
    w.flush()?;
    Ok(())
}

/// Finds `stem` or `stem.gz` in `dir`.
fn find_idx(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(KanError::data(dir.join(stem), "MNIST file not found (raw or .gz)"))
}

/// Loads the standard MNIST train and test files from `dir`. The test set
/// serves as the validation split.
pub fn load_mnist(dir: &Path) -> Result<(ClassificationDataset, ClassificationDataset)> {
    let train = load_idx(
        &find_idx(dir, "train-images-idx3-ubyte")?,
        &find_idx(dir, "train-labels-idx1-ubyte")?,
        Split::Train,
    )?;
    let val = load_idx(
        &find_idx(dir, "t10k-images-idx3-ubyte")?,
        &find_idx(dir, "t10k-labels-idx1-ubyte")?,
        Split::Validation,
    )?;
    Ok((train, val))
}

/// Index batches for one epoch. The permutation depends only on
/// `(seed, epoch)`; the last batch may be short.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    idx.shuffle(&mut rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Shuffled mini-batches of `ds` for one epoch.
pub fn batch_iter(
    ds: &ClassificationDataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> impl Iterator<Item = (Tensor, Vec<usize>)> + '_ {
    batch_indices(ds.len(), batch_size, seed, epoch)
        .into_iter()
        .map(move |b| ds.gather(&b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub domain: (f64, f64),
}

impl RegressionDataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(x, y)` as `[n, 1]` tensors, restricted to `idx` when given.
    pub fn tensors(&self, idx: Option<&[usize]>) -> (Tensor, Tensor) {
        let all: Vec<usize>;
        let idx = match idx {
            Some(i) => i,
            None => {
                all = (0..self.len()).collect();
                &all
            }
        };
        let x = Tensor::new(vec![idx.len(), 1], idx.iter().map(|&i| self.x[i]).collect()).expect("non-empty");
        let y = Tensor::new(vec![idx.len(), 1], idx.iter().map(|&i| self.y[i]).collect()).expect("non-empty");
        (x, y)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| KanError::data(path, e.to_string()))?;
        w.write_record(["x", "y"]).map_err(|e| KanError::data(path, e.to_string()))?;
        for (x, y) in self.x.iter().zip(&self.y) {
            w.write_record([x.to_string(), y.to_string()])
                .map_err(|e| KanError::data(path, e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The six 1-D targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FunctionId {
    F,
    G,
    H,
    K,
    M,
    N,
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    // ln(1 + eˣ) without overflow for large x
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl FunctionId {
    pub const ALL: [FunctionId; 6] = [FunctionId::F, FunctionId::G, FunctionId::H, FunctionId::K, FunctionId::M, FunctionId::N];

    pub fn name(self) -> &'static str {
        match self {
            FunctionId::F => "f",
            FunctionId::G => "g",
            FunctionId::H => "h",
            FunctionId::K => "k",
            FunctionId::M => "m",
            FunctionId::N => "n",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            FunctionId::F => (10.0 * x + 0.5 + relu(x * x) * 10.0).tanh(),
            FunctionId::G => x.sin() + (5.0 * x).cos() * (-x * x).exp() + relu(x - 0.5),
            FunctionId::H => logistic(3.0 * x) + relu((2.0 * x).sin() + x.powi(3)),
            FunctionId::K => (5.0 * x - 2.0).tanh() + 3.0 * relu((x * x).cos()),
            FunctionId::M => softplus(x * x - 1.0) + (4.0 * x + 0.1).tanh(),
            FunctionId::N => (-x * x + 0.3 * x).exp() + relu((2.0 * x - 1.0).tanh()),
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionId {
    type Err = KanError;

    fn from_str(s: &str) -> Result<Self> {
        FunctionId::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| KanError::invalid(format!("unknown function id `{s}` (expected one of f, g, h, k, m, n)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// `n` evenly spaced points including both ends.
    Grid,
    /// `n` uniform draws, sorted.
    Random { seed: u64 },
}

pub fn gen_function_dataset(id: FunctionId, n_points: usize, domain: (f64, f64), sampling: Sampling) -> Result<RegressionDataset> {
    let (lo, hi) = domain;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(KanError::invalid(format!("bad domain [{lo}, {hi}]")));
    }
    if n_points < 2 {
        return Err(KanError::invalid("need at least two points"));
    }
    let x: Vec<f64> = match sampling {
        Sampling::Grid => (0..n_points)
            .map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64)
            .collect(),
        Sampling::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v: Vec<f64> = (0..n_points).map(|_| rng.random_range(lo..hi)).collect();
            v.sort_by(f64::total_cmp);
            v
        }
    };
    let y = x.iter().map(|&v| id.eval(v)).collect();
    Ok(RegressionDataset { x, y, domain })
}

/// Unit periods `[p, p+1)` over `[0, n_periods]` and the sets of periods
/// exposed at each stage.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodSchedule {
    pub intervals: Vec<(f64, f64)>,
    pub stages: Vec<Vec<usize>>,
}

impl PeriodSchedule {
    /// One period per stage, left to right.
    pub fn sequential(n_periods: usize) -> Self {
        PeriodSchedule {
            intervals: Self::unit_intervals(n_periods),
            stages: (0..n_periods).map(|p| vec![p]).collect(),
        }
    }

    /// Two periods per stage, two apart: (1,3), (2,4), (3,5), ...
    pub fn interleaved(n_periods: usize) -> Self {
        PeriodSchedule {
            intervals: Self::unit_intervals(n_periods),
            stages: (0..n_periods.saturating_sub(2)).map(|p| vec![p, p + 2]).collect(),
        }
    }

    fn unit_intervals(n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|p| (p as f64, (p + 1) as f64)).collect()
    }

    /// Index of the period containing `x`; the right end of the domain
    /// belongs to the last period.
    pub fn period_of(&self, x: f64) -> Option<usize> {
        let last = self.intervals.len().checked_sub(1)?;
        self.intervals
            .iter()
            .position(|&(a, b)| x >= a && x < b)
            .or_else(|| (x == self.intervals[last].1).then_some(last))
    }

    /// Points of `ds` that fall in the periods of `stage`.
    pub fn stage_indices(&self, ds: &RegressionDataset, stage: usize) -> Vec<usize> {
        let periods = &self.stages[stage];
        (0..ds.len())
            .filter(|&i| self.period_of(ds.x[i]).is_some_and(|p| periods.contains(&p)))
            .collect()
    }
}

/// A train of unit-period Gaussian bumps on `[0, n_periods)`,
/// `y = exp(-(frac(x) - 0.5)² / (2σ²))`, sampled at `points_per_period`
/// evenly spaced points per period.
pub fn gen_gaussian_wave(n_periods: usize, points_per_period: usize, peak_std: f64) -> Result<(RegressionDataset, PeriodSchedule)> {
    if n_periods < 2 {
        return Err(KanError::invalid("need at least two periods"));
    }
    if points_per_period == 0 || !(peak_std > 0.0) {
        return Err(KanError::invalid("points_per_period and peak_std must be positive"));
    }
    let mut x = Vec::with_capacity(n_periods * points_per_period);
    for p in 0..n_periods {
        for i in 0..points_per_period {
            x.push(p as f64 + i as f64 / points_per_period as f64);
        }
    }
    let y = x.iter().map(|&v| gaussian_wave(v, peak_std)).collect();
    Ok((
        RegressionDataset { x, y, domain: (0.0, n_periods as f64) },
        PeriodSchedule::sequential(n_periods),
    ))
}

pub fn gaussian_wave(x: f64, peak_std: f64) -> f64 {
    let d = x - x.floor() - 0.5;
    (-d * d / (2.0 * peak_std * peak_std)).exp()
}
