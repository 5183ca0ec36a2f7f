//! Seeded synthetic sources standing in for image crops.
//!
//! `smooth_field` samples are white Gaussian noise circularly convolved with a
//! Gaussian kernel `k_m ∝ exp(-m² / (2 ℓ²))`, `m` the circular distance, scaled
//! so `Σ k_m² = 1`. Every coordinate then has exactly the requested variance
//! and neighbouring coordinates are correlated over roughly `ℓ` positions.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{mix_seed, Matrix, SeededRng};

pub const DEFAULT_BATCH_SIZE: usize = 32;

const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    IidGaussian {
        variance: f64,
    },
    /// Each sample picks a component by weight; coordinates are then i.i.d.
    /// `N(mean_c, std_c²)`.
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        stds: Vec<f64>,
    },
    SmoothField {
        variance: f64,
        correlation_length: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub dim: usize,
    pub seed: u64,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be >= 1"));
        }
        match &self.kind {
            SourceKind::IidGaussian { variance } => {
                if !(*variance >= 0.0 && variance.is_finite()) {
                    return Err(Error::invalid("variance", "must be >= 0"));
                }
            }
            SourceKind::GaussianMixture {
                weights,
                means,
                stds,
            } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != stds.len() {
                    return Err(Error::invalid(
                        "mixture",
                        "weights, means and stds must have equal non-zero length",
                    ));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("mixture_weights", "must be >= 0 and sum to 1"));
                }
                if stds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(Error::invalid("mixture_stds", "must be > 0"));
                }
            }
            SourceKind::SmoothField {
                variance,
                correlation_length,
            } => {
                if !(*variance > 0.0 && variance.is_finite()) {
                    return Err(Error::invalid("variance", "must be > 0"));
                }
                if !(*correlation_length > 0.0 && correlation_length.is_finite()) {
                    return Err(Error::invalid("correlation_length", "must be > 0"));
                }
            }
        }
        Ok(())
    }

    /// Marginal variance of each coordinate.
    pub fn marginal_variance(&self) -> f64 {
        match &self.kind {
            SourceKind::IidGaussian { variance } | SourceKind::SmoothField { variance, .. } => *variance,
            SourceKind::GaussianMixture {
                weights,
                means,
                stds,
            } => {
                let mean: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
                weights
                    .iter()
                    .zip(means)
                    .zip(stds)
                    .map(|((w, m), s)| w * (s * s + (m - mean).powi(2)))
                    .sum()
            }
        }
    }
}

/// An infinite seeded stream of samples from one source.
#[derive(Debug, Clone)]
pub struct DataStream {
    spec: SourceSpec,
    rng: SeededRng,
    kernel: Vec<f64>,
}

impl DataStream {
    pub fn new(spec: SourceSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let kernel = match &spec.kind {
            SourceKind::SmoothField {
                variance,
                correlation_length,
            } => ring_kernel(spec.dim, *correlation_length, *variance),
            _ => Vec::new(),
        };
        Ok(Self {
            spec,
            rng: SeededRng::new(seed),
            kernel,
        })
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    /// Number of random values consumed so far.
    pub fn draws(&self) -> u64 {
        self.rng.draws()
    }

    pub fn next_batch(&mut self, batch_size: usize) -> Result<Matrix> {
        if batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        let dim = self.spec.dim;
        let mut out = Matrix::zeros(batch_size, dim);
        let mut noise = vec![0.0; dim];
        for r in 0..batch_size {
            let row = out.row_mut(r);
            match &self.spec.kind {
                SourceKind::IidGaussian { variance } => {
                    let std = variance.sqrt();
                    for v in row.iter_mut() {
                        *v = std * self.rng.standard_normal();
                    }
                }
                SourceKind::GaussianMixture {
                    weights,
                    means,
                    stds,
                } => {
                    let u = self.rng.uniform();
                    let mut acc = 0.0;
                    let mut c = weights.len() - 1;
                    for (i, w) in weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            c = i;
                            break;
                        }
                    }
                    for v in row.iter_mut() {
                        *v = means[c] + stds[c] * self.rng.standard_normal();
                    }
                }
                SourceKind::SmoothField { .. } => {
                    for n in noise.iter_mut() {
                        *n = self.rng.standard_normal();
                    }
                    for (i, v) in row.iter_mut().enumerate() {
                        *v = (0..dim)
                            .map(|j| self.kernel[(i + dim - j) % dim] * noise[j])
                            .sum();
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Circular Gaussian kernel scaled to give output variance `variance`.
fn ring_kernel(dim: usize, length: f64, variance: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim)
        .map(|m| {
            let d = m.min(dim - m) as f64;
            (-d * d / (2.0 * length * length)).exp()
        })
        .collect();
    let energy: f64 = raw.iter().map(|k| k * k).sum();
    let scale = (variance / energy).sqrt();
    raw.into_iter().map(|k| k * scale).collect()
}

/// Draws one batch from a fresh stream seeded by `rng`.
pub fn make_batch(spec: &SourceSpec, rng: &mut SeededRng, batch_size: usize) -> Result<Matrix> {
    let seed = rng.uniform().to_bits();
    DataStream::new(spec.clone(), seed)?.next_batch(batch_size)
}

/// Independent train and eval streams, seeded by mixing the spec seed with
/// fixed stream ids through splitmix64.
pub fn train_eval_split(spec: &SourceSpec) -> Result<(DataStream, DataStream)> {
    Ok((
        DataStream::new(spec.clone(), mix_seed(spec.seed, TRAIN_STREAM))?,
        DataStream::new(spec.clone(), mix_seed(spec.seed, EVAL_STREAM))?,
    ))
}

/// A fixed training set visited in reshuffled epochs.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    samples: Matrix,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    shuffle: SeededRng,
}

impl TrainingSet {
    pub fn new(stream: &mut DataStream, size: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || size < batch_size {
            return Err(Error::invalid(
                "train_set_size",
                format!("must be >= batch_size ({batch_size}), got {size}"),
            ));
        }
        let samples = stream.next_batch(size)?;
        let mut shuffle = SeededRng::new(mix_seed(seed, SHUFFLE_STREAM));
        let mut order: Vec<usize> = (0..size).collect();
        shuffle.shuffle(&mut order);
        Ok(Self {
            samples,
            batch_size,
            order,
            cursor: 0,
            epoch: 0,
            shuffle,
        })
    }

    /// Full batches per pass over the set.
    pub fn steps_per_epoch(&self) -> u64 {
        (self.samples.rows() / self.batch_size) as u64
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn next_batch(&mut self) -> Matrix {
        if self.cursor + self.batch_size > self.order.len() {
            self.shuffle.shuffle(&mut self.order);
            self.cursor = 0;
            self.epoch += 1;
        }
        let idx = &self.order[self.cursor..self.cursor + self.batch_size];
        self.cursor += self.batch_size;
        self.samples.select_rows(idx)
    }
}

/// Writes a batch as CSV with header `x0,x1,...`.
pub fn write_batch_csv(path: &Path, batch: &Matrix) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..batch.cols()).map(|i| format!("x{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in batch.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
