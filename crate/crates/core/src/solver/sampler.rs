//! Origin sampling for the stochastic variants.
//!
//! Each iteration draws from its own ChaCha8 stream (`stream = iteration`),
//! so a sample depends only on the seed and the iteration index.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::net::DemandMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    #[default]
    Uniform,
    /// Inclusion weight proportional to the origin's total demand.
    DemandWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub mode: SamplingMode,
    /// Fraction of origins drawn per iteration, in `(0, 1]`.
    pub fraction: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { mode: SamplingMode::Uniform, fraction: 0.1, seed: 0 }
    }
}

/// Origins drawn for one iteration, ascending, with their sampling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginSample {
    pub origins: Vec<usize>,
    /// `w_a` for each entry of `origins`: `1/n` (uniform) or `d_a / Σ d`.
    pub weights: Vec<f64>,
}

/// Round-half-up of `fraction · n`, clamped to `[1, n]`.
pub fn sample_size(fraction: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    ((fraction * n as f64 + 0.5).floor() as usize).clamp(1, n)
}

/// Per-iteration RNG for a run seed.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

#[derive(Debug, Clone)]
pub struct OriginSampler {
    config: SamplerConfig,
    weights: Vec<f64>,
    size: usize,
}

impl OriginSampler {
    pub fn new(config: SamplerConfig, demand: &DemandMatrix) -> Self {
        let n = demand.n_origins();
        let weights = match config.mode {
            SamplingMode::Uniform => vec![1.0 / n as f64; n],
            SamplingMode::DemandWeighted => {
                let total = demand.grand_total();
                demand.origins().iter().map(|o| o.total / total).collect()
            }
        };
        Self { config, weights, size: sample_size(config.fraction, n) }
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Number of origins drawn per iteration.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample(&self, iteration: u64) -> OriginSample {
        let n = self.weights.len();
        let mut rng = iteration_rng(self.config.seed, iteration);
        let mut origins = if self.size == n {
            (0..n).collect()
        } else {
            match self.config.mode {
                SamplingMode::Uniform => index::sample(&mut rng, n, self.size).into_vec(),
                SamplingMode::DemandWeighted => exponential_keys(&mut rng, &self.weights, self.size),
            }
        };
        origins.sort_unstable();
        let weights = origins.iter().map(|&a| self.weights[a]).collect();
        OriginSample { origins, weights }
    }
}

/// Weighted sampling without replacement: item `i` gets key `E_i / w_i` with
/// `E_i ~ Exp(1)`; the `k` smallest keys win.
pub fn exponential_keys<R: Rng + ?Sized>(rng: &mut R, weights: &[f64], k: usize) -> Vec<usize> {
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            // 1 - U lies in (0, 1], so the log is finite
            let e = -(1.0 - rng.random::<f64>()).ln();
            let key = if w > 0.0 { e / w } else { f64::INFINITY };
            (key, i)
        })
        .collect();
    keys.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keys.truncate(k);
    keys.into_iter().map(|(_, i)| i).collect()
}
