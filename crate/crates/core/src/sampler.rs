//! Bernoulli reward environment and per-arm confidence statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::BanditInstance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("confidence radius needs at least one sample")]
    NoSamples,
    #[error("tolerance {0} outside (0, 1]")]
    BadTolerance(f64),
}

/// Error tolerance `delta` together with the precomputed `ln(1/delta)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    delta: f64,
    half_log_inv: f64,
}

impl Tolerance {
    pub fn new(delta: f64) -> Result<Self, SamplerError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(SamplerError::BadTolerance(delta));
        }
        Ok(Self {
            delta,
            half_log_inv: 0.5 * (1.0 / delta).ln(),
        })
    }

    /// Default run tolerance `K^2 / T^2`.
    pub fn for_horizon(num_arms: usize, horizon: u64) -> Result<Self, SamplerError> {
        let ratio = num_arms as f64 / horizon as f64;
        Self::new(ratio * ratio)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn log_delta(&self) -> f64 {
        -2.0 * self.half_log_inv
    }

    #[inline]
    fn radius(&self, n: u64) -> f64 {
        (self.half_log_inv / n as f64).sqrt()
    }
}

/// Confidence radius `sqrt(ln(1/delta) / (2n))`.
pub fn beta(n: u64, delta: f64) -> Result<f64, SamplerError> {
    if n == 0 {
        return Err(SamplerError::NoSamples);
    }
    Ok(Tolerance::new(delta)?.radius(n))
}

/// Running statistics of one arm. Before the first sample every field is 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmState {
    pub n: u64,
    pub successes: u64,
    pub mu_hat: f64,
    pub ucb: f64,
    pub lcb: f64,
}

impl ArmState {
    /// Recomputes the estimate and both bounds from `n` and `successes`.
    pub fn from_counts(n: u64, successes: u64, tol: &Tolerance) -> Self {
        let mut s = Self {
            n,
            successes,
            ..Self::default()
        };
        s.refresh(tol);
        s
    }

    #[inline]
    pub fn record(&mut self, reward: bool, tol: &Tolerance) {
        self.n += 1;
        self.successes += u64::from(reward);
        self.refresh(tol);
    }

    /// Value-semantics form of [`ArmState::record`].
    pub fn update(self, reward: bool, tol: &Tolerance) -> Self {
        let mut next = self;
        next.record(reward, tol);
        next
    }

    #[inline]
    fn refresh(&mut self, tol: &Tolerance) {
        if self.n == 0 {
            *self = Self::default();
            return;
        }
        let mean = self.successes as f64 / self.n as f64;
        let r = tol.radius(self.n);
        self.mu_hat = mean;
        self.ucb = mean + r;
        self.lcb = mean - r;
    }

    pub fn failures(&self) -> u64 {
        self.n - self.successes
    }
}

/// Bernoulli rewards for one run. Each arm draws from its own ChaCha8 stream
/// (stream id = arm index) keyed by the run seed, so an arm's `j`-th reward
/// does not depend on the order in which a policy visits arms.
#[derive(Debug, Clone)]
pub struct RewardEnvironment {
    means: Vec<f64>,
    streams: Vec<ChaCha8Rng>,
}

impl RewardEnvironment {
    pub fn new(instance: &BanditInstance, seed: u64) -> Self {
        let streams = (0..instance.num_arms())
            .map(|arm| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(arm as u64);
                rng
            })
            .collect();
        Self {
            means: instance.means().to_vec(),
            streams,
        }
    }

    #[inline]
    pub fn sample(&mut self, arm: usize) -> bool {
        self.streams[arm].random::<f64>() < self.means[arm]
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }
}
