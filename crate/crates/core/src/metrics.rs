//! Cost and quality regret, accumulated per timestep and recomputed from
//! sample counts.
//!
//! Both routes sum exactly and round once, so they agree bit for bit no
//! matter how the increments were ordered.

use serde::Serialize;

use crate::instance::InstanceAnalysis;

const LIMB_BITS: u32 = 32;
const LIMB_MASK: i64 = (1 << LIMB_BITS) - 1;
// Bit 0 has weight 2^-1074; finite doubles reach bit 2098, plus carry room.
const NUM_LIMBS: usize = 68;
const RENORMALIZE_EVERY: u32 = 1 << 30;

/// Exact sum of finite doubles, rounded to nearest (ties to even) on read.
///
/// Each limb holds a signed multiple of 2^(32 i - 1074). Adds touch at most
/// three limbs and carries are propagated lazily.
#[derive(Clone, Debug)]
pub struct ExactSum {
    limbs: [i64; NUM_LIMBS],
    pending_adds: u32,
}

impl Default for ExactSum {
    fn default() -> Self {
        Self {
            limbs: [0; NUM_LIMBS],
            pending_adds: 0,
        }
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        assert!(x.is_finite(), "ExactSum only accepts finite values");
        if x == 0.0 {
            return;
        }
        let bits = x.to_bits();
        let exp_field = ((bits >> 52) & 0x7ff) as u32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, pos) = if exp_field == 0 {
            (frac, 0)
        } else {
            (frac | (1u64 << 52), exp_field - 1)
        };
        let sign: i64 = if bits >> 63 == 1 { -1 } else { 1 };
        let idx = (pos / LIMB_BITS) as usize;
        let wide = (mant as u128) << (pos % LIMB_BITS);
        for j in 0..3 {
            let chunk = ((wide >> (LIMB_BITS * j as u32)) as i64) & LIMB_MASK;
            self.limbs[idx + j] += sign * chunk;
        }
        self.pending_adds += 1;
        if self.pending_adds >= RENORMALIZE_EVERY {
            self.normalize();
        }
    }

    /// Adds `x * n` exactly (`n <= 2^53`).
    pub fn add_product(&mut self, x: f64, n: u64) {
        assert!(n <= 1 << 53);
        let nf = n as f64;
        let p = x * nf;
        let e = x.mul_add(nf, -p);
        self.add(p);
        self.add(e);
    }

    fn normalize(&mut self) {
        let mut carry = 0i64;
        for limb in self.limbs.iter_mut().take(NUM_LIMBS - 1) {
            let total = *limb + carry;
            let low = total & LIMB_MASK;
            carry = (total - low) >> LIMB_BITS;
            *limb = low;
        }
        self.limbs[NUM_LIMBS - 1] += carry;
        self.pending_adds = 0;
    }

    pub fn value(&self) -> f64 {
        let mut acc = self.clone();
        acc.normalize();
        let negative = acc.limbs[NUM_LIMBS - 1] < 0;
        if negative {
            for limb in acc.limbs.iter_mut() {
                *limb = -*limb;
            }
            acc.normalize();
        }
        let magnitude = acc.round_magnitude();
        if negative {
            -magnitude
        } else {
            magnitude
        }
    }

    fn bit(&self, i: usize) -> u64 {
        ((self.limbs[i / 32] >> (i % 32)) & 1) as u64
    }

    fn round_magnitude(&self) -> f64 {
        debug_assert!(self.limbs[NUM_LIMBS - 1] < (1 << LIMB_BITS));
        let Some(top_limb) = self.limbs.iter().rposition(|&l| l != 0) else {
            return 0.0;
        };
        let high = top_limb * 32 + (63 - self.limbs[top_limb].leading_zeros() as usize);
        if high < 53 {
            let m = (0..=high).fold(0u64, |m, i| m | (self.bit(i) << i));
            return m as f64 * f64::from_bits(1);
        }
        let low = high - 52;
        let mut mant = (low..=high).fold(0u64, |m, i| m | (self.bit(i) << (i - low)));
        let round = self.bit(low - 1) == 1;
        let sticky = (0..low - 1).any(|i| self.bit(i) == 1);
        let mut pos = low;
        if round && (sticky || mant & 1 == 1) {
            mant += 1;
            if mant == 1 << 53 {
                mant >>= 1;
                pos += 1;
            }
        }
        let exp_field = pos as u64 + 1;
        if exp_field >= 0x7ff {
            return f64::INFINITY;
        }
        f64::from_bits((exp_field << 52) | (mant & ((1 << 52) - 1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: u64,
    pub cost_regret: f64,
    pub quality_regret: f64,
}

/// Zero-clipped regret of a single run.
#[derive(Debug, Clone)]
pub struct RegretAccumulator {
    cost_increments: Vec<f64>,
    quality_increments: Vec<f64>,
    cost: ExactSum,
    quality: ExactSum,
    counts: Vec<u64>,
    t: u64,
    grid: Vec<u64>,
    next_checkpoint: usize,
    checkpoints: Vec<Checkpoint>,
    decomposition_mismatches: u64,
    analysis: InstanceAnalysis,
}

impl RegretAccumulator {
    /// `grid` lists the sample counts (ascending) at which to checkpoint.
    pub fn new(analysis: &InstanceAnalysis, grid: Vec<u64>) -> Self {
        let k = analysis.num_arms();
        Self {
            cost_increments: (0..k).map(|i| analysis.clipped_cost_gap(i)).collect(),
            quality_increments: (0..k).map(|i| analysis.clipped_quality_gap(i)).collect(),
            cost: ExactSum::new(),
            quality: ExactSum::new(),
            counts: vec![0; k],
            t: 0,
            checkpoints: Vec::with_capacity(grid.len()),
            grid,
            next_checkpoint: 0,
            decomposition_mismatches: 0,
            analysis: analysis.clone(),
        }
    }

    #[inline]
    pub fn record(&mut self, arm: usize) {
        self.counts[arm] += 1;
        self.t += 1;
        let c = self.cost_increments[arm];
        if c != 0.0 {
            self.cost.add(c);
        }
        let q = self.quality_increments[arm];
        if q != 0.0 {
            self.quality.add(q);
        }
        if self.grid.get(self.next_checkpoint) == Some(&self.t) {
            self.take_checkpoint();
        }
    }

    fn take_checkpoint(&mut self) {
        let cp = Checkpoint {
            t: self.t,
            cost_regret: self.cost.value(),
            quality_regret: self.quality.value(),
        };
        let (cost, quality) = regret_from_counts(&self.counts, &self.analysis);
        if cost.to_bits() != cp.cost_regret.to_bits()
            || quality.to_bits() != cp.quality_regret.to_bits()
        {
            self.decomposition_mismatches += 1;
        }
        self.checkpoints.push(cp);
        self.next_checkpoint += 1;
    }

    pub fn cost_regret(&self) -> f64 {
        self.cost.value()
    }

    pub fn quality_regret(&self) -> f64 {
        self.quality.value()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn samples(&self) -> u64 {
        self.t
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    /// Checkpoints where the count-based route disagreed with the running
    /// sums.
    pub fn decomposition_mismatches(&self) -> u64 {
        self.decomposition_mismatches
    }

    pub fn into_checkpoints(self) -> Vec<Checkpoint> {
        self.checkpoints
    }
}

/// `(sum_k max(c_k - c_{a*}, 0) n_k, sum_k max(mu_cs - mu_k, 0) n_k)`, arms
/// ascending.
pub fn regret_from_counts(counts: &[u64], analysis: &InstanceAnalysis) -> (f64, f64) {
    let mut cost = ExactSum::new();
    let mut quality = ExactSum::new();
    for (k, &n) in counts.iter().enumerate() {
        cost.add_product(analysis.clipped_cost_gap(k), n);
        quality.add_product(analysis.clipped_quality_gap(k), n);
    }
    (cost.value(), quality.value())
}

/// About `count` log-spaced sample counts in `[1, horizon]`, always ending at
/// `horizon`.
pub fn log_checkpoint_grid(horizon: u64, count: usize) -> Vec<u64> {
    if horizon == 0 || count == 0 {
        return Vec::new();
    }
    let mut grid: Vec<u64> = if count == 1 {
        vec![horizon]
    } else {
        let log_t = (horizon as f64).ln();
        (0..count)
            .map(|i| {
                let frac = i as f64 / (count - 1) as f64;
                ((frac * log_t).exp().round() as u64).clamp(1, horizon)
            })
            .collect()
    };
    grid.push(horizon);
    grid.sort_unstable();
    grid.dedup();
    grid
}
