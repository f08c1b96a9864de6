//! Comparison policies: explore-then-commit, UCB and Thompson sampling with
//! an empirically feasible set, and a two-phase policy that identifies the
//! best arm by successive elimination before testing candidates in cost
//! order.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::policy::{cheapest_feasible, Policy};
use crate::sampler::{ArmState, SamplerError, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    EtcCs,
    UcbCs,
    TsCs,
    PeCs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub etc_budget_fraction: f64,
    pub delta: f64,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, delta: f64) -> Self {
        Self {
            kind,
            etc_budget_fraction: 0.2,
            delta,
        }
    }
}

/// Builds the baseline policy described by `config`. `seed` only feeds the
/// posterior draws of Thompson sampling.
pub fn build_baseline(
    config: &BaselineConfig,
    num_arms: usize,
    alpha: f64,
    horizon: u64,
    seed: u64,
) -> Result<Box<dyn Policy>, SamplerError> {
    Ok(match config.kind {
        BaselineKind::EtcCs => Box::new(EtcCs::new(
            num_arms,
            alpha,
            horizon,
            config.etc_budget_fraction,
        )),
        BaselineKind::UcbCs => Box::new(UcbCs::new(num_arms, alpha)),
        BaselineKind::TsCs => Box::new(TsCs::new(num_arms, alpha, seed)),
        BaselineKind::PeCs => Box::new(PeCsStyle::new(num_arms, alpha, config.delta)?),
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    n: u64,
    successes: u64,
}

impl Tally {
    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.successes as f64 / self.n as f64
        }
    }

    fn record(&mut self, reward: bool) {
        self.n += 1;
        self.successes += u64::from(reward);
    }
}

/// Round-robin for `floor(fraction * T)` steps, then commits to the cheapest
/// arm whose empirical mean clears `(1 - alpha)` times the best one.
#[derive(Debug, Clone)]
pub struct EtcCs {
    alpha: f64,
    budget: u64,
    tallies: Vec<Tally>,
    committed: Option<usize>,
}

impl EtcCs {
    pub fn new(num_arms: usize, alpha: f64, horizon: u64, budget_fraction: f64) -> Self {
        assert!(budget_fraction > 0.0 && budget_fraction < 1.0);
        Self {
            alpha,
            budget: (budget_fraction * horizon as f64).floor() as u64,
            tallies: vec![Tally::default(); num_arms],
            committed: None,
        }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn committed(&self) -> Option<usize> {
        self.committed
    }
}

/// Commit rule shared by ETC-CS: cheapest arm with `mean >= (1-alpha) max`.
pub fn etc_commit_rule(empirical_means: &[f64], alpha: f64) -> usize {
    cheapest_feasible(empirical_means, alpha)
}

impl Policy for EtcCs {
    fn next_arm(&mut self, t: u64) -> usize {
        if t < self.budget {
            return (t % self.tallies.len() as u64) as usize;
        }
        *self.committed.get_or_insert_with(|| {
            let means: Vec<f64> = self.tallies.iter().map(Tally::mean).collect();
            etc_commit_rule(&means, self.alpha)
        })
    }

    fn observe(&mut self, arm: usize, reward: bool) {
        self.tallies[arm].record(reward);
    }
}

/// UCB index `mu_hat + sqrt(2 ln t / n)`; plays the cheapest arm whose index
/// clears `(1 - alpha)` times the largest index.
#[derive(Debug, Clone)]
pub struct UcbCs {
    alpha: f64,
    tallies: Vec<Tally>,
    init: VecDeque<usize>,
    indices: Vec<f64>,
}

impl UcbCs {
    pub fn new(num_arms: usize, alpha: f64) -> Self {
        Self {
            alpha,
            tallies: vec![Tally::default(); num_arms],
            init: (0..num_arms).collect(),
            indices: vec![0.0; num_arms],
        }
    }
}

pub fn ucb_cs_index(mu_hat: f64, n: u64, t: u64) -> f64 {
    mu_hat + (2.0 * (t as f64).ln() / n as f64).sqrt()
}

impl Policy for UcbCs {
    fn next_arm(&mut self, t: u64) -> usize {
        if let Some(arm) = self.init.pop_front() {
            return arm;
        }
        for (idx, tally) in self.indices.iter_mut().zip(&self.tallies) {
            *idx = ucb_cs_index(tally.mean(), tally.n, t);
        }
        cheapest_feasible(&self.indices, self.alpha)
    }

    fn observe(&mut self, arm: usize, reward: bool) {
        self.tallies[arm].record(reward);
    }
}

/// Thompson sampling with Beta(1, 1) priors and an empirically feasible set
/// built from the posterior draws.
#[derive(Debug, Clone)]
pub struct TsCs {
    alpha: f64,
    tallies: Vec<Tally>,
    rng: ChaCha8Rng,
    draws: Vec<f64>,
}

impl TsCs {
    pub fn new(num_arms: usize, alpha: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Reward streams use ids 0..K; keep posterior draws on their own.
        rng.set_stream(u64::MAX);
        Self {
            alpha,
            tallies: vec![Tally::default(); num_arms],
            rng,
            draws: vec![0.0; num_arms],
        }
    }
}

impl Policy for TsCs {
    fn next_arm(&mut self, _t: u64) -> usize {
        for (draw, tally) in self.draws.iter_mut().zip(&self.tallies) {
            let a = 1.0 + tally.successes as f64;
            let b = 1.0 + (tally.n - tally.successes) as f64;
            *draw = Beta::new(a, b)
                .expect("posterior parameters are at least 1")
                .sample(&mut self.rng);
        }
        cheapest_feasible(&self.draws, self.alpha)
    }

    fn observe(&mut self, arm: usize, reward: bool) {
        self.tallies[arm].record(reward);
    }
}

/// Drops every arm whose UCB falls below the best LCB among `active`.
pub fn successive_elimination(active: &[usize], states: &[ArmState]) -> Vec<usize> {
    let best_lcb = active
        .iter()
        .map(|&i| states[i].lcb)
        .fold(f64::NEG_INFINITY, f64::max);
    active
        .iter()
        .copied()
        .filter(|&i| states[i].ucb >= best_lcb)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeCsPhase {
    /// Round-robin with successive elimination over the surviving arms.
    Identify,
    /// Pairwise tests of cost-ordered candidates against the identified arm.
    Compare {
        best: usize,
        candidate: usize,
    },
    Committed(usize),
}

/// Two-phase policy: identify the best arm, then walk candidates in cost
/// order against it.
#[derive(Debug, Clone)]
pub struct PeCsStyle {
    alpha: f64,
    tol: Tolerance,
    arms: Vec<ArmState>,
    active: Vec<usize>,
    queue: VecDeque<usize>,
    phase: PeCsPhase,
}

impl PeCsStyle {
    pub fn new(num_arms: usize, alpha: f64, delta: f64) -> Result<Self, SamplerError> {
        Ok(Self {
            alpha,
            tol: Tolerance::new(delta)?,
            arms: vec![ArmState::default(); num_arms],
            active: (0..num_arms).collect(),
            queue: (0..num_arms).collect(),
            phase: PeCsPhase::Identify,
        })
    }

    pub fn phase(&self) -> PeCsPhase {
        self.phase
    }

    pub fn arm_states(&self) -> &[ArmState] {
        &self.arms
    }

    fn compare_step(&mut self, best: usize, mut candidate: usize) -> usize {
        let keep = 1.0 - self.alpha;
        loop {
            if candidate >= self.arms.len() {
                self.phase = PeCsPhase::Committed(best);
                return best;
            }
            let (c, b) = (&self.arms[candidate], &self.arms[best]);
            if c.lcb >= keep * b.ucb {
                self.phase = PeCsPhase::Committed(candidate);
                return candidate;
            }
            if c.ucb < keep * b.lcb {
                candidate += 1;
                continue;
            }
            self.phase = PeCsPhase::Compare { best, candidate };
            return if self.arms[candidate].n <= self.arms[best].n {
                candidate
            } else {
                best
            };
        }
    }
}

impl Policy for PeCsStyle {
    fn next_arm(&mut self, _t: u64) -> usize {
        match self.phase {
            PeCsPhase::Committed(arm) => arm,
            PeCsPhase::Compare { best, candidate } => self.compare_step(best, candidate),
            PeCsPhase::Identify => {
                if let Some(arm) = self.queue.pop_front() {
                    return arm;
                }
                self.active = successive_elimination(&self.active, &self.arms);
                if let [best] = self.active[..] {
                    return self.compare_step(best, 0);
                }
                self.queue.extend(self.active.iter().copied());
                self.queue
                    .pop_front()
                    .expect("at least one arm survives elimination")
            }
        }
    }

    fn observe(&mut self, arm: usize, reward: bool) {
        self.arms[arm].record(reward, &self.tol);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::BanditInstance;
    use crate::sampler::RewardEnvironment;

    const NU2: [f64; 12] = [
        0.44, 0.46, 0.48, 0.7, 0.71, 0.704, 0.714, 0.702, 0.716, 0.708, 0.712, 0.706,
    ];

    #[test]
    fn etc_round_robin_then_commit() {
        let mut p = EtcCs::new(4, 0.3, 100, 0.2);
        assert_eq!(p.budget(), 20);
        for t in 0..20 {
            assert_eq!(p.next_arm(t), (t % 4) as usize);
            p.observe((t % 4) as usize, t % 4 == 2);
        }
        assert_eq!(p.next_arm(20), 2);
        assert_eq!(p.next_arm(21), 2);
        assert_eq!(etc_commit_rule(&NU2, 0.3), 3);
    }

    #[test]
    fn etc_near_full_budget_is_uniform() {
        let mut p = EtcCs::new(3, 0.5, 1000, 0.999);
        let mut counts = [0u64; 3];
        for t in 0..999 {
            let arm = p.next_arm(t);
            counts[arm] += 1;
            p.observe(arm, false);
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn feasible_set_rule() {
        assert_eq!(cheapest_feasible(&[0.4, 0.4, 0.4], 0.3), 0);
        // 0.5 < 0.7 * 1.0
        assert_eq!(cheapest_feasible(&[0.5, 1.0], 0.3), 1);
        assert_eq!(cheapest_feasible(&[0.7, 1.0], 0.3), 0);
    }

    #[test]
    fn ucb_cs_initializes_then_uses_indices() {
        let mut p = UcbCs::new(3, 0.3);
        for t in 0..3 {
            assert_eq!(p.next_arm(t), t as usize);
            p.observe(t as usize, true);
        }
        // Equal statistics: every index ties, cheapest wins.
        assert_eq!(p.next_arm(3), 0);
        assert!(
            (ucb_cs_index(0.5, 8, 100) - (0.5 + (2.0 * 100f64.ln() / 8.0).sqrt())).abs() < 1e-15
        );
    }

    #[test]
    fn ts_cs_prefers_confident_feasible_arm() {
        let mut p = TsCs::new(2, 0.1, 17);
        p.tallies[0] = Tally {
            n: 1008,
            successes: 9,
        }; // Beta(10, 1000)
        p.tallies[1] = Tally {
            n: 1009,
            successes: 999,
        }; // Beta(1000, 10)
        let picks = (0..10_000).filter(|&t| p.next_arm(t) == 1).count();
        assert!(picks as f64 / 10_000.0 > 0.99);
    }

    #[test]
    fn successive_elimination_exact_means() {
        let tol = Tolerance::new(1e-6).unwrap();
        let states: Vec<ArmState> = NU2
            .iter()
            .map(|&m| ArmState::from_counts(1_000_000_000_000, (m * 1e12).round() as u64, &tol))
            .collect();
        let survivors = successive_elimination(&(0..12).collect::<Vec<_>>(), &states);
        assert_eq!(survivors, vec![8]);
    }

    #[test]
    fn pe_cs_compare_branches() {
        let tol = Tolerance::new(1e-3).unwrap();
        let mut p = PeCsStyle::new(3, 0.3, 1e-3).unwrap();
        p.arms = vec![
            ArmState::from_counts(10_000, 1_000, &tol),
            ArmState::from_counts(10_000, 8_000, &tol),
            ArmState::from_counts(10_000, 9_000, &tol),
        ];
        // arm 0: UCB ~0.12 < 0.7 * LCB_2 ~0.62 -> rejected; arm 1 LCB ~0.79 >= 0.7 * 0.91
        assert_eq!(p.compare_step(2, 0), 1);
        assert_eq!(p.phase(), PeCsPhase::Committed(1));

        let mut p = PeCsStyle::new(2, 0.999, 1e-3).unwrap();
        p.arms = vec![
            ArmState::from_counts(100, 50, &tol),
            ArmState::from_counts(1, 1, &tol),
        ];
        assert_eq!(p.compare_step(1, 0), 0);
        assert_eq!(p.phase(), PeCsPhase::Committed(0));
    }

    fn run_counts(
        policy: &mut dyn Policy,
        inst: &BanditInstance,
        horizon: u64,
        seed: u64,
    ) -> Vec<u64> {
        let mut env = RewardEnvironment::new(inst, seed);
        let mut counts = vec![0; inst.num_arms()];
        for t in 0..horizon {
            let arm = policy.next_arm(t);
            counts[arm] += 1;
            policy.observe(arm, env.sample(arm));
        }
        counts
    }

    #[test]
    fn every_baseline_spends_the_horizon_deterministically() {
        let inst = BanditInstance::new(vec![0.3, 0.6, 0.9], vec![1.0, 2.0, 3.0], 0.4).unwrap();
        for kind in [
            BaselineKind::EtcCs,
            BaselineKind::UcbCs,
            BaselineKind::TsCs,
            BaselineKind::PeCs,
        ] {
            let config = BaselineConfig::new(kind, 1e-4);
            let mut a = build_baseline(&config, 3, 0.4, 5000, 8).unwrap();
            let mut b = build_baseline(&config, 3, 0.4, 5000, 8).unwrap();
            let ca = run_counts(a.as_mut(), &inst, 5000, 8);
            let cb = run_counts(b.as_mut(), &inst, 5000, 8);
            assert_eq!(ca.iter().sum::<u64>(), 5000);
            assert_eq!(ca, cb, "{kind:?}");
        }
    }

    #[test]
    fn pe_cs_finds_optimal_on_easy_instance() {
        let inst = BanditInstance::new(vec![0.1, 0.6, 0.9], vec![1.0, 2.0, 3.0], 0.4).unwrap();
        let mut p = PeCsStyle::new(3, 0.4, 1e-6).unwrap();
        run_counts(&mut p, &inst, 50_000, 2);
        assert_eq!(p.phase(), PeCsPhase::Committed(1));
    }
}
