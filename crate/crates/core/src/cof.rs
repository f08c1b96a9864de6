//! Cost-ordered feasibility (COF).
//!
//! Candidates are visited cheapest first. For candidate `ell` the gating set
//! holds every costlier arm whose subsidized UCB still reaches `LCB_ell`; an
//! empty gating set certifies `ell` feasible and the policy commits to it.
//! Otherwise each arm contributes an error probability `eps_{k,ell}` and the
//! candidate is rejected once their product drops to `delta`. Between
//! verdicts the candidate is sampled alone while it trails the gating arms
//! (exclusive sampling), or together with the gating arms that may still be
//! the best-reward arm (BAI filter).
//!
//! Sampling happens one arm per timestep. A decision pass that picks several
//! arms queues them (candidate first, then gating arms by index) and the
//! queue drains over the following timesteps before the next pass.

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;

use crate::policy::Policy;
use crate::sampler::{ArmState, SamplerError, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CofConfig {
    pub delta: f64,
    pub combine_samples: bool,
    pub exclusive_sampling: bool,
}

impl CofConfig {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            combine_samples: true,
            exclusive_sampling: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    DeemedInfeasible,
    DeemedFeasible,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::DeemedInfeasible => "deemed_infeasible",
            Verdict::DeemedFeasible => "deemed_feasible",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EpisodeEvent {
    /// Samples taken before the verdict.
    pub time: u64,
    pub arm: usize,
    pub kind: Verdict,
}

/// Counters collected on every decision pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CofDiagnostics {
    pub decision_passes: u64,
    /// Passes where some single `eps_{k,ell} <= delta`.
    pub single_arm_fires: u64,
    /// Passes where a single arm fired but the product test did not.
    pub implication_violations: u64,
    /// The candidate ran past the last arm.
    pub candidate_overflows: u64,
}

/// Costlier arms whose subsidized UCB reaches the candidate's LCB.
pub fn gating_set(states: &[ArmState], ell: usize, alpha: f64) -> Vec<usize> {
    let mut out = Vec::new();
    gating_set_into(states, ell, alpha, &mut out);
    out
}

fn gating_set_into(states: &[ArmState], ell: usize, alpha: f64, out: &mut Vec<usize>) {
    out.clear();
    let lcb = states[ell].lcb;
    let keep = 1.0 - alpha;
    out.extend((ell + 1..states.len()).filter(|&i| keep * states[i].ucb >= lcb));
}

/// `ln eps_{k,ell}`: `-2 n_k (mu_hat_k - UCB_ell/(1-alpha))^2` when the
/// estimate exceeds the inflated UCB, otherwise 0.
#[inline]
pub fn log_epsilon(n_k: u64, mu_hat_k: f64, ucb_ell: f64, alpha: f64) -> f64 {
    let inflated = ucb_ell / (1.0 - alpha);
    if mu_hat_k > inflated {
        let gap = mu_hat_k - inflated;
        -2.0 * n_k as f64 * gap * gap
    } else {
        0.0
    }
}

/// Upper bound on the probability that `mu_ell > (1 - alpha) mu_k`.
pub fn epsilon(n_k: u64, mu_hat_k: f64, ucb_ell: f64, alpha: f64) -> f64 {
    log_epsilon(n_k, mu_hat_k, ucb_ell, alpha).exp()
}

/// Sums `ln eps_{k,ell}` over all arms and also returns the smallest term.
fn log_epsilon_summary(states: &[ArmState], ell: usize, alpha: f64) -> (f64, f64) {
    let ucb_ell = states[ell].ucb;
    states.iter().fold((0.0, 0.0), |(sum, min), s| {
        let le = log_epsilon(s.n, s.mu_hat, ucb_ell, alpha);
        (sum + le, if le < min { le } else { min })
    })
}

/// Product test over every arm, evaluated in log space.
pub fn infeasibility_test(states: &[ArmState], ell: usize, alpha: f64, delta: f64) -> bool {
    log_epsilon_summary(states, ell, alpha).0 <= delta.ln()
}

/// Single-arm test used by the no-combine ablation.
pub fn single_arm_infeasibility_test(
    states: &[ArmState],
    ell: usize,
    alpha: f64,
    delta: f64,
) -> bool {
    log_epsilon_summary(states, ell, alpha).1 <= delta.ln()
}

#[derive(Debug, Clone)]
pub struct CofPolicy {
    config: CofConfig,
    alpha: f64,
    tol: Tolerance,
    log_delta: f64,
    arms: Vec<ArmState>,
    candidate: usize,
    committed: Option<usize>,
    infeasible: Vec<usize>,
    pending: VecDeque<usize>,
    events: Vec<EpisodeEvent>,
    diagnostics: CofDiagnostics,
    gating: Vec<usize>,
}

impl CofPolicy {
    pub fn new(num_arms: usize, alpha: f64, config: CofConfig) -> Result<Self, SamplerError> {
        let tol = Tolerance::new(config.delta)?;
        if config.delta >= 1.0 {
            return Err(SamplerError::BadTolerance(config.delta));
        }
        Ok(Self {
            config,
            alpha,
            tol,
            log_delta: config.delta.ln(),
            arms: vec![ArmState::default(); num_arms],
            candidate: 0,
            committed: None,
            infeasible: Vec::new(),
            // Every arm is sampled once before the first decision.
            pending: (0..num_arms).collect(),
            events: Vec::new(),
            diagnostics: CofDiagnostics::default(),
            gating: Vec::with_capacity(num_arms),
        })
    }

    pub fn arm_states(&self) -> &[ArmState] {
        &self.arms
    }

    pub fn candidate(&self) -> usize {
        self.candidate
    }

    pub fn committed(&self) -> Option<usize> {
        self.committed
    }

    pub fn infeasible(&self) -> &[usize] {
        &self.infeasible
    }

    pub fn events(&self) -> &[EpisodeEvent] {
        &self.events
    }

    pub fn diagnostics(&self) -> &CofDiagnostics {
        &self.diagnostics
    }

    pub fn config(&self) -> &CofConfig {
        &self.config
    }

    /// Gating set for the current candidate.
    pub fn current_gating_set(&self) -> Vec<usize> {
        gating_set(&self.arms, self.candidate, self.alpha)
    }

    fn commit(&mut self, arm: usize, t: u64) -> usize {
        self.committed = Some(arm);
        self.pending.clear();
        self.events.push(EpisodeEvent {
            time: t,
            arm,
            kind: Verdict::DeemedFeasible,
        });
        arm
    }

    fn decide(&mut self, t: u64) -> usize {
        let k = self.arms.len();
        loop {
            if self.candidate >= k {
                self.diagnostics.candidate_overflows += 1;
                log::warn!(
                    "candidate advanced past the last arm at t={t}; committing to arm {}",
                    k - 1
                );
                return self.commit(k - 1, t);
            }
            let ell = self.candidate;
            self.diagnostics.decision_passes += 1;
            let mut gating = std::mem::take(&mut self.gating);
            gating_set_into(&self.arms, ell, self.alpha, &mut gating);
            if gating.is_empty() {
                self.gating = gating;
                return self.commit(ell, t);
            }

            let (log_sum, log_min) = log_epsilon_summary(&self.arms, ell, self.alpha);
            let combined = log_sum <= self.log_delta;
            let single = log_min <= self.log_delta;
            if single {
                self.diagnostics.single_arm_fires += 1;
                if !combined {
                    self.diagnostics.implication_violations += 1;
                }
            }
            let fired = if self.config.combine_samples {
                combined
            } else {
                single
            };
            if fired {
                self.gating = gating;
                self.infeasible.push(ell);
                self.events.push(EpisodeEvent {
                    time: t,
                    arm: ell,
                    kind: Verdict::DeemedInfeasible,
                });
                self.candidate += 1;
                continue;
            }

            let max_n = gating.iter().map(|&i| self.arms[i].n).max().unwrap_or(0);
            let trailing = self.arms[ell].n < max_n;
            if self.config.exclusive_sampling && trailing {
                self.gating = gating;
                return ell;
            }

            let max_lcb = gating
                .iter()
                .map(|&i| self.arms[i].lcb)
                .fold(f64::NEG_INFINITY, f64::max);
            self.pending.push_back(ell);
            self.pending.extend(
                gating
                    .iter()
                    .copied()
                    .filter(|&i| self.arms[i].ucb > max_lcb),
            );
            self.gating = gating;
            return self.pending.pop_front().expect("candidate was just queued");
        }
    }
}

impl Policy for CofPolicy {
    #[inline]
    fn next_arm(&mut self, t: u64) -> usize {
        if let Some(arm) = self.committed {
            return arm;
        }
        if let Some(arm) = self.pending.pop_front() {
            return arm;
        }
        self.decide(t)
    }

    #[inline]
    fn observe(&mut self, arm: usize, reward: bool) {
        self.arms[arm].record(reward, &self.tol);
    }
}
