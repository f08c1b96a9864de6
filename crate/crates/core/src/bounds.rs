//! Closed-form sample and regret bounds.
//!
//! Lower-bound coefficients multiply `ln T` and are evaluated in their
//! unit-variance Gaussian form. The `tau` machinery bounds the uniform
//! sampling rounds needed to reject a cheap candidate; [`exact_tau`] is a
//! brute-force scan of the same constraint that [`tau_search`] solves in
//! closed form. Logarithms are natural.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::instance::InstanceAnalysis;

/// Relative tolerance when matching the two sides of the feasibility identity.
pub const FEASIBILITY_RTOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("arm {0} is not a cheap arm")]
    NotCheap(usize),
    #[error("arm {0} is not an expensive arm")]
    NotExpensive(usize),
    #[error("no arm can prove arm {0} infeasible")]
    NoEliminators(usize),
    #[error("instance has no cheap arms")]
    NoCheapArms,
    #[error("tolerance {0} outside (0, 1]")]
    BadTolerance(f64),
    #[error("horizon must be at least 2, got {0}")]
    BadHorizon(u64),
    #[error("exact scan for arm {ell} passed its limit of {limit} rounds")]
    ScanLimitExceeded { ell: usize, limit: u64 },
}

fn log_inv(delta: f64) -> Result<f64, BoundsError> {
    if delta > 0.0 && delta <= 1.0 {
        Ok((1.0 / delta).ln())
    } else {
        Err(BoundsError::BadTolerance(delta))
    }
}

fn log_horizon(horizon: u64) -> Result<f64, BoundsError> {
    if horizon >= 2 {
        Ok((horizon as f64).ln())
    } else {
        Err(BoundsError::BadHorizon(horizon))
    }
}

/// `2 / Delta_Q^2` for a cheap arm.
pub fn lb_cheap(a: &InstanceAnalysis, k: usize) -> Result<f64, BoundsError> {
    if !a.is_cheap(k) {
        return Err(BoundsError::NotCheap(k));
    }
    let gap = a.quality_gaps[k];
    Ok(2.0 / (gap * gap))
}

/// `2 (1-alpha)^2 / (mu_{a*} - (1-alpha) mu_k)^2` for an expensive arm.
/// A zero denominator yields `+inf` and a warning.
pub fn lb_expensive(a: &InstanceAnalysis, k: usize) -> Result<f64, BoundsError> {
    if !a.is_expensive(k) {
        return Err(BoundsError::NotExpensive(k));
    }
    let keep = 1.0 - a.alpha;
    let denom = a.means()[a.a_star] - keep * a.means()[k];
    if denom == 0.0 {
        log::warn!("expensive-arm lower bound for arm {k} has a zero gap; reporting infinity");
        return Ok(f64::INFINITY);
    }
    Ok(2.0 * keep * keep / (denom * denom))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointBound {
    /// `(arm, Delta_{k,dagger}^2)` over the dagger set.
    pub weights: Vec<(usize, f64)>,
    /// `2 (1 - alpha)^2`
    pub rhs: f64,
}

impl JointBound {
    /// Per-arm `ln T` coefficient when every arm of the set is sampled
    /// equally: `rhs / sum of weights`.
    pub fn uniform_allocation(&self) -> f64 {
        self.rhs / self.weights.iter().map(|(_, w)| w).sum::<f64>()
    }
}

/// Joint constraint over the arms able to eliminate the best cheap arm;
/// `None` when there are no cheap arms.
pub fn lb_joint(a: &InstanceAnalysis) -> Option<JointBound> {
    let gaps = a.dagger_gaps.as_ref()?;
    let keep = 1.0 - a.alpha;
    Some(JointBound {
        weights: a
            .dagger_set
            .iter()
            .map(|&i| (i, gaps[i] * gaps[i]))
            .collect(),
        rhs: 2.0 * keep * keep,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauSearch {
    /// Closed-form `tau_{ell,A}` (real valued).
    pub tau: f64,
    /// Number of top-reward eliminators used.
    pub a_used: usize,
    /// Candidate `tau_{ell,p}` for `p = 1..=|A^ell|`.
    pub candidates: Vec<f64>,
    pub feasible: Vec<bool>,
    /// Set when no candidate was feasible and the last one was taken.
    pub fallback: bool,
}

impl TauSearch {
    /// Whole rounds: `max(1, ceil(tau))`.
    pub fn rounds(&self) -> u64 {
        (self.tau.ceil() as u64).max(1)
    }
}

/// Indicator that arm `k` is still sampled after `n` rounds, i.e.
/// `n <= 8 ln(1/delta) / Delta_k^2`.
fn still_sampled(n: f64, reward_gap: f64, log_inv_delta: f64) -> bool {
    n * reward_gap * reward_gap <= 8.0 * log_inv_delta
}

/// `(Delta - 3 beta)^+ ^2` summed over `arms` with the sampling indicator.
fn clipped_sum(
    a: &InstanceAnalysis,
    ell: usize,
    arms: &[usize],
    n: f64,
    beta: f64,
    log_inv_delta: f64,
) -> f64 {
    arms.iter()
        .filter(|&&k| still_sampled(n, a.reward_gaps[k], log_inv_delta))
        .map(|&k| {
            let x = (a.pair_gap(k, ell) - 3.0 * beta).max(0.0);
            x * x
        })
        .sum()
}

/// Smallest feasible closed-form candidate `tau_{ell,p}`.
pub fn tau_search(a: &InstanceAnalysis, ell: usize, delta: f64) -> Result<TauSearch, BoundsError> {
    let log_inv_delta = log_inv(delta)?;
    let order = a.eliminators_by_reward(ell);
    if order.is_empty() {
        return Err(BoundsError::NoEliminators(ell));
    }
    let mut candidates = Vec::with_capacity(order.len());
    let mut feasible = Vec::with_capacity(order.len());
    let mut prefix = 0.0;
    for p in 1..=order.len() {
        let g = a.pair_gap(order[p - 1], ell);
        prefix += g * g;
        let root = 3.0 * (p as f64).sqrt() + 1.0;
        let tau = root * root / 2.0 * log_inv_delta / prefix;
        candidates.push(tau);
        if log_inv_delta == 0.0 {
            feasible.push(true);
            continue;
        }
        let beta = (log_inv_delta / (2.0 * tau)).sqrt();
        let top: f64 = order[..p]
            .iter()
            .map(|&k| {
                let x = a.pair_gap(k, ell) - 3.0 * beta;
                x * x
            })
            .sum();
        let full = clipped_sum(a, ell, &order, tau, beta, log_inv_delta);
        feasible.push((top - full).abs() <= FEASIBILITY_RTOL * top.abs().max(full.abs()));
    }
    let best = (0..order.len())
        .filter(|&i| feasible[i])
        .min_by(|&i, &j| candidates[i].total_cmp(&candidates[j]).then(i.cmp(&j)));
    let (idx, fallback) = match best {
        Some(i) => (i, false),
        None => {
            log::warn!(
                "no feasible tau candidate for arm {ell}; using all {} eliminators",
                order.len()
            );
            (order.len() - 1, true)
        }
    };
    Ok(TauSearch {
        tau: candidates[idx],
        a_used: idx + 1,
        candidates,
        feasible,
        fallback,
    })
}

/// Smallest integer `n >= 1` with
/// `sum_k 1{n <= 8 ln(1/delta)/Delta_k^2} ((Delta_{k,ell} - 3 beta(n))^+)^2 >= beta(n)^2`,
/// found by ascending scan up to `ceil(10 tau_search)`.
pub fn exact_tau(a: &InstanceAnalysis, ell: usize, delta: f64) -> Result<u64, BoundsError> {
    let log_inv_delta = log_inv(delta)?;
    let arms = a.eliminators_by_reward(ell);
    if arms.is_empty() {
        return Err(BoundsError::NoEliminators(ell));
    }
    let limit = ((10.0 * tau_search(a, ell, delta)?.tau).ceil() as u64).max(1);
    let gaps: Vec<(f64, f64)> = arms
        .iter()
        .map(|&k| (a.pair_gap(k, ell), a.reward_gaps[k]))
        .collect();
    for n in 1..=limit {
        let nf = n as f64;
        let beta_sq = log_inv_delta / (2.0 * nf);
        let beta = beta_sq.sqrt();
        let lhs: f64 = gaps
            .iter()
            .filter(|&&(_, rg)| nf * rg * rg <= 8.0 * log_inv_delta)
            .map(|&(g, _)| {
                let x = (g - 3.0 * beta).max(0.0);
                x * x
            })
            .sum();
        // Absorbs rounding when the constraint holds with equality.
        if lhs >= beta_sq * (1.0 - 1e-12) {
            return Ok(n);
        }
    }
    Err(BoundsError::ScanLimitExceeded { ell, limit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gamma {
    /// Absent when the instance has no cheap arms.
    pub gamma_dagger: Option<f64>,
    pub gamma_astar: f64,
    pub a_used: Option<usize>,
}

impl Gamma {
    pub fn max(&self) -> f64 {
        self.gamma_dagger
            .map_or(self.gamma_astar, |g| g.max(self.gamma_astar))
    }
}

/// Sample-bound quantities for expensive arm `k`.
pub fn gamma(
    a: &InstanceAnalysis,
    k: usize,
    horizon: u64,
    delta: f64,
) -> Result<Gamma, BoundsError> {
    if !a.is_expensive(k) {
        return Err(BoundsError::NotExpensive(k));
    }
    let log_t = log_horizon(horizon)?;
    let keep = 1.0 - a.alpha;
    let denom = a.means()[a.a_star] - keep * a.means()[k];
    let gamma_astar = 16.0 * log_t / (denom * denom);
    let (gamma_dagger, a_used) = match a.a_dagger {
        None => (None, None),
        Some(dagger) => {
            let search = tau_search(a, dagger, delta)?;
            let order = a.eliminators_by_reward(dagger);
            let sum_sq: f64 = order[..search.a_used]
                .iter()
                .map(|&i| a.pair_gap(i, dagger).powi(2))
                .sum();
            let root = 3.0 * (search.a_used as f64).sqrt() + 1.0;
            let episode = root * root * log_t / sum_sq;
            let rg = a.reward_gaps[k];
            let filtered = 16.0 * log_t / (rg * rg);
            (Some(episode.min(filtered)), Some(search.a_used))
        }
    };
    Ok(Gamma {
        gamma_dagger,
        gamma_astar,
        a_used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpperBounds {
    pub cost: f64,
    pub quality: f64,
}

// `coef * gap` with a zero gap contributing nothing even for infinite coef.
fn weighted(coef: f64, gap: f64) -> f64 {
    if gap == 0.0 {
        0.0
    } else {
        coef * gap
    }
}

/// Expected cost and quality regret upper bounds for COF.
pub fn regret_upper_bounds(
    a: &InstanceAnalysis,
    horizon: u64,
    delta: f64,
) -> Result<UpperBounds, BoundsError> {
    let log_t = log_horizon(horizon)?;
    let k = a.num_arms() as f64;
    let mut cost = 0.0;
    let mut quality = 0.0;
    for &i in &a.cheap_arms {
        quality += 16.0 * log_t / a.clipped_quality_gap(i);
    }
    for &i in &a.expensive_arms {
        let g = gamma(a, i, horizon, delta)?.max();
        cost += weighted(g, a.clipped_cost_gap(i));
        quality += weighted(g, a.clipped_quality_gap(i));
    }
    cost += k * a
        .expensive_arms
        .iter()
        .map(|&i| a.clipped_cost_gap(i))
        .sum::<f64>();
    quality += k
        * (0..a.num_arms())
            .map(|i| a.clipped_quality_gap(i))
            .sum::<f64>();
    Ok(UpperBounds { cost, quality })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmBounds {
    pub arm: usize,
    pub lb_cheap: Option<f64>,
    pub lb_expensive: Option<f64>,
    pub joint_weight: Option<f64>,
    pub gamma_dagger: Option<f64>,
    pub gamma_astar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub arms: Vec<ArmBounds>,
    pub joint_rhs: Option<f64>,
    pub tau_dagger: Option<f64>,
    pub a_used: Option<usize>,
    pub cost_ub: f64,
    pub quality_ub: f64,
    pub diagnostics: Vec<String>,
}

pub fn bound_report(
    a: &InstanceAnalysis,
    horizon: u64,
    delta: f64,
) -> Result<BoundReport, BoundsError> {
    let joint = lb_joint(a);
    let mut diagnostics = Vec::new();
    let mut arms = Vec::with_capacity(a.num_arms());
    for k in 0..a.num_arms() {
        let lb_expensive = if a.is_expensive(k) {
            Some(lb_expensive(a, k)?)
        } else {
            None
        };
        if lb_expensive == Some(f64::INFINITY) {
            diagnostics.push(format!(
                "arm {}: zero gap in expensive-arm lower bound",
                k + 1
            ));
        }
        let g = if a.is_expensive(k) {
            Some(gamma(a, k, horizon, delta)?)
        } else {
            None
        };
        arms.push(ArmBounds {
            arm: k,
            lb_cheap: if a.is_cheap(k) {
                Some(lb_cheap(a, k)?)
            } else {
                None
            },
            lb_expensive,
            joint_weight: joint
                .as_ref()
                .and_then(|j| j.weights.iter().find(|(i, _)| *i == k).map(|(_, w)| *w)),
            gamma_dagger: g.and_then(|g| g.gamma_dagger),
            gamma_astar: g.map(|g| g.gamma_astar),
        });
    }
    let dagger = match a.a_dagger {
        Some(d) => {
            let s = tau_search(a, d, delta)?;
            if s.fallback {
                diagnostics.push("no feasible tau candidate for the best cheap arm".to_string());
            }
            Some(s)
        }
        None => None,
    };
    let ub = regret_upper_bounds(a, horizon, delta)?;
    Ok(BoundReport {
        arms,
        joint_rhs: joint.map(|j| j.rhs),
        tau_dagger: dagger.as_ref().map(|s| s.tau),
        a_used: dagger.as_ref().map(|s| s.a_used),
        cost_ub: ub.cost,
        quality_ub: ub.quality,
        diagnostics,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BoundReport {
    /// Per-arm table (1-based arms) followed by a one-row summary table.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("arm,lb_cheap,lb_expensive,joint_weight,gamma_dagger,gamma_astar\n");
        for r in &self.arms {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.arm + 1,
                cell(r.lb_cheap),
                cell(r.lb_expensive),
                cell(r.joint_weight),
                cell(r.gamma_dagger),
                cell(r.gamma_astar)
            );
        }
        out.push_str("tau_dagger,a_used,cost_ub,quality_ub\n");
        let _ = writeln!(
            out,
            "{},{},{},{}",
            cell(self.tau_dagger),
            self.a_used.map(|a| a.to_string()).unwrap_or_default(),
            self.cost_ub,
            self.quality_ub
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{analyze, BanditInstance};

    const NU2: [f64; 12] = [
        0.44, 0.46, 0.48, 0.7, 0.71, 0.704, 0.714, 0.702, 0.716, 0.708, 0.712, 0.706,
    ];

    fn nu2() -> InstanceAnalysis {
        analyze(&BanditInstance::new(NU2.to_vec(), (1..=12).map(f64::from).collect(), 0.3).unwrap())
    }

    fn analysis(means: &[f64], alpha: f64) -> InstanceAnalysis {
        analyze(
            &BanditInstance::new(
                means.to_vec(),
                (0..means.len()).map(|i| i as f64).collect(),
                alpha,
            )
            .unwrap(),
        )
    }

    fn close(a: f64, b: f64, rtol: f64) -> bool {
        (a - b).abs() <= rtol * b.abs()
    }

    #[test]
    fn cheap_lower_bound() {
        let a = nu2();
        // 2 / (0.5012 - 0.48)^2
        assert!(close(
            lb_cheap(&a, 2).unwrap(),
            2.0 / (0.0212f64 * 0.0212),
            1e-9
        ));
        assert!(close(lb_cheap(&a, 2).unwrap(), 4449.98, 1e-5));
        assert_eq!(lb_cheap(&a, 5), Err(BoundsError::NotCheap(5)));
        // gap 0.1 -> 200: mu* = 1, alpha = 0.5 -> mu_cs = 0.5, cheap mean 0.4
        let b = analysis(&[0.4, 0.5, 1.0], 0.5);
        assert!(close(lb_cheap(&b, 0).unwrap(), 200.0, 1e-12));
    }

    #[test]
    fn expensive_lower_bound() {
        let a = nu2();
        // 2 * 0.49 / (0.7 - 0.497)^2
        assert!(close(
            lb_expensive(&a, 4).unwrap(),
            0.98 / 0.203f64.powi(2),
            1e-9
        ));
        assert!(close(lb_expensive(&a, 4).unwrap(), 23.78, 1e-3));
        assert!(close(
            lb_expensive(&a, 11).unwrap(),
            0.98 / (0.7 - 0.7 * 0.706f64).powi(2),
            1e-9
        ));
        assert!(close(lb_expensive(&a, 11).unwrap(), 23.14, 1e-3));
        assert_eq!(lb_expensive(&a, 0), Err(BoundsError::NotExpensive(0)));
        // a* exactly on the threshold and k = i*: zero gap
        let b = analysis(&[0.5, 1.0], 0.5);
        assert_eq!(lb_expensive(&b, 1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn joint_bound() {
        let a = nu2();
        let j = lb_joint(&a).unwrap();
        assert!(close(j.rhs, 0.98, 1e-15));
        assert_eq!(
            j.weights.iter().map(|w| w.0).collect::<Vec<_>>(),
            (3..12).collect::<Vec<_>>()
        );
        for &(k, w) in &j.weights {
            assert!(close(w, (0.7 * NU2[k] - 0.48).powi(2), 1e-9));
        }
        assert!(lb_joint(&analysis(&[0.9, 0.2], 0.5)).is_none());
        let near_one = analysis(&[0.01, 0.9], 0.98);
        assert!(lb_joint(&near_one).unwrap().rhs < 1e-3);
    }

    #[test]
    fn joint_reduces_to_single_arm_bound() {
        // Only i* can eliminate the best cheap arm.
        let a = analysis(&[0.55, 0.7, 0.9], 0.3);
        let j = lb_joint(&a).unwrap();
        assert_eq!(j.weights.len(), 1);
        let dq = a.quality_gaps[a.a_dagger.unwrap()];
        let remark = 2.0 * 0.7f64.powi(2) / (dq * dq);
        assert!(close(j.uniform_allocation(), remark, 1e-12));
    }

    #[test]
    fn tau_single_eliminator() {
        let a = analysis(&[0.3, 0.9], 0.5);
        let d = a.pair_gap(1, 0);
        let s = tau_search(&a, 0, 1e-6).unwrap();
        assert_eq!(s.a_used, 1);
        assert!(close(s.tau, 8.0 * 1e6f64.ln() / (d * d), 1e-12));
        // Indicator never binds for i*, so the scan lands on ceil(8 L / d^2).
        assert_eq!(
            exact_tau(&a, 0, 1e-6).unwrap(),
            (8.0 * 1e6f64.ln() / (d * d)).ceil() as u64
        );
        assert_eq!(exact_tau(&a, 0, 1.0).unwrap(), 1);
        assert_eq!(tau_search(&a, 0, 1.0).unwrap().rounds(), 1);
    }

    #[test]
    fn tau_on_nu2() {
        let a = nu2();
        let s = tau_search(&a, 2, 1e-6).unwrap();
        let n = exact_tau(&a, 2, 1e-6).unwrap();
        assert!(n <= s.rounds(), "exact {n} vs closed form {}", s.tau);
        assert!(!s.fallback);
        for ell in 0..2 {
            assert!(exact_tau(&a, ell, 1e-6).unwrap() <= n);
        }
        assert_eq!(
            tau_search(&a, 5, 1e-6).unwrap_err(),
            BoundsError::NoEliminators(5)
        );
    }

    #[test]
    fn gamma_on_nu2() {
        let a = nu2();
        let horizon = 1_000_000;
        let g = gamma(&a, 8, horizon, 1e-12).unwrap();
        let expected = 16.0 * 1e6f64.ln() / (0.7 - 0.7 * 0.716f64).powi(2);
        assert!(close(g.gamma_astar, expected, 1e-12));
        assert!(close(g.gamma_astar, 5593.0, 1e-3));
        // i* has zero reward gap: the filtered branch is infinite, min keeps the episode branch.
        assert!(g.gamma_dagger.unwrap().is_finite());
        assert!(gamma(&a, 1, horizon, 1e-12).is_err());
        let no_cheap = analysis(&[0.9, 0.5, 0.95], 0.3);
        let g = gamma(&no_cheap, 2, horizon, 1e-6).unwrap();
        assert_eq!(g.gamma_dagger, None);
        assert_eq!(g.max(), g.gamma_astar);
    }

    #[test]
    fn gamma_min_structure() {
        // Far from the best arm: filtered branch 16 ln T / Delta_k^2 is small.
        let a = analysis(&[0.5, 0.9, 0.1, 0.95], 0.3);
        let g = gamma(&a, 2, 10_000, 1e-8).unwrap();
        let filtered = 16.0 * 10_000f64.ln() / (0.85f64 * 0.85);
        assert!(close(g.gamma_dagger.unwrap(), filtered, 1e-12));
    }

    #[test]
    fn upper_bounds_structure() {
        let no_cheap = analysis(&[0.9, 0.5, 0.95], 0.3);
        let ub = regret_upper_bounds(&no_cheap, 10_000, 1e-8).unwrap();
        // arm 1 (0.5) is infeasible-expensive, arm 2 feasible-expensive.
        let g1 = gamma(&no_cheap, 1, 10_000, 1e-8).unwrap().max();
        let g2 = gamma(&no_cheap, 2, 10_000, 1e-8).unwrap().max();
        let q1 = no_cheap.clipped_quality_gap(1);
        assert!(close(ub.quality, g1 * q1 + 3.0 * q1, 1e-12));
        assert!(close(ub.cost, g1 * 1.0 + g2 * 2.0 + 3.0 * 3.0, 1e-12));

        let a = nu2();
        let ub = regret_upper_bounds(&a, 1_000_000, 1e-12).unwrap();
        assert!(ub.cost.is_finite() && ub.cost > 0.0);
        assert!(ub.quality.is_finite() && ub.quality > 0.0);
    }

    #[test]
    fn doubling_log_horizon_doubles_gammas() {
        let a = nu2();
        for k in a.expensive_arms.clone() {
            let g1 = gamma(&a, k, 1000, 1e-8).unwrap();
            let g2 = gamma(&a, k, 1_000_000, 1e-8).unwrap();
            assert!(close(g2.gamma_astar, 2.0 * g1.gamma_astar, 1e-12));
            assert!(close(
                g2.gamma_dagger.unwrap(),
                2.0 * g1.gamma_dagger.unwrap(),
                1e-12
            ));
        }
    }

    #[test]
    fn report_csv_shape() {
        let a = nu2();
        let csv = bound_report(&a, 1_000_000, 1e-12).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "arm,lb_cheap,lb_expensive,joint_weight,gamma_dagger,gamma_astar"
        );
        assert_eq!(lines.len(), 1 + 12 + 2);
        assert!(lines[1].starts_with("1,") && lines[1].ends_with(",,,,"));
        assert_eq!(lines[13], "tau_dagger,a_used,cost_ub,quality_ub");
    }
}
