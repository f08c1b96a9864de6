//! The stepping interface shared by COF and the baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One arm per timestep: the runner asks for an arm, draws its reward and
/// reports it back before asking again.
pub trait Policy: Send {
    /// `t` is the number of samples already taken.
    fn next_arm(&mut self, t: u64) -> usize;

    fn observe(&mut self, arm: usize, reward: bool);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Cof,
    CofNoExclusive,
    CofNoCombine,
    EtcCs,
    UcbCs,
    TsCs,
    PeCsStyle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Cof,
        Algorithm::CofNoExclusive,
        Algorithm::CofNoCombine,
        Algorithm::EtcCs,
        Algorithm::UcbCs,
        Algorithm::TsCs,
        Algorithm::PeCsStyle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cof => "cof",
            Algorithm::CofNoExclusive => "cof_no_exclusive",
            Algorithm::CofNoCombine => "cof_no_combine",
            Algorithm::EtcCs => "etc_cs",
            Algorithm::UcbCs => "ucb_cs",
            Algorithm::TsCs => "ts_cs",
            Algorithm::PeCsStyle => "pe_cs_style",
        }
    }

    pub fn is_cof(self) -> bool {
        matches!(
            self,
            Algorithm::Cof | Algorithm::CofNoExclusive | Algorithm::CofNoCombine
        )
    }

    /// Whether the policy consumes the error tolerance.
    pub fn uses_delta(self) -> bool {
        self.is_cof() || self == Algorithm::PeCsStyle
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// Lowest index `k` with `values[k] >= (1 - alpha) * max(values)`. Arms are
/// cost-sorted, so this is the cheapest empirically feasible arm.
pub fn cheapest_feasible(values: &[f64], alpha: f64) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = (1.0 - alpha) * max;
    values
        .iter()
        .position(|&v| v >= threshold)
        .expect("the maximizing arm always clears its own subsidized threshold")
}
