//! Simulation of stochastic bandits with a cost subsidy: the COF algorithm
//! and its ablations, baseline policies, regret accounting and bound
//! calculators.
//!
//! Arms are 0-based throughout the library and ordered by ascending cost.

pub mod baselines;
pub mod bounds;
pub mod cof;
pub mod instance;
pub mod metrics;
pub mod policy;
pub mod runner;
pub mod sampler;

pub use cof::{CofConfig, CofPolicy, EpisodeEvent, Verdict};
pub use instance::{analyze, parse_instance, BanditInstance, InstanceAnalysis, InstanceError};
pub use metrics::{Checkpoint, RegretAccumulator};
pub use policy::{Algorithm, Policy};
pub use runner::{derive_seed, run_single, run_sweep, ExperimentConfig, RunTrace};
pub use sampler::{beta, ArmState, RewardEnvironment, Tolerance};
