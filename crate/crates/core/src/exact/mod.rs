//! Exact enumeration: trajectory distributions, checkpoint marginals, total
//! variation, values and optimal policies.

mod distribution;
mod engine;
mod multi;
mod planning;

use serde::{Deserialize, Serialize};

pub use distribution::{tv_distance, CheckpointEvent, EventKind, Scope, TrajectoryDistribution};
pub use engine::model_likelihood;
pub use multi::pairwise_memoryless_tv;
pub use planning::{
    best_memoryless_policy, memoryless_context_values, memoryless_value, optimal_history_policy, optimal_markov_policy,
};

use crate::checkpoint::CheckpointSpec;
use crate::error::{Error, Result};
use crate::model::LmdpModel;
use crate::policy::Policy;

/// Default bound on the number of enumerated support entries.
pub const DEFAULT_SUPPORT_GUARD: f64 = 1e7;
/// Default bound on the number of enumerated policies.
pub const DEFAULT_POLICY_GUARD: f64 = 1e6;

/// Size bounds for exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Guards {
    pub support: f64,
    pub policies: f64,
}

impl Default for Guards {
    fn default() -> Self {
        Guards {
            support: DEFAULT_SUPPORT_GUARD,
            policies: DEFAULT_POLICY_GUARD,
        }
    }
}

impl Guards {
    pub(crate) fn check_trajectories(&self, model: &LmdpModel) -> Result<()> {
        let needed = model.shape().trajectory_count();
        if needed > self.support {
            return Err(Error::guard("trajectories (S*A*|R|)^H", needed, self.support));
        }
        Ok(())
    }
}

/// `ℙ_θ^π` over full trajectories.
pub fn trajectory_distribution(model: &LmdpModel, policy: &Policy, guards: &Guards) -> Result<TrajectoryDistribution> {
    let table = engine::forward(model, policy, &Scope::Full, guards)?;
    Ok(engine::mix_contexts(&Scope::Full, model, &table))
}

/// `P_m^π` over full trajectories for every context `m`.
pub fn context_trajectory_distributions(
    model: &LmdpModel,
    policy: &Policy,
    guards: &Guards,
) -> Result<Vec<TrajectoryDistribution>> {
    let table = engine::forward(model, policy, &Scope::Full, guards)?;
    Ok(engine::split_contexts(&Scope::Full, model.shape(), &table))
}

/// Marginal of `ℙ_θ^π` over the events of a checkpoint scope.
pub fn checkpoint_marginal(
    model: &LmdpModel,
    policy: &Policy,
    scope: &Scope,
    guards: &Guards,
) -> Result<TrajectoryDistribution> {
    let table = engine::forward(model, policy, scope, guards)?;
    Ok(engine::mix_contexts(scope, model, &table))
}

/// Per-context marginals `P_m^π` over the events of a scope.
pub fn context_checkpoint_marginals(
    model: &LmdpModel,
    policy: &Policy,
    scope: &Scope,
    guards: &Guards,
) -> Result<Vec<TrajectoryDistribution>> {
    let table = engine::forward(model, policy, scope, guards)?;
    Ok(engine::split_contexts(scope, model.shape(), &table))
}

/// `P_m^π(x_τ, y_τ)`: the distribution of the full events at the checkpoint
/// times of `spec`, conditioned on context `m`.
pub fn latent_conditional_marginal(
    model: &LmdpModel,
    m: usize,
    policy: &Policy,
    spec: &CheckpointSpec,
    guards: &Guards,
) -> Result<TrajectoryDistribution> {
    if m >= model.num_contexts() {
        return Err(Error::OutOfRange {
            name: "context",
            value: m as f64,
            expected: "m < M",
        });
    }
    spec.check(Some(model.horizon()), None)?;
    let scope = Scope::full_events(&spec.tau);
    let mut all = context_checkpoint_marginals(model, policy, &scope, guards)?;
    Ok(all.swap_remove(m))
}

/// `V_θ^π = E[Σ_t r_t]`.
pub fn policy_value(model: &LmdpModel, policy: &Policy, guards: &Guards) -> Result<f64> {
    if let Policy::Memoryless(p) = policy {
        policy.check(&model.shape())?;
        return Ok(memoryless_value(model, p));
    }
    let dist = trajectory_distribution(model, policy, guards)?;
    let shape = model.shape();
    let support = model.reward_support();
    Ok(dist
        .iter()
        .map(|(code, p)| p * crate::trajectory::Trajectory::decode(code, &shape).total_reward(support))
        .sum())
}

#[cfg(test)]
pub(crate) mod tests;
