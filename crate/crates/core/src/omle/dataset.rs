use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LmdpModel, Shape};
use crate::policy::Policy;
use crate::sample::sample_trajectory;
use crate::trajectory::Trajectory;

/// Episodes collected with one policy in one go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub policy: usize,
    pub episodes: u64,
    pub iteration: usize,
}

/// An append-only set of episodes and the policies that generated them.
///
/// Episodes are stored as a histogram of trajectory codes plus the summed
/// log-probability of the logged actions, which is all the likelihood needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: Shape,
    counts: BTreeMap<u64, u64>,
    policy_log_weight: f64,
    policies: Vec<Policy>,
    batches: Vec<Batch>,
    entries: Option<Vec<(Trajectory, usize)>>,
    episodes: u64,
}

impl Dataset {
    pub fn new(shape: Shape, keep_entries: bool) -> Self {
        Dataset {
            shape,
            counts: BTreeMap::new(),
            policy_log_weight: 0.0,
            policies: Vec::new(),
            batches: Vec::new(),
            entries: keep_entries.then(Vec::new),
            episodes: 0,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Adds a policy to the registry and returns its id.
    pub fn register(&mut self, policy: Policy) -> Result<usize> {
        policy.check(&self.shape)?;
        self.policies.push(policy);
        Ok(self.policies.len() - 1)
    }

    pub fn policy(&self, id: usize) -> Option<&Policy> {
        self.policies.get(id)
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    /// Appends one episode generated by the registered policy `policy_id`.
    pub fn push(&mut self, trajectory: &Trajectory, policy_id: usize) -> Result<()> {
        let policy = self
            .policies
            .get(policy_id)
            .ok_or_else(|| Error::InvalidPolicy(format!("unregistered policy id {policy_id}")))?;
        trajectory.check(&self.shape)?;
        let weight = policy.trajectory_weight(trajectory)?;
        if weight <= 0.0 {
            return Err(Error::InvalidPolicy(format!(
                "policy {policy_id} cannot generate trajectory {trajectory}"
            )));
        }
        self.policy_log_weight += weight.ln();
        *self.counts.entry(trajectory.encode(&self.shape)).or_insert(0) += 1;
        if let Some(entries) = &mut self.entries {
            entries.push((trajectory.clone(), policy_id));
        }
        self.episodes += 1;
        Ok(())
    }

    /// Samples `n` episodes from `model` under policy `policy_id` and appends them.
    pub fn collect<R: Rng + ?Sized>(
        &mut self,
        model: &LmdpModel,
        policy_id: usize,
        n: usize,
        iteration: usize,
        rng: &mut R,
    ) -> Result<()> {
        let policy = self
            .policies
            .get(policy_id)
            .ok_or_else(|| Error::InvalidPolicy(format!("unregistered policy id {policy_id}")))?
            .clone();
        for _ in 0..n {
            let (trajectory, _) = sample_trajectory(model, &policy, rng)?;
            self.push(&trajectory, policy_id)?;
        }
        self.batches.push(Batch {
            policy: policy_id,
            episodes: n as u64,
            iteration,
        });
        Ok(())
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    /// `Σ log π(𝒯)` over all episodes.
    pub fn policy_log_weight(&self) -> f64 {
        self.policy_log_weight
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    /// Individual episodes, when retained.
    pub fn entries(&self) -> Option<&[(Trajectory, usize)]> {
        self.entries.as_deref()
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn is_empty(&self) -> bool {
        self.episodes == 0
    }
}
