//! Latent MDP models.
//!
//! A model holds `M` tabular MDPs over shared state, action and reward spaces,
//! mixed by the weights `w`. Every episode first draws a latent context
//! `m ~ w`, then the initial state from that context's initial row, and then
//! runs `H` steps in the drawn MDP. Indices are zero-based throughout; rewards
//! are stored as indices into the sorted `reward_support`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that probability vectors sum to one.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// The dimensions of a latent MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub contexts: usize,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub rewards: usize,
}

impl Shape {
    /// Number of (state, action, reward) step outcomes.
    pub fn step_radix(&self) -> usize {
        self.states * self.actions * self.rewards
    }

    /// `(S*A*|R|)^H` as a float, the number of full trajectories.
    pub fn trajectory_count(&self) -> f64 {
        (self.step_radix() as f64).powi(self.horizon as i32)
    }

    /// Same dimensions apart from the number of latent contexts.
    pub fn compatible(&self, other: &Shape) -> bool {
        self.states == other.states
            && self.actions == other.actions
            && self.horizon == other.horizon
            && self.rewards == other.rewards
    }
}

/// A finite tabular latent MDP `θ = {w_m, T_m, R_m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmdpModel {
    pub(crate) shape: Shape,
    pub(crate) reward_support: Vec<f64>,
    /// `[M]`
    pub(crate) weights: Vec<f64>,
    /// `[M][S]`, the row `T_m(.|s0, a0)`.
    pub(crate) init: Vec<f64>,
    /// `[M][S][A][S]`
    pub(crate) transitions: Vec<f64>,
    /// `[M][S][A][|R|]`
    pub(crate) rewards: Vec<f64>,
}

/// Location of a probability row inside a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "table", rename_all = "snake_case")]
pub enum RowLocation {
    Weights,
    Init { m: usize },
    Transition { m: usize, s: usize, a: usize },
    Reward { m: usize, s: usize, a: usize },
    RewardSupport,
    Dimensions,
}

impl std::fmt::Display for RowLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowLocation::Weights => write!(f, "weights"),
            RowLocation::Init { m } => write!(f, "init[{m}]"),
            RowLocation::Transition { m, s, a } => write!(f, "transitions[{m}][{s}][{a}]"),
            RowLocation::Reward { m, s, a } => write!(f, "rewards[{m}][{s}][{a}]"),
            RowLocation::RewardSupport => write!(f, "reward_support"),
            RowLocation::Dimensions => write!(f, "dimensions"),
        }
    }
}

/// The first violated invariant found by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: RowLocation,
    pub message: String,
}

/// Outcome of [`validate_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violation: Option<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

impl LmdpModel {
    /// Builds a model from flat row-major tables without validating it.
    ///
    /// Table layouts: `init[m][s]`, `transitions[m][s][a][s']`,
    /// `rewards[m][s][a][r]`. Only the lengths are checked here; use
    /// [`validate_model`] or [`LmdpModel::validated`] for the probability
    /// invariants.
    pub fn new(
        shape: Shape,
        reward_support: Vec<f64>,
        weights: Vec<f64>,
        init: Vec<f64>,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        let Shape {
            contexts: m,
            states: s,
            actions: a,
            rewards: r,
            ..
        } = shape;
        let expect = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::ShapeMismatch(format!(
                    "{name} has {got} entries, expected {want}"
                )))
            }
        };
        expect("reward_support", reward_support.len(), r)?;
        expect("weights", weights.len(), m)?;
        expect("init", init.len(), m * s)?;
        expect("transitions", transitions.len(), m * s * a * s)?;
        expect("rewards", rewards.len(), m * s * a * r)?;
        Ok(LmdpModel {
            shape,
            reward_support,
            weights,
            init,
            transitions,
            rewards,
        })
    }

    /// Returns the model if it passes validation, otherwise the first violation.
    pub fn validated(self) -> Result<Self> {
        let report = validate_model(&self);
        for w in &report.warnings {
            log::warn!("{w}");
        }
        match report.violation {
            None => Ok(self),
            Some(v) => Err(Error::InvalidModel(format!("{}: {}", v.location, v.message))),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn num_contexts(&self) -> usize {
        self.shape.contexts
    }

    pub fn num_states(&self) -> usize {
        self.shape.states
    }

    pub fn num_actions(&self) -> usize {
        self.shape.actions
    }

    pub fn horizon(&self) -> usize {
        self.shape.horizon
    }

    pub fn num_rewards(&self) -> usize {
        self.shape.rewards
    }

    pub fn reward_support(&self) -> &[f64] {
        &self.reward_support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `T_m(.|s0, a0)`.
    pub fn init_row(&self, m: usize) -> &[f64] {
        let s = self.shape.states;
        &self.init[m * s..(m + 1) * s]
    }

    /// `T_m(.|s, a)`.
    pub fn transition_row(&self, m: usize, s: usize, a: usize) -> &[f64] {
        let Shape { states, actions, .. } = self.shape;
        let start = ((m * states + s) * actions + a) * states;
        &self.transitions[start..start + states]
    }

    /// `R_m(.|s, a)` over reward indices.
    pub fn reward_row(&self, m: usize, s: usize, a: usize) -> &[f64] {
        let Shape {
            states,
            actions,
            rewards,
            ..
        } = self.shape;
        let start = ((m * states + s) * actions + a) * rewards;
        &self.rewards[start..start + rewards]
    }

    /// Expected immediate reward of `(s, a)` in context `m`.
    pub fn mean_reward(&self, m: usize, s: usize, a: usize) -> f64 {
        self.reward_row(m, s, a)
            .iter()
            .zip(&self.reward_support)
            .map(|(p, r)| p * r)
            .sum()
    }

    pub(crate) fn transition_row_mut(&mut self, m: usize, s: usize, a: usize) -> &mut [f64] {
        let Shape { states, actions, .. } = self.shape;
        let start = ((m * states + s) * actions + a) * states;
        &mut self.transitions[start..start + states]
    }

    pub(crate) fn reward_row_mut(&mut self, m: usize, s: usize, a: usize) -> &mut [f64] {
        let Shape {
            states,
            actions,
            rewards,
            ..
        } = self.shape;
        let start = ((m * states + s) * actions + a) * rewards;
        &mut self.rewards[start..start + rewards]
    }

    pub(crate) fn init_row_mut(&mut self, m: usize) -> &mut [f64] {
        let s = self.shape.states;
        &mut self.init[m * s..(m + 1) * s]
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// The single MDP of context `m`, as a one-context model.
    pub fn context(&self, m: usize) -> LmdpModel {
        let Shape {
            states: s,
            actions: a,
            rewards: r,
            ..
        } = self.shape;
        let shape = Shape {
            contexts: 1,
            ..self.shape
        };
        LmdpModel {
            shape,
            reward_support: self.reward_support.clone(),
            weights: vec![1.0],
            init: self.init[m * s..(m + 1) * s].to_vec(),
            transitions: self.transitions[m * s * a * s..(m + 1) * s * a * s].to_vec(),
            rewards: self.rewards[m * s * a * r..(m + 1) * s * a * r].to_vec(),
        }
    }

    /// Replaces the mixing weights, keeping everything else.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<LmdpModel> {
        if weights.len() != self.shape.contexts {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} contexts",
                weights.len(),
                self.shape.contexts
            )));
        }
        Ok(LmdpModel {
            weights,
            ..self.clone()
        })
    }

    /// Posterior over latent contexts after observing the history
    /// `(s_1, a_1, r_1, ..., s_t)`, given as steps plus the current state.
    ///
    /// Returns `None` when the history has zero probability under every context.
    pub fn posterior(&self, steps: &[(usize, usize, usize)], state: usize) -> Option<Vec<f64>> {
        let mut joint: Vec<f64> = (0..self.shape.contexts)
            .map(|m| {
                let mut p = self.weights[m];
                let mut cur = None;
                for &(s, a, r) in steps {
                    p *= match cur {
                        None => self.init_row(m)[s],
                        Some((ps, pa)) => self.transition_row(m, ps, pa)[s],
                    };
                    p *= self.reward_row(m, s, a)[r];
                    cur = Some((s, a));
                }
                p * match cur {
                    None => self.init_row(m)[state],
                    Some((ps, pa)) => self.transition_row(m, ps, pa)[state],
                }
            })
            .collect();
        let total: f64 = joint.iter().sum();
        if total <= 0.0 {
            return None;
        }
        for p in &mut joint {
            *p /= total;
        }
        Some(joint)
    }
}

fn check_row(row: &[f64], location: RowLocation) -> Option<Violation> {
    if let Some((i, p)) = row.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
        return Some(Violation {
            location,
            message: format!("entry {i} is {p}, expected a finite nonnegative probability"),
        });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Some(Violation {
            location,
            message: format!("row sums to {sum}, expected 1"),
        });
    }
    None
}

/// Checks every invariant of the model and reports the first violation.
///
/// Warns (without failing) when `H <= 2M`.
pub fn validate_model(model: &LmdpModel) -> ValidationReport {
    let shape = model.shape;
    let mut warnings = Vec::new();
    let violation = (|| {
        if shape.contexts == 0 || shape.states == 0 || shape.actions == 0 || shape.horizon == 0 || shape.rewards == 0 {
            return Some(Violation {
                location: RowLocation::Dimensions,
                message: format!("all dimensions must be positive, got {shape:?}"),
            });
        }
        let support = &model.reward_support;
        if let Some(r) = support.iter().find(|r| !r.is_finite() || r.abs() > 1.0) {
            return Some(Violation {
                location: RowLocation::RewardSupport,
                message: format!("reward {r} is outside [-1, 1]"),
            });
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Some(Violation {
                location: RowLocation::RewardSupport,
                message: "reward support must be strictly increasing".into(),
            });
        }
        if let Some(v) = check_row(&model.weights, RowLocation::Weights) {
            return Some(v);
        }
        for m in 0..shape.contexts {
            if let Some(v) = check_row(model.init_row(m), RowLocation::Init { m }) {
                return Some(v);
            }
        }
        for m in 0..shape.contexts {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    let loc = RowLocation::Transition { m, s, a };
                    if let Some(v) = check_row(model.transition_row(m, s, a), loc) {
                        return Some(v);
                    }
                }
            }
        }
        for m in 0..shape.contexts {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    let loc = RowLocation::Reward { m, s, a };
                    if let Some(v) = check_row(model.reward_row(m, s, a), loc) {
                        return Some(v);
                    }
                }
            }
        }
        None
    })();
    if shape.horizon <= 2 * shape.contexts {
        warnings.push(format!(
            "horizon H = {} is not larger than 2M = {}",
            shape.horizon,
            2 * shape.contexts
        ));
    }
    ValidationReport { violation, warnings }
}

/// Mixes every transition row, including the initial rows, with the uniform
/// distribution over states: `(1 - γ) T_m(.|s, a) + γ / S`.
pub fn perturb_model(model: &LmdpModel, gamma: f64) -> Result<LmdpModel> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::OutOfRange {
            name: "gamma",
            value: gamma,
            expected: "0 <= gamma <= 1",
        });
    }
    let uniform = 1.0 / model.shape.states as f64;
    let mut out = model.clone();
    for p in out.init.iter_mut().chain(out.transitions.iter_mut()) {
        *p = (1.0 - gamma) * *p + gamma * uniform;
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// One context, two states, two actions, deterministic everything.
    pub(crate) fn deterministic_mdp(horizon: usize) -> LmdpModel {
        let shape = Shape {
            contexts: 1,
            states: 2,
            actions: 2,
            horizon,
            rewards: 2,
        };
        // action a moves to state a; reward index 1 (= 1.0) iff s == a.
        let mut transitions = vec![0.0; 2 * 2 * 2];
        let mut rewards = vec![0.0; 2 * 2 * 2];
        for s in 0..2 {
            for a in 0..2 {
                transitions[(s * 2 + a) * 2 + a] = 1.0;
                rewards[(s * 2 + a) * 2 + usize::from(s == a)] = 1.0;
            }
        }
        LmdpModel::new(shape, vec![0.0, 1.0], vec![1.0], vec![1.0, 0.0], transitions, rewards).unwrap()
    }

    #[test]
    fn well_formed_model_passes() {
        let model = deterministic_mdp(3);
        let report = validate_model(&model);
        assert!(report.passed(), "{report:?}");
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn short_horizon_warns_but_passes() {
        let model = deterministic_mdp(2);
        let report = validate_model(&model);
        assert!(report.passed());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn unnormalized_transition_row_is_located() {
        let mut model = deterministic_mdp(3);
        model.transition_row_mut(0, 1, 0).copy_from_slice(&[0.9, 0.0]);
        let report = validate_model(&model);
        let v = report.violation.expect("should fail");
        assert_eq!(v.location, RowLocation::Transition { m: 0, s: 1, a: 0 });
    }

    #[test]
    fn negative_entry_and_out_of_range_reward_fail() {
        let mut model = deterministic_mdp(3);
        model.reward_row_mut(0, 0, 1).copy_from_slice(&[1.5, -0.5]);
        let v = validate_model(&model).violation.unwrap();
        assert_eq!(v.location, RowLocation::Reward { m: 0, s: 0, a: 1 });

        let mut model = deterministic_mdp(3);
        model.reward_support = vec![0.0, 2.0];
        let v = validate_model(&model).violation.unwrap();
        assert_eq!(v.location, RowLocation::RewardSupport);
    }

    #[test]
    fn perturbation_endpoints() {
        let model = deterministic_mdp(3);
        assert_eq!(perturb_model(&model, 0.0).unwrap(), model);
        let full = perturb_model(&model, 1.0).unwrap();
        assert!(full.transitions.iter().all(|&p| p == 0.5));
        assert!(full.init.iter().all(|&p| p == 0.5));
        assert_eq!(full.rewards, model.rewards);
        assert!(perturb_model(&model, 1.5).is_err());
        assert!(perturb_model(&model, -0.1).is_err());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let shape = Shape {
            contexts: 1,
            states: 2,
            actions: 1,
            horizon: 1,
            rewards: 1,
        };
        let err = LmdpModel::new(shape, vec![0.0], vec![1.0], vec![1.0], vec![1.0; 4], vec![1.0; 2]);
        assert!(err.is_err());
    }
}
