//! Planning: belief backward induction over the history tree, Markov backward
//! induction for single-context models, and exhaustive search over
//! deterministic memoryless policies.

use super::Guards;
use crate::error::{Error, Result};
use crate::model::LmdpModel;
use crate::policy::{deterministic_memoryless_policies, HistoryKey, HistoryPolicy, MemorylessPolicy, Policy};
use crate::trajectory::Step;

/// Relative margin an action must win by to replace a lower-indexed one.
const TIE_MARGIN: f64 = 1e-12;

fn beats(candidate: f64, best: f64) -> bool {
    candidate > best + TIE_MARGIN * best.abs().max(1.0)
}

/// Per-context values `V_m^ψ` of a memoryless policy, by backward evaluation.
pub fn memoryless_context_values(model: &LmdpModel, policy: &MemorylessPolicy) -> Vec<f64> {
    let shape = model.shape();
    let (states, actions) = (shape.states, shape.actions);
    (0..shape.contexts)
        .map(|m| {
            let mut v = vec![0.0; states];
            for t in (0..shape.horizon).rev() {
                let mut nv = vec![0.0; states];
                for (s, slot) in nv.iter_mut().enumerate() {
                    for (a, &p) in policy.action_probs(t, s).iter().enumerate().take(actions) {
                        if p == 0.0 {
                            continue;
                        }
                        let future: f64 = model.transition_row(m, s, a).iter().zip(&v).map(|(t, v)| t * v).sum();
                        *slot += p * (model.mean_reward(m, s, a) + future);
                    }
                }
                v = nv;
            }
            model.init_row(m).iter().zip(&v).map(|(p, v)| p * v).sum()
        })
        .collect()
}

/// `V_θ^ψ` of a memoryless policy.
pub fn memoryless_value(model: &LmdpModel, policy: &MemorylessPolicy) -> f64 {
    memoryless_context_values(model, policy)
        .iter()
        .zip(model.weights())
        .map(|(v, w)| v * w)
        .sum()
}

/// Optimal deterministic Markov policy of a single-context model by backward
/// induction; ties go to the lowest action.
pub fn optimal_markov_policy(model: &LmdpModel) -> Result<(MemorylessPolicy, f64)> {
    let shape = model.shape();
    if shape.contexts != 1 {
        return Err(Error::Unsupported(format!(
            "Markov backward induction needs M = 1, got M = {}",
            shape.contexts
        )));
    }
    let (states, actions, horizon) = (shape.states, shape.actions, shape.horizon);
    let mut table = vec![0usize; horizon * states];
    let mut v = vec![0.0; states];
    for t in (0..horizon).rev() {
        let mut nv = vec![0.0; states];
        for s in 0..states {
            let mut best = f64::NEG_INFINITY;
            for a in 0..actions {
                let future: f64 = model.transition_row(0, s, a).iter().zip(&v).map(|(p, v)| p * v).sum();
                let q = model.mean_reward(0, s, a) + future;
                if a == 0 || beats(q, best) {
                    best = q;
                    table[t * states + s] = a;
                }
            }
            nv[s] = best;
        }
        v = nv;
    }
    let value = model.init_row(0).iter().zip(&v).map(|(p, v)| p * v).sum();
    Ok((
        MemorylessPolicy::deterministic(horizon, states, actions, &table)?,
        value,
    ))
}

/// Best deterministic memoryless policy by exhaustive enumeration in
/// lexicographic order; the first maximizer wins.
pub fn best_memoryless_policy(model: &LmdpModel, guards: &Guards) -> Result<(Policy, f64)> {
    let shape = model.shape();
    let count = (shape.actions as f64).powi((shape.states * shape.horizon) as i32);
    if count > guards.policies {
        return Err(Error::guard(
            "deterministic memoryless policies A^(S*H)",
            count,
            guards.policies,
        ));
    }
    let mut best: Option<(MemorylessPolicy, f64)> = None;
    for policy in deterministic_memoryless_policies(&shape) {
        let value = memoryless_value(model, &policy);
        if best.as_ref().is_none_or(|(_, b)| beats(value, *b)) {
            best = Some((policy, value));
        }
    }
    let (policy, value) = best.expect("at least one policy");
    Ok((policy.into(), value))
}

struct BeliefPlanner<'a> {
    model: &'a LmdpModel,
    support: &'a [f64],
    policy: HistoryPolicy,
    steps: Vec<Step>,
}

impl BeliefPlanner<'_> {
    /// Unnormalized optimal value of the node reached with per-context path
    /// weights `alpha` (which already include `w_m` and the arrival in
    /// `state`). Every history gets an entry, including zero-mass ones.
    fn solve(&mut self, state: usize, alpha: &[f64]) -> Result<f64> {
        let shape = self.model.shape();
        let k = self.steps.len();
        let last = k + 1 == shape.horizon;
        let mut best = f64::NEG_INFINITY;
        let mut best_action = 0;
        let mut child = vec![0.0; alpha.len()];
        let mut reward_mass = vec![0.0; alpha.len()];
        for a in 0..shape.actions {
            let mut q = 0.0;
            for r in 0..shape.rewards {
                for (m, slot) in reward_mass.iter_mut().enumerate() {
                    *slot = alpha[m] * self.model.reward_row(m, state, a)[r];
                }
                let mass: f64 = reward_mass.iter().sum();
                q += mass * self.support[r];
                if last {
                    continue;
                }
                self.steps.push(Step::new(state, a, r));
                for s2 in 0..shape.states {
                    for (m, slot) in child.iter_mut().enumerate() {
                        *slot = reward_mass[m] * self.model.transition_row(m, state, a)[s2];
                    }
                    let snapshot = child.clone();
                    q += self.solve(s2, &snapshot)?;
                }
                self.steps.pop();
            }
            if a == 0 || beats(q, best) {
                best = q;
                best_action = a;
            }
        }
        let mut probs = vec![0.0; shape.actions];
        probs[best_action] = 1.0;
        self.policy.insert(
            HistoryKey {
                start: 0,
                steps: self.steps.clone(),
                state: state as u16,
            },
            probs,
        )?;
        Ok(best)
    }
}

/// Optimal history-dependent policy by backward induction over the whole
/// history tree, carrying unnormalized context beliefs. Ties go to the
/// lowest action index.
pub fn optimal_history_policy(model: &LmdpModel, guards: &Guards) -> Result<(Policy, f64)> {
    guards.check_trajectories(model)?;
    let shape = model.shape();
    let mut planner = BeliefPlanner {
        model,
        support: model.reward_support(),
        policy: HistoryPolicy::new(shape.actions),
        steps: Vec::with_capacity(shape.horizon),
    };
    let mut value = 0.0;
    for s in 0..shape.states {
        let alpha: Vec<f64> = (0..shape.contexts)
            .map(|m| model.weights()[m] * model.init_row(m)[s])
            .collect();
        value += planner.solve(s, &alpha)?;
    }
    Ok((Policy::History(planner.policy), value))
}
