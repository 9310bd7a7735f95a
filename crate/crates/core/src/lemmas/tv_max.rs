//! Exact maxima of the trajectory TV between two models over policy classes.

use crate::error::{Error, Result};
use crate::exact::{pairwise_memoryless_tv, Guards};
use crate::model::LmdpModel;
use crate::policy::{deterministic_memoryless_policies, HistoryKey, HistoryPolicy, MemorylessPolicy, Policy};
use crate::trajectory::Step;

struct TvMaximizer<'a> {
    first: &'a LmdpModel,
    second: &'a LmdpModel,
    policy: HistoryPolicy,
    steps: Vec<Step>,
}

impl TvMaximizer<'_> {
    /// `max_a Σ_{r, s'}` over the subtree, with leaves worth `|Q₁ − Q₂|`.
    /// `alpha` holds the weighted per-context path masses of both models.
    fn solve(&mut self, state: usize, alpha: &[f64], beta: &[f64]) -> Result<f64> {
        let shape = self.first.shape();
        let last = self.steps.len() + 1 == shape.horizon;
        let mut best = f64::NEG_INFINITY;
        let mut best_action = 0;
        let mut ra = vec![0.0; alpha.len()];
        let mut rb = vec![0.0; beta.len()];
        for a in 0..shape.actions {
            let mut q = 0.0;
            for r in 0..shape.rewards {
                for (m, slot) in ra.iter_mut().enumerate() {
                    *slot = alpha[m] * self.first.reward_row(m, state, a)[r];
                }
                for (m, slot) in rb.iter_mut().enumerate() {
                    *slot = beta[m] * self.second.reward_row(m, state, a)[r];
                }
                if last {
                    q += (ra.iter().sum::<f64>() - rb.iter().sum::<f64>()).abs();
                    continue;
                }
                self.steps.push(Step::new(state, a, r));
                for s2 in 0..shape.states {
                    let ca: Vec<f64> = (0..ra.len())
                        .map(|m| ra[m] * self.first.transition_row(m, state, a)[s2])
                        .collect();
                    let cb: Vec<f64> = (0..rb.len())
                        .map(|m| rb[m] * self.second.transition_row(m, state, a)[s2])
                        .collect();
                    q += self.solve(s2, &ca, &cb)?;
                }
                self.steps.pop();
            }
            if q > best {
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

/// `max_π TV(ℙ_1^π, ℙ_2^π)(𝒯)` over history-dependent policies, with a
/// deterministic maximizer. Ties go to the lowest action index.
pub fn max_history_tv(first: &LmdpModel, second: &LmdpModel, guards: &Guards) -> Result<(f64, Policy)> {
    let shape = first.shape();
    if !shape.compatible(&second.shape()) {
        return Err(Error::ShapeMismatch("models differ in S, A, H or |R|".into()));
    }
    guards.check_trajectories(first)?;
    let mut dp = TvMaximizer {
        first,
        second,
        policy: HistoryPolicy::new(shape.actions),
        steps: Vec::with_capacity(shape.horizon),
    };
    let mut total = 0.0;
    for s in 0..shape.states {
        let alpha: Vec<f64> = (0..first.num_contexts())
            .map(|m| first.weights()[m] * first.init_row(m)[s])
            .collect();
        let beta: Vec<f64> = (0..second.num_contexts())
            .map(|m| second.weights()[m] * second.init_row(m)[s])
            .collect();
        total += dp.solve(s, &alpha, &beta)?;
    }
    Ok(((0.5 * total).min(1.0), Policy::History(dp.policy)))
}

/// `max_π TV(ℙ_1^π, ℙ_2^π)(𝒯)` over memoryless policies. The TV is
/// multilinear in the action rows, so deterministic tables suffice. The
/// first maximizer in enumeration order is returned.
pub fn max_memoryless_tv(first: &LmdpModel, second: &LmdpModel, guards: &Guards) -> Result<(f64, MemorylessPolicy)> {
    let shape = first.shape();
    if !shape.compatible(&second.shape()) {
        return Err(Error::ShapeMismatch("models differ in S, A, H or |R|".into()));
    }
    let count = (shape.actions as f64).powf((shape.states * shape.horizon) as f64);
    if count > guards.policies {
        return Err(Error::guard(
            "deterministic memoryless policies A^(SH)",
            count,
            guards.policies,
        ));
    }
    let pair = [first, second];
    let mut best: Option<(f64, MemorylessPolicy)> = None;
    for policy in deterministic_memoryless_policies(&shape) {
        let tv = pairwise_memoryless_tv(&pair, &policy)[0];
        if best.as_ref().is_none_or(|(b, _)| tv > *b) {
            best = Some((tv, policy));
        }
    }
    Ok(best.expect("at least one policy"))
}
