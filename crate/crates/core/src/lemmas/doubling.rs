//! Whether each exploration iteration at least doubled some reachability
//! probability relative to the policies tested before it.

use serde::{Deserialize, Serialize};

use crate::coverage::{segment_kernels, state_marginals, CoverageValue, RatioMax, Witness};
use crate::error::{Error, Result};
use crate::model::{perturb_model, LmdpModel};
use crate::omle::{ModelClass, RunLog};
use crate::policy::MemorylessPolicy;

/// One iteration of the diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingEntry {
    pub k: usize,
    /// Largest ratio of `π^k`'s probability to the best earlier test policy.
    pub ratio: CoverageValue,
    pub witness: Option<Witness>,
    /// `ratio > 2`.
    pub doubled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub algorithm: String,
    pub gamma: Option<f64>,
    pub entries: Vec<DoublingEntry>,
    pub doubled: usize,
    /// `None` for a run without iterations.
    pub fraction: Option<f64>,
}

fn doubled(ratio: CoverageValue) -> bool {
    ratio.finite().is_none_or(|r| r > 2.0)
}

/// `P(x_t = (s, a))` per step, `[t][s * A + a]`, for an `M = 1` model.
fn state_action(model: &LmdpModel, policy: &MemorylessPolicy) -> Vec<Vec<f64>> {
    let marginals = state_marginals(model, policy);
    let actions = policy.num_actions();
    marginals[0]
        .iter()
        .enumerate()
        .map(|(t, states)| {
            let mut out = vec![0.0; states.len() * actions];
            for (s, &p) in states.iter().enumerate() {
                for (a, &q) in policy.action_probs(t, s).iter().enumerate() {
                    out[s * actions + a] = p * q;
                }
            }
            out
        })
        .collect()
}

fn mdp_entry(
    model: &LmdpModel,
    current: &MemorylessPolicy,
    prior: &[MemorylessPolicy],
) -> (CoverageValue, Option<Witness>) {
    let num = state_action(model, current);
    let previous: Vec<_> = prior.iter().map(|p| state_action(model, p)).collect();
    let actions = current.num_actions();
    let mut max = RatioMax::new(false);
    for (t, row) in num.iter().enumerate() {
        for (x, &p) in row.iter().enumerate() {
            let den = previous.iter().map(|q| q[t][x]).fold(0.0, f64::max);
            max.offer(p, den, || Witness::Mdp {
                t: t + 1,
                state: x / actions,
                action: x % actions,
            });
        }
    }
    let report = max.finish();
    (report.value, report.witness)
}

fn lmdp_entry(
    model: &LmdpModel,
    current: &MemorylessPolicy,
    prior: &[MemorylessPolicy],
) -> (CoverageValue, Option<Witness>) {
    let num = segment_kernels(model, current);
    let previous: Vec<_> = prior.iter().map(|p| segment_kernels(model, p)).collect();
    let shape = model.shape();
    let mut max = RatioMax::new(false);
    for m in 0..shape.contexts {
        for j in 0..shape.horizon {
            for l in j + 1..shape.horizon {
                for from in 0..shape.states {
                    for to in 0..shape.states {
                        let p = num.get(m, j, l, from, to);
                        let den = previous.iter().map(|k| k.get(m, j, l, from, to)).fold(0.0, f64::max);
                        max.offer(p, den, || Witness::Segment {
                            context: m,
                            from_time: j + 1,
                            to_time: l + 1,
                            from,
                            to,
                        });
                    }
                }
            }
        }
    }
    let report = max.finish();
    (report.value, report.witness)
}

/// For each iteration `k`, the largest ratio of a reachability probability
/// under `π^k` to its maximum over earlier test policies, on the true model
/// (perturbed by `gamma` when given).
///
/// MDP runs compare `P(x_t = (s, a))` against `π^1, …, π^{k−1}`. LMDP runs
/// compare `P_m(s_{t₂} = s | s_{t₁} = s')` for `t₁ < t₂` against
/// `Unif, π^1, …, π^{k−1}`. An empty prior set counts as doubled.
pub fn doubling_diagnostic(log: &RunLog, class: &ModelClass, gamma: Option<f64>) -> Result<DoublingReport> {
    if log.header.class_size != class.len() || log.header.truth != class.truth() {
        return Err(Error::ShapeMismatch("run log and model class disagree".into()));
    }
    let shape = class.shape();
    let model = match gamma {
        Some(g) => perturb_model(class.true_model(), g)?,
        None => class.true_model().clone(),
    };
    let lmdp = match log.header.algorithm.as_str() {
        "lmdp-omle" => true,
        "mdp-omle" => false,
        other => return Err(Error::Unsupported(format!("unknown algorithm {other}"))),
    };
    let mut prior = Vec::new();
    if lmdp {
        prior.push(MemorylessPolicy::uniform(shape.horizon, shape.states, shape.actions));
    }
    let mut entries = Vec::with_capacity(log.iterations.len());
    for it in &log.iterations {
        let current = MemorylessPolicy::deterministic(shape.horizon, shape.states, shape.actions, &it.policy)?;
        let (ratio, witness) = if lmdp {
            lmdp_entry(&model, &current, &prior)
        } else {
            mdp_entry(&model, &current, &prior)
        };
        entries.push(DoublingEntry {
            k: it.k,
            ratio,
            witness,
            doubled: doubled(ratio),
        });
        prior.push(current);
    }
    let count = entries.iter().filter(|e| e.doubled).count();
    Ok(DoublingReport {
        algorithm: log.header.algorithm.clone(),
        gamma,
        fraction: (!entries.is_empty()).then(|| count as f64 / entries.len() as f64),
        doubled: count,
        entries,
    })
}
