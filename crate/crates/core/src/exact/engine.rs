//! Forward pass over `(state, execution state, key prefix)` with per-context
//! path weights.

use std::collections::BTreeMap;

use indexmap::IndexMap;

use super::distribution::{event_digit, EventKind, Scope, TrajectoryDistribution};
use super::Guards;
use crate::error::{Error, Result};
use crate::model::{LmdpModel, Shape};
use crate::policy::{ExecState, Policy};
use crate::trajectory::{Step, Trajectory};

type Layer = IndexMap<(u16, ExecState, u64), Vec<f64>>;

fn accumulate(layer: &mut Layer, key: (u16, ExecState, u64), scale: f64, weights: &[f64]) {
    let slot = layer.entry(key).or_insert_with(|| vec![0.0; weights.len()]);
    for (acc, w) in slot.iter_mut().zip(weights) {
        *acc += scale * w;
    }
}

/// Per-time digit kinds for a scope; `None` where nothing is logged.
fn digits_for(scope: &Scope, shape: &Shape) -> Result<Vec<Option<EventKind>>> {
    match scope {
        Scope::Full => Ok(vec![Some(EventKind::Full); shape.horizon]),
        Scope::Checkpoints { tau, kinds } => {
            if tau.len() != kinds.len() {
                return Err(Error::InvalidCheckpoints(
                    "one event kind per checkpoint required".into(),
                ));
            }
            if tau.windows(2).any(|w| w[0] >= w[1]) || tau.iter().any(|&t| t == 0 || t > shape.horizon) {
                return Err(Error::InvalidCheckpoints(format!(
                    "checkpoints {tau:?} invalid for horizon {}",
                    shape.horizon
                )));
            }
            let mut out = vec![None; shape.horizon];
            for (&t, &k) in tau.iter().zip(kinds) {
                out[t - 1] = Some(k);
            }
            Ok(out)
        }
    }
}

fn check_guard(scope: &Scope, shape: &Shape, policy: &Policy, guards: &Guards) -> Result<()> {
    let full = shape.trajectory_count();
    let needed = match scope {
        Scope::Full => full,
        Scope::Checkpoints { kinds, .. } => {
            let keys: f64 = kinds.iter().map(|k| k.radix(shape) as f64).product();
            let keys = keys * shape.states as f64;
            if policy.has_memory() {
                keys.max(full)
            } else {
                keys
            }
        }
    };
    if needed > guards.support {
        return Err(Error::guard("support entries", needed, guards.support));
    }
    Ok(())
}

/// Per-context probabilities of every key in `scope`, conditioned on the
/// context (not weighted by `w`).
pub(crate) fn forward(
    model: &LmdpModel,
    policy: &Policy,
    scope: &Scope,
    guards: &Guards,
) -> Result<BTreeMap<u64, Vec<f64>>> {
    let shape = model.shape();
    policy.check(&shape)?;
    check_guard(scope, &shape, policy, guards)?;
    let digits = digits_for(scope, &shape)?;
    let Shape {
        contexts,
        states,
        actions,
        horizon,
        rewards,
    } = shape;
    let full_radix = shape.step_radix() as u64;
    let full_scope = matches!(scope, Scope::Full);

    let mut layer = Layer::new();
    for (bw, exec) in policy.begin(0) {
        for s in 0..states {
            let w: Vec<f64> = (0..contexts).map(|m| model.init_row(m)[s]).collect();
            if w.iter().any(|&p| p > 0.0) {
                accumulate(&mut layer, (s as u16, exec.clone(), 0), bw, &w);
            }
        }
    }

    let mut out: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut rv = vec![0.0; contexts];
    let mut tv = vec![0.0; contexts];
    for (k, digit) in digits.iter().enumerate() {
        let last = k + 1 == horizon;
        let mut next = Layer::new();
        for ((s, exec, code), weights) in &layer {
            let s = *s as usize;
            let probs = policy.action_probs(exec, k, s)?;
            for (a, &pa) in probs.iter().enumerate().take(actions) {
                if pa == 0.0 {
                    continue;
                }
                for r in 0..rewards {
                    let mut any = false;
                    for m in 0..contexts {
                        rv[m] = weights[m] * pa * model.reward_row(m, s, a)[r];
                        any |= rv[m] > 0.0;
                    }
                    if !any {
                        continue;
                    }
                    let step = Step::new(s, a, r);
                    if last {
                        let code = match digit {
                            Some(_) if full_scope => code * full_radix + step.code(&shape),
                            Some(kind) => code * kind.radix(&shape) + event_digit(*kind, &shape, step, None),
                            None => *code,
                        };
                        let slot = out.entry(code).or_insert_with(|| vec![0.0; contexts]);
                        for (acc, p) in slot.iter_mut().zip(&rv) {
                            *acc += p;
                        }
                        continue;
                    }
                    let branches = policy.advance(exec, k, step);
                    for s2 in 0..states {
                        let mut any = false;
                        for m in 0..contexts {
                            tv[m] = rv[m] * model.transition_row(m, s, a)[s2];
                            any |= tv[m] > 0.0;
                        }
                        if !any {
                            continue;
                        }
                        let code = match digit {
                            Some(_) if full_scope => code * full_radix + step.code(&shape),
                            Some(kind) => code * kind.radix(&shape) + event_digit(*kind, &shape, step, Some(s2)),
                            None => *code,
                        };
                        for (bw, e) in &branches {
                            accumulate(&mut next, (s2 as u16, e.clone(), code), *bw, &tv);
                        }
                    }
                }
            }
        }
        layer = next;
    }
    Ok(out)
}

/// Splits per-context key weights into one distribution per context.
pub(crate) fn split_contexts(
    scope: &Scope,
    shape: Shape,
    table: &BTreeMap<u64, Vec<f64>>,
) -> Vec<TrajectoryDistribution> {
    (0..shape.contexts)
        .map(|m| {
            let probs = table.iter().map(|(&k, v)| (k, v[m])).collect();
            TrajectoryDistribution::from_map(scope.clone(), shape, probs)
        })
        .collect()
}

/// Mixes per-context key weights with the model's context weights.
pub(crate) fn mix_contexts(
    scope: &Scope,
    model: &LmdpModel,
    table: &BTreeMap<u64, Vec<f64>>,
) -> TrajectoryDistribution {
    let w = model.weights();
    let probs = table
        .iter()
        .map(|(&k, v)| (k, v.iter().zip(w).map(|(p, w)| p * w).sum()))
        .collect();
    TrajectoryDistribution::from_map(scope.clone(), model.shape(), probs)
}

/// Policy-independent part of a trajectory's probability,
/// `Σ_m w_m T_m(s_1) Π_t R_m(r_t|s_t,a_t) T_m(s_{t+1}|s_t,a_t)`.
pub fn model_likelihood(model: &LmdpModel, trajectory: &Trajectory) -> f64 {
    let steps = &trajectory.steps;
    let mut total = 0.0;
    for (m, &w) in model.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let Some(first) = steps.first() else {
            total += w;
            continue;
        };
        let mut p = w * model.init_row(m)[first.state as usize];
        for (i, st) in steps.iter().enumerate() {
            if p == 0.0 {
                break;
            }
            let (s, a) = (st.state as usize, st.action as usize);
            p *= model.reward_row(m, s, a)[st.reward as usize];
            if let Some(next) = steps.get(i + 1) {
                p *= model.transition_row(m, s, a)[next.state as usize];
            }
        }
        total += p;
    }
    total
}
