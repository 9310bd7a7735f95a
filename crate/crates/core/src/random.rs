//! Seeded random models and policies.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{LmdpModel, Shape};
use crate::policy::MemorylessPolicy;

/// Evenly spaced rewards in `[0, 1]`; a single reward is `0`.
pub fn default_reward_support(size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// A Dirichlet(`concentration`, ..., `concentration`) probability vector.
pub fn dirichlet_row<R: Rng + ?Sized>(rng: &mut R, len: usize, concentration: f64) -> Result<Vec<f64>> {
    let gamma = Gamma::new(concentration, 1.0).map_err(|_| Error::OutOfRange {
        name: "concentration",
        value: concentration,
        expected: "concentration > 0",
    })?;
    let mut row: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = row.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        for p in &mut row {
            *p /= sum;
        }
    } else {
        // Every draw underflowed; fall back to a point mass.
        row.iter_mut().for_each(|p| *p = 0.0);
        row[rng.gen_range(0..len)] = 1.0;
    }
    Ok(row)
}

/// A random model with every row drawn from a symmetric Dirichlet.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    shape: Shape,
    reward_support: Vec<f64>,
    concentration: f64,
) -> Result<LmdpModel> {
    let Shape {
        contexts,
        states,
        actions,
        rewards,
        ..
    } = shape;
    let weights = dirichlet_row(rng, contexts, concentration.max(1.0))?;
    let mut init = Vec::with_capacity(contexts * states);
    let mut transitions = Vec::with_capacity(contexts * states * actions * states);
    let mut reward_rows = Vec::with_capacity(contexts * states * actions * rewards);
    for _ in 0..contexts {
        init.extend(dirichlet_row(rng, states, concentration)?);
        for _ in 0..states * actions {
            transitions.extend(dirichlet_row(rng, states, concentration)?);
        }
        for _ in 0..states * actions {
            reward_rows.extend(dirichlet_row(rng, rewards, concentration)?);
        }
    }
    LmdpModel::new(shape, reward_support, weights, init, transitions, reward_rows)?.validated()
}

/// A copy of `model` in which each row (weights, initial rows, transition
/// and reward rows) is independently re-drawn with probability `fraction`.
/// A re-drawn row is `(1 − mix) · old + mix · fresh` with a fresh Dirichlet
/// draw. At least one row is always re-drawn.
pub fn resample_rows<R: Rng + ?Sized>(
    rng: &mut R,
    model: &LmdpModel,
    fraction: f64,
    mix: f64,
    concentration: f64,
) -> Result<LmdpModel> {
    for (name, v) in [("resample fraction", fraction), ("resample mix", mix)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange {
                name,
                value: v,
                expected: "between 0 and 1",
            });
        }
    }
    let blend = |old: &mut [f64], fresh: Vec<f64>| {
        for (o, f) in old.iter_mut().zip(fresh) {
            *o = (1.0 - mix) * *o + mix * f;
        }
    };
    let Shape {
        contexts,
        states,
        actions,
        rewards,
        ..
    } = model.shape();
    let mut out = model.clone();
    let rows = 1 + contexts * (1 + 2 * states * actions);
    let mut chosen: Vec<bool> = (0..rows).map(|_| rng.gen_bool(fraction)).collect();
    if !chosen.iter().any(|&c| c) {
        chosen[rng.gen_range(0..rows)] = true;
    }
    let mut next = chosen.into_iter();
    if next.next() == Some(true) {
        let row = dirichlet_row(rng, contexts, concentration.max(1.0))?;
        blend(out.weights_mut(), row);
    }
    for m in 0..contexts {
        if next.next() == Some(true) {
            let row = dirichlet_row(rng, states, concentration)?;
            blend(out.init_row_mut(m), row);
        }
        for s in 0..states {
            for a in 0..actions {
                if next.next() == Some(true) {
                    let row = dirichlet_row(rng, states, concentration)?;
                    blend(out.transition_row_mut(m, s, a), row);
                }
                if next.next() == Some(true) {
                    let row = dirichlet_row(rng, rewards, concentration)?;
                    blend(out.reward_row_mut(m, s, a), row);
                }
            }
        }
    }
    out.validated()
}

/// A uniformly random deterministic memoryless policy.
pub fn random_deterministic_policy<R: Rng + ?Sized>(rng: &mut R, shape: &Shape) -> MemorylessPolicy {
    let table: Vec<usize> = (0..shape.horizon * shape.states)
        .map(|_| rng.gen_range(0..shape.actions))
        .collect();
    MemorylessPolicy::deterministic(shape.horizon, shape.states, shape.actions, &table).expect("valid table")
}

/// A memoryless policy with Dirichlet(1) action rows.
pub fn random_stochastic_policy<R: Rng + ?Sized>(rng: &mut R, shape: &Shape) -> MemorylessPolicy {
    let mut probs = Vec::with_capacity(shape.horizon * shape.states * shape.actions);
    for _ in 0..shape.horizon * shape.states {
        probs.extend(dirichlet_row(rng, shape.actions, 1.0).expect("positive concentration"));
    }
    MemorylessPolicy::from_table(shape.horizon, shape.states, shape.actions, probs).expect("rows normalized")
}
