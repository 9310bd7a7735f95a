//! The three-context instance where single-step latent coverage is finite but
//! some history never reveals the reward of an action.

use serde::{Deserialize, Serialize};

use crate::coverage::{mdp_coverage, state_action_marginals, CoverageValue};
use crate::error::Result;
use crate::exact::{model_likelihood, Guards};
use crate::model::{LmdpModel, Shape};
use crate::policy::{HistoryKey, HistoryPolicy, MemorylessPolicy, Policy};
use crate::trajectory::{Step, Trajectory};

const SUPPORT: [f64; 3] = [-1.0, 0.0, 1.0];
const NEG: usize = 0;
const ZERO: usize = 1;
const POS: usize = 2;

/// `P_m(s_2 = s, a_2 = a)` under a behavior policy. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub context: usize,
    pub state: usize,
    pub action: usize,
    pub probability: f64,
}

/// What the instance demonstrates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterExampleRecord {
    /// Second-step state-action probabilities per context under `Unif(A)`.
    pub uniform_cells: Vec<CoverageCell>,
    /// Same under the tabulated behavior, which is uniform at step 1 and then
    /// plays the measured column of each belief.
    pub tabulated_cells: Vec<CoverageCell>,
    /// Posterior after `(a_1 = 1, r_1 = −1)`.
    pub posterior_neg: Vec<f64>,
    /// Posterior after `(a_1 = 2, r_1 = 1)`.
    pub posterior_pos: Vec<f64>,
    /// `max_{t, x, m} P_m^π(x_t = x) / P_m^ψ(x_t = x)` with `ψ = Unif(A)` and
    /// `π` always playing action 1.
    pub single_latent_coverage: CoverageValue,
    /// Same with the tabulated behavior.
    pub tabulated_single_latent_coverage: CoverageValue,
    /// Probability that context 1 plays `a_2 = 1` after `(a_1 = 1, r_1 = −1)`
    /// under the tabulated behavior, and under `π`.
    pub hidden_cell_behavior: f64,
    pub hidden_cell_target: f64,
    /// Cells the construction leaves open, set to a deterministic zero reward.
    pub free_cells: Vec<String>,
    /// Every cell positive and both posteriors exact point masses.
    pub passed: bool,
}

fn instance() -> LmdpModel {
    let shape = Shape {
        contexts: 3,
        states: 2,
        actions: 2,
        horizon: 2,
        rewards: 3,
    };
    let mut init = vec![0.0; 6];
    let mut transitions = vec![0.0; 3 * 2 * 2 * 2];
    let mut rewards = vec![0.0; 3 * 2 * 2 * 3];
    for m in 0..3 {
        init[m * 2] = 1.0;
        for s in 0..2 {
            for a in 0..2 {
                transitions[((m * 2 + s) * 2 + a) * 2 + 1] = 1.0;
            }
        }
    }
    let mut set = |m: usize, s: usize, a: usize, row: [f64; 3]| {
        let base = ((m * 2 + s) * 2 + a) * 3;
        rewards[base..base + 3].copy_from_slice(&row);
    };
    set(0, 0, 0, [1.0, 0.0, 0.0]);
    set(0, 0, 1, [0.5, 0.5, 0.0]);
    set(1, 0, 0, [0.0, 0.5, 0.5]);
    set(1, 0, 1, [0.0, 0.0, 1.0]);
    set(2, 0, 0, [0.0, 0.5, 0.5]);
    set(2, 0, 1, [0.5, 0.5, 0.0]);
    for m in 0..3 {
        for a in 0..2 {
            set(m, 1, a, [0.0, 1.0, 0.0]);
        }
    }
    set(0, 1, 1, [0.0, 0.0, 1.0]);
    set(1, 1, 0, [1.0, 0.0, 0.0]);
    LmdpModel::new(shape, SUPPORT.to_vec(), vec![1.0 / 3.0; 3], init, transitions, rewards)
        .and_then(LmdpModel::validated)
        .expect("the counter-example instance is valid")
}

/// Uniform first action, then the measured column of each belief: action 2
/// after `a_1 = 1` and action 1 after `a_1 = 2`.
fn tabulated_behavior() -> Result<Policy> {
    let mut policy = HistoryPolicy::new(2);
    policy.insert(
        HistoryKey {
            start: 0,
            steps: vec![],
            state: 0,
        },
        vec![0.5, 0.5],
    )?;
    for a1 in 0..2 {
        for r1 in [NEG, ZERO, POS] {
            let second = 1 - a1;
            let mut probs = vec![0.0; 2];
            probs[second] = 1.0;
            policy.insert(
                HistoryKey {
                    start: 0,
                    steps: vec![Step::new(0, a1, r1)],
                    state: 1,
                },
                probs,
            )?;
        }
    }
    Ok(policy.into())
}

fn second_step_cells(model: &LmdpModel, behavior: &Policy, guards: &Guards) -> Result<Vec<CoverageCell>> {
    let mut cells = Vec::new();
    for m in 0..model.num_contexts() {
        let marginals = state_action_marginals(&model.context(m), behavior, guards)?;
        for action in 0..2 {
            cells.push(CoverageCell {
                context: m,
                state: 1,
                action,
                probability: marginals[1][2 + action],
            });
        }
    }
    Ok(cells)
}

fn single_latent_coverage(
    model: &LmdpModel,
    behavior: &Policy,
    target: &Policy,
    guards: &Guards,
) -> Result<CoverageValue> {
    let mut best = CoverageValue::Finite(0.0);
    for m in 0..model.num_contexts() {
        match mdp_coverage(&model.context(m), behavior, target, guards)?.value {
            CoverageValue::Unbounded => return Ok(CoverageValue::Unbounded),
            CoverageValue::Finite(v) => {
                if best.finite().is_some_and(|b| v > b) {
                    best = CoverageValue::Finite(v);
                }
            }
        }
    }
    Ok(best)
}

/// Probability under context 1 of `(s_1, a_1 = 1, r_1 = −1), (s_2, a_2 = 1, ·)`.
fn hidden_cell(model: &LmdpModel, policy: &Policy) -> Result<f64> {
    let first = model.context(0);
    let mut total = 0.0;
    for r2 in 0..SUPPORT.len() {
        let traj = Trajectory::new(vec![Step::new(0, 0, NEG), Step::new(1, 0, r2)]);
        total += model_likelihood(&first, &traj) * policy.trajectory_weight(&traj)?;
    }
    Ok(total)
}

/// Builds the instance and evaluates the facts it is meant to show.
pub fn counter_example() -> Result<(LmdpModel, CounterExampleRecord)> {
    let model = instance();
    let guards = Guards::default();
    let uniform: Policy = MemorylessPolicy::uniform(2, 2, 2).into();
    let target: Policy = MemorylessPolicy::deterministic(2, 2, 2, &[0, 0, 0, 0])?.into();
    let tabulated = tabulated_behavior()?;
    let uniform_cells = second_step_cells(&model, &uniform, &guards)?;
    let tabulated_cells = second_step_cells(&model, &tabulated, &guards)?;
    let none = || vec![f64::NAN; 3];
    let posterior_neg = model.posterior(&[(0, 0, NEG)], 1).unwrap_or_else(none);
    let posterior_pos = model.posterior(&[(0, 1, POS)], 1).unwrap_or_else(none);
    let passed = uniform_cells.iter().all(|c| c.probability > 0.0)
        && posterior_neg == [1.0, 0.0, 0.0]
        && posterior_pos == [0.0, 1.0, 0.0];
    let record = CounterExampleRecord {
        single_latent_coverage: single_latent_coverage(&model, &uniform, &target, &guards)?,
        tabulated_single_latent_coverage: single_latent_coverage(&model, &tabulated, &target, &guards)?,
        hidden_cell_behavior: hidden_cell(&model, &tabulated)?,
        hidden_cell_target: hidden_cell(&model, &target)?,
        uniform_cells,
        tabulated_cells,
        posterior_neg,
        posterior_pos,
        free_cells: vec!["R_1(.|s=2, a=1)".into(), "R_2(.|s=2, a=2)".into()],
        passed,
    };
    Ok((model, record))
}
