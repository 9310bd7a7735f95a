//! Episode sampling.

use rand::Rng;

use crate::error::Result;
use crate::model::LmdpModel;
use crate::policy::{Branches, ExecState, Policy};
use crate::trajectory::{Step, Trajectory};

/// Draws an index from a probability vector by a cumulative scan.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    // Round-off left `u` above the accumulated mass.
    last
}

fn pick<R: Rng + ?Sized>(rng: &mut R, mut branches: Branches) -> ExecState {
    if branches.len() == 1 {
        return branches.pop().expect("one branch").1;
    }
    let weights: Vec<f64> = branches.iter().map(|(w, _)| *w).collect();
    let i = sample_index(rng, &weights);
    branches.swap_remove(i).1
}

/// Runs one episode: draws `m ~ w`, then the initial state, then `H` steps.
///
/// Returns the trajectory and the latent context, which the policy never sees.
pub fn sample_trajectory<R: Rng + ?Sized>(
    model: &LmdpModel,
    policy: &Policy,
    rng: &mut R,
) -> Result<(Trajectory, usize)> {
    let m = sample_index(rng, model.weights());
    let mut exec = pick(rng, policy.begin(0));
    let mut state = sample_index(rng, model.init_row(m));
    let horizon = model.horizon();
    let mut steps = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let action = sample_index(rng, &policy.action_probs(&exec, k, state)?);
        let reward = sample_index(rng, model.reward_row(m, state, action));
        let step = Step::new(state, action, reward);
        steps.push(step);
        if k + 1 < horizon {
            exec = pick(rng, policy.advance(&exec, k, step));
            state = sample_index(rng, model.transition_row(m, state, action));
        }
    }
    Ok((Trajectory::new(steps), m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::deterministic_mdp;
    use crate::policy::MemorylessPolicy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_model_gives_unique_trajectory() {
        let model = deterministic_mdp(3);
        let policy: Policy = MemorylessPolicy::deterministic(3, 2, 2, &[1, 0, 0, 1, 1, 1])
            .unwrap()
            .into();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (traj, m) = sample_trajectory(&model, &policy, &mut rng).unwrap();
            assert_eq!(m, 0);
            // s=0 plays 1 -> s=1 plays 1 -> s=1 plays 1
            assert_eq!(
                traj.steps,
                vec![Step::new(0, 1, 0), Step::new(1, 1, 1), Step::new(1, 1, 1)]
            );
        }
    }

    #[test]
    fn sample_index_skips_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            assert_eq!(sample_index(&mut rng, &[0.0, 1.0, 0.0]), 1);
        }
    }
}
