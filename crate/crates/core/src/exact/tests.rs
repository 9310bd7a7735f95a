use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::checkpoint::CheckpointSpec;
use crate::model::{perturb_model, tests::deterministic_mdp, Shape};
use crate::policy::{build_segmented_policy, MemorylessPolicy, MixturePolicy};
use crate::random::{default_reward_support, random_deterministic_policy, random_model, random_stochastic_policy};
use crate::sample::sample_trajectory;
use crate::trajectory::{Step, Trajectory};

/// Probability that `policy` picks the actions of `traj` on steps
/// `start..end`, with its memory starting at `start`. When `uniform_last` is
/// set the final step is forced uniform.
pub(crate) fn oracle_action_weight(
    policy: &Policy,
    traj: &Trajectory,
    start: usize,
    end: usize,
    uniform_last: bool,
) -> f64 {
    let actions = policy.num_actions();
    match policy {
        Policy::Memoryless(p) => (start..end)
            .map(|t| {
                if uniform_last && t + 1 == end {
                    1.0 / actions as f64
                } else {
                    let st = traj.steps[t];
                    p.action_probs(t, st.state as usize)[st.action as usize]
                }
            })
            .product(),
        Policy::History(p) => (start..end)
            .map(|t| {
                if uniform_last && t + 1 == end {
                    return 1.0 / actions as f64;
                }
                let st = traj.steps[t];
                let key = crate::policy::HistoryKey {
                    start: start as u16,
                    steps: traj.steps[start..t].to_vec(),
                    state: st.state,
                };
                p.get(&key).expect("oracle history entry")[st.action as usize]
            })
            .product(),
        Policy::Mixture(p) => p
            .components()
            .iter()
            .map(|(w, c)| w * oracle_action_weight(c, traj, start, end, uniform_last))
            .sum(),
        Policy::Segmented(p) => {
            let spec = p.spec();
            let mut weight = 1.0;
            for (i, base) in p.bases().iter().enumerate() {
                let seg_start = if i == 0 { 0 } else { spec.tau[i - 1] };
                let seg_end = spec.tau.get(i).copied().unwrap_or(traj.len());
                let forced = spec.z.get(i).copied().unwrap_or(false);
                weight *= oracle_action_weight(base, traj, seg_start, seg_end, forced);
            }
            weight
        }
    }
}

/// Naive per-context likelihood product `T_m(s_1) Π_t R_m T_m`.
pub(crate) fn oracle_context_likelihood(model: &LmdpModel, m: usize, traj: &Trajectory) -> f64 {
    let mut p = model.init_row(m)[traj.steps[0].state as usize];
    for t in 0..traj.len() {
        let st = traj.steps[t];
        let (s, a) = (st.state as usize, st.action as usize);
        p *= model.reward_row(m, s, a)[st.reward as usize];
        if t + 1 < traj.len() {
            p *= model.transition_row(m, s, a)[traj.steps[t + 1].state as usize];
        }
    }
    p
}

/// Every trajectory of the shape, by an odometer over step outcomes.
pub(crate) fn all_trajectories(shape: &Shape) -> Vec<Trajectory> {
    let mut out = Vec::new();
    let mut digits = vec![(0usize, 0usize, 0usize); shape.horizon];
    loop {
        out.push(Trajectory::new(
            digits.iter().map(|&(s, a, r)| Step::new(s, a, r)).collect(),
        ));
        let mut i = shape.horizon;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            let d = &mut digits[i];
            d.2 += 1;
            if d.2 == shape.rewards {
                d.2 = 0;
                d.1 += 1;
                if d.1 == shape.actions {
                    d.1 = 0;
                    d.0 += 1;
                }
            }
            if d.0 < shape.states {
                break;
            }
            *d = (0, 0, 0);
        }
    }
}

fn oracle_distribution(model: &LmdpModel, policy: &Policy, context: Option<usize>) -> BTreeMap<u64, f64> {
    let shape = model.shape();
    let mut out = BTreeMap::new();
    for traj in all_trajectories(&shape) {
        let aw = oracle_action_weight(policy, &traj, 0, shape.horizon, false);
        let mp = match context {
            Some(m) => oracle_context_likelihood(model, m, &traj),
            None => (0..shape.contexts)
                .map(|m| model.weights()[m] * oracle_context_likelihood(model, m, &traj))
                .sum(),
        };
        if aw * mp != 0.0 {
            out.insert(traj.encode(&shape), aw * mp);
        }
    }
    out
}

fn assert_matches(dist: &TrajectoryDistribution, oracle: &BTreeMap<u64, f64>, tol: f64) {
    for (k, p) in dist.iter() {
        let q = oracle.get(&k).copied().unwrap_or(0.0);
        assert!((p - q).abs() <= tol, "key {k}: {p} vs oracle {q}");
    }
    for (k, q) in oracle {
        assert!(
            (dist.get(*k) - q).abs() <= tol,
            "key {k}: {} vs oracle {q}",
            dist.get(*k)
        );
    }
}

fn small_shape() -> Shape {
    Shape {
        contexts: 2,
        states: 2,
        actions: 2,
        horizon: 3,
        rewards: 2,
    }
}

fn rand_model(rng: &mut ChaCha8Rng, shape: Shape) -> LmdpModel {
    random_model(rng, shape, default_reward_support(shape.rewards), 0.7).unwrap()
}

/// A random policy of every supported variant, chosen by `kind`.
pub(crate) fn random_policy(rng: &mut ChaCha8Rng, shape: &Shape, kind: usize) -> Policy {
    match kind % 4 {
        0 => random_stochastic_policy(rng, shape).into(),
        1 => MixturePolicy::new(vec![
            (0.3, random_deterministic_policy(rng, shape).into()),
            (0.7, random_stochastic_policy(rng, shape).into()),
        ])
        .unwrap()
        .into(),
        _ => {
            let t1 = rng.gen_range(1..shape.horizon);
            let spec = CheckpointSpec::new(vec![t1], vec![kind % 4 == 3]).unwrap();
            let mix: Policy = MixturePolicy::uniform(vec![
                random_deterministic_policy(rng, shape).into(),
                random_deterministic_policy(rng, shape).into(),
            ])
            .unwrap()
            .into();
            build_segmented_policy(vec![random_stochastic_policy(rng, shape).into(), mix], spec).unwrap()
        }
    }
}

#[test]
fn full_distribution_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = Guards::default();
    for i in 0..24 {
        let model = rand_model(&mut rng, small_shape());
        let policy = random_policy(&mut rng, &model.shape(), i);
        let dist = trajectory_distribution(&model, &policy, &g).unwrap();
        dist.check().unwrap();
        assert_matches(&dist, &oracle_distribution(&model, &policy, None), 1e-12);
        for (m, d) in context_trajectory_distributions(&model, &policy, &g)
            .unwrap()
            .iter()
            .enumerate()
        {
            assert_matches(d, &oracle_distribution(&model, &policy, Some(m)), 1e-12);
        }
    }
}

#[test]
fn action_weight_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = small_shape();
    for i in 0..8 {
        let policy = random_policy(&mut rng, &shape, i);
        for traj in all_trajectories(&shape) {
            let a = policy.trajectory_weight(&traj).unwrap();
            let b = oracle_action_weight(&policy, &traj, 0, shape.horizon, false);
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn deterministic_model_has_point_mass() {
    let model = deterministic_mdp(3);
    let policy: Policy = MemorylessPolicy::deterministic(3, 2, 2, &[1, 1, 0, 0, 1, 0])
        .unwrap()
        .into();
    let dist = trajectory_distribution(&model, &policy, &Guards::default()).unwrap();
    assert_eq!(dist.len(), 1);
    assert_eq!(dist.total_mass(), 1.0);
}

#[test]
fn checkpoint_marginals_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = Guards::default();
    let shape = small_shape();
    let scopes = [
        Scope::full_events(&[1]),
        Scope::full_events(&[2, 3]),
        Scope::full_events(&[1, 2, 3]),
        Scope::Checkpoints {
            tau: vec![1, 3],
            kinds: vec![EventKind::NextState, EventKind::Full],
        },
        Scope::Checkpoints {
            tau: vec![2, 3],
            kinds: vec![EventKind::Full, EventKind::NextState],
        },
    ];
    for i in 0..12 {
        let model = rand_model(&mut rng, shape);
        let policy = random_policy(&mut rng, &shape, i);
        let full = context_trajectory_distributions(&model, &policy, &g).unwrap();
        for scope in &scopes {
            let marginals = context_checkpoint_marginals(&model, &policy, scope, &g).unwrap();
            let Scope::Checkpoints { tau, kinds } = scope else {
                unreachable!()
            };
            for (m, marginal) in marginals.iter().enumerate() {
                marginal.check().unwrap();
                let mut brute: BTreeMap<u64, f64> = BTreeMap::new();
                for (code, p) in full[m].iter() {
                    let traj = Trajectory::decode(code, &shape);
                    let mut key = 0u64;
                    for (&t, &kind) in tau.iter().zip(kinds) {
                        let step = traj.steps[t - 1];
                        let next = traj.steps.get(t).map(|s| s.state as u64).unwrap_or(shape.states as u64);
                        let digit = match kind {
                            EventKind::Full => {
                                let sar = (step.state as u64 * shape.actions as u64 + step.action as u64)
                                    * shape.rewards as u64
                                    + step.reward as u64;
                                sar * (shape.states as u64 + 1) + next
                            }
                            EventKind::NextState => next,
                        };
                        key = key * kind.radix(&shape) + digit;
                    }
                    *brute.entry(key).or_insert(0.0) += p;
                }
                assert_matches(marginal, &brute, 1e-12);
            }
        }
    }
}

#[test]
fn single_context_marginal_equals_full_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shape = Shape {
        contexts: 1,
        ..small_shape()
    };
    let g = Guards::default();
    let model = rand_model(&mut rng, shape);
    let policy: Policy = random_stochastic_policy(&mut rng, &shape).into();
    for t in 1..=3 {
        let spec = CheckpointSpec::new(vec![t], vec![false]).unwrap();
        let cond = latent_conditional_marginal(&model, 0, &policy, &spec, &g).unwrap();
        let uncond = checkpoint_marginal(&model, &policy, &Scope::full_events(&[t]), &g).unwrap();
        assert!(tv_distance(&cond, &uncond).unwrap() < 1e-15);
    }
}

#[test]
fn mixture_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = Guards::default();
    let shape = small_shape();
    for _ in 0..10 {
        let model = rand_model(&mut rng, shape);
        let a: Policy = random_stochastic_policy(&mut rng, &shape).into();
        let b: Policy = random_deterministic_policy(&mut rng, &shape).into();
        let w: f64 = rng.gen();
        let mix: Policy = MixturePolicy::new(vec![(w, a.clone()), (1.0 - w, b.clone())])
            .unwrap()
            .into();
        let da = trajectory_distribution(&model, &a, &g).unwrap();
        let db = trajectory_distribution(&model, &b, &g).unwrap();
        let dm = trajectory_distribution(&model, &mix, &g).unwrap();
        let combo = TrajectoryDistribution::mix(&[(w, &da), (1.0 - w, &db)]).unwrap();
        for (k, p) in dm.iter() {
            assert!((p - combo.get(k)).abs() < 1e-12);
        }
        assert!(tv_distance(&dm, &combo).unwrap() < 1e-12);
    }
}

#[test]
fn segmented_with_identical_memoryless_bases_is_the_base() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let g = Guards::default();
    let shape = small_shape();
    for _ in 0..10 {
        let model = rand_model(&mut rng, shape);
        let base: Policy = random_stochastic_policy(&mut rng, &shape).into();
        let plain = trajectory_distribution(&model, &base, &g).unwrap();
        let empty = build_segmented_policy(vec![base.clone()], CheckpointSpec::empty()).unwrap();
        let seg = build_segmented_policy(
            vec![base.clone(), base.clone(), base.clone()],
            CheckpointSpec::new(vec![1, 2], vec![false, false]).unwrap(),
        )
        .unwrap();
        for p in [empty, seg] {
            let d = trajectory_distribution(&model, &p, &g).unwrap();
            for (k, q) in plain.iter() {
                assert!((d.get(k) - q).abs() < 1e-12);
            }
            assert_eq!(d.len(), plain.len());
        }
    }
}

#[test]
fn normalization_and_reward_extremes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = Guards::default();
    let shape = small_shape();
    let model = rand_model(&mut rng, shape);
    for i in 0..8 {
        let p = random_policy(&mut rng, &shape, i);
        let d = trajectory_distribution(&model, &p, &g).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-9);
    }
    let mut zero = model.clone();
    for m in 0..2 {
        for s in 0..2 {
            for a in 0..2 {
                zero.reward_row_mut(m, s, a).copy_from_slice(&[1.0, 0.0]);
            }
        }
    }
    let mut one = zero.clone();
    for m in 0..2 {
        for s in 0..2 {
            for a in 0..2 {
                one.reward_row_mut(m, s, a).copy_from_slice(&[0.0, 1.0]);
            }
        }
    }
    let p = random_policy(&mut rng, &shape, 2);
    assert_eq!(policy_value(&zero, &p, &g).unwrap(), 0.0);
    assert!((policy_value(&one, &p, &g).unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn value_difference_bounded_by_horizon_times_tv() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = Guards::default();
    let shape = small_shape();
    for i in 0..100 {
        let a = rand_model(&mut rng, shape);
        let b = rand_model(&mut rng, shape);
        let p = random_policy(&mut rng, &shape, i);
        let tv = tv_distance(
            &trajectory_distribution(&a, &p, &g).unwrap(),
            &trajectory_distribution(&b, &p, &g).unwrap(),
        )
        .unwrap();
        let gap = (policy_value(&a, &p, &g).unwrap() - policy_value(&b, &p, &g).unwrap()).abs();
        assert!(gap <= shape.horizon as f64 * tv + 1e-9, "{gap} > H * {tv}");
    }
}

#[test]
fn memoryless_value_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = Guards::default();
    let shape = small_shape();
    for _ in 0..10 {
        let model = rand_model(&mut rng, shape);
        let p = random_stochastic_policy(&mut rng, &shape);
        let fast = memoryless_value(&model, &p);
        // Route through the distribution by wrapping in a one-component mixture.
        let wrapped: Policy = MixturePolicy::new(vec![(1.0, p.into())]).unwrap().into();
        let slow = policy_value(&model, &wrapped, &g).unwrap();
        assert!((fast - slow).abs() < 1e-12);
    }
}

#[test]
fn planning_relations() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let g = Guards::default();
    for _ in 0..6 {
        let single = rand_model(
            &mut rng,
            Shape {
                contexts: 1,
                ..small_shape()
            },
        );
        let (_, v_hist) = optimal_history_policy(&single, &g).unwrap();
        let (_, v_markov) = optimal_markov_policy(&single).unwrap();
        let (_, v_mls) = best_memoryless_policy(&single, &g).unwrap();
        assert!((v_hist - v_markov).abs() < 1e-12);
        assert!((v_mls - v_markov).abs() < 1e-12);

        let model = rand_model(&mut rng, small_shape());
        let (hp, v_hist) = optimal_history_policy(&model, &g).unwrap();
        assert!((policy_value(&model, &hp, &g).unwrap() - v_hist).abs() < 1e-12);
        let (mp, v_mls) = best_memoryless_policy(&model, &g).unwrap();
        assert!((policy_value(&model, &mp, &g).unwrap() - v_mls).abs() < 1e-12);
        assert!(v_mls <= v_hist + 1e-12);
        for p in crate::policy::deterministic_memoryless_policies(&model.shape()) {
            assert!(memoryless_value(&model, &p) <= v_hist + 1e-12);
        }
    }
}

#[test]
fn pairwise_tv_matches_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let g = Guards::default();
    let shape = small_shape();
    let models: Vec<LmdpModel> = (0..4).map(|_| rand_model(&mut rng, shape)).collect();
    let refs: Vec<&LmdpModel> = models.iter().collect();
    for _ in 0..5 {
        let p = random_stochastic_policy(&mut rng, &shape);
        let fast = pairwise_memoryless_tv(&refs, &p);
        let pol: Policy = p.into();
        let dists: Vec<_> = models
            .iter()
            .map(|m| trajectory_distribution(m, &pol, &g).unwrap())
            .collect();
        let mut idx = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                let slow = tv_distance(&dists[i], &dists[j]).unwrap();
                assert!((fast[idx] - slow).abs() < 1e-12);
                idx += 1;
            }
        }
    }
}

#[test]
fn guard_refuses_large_enumeration() {
    let model = deterministic_mdp(3);
    let policy: Policy = MemorylessPolicy::uniform(3, 2, 2).into();
    let tight = Guards {
        support: 100.0,
        policies: 10.0,
    };
    assert!(matches!(
        trajectory_distribution(&model, &policy, &tight),
        Err(crate::Error::GuardExceeded { .. })
    ));
    assert!(matches!(
        best_memoryless_policy(&model, &tight),
        Err(crate::Error::GuardExceeded { .. })
    ));
}

#[test]
fn sampled_frequencies_match_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let shape = small_shape();
    let model = rand_model(&mut rng, shape);
    let policy = random_policy(&mut rng, &shape, 3);
    let exact = trajectory_distribution(&model, &policy, &Guards::default()).unwrap();
    let n = 100_000;
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for _ in 0..n {
        let (traj, _) = sample_trajectory(&model, &policy, &mut rng).unwrap();
        let code = traj.encode(&shape);
        assert!(exact.get(code) > 0.0, "sampled a zero-probability trajectory");
        *counts.entry(code).or_default() += 1;
    }
    let bound = 4.0 * ((shape.trajectory_count() / 0.01).ln() / n as f64).sqrt();
    for (k, p) in exact.iter() {
        let freq = counts.get(&k).copied().unwrap_or(0) as f64 / n as f64;
        assert!((freq - p).abs() <= bound, "key {k}: {freq} vs {p}");
    }
}

#[test]
fn perturbation_tv_is_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let g = Guards::default();
    let shape = small_shape();
    for i in 0..100 {
        let model = rand_model(&mut rng, shape);
        let gamma = rng.gen_range(0.0..0.05);
        let p = random_policy(&mut rng, &shape, i);
        let tv = tv_distance(
            &trajectory_distribution(&model, &p, &g).unwrap(),
            &trajectory_distribution(&perturb_model(&model, gamma).unwrap(), &p, &g).unwrap(),
        )
        .unwrap();
        let bound = 2.0 * (shape.horizon * shape.states) as f64 * gamma;
        assert!(tv <= bound + 1e-12, "{tv} > {bound}");
    }
}

#[test]
fn uniform_action_at_intervention() {
    // Step 2 is forced uniform even though both bases are deterministic.
    let model = deterministic_mdp(3);
    let psi0: Policy = MemorylessPolicy::deterministic(3, 2, 2, &[0; 6]).unwrap().into();
    let psi1: Policy = MemorylessPolicy::deterministic(3, 2, 2, &[1; 6]).unwrap().into();
    let nu = build_segmented_policy(vec![psi0, psi1], CheckpointSpec::new(vec![2], vec![true]).unwrap()).unwrap();
    let marginal = checkpoint_marginal(&model, &nu, &Scope::full_events(&[2]), &Guards::default()).unwrap();
    assert_eq!(marginal.len(), 2);
    for (_, p) in marginal.iter() {
        assert_eq!(p, 0.5);
    }
}
