use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::checkpoint::CheckpointSpec;
use crate::exact::tests::{all_trajectories, oracle_action_weight, oracle_context_likelihood};
use crate::exact::{context_checkpoint_marginals, latent_conditional_marginal, optimal_history_policy, policy_value};
use crate::model::Shape;
use crate::omle::{run_lmdp_omle, run_mdp_omle, AlgoParams, ModelClass};
use crate::policy::{HistoryKey, MemorylessPolicy};
use crate::random::{default_reward_support, random_deterministic_policy, random_model, random_stochastic_policy};
use crate::trajectory::{Step, Trajectory};

fn shape(contexts: usize, states: usize, actions: usize, horizon: usize) -> Shape {
    Shape {
        contexts,
        states,
        actions,
        horizon,
        rewards: 2,
    }
}

fn model(rng: &mut ChaCha8Rng, shape: Shape) -> LmdpModel {
    random_model(rng, shape, default_reward_support(shape.rewards), 0.8).unwrap()
}

fn mixture_likelihood(model: &LmdpModel, traj: &Trajectory) -> f64 {
    (0..model.num_contexts())
        .map(|m| model.weights()[m] * oracle_context_likelihood(model, m, traj))
        .sum()
}

/// `½ Σ_τ π(τ) |Q₁(τ) − Q₂(τ)|` by listing every trajectory.
fn oracle_tv(first: &LmdpModel, second: &LmdpModel, weight: impl Fn(&Trajectory) -> f64) -> f64 {
    all_trajectories(&first.shape())
        .iter()
        .map(|t| 0.5 * weight(t) * (mixture_likelihood(first, t) - mixture_likelihood(second, t)).abs())
        .sum()
}

/// `P(x_t = x, y_t = y)` keyed by `(step, next state)` from whole trajectories.
fn oracle_step_marginal(
    model: &LmdpModel,
    policy: &Policy,
    t: usize,
) -> std::collections::BTreeMap<(Step, Option<u16>), f64> {
    let mut out = std::collections::BTreeMap::new();
    let h = model.horizon();
    for traj in all_trajectories(&model.shape()) {
        let p = mixture_likelihood(model, &traj) * oracle_action_weight(policy, &traj, 0, h, false);
        let next = (t < h).then(|| traj.steps[t].state);
        *out.entry((traj.steps[t - 1], next)).or_insert(0.0) += p;
    }
    out
}

fn oracle_marginal_tv(first: &LmdpModel, second: &LmdpModel, policy: &Policy, t: usize) -> f64 {
    let p = oracle_step_marginal(first, policy, t);
    let q = oracle_step_marginal(second, policy, t);
    0.5 * p
        .iter()
        .map(|(k, v)| (v - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// `max_{t,s,a} P^π(s_t, a_t) / P^ψ(s_t, a_t)` by listing every trajectory.
fn oracle_mdp_coverage(model: &LmdpModel, behavior: &Policy, target: &Policy) -> Option<f64> {
    let h = model.horizon();
    let mut best: f64 = 0.0;
    for t in 1..=h {
        let p = oracle_step_marginal(model, target, t);
        let q = oracle_step_marginal(model, behavior, t);
        let sa = |m: &std::collections::BTreeMap<(Step, Option<u16>), f64>, s: u16, a: u16| -> f64 {
            m.iter()
                .filter(|((st, _), _)| st.state == s && st.action == a)
                .map(|(_, v)| v)
                .sum()
        };
        for s in 0..model.num_states() as u16 {
            for a in 0..model.num_actions() as u16 {
                let (num, den) = (sa(&p, s, a), sa(&q, s, a));
                if num > 0.0 {
                    if den <= 0.0 {
                        return None;
                    }
                    best = best.max(num / den);
                }
            }
        }
    }
    Some(best)
}

#[test]
fn ope_mdp_matches_oracle_on_both_sides() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let g = Guards::default();
    for _ in 0..12 {
        let sh = shape(1, 2, 2, 3);
        let (truth, other) = (model(&mut rng, sh), model(&mut rng, sh));
        let behavior: Policy = random_stochastic_policy(&mut rng, &sh).into();
        let target: Policy = random_deterministic_policy(&mut rng, &sh).into();
        let report = check_ope_mdp(&truth, &other, &behavior, &target, &g).unwrap();
        let h = sh.horizon;
        let lhs = oracle_tv(&truth, &other, |t| oracle_action_weight(&target, t, 0, h, false));
        assert!((report.lhs - lhs).abs() < 1e-12);
        let sum: f64 = (1..=h).map(|t| oracle_marginal_tv(&truth, &other, &behavior, t)).sum();
        let c = oracle_mdp_coverage(&truth, &behavior, &target).unwrap();
        assert!((report.rhs.unwrap() - 2.0 * c * sum).abs() < 1e-9 * (1.0 + 2.0 * c * sum));
        assert!(report.holds, "{report:?}");
    }
}

#[test]
fn ope_mdp_identical_models_are_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sh = shape(1, 3, 2, 3);
    let truth = model(&mut rng, sh);
    let behavior: Policy = random_stochastic_policy(&mut rng, &sh).into();
    let target: Policy = random_deterministic_policy(&mut rng, &sh).into();
    let r = check_ope_mdp(&truth, &truth, &behavior, &target, &Guards::default()).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert_eq!(r.rhs, Some(0.0));
    assert!(r.holds && !r.vacuous);
}

#[test]
fn ope_mdp_uncovered_target_is_vacuous() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sh = shape(1, 2, 2, 3);
    let (truth, other) = (model(&mut rng, sh), model(&mut rng, sh));
    let behavior: Policy = MemorylessPolicy::deterministic(3, 2, 2, &[0; 6]).unwrap().into();
    let target: Policy = MemorylessPolicy::deterministic(3, 2, 2, &[1; 6]).unwrap().into();
    let r = check_ope_mdp(&truth, &other, &behavior, &target, &Guards::default()).unwrap();
    assert!(r.vacuous && r.holds);
    assert_eq!(r.rhs, None);
    assert_eq!(r.slack, None);
}

#[test]
fn ope_mdp_rejects_latent_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sh = shape(2, 2, 2, 3);
    let m = model(&mut rng, sh);
    let p: Policy = MemorylessPolicy::uniform(3, 2, 2).into();
    assert!(check_ope_mdp(&m, &m, &p, &p, &Guards::default()).is_err());
}

#[test]
fn ope_mdp_fuzz_has_no_violations() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let g = Guards::default();
    for _ in 0..150 {
        let sh = shape(1, rng.gen_range(1..=3), rng.gen_range(1..=2), rng.gen_range(1..=4));
        let (truth, other) = (model(&mut rng, sh), model(&mut rng, sh));
        let behavior: Policy = random_stochastic_policy(&mut rng, &sh).into();
        let target: Policy = random_stochastic_policy(&mut rng, &sh).into();
        let r = check_ope_mdp(&truth, &other, &behavior, &target, &g).unwrap();
        assert!(r.holds, "{r:?}");
    }
}

#[test]
fn ope_lmdp_holds_on_seeded_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = Guards::default();
    let sh = shape(2, 2, 2, 4);
    let uniform: Policy = MemorylessPolicy::uniform(4, 2, 2).into();
    let mut non_vacuous = 0;
    for _ in 0..10 {
        let (truth, other) = (model(&mut rng, sh), model(&mut rng, sh));
        let target: Policy = random_deterministic_policy(&mut rng, &sh).into();
        let r = check_ope_lmdp(&truth, &other, &vec![uniform.clone(); 4], &target, Some(3), &g).unwrap();
        assert!(r.holds, "{r:?}");
        non_vacuous += usize::from(!r.vacuous);
        assert!(r.lhs > 0.0);
    }
    assert!(non_vacuous > 0);
}

#[test]
fn ope_lmdp_single_context_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = Guards::default();
    let sh = shape(1, 2, 2, 3);
    for _ in 0..10 {
        let (truth, other) = (model(&mut rng, sh), model(&mut rng, sh));
        let bases: Vec<Policy> = (0..2).map(|_| random_stochastic_policy(&mut rng, &sh).into()).collect();
        let target: Policy = random_deterministic_policy(&mut rng, &sh).into();
        let r = check_ope_lmdp(&truth, &other, &bases, &target, None, &g).unwrap();
        assert!(r.holds && !r.vacuous, "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ope_lmdp_same_model_same_bases_is_zero(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sh = shape(2, 2, 2, 3);
        let truth = model(&mut rng, sh);
        let pi: Policy = random_stochastic_policy(&mut rng, &sh).into();
        let r = check_ope_lmdp(&truth, &truth, &vec![pi.clone(); 4], &pi, Some(3), &Guards::default()).unwrap();
        prop_assert_eq!(r.lhs, 0.0);
        prop_assert_eq!(r.rhs, Some(0.0));
        prop_assert!(r.holds);
    }

    #[test]
    fn history_maximum_dominates_memoryless(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sh = shape(2, 2, 2, 3);
        let (a, b) = (model(&mut rng, sh), model(&mut rng, sh));
        let g = Guards::default();
        let (hist, _) = max_history_tv(&a, &b, &g).unwrap();
        let (mls, _) = max_memoryless_tv(&a, &b, &g).unwrap();
        prop_assert!(hist >= mls - 1e-12);
        let random: Policy = random_stochastic_policy(&mut rng, &sh).into();
        let tv = oracle_tv(&a, &b, |t| oracle_action_weight(&random, t, 0, 3, false));
        prop_assert!(tv <= mls + 1e-12);
    }
}

/// Every deterministic history policy at `H = 2`: a first action per initial
/// state and a second action per reachable `(s_1, r_1, s_2)`.
fn exhaustive_history_tv(first: &LmdpModel, second: &LmdpModel) -> f64 {
    let sh = first.shape();
    assert_eq!(sh.horizon, 2);
    let (s, a, r) = (sh.states, sh.actions, sh.rewards);
    let second_slots = s * r * s;
    let firsts = a.pow(s as u32);
    let seconds = a.pow(second_slots as u32);
    let mut best: f64 = 0.0;
    for f in 0..firsts {
        let a1 = |s1: usize| (f / a.pow(s1 as u32)) % a;
        for g in 0..seconds {
            let a2 = |s1: usize, r1: usize, s2: usize| (g / a.pow(((s1 * r + r1) * s + s2) as u32)) % a;
            let tv = oracle_tv(first, second, |t| {
                let (x, y) = (t.steps[0], t.steps[1]);
                let ok = x.action as usize == a1(x.state as usize)
                    && y.action as usize == a2(x.state as usize, x.reward as usize, y.state as usize);
                if ok {
                    1.0
                } else {
                    0.0
                }
            });
            best = best.max(tv);
        }
    }
    best
}

#[test]
fn history_dp_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let g = Guards::default();
    for i in 0..6 {
        let sh = shape(1 + i % 3, 2, 2, 2);
        let (a, b) = (model(&mut rng, sh), model(&mut rng, sh));
        let (dp, policy) = max_history_tv(&a, &b, &g).unwrap();
        let brute = exhaustive_history_tv(&a, &b);
        assert!((dp - brute).abs() < 1e-12, "{dp} vs {brute}");
        let attained = oracle_tv(&a, &b, |t| policy.trajectory_weight(t).unwrap());
        assert!((attained - dp).abs() < 1e-12);
    }
}

#[test]
fn history_dp_policy_attains_its_value_at_depth_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let sh = shape(2, 2, 2, 3);
    let (a, b) = (model(&mut rng, sh), model(&mut rng, sh));
    let (dp, policy) = max_history_tv(&a, &b, &Guards::default()).unwrap();
    let attained = oracle_tv(&a, &b, |t| policy.trajectory_weight(t).unwrap());
    assert!((attained - dp).abs() < 1e-12);
}

#[test]
fn memoryless_maximum_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let sh = shape(2, 2, 2, 2);
    let (a, b) = (model(&mut rng, sh), model(&mut rng, sh));
    let (best, policy) = max_memoryless_tv(&a, &b, &Guards::default()).unwrap();
    let mut brute: f64 = 0.0;
    for table in 0..16usize {
        let t: Vec<usize> = (0..4).map(|i| (table >> (3 - i)) & 1).collect();
        let p: Policy = MemorylessPolicy::deterministic(2, 2, 2, &t).unwrap().into();
        brute = brute.max(oracle_tv(&a, &b, |tr| oracle_action_weight(&p, tr, 0, 2, false)));
    }
    assert!((best - brute).abs() < 1e-12);
    let p: Policy = policy.into();
    assert!((oracle_tv(&a, &b, |tr| oracle_action_weight(&p, tr, 0, 2, false)) - best).abs() < 1e-12);
}

#[test]
fn sufficiency_holds_on_seeded_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let g = Guards::default();
    let sh = shape(2, 2, 2, 3);
    for _ in 0..8 {
        let (a, b) = (model(&mut rng, sh), model(&mut rng, sh));
        let r = check_memoryless_sufficiency(&a, &b, None, &g).unwrap();
        assert!(r.holds && !r.vacuous, "{r:?}");
        assert_eq!(r.witness["d"], 3);
    }
}

#[test]
fn sufficiency_equal_models_give_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let m = model(&mut rng, shape(2, 2, 2, 3));
    let r = check_memoryless_sufficiency(&m, &m, None, &Guards::default()).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, Some(0.0)));
}

#[test]
fn sufficiency_weights_only_with_identical_contexts_give_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let one = model(&mut rng, shape(1, 2, 2, 3));
    let stacked = |w: Vec<f64>| {
        let c = one.clone();
        LmdpModel::new(
            shape(2, 2, 2, 3),
            c.reward_support().to_vec(),
            w,
            [c.init_row(0), c.init_row(0)].concat(),
            [c.transitions.clone(), c.transitions.clone()].concat(),
            [c.rewards.clone(), c.rewards.clone()].concat(),
        )
        .unwrap()
    };
    let (a, b) = (stacked(vec![0.2, 0.8]), stacked(vec![0.7, 0.3]));
    let r = check_memoryless_sufficiency(&a, &b, None, &Guards::default()).unwrap();
    assert!(r.lhs < 1e-15);
    assert!(r.witness["eps_test"].as_f64().unwrap() < 1e-15);
}

#[test]
fn counter_example_facts_are_exact() {
    let (model, record) = counter_example().unwrap();
    assert!(record.passed);
    assert_eq!(record.posterior_neg, vec![1.0, 0.0, 0.0]);
    assert_eq!(record.posterior_pos, vec![0.0, 1.0, 0.0]);
    assert_eq!(record.uniform_cells.len(), 6);
    for cell in &record.uniform_cells {
        assert_eq!(cell.probability, 0.5);
    }
    assert!(record.tabulated_cells.iter().all(|c| c.probability > 0.0));
    assert_eq!(record.hidden_cell_behavior, 0.0);
    assert_eq!(record.hidden_cell_target, 1.0);
    assert_eq!(
        record.single_latent_coverage,
        crate::coverage::CoverageValue::Finite(2.0)
    );
    assert_eq!(
        record.tabulated_single_latent_coverage,
        crate::coverage::CoverageValue::Finite(2.0)
    );
    assert_eq!(model.num_contexts(), 3);
}

#[test]
fn counter_example_second_state_is_certain() {
    let (model, _) = counter_example().unwrap();
    let g = Guards::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..4 {
        let p: Policy = random_stochastic_policy(&mut rng, &model.shape()).into();
        for marginal in context_checkpoint_marginals(&model, &p, &crate::exact::Scope::full_events(&[2]), &g).unwrap() {
            let on_two: f64 = marginal
                .iter()
                .filter(|(k, _)| marginal.decode_events(*k)[0].step.unwrap().state == 1)
                .map(|(_, v)| v)
                .sum();
            assert!((on_two - 1.0).abs() < 1e-15);
        }
    }
}

#[test]
fn counter_example_first_event_probability() {
    let (model, _) = counter_example().unwrap();
    let uniform: Policy = MemorylessPolicy::uniform(2, 2, 2).into();
    let spec = CheckpointSpec::new(vec![1], vec![false]).unwrap();
    let dist = latent_conditional_marginal(&model, 0, &uniform, &spec, &Guards::default()).unwrap();
    let hit: f64 = dist
        .iter()
        .filter(|(k, _)| {
            let e = dist.decode_events(*k)[0];
            e.step == Some(Step::new(0, 0, 0)) && e.next_state == Some(1)
        })
        .map(|(_, v)| v)
        .sum();
    assert_eq!(hit, 0.5);
}

#[test]
fn counter_example_optimal_policy_exploits_revealed_context() {
    let (model, _) = counter_example().unwrap();
    let g = Guards::default();
    let (policy, value) = optimal_history_policy(&model, &g).unwrap();
    let Policy::History(h) = &policy else {
        panic!("belief planning returns a history policy")
    };
    let key = HistoryKey {
        start: 0,
        steps: vec![Step::new(0, 0, 0)],
        state: 1,
    };
    assert_eq!(h.get(&key).unwrap(), &[0.0, 1.0]);
    assert!((policy_value(&model, &policy, &g).unwrap() - value).abs() < 1e-12);
}

fn random_class(seed: u64, size: usize, sh: Shape) -> ModelClass {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelClass::new((0..size).map(|_| model(&mut rng, sh)).collect(), 0).unwrap()
}

#[test]
fn doubling_singleton_run_is_empty() {
    let class = random_class(1, 1, shape(1, 2, 2, 3));
    let log = run_mdp_omle(&class, &AlgoParams::default(), &Guards::default()).unwrap();
    let report = doubling_diagnostic(&log, &class, None).unwrap();
    assert!(report.entries.is_empty());
    assert_eq!(report.fraction, None);
}

#[test]
fn doubling_mdp_first_iteration_doubles() {
    let class = random_class(2, 4, shape(1, 2, 2, 3));
    let params = AlgoParams {
        n_test: 200,
        ..AlgoParams::default()
    };
    let log = run_mdp_omle(&class, &params, &Guards::default()).unwrap();
    assert!(!log.iterations.is_empty());
    let report = doubling_diagnostic(&log, &class, None).unwrap();
    assert_eq!(report.entries.len(), log.iterations.len());
    assert!(report.entries[0].doubled);
    assert!(report.entries[0].ratio.is_unbounded());
    let f = report.fraction.unwrap();
    assert!((0.0..=1.0).contains(&f));
}

#[test]
fn doubling_lmdp_compares_against_uniform_first() {
    let class = random_class(3, 4, shape(2, 2, 2, 3));
    let params = AlgoParams {
        n_test: 20,
        beta: Some(1e9),
        k_max: 1,
        d: Some(1),
        ..AlgoParams::default()
    };
    let log = run_lmdp_omle(&class, &params, &Guards::default()).unwrap();
    assert_eq!(log.iterations.len(), 1);
    let report = doubling_diagnostic(&log, &class, Some(0.1)).unwrap();
    let entry = &report.entries[0];
    // Uniform reaches every state the perturbed model can, so the ratio is finite and at most A^(H-1).
    let r = entry.ratio.finite().unwrap();
    assert!(r <= 4.0 + 1e-12);
    assert_eq!(entry.doubled, r > 2.0);
}

#[test]
fn doubling_rejects_foreign_class() {
    let class = random_class(4, 2, shape(1, 2, 2, 2));
    let log = run_mdp_omle(&class, &AlgoParams::default(), &Guards::default()).unwrap();
    let other = random_class(4, 3, shape(1, 2, 2, 2));
    assert!(doubling_diagnostic(&log, &other, None).is_err());
}

#[test]
fn report_tally_counts() {
    let reports = vec![
        InequalityReport::new("x", 0.0, Some(1.0)),
        InequalityReport::new("x", 2.0, Some(1.0)),
        InequalityReport::new("x", 2.0, None),
    ];
    let tally: ReportTally = reports.into_iter().collect();
    assert_eq!(
        (tally.total, tally.holds, tally.vacuous, tally.violations),
        (4 - 1, 2, 1, 1)
    );
}
