use std::collections::HashMap;
use std::time::Instant;

use log::debug;

use super::{
    class_log_likelihoods, confidence_set, find_discriminating_policy, run_rng, AlgoParams, Dataset, Discrimination,
    FinalRecord, IterationRecord, ModelClass, RunHeader, RunLog,
};
use crate::checkpoint::{default_budget, enumerate_checkpoint_specs, CheckpointSpec};
use crate::error::{Error, Result};
use crate::exact::{memoryless_value, optimal_history_policy, optimal_markov_policy, policy_value, Guards};
use crate::model::LmdpModel;
use crate::policy::{build_segmented_policy, MemorylessPolicy, Policy};

/// Membership bookkeeping shared by both loops.
struct Refit {
    beta: f64,
    truth: usize,
    mask: Vec<bool>,
    lls: Vec<f64>,
    truth_always: bool,
}

impl Refit {
    fn new(class: &ModelClass, beta: f64) -> Self {
        Refit {
            beta,
            truth: class.truth(),
            mask: vec![true; class.len()],
            lls: vec![0.0; class.len()],
            truth_always: true,
        }
    }

    fn update(&mut self, class: &ModelClass, dataset: &Dataset) -> Result<()> {
        self.lls = class_log_likelihoods(class, dataset);
        self.mask = confidence_set(&self.lls, self.beta)?;
        self.truth_always &= self.mask[self.truth];
        Ok(())
    }

    fn members<'a>(&self, class: &'a ModelClass) -> (Vec<usize>, Vec<&'a LmdpModel>) {
        let ids: Vec<usize> = (0..class.len()).filter(|&i| self.mask[i]).collect();
        let models = ids.iter().map(|&i| &class.models()[i]).collect();
        (ids, models)
    }

    fn survivor(&self) -> usize {
        self.mask.iter().position(|&m| m).expect("the MLE is always a member")
    }

    fn lls_record(&self) -> Vec<Option<f64>> {
        self.lls.iter().map(|&l| l.is_finite().then_some(l)).collect()
    }
}

/// The next discriminating policy among current members, with class indices.
fn discriminate(
    class: &ModelClass,
    refit: &Refit,
    threshold: f64,
    guards: &Guards,
) -> Result<Option<(Discrimination, [usize; 2])>> {
    let (ids, models) = refit.members(class);
    Ok(find_discriminating_policy(&models, threshold, guards)?.map(|d| {
        let pair = [ids[d.pair.0], ids[d.pair.1]];
        (d, pair)
    }))
}

fn elapsed_ms(start: Option<Instant>) -> Option<f64> {
    start.map(|s| s.elapsed().as_secs_f64() * 1e3)
}

fn header(class: &ModelClass, params: &AlgoParams, algorithm: &str, beta: f64, d: Option<usize>) -> RunHeader {
    RunHeader {
        algorithm: algorithm.into(),
        class_size: class.len(),
        truth: class.truth(),
        n_test: params.n_test,
        eps_test: params.eps_test,
        eta: params.eta,
        beta,
        k_max: params.k_max,
        d,
        seed: params.seed,
        initial_episodes: 0,
        initial_mask: vec![true; class.len()],
    }
}

#[allow(clippy::too_many_arguments)]
fn iteration_record(
    k: usize,
    policy_id: usize,
    found: &(Discrimination, [usize; 2]),
    collections: usize,
    before: u64,
    dataset: &Dataset,
    refit: &Refit,
    wall_ms: Option<f64>,
) -> IterationRecord {
    IterationRecord {
        k,
        policy_id,
        policy: found
            .0
            .policy
            .deterministic_actions()
            .expect("search yields deterministic policies"),
        pair: found.1,
        tv: found.0.tv,
        collections,
        episodes: dataset.episodes() - before,
        total_episodes: dataset.episodes(),
        mask: refit.mask.clone(),
        set_size: refit.mask.iter().filter(|&&m| m).count(),
        log_likelihoods: refit.lls_record(),
        wall_ms,
    }
}

/// MDP-OMLE: while two members of the confidence set disagree by more than
/// `4 ε_test` on some deterministic memoryless policy, collect `n_test`
/// episodes with it from the true model and refit. Returns the optimal
/// policy of the lowest-index survivor.
pub fn run_mdp_omle(class: &ModelClass, params: &AlgoParams, guards: &Guards) -> Result<RunLog> {
    params.check()?;
    if let Some(i) = class.models().iter().position(|m| m.num_contexts() != 1) {
        return Err(Error::Unsupported(format!(
            "MDP-OMLE needs M = 1, model {i} has more contexts"
        )));
    }
    let start = params.timing.then(Instant::now);
    let mut rng = run_rng(params.seed, 0);
    let beta = params.beta_for(class.len());
    let truth = class.true_model();
    let mut dataset = Dataset::new(truth.shape(), params.keep_entries);
    let mut refit = Refit::new(class, beta);
    let mut iterations = Vec::new();
    let mut truncated = false;
    while let Some(found) = discriminate(class, &refit, 4.0 * params.eps_test, guards)? {
        if iterations.len() == params.k_max {
            truncated = true;
            break;
        }
        let k = iterations.len() + 1;
        let before = dataset.episodes();
        let id = dataset.register(found.0.policy.clone().into())?;
        dataset.collect(truth, id, params.n_test, k, &mut rng)?;
        refit.update(class, &dataset)?;
        debug!("mdp-omle k={k} tv={} set={:?}", found.0.tv, refit.mask);
        iterations.push(iteration_record(
            k,
            id,
            &found,
            1,
            before,
            &dataset,
            &refit,
            elapsed_ms(start),
        ));
    }
    let survivor = refit.survivor();
    let (returned, _) = optimal_markov_policy(&class.models()[survivor])?;
    let returned_value = memoryless_value(truth, &returned);
    let (_, optimal_value) = optimal_markov_policy(truth)?;
    Ok(RunLog {
        header: header(class, params, "mdp-omle", beta, None),
        final_record: FinalRecord {
            iterations: iterations.len(),
            truncated,
            survivor,
            returned_value,
            optimal_value,
            gap: optimal_value - returned_value,
            total_episodes: dataset.episodes(),
            mask: refit.mask.clone(),
            truth_always_in_set: refit.truth_always,
            wall_ms: elapsed_ms(start),
        },
        iterations,
        returned_policy: Some(returned.into()),
    })
}

/// Visits every tuple in `0..base^len`, first slot most significant.
fn for_each_tuple(base: usize, len: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut tuple = vec![0; len];
    loop {
        f(&tuple)?;
        let mut i = len;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            tuple[i] += 1;
            if tuple[i] < base {
                break;
            }
            tuple[i] = 0;
        }
    }
}

#[cfg(test)]
pub(super) fn for_each_tuple_count(base: usize, len: usize) -> usize {
    let mut n = 0;
    for_each_tuple(base, len, |_| {
        n += 1;
        Ok(())
    })
    .unwrap();
    n
}

/// LMDP-OMLE. Starts from `n_test` uniform episodes and `Ψ_test = {Unif}`.
/// Each iteration adds the discriminating policy `π^k` to `Ψ_test`; then for
/// every base tuple `(ψ_0, …, ψ_{d−1}, Unif)` with `π^k` among the first `d`
/// slots, every `τ ∈ SubSeq(H, d)` and every `z`, collects `n_test` episodes
/// under `ν(ψ; τ, z)` and refits. Returns the belief-DP optimal policy of the
/// lowest-index survivor.
pub fn run_lmdp_omle(class: &ModelClass, params: &AlgoParams, guards: &Guards) -> Result<RunLog> {
    params.check()?;
    let start = params.timing.then(Instant::now);
    let mut rng = run_rng(params.seed, 0);
    let beta = params.beta_for(class.len());
    let truth = class.true_model();
    let shape = truth.shape();
    let d = params.d.unwrap_or_else(|| default_budget(truth.num_contexts()));
    let specs = enumerate_checkpoint_specs(shape.horizon, d.min(shape.horizon))?;
    let uniform = MemorylessPolicy::uniform(shape.horizon, shape.states, shape.actions);

    let mut dataset = Dataset::new(shape, params.keep_entries);
    let uniform_id = dataset.register(uniform.clone().into())?;
    dataset.collect(truth, uniform_id, params.n_test, 0, &mut rng)?;
    let mut refit = Refit::new(class, beta);
    refit.update(class, &dataset)?;
    let mut run_header = header(class, params, "lmdp-omle", beta, Some(d));
    run_header.initial_episodes = dataset.episodes();
    run_header.initial_mask = refit.mask.clone();

    let mut tests: Vec<Policy> = vec![uniform.into()];
    let mut registry: HashMap<(Vec<usize>, CheckpointSpec), usize> = HashMap::new();
    let mut iterations = Vec::new();
    let mut truncated = false;
    while let Some(found) = discriminate(class, &refit, 4.0 * params.eps_test, guards)? {
        if iterations.len() == params.k_max {
            truncated = true;
            break;
        }
        let k = iterations.len() + 1;
        let before = dataset.episodes();
        let policy_id = dataset.register(found.0.policy.clone().into())?;
        tests.push(found.0.policy.clone().into());
        let newest = tests.len() - 1;
        let work = (tests.len() as f64).powi(d as i32) * specs.len() as f64;
        if work > guards.policies {
            return Err(Error::guard(
                "segmented behaviors |Ψ_test|^d * |SubSeq| * 2^d",
                work,
                guards.policies,
            ));
        }
        let mut collections = 0;
        for_each_tuple(tests.len(), d, |tuple| {
            if !tuple.contains(&newest) {
                return Ok(());
            }
            for spec in &specs {
                // Slot d is Unif, which is test policy 0.
                let bases: Vec<usize> = (0..=spec.len()).map(|i| tuple.get(i).copied().unwrap_or(0)).collect();
                let key = (bases, spec.clone());
                let id = match registry.get(&key) {
                    Some(&id) => id,
                    None => {
                        let nu =
                            build_segmented_policy(key.0.iter().map(|&i| tests[i].clone()).collect(), spec.clone())?;
                        let flat = nu.to_memoryless().expect("segmented memoryless bases flatten");
                        let id = dataset.register(flat.into())?;
                        registry.insert(key, id);
                        id
                    }
                };
                dataset.collect(truth, id, params.n_test, k, &mut rng)?;
                collections += 1;
            }
            Ok(())
        })?;
        refit.update(class, &dataset)?;
        debug!("lmdp-omle k={k} tv={} set={:?}", found.0.tv, refit.mask);
        iterations.push(iteration_record(
            k,
            policy_id,
            &found,
            collections,
            before,
            &dataset,
            &refit,
            elapsed_ms(start),
        ));
    }
    let survivor = refit.survivor();
    let (returned, _) = optimal_history_policy(&class.models()[survivor], guards)?;
    let returned_value = policy_value(truth, &returned, guards)?;
    let (_, optimal_value) = optimal_history_policy(truth, guards)?;
    Ok(RunLog {
        header: run_header,
        final_record: FinalRecord {
            iterations: iterations.len(),
            truncated,
            survivor,
            returned_value,
            optimal_value,
            gap: optimal_value - returned_value,
            total_episodes: dataset.episodes(),
            mask: refit.mask.clone(),
            truth_always_in_set: refit.truth_always,
            wall_ms: elapsed_ms(start),
        },
        iterations,
        returned_policy: Some(returned),
    })
}
