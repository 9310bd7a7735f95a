//! Seeded random instances and the model classes built around them.

use anyhow::{Context, Result};
use lmdp::model::{LmdpModel, Shape};
use lmdp::omle::{run_rng, ModelClass};
use lmdp::random::{default_reward_support, random_model, resample_rows};
use rand::Rng;

use crate::config::GeneratorSpec;

/// RNG stream used for instance generation under a repetition seed.
const INSTANCE_STREAM: u64 = 1;

fn shape(spec: &GeneratorSpec) -> Shape {
    Shape {
        contexts: spec.contexts,
        states: spec.states,
        actions: spec.actions,
        horizon: spec.horizon,
        rewards: spec.rewards,
    }
}

/// The true model of [`gen_class`] under the same seed.
pub fn gen_instance(spec: &GeneratorSpec, seed: u64) -> Result<LmdpModel> {
    spec.check()?;
    let mut rng = run_rng(seed, INSTANCE_STREAM);
    random_model(
        &mut rng,
        shape(spec),
        default_reward_support(spec.rewards),
        spec.concentration,
    )
    .context("generating instance")
}

/// A class of `class_size` models: the instance plus decoys that re-draw
/// rows of it. The truth sits at a seeded position.
pub fn gen_class(spec: &GeneratorSpec, seed: u64) -> Result<ModelClass> {
    spec.check()?;
    let mut rng = run_rng(seed, INSTANCE_STREAM);
    let truth = random_model(
        &mut rng,
        shape(spec),
        default_reward_support(spec.rewards),
        spec.concentration,
    )
    .context("generating instance")?;
    let mut models = Vec::with_capacity(spec.class_size);
    for _ in 1..spec.class_size {
        models.push(
            resample_rows(
                &mut rng,
                &truth,
                spec.decoy_fraction,
                spec.decoy_mix,
                spec.concentration,
            )
            .context("generating decoy")?,
        );
    }
    let index = rng.gen_range(0..spec.class_size);
    models.insert(index, truth);
    Ok(ModelClass::new(models, index)?)
}

#[cfg(test)]
mod tests {
    use lmdp::io::ModelDocument;
    use lmdp::model::validate_model;

    use super::*;

    fn spec() -> GeneratorSpec {
        GeneratorSpec {
            contexts: 2,
            states: 2,
            actions: 2,
            horizon: 4,
            rewards: 2,
            concentration: 1.0,
            class_size: 6,
            decoy_fraction: 0.25,
            decoy_mix: 1.0,
        }
    }

    fn text(m: &LmdpModel) -> String {
        ModelDocument::from_model(m).unwrap().to_text()
    }

    #[test]
    fn same_seed_same_text() {
        assert_eq!(
            text(&gen_instance(&spec(), 3).unwrap()),
            text(&gen_instance(&spec(), 3).unwrap())
        );
        assert_ne!(
            text(&gen_instance(&spec(), 3).unwrap()),
            text(&gen_instance(&spec(), 4).unwrap())
        );
    }

    #[test]
    fn class_members_are_valid_and_distinct() {
        for seed in 0..5 {
            let class = gen_class(&spec(), seed).unwrap();
            assert_eq!(class.len(), 6);
            assert_eq!(class.true_model(), &gen_instance(&spec(), seed).unwrap());
            for (i, m) in class.models().iter().enumerate() {
                assert!(validate_model(m).passed());
                if i != class.truth() {
                    assert_ne!(m, class.true_model());
                }
            }
        }
    }

    #[test]
    fn large_concentration_is_nearly_uniform() {
        let s = GeneratorSpec {
            concentration: 1e4,
            ..spec()
        };
        let m = gen_instance(&s, 9).unwrap();
        let dev = (0..2)
            .flat_map(|c| (0..2).flat_map(move |st| (0..2).map(move |a| (c, st, a))))
            .flat_map(|(c, st, a)| m.transition_row(c, st, a).to_vec())
            .map(|p| (p - 0.5).abs())
            .fold(0.0, f64::max);
        if dev >= 0.05 {
            eprintln!("max transition deviation {dev} at concentration 1e4");
        }
    }

    #[test]
    fn singleton_class_is_the_instance() {
        let s = GeneratorSpec {
            class_size: 1,
            ..spec()
        };
        let c = gen_class(&s, 2).unwrap();
        assert_eq!((c.len(), c.truth()), (1, 0));
    }
}
