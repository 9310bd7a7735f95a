//! Maximum-likelihood confidence sets over a finite model class and the two
//! optimistic exploration loops built on them.

mod dataset;
mod log;
mod run;
mod search;
pub mod theory;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{Batch, Dataset};
pub use log::{FinalRecord, IterationRecord, LogRecord, RunHeader, RunLog};
pub use run::{run_lmdp_omle, run_mdp_omle};
pub use search::{find_discriminating_policy, Discrimination};

use crate::error::{Error, Result};
use crate::exact::model_likelihood;
use crate::model::{LmdpModel, Shape};
use crate::trajectory::Trajectory;

/// A finite model class with the index of the data-generating model.
///
/// The algorithms only read the truth index to simulate episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelClass {
    models: Vec<LmdpModel>,
    truth: usize,
}

impl ModelClass {
    pub fn new(models: Vec<LmdpModel>, truth: usize) -> Result<Self> {
        let Some(first) = models.first() else {
            return Err(Error::InvalidModel("empty model class".into()));
        };
        let shape = first.shape();
        for (i, model) in models.iter().enumerate() {
            if !model.shape().compatible(&shape) || model.reward_support() != first.reward_support() {
                return Err(Error::ShapeMismatch(format!(
                    "model {i} does not share S, A, H and rewards with model 0"
                )));
            }
        }
        if truth >= models.len() {
            return Err(Error::OutOfRange {
                name: "truth index",
                value: truth as f64,
                expected: "index < class size",
            });
        }
        Ok(ModelClass { models, truth })
    }

    pub fn models(&self) -> &[LmdpModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn truth(&self) -> usize {
        self.truth
    }

    pub fn true_model(&self) -> &LmdpModel {
        &self.models[self.truth]
    }

    /// Shape of model 0; contexts may differ across members.
    pub fn shape(&self) -> Shape {
        self.models[0].shape()
    }
}

/// Parameters shared by both exploration loops. Missing fields take their
/// default values when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoParams {
    /// Episodes per test policy per collection.
    pub n_test: usize,
    /// The loop continues while some policy separates two members by more than `4 * eps_test`.
    pub eps_test: f64,
    pub eta: f64,
    pub k_max: usize,
    /// Checkpoint budget; `2M - 1` of the true model when absent.
    pub d: Option<usize>,
    /// Confidence slack; `ln(k_max * |Θ| / η)` when absent.
    pub beta: Option<f64>,
    /// Perturbation level for the doubling diagnostic, if any.
    pub gamma: Option<f64>,
    pub seed: u64,
    /// Keep every (trajectory, policy) entry in addition to the histogram.
    pub keep_entries: bool,
    /// Record wall-clock time in the run log.
    pub timing: bool,
}

impl Default for AlgoParams {
    fn default() -> Self {
        AlgoParams {
            n_test: 2000,
            eps_test: 0.05,
            eta: 0.1,
            k_max: 20,
            d: None,
            beta: None,
            gamma: None,
            seed: 0,
            keep_entries: false,
            timing: false,
        }
    }
}

impl AlgoParams {
    pub fn check(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::OutOfRange {
                    name,
                    value: v,
                    expected: "positive and finite",
                })
            }
        };
        positive("n_test", self.n_test as f64)?;
        positive("eps_test", self.eps_test)?;
        positive("eta", self.eta)?;
        positive("k_max", self.k_max as f64)?;
        if let Some(d) = self.d {
            positive("d", d as f64)?;
        }
        if let Some(beta) = self.beta {
            if beta.is_nan() || beta < 0.0 {
                return Err(Error::OutOfRange {
                    name: "beta",
                    value: beta,
                    expected: "beta >= 0",
                });
            }
        }
        if let Some(gamma) = self.gamma {
            if !(0.0..=1.0).contains(&gamma) {
                return Err(Error::OutOfRange {
                    name: "gamma",
                    value: gamma,
                    expected: "0 <= gamma <= 1",
                });
            }
        }
        Ok(())
    }

    /// The slack in use for a class of the given size.
    pub fn beta_for(&self, class_size: usize) -> f64 {
        self.beta
            .unwrap_or_else(|| beta_threshold(self.k_max as f64, class_size as f64, self.eta))
    }
}

/// `β = ln(K |Θ| / η)`.
pub fn beta_threshold(k: f64, class_size: f64, eta: f64) -> f64 {
    (k * class_size / eta).ln()
}

/// The RNG stream of run `index` under a master seed.
pub fn run_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `Σ log ℙ_θ^π(𝒯)` over the dataset; `-∞` when some entry has zero probability.
pub fn log_likelihood(model: &LmdpModel, dataset: &Dataset) -> f64 {
    dataset.policy_log_weight() + model_log_likelihood(model, dataset)
}

/// The model-dependent part of [`log_likelihood`].
pub(crate) fn model_log_likelihood(model: &LmdpModel, dataset: &Dataset) -> f64 {
    let shape = dataset.shape();
    let mut total = 0.0;
    for (&code, &count) in dataset.counts() {
        let p = model_likelihood(model, &Trajectory::decode(code, &shape));
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += count as f64 * p.ln();
    }
    total
}

/// `{θ : L(θ) ≥ max_θ' L(θ') − β}` given each member's log-likelihood.
///
/// Members at `-∞` are never included; all `-∞` is a misspecified class.
pub fn confidence_set(log_likelihoods: &[f64], beta: f64) -> Result<Vec<bool>> {
    let best = log_likelihoods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Err(Error::Misspecified);
    }
    Ok(log_likelihoods
        .iter()
        .map(|&l| l > f64::NEG_INFINITY && l >= best - beta)
        .collect())
}

/// Log-likelihood of every class member on the dataset.
pub fn class_log_likelihoods(class: &ModelClass, dataset: &Dataset) -> Vec<f64> {
    class.models().iter().map(|m| log_likelihood(m, dataset)).collect()
}
