//! Numerical checks of the off-policy evaluation and memoryless-sufficiency
//! inequalities, the single-latent coverage counter-example and the coverage
//! doubling diagnostic.

mod counter;
mod doubling;
mod tv_max;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use counter::{counter_example, CounterExampleRecord, CoverageCell};
pub use doubling::{doubling_diagnostic, DoublingEntry, DoublingReport};
pub use tv_max::{max_history_tv, max_memoryless_tv};

use crate::checkpoint::{default_budget, enumerate_checkpoint_specs};
use crate::coverage::{lmdp_coverage, mdp_coverage, segmented_behavior};
use crate::error::{Error, Result};
use crate::exact::{checkpoint_marginal, trajectory_distribution, tv_distance, Guards, Scope};
use crate::model::LmdpModel;
use crate::omle::theory::sufficiency_factor;
use crate::policy::Policy;

/// Absolute tolerance for declaring a violation.
pub const VIOLATION_TOLERANCE: f64 = 1e-9;

/// One evaluation of an inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lemma: String,
    pub lhs: f64,
    /// `None` when the bound is infinite.
    pub rhs: Option<f64>,
    pub holds: bool,
    /// `rhs − lhs`, `None` when vacuous.
    pub slack: Option<f64>,
    pub vacuous: bool,
    /// Inputs and intermediate quantities identifying the case.
    #[serde(default)]
    pub witness: BTreeMap<String, serde_json::Value>,
}

impl InequalityReport {
    pub fn new(lemma: &str, lhs: f64, rhs: Option<f64>) -> Self {
        let vacuous = rhs.is_none();
        InequalityReport {
            lemma: lemma.into(),
            lhs,
            rhs,
            holds: rhs.is_none_or(|r| lhs <= r + VIOLATION_TOLERANCE),
            slack: rhs.map(|r| r - lhs),
            vacuous,
            witness: BTreeMap::new(),
        }
    }

    /// Adds a witness field.
    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        let value = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.witness.insert(key.into(), value);
        self
    }

    /// A non-vacuous case that fails the tolerance.
    pub fn is_violation(&self) -> bool {
        !self.holds
    }
}

fn require_same_shape(a: &LmdpModel, b: &LmdpModel) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `TV(ℙ_{θ*}^π, ℙ_θ^π)(𝒯) <= 2 C(ψ; π) Σ_t TV(ℙ_{θ*}^ψ, ℙ_θ^ψ)(x_t, y_t)`,
/// with the coverage measured on `θ*`.
pub fn check_ope_mdp(
    truth: &LmdpModel,
    other: &LmdpModel,
    behavior: &Policy,
    target: &Policy,
    guards: &Guards,
) -> Result<InequalityReport> {
    require_same_shape(truth, other)?;
    if truth.num_contexts() != 1 {
        return Err(Error::Unsupported("the MDP bound needs M = 1".into()));
    }
    let lhs = tv_distance(
        &trajectory_distribution(truth, target, guards)?,
        &trajectory_distribution(other, target, guards)?,
    )?;
    let coverage = mdp_coverage(truth, behavior, target, guards)?;
    let mut sum = 0.0;
    for t in 1..=truth.horizon() {
        let scope = Scope::full_events(&[t]);
        sum += tv_distance(
            &checkpoint_marginal(truth, behavior, &scope, guards)?,
            &checkpoint_marginal(other, behavior, &scope, guards)?,
        )?;
    }
    let rhs = coverage.value.finite().map(|c| 2.0 * c * sum);
    Ok(InequalityReport::new("ope-mdp", lhs, rhs)
        .with("coverage", coverage.value)
        .with("coverage_witness", &coverage.witness)
        .with("marginal_tv_sum", sum)
        .with("behavior", behavior.label())
        .with("target", target.label()))
}

/// `TV(ℙ_{θ*}^π, ℙ_θ^π)(𝒯) <= M C(ψ; π) Σ_τ Σ_z TV(ℙ_{θ*}^ν, ℙ_θ^ν)(x_τ, y_τ)`
/// with `ν = ν(ψ; τ, z)` and the coverage measured on `θ*` over full events.
pub fn check_ope_lmdp(
    truth: &LmdpModel,
    other: &LmdpModel,
    bases: &[Policy],
    target: &Policy,
    d: Option<usize>,
    guards: &Guards,
) -> Result<InequalityReport> {
    require_same_shape(truth, other)?;
    let contexts = truth.num_contexts();
    let d = d.unwrap_or_else(|| default_budget(contexts));
    let lhs = tv_distance(
        &trajectory_distribution(truth, target, guards)?,
        &trajectory_distribution(other, target, guards)?,
    )?;
    let coverage = lmdp_coverage(truth, bases, target, d, guards)?;
    let mut sum = 0.0;
    for spec in enumerate_checkpoint_specs(truth.horizon(), d.min(truth.horizon()))? {
        let behavior = segmented_behavior(bases, &spec)?;
        let scope = Scope::full_events(&spec.tau);
        sum += tv_distance(
            &checkpoint_marginal(truth, &behavior, &scope, guards)?,
            &checkpoint_marginal(other, &behavior, &scope, guards)?,
        )?;
    }
    let rhs = coverage.value.finite().map(|c| contexts as f64 * c * sum);
    Ok(InequalityReport::new("ope-lmdp", lhs, rhs)
        .with("coverage", coverage.value)
        .with("coverage_witness", &coverage.witness)
        .with("segmented_tv_sum", sum)
        .with("d", d)
        .with("target", target.label()))
}

/// `max_π TV(ℙ_1^π, ℙ_2^π)(𝒯) <= M (2H²)^d (MSA)^d · max_{π ∈ Π_mls} TV(ℙ_1^π, ℙ_2^π)(𝒯)`.
///
/// Both maxima are exact: the history side by a backward max over the
/// history tree, the memoryless side by enumerating deterministic tables.
pub fn check_memoryless_sufficiency(
    first: &LmdpModel,
    second: &LmdpModel,
    d: Option<usize>,
    guards: &Guards,
) -> Result<InequalityReport> {
    require_same_shape(first, second)?;
    let shape = first.shape();
    let contexts = first.num_contexts().max(second.num_contexts());
    let d = d.unwrap_or_else(|| default_budget(contexts));
    let (eps_test, memoryless) = max_memoryless_tv(first, second, guards)?;
    let (lhs, _) = max_history_tv(first, second, guards)?;
    let factor = sufficiency_factor(contexts, shape.states, shape.actions, shape.horizon, d);
    Ok(
        InequalityReport::new("memoryless-sufficiency", lhs, Some(factor * eps_test))
            .with("eps_test", eps_test)
            .with("memoryless_argmax", memoryless.deterministic_actions())
            .with("factor", factor)
            .with("d", d),
    )
}

/// Counts of an ensemble of reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportTally {
    pub total: usize,
    pub holds: usize,
    pub vacuous: usize,
    pub violations: usize,
}

impl ReportTally {
    pub fn add(&mut self, report: &InequalityReport) {
        self.total += 1;
        if report.vacuous {
            self.vacuous += 1;
        }
        if report.holds {
            self.holds += 1;
        } else {
            self.violations += 1;
        }
    }
}

impl FromIterator<InequalityReport> for ReportTally {
    fn from_iter<I: IntoIterator<Item = InequalityReport>>(iter: I) -> Self {
        let mut tally = ReportTally::default();
        for r in iter {
            tally.add(&r);
        }
        tally
    }
}

#[cfg(test)]
mod tests;
