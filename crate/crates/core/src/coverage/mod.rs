//! Coverage coefficients: single-step MDP coverage, checkpoint-event LMDP
//! coverage of segmented policies, and segment coverage of a test set.
//!
//! Ratios follow one convention everywhere: `0/0` is excluded from the
//! maximum and `p/0` with `p > 0` makes the coefficient unbounded.

mod kernels;

use serde::{Deserialize, Serialize};

pub use kernels::{
    build_test_mixture, segment_coverage, segment_kernels, state_marginals, SegmentKernels, TestMixture,
};

use crate::checkpoint::{enumerate_bits, enumerate_subsequences, CheckpointSpec};
use crate::error::{Error, Result};
use crate::exact::{
    checkpoint_marginal, context_checkpoint_marginals, CheckpointEvent, EventKind, Guards, Scope,
    TrajectoryDistribution,
};
use crate::model::LmdpModel;
use crate::policy::{build_segmented_policy, Policy};

/// A coverage coefficient value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CoverageValue {
    Finite(f64),
    Unbounded,
}

impl CoverageValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            CoverageValue::Finite(v) => Some(v),
            CoverageValue::Unbounded => None,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, CoverageValue::Unbounded)
    }
}

impl std::fmt::Display for CoverageValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoverageValue::Finite(v) => write!(f, "{v}"),
            CoverageValue::Unbounded => write!(f, "unbounded"),
        }
    }
}

/// The event attaining a coefficient. Times are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// `x_t = (s, a)`.
    Mdp { t: usize, state: usize, action: usize },
    /// Checkpoint events under context `m` for the segmented behavior `(τ, z)`.
    Lmdp {
        tau: Vec<usize>,
        z: Vec<bool>,
        context: usize,
        key: u64,
        events: Vec<CheckpointEvent>,
    },
    /// `P_m(s_{to_time} = to | s_{from_time} = from)`.
    Segment {
        context: usize,
        from_time: usize,
        to_time: usize,
        from: usize,
        to: usize,
    },
}

/// One candidate ratio, kept when a table is requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub witness: Witness,
    pub numerator: f64,
    pub denominator: f64,
}

/// A coverage coefficient with the event attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub value: CoverageValue,
    /// `None` when no event has positive target probability.
    pub witness: Option<Witness>,
    pub numerator: f64,
    pub denominator: f64,
    /// Conditioning events skipped for having zero mass under every policy.
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<RatioEntry>>,
}

/// Running maximum of ratios; the first maximizer wins ties, and the first
/// zero-denominator event makes the result unbounded.
pub(crate) struct RatioMax {
    best: Option<(f64, f64, Witness)>,
    unbounded: Option<(f64, Witness)>,
    table: Option<Vec<RatioEntry>>,
    pub(crate) skipped: usize,
}

impl RatioMax {
    pub(crate) fn new(keep_table: bool) -> Self {
        RatioMax {
            best: None,
            unbounded: None,
            table: keep_table.then(Vec::new),
            skipped: 0,
        }
    }

    pub(crate) fn offer(&mut self, numerator: f64, denominator: f64, witness: impl FnOnce() -> Witness) {
        if numerator <= 0.0 {
            return;
        }
        let needs_witness = self.table.is_some()
            || (denominator <= 0.0 && self.unbounded.is_none())
            || (denominator > 0.0
                && self
                    .best
                    .as_ref()
                    .is_none_or(|(n, d, _)| numerator / denominator > n / d));
        if !needs_witness {
            return;
        }
        let witness = witness();
        if let Some(table) = &mut self.table {
            table.push(RatioEntry {
                witness: witness.clone(),
                numerator,
                denominator,
            });
        }
        if denominator <= 0.0 {
            if self.unbounded.is_none() {
                self.unbounded = Some((numerator, witness));
            }
        } else if self
            .best
            .as_ref()
            .is_none_or(|(n, d, _)| numerator / denominator > n / d)
        {
            self.best = Some((numerator, denominator, witness));
        }
    }

    pub(crate) fn finish(self) -> CoverageReport {
        let (value, witness, numerator, denominator) = match (self.unbounded, self.best) {
            (Some((n, w)), _) => (CoverageValue::Unbounded, Some(w), n, 0.0),
            (None, Some((n, d, w))) => (CoverageValue::Finite(n / d), Some(w), n, d),
            (None, None) => (CoverageValue::Finite(0.0), None, 0.0, 0.0),
        };
        CoverageReport {
            value,
            witness,
            numerator,
            denominator,
            skipped: self.skipped,
            table: self.table,
        }
    }
}

/// `(s_t, a_t)` marginals for every `t`, indexed `[t][s * A + a]`.
pub fn state_action_marginals(model: &LmdpModel, policy: &Policy, guards: &Guards) -> Result<Vec<Vec<f64>>> {
    let shape = model.shape();
    let step_radix = shape.step_radix() as u64 * (shape.states as u64 + 1);
    let per_sa = (shape.rewards * (shape.states + 1)) as u64;
    (1..=shape.horizon)
        .map(|t| {
            let marginal = checkpoint_marginal(model, policy, &Scope::full_events(&[t]), guards)?;
            let mut out = vec![0.0; shape.states * shape.actions];
            for (key, p) in marginal.iter() {
                debug_assert!(key < step_radix);
                out[(key / per_sa) as usize] += p;
            }
            Ok(out)
        })
        .collect()
}

/// `C(ψ; π) = max_{t, x} ℙ^π(x_t = x) / ℙ^ψ(x_t = x)` on the unconditioned
/// model distribution.
pub fn mdp_coverage(model: &LmdpModel, behavior: &Policy, target: &Policy, guards: &Guards) -> Result<CoverageReport> {
    let num = state_action_marginals(model, target, guards)?;
    let den = state_action_marginals(model, behavior, guards)?;
    let actions = model.num_actions();
    let mut max = RatioMax::new(false);
    for (t, (n, d)) in num.iter().zip(&den).enumerate() {
        for (x, (&p, &q)) in n.iter().zip(d).enumerate() {
            max.offer(p, q, || Witness::Mdp {
                t: t + 1,
                state: x / actions,
                action: x % actions,
            });
        }
    }
    Ok(max.finish())
}

/// Which checkpoint events an LMDP coverage coefficient ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventMode {
    /// Full `(x, y)` events at every checkpoint, for every `z`.
    Literal,
    /// Full events where `z_i = 1`, only the next state `s'` where `z_i = 0`.
    Reduced,
}

impl EventMode {
    pub fn scope(self, spec: &CheckpointSpec) -> Scope {
        match self {
            EventMode::Literal => Scope::full_events(&spec.tau),
            EventMode::Reduced => Scope::Checkpoints {
                tau: spec.tau.clone(),
                kinds: spec
                    .z
                    .iter()
                    .map(|&z| if z { EventKind::Full } else { EventKind::NextState })
                    .collect(),
            },
        }
    }
}

/// The segmented policy `ν(ψ; τ, z)` built from the first `|τ| + 1` bases.
pub fn segmented_behavior(bases: &[Policy], spec: &CheckpointSpec) -> Result<Policy> {
    if bases.len() < spec.len() + 1 {
        return Err(Error::InvalidPolicy(format!(
            "{} bases for {} checkpoints",
            bases.len(),
            spec.len()
        )));
    }
    build_segmented_policy(bases[..spec.len() + 1].to_vec(), spec.clone())
}

/// Options for [`lmdp_coverage_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmdpCoverageOptions {
    pub events: EventMode,
    pub keep_table: bool,
}

/// LMDP coverage over full checkpoint events:
/// `max_{τ, z, (x, y), m} P_m^π(x_τ, y_τ) / P_m^{ν(ψ; τ, z)}(x_τ, y_τ)`.
pub fn lmdp_coverage(
    model: &LmdpModel,
    bases: &[Policy],
    target: &Policy,
    d: usize,
    guards: &Guards,
) -> Result<CoverageReport> {
    lmdp_coverage_with(
        model,
        bases,
        target,
        d,
        LmdpCoverageOptions {
            events: EventMode::Literal,
            keep_table: false,
        },
        guards,
    )
}

/// LMDP coverage with a choice of event sets.
pub fn lmdp_coverage_with(
    model: &LmdpModel,
    bases: &[Policy],
    target: &Policy,
    d: usize,
    options: LmdpCoverageOptions,
    guards: &Guards,
) -> Result<CoverageReport> {
    if bases.len() != d + 1 {
        return Err(Error::InvalidPolicy(format!(
            "{} base policies for d = {d}, expected d + 1",
            bases.len()
        )));
    }
    let shape = model.shape();
    let sequences = enumerate_subsequences(shape.horizon, d.min(shape.horizon).max(1))?;
    let full_radix = EventKind::Full.radix(&shape) as f64;
    let work: f64 = sequences
        .iter()
        .map(|tau| 2f64.powi(tau.len() as i32) * full_radix.powi(tau.len() as i32))
        .sum();
    if work > guards.support {
        return Err(Error::guard(
            "coverage events |SubSeq| * 2^d * support",
            work,
            guards.support,
        ));
    }
    let mut max = RatioMax::new(options.keep_table);
    for tau in &sequences {
        let mut literal_numerator: Option<Vec<TrajectoryDistribution>> = None;
        for z in enumerate_bits(tau.len()) {
            let spec = CheckpointSpec::new(tau.clone(), z)?;
            let scope = options.events.scope(&spec);
            let numerator = match (options.events, &literal_numerator) {
                (EventMode::Literal, Some(n)) => n.clone(),
                _ => context_checkpoint_marginals(model, target, &scope, guards)?,
            };
            if options.events == EventMode::Literal && literal_numerator.is_none() {
                literal_numerator = Some(numerator.clone());
            }
            let behavior = segmented_behavior(bases, &spec)?;
            let denominator = context_checkpoint_marginals(model, &behavior, &scope, guards)?;
            for (m, (num, den)) in numerator.iter().zip(&denominator).enumerate() {
                for (key, p) in num.iter() {
                    max.offer(p, den.get(key), || Witness::Lmdp {
                        tau: spec.tau.clone(),
                        z: spec.z.clone(),
                        context: m,
                        key,
                        events: num.decode_events(key),
                    });
                }
            }
        }
    }
    Ok(max.finish())
}
