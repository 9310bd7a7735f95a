//! Policies: memoryless tables, history-dependent maps, mixtures and
//! segmented policies `ν(ψ; τ, z)`.
//!
//! A segmented policy runs `ψ_0` from the start of the episode and switches to
//! `ψ_i` at step `τ_i + 1`, restarting it with an empty memory. At the
//! checkpoint step `τ_i` itself the action is uniform when `z_i = 1`, and
//! otherwise comes from the still-running `ψ_{i-1}`. A mixture draws one
//! component each time it starts executing: once per episode at top level,
//! once per segment when used as a segment base.

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use crate::checkpoint::CheckpointSpec;
use crate::error::{Error, Result};
use crate::model::{Shape, PROB_TOLERANCE};
use crate::trajectory::{Step, Trajectory};

/// Action distributions indexed by `(t, s)`, `t` zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MemorylessDocument")]
pub struct MemorylessPolicy {
    horizon: usize,
    states: usize,
    actions: usize,
    /// `[t][s][a]`
    probs: Vec<f64>,
}

impl MemorylessPolicy {
    pub fn from_table(horizon: usize, states: usize, actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != horizon * states * actions {
            return Err(Error::ShapeMismatch(format!(
                "memoryless table has {} entries, expected {}",
                probs.len(),
                horizon * states * actions
            )));
        }
        let policy = MemorylessPolicy {
            horizon,
            states,
            actions,
            probs,
        };
        for t in 0..horizon {
            for s in 0..states {
                check_action_row(policy.action_probs(t, s), || format!("t={} s={s}", t + 1))?;
            }
        }
        Ok(policy)
    }

    /// `Unif(A)` at every step.
    pub fn uniform(horizon: usize, states: usize, actions: usize) -> Self {
        MemorylessPolicy {
            horizon,
            states,
            actions,
            probs: vec![1.0 / actions as f64; horizon * states * actions],
        }
    }

    /// Deterministic policy from an action table `[t][s]`.
    pub fn deterministic(horizon: usize, states: usize, actions: usize, table: &[usize]) -> Result<Self> {
        if table.len() != horizon * states {
            return Err(Error::ShapeMismatch(format!(
                "action table has {} entries, expected {}",
                table.len(),
                horizon * states
            )));
        }
        let mut probs = vec![0.0; horizon * states * actions];
        for (i, &a) in table.iter().enumerate() {
            if a >= actions {
                return Err(Error::InvalidPolicy(format!("action {a} out of range")));
            }
            probs[i * actions + a] = 1.0;
        }
        Ok(MemorylessPolicy {
            horizon,
            states,
            actions,
            probs,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    /// Action distribution at zero-based step `t` in state `s`.
    #[inline]
    pub fn action_probs(&self, t: usize, s: usize) -> &[f64] {
        let start = (t * self.states + s) * self.actions;
        &self.probs[start..start + self.actions]
    }

    /// The action table `[t][s]` if every row is a point mass.
    pub fn deterministic_actions(&self) -> Option<Vec<usize>> {
        (0..self.horizon * self.states)
            .map(|i| {
                let row = &self.probs[i * self.actions..(i + 1) * self.actions];
                row.iter().position(|&p| p == 1.0)
            })
            .collect()
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.actions as f64;
        self.probs.iter().all(|&p| p == u)
    }

    fn label(&self) -> String {
        if self.is_uniform() {
            return "uniform".into();
        }
        match self.deterministic_actions() {
            Some(table) => {
                let digits: Vec<String> = table.iter().map(|a| a.to_string()).collect();
                format!("det[{}]", digits.join(""))
            }
            None => "memoryless".into(),
        }
    }
}

/// Key of a history-dependent policy entry: the history observed since the
/// policy started executing, plus the current state.
///
/// `start` is the zero-based step at which the policy started; it is `0` for
/// policies run from the beginning of the episode and `τ_i` for a segment base
/// restarted after checkpoint `τ_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HistoryKey {
    pub start: u16,
    pub steps: Vec<Step>,
    pub state: u16,
}

impl std::fmt::Display for HistoryKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(start step {}, [", self.start as usize + 1)?;
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "({},{},{})", s.state, s.action, s.reward)?;
        }
        write!(f, "], state {})", self.state)
    }
}

/// A policy given by an explicit map from histories to action distributions.
/// Querying a missing history is an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistoryDocument", into = "HistoryDocument")]
pub struct HistoryPolicy {
    actions: usize,
    entries: BTreeMap<HistoryKey, Vec<f64>>,
}

impl HistoryPolicy {
    pub fn new(actions: usize) -> Self {
        HistoryPolicy {
            actions,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: HistoryKey, probs: Vec<f64>) -> Result<()> {
        if probs.len() != self.actions {
            return Err(Error::ShapeMismatch(format!(
                "{} action probabilities for {} actions",
                probs.len(),
                self.actions
            )));
        }
        check_action_row(&probs, || key.to_string())?;
        self.entries.insert(key, probs);
        Ok(())
    }

    pub fn get(&self, key: &HistoryKey) -> Option<&[f64]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn entries(&self) -> impl Iterator<Item = (&HistoryKey, &[f64])> {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }
}

/// Convex combination of policies; one component is drawn per execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureDocument")]
pub struct MixturePolicy {
    components: Vec<(f64, Policy)>,
}

impl MixturePolicy {
    pub fn new(components: Vec<(f64, Policy)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidPolicy("empty mixture".into()));
        }
        let weights: Vec<f64> = components.iter().map(|(w, _)| *w).collect();
        check_action_row(&weights, || "mixture weights".into())?;
        let actions = components[0].1.num_actions();
        if components.iter().any(|(_, p)| p.num_actions() != actions) {
            return Err(Error::InvalidPolicy("mixture components disagree on |A|".into()));
        }
        Ok(MixturePolicy { components })
    }

    /// Uniform mixture over `policies`.
    pub fn uniform(policies: Vec<Policy>) -> Result<Self> {
        let w = 1.0 / policies.len().max(1) as f64;
        Self::new(policies.into_iter().map(|p| (w, p)).collect())
    }

    pub fn components(&self) -> &[(f64, Policy)] {
        &self.components
    }
}

/// `ν(ψ; τ, z)`; see the module documentation for its semantics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SegmentedDocument", into = "SegmentedDocument")]
pub struct SegmentedPolicy {
    bases: Vec<Policy>,
    spec: CheckpointSpec,
    uniform: Vec<f64>,
}

impl SegmentedPolicy {
    pub fn bases(&self) -> &[Policy] {
        &self.bases
    }

    pub fn spec(&self) -> &CheckpointSpec {
        &self.spec
    }

    /// Zero-based step at which segment `i` starts.
    fn segment_start(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.spec.tau[i - 1]
        }
    }
}

// Serialized forms. Deserialization goes through the validating constructors.

#[derive(Deserialize)]
struct MemorylessDocument {
    horizon: usize,
    states: usize,
    actions: usize,
    probs: Vec<f64>,
}

impl TryFrom<MemorylessDocument> for MemorylessPolicy {
    type Error = Error;

    fn try_from(d: MemorylessDocument) -> Result<Self> {
        MemorylessPolicy::from_table(d.horizon, d.states, d.actions, d.probs)
    }
}

/// History entries as `[key, row]` pairs, since JSON keys are strings.
#[derive(Serialize, Deserialize)]
struct HistoryDocument {
    actions: usize,
    entries: Vec<(HistoryKey, Vec<f64>)>,
}

impl TryFrom<HistoryDocument> for HistoryPolicy {
    type Error = Error;

    fn try_from(d: HistoryDocument) -> Result<Self> {
        let mut policy = HistoryPolicy::new(d.actions);
        for (key, row) in d.entries {
            policy.insert(key, row)?;
        }
        Ok(policy)
    }
}

impl From<HistoryPolicy> for HistoryDocument {
    fn from(p: HistoryPolicy) -> Self {
        HistoryDocument {
            actions: p.actions,
            entries: p.entries.into_iter().collect(),
        }
    }
}

#[derive(Deserialize)]
struct MixtureDocument {
    components: Vec<(f64, Policy)>,
}

impl TryFrom<MixtureDocument> for MixturePolicy {
    type Error = Error;

    fn try_from(d: MixtureDocument) -> Result<Self> {
        MixturePolicy::new(d.components)
    }
}

#[derive(Serialize, Deserialize)]
struct SegmentedDocument {
    bases: Vec<Policy>,
    spec: CheckpointSpec,
}

impl TryFrom<SegmentedDocument> for SegmentedPolicy {
    type Error = Error;

    fn try_from(d: SegmentedDocument) -> Result<Self> {
        match build_segmented_policy(d.bases, d.spec)? {
            Policy::Segmented(p) => Ok(p),
            _ => unreachable!("builder returns a segmented policy"),
        }
    }
}

impl From<SegmentedPolicy> for SegmentedDocument {
    fn from(p: SegmentedPolicy) -> Self {
        SegmentedDocument {
            bases: p.bases,
            spec: p.spec,
        }
    }
}

/// A policy for a latent MDP. Policies observe states, actions and rewards,
/// never the latent context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Memoryless(MemorylessPolicy),
    History(HistoryPolicy),
    Mixture(MixturePolicy),
    Segmented(SegmentedPolicy),
}

impl From<MemorylessPolicy> for Policy {
    fn from(p: MemorylessPolicy) -> Self {
        Policy::Memoryless(p)
    }
}

impl From<HistoryPolicy> for Policy {
    fn from(p: HistoryPolicy) -> Self {
        Policy::History(p)
    }
}

impl From<MixturePolicy> for Policy {
    fn from(p: MixturePolicy) -> Self {
        Policy::Mixture(p)
    }
}

/// Builds `ν(ψ; τ, z)` from `|τ| + 1` base policies.
pub fn build_segmented_policy(bases: Vec<Policy>, spec: CheckpointSpec) -> Result<Policy> {
    spec.check(None, None)?;
    if bases.len() != spec.len() + 1 {
        return Err(Error::InvalidPolicy(format!(
            "{} base policies for {} checkpoints, expected {}",
            bases.len(),
            spec.len(),
            spec.len() + 1
        )));
    }
    let actions = bases[0].num_actions();
    if bases.iter().any(|b| b.num_actions() != actions) {
        return Err(Error::InvalidPolicy("base policies disagree on |A|".into()));
    }
    Ok(Policy::Segmented(SegmentedPolicy {
        bases,
        spec,
        uniform: vec![1.0 / actions as f64; actions],
    }))
}

fn check_action_row(row: &[f64], location: impl FnOnce() -> String) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidPolicy(format!(
            "action distribution at {} is not a probability vector: {row:?}",
            location()
        )));
    }
    Ok(())
}

/// Execution state of a policy: whatever it remembers beyond the current
/// observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) enum ExecState {
    Stateless,
    History { start: u16, steps: Vec<Step> },
    Component { index: u32, inner: Box<ExecState> },
    Segment { index: u32, inner: Box<ExecState> },
}

/// Weighted successor execution states.
pub(crate) type Branches = SmallVec<[(f64, ExecState); 2]>;

impl Policy {
    pub fn num_actions(&self) -> usize {
        match self {
            Policy::Memoryless(p) => p.actions,
            Policy::History(p) => p.actions,
            Policy::Mixture(p) => p.components[0].1.num_actions(),
            Policy::Segmented(p) => p.uniform.len(),
        }
    }

    pub fn as_memoryless(&self) -> Option<&MemorylessPolicy> {
        match self {
            Policy::Memoryless(p) => Some(p),
            _ => None,
        }
    }

    /// Whether the policy carries no memory beyond `(t, s)`.
    pub fn is_memoryless(&self) -> bool {
        matches!(self, Policy::Memoryless(_))
    }

    /// Whether any part of the policy conditions on more than `(t, s)`.
    pub fn has_memory(&self) -> bool {
        match self {
            Policy::Memoryless(_) => false,
            Policy::History(_) => true,
            Policy::Mixture(p) => p.components.iter().any(|(_, c)| c.has_memory()),
            Policy::Segmented(p) => p.bases.iter().any(Policy::has_memory),
        }
    }

    /// The equivalent `(t, s)` table when the policy has no memory and no
    /// per-execution randomization: memoryless policies, one-component
    /// mixtures of them, and segmented policies over memoryless bases.
    pub fn to_memoryless(&self) -> Option<MemorylessPolicy> {
        match self {
            Policy::Memoryless(p) => Some(p.clone()),
            Policy::History(_) => None,
            Policy::Mixture(p) => match p.components.as_slice() {
                [(_, only)] => only.to_memoryless(),
                _ => None,
            },
            Policy::Segmented(p) => {
                let bases: Vec<MemorylessPolicy> = p.bases.iter().map(Policy::to_memoryless).collect::<Option<_>>()?;
                let (horizon, states, actions) = (bases[0].horizon, bases[0].states, bases[0].actions);
                let mut probs = Vec::with_capacity(horizon * states * actions);
                for t in 0..horizon {
                    let segment = p.spec.tau.iter().filter(|&&tau| tau <= t).count();
                    let forced = p.spec.tau.get(segment).is_some_and(|&tau| tau == t + 1) && p.spec.z[segment];
                    for s in 0..states {
                        if forced {
                            probs.extend_from_slice(&p.uniform);
                        } else {
                            probs.extend_from_slice(bases[segment].action_probs(t, s));
                        }
                    }
                }
                Some(MemorylessPolicy {
                    horizon,
                    states,
                    actions,
                    probs,
                })
            }
        }
    }

    /// Short human-readable description used in logs.
    pub fn label(&self) -> String {
        match self {
            Policy::Memoryless(p) => p.label(),
            Policy::History(p) => format!("history[{} entries]", p.len()),
            Policy::Mixture(p) => {
                let parts: Vec<String> = p.components.iter().map(|(_, c)| c.label()).collect();
                format!("mix({})", parts.join(","))
            }
            Policy::Segmented(p) => {
                let parts: Vec<String> = p.bases.iter().map(|b| b.label()).collect();
                let z: String = p.spec.z.iter().map(|&b| if b { '1' } else { '0' }).collect();
                format!("seg(tau={:?},z={z};{})", p.spec.tau, parts.join(","))
            }
        }
    }

    /// Checks dimensions against a model shape.
    pub fn check(&self, shape: &Shape) -> Result<()> {
        match self {
            Policy::Memoryless(p) => {
                if p.horizon != shape.horizon || p.states != shape.states || p.actions != shape.actions {
                    return Err(Error::ShapeMismatch(format!(
                        "memoryless policy is {}x{}x{}, model is H={} S={} A={}",
                        p.horizon, p.states, p.actions, shape.horizon, shape.states, shape.actions
                    )));
                }
                Ok(())
            }
            Policy::History(p) => {
                if p.actions != shape.actions {
                    return Err(Error::ShapeMismatch("history policy action count".into()));
                }
                Ok(())
            }
            Policy::Mixture(p) => p.components.iter().try_for_each(|(_, c)| c.check(shape)),
            Policy::Segmented(p) => {
                p.spec.check(Some(shape.horizon), None)?;
                p.bases.iter().try_for_each(|b| b.check(shape))
            }
        }
    }

    /// Execution states when the policy starts acting at zero-based `step`.
    pub(crate) fn begin(&self, step: usize) -> Branches {
        match self {
            Policy::Memoryless(_) => smallvec![(1.0, ExecState::Stateless)],
            Policy::History(_) => smallvec![(
                1.0,
                ExecState::History {
                    start: step as u16,
                    steps: Vec::new()
                }
            )],
            Policy::Mixture(p) => {
                let mut out = Branches::new();
                for (j, (w, c)) in p.components.iter().enumerate() {
                    if *w <= 0.0 {
                        continue;
                    }
                    for (bw, st) in c.begin(step) {
                        out.push((
                            w * bw,
                            ExecState::Component {
                                index: j as u32,
                                inner: Box::new(st),
                            },
                        ));
                    }
                }
                out
            }
            Policy::Segmented(p) => {
                // Segments that would start at or before `step` have already ended.
                let index = (0..p.bases.len())
                    .rev()
                    .find(|&i| p.segment_start(i) <= step)
                    .unwrap_or(0);
                wrap_segment(index, p.bases[index].begin(step))
            }
        }
    }

    /// Action distribution at zero-based `step` in `state`.
    pub(crate) fn action_probs<'a>(&'a self, exec: &ExecState, step: usize, state: usize) -> Result<Cow<'a, [f64]>> {
        match (self, exec) {
            (Policy::Memoryless(p), _) => Ok(Cow::Borrowed(p.action_probs(step, state))),
            (Policy::History(p), ExecState::History { start, steps }) => {
                let key = HistoryKey {
                    start: *start,
                    steps: steps.clone(),
                    state: state as u16,
                };
                p.get(&key)
                    .map(Cow::Borrowed)
                    .ok_or_else(|| Error::MissingHistory(key.to_string()))
            }
            (Policy::Mixture(p), ExecState::Component { index, inner }) => {
                p.components[*index as usize].1.action_probs(inner, step, state)
            }
            (Policy::Segmented(p), ExecState::Segment { index, inner }) => {
                let i = *index as usize;
                // Checkpoint τ_{i+1} (1-based) closes segment i.
                if let Some(&tau) = p.spec.tau.get(i) {
                    if step + 1 == tau && p.spec.z[i] {
                        return Ok(Cow::Borrowed(&p.uniform));
                    }
                }
                p.bases[i].action_probs(inner, step, state)
            }
            _ => unreachable!("execution state does not match policy"),
        }
    }

    /// Execution states after the policy observed `outcome` at zero-based `step`.
    pub(crate) fn advance(&self, exec: &ExecState, step: usize, outcome: Step) -> Branches {
        match (self, exec) {
            (Policy::Memoryless(_), _) => smallvec![(1.0, ExecState::Stateless)],
            (Policy::History(_), ExecState::History { start, steps }) => {
                let mut steps = steps.clone();
                steps.push(outcome);
                smallvec![(1.0, ExecState::History { start: *start, steps })]
            }
            (Policy::Mixture(p), ExecState::Component { index, inner }) => p.components[*index as usize]
                .1
                .advance(inner, step, outcome)
                .into_iter()
                .map(|(w, st)| {
                    (
                        w,
                        ExecState::Component {
                            index: *index,
                            inner: Box::new(st),
                        },
                    )
                })
                .collect(),
            (Policy::Segmented(p), ExecState::Segment { index, inner }) => {
                let i = *index as usize;
                if p.spec.tau.get(i).is_some_and(|&tau| step + 1 == tau) {
                    wrap_segment(i + 1, p.bases[i + 1].begin(step + 1))
                } else {
                    wrap_segment(i, p.bases[i].advance(inner, step, outcome))
                }
            }
            _ => unreachable!("execution state does not match policy"),
        }
    }

    /// Probability that the policy picks the trajectory's actions given its
    /// observations, `π_{1:H}`, summed over any internal randomization.
    pub fn trajectory_weight(&self, trajectory: &Trajectory) -> Result<f64> {
        fn walk(policy: &Policy, exec: &ExecState, step: usize, traj: &Trajectory) -> Result<f64> {
            if step == traj.steps.len() {
                return Ok(1.0);
            }
            let outcome = traj.steps[step];
            let p = policy.action_probs(exec, step, outcome.state as usize)?[outcome.action as usize];
            if p == 0.0 {
                return Ok(0.0);
            }
            let mut total = 0.0;
            for (w, next) in policy.advance(exec, step, outcome) {
                total += w * walk(policy, &next, step + 1, traj)?;
            }
            Ok(p * total)
        }
        let mut total = 0.0;
        for (w, exec) in self.begin(0) {
            total += w * walk(self, &exec, 0, trajectory)?;
        }
        Ok(total)
    }
}

fn wrap_segment(index: usize, inner: Branches) -> Branches {
    inner
        .into_iter()
        .map(|(w, st)| {
            (
                w,
                ExecState::Segment {
                    index: index as u32,
                    inner: Box::new(st),
                },
            )
        })
        .collect()
}

/// Every deterministic memoryless policy, in lexicographic order of the action
/// table `[t][s]` (step 1, state 0 most significant).
pub fn deterministic_memoryless_policies(shape: &Shape) -> impl Iterator<Item = MemorylessPolicy> {
    let Shape {
        horizon,
        states,
        actions,
        ..
    } = *shape;
    let digits = horizon * states;
    let total = (actions as u128).checked_pow(digits as u32).unwrap_or(u128::MAX);
    (0..total).map(move |mut index| {
        let mut table = vec![0usize; digits];
        for slot in table.iter_mut().rev() {
            *slot = (index % actions as u128) as usize;
            index /= actions as u128;
        }
        MemorylessPolicy::deterministic(horizon, states, actions, &table).expect("valid table")
    })
}
