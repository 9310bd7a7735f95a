use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Shape, PROB_TOLERANCE};
use crate::trajectory::{Step, Trajectory};

/// What is logged at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// `(x_t, y_t) = (s_t, a_t, r_t, s_{t+1})`.
    Full,
    /// Only `s_{t+1}`.
    NextState,
}

impl EventKind {
    pub(crate) fn radix(self, shape: &Shape) -> u64 {
        let next = shape.states as u64 + 1;
        match self {
            EventKind::Full => shape.step_radix() as u64 * next,
            EventKind::NextState => next,
        }
    }
}

/// What the keys of a [`TrajectoryDistribution`] describe.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "snake_case")]
pub enum Scope {
    /// Whole trajectories, encoded by [`Trajectory::encode`].
    Full,
    /// Events at the 1-based times `tau`.
    Checkpoints { tau: Vec<usize>, kinds: Vec<EventKind> },
}

impl Scope {
    /// Full events at every time in `tau`.
    pub fn full_events(tau: &[usize]) -> Scope {
        Scope::Checkpoints {
            tau: tau.to_vec(),
            kinds: vec![EventKind::Full; tau.len()],
        }
    }
}

/// One decoded checkpoint event. `next_state` is `None` for the null state
/// after the last step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CheckpointEvent {
    pub time: usize,
    pub step: Option<Step>,
    pub next_state: Option<u16>,
}

/// Digit of one checkpoint event inside a checkpoint key.
pub(crate) fn event_digit(kind: EventKind, shape: &Shape, step: Step, next: Option<usize>) -> u64 {
    let next = next.unwrap_or(shape.states) as u64;
    match kind {
        EventKind::Full => step.code(shape) * (shape.states as u64 + 1) + next,
        EventKind::NextState => next,
    }
}

/// Exact finite distribution over full trajectories or checkpoint events.
/// Zero-probability keys are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDistribution {
    scope: Scope,
    shape: Shape,
    probs: BTreeMap<u64, f64>,
}

impl TrajectoryDistribution {
    pub(crate) fn from_map(scope: Scope, shape: Shape, mut probs: BTreeMap<u64, f64>) -> Self {
        probs.retain(|_, p| *p != 0.0);
        TrajectoryDistribution { scope, shape, probs }
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of an encoded key (zero when absent).
    pub fn get(&self, code: u64) -> f64 {
        self.probs.get(&code).copied().unwrap_or(0.0)
    }

    /// Entries in increasing key order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.probs.iter().map(|(&k, &p)| (k, p))
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Probability of a full trajectory.
    pub fn probability(&self, trajectory: &Trajectory) -> f64 {
        debug_assert_eq!(self.scope, Scope::Full);
        self.get(trajectory.encode(&self.shape))
    }

    /// Decodes a checkpoint key into its events.
    pub fn decode_events(&self, code: u64) -> Vec<CheckpointEvent> {
        let Scope::Checkpoints { tau, kinds } = &self.scope else {
            return Vec::new();
        };
        let states = self.shape.states as u64 + 1;
        let mut rest = code;
        let mut out = Vec::with_capacity(tau.len());
        for (&t, &kind) in tau.iter().zip(kinds).rev() {
            let digit = rest % kind.radix(&self.shape);
            rest /= kind.radix(&self.shape);
            let next = digit % states;
            let next_state = (next < self.shape.states as u64).then_some(next as u16);
            let step = match kind {
                EventKind::Full => Some(Step::from_code(digit / states, &self.shape)),
                EventKind::NextState => None,
            };
            out.push(CheckpointEvent {
                time: t,
                step,
                next_state,
            });
        }
        out.reverse();
        out
    }

    /// Checks nonnegativity, normalization and key well-formedness. For
    /// checkpoint keys, consecutive times must chain `s_{t+1}` into the
    /// next event's state, and the null state may only follow step `H`.
    pub fn check(&self) -> Result<()> {
        let mass = self.total_mass();
        if (mass - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::InvalidModel(format!("distribution mass is {mass}")));
        }
        if let Some((k, p)) = self.probs.iter().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidModel(format!("key {k} has probability {p}")));
        }
        let horizon = self.shape.horizon;
        match &self.scope {
            Scope::Full => {
                let limit = self.shape.trajectory_count();
                if let Some(&k) = self.probs.keys().find(|&&k| k as f64 >= limit) {
                    return Err(Error::ShapeMismatch(format!("trajectory key {k} out of range")));
                }
            }
            Scope::Checkpoints { .. } => {
                for &code in self.probs.keys() {
                    let events = self.decode_events(code);
                    for (i, e) in events.iter().enumerate() {
                        if e.next_state.is_none() != (e.time == horizon) {
                            return Err(Error::ShapeMismatch(format!(
                                "key {code}: null next state at time {}",
                                e.time
                            )));
                        }
                        if let (Some(next), Some(Some(step))) = (
                            e.next_state,
                            events.get(i + 1).filter(|n| n.time == e.time + 1).map(|n| n.step),
                        ) {
                            if step.state != next {
                                return Err(Error::ShapeMismatch(format!(
                                    "key {code}: events at {} and {} do not chain",
                                    e.time,
                                    e.time + 1
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Sorted two-column text, one `key<TAB>probability` line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, p) in &self.probs {
            writeln!(out, "{k}\t{p:?}").expect("writing to a string");
        }
        out
    }

    /// Convex combination of distributions with a common scope.
    pub fn mix(components: &[(f64, &TrajectoryDistribution)]) -> Result<TrajectoryDistribution> {
        let Some((_, first)) = components.first() else {
            return Err(Error::InvalidPolicy("empty mixture".into()));
        };
        let mut probs = BTreeMap::new();
        for (w, d) in components {
            ensure_same_scope(first, d)?;
            for (k, p) in d.iter() {
                *probs.entry(k).or_insert(0.0) += w * p;
            }
        }
        Ok(TrajectoryDistribution::from_map(
            first.scope.clone(),
            first.shape,
            probs,
        ))
    }
}

fn ensure_same_scope(p: &TrajectoryDistribution, q: &TrajectoryDistribution) -> Result<()> {
    if p.scope != q.scope || !p.shape.compatible(&q.shape) {
        return Err(Error::ScopeMismatch(format!("{:?} vs {:?}", p.scope, q.scope)));
    }
    Ok(())
}

/// `½ Σ |p - q|` over the union of supports.
pub fn tv_distance(p: &TrajectoryDistribution, q: &TrajectoryDistribution) -> Result<f64> {
    ensure_same_scope(p, q)?;
    let mut sum = 0.0;
    let mut a = p.probs.iter().peekable();
    let mut b = q.probs.iter().peekable();
    loop {
        match (a.peek(), b.peek()) {
            (Some((ka, pa)), Some((kb, pb))) => {
                if ka == kb {
                    sum += (*pa - *pb).abs();
                    a.next();
                    b.next();
                } else if ka < kb {
                    sum += **pa;
                    a.next();
                } else {
                    sum += **pb;
                    b.next();
                }
            }
            (Some((_, pa)), None) => {
                sum += **pa;
                a.next();
            }
            (None, Some((_, pb))) => {
                sum += **pb;
                b.next();
            }
            (None, None) => break,
        }
    }
    Ok((0.5 * sum).min(1.0))
}
