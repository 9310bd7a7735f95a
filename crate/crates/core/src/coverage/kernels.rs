//! Latent segment kernels of memoryless policies and the segment coverage
//! built from them.
//!
//! Steps are zero-based here: `K_m^ψ[j][l][s'][s]` is the probability of being
//! in state `s` at step `l` given state `s'` at step `j <= l`, under context
//! `m` with `ψ` acting from step `j` on. Reports convert to 1-based times.

use super::{CoverageReport, RatioMax, Witness};
use crate::error::{Error, Result};
use crate::model::LmdpModel;
use crate::policy::{MemorylessPolicy, MixturePolicy, Policy};

/// Segment kernels of one memoryless policy on one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentKernels {
    contexts: usize,
    horizon: usize,
    states: usize,
    /// `[m][j][l][s'][s]`, zero where `l < j`.
    data: Vec<f64>,
}

impl SegmentKernels {
    fn index(&self, m: usize, j: usize, l: usize, from: usize, to: usize) -> usize {
        let (h, s) = (self.horizon, self.states);
        (((m * h + j) * h + l) * s + from) * s + to
    }

    /// `P_m(s_l = to | s_j = from)` for zero-based steps `j <= l`.
    pub fn get(&self, m: usize, j: usize, l: usize, from: usize, to: usize) -> f64 {
        debug_assert!(j <= l);
        self.data[self.index(m, j, l, from, to)]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts
    }
}

/// Forward products of the latent Markov chain induced by `policy`.
pub fn segment_kernels(model: &LmdpModel, policy: &MemorylessPolicy) -> SegmentKernels {
    let shape = model.shape();
    let (h, n) = (shape.horizon, shape.states);
    let mut kernels = SegmentKernels {
        contexts: shape.contexts,
        horizon: h,
        states: n,
        data: vec![0.0; shape.contexts * h * h * n * n],
    };
    // chain[m][l][s][s2]: one-step transition out of step l.
    let mut chain = vec![0.0; shape.contexts * h * n * n];
    for m in 0..shape.contexts {
        for l in 0..h {
            for s in 0..n {
                for (a, &p) in policy.action_probs(l, s).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (s2, &t) in model.transition_row(m, s, a).iter().enumerate() {
                        chain[((m * h + l) * n + s) * n + s2] += p * t;
                    }
                }
            }
        }
    }
    let mut row = vec![0.0; n];
    let mut next = vec![0.0; n];
    for m in 0..shape.contexts {
        for j in 0..h {
            for from in 0..n {
                row.iter_mut().for_each(|x| *x = 0.0);
                row[from] = 1.0;
                for l in j..h {
                    for (to, &p) in row.iter().enumerate() {
                        let i = kernels.index(m, j, l, from, to);
                        kernels.data[i] = p;
                    }
                    if l + 1 == h {
                        break;
                    }
                    next.iter_mut().for_each(|x| *x = 0.0);
                    for (s, &p) in row.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        let base = ((m * h + l) * n + s) * n;
                        for (s2, slot) in next.iter_mut().enumerate() {
                            *slot += p * chain[base + s2];
                        }
                    }
                    std::mem::swap(&mut row, &mut next);
                }
            }
        }
    }
    kernels
}

/// State marginals `P_m(s_l = s)` under a memoryless policy, `[m][l][s]`.
pub fn state_marginals(model: &LmdpModel, policy: &MemorylessPolicy) -> Vec<Vec<Vec<f64>>> {
    let shape = model.shape();
    (0..shape.contexts)
        .map(|m| {
            let mut out = Vec::with_capacity(shape.horizon);
            let mut cur = model.init_row(m).to_vec();
            for l in 0..shape.horizon {
                out.push(cur.clone());
                let mut next = vec![0.0; shape.states];
                for (s, &p) in cur.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (a, &pa) in policy.action_probs(l, s).iter().enumerate() {
                        for (s2, &t) in model.transition_row(m, s, a).iter().enumerate() {
                            next[s2] += p * pa * t;
                        }
                    }
                }
                cur = next;
            }
            out
        })
        .collect()
}

fn require_memoryless<'a>(policies: &'a [Policy], what: &str) -> Result<Vec<&'a MemorylessPolicy>> {
    policies
        .iter()
        .map(|p| {
            p.as_memoryless()
                .ok_or_else(|| Error::Unsupported(format!("{what} must be memoryless")))
        })
        .collect()
}

/// `ρ(Ψ_test; π)`: the largest ratio of the target's segment probability to
/// the best test policy's, over contexts, segment endpoints and states.
///
/// Segments start at any zero-based step `j` (including the initial state)
/// and end at any `l >= j`. Conditioning states with zero mass under the
/// target and every test policy are skipped and counted.
pub fn segment_coverage(model: &LmdpModel, test: &[Policy], target: &Policy) -> Result<CoverageReport> {
    if test.is_empty() {
        return Err(Error::InvalidPolicy("empty test set".into()));
    }
    let test = require_memoryless(test, "test policies")?;
    let target = target
        .as_memoryless()
        .ok_or_else(|| Error::Unsupported("segment coverage of a history-dependent target".into()))?;
    let shape = model.shape();
    let target_kernels = segment_kernels(model, target);
    let test_kernels: Vec<SegmentKernels> = test.iter().map(|p| segment_kernels(model, p)).collect();
    let target_mass = state_marginals(model, target);
    let test_mass: Vec<_> = test.iter().map(|p| state_marginals(model, p)).collect();
    let mut max = RatioMax::new(false);
    for m in 0..shape.contexts {
        for j in 0..shape.horizon {
            for from in 0..shape.states {
                let reachable = target_mass[m][j][from] > 0.0 || test_mass.iter().any(|t| t[m][j][from] > 0.0);
                if !reachable {
                    max.skipped += 1;
                    continue;
                }
                for l in j..shape.horizon {
                    for to in 0..shape.states {
                        let num = target_kernels.get(m, j, l, from, to);
                        let den = test_kernels
                            .iter()
                            .map(|k| k.get(m, j, l, from, to))
                            .fold(0.0, f64::max);
                        max.offer(num, den, || Witness::Segment {
                            context: m,
                            from_time: j + 1,
                            to_time: l + 1,
                            from,
                            to,
                        });
                    }
                }
            }
        }
    }
    Ok(max.finish())
}

/// The argmax subset `Ψ_ξ` of a test set and its uniform mixture `ψ_ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestMixture {
    /// Indices into the test set, in their original order.
    pub members: Vec<usize>,
    pub policy: Policy,
}

impl TestMixture {
    pub fn n(&self) -> usize {
        self.members.len()
    }
}

/// Collects, for every context, segment `j < l` and state pair, the test
/// policy maximizing the segment probability (earliest wins ties), then
/// mixes the collected policies uniformly.
///
/// The maximization runs over every segment start rather than one fixed
/// start, since memoryless policies depend on absolute time.
pub fn build_test_mixture(model: &LmdpModel, test: &[Policy]) -> Result<TestMixture> {
    if test.is_empty() {
        return Err(Error::InvalidPolicy("empty test set".into()));
    }
    let memoryless = require_memoryless(test, "test policies")?;
    let shape = model.shape();
    let kernels: Vec<SegmentKernels> = memoryless.iter().map(|p| segment_kernels(model, p)).collect();
    let mut chosen = vec![false; test.len()];
    chosen[0] = test.len() == 1;
    for m in 0..shape.contexts {
        for j in 0..shape.horizon {
            for l in j + 1..shape.horizon {
                for from in 0..shape.states {
                    for to in 0..shape.states {
                        let mut best = 0.0;
                        let mut arg = None;
                        for (i, k) in kernels.iter().enumerate() {
                            let v = k.get(m, j, l, from, to);
                            if v > best {
                                best = v;
                                arg = Some(i);
                            }
                        }
                        if let Some(i) = arg {
                            chosen[i] = true;
                        }
                    }
                }
            }
        }
    }
    if !chosen.iter().any(|&c| c) {
        chosen[0] = true;
    }
    let members: Vec<usize> = (0..test.len()).filter(|&i| chosen[i]).collect();
    let policy = MixturePolicy::uniform(members.iter().map(|&i| test[i].clone()).collect())?.into();
    Ok(TestMixture { members, policy })
}
