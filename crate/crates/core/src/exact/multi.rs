//! Total variation between several models under one memoryless policy, from a
//! single depth-first pass.

use crate::model::LmdpModel;
use crate::policy::MemorylessPolicy;

struct Walker<'a> {
    models: &'a [&'a LmdpModel],
    offsets: Vec<usize>,
    policy: &'a MemorylessPolicy,
    horizon: usize,
    /// Accumulated `Σ |D_i - D_j|`, pairs `i < j` in lexicographic order.
    sums: Vec<f64>,
    totals: Vec<f64>,
    /// Two scratch vectors per depth.
    scratch: Vec<Vec<f64>>,
}

impl Walker<'_> {
    fn visit(&mut self, k: usize, state: usize, alpha: &[f64], weight: f64) {
        let probs = self.policy.action_probs(k, state);
        let mut rv = std::mem::take(&mut self.scratch[2 * k]);
        let mut child = std::mem::take(&mut self.scratch[2 * k + 1]);
        let last = k + 1 == self.horizon;
        let states = self.policy.num_states();
        let rewards = self.models[0].num_rewards();
        for (a, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for r in 0..rewards {
                let mut any = false;
                for (i, model) in self.models.iter().enumerate() {
                    let base = self.offsets[i];
                    for m in 0..model.num_contexts() {
                        let v = alpha[base + m] * model.reward_row(m, state, a)[r];
                        rv[base + m] = v;
                        any |= v > 0.0;
                    }
                }
                if !any {
                    continue;
                }
                if last {
                    self.leaf(&rv, weight * p);
                    continue;
                }
                for s2 in 0..states {
                    let mut any = false;
                    for (i, model) in self.models.iter().enumerate() {
                        let base = self.offsets[i];
                        for m in 0..model.num_contexts() {
                            let v = rv[base + m] * model.transition_row(m, state, a)[s2];
                            child[base + m] = v;
                            any |= v > 0.0;
                        }
                    }
                    if any {
                        self.visit(k + 1, s2, &child, weight * p);
                    }
                }
            }
        }
        self.scratch[2 * k] = rv;
        self.scratch[2 * k + 1] = child;
    }

    fn leaf(&mut self, alpha: &[f64], weight: f64) {
        for (i, model) in self.models.iter().enumerate() {
            let base = self.offsets[i];
            self.totals[i] = model
                .weights()
                .iter()
                .enumerate()
                .map(|(m, w)| w * alpha[base + m])
                .sum();
        }
        let n = self.models.len();
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                self.sums[idx] += weight * (self.totals[i] - self.totals[j]).abs();
                idx += 1;
            }
        }
    }
}

/// `TV(ℙ_{θ_i}^π, ℙ_{θ_j}^π)` over full trajectories for every pair `i < j`,
/// in lexicographic pair order. All models must share `S`, `A`, `H` and the
/// reward support size.
pub fn pairwise_memoryless_tv(models: &[&LmdpModel], policy: &MemorylessPolicy) -> Vec<f64> {
    let n = models.len();
    if n < 2 {
        return Vec::new();
    }
    let mut offsets = Vec::with_capacity(n);
    let mut width = 0;
    for model in models {
        offsets.push(width);
        width += model.num_contexts();
    }
    let horizon = policy.horizon();
    let mut walker = Walker {
        models,
        offsets,
        policy,
        horizon,
        sums: vec![0.0; n * (n - 1) / 2],
        totals: vec![0.0; n],
        scratch: vec![vec![0.0; width]; 2 * horizon],
    };
    let mut alpha = vec![0.0; width];
    for s in 0..policy.num_states() {
        let mut any = false;
        for (i, model) in models.iter().enumerate() {
            for m in 0..model.num_contexts() {
                let v = model.init_row(m)[s];
                alpha[walker.offsets[i] + m] = v;
                any |= v > 0.0;
            }
        }
        if any {
            walker.visit(0, s, &alpha, 1.0);
        }
    }
    walker.sums.iter().map(|s| (0.5 * s).min(1.0)).collect()
}
