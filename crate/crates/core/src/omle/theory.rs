//! Theoretical parameter settings. These are reported, never enforced.

use serde::{Deserialize, Serialize};

use super::beta_threshold;
use crate::checkpoint::default_budget;
use crate::error::{Error, Result};

/// Problem size and accuracy targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub contexts: usize,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    /// Target suboptimality `ε`.
    pub epsilon: f64,
    pub eta: f64,
    pub class_size: f64,
    /// Checkpoint budget; `2M − 1` when absent.
    #[serde(default)]
    pub d: Option<usize>,
}

/// Settings derived from [`TheoryInputs`], with all `O(·)` constants set to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub d: usize,
    /// `ε_TV = ε / H`.
    pub eps_tv: f64,
    /// MDP iteration count `HSA · ln(HSA/ε)`.
    pub mdp_k: f64,
    /// `ln(K |Θ| / η)` with the MDP iteration count.
    pub mdp_beta: f64,
    /// `64 β H³ S A / ε_test²` with `ε_test = ε_TV`.
    pub mdp_n_test: f64,
    /// LMDP iteration count `M S² H · ln(MSAH/ε)`.
    pub lmdp_k: f64,
    pub lmdp_beta: f64,
    /// `M⁻¹ (2H² MSA)^{−d} ε_TV`.
    pub lmdp_eps_test: f64,
    /// `3 β M² (8H²)^d (M S² A²)^d / ε_test²`.
    pub lmdp_n_test: f64,
    /// `64 M² β (H n A²)^d / ε_test²` with `n = M H S²`.
    pub lmdp_n_test_alt: f64,
    /// `M (2H²)^d (MSA)^d`, the memoryless-to-history TV factor.
    pub sufficiency_factor: f64,
}

pub fn theory_report(inputs: &TheoryInputs) -> Result<TheoryReport> {
    let TheoryInputs {
        contexts,
        states,
        actions,
        horizon,
        epsilon,
        eta,
        class_size,
        d,
    } = *inputs;
    if contexts == 0 || states == 0 || actions == 0 || horizon == 0 {
        return Err(Error::InvalidModel("dimensions must be positive".into()));
    }
    for (name, v) in [("epsilon", epsilon), ("eta", eta), ("class size", class_size)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::OutOfRange {
                name,
                value: v,
                expected: "positive and finite",
            });
        }
    }
    let (m, s, a, h) = (contexts as f64, states as f64, actions as f64, horizon as f64);
    let d = d.unwrap_or_else(|| default_budget(contexts));
    let di = d as i32;
    let eps_tv = epsilon / h;

    let hsa = h * s * a;
    let mdp_k = hsa * (hsa / epsilon).ln().max(1.0);
    let mdp_beta = beta_threshold(mdp_k, class_size, eta);
    let mdp_n_test = 64.0 * mdp_beta * h.powi(3) * s * a / eps_tv.powi(2);

    let lmdp_k = m * s * s * h * (m * s * a * h / epsilon).ln().max(1.0);
    let lmdp_beta = beta_threshold(lmdp_k, class_size, eta);
    let lmdp_eps_test = eps_tv / (m * (2.0 * h * h * m * s * a).powi(di));
    let lmdp_n_test =
        3.0 * lmdp_beta * m * m * (8.0 * h * h).powi(di) * (m * s * s * a * a).powi(di) / lmdp_eps_test.powi(2);
    let n = m * h * s * s;
    let lmdp_n_test_alt = 64.0 * m * m * lmdp_beta * (h * n * a * a).powi(di) / lmdp_eps_test.powi(2);
    let sufficiency_factor = sufficiency_factor(contexts, states, actions, horizon, d);
    Ok(TheoryReport {
        d,
        eps_tv,
        mdp_k,
        mdp_beta,
        mdp_n_test,
        lmdp_k,
        lmdp_beta,
        lmdp_eps_test,
        lmdp_n_test,
        lmdp_n_test_alt,
        sufficiency_factor,
    })
}

/// `M (2H²)^d (MSA)^d`.
pub fn sufficiency_factor(contexts: usize, states: usize, actions: usize, horizon: usize, d: usize) -> f64 {
    let (m, s, a, h) = (contexts as f64, states as f64, actions as f64, horizon as f64);
    m * (2.0 * h * h).powi(d as i32) * (m * s * a).powi(d as i32)
}
