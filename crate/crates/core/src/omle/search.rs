use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{pairwise_memoryless_tv, Guards};
use crate::model::LmdpModel;
use crate::policy::{deterministic_memoryless_policies, MemorylessPolicy};

/// A policy on which two members of the confidence set disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrimination {
    pub policy: MemorylessPolicy,
    /// Indices into the candidate slice, `first < second`.
    pub pair: (usize, usize),
    pub tv: f64,
}

/// The first deterministic memoryless policy, in lexicographic table order,
/// under which some pair of `candidates` is more than `threshold` apart in
/// full-trajectory TV. Pairs are scanned lexicographically.
pub fn find_discriminating_policy(
    candidates: &[&LmdpModel],
    threshold: f64,
    guards: &Guards,
) -> Result<Option<Discrimination>> {
    if candidates.len() < 2 {
        return Ok(None);
    }
    let shape = candidates[0].shape();
    if candidates.iter().any(|m| !m.shape().compatible(&shape)) {
        return Err(Error::ShapeMismatch("candidate models differ in shape".into()));
    }
    let count = (shape.actions as f64).powi((shape.states * shape.horizon) as i32);
    if count > guards.policies {
        return Err(Error::guard(
            "deterministic memoryless policies A^(S*H)",
            count,
            guards.policies,
        ));
    }
    let n = candidates.len();
    for policy in deterministic_memoryless_policies(&shape) {
        let tvs = pairwise_memoryless_tv(candidates, &policy);
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                if tvs[idx] > threshold {
                    return Ok(Some(Discrimination {
                        policy,
                        pair: (i, j),
                        tv: tvs[idx],
                    }));
                }
                idx += 1;
            }
        }
    }
    Ok(None)
}
