//! Checkpoint sequences and intervention bits for segmented policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Checkpoint times `τ` (1-based, strictly increasing) and intervention bits `z`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CheckpointSpec {
    pub tau: Vec<usize>,
    pub z: Vec<bool>,
}

impl CheckpointSpec {
    pub fn new(tau: Vec<usize>, z: Vec<bool>) -> Result<Self> {
        let spec = CheckpointSpec { tau, z };
        spec.check(None, None)?;
        Ok(spec)
    }

    /// No checkpoints: the first base policy runs for the whole episode.
    pub fn empty() -> Self {
        CheckpointSpec {
            tau: Vec::new(),
            z: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Validates ordering, the bit count, and optionally the horizon and the
    /// checkpoint budget `d`.
    pub fn check(&self, horizon: Option<usize>, budget: Option<usize>) -> Result<()> {
        if self.z.len() != self.tau.len() {
            return Err(Error::InvalidCheckpoints(format!(
                "{} intervention bits for {} checkpoints",
                self.z.len(),
                self.tau.len()
            )));
        }
        if self.tau.first().is_some_and(|&t| t == 0) {
            return Err(Error::InvalidCheckpoints("checkpoint times are 1-based".into()));
        }
        if self.tau.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidCheckpoints(format!(
                "checkpoints {:?} are not strictly increasing",
                self.tau
            )));
        }
        if let (Some(h), Some(&last)) = (horizon, self.tau.last()) {
            if last > h {
                return Err(Error::InvalidCheckpoints(format!(
                    "checkpoint {last} exceeds horizon {h}"
                )));
            }
        }
        if let Some(d) = budget {
            if self.tau.len() > d {
                return Err(Error::InvalidCheckpoints(format!(
                    "{} checkpoints exceed the budget d = {d}",
                    self.tau.len()
                )));
            }
        }
        Ok(())
    }
}

/// The default checkpoint budget `d = 2M - 1`.
pub fn default_budget(contexts: usize) -> usize {
    2 * contexts - 1
}

/// All strictly increasing subsequences of `(1, ..., H)` with length `1..=d`,
/// in lexicographic order.
pub fn enumerate_subsequences(horizon: usize, d: usize) -> Result<Vec<Vec<usize>>> {
    if d < 1 {
        return Err(Error::OutOfRange {
            name: "d",
            value: d as f64,
            expected: "d >= 1",
        });
    }
    fn extend(prefix: &mut Vec<usize>, next: usize, horizon: usize, d: usize, out: &mut Vec<Vec<usize>>) {
        for t in next..=horizon {
            prefix.push(t);
            out.push(prefix.clone());
            if prefix.len() < d {
                extend(prefix, t + 1, horizon, d, out);
            }
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), 1, horizon, d, &mut out);
    Ok(out)
}

/// All `2^q` intervention bit vectors of length `q`, `z_1` most significant.
pub fn enumerate_bits(q: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..(1u64 << q)).map(move |mask| (0..q).map(|i| (mask >> (q - 1 - i)) & 1 == 1).collect())
}

/// Every `(τ, z)` pair with `τ ∈ SubSeq(H, d)`.
pub fn enumerate_checkpoint_specs(horizon: usize, d: usize) -> Result<Vec<CheckpointSpec>> {
    let mut out = Vec::new();
    for tau in enumerate_subsequences(horizon, d)? {
        for z in enumerate_bits(tau.len()) {
            out.push(CheckpointSpec { tau: tau.clone(), z });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn singletons() {
        assert_eq!(enumerate_subsequences(3, 1).unwrap(), vec![vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn pairs_of_three() {
        let got = enumerate_subsequences(3, 2).unwrap();
        assert_eq!(got.len(), 6);
        for want in [vec![1], vec![2], vec![3], vec![1, 2], vec![1, 3], vec![2, 3]] {
            assert!(got.contains(&want));
        }
    }

    #[test]
    fn count_matches_binomial_sum() {
        let oracle: usize = (1..=3).map(|k| binomial(6, k)).sum();
        assert_eq!(oracle, 41);
        assert_eq!(enumerate_subsequences(6, 3).unwrap().len(), oracle);
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(enumerate_subsequences(3, 0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(CheckpointSpec::new(vec![2, 2], vec![false, true]).is_err());
        assert!(CheckpointSpec::new(vec![3, 1], vec![false, true]).is_err());
        assert!(CheckpointSpec::new(vec![1, 3], vec![false]).is_err());
        let spec = CheckpointSpec::new(vec![1, 3], vec![false, true]).unwrap();
        assert!(spec.check(Some(2), None).is_err());
        assert!(spec.check(Some(3), Some(1)).is_err());
        assert!(spec.check(Some(3), Some(2)).is_ok());
    }

    proptest! {
        #[test]
        fn subsequences_sorted_unique_complete(h in 1usize..8, d in 1usize..5) {
            let d = d.min(h);
            let seqs = enumerate_subsequences(h, d).unwrap();
            prop_assert!(seqs.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(seqs.iter().all(|s| s.windows(2).all(|w| w[0] < w[1])));
            let expected: usize = (1..=d).map(|k| binomial(h, k)).sum();
            prop_assert_eq!(seqs.len(), expected);
        }
    }
}
