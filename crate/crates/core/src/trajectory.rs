//! Trajectories and their integer encodings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Shape;

/// One step `(s_t, a_t, r_t)`, with the reward stored as a support index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub state: u16,
    pub action: u16,
    pub reward: u16,
}

impl Step {
    pub fn new(state: usize, action: usize, reward: usize) -> Self {
        Step {
            state: state as u16,
            action: action as u16,
            reward: reward as u16,
        }
    }

    pub(crate) fn code(&self, shape: &Shape) -> u64 {
        ((self.state as u64 * shape.actions as u64) + self.action as u64) * shape.rewards as u64 + self.reward as u64
    }

    pub(crate) fn from_code(code: u64, shape: &Shape) -> Step {
        let r = code % shape.rewards as u64;
        let rest = code / shape.rewards as u64;
        let a = rest % shape.actions as u64;
        let s = rest / shape.actions as u64;
        Step::new(s as usize, a as usize, r as usize)
    }
}

/// A full episode `(s, a, r)_{1:H}`. The terminal state `s_{H+1}` is null and
/// not stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>) -> Self {
        Trajectory { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks the length and index ranges against a model shape.
    pub fn check(&self, shape: &Shape) -> Result<()> {
        if self.steps.len() != shape.horizon {
            return Err(Error::ShapeMismatch(format!(
                "trajectory has {} steps, horizon is {}",
                self.steps.len(),
                shape.horizon
            )));
        }
        for (t, step) in self.steps.iter().enumerate() {
            if step.state as usize >= shape.states
                || step.action as usize >= shape.actions
                || step.reward as usize >= shape.rewards
            {
                return Err(Error::ShapeMismatch(format!("step {} = {step:?} out of range", t + 1)));
            }
        }
        Ok(())
    }

    /// Mixed-radix code with the first step most significant, so that code
    /// order is lexicographic trajectory order.
    pub fn encode(&self, shape: &Shape) -> u64 {
        let radix = shape.step_radix() as u64;
        self.steps.iter().fold(0u64, |acc, step| acc * radix + step.code(shape))
    }

    pub fn decode(code: u64, shape: &Shape) -> Trajectory {
        let radix = shape.step_radix() as u64;
        let mut steps = vec![Step::new(0, 0, 0); shape.horizon];
        let mut rest = code;
        for slot in steps.iter_mut().rev() {
            *slot = Step::from_code(rest % radix, shape);
            rest /= radix;
        }
        Trajectory { steps }
    }

    /// Sum of realized rewards.
    pub fn total_reward(&self, support: &[f64]) -> f64 {
        self.steps.iter().map(|s| support[s.reward as usize]).sum()
    }
}

impl std::fmt::Display for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "({},{},{})", s.state, s.action, s.reward)?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape() -> Shape {
        Shape {
            contexts: 2,
            states: 3,
            actions: 2,
            horizon: 4,
            rewards: 3,
        }
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(raw in proptest::collection::vec((0usize..3, 0usize..2, 0usize..3), 4)) {
            let shape = shape();
            let t = Trajectory::new(raw.iter().map(|&(s, a, r)| Step::new(s, a, r)).collect());
            t.check(&shape).unwrap();
            prop_assert_eq!(Trajectory::decode(t.encode(&shape), &shape), t);
        }

        #[test]
        fn code_order_is_lexicographic(
            x in proptest::collection::vec((0usize..3, 0usize..2, 0usize..3), 4),
            y in proptest::collection::vec((0usize..3, 0usize..2, 0usize..3), 4),
        ) {
            let shape = shape();
            let tx = Trajectory::new(x.iter().map(|&(s, a, r)| Step::new(s, a, r)).collect());
            let ty = Trajectory::new(y.iter().map(|&(s, a, r)| Step::new(s, a, r)).collect());
            prop_assert_eq!(tx.cmp(&ty), tx.encode(&shape).cmp(&ty.encode(&shape)));
        }
    }

    #[test]
    fn check_rejects_bad_lengths_and_indices() {
        let shape = shape();
        assert!(Trajectory::new(vec![Step::new(0, 0, 0)]).check(&shape).is_err());
        let mut steps = vec![Step::new(0, 0, 0); 4];
        steps[2] = Step::new(3, 0, 0);
        assert!(Trajectory::new(steps).check(&shape).is_err());
    }
}
