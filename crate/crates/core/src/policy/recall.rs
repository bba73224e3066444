use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::gridworld::{Action, NUM_ACTIONS};
use crate::tensorkit::softmax;

pub type ActionVec = [f64; NUM_ACTIONS];

/// `k` action distributions predicted at one step: row `j` is the
/// distribution of the action `j` steps ahead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentMatrix {
    pub t: usize,
    pub rows: Vec<ActionVec>,
}

impl FragmentMatrix {
    pub fn k(&self) -> usize {
        self.rows.len()
    }

    /// A fragment whose every row is the one-hot of `action`.
    pub fn constant(t: usize, k: usize, action: Action) -> FragmentMatrix {
        FragmentMatrix {
            t,
            rows: vec![action.one_hot(); k],
        }
    }
}

/// The last `k` fragments, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct RecallBuffer {
    k: usize,
    entries: VecDeque<FragmentMatrix>,
}

impl RecallBuffer {
    pub fn new(k: usize) -> RecallBuffer {
        RecallBuffer {
            k,
            entries: VecDeque::with_capacity(k),
        }
    }

    pub fn push(&mut self, fragment: FragmentMatrix) {
        if self.entries.len() == self.k {
            self.entries.pop_front();
        }
        self.entries.push_back(fragment);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    /// The fragment predicted `age` steps ago (`0` is the newest).
    pub fn ago(&self, age: usize) -> Option<&FragmentMatrix> {
        self.entries.len().checked_sub(age + 1).map(|i| &self.entries[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecallStrategy {
    /// Unweighted sum of the aligned rows.
    A,
    /// Sum weighted by one trainable scalar per age.
    B,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecallWeights {
    pub strategy: RecallStrategy,
    pub w: Vec<f64>,
}

impl RecallWeights {
    pub fn unit(strategy: RecallStrategy, k: usize) -> RecallWeights {
        RecallWeights {
            strategy,
            w: vec![1.0; k],
        }
    }

    pub fn weight(&self, age: usize) -> f64 {
        match self.strategy {
            RecallStrategy::A => 1.0,
            RecallStrategy::B => self.w[age],
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Combine the aligned rows of the buffered fragments into one decision
/// vector: `ŷ = Σ_i w_i · F_{t-i}[i]` over the fragments available, then act
/// on `argmax softmax(ŷ)`.
pub fn recall_decide(
    buf: &RecallBuffer,
    weights: &RecallWeights,
) -> Result<(ActionVec, Action), PolicyError> {
    if buf.is_empty() {
        return Err(PolicyError::EmptyBuffer);
    }
    let mut yhat = [0.0; NUM_ACTIONS];
    for age in 0..buf.len() {
        let fragment = buf.ago(age).unwrap();
        let w = weights.weight(age);
        for (y, p) in yhat.iter_mut().zip(&fragment.rows[age]) {
            *y += w * p;
        }
    }
    let action = Action::from_index(argmax(&softmax(&yhat)));
    Ok((yhat, action))
}
