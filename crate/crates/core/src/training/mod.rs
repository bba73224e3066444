//! Three training stages: path-mask and fragment pretraining, behavioral
//! cloning on expert episodes, and REINFORCE fine-tuning.
//!
//! Every stage is deterministic for a fixed seed. Episodes inside a batch are
//! processed in parallel, and their gradients are summed in episode order.

mod bc;
mod rl;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bc::{
    bc_loss, prepare_episodes, pretrain_fpe, teacher_forced_accuracy, train_bc, train_bc_with,
    BcEpisode,
};
pub use rl::{
    bandit_gradient, reinforce_dyhat, sample_bandit_gradient, train_bandit, train_rl, BanditRun,
};

use crate::dataset::DatasetError;
use crate::gridworld::{Action, GridError};
use crate::policy::{EpisodeTrace, ParamGroup, PolicyError};
use crate::tensorkit::{Grads, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training episodes")]
    Empty,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{what}: expected {expected} entries, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Collision term.
    pub r1: f64,
    /// Distance-progress term.
    pub r2: f64,
    /// Question-answering term.
    pub r3: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            r1: 0.5,
            r2: 0.3,
            r3: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub gamma: f64,
    /// Truncation window for backpropagation through time (`0` = none).
    pub bptt: usize,
    /// Weight of the fragment cross-entropy next to the action loss.
    pub lambda: f64,
    /// Besides every full expert episode, also imitate its suffix from these
    /// backtrack levels.
    pub bc_backtracks: Vec<usize>,
    /// Gradient norm clip (`0` disables).
    pub clip_norm: f64,
    pub seed: u64,
    pub rl_episodes: usize,
    pub rl_batch: usize,
    pub rl_lr: f64,
    /// Backtrack levels RL episodes start from, drawn uniformly.
    pub rl_levels: Vec<usize>,
    pub t_max: usize,
    /// Episodes averaged into the return baseline (`0` disables it).
    pub baseline_window: usize,
    /// Frames the answerer looks back over.
    pub answer_window: usize,
    pub reward: RewardWeights,
    pub freeze: Vec<ParamGroup>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            pretrain_epochs: 5,
            batch_size: 8,
            lr: 0.05,
            momentum: 0.9,
            gamma: 0.99,
            bptt: 0,
            lambda: 0.5,
            bc_backtracks: vec![10, 30],
            clip_norm: 5.0,
            seed: 0,
            rl_episodes: 400,
            rl_batch: 16,
            rl_lr: 0.01,
            rl_levels: vec![10, 30, 50],
            t_max: 100,
            baseline_window: 100,
            answer_window: 5,
            reward: RewardWeights::default(),
            freeze: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.rl_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if !(self.lr.is_finite() && self.rl_lr.is_finite() && self.momentum.is_finite()) {
            return bad("learning rates and momentum must be finite");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and non-negative");
        }
        if self.rl_levels.is_empty() {
            return bad("rl_levels must not be empty");
        }
        Ok(())
    }
}

/// What one step contributes to the reward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardInput {
    pub action: Action,
    pub collided: bool,
    /// Distance to the target before the action minus after it.
    pub progress: f64,
    /// Answer correctness, on the final step only.
    pub answer: Option<bool>,
}

/// `R = r1·c + r2·d + r3·j`.
pub fn compute_reward(step: &RewardInput, w: &RewardWeights) -> f64 {
    let c = if step.collided {
        -1.0
    } else if step.action == Action::Forward {
        1.0
    } else {
        0.0
    };
    let j = if step.answer == Some(true) { 1.0 } else { 0.0 };
    w.r1 * c + w.r2 * step.progress + w.r3 * j
}

/// Rewards for every step of a trace, with the answer outcome on the last.
pub fn trace_rewards(trace: &EpisodeTrace, correct: bool, w: &RewardWeights) -> Vec<f64> {
    let n = trace.steps.len();
    (0..n)
        .map(|t| {
            let s = &trace.steps[t];
            let after = trace.steps.get(t + 1).map_or(trace.final_dist, |n| n.dist);
            compute_reward(
                &RewardInput {
                    action: s.action,
                    collided: s.collided,
                    progress: s.dist - after,
                    answer: (t + 1 == n).then_some(correct),
                },
                w,
            )
        })
        .collect()
}

/// `G_t = R_t + γ G_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Named `(step, value)` series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub series: BTreeMap<String, Vec<(usize, f64)>>,
}

impl Curves {
    pub fn push(&mut self, name: &str, step: usize, value: f64) {
        self.series.entry(name.to_string()).or_default().push((step, value));
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        self.series.get(name)?.last().map(|p| p.1)
    }

    pub fn first(&self, name: &str) -> Option<f64> {
        self.series.get(name)?.first().map(|p| p.1)
    }

    pub fn to_csv(&self, name: &str) -> Option<String> {
        let points = self.series.get(name)?;
        let mut out = String::from("step,value\n");
        for (s, v) in points {
            let _ = writeln!(out, "{s},{v}");
        }
        Some(out)
    }

    /// One `<prefix><name>.csv` per series.
    pub fn write_csv(&self, dir: &Path, prefix: &str) -> Result<(), TrainError> {
        fs::create_dir_all(dir)?;
        for name in self.series.keys() {
            let file = dir.join(format!("{prefix}{name}.csv"));
            fs::write(file, self.to_csv(name).unwrap())?;
        }
        Ok(())
    }
}

fn finish_grads(grads: &mut Grads, scale: f64, cfg: &TrainConfig) {
    grads.scale(scale);
    if cfg.clip_norm > 0.0 {
        grads.clip_norm(cfg.clip_norm);
    }
}
