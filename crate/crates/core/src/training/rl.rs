use std::collections::VecDeque;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;

use super::{discounted_returns, finish_grads, trace_rewards, Curves, TrainConfig, TrainError};
use crate::dataset::{backtrack_start, Dataset};
use crate::eval::answer_question;
use crate::gridworld::NUM_ACTIONS;
use crate::policy::{rollout, ActionVec, EpisodeGrad, NavAgent, Navigator, RolloutMode};
use crate::rng::{seeded, substream};
use crate::tensorkit::{softmax, Grads, OptimState, Sgd};

const RL_STREAM: u64 = 0x524c;

/// Gradient, with respect to the decision logits, of `−A · log p[action]`.
pub fn reinforce_dyhat(probs: &ActionVec, action: usize, advantage: f64) -> ActionVec {
    let mut g = *probs;
    g[action] -= 1.0;
    g.map(|v| advantage * v)
}

/// Mean of the last `window` episodes' returns, over all their steps.
struct ReturnBaseline {
    window: usize,
    episodes: VecDeque<(f64, usize)>,
}

impl ReturnBaseline {
    fn value(&self) -> f64 {
        let (sum, n) = self
            .episodes
            .iter()
            .fold((0.0, 0), |(s, n), &(a, b)| (s + a, n + b));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    fn record(&mut self, returns: &[f64]) {
        if self.window == 0 {
            return;
        }
        self.episodes.push_back((returns.iter().sum(), returns.len()));
        while self.episodes.len() > self.window {
            self.episodes.pop_front();
        }
    }
}

struct Episode {
    grads: Grads,
    steps: usize,
    ret: f64,
    reward: f64,
    d_t: f64,
    returns: Vec<f64>,
}

/// REINFORCE fine-tuning from sampled rollouts. Each episode starts from a
/// random training sample backtracked by a random level of `cfg.rl_levels`.
pub fn train_rl(dataset: &Dataset, nav: &mut Navigator, cfg: &TrainConfig) -> Result<Curves, TrainError> {
    cfg.check()?;
    if dataset.samples.is_empty() {
        return Err(TrainError::Empty);
    }
    let sgd = Sgd {
        lr: cfg.rl_lr,
        momentum: cfg.momentum,
    };
    let mut state = OptimState::new(&nav.params);
    let mut baseline = ReturnBaseline {
        window: cfg.baseline_window,
        episodes: VecDeque::new(),
    };
    let mut curves = Curves::default();
    let stream = substream(cfg.seed, RL_STREAM);
    let batches = cfg.rl_episodes.div_ceil(cfg.rl_batch);
    for batch in 0..batches {
        let first = batch * cfg.rl_batch;
        let last = (first + cfg.rl_batch).min(cfg.rl_episodes);
        let b = baseline.value();
        let frozen: &Navigator = nav;
        let episodes: Vec<Episode> = (first..last)
            .into_par_iter()
            .map(|e| {
                let seed = substream(stream, e as u64);
                let mut rng = seeded(seed);
                let sample = &dataset.samples[rng.gen_range(0..dataset.samples.len())];
                let level = cfg.rl_levels[rng.gen_range(0..cfg.rl_levels.len())];
                let map = dataset.map_for(sample)?;
                let start = backtrack_start(map, sample, level);
                let mut agent = NavAgent::new(frozen);
                let trace = rollout(&mut agent, map, &start, &dataset.env, cfg.t_max, RolloutMode::Sample, seed)?;
                let (_, correct) =
                    answer_question(&trace, &sample.question, map, sample.answer, cfg.answer_window, seed);
                let rewards = trace_rewards(&trace, correct, &cfg.reward);
                let returns = discounted_returns(&rewards, cfg.gamma);
                let qin = frozen.question_input(&sample.question);
                let fwd = frozen.forward_episode(&trace.observations, &qin)?;
                let mut grad = EpisodeGrad::zeros(fwd.len());
                for (t, step) in trace.steps.iter().enumerate() {
                    let adv = if cfg.baseline_window > 0 { returns[t] - b } else { returns[t] };
                    grad.dyhat[t] = reinforce_dyhat(&fwd.outputs[t].probs, step.action.index(), adv);
                }
                Ok(Episode {
                    grads: frozen.backward_episode(&fwd, &grad)?,
                    steps: trace.len(),
                    ret: returns.first().copied().unwrap_or(0.0),
                    reward: rewards.iter().sum(),
                    d_t: trace.final_dist,
                    returns,
                })
            })
            .collect::<Result<_, TrainError>>()?;
        let mut total = nav.params.zero_grads();
        let mut steps = 0;
        for ep in &episodes {
            total.add_assign(&ep.grads);
            steps += ep.steps;
        }
        finish_grads(&mut total, 1.0 / steps.max(1) as f64, cfg);
        nav.freeze(&mut total, &cfg.freeze);
        sgd.step(&mut nav.params, &total, &mut state)?;
        let n = episodes.len() as f64;
        curves.push("rl_return", batch, episodes.iter().map(|e| e.ret).sum::<f64>() / n);
        curves.push("rl_reward", batch, episodes.iter().map(|e| e.reward).sum::<f64>() / n);
        curves.push("rl_d_T", batch, episodes.iter().map(|e| e.d_t).sum::<f64>() / n);
        for ep in &episodes {
            baseline.record(&ep.returns);
        }
    }
    Ok(curves)
}

/// Expected-reward gradient of a softmax bandit: `∂J/∂θ_i = p_i (r_i − J)`.
pub fn bandit_gradient(logits: &[f64], rewards: &[f64]) -> Vec<f64> {
    let p = softmax(logits);
    let j: f64 = p.iter().zip(rewards).map(|(a, b)| a * b).sum();
    p.iter().zip(rewards).map(|(p, r)| p * (r - j)).collect()
}

/// One draw of the REINFORCE ascent estimate `(r_a − b)(e_a − p)` for a
/// single-state bandit, the same estimator [`train_rl`] uses per step.
pub fn sample_bandit_gradient<R: Rng>(logits: &[f64; NUM_ACTIONS], rewards: &[f64; NUM_ACTIONS], b: f64, rng: &mut R) -> (usize, ActionVec) {
    let p = softmax(logits);
    let probs = [p[0], p[1], p[2], p[3]];
    let a = WeightedIndex::new(probs).expect("softmax is a distribution").sample(rng);
    (a, reinforce_dyhat(&probs, a, rewards[a] - b).map(|v| -v))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BanditRun {
    pub logits: ActionVec,
    /// Probability of the best arm after every episode.
    pub best_prob: Vec<f64>,
}

/// REINFORCE on a single-state bandit, one pull per episode, with a running
/// mean of the last `window` rewards as baseline (`0` disables it).
pub fn train_bandit(rewards: &[f64; NUM_ACTIONS], episodes: usize, lr: f64, window: usize, seed: u64) -> BanditRun {
    let best = crate::policy::argmax(rewards);
    let mut rng = seeded(seed);
    let mut logits = [0.0; NUM_ACTIONS];
    let mut history: VecDeque<f64> = VecDeque::new();
    let mut best_prob = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let b = if history.is_empty() {
            0.0
        } else {
            history.iter().sum::<f64>() / history.len() as f64
        };
        let (a, ascent) = sample_bandit_gradient(&logits, rewards, b, &mut rng);
        for (l, g) in logits.iter_mut().zip(ascent) {
            *l += lr * g;
        }
        if window > 0 {
            history.push_back(rewards[a]);
            if history.len() > window {
                history.pop_front();
            }
        }
        best_prob.push(softmax(&logits)[best]);
    }
    BanditRun { logits, best_prob }
}
