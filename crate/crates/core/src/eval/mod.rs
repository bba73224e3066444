//! Navigation diagnostics over finished episodes.
//!
//! | metric | meaning |
//! |---|---|
//! | `d_T` | distance to the target when the episode ends |
//! | `d_Δ` | `d_0 − d_T` |
//! | `r_e` | fraction of episodes that ever stand in the target's room |
//! | `r_T` | fraction in that room in at least one of the last `W` frames |
//! | `r_Δ` | `r_e − r_T` |
//! | `o_m` | fraction of episodes that ever see the target |
//! | `o_T` | fraction seeing it in at least one of the last `W` frames |
//! | `o_Δ` | `1 − o_T / o_m`, or `0` with a degenerate flag when `o_m = 0` |
//! | `Acc` | fraction of questions the rule-based answerer gets right |
//!
//! A frame is a pose the agent occupied; see [`EpisodeTrace::frames`].

mod report;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{compare_report, emit_report, Comparison, ComparisonRow};

use crate::dataset::{backtrack_start, Dataset, DatasetError, QuestionSpec, Sample};
use crate::gridworld::GridMap;
use crate::policy::{rollout, Agent, EpisodeTrace, Frame, PolicyError, RolloutMode};
use crate::rng::{seeded, substream};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episodes to evaluate")]
    Empty,
    #[error("reports do not share a configuration: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Backtrack distances, in expert steps before the end of the path.
    pub levels: Vec<usize>,
    pub window: usize,
    pub t_max: usize,
    pub seed: u64,
    /// Evaluate at most this many samples per level (`0` means all).
    pub max_episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            levels: vec![10, 30, 50],
            window: 5,
            t_max: 100,
            seed: 0,
            max_episodes: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    pub level: usize,
    pub episodes: usize,
    pub d_delta: f64,
    pub d_t: f64,
    pub r_e: f64,
    pub r_t: f64,
    pub r_delta: f64,
    pub o_m: f64,
    pub o_t: f64,
    pub o_delta: f64,
    /// `o_m` was zero, so `o_Δ` is set to `0` by convention.
    pub o_degenerate: bool,
    pub acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub config: EvalConfig,
    pub levels: Vec<LevelMetrics>,
}

impl MetricsReport {
    pub fn level(&self, level: usize) -> Option<&LevelMetrics> {
        self.levels.iter().find(|l| l.level == level)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationMetrics {
    pub o_m: f64,
    pub o_t: f64,
    pub o_delta: f64,
    pub degenerate: bool,
}

/// Mean `(d_Δ, d_T)`.
pub fn nav_metrics(traces: &[EpisodeTrace]) -> Result<(f64, f64), EvalError> {
    if traces.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = traces.len() as f64;
    let d_delta = traces.iter().map(|t| t.d0() - t.final_dist).sum::<f64>() / n;
    let d_t = traces.iter().map(|t| t.final_dist).sum::<f64>() / n;
    Ok((d_delta, d_t))
}

fn rates(traces: &[EpisodeTrace], window: usize, flag: impl Fn(&Frame) -> bool) -> (f64, f64) {
    if traces.is_empty() {
        return (0.0, 0.0);
    }
    let mut ever = 0usize;
    let mut late = 0usize;
    for t in traces {
        let frames = t.frames();
        if frames.iter().any(&flag) {
            ever += 1;
        }
        let from = frames.len().saturating_sub(window.max(1));
        if frames[from..].iter().any(&flag) {
            late += 1;
        }
    }
    let n = traces.len() as f64;
    (ever as f64 / n, late as f64 / n)
}

/// `(r_e, r_T, r_Δ)`.
pub fn room_metrics(traces: &[EpisodeTrace], window: usize) -> (f64, f64, f64) {
    let (r_e, r_t) = rates(traces, window, |f| f.in_target_room);
    (r_e, r_t, r_e - r_t)
}

pub fn observation_metrics(traces: &[EpisodeTrace], window: usize) -> ObservationMetrics {
    let (o_m, o_t) = rates(traces, window, |f| f.target_visible);
    let degenerate = o_m == 0.0;
    let o_delta = if degenerate { 0.0 } else { 1.0 - o_t / o_m };
    ObservationMetrics {
        o_m,
        o_t,
        o_delta,
        degenerate,
    }
}

/// Answer from what the agent saw at the end: the true answer if the target
/// is visible in one of the last `window` frames, otherwise a seeded uniform
/// guess over the answer space.
pub fn answer_question(
    trace: &EpisodeTrace,
    question: &QuestionSpec,
    map: &GridMap,
    expected: u32,
    window: usize,
    seed: u64,
) -> (u32, bool) {
    let frames = trace.frames();
    let from = frames.len().saturating_sub(window.max(1));
    let seen = frames[from..].iter().any(|f| f.target_visible);
    let answer = match (seen, question.answer(map)) {
        (true, Some(a)) => a,
        _ => seeded(seed).gen_range(0..question.answer_space(map).max(1)),
    };
    (answer, answer == expected)
}

/// One evaluated episode, as dumped for audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub level: usize,
    pub answer: u32,
    pub correct: bool,
    pub trace: EpisodeTrace,
}

pub fn level_metrics(level: usize, results: &[EpisodeResult], window: usize) -> Result<LevelMetrics, EvalError> {
    let traces: Vec<EpisodeTrace> = results.iter().map(|r| r.trace.clone()).collect();
    let (d_delta, d_t) = nav_metrics(&traces)?;
    let (r_e, r_t, r_delta) = room_metrics(&traces, window);
    let o = observation_metrics(&traces, window);
    let acc = results.iter().filter(|r| r.correct).count() as f64 / results.len() as f64;
    Ok(LevelMetrics {
        level,
        episodes: results.len(),
        d_delta,
        d_t,
        r_e,
        r_t,
        r_delta,
        o_m: o.o_m,
        o_t: o.o_t,
        o_delta: o.o_delta,
        o_degenerate: o.degenerate,
        acc,
    })
}

/// Seed of the `index`-th episode at `level`.
pub fn episode_seed(seed: u64, level: usize, index: usize) -> u64 {
    substream(substream(seed, level as u64), index as u64)
}

/// Run every selected sample at every backtrack level with a fresh agent
/// from `make_agent`, in greedy mode.
pub fn evaluate_episodes<A, F>(
    make_agent: F,
    dataset: &Dataset,
    cfg: &EvalConfig,
) -> Result<Vec<EpisodeResult>, EvalError>
where
    A: Agent,
    F: Fn() -> A + Sync,
{
    let samples: Vec<&Sample> = match cfg.max_episodes {
        0 => dataset.samples.iter().collect(),
        n => dataset.samples.iter().take(n).collect(),
    };
    if samples.is_empty() || cfg.levels.is_empty() {
        return Err(EvalError::Empty);
    }
    let jobs: Vec<(usize, usize, &Sample)> = cfg
        .levels
        .iter()
        .flat_map(|&level| samples.iter().enumerate().map(move |(i, s)| (level, i, *s)))
        .collect();
    jobs.par_iter()
        .map(|&(level, i, sample)| {
            let map = dataset.map_for(sample)?;
            let start = backtrack_start(map, sample, level);
            let seed = episode_seed(cfg.seed, level, i);
            let mut agent = make_agent();
            let mut trace = rollout(&mut agent, map, &start, &dataset.env, cfg.t_max, RolloutMode::Greedy, seed)?;
            trace.observations = Vec::new();
            let (answer, correct) =
                answer_question(&trace, &sample.question, map, sample.answer, cfg.window, seed);
            Ok(EpisodeResult {
                level,
                answer,
                correct,
                trace,
            })
        })
        .collect()
}

pub fn summarize(model: &str, results: &[EpisodeResult], cfg: &EvalConfig) -> Result<MetricsReport, EvalError> {
    let levels = cfg
        .levels
        .iter()
        .map(|&level| {
            let at: Vec<EpisodeResult> = results.iter().filter(|r| r.level == level).cloned().collect();
            level_metrics(level, &at, cfg.window)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport {
        model: model.to_string(),
        config: cfg.clone(),
        levels,
    })
}

/// [`evaluate_episodes`] followed by [`summarize`].
pub fn evaluate<A, F>(model: &str, make_agent: F, dataset: &Dataset, cfg: &EvalConfig) -> Result<MetricsReport, EvalError>
where
    A: Agent,
    F: Fn() -> A + Sync,
{
    let results = evaluate_episodes(make_agent, dataset, cfg)?;
    summarize(model, &results, cfg)
}

/// Results as JSON lines, one episode per line.
pub fn traces_jsonl(results: &[EpisodeResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("episode serializes"));
        out.push('\n');
    }
    out
}
