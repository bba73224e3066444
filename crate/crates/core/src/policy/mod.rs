//! Navigators: the fragment-predicting PEMR model with memory recall and the
//! single-recurrent baseline it is compared against.
//!
//! Every navigator reads one egocentric [`Observation`] per step plus the
//! question, and emits a decision vector `ŷ_t` over the four actions. The
//! action probabilities are `softmax(ŷ_t)`; the greedy action is their argmax.
//!
//! * PEMR encodes `x_t = [sem, path, q]`, predicts a `k`-row fragment with a
//!   bidirectional recurrent decoder over the slot positions, pushes it into
//!   a [`RecallBuffer`] and sets `ŷ_t = Σ_i w_i F_{t-i}[i]`.
//! * The baseline feeds `[sem, (path), q, y_{t-1}]` to a single GRU whose
//!   head logits are `ŷ_t`.
//!
//! In both cases `y_{t-1} = softmax(ŷ_{t-1})` is fed back as an input, and
//! the backward pass follows that feedback too.

mod recall;
mod rollout;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use recall::{
    argmax, recall_decide, ActionVec, FragmentMatrix, RecallBuffer, RecallStrategy, RecallWeights,
};
pub use rollout::{
    rollout, Agent, Decision, EpisodeTrace, ExpertAgent, Frame, NavAgent, RandomAgent, RolloutMode,
    StepRecord, StopAgent,
};

use crate::dataset::QuestionSpec;
use crate::gridworld::{ChannelLayout, GridError, Observation, Vocab, NUM_ACTIONS, PATCH_WIDTH};
use crate::tensorkit::{
    softmax, Affine, BiGru, BiGruCache, Checkpoint, GruCache, GruCell, Grads, Init, ParamId,
    ParamStore, TensorError,
};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("recall buffer is empty")]
    EmptyBuffer,
    #[error("{what}: expected length {expected}, got {got}")]
    Dim {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid policy config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PartialEq for PolicyError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NavigatorKind {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "baseline+fpe")]
    BaselineFpe,
    #[serde(rename = "pemr-a")]
    PemrA,
    #[serde(rename = "pemr-b")]
    PemrB,
}

impl NavigatorKind {
    pub const ALL: [NavigatorKind; 4] = [
        NavigatorKind::Baseline,
        NavigatorKind::BaselineFpe,
        NavigatorKind::PemrA,
        NavigatorKind::PemrB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NavigatorKind::Baseline => "baseline",
            NavigatorKind::BaselineFpe => "baseline+fpe",
            NavigatorKind::PemrA => "pemr-a",
            NavigatorKind::PemrB => "pemr-b",
        }
    }

    pub fn parse(s: &str) -> Option<NavigatorKind> {
        NavigatorKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn has_path(self) -> bool {
        !matches!(self, NavigatorKind::Baseline)
    }

    pub fn is_pemr(self) -> bool {
        matches!(self, NavigatorKind::PemrA | NavigatorKind::PemrB)
    }

    pub fn strategy(self) -> Option<RecallStrategy> {
        match self {
            NavigatorKind::PemrA => Some(RecallStrategy::A),
            NavigatorKind::PemrB => Some(RecallStrategy::B),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub kind: NavigatorKind,
    /// Fragment length.
    pub k: usize,
    pub semantic_dim: usize,
    pub path_dim: usize,
    pub question_dim: usize,
    /// Hidden size of each direction of the fragment decoder.
    pub fragment_hidden: usize,
    pub baseline_hidden: usize,
    /// Patch depth of the observations the navigator reads.
    pub depth: usize,
    pub vocab: Vocab,
    /// Let `ŷ_t` gradients reach fragments predicted at earlier steps.
    pub recall_backprop: bool,
    /// Truncation window for the baseline's backpropagation through time;
    /// `0` means the whole episode.
    pub bptt: usize,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kind: NavigatorKind::PemrB,
            k: 4,
            semantic_dim: 64,
            path_dim: 32,
            question_dim: 16,
            fragment_hidden: 32,
            baseline_hidden: 64,
            depth: 5,
            vocab: Vocab::default(),
            recall_backprop: true,
            bptt: 0,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn obs_dim(&self) -> usize {
        self.depth * PATCH_WIDTH * ChannelLayout::new(self.vocab).per_cell()
    }

    pub fn question_input_dim(&self) -> usize {
        2 + self.vocab.classes as usize
    }

    /// Length of `[sem, path, q]`.
    pub fn x_dim(&self) -> usize {
        let p = if self.kind.has_path() { self.path_dim } else { 0 };
        self.semantic_dim + p + self.question_dim
    }

    pub fn mask_dim(&self) -> usize {
        self.depth * PATCH_WIDTH
    }

    fn check(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Config(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.semantic_dim == 0 || self.question_dim == 0 {
            return bad("feature dims must be positive");
        }
        if self.kind.has_path() && self.path_dim == 0 {
            return bad("path_dim must be positive");
        }
        if self.kind.is_pemr() && self.fragment_hidden == 0 {
            return bad("fragment_hidden must be positive");
        }
        if !self.kind.is_pemr() && self.baseline_hidden == 0 {
            return bad("baseline_hidden must be positive");
        }
        Ok(())
    }
}

/// Parameter groups, for freezing parts of a navigator during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamGroup {
    Semantic,
    Path,
    Mask,
    Question,
    Fragment,
    Recall,
    Recurrent,
}

impl ParamGroup {
    fn of(name: &str) -> ParamGroup {
        match name.split('.').next().unwrap_or("") {
            "sem" => ParamGroup::Semantic,
            "path" => ParamGroup::Path,
            "mask" => ParamGroup::Mask,
            "q" => ParamGroup::Question,
            p if p == "bdnav" || p.starts_with("slot") => ParamGroup::Fragment,
            "recall" => ParamGroup::Recall,
            _ => ParamGroup::Recurrent,
        }
    }
}

#[derive(Clone, Debug)]
struct FragmentNet {
    bigru: BiGru,
    heads: Vec<Affine>,
}

#[derive(Clone, Debug)]
struct BaselineNet {
    gru: GruCell,
    head: Affine,
}

#[derive(Clone, Debug)]
struct Layers {
    sem: Affine,
    path: Option<Affine>,
    mask: Option<Affine>,
    q: ParamId,
    fragment: Option<FragmentNet>,
    recall_w: Option<ParamId>,
    baseline: Option<BaselineNet>,
}

/// A navigator: configuration, layer layout and parameters.
#[derive(Clone, Debug)]
pub struct Navigator {
    pub config: PolicyConfig,
    pub params: ParamStore,
    layers: Layers,
}

/// Per-episode recurrent state.
#[derive(Clone, Debug)]
pub struct NavState {
    pub t: usize,
    pub y_prev: ActionVec,
    pub h: Vec<f64>,
    pub buffer: RecallBuffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub yhat: ActionVec,
    pub probs: ActionVec,
    pub fragment: Option<FragmentMatrix>,
    pub mask_logits: Option<Vec<f64>>,
}

impl StepOutput {
    pub fn greedy(&self) -> crate::gridworld::Action {
        crate::gridworld::Action::from_index(argmax(&self.probs))
    }
}

#[derive(Clone, Debug)]
struct EncCache {
    obs: Vec<f64>,
    qin: Vec<f64>,
    sem: Vec<f64>,
    path: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
struct FragCache {
    g: Vec<Vec<f64>>,
    bigru: BiGruCache,
    rows: Vec<ActionVec>,
}

#[derive(Clone, Debug)]
struct BaseCache {
    gru: GruCache,
    h: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct StepCache {
    enc: EncCache,
    frag: Option<FragCache>,
    base: Option<BaseCache>,
}

/// Teacher-forced pass over an observation sequence.
#[derive(Clone, Debug)]
pub struct EpisodeForward {
    pub outputs: Vec<StepOutput>,
    caches: Vec<StepCache>,
}

impl EpisodeForward {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn yhat(&self) -> Vec<ActionVec> {
        self.outputs.iter().map(|o| o.yhat).collect()
    }
}

/// Loss gradients fed into [`Navigator::backward_episode`]. The fragment and
/// mask entries may be left empty when those losses are not in use.
#[derive(Clone, Debug, Default)]
pub struct EpisodeGrad {
    /// `∂L/∂ŷ_t`.
    pub dyhat: Vec<ActionVec>,
    /// `∂L/∂` fragment row logits, `k` rows per step.
    pub drow_logits: Vec<Vec<ActionVec>>,
    /// `∂L/∂` path-mask logits per step.
    pub dmask: Vec<Vec<f64>>,
}

impl EpisodeGrad {
    pub fn zeros(steps: usize) -> EpisodeGrad {
        EpisodeGrad {
            dyhat: vec![[0.0; NUM_ACTIONS]; steps],
            drow_logits: Vec::new(),
            dmask: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NavigatorFile {
    config: PolicyConfig,
    params: Checkpoint,
}

/// `[qtype one-hot, class one-hot]`.
pub fn question_input(question: &QuestionSpec, vocab: Vocab) -> Vec<f64> {
    let mut v = vec![0.0; 2 + vocab.classes as usize];
    v[question.qtype.index()] = 1.0;
    if let Some(slot) = v.get_mut(2 + question.target_class as usize) {
        *slot = 1.0;
    }
    v
}

fn tanh_all(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(f64::tanh).collect()
}

fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(y, d)| d * (1.0 - y * y)).collect()
}

fn softmax4(v: &[f64]) -> ActionVec {
    let p = softmax(v);
    [p[0], p[1], p[2], p[3]]
}

/// `∂L/∂logits` from `∂L/∂p` for `p = softmax(logits)`.
fn softmax_backward(p: &ActionVec, dp: &ActionVec) -> ActionVec {
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    let mut out = [0.0; NUM_ACTIONS];
    for i in 0..NUM_ACTIONS {
        out[i] = p[i] * (dp[i] - dot);
    }
    out
}

impl Navigator {
    pub fn new(config: PolicyConfig) -> Result<Navigator, PolicyError> {
        config.check()?;
        let mut store = ParamStore::new(config.seed);
        let c = &config;
        let obs = c.obs_dim();
        let sem = Affine::new(&mut store, "sem", obs, c.semantic_dim)?;
        let (path, mask) = if c.kind.has_path() {
            let p = Affine::new(&mut store, "path", obs, c.path_dim)?;
            let m = Affine::new(&mut store, "mask", c.path_dim, c.mask_dim())?;
            (Some(p), Some(m))
        } else {
            (None, None)
        };
        let q = store.add("q.table", &[c.question_dim, c.question_input_dim()], Init::Glorot)?;
        let mut fragment = None;
        let mut recall_w = None;
        let mut baseline = None;
        if c.kind.is_pemr() {
            let slot_in = c.x_dim() + NUM_ACTIONS + c.k;
            let bigru = BiGru::new(&mut store, "bdnav", slot_in, c.fragment_hidden)?;
            let heads = (0..c.k)
                .map(|j| Affine::new(&mut store, &format!("slot{j}"), bigru.out_dim(), NUM_ACTIONS))
                .collect::<Result<Vec<_>, _>>()?;
            fragment = Some(FragmentNet { bigru, heads });
            if c.kind == NavigatorKind::PemrB {
                recall_w = Some(store.add("recall.w", &[c.k], Init::Constant(1.0))?);
            }
        } else {
            let gru = GruCell::new(&mut store, "gru", c.x_dim() + NUM_ACTIONS, c.baseline_hidden)?;
            let head = Affine::new(&mut store, "head", c.baseline_hidden, NUM_ACTIONS)?;
            baseline = Some(BaselineNet { gru, head });
        }
        Ok(Navigator {
            layers: Layers {
                sem,
                path,
                mask,
                q,
                fragment,
                recall_w,
                baseline,
            },
            params: store,
            config,
        })
    }

    pub fn kind(&self) -> NavigatorKind {
        self.config.kind
    }

    pub fn question_input(&self, question: &QuestionSpec) -> Vec<f64> {
        question_input(question, self.config.vocab)
    }

    pub fn initial_state(&self) -> NavState {
        let h = if self.config.kind.is_pemr() { 0 } else { self.config.baseline_hidden };
        NavState {
            t: 0,
            y_prev: [0.0; NUM_ACTIONS],
            h: vec![0.0; h],
            buffer: RecallBuffer::new(self.config.k),
        }
    }

    pub fn recall_weights(&self, store: &ParamStore) -> Option<RecallWeights> {
        let strategy = self.config.kind.strategy()?;
        Some(match self.layers.recall_w {
            Some(id) => RecallWeights {
                strategy,
                w: store.get(id).data.clone(),
            },
            None => RecallWeights::unit(strategy, self.config.k),
        })
    }

    /// Parameter ids belonging to `group`.
    pub fn group_ids(&self, group: ParamGroup) -> Vec<ParamId> {
        self.params
            .ids()
            .filter(|&id| ParamGroup::of(self.params.name(id)) == group)
            .collect()
    }

    pub fn freeze(&self, grads: &mut Grads, groups: &[ParamGroup]) {
        for &g in groups {
            for id in self.group_ids(g) {
                grads.zero(id);
            }
        }
    }

    fn check_inputs(&self, obs: &Observation, qin: &[f64]) -> Result<(), PolicyError> {
        let expected = self.config.obs_dim();
        if obs.features().len() != expected {
            return Err(PolicyError::Dim {
                what: "observation",
                expected,
                got: obs.features().len(),
            });
        }
        if qin.len() != self.config.question_input_dim() {
            return Err(PolicyError::Dim {
                what: "question input",
                expected: self.config.question_input_dim(),
                got: qin.len(),
            });
        }
        Ok(())
    }

    fn encode(&self, store: &ParamStore, obs: &[f64], qin: &[f64]) -> (Vec<f64>, EncCache) {
        let l = &self.layers;
        let sem = tanh_all(l.sem.forward(store, obs));
        let path = l.path.map(|p| tanh_all(p.forward(store, obs)));
        let mut qv = vec![0.0; self.config.question_dim];
        crate::tensorkit::matvec_add(&store.get(l.q).data, qin, &mut qv);
        let mut x = sem.clone();
        if let Some(p) = &path {
            x.extend_from_slice(p);
        }
        x.extend(qv);
        let cache = EncCache {
            obs: obs.to_vec(),
            qin: qin.to_vec(),
            sem,
            path,
        };
        (x, cache)
    }

    /// `x_t`: `[sem, path, q]` for PEMR; `[sem, (path), q, y_prev]` for the
    /// baseline navigators.
    pub fn encode_inputs(
        &self,
        obs: &Observation,
        question: &QuestionSpec,
        y_prev: &ActionVec,
    ) -> Result<Vec<f64>, PolicyError> {
        let qin = self.question_input(question);
        self.check_inputs(obs, &qin)?;
        let (mut x, _) = self.encode(&self.params, obs.features(), &qin);
        if !self.config.kind.is_pemr() {
            x.extend_from_slice(y_prev);
        }
        Ok(x)
    }

    /// Path-mask logits, one per patch cell.
    pub fn mask_logits(&self, store: &ParamStore, obs: &Observation) -> Option<Vec<f64>> {
        let path = tanh_all(self.layers.path?.forward(store, obs.features()));
        Some(self.layers.mask?.forward(store, &path))
    }

    fn fragment_forward(
        &self,
        store: &ParamStore,
        x: &[f64],
        y_prev: &ActionVec,
    ) -> (Vec<ActionVec>, FragCache) {
        let f = self.layers.fragment.as_ref().expect("fragment decoder");
        let k = self.config.k;
        let slots: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                let mut s = Vec::with_capacity(x.len() + NUM_ACTIONS + k);
                s.extend_from_slice(x);
                s.extend_from_slice(y_prev);
                s.extend((0..k).map(|i| if i == j { 1.0 } else { 0.0 }));
                s
            })
            .collect();
        let (g, bigru) = f.bigru.forward(store, &slots);
        let rows: Vec<ActionVec> = f
            .heads
            .iter()
            .zip(&g)
            .map(|(head, gj)| softmax4(&head.forward(store, gj)))
            .collect();
        (rows.clone(), FragCache { g, bigru, rows })
    }

    /// The fragment predicted from `x_t` and `y_prev`. PEMR navigators only.
    pub fn predict_fragment(
        &self,
        x: &[f64],
        y_prev: &ActionVec,
        t: usize,
    ) -> Result<FragmentMatrix, PolicyError> {
        if !self.config.kind.is_pemr() {
            return Err(PolicyError::Config(format!(
                "{} has no fragment predictor",
                self.config.kind.name()
            )));
        }
        if x.len() != self.config.x_dim() {
            return Err(PolicyError::Dim {
                what: "x_t",
                expected: self.config.x_dim(),
                got: x.len(),
            });
        }
        let (rows, _) = self.fragment_forward(&self.params, x, y_prev);
        Ok(FragmentMatrix { t, rows })
    }

    /// One recurrent step of a baseline navigator: `(softmax(head(h_t)), h_t)`.
    pub fn baseline_step(
        &self,
        x: &[f64],
        h_prev: &[f64],
    ) -> Result<(ActionVec, Vec<f64>), PolicyError> {
        let b = self.layers.baseline.as_ref().ok_or_else(|| {
            PolicyError::Config(format!("{} is not a baseline", self.config.kind.name()))
        })?;
        if x.len() != b.gru.in_dim {
            return Err(PolicyError::Dim {
                what: "x_t",
                expected: b.gru.in_dim,
                got: x.len(),
            });
        }
        if h_prev.len() != b.gru.hidden {
            return Err(PolicyError::Dim {
                what: "h_prev",
                expected: b.gru.hidden,
                got: h_prev.len(),
            });
        }
        let (h, _) = b.gru.forward(&self.params, x, h_prev);
        Ok((softmax4(&b.head.forward(&self.params, &h)), h))
    }

    fn step_in(
        &self,
        store: &ParamStore,
        state: &mut NavState,
        obs: &Observation,
        qin: &[f64],
    ) -> Result<(StepOutput, StepCache), PolicyError> {
        self.check_inputs(obs, qin)?;
        let (x, enc) = self.encode(store, obs.features(), qin);
        let mask_logits = match (&enc.path, self.layers.mask) {
            (Some(p), Some(m)) => Some(m.forward(store, p)),
            _ => None,
        };
        let mut frag = None;
        let mut base = None;
        let (yhat, fragment) = if let Some(weights) = self.recall_weights(store) {
            let (rows, cache) = self.fragment_forward(store, &x, &state.y_prev);
            let fragment = FragmentMatrix { t: state.t, rows };
            state.buffer.push(fragment.clone());
            let (yhat, _) = recall_decide(&state.buffer, &weights)?;
            frag = Some(cache);
            (yhat, Some(fragment))
        } else {
            let b = self.layers.baseline.as_ref().expect("baseline layers");
            let mut input = x;
            input.extend_from_slice(&state.y_prev);
            let (h, gru) = b.gru.forward(store, &input, &state.h);
            let logits = b.head.forward(store, &h);
            state.h = h.clone();
            base = Some(BaseCache { gru, h });
            ([logits[0], logits[1], logits[2], logits[3]], None)
        };
        let probs = softmax4(&yhat);
        state.y_prev = probs;
        state.t += 1;
        Ok((
            StepOutput {
                yhat,
                probs,
                fragment,
                mask_logits,
            },
            StepCache { enc, frag, base },
        ))
    }

    /// Advance `state` by one observation.
    pub fn step(
        &self,
        state: &mut NavState,
        obs: &Observation,
        qin: &[f64],
    ) -> Result<StepOutput, PolicyError> {
        self.step_in(&self.params, state, obs, qin).map(|(o, _)| o)
    }

    pub fn forward_episode(
        &self,
        observations: &[Observation],
        qin: &[f64],
    ) -> Result<EpisodeForward, PolicyError> {
        self.forward_episode_in(&self.params, observations, qin)
    }

    /// [`Navigator::forward_episode`] against an explicit parameter store.
    pub fn forward_episode_in(
        &self,
        store: &ParamStore,
        observations: &[Observation],
        qin: &[f64],
    ) -> Result<EpisodeForward, PolicyError> {
        let mut state = self.initial_state();
        let mut outputs = Vec::with_capacity(observations.len());
        let mut caches = Vec::with_capacity(observations.len());
        for obs in observations {
            let (o, c) = self.step_in(store, &mut state, obs, qin)?;
            outputs.push(o);
            caches.push(c);
        }
        Ok(EpisodeForward { outputs, caches })
    }

    pub fn backward_episode(
        &self,
        fwd: &EpisodeForward,
        grad: &EpisodeGrad,
    ) -> Result<Grads, PolicyError> {
        self.backward_episode_in(&self.params, fwd, grad)
    }

    /// Gradients of a loss over a teacher-forced episode with respect to
    /// every parameter.
    pub fn backward_episode_in(
        &self,
        store: &ParamStore,
        fwd: &EpisodeForward,
        grad: &EpisodeGrad,
    ) -> Result<Grads, PolicyError> {
        let n = fwd.len();
        if grad.dyhat.len() != n {
            return Err(PolicyError::Dim {
                what: "dyhat",
                expected: n,
                got: grad.dyhat.len(),
            });
        }
        for (what, len) in [("drow_logits", grad.drow_logits.len()), ("dmask", grad.dmask.len())] {
            if len != 0 && len != n {
                return Err(PolicyError::Dim {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        let mut grads = store.zero_grads();
        let x_dim = self.config.x_dim();
        let mut dxs = vec![vec![0.0; x_dim]; n];
        if self.config.kind.is_pemr() {
            self.pemr_backward(store, fwd, grad, &mut grads, &mut dxs)?;
        } else {
            self.baseline_backward(store, fwd, grad, &mut grads, &mut dxs);
        }
        for t in 0..n {
            let dmask = grad.dmask.get(t).map(|v| v.as_slice());
            self.encode_backward(store, &fwd.caches[t].enc, &dxs[t], dmask, &mut grads)?;
        }
        Ok(grads)
    }

    fn pemr_backward(
        &self,
        store: &ParamStore,
        fwd: &EpisodeForward,
        grad: &EpisodeGrad,
        grads: &mut Grads,
        dxs: &mut [Vec<f64>],
    ) -> Result<(), PolicyError> {
        let k = self.config.k;
        let n = fwd.len();
        let x_dim = self.config.x_dim();
        let weights = self.recall_weights(store).expect("recall weights");
        let frag_net = self.layers.fragment.as_ref().expect("fragment decoder");
        // ∂L/∂ rows of every fragment, filled by the recall sums that read them
        let mut drows = vec![vec![[0.0; NUM_ACTIONS]; k]; n];
        let mut dyhat = grad.dyhat.clone();
        let mut dw = vec![0.0; k];
        // fragment t is read by ŷ_t..ŷ_{t+k-1}, and ŷ_{t-1} feeds fragment t
        // through y_prev, so a single pass from the last step back suffices
        for t in (0..n).rev() {
            let dy = dyhat[t];
            for age in 0..k.min(t + 1) {
                let src = t - age;
                let row = &fwd.caches[src].frag.as_ref().unwrap().rows[age];
                dw[age] += row.iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>();
                if age > 0 && !self.config.recall_backprop {
                    continue;
                }
                let w = weights.weight(age);
                for (d, g) in drows[src][age].iter_mut().zip(&dy) {
                    *d += w * g;
                }
            }
            let cache = fwd.caches[t].frag.as_ref().unwrap();
            let mut dg = vec![vec![0.0; frag_net.bigru.out_dim()]; k];
            for j in 0..k {
                let mut dl = softmax_backward(&cache.rows[j], &drows[t][j]);
                if let Some(aux) = grad.drow_logits.get(t) {
                    if aux.len() != k {
                        return Err(PolicyError::Dim {
                            what: "drow_logits rows",
                            expected: k,
                            got: aux.len(),
                        });
                    }
                    for (a, b) in dl.iter_mut().zip(&aux[j]) {
                        *a += b;
                    }
                }
                frag_net.heads[j].backward(store, &cache.g[j], &dl, grads, Some(&mut dg[j]));
            }
            let dslots = frag_net.bigru.backward(store, &cache.bigru, &dg, grads);
            let mut dy_prev = [0.0; NUM_ACTIONS];
            for ds in &dslots {
                for (d, s) in dxs[t].iter_mut().zip(&ds[..x_dim]) {
                    *d += s;
                }
                for (d, s) in dy_prev.iter_mut().zip(&ds[x_dim..x_dim + NUM_ACTIONS]) {
                    *d += s;
                }
            }
            if t > 0 {
                let back = softmax_backward(&fwd.outputs[t - 1].probs, &dy_prev);
                for (d, b) in dyhat[t - 1].iter_mut().zip(&back) {
                    *d += b;
                }
            }
        }
        if let Some(id) = self.layers.recall_w {
            for (g, d) in grads.data_mut(id).iter_mut().zip(&dw) {
                *g += d;
            }
        }
        Ok(())
    }

    fn baseline_backward(
        &self,
        store: &ParamStore,
        fwd: &EpisodeForward,
        grad: &EpisodeGrad,
        grads: &mut Grads,
        dxs: &mut [Vec<f64>],
    ) {
        let b = self.layers.baseline.as_ref().expect("baseline layers");
        let x_dim = self.config.x_dim();
        let window = self.config.bptt;
        let mut dyhat = grad.dyhat.clone();
        let mut carry = vec![0.0; b.gru.hidden];
        for t in (0..fwd.len()).rev() {
            let cache = fwd.caches[t].base.as_ref().unwrap();
            let mut dh = carry;
            b.head.backward(store, &cache.h, &dyhat[t], grads, Some(&mut dh));
            let mut dinput = vec![0.0; b.gru.in_dim];
            carry = b.gru.backward(store, &cache.gru, &dh, grads, &mut dinput);
            dxs[t].copy_from_slice(&dinput[..x_dim]);
            let cut = window > 0 && t % window == 0;
            if cut {
                carry.iter_mut().for_each(|v| *v = 0.0);
            } else if t > 0 {
                let dy_prev: ActionVec = dinput[x_dim..].try_into().unwrap();
                let back = softmax_backward(&fwd.outputs[t - 1].probs, &dy_prev);
                for (d, g) in dyhat[t - 1].iter_mut().zip(&back) {
                    *d += g;
                }
            }
        }
    }

    fn encode_backward(
        &self,
        store: &ParamStore,
        enc: &EncCache,
        dx: &[f64],
        dmask: Option<&[f64]>,
        grads: &mut Grads,
    ) -> Result<(), PolicyError> {
        let l = &self.layers;
        let s = self.config.semantic_dim;
        let dsem = tanh_backward(&enc.sem, &dx[..s]);
        l.sem.backward(store, &enc.obs, &dsem, grads, None);
        let mut off = s;
        if let (Some(path_layer), Some(path)) = (l.path, &enc.path) {
            let p = path.len();
            let mut dpath = dx[off..off + p].to_vec();
            if let Some(dm) = dmask {
                let mask = l.mask.expect("mask head");
                if dm.len() != mask.out_dim {
                    return Err(PolicyError::Dim {
                        what: "dmask",
                        expected: mask.out_dim,
                        got: dm.len(),
                    });
                }
                mask.backward(store, path, dm, grads, Some(&mut dpath));
            }
            let dpre = tanh_backward(path, &dpath);
            path_layer.backward(store, &enc.obs, &dpre, grads, None);
            off += p;
        }
        crate::tensorkit::outer_add(grads.data_mut(l.q), &dx[off..], &enc.qin);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&NavigatorFile {
            config: self.config.clone(),
            params: self.params.to_checkpoint(),
        })
        .expect("navigator serializes")
    }

    pub fn from_json(s: &str) -> Result<Navigator, PolicyError> {
        let file: NavigatorFile = serde_json::from_str(s)?;
        let mut nav = Navigator::new(file.config)?;
        nav.params.load_checkpoint(&file.params)?;
        Ok(nav)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Navigator, PolicyError> {
        Navigator::from_json(&fs::read_to_string(path)?)
    }
}
