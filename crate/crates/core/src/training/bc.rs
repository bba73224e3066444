use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{finish_grads, Curves, TrainConfig, TrainError};
use crate::dataset::{backtrack_start, Dataset};
use crate::gridworld::{path_mask_for, render_observation, replay, Action, Observation, NUM_ACTIONS};
use crate::policy::{EpisodeGrad, Navigator, StepOutput};
use crate::rng::{seeded, substream};
use crate::tensorkit::{sigmoid_bce, softmax_xent, Grads, OptimState, Sgd};

const PRETRAIN_STREAM: u64 = 0x5052_4554;
const BC_STREAM: u64 = 0x4243;

/// A sample laid out for teacher forcing: what the navigator sees at every
/// pose of the expert path and what it should do there.
#[derive(Clone, Debug)]
pub struct BcEpisode {
    pub sample_id: String,
    /// Backtrack level this suffix episode starts from; `None` for the
    /// full expert path.
    pub backtrack: Option<usize>,
    pub observations: Vec<Observation>,
    pub qin: Vec<f64>,
    pub actions: Vec<usize>,
    /// The next `k` expert actions at every step, padded with Stop.
    pub fragment_labels: Vec<Vec<usize>>,
    /// Path-mask targets at every step.
    pub masks: Vec<Vec<f64>>,
}

impl BcEpisode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// One episode per sample, plus one per backtrack level that cuts the
/// sample's expert path short.
pub fn prepare_episodes(
    dataset: &Dataset,
    nav: &Navigator,
    backtracks: &[usize],
) -> Result<Vec<BcEpisode>, TrainError> {
    let k = nav.config.k;
    let fov = dataset.env.fov;
    if fov.depth != nav.config.depth {
        return Err(TrainError::Config(format!(
            "dataset patch depth {} differs from navigator depth {}",
            fov.depth, nav.config.depth
        )));
    }
    let mut jobs = Vec::new();
    for sample in &dataset.samples {
        let map = dataset.map_for(sample)?;
        jobs.push((None, sample.clone()));
        let mut lens = vec![sample.expert.len()];
        for &level in backtracks {
            let cut = backtrack_start(map, sample, level);
            if !lens.contains(&cut.expert.len()) {
                lens.push(cut.expert.len());
                jobs.push((Some(level), cut));
            }
        }
    }
    jobs.par_iter()
        .map(|(backtrack, sample)| {
            let map = dataset.map_for(sample)?;
            if map.vocab != nav.config.vocab {
                return Err(TrainError::Config(format!(
                    "house {} uses a different vocabulary",
                    sample.map_ref
                )));
            }
            let poses = replay(map, sample.start, &sample.expert)?;
            let n = sample.expert.len().min(poses.len());
            let mut ep = BcEpisode {
                sample_id: sample.id.clone(),
                backtrack: *backtrack,
                observations: Vec::with_capacity(n),
                qin: nav.question_input(&sample.question),
                actions: Vec::with_capacity(n),
                fragment_labels: Vec::with_capacity(n),
                masks: Vec::with_capacity(n),
            };
            for (t, pose) in poses.iter().take(n).enumerate() {
                let label: Vec<Action> = (0..k)
                    .map(|j| sample.expert.get(t + j).copied().unwrap_or(Action::Stop))
                    .collect();
                ep.observations.push(render_observation(map, pose, &fov)?);
                ep.actions.push(sample.expert[t].index());
                ep.masks.push(path_mask_for(map, *pose, &label, &fov)?.as_targets());
                ep.fragment_labels.push(label.into_iter().map(Action::index).collect());
            }
            Ok(ep)
        })
        .collect()
}

/// Cross-entropy of a probability row against `target`, with the gradient
/// taken with respect to the row's logits.
fn row_xent(p: &[f64; NUM_ACTIONS], target: usize) -> (f64, [f64; NUM_ACTIONS]) {
    let mut g = *p;
    g[target] -= 1.0;
    (-p[target].max(f64::MIN_POSITIVE).ln(), g)
}

/// `Σ_t xent(ŷ_t, â_t) + λ Σ_t Σ_j xent(F_t[j], label_t[j])` and its
/// gradient.
pub fn bc_loss(
    outputs: &[StepOutput],
    actions: &[usize],
    fragment_labels: &[Vec<usize>],
    lambda: f64,
) -> Result<(f64, EpisodeGrad), TrainError> {
    let n = outputs.len();
    if actions.len() != n {
        return Err(TrainError::Length {
            what: "expert actions",
            expected: n,
            got: actions.len(),
        });
    }
    let use_frag = lambda != 0.0 && outputs.iter().any(|o| o.fragment.is_some());
    if use_frag && fragment_labels.len() != n {
        return Err(TrainError::Length {
            what: "fragment labels",
            expected: n,
            got: fragment_labels.len(),
        });
    }
    let mut loss = 0.0;
    let mut grad = EpisodeGrad::zeros(n);
    for (t, out) in outputs.iter().enumerate() {
        let (l, d) = softmax_xent(&out.yhat, actions[t])?;
        loss += l;
        grad.dyhat[t].copy_from_slice(&d);
        if let (true, Some(f)) = (use_frag, &out.fragment) {
            if fragment_labels[t].len() != f.k() {
                return Err(TrainError::Length {
                    what: "fragment label",
                    expected: f.k(),
                    got: fragment_labels[t].len(),
                });
            }
            let rows = f
                .rows
                .iter()
                .zip(&fragment_labels[t])
                .map(|(row, &target)| {
                    let (l, g) = row_xent(row, target);
                    loss += lambda * l;
                    g.map(|v| lambda * v)
                })
                .collect();
            grad.drow_logits.push(rows);
        }
    }
    Ok((loss, grad))
}

fn bc_episode(nav: &Navigator, ep: &BcEpisode, lambda: f64) -> Result<(f64, Grads), TrainError> {
    let fwd = nav.forward_episode(&ep.observations, &ep.qin)?;
    let (loss, grad) = bc_loss(&fwd.outputs, &ep.actions, &ep.fragment_labels, lambda)?;
    Ok((loss, nav.backward_episode(&fwd, &grad)?))
}

fn pretrain_episode(nav: &Navigator, ep: &BcEpisode, lambda: f64) -> Result<(f64, Grads), TrainError> {
    let fwd = nav.forward_episode(&ep.observations, &ep.qin)?;
    let n = fwd.len();
    let mut grad = EpisodeGrad::zeros(n);
    let mut loss = 0.0;
    for (t, out) in fwd.outputs.iter().enumerate() {
        if let Some(m) = &out.mask_logits {
            let (l, d) = sigmoid_bce(m, &ep.masks[t])?;
            loss += l;
            grad.dmask.push(d);
        }
        if let (true, Some(f)) = (lambda != 0.0, &out.fragment) {
            let rows = f
                .rows
                .iter()
                .zip(&ep.fragment_labels[t])
                .map(|(row, &target)| {
                    let (l, g) = row_xent(row, target);
                    loss += lambda * l;
                    g.map(|v| lambda * v)
                })
                .collect();
            grad.drow_logits.push(rows);
        }
    }
    Ok((loss, nav.backward_episode(&fwd, &grad)?))
}

/// Fraction of expert steps where the navigator's greedy action matches.
pub fn teacher_forced_accuracy(nav: &Navigator, episodes: &[BcEpisode]) -> Result<f64, TrainError> {
    let counts: Vec<(usize, usize)> = episodes
        .par_iter()
        .map(|ep| {
            let fwd = nav.forward_episode(&ep.observations, &ep.qin)?;
            let hits = fwd
                .outputs
                .iter()
                .zip(&ep.actions)
                .filter(|(o, &a)| o.greedy().index() == a)
                .count();
            Ok((hits, ep.len()))
        })
        .collect::<Result<_, TrainError>>()?;
    let (hits, total) = counts
        .iter()
        .fold((0, 0), |(h, t), &(a, b)| (h + a, t + b));
    if total == 0 {
        return Err(TrainError::Empty);
    }
    Ok(hits as f64 / total as f64)
}

struct Fit<'a> {
    epochs: usize,
    lr: f64,
    stream: u64,
    name: &'a str,
}

fn fit<F>(
    nav: &mut Navigator,
    episodes: &[BcEpisode],
    cfg: &TrainConfig,
    fit: Fit<'_>,
    curves: &mut Curves,
    grad_fn: F,
    on_epoch: &mut dyn FnMut(usize, &Navigator, &mut Curves) -> Result<(), TrainError>,
) -> Result<(), TrainError>
where
    F: Fn(&Navigator, &BcEpisode) -> Result<(f64, Grads), TrainError> + Sync,
{
    let sgd = Sgd {
        lr: fit.lr,
        momentum: cfg.momentum,
    };
    let mut state = OptimState::new(&nav.params);
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    for epoch in 0..fit.epochs {
        let mut rng = seeded(substream(substream(cfg.seed, fit.stream), epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(f64, Grads)> = batch
                .par_iter()
                .map(|&i| grad_fn(nav, &episodes[i]))
                .collect::<Result<_, _>>()?;
            let steps: usize = batch.iter().map(|&i| episodes[i].len()).sum();
            let mut total = nav.params.zero_grads();
            for (loss, g) in &results {
                epoch_loss += loss;
                total.add_assign(g);
            }
            epoch_steps += steps;
            finish_grads(&mut total, 1.0 / steps.max(1) as f64, cfg);
            nav.freeze(&mut total, &cfg.freeze);
            sgd.step(&mut nav.params, &total, &mut state)?;
        }
        curves.push(&format!("{}_loss", fit.name), epoch, epoch_loss / epoch_steps.max(1) as f64);
        on_epoch(epoch, nav, curves)?;
    }
    Ok(())
}

/// Fit the path mask (and, with `λ > 0`, the fragment rows) on every pose
/// of the expert paths.
pub fn pretrain_fpe(dataset: &Dataset, nav: &mut Navigator, cfg: &TrainConfig) -> Result<Curves, TrainError> {
    cfg.check()?;
    if !nav.config.kind.has_path() {
        return Err(TrainError::Config(format!(
            "{} has no path encoder",
            nav.config.kind.name()
        )));
    }
    let episodes = prepare_episodes(dataset, nav, &cfg.bc_backtracks)?;
    if episodes.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut curves = Curves::default();
    let lambda = cfg.lambda;
    fit(
        nav,
        &episodes,
        cfg,
        Fit {
            epochs: cfg.pretrain_epochs,
            lr: cfg.lr,
            stream: PRETRAIN_STREAM,
            name: "pretrain",
        },
        &mut curves,
        |nav, ep| pretrain_episode(nav, ep, lambda),
        &mut |_, _, _| Ok(()),
    )?;
    Ok(curves)
}

pub fn train_bc(dataset: &Dataset, nav: &mut Navigator, cfg: &TrainConfig) -> Result<Curves, TrainError> {
    train_bc_with(dataset, nav, cfg, &mut |_, _| Ok(()))
}

/// [`train_bc`] with a hook run after every epoch, e.g. to checkpoint.
pub fn train_bc_with(
    dataset: &Dataset,
    nav: &mut Navigator,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &Navigator) -> Result<(), TrainError>,
) -> Result<Curves, TrainError> {
    cfg.check()?;
    nav.config.bptt = cfg.bptt;
    let episodes = prepare_episodes(dataset, nav, &cfg.bc_backtracks)?;
    if episodes.is_empty() {
        return Err(TrainError::Empty);
    }
    let full: Vec<BcEpisode> = episodes.iter().filter(|e| e.backtrack.is_none()).cloned().collect();
    let mut curves = Curves::default();
    let lambda = cfg.lambda;
    fit(
        nav,
        &episodes,
        cfg,
        Fit {
            epochs: cfg.epochs,
            lr: cfg.lr,
            stream: BC_STREAM,
            name: "bc",
        },
        &mut curves,
        |nav, ep| bc_episode(nav, ep, lambda),
        &mut |epoch, nav, curves| {
            curves.push("bc_accuracy", epoch, teacher_forced_accuracy(nav, &full)?);
            on_epoch(epoch, nav)
        },
    )?;
    Ok(curves)
}
