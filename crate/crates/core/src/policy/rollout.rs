use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, ActionVec, FragmentMatrix, NavState, Navigator, PolicyError};
use crate::dataset::{EnvParams, Sample};
use crate::gridworld::{
    apply_action, euclid_dist, is_visible, render_observation, Action, AgentPose, GridError,
    GridMap, Observation,
};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    Greedy,
    Sample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub yhat: Option<ActionVec>,
    pub fragment: Option<FragmentMatrix>,
}

impl Decision {
    pub fn plain(action: Action) -> Decision {
        Decision {
            action,
            yhat: None,
            fragment: None,
        }
    }
}

/// Anything that picks one action per observation.
pub trait Agent {
    fn begin(&mut self, sample: &Sample) -> Result<(), PolicyError>;
    fn act(
        &mut self,
        obs: &Observation,
        mode: RolloutMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision, PolicyError>;
}

/// A [`Navigator`] driven step by step.
pub struct NavAgent<'a> {
    nav: &'a Navigator,
    state: NavState,
    qin: Vec<f64>,
}

impl<'a> NavAgent<'a> {
    pub fn new(nav: &'a Navigator) -> NavAgent<'a> {
        NavAgent {
            nav,
            state: nav.initial_state(),
            qin: vec![0.0; nav.config.question_input_dim()],
        }
    }
}

impl Agent for NavAgent<'_> {
    fn begin(&mut self, sample: &Sample) -> Result<(), PolicyError> {
        self.state = self.nav.initial_state();
        self.qin = self.nav.question_input(&sample.question);
        Ok(())
    }

    fn act(
        &mut self,
        obs: &Observation,
        mode: RolloutMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision, PolicyError> {
        let out = self.nav.step(&mut self.state, obs, &self.qin)?;
        let index = match mode {
            RolloutMode::Greedy => argmax(&out.probs),
            RolloutMode::Sample => WeightedIndex::new(out.probs)
                .map_err(|e| PolicyError::Config(format!("bad action distribution: {e}")))?
                .sample(rng),
        };
        Ok(Decision {
            action: Action::from_index(index),
            yhat: Some(out.yhat),
            fragment: out.fragment,
        })
    }
}

/// Replays a sample's expert actions, then stops.
#[derive(Clone, Debug, Default)]
pub struct ExpertAgent {
    actions: Vec<Action>,
    next: usize,
}

impl Agent for ExpertAgent {
    fn begin(&mut self, sample: &Sample) -> Result<(), PolicyError> {
        self.actions = sample.expert.clone();
        self.next = 0;
        Ok(())
    }

    fn act(&mut self, _: &Observation, _: RolloutMode, _: &mut ChaCha8Rng) -> Result<Decision, PolicyError> {
        let a = self.actions.get(self.next).copied().unwrap_or(Action::Stop);
        self.next += 1;
        Ok(Decision::plain(a))
    }
}

/// Uniform over all four actions.
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomAgent;

impl Agent for RandomAgent {
    fn begin(&mut self, _: &Sample) -> Result<(), PolicyError> {
        Ok(())
    }

    fn act(&mut self, _: &Observation, _: RolloutMode, rng: &mut ChaCha8Rng) -> Result<Decision, PolicyError> {
        Ok(Decision::plain(Action::from_index(rng.gen_range(0..4))))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StopAgent;

impl Agent for StopAgent {
    fn begin(&mut self, _: &Sample) -> Result<(), PolicyError> {
        Ok(())
    }

    fn act(&mut self, _: &Observation, _: RolloutMode, _: &mut ChaCha8Rng) -> Result<Decision, PolicyError> {
        Ok(Decision::plain(Action::Stop))
    }
}

/// One step of an episode, seen from the pose the action was taken in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub pose: AgentPose,
    pub action: Action,
    pub collided: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub yhat: Option<ActionVec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fragment: Option<Vec<ActionVec>>,
    /// Distance to the target before acting.
    pub dist: f64,
    pub in_target_room: bool,
    pub target_visible: bool,
}

/// Per-frame flags used by the metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub dist: f64,
    pub in_target_room: bool,
    pub target_visible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub sample_id: String,
    pub start: AgentPose,
    pub steps: Vec<StepRecord>,
    pub final_pose: AgentPose,
    pub final_dist: f64,
    pub final_in_room: bool,
    pub final_visible: bool,
    /// The agent chose Stop.
    pub stopped: bool,
    /// The step budget ran out first.
    pub forced: bool,
    #[serde(skip)]
    pub observations: Vec<Observation>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// Distance to the target at the start.
    pub fn d0(&self) -> f64 {
        self.steps.first().map_or(self.final_dist, |s| s.dist)
    }

    /// Every pose the agent occupied: the pose of each step, then the final
    /// pose unless the episode ended on Stop (which does not move).
    pub fn frames(&self) -> Vec<Frame> {
        let mut out: Vec<Frame> = self
            .steps
            .iter()
            .map(|s| Frame {
                dist: s.dist,
                in_target_room: s.in_target_room,
                target_visible: s.target_visible,
            })
            .collect();
        if !self.stopped || out.is_empty() {
            out.push(Frame {
                dist: self.final_dist,
                in_target_room: self.final_in_room,
                target_visible: self.final_visible,
            });
        }
        out
    }
}

/// Run `agent` from the sample's start until it stops or `t_max` actions
/// have been taken.
pub fn rollout(
    agent: &mut dyn Agent,
    map: &GridMap,
    sample: &Sample,
    env: &EnvParams,
    t_max: usize,
    mode: RolloutMode,
    seed: u64,
) -> Result<EpisodeTrace, PolicyError> {
    let target = sample
        .question
        .target_cell(map)
        .ok_or_else(|| GridError::Malformed(format!("sample {} has no target", sample.id)))?;
    let target_room = map.room_at(target.0, target.1);
    let flags = |pose: &AgentPose| {
        let (x, y) = pose.cell();
        (
            euclid_dist(pose, target),
            target_room.is_some() && map.room_at(x, y) == target_room,
            is_visible(map, pose, target, &env.fov),
        )
    };
    let mut rng = seeded(seed);
    agent.begin(sample)?;
    let mut pose = sample.start;
    let mut steps = Vec::new();
    let mut observations = Vec::new();
    let mut stopped = false;
    for _ in 0..t_max {
        let obs = render_observation(map, &pose, &env.fov)?;
        let decision = agent.act(&obs, mode, &mut rng)?;
        let tr = apply_action(map, pose, decision.action)?;
        let (dist, in_target_room, target_visible) = flags(&pose);
        steps.push(StepRecord {
            pose,
            action: decision.action,
            collided: tr.collided,
            yhat: decision.yhat,
            fragment: decision.fragment.map(|f| f.rows),
            dist,
            in_target_room,
            target_visible,
        });
        observations.push(obs);
        pose = tr.pose;
        if decision.action == Action::Stop {
            stopped = true;
            break;
        }
    }
    let (final_dist, final_in_room, final_visible) = flags(&pose);
    Ok(EpisodeTrace {
        sample_id: sample.id.clone(),
        start: sample.start,
        steps,
        final_pose: pose,
        final_dist,
        final_in_room,
        final_visible,
        stopped,
        forced: !stopped,
        observations,
    })
}
