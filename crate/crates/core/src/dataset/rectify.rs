use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_samples, solve};
use super::{Dataset, DatasetError, EnvParams, Sample, Split, Variant};
use crate::gridworld::{
    euclid_dist, is_visible, patch_offset, replay, Action, AgentPose, FovParams, GridMap, Heading,
};
use crate::rng::substream;

/// Where the target must sit in the final view for an endpoint to count as
/// a proper one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewBand {
    pub max_forward: i32,
    pub max_lateral: i32,
    pub max_dist: f64,
    /// Require the agent to stand in the target's room.
    pub same_room: bool,
}

impl Default for ViewBand {
    fn default() -> Self {
        ViewBand {
            max_forward: 3,
            max_lateral: 1,
            max_dist: 3.0,
            same_room: true,
        }
    }
}

/// Endpoint predicate applied by rectification.
pub fn sees_properly(
    map: &GridMap,
    pose: &AgentPose,
    target: (i32, i32),
    fov: &FovParams,
    band: &ViewBand,
) -> bool {
    let (forward, lateral) = patch_offset(pose, target);
    is_visible(map, pose, target, fov)
        && forward <= band.max_forward
        && lateral.abs() <= band.max_lateral
        && euclid_dist(pose, target) <= band.max_dist
        && (!band.same_room || map.room_at(pose.x, pose.y) == map.room_at(target.0, target.1))
}

/// Shortest turn sequence rotating `from` onto `to`; a half turn is two lefts.
pub fn turns_between(from: Heading, to: Heading) -> Vec<Action> {
    match (to.index() + 4 - from.index()) % 4 {
        0 => vec![],
        1 => vec![Action::TurnRight],
        2 => vec![Action::TurnLeft, Action::TurnLeft],
        _ => vec![Action::TurnLeft],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RectifyOutcome {
    Kept(Sample),
    Reset(Sample),
    Dropped,
}

impl RectifyOutcome {
    pub fn into_sample(self) -> Option<Sample> {
        match self {
            RectifyOutcome::Kept(s) | RectifyOutcome::Reset(s) => Some(s),
            RectifyOutcome::Dropped => None,
        }
    }
}

/// Number of trailing trajectory poses searched for a proper endpoint.
pub const RECTIFY_WINDOW: usize = 5;

/// Repair a sample whose expert endpoint does not show the target properly.
///
/// Candidates are the last five trajectory poses, newest first, each tried
/// at headings N, E, S, W. The first candidate that sees the target properly
/// becomes the new endpoint: the expert is cut at that pose, turned, and
/// closed with `Stop`. Samples with no such candidate are dropped.
pub fn rectify_sample(map: &GridMap, sample: &Sample, env: &EnvParams) -> RectifyOutcome {
    let Some(target) = sample.question.target_cell(map) else {
        return RectifyOutcome::Dropped;
    };
    let proper = |pose: &AgentPose| sees_properly(map, pose, target, &env.fov, &env.view);
    if proper(&sample.terminal_pose) {
        return RectifyOutcome::Kept(sample.clone());
    }
    let Ok(poses) = replay(map, sample.start, &sample.expert) else {
        return RectifyOutcome::Dropped;
    };
    let last = poses.len() - 1;
    for i in (last.saturating_sub(RECTIFY_WINDOW - 1)..=last).rev() {
        let at = poses[i];
        for heading in Heading::ALL {
            let candidate = AgentPose { heading, ..at };
            if !proper(&candidate) {
                continue;
            }
            let mut expert = sample.expert[..i].to_vec();
            expert.extend(turns_between(at.heading, heading));
            expert.push(Action::Stop);
            return RectifyOutcome::Reset(Sample {
                expert,
                terminal_pose: candidate,
                ..sample.clone()
            });
        }
    }
    RectifyOutcome::Dropped
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectifyCounts {
    pub kept: usize,
    pub reset: usize,
    pub dropped: usize,
}

/// Rectify every sample, producing the `v1--` variant.
pub fn rectify_dataset(dataset: &Dataset) -> Result<(Dataset, RectifyCounts), DatasetError> {
    let outcomes: Vec<RectifyOutcome> = dataset
        .samples
        .par_iter()
        .map(|s| Ok(rectify_sample(dataset.map_for(s)?, s, &dataset.env)))
        .collect::<Result<_, DatasetError>>()?;
    let mut counts = RectifyCounts::default();
    let mut samples = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            RectifyOutcome::Kept(s) => {
                counts.kept += 1;
                samples.push(s);
            }
            RectifyOutcome::Reset(s) => {
                counts.reset += 1;
                samples.push(s);
            }
            RectifyOutcome::Dropped => counts.dropped += 1,
        }
    }
    Ok((
        Dataset {
            variant: Variant::Rectified,
            env: dataset.env,
            houses: dataset.houses.clone(),
            samples,
        },
        counts,
    ))
}

/// Move the start to `k` expert actions before the final `Stop`.
pub fn backtrack_start(map: &GridMap, sample: &Sample, k: usize) -> Sample {
    let n = sample.expert.len();
    let skip = n.saturating_sub(1).saturating_sub(k);
    let poses = replay(map, sample.start, &sample.expert[..skip]).expect("sample start is valid");
    Sample {
        start: *poses.last().unwrap(),
        expert: sample.expert[skip..].to_vec(),
        ..sample.clone()
    }
}

/// Flip every start heading and re-solve the expert (`v1--R`). Returns the
/// new dataset and the number of samples dropped for lack of a path.
pub fn reverse_variant(dataset: &Dataset) -> Result<(Dataset, usize), DatasetError> {
    let solved: Vec<Option<Sample>> = dataset
        .samples
        .par_iter()
        .map(|s| {
            let map = dataset.map_for(s)?;
            let start = AgentPose {
                heading: s.start.heading.reversed(),
                ..s.start
            };
            Ok(solve(map, start, &s.question, &dataset.env)
                .ok()
                .map(|(expert, terminal_pose)| Sample {
                    start,
                    expert,
                    terminal_pose,
                    ..s.clone()
                }))
        })
        .collect::<Result<_, DatasetError>>()?;
    let dropped = solved.iter().filter(|s| s.is_none()).count();
    Ok((
        Dataset {
            variant: Variant::Reversed,
            env: dataset.env,
            houses: dataset.houses.clone(),
            samples: solved.into_iter().flatten().collect(),
        },
        dropped,
    ))
}

/// `v1+`: the rectified set plus `extra_per_house` fresh, rectified samples
/// on every training house.
pub fn plus_variant(
    dataset: &Dataset,
    extra_per_house: usize,
    seed: u64,
) -> Result<(Dataset, RectifyCounts), DatasetError> {
    let mut fresh = Dataset {
        houses: dataset.houses.clone(),
        env: dataset.env,
        ..Dataset::default()
    };
    for (i, house) in dataset.houses.iter().enumerate() {
        if house.split != Split::Train {
            continue;
        }
        let tag = format!("{}+", house.id);
        let batch = generate_samples(
            &house.map,
            &house.id,
            extra_per_house,
            &dataset.env,
            substream(seed, i as u64),
        );
        fresh.samples.extend(batch.samples.into_iter().map(|mut s| {
            s.id = s.id.replacen(&house.id, &tag, 1);
            s
        }));
    }
    let (rectified, counts) = rectify_dataset(&fresh)?;
    let mut out = Dataset {
        variant: Variant::Plus,
        ..dataset.clone()
    };
    out.samples.extend(rectified.samples);
    Ok((out, counts))
}
