use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{
    check_pose, euclid_dist, is_visible, step_unchecked, Action, AgentPose, FovParams, GridError,
    GridMap, Heading, PathMask,
};

pub const DEFAULT_TERMINAL_RADIUS: f64 = 3.0;

/// Goal predicate over poses: the target cell is visible and within
/// `max_dist` cells (Euclidean).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalSpec {
    pub target: (i32, i32),
    pub max_dist: f64,
    pub fov: FovParams,
}

impl TerminalSpec {
    pub fn new(target: (i32, i32)) -> TerminalSpec {
        TerminalSpec {
            target,
            max_dist: DEFAULT_TERMINAL_RADIUS,
            fov: FovParams::default(),
        }
    }

    pub fn is_terminal(&self, map: &GridMap, pose: &AgentPose) -> bool {
        euclid_dist(pose, self.target) <= self.max_dist
            && is_visible(map, pose, self.target, &self.fov)
    }
}

const SEARCH_ACTIONS: [Action; 3] = [Action::Forward, Action::TurnLeft, Action::TurnRight];

fn state_index(map: &GridMap, pose: &AgentPose) -> usize {
    (pose.y as usize * map.width + pose.x as usize) * 4 + pose.heading.index()
}

fn state_pose(map: &GridMap, index: usize) -> AgentPose {
    let cell = index / 4;
    AgentPose::new(
        (cell % map.width) as i32,
        (cell / map.width) as i32,
        Heading::from_index(index % 4),
    )
}

/// Minimum-length action sequence from `start` to any terminal pose, with a
/// trailing `Stop`. Among equally short sequences the lexicographically
/// smallest by action index is returned.
pub fn shortest_action_path(
    map: &GridMap,
    start: AgentPose,
    terminal: &TerminalSpec,
) -> Result<Vec<Action>, GridError> {
    check_pose(map, &start)?;
    let n = map.width * map.height * 4;
    // parent[s] = (previous state, action taken)
    let mut parent: Vec<Option<(usize, Action)>> = vec![None; n];
    let mut seen = vec![false; n];
    let root = state_index(map, &start);
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(s) = queue.pop_front() {
        let pose = state_pose(map, s);
        if terminal.is_terminal(map, &pose) {
            let mut actions = vec![Action::Stop];
            let mut cur = s;
            while let Some((prev, a)) = parent[cur] {
                actions.push(a);
                cur = prev;
            }
            actions.reverse();
            return Ok(actions);
        }
        for a in SEARCH_ACTIONS {
            let next = step_unchecked(map, pose, a);
            if next.collided {
                continue;
            }
            let ns = state_index(map, &next.pose);
            if !seen[ns] {
                seen[ns] = true;
                parent[ns] = Some((s, a));
                queue.push_back(ns);
            }
        }
    }
    Err(GridError::NoPath)
}

/// The first `k` expert actions from `pose`, padded with `Stop`.
pub fn fragment_label(
    map: &GridMap,
    pose: AgentPose,
    terminal: &TerminalSpec,
    k: usize,
) -> Result<Vec<Action>, GridError> {
    let mut path = shortest_action_path(map, pose, terminal)?;
    path.resize(k, Action::Stop);
    Ok(path)
}

/// Cells traversed by the first `k` expert actions, projected into the
/// patch seen from `pose` and intersected with its accessible, visible cells.
pub fn path_mask_label(
    map: &GridMap,
    pose: AgentPose,
    terminal: &TerminalSpec,
    k: usize,
    fov: &FovParams,
) -> Result<PathMask, GridError> {
    let label = fragment_label(map, pose, terminal, k)?;
    path_mask_for(map, pose, &label, fov)
}

/// Cells entered by `actions` from `pose`, seen in `pose`'s patch. Cells
/// that are inaccessible or not visible from `pose` stay unmarked.
pub fn path_mask_for(
    map: &GridMap,
    pose: AgentPose,
    actions: &[Action],
    fov: &FovParams,
) -> Result<PathMask, GridError> {
    check_pose(map, &pose)?;
    let mut mask = PathMask::empty(fov.depth);
    let mut cur = pose;
    for &a in actions {
        let t = step_unchecked(map, cur, a);
        if t.pose.cell() != cur.cell() {
            mask.mark(map, &pose, t.pose.cell(), fov);
        }
        cur = t.pose;
        if t.terminated {
            break;
        }
    }
    Ok(mask)
}

/// Execute `actions` from `start` and return every pose visited, starting
/// with `start` itself. Stops early at the first `Stop`.
pub fn replay(
    map: &GridMap,
    start: AgentPose,
    actions: &[Action],
) -> Result<Vec<AgentPose>, GridError> {
    check_pose(map, &start)?;
    let mut poses = vec![start];
    let mut cur = start;
    for &a in actions {
        if a == Action::Stop {
            break;
        }
        cur = step_unchecked(map, cur, a).pose;
        poses.push(cur);
    }
    Ok(poses)
}
