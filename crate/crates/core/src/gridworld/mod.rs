//! Deterministic house environment.
//!
//! The agent occupies one accessible cell and faces one of four headings.
//! `x` grows to the east and `y` grows to the south, so `North` is `y - 1`.

mod fov;
mod map;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fov::{
    is_visible, patch_offset, patch_to_world, render_observation, ChannelLayout, FovParams,
    Observation, OcclusionRule, PathMask, PATCH_WIDTH,
};
pub use map::{Cell, GridMap, Object, Room, Vocab};
pub use search::{
    fragment_label, path_mask_for, path_mask_label, replay, shortest_action_path, TerminalSpec,
    DEFAULT_TERMINAL_RADIUS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("pose ({x}, {y}) is not an accessible cell")]
    InvalidPose { x: i32, y: i32 },
    #[error("no terminal pose is reachable from the start")]
    NoPath,
    #[error("malformed map: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Heading::ALL[i % 4]
    }

    /// Unit step along the heading.
    pub fn forward(self) -> (i32, i32) {
        match self {
            Heading::N => (0, -1),
            Heading::E => (1, 0),
            Heading::S => (0, 1),
            Heading::W => (-1, 0),
        }
    }

    /// Unit step to the agent's right.
    pub fn right(self) -> (i32, i32) {
        self.turn_right().forward()
    }

    pub fn turn_left(self) -> Heading {
        Heading::from_index(self.index() + 3)
    }

    pub fn turn_right(self) -> Heading {
        Heading::from_index(self.index() + 1)
    }

    pub fn reversed(self) -> Heading {
        Heading::from_index(self.index() + 2)
    }
}

/// The four discrete moves. Index order is fixed and used as the column
/// order of every action-probability vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Forward = 0,
    TurnLeft = 1,
    TurnRight = 2,
    Stop = 3,
}

pub const NUM_ACTIONS: usize = 4;

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] =
        [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::Stop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn one_hot(self) -> [f64; NUM_ACTIONS] {
        let mut v = [0.0; NUM_ACTIONS];
        v[self.index()] = 1.0;
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: i32,
    pub y: i32,
    pub heading: Heading,
}

impl AgentPose {
    pub fn new(x: i32, y: i32, heading: Heading) -> AgentPose {
        AgentPose { x, y, heading }
    }

    pub fn cell(&self) -> (i32, i32) {
        (self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub pose: AgentPose,
    pub collided: bool,
    pub terminated: bool,
}

fn check_pose(map: &GridMap, pose: &AgentPose) -> Result<(), GridError> {
    if map.is_accessible(pose.x, pose.y) {
        Ok(())
    } else {
        Err(GridError::InvalidPose {
            x: pose.x,
            y: pose.y,
        })
    }
}

/// Advance the agent by one action.
pub fn apply_action(map: &GridMap, pose: AgentPose, action: Action) -> Result<Transition, GridError> {
    check_pose(map, &pose)?;
    Ok(step_unchecked(map, pose, action))
}

pub(crate) fn step_unchecked(map: &GridMap, pose: AgentPose, action: Action) -> Transition {
    let mut next = Transition {
        pose,
        collided: false,
        terminated: false,
    };
    match action {
        Action::Forward => {
            let (dx, dy) = pose.heading.forward();
            let (nx, ny) = (pose.x + dx, pose.y + dy);
            if map.is_accessible(nx, ny) {
                next.pose.x = nx;
                next.pose.y = ny;
            } else {
                next.collided = true;
            }
        }
        Action::TurnLeft => next.pose.heading = pose.heading.turn_left(),
        Action::TurnRight => next.pose.heading = pose.heading.turn_right(),
        Action::Stop => next.terminated = true,
    }
    next
}

pub fn euclid_dist(pose: &AgentPose, cell: (i32, i32)) -> f64 {
    let dx = f64::from(pose.x - cell.0);
    let dy = f64::from(pose.y - cell.1);
    (dx * dx + dy * dy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(w: usize, h: usize) -> GridMap {
        let row = "0".repeat(w);
        let rows: Vec<&str> = (0..h).map(|_| row.as_str()).collect();
        GridMap::from_ascii(&rows, Vocab::default()).unwrap()
    }

    #[test]
    fn forward_moves_along_heading() {
        let map = open(6, 6);
        let t = apply_action(&map, AgentPose::new(2, 3, Heading::E), Action::Forward).unwrap();
        assert_eq!(t.pose, AgentPose::new(3, 3, Heading::E));
        assert!(!t.collided && !t.terminated);
    }

    #[test]
    fn forward_into_wall_collides() {
        let mut map = open(6, 6);
        map.set_cell(2, 2, Cell::WALL);
        let start = AgentPose::new(2, 3, Heading::N);
        let t = apply_action(&map, start, Action::Forward).unwrap();
        assert_eq!(t.pose, start);
        assert!(t.collided && !t.terminated);
    }

    #[test]
    fn turns_and_stop() {
        let map = open(6, 6);
        let start = AgentPose::new(2, 3, Heading::N);
        let t = apply_action(&map, start, Action::TurnLeft).unwrap();
        assert_eq!(t.pose, AgentPose::new(2, 3, Heading::W));
        assert!(!t.collided);
        let t = apply_action(&map, start, Action::TurnRight).unwrap();
        assert_eq!(t.pose.heading, Heading::E);
        let t = apply_action(&map, start, Action::Stop).unwrap();
        assert_eq!(t.pose, start);
        assert!(t.terminated);
    }

    #[test]
    fn invalid_pose_is_rejected() {
        let mut map = open(4, 4);
        map.set_cell(1, 1, Cell::WALL);
        let err = apply_action(&map, AgentPose::new(1, 1, Heading::N), Action::TurnLeft);
        assert_eq!(err, Err(GridError::InvalidPose { x: 1, y: 1 }));
        assert!(apply_action(&map, AgentPose::new(-1, 0, Heading::N), Action::Stop).is_err());
    }

    #[test]
    fn euclidean_distances() {
        assert_eq!(euclid_dist(&AgentPose::new(3, 4, Heading::N), (0, 0)), 5.0);
        assert_eq!(euclid_dist(&AgentPose::new(1, 1, Heading::N), (1, 1)), 0.0);
        assert_eq!(euclid_dist(&AgentPose::new(2, 2, Heading::N), (2, 5)), 3.0);
    }

    #[test]
    fn heading_algebra() {
        for h in Heading::ALL {
            assert_eq!(h.turn_left().turn_right(), h);
            assert_eq!(h.reversed().reversed(), h);
            assert_eq!(h.turn_left().turn_left(), h.reversed());
        }
        assert_eq!(Heading::N.right(), (1, 0));
    }
}
