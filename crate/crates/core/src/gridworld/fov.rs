use serde::{Deserialize, Serialize};

use super::{check_pose, AgentPose, GridError, GridMap, Vocab};

/// Lateral extent of the egocentric patch (offsets -2..=2).
pub const PATCH_WIDTH: usize = 5;
const HALF_WIDTH: i32 = (PATCH_WIDTH / 2) as i32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum OcclusionRule {
    /// Inside each lateral column, everything behind the nearest blocked
    /// cell is hidden. Out-of-map cells are hidden and also block.
    #[default]
    ColumnShadow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FovParams {
    pub depth: usize,
    #[serde(default)]
    pub occlusion: OcclusionRule,
}

impl Default for FovParams {
    fn default() -> Self {
        FovParams {
            depth: 5,
            occlusion: OcclusionRule::ColumnShadow,
        }
    }
}

/// Channel offsets of one patch cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelLayout {
    pub room_types: usize,
    pub classes: usize,
    pub colors: usize,
}

impl ChannelLayout {
    pub const ACCESSIBLE: usize = 0;
    pub const OCCLUDED: usize = 1;

    pub fn new(vocab: Vocab) -> ChannelLayout {
        ChannelLayout {
            room_types: vocab.room_types as usize,
            classes: vocab.classes as usize,
            colors: vocab.colors as usize,
        }
    }

    pub fn room(&self, room_type: u32) -> usize {
        2 + room_type as usize
    }

    pub fn class(&self, class: u32) -> usize {
        2 + self.room_types + class as usize
    }

    pub fn color(&self, color: u32) -> usize {
        2 + self.room_types + self.classes + color as usize
    }

    pub fn per_cell(&self) -> usize {
        2 + self.room_types + self.classes + self.colors
    }
}

/// Map a patch index to world coordinates. `forward` is the offset along the
/// heading, `column` runs 0..5 for lateral offsets -2..=2 (positive = right).
pub fn patch_to_world(pose: &AgentPose, forward: usize, column: usize) -> (i32, i32) {
    let (fx, fy) = pose.heading.forward();
    let (rx, ry) = pose.heading.right();
    let f = forward as i32;
    let l = column as i32 - HALF_WIDTH;
    (pose.x + f * fx + l * rx, pose.y + f * fy + l * ry)
}

/// Inverse of [`patch_to_world`]: `(forward, lateral)` offsets of a world
/// cell relative to the pose, whether or not it falls inside the patch.
pub fn patch_offset(pose: &AgentPose, cell: (i32, i32)) -> (i32, i32) {
    let (dx, dy) = (cell.0 - pose.x, cell.1 - pose.y);
    let (fx, fy) = pose.heading.forward();
    let (rx, ry) = pose.heading.right();
    (dx * fx + dy * fy, dx * rx + dy * ry)
}

fn patch_index(pose: &AgentPose, cell: (i32, i32), depth: usize) -> Option<(usize, usize)> {
    let (f, l) = patch_offset(pose, cell);
    if f < 0 || f as usize >= depth || l.abs() > HALF_WIDTH {
        return None;
    }
    Some((f as usize, (l + HALF_WIDTH) as usize))
}

/// Non-occluded flags for the patch, indexed `[forward * PATCH_WIDTH + column]`.
fn visibility(map: &GridMap, pose: &AgentPose, fov: &FovParams) -> Vec<bool> {
    let mut seen = vec![false; fov.depth * PATCH_WIDTH];
    match fov.occlusion {
        OcclusionRule::ColumnShadow => {
            for column in 0..PATCH_WIDTH {
                for forward in 0..fov.depth {
                    let (x, y) = patch_to_world(pose, forward, column);
                    match map.cell(x, y) {
                        None => break,
                        Some(cell) => {
                            seen[forward * PATCH_WIDTH + column] = true;
                            if !cell.acc {
                                break;
                            }
                        }
                    }
                }
            }
        }
    }
    seen
}

/// Egocentric semantic patch seen from a pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub depth: usize,
    pub layout: ChannelLayout,
    data: Vec<f64>,
}

impl Observation {
    pub fn features(&self) -> &[f64] {
        &self.data
    }

    pub fn cell(&self, forward: usize, column: usize) -> &[f64] {
        let n = self.layout.per_cell();
        let start = (forward * PATCH_WIDTH + column) * n;
        &self.data[start..start + n]
    }

    pub fn is_occluded(&self, forward: usize, column: usize) -> bool {
        self.cell(forward, column)[ChannelLayout::OCCLUDED] > 0.5
    }

    pub fn is_accessible(&self, forward: usize, column: usize) -> bool {
        self.cell(forward, column)[ChannelLayout::ACCESSIBLE] > 0.5
    }

    pub fn num_cells(&self) -> usize {
        self.depth * PATCH_WIDTH
    }

    /// Observation of the given shape with every channel zero.
    pub fn zeros(depth: usize, layout: ChannelLayout) -> Observation {
        Observation {
            depth,
            layout,
            data: vec![0.0; depth * PATCH_WIDTH * layout.per_cell()],
        }
    }
}

pub fn render_observation(
    map: &GridMap,
    pose: &AgentPose,
    fov: &FovParams,
) -> Result<Observation, GridError> {
    check_pose(map, pose)?;
    let layout = ChannelLayout::new(map.vocab);
    let mut obs = Observation::zeros(fov.depth, layout);
    let n = layout.per_cell();
    let seen = visibility(map, pose, fov);
    for forward in 0..fov.depth {
        for column in 0..PATCH_WIDTH {
            let idx = forward * PATCH_WIDTH + column;
            let chan = &mut obs.data[idx * n..(idx + 1) * n];
            if !seen[idx] {
                chan[ChannelLayout::OCCLUDED] = 1.0;
                continue;
            }
            let (x, y) = patch_to_world(pose, forward, column);
            let cell = map.cell(x, y).expect("visible cells are on the map");
            if cell.acc {
                chan[ChannelLayout::ACCESSIBLE] = 1.0;
            }
            if let Some(rt) = cell.room.and_then(|r| map.room_type(r)) {
                chan[layout.room(rt)] = 1.0;
            }
            if let Some(o) = map.object_at(x, y) {
                chan[layout.class(o.class)] = 1.0;
                chan[layout.color(o.color)] = 1.0;
            }
        }
    }
    Ok(obs)
}

/// Whether `cell` lies inside the patch seen from `pose` and is not occluded.
pub fn is_visible(map: &GridMap, pose: &AgentPose, cell: (i32, i32), fov: &FovParams) -> bool {
    match patch_index(pose, cell, fov.depth) {
        Some((f, c)) => visibility(map, pose, fov)[f * PATCH_WIDTH + c],
        None => false,
    }
}

/// Binary feasible-path mask aligned with an observation patch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathMask {
    pub depth: usize,
    pub cells: Vec<bool>,
}

impl PathMask {
    pub fn empty(depth: usize) -> PathMask {
        PathMask {
            depth,
            cells: vec![false; depth * PATCH_WIDTH],
        }
    }

    pub fn get(&self, forward: usize, column: usize) -> bool {
        self.cells[forward * PATCH_WIDTH + column]
    }

    pub fn as_targets(&self) -> Vec<f64> {
        self.cells.iter().map(|&b| f64::from(u8::from(b))).collect()
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    /// Mark a world cell if it is inside the patch, accessible and visible.
    pub(crate) fn mark(&mut self, map: &GridMap, pose: &AgentPose, cell: (i32, i32), fov: &FovParams) {
        if let Some((f, c)) = patch_index(pose, cell, self.depth) {
            if map.is_accessible(cell.0, cell.1) && visibility(map, pose, fov)[f * PATCH_WIDTH + c] {
                self.cells[f * PATCH_WIDTH + c] = true;
            }
        }
    }
}
