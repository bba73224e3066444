use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetError, EnvParams, QuestionSpec, QuestionType, Sample};
use crate::gridworld::{
    replay, shortest_action_path, AgentPose, Cell, GridError, GridMap, Heading, Object, Room,
    Vocab,
};
use crate::rng::{seeded, substream};

/// Knobs for procedural houses and the samples drawn from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub width: usize,
    pub height: usize,
    pub min_rooms: usize,
    pub max_rooms: usize,
    pub min_room_side: usize,
    pub vocab: Vocab,
    pub objects_per_house: usize,
    pub samples_per_house: usize,
    pub houses: usize,
    pub test_fraction: f64,
    pub env: EnvParams,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            width: 21,
            height: 21,
            min_rooms: 4,
            max_rooms: 6,
            min_room_side: 3,
            vocab: Vocab::default(),
            objects_per_house: 4,
            samples_per_house: 20,
            houses: 10,
            test_fraction: 0.2,
            env: EnvParams::default(),
            seed: 0,
        }
    }
}

impl GenParams {
    fn check(&self) -> Result<(), DatasetError> {
        let infeasible = |m: &str| Err(DatasetError::Infeasible(m.to_string()));
        if self.width < 9 || self.height < 9 {
            return infeasible("houses must be at least 9x9");
        }
        if self.min_rooms == 0 || self.min_rooms > self.max_rooms {
            return infeasible("room count range is empty");
        }
        if self.min_room_side == 0 {
            return infeasible("rooms need a positive side length");
        }
        let v = self.vocab;
        if v.room_types < 2 || v.classes < 2 || v.colors < 2 {
            return infeasible("vocabulary sizes must be at least 2");
        }
        if self.objects_per_house as u32 > v.classes {
            return infeasible("more objects per house than object classes");
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return infeasible("test fraction outside [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
}

impl Rect {
    fn w(&self) -> i32 {
        self.x1 - self.x0 + 1
    }
    fn h(&self) -> i32 {
        self.y1 - self.y0 + 1
    }
    fn area(&self) -> i32 {
        self.w() * self.h()
    }
}

/// Split `rect` with a one-cell wall, vertically when `vertical`.
fn split(rect: Rect, vertical: bool, min: i32, rng: &mut ChaCha8Rng) -> Option<(Rect, Rect)> {
    let span = if vertical { rect.w() } else { rect.h() };
    if span < 2 * min + 1 {
        return None;
    }
    let origin = if vertical { rect.x0 } else { rect.y0 };
    let cut = origin + min + rng.gen_range(0..=(span - 2 * min - 1));
    Some(if vertical {
        (Rect { x1: cut - 1, ..rect }, Rect { x0: cut + 1, ..rect })
    } else {
        (Rect { y1: cut - 1, ..rect }, Rect { y0: cut + 1, ..rect })
    })
}

/// Recursive binary splits of the interior into rooms, one door per pair of
/// adjacent rooms, then objects on distinct cells.
pub fn generate_house(params: &GenParams, seed: u64) -> Result<GridMap, DatasetError> {
    params.check()?;
    let mut rng = seeded(seed);
    let min = params.min_room_side as i32;
    let target_rooms = rng.gen_range(params.min_rooms..=params.max_rooms);
    let mut rects = vec![Rect {
        x0: 1,
        y0: 1,
        x1: params.width as i32 - 2,
        y1: params.height as i32 - 2,
    }];
    while rects.len() < target_rooms {
        let mut order: Vec<usize> = (0..rects.len()).collect();
        order.sort_by_key(|&i| (-rects[i].area(), i));
        let mut done = false;
        for i in order {
            let r = rects[i];
            let prefer_vertical = r.w() >= r.h();
            let halves = split(r, prefer_vertical, min, &mut rng)
                .or_else(|| split(r, !prefer_vertical, min, &mut rng));
            if let Some((a, b)) = halves {
                rects[i] = a;
                rects.push(b);
                done = true;
                break;
            }
        }
        if !done {
            return Err(DatasetError::Infeasible(format!(
                "cannot fit {target_rooms} rooms of side {min} in {}x{}",
                params.width, params.height
            )));
        }
    }

    let mut map = GridMap::walled(params.width, params.height, params.vocab);
    for (id, r) in rects.iter().enumerate() {
        map.rooms.push(Room {
            id: id as u32,
            room_type: rng.gen_range(0..params.vocab.room_types),
        });
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                map.set_cell(x, y, Cell::open(id as u32));
            }
        }
    }

    let mut doors = Vec::new();
    for a in 0..rects.len() as u32 {
        for b in a + 1..rects.len() as u32 {
            let candidates = door_candidates(&map, a, b);
            if let Some(&(x, y)) = candidates.choose(&mut rng) {
                map.set_cell(x, y, Cell::open(a));
                doors.push((x, y));
            }
        }
    }

    place_objects(&mut map, params, &doors, &mut rng)?;
    map.validate()
        .map_err(|e| DatasetError::Infeasible(format!("generated map invalid: {e}")))?;
    Ok(map)
}

/// Wall cells with room `a` on one side and room `b` directly opposite.
fn door_candidates(map: &GridMap, a: u32, b: u32) -> Vec<(i32, i32)> {
    let mut out = Vec::new();
    for y in 0..map.height as i32 {
        for x in 0..map.width as i32 {
            if map.is_accessible(x, y) {
                continue;
            }
            let pairs = [
                (map.room_at(x - 1, y), map.room_at(x + 1, y)),
                (map.room_at(x, y - 1), map.room_at(x, y + 1)),
            ];
            if pairs
                .iter()
                .any(|&(p, q)| (p, q) == (Some(a), Some(b)) || (p, q) == (Some(b), Some(a)))
            {
                out.push((x, y));
            }
        }
    }
    out
}

fn place_objects(
    map: &mut GridMap,
    params: &GenParams,
    doors: &[(i32, i32)],
    rng: &mut ChaCha8Rng,
) -> Result<(), DatasetError> {
    let vocab = params.vocab;
    let mut unused: Vec<u32> = (0..vocab.classes).collect();
    for id in 0..params.objects_per_house as u32 {
        let room = map.rooms[rng.gen_range(0..map.rooms.len())];
        // classes have a home room type; fall back to any unused class
        let homed: Vec<u32> = unused
            .iter()
            .copied()
            .filter(|c| c % vocab.room_types == room.room_type)
            .collect();
        let class = *homed
            .choose(rng)
            .or_else(|| unused.choose(rng))
            .expect("objects_per_house <= classes");
        unused.retain(|&c| c != class);
        let free: Vec<(i32, i32)> = map
            .accessible_cells()
            .filter(|&(x, y)| {
                map.room_at(x, y) == Some(room.id)
                    && !doors.contains(&(x, y))
                    && map.object_at(x, y).is_none()
            })
            .collect();
        let &(x, y) = free.choose(rng).ok_or_else(|| {
            DatasetError::Infeasible(format!("room {} has no free cell for an object", room.id))
        })?;
        map.place_object(Object {
            id,
            class,
            color: rng.gen_range(0..vocab.colors),
            x,
            y,
        })
        .map_err(|e| DatasetError::Infeasible(e.to_string()))?;
    }
    Ok(())
}

/// Samples produced for one house and how many candidates were dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub samples: Vec<Sample>,
    pub dropped: usize,
}

/// Draw `n` question/start pairs on `map` and solve each with the expert.
/// Starts from which no terminal pose is reachable are dropped.
pub fn generate_samples(
    map: &GridMap,
    map_ref: &str,
    n: usize,
    env: &EnvParams,
    seed: u64,
) -> SampleBatch {
    let mut rng = seeded(seed);
    let cells: Vec<(i32, i32)> = map.accessible_cells().collect();
    let mut batch = SampleBatch {
        samples: Vec::new(),
        dropped: 0,
    };
    if map.objects.is_empty() || cells.is_empty() {
        batch.dropped = n;
        return batch;
    }
    for i in 0..n {
        let object = *map.objects.choose(&mut rng).unwrap();
        let qtype = if rng.gen_bool(0.5) {
            QuestionType::RoomOf
        } else {
            QuestionType::ColorOf
        };
        let &(x, y) = cells.choose(&mut rng).unwrap();
        let start = AgentPose::new(x, y, Heading::from_index(rng.gen_range(0..4)));
        let question = QuestionSpec::new(qtype, &object);
        match solve(map, start, &question, env) {
            Ok((expert, terminal_pose)) => {
                let answer = question.answer(map).expect("target exists");
                batch.samples.push(Sample {
                    id: format!("{map_ref}-{i:04}"),
                    map_ref: map_ref.to_string(),
                    question,
                    answer,
                    start,
                    expert,
                    terminal_pose,
                });
            }
            Err(_) => batch.dropped += 1,
        }
    }
    batch
}

/// Expert actions and the pose they end on.
pub(crate) fn solve(
    map: &GridMap,
    start: AgentPose,
    question: &QuestionSpec,
    env: &EnvParams,
) -> Result<(Vec<crate::gridworld::Action>, AgentPose), GridError> {
    let target = question.target_cell(map).ok_or(GridError::NoPath)?;
    let expert = shortest_action_path(map, start, &env.terminal(target))?;
    let end = *replay(map, start, &expert)?.last().unwrap();
    Ok((expert, end))
}

/// Seed of house `index` under a global seed.
pub fn house_seed(seed: u64, index: usize) -> u64 {
    substream(seed, index as u64)
}

pub(crate) struct HouseOutput {
    pub map: GridMap,
    pub batch: SampleBatch,
}

pub(crate) fn generate_houses(params: &GenParams) -> Result<Vec<HouseOutput>, DatasetError> {
    params.check()?;
    (0..params.houses)
        .into_par_iter()
        .map(|i| {
            let seed = house_seed(params.seed, i);
            let map = generate_house(params, seed)?;
            let batch = generate_samples(
                &map,
                &super::house_id(i),
                params.samples_per_house,
                &params.env,
                substream(seed, 1),
            );
            Ok(HouseOutput { map, batch })
        })
        .collect()
}
