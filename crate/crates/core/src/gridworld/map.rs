use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::GridError;

/// Sizes of the symbolic vocabularies a house draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub room_types: u32,
    pub classes: u32,
    pub colors: u32,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab {
            room_types: 6,
            classes: 8,
            colors: 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub acc: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<u32>,
}

impl Cell {
    pub const WALL: Cell = Cell {
        acc: false,
        room: None,
    };

    pub fn open(room: u32) -> Cell {
        Cell {
            acc: true,
            room: Some(room),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub id: u32,
    #[serde(rename = "type")]
    pub room_type: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Object {
    pub id: u32,
    pub class: u32,
    pub color: u32,
    pub x: i32,
    pub y: i32,
}

/// A house layout: a row-major grid of cells, the rooms they belong to and
/// the objects placed on them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    pub vocab: Vocab,
    pub cells: Vec<Cell>,
    pub rooms: Vec<Room>,
    pub objects: Vec<Object>,
}

impl GridMap {
    /// A map of the given size with every cell blocked.
    pub fn walled(width: usize, height: usize, vocab: Vocab) -> GridMap {
        GridMap {
            width,
            height,
            vocab,
            cells: vec![Cell::WALL; width * height],
            rooms: Vec::new(),
            objects: Vec::new(),
        }
    }

    /// Parse a map from rows of ASCII: `#` is a wall, a digit is an open cell
    /// of that room id. Rooms get `room_type = id`.
    pub fn from_ascii(rows: &[&str], vocab: Vocab) -> Result<GridMap, GridError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut map = GridMap::walled(width, height, vocab);
        let mut room_ids = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(GridError::Malformed(format!("row {y} has ragged width")));
            }
            for (x, ch) in row.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::WALL,
                    d if d.is_ascii_digit() => {
                        let id = d.to_digit(10).unwrap();
                        if !room_ids.contains(&id) {
                            room_ids.push(id);
                        }
                        Cell::open(id)
                    }
                    other => {
                        return Err(GridError::Malformed(format!("unexpected glyph {other:?}")))
                    }
                };
                map.cells[y * width + x] = cell;
            }
        }
        room_ids.sort_unstable();
        map.rooms = room_ids
            .into_iter()
            .map(|id| Room { id, room_type: id })
            .collect();
        Ok(map)
    }

    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn cell(&self, x: i32, y: i32) -> Option<&Cell> {
        if self.in_bounds(x, y) {
            Some(&self.cells[y as usize * self.width + x as usize])
        } else {
            None
        }
    }

    pub fn set_cell(&mut self, x: i32, y: i32, cell: Cell) {
        assert!(self.in_bounds(x, y), "cell ({x}, {y}) outside map");
        let w = self.width;
        self.cells[y as usize * w + x as usize] = cell;
    }

    pub fn is_accessible(&self, x: i32, y: i32) -> bool {
        self.cell(x, y).is_some_and(|c| c.acc)
    }

    pub fn room_at(&self, x: i32, y: i32) -> Option<u32> {
        self.cell(x, y).and_then(|c| c.room)
    }

    pub fn room_type(&self, room_id: u32) -> Option<u32> {
        self.rooms
            .iter()
            .find(|r| r.id == room_id)
            .map(|r| r.room_type)
    }

    pub fn object(&self, id: u32) -> Option<&Object> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_at(&self, x: i32, y: i32) -> Option<&Object> {
        self.objects.iter().find(|o| o.x == x && o.y == y)
    }

    /// Add an object on an accessible, unoccupied cell.
    pub fn place_object(&mut self, object: Object) -> Result<(), GridError> {
        if !self.is_accessible(object.x, object.y) {
            return Err(GridError::Malformed(format!(
                "object {} on blocked cell ({}, {})",
                object.id, object.x, object.y
            )));
        }
        if self.object_at(object.x, object.y).is_some() || self.object(object.id).is_some() {
            return Err(GridError::Malformed(format!(
                "object {} collides with an existing object",
                object.id
            )));
        }
        self.objects.push(object);
        Ok(())
    }

    pub fn accessible_cells(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).filter_map(move |x| {
                self.cells[y * self.width + x]
                    .acc
                    .then_some((x as i32, y as i32))
            })
        })
    }

    /// Cells reachable from `(x, y)` under 4-connectivity, as a row-major mask.
    pub fn flood_fill(&self, x: i32, y: i32) -> Vec<bool> {
        let mut seen = vec![false; self.cells.len()];
        if !self.is_accessible(x, y) {
            return seen;
        }
        let mut queue = VecDeque::from([(x, y)]);
        seen[y as usize * self.width + x as usize] = true;
        while let Some((cx, cy)) = queue.pop_front() {
            for (dx, dy) in [(0, -1), (1, 0), (0, 1), (-1, 0)] {
                let (nx, ny) = (cx + dx, cy + dy);
                if self.is_accessible(nx, ny) {
                    let i = ny as usize * self.width + nx as usize;
                    if !seen[i] {
                        seen[i] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        let mut cells = self.accessible_cells();
        let Some((x, y)) = cells.next() else {
            return true;
        };
        let seen = self.flood_fill(x, y);
        self.accessible_cells()
            .all(|(cx, cy)| seen[cy as usize * self.width + cx as usize])
    }

    /// Check every structural invariant of the layout.
    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |msg: String| Err(GridError::Malformed(msg));
        if self.cells.len() != self.width * self.height {
            return bad(format!(
                "{} cells for a {}x{} map",
                self.cells.len(),
                self.width,
                self.height
            ));
        }
        for (i, cell) in self.cells.iter().enumerate() {
            match (cell.acc, cell.room) {
                (true, None) => return bad(format!("accessible cell {i} has no room")),
                (false, Some(_)) => return bad(format!("blocked cell {i} has a room")),
                (true, Some(r)) if self.room_type(r).is_none() => {
                    return bad(format!("cell {i} references unknown room {r}"))
                }
                _ => {}
            }
        }
        for room in &self.rooms {
            if room.room_type >= self.vocab.room_types {
                return bad(format!("room {} type out of vocabulary", room.id));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !self.is_accessible(o.x, o.y) {
                return bad(format!("object {} not on an accessible cell", o.id));
            }
            if o.class >= self.vocab.classes || o.color >= self.vocab.colors {
                return bad(format!("object {} out of vocabulary", o.id));
            }
            if self.objects[..i]
                .iter()
                .any(|p| p.id == o.id || (p.x, p.y) == (o.x, o.y))
            {
                return bad(format!("object {} duplicates id or cell", o.id));
            }
        }
        if !self.is_connected() {
            return bad("accessible cells are not connected".into());
        }
        Ok(())
    }

    /// JSON with keys in sorted order; stable across round trips.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("map serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn from_json(text: &str) -> Result<GridMap, GridError> {
        let map: GridMap =
            serde_json::from_str(text).map_err(|e| GridError::Malformed(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }
}
