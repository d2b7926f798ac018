//! Procedural room-chain layouts.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::prng;

const ROOM_DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MazeConfig {
    pub rooms: usize,
    /// Interior side length of each square room, in cells.
    pub room_size: usize,
    /// Rooms per row of the snake-shaped room chain.
    pub room_columns: usize,
    pub episode_length: usize,
    pub frame_skip: usize,
    /// Forward displacement per agent step, in cell units.
    pub move_quantum: f64,
    pub turn_quantum_deg: f64,
    pub obs_height: usize,
    pub obs_width: usize,
    pub fov_deg: f64,
}

impl Default for MazeConfig {
    fn default() -> Self {
        Self {
            rooms: 9,
            room_size: 5,
            room_columns: 3,
            episode_length: 2100,
            frame_skip: 4,
            move_quantum: 0.25,
            turn_quantum_deg: 30.0,
            obs_height: 42,
            obs_width: 42,
            fov_deg: 90.0,
        }
    }
}

impl MazeConfig {
    /// Agent steps per episode.
    pub fn horizon(&self) -> usize {
        self.episode_length / self.frame_skip
    }

    pub fn validate(&self) -> Result<()> {
        if self.rooms < 2 {
            return Err(Error::Config(format!(
                "a maze needs at least 2 rooms, got {}",
                self.rooms
            )));
        }
        if self.rooms > ROOM_DIGITS.len() {
            return Err(Error::Config(format!(
                "at most {} rooms supported",
                ROOM_DIGITS.len()
            )));
        }
        if self.room_size < 1 || self.room_columns < 1 {
            return Err(Error::Config(
                "room_size and room_columns must be positive".into(),
            ));
        }
        if self.frame_skip < 1 || self.horizon() < 1 {
            return Err(Error::Config(format!(
                "episode_length {} with frame_skip {} leaves no agent steps",
                self.episode_length, self.frame_skip
            )));
        }
        if !(self.move_quantum > 0.0 && self.move_quantum <= 1.0) {
            return Err(Error::Config(format!(
                "move_quantum must lie in (0, 1], got {}",
                self.move_quantum
            )));
        }
        if !(self.turn_quantum_deg > 0.0 && self.turn_quantum_deg < 360.0) {
            return Err(Error::Config(format!(
                "turn_quantum_deg must lie in (0, 360), got {}",
                self.turn_quantum_deg
            )));
        }
        if self.obs_height < 1
            || self.obs_width < 1
            || !(self.fov_deg > 0.0 && self.fov_deg < 180.0)
        {
            return Err(Error::Config("invalid observation geometry".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomTexture {
    pub base: [f32; 3],
    pub accent: [f32; 3],
    /// Stripe pairs per cell along the wall.
    pub stripes: u8,
    pub horizontal: bool,
}

/// A generated maze: cell grid, per-room textures, start and goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MazeSpecText", try_from = "MazeSpecText")]
pub struct MazeSpec {
    pub seed: u64,
    pub config: MazeConfig,
    pub width: usize,
    pub height: usize,
    /// Room id of each free cell (doorways belong to the lower room), `None` for walls.
    grid: Vec<Option<u16>>,
    pub textures: Vec<RoomTexture>,
    pub start: (usize, usize),
    pub goal: (usize, usize),
}

/// Structured-text form of [`MazeSpec`]: one string per grid row, `#` for
/// walls and a base-36 room digit for free cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MazeSpecText {
    seed: u64,
    start: [usize; 2],
    goal: [usize; 2],
    rows: Vec<String>,
    config: MazeConfig,
    textures: Vec<RoomTexture>,
}

impl From<MazeSpec> for MazeSpecText {
    fn from(spec: MazeSpec) -> Self {
        let rows = (0..spec.height)
            .map(|y| {
                (0..spec.width)
                    .map(|x| match spec.grid[y * spec.width + x] {
                        None => '#',
                        Some(r) => ROOM_DIGITS[r as usize] as char,
                    })
                    .collect()
            })
            .collect();
        Self {
            seed: spec.seed,
            start: [spec.start.0, spec.start.1],
            goal: [spec.goal.0, spec.goal.1],
            config: spec.config,
            rows,
            textures: spec.textures,
        }
    }
}

impl TryFrom<MazeSpecText> for MazeSpec {
    type Error = Error;

    fn try_from(text: MazeSpecText) -> Result<Self> {
        let height = text.rows.len();
        let width = text.rows.first().map_or(0, |r| r.len());
        let mut grid = Vec::with_capacity(width * height);
        for row in &text.rows {
            if row.len() != width {
                return Err(Error::Config("maze rows differ in length".into()));
            }
            for b in row.bytes() {
                grid.push(match b {
                    b'#' => None,
                    _ => {
                        Some(ROOM_DIGITS.iter().position(|&d| d == b).ok_or_else(|| {
                            Error::Config(format!("bad maze cell {:?}", b as char))
                        })? as u16)
                    }
                });
            }
        }
        let spec = MazeSpec {
            seed: text.seed,
            config: text.config,
            width,
            height,
            grid,
            textures: text.textures,
            start: (text.start[0], text.start[1]),
            goal: (text.goal[0], text.goal[1]),
        };
        if !spec.is_free(spec.start.0 as i64, spec.start.1 as i64)
            || !spec.is_free(spec.goal.0 as i64, spec.goal.1 as i64)
        {
            return Err(Error::Config("start and goal must be free cells".into()));
        }
        Ok(spec)
    }
}

/// Grid origin of room `r`'s interior on the snake-ordered room grid.
fn room_origin(r: usize, cols: usize, size: usize) -> (usize, usize) {
    let row = r / cols;
    let mut col = r % cols;
    if row % 2 == 1 {
        col = cols - 1 - col;
    }
    (1 + col * (size + 1), 1 + row * (size + 1))
}

fn random_color(rng: &mut impl Rng) -> [f32; 3] {
    [
        rng.gen_range(0.1..0.95),
        rng.gen_range(0.1..0.95),
        rng.gen_range(0.1..0.95),
    ]
}

/// Builds a deterministic chain of rooms connected by one-cell doorways,
/// with the goal at the farthest cell of the last room.
pub fn generate(seed: u64, config: &MazeConfig) -> Result<MazeSpec> {
    config.validate()?;
    let mut rng = prng(seed);
    let size = config.room_size;
    let cols = config.room_columns.min(config.rooms);
    let room_rows = config.rooms.div_ceil(cols);
    let width = cols * (size + 1) + 1;
    let height = room_rows * (size + 1) + 1;
    let mut grid = vec![None; width * height];

    for r in 0..config.rooms {
        let (x0, y0) = room_origin(r, cols, size);
        for y in y0..y0 + size {
            for x in x0..x0 + size {
                grid[y * width + x] = Some(r as u16);
            }
        }
    }
    for r in 0..config.rooms - 1 {
        let (ax, ay) = room_origin(r, cols, size);
        let (bx, by) = room_origin(r + 1, cols, size);
        let offset = rng.gen_range(0..size);
        let door = if ay == by {
            // side by side: wall column between them
            (ax.max(bx) - 1, ay + offset)
        } else {
            (ax + offset, ay.max(by) - 1)
        };
        grid[door.1 * width + door.0] = Some(r as u16);
    }

    let textures = (0..config.rooms)
        .map(|_| RoomTexture {
            base: random_color(&mut rng),
            accent: random_color(&mut rng),
            stripes: rng.gen_range(1..=4),
            horizontal: rng.gen_bool(0.5),
        })
        .collect();

    let (sx0, sy0) = room_origin(0, cols, size);
    let start = (sx0 + rng.gen_range(0..size), sy0 + rng.gen_range(0..size));

    let mut spec = MazeSpec {
        seed,
        config: config.clone(),
        width,
        height,
        grid,
        textures,
        start,
        goal: start,
    };
    let dist = spec.flood_fill(start);
    let last = (config.rooms - 1) as u16;
    let goal = (0..width * height)
        .filter(|&i| spec.grid[i] == Some(last) && dist[i].is_some())
        .max_by_key(|&i| (dist[i], std::cmp::Reverse(i)))
        .ok_or_else(|| Error::Config("last room is unreachable".into()))?;
    spec.goal = (goal % width, goal / width);

    let from_goal = spec.flood_fill(spec.goal);
    if (0..width * height).any(|i| spec.grid[i].is_some() && from_goal[i].is_none()) {
        return Err(Error::Config(
            "goal is not reachable from every free cell".into(),
        ));
    }
    Ok(spec)
}

impl MazeSpec {
    pub fn is_free(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.grid[y as usize * self.width + x as usize].is_some()
    }

    pub fn room_of(&self, x: i64, y: i64) -> Option<u16> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return None;
        }
        self.grid[y as usize * self.width + x as usize]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.width * self.height)
            .filter(|&i| self.grid[i].is_some())
            .map(|i| (i % self.width, i / self.width))
    }

    pub fn n_free_cells(&self) -> usize {
        self.grid.iter().filter(|c| c.is_some()).count()
    }

    /// Breadth-first step distance (4-neighbourhood) from `from` to every cell.
    pub fn flood_fill(&self, from: (usize, usize)) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.width * self.height];
        let mut queue = VecDeque::new();
        dist[from.1 * self.width + from.0] = Some(0);
        queue.push_back(from);
        while let Some((x, y)) = queue.pop_front() {
            let d = dist[y * self.width + x].unwrap();
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if self.is_free(nx, ny) {
                    let idx = ny as usize * self.width + nx as usize;
                    if dist[idx].is_none() {
                        dist[idx] = Some(d + 1);
                        queue.push_back((nx as usize, ny as usize));
                    }
                }
            }
        }
        dist
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// ASCII picture of the layout with `S` and `G` marking start and goal.
    pub fn ascii(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(if (x, y) == self.start {
                    'S'
                } else if (x, y) == self.goal {
                    'G'
                } else if self.is_free(x as i64, y as i64) {
                    '.'
                } else {
                    '#'
                });
            }
            out.push('\n');
        }
        out
    }
}
