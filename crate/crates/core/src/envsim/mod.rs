//! Deterministic egocentric maze.
//!
//! A chain of textured rooms is rendered by 2-D raycasting into small
//! pseudo-3-D frames. The same maze can instead emit one-hot observations
//! over discrete `(cell, heading)` states, which gives an exact oracle for
//! count-based rewards.

mod layout;
mod render;
mod visits;

pub use layout::{generate, MazeConfig, MazeSpec, RoomTexture};
pub use render::{noise_frame, render, render_tabular, state_from_tabular};
pub use visits::{VisitationCounter, DEFAULT_VISIT_QUANTUM};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::Observation;
use crate::error::{Error, Result};
use crate::rng::Prng;

pub const STEP_PENALTY: f64 = -0.0001;
pub const GOAL_REWARD: f64 = 1.0;
pub const N_HEADINGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Wait,
    Left,
    Right,
    Forward,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Wait, Action::Left, Action::Right, Action::Forward];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Wait => "wait",
            Action::Left => "left",
            Action::Right => "right",
            Action::Forward => "forward",
        }
    }
}

/// Which rewards feed the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardRegime {
    /// Goal reward and step penalty plus the intrinsic bonus.
    #[default]
    SparseExtrinsic,
    /// Intrinsic bonus only; the goal still ends the episode.
    IntrinsicOnly,
}

/// Which observation the environment emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsMode {
    /// Raycast RGB frames.
    Maze,
    /// One-hot over `(cell, heading)`; forces unit moves and 90 degree turns.
    Tabular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub x: f64,
    pub y: f64,
    /// Degrees in `[0, 360)`; 0 faces +x, 90 faces +y.
    pub heading: f64,
    pub steps_elapsed: usize,
    pub done: bool,
}

impl SimState {
    pub fn cell(&self) -> (i64, i64) {
        (self.x.floor() as i64, self.y.floor() as i64)
    }

    /// Nearest of the four axis headings, 0..4.
    pub fn heading_bucket(&self) -> usize {
        ((self.heading / 90.0).round() as usize) % N_HEADINGS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: SimState,
    pub reward: f64,
    pub done: bool,
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}

fn unit_heading(deg: f64) -> (f64, f64) {
    let (s, c) = deg.to_radians().sin_cos();
    (snap(c), snap(s))
}

/// Movement quanta in effect for a spec and observation mode.
fn quanta(spec: &MazeSpec, mode: ObsMode) -> (f64, f64) {
    match mode {
        ObsMode::Maze => (spec.config.move_quantum, spec.config.turn_quantum_deg),
        ObsMode::Tabular => (1.0, 90.0),
    }
}

pub fn initial_state(spec: &MazeSpec) -> SimState {
    SimState {
        x: spec.start.0 as f64 + 0.5,
        y: spec.start.1 as f64 + 0.5,
        heading: 0.0,
        steps_elapsed: 0,
        done: false,
    }
}

/// Pure transition function.
pub fn step_state(
    spec: &MazeSpec,
    mode: ObsMode,
    state: &SimState,
    action: Action,
) -> Result<StepOutcome> {
    if state.done {
        return Err(Error::Usage("step called on a finished episode".into()));
    }
    let (move_q, turn_q) = quanta(spec, mode);
    let mut next = *state;
    match action {
        Action::Wait => {}
        Action::Left => next.heading = (state.heading - turn_q).rem_euclid(360.0),
        Action::Right => next.heading = (state.heading + turn_q).rem_euclid(360.0),
        Action::Forward => {
            let (dx, dy) = unit_heading(state.heading);
            let nx = state.x + move_q * dx;
            let ny = state.y + move_q * dy;
            let (mx, my) = (state.x + 0.5 * move_q * dx, state.y + 0.5 * move_q * dy);
            if spec.is_free(nx.floor() as i64, ny.floor() as i64)
                && spec.is_free(mx.floor() as i64, my.floor() as i64)
            {
                next.x = nx;
                next.y = ny;
            }
        }
    }
    next.steps_elapsed += 1;
    let at_goal = next.cell() == (spec.goal.0 as i64, spec.goal.1 as i64);
    let reward = if at_goal { GOAL_REWARD } else { STEP_PENALTY };
    next.done = at_goal || next.steps_elapsed >= spec.config.horizon();
    Ok(StepOutcome {
        state: next,
        reward,
        done: next.done,
    })
}

/// Single-owner environment instance.
#[derive(Debug, Clone)]
pub struct MazeEnv {
    spec: MazeSpec,
    mode: ObsMode,
    noisy: bool,
    noise_rng: Prng,
    state: SimState,
    free_index: Vec<Option<usize>>,
    n_free: usize,
}

impl MazeEnv {
    pub fn new(spec: MazeSpec, mode: ObsMode, noisy: bool, noise_seed: u64) -> Self {
        let mut free_index = vec![None; spec.width * spec.height];
        let mut n_free = 0;
        for (x, y) in spec.free_cells() {
            free_index[y * spec.width + x] = Some(n_free);
            n_free += 1;
        }
        let state = initial_state(&spec);
        Self {
            spec,
            mode,
            noisy,
            noise_rng: crate::rng::prng(noise_seed),
            state,
            free_index,
            n_free,
        }
    }

    pub fn spec(&self) -> &MazeSpec {
        &self.spec
    }

    pub fn mode(&self) -> ObsMode {
        self.mode
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Distinct headings reachable by turning: 4 in tabular mode.
    pub fn n_headings(&self) -> usize {
        let (_, turn) = quanta(&self.spec, self.mode);
        ((360.0 / turn).round() as usize).max(1)
    }

    /// Number of discrete `(cell, heading)` states.
    pub fn n_states(&self) -> usize {
        self.n_free * self.n_headings()
    }

    /// Discrete `(cell, heading)` index of a state, with headings binned at
    /// the turn quantum.
    pub fn state_key_of(&self, state: &SimState) -> usize {
        let (x, y) = state.cell();
        let cell = self.free_index[y as usize * self.spec.width + x as usize]
            .expect("agent is always on a free cell");
        let n = self.n_headings();
        let heading = (state.heading / 360.0 * n as f64).round() as usize % n;
        cell * n + heading
    }

    pub fn state_key(&self) -> usize {
        self.state_key_of(&self.state)
    }

    pub fn observation_shape(&self) -> (usize, usize, usize) {
        match self.mode {
            ObsMode::Tabular => (1, 1, self.n_states()),
            ObsMode::Maze => {
                let c = if self.noisy { 6 } else { 3 };
                (self.spec.config.obs_height, self.spec.config.obs_width, c)
            }
        }
    }

    pub fn reset(&mut self) -> Observation {
        self.state = initial_state(&self.spec);
        self.observe()
    }

    pub fn observe(&mut self) -> Observation {
        match self.mode {
            ObsMode::Tabular => render_tabular(&self.state, &self.spec),
            ObsMode::Maze => {
                let noise = self.noisy.then_some(&mut self.noise_rng);
                render(&self.state, &self.spec, noise)
            }
        }
    }

    pub fn step(&mut self, action: Action) -> Result<(StepOutcome, Observation)> {
        let outcome = step_state(&self.spec, self.mode, &self.state, action)?;
        self.state = outcome.state;
        let obs = self.observe();
        Ok((outcome, obs))
    }
}

/// One row of a recorded pose trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub step: usize,
    pub action: String,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub reward: f64,
}

/// Writes `step,action,x,y,heading,reward` rows.
pub fn write_pose_trace(records: &[PoseRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pose_trace(path: impl AsRef<Path>) -> Result<Vec<PoseRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::io(path, e.into())))
        .collect()
}
