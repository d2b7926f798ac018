use rand::RngCore;

use super::{MazeSpec, SimState, N_HEADINGS};
use crate::embedding::Observation;

const CEILING: [f32; 3] = [0.55, 0.55, 0.6];
const FLOOR: [f32; 3] = [0.45, 0.42, 0.4];
const MAX_RAY_CELLS: usize = 256;
const MIN_DIST: f64 = 0.05;

struct Hit {
    perp_dist: f64,
    /// World coordinate along the wall face.
    along: f64,
    y_side: bool,
    room: u16,
}

fn cast(spec: &MazeSpec, state: &SimState, angle: f64) -> Hit {
    let (dy, dx) = angle.sin_cos();
    let (mut mx, mut my) = state.cell();
    let delta_x = if dx == 0.0 {
        f64::INFINITY
    } else {
        (1.0 / dx).abs()
    };
    let delta_y = if dy == 0.0 {
        f64::INFINITY
    } else {
        (1.0 / dy).abs()
    };
    let (step_x, mut side_x) = if dx < 0.0 {
        (-1, (state.x - mx as f64) * delta_x)
    } else {
        (1, (mx as f64 + 1.0 - state.x) * delta_x)
    };
    let (step_y, mut side_y) = if dy < 0.0 {
        (-1, (state.y - my as f64) * delta_y)
    } else {
        (1, (my as f64 + 1.0 - state.y) * delta_y)
    };
    let mut room = spec.room_of(mx, my).unwrap_or(0);
    let mut y_side = false;
    for _ in 0..MAX_RAY_CELLS {
        if side_x < side_y {
            side_x += delta_x;
            mx += step_x;
            y_side = false;
        } else {
            side_y += delta_y;
            my += step_y;
            y_side = true;
        }
        match spec.room_of(mx, my) {
            Some(r) => room = r,
            None => break,
        }
    }
    let dist = if y_side {
        side_y - delta_y
    } else {
        side_x - delta_x
    };
    let along = if y_side {
        state.x + dist * dx
    } else {
        state.y + dist * dy
    };
    let perp_dist = (dist * (angle - state.heading.to_radians()).cos()).max(MIN_DIST);
    Hit {
        perp_dist,
        along,
        y_side,
        room,
    }
}

/// Raycast frame of `config.obs_height x config.obs_width x 3`, plus a fresh
/// uniform noise frame when `noise` is given.
pub fn render(state: &SimState, spec: &MazeSpec, noise: Option<&mut impl RngCore>) -> Observation {
    let (h, w) = (spec.config.obs_height, spec.config.obs_width);
    let half_fov = (spec.config.fov_deg * 0.5).to_radians();
    let heading = state.heading.to_radians();
    let mut px = vec![0.0f32; h * w * 3];
    for col in 0..w {
        let cam = (col as f64 + 0.5) / w as f64 * 2.0 - 1.0;
        let angle = heading + (cam * half_fov.tan()).atan();
        let hit = cast(spec, state, angle);
        let tex = &spec.textures[hit.room as usize];
        let line = h as f64 / hit.perp_dist;
        let top = 0.5 * (h as f64 - line);
        let shade =
            (1.0 / (1.0 + 0.2 * hit.perp_dist)) as f32 * if hit.y_side { 0.75 } else { 1.0 };
        for row in 0..h {
            let yc = row as f64 + 0.5;
            let rgb = if yc < top {
                let t = (yc / (0.5 * h as f64)) as f32;
                CEILING.map(|c| c * (1.0 - 0.4 * t))
            } else if yc >= top + line {
                let t = ((yc - 0.5 * h as f64) / (0.5 * h as f64)) as f32;
                FLOOR.map(|c| c * (0.6 + 0.4 * t))
            } else {
                let v = (yc - top) / line;
                let coord = if tex.horizontal { v } else { hit.along };
                let stripe = ((coord * 2.0 * tex.stripes as f64).floor() as i64).rem_euclid(2) == 1;
                let base = if stripe { tex.accent } else { tex.base };
                base.map(|c| c * shade)
            };
            let at = (row * w + col) * 3;
            for ch in 0..3 {
                px[at + ch] = rgb[ch].clamp(0.0, 1.0);
            }
        }
    }
    let obs = Observation::new(h, w, 3, px).expect("renderer stays in [0, 1]");
    match noise {
        Some(rng) => obs
            .with_noise_frame(noise_frame(rng, h * w * 3))
            .expect("noise frame has the base shape"),
        None => obs,
    }
}

/// `len` uniform values in `[0, 1)` with 24-bit resolution.
pub fn noise_frame(rng: &mut impl RngCore, len: usize) -> Vec<f32> {
    (0..len)
        .map(|_| (rng.next_u64() >> 40) as f32 * (1.0 / (1u32 << 24) as f32))
        .collect()
}

fn free_cell_index(spec: &MazeSpec, cell: (i64, i64)) -> Option<usize> {
    spec.free_cells()
        .position(|(x, y)| (x as i64, y as i64) == cell)
}

/// One-hot observation `1 x 1 x (free cells * 4)` of the discrete state.
pub fn render_tabular(state: &SimState, spec: &MazeSpec) -> Observation {
    let n = spec.n_free_cells() * N_HEADINGS;
    let cell = free_cell_index(spec, state.cell()).expect("agent is on a free cell");
    let mut v = vec![0.0f32; n];
    v[cell * N_HEADINGS + state.heading_bucket()] = 1.0;
    Observation::new(1, 1, n, v).expect("one-hot values are in [0, 1]")
}

/// Inverse of [`render_tabular`]: the state at the cell center with the given heading.
pub fn state_from_tabular(spec: &MazeSpec, index: usize) -> Option<SimState> {
    let (x, y) = spec.free_cells().nth(index / N_HEADINGS)?;
    Some(SimState {
        x: x as f64 + 0.5,
        y: y as f64 + 0.5,
        heading: (index % N_HEADINGS) as f64 * 90.0,
        steps_elapsed: 0,
        done: false,
    })
}
