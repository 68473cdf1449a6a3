//! Pushworld: a gripper disc pushing circular objects around a square table.
//!
//! Episodes mirror the layout of a robot-pushing video dataset: `T` RGB
//! frames, the gripper trajectory, the realized per-step displacement and
//! the object trajectories. Action variance alternates every step, as it
//! does when joint velocities are only refreshed every other frame.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::video::{Frame, Video};

/// Positions are snapped to this grid so that they, and every difference
/// between them, are exactly representable as f32.
const POSITION_QUANTUM: f64 = 1.0 / 65536.0;

const SUPERSAMPLE: usize = 4;

pub const BACKGROUND: [f32; 3] = [0.86, 0.82, 0.74];
pub const GRIPPER_COLOR: [f32; 3] = [0.62, 0.58, 0.52];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub image_size: usize,
    pub channels: usize,
    pub episode_length: usize,
    pub num_objects: usize,
    pub gripper_radius: f64,
    pub object_radius: f64,
    pub sigma_hi: f64,
    pub sigma_lo: f64,
    pub margin: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            channels: 3,
            episode_length: 30,
            num_objects: 3,
            gripper_radius: 4.0,
            object_radius: 5.0,
            sigma_hi: 3.0,
            sigma_lo: 0.5,
            margin: 8.0,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.sigma_hi > self.sigma_lo && self.sigma_lo > 0.0) {
            return bad("need sigma_hi > sigma_lo > 0");
        }
        if self.episode_length < 3 {
            return bad("episode_length must be at least 3");
        }
        if self.channels != 3 {
            return bad("only RGB (3 channels) is supported");
        }
        if self.gripper_radius <= 0.0 || self.object_radius <= 0.0 {
            return bad("radii must be positive");
        }
        let (lo, hi) = self.table_bounds();
        if hi - lo < 2.0 * (self.gripper_radius + self.object_radius) {
            return bad("table is too small for the gripper and an object side by side");
        }
        Ok(())
    }

    /// Inclusive range every disc center must stay in, on both axes.
    pub fn table_bounds(&self) -> (f64, f64) {
        (self.margin, self.image_size as f64 - self.margin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub gripper: [f64; 2],
    pub objects: Vec<[f64; 2]>,
}

/// Colors used to draw one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    pub background: [f32; 3],
    pub gripper: [f32; 3],
    pub objects: Vec<[f32; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: u64,
    pub video: Video,
    /// `T` gripper centers `(x, y)` in pixels.
    pub gripper_positions: Vec<[f32; 2]>,
    /// `T − 1` realized displacements.
    pub actions: Vec<[f32; 2]>,
    /// `T` rows of `num_objects` centers.
    pub object_positions: Vec<Vec<[f32; 2]>>,
    pub object_colors: Vec<[f32; 3]>,
}

impl Episode {
    pub fn state_at(&self, t: usize) -> WorldState {
        WorldState {
            gripper: self.gripper_positions[t].map(f64::from),
            objects: self.object_positions[t]
                .iter()
                .map(|p| p.map(f64::from))
                .collect(),
        }
    }

    pub fn palette(&self) -> Palette {
        Palette {
            background: BACKGROUND,
            gripper: GRIPPER_COLOR,
            objects: self.object_colors.clone(),
        }
    }
}

/// Commanded displacements with alternating variance: even steps draw a
/// fresh `N(0, σ_hi²)` per component, odd steps perturb the previous step
/// by `N(0, σ_lo²)`.
pub fn sample_action_sequence<R: Rng + ?Sized>(
    sigma_hi: f64,
    sigma_lo: f64,
    len: usize,
    rng: &mut R,
) -> Vec<[f64; 2]> {
    sample_action_sequence_from(sigma_hi, sigma_lo, 0, None, len, rng)
}

/// Like [`sample_action_sequence`], but the first sampled step has index
/// `first_index` and, if that index is odd, perturbs `previous`.
pub fn sample_action_sequence_from<R: Rng + ?Sized>(
    sigma_hi: f64,
    sigma_lo: f64,
    first_index: usize,
    previous: Option<[f64; 2]>,
    len: usize,
    rng: &mut R,
) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(len);
    let mut prev = previous.unwrap_or([0.0, 0.0]);
    for i in 0..len {
        let t = first_index + i;
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        let a = if t.is_multiple_of(2) {
            [sigma_hi * zx, sigma_hi * zy]
        } else {
            [prev[0] + sigma_lo * zx, prev[1] + sigma_lo * zy]
        };
        out.push(a);
        prev = a;
    }
    out
}

fn quantize(v: f64) -> f64 {
    (v / POSITION_QUANTUM).round() * POSITION_QUANTUM
}

fn clamp_point(p: [f64; 2], (lo, hi): (f64, f64)) -> [f64; 2] {
    [quantize(p[0].clamp(lo, hi)), quantize(p[1].clamp(lo, hi))]
}

fn overlaps(a: [f64; 2], b: [f64; 2], min_dist: f64) -> bool {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy < (min_dist - 1e-9) * (min_dist - 1e-9)
}

/// Moves the gripper by `action`, pushes touched objects out along the
/// contact normal and keeps everything on the table. Returns the next state
/// and the displacement the gripper actually made.
pub fn step(config: &WorldConfig, state: &WorldState, action: [f64; 2]) -> (WorldState, [f64; 2]) {
    let bounds = config.table_bounds();
    let min_dist = config.gripper_radius + config.object_radius;
    let mut gripper = clamp_point(
        [state.gripper[0] + action[0], state.gripper[1] + action[1]],
        bounds,
    );
    let mut objects = state.objects.clone();
    for _ in 0..8 {
        for o in objects.iter_mut() {
            let (dx, dy) = (o[0] - gripper[0], o[1] - gripper[1]);
            let dist = (dx * dx + dy * dy).sqrt();
            if dist < min_dist {
                let (nx, ny) = if dist > 1e-9 {
                    (dx / dist, dy / dist)
                } else {
                    let n = (action[0] * action[0] + action[1] * action[1]).sqrt();
                    if n > 1e-12 {
                        (action[0] / n, action[1] / n)
                    } else {
                        (1.0, 0.0)
                    }
                };
                // Small slack so snapping to the position grid never reintroduces contact.
                let push = min_dist - dist + 1e-4;
                *o = clamp_point([o[0] + nx * push, o[1] + ny * push], bounds);
            }
        }
        let blocker = objects.iter().find(|o| overlaps(**o, gripper, min_dist));
        match blocker {
            None => {
                let realized = [gripper[0] - state.gripper[0], gripper[1] - state.gripper[1]];
                return (WorldState { gripper, objects }, realized);
            }
            Some(o) => {
                // Object pinned against the table edge: back the gripper off.
                let (dx, dy) = (gripper[0] - o[0], gripper[1] - o[1]);
                let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
                let back = min_dist - dist + 1e-4;
                gripper = clamp_point(
                    [gripper[0] + dx / dist * back, gripper[1] + dy / dist * back],
                    bounds,
                );
            }
        }
    }
    // Unresolvable contact: the gripper stays put this step.
    (state.clone(), [0.0, 0.0])
}

/// Coverage-weighted disc compositing with 4×4 supersampling per pixel.
fn draw_disc(frame: &mut Frame, center: [f64; 2], radius: f64, color: [f32; 3]) {
    let size_x = frame.width as i64;
    let size_y = frame.height as i64;
    let x0 = ((center[0] - radius).floor() as i64).max(0);
    let x1 = ((center[0] + radius).ceil() as i64).min(size_x - 1);
    let y0 = ((center[1] - radius).floor() as i64).max(0);
    let y1 = ((center[1] + radius).ceil() as i64).min(size_y - 1);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let r2 = radius * radius;
    let step = 1.0 / SUPERSAMPLE as f64;
    let total = (SUPERSAMPLE * SUPERSAMPLE) as f32;
    for py in y0..=y1 {
        for px in x0..=x1 {
            let mut hits = 0u32;
            for sy in 0..SUPERSAMPLE {
                let y = py as f64 + (sy as f64 + 0.5) * step - center[1];
                for sx in 0..SUPERSAMPLE {
                    let x = px as f64 + (sx as f64 + 0.5) * step - center[0];
                    if x * x + y * y <= r2 {
                        hits += 1;
                    }
                }
            }
            if hits == 0 {
                continue;
            }
            let a = hits as f32 / total;
            let i = (py as usize * frame.width + px as usize) * 3;
            for (v, &c) in frame.data[i..i + 3].iter_mut().zip(color.iter()) {
                *v = *v * (1.0 - a) + c * a;
            }
        }
    }
}

/// Objects first, gripper on top, over a uniform background.
pub fn render(config: &WorldConfig, state: &WorldState, palette: &Palette) -> Frame {
    let mut frame = Frame::filled(config.image_size, config.image_size, &palette.background);
    for (o, color) in state.objects.iter().zip(&palette.objects) {
        draw_disc(&mut frame, *o, config.object_radius, *color);
    }
    draw_disc(
        &mut frame,
        state.gripper,
        config.gripper_radius,
        palette.gripper,
    );
    frame
}

fn random_object_color<R: Rng + ?Sized>(rng: &mut R) -> [f32; 3] {
    // Saturated hues at moderate brightness, well away from the grey axis
    // the gripper and background sit on.
    let h: f64 = rng.gen_range(0.0..6.0);
    let s: f64 = rng.gen_range(0.7..1.0);
    let v: f64 = rng.gen_range(0.2..0.5);
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) as f32, (g + m) as f32, (b + m) as f32]
}

fn initial_state<R: Rng + ?Sized>(config: &WorldConfig, rng: &mut R) -> WorldState {
    let (lo, hi) = config.table_bounds();
    let gripper = clamp_point([rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)], (lo, hi));
    let min_dist = config.gripper_radius + config.object_radius;
    let mut objects = Vec::with_capacity(config.num_objects);
    for _ in 0..config.num_objects {
        let mut candidate = gripper;
        for _ in 0..1000 {
            candidate = clamp_point([rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)], (lo, hi));
            let clear_of_gripper = !overlaps(candidate, gripper, min_dist + 1e-3);
            let clear_of_objects = objects
                .iter()
                .all(|o| !overlaps(candidate, *o, 2.0 * config.object_radius));
            if clear_of_gripper && clear_of_objects {
                break;
            }
        }
        objects.push(candidate);
    }
    WorldState { gripper, objects }
}

fn to_f32(p: [f64; 2]) -> [f32; 2] {
    [p[0] as f32, p[1] as f32]
}

/// Plays `actions` forward from `start`, rendering every state including the first.
pub fn rollout(
    config: &WorldConfig,
    start: &WorldState,
    palette: &Palette,
    actions: &[[f64; 2]],
) -> (Vec<WorldState>, Vec<[f64; 2]>, Vec<Frame>) {
    let mut states = vec![start.clone()];
    let mut realized = Vec::with_capacity(actions.len());
    let mut frames = vec![render(config, start, palette)];
    for a in actions {
        let (next, r) = step(config, states.last().unwrap(), *a);
        frames.push(render(config, &next, palette));
        states.push(next);
        realized.push(r);
    }
    (states, realized, frames)
}

/// Simulates episode `id`; its randomness comes from its own stream of the master seed.
pub fn simulate_episode(config: &WorldConfig, id: u64) -> Result<Episode> {
    config.validate()?;
    let mut rng: ChaCha8Rng = stream(config.seed, crate::rng::domain::EPISODE, id);
    let objects = (0..config.num_objects)
        .map(|_| random_object_color(&mut rng))
        .collect::<Vec<_>>();
    let palette = Palette {
        background: BACKGROUND,
        gripper: GRIPPER_COLOR,
        objects,
    };
    let start = initial_state(config, &mut rng);
    let commanded = sample_action_sequence(
        config.sigma_hi,
        config.sigma_lo,
        config.episode_length - 1,
        &mut rng,
    );
    let (states, realized, frames) = rollout(config, &start, &palette, &commanded);
    Ok(Episode {
        id,
        video: Video::from_frames(&frames)?,
        gripper_positions: states.iter().map(|s| to_f32(s.gripper)).collect(),
        actions: realized.into_iter().map(to_f32).collect(),
        object_positions: states
            .iter()
            .map(|s| s.objects.iter().map(|o| to_f32(*o)).collect())
            .collect(),
        object_colors: palette.objects,
    })
}

/// Coverage-weighted centroid of pixels drawn in `color` over `background`,
/// estimated by projecting each pixel onto the background→color segment.
/// Pixels far from that segment are ignored.
pub fn color_centroid(frame: &Frame, background: [f32; 3], color: [f32; 3]) -> Option<[f64; 2]> {
    let d: Vec<f64> = (0..3)
        .map(|c| color[c] as f64 - background[c] as f64)
        .collect();
    let dd: f64 = d.iter().map(|v| v * v).sum();
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for y in 0..frame.height {
        for x in 0..frame.width {
            let p = frame.pixel(y, x);
            let rel: Vec<f64> = (0..3).map(|c| p[c] as f64 - background[c] as f64).collect();
            let a = rel.iter().zip(&d).map(|(r, d)| r * d).sum::<f64>() / dd;
            if a <= 1e-6 {
                continue;
            }
            let off: f64 = (0..3)
                .map(|c| (rel[c] - a * d[c]).powi(2))
                .sum::<f64>()
                .sqrt();
            if off > 0.05 {
                continue;
            }
            let a = a.min(1.0);
            sx += a * (x as f64 + 0.5);
            sy += a * (y as f64 + 0.5);
            sw += a;
        }
    }
    (sw > 0.0).then(|| [sx / sw, sy / sw])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg() -> WorldConfig {
        WorldConfig::default()
    }

    #[test]
    fn degenerate_low_sigma_repeats_previous_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = sample_action_sequence(3.0, 0.0, 20, &mut rng);
        for t in (1..20).step_by(2) {
            assert_eq!(a[t], a[t - 1]);
        }
    }

    #[test]
    fn action_sampling_is_deterministic() {
        let a = sample_action_sequence(3.0, 0.5, 29, &mut ChaCha8Rng::seed_from_u64(7));
        let b = sample_action_sequence(3.0, 0.5, 29, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_action_without_contact_is_identity() {
        let s = WorldState {
            gripper: [32.0, 32.0],
            objects: vec![[12.0, 12.0]],
        };
        let (n, r) = step(&cfg(), &s, [0.0, 0.0]);
        assert_eq!(n, s);
        assert_eq!(r, [0.0, 0.0]);
    }

    #[test]
    fn contact_pushes_object_along_normal() {
        // Touching radii: object centre exactly 9 px ahead on x.
        let s = WorldState {
            gripper: [32.0, 32.0],
            objects: vec![[41.0, 32.0]],
        };
        let (n, r) = step(&cfg(), &s, [5.0, 0.0]);
        assert_eq!(r, [5.0, 0.0]);
        let o = n.objects[0];
        assert!((o[1] - 32.0).abs() < 1e-9);
        assert!(o[0] >= 37.0 + 9.0 - 1e-6 && o[0] < 46.01, "{o:?}");
    }

    #[test]
    fn clipping_is_folded_into_the_action() {
        let s = WorldState {
            gripper: [54.0, 32.0],
            objects: vec![],
        };
        let (n, r) = step(&cfg(), &s, [5.0, -1.0]);
        assert_eq!(n.gripper, [56.0, 31.0]);
        assert_eq!(r, [2.0, -1.0]);
    }

    #[test]
    fn pinned_object_blocks_the_gripper() {
        let s = WorldState {
            gripper: [45.0, 32.0],
            objects: vec![[56.0, 32.0]],
        };
        let (n, _) = step(&cfg(), &s, [6.0, 0.0]);
        assert!(!overlaps(n.gripper, n.objects[0], 9.0));
        assert_eq!(n.objects[0], [56.0, 32.0]);
    }

    #[test]
    fn empty_scene_renders_background() {
        let c = WorldConfig {
            num_objects: 0,
            ..cfg()
        };
        let s = WorldState {
            gripper: [-50.0, -50.0],
            objects: vec![],
        };
        let pal = Palette {
            background: BACKGROUND,
            gripper: GRIPPER_COLOR,
            objects: vec![],
        };
        let f = render(&c, &s, &pal);
        assert_eq!(f, Frame::filled(64, 64, &BACKGROUND));
    }

    #[test]
    fn episode_invariants_hold() {
        let c = cfg();
        let ep = simulate_episode(&c, 3).unwrap();
        assert_eq!(ep.video.shape(), [30, 64, 64, 3]);
        assert_eq!(ep.actions.len(), 29);
        let (lo, hi) = c.table_bounds();
        for t in 0..29 {
            for k in 0..2 {
                let d = ep.gripper_positions[t + 1][k] - ep.gripper_positions[t][k];
                assert_eq!(d, ep.actions[t][k]);
            }
        }
        for row in &ep.object_positions {
            for o in row {
                assert!(o.iter().all(|&v| v as f64 >= lo && v as f64 <= hi));
            }
        }
        assert!(ep.video.data.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(simulate_episode(&c, 3).unwrap(), ep);
        assert_ne!(simulate_episode(&c, 4).unwrap().actions, ep.actions);
    }
}
