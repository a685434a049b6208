use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClipSample, Frame, BACKGROUND, PEDESTRIAN, ROAD, VEHICLE};
use crate::error::{Error, Result};

/// Speed multiplier of an object that suddenly accelerates.
const ACCEL: f64 = 3.0;
/// Saliency boost for objects involved in a sudden event.
const EVENT_WEIGHT: f64 = 2.0;

const SKY: [f64; 3] = [0.62, 0.74, 0.90];
const GRASS: [f64; 3] = [0.38, 0.55, 0.33];
const ROAD_RGB: [f64; 3] = [0.42, 0.42, 0.45];
const PEDESTRIAN_RGB: [f64; 3] = [0.85, 0.20, 0.20];
const VEHICLE_RGB: [[f64; 3]; 4] = [
    [0.10, 0.20, 0.70],
    [0.90, 0.85, 0.20],
    [0.95, 0.95, 0.95],
    [0.15, 0.15, 0.15],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub image_size: usize,
    /// Input frames; one more frame is rendered as the prediction target.
    pub clip_len: usize,
    /// Inclusive count range.
    pub vehicles: [usize; 2],
    pub pedestrians: [usize; 2],
    /// Inclusive speed range in pixels per frame.
    pub speed: [f64; 2],
    /// Saliency kernel width in pixels at 64 px; scales with image size.
    pub sigma: f64,
    /// Chance per object of appearing mid-clip or accelerating.
    pub sudden_event_prob: f64,
    /// Fixation peaks per target frame.
    pub fixations: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            image_size: 64,
            clip_len: 4,
            vehicles: [1, 3],
            pedestrians: [0, 2],
            speed: [0.5, 2.5],
            sigma: 4.0,
            sudden_event_prob: 0.3,
            fixations: 3,
        }
    }
}

impl SceneSpec {
    /// Nearly static objects: their flow carries little signal.
    pub fn slow_objects() -> Self {
        Self {
            speed: [0.0, 0.3],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.image_size < 16 {
            return bad(format!("image_size {} is below 16", self.image_size));
        }
        if self.clip_len == 0 {
            return bad("clip_len must be ≥ 1".into());
        }
        if self.vehicles[0] > self.vehicles[1] || self.pedestrians[0] > self.pedestrians[1] {
            return bad("object count ranges must be [min, max]".into());
        }
        if !(self.speed[0] >= 0.0 && self.speed[0] <= self.speed[1]) {
            return bad("speed range must be [min, max] with min ≥ 0".into());
        }
        if !(self.sigma > 0.0) || !(0.0..=1.0).contains(&self.sudden_event_prob) || self.fixations == 0 {
            return bad("sigma > 0, sudden_event_prob in [0, 1] and fixations ≥ 1 required".into());
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.image_size as f64 / 64.0
    }

    /// Flow magnitude mapped to 1 by input normalization.
    pub fn max_speed(&self) -> f64 {
        (self.speed[1] * ACCEL).ceil() + 1.0
    }

    fn road(&self) -> (usize, usize, usize) {
        let s = self.image_size;
        (s * 3 / 10, s / 4, s * 3 / 4)
    }
}

#[derive(Debug, Clone)]
struct Object {
    class: u8,
    w: usize,
    h: usize,
    x0: f64,
    y0: f64,
    vx: f64,
    vy: f64,
    color: [f64; 3],
    appear_at: i64,
    accel_at: Option<i64>,
}

impl Object {
    fn pos(&self, t: i64) -> (f64, f64) {
        let (slow, fast) = match self.accel_at {
            Some(j) => (t.min(j) as f64, (t - j).max(0) as f64 * ACCEL),
            None => (t as f64, 0.0),
        };
        let d = slow + fast;
        (self.x0 + self.vx * d, self.y0 + self.vy * d)
    }

    fn cell(&self, t: i64) -> (i64, i64) {
        let (x, y) = self.pos(t);
        (x.round() as i64, y.round() as i64)
    }

    fn speed(&self, t: i64) -> f64 {
        let base = self.vx.hypot(self.vy);
        match self.accel_at {
            Some(j) if t > j => base * ACCEL,
            _ => base,
        }
    }

    fn eventful(&self) -> bool {
        self.appear_at > 0 || self.accel_at.is_some()
    }
}

fn sample_objects(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Object> {
    let s = spec.scale();
    let size = spec.image_size as f64;
    let (road_top, road_left, road_right) = spec.road();
    let frames = spec.clip_len as i64 + 1;
    let mut objects = Vec::new();
    let counts = [
        (VEHICLE, rng.random_range(spec.vehicles[0]..=spec.vehicles[1])),
        (PEDESTRIAN, rng.random_range(spec.pedestrians[0]..=spec.pedestrians[1])),
    ];
    for (class, n) in counts {
        for _ in 0..n {
            let (w, h) = if class == VEHICLE {
                ((10.0 * s).round() as usize, (7.0 * s).round() as usize)
            } else {
                ((3.0 * s).round().max(1.0) as usize, (3.0 * s).round().max(1.0) as usize)
            };
            let (x0, y0) = if class == VEHICLE {
                (
                    rng.random_range(road_left as f64..(road_right - w) as f64),
                    rng.random_range(road_top as f64..size - h as f64),
                )
            } else {
                (
                    rng.random_range(0.0..size - w as f64),
                    rng.random_range(road_top as f64..size - h as f64),
                )
            };
            let speed = rng.random_range(spec.speed[0]..=spec.speed[1]);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let color = if class == VEHICLE {
                VEHICLE_RGB[rng.random_range(0..VEHICLE_RGB.len())]
            } else {
                PEDESTRIAN_RGB
            };
            let mut obj = Object {
                class,
                w,
                h,
                x0,
                y0,
                vx: speed * angle.cos(),
                vy: speed * angle.sin(),
                color,
                appear_at: 0,
                accel_at: None,
            };
            if frames > 1 && rng.random_bool(spec.sudden_event_prob) {
                let j = rng.random_range(1..frames);
                if rng.random_bool(0.5) {
                    obj.appear_at = j;
                } else {
                    obj.accel_at = Some(j - 1);
                }
            }
            objects.push(obj);
        }
    }
    objects
}

fn background(spec: &SceneSpec) -> (Vec<f64>, Vec<u8>) {
    let n = spec.image_size;
    let (road_top, road_left, road_right) = spec.road();
    let mut rgb = vec![0.0; 3 * n * n];
    let mut labels = vec![BACKGROUND; n * n];
    for y in 0..n {
        for x in 0..n {
            let (color, label) = if y < road_top {
                (SKY, BACKGROUND)
            } else if (road_left..road_right).contains(&x) {
                (ROAD_RGB, ROAD)
            } else {
                (GRASS, BACKGROUND)
            };
            for c in 0..3 {
                rgb[(c * n + y) * n + x] = color[c];
            }
            labels[y * n + x] = label;
        }
    }
    (rgb, labels)
}

fn render(spec: &SceneSpec, objects: &[Object], t: i64, base_rgb: &[f64], base_labels: &[u8]) -> Frame {
    let n = spec.image_size;
    let mut rgb = base_rgb.to_vec();
    let mut semantic = base_labels.to_vec();
    let mut flow = vec![0.0; 2 * n * n];
    for o in objects.iter().filter(|o| t >= o.appear_at) {
        let (cx, cy) = o.cell(t);
        let (px, py) = o.cell(t - 1);
        let (dx, dy) = ((cx - px) as f64, (cy - py) as f64);
        for y in cy.max(0)..(cy + o.h as i64).min(n as i64) {
            for x in cx.max(0)..(cx + o.w as i64).min(n as i64) {
                let i = y as usize * n + x as usize;
                semantic[i] = o.class;
                for c in 0..3 {
                    rgb[c * n * n + i] = o.color[c];
                }
                flow[i] = dx;
                flow[n * n + i] = dy;
            }
        }
    }
    let drivable = semantic.iter().map(|&l| u8::from(l == ROAD)).collect();
    Frame {
        rgb,
        flow,
        semantic,
        drivable,
    }
}

fn saliency(spec: &SceneSpec, objects: &[Object], t: i64, road_labels: &[u8]) -> Vec<f64> {
    let n = spec.image_size;
    let sigma = spec.sigma * spec.scale();
    let lane = n as f64 / 2.0;
    let lane_width = n as f64 / 4.0;
    let mut y = vec![0.0; n * n];
    let mut any = false;
    for o in objects.iter().filter(|o| t >= o.appear_at) {
        let (x, yy) = o.cell(t);
        let cx = x as f64 + o.w as f64 / 2.0 - 0.5;
        let cy = yy as f64 + o.h as f64 / 2.0 - 0.5;
        let proximity = 0.3 + (-0.5 * ((cx - lane) / lane_width).powi(2)).exp();
        let mut weight = (0.5 + o.speed(t) / spec.max_speed()) * proximity;
        if o.eventful() {
            weight *= EVENT_WEIGHT;
        }
        for py in 0..n {
            for px in 0..n {
                let d2 = (px as f64 - cx).powi(2) + (py as f64 - cy).powi(2);
                y[py * n + px] += weight * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
        any = true;
    }
    if !any || y.iter().sum::<f64>() <= 0.0 {
        y = road_labels.iter().map(|&l| f64::from(u8::from(l == ROAD))).collect();
    }
    let total: f64 = y.iter().sum();
    y.iter_mut().for_each(|v| *v /= total);
    y
}

/// Greedy peak picking: take the maximum, clear a disc around it, repeat.
fn fixations(y: &[f64], n: usize, m: usize, radius: f64) -> Vec<f64> {
    let mut p = vec![0.0; y.len()];
    let mut open: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
    for _ in 0..m {
        let best = (0..y.len())
            .filter(|&i| open[i])
            .fold(None, |b: Option<usize>, i| match b {
                Some(j) if y[j] >= y[i] => Some(j),
                _ => Some(i),
            });
        let Some(i) = best else { break };
        p[i] = 1.0;
        let (bx, by) = ((i % n) as f64, (i / n) as f64);
        for (j, o) in open.iter_mut().enumerate() {
            if ((j % n) as f64 - bx).hypot((j / n) as f64 - by) <= radius {
                *o = false;
            }
        }
    }
    p
}

/// Render one clip: `clip_len + 1` frames, with saliency and fixations for
/// the last one.
pub fn generate_synthetic_clip(spec: &SceneSpec, clip_id: u32) -> Result<ClipSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let objects = sample_objects(spec, &mut rng);
    let (base_rgb, base_labels) = background(spec);
    let frames: Vec<Frame> = (0..=spec.clip_len as i64)
        .map(|t| render(spec, &objects, t, &base_rgb, &base_labels))
        .collect();
    let target = spec.clip_len as i64;
    let y = saliency(spec, &objects, target, &base_labels);
    let n = spec.image_size;
    let p = fixations(&y, n, spec.fixations, 2.0 * spec.sigma * spec.scale());
    Ok(ClipSample {
        clip_id,
        height: n,
        width: n,
        frames,
        saliency: y,
        fixations: p,
        max_speed: spec.max_speed(),
    })
}

/// `count` clips with per-clip seeds derived from `spec.seed`.
pub fn generate_dataset(spec: &SceneSpec, count: usize) -> Result<Vec<ClipSample>> {
    (0..count)
        .map(|i| {
            let seed = spec.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            generate_synthetic_clip(&SceneSpec { seed, ..spec.clone() }, i as u32)
        })
        .collect()
}
