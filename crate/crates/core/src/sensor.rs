//! Ultrasonic ranging model: a three-ray beam cone per transducer, clamped to
//! the 5–450 cm measurement envelope, with optional seeded Gaussian noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{self, Vec2};
use crate::world::{Pose, RobotSpec, WorldSpec};

pub const MIN_RANGE: f64 = 5.0;
pub const MAX_RANGE: f64 = 450.0;
/// Half-width of the beam cone, radians (7.5°).
pub const BEAM_HALF_ANGLE: f64 = 7.5 * std::f64::consts::PI / 180.0;

/// Four range readings in cm, in wire and CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScanVector {
    pub front: f64,
    pub back: f64,
    pub left: f64,
    pub right: f64,
}

impl ScanVector {
    pub const fn new(front: f64, back: f64, left: f64, right: f64) -> Self {
        ScanVector {
            front,
            back,
            left,
            right,
        }
    }

    pub fn channels(&self) -> [f64; 4] {
        [self.front, self.back, self.left, self.right]
    }

    pub fn from_channels(c: [f64; 4]) -> Self {
        ScanVector::new(c[0], c[1], c[2], c[3])
    }

    /// True when every channel lies in the sensor envelope.
    pub fn in_envelope(&self) -> bool {
        self.channels().iter().all(|&d| (MIN_RANGE..=MAX_RANGE).contains(&d))
    }

    pub fn clamped(&self) -> Self {
        ScanVector::from_channels(self.channels().map(|d| d.clamp(MIN_RANGE, MAX_RANGE)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation of the additive perturbation, cm.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { sigma: 0.5, seed: 0 }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec { sigma: 0.0, seed: 0 }
    }

    pub fn with_seed(sigma: f64, seed: u64) -> Self {
        NoiseSpec { sigma, seed }
    }
}

/// Unclamped distance to the first surface along a ray, `INFINITY` if none
/// is hit inside the arena (the arena walls always are).
pub fn ray_distance(world: &WorldSpec, origin: Vec2, bearing: f64) -> f64 {
    let dir = Vec2::from_angle(bearing);
    let b = &world.bounds;
    let mut best = if b.contains(origin) {
        geometry::ray_exit_rect(origin, dir, b)
    } else {
        0.0
    };
    world.for_each_obstacle(|poly, offset| {
        if let Some(t) = geometry::ray_polygon(origin - offset, dir, poly) {
            best = best.min(t);
        }
    });
    best
}

/// Single-ray range reading clamped to `[MIN_RANGE, max_range]`.
pub fn raycast(world: &WorldSpec, origin: Vec2, bearing: f64, max_range: f64) -> f64 {
    ray_distance(world, origin, bearing).clamp(MIN_RANGE, max_range)
}

/// Beam-cone minimum over the three rays of one transducer, unclamped.
pub fn beam_distance(world: &WorldSpec, origin: Vec2, bearing: f64) -> f64 {
    [-BEAM_HALF_ANGLE, 0.0, BEAM_HALF_ANGLE]
        .into_iter()
        .map(|d| ray_distance(world, origin, bearing + d))
        .fold(f64::INFINITY, f64::min)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and indices.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ a) ^ b.wrapping_mul(0xA24B_AED4_963E_E407))
}

fn noise_draw(noise: &NoiseSpec, tick: u64, channel: usize) -> f64 {
    if noise.sigma <= 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise.seed, tick, channel as u64));
    Normal::new(0.0, noise.sigma).expect("finite sigma").sample(&mut rng)
}

/// Reads all four transducers at `tick`. Deterministic in
/// `(world, pose, noise.seed, tick)`.
pub fn sense(world: &WorldSpec, pose: &Pose, robot: &RobotSpec, noise: &NoiseSpec, tick: u64) -> ScanVector {
    let rays = robot.mount_rays(pose);
    let mut out = [0.0; 4];
    for (ch, (origin, bearing)) in rays.into_iter().enumerate() {
        let d = beam_distance(world, origin, bearing) + noise_draw(noise, tick, ch);
        out[ch] = d.clamp(MIN_RANGE, MAX_RANGE);
    }
    ScanVector::from_channels(out)
}
