//! Built-in test worlds, each with a start pose and, where it makes sense,
//! an exit region.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Rect, Vec2};
use crate::sensor::derive_seed;
use crate::world::{MobileObstacle, Pose, RobotSpec, WorldSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown scenario {0:?} (expected course, enclosure, corner or mobile)")]
pub struct UnknownScenario(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Course,
    Enclosure,
    Corner,
    Mobile,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Course,
        ScenarioKind::Enclosure,
        ScenarioKind::Corner,
        ScenarioKind::Mobile,
    ];

    /// Tick budget a run in this scenario gets by default. The mobile trial
    /// only needs the encounter and the recovery after it.
    pub fn max_ticks(self) -> u64 {
        match self {
            ScenarioKind::Corner => 2000,
            ScenarioKind::Mobile => 600,
            _ => 4000,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Course => "course",
            ScenarioKind::Enclosure => "enclosure",
            ScenarioKind::Corner => "corner",
            ScenarioKind::Mobile => "mobile",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownScenario(s.to_string()))
    }
}

/// Builds a named scenario. The returned world carries its start pose and
/// exit region.
pub fn build_scenario(name: &str, seed: u64) -> Result<WorldSpec, UnknownScenario> {
    Ok(build(name.parse()?, seed))
}

pub fn build(kind: ScenarioKind, seed: u64) -> WorldSpec {
    match kind {
        ScenarioKind::Course => course(seed),
        ScenarioKind::Enclosure => enclosure(seed),
        ScenarioKind::Corner => corner(),
        ScenarioKind::Mobile => mobile(seed),
    }
}

fn rng_for(kind: ScenarioKind, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, kind as u64, 0x5CE7))
}

pub const COURSE_SIZE: f64 = 400.0;
/// Minimum free gap between course obstacles, and between an obstacle and
/// the start, cm.
pub const COURSE_GAP: f64 = 60.0;
const COURSE_WALL_MARGIN: f64 = 40.0;
/// Leg length of the 45° fillets that cut off the room corners, cm.
pub const ROOM_FILLET: f64 = 40.0;

/// Right-isosceles triangles filling each corner of `r`. A square corner
/// leaves every range channel short at once, and the rule-based driver then
/// rocks between front and back there instead of turning out.
fn corner_fillets(r: &Rect, leg: f64) -> [Vec<Vec2>; 4] {
    let (x0, y0, x1, y1) = (r.min.x, r.min.y, r.max.x, r.max.y);
    [
        vec![Vec2::new(x0, y0), Vec2::new(x0 + leg, y0), Vec2::new(x0, y0 + leg)],
        vec![Vec2::new(x1, y0), Vec2::new(x1, y0 + leg), Vec2::new(x1 - leg, y0)],
        vec![Vec2::new(x1, y1), Vec2::new(x1 - leg, y1), Vec2::new(x1, y1 - leg)],
        vec![Vec2::new(x0, y1), Vec2::new(x0, y1 - leg), Vec2::new(x0 + leg, y1)],
    ]
}

/// Regular-ish convex polygon with `n` vertices and circumradius `radius`.
fn blob(rng: &mut ChaCha8Rng, center: Vec2, radius: f64) -> Vec<Vec2> {
    let n = rng.random_range(4..=6);
    let phase = rng.random_range(0.0..TAU);
    (0..n)
        .map(|i| center + Vec2::from_angle(phase + TAU * i as f64 / n as f64) * radius)
        .collect()
}

/// Seeded scatter of 6–10 convex obstacles, 20–50 cm across, in a
/// 400 × 400 cm room with filleted corners. No exit; the course is scored on
/// collisions and progress.
pub fn course(seed: u64) -> WorldSpec {
    let mut rng = rng_for(ScenarioKind::Course, seed);
    let bounds = Rect::new(0.0, 0.0, COURSE_SIZE, COURSE_SIZE);
    let start = Pose::new(50.0, 50.0, rng.random_range(0.0..TAU));
    let want = rng.random_range(6..=10);
    let mut placed: Vec<(Vec2, f64)> = Vec::new();
    let mut world = WorldSpec::new(bounds);
    let lo = COURSE_WALL_MARGIN;
    let hi = COURSE_SIZE - COURSE_WALL_MARGIN;
    let mut attempts = 0;
    while placed.len() < want && attempts < 10_000 {
        attempts += 1;
        let radius = rng.random_range(10.0..25.0);
        let c = Vec2::new(
            rng.random_range(lo + radius..hi - radius),
            rng.random_range(lo + radius..hi - radius),
        );
        let clear_start = c.distance(start.position()) - radius - RobotSpec::default().body_radius >= COURSE_GAP;
        let clear_others = placed.iter().all(|&(o, r)| c.distance(o) - r - radius >= COURSE_GAP);
        if clear_start && clear_others {
            placed.push((c, radius));
            world = world.with_static(blob(&mut rng, c, radius));
        }
    }
    for f in corner_fillets(&bounds, ROOM_FILLET) {
        world = world.with_static(f);
    }
    world.start = Some(start);
    world
}

pub const ENCLOSURE_INNER: f64 = 120.0;
pub const ENCLOSURE_OPENING: f64 = 40.0;
pub const ENCLOSURE_WALL: f64 = 5.0;
pub const ENCLOSURE_FILLET: f64 = 30.0;

/// 120 × 120 cm box with a single 40 cm gap in the middle of its top wall,
/// centred in a 400 × 400 cm room. The inside corners are filleted. The exit
/// region is the strip above the box.
pub fn enclosure(seed: u64) -> WorldSpec {
    let mut rng = rng_for(ScenarioKind::Enclosure, seed);
    let (w, t) = (ENCLOSURE_INNER, ENCLOSURE_WALL);
    let x0 = 140.0;
    let y0 = 140.0;
    let (x1, y1) = (x0 + w, y0 + w);
    let gap_lo = x0 + (w - ENCLOSURE_OPENING) / 2.0;
    let gap_hi = gap_lo + ENCLOSURE_OPENING;
    let mut world = WorldSpec::new(Rect::new(0.0, 0.0, 400.0, 400.0))
        .with_static(Rect::new(x0 - t, y0 - t, x1 + t, y0).to_polygon())
        .with_static(Rect::new(x0 - t, y0, x0, y1 + t).to_polygon())
        .with_static(Rect::new(x1, y0, x1 + t, y1 + t).to_polygon())
        .with_static(Rect::new(x0, y1, gap_lo, y1 + t).to_polygon())
        .with_static(Rect::new(gap_hi, y1, x1, y1 + t).to_polygon());
    for f in corner_fillets(&Rect::new(x0, y0, x1, y1), ENCLOSURE_FILLET) {
        world = world.with_static(f);
    }
    let m = 30.0;
    world.start = Some(Pose::new(
        rng.random_range(x0 + m..x1 - m),
        rng.random_range(y0 + m..y1 - m),
        rng.random_range(0.0..TAU),
    ));
    world.exit = Some(Rect::new(0.0, y1 + t + 20.0, 400.0, 400.0));
    world
}

/// Width of the dead-end alcove used by the corner scenario, cm.
pub const CORNER_WIDTH: f64 = 54.0;
/// Distance from the robot centre to the alcove's end wall at the start, cm.
pub const CORNER_STANDOFF: f64 = 31.0;

/// Dead-end alcove: the robot starts on the centreline facing the end wall,
/// with both side walls equally far away. The exit region lies beyond the
/// alcove mouth.
pub fn corner() -> WorldSpec {
    let t = 5.0;
    let (cy, half) = (100.0, CORNER_WIDTH / 2.0);
    let end_x = 250.0;
    let mouth_x = 150.0;
    let mut world = WorldSpec::new(Rect::new(0.0, 0.0, 300.0, 200.0))
        .with_static(Rect::new(end_x, cy - half - t, end_x + t, cy + half + t).to_polygon())
        .with_static(Rect::new(mouth_x, cy + half, end_x, cy + half + t).to_polygon())
        .with_static(Rect::new(mouth_x, cy - half - t, end_x, cy - half).to_polygon());
    world.start = Some(Pose::new(end_x - CORNER_STANDOFF, cy, 0.0));
    world.exit = Some(Rect::new(0.0, 0.0, mouth_x - 40.0, 200.0));
    world
}

/// Open room; a box slides across the robot's path so that it enters the
/// front beam a few centimetres ahead of the robot.
pub fn mobile(seed: u64) -> WorldSpec {
    let mut rng = rng_for(ScenarioKind::Mobile, seed);
    let robot = RobotSpec::default();
    let (x0, y0) = (60.0, 200.0);
    let cross_t = rng.random_range(1.0..2.0);
    // Nominal gap. Under two_tier the robot only starts once the first planner
    // reply lands two ticks in, so it trails this schedule by about 2 cm and
    // the box face ends up 2.5-3.5 cm ahead: critical even with noise.
    let gap = rng.random_range(0.5..1.5);
    let speed = rng.random_range(30.0..50.0);
    let (depth, height) = (20.0, 30.0);
    // Front of the body when the robot has driven straight for cross_t.
    let front_x = x0 + robot.body_radius + robot.linear_speed * cross_t;
    let face = front_x + gap;
    let cx = face + depth / 2.0;
    // Lower edge reaches the centreline at cross_t.
    let cy_cross = y0 + height / 2.0;
    let start_cy = cy_cross + speed * cross_t;
    let end_cy = y0 - 120.0;
    let verts = Rect::new(
        cx - depth / 2.0,
        start_cy - height / 2.0,
        cx + depth / 2.0,
        start_cy + height / 2.0,
    )
    .to_polygon();
    let mut world = WorldSpec::new(Rect::new(0.0, 0.0, 500.0, 400.0)).with_mobile(MobileObstacle::new(
        verts,
        vec![Vec2::new(cx, end_cy)],
        speed,
        false,
    ));
    world.start = Some(Pose::new(x0, y0, 0.0));
    world
}
