//! The simulated arena: geometry, robot kinematics, scripted obstacles and
//! contact detection.
//!
//! Everything here is a pure function over value types. Mobile obstacles are
//! kinematic: they follow their waypoint script regardless of the robot.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Rect, Vec2};
use crate::reflex::Command;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error("world file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("world file: {0}")]
    Io(#[from] std::io::Error),
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Robot position in cm and heading in radians, counterclockwise from +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorMount {
    /// Distance of the transducer from the body centre, cm.
    pub offset: f64,
    /// Pointing direction relative to the heading, radians. The transducer
    /// sits on the same bearing.
    pub bearing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorMounts {
    pub front: SensorMount,
    pub back: SensorMount,
    pub left: SensorMount,
    pub right: SensorMount,
}

impl SensorMounts {
    /// Channel order matches the scan vector: front, back, left, right.
    pub fn as_array(&self) -> [SensorMount; 4] {
        [self.front, self.back, self.left, self.right]
    }
}

/// Disc-shaped differential-drive robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotSpec {
    pub body_radius: f64,
    /// cm/s
    pub linear_speed: f64,
    /// rad/s
    pub angular_speed: f64,
    pub sensor_mounts: SensorMounts,
}

impl Default for RobotSpec {
    fn default() -> Self {
        let r = 12.0;
        let mount = |bearing| SensorMount { offset: r, bearing };
        RobotSpec {
            body_radius: r,
            linear_speed: 20.0,
            angular_speed: FRAC_PI_2,
            sensor_mounts: SensorMounts {
                front: mount(0.0),
                back: mount(PI),
                left: mount(FRAC_PI_4),
                right: mount(-FRAC_PI_4),
            },
        }
    }
}

impl RobotSpec {
    pub fn validate(&self) -> Result<(), WorldError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.body_radius) {
            return Err(WorldError::Invalid("body_radius must be > 0".into()));
        }
        if !ok(self.linear_speed) || !ok(self.angular_speed) {
            return Err(WorldError::Invalid("speeds must be > 0".into()));
        }
        for m in self.sensor_mounts.as_array() {
            if !m.offset.is_finite() || m.offset < 0.0 || !m.bearing.is_finite() {
                return Err(WorldError::Invalid("bad sensor mount".into()));
            }
        }
        Ok(())
    }

    /// World-frame transducer position and pointing direction per channel.
    pub fn mount_rays(&self, pose: &Pose) -> [(Vec2, f64); 4] {
        self.sensor_mounts.as_array().map(|m| {
            let dir = pose.heading + m.bearing;
            (pose.position() + Vec2::from_angle(dir) * m.offset, dir)
        })
    }
}

/// First-order differential-drive update. Turns are in place.
pub fn step_kinematics(pose: Pose, command: Command, robot: &RobotSpec, dt: f64) -> Pose {
    debug_assert!(dt > 0.0);
    let fwd = Vec2::from_angle(pose.heading);
    let d = robot.linear_speed * dt;
    let w = robot.angular_speed * dt;
    match command {
        Command::Front => Pose {
            x: pose.x + fwd.x * d,
            y: pose.y + fwd.y * d,
            heading: pose.heading,
        },
        Command::Back => Pose {
            x: pose.x - fwd.x * d,
            y: pose.y - fwd.y * d,
            heading: pose.heading,
        },
        Command::Left => Pose {
            heading: normalize_angle(pose.heading + w),
            ..pose
        },
        Command::Right => Pose {
            heading: normalize_angle(pose.heading - w),
            ..pose
        },
        Command::Stop => pose,
    }
}

/// A convex obstacle that translates along a waypoint path at constant speed.
///
/// The path starts at the centroid of `vertices` and visits each waypoint in
/// order. Looping scripts return to the start and repeat; others park at the
/// last waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileObstacle {
    pub vertices: Vec<Vec2>,
    pub waypoints: Vec<Vec2>,
    pub speed: f64,
    #[serde(rename = "loop", default = "default_loop")]
    pub looping: bool,
    #[serde(skip)]
    offset: Vec2,
}

fn default_loop() -> bool {
    true
}

impl MobileObstacle {
    pub fn new(vertices: Vec<Vec2>, waypoints: Vec<Vec2>, speed: f64, looping: bool) -> Self {
        MobileObstacle {
            vertices,
            waypoints,
            speed,
            looping,
            offset: Vec2::default(),
        }
    }

    fn path(&self) -> Vec<Vec2> {
        let start = geometry::centroid(&self.vertices);
        let mut pts = Vec::with_capacity(self.waypoints.len() + 2);
        pts.push(start);
        pts.extend_from_slice(&self.waypoints);
        if self.looping {
            pts.push(start);
        }
        pts
    }

    /// Length of one pass along the path, cm.
    pub fn path_length(&self) -> f64 {
        self.path().windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Seconds for one full cycle of a looping script.
    pub fn cycle_duration(&self) -> f64 {
        self.path_length() / self.speed
    }

    /// Translation of the obstacle relative to its initial placement at `t`.
    pub fn offset_at(&self, t: f64) -> Vec2 {
        let pts = self.path();
        let total: f64 = pts.windows(2).map(|w| w[0].distance(w[1])).sum();
        if total <= 0.0 {
            return Vec2::default();
        }
        let mut d = self.speed * t.max(0.0);
        if self.looping {
            d = d.rem_euclid(total);
        } else if d >= total {
            return *pts.last().unwrap() - pts[0];
        }
        for w in pts.windows(2) {
            let len = w[0].distance(w[1]);
            if d <= len {
                let p = if len > 0.0 {
                    w[0] + (w[1] - w[0]) * (d / len)
                } else {
                    w[0]
                };
                return p - pts[0];
            }
            d -= len;
        }
        *pts.last().unwrap() - pts[0]
    }

    /// Current translation applied by [`advance_obstacles`].
    pub fn offset(&self) -> Vec2 {
        self.offset
    }

    pub fn current_vertices(&self) -> Vec<Vec2> {
        geometry::translate(&self.vertices, self.offset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub bounds: Rect,
    #[serde(default)]
    pub static_obstacles: Vec<Vec<Vec2>>,
    #[serde(default)]
    pub mobile_obstacles: Vec<MobileObstacle>,
    /// Optional robot start pose used by data collection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Pose>,
    /// Reaching this region ends an episode as an escape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit: Option<Rect>,
    /// Seconds of obstacle motion already applied.
    #[serde(skip)]
    elapsed: f64,
}

impl WorldSpec {
    pub fn new(bounds: Rect) -> Self {
        WorldSpec {
            bounds,
            static_obstacles: Vec::new(),
            mobile_obstacles: Vec::new(),
            start: None,
            exit: None,
            elapsed: 0.0,
        }
    }

    pub fn with_static(mut self, poly: Vec<Vec2>) -> Self {
        self.static_obstacles.push(poly);
        self
    }

    pub fn with_mobile(mut self, obstacle: MobileObstacle) -> Self {
        self.mobile_obstacles.push(obstacle);
        self
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let w: WorldSpec = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let b = &self.bounds;
        if !b.min.is_finite() || !b.max.is_finite() || b.width() <= 0.0 || b.height() <= 0.0 {
            return Err(WorldError::Invalid(
                "bounds must be a finite, non-empty rectangle".into(),
            ));
        }
        let check_poly = |poly: &[Vec2], what: &str| -> Result<(), WorldError> {
            if poly.len() < 3 {
                return Err(WorldError::Invalid(format!("{what}: fewer than 3 vertices")));
            }
            if poly.iter().any(|p| !p.is_finite()) {
                return Err(WorldError::Invalid(format!("{what}: non-finite vertex")));
            }
            if geometry::signed_area(poly).abs() <= 1e-9 {
                return Err(WorldError::Invalid(format!("{what}: zero area")));
            }
            if !geometry::is_convex(poly) {
                return Err(WorldError::Invalid(format!("{what}: not convex")));
            }
            if poly.iter().any(|&p| !b.contains(p)) {
                return Err(WorldError::Invalid(format!("{what}: vertex outside bounds")));
            }
            Ok(())
        };
        for (i, poly) in self.static_obstacles.iter().enumerate() {
            check_poly(poly, &format!("static obstacle {i}"))?;
        }
        for (i, m) in self.mobile_obstacles.iter().enumerate() {
            let what = format!("mobile obstacle {i}");
            check_poly(&m.vertices, &what)?;
            if m.waypoints.is_empty() {
                return Err(WorldError::Invalid(format!("{what}: script needs a waypoint")));
            }
            if !(m.speed.is_finite() && m.speed > 0.0) {
                return Err(WorldError::Invalid(format!("{what}: speed must be > 0")));
            }
            let c = geometry::centroid(&m.vertices);
            for &wp in &m.waypoints {
                if !wp.is_finite() {
                    return Err(WorldError::Invalid(format!("{what}: non-finite waypoint")));
                }
                let moved = geometry::translate(&m.vertices, wp - c);
                if moved.iter().any(|&p| !b.contains(p)) {
                    return Err(WorldError::Invalid(format!("{what}: script leaves bounds")));
                }
            }
        }
        if let Some(s) = &self.start {
            if !(s.x.is_finite() && s.y.is_finite() && s.heading.is_finite()) {
                return Err(WorldError::Invalid("start pose must be finite".into()));
            }
        }
        if let Some(e) = &self.exit {
            if !e.min.is_finite() || !e.max.is_finite() || e.width() < 0.0 || e.height() < 0.0 {
                return Err(WorldError::Invalid("exit must be a finite rectangle".into()));
            }
        }
        Ok(())
    }

    /// Calls `f` with every obstacle polygon at the current time, together
    /// with the translation that must be applied to its vertices.
    pub(crate) fn for_each_obstacle(&self, mut f: impl FnMut(&[Vec2], Vec2)) {
        for poly in &self.static_obstacles {
            f(poly, Vec2::default());
        }
        for m in &self.mobile_obstacles {
            f(&m.vertices, m.offset);
        }
    }

    /// Obstacle polygons at the current time, with mobile ones translated.
    pub fn obstacle_polygons(&self) -> Vec<Vec<Vec2>> {
        let mut out = self.static_obstacles.clone();
        out.extend(self.mobile_obstacles.iter().map(MobileObstacle::current_vertices));
        out
    }
}

/// Closed contact rule: touching counts.
pub fn collides(world: &WorldSpec, pose: &Pose, body_radius: f64) -> bool {
    let p = pose.position();
    let b = &world.bounds;
    if p.x - body_radius <= b.min.x
        || p.x + body_radius >= b.max.x
        || p.y - body_radius <= b.min.y
        || p.y + body_radius >= b.max.y
    {
        return true;
    }
    let mut hit = false;
    world.for_each_obstacle(|poly, offset| {
        if !hit && geometry::point_polygon_distance(p - offset, poly) <= body_radius {
            hit = true;
        }
    });
    hit
}

/// Moves every scripted obstacle forward by `sim_time` seconds.
pub fn advance_obstacles(world: &WorldSpec, sim_time: f64) -> WorldSpec {
    debug_assert!(sim_time >= 0.0);
    if world.mobile_obstacles.is_empty() || sim_time == 0.0 {
        let mut w = world.clone();
        w.elapsed += sim_time;
        return w;
    }
    let mut w = world.clone();
    w.elapsed += sim_time;
    for m in &mut w.mobile_obstacles {
        m.offset = m.offset_at(w.elapsed);
    }
    w
}
