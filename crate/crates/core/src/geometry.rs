//! Planar primitives shared by the world model and the range sensors.
//!
//! Units are centimetres throughout. Angles are radians, counterclockwise
//! from the +x axis.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2 { x: v[0], y: v[1] }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Axis-aligned rectangle, used for the arena bounds and exit regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub const fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect {
            min: Vec2::new(min_x, min_y),
            max: Vec2::new(max_x, max_y),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    /// Closed containment.
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }

    pub fn to_polygon(&self) -> Vec<Vec2> {
        self.corners().to_vec()
    }
}

/// Signed shoelace area; positive for counterclockwise winding.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum::<f64>() * 0.5
}

pub fn centroid(poly: &[Vec2]) -> Vec2 {
    let n = poly.len();
    let a = signed_area(poly);
    if a.abs() < EPS {
        let sum = poly.iter().fold(Vec2::default(), |acc, &p| acc + p);
        return sum * (1.0 / n as f64);
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let c = p.cross(q);
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    Vec2::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// True when every turn has the same orientation (collinear vertices allowed).
pub fn is_convex(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0.0f64;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        let z = (b - a).cross(c - b);
        if z.abs() <= EPS {
            continue;
        }
        if sign == 0.0 {
            sign = z.signum();
        } else if z.signum() != sign {
            return false;
        }
    }
    sign != 0.0
}

pub fn translate(poly: &[Vec2], offset: Vec2) -> Vec<Vec2> {
    poly.iter().map(|&p| p + offset).collect()
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= EPS {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Crossing-number containment test; boundary points may land either way,
/// callers combine it with an edge-distance check.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Euclidean distance from `p` to the closed polygon region (0 inside).
pub fn point_polygon_distance(p: Vec2, poly: &[Vec2]) -> f64 {
    if point_in_polygon(p, poly) {
        return 0.0;
    }
    let n = poly.len();
    (0..n)
        .map(|i| point_segment_distance(p, poly[i], poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Parameter `t >= 0` at which the ray `origin + t * dir` meets segment `ab`.
/// `dir` must be a unit vector for `t` to be a distance.
pub fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    let w = a - origin;
    if denom.abs() <= EPS {
        // Parallel. Collinear overlap counts as a hit at the nearest endpoint
        // in front of the origin.
        if w.cross(dir).abs() > EPS {
            return None;
        }
        let ta = w.dot(dir);
        let tb = (b - origin).dot(dir);
        let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
        if hi < 0.0 {
            return None;
        }
        return Some(lo.max(0.0));
    }
    let t = w.cross(e) / denom;
    let u = w.cross(dir) / denom;
    if t >= -EPS && (-EPS..=1.0 + EPS).contains(&u) {
        Some(t.max(0.0))
    } else {
        None
    }
}

/// Nearest hit of a ray against a closed polygon; 0 when the origin is inside.
pub fn ray_polygon(origin: Vec2, dir: Vec2, poly: &[Vec2]) -> Option<f64> {
    if point_in_polygon(origin, poly) {
        return Some(0.0);
    }
    let n = poly.len();
    (0..n)
        .filter_map(|i| ray_segment(origin, dir, poly[i], poly[(i + 1) % n]))
        .min_by(f64::total_cmp)
}

/// Distance along a ray from a point inside `r` to the rectangle boundary.
pub fn ray_exit_rect(origin: Vec2, dir: Vec2, r: &Rect) -> f64 {
    let mut t = f64::INFINITY;
    if dir.x > EPS {
        t = t.min((r.max.x - origin.x) / dir.x);
    } else if dir.x < -EPS {
        t = t.min((r.min.x - origin.x) / dir.x);
    }
    if dir.y > EPS {
        t = t.min((r.max.y - origin.y) / dir.y);
    } else if dir.y < -EPS {
        t = t.min((r.min.y - origin.y) / dir.y);
    }
    t.max(0.0)
}
