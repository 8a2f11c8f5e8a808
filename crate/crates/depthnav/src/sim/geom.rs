//! 2D geometry primitives: points, rectangles, obstacle shapes, and the
//! distance / ray-intersection queries the simulator is built on.

use serde::{Deserialize, Serialize};

/// 2D point or vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product; sign gives orientation.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

/// Axis-aligned rectangle, `min` strictly below `max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min.x < self.max.x && self.min.y < self.max.y
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    /// Corner points in counterclockwise order starting at `min`.
    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }
}

/// Static obstacle shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Segment { a: Vec2, b: Vec2 },
    Box { min: Vec2, max: Vec2 },
    Disc { center: Vec2, radius: f64 },
}

impl Shape {
    /// Euclidean distance from `p` to the shape; 0 inside solid shapes.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        match *self {
            Shape::Segment { a, b } => point_segment_distance(p, a, b),
            Shape::Box { min, max } => {
                let cx = p.x.clamp(min.x, max.x);
                let cy = p.y.clamp(min.y, max.y);
                p.sub(Vec2::new(cx, cy)).norm()
            }
            Shape::Disc { center, radius } => (p.sub(center).norm() - radius).max(0.0),
        }
    }

    /// Nearest intersection parameter `t >= 0` of the ray `origin + t*dir`
    /// with the shape boundary, if any. `dir` must be a unit vector so `t`
    /// is a distance in meters.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match *self {
            Shape::Segment { a, b } => ray_segment(origin, dir, a, b),
            Shape::Box { min, max } => ray_aabb(origin, dir, min, max),
            Shape::Disc { center, radius } => ray_disc(origin, dir, center, radius),
        }
    }
}

/// Distance from point `p` to segment `ab`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.sub(a).norm();
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.sub(a.add(ab.scale(t))).norm()
}

fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let ab = b.sub(a);
    let denom = dir.cross(ab);
    if denom.abs() < 1e-15 {
        // Parallel (or degenerate segment): collinear grazing hits are left
        // to the adjacent wall or shape.
        return None;
    }
    let ao = a.sub(origin);
    let t = ao.cross(ab) / denom;
    let s = ao.cross(dir) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&s) {
        Some(t)
    } else {
        None
    }
}

fn ray_aabb(origin: Vec2, dir: Vec2, min: Vec2, max: Vec2) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (o, d, lo, hi) in [
        (origin.x, dir.x, min.x, max.x),
        (origin.y, dir.y, min.y, max.y),
    ] {
        if d.abs() < 1e-15 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let t1 = (lo - o) / d;
            let t2 = (hi - o) / d;
            let (t1, t2) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            t_near = t_near.max(t1);
            t_far = t_far.min(t2);
            if t_near > t_far {
                return None;
            }
        }
    }
    if t_far < 0.0 {
        None
    } else if t_near >= 0.0 {
        Some(t_near)
    } else {
        // Origin inside the box: first boundary crossing ahead of the ray.
        Some(t_far)
    }
}

fn ray_disc(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin.sub(center);
    let b = oc.dot(dir);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t1 = -b - sq;
    let t2 = -b + sq;
    if t1 >= 0.0 {
        Some(t1)
    } else if t2 >= 0.0 {
        Some(t2)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_clamps_to_endpoints() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(1.0, 0.0);
        assert_eq!(point_segment_distance(Vec2::new(0.5, 2.0), a, b), 2.0);
        assert_eq!(point_segment_distance(Vec2::new(-3.0, 0.0), a, b), 3.0);
        assert_eq!(point_segment_distance(Vec2::new(2.0, 0.0), a, b), 1.0);
    }

    #[test]
    fn box_distance_zero_inside() {
        let s = Shape::Box {
            min: Vec2::new(-1.0, -1.0),
            max: Vec2::new(1.0, 1.0),
        };
        assert_eq!(s.distance_to(Vec2::new(0.2, -0.3)), 0.0);
        assert!((s.distance_to(Vec2::new(2.0, 0.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ray_hits_segment_perpendicular() {
        let t = ray_segment(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, -1.0),
            Vec2::new(2.0, 1.0),
        );
        assert!((t.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ray_misses_segment_behind() {
        let t = ray_segment(
            Vec2::new(0.0, 0.0),
            Vec2::new(-1.0, 0.0),
            Vec2::new(2.0, -1.0),
            Vec2::new(2.0, 1.0),
        );
        assert!(t.is_none());
    }

    #[test]
    fn ray_aabb_from_inside_exits_forward() {
        let t = ray_aabb(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(-1.0, -1.0),
            Vec2::new(3.0, 1.0),
        );
        assert!((t.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ray_disc_tangent_and_through() {
        let c = Vec2::new(3.0, 0.0);
        let hit = ray_disc(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), c, 1.0).unwrap();
        assert!((hit - 2.0).abs() < 1e-12);
        assert!(ray_disc(Vec2::new(0.0, 5.0), Vec2::new(1.0, 0.0), c, 1.0).is_none());
    }
}
