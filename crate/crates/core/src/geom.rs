//! Planar geometry primitives shared across the simulator.
//!
//! The world is a local planar frame measured in meters; headings are
//! radians in `[0, 2π)` with 0 pointing along +x.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

/// A 2D point or vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector pointing along `angle` radians.
    pub fn from_angle(angle: f64) -> Self {
        Vec2::new(angle.cos(), angle.sin())
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Angle of this vector in `[0, 2π)`; zero vector maps to 0.
    pub fn angle(self) -> f64 {
        wrap_angle(self.y.atan2(self.x))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp_point(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
            || !self.min.is_finite()
            || !self.max.is_finite()
    }

    /// Maps a point into `[-1, 1]²` relative to this box.
    pub fn normalize(&self, p: Vec2) -> Vec2 {
        let c = self.center();
        Vec2::new(
            2.0 * (p.x - c.x) / self.width(),
            2.0 * (p.y - c.y) / self.height(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Circle { center, radius }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.dist(self.center) <= self.radius
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % TAU;
    if r < 0.0 {
        r += TAU;
    }
    if r >= TAU {
        r = 0.0;
    }
    r
}

/// Shortest signed rotation taking `current` to `target`, in `(-π, π]`.
pub fn signed_angle_diff(target: f64, current: f64) -> f64 {
    let mut d = (target - current) % TAU;
    if d > PI {
        d -= TAU;
    } else if d <= -PI {
        d += TAU;
    }
    d
}

/// World-frame bearing from `from` to `to`, in `[0, 2π)`.
pub fn bearing(from: Vec2, to: Vec2) -> f64 {
    (to - from).angle()
}

/// Whether the closed segment `a..b` comes within `circle.radius` of its center.
pub fn segment_intersects_circle(a: Vec2, b: Vec2, circle: &Circle) -> bool {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let closest = if len_sq == 0.0 {
        a
    } else {
        let t = ((circle.center - a).dot(ab) / len_sq).clamp(0.0, 1.0);
        a + ab * t
    };
    closest.dist(circle.center) <= circle.radius
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_ranges() {
        assert!((wrap_angle(-PI / 2.0) - 1.5 * PI).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(3.0 * TAU + 0.25) - 0.25).abs() < 1e-12);
        assert_eq!(wrap_angle(TAU), 0.0);
    }

    #[test]
    fn signed_diff_shortest_turn() {
        assert!((signed_angle_diff(0.1, 0.0) - 0.1).abs() < 1e-12);
        assert!((signed_angle_diff(0.0, 0.1) + 0.1).abs() < 1e-12);
        // Opposite directions resolve to +π.
        assert!((signed_angle_diff(PI, 0.0) - PI).abs() < 1e-12);
        assert!((signed_angle_diff(TAU - 0.1, 0.0) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn segment_circle_hits() {
        let c = Circle::new(Vec2::new(0.0, 1.0), 0.5);
        assert!(segment_intersects_circle(
            Vec2::new(-2.0, 0.8),
            Vec2::new(2.0, 0.8),
            &c
        ));
        assert!(!segment_intersects_circle(
            Vec2::new(-2.0, 0.0),
            Vec2::new(2.0, 0.0),
            &c
        ));
        // Degenerate segment is a point test.
        assert!(segment_intersects_circle(
            Vec2::new(0.0, 1.2),
            Vec2::new(0.0, 1.2),
            &c
        ));
    }

    #[test]
    fn rect_normalize_maps_corners() {
        let r = Rect::new(Vec2::new(-10.0, 0.0), Vec2::new(10.0, 40.0));
        let lo = r.normalize(r.min);
        let hi = r.normalize(r.max);
        assert!((lo.x + 1.0).abs() < 1e-12 && (lo.y + 1.0).abs() < 1e-12);
        assert!((hi.x - 1.0).abs() < 1e-12 && (hi.y - 1.0).abs() < 1e-12);
    }
}
