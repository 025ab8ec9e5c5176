//! Continuous 2D points and limb segments.
//!
//! Positions are in pixel units with pixel `(x, y)` centred on the integer
//! coordinate `(x, y)`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ZERO: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Rotation by +90 degrees: `(x, y) -> (-y, x)`.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// `(1 - u) * self + u * other`.
    pub fn lerp(self, other: Point, u: f64) -> Point {
        Point::new(
            (1.0 - u) * self.x + u * other.x,
            (1.0 - u) * self.y + u * other.y,
        )
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// An oriented limb between two keypoints with its unit direction and normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbSegment {
    pub start: Point,
    pub end: Point,
    pub direction: Point,
    pub normal: Point,
    pub length: f64,
}

impl LimbSegment {
    pub fn new(start: Point, end: Point) -> Result<Self> {
        let delta = end - start;
        let length = delta.norm();
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::DegenerateSegment {
                x: start.x,
                y: start.y,
            });
        }
        let direction = Point::new(delta.x / length, delta.y / length);
        Ok(LimbSegment {
            start,
            end,
            direction,
            normal: direction.perp(),
            length,
        })
    }

    /// Coordinates of `p` in the limb frame: (along the limb from `start`,
    /// signed distance across it).
    pub fn local(&self, p: Point) -> (f64, f64) {
        let d = p - self.start;
        (self.direction.dot(d), self.normal.dot(d))
    }

    /// Membership in the rectangular limb support of half-width `half_width`.
    pub fn contains(&self, p: Point, half_width: f64) -> bool {
        let (along, across) = self.local(p);
        (0.0..=self.length).contains(&along) && across.abs() <= half_width
    }
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// True when the closed segments `[a, b]` and `[c, d]` share a point.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    // Collinear or touching configurations.
    point_segment_distance(c, a, b) == 0.0
        || point_segment_distance(d, a, b) == 0.0
        || point_segment_distance(a, c, d) == 0.0
        || point_segment_distance(b, c, d) == 0.0
}

/// Minimum distance between the closed segments `[a, b]` and `[c, d]`.
pub fn segment_distance(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}
