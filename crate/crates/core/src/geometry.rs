//! Planar geometry primitives shared by the detectors and the tracker.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// A 2D point. Depending on context the unit is image pixels or meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z component of the 3D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Point2 {
        let n = self.norm();
        Point2::new(self.x / n, self.y / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotate counter-clockwise by `angle` radians (in a y-up frame).
    pub fn rotated(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

/// Mean of a non-empty point set.
pub fn centroid(points: &[Point2]) -> Point2 {
    let n = points.len() as f64;
    let s = points.iter().fold(Point2::default(), |acc, p| acc + *p);
    Point2::new(s.x / n, s.y / n)
}

/// A directed line segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub p0: Point2,
    pub p1: Point2,
}

impl LineSegment {
    pub fn new(p0: Point2, p1: Point2) -> Self {
        Self { p0, p1 }
    }

    pub fn direction(&self) -> Point2 {
        (self.p1 - self.p0).normalized()
    }

    pub fn length(&self) -> f64 {
        self.p0.distance(self.p1)
    }

    pub fn midpoint(&self) -> Point2 {
        (self.p0 + self.p1) * 0.5
    }

    /// Unsigned distance from `p` to the infinite line through the segment.
    pub fn line_distance(&self, p: Point2) -> f64 {
        let d = self.p1 - self.p0;
        (d.cross(p - self.p0)).abs() / d.norm()
    }

    /// Distance from `p` to the closed segment.
    pub fn segment_distance(&self, p: Point2) -> f64 {
        let d = self.p1 - self.p0;
        let len2 = d.dot(d);
        if len2 == 0.0 {
            return p.distance(self.p0);
        }
        let t = ((p - self.p0).dot(d) / len2).clamp(0.0, 1.0);
        p.distance(self.p0 + d * t)
    }

    /// Intersection of the two infinite lines, `None` when parallel.
    pub fn intersect_lines(&self, other: &LineSegment) -> Option<Point2> {
        let d1 = self.p1 - self.p0;
        let d2 = other.p1 - other.p0;
        let denom = d1.cross(d2);
        if denom.abs() < 1e-12 * d1.norm() * d2.norm() {
            return None;
        }
        let t = (other.p0 - self.p0).cross(d2) / denom;
        Some(self.p0 + d1 * t)
    }
}

/// Planar pose. Position in meters, heading in degrees in `[-180, 180)`,
/// counter-clockwise from world +x.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_deg(theta),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Rigid composition `self ∘ other` (apply `other` in the frame of `self`).
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let p = other.position().rotated(self.theta.to_radians()) + self.position();
        Pose2D::new(p.x, p.y, self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2D {
        let p = (self.position() * -1.0).rotated(-self.theta.to_radians());
        Pose2D::new(p.x, p.y, -self.theta)
    }
}

/// Wrap an angle in degrees to `[-180, 180)`.
pub fn normalize_deg(a: f64) -> f64 {
    let r = (a + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Signed smallest difference `a - b` in degrees, in `[-180, 180)`.
pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    normalize_deg(a - b)
}

/// Shoelace signed area. Positive for clockwise order on screen (y down).
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    0.5 * a
}

pub fn is_convex(poly: &[Point2]) -> bool {
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
        if z.abs() < 1e-12 {
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

/// Point-in-polygon by ray casting; points on the boundary may go either way.
pub fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Twice the area of the triangle `abc`, signed.
pub fn triangle_area2(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}
