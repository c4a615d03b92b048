use super::squares::SquareDetection;
use crate::geometry::{centroid, signed_area, Point2};

/// An affine square lattice in the top-down view: cell `(i, j)` has its
/// first corner at `origin + i·a + j·b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub origin: Point2,
    pub a: Point2,
    pub b: Point2,
}

impl Lattice {
    /// Basis from one square: `a` runs along the top/bottom edges and `b`
    /// along the left/right edges, origin at the first corner.
    pub fn from_square(sq: &SquareDetection) -> Self {
        let c = sq.corners;
        let a = ((c[3] - c[0]) + (c[2] - c[1])) * 0.5;
        let b = ((c[1] - c[0]) + (c[2] - c[3])) * 0.5;
        Self { origin: c[0], a, b }
    }

    pub fn point(&self, i: f64, j: f64) -> Point2 {
        self.origin + self.a * i + self.b * j
    }

    /// Fractional lattice coordinates of a pixel.
    pub fn coords(&self, p: Point2) -> Option<(f64, f64)> {
        let det = self.a.cross(self.b);
        if det.abs() < 1e-9 {
            return None;
        }
        let d = p - self.origin;
        Some((d.cross(self.b) / det, self.a.cross(d) / det))
    }

    pub fn cell_corners(&self, i: i64, j: i64) -> [Point2; 4] {
        let (i, j) = (i as f64, j as f64);
        [
            self.point(i, j),
            self.point(i, j + 1.0),
            self.point(i + 1.0, j + 1.0),
            self.point(i + 1.0, j),
        ]
    }

    /// Least-squares lattice through every corner of `squares`, seeded by the
    /// first square to assign integer indices. Falls back to the first
    /// square's own edge vectors when the fit is degenerate.
    pub fn fit(squares: &[SquareDetection]) -> Option<Self> {
        let seed = Self::from_square(squares.first()?);
        let mut rows: Vec<(f64, f64, Point2)> = Vec::new();
        for sq in squares {
            for p in sq.corners {
                let (u, v) = seed.coords(p)?;
                let (i, j) = (u.round(), v.round());
                if (u - i).abs() > 0.3 || (v - j).abs() > 0.3 {
                    continue;
                }
                rows.push((i, j, p));
            }
        }
        // normal equations for x = ox + i·ax + j·bx (same for y)
        let mut m = nalgebra::Matrix3::<f64>::zeros();
        let mut rx = nalgebra::Vector3::<f64>::zeros();
        let mut ry = nalgebra::Vector3::<f64>::zeros();
        for (i, j, p) in &rows {
            let f = nalgebra::Vector3::new(1.0, *i, *j);
            m += f * f.transpose();
            rx += f * p.x;
            ry += f * p.y;
        }
        let lu = m.lu();
        match (lu.solve(&rx), lu.solve(&ry)) {
            (Some(sx), Some(sy)) if seed.a.cross(seed.b).abs() > 1e-9 => {
                let fit = Self {
                    origin: Point2::new(sx[0], sy[0]),
                    a: Point2::new(sx[1], sy[1]),
                    b: Point2::new(sx[2], sy[2]),
                };
                if fit.a.cross(fit.b).abs() > 1e-6 * seed.a.cross(seed.b).abs() {
                    Some(fit)
                } else {
                    Some(seed)
                }
            }
            _ => Some(seed),
        }
    }
}

fn clip_area(poly: &[Point2], width: f64, height: f64) -> f64 {
    // Sutherland-Hodgman against the four half-planes of the bounds
    let mut out: Vec<Point2> = poly.to_vec();
    let planes: [(Point2, f64); 4] = [
        (Point2::new(1.0, 0.0), 0.0),
        (Point2::new(-1.0, 0.0), -width),
        (Point2::new(0.0, 1.0), 0.0),
        (Point2::new(0.0, -1.0), -height),
    ];
    for (n, c) in planes {
        let input = std::mem::take(&mut out);
        if input.is_empty() {
            break;
        }
        let inside = |p: Point2| p.dot(n) >= c;
        for k in 0..input.len() {
            let (p, q) = (input[k], input[(k + 1) % input.len()]);
            let (ip, iq) = (inside(p), inside(q));
            if ip {
                out.push(p);
            }
            if ip != iq {
                let t = (c - p.dot(n)) / (q - p).dot(n);
                out.push(p + (q - p) * t);
            }
        }
    }
    if out.len() < 3 {
        0.0
    } else {
        signed_area(&out).abs()
    }
}

/// Detected squares plus a virtual square for every lattice cell that
/// overlaps (by at least one square pixel) the `width × height` frame and has no detected counterpart.
pub fn extend_virtual_squares(detected: &[SquareDetection], width: f64, height: f64) -> Vec<SquareDetection> {
    let mut out = detected.to_vec();
    let Some(lat) = Lattice::fit(detected) else {
        return out;
    };
    let pitch = lat.a.norm().min(lat.b.norm());
    if pitch < 1.0 {
        return out;
    }
    let frame = [
        Point2::new(0.0, 0.0),
        Point2::new(width, 0.0),
        Point2::new(width, height),
        Point2::new(0.0, height),
    ];
    let (mut lo_i, mut hi_i, mut lo_j, mut hi_j) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in frame {
        let Some((u, v)) = lat.coords(p) else {
            return out;
        };
        lo_i = lo_i.min(u);
        hi_i = hi_i.max(u);
        lo_j = lo_j.min(v);
        hi_j = hi_j.max(v);
    }
    for j in (lo_j.floor() as i64 - 1)..=(hi_j.ceil() as i64) {
        for i in (lo_i.floor() as i64 - 1)..=(hi_i.ceil() as i64) {
            let corners = lat.cell_corners(i, j);
            if clip_area(&corners, width, height) < 1.0 {
                continue;
            }
            let c = centroid(&corners);
            if detected.iter().any(|d| d.center.distance(c) < 0.25 * pitch) {
                continue;
            }
            out.push(SquareDetection::new(corners, true));
        }
    }
    out
}
