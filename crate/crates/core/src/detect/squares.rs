use serde::{Deserialize, Serialize};

use super::crosshair::CrosshairDetection;
use super::tags::{refine_quad, TagDetection};
use crate::geometry::{centroid, is_convex, signed_area, LineSegment, Point2};
use crate::image::{BinaryImage, ImageBuffer};
use crate::imgproc::{
    approx_poly, canny, corner_subpix_masked, dilate, draw_thick_segment, fill_polygon, find_contours, hough_lines,
    open, HoughLine, HoughParams, StructuringElement, SubpixParams,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SquareParams {
    pub canny_low: f64,
    pub canny_high: f64,
    pub hough: HoughParams,
    /// Thickness used when re-rasterizing Hough segments (px).
    pub line_thickness: f64,
    pub open_size: usize,
    pub approx_epsilon: f64,
    pub min_side_ratio: f64,
    pub max_side_ratio: f64,
    pub min_area: f64,
    pub max_area: f64,
    /// Outward offset applied to each side of a found polygon (px).
    pub corner_offset: f64,
    pub subpix: SubpixParams,
    /// Largest allowed move of a corner during sub-pixel refinement (px).
    pub max_refine_shift: f64,
    /// Largest fraction of a corner's refinement window that may be
    /// covered by the crosshair mask.
    pub max_masked_fraction: f64,
    /// Thickness of the extended crosshair lines masked out before edge
    /// detection (px).
    pub crosshair_mask_thickness: f64,
    /// Growth of tag quads before masking (px).
    pub tag_margin: f64,
    /// Edges this close to pixels without image content are dropped (px).
    pub invalid_margin: usize,
    /// Board pitch on the canvas (px). Lines off the lattice by more than
    /// `lattice_tolerance` px or `lattice_angle_tolerance` degrees are
    /// discarded; 0 disables the filter.
    pub lattice_pitch: f64,
    pub lattice_tolerance: f64,
    pub lattice_angle_tolerance: f64,
    /// Half-width of the band of edge pixels each Hough line is refit to
    /// (px).
    pub refit_band: f64,
    /// Smallest fraction of a refit line's length backed by edge pixels.
    pub min_line_support: f64,
}

impl Default for SquareParams {
    fn default() -> Self {
        Self {
            canny_low: 50.0,
            canny_high: 150.0,
            hough: HoughParams::default(),
            line_thickness: 25.0,
            open_size: 3,
            approx_epsilon: 8.0,
            min_side_ratio: 0.95,
            max_side_ratio: 1.05,
            min_area: 50_000.0,
            max_area: 110_000.0,
            corner_offset: 13.0,
            subpix: SubpixParams {
                half_window: 7,
                ..SubpixParams::default()
            },
            max_refine_shift: 6.0,
            max_masked_fraction: 0.1,
            crosshair_mask_thickness: 9.0,
            tag_margin: 8.0,
            invalid_margin: 4,
            lattice_pitch: 300.0,
            lattice_tolerance: 30.0,
            lattice_angle_tolerance: 3.0,
            refit_band: 3.0,
            min_line_support: 0.6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareDetection {
    /// Counter-clockwise on screen starting at the corner nearest the image
    /// top-left: top-left, bottom-left, bottom-right, top-right for an
    /// axis-aligned square.
    pub corners: [Point2; 4],
    pub center: Point2,
    #[serde(rename = "virtual")]
    pub is_virtual: bool,
}

impl SquareDetection {
    pub fn new(corners: [Point2; 4], is_virtual: bool) -> Self {
        let corners = order_corners(corners);
        let center = LineSegment::new(corners[0], corners[2])
            .intersect_lines(&LineSegment::new(corners[1], corners[3]))
            .unwrap_or_else(|| centroid(&corners));
        Self {
            corners,
            center,
            is_virtual,
        }
    }

    pub fn side_lengths(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|k| self.corners[k].distance(self.corners[(k + 1) % 4]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.corners).abs()
    }

    /// Checks the filter invariants: convexity, side ratio and area band.
    pub fn satisfies(&self, p: &SquareParams) -> bool {
        let s = self.side_lengths();
        let (lo, hi) = s.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        let ratio_ok = lo > 0.0 && s.iter().all(|v| {
            s.iter().all(|u| {
                let r = v / u;
                r >= p.min_side_ratio && r <= p.max_side_ratio
            })
        });
        let _ = hi;
        is_convex(&self.corners) && ratio_ok && (p.min_area..=p.max_area).contains(&self.area())
    }
}

/// Put four corners in counter-clockwise screen order starting from the one
/// with the smallest `x + y`.
pub fn order_corners(mut c: [Point2; 4]) -> [Point2; 4] {
    // signed_area > 0 means clockwise on screen
    let mid = centroid(&c);
    c.sort_by(|a, b| {
        let ta = (-(a.y - mid.y)).atan2(a.x - mid.x);
        let tb = (-(b.y - mid.y)).atan2(b.x - mid.x);
        ta.total_cmp(&tb)
    });
    if signed_area(&c) > 0.0 {
        c.reverse();
    }
    let start = (0..4)
        .min_by(|&a, &b| (c[a].x + c[a].y).total_cmp(&(c[b].x + c[b].y)))
        .unwrap_or(0);
    c.rotate_left(start);
    c
}

/// Both crosshair lines extended to the frame border, drawn `thickness` px
/// wide.
pub fn crosshair_line_mask(width: usize, height: usize, ch: &CrosshairDetection, thickness: f64) -> BinaryImage {
    let mut m = BinaryImage::new(width, height);
    let reach = (width as f64).hypot(height as f64) * 2.0;
    for dir in [ch.vertical_dir(), ch.horizontal_dir()] {
        let seg = LineSegment::new(ch.center - dir * reach, ch.center + dir * reach);
        draw_thick_segment(&mut m, &seg, thickness);
    }
    m
}

fn grow_quad(q: &[Point2; 4], margin: f64) -> [Point2; 4] {
    let c = centroid(q);
    q.map(|p| {
        let d = p - c;
        let n = d.norm();
        if n == 0.0 {
            p
        } else {
            p + d * (margin * std::f64::consts::SQRT_2 / n)
        }
    })
}

/// Move every vertex of a convex quad outward so each side shifts by
/// `offset` along its normal.
fn offset_quad(q: &[Point2; 4], offset: f64) -> Option<[Point2; 4]> {
    let c = centroid(q);
    let mut lines = Vec::with_capacity(4);
    for k in 0..4 {
        let (a, b) = (q[k], q[(k + 1) % 4]);
        let d = (b - a).normalized();
        let mut n = Point2::new(-d.y, d.x);
        if n.dot(a - c) < 0.0 {
            n = n * -1.0;
        }
        lines.push(LineSegment::new(a + n * offset, b + n * offset));
    }
    let mut out = [Point2::new(0.0, 0.0); 4];
    for k in 0..4 {
        out[k] = lines[(k + 3) % 4].intersect_lines(&lines[k])?;
    }
    Some(out)
}

/// Drop weaker lines whose whole segment lies within `band` px of a stronger
/// line of similar angle; drawn thick they would only widen that line.
fn distinct_lines(lines: &[LineSegment], band: f64, max_theta: f64) -> Vec<LineSegment> {
    let mut kept: Vec<LineSegment> = Vec::new();
    for l in lines {
        let shadowed = kept.iter().any(|k| {
            let dt = k.direction().cross(l.direction()).abs().asin();
            dt <= max_theta && k.line_distance(l.p0) <= band && k.line_distance(l.p1) <= band
        });
        if !shadowed {
            kept.push(*l);
        }
    }
    kept
}

/// Vote-weighted circular mean of `values` with period `period`.
fn circular_mean(items: impl Iterator<Item = (f64, f64)>, period: f64) -> f64 {
    let k = std::f64::consts::TAU / period;
    let (s, c) = items.fold((0.0, 0.0), |(s, c), (v, w)| (s + w * (k * v).sin(), c + w * (k * v).cos()));
    s.atan2(c) / k
}

fn wrap(v: f64, period: f64) -> f64 {
    v - period * (v / period).round()
}

/// Lines that belong to the two perpendicular families of a board with the
/// given pitch. Tag borders and other clutter lie between lattice lines.
fn lattice_lines<'a>(lines: &[&'a HoughLine], pitch: f64, tolerance: f64, angle_tolerance_deg: f64) -> Vec<&'a HoughLine> {
    use std::f64::consts::FRAC_PI_2;
    if lines.is_empty() || pitch <= 0.0 {
        return lines.to_vec();
    }
    let w = |l: &HoughLine| l.votes as f64;
    let base = circular_mean(lines.iter().map(|l| (l.theta, w(l))), FRAC_PI_2);
    let tol = angle_tolerance_deg.to_radians();
    let mut out: Vec<&HoughLine> = Vec::new();
    for family in [base, base + FRAC_PI_2] {
        let n = Point2::new(family.cos(), family.sin());
        let members: Vec<(&HoughLine, f64)> = lines
            .iter()
            .filter(|l| wrap(l.theta - family, std::f64::consts::PI).abs() <= tol)
            .map(|l| (*l, l.segment.midpoint().dot(n)))
            .collect();
        let inliers = |phase: f64| members.iter().filter(move |(_, o)| wrap(o - phase, pitch).abs() <= tolerance);
        let first = circular_mean(members.iter().map(|(l, o)| (*o, w(l))), pitch);
        // second pass on the inliers of the first
        let phase = if inliers(first).next().is_some() {
            circular_mean(inliers(first).map(|(l, o)| (*o, w(l))), pitch)
        } else {
            first
        };
        out.extend(inliers(phase).map(|(l, _)| *l));
    }
    out.sort_by_key(|l| std::cmp::Reverse(l.votes));
    out
}

/// Edge pixels within `band` px of the line through `seg`, sampled along the
/// segment.
fn edge_pixels_near(edges: &BinaryImage, seg: &LineSegment, band: f64) -> Vec<Point2> {
    let len = seg.length();
    let u = seg.direction();
    let n = Point2::new(-u.y, u.x);
    let mut pts: Vec<(i64, i64)> = Vec::new();
    let steps = (2.0 * len).ceil() as i64;
    let across = band.ceil() as i64;
    for k in 0..=steps {
        let p = seg.p0 + u * (k as f64 * 0.5);
        for o in -across..=across {
            let q = p + n * o as f64;
            let (x, y) = (q.x.round() as i64, q.y.round() as i64);
            if edges.get_or_false(x, y) {
                pts.push((x, y));
            }
        }
    }
    pts.sort_unstable();
    pts.dedup();
    pts.into_iter()
        .map(|(x, y)| Point2::new(x as f64, y as f64))
        .filter(|q| seg.line_distance(*q) <= band)
        .collect()
}

/// Total least squares refit of `seg` to the edge pixels within `band` px of
/// it, repeated with a narrower band around the first fit. Also returns the
/// fraction of the segment length backed by edge pixels within 1 px of the
/// fitted line.
fn refit_segment(edges: &BinaryImage, seg: &LineSegment, band: f64) -> (LineSegment, f64) {
    let mut cur = *seg;
    for b in [band, 0.5 * band] {
        let u = cur.direction();
        let pts = edge_pixels_near(edges, &cur, b);
        if pts.len() < 20 {
            return (cur, 0.0);
        }
        let c = centroid(&pts);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for q in &pts {
            let d = *q - c;
            sxx += d.x * d.x;
            sxy += d.x * d.y;
            syy += d.y * d.y;
        }
        let a = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let mut dir = Point2::new(a.cos(), a.sin());
        if dir.dot(u) < 0.0 {
            dir = dir * -1.0;
        }
        let project = |p: Point2| c + dir * (p - c).dot(dir);
        cur = LineSegment::new(project(cur.p0), project(cur.p1));
    }
    // distinct positions along the line, so a slanted edge counts once per step
    let u = cur.direction();
    let mut along: Vec<i64> = edge_pixels_near(edges, &cur, 1.0)
        .iter()
        .map(|q| (*q - cur.p0).dot(u).round() as i64)
        .collect();
    along.sort_unstable();
    along.dedup();
    let support = along.len() as f64 / (cur.length() + 1.0);
    (cur, support)
}

/// Chessboard squares in a top-down gray frame. `valid` marks pixels that
/// carry image content (the rest of the canvas is black fill).
pub fn detect_squares(
    gray: &ImageBuffer,
    crosshair: Option<&CrosshairDetection>,
    tags: &[TagDetection],
    valid: Option<&BinaryImage>,
    params: &SquareParams,
) -> Vec<SquareDetection> {
    assert_eq!(gray.channels(), 1, "detect_squares expects a gray frame");
    let (w, h) = (gray.width(), gray.height());
    let Ok(mut edges) = canny(gray, params.canny_low, params.canny_high) else {
        return Vec::new();
    };

    let ignore = crosshair
        .map(|c| crosshair_line_mask(w, h, c, params.crosshair_mask_thickness))
        .unwrap_or_else(|| BinaryImage::new(w, h));
    edges.clear_where(&ignore);
    let mut tag_mask = BinaryImage::new(w, h);
    for t in tags {
        fill_polygon(&mut tag_mask, &grow_quad(&t.corners, params.tag_margin));
    }
    edges.clear_where(&tag_mask);
    let invalid = valid.map(|v| v.complement());
    if let Some(inv) = &invalid {
        let r = 2 * params.invalid_margin + 1;
        if let Ok(se) = StructuringElement::square(r) {
            edges.clear_where(&dilate(inv, &se));
        }
    }

    let lines = hough_lines(&edges, &params.hough);
    let mut raster = BinaryImage::new(w, h);
    let all: Vec<&HoughLine> = lines.iter().collect();
    let on_lattice = lattice_lines(&all, params.lattice_pitch, params.lattice_tolerance, params.lattice_angle_tolerance);
    let fitted: Vec<LineSegment> = on_lattice
        .iter()
        .map(|l| refit_segment(&edges, &l.segment, params.refit_band))
        .filter(|(_, support)| *support >= params.min_line_support)
        .map(|(seg, _)| seg)
        .collect();
    for seg in distinct_lines(&fitted, params.line_thickness / 2.0, params.hough.merge_theta) {
        draw_thick_segment(&mut raster, &seg, params.line_thickness);
    }
    let Ok(se) = StructuringElement::square(params.open_size) else {
        return Vec::new();
    };
    let mut raster = open(&raster, &se);
    if let Some(inv) = &invalid {
        for (i, b) in inv.bits().iter().enumerate() {
            if *b {
                raster.set(i % w, i / w, true);
            }
        }
    }
    let cells = raster.complement();


    let half = params.subpix.half_window as f64 + 2.0;
    let usable = |p: Point2| {
        p.x >= half
            && p.y >= half
            && p.x <= w as f64 - 1.0 - half
            && p.y <= h as f64 - 1.0 - half
            && valid.is_none_or(|v| {
                let r = half as i64;
                (-r..=r).all(|dy| (-r..=r).all(|dx| v.get_or_false(p.x.round() as i64 + dx, p.y.round() as i64 + dy)))
            })
    };

    // the refinement window plus the reach of its gradient smoothing
    let reach = params.subpix.half_window as i64 + 3;
    let mut out = Vec::new();
    for contour in find_contours(&cells) {
        if contour.len() < 40 {
            continue;
        }
        let points = contour.to_points();
        let poly = approx_poly(&points, params.approx_epsilon);
        if poly.len() != 4 {
            continue;
        }
        // the contour start is always a polygon vertex, so refit the sides
        let quad = refine_quad(&points, &poly).unwrap_or([poly[0], poly[1], poly[2], poly[3]]);
        let raw = SquareDetection::new(quad, false);
        if !raw.satisfies(params) {
            continue;
        }
        let Some(grown) = offset_quad(&raw.corners, params.corner_offset) else {
            continue;
        };
        if !grown.iter().all(|p| usable(*p)) {
            continue;
        }
        // corners under the crosshair cannot be refined reliably; they are
        // completed from the refined ones (the top-down view is metric)
        let masked = grown.map(|p| masked_fraction(&ignore, p, reach) > params.max_masked_fraction);
        let refined = corner_subpix_masked(gray, &grown, &params.subpix, Some(&ignore));
        if (0..4).any(|k| !masked[k] && (!refined[k].refined || refined[k].point.distance(grown[k]) > params.max_refine_shift)) {
            continue;
        }
        let Some(corners) = complete_masked([0, 1, 2, 3].map(|k| refined[k].point), &grown, masked) else {
            continue;
        };
        let sq = SquareDetection::new(corners, false);
        if sq.satisfies(params) {
            out.push(sq);
        }
    }
    out
}

/// Fill in masked corners: one as the parallelogram of the other three, two
/// adjacent ones as the square over the opposite side, offset towards the
/// unrefined estimates.
fn complete_masked(mut c: [Point2; 4], approx: &[Point2; 4], masked: [bool; 4]) -> Option<[Point2; 4]> {
    match masked.iter().filter(|m| **m).count() {
        0 => {}
        1 => {
            let k = masked.iter().position(|m| *m)?;
            c[k] = c[(k + 1) % 4] + c[(k + 3) % 4] - c[(k + 2) % 4];
        }
        2 => {
            let k = (0..4).find(|&k| masked[k] && masked[(k + 1) % 4])?;
            let (a, b) = ((k + 3) % 4, (k + 2) % 4);
            let side = c[b] - c[a];
            let mut n = Point2::new(-side.y, side.x);
            if n.dot(approx[k] - c[a]) < 0.0 {
                n = n * -1.0;
            }
            c[k] = c[a] + n;
            c[(k + 1) % 4] = c[b] + n;
        }
        _ => return None,
    }
    Some(c)
}

fn masked_fraction(mask: &BinaryImage, p: Point2, r: i64) -> f64 {
    let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
    let n = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| mask.get_or_false(cx + dx, cy + dy))
        .count();
    n as f64 / ((2 * r + 1) * (2 * r + 1)) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_corners_are_completed_from_the_rest() {
        let a = 0.3f64;
        let (ex, ey) = (Point2::new(a.cos(), -a.sin()), Point2::new(a.sin(), a.cos()));
        let o = Point2::new(40.0, 60.0);
        let truth = [o, o + ex * 300.0, o + ex * 300.0 + ey * 300.0, o + ey * 300.0];
        let approx = truth.map(|p| p + Point2::new(1.5, -2.0));
        for k in 0..4 {
            let mut one = [false; 4];
            one[k] = true;
            let mut two = one;
            two[(k + 1) % 4] = true;
            let mut broken = truth;
            broken[k] = Point2::new(0.0, 0.0);
            let c = complete_masked(broken, &approx, one).unwrap();
            assert!(c.iter().zip(&truth).all(|(p, t)| p.distance(*t) < 1e-9));
            broken[(k + 1) % 4] = Point2::new(0.0, 0.0);
            let c = complete_masked(broken, &approx, two).unwrap();
            assert!(c.iter().zip(&truth).all(|(p, t)| p.distance(*t) < 1e-9), "{k}: {c:?}");
        }
        assert!(complete_masked(truth, &approx, [true, false, true, false]).is_none());
        assert!(complete_masked(truth, &approx, [true, true, true, false]).is_none());
    }

    #[test]
    fn corner_order_is_counter_clockwise_from_top_left() {
        let c = [
            Point2::new(10.0, 0.0),
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 10.0),
            Point2::new(0.0, 10.0),
        ];
        let o = order_corners(c);
        assert_eq!(o[0], Point2::new(0.0, 0.0));
        assert_eq!(o[1], Point2::new(0.0, 10.0));
        assert_eq!(o[2], Point2::new(10.0, 10.0));
        assert_eq!(o[3], Point2::new(10.0, 0.0));
        assert!(signed_area(&o) < 0.0);
    }

    #[test]
    fn offset_moves_each_side_outward() {
        let q = [
            Point2::new(10.0, 10.0),
            Point2::new(10.0, 20.0),
            Point2::new(20.0, 20.0),
            Point2::new(20.0, 10.0),
        ];
        let g = offset_quad(&q, 2.0).unwrap();
        assert!(g[0].distance(Point2::new(8.0, 8.0)) < 1e-12);
        assert!(g[2].distance(Point2::new(22.0, 22.0)) < 1e-12);
    }

    #[test]
    fn black_frame_has_no_squares() {
        let img = ImageBuffer::new(600, 500, 1);
        assert!(detect_squares(&img, None, &[], None, &SquareParams::default()).is_empty());
    }

    /// Axis-aligned chessboard with 300 px squares, the corner lattice
    /// offset by (ox, oy), and blue/white gray levels; 4×4 rooks sampling.
    fn board(w: usize, h: usize, ox: f64, oy: f64, angle: f64) -> ImageBuffer {
        let mut img = ImageBuffer::new(w, h, 1);
        let (s, c) = angle.sin_cos();
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f64;
                for j in 0..4 {
                    for i in 0..4 {
                        let px = x as f64 - 0.5 + ((4 * i + j) as f64 + 0.5) / 16.0 - ox;
                        let py = y as f64 - 0.5 + ((4 * j + i) as f64 + 0.5) / 16.0 - oy;
                        let u = c * px + s * py;
                        let v = -s * px + c * py;
                        let odd = ((u / 300.0).floor() as i64 + (v / 300.0).floor() as i64).rem_euclid(2) == 1;
                        acc += if odd { 67.0 } else { 250.0 };
                    }
                }
                img.data_mut()[y * w + x] = (acc / 16.0).round() as u8;
            }
        }
        img
    }

    #[test]
    fn fully_visible_squares_found_with_subpixel_corners() {
        let (ox, oy, angle) = (137.3, 91.6, 0.21f64);
        let img = board(1200, 960, ox, oy, angle);
        let found = detect_squares(&img, None, &[], None, &SquareParams::default());
        // oracle: lattice corner positions
        let (s, c) = angle.sin_cos();
        let lattice = |i: f64, j: f64| {
            let (u, v) = (300.0 * i, 300.0 * j);
            Point2::new(ox + c * u - s * v, oy + s * u + c * v)
        };
        let mut fully_visible = 0;
        for i in -3..5 {
            for j in -3..5 {
                let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)].map(|(a, b)| lattice(i as f64 + a, j as f64 + b));
                if corners.iter().all(|p| p.x > 20.0 && p.y > 20.0 && p.x < 1179.0 && p.y < 939.0) {
                    fully_visible += 1;
                    let center = centroid(&corners);
                    let det = found.iter().find(|d| d.center.distance(center) < 20.0);
                    let det = det.unwrap_or_else(|| panic!("square {i},{j} missing"));
                    for p in det.corners {
                        let best = corners.iter().map(|q| q.distance(p)).fold(f64::MAX, f64::min);
                        assert!(best < 0.1, "corner error {best}");
                    }
                }
            }
        }
        assert!(fully_visible >= 4);
        // squares closer to the border may be found too; they must be exact
        for d in &found {
            assert!(d.satisfies(&SquareParams::default()));
            for p in d.corners {
                let best = (-4..6)
                    .flat_map(|i| (-4..6).map(move |j| (i, j)))
                    .map(|(i, j)| lattice(i as f64, j as f64).distance(p))
                    .fold(f64::MAX, f64::min);
                assert!(best < 0.1, "corner error {best}");
            }
        }
    }
}
