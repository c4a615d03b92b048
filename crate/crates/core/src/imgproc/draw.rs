use crate::geometry::{point_in_polygon, LineSegment, Point2};
use crate::image::BinaryImage;

/// Set every pixel whose center lies within `thickness / 2` of the segment.
pub fn draw_thick_segment(bin: &mut BinaryImage, seg: &LineSegment, thickness: f64) {
    let r = thickness / 2.0;
    let (w, h) = (bin.width() as i64, bin.height() as i64);
    let x0 = ((seg.p0.x.min(seg.p1.x) - r).floor() as i64).max(0);
    let x1 = ((seg.p0.x.max(seg.p1.x) + r).ceil() as i64).min(w - 1);
    let y0 = ((seg.p0.y.min(seg.p1.y) - r).floor() as i64).max(0);
    let y1 = ((seg.p0.y.max(seg.p1.y) + r).ceil() as i64).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if seg.segment_distance(Point2::new(x as f64, y as f64)) <= r {
                bin.set(x as usize, y as usize, true);
            }
        }
    }
}

/// Set every pixel whose center is inside `poly`.
pub fn fill_polygon(bin: &mut BinaryImage, poly: &[Point2]) {
    if poly.len() < 3 {
        return;
    }
    let (w, h) = (bin.width() as i64, bin.height() as i64);
    let bx0 = poly.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let bx1 = poly.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let by0 = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let by1 = poly.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (bx0.floor() as i64).max(0);
    let x1 = (bx1.ceil() as i64).min(w - 1);
    let y0 = (by0.floor() as i64).max(0);
    let y1 = (by1.ceil() as i64).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if point_in_polygon(Point2::new(x as f64, y as f64), poly) {
                bin.set(x as usize, y as usize, true);
            }
        }
    }
}
