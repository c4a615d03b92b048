use crate::geometry::Point2;
use crate::image::BinaryImage;

/// Ordered outer boundary of one 8-connected foreground component, traced
/// clockwise on screen starting at its top-left pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<(i32, i32)>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_points(&self) -> Vec<Point2> {
        self.points
            .iter()
            .map(|&(x, y)| Point2::new(x as f64, y as f64))
            .collect()
    }

    /// Axis-aligned bounding box `(min_x, min_y, max_x, max_y)`.
    pub fn bbox(&self) -> (i32, i32, i32, i32) {
        self.points.iter().fold(
            (i32::MAX, i32::MAX, i32::MIN, i32::MIN),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }
}

// clockwise on screen: E, SE, S, SW, W, NW, N, NE
const DIRS: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_index(dx: i32, dy: i32) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("neighbors are 8-adjacent")
}

fn trace(bin: &BinaryImage, start: (i32, i32)) -> Vec<(i32, i32)> {
    let fg = |p: (i32, i32)| bin.get_or_false(p.0 as i64, p.1 as i64);
    // Scan clockwise around `c` starting just after the background neighbor
    // in direction `back`. Returns the found pixel and the background
    // neighbor examined just before it.
    let step = |c: (i32, i32), back: usize| -> Option<((i32, i32), (i32, i32))> {
        let mut prev = (c.0 + DIRS[back].0, c.1 + DIRS[back].1);
        for k in 1..=8 {
            let d = (back + k) % 8;
            let p = (c.0 + DIRS[d].0, c.1 + DIRS[d].1);
            if fg(p) {
                return Some((p, prev));
            }
            prev = p;
        }
        None
    };

    let mut out = vec![start];
    // the start pixel is first in raster order, so its west neighbor is background
    let Some((first, first_prev)) = step(start, 4) else {
        return out;
    };
    let mut cur = first;
    let mut back = dir_index(first_prev.0 - cur.0, first_prev.1 - cur.1);
    loop {
        let (next, prev) = step(cur, back).expect("component has at least two pixels");
        if cur == start && next == first {
            break;
        }
        out.push(cur);
        back = dir_index(prev.0 - next.0, prev.1 - next.1);
        cur = next;
    }
    out
}

/// Outer borders of all 8-connected foreground components, in raster order
/// of their top-left pixels. Hole borders are not reported.
pub fn find_contours(bin: &BinaryImage) -> Vec<Contour> {
    let (w, h) = (bin.width(), bin.height());
    let mut labeled = vec![false; w * h];
    let mut contours = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bin.get(x, y) || labeled[i] {
                continue;
            }
            contours.push(Contour {
                points: trace(bin, (x as i32, y as i32)),
            });
            labeled[i] = true;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for &(dx, dy) in &DIRS {
                    let (nx, ny) = (cx as i64 + dx as i64, cy as i64 + dy as i64);
                    if !bin.get_or_false(nx, ny) {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !labeled[j] {
                        labeled[j] = true;
                        stack.push((nx as usize, ny as usize));
                    }
                }
            }
        }
    }
    contours
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn single_pixel() {
        let mut img = BinaryImage::new(5, 5);
        img.set(2, 3, true);
        let c = find_contours(&img);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].points, vec![(2, 3)]);
    }

    #[test]
    fn filled_square_visits_every_boundary_pixel_once() {
        let img = BinaryImage::from_fn(25, 25, |x, y| (5..15).contains(&x) && (5..15).contains(&y));
        let c = find_contours(&img);
        assert_eq!(c.len(), 1);
        let pts = &c[0].points;
        assert_eq!(pts.len(), 36);
        // brute-force boundary set: foreground pixels with a background 4-neighbor
        let oracle: HashSet<(i32, i32)> = (0..25i64)
            .flat_map(|y| (0..25i64).map(move |x| (x, y)))
            .filter(|&(x, y)| {
                img.get_or_false(x, y)
                    && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .any(|(dx, dy)| !img.get_or_false(x + dx, y + dy))
            })
            .map(|(x, y)| (x as i32, y as i32))
            .collect();
        let got: HashSet<(i32, i32)> = pts.iter().copied().collect();
        assert_eq!(got, oracle);
        for k in 0..pts.len() {
            let (a, b) = (pts[k], pts[(k + 1) % pts.len()]);
            assert!((a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1 && a != b);
        }
        assert_eq!(pts[0], (5, 5));
        assert_eq!(pts[1], (6, 5));
    }

    #[test]
    fn two_blobs_two_contours() {
        let img = BinaryImage::from_fn(30, 10, |x, y| (2..6).contains(&y) && !(5..=20).contains(&x));
        assert_eq!(find_contours(&img).len(), 2);
    }

    #[test]
    fn diagonal_connectivity_and_thin_shapes() {
        let mut img = BinaryImage::new(10, 10);
        for i in 0..6 {
            img.set(i + 1, i + 1, true);
        }
        let c = find_contours(&img);
        assert_eq!(c.len(), 1);
        // a one-pixel-wide diagonal is walked out and back
        assert_eq!(c[0].len(), 10);
        for k in 0..c[0].len() {
            assert_ne!(c[0].points[k], c[0].points[(k + 1) % c[0].len()]);
        }
    }

    #[test]
    fn hole_is_not_reported() {
        let img = BinaryImage::from_fn(20, 20, |x, y| {
            (3..17).contains(&x) && (3..17).contains(&y) && !((7..12).contains(&x) && (7..12).contains(&y))
        });
        let c = find_contours(&img);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 4 * 13);
    }
}
