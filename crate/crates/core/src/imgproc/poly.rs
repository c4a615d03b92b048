use crate::geometry::{LineSegment, Point2};

fn rdp(points: &[Point2], lo: usize, hi: usize, eps: f64, keep: &mut [bool]) {
    if hi <= lo + 1 {
        return;
    }
    let seg = LineSegment::new(points[lo], points[hi]);
    let (mut best, mut arg) = (-1.0, lo);
    for (i, p) in points.iter().enumerate().take(hi).skip(lo + 1) {
        let d = seg.segment_distance(*p);
        if d > best {
            best = d;
            arg = i;
        }
    }
    if best > eps {
        keep[arg] = true;
        rdp(points, lo, arg, eps, keep);
        rdp(points, arg, hi, eps, keep);
    }
}

/// Ramer–Douglas–Peucker simplification of a closed contour. The contour
/// is split at its two most distant points and each half is simplified
/// independently. The result is a subsequence of the input in input order.
pub fn approx_poly(contour: &[Point2], epsilon: f64) -> Vec<Point2> {
    let n = contour.len();
    if n <= 2 {
        return contour.to_vec();
    }
    let (mut a, mut b, mut best) = (0, 0, -1.0);
    for i in 0..n {
        for j in i + 1..n {
            let d = contour[i].distance(contour[j]);
            if d > best {
                best = d;
                a = i;
                b = j;
            }
        }
    }
    // rotate so the split points are at 0 and b - a, then close the loop
    let mut ring: Vec<Point2> = contour[a..].iter().chain(&contour[..a]).copied().collect();
    ring.push(ring[0]);
    let mid = b - a;
    let mut keep = vec![false; ring.len()];
    keep[0] = true;
    keep[mid] = true;
    rdp(&ring, 0, mid, epsilon, &mut keep);
    rdp(&ring, mid, n, epsilon, &mut keep);
    let mut idx: Vec<usize> = (0..n).filter(|i| keep[*i]).map(|i| (i + a) % n).collect();
    idx.sort_unstable();
    idx.into_iter().map(|i| contour[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::BinaryImage;
    use crate::imgproc::find_contours;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn polygon_distance(p: Point2, poly: &[Point2]) -> f64 {
        let n = poly.len();
        if n == 1 {
            return p.distance(poly[0]);
        }
        (0..n)
            .map(|i| LineSegment::new(poly[i], poly[(i + 1) % n]).segment_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    fn is_subsequence(sub: &[Point2], full: &[Point2]) -> bool {
        let mut it = full.iter();
        sub.iter().all(|s| it.any(|f| f == s))
    }

    #[test]
    fn square_contour_reduces_to_corners() {
        let img = BinaryImage::from_fn(40, 40, |x, y| (5..30).contains(&x) && (8..25).contains(&y));
        let c = find_contours(&img)[0].to_points();
        let poly = approx_poly(&c, 2.0);
        assert_eq!(poly.len(), 4);
        for corner in [(5.0, 8.0), (29.0, 8.0), (29.0, 24.0), (5.0, 24.0)] {
            assert!(poly.contains(&Point2::new(corner.0, corner.1)), "{poly:?}");
        }
    }

    #[test]
    fn circle_vertex_count_and_deviation() {
        let img = BinaryImage::from_fn(130, 130, |x, y| {
            let (dx, dy) = (x as f64 - 65.0, y as f64 - 65.0);
            dx * dx + dy * dy <= 50.0 * 50.0
        });
        let c = find_contours(&img)[0].to_points();
        let poly = approx_poly(&c, 1.0);
        assert!((12..=40).contains(&poly.len()), "{}", poly.len());
        let max_dev = c.iter().map(|p| polygon_distance(*p, &poly)).fold(0.0, f64::max);
        assert!(max_dev <= 1.0);
        assert!(is_subsequence(&poly, &c));
    }

    #[test]
    fn deviation_bound_on_random_contours() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let n = rng.gen_range(1..60);
            let pts: Vec<Point2> = (0..n)
                .map(|_| Point2::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)))
                .collect();
            let eps = rng.gen_range(0.5..10.0);
            let poly = approx_poly(&pts, eps);
            assert!(is_subsequence(&poly, &pts));
            for p in &pts {
                assert!(polygon_distance(*p, &poly) <= eps + 1e-9);
            }
        }
    }
}
