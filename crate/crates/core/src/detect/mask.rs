use crate::geometry::Point2;
use crate::image::ImageBuffer;

const RING: i64 = 10;

/// Replace the axis-aligned bounding box of `quad`, grown by `margin`, with
/// the mean color of a 10 px ring around the grown box. When the ring lies
/// entirely outside the image the 10 px band just inside the box is used.
pub fn mask_region(img: &ImageBuffer, quad: &[Point2; 4], margin: f64) -> ImageBuffer {
    let mut out = img.clone();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let fx0 = quad.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - margin;
    let fx1 = quad.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + margin;
    let fy0 = quad.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - margin;
    let fy1 = quad.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + margin;
    let x0 = (fx0.round() as i64).max(0);
    let x1 = (fx1.round() as i64).min(w - 1);
    let y0 = (fy0.round() as i64).max(0);
    let y1 = (fy1.round() as i64).min(h - 1);
    if x0 > x1 || y0 > y1 {
        return out;
    }
    let c = img.channels();
    let mean_over = |inside: &dyn Fn(i64, i64) -> bool, bx0: i64, by0: i64, bx1: i64, by1: i64| {
        let mut sum = [0.0; 3];
        let mut n = 0.0;
        for y in by0.max(0)..=by1.min(h - 1) {
            for x in bx0.max(0)..=bx1.min(w - 1) {
                if inside(x, y) {
                    for (k, s) in sum.iter_mut().enumerate().take(c) {
                        *s += img.pixel(x as usize, y as usize)[k] as f64;
                    }
                    n += 1.0;
                }
            }
        }
        (n > 0.0).then(|| sum.map(|s| s / n))
    };
    let in_box = |x: i64, y: i64| x >= x0 && x <= x1 && y >= y0 && y <= y1;
    let ring = mean_over(&|x, y| !in_box(x, y), x0 - RING, y0 - RING, x1 + RING, y1 + RING);
    let fill = ring.or_else(|| {
        mean_over(
            &|x, y| x < x0 + RING || x > x1 - RING || y < y0 + RING || y > y1 - RING,
            x0,
            y0,
            x1,
            y1,
        )
    });
    let Some(fill) = fill else {
        return out;
    };
    for y in y0..=y1 {
        for x in x0..=x1 {
            for (k, v) in out.pixel_mut(x as usize, y as usize).iter_mut().enumerate() {
                *v = fill[k].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x0: f64, y0: f64, x1: f64, y1: f64) -> [Point2; 4] {
        [
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ]
    }

    fn gradient_image(w: usize, h: usize) -> ImageBuffer {
        let mut img = ImageBuffer::new(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                img.pixel_mut(x, y).copy_from_slice(&[(x * 7 % 256) as u8, (y * 5 % 256) as u8, 90]);
            }
        }
        img
    }

    #[test]
    fn whole_image_quad_fills_with_border_band_mean() {
        let img = gradient_image(40, 30);
        let out = mask_region(&img, &quad(0.0, 0.0, 39.0, 29.0), 0.0);
        // oracle: mean over the 10 px band inside the image border
        let mut sum = [0.0; 3];
        let mut n = 0.0;
        for y in 0..30 {
            for x in 0..40 {
                if !(10..30).contains(&x) || !(10..20).contains(&y) {
                    for (acc, v) in sum.iter_mut().zip(img.pixel(x, y)) {
                        *acc += *v as f64;
                    }
                    n += 1.0;
                }
            }
        }
        let expect: Vec<u8> = sum.iter().map(|s| (s / n).round() as u8).collect();
        for y in 0..30 {
            for x in 0..40 {
                assert_eq!(out.pixel(x, y), &expect[..]);
            }
        }
    }

    #[test]
    fn single_pixel_with_zero_margin() {
        let img = gradient_image(50, 50);
        let out = mask_region(&img, &quad(20.0, 21.0, 20.0, 21.0), 0.0);
        let changed: Vec<(usize, usize)> = (0..50)
            .flat_map(|y| (0..50).map(move |x| (x, y)))
            .filter(|&(x, y)| out.pixel(x, y) != img.pixel(x, y))
            .collect();
        assert!(changed.iter().all(|&p| p == (20, 21)));
    }

    #[test]
    fn tag_in_white_square_becomes_white() {
        let mut img = ImageBuffer::filled_rgb(200, 200, [250, 251, 249]);
        for y in 80..120 {
            for x in 70..130 {
                img.pixel_mut(x, y).copy_from_slice(&[20, 20, 20]);
            }
        }
        let out = mask_region(&img, &quad(70.0, 80.0, 129.0, 119.0), 4.0);
        for y in 0..200 {
            for x in 0..200 {
                for (a, b) in out.pixel(x, y).iter().zip([250u8, 251, 249]) {
                    assert!((*a as i32 - b as i32).abs() <= 3);
                }
            }
        }
    }

    #[test]
    fn pixels_outside_grown_box_untouched() {
        let img = gradient_image(80, 60);
        let out = mask_region(&img, &quad(30.2, 20.7, 45.9, 33.1), 3.0);
        for y in 0..60i64 {
            for x in 0..80i64 {
                let in_box = (27..=49).contains(&x) && (18..=36).contains(&y);
                if !in_box {
                    assert_eq!(out.pixel(x as usize, y as usize), img.pixel(x as usize, y as usize));
                }
            }
        }
    }
}
