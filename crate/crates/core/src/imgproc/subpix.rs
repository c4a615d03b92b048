use crate::geometry::Point2;
use crate::image::{BinaryImage, ImageBuffer};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SubpixParams {
    pub half_window: usize,
    pub max_iterations: usize,
    /// Stop once an update moves the estimate by less than this (px).
    pub epsilon: f64,
}

impl Default for SubpixParams {
    fn default() -> Self {
        Self {
            half_window: 5,
            max_iterations: 40,
            epsilon: 0.001,
        }
    }
}

/// Refinement result. `refined` is false when the input was returned
/// unchanged: window touching the border, zero gradient, or an estimate
/// that wandered outside the search window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubpixCorner {
    pub point: Point2,
    pub refined: bool,
}

pub fn corner_subpix(gray: &ImageBuffer, corners: &[Point2], params: &SubpixParams) -> Vec<SubpixCorner> {
    corner_subpix_masked(gray, corners, params, None)
}

/// Gradient-orthogonality corner refinement: find the point `p` minimizing
/// the weighted sum of `(∇I(q) · (q - p))²` over the window. Gradients are
/// taken on a Gaussian-smoothed (σ = 1 px) copy of the neighborhood, and
/// each pixel's outer product is divided by the gradient magnitude, which
/// removes the pull toward pixel centers that squared weighting has on
/// sharp, pixel-integrated edges. Pixels set in `ignore` do not contribute.
pub fn corner_subpix_masked(
    gray: &ImageBuffer,
    corners: &[Point2],
    params: &SubpixParams,
    ignore: Option<&BinaryImage>,
) -> Vec<SubpixCorner> {
    assert_eq!(gray.channels(), 1, "corner_subpix expects a grayscale image");
    let hw = params.half_window as i64;
    let (w, h) = (gray.width() as i64, gray.height() as i64);
    let margin = hw as f64 + 1.0;
    let inside = |p: Point2| {
        p.x >= margin && p.y >= margin && p.x <= (w - 1) as f64 - margin && p.y <= (h - 1) as f64 - margin
    };
    let kernel: Vec<f64> = {
        let k: Vec<f64> = (-4..=4).map(|i: i32| (-(i * i) as f64 / 2.0).exp()).collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    };
    // gradients are needed up to 2·hw + 1 from the start (estimate may drift by hw)
    let reach = 2 * hw + 1;
    let pad = reach + 2 + kernel.len() as i64 / 2;
    let kr = kernel.len() as i64 / 2;
    let side = (2 * pad + 1) as usize;
    let mut raw = vec![0.0; side * side];
    let mut tmp = vec![0.0; side * side];
    let mut smooth = vec![0.0; side * side];
    let mut taint = vec![false; side * side];
    let mut taint_row = vec![false; side * side];

    corners
        .iter()
        .map(|&start| {
            let unrefined = SubpixCorner {
                point: start,
                refined: false,
            };
            if !inside(start) {
                return unrefined;
            }
            let (ox, oy) = (start.x.round() as i64 - pad, start.y.round() as i64 - pad);
            let at = |x: i64, y: i64| gray.data()[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize] as f64;
            for j in 0..side {
                for i in 0..side {
                    raw[j * side + i] = at(ox + i as i64, oy + j as i64);
                }
            }
            for j in 0..side {
                for i in 0..side {
                    let mut acc = 0.0;
                    for (t, kv) in kernel.iter().enumerate() {
                        let ii = (i as i64 + t as i64 - kr).clamp(0, side as i64 - 1) as usize;
                        acc += kv * raw[j * side + ii];
                    }
                    tmp[j * side + i] = acc;
                }
            }
            for j in 0..side {
                for i in 0..side {
                    let mut acc = 0.0;
                    for (t, kv) in kernel.iter().enumerate() {
                        let jj = (j as i64 + t as i64 - kr).clamp(0, side as i64 - 1) as usize;
                        acc += kv * tmp[jj * side + i];
                    }
                    smooth[j * side + i] = acc;
                }
            }

            // an ignored pixel spoils every gradient whose smoothing support reaches it
            if let Some(mask) = ignore {
                const R: i64 = 3;
                for j in 0..side as i64 {
                    for i in 0..side as i64 {
                        taint_row[(j * side as i64 + i) as usize] =
                            (i - R..=i + R).any(|ii| mask.get_or_false(ox + ii, oy + j));
                    }
                }
                for j in 0..side as i64 {
                    for i in 0..side as i64 {
                        taint[(j * side as i64 + i) as usize] = (j - R..=j + R)
                            .filter(|jj| (0..side as i64).contains(jj))
                            .any(|jj| taint_row[(jj * side as i64 + i) as usize]);
                    }
                }
            }

            let mut cur = start;
            for _ in 0..params.max_iterations {
                if !inside(cur) || (cur.x - start.x).abs() > hw as f64 || (cur.y - start.y).abs() > hw as f64 {
                    return unrefined;
                }
                let (cx, cy) = (cur.x.round() as i64, cur.y.round() as i64);
                let (mut a, mut b, mut c, mut bb1, mut bb2) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for qy in cy - hw..=cy + hw {
                    for qx in cx - hw..=cx + hw {
                        let k = ((qy - oy) as usize) * side + (qx - ox) as usize;
                        if ignore.is_some() && taint[k] {
                            continue;
                        }
                        let (px, py) = (qx as f64 - cur.x, qy as f64 - cur.y);
                        let wgt = (-(px * px + py * py) / (hw * hw) as f64).exp();
                        // fourth-order central differences
                        let gx = (8.0 * (smooth[k + 1] - smooth[k - 1]) - (smooth[k + 2] - smooth[k - 2])) / 12.0;
                        let gy = (8.0 * (smooth[k + side] - smooth[k - side])
                            - (smooth[k + 2 * side] - smooth[k - 2 * side]))
                            / 12.0;
                        let mag = gx.hypot(gy);
                        if mag < 1e-9 {
                            continue;
                        }
                        let s = wgt / mag;
                        let gxx = gx * gx * s;
                        let gxy = gx * gy * s;
                        let gyy = gy * gy * s;
                        a += gxx;
                        b += gxy;
                        c += gyy;
                        bb1 += gxx * px + gxy * py;
                        bb2 += gxy * px + gyy * py;
                    }
                }
                let det = a * c - b * b;
                if a + c < 1e-9 || det <= 1e-9 * (a + c) * (a + c) {
                    return unrefined;
                }
                let sx = (c * bb1 - b * bb2) / det;
                let sy = (a * bb2 - b * bb1) / det;
                cur = Point2::new(cur.x + sx, cur.y + sy);
                if sx.hypot(sy) < params.epsilon {
                    break;
                }
            }
            if (cur.x - start.x).abs() > hw as f64 || (cur.y - start.y).abs() > hw as f64 || !inside(cur) {
                return unrefined;
            }
            SubpixCorner {
                point: cur,
                refined: true,
            }
        })
        .collect()
}

/// Checkerboard saddle with its center at `(cx, cy)`. Each pixel averages
/// `ss × ss` samples placed on a rotated grid (every sample has a distinct
/// x and y offset), so axis-aligned edges are resolved to `1 / ss²` px.
#[cfg(test)]
pub(crate) fn render_saddle(w: usize, h: usize, cx: f64, cy: f64, angle: f64, ss: usize) -> ImageBuffer {
    let mut img = ImageBuffer::new(w, h, 1);
    let (s, c) = angle.sin_cos();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for j in 0..ss {
                for i in 0..ss {
                    let n = (ss * ss) as f64;
                    let px = x as f64 - 0.5 + ((ss * i + j) as f64 + 0.5) / n - cx;
                    let py = y as f64 - 0.5 + ((ss * j + i) as f64 + 0.5) / n - cy;
                    let u = c * px + s * py;
                    let v = -s * px + c * py;
                    acc += if (u >= 0.0) == (v >= 0.0) { 220.0 } else { 30.0 };
                }
            }
            img.data_mut()[y * w + x] = (acc / (ss * ss) as f64).round() as u8;
        }
    }
    img
}
