use crate::error::{Error, Result};
use crate::image::{BinaryImage, ImageBuffer};

const SIGMA: f64 = 1.4;

fn gaussian_kernel5() -> [f32; 5] {
    let mut k = [0.0f32; 5];
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - 2.0;
        let w = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        *v = w as f32;
        sum += w;
    }
    for v in &mut k {
        *v /= sum as f32;
    }
    k
}

/// Canny edge detector: 5x5 Gaussian (σ = 1.4), Sobel gradients with L2
/// magnitude, non-maximum suppression along the quantized gradient
/// direction and 8-connected hysteresis. Thresholds apply to the raw Sobel
/// magnitude, as in OpenCV.
pub fn canny(gray: &ImageBuffer, low: f64, high: f64) -> Result<BinaryImage> {
    canny_region(gray, low, high, 0, 0, gray.width(), gray.height())
}

/// Canny restricted to the rectangle `[x0, x0+w) x [y0, y0+h)`. The result has
/// the dimensions of the full image; pixels outside the rectangle are empty.
pub fn canny_region(
    gray: &ImageBuffer,
    low: f64,
    high: f64,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
) -> Result<BinaryImage> {
    if gray.channels() != 1 {
        return Err(Error::InvalidInput("canny expects a 1-channel image".into()));
    }
    if !(low > 0.0 && low < high) {
        return Err(Error::InvalidArgument(format!(
            "canny thresholds must satisfy 0 < low < high, got {low}, {high}"
        )));
    }
    let (full_w, full_h) = (gray.width(), gray.height());
    let x1 = (x0 + w).min(full_w);
    let y1 = (y0 + h).min(full_h);
    let mut out = BinaryImage::new(full_w, full_h);
    if x1 <= x0 || y1 <= y0 {
        return Ok(out);
    }
    let (w, h) = (x1 - x0, y1 - y0);

    // separable blur with replicated borders
    let k = gaussian_kernel5();
    let src = |x: i64, y: i64| -> f32 {
        let xc = x.clamp(0, w as i64 - 1) as usize + x0;
        let yc = y.clamp(0, h as i64 - 1) as usize + y0;
        gray.gray_at(xc, yc) as f32
    };
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * src(x as i64 + i as i64 - 2, y as i64);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut blur = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = (y as i64 + i as i64 - 2).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            blur[y * w + x] = acc;
        }
    }

    let at = |x: i64, y: i64| -> f32 {
        let xc = x.clamp(0, w as i64 - 1) as usize;
        let yc = y.clamp(0, h as i64 - 1) as usize;
        blur[yc * w + xc]
    };
    let mut mag = vec![0f32; w * h];
    let mut dir = vec![0u8; w * h];
    // tan(22.5°) and tan(67.5°)
    const T1: f32 = 0.414_213_56;
    const T2: f32 = 2.414_213_6;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag[i] = (gx * gx + gy * gy).sqrt();
            let (ax, ay) = (gx.abs(), gy.abs());
            dir[i] = if ay <= T1 * ax {
                0 // horizontal gradient: compare left/right
            } else if ay >= T2 * ax {
                2 // vertical gradient: compare up/down
            } else if (gx > 0.0) == (gy > 0.0) {
                1 // gradient along +x+y diagonal
            } else {
                3
            };
        }
    }

    // non-maximum suppression; borders of the region are never edges
    let (low, high) = (low as f32, high as f32);
    let mut state = vec![0u8; w * h]; // 0 none, 1 weak, 2 strong
    let mut stack = Vec::new();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let m = mag[i];
            if m < low {
                continue;
            }
            let (a, b) = match dir[i] {
                0 => (mag[i - 1], mag[i + 1]),
                2 => (mag[i - w], mag[i + w]),
                1 => (mag[i - w - 1], mag[i + w + 1]),
                _ => (mag[i - w + 1], mag[i + w - 1]),
            };
            // strict on one side so plateaus of equal magnitude yield one pixel
            if m > a && m >= b {
                if m >= high {
                    state[i] = 2;
                    stack.push(i);
                } else {
                    state[i] = 1;
                }
            }
        }
    }

    // hysteresis
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if state[j] == 1 {
                    state[j] = 2;
                    stack.push(j);
                }
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            if state[y * w + x] == 2 {
                out.set(x + x0, y + y0, true);
            }
        }
    }
    Ok(out)
}
