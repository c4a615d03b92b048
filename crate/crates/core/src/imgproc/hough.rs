use crate::geometry::{LineSegment, Point2};
use crate::image::BinaryImage;
use std::f64::consts::PI;

/// Accumulator resolution, vote threshold and peak suppression window.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HoughParams {
    /// Pixels per ρ bin.
    pub rho_res: f64,
    /// Radians per θ bin.
    pub theta_res: f64,
    pub min_votes: u32,
    /// Peaks within this ρ distance and θ distance of a stronger accepted
    /// peak are dropped.
    pub merge_rho: f64,
    pub merge_theta: f64,
    /// Foreground pixels within this distance of a line support it when
    /// extracting the segment.
    pub support_tol: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            rho_res: 1.0,
            theta_res: 0.25f64.to_radians(),
            min_votes: 100,
            merge_rho: 10.0,
            merge_theta: 2f64.to_radians(),
            support_tol: 1.0,
        }
    }
}

/// A line `x cos θ + y sin θ = ρ` with θ in `[0, π)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoughLine {
    pub rho: f64,
    pub theta: f64,
    pub votes: u32,
    /// Extremal supporting foreground pixels, projected onto the line and
    /// ordered along the direction `(-sin θ, cos θ)`.
    pub segment: LineSegment,
}

impl HoughLine {
    pub fn normal(&self) -> Point2 {
        Point2::new(self.theta.cos(), self.theta.sin())
    }

    pub fn direction(&self) -> Point2 {
        Point2::new(-self.theta.sin(), self.theta.cos())
    }

    pub fn distance(&self, p: Point2) -> f64 {
        (p.dot(self.normal()) - self.rho).abs()
    }
}

fn line_gap(rho_a: f64, th_a: f64, rho_b: f64, th_b: f64) -> (f64, f64) {
    let dt = (th_a - th_b).abs();
    let direct = ((rho_a - rho_b).abs(), dt);
    // θ near 0 and θ near π describe the same line family with ρ negated
    let wrapped = ((rho_a + rho_b).abs(), PI - dt);
    if wrapped.1 < direct.1 {
        wrapped
    } else {
        direct
    }
}

/// Standard Hough transform with peak suppression. Lines are returned in
/// descending vote order; ties are broken by bin index.
pub fn hough_lines(bin: &BinaryImage, params: &HoughParams) -> Vec<HoughLine> {
    let (w, h) = (bin.width(), bin.height());
    let mut pts = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if bin.get(x, y) {
                pts.push((x as f64, y as f64));
            }
        }
    }
    if pts.is_empty() || params.rho_res <= 0.0 || params.theta_res <= 0.0 {
        return Vec::new();
    }
    let n_theta = ((PI / params.theta_res).round() as usize).max(1);
    let diag = ((w * w + h * h) as f64).sqrt();
    let offset = (diag / params.rho_res).ceil() as i64 + 1;
    let n_rho = (2 * offset + 1) as usize;
    let trig: Vec<(f64, f64)> = (0..n_theta)
        .map(|k| {
            let t = k as f64 * params.theta_res;
            (t.cos() / params.rho_res, t.sin() / params.rho_res)
        })
        .collect();

    let mut acc = vec![0u32; n_theta * n_rho];
    for &(x, y) in &pts {
        for (k, &(c, s)) in trig.iter().enumerate() {
            let r = (x * c + y * s).round() as i64 + offset;
            acc[k * n_rho + r as usize] += 1;
        }
    }

    let mut peaks = Vec::new();
    for k in 0..n_theta {
        for r in 1..n_rho - 1 {
            let v = acc[k * n_rho + r];
            if v < params.min_votes {
                continue;
            }
            let mut is_max = true;
            'nb: for dk in -1i64..=1 {
                let kk = k as i64 + dk;
                if kk < 0 || kk >= n_theta as i64 {
                    continue;
                }
                for dr in -1i64..=1 {
                    if dk == 0 && dr == 0 {
                        continue;
                    }
                    if acc[kk as usize * n_rho + (r as i64 + dr) as usize] > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                peaks.push((v, k, r));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut accepted: Vec<(f64, f64, u32)> = Vec::new();
    for (v, k, r) in peaks {
        let theta = k as f64 * params.theta_res;
        let rho = (r as i64 - offset) as f64 * params.rho_res;
        let close = accepted.iter().any(|&(ar, at, _)| {
            let (dr, dt) = line_gap(rho, theta, ar, at);
            dr <= params.merge_rho && dt <= params.merge_theta
        });
        if !close {
            accepted.push((rho, theta, v));
        }
    }

    accepted
        .into_iter()
        .filter_map(|(rho, theta, votes)| {
            let n = Point2::new(theta.cos(), theta.sin());
            let d = Point2::new(-theta.sin(), theta.cos());
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &(x, y) in &pts {
                let p = Point2::new(x, y);
                if (p.dot(n) - rho).abs() <= params.support_tol {
                    let t = p.dot(d);
                    lo = lo.min(t);
                    hi = hi.max(t);
                }
            }
            if !lo.is_finite() {
                return None;
            }
            let base = n * rho;
            Some(HoughLine {
                rho,
                theta,
                votes,
                segment: LineSegment::new(base + d * lo, base + d * hi),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(min_votes: u32) -> HoughParams {
        HoughParams {
            min_votes,
            ..HoughParams::default()
        }
    }

    /// Exhaustive accumulation: for every (θ, ρ) bin count the pixels that
    /// fall into it, bin by bin.
    fn brute_peak(bin: &BinaryImage, p: &HoughParams) -> (u32, Vec<(usize, i64)>) {
        let n_theta = (PI / p.theta_res).round() as usize;
        let (w, h) = (bin.width(), bin.height());
        let diag = ((w * w + h * h) as f64).sqrt();
        let max_r = (diag / p.rho_res).ceil() as i64 + 1;
        let mut best = 0;
        let mut arg = Vec::new();
        for k in 0..n_theta {
            let t = k as f64 * p.theta_res;
            for r in -max_r..=max_r {
                let mut count = 0;
                for y in 0..h {
                    for x in 0..w {
                        if bin.get(x, y)
                            && ((x as f64 * t.cos() + y as f64 * t.sin()) / p.rho_res).round() as i64 == r
                        {
                            count += 1;
                        }
                    }
                }
                if count > best {
                    best = count;
                    arg.clear();
                }
                if count == best {
                    arg.push((k, r));
                }
            }
        }
        (best, arg)
    }

    #[test]
    fn empty_image_gives_no_lines() {
        assert!(hough_lines(&BinaryImage::new(20, 20), &params(1)).is_empty());
    }

    #[test]
    fn diagonal_line() {
        let mut img = BinaryImage::new(50, 50);
        for i in 1..50 {
            img.set(i, i, true);
        }
        let p = params(20);
        let lines = hough_lines(&img, &p);
        let top = lines[0];
        assert!((top.theta - 3.0 * PI / 4.0).abs() <= p.theta_res + 1e-12, "{top:?}");
        assert!(top.rho.abs() <= p.rho_res);
        assert!(top.segment.length() > 65.0);
    }

    #[test]
    fn perpendicular_lines_give_two_peaks() {
        let mut img = BinaryImage::new(80, 80);
        for i in 5..75 {
            img.set(40, i, true);
            img.set(i, 30, true);
        }
        let lines = hough_lines(&img, &params(40));
        assert_eq!(lines.len(), 2, "{lines:?}");
        let mut thetas: Vec<f64> = lines.iter().map(|l| l.theta).collect();
        thetas.sort_by(f64::total_cmp);
        let res = params(40).theta_res;
        assert!(thetas[0] <= res + 1e-12 || thetas[1] >= PI - res - 1e-12, "{thetas:?}");
        assert!(thetas.iter().any(|t| (t - PI / 2.0).abs() <= res + 1e-12), "{thetas:?}");
    }

    #[test]
    fn peak_matches_exhaustive_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = HoughParams {
            theta_res: 2f64.to_radians(),
            min_votes: 1,
            ..HoughParams::default()
        };
        for _ in 0..4 {
            let mut img = BinaryImage::new(24, 20);
            let (x0, y0) = (rng.gen_range(0.0..24.0), rng.gen_range(0.0..20.0));
            let a: f64 = rng.gen_range(0.0..PI);
            for t in -30..30 {
                let (x, y) = (x0 + t as f64 * a.cos(), y0 + t as f64 * a.sin());
                if x >= 0.0 && y >= 0.0 && x < 24.0 && y < 20.0 {
                    img.set(x as usize, y as usize, true);
                }
            }
            for _ in 0..10 {
                img.set(rng.gen_range(0..24), rng.gen_range(0..20), true);
            }
            let (best, args) = brute_peak(&img, &p);
            let top = hough_lines(&img, &p)[0];
            assert_eq!(top.votes, best);
            let k = (top.theta / p.theta_res).round() as usize;
            let r = (top.rho / p.rho_res).round() as i64;
            assert!(args.contains(&(k, r)));
        }
    }
}
