//! Offline trajectory smoothing with overlapping polynomial windows, and
//! error statistics against ground truth.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff_deg, normalize_deg, Pose2D};
use crate::locate::FrameEstimate;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothParams {
    pub window_size: usize,
    pub degree: usize,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self {
            window_size: 20,
            degree: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Smoothed {
    pub trajectory: Vec<FrameEstimate>,
    /// False when the input was returned unchanged because it was shorter
    /// than one window.
    pub smoothed: bool,
}

/// Least-squares polynomial of `degree` through `(t, y)`, evaluated at the
/// same `t`. Time is mapped to `[-1, 1]` around the window midpoint.
fn fit_window(t: &[f64], y: &[f64], degree: usize) -> Option<Vec<f64>> {
    let n = t.len();
    let (lo, hi) = (t[0], t[n - 1]);
    let mid = 0.5 * (lo + hi);
    let half = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
    let cols = degree + 1;
    let a = DMatrix::from_fn(n, cols, |r, c| ((t[r] - mid) / half).powi(c as i32));
    let ata = a.transpose() * &a;
    let aty = a.transpose() * DVector::from_column_slice(y);
    let coef = ata.lu().solve(&aty)?;
    Some((&a * coef).iter().copied().collect())
}

/// Heading sequence with 360° jumps removed.
pub fn unwrap_degrees(theta: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(theta.len());
    for (k, &a) in theta.iter().enumerate() {
        if k == 0 {
            out.push(a);
        } else {
            let prev = out[k - 1];
            out.push(prev + angle_diff_deg(a, prev));
        }
    }
    out
}

/// Smooth x, y and heading with windows of `window_size` frames shifted by
/// half a window; fitted values of overlapping windows are averaged. A
/// trailing window shorter than `window_size` is fitted with degree
/// `min(degree, length - 2)`.
pub fn smooth_trajectory(traj: &[FrameEstimate], params: &SmoothParams) -> Result<Smoothed> {
    let (w, deg) = (params.window_size, params.degree);
    if w <= deg + 1 {
        return Err(Error::InvalidArgument(format!(
            "window size {w} must exceed degree + 1 = {}",
            deg + 1
        )));
    }
    if traj.windows(2).any(|p| !(p[1].t > p[0].t)) {
        return Err(Error::InvalidInput("timestamps must increase strictly".into()));
    }
    let n = traj.len();
    if n < w {
        log::warn!("trajectory of {n} frames is shorter than one window of {w}; left unsmoothed");
        return Ok(Smoothed {
            trajectory: traj.to_vec(),
            smoothed: false,
        });
    }
    let t: Vec<f64> = traj.iter().map(|e| e.t).collect();
    let dims = [
        traj.iter().map(|e| e.pose.x).collect::<Vec<_>>(),
        traj.iter().map(|e| e.pose.y).collect::<Vec<_>>(),
        unwrap_degrees(&traj.iter().map(|e| e.pose.theta).collect::<Vec<_>>()),
    ];
    let mut sum = vec![[0.0; 3]; n];
    let mut count = vec![0usize; n];
    let hop = (w / 2).max(1);
    let mut start = 0;
    loop {
        let end = (start + w).min(n);
        let len = end - start;
        let d = deg.min(len.saturating_sub(2));
        for (k, dim) in dims.iter().enumerate() {
            let fit = fit_window(&t[start..end], &dim[start..end], d)
                .ok_or_else(|| Error::Singular("polynomial normal equations".into()))?;
            for (i, v) in fit.into_iter().enumerate() {
                sum[start + i][k] += v;
            }
        }
        for c in &mut count[start..end] {
            *c += 1;
        }
        if end == n {
            break;
        }
        start += hop;
    }
    let trajectory = traj
        .iter()
        .zip(sum.iter().zip(&count))
        .map(|(e, (s, &c))| {
            let c = c as f64;
            FrameEstimate {
                pose: Pose2D::new(s[0] / c, s[1] / c, normalize_deg(s[2] / c)),
                ..*e
            }
        })
        .collect();
    Ok(Smoothed {
        trajectory,
        smoothed: true,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose2D,
}

impl From<&FrameEstimate> for TimedPose {
    fn from(e: &FrameEstimate) -> Self {
        Self { t: e.t, pose: e.pose }
    }
}

/// Statistics of one error dimension. Percentiles are of the absolute
/// error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub bias: f64,
    pub mae: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    /// Sorted absolute errors paired with their empirical CDF value.
    pub cdf: Vec<(f64, f64)>,
}

/// x and y in millimeters, theta in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub x: DimStats,
    pub y: DimStats,
    pub theta: DimStats,
    /// Euclidean position error in millimeters (bias is its mean).
    pub position: DimStats,
    pub matched: usize,
}

/// Percentile `p` in `[0, 100]` of sorted data with linear interpolation
/// between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn dim_stats(signed: &[f64]) -> DimStats {
    let n = signed.len() as f64;
    let mut abs: Vec<f64> = signed.iter().map(|e| e.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let cdf = abs
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, (i + 1) as f64 / n))
        .collect();
    DimStats {
        bias: signed.iter().sum::<f64>() / n,
        mae: abs.iter().sum::<f64>() / n,
        median: percentile(&abs, 50.0),
        p95: percentile(&abs, 95.0),
        p99: percentile(&abs, 99.0),
        max: abs.last().copied().unwrap_or(f64::NAN),
        cdf,
    }
}

/// Pair every estimate with the ground-truth pose nearest in time, within
/// half the ground-truth frame period.
pub fn match_poses(est: &[TimedPose], gt: &[TimedPose]) -> Vec<(TimedPose, TimedPose)> {
    if gt.is_empty() {
        return Vec::new();
    }
    let mut gaps: Vec<f64> = gt.windows(2).map(|w| w[1].t - w[0].t).filter(|d| *d > 0.0).collect();
    gaps.sort_by(f64::total_cmp);
    let half = gaps.get(gaps.len() / 2).map_or(f64::INFINITY, |d| 0.5 * d);
    let mut out = Vec::new();
    for e in est {
        let i = gt.partition_point(|g| g.t < e.t);
        let best = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&k| k < gt.len())
            .min_by(|&a, &b| (gt[a].t - e.t).abs().total_cmp(&(gt[b].t - e.t).abs()));
        if let Some(k) = best {
            if (gt[k].t - e.t).abs() <= half + 1e-9 {
                out.push((*e, gt[k]));
            }
        }
    }
    out
}

pub fn error_stats(est: &[TimedPose], gt: &[TimedPose]) -> Result<ErrorStats> {
    let pairs = match_poses(est, gt);
    if pairs.is_empty() {
        return Err(Error::NoMatches);
    }
    let ex: Vec<f64> = pairs.iter().map(|(e, g)| (e.pose.x - g.pose.x) * 1000.0).collect();
    let ey: Vec<f64> = pairs.iter().map(|(e, g)| (e.pose.y - g.pose.y) * 1000.0).collect();
    let et: Vec<f64> = pairs.iter().map(|(e, g)| angle_diff_deg(e.pose.theta, g.pose.theta)).collect();
    let ep: Vec<f64> = ex.iter().zip(&ey).map(|(a, b)| a.hypot(*b)).collect();
    Ok(ErrorStats {
        x: dim_stats(&ex),
        y: dim_stats(&ey),
        theta: dim_stats(&et),
        position: dim_stats(&ep),
        matched: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::CrosshairQuality;
    use crate::locate::PoseSource;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn traj(n: usize, f: impl Fn(f64) -> (f64, f64, f64)) -> Vec<FrameEstimate> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.12;
                let (x, y, th) = f(t);
                FrameEstimate {
                    frame: i,
                    t,
                    pose: Pose2D::new(x, y, th),
                    source: PoseSource::Measured,
                    quality: CrosshairQuality::Detected,
                }
            })
            .collect()
    }

    #[test]
    fn cubic_is_reproduced() {
        let tr = traj(97, |t| (0.1 + 0.3 * t - 0.02 * t * t + 0.001 * t.powi(3), -0.5 * t, 10.0 + 3.0 * t));
        let s = smooth_trajectory(&tr, &SmoothParams::default()).unwrap();
        assert!(s.smoothed);
        for (a, b) in s.trajectory.iter().zip(&tr) {
            assert_eq!(a.t, b.t);
            assert!((a.pose.x - b.pose.x).abs() < 1e-6);
            assert!((a.pose.y - b.pose.y).abs() < 1e-6);
            assert!(angle_diff_deg(a.pose.theta, b.pose.theta).abs() < 1e-6);
        }
    }

    #[test]
    fn quintic_with_heading_wrap_is_reproduced() {
        let tr = traj(200, |t| {
            let x = 0.2 * t - 0.01 * t.powi(2) + 1e-4 * t.powi(5) / 10.0;
            (x, 0.05 * t.powi(4) / 100.0, 170.0 + 4.0 * t)
        });
        let s = smooth_trajectory(&tr, &SmoothParams::default()).unwrap();
        assert_eq!(s.trajectory.len(), tr.len());
        for (a, b) in s.trajectory.iter().zip(&tr) {
            assert!((a.pose.x - b.pose.x).abs() < 1e-6);
            assert!((a.pose.y - b.pose.y).abs() < 1e-6);
            assert!(angle_diff_deg(a.pose.theta, b.pose.theta).abs() < 1e-6);
        }
    }

    #[test]
    fn short_trajectory_is_flagged() {
        let tr = traj(10, |t| (t, 0.0, 0.0));
        let s = smooth_trajectory(&tr, &SmoothParams::default()).unwrap();
        assert!(!s.smoothed);
        assert_eq!(s.trajectory, tr);
    }

    #[test]
    fn window_must_exceed_degree() {
        let tr = traj(30, |t| (t, 0.0, 0.0));
        let p = SmoothParams {
            window_size: 6,
            degree: 5,
        };
        assert!(smooth_trajectory(&tr, &p).is_err());
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let tr: Vec<TimedPose> = traj(50, |t| (t, -t, 3.0 * t)).iter().map(TimedPose::from).collect();
        let s = error_stats(&tr, &tr).unwrap();
        for d in [&s.x, &s.y, &s.theta] {
            assert_eq!((d.bias, d.mae, d.p95, d.p99), (0.0, 0.0, 0.0, 0.0));
        }
        assert_eq!(s.matched, 50);
    }

    #[test]
    fn symmetric_errors_have_zero_bias() {
        let gt = vec![
            TimedPose { t: 0.0, pose: Pose2D::new(0.0, 0.0, 0.0) },
            TimedPose { t: 0.1, pose: Pose2D::new(0.0, 0.0, 0.0) },
        ];
        let est = vec![
            TimedPose { t: 0.0, pose: Pose2D::new(0.001, 0.0, 0.0) },
            TimedPose { t: 0.1, pose: Pose2D::new(-0.001, 0.0, 0.0) },
        ];
        let s = error_stats(&est, &gt).unwrap();
        assert!(s.x.bias.abs() < 1e-12);
        assert!((s.x.mae - 1.0).abs() < 1e-12);
    }

    #[test]
    fn percentiles_match_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let errs: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.0..10.0)).collect();
        let s = dim_stats(&errs);
        assert!((s.p95 - 9.5).abs() < 0.3);
        let mut sorted = errs.clone();
        sorted.sort_by(f64::total_cmp);
        // independent rank-based interpolation
        let r: f64 = 0.99 * 999.0;
        let want = sorted[r as usize] * (1.0 - r.fract()) + sorted[r as usize + 1] * r.fract();
        assert!((s.p99 - want).abs() < 1e-12);
        assert!(s.p99 >= s.p95 && s.p95 >= s.median);
    }

    #[test]
    fn theta_errors_are_circular() {
        let gt = vec![TimedPose { t: 0.0, pose: Pose2D::new(0.0, 0.0, 179.5) }];
        let est = vec![TimedPose { t: 0.0, pose: Pose2D::new(0.0, 0.0, -179.5) }];
        let s = error_stats(&est, &gt).unwrap();
        assert!((s.theta.mae - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unmatched_is_an_error() {
        let gt = vec![
            TimedPose { t: 0.0, pose: Pose2D::default() },
            TimedPose { t: 0.1, pose: Pose2D::default() },
        ];
        let est = vec![TimedPose { t: 5.0, pose: Pose2D::default() }];
        assert!(matches!(error_stats(&est, &gt), Err(Error::NoMatches)));
    }

    /// Projection onto polynomials of `degree` over sample positions `x`,
    /// built by modified Gram-Schmidt on plain monomials.
    fn hat_gram_schmidt(x: &[f64], degree: usize) -> Vec<Vec<f64>> {
        let n = x.len();
        let mut q: Vec<Vec<f64>> = Vec::new();
        for p in 0..=degree {
            let mut v: Vec<f64> = x.iter().map(|xi| xi.powi(p as i32)).collect();
            for b in &q {
                let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
        (0..n)
            .map(|i| (0..n).map(|j| q.iter().map(|b| b[i] * b[j]).sum()).collect())
            .collect()
    }

    #[test]
    fn noise_reduction_matches_variance_oracle() {
        let (n, w, d, hop) = (200usize, 20usize, 5usize, 10usize);
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let mut var = vec![0.0; n];
        let mut s = vec![vec![0.0; n]; n];
        let mut cnt = vec![0.0; n];
        let mut start = 0;
        loop {
            let end = (start + w).min(n);
            let h = hat_gram_schmidt(&x[start..end], d.min(end - start - 2));
            for i in 0..end - start {
                for j in 0..end - start {
                    s[start + i][start + j] += h[i][j];
                }
                cnt[start + i] += 1.0;
            }
            if end == n {
                break;
            }
            start += hop;
        }
        for i in 0..n {
            var[i] = s[i].iter().map(|v| (v / cnt[i]).powi(2)).sum::<f64>();
        }
        let oracle = (var.iter().sum::<f64>() / n as f64).sqrt();

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let base = traj(n, |_| (0.0, 0.0, 0.0));
        let (mut acc, runs) = (0.0, 200);
        for _ in 0..runs {
            let noisy: Vec<FrameEstimate> = base
                .iter()
                .map(|e| FrameEstimate {
                    pose: Pose2D::new(noise.sample(&mut rng), 0.0, 0.0),
                    ..*e
                })
                .collect();
            let out = smooth_trajectory(&noisy, &SmoothParams::default()).unwrap();
            acc += out.trajectory.iter().map(|e| e.pose.x * e.pose.x).sum::<f64>() / n as f64;
        }
        let measured = (acc / runs as f64).sqrt();
        assert!((measured / oracle - 1.0).abs() < 0.15, "measured {measured} oracle {oracle}");
        assert!((oracle - 0.506).abs() < 0.01, "oracle {oracle}");
    }
}
