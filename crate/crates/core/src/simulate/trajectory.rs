use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};
use crate::smooth::TimedPose;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    Line,
    Arc,
    Lissajous,
    WaypointSpline,
}

impl std::str::FromStr for TrajectoryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(Self::Line),
            "arc" => Ok(Self::Arc),
            "lissajous" => Ok(Self::Lissajous),
            "waypoint-spline" | "spline" => Ok(Self::WaypointSpline),
            other => Err(Error::InvalidArgument(format!("unknown trajectory kind '{other}'"))),
        }
    }
}

/// Trajectory of the crosshair. Heading always follows the direction of
/// travel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub duration: f64,
    pub fps: f64,
    /// Constant speed for line, arc and spline; peak speed for lissajous
    /// (m/s).
    pub speed: f64,
    /// Start pose of line and arc. The default keeps the crosshair off
    /// the board lines.
    pub start: Pose2D,
    /// Arc radius (m), turning left.
    pub radius: f64,
    /// Lissajous center and half extent (m).
    pub center: Point2,
    pub amplitude: f64,
    /// Spline control points (m).
    pub waypoints: Vec<Point2>,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Line,
            duration: 2.0,
            fps: 25.0 / 3.0,
            speed: 0.3,
            start: Pose2D::new(0.05, 0.07, 20.0),
            radius: 1.0,
            center: Point2::new(0.0, 0.0),
            amplitude: 0.8,
            waypoints: vec![
                Point2::new(-1.0, -0.8),
                Point2::new(0.2, -1.1),
                Point2::new(1.1, -0.2),
                Point2::new(0.6, 0.9),
                Point2::new(-0.5, 0.7),
                Point2::new(-1.2, 1.2),
            ],
        }
    }
}

fn heading_of(d: Point2) -> f64 {
    d.y.atan2(d.x).to_degrees()
}

fn catmull_rom(p: &[Point2], seg: usize, u: f64) -> (Point2, Point2) {
    let n = p.len();
    let at = |k: isize| p[k.clamp(0, n as isize - 1) as usize];
    let i = seg as isize;
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let (u2, u3) = (u * u, u * u * u);
    let pos = (p1 * 2.0 + (p2 - p0) * u + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * u2 + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * u3) * 0.5;
    let vel = ((p2 - p0) + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * (2.0 * u) + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * (3.0 * u2)) * 0.5;
    (pos, vel)
}

/// Poses sampled at `fps` over `duration` seconds, starting at `t = 0`.
pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<Vec<TimedPose>> {
    if !(spec.fps > 0.0 && spec.duration >= 0.0 && spec.speed >= 0.0) {
        return Err(Error::InvalidArgument("fps must be positive, duration and speed non-negative".into()));
    }
    let count = (spec.duration * spec.fps + 1e-9).floor() as usize + 1;
    let times = (0..count).map(|k| k as f64 / spec.fps);
    match spec.kind {
        TrajectoryKind::Line => {
            let (s, c) = spec.start.theta.to_radians().sin_cos();
            Ok(times
                .map(|t| TimedPose {
                    t,
                    pose: Pose2D::new(
                        spec.start.x + c * spec.speed * t,
                        spec.start.y + s * spec.speed * t,
                        spec.start.theta,
                    ),
                })
                .collect())
        }
        TrajectoryKind::Arc => {
            if !(spec.radius > 0.0) {
                return Err(Error::InvalidArgument("arc radius must be positive".into()));
            }
            let th0 = spec.start.theta.to_radians();
            let center = spec.start.position() + Point2::new(-th0.sin(), th0.cos()) * spec.radius;
            let omega = spec.speed / spec.radius;
            Ok(times
                .map(|t| {
                    let a = th0 + omega * t;
                    let p = center + Point2::new(a.sin(), -a.cos()) * spec.radius;
                    TimedPose {
                        t,
                        pose: Pose2D::new(p.x, p.y, a.to_degrees()),
                    }
                })
                .collect())
        }
        TrajectoryKind::Lissajous => {
            // x = A sin τ, y = A sin 2τ; |dp/dτ| peaks at A·√5 for τ = 0
            if !(spec.amplitude > 0.0) {
                return Err(Error::InvalidArgument("lissajous amplitude must be positive".into()));
            }
            let a = spec.amplitude;
            let rate = spec.speed / (a * 5f64.sqrt());
            Ok(times
                .map(|t| {
                    let tau = rate * t;
                    let p = spec.center + Point2::new(a * tau.sin(), a * (2.0 * tau).sin());
                    let d = Point2::new(tau.cos(), 2.0 * (2.0 * tau).cos());
                    TimedPose {
                        t,
                        pose: Pose2D::new(p.x, p.y, heading_of(d)),
                    }
                })
                .collect())
        }
        TrajectoryKind::WaypointSpline => {
            let wp = &spec.waypoints;
            if wp.len() < 2 {
                return Err(Error::InvalidArgument("spline needs at least two waypoints".into()));
            }
            // arc-length table for constant-speed travel
            const STEPS: usize = 400;
            let mut table: Vec<(f64, usize, f64)> = vec![(0.0, 0, 0.0)];
            let mut prev = wp[0];
            let mut len = 0.0;
            for seg in 0..wp.len() - 1 {
                for k in 1..=STEPS {
                    let u = k as f64 / STEPS as f64;
                    let (p, _) = catmull_rom(wp, seg, u);
                    len += p.distance(prev);
                    prev = p;
                    table.push((len, seg, u));
                }
            }
            Ok(times
                .map(|t| {
                    let s = (spec.speed * t).min(len);
                    let i = table.partition_point(|e| e.0 < s).clamp(1, table.len() - 1);
                    let (s0, seg0, u0) = table[i - 1];
                    let (s1, seg1, u1) = table[i];
                    let f = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
                    // both entries share a segment unless u1 wraps to the next
                    let (seg, u) = if seg1 == seg0 {
                        (seg0, u0 + (u1 - u0) * f)
                    } else {
                        (seg1, u1 * f)
                    };
                    let (p, v) = catmull_rom(wp, seg, u);
                    TimedPose {
                        t,
                        pose: Pose2D::new(p.x, p.y, heading_of(v)),
                    }
                })
                .collect())
        }
    }
}
