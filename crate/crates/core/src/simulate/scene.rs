use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, DistortionCoeffs, FisheyeCamera, TopDownView};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};
use crate::locate::FloorMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneColors {
    pub white: [u8; 3],
    pub blue: [u8; 3],
    pub tag_black: [u8; 3],
    pub occluder: [u8; 3],
    /// Floor beyond the chessboard.
    pub surround: [u8; 3],
}

impl Default for SceneColors {
    fn default() -> Self {
        Self {
            white: [255, 255, 255],
            blue: [30, 60, 200],
            tag_black: [25, 25, 25],
            occluder: [128, 128, 128],
            surround: [90, 90, 90],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSpec {
    pub model: FisheyeCamera,
    /// Height of the optical center above the floor (m).
    pub height: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        // 150° across the 1920 px width with k1 = 0.05
        Self {
            model: FisheyeCamera {
                intrinsics: CameraIntrinsics {
                    fx: 675.5,
                    fy: 675.5,
                    cx: 959.5,
                    cy: 599.5,
                },
                distortion: DistortionCoeffs::new(0.05, 0.0, 0.0, 0.0),
                width: 1920,
                height: 1200,
            },
            height: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaserSpec {
    pub enabled: bool,
    /// Crosshair center ahead of the camera nadir (m).
    pub offset_forward: f64,
    /// Length of each of the four arms from the center (m).
    pub arm_length: f64,
    /// Full width at half maximum of the line profile on the floor (m).
    pub line_width: f64,
    pub color: [u8; 3],
    pub peak_alpha: f64,
    /// Per-frame random rotation (degrees, standard deviation).
    pub jitter_angle_deg: f64,
    /// Per-frame random shift of the center along each axis (m, standard
    /// deviation).
    pub jitter_offset: f64,
    /// Fraction of frames without laser.
    pub dropout: f64,
}

impl Default for LaserSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            offset_forward: 0.01,
            arm_length: 0.12,
            line_width: 0.004,
            color: [40, 255, 60],
            peak_alpha: 0.9,
            jitter_angle_deg: 0.0,
            jitter_offset: 0.0,
            dropout: 0.0,
        }
    }
}

impl LaserSpec {
    /// Jitter of the noisy scenario.
    pub fn with_jitter(self) -> Self {
        Self {
            jitter_angle_deg: 0.15,
            jitter_offset: 0.0003,
            ..self
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Gaussian noise per channel (gray levels).
    pub sigma: f64,
    /// Peak-to-peak relative brightness change across the frame.
    pub illumination: f64,
    /// Direction of the brightness ramp in the raw frame (degrees).
    pub illumination_angle_deg: f64,
}

/// Flat gray disks lying on the board. Each is centered on a square corner,
/// which is chosen independently with the probability that leaves
/// `square_fraction` of all squares with at least one covered corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OccluderSpec {
    pub square_fraction: f64,
    pub radius_min: f64,
    pub radius_max: f64,
}

impl Default for OccluderSpec {
    fn default() -> Self {
        Self {
            square_fraction: 0.0,
            radius_min: 0.045,
            radius_max: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub floor: FloorMap,
    pub colors: SceneColors,
    /// Tag side as a fraction of the square side.
    pub tag_scale: f64,
    pub camera: CameraSpec,
    pub laser: LaserSpec,
    pub noise: NoiseSpec,
    pub occluders: OccluderSpec,
    /// Top-down layout used for ground-truth pixel positions.
    pub view: TopDownView,
    /// Sub-samples per axis at pattern boundaries.
    pub supersample: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            floor: FloorMap::default(),
            colors: SceneColors::default(),
            tag_scale: 0.5,
            camera: CameraSpec::default(),
            laser: LaserSpec::default(),
            noise: NoiseSpec::default(),
            occluders: OccluderSpec::default(),
            view: TopDownView::default(),
            supersample: 4,
            seed: 1,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.floor.validate()?;
        self.camera.model.validate()?;
        if !(self.camera.height > 0.0) {
            return Err(Error::Config("camera height must be positive".into()));
        }
        if !(self.laser.arm_length > 0.0 && self.laser.arm_length < self.floor.square_size) {
            return Err(Error::Config("laser arm length must be in (0, square_size)".into()));
        }
        if !(self.laser.line_width > 0.0) {
            return Err(Error::Config("laser line width must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.laser.dropout) || !(0.0..1.0).contains(&self.occluders.square_fraction) {
            return Err(Error::Config("fractions must lie in [0, 1)".into()));
        }
        if !(self.tag_scale > 0.0 && self.tag_scale < 1.0) {
            return Err(Error::Config("tag_scale must be in (0, 1)".into()));
        }
        if self.supersample == 0 {
            return Err(Error::Config("supersample must be at least 1".into()));
        }
        Ok(())
    }

    /// World position of the camera nadir for a crosshair pose.
    pub fn nadir(&self, pose: &Pose2D) -> Point2 {
        let (s, c) = pose.theta.to_radians().sin_cos();
        pose.position() - Point2::new(c, s) * self.laser.offset_forward
    }

    /// World point to the robot frame relative to the nadir:
    /// `(forward, left)`.
    pub fn world_to_robot(&self, pose: &Pose2D, w: Point2) -> (f64, f64) {
        let (s, c) = pose.theta.to_radians().sin_cos();
        let d = w - self.nadir(pose);
        (d.x * c + d.y * s, -d.x * s + d.y * c)
    }

    pub fn robot_to_world(&self, pose: &Pose2D, forward: f64, left: f64) -> Point2 {
        let (s, c) = pose.theta.to_radians().sin_cos();
        self.nadir(pose) + Point2::new(forward * c - left * s, forward * s + left * c)
    }

    /// Ideal top-down pixel of a world point.
    pub fn world_to_topdown(&self, pose: &Pose2D, w: Point2) -> Point2 {
        let (f, l) = self.world_to_robot(pose, w);
        self.view.robot_to_px(f, l)
    }

    /// Raw fisheye pixel of a world floor point, projected with the
    /// simulator's own forward model. `None` behind the lens horizon.
    pub fn world_to_raw(&self, pose: &Pose2D, w: Point2) -> Option<Point2> {
        let (f, l) = self.world_to_robot(pose, w);
        // camera axes: x image right (robot right), y image down (robot back)
        let (xc, yc, zc) = (-l, -f, self.camera.height);
        let r = xc.hypot(yc);
        let theta = r.atan2(zc);
        if theta >= std::f64::consts::FRAC_PI_2 {
            return None;
        }
        let k = self.camera.model.distortion.k;
        let t2 = theta * theta;
        let td = theta * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))));
        let (cphi, sphi) = if r > 0.0 { (xc / r, yc / r) } else { (1.0, 0.0) };
        let i = &self.camera.model.intrinsics;
        Some(Point2::new(i.fx * td * cphi + i.cx, i.fy * td * sphi + i.cy))
    }

    /// Fail when the top-down canvas of `pose` reaches beyond the board.
    pub fn check_footprint(&self, pose: &Pose2D) -> Result<()> {
        let (lo, hi) = self.floor.extent();
        let (w, h) = (self.view.width as f64, self.view.height as f64);
        for p in [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)] {
            let (f, l) = self.view.px_to_robot(p);
            let q = self.robot_to_world(pose, f, l);
            if q.x < lo.x || q.y < lo.y || q.x > hi.x || q.y > hi.y {
                return Err(Error::OutsideFloor(pose.x, pose.y));
            }
        }
        Ok(())
    }
}
