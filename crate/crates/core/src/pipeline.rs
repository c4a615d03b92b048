//! Per-frame localization: rectification, detection and tracking wired
//! together.

use serde::{Deserialize, Serialize};

use crate::camera::{estimate_homography, Homography, RemapTable, TopDownView};
use crate::detect::{
    detect_squares, detect_tags, extend_virtual_squares, mask_region, CrosshairParams,
    CrosshairTracker, SquareDetection, SquareParams, TagParams,
};
use crate::error::{Error, Result};
use crate::geometry::{LineSegment, Point2, Pose2D};
use crate::image::{rgb_to_gray, ImageBuffer};
use crate::locate::{edge_angle_mod90, FloorMap, FrameDetections, FrameEstimate, Tracker, TrackerParams};
use crate::simulate::CameraSpec;
use crate::smooth::SmoothParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub camera: CameraSpec,
    pub view: TopDownView,
    pub floor: FloorMap,
    pub tags: TagParams,
    /// Margin added around each tag before it is painted over (px).
    pub tag_mask_margin: f64,
    pub crosshair: CrosshairParams,
    pub squares: SquareParams,
    pub tracker: TrackerParams,
    pub smooth: SmoothParams,
    /// Re-estimate the homography from the central square on every frame.
    pub per_frame_homography: bool,
    /// Smallest distance between the corners of the square used for the
    /// homography and the laser lines (px).
    pub bootstrap_clearance: f64,
    /// Robot reference point in the crosshair frame (m, degrees). The
    /// identity reports the crosshair itself.
    pub reference: Pose2D,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            camera: CameraSpec::default(),
            view: TopDownView::default(),
            floor: FloorMap::default(),
            tags: TagParams::default(),
            tag_mask_margin: 8.0,
            crosshair: CrosshairParams::default(),
            squares: SquareParams::default(),
            tracker: TrackerParams::default(),
            smooth: SmoothParams::default(),
            per_frame_homography: false,
            bootstrap_clearance: 20.0,
            reference: Pose2D::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.camera.model.validate()?;
        self.floor.validate()?;
        if !(self.camera.height > 0.0) {
            return Err(Error::Config("camera height must be positive".into()));
        }
        if self.view.width < 16 || self.view.height < 16 || !(self.view.px_per_meter > 0.0) {
            return Err(Error::Config("top-down view is degenerate".into()));
        }
        let pitch = self.floor.square_size * self.view.px_per_meter;
        if (pitch - self.tracker.pitch_px).abs() > 0.5 {
            return Err(Error::Config(format!(
                "tracker pitch {} px does not match square_size × px_per_meter = {pitch} px",
                self.tracker.pitch_px
            )));
        }
        if self.smooth.window_size <= self.smooth.degree + 1 {
            return Err(Error::Config("smoothing window must exceed degree + 1".into()));
        }
        Ok(())
    }

    /// Crosshair poses moved to the configured reference point.
    pub fn to_reference(&self, traj: &[FrameEstimate]) -> Vec<FrameEstimate> {
        traj.iter()
            .map(|e| FrameEstimate {
                pose: e.pose.compose(&self.reference),
                ..*e
            })
            .collect()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Everything the pipeline produced for one frame.
#[derive(Clone, Debug)]
pub struct FrameOutput {
    pub estimate: FrameEstimate,
    /// Detections handed to the tracker, virtual squares included.
    pub detections: FrameDetections,
    pub topdown: Option<ImageBuffer>,
}

pub struct Localizer {
    config: PipelineConfig,
    homography: Option<Homography>,
    remap: Option<RemapTable>,
    crosshair: CrosshairTracker,
    tracker: Tracker,
}

impl Localizer {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            crosshair: CrosshairTracker::new(config.crosshair.clone()),
            tracker: Tracker::new(config.floor.clone(), config.tracker),
            homography: None,
            remap: None,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    /// Homography from the undistorted view to the top-down canvas, once
    /// bootstrapped.
    pub fn homography(&self) -> Option<&Homography> {
        self.homography.as_ref()
    }

    fn nominal(&self) -> Result<Homography> {
        let cam = &self.config.camera;
        self.config.view.nominal_homography(&cam.model.intrinsics, cam.height)
    }

    fn table(&self, h: &Homography) -> Result<RemapTable> {
        let cam = &self.config.camera.model;
        RemapTable::topdown(cam, &cam.intrinsics, h, self.config.view.width, self.config.view.height)
    }

    /// Homography that maps the square nearest the canvas center, seen
    /// through `h`, onto an exact `pitch × pitch` square with the same
    /// center and orientation. Squares with a corner under the laser lines
    /// are passed over: their corners refine from half a window.
    fn refine_homography(&self, h: &Homography, squares: &[SquareDetection]) -> Result<Option<Homography>> {
        let mid = Point2::new(self.config.view.width as f64 / 2.0, self.config.view.height as f64 / 2.0);
        let cross = self.crosshair.prior();
        let lines = [cross.vertical_dir(), cross.horizontal_dir()].map(|d| LineSegment::new(cross.center, cross.center + d));
        let clear = |s: &SquareDetection| {
            s.corners
                .iter()
                .all(|c| lines.iter().all(|l| l.line_distance(*c) > self.config.bootstrap_clearance))
        };
        let Some(sq) = squares
            .iter()
            .filter(|s| !s.is_virtual && clear(s))
            .min_by(|a, b| a.center.distance(mid).total_cmp(&b.center.distance(mid)))
        else {
            return Ok(None);
        };
        let half = 0.5 * self.config.tracker.pitch_px;
        let a = edge_angle_mod90(sq).to_radians();
        let (ex, ey) = (Point2::new(a.cos(), -a.sin()), Point2::new(a.sin(), a.cos()));
        let inv = h.inverse()?;
        let mut src = [Point2::new(0.0, 0.0); 4];
        let mut dst = [Point2::new(0.0, 0.0); 4];
        for k in 0..4 {
            let d = sq.corners[k] - sq.center;
            let (su, sv) = (d.dot(ex).signum(), d.dot(ey).signum());
            dst[k] = sq.center + ex * (su * half) + ey * (sv * half);
            src[k] = inv.apply(sq.corners[k])?;
        }
        Ok(Some(estimate_homography(&src, &dst)?))
    }

    fn detect(&mut self, topdown: &ImageBuffer, remap: &RemapTable) -> Result<FrameDetections> {
        let valid = remap.valid_mask();
        let tags = detect_tags(topdown, Some(valid), &self.config.tags);
        let mut masked = None;
        for t in &tags {
            masked = Some(mask_region(masked.as_ref().unwrap_or(topdown), &t.corners, self.config.tag_mask_margin));
        }
        let masked = masked.as_ref().unwrap_or(topdown);
        let cross = self.crosshair.detect(masked);
        let gray = rgb_to_gray(masked)?;
        let squares = detect_squares(&gray, Some(&cross), &tags, Some(valid), &self.config.squares);
        let all = extend_virtual_squares(&squares, self.config.view.width as f64, self.config.view.height as f64);
        Ok(FrameDetections {
            crosshair: Some(cross),
            squares: all,
            tags,
        })
    }

    /// Localize one raw frame. `None` stands for a frame that could not be
    /// read; it is bridged by the motion model.
    pub fn process(&mut self, frame: usize, t: f64, raw: Option<&ImageBuffer>, keep_topdown: bool) -> Result<FrameOutput> {
        let Some(raw) = raw else {
            let detections = FrameDetections::default();
            let estimate = self.tracker.step(frame, t, &detections)?;
            return Ok(FrameOutput {
                estimate,
                detections,
                topdown: None,
            });
        };
        let cam = &self.config.camera.model;
        if raw.width() != cam.width || raw.height() != cam.height || raw.channels() != 3 {
            return Err(Error::InvalidInput(format!(
                "frame {frame} is {}×{}×{}, expected {}×{}×3",
                raw.width(),
                raw.height(),
                raw.channels(),
                cam.width,
                cam.height
            )));
        }
        if self.remap.is_none() || self.config.per_frame_homography {
            let h0 = match &self.homography {
                Some(h) if !self.config.per_frame_homography => *h,
                _ => self.nominal()?,
            };
            let table = self.table(&h0)?;
            let first = table.apply(raw);
            let dets = self.detect_probe(&first, &table)?;
            match self.refine_homography(&h0, &dets)? {
                Some(h) => {
                    self.remap = Some(self.table(&h)?);
                    self.homography = Some(h);
                }
                None => {
                    // no square yet: rectify with the nominal view and retry next frame
                    self.remap = None;
                    let detections = self.detect(&first, &table)?;
                    let estimate = self.tracker.step(frame, t, &detections)?;
                    return Ok(FrameOutput {
                        estimate,
                        detections,
                        topdown: keep_topdown.then_some(first),
                    });
                }
            }
        }
        let remap = self.remap.take().expect("remap table built above");
        let topdown = remap.apply(raw);
        let detections = self.detect(&topdown, &remap);
        self.remap = Some(remap);
        let detections = detections?;
        let estimate = self.tracker.step(frame, t, &detections)?;
        Ok(FrameOutput {
            estimate,
            detections,
            topdown: keep_topdown.then_some(topdown),
        })
    }

    /// Square detection without touching the crosshair history.
    fn detect_probe(&self, topdown: &ImageBuffer, remap: &RemapTable) -> Result<Vec<SquareDetection>> {
        let valid = remap.valid_mask();
        let tags = detect_tags(topdown, Some(valid), &self.config.tags);
        let gray = rgb_to_gray(topdown)?;
        let cross = self.crosshair.prior();
        Ok(detect_squares(&gray, Some(&cross), &tags, Some(valid), &self.config.squares))
    }
}
