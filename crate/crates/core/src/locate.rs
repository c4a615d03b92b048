//! Pose estimation from per-frame detections: local square coordinates,
//! heading disambiguation, global resolution through floor tags and
//! frame-to-frame square tracking.

use serde::{Deserialize, Serialize};

use crate::detect::{CrosshairDetection, CrosshairQuality, SquareDetection, TagDetection};
use crate::error::{Error, Result};
use crate::geometry::{angle_diff_deg, normalize_deg, point_in_polygon, Point2, Pose2D};

/// Placement of one floor tag: the chessboard square it sits in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagPlacement {
    pub id: u8,
    pub col: i64,
    pub row: i64,
}

/// The chessboard floor. Square `(col, row)` spans
/// `origin + [col, col+1] × [row, row+1] · square_size` in world meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FloorMap {
    pub square_size: f64,
    pub origin: Point2,
    pub columns: i64,
    pub rows: i64,
    pub tags: Vec<TagPlacement>,
}

impl Default for FloorMap {
    fn default() -> Self {
        let (columns, rows) = (36, 36);
        Self {
            square_size: 1.0 / 6.0,
            origin: Point2::new(-3.0, -3.0),
            columns,
            rows,
            tags: Self::standard_tags(columns, rows),
        }
    }
}

impl FloorMap {
    /// A tag in every square with even column and even row, limited to the
    /// first 16 such columns and rows so the 256 ids suffice. Id is
    /// `row / 2 · 16 + col / 2`.
    pub fn standard_tags(columns: i64, rows: i64) -> Vec<TagPlacement> {
        let mut tags = Vec::new();
        for r in (0..rows).step_by(2) {
            for c in (0..columns).step_by(2) {
                let (tc, tr) = (c / 2, r / 2);
                if tc < 16 && tr < 16 {
                    tags.push(TagPlacement {
                        id: (tr * 16 + tc) as u8,
                        col: c,
                        row: r,
                    });
                }
            }
        }
        tags
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.square_size > 0.0 && self.square_size.is_finite()) {
            return Err(Error::Config("square_size must be positive".into()));
        }
        if self.columns < 1 || self.rows < 1 {
            return Err(Error::Config("floor needs at least one square".into()));
        }
        let mut ids = [false; 256];
        let mut cells = std::collections::HashSet::new();
        for t in &self.tags {
            if std::mem::replace(&mut ids[t.id as usize], true) {
                return Err(Error::Config(format!("tag id {} placed twice", t.id)));
            }
            if !cells.insert((t.col, t.row)) {
                return Err(Error::Config(format!("two tags in square ({}, {})", t.col, t.row)));
            }
        }
        Ok(())
    }

    pub fn tag_square(&self, id: u8) -> Option<(i64, i64)> {
        self.tags.iter().find(|t| t.id == id).map(|t| (t.col, t.row))
    }

    pub fn tag_in(&self, col: i64, row: i64) -> Option<u8> {
        self.tags.iter().find(|t| t.col == col && t.row == row).map(|t| t.id)
    }

    /// World point of local coordinates `(u, v)` in square `(col, row)`.
    pub fn world(&self, col: f64, row: f64) -> Point2 {
        Point2::new(
            self.origin.x + col * self.square_size,
            self.origin.y + row * self.square_size,
        )
    }

    /// Square containing a world point.
    pub fn square_of(&self, p: Point2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.square_size).floor() as i64,
            ((p.y - self.origin.y) / self.square_size).floor() as i64,
        )
    }

    /// White squares are those with even `col + row`; tags sit on white.
    pub fn is_white(&self, col: i64, row: i64) -> bool {
        (col + row).rem_euclid(2) == 0
    }

    pub fn extent(&self) -> (Point2, Point2) {
        (self.origin, self.world(self.columns as f64, self.rows as f64))
    }
}

/// Image direction (y down) of an image angle in degrees.
pub fn image_dir(angle_deg: f64) -> Point2 {
    let a = angle_deg.to_radians();
    Point2::new(a.cos(), -a.sin())
}

/// Image angle (degrees, counter-clockwise with y up) of a direction.
pub fn image_angle(d: Point2) -> f64 {
    (-d.y).atan2(d.x).to_degrees()
}

pub fn heading_from_lines(vertical_angle: f64, grid_x_direction: f64) -> f64 {
    normalize_deg(vertical_angle - grid_x_direction)
}

/// `measured + k·90°` closest to `predicted`; on a tie the smaller `k` wins.
pub fn disambiguate_heading(measured_mod90: f64, predicted: f64) -> f64 {
    let mut best = (f64::MAX, measured_mod90);
    for k in -2..=2 {
        let cand = measured_mod90 + 90.0 * k as f64;
        let d = angle_diff_deg(cand, predicted).abs();
        if d < best.0 - 1e-12 {
            best = (d, cand);
        }
    }
    normalize_deg(best.1)
}

/// Largest speed at which consecutive frames sample every square at least
/// twice: `fps · square_size / 2`.
pub fn max_velocity(square_size: f64, fps: f64) -> f64 {
    fps * square_size / 2.0
}

/// Square edge directions folded into `[0, 90)` by averaging on the
/// quadrupled circle.
pub fn edge_angle_mod90(sq: &SquareDetection) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for k in 0..4 {
        let d = sq.corners[(k + 1) % 4] - sq.corners[k];
        let a = 4.0 * image_angle(d).to_radians();
        let w = d.norm();
        s += w * a.sin();
        c += w * a.cos();
    }
    (s.atan2(c).to_degrees() / 4.0).rem_euclid(90.0)
}

/// Refine an approximate grid-x image angle with the two edges of `sq` most
/// parallel to it.
pub fn grid_x_from_square(sq: &SquareDetection, approx_deg: f64) -> f64 {
    let ex = image_dir(approx_deg);
    let mut edges: Vec<Point2> = (0..4)
        .map(|k| {
            let d = sq.corners[(k + 1) % 4] - sq.corners[k];
            if d.dot(ex) < 0.0 {
                d * -1.0
            } else {
                d
            }
        })
        .collect();
    edges.sort_by(|a, b| (b.dot(ex) / b.norm()).total_cmp(&(a.dot(ex) / a.norm())));
    image_angle(edges[0] + edges[1])
}

/// Corners of `sq` as `[P1, P2, P3, P4]`: P1 is the world lower-left corner,
/// P2 follows along world +x, P4 along world +y.
pub fn world_ordered_corners(sq: &SquareDetection, grid_x_deg: f64) -> [Point2; 4] {
    let ex = image_dir(grid_x_deg);
    let ey = image_dir(grid_x_deg + 90.0);
    let k = (0..4)
        .min_by(|&a, &b| {
            let pa = sq.corners[a].dot(ex) + sq.corners[a].dot(ey);
            let pb = sq.corners[b].dot(ex) + sq.corners[b].dot(ey);
            pa.total_cmp(&pb)
        })
        .unwrap_or(0);
    let c = sq.corners;
    // screen order is counter-clockwise, as is world +x then +y
    [c[k], c[(k + 1) % 4], c[(k + 2) % 4], c[(k + 3) % 4]]
}

/// Bilinear coordinates of `center` in the square: `(0, 0)` at P1, `u`
/// along world +x, `v` along world +y.
pub fn local_position(center: Point2, sq: &SquareDetection, grid_x_deg: f64) -> Result<(f64, f64)> {
    let [p1, p2, p3, p4] = world_ordered_corners(sq, grid_x_deg);
    let (e1, e2, e3) = (p2 - p1, p4 - p1, p1 - p2 + p3 - p4);
    let (mut u, mut v) = (0.5, 0.5);
    for _ in 0..30 {
        let r = p1 + e1 * u + e2 * v + e3 * (u * v) - center;
        let ju = e1 + e3 * v;
        let jv = e2 + e3 * u;
        let det = ju.cross(jv);
        if det.abs() < 1e-12 {
            return Err(Error::Singular("degenerate square".into()));
        }
        let du = (r.cross(jv)) / det;
        let dv = (ju.cross(r)) / det;
        u -= du;
        v -= dv;
        if du.abs() < 1e-14 && dv.abs() < 1e-14 {
            break;
        }
    }
    const TOL: f64 = 1e-9;
    if !(-TOL..=1.0 + TOL).contains(&u) || !(-TOL..=1.0 + TOL).contains(&v) {
        return Err(Error::OutsideSquare);
    }
    Ok((u, v))
}

/// Integer square offset from the square centered at `from` to the one
/// centered at `to`, measured along the world axes at `pitch_px` per square.
pub fn square_offset(from: Point2, to: Point2, grid_x_deg: f64, pitch_px: f64, tolerance: f64) -> Result<(i64, i64)> {
    let d = to - from;
    let fx = d.dot(image_dir(grid_x_deg)) / pitch_px;
    let fy = d.dot(image_dir(grid_x_deg + 90.0)) / pitch_px;
    let (rx, ry) = (fx.round(), fy.round());
    if (fx - rx).abs() > tolerance || (fy - ry).abs() > tolerance {
        return Err(Error::GridMisdetection(fx, fy));
    }
    Ok((rx as i64, ry as i64))
}

/// World position of local coordinates in the square `delta` away from the
/// square holding tag `tag_id`.
pub fn resolve_global(local: (f64, f64), delta: (i64, i64), tag_id: u8, map: &FloorMap) -> Result<Point2> {
    let (tc, tr) = map.tag_square(tag_id).ok_or(Error::UnknownTag(tag_id))?;
    Ok(map.world(
        (tc + delta.0) as f64 + local.0,
        (tr + delta.1) as f64 + local.1,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoseSource {
    Measured,
    VirtualSquare,
    MotionModel,
}

impl PoseSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoseSource::Measured => "measured",
            PoseSource::VirtualSquare => "virtual-square",
            PoseSource::MotionModel => "motion-model",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStatus {
    Uninitialized,
    Relative,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEstimate {
    pub frame: usize,
    pub t: f64,
    pub pose: Pose2D,
    pub source: PoseSource,
    pub quality: CrosshairQuality,
}

/// Evidence for one frame, all in top-down pixels.
#[derive(Clone, Debug, Default)]
pub struct FrameDetections {
    pub crosshair: Option<CrosshairDetection>,
    /// Detected and virtual squares.
    pub squares: Vec<SquareDetection>,
    pub tags: Vec<TagDetection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    /// Nominal square pitch in the top-down view.
    pub pitch_px: f64,
    /// Local-coordinate change between frames that signals a square jump.
    pub jump_threshold_px: f64,
    /// Allowed distance of a tag offset from an integer number of squares.
    pub offset_tolerance: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            pitch_px: 300.0,
            jump_threshold_px: 150.0,
            offset_tolerance: 0.2,
        }
    }
}

/// Inter-frame state. Internally the pose lives in grid units: square
/// index plus local coordinates, scaled by the square size, with heading in
/// the same frame. In global mode that frame is the world frame shifted to
/// the floor origin; in relative mode it is anchored at the first square
/// seen.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerState {
    pub status: InitStatus,
    pub square: Option<(i64, i64)>,
    /// Local coordinates of the last measured frame, `None` after a gap.
    pub last_local: Option<(f64, f64)>,
    /// Relative mode: internal pose of the first measured frame.
    anchor: Pose2D,
    history: Vec<FrameEstimate>,
}

impl Default for TrackerState {
    fn default() -> Self {
        Self {
            status: InitStatus::Uninitialized,
            square: None,
            last_local: None,
            anchor: Pose2D::default(),
            history: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Tracker {
    map: FloorMap,
    params: TrackerParams,
    state: TrackerState,
}

/// Constant-velocity extrapolation from the last two poses.
pub fn extrapolate(p0: &FrameEstimate, p1: &FrameEstimate, t: f64) -> Pose2D {
    let dt = p1.t - p0.t;
    if dt <= 0.0 {
        return p1.pose;
    }
    let r = (t - p1.t) / dt;
    Pose2D::new(
        p1.pose.x + (p1.pose.x - p0.pose.x) * r,
        p1.pose.y + (p1.pose.y - p0.pose.y) * r,
        p1.pose.theta + angle_diff_deg(p1.pose.theta, p0.pose.theta) * r,
    )
}

impl Tracker {
    pub fn new(map: FloorMap, params: TrackerParams) -> Self {
        Self {
            map,
            params,
            state: TrackerState::default(),
        }
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn map(&self) -> &FloorMap {
        &self.map
    }

    /// Every estimate so far, with retroactive corrections applied.
    pub fn history(&self) -> &[FrameEstimate] {
        &self.state.history
    }

    /// Square index of the last estimate in world terms, when global.
    pub fn global_square(&self) -> Option<(i64, i64)> {
        match self.state.status {
            InitStatus::Global => self.state.square,
            _ => None,
        }
    }

    fn to_reported(&self, internal: &Pose2D) -> Pose2D {
        match self.state.status {
            InitStatus::Global => Pose2D::new(
                internal.x + self.map.origin.x,
                internal.y + self.map.origin.y,
                internal.theta,
            ),
            _ => self.state.anchor.inverse().compose(internal),
        }
    }

    fn to_internal(&self, reported: &Pose2D) -> Pose2D {
        match self.state.status {
            InitStatus::Global => Pose2D::new(
                reported.x - self.map.origin.x,
                reported.y - self.map.origin.y,
                reported.theta,
            ),
            _ => self.state.anchor.compose(reported),
        }
    }

    fn predicted(&self, t: f64) -> Option<Pose2D> {
        let h = &self.state.history;
        match h.len() {
            0 => None,
            1 => Some(h[0].pose),
            n => Some(extrapolate(&h[n - 2], &h[n - 1], t)),
        }
    }

    pub fn step(&mut self, frame: usize, t: f64, dets: &FrameDetections) -> Result<FrameEstimate> {
        if let Some(last) = self.state.history.last() {
            if !(t > last.t) {
                return Err(Error::NonMonotonicTimestamp {
                    previous: last.t,
                    current: t,
                });
            }
        }
        let quality = dets
            .crosshair
            .map_or(CrosshairQuality::Fallback, |c| c.quality);
        let predicted = self.predicted(t);
        let est = match self.measure(dets, predicted) {
            Some((pose, source)) => FrameEstimate {
                frame,
                t,
                pose,
                source,
                quality,
            },
            None => {
                self.state.last_local = None;
                FrameEstimate {
                    frame,
                    t,
                    pose: predicted.unwrap_or_default(),
                    source: PoseSource::MotionModel,
                    quality,
                }
            }
        };
        self.state.history.push(est);
        Ok(est)
    }

    fn measure(&mut self, dets: &FrameDetections, predicted: Option<Pose2D>) -> Option<(Pose2D, PoseSource)> {
        let cross = dets.crosshair?;
        let center = cross.center;
        let sq = dets
            .squares
            .iter()
            .filter(|s| point_in_polygon(center, &s.corners))
            .min_by_key(|s| s.is_virtual)?;
        let source = if sq.is_virtual {
            PoseSource::VirtualSquare
        } else {
            PoseSource::Measured
        };
        let s = self.map.square_size;
        let m90 = normalize_deg(cross.vertical_angle - edge_angle_mod90(sq)).rem_euclid(90.0);
        let pred_internal = predicted.map(|p| self.to_internal(&p));

        let relative = self.track(center, cross.vertical_angle, sq, m90, pred_internal);

        if let Some(fix) = self.tag_fix(center, cross.vertical_angle, sq, m90, dets) {
            let (col, row, u, v, heading) = fix;
            let world = Pose2D::new(
                self.map.origin.x + (col as f64 + u) * s,
                self.map.origin.y + (row as f64 + v) * s,
                heading,
            );
            if self.state.status == InitStatus::Relative {
                if let Some(rel) = relative {
                    let correction = world.compose(&rel.inverse());
                    for e in &mut self.state.history {
                        e.pose = correction.compose(&e.pose);
                    }
                }
            }
            self.state.status = InitStatus::Global;
            self.state.square = Some((col, row));
            self.state.last_local = Some((u, v));
            return Some((world, source));
        }
        relative.map(|p| (p, source))
    }

    /// Square tracking without tags. Returns the reported pose.
    fn track(
        &mut self,
        center: Point2,
        vertical: f64,
        sq: &SquareDetection,
        m90: f64,
        pred_internal: Option<Pose2D>,
    ) -> Option<Pose2D> {
        let s = self.map.square_size;
        let approx = disambiguate_heading(m90, pred_internal.map_or(0.0, |p| p.theta));
        let grid_x = grid_x_from_square(sq, normalize_deg(vertical - approx));
        let heading = heading_from_lines(vertical, grid_x);
        let (u, v) = local_position(center, sq, grid_x).ok()?;
        let (col, row) = match (self.state.status, self.state.square, self.state.last_local, pred_internal) {
            (InitStatus::Uninitialized, ..) | (_, None, ..) => {
                self.state.status = InitStatus::Relative;
                self.state.anchor = Pose2D::new(u * s, v * s, heading);
                (0, 0)
            }
            (_, Some((c, r)), Some((pu, pv)), _) => {
                let th = self.params.jump_threshold_px;
                let du = (u - pu) * self.params.pitch_px;
                let dv = (v - pv) * self.params.pitch_px;
                let step = |d: f64| -> i64 {
                    if d < -th {
                        1
                    } else if d > th {
                        -1
                    } else {
                        0
                    }
                };
                (c + step(du), r + step(dv))
            }
            (_, Some(_), None, Some(p)) => ((p.x / s - u).round() as i64, (p.y / s - v).round() as i64),
            (_, Some(sq_idx), None, None) => sq_idx,
        };
        self.state.square = Some((col, row));
        self.state.last_local = Some((u, v));
        let internal = Pose2D::new((col as f64 + u) * s, (row as f64 + v) * s, heading);
        Some(self.to_reported(&internal))
    }

    /// Global fix from the visible tag nearest the crosshair:
    /// `(col, row, u, v, heading)` in world terms.
    fn tag_fix(
        &self,
        center: Point2,
        vertical: f64,
        sq: &SquareDetection,
        m90: f64,
        dets: &FrameDetections,
    ) -> Option<(i64, i64, f64, f64, f64)> {
        let tag = dets
            .tags
            .iter()
            .filter(|t| self.map.tag_square(t.id).is_some())
            .min_by(|a, b| a.square_center.distance(center).total_cmp(&b.square_center.distance(center)))?;
        let coarse = normalize_deg(vertical - tag.x_direction_deg());
        let approx = disambiguate_heading(m90, coarse);
        let grid_x = grid_x_from_square(sq, normalize_deg(vertical - approx));
        let heading = heading_from_lines(vertical, grid_x);
        let (u, v) = local_position(center, sq, grid_x).ok()?;
        let delta = match square_offset(tag.square_center, sq.center, grid_x, self.params.pitch_px, self.params.offset_tolerance) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("tag {} ignored: {e}", tag.id);
                return None;
            }
        };
        let (tc, tr) = self.map.tag_square(tag.id)?;
        Some((tc + delta.0, tr + delta.1, u, v, heading))
    }
}
