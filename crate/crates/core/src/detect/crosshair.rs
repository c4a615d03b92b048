use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::{angle_diff_deg, normalize_deg, LineSegment, Point2};
use crate::image::{rgb_to_hsv_pixel, BinaryImage, ImageBuffer};
use crate::imgproc::{canny, close, dilate, hough_lines, HoughLine, HoughParams, StructuringElement};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrosshairParams {
    pub g_min: u8,
    pub s_min: f64,
    pub hue_lo: f64,
    pub hue_hi: f64,
    /// Lower bound on `hue + 360·value`.
    pub hv_min: f64,
    pub search_radius: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub kernel_size: usize,
    pub hough: HoughParams,
    /// Lines farther than this from the strongest line of their cluster
    /// are dropped (degrees).
    pub cluster_tolerance: f64,
    /// Half-width of the band around each averaged line used for the
    /// least-squares refit (px).
    pub refine_band: f64,
    /// Distance from the center inside which pixels belong to both arms.
    pub refine_exclusion: f64,
    pub max_deviation: f64,
    pub max_orthogonality_error: f64,
    pub history: usize,
    /// Length of each arm checked for surviving laser pixels (px).
    pub arm_check_length: f64,
    pub min_arm_survival: f64,
    /// Position of the crosshair before any detection (top-down px).
    pub nominal_center: Point2,
    /// Half-width of the cross-sections sampled for the line profile fit
    /// (px).
    pub profile_half_width: f64,
    /// Smallest peak of a cross-section above its background.
    pub profile_min_contrast: f64,
    /// Cross-sections whose two background ends differ by more than this
    /// straddle a floor boundary and are skipped.
    pub profile_max_background_step: f64,
}

impl Default for CrosshairParams {
    fn default() -> Self {
        Self {
            g_min: 120,
            s_min: 0.35,
            hue_lo: 70.0,
            hue_hi: 170.0,
            hv_min: 150.0,
            search_radius: 150.0,
            canny_low: 50.0,
            canny_high: 150.0,
            kernel_size: 5,
            hough: HoughParams {
                min_votes: 40,
                ..HoughParams::default()
            },
            cluster_tolerance: 10.0,
            refine_band: 8.0,
            refine_exclusion: 12.0,
            max_deviation: 60.0,
            max_orthogonality_error: 5.0,
            history: 5,
            arm_check_length: 140.0,
            min_arm_survival: 0.4,
            nominal_center: Point2::new(600.0, 462.0),
            profile_half_width: 8.0,
            profile_min_contrast: 60.0,
            profile_max_background_step: 20.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrosshairQuality {
    Detected,
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosshairDetection {
    pub center: Point2,
    /// Image angle (degrees, counter-clockwise with y up) of the line that
    /// points toward the top of the frame; about 90 for an upright laser.
    pub vertical_angle: f64,
    /// Image angle of the left-to-right line; about 0.
    pub horizontal_angle: f64,
    pub quality: CrosshairQuality,
}

impl CrosshairDetection {
    pub fn nominal(center: Point2) -> Self {
        Self {
            center,
            vertical_angle: 90.0,
            horizontal_angle: 0.0,
            quality: CrosshairQuality::Fallback,
        }
    }

    /// Unit direction of the vertical line in image coordinates (y down).
    pub fn vertical_dir(&self) -> Point2 {
        let a = self.vertical_angle.to_radians();
        Point2::new(a.cos(), -a.sin())
    }

    pub fn horizontal_dir(&self) -> Point2 {
        let a = self.horizontal_angle.to_radians();
        Point2::new(a.cos(), -a.sin())
    }
}

fn is_laser(r: u8, g: u8, b: u8, p: &CrosshairParams) -> bool {
    if g < p.g_min {
        return false;
    }
    let hsv = rgb_to_hsv_pixel(r, g, b);
    hsv.s >= p.s_min && hsv.h >= p.hue_lo && hsv.h <= p.hue_hi && hsv.h + 360.0 * hsv.v >= p.hv_min
}

/// Laser-colored pixels of an RGB frame under default thresholds.
pub fn crosshair_mask(rgb: &ImageBuffer) -> BinaryImage {
    crosshair_mask_region(rgb, 0, 0, rgb.width(), rgb.height(), &CrosshairParams::default())
}

/// Laser mask restricted to a rectangle; pixels outside it are background.
pub fn crosshair_mask_region(
    rgb: &ImageBuffer,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    params: &CrosshairParams,
) -> BinaryImage {
    assert_eq!(rgb.channels(), 3, "crosshair mask needs an RGB frame");
    let mut out = BinaryImage::new(rgb.width(), rgb.height());
    for y in y0..(y0 + h).min(rgb.height()) {
        for x in x0..(x0 + w).min(rgb.width()) {
            let p = rgb.pixel(x, y);
            if is_laser(p[0], p[1], p[2], params) {
                out.set(x, y, true);
            }
        }
    }
    out
}

struct Region {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

fn search_region(rgb: &ImageBuffer, prior: Option<Point2>, radius: f64) -> Region {
    match prior {
        Some(c) => {
            let x0 = (c.x - radius).floor().max(0.0) as usize;
            let y0 = (c.y - radius).floor().max(0.0) as usize;
            let x1 = ((c.x + radius).ceil().max(0.0) as usize).min(rgb.width() - 1);
            let y1 = ((c.y + radius).ceil().max(0.0) as usize).min(rgb.height() - 1);
            Region {
                x0,
                y0,
                w: (x1 + 1).saturating_sub(x0),
                h: (y1 + 1).saturating_sub(y0),
            }
        }
        None => Region {
            x0: 0,
            y0: 0,
            w: rgb.width(),
            h: rgb.height(),
        },
    }
}

/// Average start/end points of a cluster of segments, orienting each one
/// along `dir` first.
fn average_segment(lines: &[&HoughLine], dir: Point2) -> LineSegment {
    let n = lines.len() as f64;
    let (mut a, mut b) = (Point2::new(0.0, 0.0), Point2::new(0.0, 0.0));
    for l in lines {
        let (p, q) = (l.segment.p0, l.segment.p1);
        let (s, e) = if (q - p).dot(dir) >= 0.0 { (p, q) } else { (q, p) };
        a = a + s;
        b = b + e;
    }
    LineSegment::new(a * (1.0 / n), b * (1.0 / n))
}

/// Total least squares line through the mask pixels within `band` of `line`
/// and farther than `exclusion` from `center`. Returns a point and a unit
/// direction oriented like `line`.
fn refit(mask: &BinaryImage, region: &Region, line: &LineSegment, center: Point2, band: f64, exclusion: f64) -> Option<(Point2, Point2)> {
    let dir = line.direction();
    let normal = Point2::new(-dir.y, dir.x);
    let (mut n, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let mut pts = Vec::new();
    for y in region.y0..region.y0 + region.h {
        for x in region.x0..region.x0 + region.w {
            if !mask.get(x, y) {
                continue;
            }
            let p = Point2::new(x as f64, y as f64);
            if (p - line.p0).dot(normal).abs() > band || (p - center).dot(dir).abs() < exclusion {
                continue;
            }
            n += 1.0;
            sx += p.x;
            sy += p.y;
            pts.push(p);
        }
    }
    if n < 10.0 {
        return None;
    }
    let c = Point2::new(sx / n, sy / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &pts {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut d = Point2::new(angle.cos(), angle.sin());
    if d.dot(dir) < 0.0 {
        d = d * -1.0;
    }
    Some((c, d))
}

/// Laser response of a pixel: green above the stronger of red and blue.
fn greenness(rgb: &ImageBuffer, p: Point2) -> Option<f64> {
    let mut v = [0.0; 3];
    rgb.sample_bilinear(p.x, p.y, &mut v).then(|| v[1] - v[0].max(v[2]))
}

/// Line through the sub-pixel centers of laser cross-sections taken every
/// 2 px along both arms of `dir` from `center`. Each center is the centroid
/// of the profile above half its peak, after subtracting the background
/// seen at the ends of the cross-section.
fn profile_refit(
    rgb: &ImageBuffer,
    region: &Region,
    center: Point2,
    dir: Point2,
    exclusion: f64,
    params: &CrosshairParams,
) -> Option<(Point2, Point2)> {
    let normal = Point2::new(-dir.y, dir.x);
    let hw = params.profile_half_width;
    let samples = (2.0 * hw / 0.5).round() as usize + 1;
    let inside = |p: Point2| {
        p.x >= region.x0 as f64 + hw
            && p.y >= region.y0 as f64 + hw
            && p.x <= (region.x0 + region.w) as f64 - 1.0 - hw
            && p.y <= (region.y0 + region.h) as f64 - 1.0 - hw
    };
    let mut pts = Vec::new();
    let mut profile = vec![0.0; samples];
    let reach = params.arm_check_length;
    for sign in [-1.0, 1.0] {
        let mut t = exclusion;
        'pos: while t <= reach {
            let p = center + dir * (sign * t);
            t += 2.0;
            if !inside(p) {
                continue;
            }
            for (k, v) in profile.iter_mut().enumerate() {
                let d = -hw + 0.5 * k as f64;
                match greenness(rgb, p + normal * d) {
                    Some(g) => *v = g,
                    None => continue 'pos,
                }
            }
            let left = profile[..3].iter().sum::<f64>() / 3.0;
            let right = profile[samples - 3..].iter().sum::<f64>() / 3.0;
            if (left - right).abs() > params.profile_max_background_step {
                continue;
            }
            let base = 0.5 * (left + right);
            let peak = profile.iter().fold(f64::MIN, |a, v| a.max(v - base));
            if peak < params.profile_min_contrast {
                continue;
            }
            let (mut sw, mut sd) = (0.0, 0.0);
            for (k, v) in profile.iter().enumerate() {
                let wgt = v - base - 0.5 * peak;
                if wgt > 0.0 {
                    sw += wgt;
                    sd += wgt * (-hw + 0.5 * k as f64);
                }
            }
            pts.push(p + normal * (sd / sw));
        }
    }
    if pts.len() < 10 {
        return None;
    }
    let c = pts.iter().fold(Point2::new(0.0, 0.0), |a, p| a + *p) * (1.0 / pts.len() as f64);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &pts {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut d = Point2::new(angle.cos(), angle.sin());
    if d.dot(dir) < 0.0 {
        d = d * -1.0;
    }
    Some((c, d))
}

/// Fraction of positions along the ray `center + t·dir`, `t` in
/// `[start, length]`, that have a mask pixel within 3 px across the ray.
/// Only positions inside the search region count.
fn arm_survival(mask: &BinaryImage, region: &Region, center: Point2, dir: Point2, start: f64, length: f64) -> f64 {
    let normal = Point2::new(-dir.y, dir.x);
    let (mut total, mut hit) = (0.0, 0.0);
    let mut t = start;
    while t <= length {
        let p = center + dir * t;
        let inside = p.x >= region.x0 as f64
            && p.y >= region.y0 as f64
            && p.x <= (region.x0 + region.w - 1) as f64
            && p.y <= (region.y0 + region.h - 1) as f64;
        if inside {
            total += 1.0;
            let found = (-3..=3).any(|k| {
                let q = p + normal * k as f64;
                mask.get_or_false(q.x.round() as i64, q.y.round() as i64)
            });
            if found {
                hit += 1.0;
            }
        }
        t += 1.0;
    }
    if total == 0.0 {
        0.0
    } else {
        hit / total
    }
}

/// Lines within `tolerance` degrees of the strongest one.
fn keep_cluster(cluster: Vec<&HoughLine>, tolerance: f64) -> Vec<&HoughLine> {
    let Some(best) = cluster.first().copied() else {
        return cluster;
    };
    cluster
        .into_iter()
        .filter(|l| {
            let d = (l.theta - best.theta).abs();
            d.min(std::f64::consts::PI - d).to_degrees() <= tolerance
        })
        .collect()
}

/// One detection attempt without fallback handling: `None` when either line
/// cluster is missing or an arm has too few surviving pixels.
fn detect_once(rgb: &ImageBuffer, prior: Option<Point2>, params: &CrosshairParams) -> Option<CrosshairDetection> {
    let region = search_region(rgb, prior, params.search_radius);
    if region.w < 3 || region.h < 3 {
        return None;
    }
    let mask = crosshair_mask_region(rgb, region.x0, region.y0, region.w, region.h, params);
    // detection runs on the region crop
    let crop = ImageBuffer::from_raw(
        region.w,
        region.h,
        1,
        (region.y0..region.y0 + region.h)
            .flat_map(|y| (region.x0..region.x0 + region.w).map(move |x| (x, y)))
            .map(|(x, y)| if mask.get(x, y) { 255 } else { 0 })
            .collect(),
    )
    .ok()?;
    let se = StructuringElement::square(params.kernel_size).ok()?;
    let edges = canny(&crop, params.canny_low, params.canny_high).ok()?;
    let blob = close(&dilate(&edges, &se), &se);
    let lines = hough_lines(&blob, &params.hough);
    if lines.is_empty() {
        return None;
    }
    let offset = Point2::new(region.x0 as f64, region.y0 as f64);
    // a line whose normal is near horizontal runs near vertical
    let (vertical, horizontal): (Vec<&HoughLine>, Vec<&HoughLine>) =
        lines.iter().partition(|l| l.theta.cos().abs() >= std::f64::consts::FRAC_1_SQRT_2);
    let (vertical, horizontal) = (keep_cluster(vertical, params.cluster_tolerance), keep_cluster(horizontal, params.cluster_tolerance));
    if vertical.is_empty() || horizontal.is_empty() {
        return None;
    }
    let up = Point2::new(0.0, -1.0);
    let right = Point2::new(1.0, 0.0);
    let shift = |s: LineSegment| LineSegment::new(s.p0 + offset, s.p1 + offset);
    let v_line = shift(average_segment(&vertical, up));
    let h_line = shift(average_segment(&horizontal, right));
    let rough = v_line.intersect_lines(&h_line)?;

    let (vp, vd) = refit(&mask, &region, &v_line, rough, params.refine_band, params.refine_exclusion)?;
    let (hp, hd) = refit(&mask, &region, &h_line, rough, params.refine_band, params.refine_exclusion)?;
    let mask_center = LineSegment::new(vp, vp + vd).intersect_lines(&LineSegment::new(hp, hp + hd))?;
    if !mask_center.is_finite() {
        return None;
    }
    let excl = params.refine_exclusion;
    let (vp, vd) = profile_refit(rgb, &region, mask_center, vd, excl, params).unwrap_or((vp, vd));
    let (hp, hd) = profile_refit(rgb, &region, mask_center, hd, excl, params).unwrap_or((hp, hd));
    let center = LineSegment::new(vp, vp + vd).intersect_lines(&LineSegment::new(hp, hp + hd))?;
    if !center.is_finite() {
        return None;
    }
    for dir in [vd, vd * -1.0, hd, hd * -1.0] {
        let s = arm_survival(&mask, &region, center, dir, params.refine_exclusion, params.arm_check_length);
        if s < params.min_arm_survival {
            return None;
        }
    }
    Some(CrosshairDetection {
        center,
        vertical_angle: (-vd.y).atan2(vd.x).to_degrees(),
        horizontal_angle: (-hd.y).atan2(hd.x).to_degrees(),
        quality: CrosshairQuality::Detected,
    })
}

fn accept(det: &CrosshairDetection, prior: Option<Point2>, params: &CrosshairParams) -> bool {
    let ortho = angle_diff_deg(det.vertical_angle, det.horizontal_angle).abs() - 90.0;
    let near = prior.is_none_or(|p| p.distance(det.center) <= params.max_deviation);
    ortho.abs() <= params.max_orthogonality_error && near
}

/// Detect the crosshair near `prior` (or in the whole frame without one).
/// Never fails: an unusable frame yields the prior itself with
/// `quality = Fallback`, or the nominal center when there is no prior.
pub fn detect_crosshair(rgb: &ImageBuffer, prior: Option<&CrosshairDetection>, params: &CrosshairParams) -> CrosshairDetection {
    let prior_center = prior.map(|p| p.center);
    match detect_once(rgb, prior_center, params) {
        Some(d) if accept(&d, prior_center, params) => d,
        _ => CrosshairDetection {
            quality: CrosshairQuality::Fallback,
            ..prior.copied().unwrap_or_else(|| CrosshairDetection::nominal(params.nominal_center))
        },
    }
}

/// Keeps the last detections; supplies the search prior and the fallback
/// estimate (mean of the last N detected centers and angles).
#[derive(Clone, Debug)]
pub struct CrosshairTracker {
    params: CrosshairParams,
    history: VecDeque<CrosshairDetection>,
}

impl CrosshairTracker {
    pub fn new(params: CrosshairParams) -> Self {
        Self {
            params,
            history: VecDeque::new(),
        }
    }

    pub fn params(&self) -> &CrosshairParams {
        &self.params
    }

    /// Mean of the stored detections, or the nominal crosshair.
    pub fn prior(&self) -> CrosshairDetection {
        if self.history.is_empty() {
            return CrosshairDetection::nominal(self.params.nominal_center);
        }
        let n = self.history.len() as f64;
        let c = self.history.iter().fold(Point2::new(0.0, 0.0), |a, d| a + d.center) * (1.0 / n);
        let mean_angle = |f: fn(&CrosshairDetection) -> f64| {
            let r = self.history[0];
            let base = f(&r);
            normalize_deg(base + self.history.iter().map(|d| angle_diff_deg(f(d), base)).sum::<f64>() / n)
        };
        CrosshairDetection {
            center: c,
            vertical_angle: mean_angle(|d| d.vertical_angle),
            horizontal_angle: mean_angle(|d| d.horizontal_angle),
            quality: CrosshairQuality::Fallback,
        }
    }

    pub fn detect(&mut self, rgb: &ImageBuffer) -> CrosshairDetection {
        let prior = self.prior();
        let found = if self.history.is_empty() {
            // before the first detection the nominal position is only a hint
            detect_once(rgb, Some(prior.center), &self.params)
                .or_else(|| detect_once(rgb, None, &self.params))
                .filter(|d| accept(d, None, &self.params))
        } else {
            detect_once(rgb, Some(prior.center), &self.params).filter(|d| accept(d, Some(prior.center), &self.params))
        };
        match found {
            Some(d) => {
                self.history.push_back(d);
                while self.history.len() > self.params.history {
                    self.history.pop_front();
                }
                d
            }
            None => prior,
        }
    }
}
