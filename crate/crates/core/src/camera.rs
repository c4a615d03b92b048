//! Equidistant fisheye camera model, homographies and image rectification.

use crate::error::{Error, Result};
use crate::geometry::{triangle_area2, Point2};
use crate::image::{BinaryImage, ImageBuffer};
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if !(self.cx >= 0.0 && self.cy >= 0.0 && self.cx < width as f64 && self.cy < height as f64) {
            return Err(Error::Config(format!(
                "principal point ({}, {}) outside {width}x{height} image",
                self.cx, self.cy
            )));
        }
        Ok(())
    }

    /// Scale focal lengths, keeping the principal point.
    pub fn with_focal_scale(&self, s: f64) -> Self {
        Self {
            fx: self.fx * s,
            fy: self.fy * s,
            ..*self
        }
    }

    #[inline]
    pub fn to_pixel(&self, x: f64, y: f64) -> Point2 {
        Point2::new(self.fx * x + self.cx, self.fy * y + self.cy)
    }

    #[inline]
    pub fn to_normalized(&self, p: Point2) -> (f64, f64) {
        ((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy)
    }
}

/// Equidistant fisheye polynomial `θd = θ (1 + k1 θ² + k2 θ⁴ + k3 θ⁶ + k4 θ⁸)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistortionCoeffs {
    pub k: [f64; 4],
}

const NEWTON_MAX_ITERS: usize = 20;
const NEWTON_TOL: f64 = 1e-10;

impl DistortionCoeffs {
    pub fn new(k1: f64, k2: f64, k3: f64, k4: f64) -> Self {
        Self {
            k: [k1, k2, k3, k4],
        }
    }

    #[inline]
    pub fn distort_theta(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        let [k1, k2, k3, k4] = self.k;
        theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))))
    }

    #[inline]
    fn derivative(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        let [k1, k2, k3, k4] = self.k;
        1.0 + t2 * (3.0 * k1 + t2 * (5.0 * k2 + t2 * (7.0 * k3 + t2 * 9.0 * k4)))
    }

    /// Invert the polynomial by Newton iteration. `None` if it fails to
    /// converge or leaves `[0, π/2)`.
    pub fn undistort_theta(&self, theta_d: f64) -> Option<f64> {
        let mut theta = theta_d;
        for _ in 0..NEWTON_MAX_ITERS {
            let f = self.distort_theta(theta) - theta_d;
            let d = self.derivative(theta);
            if d <= 0.0 {
                return None;
            }
            let step = f / d;
            theta -= step;
            if step.abs() < NEWTON_TOL {
                return (0.0..std::f64::consts::FRAC_PI_2)
                    .contains(&theta)
                    .then_some(theta);
            }
        }
        None
    }

    /// Reject coefficient sets whose polynomial is not strictly increasing on
    /// `[0, theta_max]`.
    pub fn validate_monotonic(&self, theta_max: f64) -> Result<()> {
        const STEPS: usize = 2000;
        for i in 0..=STEPS {
            let t = theta_max * i as f64 / STEPS as f64;
            if self.derivative(t) <= 0.0 {
                return Err(Error::Config(format!(
                    "distortion polynomial {:?} is not monotonic at θ = {:.4} rad",
                    self.k, t
                )));
            }
        }
        Ok(())
    }

    /// Pinhole-normalized coordinates to fisheye-normalized coordinates.
    #[inline]
    pub fn distort_normalized(&self, a: f64, b: f64) -> (f64, f64) {
        let r = a.hypot(b);
        if r < 1e-15 {
            return (a, b);
        }
        let theta = r.atan();
        let s = self.distort_theta(theta) / r;
        (a * s, b * s)
    }

    /// Fisheye-normalized coordinates back to pinhole-normalized ones.
    pub fn undistort_normalized(&self, xd: f64, yd: f64) -> Option<(f64, f64)> {
        let rd = xd.hypot(yd);
        if rd < 1e-15 {
            return Some((xd, yd));
        }
        let theta = self.undistort_theta(rd)?;
        let s = theta.tan() / rd;
        Some((xd * s, yd * s))
    }
}

/// Fisheye camera: intrinsics, distortion and sensor size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisheyeCamera {
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    pub width: usize,
    pub height: usize,
}

impl FisheyeCamera {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate(self.width, self.height)?;
        // farthest sensor corner bounds the field of view that must be invertible
        let k = &self.intrinsics;
        let dx = k.cx.max(self.width as f64 - k.cx) / k.fx;
        let dy = k.cy.max(self.height as f64 - k.cy) / k.fy;
        let theta_d_max = dx.hypot(dy);
        let theta_max = (theta_d_max * 1.5).min(std::f64::consts::FRAC_PI_2);
        self.distortion.validate_monotonic(theta_max)
    }

    /// Raw fisheye pixel to the matching pixel of a pinhole view `out`.
    pub fn undistort_point(&self, raw: Point2, out: &CameraIntrinsics) -> Option<Point2> {
        let (xd, yd) = self.intrinsics.to_normalized(raw);
        let (a, b) = self.distortion.undistort_normalized(xd, yd)?;
        Some(out.to_pixel(a, b))
    }

    /// Pinhole pixel of view `view` to the raw fisheye pixel.
    #[inline]
    pub fn distort_point(&self, p: Point2, view: &CameraIntrinsics) -> Point2 {
        let (a, b) = view.to_normalized(p);
        let (xd, yd) = self.distortion.distort_normalized(a, b);
        self.intrinsics.to_pixel(xd, yd)
    }
}

/// Projective map of the plane, normalized so `h33 = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

/// Relative determinant floor below which a homography counts as singular.
pub const DEFAULT_DET_EPS: f64 = 1e-12;

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        Self::from_matrix_eps(m, DEFAULT_DET_EPS)
    }

    pub fn from_matrix_eps(m: Matrix3<f64>, det_eps: f64) -> Result<Self> {
        let h33 = m[(2, 2)];
        if h33.abs() < 1e-300 || !m.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular("homography cannot be normalized (h33 = 0)".into()));
        }
        let m = m / h33;
        let scale = m.norm();
        if m.determinant().abs() <= det_eps * scale * scale * scale {
            return Err(Error::Singular("homography determinant is ~0".into()));
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self
            .m
            .try_inverse()
            .ok_or_else(|| Error::Singular("homography not invertible".into()))?;
        Homography::from_matrix(inv)
    }

    pub fn compose(&self, then: &Homography) -> Result<Homography> {
        Homography::from_matrix(then.m * self.m)
    }

    /// Perspective-divided image of `p`.
    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        let scale = v.x.abs().max(v.y.abs()).max(1.0);
        if v.z.abs() < 1e-12 * scale {
            return Err(Error::PointAtInfinity);
        }
        Ok(Point2::new(v.x / v.z, v.y / v.z))
    }

    /// Like [`Homography::apply`] but returns non-finite coordinates instead
    /// of an error; used in per-pixel loops.
    #[inline]
    pub fn apply_unchecked(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
        (
            (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / w,
            (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / w,
        )
    }
}

/// Similarity that maps a point set to zero mean and mean distance √2.
fn normalizing_transform(pts: &[Point2; 4]) -> Matrix3<f64> {
    let c = pts.iter().fold(Point2::default(), |a, p| a + *p) * 0.25;
    let mean_dist = pts.iter().map(|p| p.distance(c)).sum::<f64>() / 4.0;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

fn check_non_degenerate(pts: &[Point2; 4], which: &str) -> Result<()> {
    let scale = pts
        .iter()
        .flat_map(|p| pts.iter().map(move |q| p.distance(*q)))
        .fold(0.0, f64::max);
    if !(scale > 0.0) || pts.iter().any(|p| !p.is_finite()) {
        return Err(Error::Singular(format!("{which} points are coincident")));
    }
    for (a, b, c) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        if triangle_area2(pts[a], pts[b], pts[c]).abs() < 1e-9 * scale * scale {
            return Err(Error::Singular(format!(
                "{which} points {a}, {b}, {c} are collinear"
            )));
        }
    }
    Ok(())
}

/// Exact 4-point direct linear transform with Hartley normalization.
pub fn estimate_homography(src: &[Point2; 4], dst: &[Point2; 4]) -> Result<Homography> {
    check_non_degenerate(src, "source")?;
    check_non_degenerate(dst, "destination")?;
    let ts = normalizing_transform(src);
    let td = normalizing_transform(dst);
    let norm = |t: &Matrix3<f64>, p: Point2| {
        let v = t * Vector3::new(p.x, p.y, 1.0);
        (v.x, v.y)
    };
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y) = norm(&ts, src[i]);
        let (u, v) = norm(&td, dst[i]);
        let r = 2 * i;
        a.set_row(
            r,
            &SMatrix::<f64, 1, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]),
        );
        a.set_row(
            r + 1,
            &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]),
        );
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a
        .full_piv_lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("homography linear system is singular".into()))?;
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| Error::Singular("degenerate destination normalization".into()))?;
    Homography::from_matrix(td_inv * hn * ts)
}

/// Map `p` through `h`.
pub fn apply_homography(h: &Homography, p: Point2) -> Result<Point2> {
    h.apply(p)
}

/// Inverse-map warp: output pixel `p` takes the bilinear sample at `H⁻¹ p`;
/// pixels that fall outside the source are black.
pub fn warp_perspective(
    img: &ImageBuffer,
    h: &Homography,
    out_width: usize,
    out_height: usize,
) -> Result<ImageBuffer> {
    let inv = h.inverse()?;
    let mut out = ImageBuffer::new(out_width, out_height, img.channels());
    let mut buf = [0.0; 3];
    for y in 0..out_height {
        for x in 0..out_width {
            let (sx, sy) = inv.apply_unchecked(x as f64, y as f64);
            if img.sample_bilinear(sx, sy, &mut buf) {
                let px = out.pixel_mut(x, y);
                for (o, v) in px.iter_mut().zip(buf.iter()) {
                    *o = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    Ok(out)
}

/// Undistort to a pinhole view with the same intrinsics and size.
pub fn undistort_image(
    img: &ImageBuffer,
    intrinsics: &CameraIntrinsics,
    dist: &DistortionCoeffs,
) -> Result<ImageBuffer> {
    undistort_image_to(img, intrinsics, dist, intrinsics, img.width(), img.height())
}

/// Undistort to an arbitrary pinhole view `out_intrinsics` of the given size.
pub fn undistort_image_to(
    img: &ImageBuffer,
    intrinsics: &CameraIntrinsics,
    dist: &DistortionCoeffs,
    out_intrinsics: &CameraIntrinsics,
    out_width: usize,
    out_height: usize,
) -> Result<ImageBuffer> {
    let cam = FisheyeCamera {
        intrinsics: *intrinsics,
        distortion: *dist,
        width: img.width(),
        height: img.height(),
    };
    cam.validate()?;
    let mut out = ImageBuffer::new(out_width, out_height, img.channels());
    let mut buf = [0.0; 3];
    for y in 0..out_height {
        for x in 0..out_width {
            let src = cam.distort_point(Point2::new(x as f64, y as f64), out_intrinsics);
            if img.sample_bilinear(src.x, src.y, &mut buf) {
                let px = out.pixel_mut(x, y);
                for (o, v) in px.iter_mut().zip(buf.iter()) {
                    *o = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    Ok(out)
}

/// Layout of the metric top-down view: a `width × height` canvas at
/// `px_per_meter`, with the camera nadir at `nadir`. Image up is the robot's
/// forward direction and image left is robot left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopDownView {
    pub width: usize,
    pub height: usize,
    pub px_per_meter: f64,
    pub nadir: Point2,
}

impl Default for TopDownView {
    fn default() -> Self {
        Self {
            width: 1200,
            height: 960,
            px_per_meter: 1800.0,
            nadir: Point2::new(600.0, 480.0),
        }
    }
}

impl TopDownView {
    /// Pixel of a floor point given in the robot frame relative to the
    /// nadir (`forward`, `left`, meters).
    pub fn robot_to_px(&self, forward: f64, left: f64) -> Point2 {
        Point2::new(
            self.nadir.x - self.px_per_meter * left,
            self.nadir.y - self.px_per_meter * forward,
        )
    }

    /// Inverse of [`robot_to_px`](Self::robot_to_px): `(forward, left)`.
    pub fn px_to_robot(&self, p: Point2) -> (f64, f64) {
        ((self.nadir.y - p.y) / self.px_per_meter, (self.nadir.x - p.x) / self.px_per_meter)
    }

    /// Homography from the pinhole view `view` to this canvas for a camera
    /// looking straight down from `height` meters.
    pub fn nominal_homography(&self, view: &CameraIntrinsics, height: f64) -> Result<Homography> {
        let sx = self.px_per_meter * height / view.fx;
        let sy = self.px_per_meter * height / view.fy;
        Homography::from_rows([
            [sx, 0.0, self.nadir.x - sx * view.cx],
            [0.0, sy, self.nadir.y - sy * view.cy],
            [0.0, 0.0, 1.0],
        ])
    }
}

/// Precomputed per-pixel source coordinates for the composed
/// raw → undistorted → top-down resampling, applied with a single bilinear
/// interpolation.
#[derive(Clone, Debug)]
pub struct RemapTable {
    width: usize,
    height: usize,
    map: Vec<[f32; 2]>,
    valid: BinaryImage,
}

impl RemapTable {
    /// `view` is the pinhole view in which `h` (undistorted → top-down) is
    /// expressed.
    pub fn topdown(
        camera: &FisheyeCamera,
        view: &CameraIntrinsics,
        h: &Homography,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let inv = h.inverse()?;
        let mut map = Vec::with_capacity(width * height);
        let mut valid = BinaryImage::new(width, height);
        let (w, hgt) = ((camera.width - 1) as f64, (camera.height - 1) as f64);
        for y in 0..height {
            for x in 0..width {
                let (ux, uy) = inv.apply_unchecked(x as f64, y as f64);
                let (a, b) = view.to_normalized(Point2::new(ux, uy));
                // rays beyond the monotonic range of the lens polynomial never reach the floor
                let ok_ray = a.is_finite() && b.is_finite() && a.hypot(b) < 1e6;
                let raw = if ok_ray {
                    camera.distort_point(Point2::new(ux, uy), view)
                } else {
                    Point2::new(f64::NAN, f64::NAN)
                };
                let inside = raw.x >= 0.0 && raw.y >= 0.0 && raw.x <= w && raw.y <= hgt;
                valid.set(x, y, inside);
                map.push([raw.x as f32, raw.y as f32]);
            }
        }
        Ok(Self {
            width,
            height,
            map,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixels with a source sample inside the raw sensor.
    pub fn valid_mask(&self) -> &BinaryImage {
        &self.valid
    }

    pub fn source_of(&self, x: usize, y: usize) -> Option<Point2> {
        self.valid.get(x, y).then(|| {
            let [sx, sy] = self.map[y * self.width + x];
            Point2::new(sx as f64, sy as f64)
        })
    }

    pub fn apply(&self, raw: &ImageBuffer) -> ImageBuffer {
        let mut out = ImageBuffer::new(self.width, self.height, raw.channels());
        let mut buf = [0.0; 3];
        let c = raw.channels();
        for (i, [sx, sy]) in self.map.iter().enumerate() {
            if !self.valid.bits()[i] {
                continue;
            }
            if raw.sample_bilinear(*sx as f64, *sy as f64, &mut buf) {
                let o = &mut out.data_mut()[i * c..(i + 1) * c];
                for (dst, v) in o.iter_mut().zip(buf.iter()) {
                    *dst = (v + 0.5).clamp(0.0, 255.0) as u8;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> [Point2; 4] {
        [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    /// Projective map of the unit square onto `q` in closed form
    /// (square-to-quad construction), independent of the DLT solve.
    fn square_to_quad(q: &[Point2; 4]) -> Matrix3<f64> {
        let (x0, y0, x1, y1, x2, y2, x3, y3) =
            (q[0].x, q[0].y, q[1].x, q[1].y, q[2].x, q[2].y, q[3].x, q[3].y);
        let dx1 = x1 - x2;
        let dx2 = x3 - x2;
        let dy1 = y1 - y2;
        let dy2 = y3 - y2;
        let sx = x0 - x1 + x2 - x3;
        let sy = y0 - y1 + y2 - y3;
        let den = dx1 * dy2 - dx2 * dy1;
        let g = (sx * dy2 - dx2 * sy) / den;
        let h = (dx1 * sy - sx * dy1) / den;
        Matrix3::new(
            x1 - x0 + g * x1,
            x3 - x0 + h * x3,
            x0,
            y1 - y0 + g * y1,
            y3 - y0 + h * y3,
            y0,
            g,
            h,
            1.0,
        )
    }

    #[test]
    fn identity_from_identical_squares() {
        let h = estimate_homography(&unit_square(), &unit_square()).unwrap();
        assert!((h.matrix() - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn pure_scaling() {
        let dst = unit_square().map(|p| p * 300.0);
        let h = estimate_homography(&unit_square(), &dst).unwrap();
        let expected = Matrix3::new(300.0, 0.0, 0.0, 0.0, 300.0, 0.0, 0.0, 0.0, 1.0);
        assert!((h.matrix() - expected).norm() < 1e-9);
        let p = h.apply(Point2::new(1.0, 1.0)).unwrap();
        assert!((p.x - 300.0).abs() < 1e-9 && (p.y - 300.0).abs() < 1e-9);
    }

    #[test]
    fn general_quad_matches_closed_form() {
        let dst = [
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(0.0, 2.0),
        ];
        let h = estimate_homography(&unit_square(), &dst).unwrap();
        let oracle = square_to_quad(&dst);
        let oracle = oracle / oracle[(2, 2)];
        assert!((h.matrix() - oracle).norm() < 1e-10, "{} vs {}", h.matrix(), oracle);
        for (s, d) in unit_square().iter().zip(dst.iter()) {
            let p = h.apply(*s).unwrap();
            assert!(p.distance(*d) < 1e-9);
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let src = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(matches!(
            estimate_homography(&src, &unit_square()),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn apply_examples_and_infinity() {
        let id = Homography::identity();
        assert_eq!(id.apply(Point2::new(5.0, 7.0)).unwrap(), Point2::new(5.0, 7.0));
        let h = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(h.apply(Point2::new(-1.0, 3.0)), Err(Error::PointAtInfinity)));
        assert!(Homography::from_rows([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn random_round_trip_through_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = Matrix3::from_fn(|i, j| {
                if i == j {
                    1.0 + rng.gen_range(-0.3..0.3)
                } else if i == 2 {
                    rng.gen_range(-1e-3..1e-3)
                } else {
                    rng.gen_range(-0.5..0.5) * if j == 2 { 100.0 } else { 1.0 }
                }
            });
            let h = Homography::from_matrix(m).unwrap();
            let inv = h.inverse().unwrap();
            let p = Point2::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0));
            let back = inv.apply(h.apply(p).unwrap()).unwrap();
            assert!(back.distance(p) < 1e-9);
        }
    }

    #[test]
    fn warp_identity_copies_and_translation_moves_content_right() {
        let mut img = ImageBuffer::new(40, 30, 1);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i * 37 % 251) as u8;
        }
        let same = warp_perspective(&img, &Homography::identity(), 40, 30).unwrap();
        assert_eq!(same, img);
        let t = Homography::from_rows([[1.0, 0.0, 10.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let shifted = warp_perspective(&img, &t, 40, 30).unwrap();
        for y in 0..30 {
            for x in 0..10 {
                assert_eq!(shifted.gray_at(x, y), 0);
            }
            for x in 10..40 {
                assert_eq!(shifted.gray_at(x, y), img.gray_at(x - 10, y));
            }
        }
    }

    #[test]
    fn warp_then_inverse_warp_recovers_interior() {
        let mut img = ImageBuffer::new(120, 100, 1);
        for y in 0..100 {
            for x in 0..120 {
                let v = 128.0 + 100.0 * ((x as f64 / 9.0).sin() * (y as f64 / 7.0).cos());
                img.pixel_mut(x, y)[0] = v as u8;
            }
        }
        let h = Homography::from_rows([[1.02, 0.03, 2.0], [-0.02, 0.99, 1.5], [1e-5, -2e-5, 1.0]])
            .unwrap();
        let fwd = warp_perspective(&img, &h, 120, 100).unwrap();
        let back = warp_perspective(&fwd, &h.inverse().unwrap(), 120, 100).unwrap();
        let mut sum = 0.0;
        let mut n = 0.0;
        for y in 15..85 {
            for x in 15..105 {
                sum += (back.gray_at(x, y) as f64 - img.gray_at(x, y) as f64).abs();
                n += 1.0;
            }
        }
        assert!(sum / n < 2.0, "mean abs diff {}", sum / n);
    }

    fn test_camera(k: [f64; 4]) -> FisheyeCamera {
        FisheyeCamera {
            intrinsics: CameraIntrinsics {
                fx: 80.0,
                fy: 80.0,
                cx: 50.0,
                cy: 40.0,
            },
            distortion: DistortionCoeffs { k },
            width: 101,
            height: 81,
        }
    }

    #[test]
    fn zero_distortion_undistort_is_identity() {
        // With all k = 0 the lens is still equidistant (r = f·θ), so the
        // pinhole reprojection is the identity only where tan θ ≈ θ. A long
        // focal length keeps the whole raster in that regime (< 0.01 px).
        let mut cam = test_camera([0.0; 4]);
        cam.intrinsics.fx = 4000.0;
        cam.intrinsics.fy = 4000.0;
        let mut img = ImageBuffer::new(101, 81, 3);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i * 13 % 256) as u8;
        }
        let out = undistort_image(&img, &cam.intrinsics, &cam.distortion).unwrap();
        let max = out
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (*a as i32 - *b as i32).abs())
            .max()
            .unwrap();
        assert!(max <= 1, "max difference {max}");
    }

    #[test]
    fn zero_distortion_wide_field_matches_closed_form() {
        let cam = test_camera([0.0; 4]);
        let k = cam.intrinsics;
        for &(x, y) in &[(0.0, 0.0), (100.0, 80.0), (73.5, 12.25), (50.0, 40.0)] {
            let p = Point2::new(x, y);
            let raw = cam.distort_point(p, &k);
            // pinhole radius tan θ maps to fisheye radius θ
            let (a, b) = ((x - k.cx) / k.fx, (y - k.cy) / k.fy);
            let r = a.hypot(b);
            let s = if r == 0.0 { 1.0 } else { r.atan() / r };
            assert!((raw.x - (k.cx + k.fx * a * s)).abs() < 1e-9);
            assert!((raw.y - (k.cy + k.fy * b * s)).abs() < 1e-9);
        }
    }

    #[test]
    fn principal_point_is_fixed_for_any_distortion() {
        for k in [[0.05, 0.0, 0.0, 0.0], [-0.1, 0.02, 0.0, 0.0], [0.3, -0.05, 0.01, 0.0]] {
            let cam = test_camera(k);
            let mut img = ImageBuffer::new(101, 81, 1);
            img.pixel_mut(50, 40)[0] = 255;
            let out = undistort_image(&img, &cam.intrinsics, &cam.distortion).unwrap();
            assert_eq!(out.gray_at(50, 40), 255);
            let lit = out.data().iter().filter(|v| **v > 0).count();
            assert_eq!(lit, 1);
        }
    }

    #[test]
    fn non_monotonic_distortion_rejected() {
        let cam = test_camera([-0.6, 0.0, 0.0, 0.0]);
        let img = ImageBuffer::new(101, 81, 1);
        assert!(matches!(
            undistort_image(&img, &cam.intrinsics, &cam.distortion),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn newton_inverse_matches_forward() {
        let d = DistortionCoeffs::new(0.05, -0.01, 0.002, 0.0);
        for i in 0..150 {
            let t = i as f64 * 0.01;
            let back = d.undistort_theta(d.distort_theta(t)).unwrap();
            assert!((back - t).abs() < 1e-9);
        }
    }
}
