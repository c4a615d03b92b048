use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::SceneSpec;
use crate::detect::tags::tag_cells;
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};
use crate::image::ImageBuffer;

/// True pixel positions of one chessboard square. Corners are in world
/// order: `(col, row)`, `(col+1, row)`, `(col+1, row+1)`, `(col, row+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSquare {
    pub col: i64,
    pub row: i64,
    pub topdown: [Point2; 4],
    /// `None` for corners beyond the lens horizon.
    pub raw: [Option<Point2>; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub frame: usize,
    pub t: f64,
    /// Nominal crosshair pose in the world frame.
    pub pose: Pose2D,
    pub laser_visible: bool,
    /// Rendered laser center and direction of its forward arm in the world
    /// frame, including jitter.
    pub laser_pose: Pose2D,
    pub crosshair_topdown: Point2,
    pub crosshair_raw: Option<Point2>,
    /// Squares with at least one corner on the top-down canvas.
    pub squares: Vec<GroundTruthSquare>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Material {
    None,
    Surround,
    White,
    Blue,
    TagBlack,
    Occluder,
}

/// Ray-traced chessboard floor seen through the equidistant fisheye.
pub struct Renderer {
    scene: SceneSpec,
    /// Floor offsets `(forward, left)` from the nadir of the rays through
    /// every pixel corner, `(width+1) × (height+1)`; NaN above the horizon.
    corners: Vec<[f64; 2]>,
    centers: Vec<[f64; 2]>,
    tag_grid: Vec<Option<u8>>,
    cells: Vec<[[bool; 8]; 8]>,
    /// Occluder radius per lattice corner.
    occluders: Vec<f64>,
}

impl Renderer {
    pub fn new(scene: SceneSpec) -> Result<Self> {
        scene.validate()?;
        let cam = &scene.camera.model;
        let k = cam.distortion.k;
        let poly = |t: f64| {
            let t2 = t * t;
            t * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))))
        };
        let half_pi = std::f64::consts::FRAC_PI_2;
        // bisection needs a monotonic polynomial up to the horizon
        let mut prev = 0.0;
        for s in 1..=2000 {
            let v = poly(half_pi * s as f64 / 2000.0);
            if v <= prev {
                return Err(Error::Config("lens polynomial is not monotonic up to 90°".into()));
            }
            prev = v;
        }
        let horizon = prev;
        let i = cam.intrinsics;
        let h = scene.camera.height;
        let floor_of = |x: f64, y: f64| -> [f64; 2] {
            let (a, b) = ((x - i.cx) / i.fx, (y - i.cy) / i.fy);
            let td = a.hypot(b);
            if td >= horizon {
                return [f64::NAN; 2];
            }
            let (mut lo, mut hi) = (0.0, half_pi);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if poly(mid) < td {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let theta = 0.5 * (lo + hi);
            let (xc, yc) = if td > 0.0 {
                let r = h * theta.tan() / td;
                (a * r, b * r)
            } else {
                (0.0, 0.0)
            };
            [-yc, -xc]
        };
        let (w, hh) = (cam.width, cam.height);
        let mut corners = Vec::with_capacity((w + 1) * (hh + 1));
        for y in 0..=hh {
            for x in 0..=w {
                corners.push(floor_of(x as f64 - 0.5, y as f64 - 0.5));
            }
        }
        let mut centers = Vec::with_capacity(w * hh);
        for y in 0..hh {
            for x in 0..w {
                centers.push(floor_of(x as f64, y as f64));
            }
        }

        let floor = &scene.floor;
        let mut tag_grid = vec![None; (floor.columns * floor.rows) as usize];
        let mut cells = Vec::with_capacity(floor.tags.len());
        for (n, t) in floor.tags.iter().enumerate() {
            tag_grid[(t.row * floor.columns + t.col) as usize] = Some(n as u8);
            cells.push(tag_cells(t.id));
        }
        if floor.tags.len() > 256 {
            return Err(Error::Config("at most 256 tags".into()));
        }

        let occ = &scene.occluders;
        let n_corners = ((floor.columns + 1) * (floor.rows + 1)) as usize;
        let mut occluders = vec![0.0; n_corners];
        if occ.square_fraction > 0.0 {
            let p = 1.0 - (1.0 - occ.square_fraction).powf(0.25);
            let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
            rng.set_stream(u64::MAX);
            for r in occluders.iter_mut() {
                let hit = rng.gen::<f64>() < p;
                let radius = rng.gen_range(occ.radius_min..=occ.radius_max);
                if hit {
                    *r = radius;
                }
            }
        }

        Ok(Self {
            scene,
            corners,
            centers,
            tag_grid,
            cells,
            occluders,
        })
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    /// Lattice corners `(col, row)` that carry an occluder.
    pub fn occluded_corners(&self) -> Vec<(i64, i64)> {
        let c = self.scene.floor.columns + 1;
        self.occluders
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > 0.0)
            .map(|(i, _)| (i as i64 % c, i as i64 / c))
            .collect()
    }

    fn material(&self, w: Point2) -> Material {
        let floor = &self.scene.floor;
        let s = floor.square_size;
        let gx = (w.x - floor.origin.x) / s;
        let gy = (w.y - floor.origin.y) / s;
        if !(gx >= 0.0 && gy >= 0.0 && gx < floor.columns as f64 && gy < floor.rows as f64) {
            return if gx.is_finite() && gy.is_finite() {
                Material::Surround
            } else {
                Material::None
            };
        }
        let (ci, ri) = (gx.round() as i64, gy.round() as i64);
        let r = self.occluders[(ri * (floor.columns + 1) + ci) as usize];
        if r > 0.0 && ((gx - ci as f64) * s).hypot((gy - ri as f64) * s) < r {
            return Material::Occluder;
        }
        let (col, row) = (gx.floor() as i64, gy.floor() as i64);
        if let Some(n) = self.tag_grid[(row * floor.columns + col) as usize] {
            let half = 0.5 * self.scene.tag_scale;
            let (u, v) = (gx - col as f64 - 0.5, gy - row as f64 - 0.5);
            if u.abs() < half && v.abs() < half {
                // tag-frame columns run along world +x, rows along world -y
                let c = (((u + half) / (2.0 * half)) * 8.0) as usize;
                let r = (((half - v) / (2.0 * half)) * 8.0) as usize;
                return if self.cells[n as usize][r.min(7)][c.min(7)] {
                    Material::TagBlack
                } else {
                    Material::White
                };
            }
        }
        if (col + row) % 2 == 0 {
            Material::White
        } else {
            Material::Blue
        }
    }

    fn color(&self, m: Material) -> [f64; 3] {
        let c = &self.scene.colors;
        let rgb = match m {
            Material::None => [0, 0, 0],
            Material::Surround => c.surround,
            Material::White => c.white,
            Material::Blue => c.blue,
            Material::TagBlack => c.tag_black,
            Material::Occluder => c.occluder,
        };
        rgb.map(f64::from)
    }

    /// Render the frame seen at crosshair pose `pose`.
    pub fn render(&self, frame: usize, t: f64, pose: &Pose2D) -> Result<(ImageBuffer, GroundTruthRecord)> {
        let scene = &self.scene;
        scene.check_footprint(pose)?;
        let laser = &scene.laser;

        let mut jrng = ChaCha8Rng::seed_from_u64(scene.seed);
        jrng.set_stream(2 * frame as u64 + 1);
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let dropped = jrng.gen::<f64>() < laser.dropout;
        let (j_angle, j_f, j_l) = (std.sample(&mut jrng), std.sample(&mut jrng), std.sample(&mut jrng));
        let laser_visible = laser.enabled && !dropped;
        let phi = laser.jitter_angle_deg * j_angle;
        let lc = (laser.offset_forward + laser.jitter_offset * j_f, laser.jitter_offset * j_l);
        let (sphi, cphi) = phi.to_radians().sin_cos();
        let sigma = laser.line_width / (8.0 * std::f64::consts::LN_2).sqrt();
        let inv2s2 = 1.0 / (2.0 * sigma * sigma);
        let reach = laser.arm_length + 5.0 * sigma;
        let seg_dist = |along: f64, across: f64| {
            let excess = (along.abs() - laser.arm_length).max(0.0);
            (excess * excess + across * across).sqrt()
        };

        let cam = &scene.camera.model;
        let (w, h) = (cam.width, cam.height);
        let (st, ct) = pose.theta.to_radians().sin_cos();
        let nadir = scene.nadir(pose);
        let to_world = |p: [f64; 2]| Point2::new(nadir.x + p[0] * ct - p[1] * st, nadir.y + p[0] * st + p[1] * ct);

        let n = scene.supersample;
        let nn = (n * n) as f64;
        let illum = scene.noise.illumination;
        let (sa, ca) = scene.noise.illumination_angle_deg.to_radians().sin_cos();
        let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
        let proj: Vec<f64> = [(0.0, 0.0), (wf, 0.0), (0.0, hf), (wf, hf)]
            .iter()
            .map(|&(x, y)| x * ca + y * sa)
            .collect();
        let (pmin, pmax) = proj.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));

        let mut nrng = ChaCha8Rng::seed_from_u64(scene.seed);
        nrng.set_stream(2 * frame as u64);
        let noise = (scene.noise.sigma > 0.0).then(|| Normal::new(0.0, scene.noise.sigma).expect("finite sigma"));
        let lcol = laser.color.map(f64::from);

        let mut img = ImageBuffer::new(w, h, 3);
        let row_len = w + 1;
        let mut mats = [Material::None; 4];
        for y in 0..h {
            for x in 0..w {
                let idx = [y * row_len + x, y * row_len + x + 1, (y + 1) * row_len + x, (y + 1) * row_len + x + 1];
                let fc = idx.map(|i| self.corners[i]);
                for (m, p) in mats.iter_mut().zip(fc.iter()) {
                    *m = self.material(to_world(*p));
                }
                let mut rgb = if mats.iter().all(|m| *m == mats[0]) {
                    self.color(mats[0])
                } else {
                    let mut acc = [0.0; 3];
                    for i in 0..n {
                        for j in 0..n {
                            let sx = ((i * n + j) as f64 + 0.5) / nn;
                            let sy = ((j * n + i) as f64 + 0.5) / nn;
                            let mut p = [0.0; 2];
                            for d in 0..2 {
                                let top = fc[0][d] + (fc[1][d] - fc[0][d]) * sx;
                                let bot = fc[2][d] + (fc[3][d] - fc[2][d]) * sx;
                                p[d] = top + (bot - top) * sy;
                            }
                            let c = self.color(self.material(to_world(p)));
                            for d in 0..3 {
                                acc[d] += c[d];
                            }
                        }
                    }
                    acc.map(|v| v / nn)
                };

                if laser_visible {
                    let [f, l] = self.centers[y * w + x];
                    let (df, dl) = (f - lc.0, l - lc.1);
                    let along = df * cphi + dl * sphi;
                    let across = -df * sphi + dl * cphi;
                    if along.abs() < reach || across.abs() < reach {
                        let d1 = seg_dist(along, across);
                        let d2 = seg_dist(across, along);
                        let a1 = laser.peak_alpha * (-d1 * d1 * inv2s2).exp();
                        let a2 = laser.peak_alpha * (-d2 * d2 * inv2s2).exp();
                        let a = 1.0 - (1.0 - a1) * (1.0 - a2);
                        for d in 0..3 {
                            rgb[d] += (lcol[d] - rgb[d]) * a;
                        }
                    }
                }

                if illum != 0.0 && pmax > pmin {
                    let ramp = ((x as f64) * ca + (y as f64) * sa - pmin) / (pmax - pmin);
                    let g = 1.0 + illum * (ramp - 0.5);
                    rgb = rgb.map(|v| v * g);
                }
                let px = img.pixel_mut(x, y);
                for d in 0..3 {
                    let v = rgb[d] + noise.map_or(0.0, |nd| nd.sample(&mut nrng));
                    px[d] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }

        let laser_world = scene.robot_to_world(pose, lc.0, lc.1);
        let laser_pose = Pose2D::new(laser_world.x, laser_world.y, pose.theta + phi);
        let record = GroundTruthRecord {
            frame,
            t,
            pose: *pose,
            laser_visible,
            laser_pose,
            crosshair_topdown: scene.view.robot_to_px(lc.0, lc.1),
            crosshair_raw: scene.world_to_raw(pose, laser_world),
            squares: ground_truth_squares(scene, pose),
        };
        Ok((img, record))
    }
}

/// Squares with at least one corner on the top-down canvas of `pose`.
pub fn ground_truth_squares(scene: &SceneSpec, pose: &Pose2D) -> Vec<GroundTruthSquare> {
    let floor = &scene.floor;
    let (vw, vh) = (scene.view.width as f64, scene.view.height as f64);
    let on_canvas = |p: Point2| p.x >= 0.0 && p.y >= 0.0 && p.x <= vw && p.y <= vh;
    // lattice range covering the canvas footprint
    let mut lo = (i64::MAX, i64::MAX);
    let mut hi = (i64::MIN, i64::MIN);
    for p in [Point2::new(0.0, 0.0), Point2::new(vw, 0.0), Point2::new(vw, vh), Point2::new(0.0, vh)] {
        let (f, l) = scene.view.px_to_robot(p);
        let (c, r) = floor.square_of(scene.robot_to_world(pose, f, l));
        lo = (lo.0.min(c), lo.1.min(r));
        hi = (hi.0.max(c), hi.1.max(r));
    }
    let mut out = Vec::new();
    for row in lo.1.max(0)..=hi.1.min(floor.rows - 1) {
        for col in lo.0.max(0)..=hi.0.min(floor.columns - 1) {
            let world = [(0, 0), (1, 0), (1, 1), (0, 1)].map(|(dc, dr)| floor.world((col + dc) as f64, (row + dr) as f64));
            let topdown = world.map(|w| scene.world_to_topdown(pose, w));
            if topdown.iter().any(|p| on_canvas(*p)) {
                out.push(GroundTruthSquare {
                    col,
                    row,
                    topdown,
                    raw: world.map(|w| scene.world_to_raw(pose, w)),
                });
            }
        }
    }
    out
}
