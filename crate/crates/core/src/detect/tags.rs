//! Binary floor tags: an 8×8 cell grid with a black outer ring, a white
//! inner ring and a 4×4 data block carrying an 8-bit id and its checksum.

use serde::{Deserialize, Serialize};

use crate::camera::estimate_homography;
use crate::geometry::{is_convex, signed_area, LineSegment, Point2};
use crate::image::{gray_of, BinaryImage, ImageBuffer};
use crate::imgproc::{approx_poly, find_contours};

/// Cells per tag side.
pub const TAG_CELLS: usize = 8;

/// Data cell that receives bit `k` of the 16-bit word `id | checksum << 8`.
/// Chosen so that no quarter-turn of any codeword is itself a codeword.
const BIT_CELL: [usize; 16] = [1, 11, 5, 7, 4, 13, 6, 15, 8, 2, 10, 3, 12, 0, 9, 14];

pub fn checksum(id: u8) -> u8 {
    !(id ^ 0xA5)
}

/// Data bits of `id` in row-major order; `true` is a black cell.
pub fn encode_tag(id: u8) -> [[bool; 4]; 4] {
    let word = id as u16 | (checksum(id) as u16) << 8;
    let mut grid = [[false; 4]; 4];
    for (k, &cell) in BIT_CELL.iter().enumerate() {
        grid[cell / 4][cell % 4] = (word >> k) & 1 == 1;
    }
    grid
}

fn read_word(bits: &[[bool; 4]; 4]) -> Option<u8> {
    let word = BIT_CELL
        .iter()
        .enumerate()
        .fold(0u16, |w, (k, &cell)| w | (bits[cell / 4][cell % 4] as u16) << k);
    let id = (word & 0xFF) as u8;
    ((word >> 8) as u8 == checksum(id)).then_some(id)
}

/// Quarter turn clockwise.
pub fn rotate_grid(bits: &[[bool; 4]; 4]) -> [[bool; 4]; 4] {
    let mut out = [[false; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = bits[3 - c][r];
        }
    }
    out
}

/// Decode the data block as read. Rejects a checksum failure and any grid
/// for which another quarter turn also verifies.
pub fn decode_tag_grid(bits: &[[bool; 4]; 4]) -> Option<u8> {
    let id = read_word(bits)?;
    let mut g = *bits;
    for _ in 0..3 {
        g = rotate_grid(&g);
        if read_word(&g).is_some() {
            return None;
        }
    }
    Some(id)
}

/// Full 8×8 cell pattern of a tag; `true` is black.
pub fn tag_cells(id: u8) -> [[bool; TAG_CELLS]; TAG_CELLS] {
    let data = encode_tag(id);
    let mut cells = [[false; TAG_CELLS]; TAG_CELLS];
    for (r, row) in cells.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = if r == 0 || c == 0 || r == 7 || c == 7 {
                true
            } else if (2..6).contains(&r) && (2..6).contains(&c) {
                data[r - 2][c - 2]
            } else {
                false
            };
        }
    }
    cells
}

/// Printable gray tag image with `quiet` white cells of margin on every side.
pub fn tag_image(id: u8, cell_px: usize, quiet: usize) -> ImageBuffer {
    let cells = tag_cells(id);
    let side = (TAG_CELLS + 2 * quiet) * cell_px;
    let mut img = ImageBuffer::new(side, side, 1);
    for y in 0..side {
        for x in 0..side {
            let (r, c) = ((y / cell_px) as i64 - quiet as i64, (x / cell_px) as i64 - quiet as i64);
            let black = (0..8).contains(&r) && (0..8).contains(&c) && cells[r as usize][c as usize];
            img.data_mut()[y * side + x] = if black { 0 } else { 255 };
        }
    }
    img
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TagParams {
    /// Gray level below which a pixel counts as tag black.
    pub dark_threshold: u8,
    pub min_side: f64,
    pub max_side: f64,
    pub approx_epsilon: f64,
}

impl Default for TagParams {
    fn default() -> Self {
        Self {
            dark_threshold: 45,
            min_side: 60.0,
            max_side: 260.0,
            approx_epsilon: 6.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagDetection {
    pub id: u8,
    /// Tag-frame top-left, top-right, bottom-right, bottom-left.
    pub corners: [Point2; 4],
    /// Center of the tag, which is the center of its chessboard square.
    pub square_center: Point2,
    /// Quarter turns (clockwise) applied to the sampled grid before it
    /// decoded.
    pub rotation: u8,
}

impl TagDetection {
    /// Image angle (degrees, counter-clockwise, y up) of the tag's top edge,
    /// which points along world +x.
    pub fn x_direction_deg(&self) -> f64 {
        let d = (self.corners[1] - self.corners[0]) + (self.corners[2] - self.corners[3]);
        (-d.y).atan2(d.x).to_degrees()
    }
}

fn fit_line(points: &[Point2]) -> Option<(Point2, Point2)> {
    if points.len() < 2 {
        return None;
    }
    let c = points.iter().fold(Point2::new(0.0, 0.0), |a, p| a + *p) * (1.0 / points.len() as f64);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((c, Point2::new(angle.cos(), angle.sin())))
}

/// Refine polygon vertices by fitting a line to the middle part of each side
/// of the traced border and intersecting neighbors. Contour pixels sit half
/// a pixel inside the true edge, so each line is moved outward by 0.5 px.
pub(crate) fn refine_quad(contour: &[Point2], quad: &[Point2]) -> Option<[Point2; 4]> {
    let idx: Vec<usize> = quad
        .iter()
        .map(|q| contour.iter().position(|p| p == q))
        .collect::<Option<_>>()?;
    let n = contour.len();
    let centroid = quad.iter().fold(Point2::new(0.0, 0.0), |a, p| a + *p) * 0.25;
    let mut lines = Vec::with_capacity(4);
    for k in 0..4 {
        let (a, b) = (idx[k], idx[(k + 1) % 4]);
        let len = (b + n - a) % n;
        let trim = len / 8;
        let pts: Vec<Point2> = (trim..=len.saturating_sub(trim)).map(|t| contour[(a + t) % n]).collect();
        let (c, d) = fit_line(&pts)?;
        let mut normal = Point2::new(-d.y, d.x);
        if normal.dot(c - centroid) < 0.0 {
            normal = normal * -1.0;
        }
        let c = c + normal * 0.5;
        lines.push(LineSegment::new(c, c + d));
    }
    let mut out = [Point2::new(0.0, 0.0); 4];
    for k in 0..4 {
        out[k] = lines[(k + 3) % 4].intersect_lines(&lines[k])?;
    }
    Some(out)
}

/// Sample the 8×8 cells of a quad whose corners are given clockwise on
/// screen from the image top-left. Returns the cell darkness grid.
fn sample_cells(gray: &ImageBuffer, quad: &[Point2; 4]) -> Option<[[f64; TAG_CELLS]; TAG_CELLS]> {
    let s = TAG_CELLS as f64;
    let src = [
        Point2::new(0.0, 0.0),
        Point2::new(s, 0.0),
        Point2::new(s, s),
        Point2::new(0.0, s),
    ];
    let h = estimate_homography(&src, quad).ok()?;
    let mut out = [[0.0; TAG_CELLS]; TAG_CELLS];
    let mut v = [0.0];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut n = 0.0;
            for j in 0..3 {
                for i in 0..3 {
                    let u = c as f64 + 0.3 + 0.2 * i as f64;
                    let w = r as f64 + 0.3 + 0.2 * j as f64;
                    let (x, y) = h.apply_unchecked(u, w);
                    if gray.sample_bilinear(x, y, &mut v) {
                        acc += v[0];
                        n += 1.0;
                    }
                }
            }
            if n == 0.0 {
                return None;
            }
            *cell = acc / n;
        }
    }
    Some(out)
}

fn to_gray(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 1 {
        return img.clone();
    }
    let data = img.data().chunks_exact(3).map(|p| gray_of(p[0], p[1], p[2])).collect();
    ImageBuffer::from_raw(img.width(), img.height(), 1, data).expect("consistent dimensions")
}

/// Find and decode all tags in a top-down frame (RGB or gray). Pixels
/// outside `valid` are never treated as tag black.
pub fn detect_tags(img: &ImageBuffer, valid: Option<&BinaryImage>, params: &TagParams) -> Vec<TagDetection> {
    let gray = to_gray(img);
    let (w, h) = (gray.width(), gray.height());
    let dark = BinaryImage::from_fn(w, h, |x, y| {
        gray.data()[y * w + x] < params.dark_threshold && valid.is_none_or(|m| m.get(x, y))
    });
    let mut out = Vec::new();
    for contour in find_contours(&dark) {
        let (x0, y0, x1, y1) = contour.bbox();
        let (bw, bh) = ((x1 - x0) as f64, (y1 - y0) as f64);
        if bw.max(bh) < params.min_side || bw.max(bh) > params.max_side * std::f64::consts::SQRT_2 {
            continue;
        }
        let pts = contour.to_points();
        let poly = approx_poly(&pts, params.approx_epsilon);
        if poly.len() != 4 || !is_convex(&poly) {
            continue;
        }
        let Some(mut quad) = refine_quad(&pts, &poly) else {
            continue;
        };
        // clockwise on screen, starting from the vertex nearest the image top-left
        if signed_area(&quad) < 0.0 {
            quad.reverse();
        }
        let start = (0..4)
            .min_by(|&a, &b| (quad[a].x + quad[a].y).total_cmp(&(quad[b].x + quad[b].y)))
            .unwrap_or(0);
        quad.rotate_left(start);
        let sides: Vec<f64> = (0..4).map(|k| quad[k].distance(quad[(k + 1) % 4])).collect();
        let (smin, smax) = sides.iter().fold((f64::MAX, 0.0f64), |(a, b), s| (a.min(*s), b.max(*s)));
        if smin < params.min_side || smax > params.max_side || smax > 1.5 * smin {
            continue;
        }
        let Some(cells) = sample_cells(&gray, &quad) else {
            continue;
        };
        // black ring and white ring set the decision threshold
        let ring = |k: usize| -> Vec<f64> {
            (0..8)
                .flat_map(|r| (0..8).map(move |c| (r, c)))
                .filter(|&(r, c)| r.min(c).min(7 - r).min(7 - c) == k)
                .map(|(r, c)| cells[r][c])
                .collect()
        };
        let (outer, inner) = (ring(0), ring(1));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (black, white) = (mean(&outer), mean(&inner));
        if white - black < 40.0 {
            continue;
        }
        let thr = 0.5 * (black + white);
        if outer.iter().filter(|v| **v < thr).count() < 26 || inner.iter().filter(|v| **v >= thr).count() < 18 {
            continue;
        }
        let mut bits = [[false; 4]; 4];
        for (r, row) in bits.iter_mut().enumerate() {
            for (c, b) in row.iter_mut().enumerate() {
                *b = cells[r + 2][c + 2] < thr;
            }
        }
        let mut g = bits;
        for rot in 0..4u8 {
            if let Some(id) = decode_tag_grid(&g) {
                let r = rot as usize;
                let corners = [0, 1, 2, 3].map(|k| quad[(k + 4 - r) % 4]);
                let center = corners[0]
                    .intersect_lines_with(corners[2], corners[1], corners[3])
                    .unwrap_or_else(|| crate::geometry::centroid(&corners));
                out.push(TagDetection {
                    id,
                    corners,
                    square_center: center,
                    rotation: rot,
                });
                break;
            }
            g = rotate_grid(&g);
        }
    }
    out
}

trait Diagonals {
    fn intersect_lines_with(self, a1: Point2, b0: Point2, b1: Point2) -> Option<Point2>;
}

impl Diagonals for Point2 {
    fn intersect_lines_with(self, a1: Point2, b0: Point2, b1: Point2) -> Option<Point2> {
        LineSegment::new(self, a1).intersect_lines(&LineSegment::new(b0, b1))
    }
}

/// Paint tag `id` into `img` (RGB or gray) with its tag-frame corners at
/// `corners` (top-left, top-right, bottom-right, bottom-left).
pub fn paint_tag(img: &mut ImageBuffer, id: u8, corners: &[Point2; 4], black: u8, white: u8) {
    let s = TAG_CELLS as f64;
    let src = [
        Point2::new(0.0, 0.0),
        Point2::new(s, 0.0),
        Point2::new(s, s),
        Point2::new(0.0, s),
    ];
    let Ok(h) = estimate_homography(corners, &src) else {
        return;
    };
    let cells = tag_cells(id);
    let xs = corners.iter().map(|p| p.x);
    let ys = corners.iter().map(|p| p.y);
    let x0 = xs.clone().fold(f64::MAX, f64::min).floor().max(0.0) as usize;
    let x1 = (xs.fold(f64::MIN, f64::max).ceil() as usize).min(img.width() - 1);
    let y0 = ys.clone().fold(f64::MAX, f64::min).floor().max(0.0) as usize;
    let y1 = (ys.fold(f64::MIN, f64::max).ceil() as usize).min(img.height() - 1);
    const SS: usize = 4;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (mut inside, mut dark) = (0usize, 0usize);
            for j in 0..SS {
                for i in 0..SS {
                    let n = (SS * SS) as f64;
                    let px = x as f64 - 0.5 + ((SS * i + j) as f64 + 0.5) / n;
                    let py = y as f64 - 0.5 + ((SS * j + i) as f64 + 0.5) / n;
                    let (u, v) = h.apply_unchecked(px, py);
                    if (0.0..s).contains(&u) && (0.0..s).contains(&v) {
                        inside += 1;
                        if cells[v as usize][u as usize] {
                            dark += 1;
                        }
                    }
                }
            }
            if inside == 0 {
                continue;
            }
            let f = inside as f64 / (SS * SS) as f64;
            let tag_val = (dark as f64 * black as f64 + (inside - dark) as f64 * white as f64) / inside as f64;
            for ch in img.pixel_mut(x, y) {
                *ch = (*ch as f64 * (1.0 - f) + tag_val * f).round() as u8;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bits_from_u16(w: u16) -> [[bool; 4]; 4] {
        let mut g = [[false; 4]; 4];
        for k in 0..16 {
            g[k / 4][k % 4] = (w >> k) & 1 == 1;
        }
        g
    }

    #[test]
    fn id_zero_round_trips() {
        assert_eq!(decode_tag_grid(&encode_tag(0)), Some(0));
    }

    #[test]
    fn all_ids_round_trip() {
        for id in 0..=255u8 {
            assert_eq!(decode_tag_grid(&encode_tag(id)), Some(id));
        }
    }

    #[test]
    fn checksum_is_complement_of_xor() {
        for id in 0..=255u8 {
            assert_eq!(checksum(id), (id ^ 0xA5) ^ 0xFF);
        }
    }

    #[test]
    fn codebook_rotation_uniqueness_exhaustive() {
        // every (id, quarter turn) pair produces a distinct pattern, and only
        // the unrotated pattern decodes
        let mut seen = std::collections::HashMap::new();
        for id in 0..=255u8 {
            let mut g = encode_tag(id);
            for rot in 0..4 {
                assert!(seen.insert(g, (id, rot)).is_none(), "pattern collision at {id}/{rot}");
                assert_eq!(decode_tag_grid(&g), (rot == 0).then_some(id), "id {id} rot {rot}");
                g = rotate_grid(&g);
            }
        }
        assert_eq!(seen.len(), 1024);
    }

    #[test]
    fn exhaustive_decode_matches_codebook() {
        let codewords: std::collections::HashSet<[[bool; 4]; 4]> = (0..=255u8).map(encode_tag).collect();
        for w in 0..=u16::MAX {
            let g = bits_from_u16(w);
            assert_eq!(decode_tag_grid(&g).is_some(), codewords.contains(&g));
        }
    }

    #[test]
    fn random_grids_rejected_unless_codeword() {
        let codewords: std::collections::HashSet<[[bool; 4]; 4]> = (0..=255u8).map(encode_tag).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let (mut accepted, mut non_codewords, mut non_codeword_accepted) = (0u32, 0u32, 0u32);
        for _ in 0..n {
            let g = bits_from_u16(rng.gen());
            let ok = decode_tag_grid(&g).is_some();
            accepted += ok as u32;
            if !codewords.contains(&g) {
                non_codewords += 1;
                non_codeword_accepted += ok as u32;
            }
        }
        assert_eq!(non_codeword_accepted, 0);
        let reject_rate = 1.0 - accepted as f64 / n as f64;
        // uniformly random grids hit one of 256 codewords out of 65536 patterns
        assert!(reject_rate >= 255.0 / 256.0 - 5e-4, "reject rate {reject_rate}");
        assert!(non_codewords > 990_000);
    }

    fn square_quad(cx: f64, cy: f64, side: f64, angle_deg: f64) -> [Point2; 4] {
        let h = side / 2.0;
        let a = angle_deg.to_radians();
        [(-h, -h), (h, -h), (h, h), (-h, h)].map(|(x, y)| Point2::new(cx, cy) + Point2::new(x, y).rotated(a))
    }

    #[test]
    fn no_tags_in_blank_frame() {
        let img = ImageBuffer::filled_rgb(300, 200, [255, 255, 255]);
        assert!(detect_tags(&img, None, &TagParams::default()).is_empty());
    }

    #[test]
    fn detects_painted_tag_with_subpixel_corners() {
        let mut img = ImageBuffer::filled_rgb(400, 400, [255, 255, 255]);
        let corners = square_quad(201.3, 188.6, 150.0, 7.0);
        paint_tag(&mut img, 37, &corners, 25, 255);
        let tags = detect_tags(&img, None, &TagParams::default());
        assert_eq!(tags.len(), 1);
        assert_eq!(tags[0].id, 37);
        assert_eq!(tags[0].rotation, 0);
        for (a, b) in tags[0].corners.iter().zip(&corners) {
            assert!(a.distance(*b) < 1.0, "{a:?} vs {b:?}");
        }
        assert!(tags[0].square_center.distance(Point2::new(201.3, 188.6)) < 0.5);
        let x_dir = tags[0].x_direction_deg();
        assert!((x_dir + 7.0).abs() < 0.5, "{x_dir}");
    }

    #[test]
    fn rotated_tag_reports_rotation_and_tag_frame_corners() {
        let mut img = ImageBuffer::filled_rgb(400, 400, [255, 255, 255]);
        let base = square_quad(200.0, 200.0, 150.0, 3.0);
        // tag frame turned a quarter clockwise on screen
        let corners = [base[1], base[2], base[3], base[0]];
        paint_tag(&mut img, 200, &corners, 25, 255);
        let tags = detect_tags(&img, None, &TagParams::default());
        assert_eq!(tags.len(), 1);
        assert_eq!(tags[0].id, 200);
        assert_ne!(tags[0].rotation, 0);
        for (a, b) in tags[0].corners.iter().zip(&corners) {
            assert!(a.distance(*b) < 1.0);
        }
    }

    #[test]
    fn tag_image_has_quiet_zone_and_decodes() {
        let img = tag_image(99, 16, 1);
        assert_eq!((img.width(), img.height()), (160, 160));
        assert_eq!(img.gray_at(5, 5), 255);
        assert_eq!(img.gray_at(20, 20), 0);
        let tags = detect_tags(&img, None, &TagParams::default());
        assert_eq!(tags.len(), 1);
        assert_eq!(tags[0].id, 99);
    }
}
