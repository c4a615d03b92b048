use crate::error::{Error, Result};
use crate::image::BinaryImage;

/// Rectangular structuring element anchored at its center.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    width: usize,
    height: usize,
}

impl StructuringElement {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "structuring element must have odd dimensions, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn square(size: usize) -> Result<Self> {
        Self::new(size, size)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Point reflection; a centered rectangle is its own reflection.
    pub fn reflected(&self) -> Self {
        *self
    }
}

/// Sliding-window OR (dilate) or AND (erode) along one axis. Outside the
/// image counts as background.
fn pass(src: &BinaryImage, radius: usize, horizontal: bool, dilate: bool) -> BinaryImage {
    let (w, h) = (src.width(), src.height());
    let mut out = BinaryImage::new(w, h);
    let (len, lines) = if horizontal { (w, h) } else { (h, w) };
    let r = radius as i64;
    let mut line = vec![false; len];
    // prefix counts of foreground pixels
    let mut prefix = vec![0u32; len + 1];
    for l in 0..lines {
        for (i, v) in line.iter_mut().enumerate() {
            *v = if horizontal { src.get(i, l) } else { src.get(l, i) };
        }
        for i in 0..len {
            prefix[i + 1] = prefix[i] + line[i] as u32;
        }
        for i in 0..len as i64 {
            let lo = i - r;
            let hi = i + r;
            let clo = lo.max(0) as usize;
            let chi = (hi.min(len as i64 - 1)) as usize;
            let count = prefix[chi + 1] - prefix[clo];
            let v = if dilate {
                count > 0
            } else {
                lo >= 0 && hi < len as i64 && count as i64 == 2 * r + 1
            };
            if v {
                if horizontal {
                    out.set(i as usize, l, true);
                } else {
                    out.set(l, i as usize, true);
                }
            }
        }
    }
    out
}

/// Minkowski dilation.
pub fn dilate(bin: &BinaryImage, se: &StructuringElement) -> BinaryImage {
    let tmp = pass(bin, se.width / 2, true, true);
    pass(&tmp, se.height / 2, false, true)
}

/// Minkowski erosion; pixels whose window leaves the image are cleared.
pub fn erode(bin: &BinaryImage, se: &StructuringElement) -> BinaryImage {
    let tmp = pass(bin, se.width / 2, true, false);
    pass(&tmp, se.height / 2, false, false)
}

/// Erosion followed by dilation.
pub fn open(bin: &BinaryImage, se: &StructuringElement) -> BinaryImage {
    dilate(&erode(bin, se), se)
}

/// Dilation followed by erosion. The intermediate dilation is evaluated on a
/// padded canvas so foreground touching the border is not eroded away,
/// keeping the closing extensive (`x ⊆ close(x)`).
pub fn close(bin: &BinaryImage, se: &StructuringElement) -> BinaryImage {
    let (rx, ry) = (se.width / 2, se.height / 2);
    let (w, h) = (bin.width(), bin.height());
    let mut padded = BinaryImage::new(w + 2 * rx, h + 2 * ry);
    for y in 0..h {
        for x in 0..w {
            if bin.get(x, y) {
                padded.set(x + rx, y + ry, true);
            }
        }
    }
    let closed = erode(&dilate(&padded, se), se);
    BinaryImage::from_fn(w, h, |x, y| closed.get(x + rx, y + ry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(bin: &BinaryImage, se: &StructuringElement, dilate: bool) -> BinaryImage {
        let (rx, ry) = ((se.width() / 2) as i64, (se.height() / 2) as i64);
        BinaryImage::from_fn(bin.width(), bin.height(), |x, y| {
            let mut any = false;
            let mut all = true;
            for dy in -ry..=ry {
                for dx in -rx..=rx {
                    let v = bin.get_or_false(x as i64 + dx, y as i64 + dy);
                    any |= v;
                    all &= v;
                }
            }
            if dilate {
                any
            } else {
                all
            }
        })
    }

    fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> BinaryImage {
        BinaryImage::from_fn(w, h, |_, _| rng.gen_bool(p))
    }

    #[test]
    fn even_element_rejected() {
        assert!(StructuringElement::new(4, 3).is_err());
    }

    #[test]
    fn single_pixel_dilates_to_block_and_back() {
        let mut img = BinaryImage::new(9, 9);
        img.set(4, 4, true);
        let se = StructuringElement::square(3).unwrap();
        let d = dilate(&img, &se);
        assert_eq!(d.count(), 9);
        for y in 3..=5 {
            for x in 3..=5 {
                assert!(d.get(x, y));
            }
        }
        let e = erode(&d, &se);
        assert_eq!(e, img);
        assert_eq!(open(&img, &se).count(), 0);
    }

    #[test]
    fn close_fills_one_pixel_gap() {
        let mut img = BinaryImage::new(20, 7);
        for x in 2..18 {
            if x != 10 {
                img.set(x, 3, true);
            }
        }
        let se = StructuringElement::square(3).unwrap();
        let closed = close(&img, &se);
        let oracle = brute(&brute(&img, &se, true), &se, false);
        assert_eq!(closed, oracle);
        assert!(closed.get(10, 3));
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let se = StructuringElement::new(5, 3).unwrap();
        for _ in 0..100 {
            let m = random_mask(&mut rng, 32, 32, 0.5);
            assert_eq!(dilate(&m, &se), brute(&m, &se, true));
            assert_eq!(erode(&m, &se), brute(&m, &se, false));
        }
    }

    proptest! {
        #[test]
        fn duality_monotonicity_idempotence(seed in 0u64..10_000, p in 0.1f64..0.9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_mask(&mut rng, 24, 20, p);
            let se = StructuringElement::new(3, 5).unwrap();
            // duality holds away from the border, where outside = background breaks symmetry
            let lhs = dilate(&m, &se);
            let rhs = erode(&m.complement(), &se.reflected()).complement();
            for y in 2..18 {
                for x in 1..23 {
                    prop_assert_eq!(lhs.get(x, y), rhs.get(x, y));
                }
            }
            let o = open(&m, &se);
            let c = close(&m, &se);
            for i in 0..m.bits().len() {
                prop_assert!(!o.bits()[i] || m.bits()[i]);
                prop_assert!(!m.bits()[i] || c.bits()[i]);
            }
            prop_assert_eq!(open(&o, &se), o);
            prop_assert_eq!(close(&c, &se), c);
        }
    }
}
