//! Pixel rasters and color conversions.
//!
//! Pixel `(i, j)` has its center at continuous coordinate `(i, j)`; `x` grows
//! rightward and `y` downward from the top-left corner.

use crate::error::{Error, Result};
use std::path::Path;

/// Row-major 8-bit raster with 1 (gray) or 3 (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be positive");
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![0; width * height * channels],
        }
    }

    pub fn from_raw(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "buffer length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled_rgb(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut img = Self::new(width, height, 3);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    #[inline]
    pub fn gray_at(&self, x: usize, y: usize) -> u8 {
        debug_assert_eq!(self.channels, 1);
        self.data[y * self.width + x]
    }

    /// Bilinear sample of every channel at a continuous position. Returns
    /// `None` outside `[0, w-1] x [0, h-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) -> bool {
        // tolerate round-off just outside the raster
        const SLACK: f64 = 1e-6;
        let (xm, ym) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(x >= -SLACK && y >= -SLACK && x <= xm + SLACK && y <= ym + SLACK) {
            return false;
        }
        let (x, y) = (x.clamp(0.0, xm), y.clamp(0.0, ym));
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let c = self.channels;
        let w = self.width;
        for (k, o) in out.iter_mut().enumerate().take(c) {
            let a = self.data[(y0 * w + x0) * c + k] as f64;
            let b = self.data[(y0 * w + x1) * c + k] as f64;
            let d = self.data[(y1 * w + x0) * c + k] as f64;
            let e = self.data[(y1 * w + x1) * c + k] as f64;
            *o = (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (d * (1.0 - fx) + e * fx) * fy;
        }
        true
    }

    /// Write as lossless PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let color = if self.channels == 3 {
            image::ExtendedColorType::Rgb8
        } else {
            image::ExtendedColorType::L8
        };
        image::save_buffer(path, &self.data, self.width as u32, self.height as u32, color).map_err(
            |source| Error::Image {
                path: path.to_path_buf(),
                source,
            },
        )
    }

    /// Read a PNG (or any supported format) as RGB.
    pub fn load_rgb(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::from_raw(w as usize, h as usize, 3, rgb.into_raw())
    }
}

/// One bit per pixel mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-bounds reads as background.
    #[inline]
    pub fn get_or_false(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn complement(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn and(&self, other: &BinaryImage) -> BinaryImage {
        assert_eq!((self.width, self.height), (other.width, other.height));
        BinaryImage {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }

    /// Clear every pixel that is set in `mask`.
    pub fn clear_where(&mut self, mask: &BinaryImage) {
        assert_eq!((self.width, self.height), (mask.width, mask.height));
        for (b, m) in self.bits.iter_mut().zip(&mask.bits) {
            if *m {
                *b = false;
            }
        }
    }

    /// Gray image with values {0, 255}.
    pub fn to_gray(&self) -> ImageBuffer {
        let data = self.bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
        ImageBuffer::from_raw(self.width, self.height, 1, data).expect("consistent dimensions")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray().save_png(path)
    }
}

/// Luminance `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn rgb_to_gray(img: &ImageBuffer) -> Result<ImageBuffer> {
    if img.channels() != 3 {
        return Err(Error::InvalidInput(format!(
            "rgb_to_gray expects 3 channels, got {}",
            img.channels()
        )));
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| gray_of(p[0], p[1], p[2]))
        .collect();
    ImageBuffer::from_raw(img.width(), img.height(), 1, data)
}

#[inline]
pub fn gray_of(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
}

/// Hexcone HSV: hue in `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

pub fn rgb_to_hsv_pixel(r: u8, g: u8, b: u8) -> Hsv {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return Hsv { h: 0.0, s, v };
    }
    let h = if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    Hsv {
        h: h.rem_euclid(360.0),
        s,
        v,
    }
}

pub fn hsv_to_rgb_pixel(hsv: Hsv) -> [u8; 3] {
    let c = hsv.v * hsv.s;
    let hp = hsv.h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = hsv.v - c;
    let to8 = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to8(r), to8(g), to8(b)]
}

/// Per-pixel HSV conversion of an RGB image, row-major.
pub fn rgb_to_hsv(img: &ImageBuffer) -> Result<Vec<Hsv>> {
    if img.channels() != 3 {
        return Err(Error::InvalidInput(format!(
            "rgb_to_hsv expects 3 channels, got {}",
            img.channels()
        )));
    }
    Ok(img
        .data()
        .chunks_exact(3)
        .map(|p| rgb_to_hsv_pixel(p[0], p[1], p[2]))
        .collect())
}
