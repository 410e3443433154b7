//! Pixel containers and PNG I/O.
//!
//! [`Raster`] is the one image type used across the crate: an 8-bit gray or
//! 8-bit RGBA buffer, row-major and channel-interleaved. Operations never
//! mutate their input; they return a new raster.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageEncoder};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("{}: file not found", .0.display())]
    NotFound(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: unsupported image format ({detail})", path.display())]
    Unsupported { path: PathBuf, detail: String },
    #[error("{}: corrupt image data ({detail})", path.display())]
    Corrupt { path: PathBuf, detail: String },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("buffer length {actual} does not match {width}x{height}x{channels}")]
    BufferLength {
        width: u32,
        height: u32,
        channels: usize,
        actual: usize,
    },
}

/// Pixel layout of a [`Raster`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channels {
    Gray8,
    Rgba8,
}

impl Channels {
    pub const fn count(self) -> usize {
        match self {
            Channels::Gray8 => 1,
            Channels::Rgba8 => 4,
        }
    }
}

/// Axis-aligned rectangle in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const EMPTY: Rect = Rect {
        x: 0,
        y: 0,
        w: 0,
        h: 0,
    };

    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Rect { x, y, w, h }
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    /// Exclusive right edge.
    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && (x as u64) < self.right() && y >= self.y && (y as u64) < self.bottom()
    }

    /// `other` lies entirely inside `self`. Empty rects are contained everywhere.
    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.is_empty()
            || (other.x >= self.x
                && other.y >= self.y
                && other.right() <= self.right()
                && other.bottom() <= self.bottom())
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 as u64 || y1 <= y0 as u64 {
            return Rect::EMPTY;
        }
        Rect::new(x0, y0, (x1 - x0 as u64) as u32, (y1 - y0 as u64) as u32)
    }

    /// Smallest rect covering both; empty operands are ignored.
    pub fn union(&self, other: &Rect) -> Rect {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        Rect::new(x0, y0, (x1 - x0 as u64) as u32, (y1 - y0 as u64) as u32)
    }

    /// Clip to a `width` x `height` canvas.
    pub fn clip(&self, width: u32, height: u32) -> Rect {
        self.intersect(&Rect::new(0, 0, width, height))
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}+{}+{}", self.w, self.h, self.x, self.y)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: Channels,
    pixels: Vec<u8>,
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Raster {
    pub fn from_pixels(
        width: u32,
        height: u32,
        channels: Channels,
        pixels: Vec<u8>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        let expected = width as usize * height as usize * channels.count();
        if pixels.len() != expected {
            return Err(RasterError::BufferLength {
                width,
                height,
                channels: channels.count(),
                actual: pixels.len(),
            });
        }
        Ok(Raster {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Gray raster filled with `value`.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn filled_gray(width: u32, height: u32, value: u8) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Raster {
            width,
            height,
            channels: Channels::Gray8,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    /// Fully transparent RGBA raster.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn transparent(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Raster {
            width,
            height,
            channels: Channels::Rgba8,
            pixels: vec![0; width as usize * height as usize * 4],
        }
    }

    /// Build a gray raster from a per-pixel function of `(x, y)`.
    pub fn gray_from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut img = Raster::filled_gray(width, height, 0);
        for y in 0..height {
            for x in 0..width {
                img.pixels[(y * width + x) as usize] = f(x, y);
            }
        }
        img
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels.count()
    }

    /// Gray value at `(x, y)`. Only meaningful for `Gray8`.
    #[inline]
    pub fn gray(&self, x: u32, y: u32) -> u8 {
        debug_assert_eq!(self.channels, Channels::Gray8);
        self.pixels[self.offset(x, y)]
    }

    #[inline]
    pub fn set_gray(&mut self, x: u32, y: u32, v: u8) {
        debug_assert_eq!(self.channels, Channels::Gray8);
        let i = self.offset(x, y);
        self.pixels[i] = v;
    }

    /// RGBA value at `(x, y)`. Only meaningful for `Rgba8`.
    #[inline]
    pub fn rgba(&self, x: u32, y: u32) -> [u8; 4] {
        debug_assert_eq!(self.channels, Channels::Rgba8);
        let i = self.offset(x, y);
        [
            self.pixels[i],
            self.pixels[i + 1],
            self.pixels[i + 2],
            self.pixels[i + 3],
        ]
    }

    #[inline]
    pub fn set_rgba(&mut self, x: u32, y: u32, v: [u8; 4]) {
        debug_assert_eq!(self.channels, Channels::Rgba8);
        let i = self.offset(x, y);
        self.pixels[i..i + 4].copy_from_slice(&v);
    }

    /// Flatten to gray. RGBA pixels use integer luma composited over white.
    pub fn to_gray(&self) -> Raster {
        match self.channels {
            Channels::Gray8 => self.clone(),
            Channels::Rgba8 => {
                let pixels = self
                    .pixels
                    .chunks_exact(4)
                    .map(|p| flatten_rgba(p[0], p[1], p[2], p[3]))
                    .collect();
                Raster {
                    width: self.width,
                    height: self.height,
                    channels: Channels::Gray8,
                    pixels,
                }
            }
        }
    }

    /// Copy of the pixels inside `rect` (clipped to the image).
    pub fn crop(&self, rect: Rect) -> Option<Raster> {
        let r = rect.clip(self.width, self.height);
        if r.is_empty() {
            return None;
        }
        let c = self.channels.count();
        let mut pixels = Vec::with_capacity(r.w as usize * r.h as usize * c);
        for y in r.y..r.y + r.h {
            let start = self.offset(r.x, y);
            pixels.extend_from_slice(&self.pixels[start..start + r.w as usize * c]);
        }
        Some(Raster {
            width: r.w,
            height: r.h,
            channels: self.channels,
            pixels,
        })
    }
}

/// Integer luma `(77R + 150G + 29B) >> 8`, then alpha-over white with
/// round-half-up.
#[inline]
pub fn flatten_rgba(r: u8, g: u8, b: u8, a: u8) -> u8 {
    let luma = (77 * r as u32 + 150 * g as u32 + 29 * b as u32) >> 8;
    let a = a as u32;
    let num = a * luma + (255 - a) * 255;
    ((2 * num + 255) / 510) as u8
}

/// Integer division with round-half-up for non-negative operands.
#[inline]
pub(crate) fn div_round(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

/// Round-half-up of a non-negative float into a gray level.
#[inline]
pub(crate) fn round_gray(v: f32) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => RasterError::NotFound(path.to_path_buf()),
        _ => RasterError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    decode_image(&bytes).map_err(|e| match e {
        DecodeFailure::Unsupported(detail) => RasterError::Unsupported {
            path: path.to_path_buf(),
            detail,
        },
        DecodeFailure::Corrupt(detail) => RasterError::Corrupt {
            path: path.to_path_buf(),
            detail,
        },
    })
}

enum DecodeFailure {
    Unsupported(String),
    Corrupt(String),
}

fn decode_image(bytes: &[u8]) -> Result<Raster, DecodeFailure> {
    let format = image::guess_format(bytes)
        .map_err(|_| DecodeFailure::Unsupported("unrecognized signature".into()))?;
    if format != image::ImageFormat::Png {
        return Err(DecodeFailure::Unsupported(format!("{format:?}")));
    }
    let decoded = image::load_from_memory_with_format(bytes, format).map_err(|e| match e {
        image::ImageError::Unsupported(u) => DecodeFailure::Unsupported(u.to_string()),
        other => DecodeFailure::Corrupt(other.to_string()),
    })?;
    let (width, height) = (decoded.width(), decoded.height());
    let has_alpha = decoded.color().has_alpha();
    let is_gray = matches!(
        decoded,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_)
    );
    let raster = if is_gray {
        Raster::from_pixels(width, height, Channels::Gray8, decoded.into_luma8().into_raw())
    } else if has_alpha {
        Raster::from_pixels(width, height, Channels::Rgba8, decoded.into_rgba8().into_raw())
    } else {
        // Opaque color scans: flatten with the same luma the rest of the crate uses.
        let rgb = decoded.into_rgb8();
        let pixels = rgb
            .as_raw()
            .chunks_exact(3)
            .map(|p| flatten_rgba(p[0], p[1], p[2], 255))
            .collect();
        Raster::from_pixels(width, height, Channels::Gray8, pixels)
    };
    raster.map_err(|e| DecodeFailure::Corrupt(e.to_string()))
}

pub fn save_image(img: &Raster, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let io_err = |source: io::Error| RasterError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let encoder = image::codecs::png::PngEncoder::new(BufWriter::new(file));
    let color = match img.channels {
        Channels::Gray8 => image::ExtendedColorType::L8,
        Channels::Rgba8 => image::ExtendedColorType::Rgba8,
    };
    encoder
        .write_image(&img.pixels, img.width, img.height, color)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => io_err(source),
            other => io_err(io::Error::other(other.to_string())),
        })
}

/// Resize to exactly `target_w` x `target_h`.
///
/// Each axis is filtered independently: area averaging where the axis
/// shrinks, bilinear interpolation (pixel-center aligned, edge clamped)
/// where it grows. Results round half up.
pub fn resize(img: &Raster, target_w: u32, target_h: u32) -> Result<Raster, RasterError> {
    if target_w == 0 || target_h == 0 {
        return Err(RasterError::InvalidDimensions {
            width: target_w,
            height: target_h,
        });
    }
    if (target_w, target_h) == img.dimensions() {
        return Ok(img.clone());
    }
    let c = img.channels.count();
    let (sw, sh) = (img.width as usize, img.height as usize);
    let (tw, th) = (target_w as usize, target_h as usize);
    let xw = axis_weights(sw, tw);
    let yw = axis_weights(sh, th);

    // Horizontal pass into an f32 buffer of size tw x sh.
    let mut tmp = vec![0f32; tw * sh * c];
    for y in 0..sh {
        let src = &img.pixels[y * sw * c..(y + 1) * sw * c];
        let dst = &mut tmp[y * tw * c..(y + 1) * tw * c];
        for (x, taps) in xw.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0f32;
                for &(i, wt) in taps {
                    acc += src[i * c + ch] as f32 * wt;
                }
                dst[x * c + ch] = acc;
            }
        }
    }

    let mut out = vec![0u8; tw * th * c];
    for (y, taps) in yw.iter().enumerate() {
        let dst = &mut out[y * tw * c..(y + 1) * tw * c];
        for (j, v) in dst.iter_mut().enumerate() {
            let mut acc = 0f32;
            for &(i, wt) in taps {
                acc += tmp[i * tw * c + j] * wt;
            }
            *v = round_gray(acc);
        }
    }
    Raster::from_pixels(target_w, target_h, img.channels, out)
}

/// Per-output-index source taps `(index, weight)` along one axis.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f32)>> {
    if dst == src {
        return (0..dst).map(|i| vec![(i, 1.0)]).collect();
    }
    if dst < src {
        // Area averaging: output pixel i covers [i*s, (i+1)*s) in source units.
        let s = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let lo = i as f64 * s;
                let hi = (i + 1) as f64 * s;
                let first = lo.floor() as usize;
                let last = (hi.ceil() as usize).min(src);
                let mut taps = Vec::with_capacity(last - first);
                for k in first..last {
                    let overlap = (hi.min((k + 1) as f64) - lo.max(k as f64)).max(0.0);
                    if overlap > 0.0 {
                        taps.push((k, (overlap / s) as f32));
                    }
                }
                taps
            })
            .collect()
    } else {
        let s = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * s - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = pos.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                let t = (pos - i0 as f64) as f32;
                if i1 == i0 || t == 0.0 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - t), (i1, t)]
                }
            })
            .collect()
    }
}

/// Threshold to pure black/white: `pixel <= threshold` becomes 0, else 255.
/// RGBA input is flattened to gray first.
pub fn to_blackwhite(img: &Raster, threshold: u8) -> Raster {
    let gray = img.to_gray();
    let pixels = gray
        .pixels
        .iter()
        .map(|&p| if p <= threshold { 0 } else { 255 })
        .collect();
    Raster {
        pixels,
        ..gray
    }
}
