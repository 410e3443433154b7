//! Label-preserving page transformations: salt-and-pepper noise, rotation,
//! rescaling.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng as _, SeedableRng};
use rayon::prelude::*;

use crate::manifest::{Augmentation, GroundTruthRecord};
use crate::raster::{load_image, resize, round_gray, save_image, Raster, RasterError, Rect};
use crate::seed::{Rng, SeedTree};

pub const MAX_ANGLE: f64 = 45.0;
pub const MIN_FACTOR: f64 = 0.5;
pub const MAX_FACTOR: f64 = 1.5;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("invalid augmentation parameter: {0}")]
    Param(String),
    #[error("page {page_id}: image {} is missing", path.display())]
    MissingImage { page_id: String, path: PathBuf },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Replace each pixel of `region` (whole image if `None`) with probability
/// `density` by 0 or 255, with equal odds.
pub fn salt_pepper(img: &Raster, density: f64, region: Option<Rect>, rng: &mut Rng) -> Raster {
    assert!((0.0..=1.0).contains(&density), "density {density} outside [0, 1]");
    let gray = img.to_gray();
    let mut out = gray.clone();
    if density == 0.0 {
        return out;
    }
    let r = region
        .unwrap_or_else(|| gray.bounds())
        .clip(gray.width(), gray.height());
    for y in r.y..r.y + r.h {
        for x in r.x..r.x + r.w {
            if rng.gen_bool(density) {
                out.set_gray(x, y, if rng.gen_bool(0.5) { 255 } else { 0 });
            }
        }
    }
    out
}

fn sample_or_fill(img: &Raster, x: i64, y: i64, fill: u8) -> f64 {
    if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
        fill as f64
    } else {
        img.gray(x as u32, y as u32) as f64
    }
}

fn bilinear(img: &Raster, sx: f64, sy: f64, fill: u8) -> u8 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    let top = sample_or_fill(img, xi, yi, fill) * (1.0 - fx) + sample_or_fill(img, xi + 1, yi, fill) * fx;
    let bot = sample_or_fill(img, xi, yi + 1, fill) * (1.0 - fx)
        + sample_or_fill(img, xi + 1, yi + 1, fill) * fx;
    round_gray((top * (1.0 - fy) + bot * fy) as f32)
}

fn center(img: &Raster) -> (f64, f64) {
    ((img.width() as f64 - 1.0) / 2.0, (img.height() as f64 - 1.0) / 2.0)
}

/// Rotate about the image center by `angle` degrees (positive turns +x
/// toward +y in image coordinates). Same dimensions; uncovered pixels take
/// `fill`.
pub fn rotate(img: &Raster, angle: f64, fill: u8) -> Result<Raster, AugmentError> {
    if !angle.is_finite() || angle.abs() > MAX_ANGLE {
        return Err(AugmentError::Param(format!(
            "rotation angle {angle} outside [-{MAX_ANGLE}, {MAX_ANGLE}]"
        )));
    }
    Ok(rotate_unchecked(img, angle, fill))
}

fn rotate_unchecked(img: &Raster, angle: f64, fill: u8) -> Raster {
    let gray = img.to_gray();
    if angle == 0.0 {
        return gray;
    }
    let (sin, cos) = angle.to_radians().sin_cos();
    let (cx, cy) = center(&gray);
    Raster::gray_from_fn(gray.width(), gray.height(), |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        // Inverse mapping: rotate the destination back by -angle.
        let sx = cos * dx + sin * dy + cx;
        let sy = -sin * dx + cos * dy + cy;
        bilinear(&gray, sx, sy, fill)
    })
}

fn scaled_dims(img: &Raster, factor: f64) -> (u32, u32) {
    let d = |v: u32| ((v as f64 * factor).round() as u32).max(1);
    (d(img.width()), d(img.height()))
}

fn scale_offset(full: u32, scaled: u32) -> i64 {
    (full as i64 - scaled as i64).div_euclid(2)
}

/// Scale content about the center by `factor`, keeping the canvas size.
pub fn rescale(img: &Raster, factor: f64, fill: u8) -> Result<Raster, AugmentError> {
    if !(MIN_FACTOR..=MAX_FACTOR).contains(&factor) {
        return Err(AugmentError::Param(format!(
            "scale factor {factor} outside [{MIN_FACTOR}, {MAX_FACTOR}]"
        )));
    }
    let gray = img.to_gray();
    let (nw, nh) = scaled_dims(&gray, factor);
    if (nw, nh) == gray.dimensions() {
        return Ok(gray);
    }
    let scaled = resize(&gray, nw, nh)?;
    let ox = scale_offset(gray.width(), nw);
    let oy = scale_offset(gray.height(), nh);
    Ok(Raster::gray_from_fn(gray.width(), gray.height(), |x, y| {
        let sx = x as i64 - ox;
        let sy = y as i64 - oy;
        if sx < 0 || sy < 0 || sx >= nw as i64 || sy >= nh as i64 {
            fill
        } else {
            scaled.gray(sx as u32, sy as u32)
        }
    }))
}

/// Lower median of the outermost ring of pixels.
pub fn border_median(img: &Raster) -> u8 {
    let g = img.to_gray();
    let (w, h) = g.dimensions();
    let mut ring = Vec::with_capacity(2 * (w + h) as usize);
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                ring.push(g.gray(x, y));
            }
        }
    }
    let mid = (ring.len() - 1) / 2;
    *ring.select_nth_unstable(mid).1
}

fn rect_from_bounds(x0: f64, y0: f64, x1: f64, y1: f64, w: u32, h: u32) -> Rect {
    let cx0 = x0.floor().clamp(0.0, w as f64) as u32;
    let cy0 = y0.floor().clamp(0.0, h as f64) as u32;
    let cx1 = x1.ceil().clamp(0.0, w as f64) as u32;
    let cy1 = y1.ceil().clamp(0.0, h as f64) as u32;
    if cx1 <= cx0 || cy1 <= cy0 {
        return Rect::EMPTY;
    }
    Rect::new(cx0, cy0, cx1 - cx0, cy1 - cy0)
}

/// Where a box lands after [`rescale`]; clipped to the canvas.
pub fn rescale_rect(r: Rect, width: u32, height: u32, factor: f64) -> Rect {
    if r.is_empty() {
        return r;
    }
    let probe = Raster::filled_gray(width, height, 0);
    let (nw, nh) = scaled_dims(&probe, factor);
    let sx = nw as f64 / width as f64;
    let sy = nh as f64 / height as f64;
    let ox = scale_offset(width, nw) as f64;
    let oy = scale_offset(height, nh) as f64;
    rect_from_bounds(
        ox + r.x as f64 * sx,
        oy + r.y as f64 * sy,
        ox + r.right() as f64 * sx,
        oy + r.bottom() as f64 * sy,
        width,
        height,
    )
}

/// Bounding box of a box after [`rotate`]; clipped to the canvas.
pub fn rotate_rect(r: Rect, width: u32, height: u32, angle: f64) -> Rect {
    if r.is_empty() {
        return r;
    }
    let (sin, cos) = angle.to_radians().sin_cos();
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let xs = [r.x as f64, (r.right() - 1) as f64];
    let ys = [r.y as f64, (r.bottom() - 1) as f64];
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &px in &xs {
        for &py in &ys {
            let dx = px - cx;
            let dy = py - cy;
            let qx = cos * dx - sin * dy + cx;
            let qy = sin * dx + cos * dy + cy;
            x0 = x0.min(qx);
            y0 = y0.min(qy);
            x1 = x1.max(qx);
            y1 = y1.max(qy);
        }
    }
    // Corners are pixel centers; one more pixel covers the far edge.
    rect_from_bounds(x0, y0, x1 + 1.0, y1 + 1.0, width, height)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionalNoise {
    pub count: u32,
    pub min_size: u32,
    pub max_size: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    pub salt_pepper: f64,
    /// Restrict noise to random sub-areas instead of the whole page.
    pub regions: Option<RegionalNoise>,
    /// Angles are drawn uniformly from `[-rotate, rotate]` degrees.
    pub rotate: f64,
    /// Factors are drawn uniformly from `[1 - scale, 1 + scale]`.
    pub scale: f64,
    pub seed: u64,
    /// Fill for uncovered pixels; `None` uses the page's border median.
    pub fill: Option<u8>,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            salt_pepper: 0.0,
            regions: None,
            rotate: 0.0,
            scale: 0.0,
            seed: 0,
            fill: None,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::Param(m));
        if !(0.0..=1.0).contains(&self.salt_pepper) {
            return bad(format!("salt-and-pepper density {} outside [0, 1]", self.salt_pepper));
        }
        if !(0.0..=MAX_ANGLE).contains(&self.rotate) {
            return bad(format!("rotation range {} outside [0, {MAX_ANGLE}]", self.rotate));
        }
        if !(0.0..=1.0 - MIN_FACTOR).contains(&self.scale) {
            return bad(format!("scale range {} outside [0, {}]", self.scale, 1.0 - MIN_FACTOR));
        }
        if let Some(r) = self.regions {
            if r.count == 0 || r.min_size == 0 || r.min_size > r.max_size {
                return bad(format!(
                    "regional noise needs count >= 1 and 1 <= min <= max, got {} regions of {}..{}",
                    r.count, r.min_size, r.max_size
                ));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.salt_pepper == 0.0 && self.rotate == 0.0 && self.scale == 0.0
    }
}

/// Transform one page and its ground truth. Draw order is fixed:
/// scale, rotation, noise, each from its own sub-stream of `(seed, page_id)`.
pub fn augment_page(
    img: &Raster,
    truth: &GroundTruthRecord,
    params: &AugmentParams,
) -> Result<(Raster, GroundTruthRecord), AugmentError> {
    params.validate()?;
    let tree = SeedTree::new(params.seed).child(&truth.page_id, 0);
    let mut page = img.to_gray();
    let (w, h) = page.dimensions();
    let fill = params.fill.unwrap_or_else(|| border_median(&page));
    let mut out = truth.clone();

    if params.scale > 0.0 {
        let factor = tree
            .child("scale", 0)
            .rng()
            .gen_range(1.0 - params.scale..=1.0 + params.scale);
        page = rescale(&page, factor, fill)?;
        for b in &mut out.record_boxes {
            *b = rescale_rect(*b, w, h, factor);
        }
        out.applied_augmentations.push(Augmentation::Rescale { factor });
    }
    if params.rotate > 0.0 {
        let angle = tree
            .child("rotate", 0)
            .rng()
            .gen_range(-params.rotate..=params.rotate);
        page = rotate(&page, angle, fill)?;
        for b in &mut out.record_boxes {
            *b = rotate_rect(*b, w, h, angle);
        }
        out.applied_augmentations.push(Augmentation::Rotate { angle, fill });
    }
    if params.salt_pepper > 0.0 {
        let seed = tree.child("noise", 0).value();
        let mut rng = Rng::seed_from_u64(seed);
        let regions = match params.regions {
            None => Vec::new(),
            Some(spec) => (0..spec.count)
                .map(|_| {
                    let rw = rng.gen_range(spec.min_size..=spec.max_size);
                    let rh = rng.gen_range(spec.min_size..=spec.max_size);
                    let x = rng.gen_range(0..w);
                    let y = rng.gen_range(0..h);
                    Rect::new(x, y, rw, rh).clip(w, h)
                })
                .collect(),
        };
        if regions.is_empty() {
            page = salt_pepper(&page, params.salt_pepper, None, &mut rng);
        }
        for r in &regions {
            page = salt_pepper(&page, params.salt_pepper, Some(*r), &mut rng);
        }
        out.applied_augmentations.push(Augmentation::SaltPepper {
            density: params.salt_pepper,
            regions,
            seed,
        });
    }
    Ok((page, out))
}

/// Augment every manifest page found under `input_dir` into `out_dir`.
/// With identity parameters, image files are copied unchanged.
pub fn augment_dataset(
    rows: &[GroundTruthRecord],
    input_dir: &Path,
    out_dir: &Path,
    params: &AugmentParams,
    workers: usize,
) -> Result<Vec<GroundTruthRecord>, AugmentError> {
    params.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| AugmentError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| AugmentError::Param(e.to_string()))?;
    pool.install(|| {
        rows.par_iter()
            .map(|row| {
                let src = input_dir.join(&row.image);
                if !src.is_file() {
                    return Err(AugmentError::MissingImage {
                        page_id: row.page_id.clone(),
                        path: src,
                    });
                }
                let dst = out_dir.join(&row.image);
                if params.is_identity() {
                    if src != dst {
                        fs::copy(&src, &dst).map_err(|source| AugmentError::Io {
                            path: dst.clone(),
                            source,
                        })?;
                    }
                    return Ok(row.clone());
                }
                let img = load_image(&src)?;
                let (page, truth) = augment_page(&img, row, params)?;
                save_image(&page, &dst)?;
                Ok(truth)
            })
            .collect()
    })
}
