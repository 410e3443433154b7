//! Ink/paper classification by global (Otsu) or local (Sauvola) thresholding.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Otsu,
    Sauvola,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinarizeParams {
    pub method: Method,
    /// Odd side length of the Sauvola window.
    pub sauvola_window: u32,
    pub sauvola_k: f64,
    /// Dynamic range of the standard deviation.
    pub sauvola_r: f64,
}

impl Default for BinarizeParams {
    fn default() -> Self {
        BinarizeParams {
            method: Method::Otsu,
            sauvola_window: 31,
            sauvola_k: 0.2,
            sauvola_r: 128.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("sauvola window must be odd and at least 3, got {0}")]
    Window(u32),
    #[error("sauvola k must lie in (0, 1), got {0}")]
    K(f64),
    #[error("sauvola R must be positive, got {0}")]
    R(f64),
}

impl BinarizeParams {
    pub fn otsu() -> Self {
        BinarizeParams::default()
    }

    pub fn sauvola() -> Self {
        BinarizeParams {
            method: Method::Sauvola,
            ..BinarizeParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.sauvola_window < 3 || self.sauvola_window.is_multiple_of(2) {
            return Err(ParamError::Window(self.sauvola_window));
        }
        if !(self.sauvola_k > 0.0 && self.sauvola_k < 1.0) {
            return Err(ParamError::K(self.sauvola_k));
        }
        if !(self.sauvola_r > 0.0 && self.sauvola_r.is_finite()) {
            return Err(ParamError::R(self.sauvola_r));
        }
        Ok(())
    }
}

/// Per-pixel foreground flags, row-major, same dimensions as the source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        Mask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub fn histogram(img: &Raster) -> [u64; 256] {
    let gray = img.to_gray();
    let mut hist = [0u64; 256];
    for &p in gray.pixels() {
        hist[p as usize] += 1;
    }
    hist
}

/// Otsu's threshold: the level `t` maximizing between-class variance when
/// class 0 is `pixel <= t`. Ties resolve to the lowest `t`.
///
/// Returns `None` when no level separates two non-empty classes (a constant
/// image), which callers treat as "no foreground".
///
/// Variances are compared as exact rationals: for `n0` pixels at or below
/// `t` with gray sum `s0`, out of `n` pixels with sum `s`, the variance is
/// proportional to `(n*s0 - n0*s)^2 / (n0*(n - n0))`.
pub fn otsu_threshold(img: &Raster) -> Option<u8> {
    otsu_from_histogram(&histogram(img))
}

pub fn otsu_from_histogram(hist: &[u64; 256]) -> Option<u8> {
    let n: u64 = hist.iter().sum();
    let s: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 0..=255u8 {
        n0 += hist[t as usize];
        s0 += t as u64 * hist[t as usize];
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (n as i128 * s0 as i128 - n0 as i128 * s as i128).unsigned_abs();
        let num = diff * diff;
        let den = n0 as u128 * n1 as u128;
        match best {
            Some((_, bn, bd)) if cmp_fraction(num, den, bn, bd) != Ordering::Greater => {}
            _ => best = Some((t, num, den)),
        }
    }
    best.filter(|&(_, num, _)| num > 0).map(|(t, _, _)| t)
}

/// Compare `a/b` with `c/d` exactly (`b`, `d` > 0) without multiplying.
fn cmp_fraction(mut a: u128, mut b: u128, mut c: u128, mut d: u128) -> Ordering {
    let mut flipped = false;
    loop {
        let (qa, ra) = (a / b, a % b);
        let (qc, rc) = (c / d, c % d);
        let ord = qa.cmp(&qc);
        if ord != Ordering::Equal {
            return if flipped { ord.reverse() } else { ord };
        }
        match (ra == 0, rc == 0) {
            (true, true) => return Ordering::Equal,
            (true, false) => {
                return if flipped {
                    Ordering::Greater
                } else {
                    Ordering::Less
                }
            }
            (false, true) => {
                return if flipped {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
            // ra/b vs rc/d  <=>  d/rc vs b/ra
            (false, false) => {
                (a, b, c, d) = (b, ra, d, rc);
                flipped = !flipped;
            }
        }
    }
}

/// Classify ink pixels. `true` marks foreground.
pub fn foreground_mask(img: &Raster, params: &BinarizeParams) -> Mask {
    let gray = img.to_gray();
    match params.method {
        Method::Otsu => {
            let bits = match otsu_threshold(&gray) {
                Some(t) => gray.pixels().iter().map(|&p| p <= t).collect(),
                None => vec![false; gray.pixel_count()],
            };
            Mask::new(gray.width(), gray.height(), bits)
        }
        Method::Sauvola => sauvola_mask(&gray, params),
    }
}

/// Per-pixel Sauvola thresholds `m * (1 + k * (s / R - 1))` over an
/// edge-replicated `window` x `window` neighbourhood.
pub fn sauvola_thresholds(img: &Raster, params: &BinarizeParams) -> Vec<f64> {
    let gray = img.to_gray();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let r = (params.sauvola_window / 2) as usize;
    let table = PaddedIntegral::new(&gray, r);
    let area = (params.sauvola_window as f64).powi(2);
    let (k, range) = (params.sauvola_k, params.sauvola_r);
    let mut out = vec![0f64; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, t) in row.iter_mut().enumerate() {
            let (sum, sq) = table.window(x, y, 2 * r + 1);
            let mean = sum as f64 / area;
            let var = (sq as f64 / area - mean * mean).max(0.0);
            *t = mean * (1.0 + k * (var.sqrt() / range - 1.0));
        }
    });
    out
}

fn sauvola_mask(gray: &Raster, params: &BinarizeParams) -> Mask {
    let thresholds = sauvola_thresholds(gray, params);
    let bits = gray
        .pixels()
        .iter()
        .zip(&thresholds)
        .map(|(&p, &t)| p as f64 <= t)
        .collect();
    Mask::new(gray.width(), gray.height(), bits)
}

/// Summed-area tables of `x` and `x^2` over the image padded by `pad` pixels
/// of edge replication on every side.
struct PaddedIntegral {
    stride: usize,
    sum: Vec<u64>,
    sq: Vec<u64>,
}

impl PaddedIntegral {
    fn new(gray: &Raster, pad: usize) -> Self {
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        let pw = w + 2 * pad;
        let ph = h + 2 * pad;
        let stride = pw + 1;
        let mut sum = vec![0u64; stride * (ph + 1)];
        let mut sq = vec![0u64; stride * (ph + 1)];
        let px = gray.pixels();
        for py in 0..ph {
            let sy = py.saturating_sub(pad).min(h - 1);
            let (mut rs, mut rq) = (0u64, 0u64);
            for qx in 0..pw {
                let sx = qx.saturating_sub(pad).min(w - 1);
                let v = px[sy * w + sx] as u64;
                rs += v;
                rq += v * v;
                let i = (py + 1) * stride + qx + 1;
                sum[i] = sum[i - stride] + rs;
                sq[i] = sq[i - stride] + rq;
            }
        }
        PaddedIntegral { stride, sum, sq }
    }

    /// Sums over the `side` x `side` window whose top-left in padded
    /// coordinates is `(x, y)`; i.e. centred on original pixel `(x, y)`.
    fn window(&self, x: usize, y: usize, side: usize) -> (u64, u64) {
        let s = self.stride;
        let (x0, y0, x1, y1) = (x, y, x + side, y + side);
        let a = |t: &[u64]| t[y1 * s + x1] + t[y0 * s + x0] - t[y0 * s + x1] - t[y1 * s + x0];
        (a(&self.sum), a(&self.sq))
    }
}
