//! Background substrate extraction.
//!
//! Ink pixels found by the binarizer are replaced with the rounded mean of
//! the *original* background pixels in a `W x W` window around them. Only
//! input pixels feed the means, so the result does not depend on visiting
//! order.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binarize::{foreground_mask, BinarizeParams, Mask};
use crate::raster::{div_round, load_image, save_image, Raster, RasterError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    /// Retry with 2W and 4W windows, then the global background mean.
    ExpandWindow,
    GlobalMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundParams {
    pub binarize: BinarizeParams,
    pub window: u32,
    pub fallback: Fallback,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        BackgroundParams {
            binarize: BinarizeParams::otsu(),
            window: 20,
            fallback: Fallback::ExpandWindow,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackgroundError {
    #[error("window must be at least 2, got {0}")]
    Window(u32),
    #[error(transparent)]
    Binarize(#[from] crate::binarize::ParamError),
    #[error("{}: no readable images in directory", .0.display())]
    EmptyInput(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

impl BackgroundParams {
    pub fn validate(&self) -> Result<(), BackgroundError> {
        if self.window < 2 {
            return Err(BackgroundError::Window(self.window));
        }
        self.binarize.validate()?;
        Ok(())
    }
}

/// Replace classified ink with local background statistics.
pub fn extract_background(img: &Raster, params: &BackgroundParams) -> Raster {
    let gray = img.to_gray();
    let mask = foreground_mask(&gray, &params.binarize);
    fill_foreground(&gray, &mask, params.window, params.fallback)
}

/// The replacement step on its own, for callers that already hold a mask.
pub fn fill_foreground(gray: &Raster, mask: &Mask, window: u32, fallback: Fallback) -> Raster {
    assert_eq!((mask.width(), mask.height()), gray.dimensions());
    if mask.count() == 0 {
        return gray.clone();
    }
    let table = BackgroundSums::new(gray, mask);
    let (total_sum, total_count) = table.total();
    if total_count == 0 {
        // Nothing on the page looks like paper; there is no statistic to copy.
        log::warn!("page has no background pixels; leaving it unchanged");
        return gray.clone();
    }
    let global = div_round(total_sum, total_count) as u8;
    let windows: &[u32] = match fallback {
        Fallback::ExpandWindow => &[window, window * 2, window * 4],
        Fallback::GlobalMean => &[window],
    };

    let w = gray.width() as usize;
    let mut out = gray.clone();
    out.pixels_mut()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, px) in row.iter_mut().enumerate() {
                if !mask.get(x as u32, y as u32) {
                    continue;
                }
                *px = windows
                    .iter()
                    .find_map(|&win| {
                        let (s, n) = table.window_sum(x, y, win);
                        (n > 0).then(|| div_round(s, n) as u8)
                    })
                    .unwrap_or(global);
            }
        });
    out
}

/// Summed-area tables of background gray values and background counts.
struct BackgroundSums {
    width: usize,
    height: usize,
    sum: Vec<u64>,
    count: Vec<u64>,
}

impl BackgroundSums {
    fn new(gray: &Raster, mask: &Mask) -> Self {
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        let stride = w + 1;
        let mut sum = vec![0u64; stride * (h + 1)];
        let mut count = vec![0u64; stride * (h + 1)];
        let px = gray.pixels();
        for y in 0..h {
            let (mut rs, mut rc) = (0u64, 0u64);
            for x in 0..w {
                if !mask.bits()[y * w + x] {
                    rs += px[y * w + x] as u64;
                    rc += 1;
                }
                let i = (y + 1) * stride + x + 1;
                sum[i] = sum[i - stride] + rs;
                count[i] = count[i - stride] + rc;
            }
        }
        BackgroundSums {
            width: w,
            height: h,
            sum,
            count,
        }
    }

    fn total(&self) -> (u64, u64) {
        let i = self.height * (self.width + 1) + self.width;
        (self.sum[i], self.count[i])
    }

    /// Window spanning `[c - W/2, c - W/2 + W - 1]` on each axis, clipped.
    fn window_sum(&self, cx: usize, cy: usize, win: u32) -> (u64, u64) {
        let half = (win / 2) as usize;
        let x0 = cx.saturating_sub(half);
        let y0 = cy.saturating_sub(half);
        let x1 = (cx + win as usize - half).min(self.width);
        let y1 = (cy + win as usize - half).min(self.height);
        let s = self.width + 1;
        let a = |t: &[u64]| t[y1 * s + x1] + t[y0 * s + x0] - t[y0 * s + x1] - t[y1 * s + x0];
        (a(&self.sum), a(&self.count))
    }
}

#[derive(Debug)]
pub struct BatchReport {
    pub processed: Vec<PathBuf>,
    pub skipped: Vec<(PathBuf, RasterError)>,
}

/// Name of the background file written for `input`: `<stem>.bg.png`.
pub fn background_file_name(input: &Path) -> String {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{stem}.bg.png")
}

fn is_image_path(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Extract a background for every PNG in `input_dir` (sorted by name).
/// Files that fail to decode are reported in [`BatchReport::skipped`].
pub fn extract_background_batch(
    input_dir: &Path,
    output_dir: &Path,
    params: &BackgroundParams,
) -> Result<BatchReport, BackgroundError> {
    params.validate()?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| BackgroundError::Io { path, source }
    };
    let mut inputs: Vec<PathBuf> = fs::read_dir(input_dir)
        .map_err(io_err(input_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image_path(p))
        .collect();
    inputs.sort();
    if inputs.is_empty() {
        return Err(BackgroundError::EmptyInput(input_dir.to_path_buf()));
    }
    fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;

    let results: Vec<(PathBuf, Result<(), RasterError>)> = inputs
        .into_par_iter()
        .map(|path| {
            let res = load_image(&path).and_then(|img| {
                let bg = extract_background(&img, params);
                save_image(&bg, output_dir.join(background_file_name(&path)))
            });
            (path, res)
        })
        .collect();

    let mut report = BatchReport {
        processed: Vec::new(),
        skipped: Vec::new(),
    };
    for (path, res) in results {
        match res {
            Ok(()) => report.processed.push(path),
            // A failed write is an environment problem, not a bad input page.
            Err(e) if is_write_error(&e, output_dir) => return Err(e.into()),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                report.skipped.push((path, e));
            }
        }
    }
    if report.processed.is_empty() {
        return Err(BackgroundError::EmptyInput(input_dir.to_path_buf()));
    }
    Ok(report)
}

fn is_write_error(e: &RasterError, output_dir: &Path) -> bool {
    matches!(e, RasterError::Io { path, .. } if path.starts_with(output_dir))
}
