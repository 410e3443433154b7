//! Shared fixtures for the pipeline benchmarks.

use std::path::{Path, PathBuf};

use docsynth::raster::Raster;

pub fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

/// A scan-like page: smooth paper tone with dark strokes.
pub fn scan_like(width: u32, height: u32) -> Raster {
    Raster::gray_from_fn(width, height, |x, y| {
        let paper = 170 + ((x + y) * 50 / (width + height)) as u8;
        if y % 32 < 3 && x % 90 < 70 {
            35
        } else {
            paper
        }
    })
}
