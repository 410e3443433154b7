//! Ground-truth manifest: one JSON object per generated page, one per line.
//!
//! Key names are stable:
//!
//! | key | meaning |
//! |-----|---------|
//! | `page_id` | unique page identifier, also the join key for predictions |
//! | `image` | image file name, relative to the output directory |
//! | `seed` | generation seed of the page |
//! | `record_count` | number of records on the page (the label) |
//! | `record_boxes` | `{x, y, w, h}` ink bounding box per record, in image pixels |
//! | `header_present` | whether a header was painted |
//! | `applied_augmentations` | transformations applied after generation, in order |
//! | `model_hash` | SHA-256 of the model XML |
//! | `background` | name of the substrate the page was composited on |
//! | `width`, `height` | image dimensions |

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::raster::Rect;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Augmentation {
    Rescale {
        factor: f64,
    },
    Rotate {
        angle: f64,
        fill: u8,
    },
    /// `regions` empty means the whole page.
    SaltPepper {
        density: f64,
        regions: Vec<Rect>,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub page_id: String,
    pub image: String,
    pub seed: u64,
    pub record_count: u32,
    pub record_boxes: Vec<Rect>,
    pub header_present: bool,
    #[serde(default)]
    pub applied_augmentations: Vec<Augmentation>,
    pub model_hash: String,
    pub background: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub fn write_manifest(path: &Path, rows: &[GroundTruthRecord]) -> Result<(), ManifestError> {
    let io_err = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_manifest(path: &Path) -> Result<Vec<GroundTruthRecord>, ManifestError> {
    let io_err = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut rows = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| ManifestError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}
