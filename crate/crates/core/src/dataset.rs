//! Batch generation: many pages, round-robin backgrounds, one manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::binarize::otsu_threshold;
use crate::compose::{composite, ComposeError, ForegroundLayer, Generator, PageLayout};
use crate::manifest::GroundTruthRecord;
use crate::raster::{load_image, resize, save_image, to_blackwhite, Raster, RasterError, Rect};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: no PNG backgrounds found", .0.display())]
    NoBackgrounds(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Optional final thresholding to pure black/white.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BwMode {
    #[default]
    Off,
    Otsu,
    Fixed(u8),
}

impl FromStr for BwMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" | "none" => Ok(BwMode::Off),
            "otsu" => Ok(BwMode::Otsu),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|t| t.parse::<u8>().ok())
                .map(BwMode::Fixed)
                .ok_or_else(|| format!("expected otsu or fixed:<0-255>, got {s:?}")),
        }
    }
}

impl BwMode {
    pub fn apply(self, img: &Raster) -> Raster {
        match self {
            BwMode::Off => img.clone(),
            BwMode::Fixed(t) => to_blackwhite(img, t),
            BwMode::Otsu => match otsu_threshold(img) {
                Some(t) => to_blackwhite(img, t),
                // No contrast: nothing is ink.
                None => Raster::filled_gray(img.width(), img.height(), 255),
            },
        }
    }
}

/// Named substrates, used round-robin by page index.
#[derive(Debug, Clone)]
pub struct Backgrounds {
    items: Vec<(String, Arc<Raster>)>,
}

impl Backgrounds {
    /// A single plain-white substrate.
    pub fn white() -> Self {
        Backgrounds {
            items: vec![("white".into(), Arc::new(Raster::filled_gray(1, 1, 255)))],
        }
    }

    pub fn from_rasters(items: Vec<(String, Raster)>) -> Result<Self, DatasetError> {
        if items.is_empty() {
            return Err(DatasetError::Config("at least one background is required".into()));
        }
        Ok(Backgrounds {
            items: items
                .into_iter()
                .map(|(n, r)| (n, Arc::new(r.to_gray())))
                .collect(),
        })
    }

    /// Every PNG in `dir`, sorted by file name.
    pub fn from_dir(dir: &Path) -> Result<Self, DatasetError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|source| DatasetError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
            })
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(DatasetError::NoBackgrounds(dir.to_path_buf()));
        }
        let items = paths
            .iter()
            .map(|p| {
                let name = p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok((name, load_image(p)?))
            })
            .collect::<Result<Vec<_>, RasterError>>()?;
        Self::from_rasters(items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn for_page(&self, index: usize) -> (&str, &Raster) {
        let (name, r) = &self.items[index % self.items.len()];
        (name, r)
    }

    /// Resize every substrate once to `width` x `height`.
    pub fn fitted(&self, width: u32, height: u32) -> Self {
        Backgrounds {
            items: self
                .items
                .iter()
                .map(|(n, r)| {
                    let fitted = if r.dimensions() == (width, height) {
                        Arc::clone(r)
                    } else {
                        Arc::new(resize(r, width, height).expect("positive dims"))
                    };
                    (n.clone(), fitted)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub count: usize,
    pub base_seed: u64,
    /// Output `(width, height)`; `None` keeps the model's page size.
    pub target: Option<(u32, u32)>,
    pub bw: BwMode,
    pub save_foreground: bool,
    pub workers: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            count: 1,
            base_seed: 0,
            target: None,
            bw: BwMode::Off,
            save_foreground: false,
            workers: 1,
        }
    }
}

pub fn page_id(index: usize) -> String {
    format!("page_{index:06}")
}

pub struct RenderedPage {
    pub image: Raster,
    pub foreground: ForegroundLayer,
    pub layout: PageLayout,
    pub truth: GroundTruthRecord,
}

/// Produce page `index` of a dataset in memory.
pub fn render_page(
    generator: &Generator,
    backgrounds: &Backgrounds,
    index: usize,
    cfg: &DatasetConfig,
) -> Result<RenderedPage, DatasetError> {
    let seed = cfg.base_seed.wrapping_add(index as u64);
    let (fg, layout) = generator.generate_page(seed)?;
    let (bg_name, bg) = backgrounds.for_page(index);
    let page = composite(&fg, bg);
    let (pw, ph) = page.dimensions();
    let (tw, th) = cfg.target.unwrap_or((pw, ph));
    let image = cfg.bw.apply(&resize(&page, tw, th)?);
    let boxes = layout
        .record_boxes
        .iter()
        .map(|b| scale_rect(*b, (pw, ph), (tw, th)))
        .collect();
    let id = page_id(index);
    let truth = GroundTruthRecord {
        image: format!("{id}.png"),
        page_id: id,
        seed,
        record_count: layout.record_count(),
        record_boxes: boxes,
        header_present: layout.header_box.is_some(),
        applied_augmentations: Vec::new(),
        model_hash: generator.model().digest.clone(),
        background: bg_name.to_string(),
        width: tw,
        height: th,
    };
    Ok(RenderedPage {
        image,
        foreground: fg,
        layout,
        truth,
    })
}

/// Map a page-space rect to the smallest covering rect in target space.
pub fn scale_rect(r: Rect, from: (u32, u32), to: (u32, u32)) -> Rect {
    if from == to || r.is_empty() {
        return r;
    }
    let sx = to.0 as f64 / from.0 as f64;
    let sy = to.1 as f64 / from.1 as f64;
    let x0 = (r.x as f64 * sx).floor() as u32;
    let y0 = (r.y as f64 * sy).floor() as u32;
    let x1 = ((r.right() as f64 * sx).ceil() as u32).clamp(x0 + 1, to.0);
    let y1 = ((r.bottom() as f64 * sy).ceil() as u32).clamp(y0 + 1, to.1);
    Rect::new(x0, y0, x1 - x0, y1 - y0)
}

/// Generate `cfg.count` pages into `out_dir` and return their manifest rows
/// in page order. Output bytes do not depend on `cfg.workers`.
pub fn generate_dataset(
    generator: &Generator,
    backgrounds: &Backgrounds,
    cfg: &DatasetConfig,
    out_dir: &Path,
) -> Result<Vec<GroundTruthRecord>, DatasetError> {
    if cfg.count == 0 {
        return Err(DatasetError::Config("count must be at least 1".into()));
    }
    if backgrounds.is_empty() {
        return Err(DatasetError::Config("at least one background is required".into()));
    }
    if let Some((w, h)) = cfg.target {
        if w == 0 || h == 0 {
            return Err(DatasetError::Config(format!("target size {w}x{h} is empty")));
        }
    }
    fs::create_dir_all(out_dir).map_err(|source| DatasetError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let m = generator.model();
    let backgrounds = backgrounds.fitted(m.width, m.height);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| DatasetError::Config(e.to_string()))?;
    pool.install(|| {
        (0..cfg.count)
            .into_par_iter()
            .map(|i| {
                let page = render_page(generator, &backgrounds, i, cfg)?;
                save_image(&page.image, out_dir.join(&page.truth.image))?;
                if cfg.save_foreground {
                    save_image(
                        page.foreground.raster(),
                        out_dir.join(format!("{}.fg.png", page.truth.page_id)),
                    )?;
                }
                Ok(page.truth)
            })
            .collect()
    })
}
