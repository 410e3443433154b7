//! Synthetic structured handwritten-document pages.
//!
//! Pipeline: extract paper substrates from real scans ([`background`]),
//! render record-structured foreground layers from an XML page model
//! ([`model`], [`compose`]), composite and write datasets with ground truth
//! ([`dataset`], [`manifest`]), augment them ([`augment`]) and score
//! record-count predictions ([`metrics`]).

pub mod augment;
pub mod background;
pub mod binarize;
pub mod compose;
pub mod dataset;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod seed;
pub mod textgen;

pub use augment::{augment_dataset, AugmentError, AugmentParams, RegionalNoise};
pub use background::{extract_background, BackgroundError, BackgroundParams, Fallback};
pub use binarize::{foreground_mask, otsu_threshold, BinarizeParams, Mask, Method};
pub use compose::{composite, ComposeError, ForegroundLayer, Generator, PageLayout};
pub use dataset::{generate_dataset, Backgrounds, BwMode, DatasetConfig, DatasetError};
pub use manifest::{read_manifest, write_manifest, Augmentation, GroundTruthRecord, ManifestError};
pub use metrics::{accuracy, error_metric, evaluate_files, MetricsError, PredictionSet, Report};
pub use model::{load_model, parse_model, ModelError, PageModel};
pub use raster::{load_image, save_image, Raster, RasterError, Rect};
pub use seed::SeedTree;
pub use textgen::{AssetError, Assets};
