//! Dictionary sampling and glyph rasterization into a foreground layer.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use ab_glyph::{Font, FontArc, GlyphId, PxScale, ScaleFont};
use rand::Rng;

use crate::model::{DictionarySpec, FontSpec, PageModel};
use crate::raster::{Channels, Raster, Rect};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssetError {
    #[error("font {name:?}: {} not found", path.display())]
    MissingFont { name: String, path: PathBuf },
    #[error("font {name:?}: {} is not a usable outline font ({detail})", path.display())]
    BadFont {
        name: String,
        path: PathBuf,
        detail: String,
    },
    #[error("dictionary {name:?}: {} not found", path.display())]
    MissingDictionary { name: String, path: PathBuf },
    #[error("dictionary {name:?}: {} could not be read ({detail})", path.display())]
    BadDictionary {
        name: String,
        path: PathBuf,
        detail: String,
    },
    #[error("dictionary {name:?} is empty")]
    EmptyDictionary { name: String },
}

/// An outline font plus the line-height ratio it is drawn at.
#[derive(Clone)]
pub struct LoadedFont {
    name: String,
    font: FontArc,
    size_ratio: f32,
}

impl std::fmt::Debug for LoadedFont {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedFont")
            .field("name", &self.name)
            .field("size_ratio", &self.size_ratio)
            .finish_non_exhaustive()
    }
}

impl LoadedFont {
    pub fn load(spec: &FontSpec) -> Result<Self, AssetError> {
        let bytes = fs::read(&spec.path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => AssetError::MissingFont {
                name: spec.name.clone(),
                path: spec.path.clone(),
            },
            _ => AssetError::BadFont {
                name: spec.name.clone(),
                path: spec.path.clone(),
                detail: e.to_string(),
            },
        })?;
        Self::from_bytes(&spec.name, bytes, spec.size_ratio).map_err(|detail| {
            AssetError::BadFont {
                name: spec.name.clone(),
                path: spec.path.clone(),
                detail,
            }
        })
    }

    pub fn from_bytes(name: &str, bytes: Vec<u8>, size_ratio: f64) -> Result<Self, String> {
        let font = FontArc::try_from_vec(bytes).map_err(|e| e.to_string())?;
        if font.glyph_count() == 0 {
            return Err("font has no glyphs".into());
        }
        Ok(LoadedFont {
            name: name.to_string(),
            font,
            size_ratio: size_ratio as f32,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The font at its nominal size for a line `line_height` pixels tall.
    pub fn for_line(&self, line_height: u32) -> SizedFont<'_> {
        self.at_px(self.size_ratio * line_height as f32)
    }

    pub fn at_px(&self, px: f32) -> SizedFont<'_> {
        SizedFont {
            font: &self.font,
            scale: PxScale::from(px.max(1.0)),
        }
    }
}

#[derive(Clone, Copy)]
pub struct SizedFont<'a> {
    font: &'a FontArc,
    scale: PxScale,
}

impl SizedFont<'_> {
    pub fn ascent(&self) -> f32 {
        self.font.as_scaled(self.scale).ascent()
    }

    fn glyph(&self, ch: char) -> GlyphId {
        let id = self.font.glyph_id(ch);
        if id.0 == 0 && !ch.is_whitespace() {
            log::debug!("no glyph for {ch:?}; drawing notdef");
        }
        id
    }

    /// Horizontal advance of `text` including kerning.
    pub fn advance(&self, text: &str) -> f32 {
        let scaled = self.font.as_scaled(self.scale);
        let mut prev: Option<GlyphId> = None;
        let mut w = 0.0;
        for ch in text.chars() {
            let id = self.glyph(ch);
            if let Some(p) = prev {
                w += scaled.kern(p, id);
            }
            w += scaled.h_advance(id);
            prev = Some(id);
        }
        w
    }
}

/// Word list backing a cell's text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    name: String,
    tokens: Vec<String>,
}

impl Dictionary {
    pub fn new(name: &str, tokens: Vec<String>) -> Result<Self, AssetError> {
        let tokens: Vec<String> = tokens
            .into_iter()
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            return Err(AssetError::EmptyDictionary {
                name: name.to_string(),
            });
        }
        Ok(Dictionary {
            name: name.to_string(),
            tokens,
        })
    }

    /// One token per line, UTF-8; blank lines and `#` comments ignored.
    pub fn load(spec: &DictionarySpec) -> Result<Self, AssetError> {
        let text = fs::read_to_string(&spec.path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => AssetError::MissingDictionary {
                name: spec.name.clone(),
                path: spec.path.clone(),
            },
            _ => AssetError::BadDictionary {
                name: spec.name.clone(),
                path: spec.path.clone(),
                detail: e.to_string(),
            },
        })?;
        let tokens = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .map(str::to_string)
            .collect();
        Self::new(&spec.name, tokens)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Hard cap on tokens per cell, for fonts with zero-width glyphs.
const MAX_TOKENS: usize = 256;

/// Greedy width-bounded fill: draw tokens uniformly, joined by single
/// spaces, until the next one would push the advance past `max_width`.
/// Always returns at least one token; overflow is clipped when rendering.
pub fn sample_text<R: Rng + ?Sized>(
    dict: &Dictionary,
    font: &SizedFont<'_>,
    max_width: f32,
    rng: &mut R,
) -> String {
    let tokens = dict.tokens();
    let mut text = tokens[rng.gen_range(0..tokens.len())].clone();
    for _ in 1..MAX_TOKENS {
        let next = &tokens[rng.gen_range(0..tokens.len())];
        let candidate = format!("{text} {next}");
        if font.advance(&candidate) > max_width {
            break;
        }
        text = candidate;
    }
    text
}

/// Rasterize `text` with its baseline at `clip.y + ascent`, starting at
/// `clip.x`. Coverage goes into the alpha channel (max-combined with what is
/// already there), RGB is set to `ink`. Nothing is written outside `clip`.
///
/// Returns the tight bounding box of the pixels touched, or an empty rect.
pub fn render_text(
    text: &str,
    font: &SizedFont<'_>,
    clip: Rect,
    ink: u8,
    layer: &mut Raster,
) -> Rect {
    assert_eq!(layer.channels(), Channels::Rgba8, "render target must be RGBA");
    let clip = clip.clip(layer.width(), layer.height());
    if text.is_empty() || clip.is_empty() {
        return Rect::EMPTY;
    }
    let scaled = font.font.as_scaled(font.scale);
    let baseline = clip.y as f32 + scaled.ascent();
    let mut caret = clip.x as f32;
    let mut prev: Option<GlyphId> = None;
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
    let clip_right = clip.right() as i64;
    let clip_bottom = clip.bottom() as i64;

    for ch in text.chars() {
        let id = font.glyph(ch);
        if let Some(p) = prev {
            caret += scaled.kern(p, id);
        }
        prev = Some(id);
        if caret > clip_right as f32 + font.scale.x {
            // Far enough past the right edge that no overhang can reach back.
            break;
        }
        let glyph = id.with_scale_and_position(font.scale, ab_glyph::point(caret, baseline));
        caret += scaled.h_advance(id);
        let Some(outline) = font.font.outline_glyph(glyph) else {
            continue;
        };
        let bounds = outline.px_bounds();
        let (bx, by) = (bounds.min.x as i64, bounds.min.y as i64);
        outline.draw(|gx, gy, coverage| {
            let x = bx + gx as i64;
            let y = by + gy as i64;
            if x < clip.x as i64 || y < clip.y as i64 || x >= clip_right || y >= clip_bottom {
                return;
            }
            let a = (coverage.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8;
            if a == 0 {
                return;
            }
            let (x, y) = (x as u32, y as u32);
            let old = layer.rgba(x, y)[3];
            layer.set_rgba(x, y, [ink, ink, ink, old.max(a)]);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        });
    }
    if x0 == u32::MAX {
        Rect::EMPTY
    } else {
        Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
    }
}

/// Every font and dictionary a model references, loaded once and shared
/// read-only between workers.
#[derive(Debug, Clone)]
pub struct Assets {
    fonts: BTreeMap<String, Arc<LoadedFont>>,
    dictionaries: BTreeMap<String, Arc<Dictionary>>,
}

impl Assets {
    pub fn load(model: &PageModel) -> Result<Self, AssetError> {
        let mut fonts = BTreeMap::new();
        for (name, spec) in &model.fonts {
            fonts.insert(name.clone(), Arc::new(LoadedFont::load(spec)?));
        }
        let mut dictionaries = BTreeMap::new();
        for (name, spec) in &model.dictionaries {
            dictionaries.insert(name.clone(), Arc::new(Dictionary::load(spec)?));
        }
        Ok(Assets {
            fonts,
            dictionaries,
        })
    }

    /// Assemble from already-loaded parts (tests, embedded assets).
    pub fn from_parts(
        fonts: impl IntoIterator<Item = LoadedFont>,
        dictionaries: impl IntoIterator<Item = Dictionary>,
    ) -> Self {
        Assets {
            fonts: fonts
                .into_iter()
                .map(|f| (f.name.clone(), Arc::new(f)))
                .collect(),
            dictionaries: dictionaries
                .into_iter()
                .map(|d| (d.name.clone(), Arc::new(d)))
                .collect(),
        }
    }

    pub fn font(&self, name: &str) -> Option<&LoadedFont> {
        self.fonts.get(name).map(|f| f.as_ref())
    }

    pub fn dictionary(&self, name: &str) -> Option<&Dictionary> {
        self.dictionaries.get(name).map(|d| d.as_ref())
    }
}
