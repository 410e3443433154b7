//! Page generation: turn a [`PageModel`] and a seed into a transparent
//! foreground layer plus the record geometry that labels it, and composite
//! layers over background substrates.
//!
//! Layout runs top to bottom. The header (if any) is placed once at
//! `top`; data records follow. A target count `n` is drawn from
//! `[recordsMin, min(recordsMax, maxAppendRecords)]` and records are
//! appended while they fit above `maxCorpusHeight`. If the last record ends
//! above `minCorpusHeight`, more are appended (still within the count
//! range) until the corpus reaches it. A record instance that paints no
//! pixels is discarded and redrawn, so every counted record carries ink.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

use crate::model::{
    CellSpec, Fill, GraphicKind, GraphicObjectSpec, LineSpec, PageModel, RecordTemplate,
};
use crate::raster::{div_round, resize, Channels, Raster, Rect};
use crate::seed::{Rng, SeedTree};
use crate::textgen::{render_text, sample_text, AssetError, Assets};

/// Draws per record slot before giving up on filling it.
const RECORD_ATTEMPTS: u64 = 16;
/// Whole-page redraws when the count range cannot be met.
const PAGE_ATTEMPTS: u64 = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ComposeError {
    #[error("unsatisfiable model: {0}")]
    Unsatisfiable(String),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error("model references {kind} {name:?} that was not loaded")]
    UnknownAsset { kind: &'static str, name: String },
}

/// Transparent RGBA canvas holding only text and graphic objects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundLayer(Raster);

impl ForegroundLayer {
    pub fn new(width: u32, height: u32) -> Self {
        ForegroundLayer(Raster::transparent(width, height))
    }

    pub fn from_raster(raster: Raster) -> Option<Self> {
        (raster.channels() == Channels::Rgba8).then_some(ForegroundLayer(raster))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn raster_mut(&mut self) -> &mut Raster {
        &mut self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    pub fn width(&self) -> u32 {
        self.0.width()
    }

    pub fn height(&self) -> u32 {
        self.0.height()
    }
}

/// Geometry produced by one page generation, in page coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageLayout {
    pub seed: u64,
    pub header_box: Option<Rect>,
    /// Tight ink bounding box of every counted record, top to bottom.
    pub record_boxes: Vec<Rect>,
    /// Layout bottom of the last record (excluding its trailing gap).
    pub corpus_bottom: u32,
}

impl PageLayout {
    pub fn record_count(&self) -> u32 {
        self.record_boxes.len() as u32
    }
}

struct CellInstance<'a> {
    rect: Rect,
    spec: &'a CellSpec,
    text: String,
}

struct LineInstance<'a> {
    height: u32,
    cells: Vec<CellInstance<'a>>,
}

struct RecordInstance<'a> {
    /// Line tops relative to the record top.
    lines: Vec<(u32, LineInstance<'a>)>,
    extent: u32,
    advance: u32,
}

/// A model bound to its loaded assets. Immutable; share across workers.
#[derive(Debug, Clone)]
pub struct Generator {
    model: PageModel,
    assets: Assets,
}

impl Generator {
    /// Load the model's assets and check that it can produce a page at all.
    pub fn new(model: PageModel) -> Result<Self, ComposeError> {
        let assets = Assets::load(&model)?;
        Self::with_assets(model, assets)
    }

    pub fn with_assets(model: PageModel, assets: Assets) -> Result<Self, ComposeError> {
        for f in model.fonts.keys() {
            if assets.font(f).is_none() {
                return Err(ComposeError::UnknownAsset {
                    kind: "font",
                    name: f.clone(),
                });
            }
        }
        for d in model.dictionaries.keys() {
            if assets.dictionary(d).is_none() {
                return Err(ComposeError::UnknownAsset {
                    kind: "dictionary",
                    name: d.clone(),
                });
            }
        }
        check_satisfiable(&model)?;
        Ok(Generator { model, assets })
    }

    pub fn model(&self) -> &PageModel {
        &self.model
    }

    pub fn assets(&self) -> &Assets {
        &self.assets
    }

    pub fn generate_page(&self, seed: u64) -> Result<(ForegroundLayer, PageLayout), ComposeError> {
        let root = SeedTree::new(seed);
        let mut last = None;
        for attempt in 0..PAGE_ATTEMPTS {
            let tree = if attempt == 0 {
                root
            } else {
                root.child("page-retry", attempt)
            };
            match self.try_page(tree, seed) {
                Ok(page) => return Ok(page),
                Err(realized) => last = Some(realized),
            }
        }
        Err(ComposeError::Unsatisfiable(format!(
            "seed {seed}: only {} records fit after {PAGE_ATTEMPTS} attempts, recordsMin is {} \
             (corpus {}..{} px)",
            last.unwrap_or(0),
            self.model.records_min,
            self.model.min_corpus_height,
            self.model.max_corpus_height
        )))
    }

    /// One layout pass. `Err` carries the realized count when it fell short
    /// of `recordsMin`.
    fn try_page(&self, tree: SeedTree, seed: u64) -> Result<(ForegroundLayer, PageLayout), u32> {
        let m = &self.model;
        let mut layer = ForegroundLayer::new(m.width, m.height);
        let mut cursor = m.top;

        let header_box = m.header.as_ref().map(|h| {
            let inst = self.instantiate(h, tree.child("header", 0));
            let painted = self.render_record(&inst, cursor, &mut layer);
            cursor += inst.advance;
            painted
        });

        let lo = m.records_min;
        let hi = m.effective_records_max();
        let target = tree.child("count", 0).rng().gen_range(lo..=hi);

        let mut boxes: Vec<Rect> = Vec::new();
        let mut bottom = cursor;
        let mut slot = 0u64;
        loop {
            let count = boxes.len() as u32;
            let wanted = count < target || (bottom < m.min_corpus_height && count < hi);
            if !wanted {
                break;
            }
            let slot_tree = tree.child("record", slot);
            slot += 1;
            let mut placed = false;
            for attempt in 0..RECORD_ATTEMPTS {
                let t = slot_tree.child("attempt", attempt);
                let template = self.choose_group(t);
                let inst = self.instantiate(template, t);
                if cursor as u64 + inst.extent as u64 > m.max_corpus_height as u64 {
                    continue;
                }
                let painted = self.render_record(&inst, cursor, &mut layer);
                if painted.is_empty() {
                    continue;
                }
                boxes.push(painted);
                bottom = cursor + inst.extent;
                cursor += inst.advance;
                placed = true;
                break;
            }
            if !placed {
                break;
            }
        }

        if (boxes.len() as u32) < lo {
            return Err(boxes.len() as u32);
        }

        for (i, g) in m.graphics.iter().enumerate() {
            paint_graphic(g, &mut layer, &mut tree.child("graphic", i as u64).rng());
        }

        Ok((
            layer,
            PageLayout {
                seed,
                header_box: header_box.filter(|b| !b.is_empty()),
                record_boxes: boxes,
                corpus_bottom: bottom,
            },
        ))
    }

    fn choose_group(&self, tree: SeedTree) -> &RecordTemplate {
        let groups = &self.model.record_groups;
        if groups.len() == 1 {
            return &groups[0].template;
        }
        // Probabilities are renormalized; parse guarantees a positive total.
        let dist = WeightedIndex::new(groups.iter().map(|g| g.probability))
            .expect("record group weights validated at parse");
        &groups[dist.sample(&mut tree.child("group", 0).rng())].template
    }

    fn instantiate<'a>(&'a self, template: &'a RecordTemplate, tree: SeedTree) -> RecordInstance<'a> {
        let mut lines = Vec::new();
        let mut offset = 0u32;
        let mut last_vspace = 0u32;
        for (j, spec) in template.lines.iter().enumerate() {
            let line_tree = tree.child("line", j as u64);
            let mut rng = line_tree.rng();
            let roll: f64 = rng.gen();
            if !(spec.is_forced() || roll < spec.probability) {
                continue;
            }
            let height = jitter(&mut rng, spec.height, spec.height_jitter).max(1);
            let line = self.instantiate_line(spec, height, line_tree);
            lines.push((offset, line));
            offset += height + spec.vspace;
            last_vspace = spec.vspace;
        }
        let advance = offset;
        RecordInstance {
            lines,
            extent: advance - last_vspace,
            advance,
        }
    }

    fn instantiate_line<'a>(&'a self, spec: &'a LineSpec, height: u32, tree: SeedTree) -> LineInstance<'a> {
        let page_w = self.model.width;
        let mut cells = Vec::new();
        for (m, cell) in spec.cells.iter().enumerate() {
            let mut rng: Rng = tree.child("cell", m as u64).rng();
            let roll: f64 = rng.gen();
            if !(cell.mandatory || roll < cell.probability) {
                continue;
            }
            let x = jitter(&mut rng, cell.x, cell.x_jitter).min(page_w - cell.width);
            let font = self.assets.font(&cell.font).expect("checked in Generator::new");
            let dict = self
                .assets
                .dictionary(&cell.dict)
                .expect("checked in Generator::new");
            let text = sample_text(dict, &font.for_line(height), cell.width as f32, &mut rng);
            cells.push(CellInstance {
                rect: Rect::new(x, 0, cell.width, height),
                spec: cell,
                text,
            });
        }
        LineInstance { height, cells }
    }

    fn render_record(&self, inst: &RecordInstance<'_>, top: u32, layer: &mut ForegroundLayer) -> Rect {
        let mut painted = Rect::EMPTY;
        for (offset, line) in &inst.lines {
            let y = top + offset;
            for cell in &line.cells {
                let font = self.assets.font(&cell.spec.font).expect("checked");
                let rect = Rect { y, ..cell.rect };
                let r = render_text(
                    &cell.text,
                    &font.for_line(line.height),
                    rect,
                    self.model.ink,
                    layer.raster_mut(),
                );
                painted = painted.union(&r);
            }
        }
        painted
    }
}

/// `base ± spread`, uniform over integers, floored at zero.
fn jitter(rng: &mut Rng, base: u32, spread: u32) -> u32 {
    if spread == 0 {
        return base;
    }
    let d = rng.gen_range(-(spread as i64)..=spread as i64);
    (base as i64 + d).max(0) as u32
}

fn min_advance(t: &RecordTemplate) -> u32 {
    t.lines
        .iter()
        .filter(|l| l.is_forced())
        .map(|l| l.height.saturating_sub(l.height_jitter).max(1) + l.vspace)
        .sum()
}

/// Reject models whose smallest header plus smallest record cannot fit
/// between `top` and `maxCorpusHeight`, or that cannot host `recordsMin`
/// of their smallest record.
pub fn check_satisfiable(model: &PageModel) -> Result<(), ComposeError> {
    let header = model.header.as_ref().map(min_advance).unwrap_or(0);
    let start = model.top as u64 + header as u64;
    let avail = (model.max_corpus_height as u64).saturating_sub(start);
    let candidates = model.record_groups.iter().filter(|g| g.probability > 0.0);
    let smallest_extent = candidates
        .clone()
        .map(|g| g.template.min_extent())
        .min()
        .unwrap_or(0) as u64;
    let smallest_advance = candidates
        .map(|g| min_advance(&g.template))
        .min()
        .unwrap_or(0) as u64;
    if smallest_extent > avail {
        return Err(ComposeError::Unsatisfiable(format!(
            "smallest record is {smallest_extent} px tall but only {avail} px remain between \
             the header bottom ({start}) and maxCorpusHeight ({})",
            model.max_corpus_height
        )));
    }
    let need_min = model.records_min as u64;
    if need_min > 0 {
        let need = (need_min - 1) * smallest_advance + smallest_extent;
        if need > avail {
            return Err(ComposeError::Unsatisfiable(format!(
                "recordsMin={} needs at least {need} px but only {avail} px are available",
                model.records_min
            )));
        }
    }
    Ok(())
}

/// Paint one graphic object, subject to its appearance probability.
/// Returns whether it was drawn.
pub fn paint_graphic(obj: &GraphicObjectSpec, layer: &mut ForegroundLayer, rng: &mut Rng) -> bool {
    let roll: f64 = rng.gen();
    if roll >= obj.probability {
        return false;
    }
    let rect = obj.rect.clip(layer.width(), layer.height());
    let area = match obj.kind {
        GraphicKind::Box => rect,
        GraphicKind::Line { stroke } => {
            if rect.w >= rect.h {
                let s = stroke.min(rect.h);
                Rect::new(rect.x, rect.y + (rect.h - s) / 2, rect.w, s)
            } else {
                let s = stroke.min(rect.w);
                Rect::new(rect.x + (rect.w - s) / 2, rect.y, s, rect.h)
            }
        }
    };
    let raster = layer.raster_mut();
    for y in area.y..area.y + area.h {
        for x in area.x..area.x + area.w {
            match obj.fill {
                Fill::Solid(v) => raster.set_rgba(x, y, [v, v, v, 255]),
                Fill::SaltPepper(d) => {
                    if rng.gen::<f64>() < d {
                        raster.set_rgba(x, y, [0, 0, 0, 255]);
                    }
                }
            }
        }
    }
    true
}

/// Alpha-over of the layer onto a gray substrate:
/// `round_half_up((a * ink + (255 - a) * bg) / 255)`.
/// The substrate is resized to the layer's dimensions when they differ.
pub fn composite(fg: &ForegroundLayer, bg: &Raster) -> Raster {
    let bg = bg.to_gray();
    let bg = if bg.dimensions() == (fg.width(), fg.height()) {
        bg
    } else {
        resize(&bg, fg.width(), fg.height()).expect("layer dimensions are positive")
    };
    let mut out = bg;
    for (o, p) in out
        .pixels_mut()
        .iter_mut()
        .zip(fg.raster().pixels().chunks_exact(4))
    {
        let a = p[3] as u64;
        if a == 0 {
            continue;
        }
        let ink = (77 * p[0] as u64 + 150 * p[1] as u64 + 29 * p[2] as u64) >> 8;
        *o = div_round(a * ink + (255 - a) * *o as u64, 255) as u8;
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::textgen::tests::test_font;
    use crate::textgen::Dictionary;

    pub(crate) fn assets() -> Assets {
        let words = ["Joan", "Maria", "pagès", "filla", "de", "Barcelona", "viuda", "rebere"];
        Assets::from_parts(
            [test_font()],
            [Dictionary::new("w", words.iter().map(|s| s.to_string()).collect()).unwrap()],
        )
    }

    fn model(xml_body: &str, doc_attrs: &str) -> PageModel {
        parse_model(&format!(
            r#"<document width="600" height="800" {doc_attrs}>
  <fonts><font name="serif" path="unused.ttf"/></fonts>
  <dictionaries><dictionary name="w" path="unused.txt"/></dictionaries>
  {xml_body}
</document>"#
        ))
        .unwrap()
    }

    /// Header 50 + vspace 10; records are two 40px lines with 10px gaps and
    /// a 20px trailing gap: advance 40+10+40+20 = 110, extent 90.
    pub(crate) fn fixed_model() -> PageModel {
        let rec = r#"<recordGroup>
  <line h="40" vspace="10"><cell x="20" w="250" font="serif" dict="w" mandatory="true"/><cell x="300" w="250" font="serif" dict="w"/></line>
  <line h="40" vspace="20"><cell x="20" w="500" font="serif" dict="w"/></line>
</recordGroup>"#;
        let header = r#"<header><line h="50" vspace="10"><cell x="400" w="150" font="serif" dict="w" mandatory="true"/></line></header>"#;
        // Four records end at 20 + 60 + 3*110 + 90 = 500.
        model(
            &format!("{header}{rec}"),
            r#"top="20" minCorpusHeight="500" maxCorpusHeight="500" maxAppendRecords="10""#,
        )
    }

    #[test]
    fn fixed_geometry_yields_exactly_four_records() {
        let g = Generator::with_assets(fixed_model(), assets()).unwrap();
        for seed in 0..20 {
            let (_, layout) = g.generate_page(seed).unwrap();
            assert_eq!(layout.record_count(), 4, "seed {seed}");
            assert_eq!(layout.corpus_bottom, 500);
            assert!(layout.header_box.is_some());
            for pair in layout.record_boxes.windows(2) {
                assert!(pair[0].bottom() <= pair[1].y as u64, "{pair:?}");
            }
            for (i, b) in layout.record_boxes.iter().enumerate() {
                let top = 80 + 110 * i as u32;
                assert!(Rect::new(0, top, 600, 90).contains_rect(b), "{b}");
            }
        }
    }

    #[test]
    fn zero_probability_cells_never_paint() {
        let xml = r#"<recordGroup>
  <line h="40" vspace="10"><cell x="20" w="200" font="serif" dict="w" mandatory="true"/><cell x="300" w="250" prob="0" font="serif" dict="w"/></line>
  <line h="40" prob="0"><cell x="20" w="500" font="serif" dict="w" prob="0"/></line>
</recordGroup>"#;
        let m = model(xml, r#"minCorpusHeight="300" maxCorpusHeight="700" maxAppendRecords="8""#);
        let g = Generator::with_assets(m, assets()).unwrap();
        for seed in 0..10 {
            let (layer, layout) = g.generate_page(seed).unwrap();
            for b in &layout.record_boxes {
                // Only the mandatory cell (x in 20..220) and its line can carry ink.
                assert!(Rect::new(20, b.y, 200, 40).contains_rect(b), "{b}");
            }
            let r = layer.raster();
            for y in 0..r.height() {
                for x in 221..r.width() {
                    assert_eq!(r.rgba(x, y)[3], 0);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let g = Generator::with_assets(fixed_model(), assets()).unwrap();
        let a = g.generate_page(42).unwrap();
        let b = g.generate_page(42).unwrap();
        assert_eq!(a, b);
        let c = g.generate_page(43).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn count_stays_in_range_with_jitter_and_groups() {
        let xml = r#"
<graphics><line x="10" y="0" w="3" h="800" stroke="2" color="60" prob="0.5"/></graphics>
<recordGroup prob="0.3">
  <line h="36" hJitter="6" vspace="8"><cell x="20" w="250" xJitter="15" font="serif" dict="w" mandatory="true"/><cell x="300" w="250" prob="0.5" font="serif" dict="w"/></line>
  <line h="30" hJitter="4" vspace="14" prob="0.6"><cell x="40" w="500" font="serif" dict="w"/></line>
</recordGroup>
<recordGroup prob="0.9">
  <line h="44" hJitter="2" vspace="16"><cell x="20" w="560" font="serif" dict="w" mandatory="true"/></line>
</recordGroup>"#;
        let m = model(
            xml,
            r#"top="30" minCorpusHeight="550" maxCorpusHeight="760" maxAppendRecords="12" recordsMin="3" recordsMax="9""#,
        );
        let g = Generator::with_assets(m, assets()).unwrap();
        for seed in 0..40 {
            let (_, layout) = g.generate_page(seed).unwrap();
            let n = layout.record_count();
            assert!((3..=9).contains(&n), "seed {seed}: {n}");
            assert!(layout.corpus_bottom <= 760);
            for b in &layout.record_boxes {
                assert!(!b.is_empty());
                assert!(b.bottom() <= 760);
            }
            if n < 9 {
                // Tallest possible record: 42 + 8 + 34 = 84.
                assert!(layout.corpus_bottom + 84 >= 550, "seed {seed}");
            }
        }
    }

    #[test]
    fn unsatisfiable_model_is_reported() {
        let xml = r#"<recordGroup><line h="400"><cell x="0" w="100" font="serif" dict="w" mandatory="true"/></line></recordGroup>"#;
        let m = model(xml, r#"top="100" minCorpusHeight="300" maxCorpusHeight="450" maxAppendRecords="3""#);
        let err = Generator::with_assets(m, assets()).unwrap_err();
        assert!(matches!(err, ComposeError::Unsatisfiable(ref s) if s.contains("400")), "{err}");

        let xml = r#"<recordGroup><line h="100"><cell x="0" w="100" font="serif" dict="w" mandatory="true"/></line></recordGroup>"#;
        let m = model(xml, r#"minCorpusHeight="300" maxCorpusHeight="450" maxAppendRecords="9" recordsMin="5""#);
        assert!(matches!(
            Generator::with_assets(m, assets()),
            Err(ComposeError::Unsatisfiable(_))
        ));
    }

    #[test]
    fn missing_assets_are_reported() {
        let m = fixed_model();
        let empty = Assets::from_parts([], []);
        assert!(matches!(
            Generator::with_assets(m, empty),
            Err(ComposeError::UnknownAsset { kind: "font", .. })
        ));
    }

    fn spec(kind: GraphicKind, rect: Rect, fill: Fill, probability: f64) -> GraphicObjectSpec {
        GraphicObjectSpec {
            kind,
            rect,
            fill,
            probability,
        }
    }

    #[test]
    fn graphic_with_zero_probability_is_skipped() {
        let mut layer = ForegroundLayer::new(50, 50);
        let g = spec(GraphicKind::Box, Rect::new(0, 0, 50, 50), Fill::Solid(0), 0.0);
        assert!(!paint_graphic(&g, &mut layer, &mut SeedTree::new(1).rng()));
        assert_eq!(layer, ForegroundLayer::new(50, 50));
    }

    #[test]
    fn solid_box_is_opaque() {
        let mut layer = ForegroundLayer::new(50, 50);
        let r = Rect::new(5, 6, 20, 10);
        let g = spec(GraphicKind::Box, r, Fill::Solid(0), 1.0);
        assert!(paint_graphic(&g, &mut layer, &mut SeedTree::new(1).rng()));
        for y in 0..50 {
            for x in 0..50 {
                let p = layer.raster().rgba(x, y);
                if r.contains(x, y) {
                    assert_eq!(p, [0, 0, 0, 255]);
                } else {
                    assert_eq!(p[3], 0);
                }
            }
        }
    }

    #[test]
    fn line_strokes_along_major_axis() {
        let mut layer = ForegroundLayer::new(40, 40);
        let g = spec(GraphicKind::Line { stroke: 2 }, Rect::new(10, 0, 6, 40), Fill::Solid(90), 1.0);
        paint_graphic(&g, &mut layer, &mut SeedTree::new(1).rng());
        let painted: Vec<(u32, u32)> = (0..40)
            .flat_map(|y| (0..40).map(move |x| (x, y)))
            .filter(|&(x, y)| layer.raster().rgba(x, y)[3] > 0)
            .collect();
        assert_eq!(painted.len(), 80);
        assert!(painted.iter().all(|&(x, _)| x == 12 || x == 13));
    }

    #[test]
    fn salt_pepper_fill_density() {
        // Binomial(10000, 0.5): sd = 50, so [4700, 5300] is a 6-sigma band.
        for seed in 0..20 {
            let mut layer = ForegroundLayer::new(100, 100);
            let g = spec(GraphicKind::Box, Rect::new(0, 0, 100, 100), Fill::SaltPepper(0.5), 1.0);
            paint_graphic(&g, &mut layer, &mut SeedTree::new(seed).rng());
            let n = layer
                .raster()
                .pixels()
                .chunks_exact(4)
                .filter(|p| p[3] == 255)
                .count();
            assert!((4700..=5300).contains(&n), "{n}");
        }
    }

    #[test]
    fn composite_alpha_cases() {
        let mut fg = ForegroundLayer::new(3, 1);
        fg.raster_mut().set_rgba(1, 0, [0, 0, 0, 255]);
        fg.raster_mut().set_rgba(2, 0, [0, 0, 0, 128]);
        let bg = Raster::from_pixels(3, 1, Channels::Gray8, vec![200, 200, 255]).unwrap();
        let out = composite(&fg, &bg);
        // 128*0 + 127*255 = 32385 = 127 * 255 exactly.
        assert_eq!(out.pixels(), &[200, 0, 127]);
    }

    #[test]
    fn composite_resizes_substrate() {
        let fg = ForegroundLayer::new(8, 6);
        let out = composite(&fg, &Raster::filled_gray(3, 2, 190));
        assert_eq!(out.dimensions(), (8, 6));
        assert!(out.pixels().iter().all(|&p| p == 190));
    }
}
