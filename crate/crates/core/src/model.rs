//! The page-structure model: an XML description of a collection's layout.
//!
//! ```xml
//! <document width="1024" height="1464" top="40"
//!           minCorpusHeight="1200" maxCorpusHeight="1400"
//!           maxAppendRecords="9" recordsMin="3" recordsMax="9">
//!   <fonts><font name="hand" path="fonts/hand.ttf" sizeRatio="0.8"/></fonts>
//!   <dictionaries><dictionary name="it" path="words/it.txt"/></dictionaries>
//!   <graphics><line x="80" y="0" w="2" h="1464" stroke="2" color="40" prob="0.5"/></graphics>
//!   <header>
//!     <line h="50" vspace="10"><cell x="900" w="80" font="hand" dict="it" mandatory="true"/></line>
//!   </header>
//!   <recordGroup prob="0.7">
//!     <line h="40" hJitter="4" vspace="6">
//!       <cell x="100" w="300" xJitter="10" font="hand" dict="it" mandatory="true"/>
//!       <cell x="420" w="500" prob="0.6" font="hand" dict="it"/>
//!     </line>
//!   </recordGroup>
//! </document>
//! ```
//!
//! See `docs/model-schema.md` for every element and attribute.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::raster::Rect;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("XML syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("constraint violation at {path}: {message}")]
    Constraint { path: String, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RecordRole {
    Header,
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSpec {
    pub x: u32,
    pub width: u32,
    pub x_jitter: u32,
    pub probability: f64,
    pub mandatory: bool,
    pub font: String,
    pub dict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineSpec {
    pub height: u32,
    /// Height varies uniformly in `height ± height_jitter`.
    pub height_jitter: u32,
    /// Gap between this line and the next one.
    pub vspace: u32,
    pub probability: f64,
    pub cells: Vec<CellSpec>,
}

impl LineSpec {
    /// Lines holding a mandatory cell are always instantiated.
    pub fn is_forced(&self) -> bool {
        self.probability >= 1.0 || self.cells.iter().any(|c| c.mandatory)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordTemplate {
    pub role: RecordRole,
    pub lines: Vec<LineSpec>,
}

impl RecordTemplate {
    /// Smallest vertical extent an instance can have: forced lines at their
    /// minimum height, trailing gap excluded.
    pub fn min_extent(&self) -> u32 {
        let forced: Vec<&LineSpec> = self.lines.iter().filter(|l| l.is_forced()).collect();
        let mut total = 0u32;
        for (i, l) in forced.iter().enumerate() {
            total += l.height.saturating_sub(l.height_jitter).max(1);
            if i + 1 < forced.len() {
                total += l.vspace;
            }
        }
        total
    }

    /// Largest vertical advance (extent plus trailing gap) an instance can take.
    pub fn max_advance(&self) -> u32 {
        self.lines
            .iter()
            .map(|l| l.height + l.height_jitter + l.vspace)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordGroup {
    pub template: RecordTemplate,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GraphicKind {
    Line { stroke: u32 },
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Fill {
    Solid(u8),
    SaltPepper(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphicObjectSpec {
    pub kind: GraphicKind,
    pub rect: Rect,
    pub fill: Fill,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FontSpec {
    pub name: String,
    pub path: PathBuf,
    /// Nominal glyph size as a fraction of the line height.
    pub size_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DictionarySpec {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PageModel {
    pub width: u32,
    pub height: u32,
    /// Where the first line (header or record) starts.
    pub top: u32,
    pub min_corpus_height: u32,
    pub max_corpus_height: u32,
    pub max_append_records: u32,
    pub records_min: u32,
    pub records_max: u32,
    /// Gray level used for text.
    pub ink: u8,
    pub fonts: BTreeMap<String, FontSpec>,
    pub dictionaries: BTreeMap<String, DictionarySpec>,
    pub graphics: Vec<GraphicObjectSpec>,
    pub header: Option<RecordTemplate>,
    pub record_groups: Vec<RecordGroup>,
    /// Hex SHA-256 of the XML text this model was parsed from.
    #[serde(skip)]
    pub digest: String,
}

impl PageModel {
    /// Upper bound on the realized record count.
    pub fn effective_records_max(&self) -> u32 {
        self.records_max.min(self.max_append_records)
    }

    /// Rewrite relative font and dictionary paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for f in self.fonts.values_mut() {
            if f.path.is_relative() {
                f.path = base.join(&f.path);
            }
        }
        for d in self.dictionaries.values_mut() {
            if d.path.is_relative() {
                d.path = base.join(&d.path);
            }
        }
    }

    /// Serialize back to the XML dialect [`parse_model`] accepts.
    pub fn to_xml(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<document width="{}" height="{}" top="{}" minCorpusHeight="{}" maxCorpusHeight="{}" maxAppendRecords="{}" recordsMin="{}" recordsMax="{}" ink="{}">"#,
            self.width,
            self.height,
            self.top,
            self.min_corpus_height,
            self.max_corpus_height,
            self.max_append_records,
            self.records_min,
            self.records_max,
            self.ink
        );
        s.push_str("  <fonts>\n");
        for f in self.fonts.values() {
            let _ = writeln!(
                s,
                r#"    <font name="{}" path="{}" sizeRatio="{}"/>"#,
                escape(&f.name),
                escape(&f.path.to_string_lossy()),
                f.size_ratio
            );
        }
        s.push_str("  </fonts>\n  <dictionaries>\n");
        for d in self.dictionaries.values() {
            let _ = writeln!(
                s,
                r#"    <dictionary name="{}" path="{}"/>"#,
                escape(&d.name),
                escape(&d.path.to_string_lossy())
            );
        }
        s.push_str("  </dictionaries>\n  <graphics>\n");
        for g in &self.graphics {
            let (tag, extra) = match g.kind {
                GraphicKind::Line { stroke } => ("line", format!(r#" stroke="{stroke}""#)),
                GraphicKind::Box => ("box", String::new()),
            };
            let fill = match g.fill {
                Fill::Solid(v) => format!(r#"color="{v}""#),
                Fill::SaltPepper(d) => format!(r#"saltPepper="{d}""#),
            };
            let _ = writeln!(
                s,
                r#"    <{tag} x="{}" y="{}" w="{}" h="{}"{extra} {fill} prob="{}"/>"#,
                g.rect.x, g.rect.y, g.rect.w, g.rect.h, g.probability
            );
        }
        s.push_str("  </graphics>\n");
        if let Some(h) = &self.header {
            s.push_str("  <header>\n");
            write_lines(&mut s, &h.lines);
            s.push_str("  </header>\n");
        }
        for g in &self.record_groups {
            let _ = writeln!(s, r#"  <recordGroup prob="{}">"#, g.probability);
            write_lines(&mut s, &g.template.lines);
            s.push_str("  </recordGroup>\n");
        }
        s.push_str("</document>\n");
        s
    }
}

fn write_lines(s: &mut String, lines: &[LineSpec]) {
    for l in lines {
        let _ = writeln!(
            s,
            r#"    <line h="{}" hJitter="{}" vspace="{}" prob="{}">"#,
            l.height, l.height_jitter, l.vspace, l.probability
        );
        for c in &l.cells {
            let _ = writeln!(
                s,
                r#"      <cell x="{}" w="{}" xJitter="{}" prob="{}" mandatory="{}" font="{}" dict="{}"/>"#,
                c.x,
                c.width,
                c.x_jitter,
                c.probability,
                c.mandatory,
                escape(&c.font),
                escape(&c.dict)
            );
        }
        s.push_str("    </line>\n");
    }
}

fn escape(v: &str) -> String {
    v.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn model_digest(xml_text: &str) -> String {
    Sha256::digest(xml_text.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Read and parse a model file; relative asset paths resolve against the
/// file's directory.
pub fn load_model(path: &Path) -> Result<PageModel, ModelError> {
    let text = fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut model = parse_model(&text)?;
    if let Some(dir) = path.parent() {
        model.resolve_paths(dir);
    }
    Ok(model)
}

pub fn parse_model(xml_text: &str) -> Result<PageModel, ModelError> {
    let doc = roxmltree::Document::parse(xml_text).map_err(|e| {
        let pos = e.pos();
        ModelError::Syntax {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "document" {
        return Err(schema(
            root.tag_name().name(),
            "root element must be <document>",
        ));
    }
    let mut model = Parser.document(root)?;
    model.digest = model_digest(xml_text);
    Ok(model)
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn constraint(path: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Constraint {
        path: path.into(),
        message: message.into(),
    }
}

/// Attribute reader that remembers which names were consumed, so leftovers
/// can be reported as unknown.
struct Attrs<'a, 'input> {
    node: roxmltree::Node<'a, 'input>,
    path: String,
    seen: BTreeSet<&'static str>,
}

impl<'a, 'input> Attrs<'a, 'input> {
    fn new(node: roxmltree::Node<'a, 'input>, path: &str) -> Self {
        Attrs {
            node,
            path: path.to_string(),
            seen: BTreeSet::new(),
        }
    }

    fn at(&self, name: &str) -> String {
        format!("{}@{}", self.path, name)
    }

    fn raw(&mut self, name: &'static str) -> Option<&'a str> {
        self.seen.insert(name);
        self.node.attribute(name)
    }

    fn string(&mut self, name: &'static str) -> Result<String, ModelError> {
        match self.raw(name) {
            Some(v) if !v.trim().is_empty() => Ok(v.trim().to_string()),
            Some(_) => Err(constraint(self.at(name), "must not be empty")),
            None => Err(schema(self.at(name), "required attribute missing")),
        }
    }

    fn parsed<T: std::str::FromStr>(
        &mut self,
        name: &'static str,
        what: &str,
    ) -> Result<Option<T>, ModelError> {
        match self.raw(name) {
            None => Ok(None),
            Some(v) => v.trim().parse::<T>().map(Some).map_err(|_| {
                schema(self.at(name), format!("expected {what}, found {v:?}"))
            }),
        }
    }

    fn u32_or(&mut self, name: &'static str, default: u32) -> Result<u32, ModelError> {
        Ok(self
            .parsed::<u32>(name, "a non-negative integer")?
            .unwrap_or(default))
    }

    fn u32_req(&mut self, name: &'static str) -> Result<u32, ModelError> {
        self.parsed::<u32>(name, "a non-negative integer")?
            .ok_or_else(|| schema(self.at(name), "required attribute missing"))
    }

    fn positive(&mut self, name: &'static str) -> Result<u32, ModelError> {
        let v = self.u32_req(name)?;
        if v == 0 {
            return Err(constraint(self.at(name), "must be positive"));
        }
        Ok(v)
    }

    fn gray_or(&mut self, name: &'static str, default: u8) -> Result<u8, ModelError> {
        Ok(self
            .parsed::<u8>(name, "a gray level in 0..=255")?
            .unwrap_or(default))
    }

    fn fraction(&mut self, name: &'static str) -> Result<Option<f64>, ModelError> {
        let v = self.parsed::<f64>(name, "a number")?;
        match v {
            Some(p) if !(0.0..=1.0).contains(&p) => Err(constraint(
                self.at(name),
                format!("must lie in [0, 1], found {p}"),
            )),
            other => Ok(other),
        }
    }

    fn probability(&mut self) -> Result<f64, ModelError> {
        Ok(self.fraction("prob")?.unwrap_or(1.0))
    }

    fn flag(&mut self, name: &'static str) -> Result<bool, ModelError> {
        match self.raw(name).map(str::trim) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(schema(self.at(name), format!("expected a boolean, found {v:?}"))),
        }
    }

    fn finish(self) -> Result<(), ModelError> {
        for a in self.node.attributes() {
            if !self.seen.contains(a.name()) {
                return Err(schema(
                    format!("{}@{}", self.path, a.name()),
                    "unknown attribute",
                ));
            }
        }
        Ok(())
    }
}

fn element_children<'a, 'input>(
    node: roxmltree::Node<'a, 'input>,
    path: &str,
) -> Result<Vec<roxmltree::Node<'a, 'input>>, ModelError> {
    let mut out = Vec::new();
    for c in node.children() {
        if c.is_element() {
            out.push(c);
        } else if c.is_text() && !c.text().unwrap_or("").trim().is_empty() {
            return Err(schema(path, "unexpected text content"));
        }
    }
    Ok(out)
}

struct Parser;

impl Parser {
    fn document(&self, node: roxmltree::Node) -> Result<PageModel, ModelError> {
        let path = "document";
        let mut a = Attrs::new(node, path);
        let width = a.positive("width")?;
        let height = a.positive("height")?;
        let top = a.u32_or("top", 0)?;
        let min_corpus_height = a.u32_req("minCorpusHeight")?;
        let max_corpus_height = a.u32_req("maxCorpusHeight")?;
        let max_append_records = a.u32_req("maxAppendRecords")?;
        let records_min = a.u32_or("recordsMin", 1)?;
        let records_max = a.u32_or("recordsMax", max_append_records)?;
        let ink = a.gray_or("ink", 0)?;
        a.finish()?;

        if min_corpus_height == 0 {
            return Err(constraint(
                "document@minCorpusHeight",
                "must be positive",
            ));
        }
        if min_corpus_height > max_corpus_height {
            return Err(constraint(
                "document@minCorpusHeight",
                format!(
                    "minCorpusHeight ({min_corpus_height}) exceeds maxCorpusHeight ({max_corpus_height})"
                ),
            ));
        }
        if max_corpus_height > height {
            return Err(constraint(
                "document@maxCorpusHeight",
                format!("maxCorpusHeight ({max_corpus_height}) exceeds page height ({height})"),
            ));
        }
        if top >= max_corpus_height {
            return Err(constraint(
                "document@top",
                format!("top ({top}) must lie above maxCorpusHeight ({max_corpus_height})"),
            ));
        }
        if max_append_records == 0 {
            return Err(constraint("document@maxAppendRecords", "must be at least 1"));
        }
        if records_min > records_max {
            return Err(constraint(
                "document@recordsMin",
                format!("recordsMin ({records_min}) exceeds recordsMax ({records_max})"),
            ));
        }
        if records_min > max_append_records {
            return Err(constraint(
                "document@recordsMin",
                format!(
                    "recordsMin ({records_min}) exceeds maxAppendRecords ({max_append_records})"
                ),
            ));
        }

        let mut model = PageModel {
            width,
            height,
            top,
            min_corpus_height,
            max_corpus_height,
            max_append_records,
            records_min,
            records_max,
            ink,
            fonts: BTreeMap::new(),
            dictionaries: BTreeMap::new(),
            graphics: Vec::new(),
            header: None,
            record_groups: Vec::new(),
            digest: String::new(),
        };

        // Assets first so cell references can be checked wherever they appear.
        let children = element_children(node, path)?;
        let mut seen_fonts = false;
        let mut seen_dicts = false;
        for c in &children {
            match c.tag_name().name() {
                "fonts" if !seen_fonts => {
                    seen_fonts = true;
                    self.fonts(*c, &mut model)?
                }
                "dictionaries" if !seen_dicts => {
                    seen_dicts = true;
                    self.dictionaries(*c, &mut model)?
                }
                "fonts" | "dictionaries" => {
                    return Err(schema(
                        format!("document/{}", c.tag_name().name()),
                        "element may appear only once",
                    ))
                }
                _ => {}
            }
        }

        let mut group_index = 0;
        for c in &children {
            match c.tag_name().name() {
                "fonts" | "dictionaries" => {}
                "graphics" => self.graphics(*c, &mut model)?,
                "header" => {
                    if model.header.is_some() {
                        return Err(schema("document/header", "at most one <header> is allowed"));
                    }
                    Attrs::new(*c, "document/header").finish()?;
                    let lines = self.lines(*c, "document/header", &model)?;
                    model.header = Some(RecordTemplate {
                        role: RecordRole::Header,
                        lines,
                    });
                }
                "recordGroup" => {
                    let p = format!("document/recordGroup[{group_index}]");
                    group_index += 1;
                    let mut a = Attrs::new(*c, &p);
                    let probability = a.probability()?;
                    a.finish()?;
                    let lines = self.lines(*c, &p, &model)?;
                    if !lines.iter().any(|l| !l.cells.is_empty()) {
                        return Err(constraint(p, "record group must contain at least one cell"));
                    }
                    model.record_groups.push(RecordGroup {
                        template: RecordTemplate {
                            role: RecordRole::Data,
                            lines,
                        },
                        probability,
                    });
                }
                other => {
                    return Err(schema(
                        format!("document/{other}"),
                        "unknown element",
                    ))
                }
            }
        }

        if model.record_groups.is_empty() {
            return Err(constraint(
                "document",
                "at least one <recordGroup> is required",
            ));
        }
        if model.record_groups.iter().all(|g| g.probability == 0.0) {
            return Err(constraint(
                "document/recordGroup",
                "at least one record group needs a positive probability",
            ));
        }
        Ok(model)
    }

    fn fonts(&self, node: roxmltree::Node, model: &mut PageModel) -> Result<(), ModelError> {
        Attrs::new(node, "document/fonts").finish()?;
        for (i, c) in element_children(node, "document/fonts")?.into_iter().enumerate() {
            let p = format!("document/fonts/font[{i}]");
            if c.tag_name().name() != "font" {
                return Err(schema(
                    format!("document/fonts/{}", c.tag_name().name()),
                    "unknown element",
                ));
            }
            let mut a = Attrs::new(c, &p);
            let name = a.string("name")?;
            let path = PathBuf::from(a.string("path")?);
            let size_ratio = a.parsed::<f64>("sizeRatio", "a number")?.unwrap_or(0.8);
            a.finish()?;
            if !(size_ratio > 0.0 && size_ratio <= 1.0) {
                return Err(constraint(
                    format!("{p}@sizeRatio"),
                    format!("must lie in (0, 1], found {size_ratio}"),
                ));
            }
            if model.fonts.contains_key(&name) {
                return Err(constraint(format!("{p}@name"), format!("duplicate font {name:?}")));
            }
            model.fonts.insert(
                name.clone(),
                FontSpec {
                    name,
                    path,
                    size_ratio,
                },
            );
        }
        Ok(())
    }

    fn dictionaries(&self, node: roxmltree::Node, model: &mut PageModel) -> Result<(), ModelError> {
        Attrs::new(node, "document/dictionaries").finish()?;
        for (i, c) in element_children(node, "document/dictionaries")?
            .into_iter()
            .enumerate()
        {
            let p = format!("document/dictionaries/dictionary[{i}]");
            if c.tag_name().name() != "dictionary" {
                return Err(schema(
                    format!("document/dictionaries/{}", c.tag_name().name()),
                    "unknown element",
                ));
            }
            let mut a = Attrs::new(c, &p);
            let name = a.string("name")?;
            let path = PathBuf::from(a.string("path")?);
            a.finish()?;
            if model.dictionaries.contains_key(&name) {
                return Err(constraint(
                    format!("{p}@name"),
                    format!("duplicate dictionary {name:?}"),
                ));
            }
            model
                .dictionaries
                .insert(name.clone(), DictionarySpec { name, path });
        }
        Ok(())
    }

    fn graphics(&self, node: roxmltree::Node, model: &mut PageModel) -> Result<(), ModelError> {
        Attrs::new(node, "document/graphics").finish()?;
        for (i, c) in element_children(node, "document/graphics")?
            .into_iter()
            .enumerate()
        {
            let tag = c.tag_name().name();
            let p = format!("document/graphics/{tag}[{i}]");
            if tag != "line" && tag != "box" {
                return Err(schema(p, "unknown element"));
            }
            let mut a = Attrs::new(c, &p);
            let rect = Rect::new(
                a.u32_req("x")?,
                a.u32_req("y")?,
                a.positive("w")?,
                a.positive("h")?,
            );
            let kind = if tag == "line" {
                let stroke = a.u32_or("stroke", 1)?;
                if stroke == 0 {
                    return Err(constraint(format!("{p}@stroke"), "must be positive"));
                }
                GraphicKind::Line { stroke }
            } else {
                GraphicKind::Box
            };
            let color = a.parsed::<u8>("color", "a gray level in 0..=255")?;
            let density = a.fraction("saltPepper")?;
            let fill = match (color, density) {
                (Some(_), Some(_)) => {
                    return Err(schema(
                        format!("{p}@saltPepper"),
                        "color and saltPepper are mutually exclusive",
                    ))
                }
                (_, Some(d)) => Fill::SaltPepper(d),
                (c, None) => Fill::Solid(c.unwrap_or(0)),
            };
            let probability = a.probability()?;
            a.finish()?;
            if rect.right() > model.width as u64 || rect.bottom() > model.height as u64 {
                return Err(constraint(
                    p,
                    format!(
                        "rect {rect} exceeds the {}x{} page",
                        model.width, model.height
                    ),
                ));
            }
            model.graphics.push(GraphicObjectSpec {
                kind,
                rect,
                fill,
                probability,
            });
        }
        Ok(())
    }

    fn lines(
        &self,
        node: roxmltree::Node,
        path: &str,
        model: &PageModel,
    ) -> Result<Vec<LineSpec>, ModelError> {
        let mut lines = Vec::new();
        for c in element_children(node, path)? {
            let p = format!("{path}/line[{}]", lines.len());
            if c.tag_name().name() != "line" {
                return Err(schema(
                    format!("{path}/{}", c.tag_name().name()),
                    "unknown element",
                ));
            }
            let mut a = Attrs::new(c, &p);
            let height = a.positive("h")?;
            let height_jitter = a.u32_or("hJitter", 0)?;
            let vspace = a.u32_or("vspace", 0)?;
            let probability = a.probability()?;
            a.finish()?;
            let mut cells = Vec::new();
            for cc in element_children(c, &p)? {
                let cp = format!("{p}/cell[{}]", cells.len());
                if cc.tag_name().name() != "cell" {
                    return Err(schema(
                        format!("{p}/{}", cc.tag_name().name()),
                        "unknown element",
                    ));
                }
                cells.push(self.cell(cc, &cp, model)?);
            }
            lines.push(LineSpec {
                height,
                height_jitter,
                vspace,
                probability,
                cells,
            });
        }
        if lines.is_empty() {
            return Err(constraint(path, "a record needs at least one <line>"));
        }
        Ok(lines)
    }

    fn cell(
        &self,
        node: roxmltree::Node,
        path: &str,
        model: &PageModel,
    ) -> Result<CellSpec, ModelError> {
        let mut a = Attrs::new(node, path);
        let x = a.u32_req("x")?;
        let width = a.positive("w")?;
        let x_jitter = a.u32_or("xJitter", 0)?;
        let probability = a.probability()?;
        let mandatory = a.flag("mandatory")?;
        let font = a.string("font")?;
        let dict = a.string("dict")?;
        a.finish()?;
        if x as u64 + width as u64 > model.width as u64 {
            return Err(constraint(
                format!("{path}@w"),
                format!(
                    "cell spans {x}..{} beyond page width {}",
                    x as u64 + width as u64,
                    model.width
                ),
            ));
        }
        if !model.fonts.contains_key(&font) {
            return Err(constraint(
                format!("{path}@font"),
                format!("undeclared font {font:?}"),
            ));
        }
        if !model.dictionaries.contains_key(&dict) {
            return Err(constraint(
                format!("{path}@dict"),
                format!("undeclared dictionary {dict:?}"),
            ));
        }
        Ok(CellSpec {
            x,
            width,
            x_jitter,
            probability,
            mandatory,
            font,
            dict,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetKind {
    Font,
    Dictionary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssetStatus {
    pub kind: AssetKind,
    pub name: String,
    pub path: PathBuf,
    /// `None` when the asset loaded; otherwise why it did not.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssetReport {
    pub entries: Vec<AssetStatus>,
}

impl AssetReport {
    pub fn is_ok(&self) -> bool {
        self.entries.iter().all(|e| e.error.is_none())
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssetStatus> {
        self.entries.iter().filter(|e| e.error.is_some())
    }
}

/// Try to load every font and dictionary the model declares.
pub fn validate_assets(model: &PageModel) -> AssetReport {
    let mut entries = Vec::new();
    for f in model.fonts.values() {
        entries.push(AssetStatus {
            kind: AssetKind::Font,
            name: f.name.clone(),
            path: f.path.clone(),
            error: crate::textgen::LoadedFont::load(f)
                .err()
                .map(|e| e.to_string()),
        });
    }
    for d in model.dictionaries.values() {
        entries.push(AssetStatus {
            kind: AssetKind::Dictionary,
            name: d.name.clone(),
            path: d.path.clone(),
            error: crate::textgen::Dictionary::load(d)
                .err()
                .map(|e| e.to_string()),
        });
    }
    AssetReport { entries }
}
