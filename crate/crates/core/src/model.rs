//! Core document model: geometry primitives, page tokens, and the typed
//! document that the pipeline assembles and the serializers consume.
//!
//! All types here are immutable value data. Coordinates are page points
//! (1/72 inch) with the origin at the top-left corner of the page and y
//! growing downward.

use serde::{Deserialize, Serialize};

use crate::layout::LayoutProposal;
use crate::tablestruct::TableStructure;

/// Axis-aligned rectangle in page points. `left <= right`, `top <= bottom`,
/// all coordinates finite. Zero-area (degenerate) boxes are legal inputs
/// everywhere; the geometric operations define explicit special cases for
/// them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    left: f64,
    top: f64,
    right: f64,
    bottom: f64,
}

/// Invalid geometry passed to a [`BoundingBox`] constructor.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum GeometryError {
    #[error("bounding box coordinates must be finite, got [{0}, {1}, {2}, {3}]")]
    NonFinite(f64, f64, f64, f64),
    #[error("bounding box must satisfy left <= right and top <= bottom, got [{0}, {1}, {2}, {3}]")]
    Inverted(f64, f64, f64, f64),
}

impl BoundingBox {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Result<Self, GeometryError> {
        if !(left.is_finite() && top.is_finite() && right.is_finite() && bottom.is_finite()) {
            return Err(GeometryError::NonFinite(left, top, right, bottom));
        }
        if left > right || top > bottom {
            return Err(GeometryError::Inverted(left, top, right, bottom));
        }
        Ok(Self { left, top, right, bottom })
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn bottom(&self) -> f64 {
        self.bottom
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        self.left <= x && x <= self.right && self.top <= y && y <= self.bottom
    }

    /// Intersection rectangle, or `None` when the boxes are disjoint.
    /// Boxes that only touch at an edge intersect with zero area.
    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let left = self.left.max(other.left);
        let top = self.top.max(other.top);
        let right = self.right.min(other.right);
        let bottom = self.bottom.min(other.bottom);
        if left <= right && top <= bottom {
            Some(BoundingBox { left, top, right, bottom })
        } else {
            None
        }
    }

    /// Smallest box covering both boxes.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            left: self.left.min(other.left),
            top: self.top.min(other.top),
            right: self.right.max(other.right),
            bottom: self.bottom.max(other.bottom),
        }
    }

    /// Intersection-over-union. Returns 0 when the union has zero area.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = match self.intersection(other) {
            Some(i) => i.area(),
            None => return 0.0,
        };
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Fraction of `self`'s area covered by `other`. For a degenerate
    /// (zero-area) `self` the fraction is 1.0 when its center lies inside
    /// `other` and 0.0 otherwise.
    pub fn overlap_frac(&self, other: &BoundingBox) -> f64 {
        let own = self.area();
        if own <= 0.0 {
            let (cx, cy) = self.center();
            return if other.contains_point(cx, cy) { 1.0 } else { 0.0 };
        }
        match self.intersection(other) {
            Some(i) => i.area() / own,
            None => 0.0,
        }
    }

    /// Clamp the box to `[0, width] x [0, height]`. A box entirely outside
    /// the page collapses onto the nearest page edge.
    pub fn clamped(&self, width: f64, height: f64) -> BoundingBox {
        BoundingBox {
            left: self.left.clamp(0.0, width),
            top: self.top.clamp(0.0, height),
            right: self.right.clamp(0.0, width),
            bottom: self.bottom.clamp(0.0, height),
        }
    }

    /// Vertical overlap length of the two boxes' y-intervals (0 when disjoint).
    pub fn v_overlap(&self, other: &BoundingBox) -> f64 {
        (self.bottom.min(other.bottom) - self.top.max(other.top)).max(0.0)
    }

    /// Horizontal overlap length of the two boxes' x-intervals (0 when disjoint).
    pub fn h_overlap(&self, other: &BoundingBox) -> f64 {
        (self.right.min(other.right) - self.left.max(other.left)).max(0.0)
    }

    /// Vertical gap between the boxes' y-intervals (0 when they overlap).
    pub fn v_gap(&self, other: &BoundingBox) -> f64 {
        (self.top.max(other.top) - self.bottom.min(other.bottom)).max(0.0)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> [f64; 4] {
        [b.left, b.top, b.right, b.bottom]
    }
}

/// A text token extracted by a backend: string content plus its page
/// coordinates. Whitespace-only tokens are allowed; `id` is unique per page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextToken {
    pub id: u32,
    pub text: String,
    pub bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub font_size: Option<f64>,
}

/// Reference to a page raster, either on disk or embedded as base64 PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterRef {
    pub dpi: u32,
    #[serde(flatten)]
    pub data: RasterData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterData {
    /// Path to a PNG file; relative paths are resolved against the
    /// interchange file's directory at load time.
    Path(String),
    /// Base64-encoded PNG bytes.
    Base64(String),
}

/// One parsed page: dimensions in points, tokens, an optional raster, and
/// optional externally provided layout proposals (used for regions a
/// token-only detector cannot find, such as pictures).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedPage {
    pub page_no: u32,
    pub width: f64,
    pub height: f64,
    pub tokens: Vec<TextToken>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raster: Option<RasterRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proposals: Vec<LayoutProposal>,
}

impl ParsedPage {
    /// Look up a token by id.
    pub fn token(&self, id: u32) -> Option<&TextToken> {
        self.tokens.iter().find(|t| t.id == id)
    }
}

/// Closed set of item classes. Unknown labels are rejected at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocItemLabel {
    Title,
    SectionHeader,
    Text,
    ListItem,
    Caption,
    Footnote,
    Formula,
    PageHeader,
    PageFooter,
    Picture,
    Table,
    Code,
}

impl DocItemLabel {
    pub const ALL: [DocItemLabel; 12] = [
        DocItemLabel::Title,
        DocItemLabel::SectionHeader,
        DocItemLabel::Text,
        DocItemLabel::ListItem,
        DocItemLabel::Caption,
        DocItemLabel::Footnote,
        DocItemLabel::Formula,
        DocItemLabel::PageHeader,
        DocItemLabel::PageFooter,
        DocItemLabel::Picture,
        DocItemLabel::Table,
        DocItemLabel::Code,
    ];
}

impl std::fmt::Display for DocItemLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DocItemLabel::Title => "title",
            DocItemLabel::SectionHeader => "section_header",
            DocItemLabel::Text => "text",
            DocItemLabel::ListItem => "list_item",
            DocItemLabel::Caption => "caption",
            DocItemLabel::Footnote => "footnote",
            DocItemLabel::Formula => "formula",
            DocItemLabel::PageHeader => "page_header",
            DocItemLabel::PageFooter => "page_footer",
            DocItemLabel::Picture => "picture",
            DocItemLabel::Table => "table",
            DocItemLabel::Code => "code",
        };
        f.write_str(s)
    }
}

/// Where an item's content came from: a page plus the region and the token
/// ids that back it. Items synthesized without tokens (pictures) carry an
/// empty token list but still record the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub page_no: u32,
    pub bbox: BoundingBox,
    pub token_ids: Vec<u32>,
}

/// One assembled document item in reading order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocItem {
    pub label: DocItemLabel,
    pub text: String,
    pub prov: Vec<Provenance>,
    /// Present exactly when `label == Table`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableStructure>,
    /// For captions: index of the picture or table this caption belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_of: Option<usize>,
    /// Set on items following a references section header.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reference_entry: bool,
}

impl DocItem {
    pub fn new(label: DocItemLabel, text: impl Into<String>, prov: Vec<Provenance>) -> Self {
        DocItem {
            label,
            text: text.into(),
            prov,
            table: None,
            caption_of: None,
            reference_entry: false,
        }
    }
}

/// Page dimensions recorded on the assembled document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageDescriptor {
    pub page_no: u32,
    pub width: f64,
    pub height: f64,
}

/// Document metadata recovered during assembly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocumentMetadata {
    pub title: Option<String>,
    pub authors: Vec<String>,
    /// ISO-639-1 code from the supported-language set.
    pub language: Option<String>,
}

/// The assembled, typed document. `items` is the reading order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub name: String,
    pub metadata: DocumentMetadata,
    pub pages: Vec<PageDescriptor>,
    pub items: Vec<DocItem>,
}

impl Document {
    pub fn empty(name: impl Into<String>) -> Self {
        Document { name: name.into(), ..Default::default() }
    }
}

/// A single broken invariant found by [`validate_document`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Index into `Document::items`, when the violation is item-scoped.
    pub item: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.item {
            Some(i) => write!(f, "item {}: {}", i, self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Check every structural invariant of a [`Document`]. Violations are data,
/// not errors: an empty report means the document is valid. The check is
/// pure; the same input always yields the same report.
pub fn validate_document(doc: &Document) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut page_nos = std::collections::BTreeSet::new();
    for page in &doc.pages {
        if page.width <= 0.0 || page.height <= 0.0 {
            out.push(Violation {
                item: None,
                message: format!("page {} has non-positive dimensions", page.page_no),
            });
        }
        if !page_nos.insert(page.page_no) {
            out.push(Violation {
                item: None,
                message: format!("duplicate page number {}", page.page_no),
            });
        }
    }
    for (idx, item) in doc.items.iter().enumerate() {
        if item.prov.is_empty() {
            out.push(Violation { item: Some(idx), message: "empty provenance".into() });
        }
        for prov in &item.prov {
            if !page_nos.contains(&prov.page_no) {
                out.push(Violation {
                    item: Some(idx),
                    message: format!("provenance references unknown page {}", prov.page_no),
                });
            }
        }
        match (item.label, item.table.is_some()) {
            (DocItemLabel::Table, false) => out.push(Violation {
                item: Some(idx),
                message: "table item without table structure".into(),
            }),
            (label, true) if label != DocItemLabel::Table => out.push(Violation {
                item: Some(idx),
                message: format!("{label} item carries a table structure"),
            }),
            _ => {}
        }
        if let Some(target) = item.caption_of {
            if item.label != DocItemLabel::Caption {
                out.push(Violation {
                    item: Some(idx),
                    message: format!("{} item carries a caption link", item.label),
                });
            }
            match doc.items.get(target) {
                None => out.push(Violation {
                    item: Some(idx),
                    message: format!("caption links to out-of-range item {target}"),
                }),
                Some(t)
                    if t.label != DocItemLabel::Picture && t.label != DocItemLabel::Table =>
                {
                    out.push(Violation {
                        item: Some(idx),
                        message: format!("caption links to a {} item", t.label),
                    })
                }
                _ => {}
            }
        }
        if let Some(table) = &item.table {
            for msg in table.check() {
                out.push(Violation { item: Some(idx), message: msg });
            }
        }
    }
    out
}
