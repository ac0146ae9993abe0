//! Document backends: produce parsed pages (tokens with coordinates, plus an
//! optional raster) from an input source.
//!
//! The built-in backend reads a versioned JSON interchange format
//! (`.dpages.json`) — a deterministic, inspectable stand-in for a real PDF
//! parser that keeps the rest of the pipeline fully testable. Alternative
//! backends implement [`Backend`] and register under a name.
//!
//! The backend never merges tokens: token count and text content survive
//! loading exactly as they appear in the payload.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::model::{ParsedPage, RasterData};

/// Identifier of the interchange format, also the value `probe_format`
/// reports for it.
pub const INTERCHANGE_FORMAT: &str = "docforge-pages";
/// Interchange version this build reads and writes.
pub const INTERCHANGE_VERSION: u32 = 1;
/// File extension for interchange payloads.
pub const INTERCHANGE_EXTENSION: &str = ".dpages.json";

/// Where a document comes from. Exactly one variant is populated.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Path(PathBuf),
    Bytes(Vec<u8>),
    Url(String),
}

impl InputSource {
    /// Build a source from a CLI-style string: URLs are detected by scheme,
    /// everything else is a file path.
    pub fn from_str_auto(s: &str) -> InputSource {
        if s.starts_with("http://") || s.starts_with("https://") {
            InputSource::Url(s.to_string())
        } else {
            InputSource::Path(PathBuf::from(s))
        }
    }

    /// A short description for error messages.
    pub fn describe(&self) -> String {
        match self {
            InputSource::Path(p) => p.display().to_string(),
            InputSource::Bytes(b) => format!("<{} bytes>", b.len()),
            InputSource::Url(u) => u.clone(),
        }
    }
}

/// A fully parsed document: pages ordered by page number, 1..N consecutive.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDocument {
    pub name: String,
    pub pages: Vec<ParsedPage>,
}

/// Interchange header; unknown versions are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterchangeHeader {
    pub format_tag: String,
    pub version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct InterchangeDoc {
    header: InterchangeHeader,
    name: String,
    pages: Vec<ParsedPage>,
}

/// Limits applied while loading.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadLimits {
    /// Keep at most this many pages, truncating from page 1.
    pub max_pages: Option<usize>,
    /// Reject inputs larger than this many bytes.
    pub max_bytes: Option<u64>,
}

/// Options for URL sources.
#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub timeout: Duration,
    pub max_redirects: usize,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions { timeout: Duration::from_secs(30), max_redirects: 5 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("unresolvable source {0}: {1}")]
    Unresolvable(String, String),
    #[error("input size limit exceeded: {actual} bytes > {limit} bytes")]
    SizeLimitExceeded { actual: u64, limit: u64 },
    #[error("malformed interchange payload at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("unrecognized format (expected a '{INTERCHANGE_FORMAT}' payload)")]
    UnrecognizedFormat,
    #[error("unsupported interchange version {0} (supported: {INTERCHANGE_VERSION})")]
    UnsupportedVersion(u32),
    #[error("dpi must be positive")]
    InvalidDpi,
    #[error("page has non-positive dimensions")]
    InvalidPage,
    #[error("raster decode failed: {0}")]
    Raster(String),
    #[error("unknown backend '{0}'")]
    UnknownBackend(String),
    #[error("backend '{0}' is already registered")]
    DuplicateBackend(String),
}

/// A rendered page raster, 8-bit grayscale, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PageImage {
    pub width_px: u32,
    pub height_px: u32,
    pub dpi: u32,
    pub pixels: Vec<u8>,
}

/// Backend adapter contract: anything that can load documents and render
/// pages may be registered under a name and selected via configuration.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Load and validate a document. The second return value carries
    /// non-fatal warnings (for example clamped token boxes).
    fn load(
        &self,
        src: &InputSource,
        limits: &LoadLimits,
    ) -> Result<(ParsedDocument, Vec<String>), BackendError>;

    /// Render one page at the requested dpi.
    fn render(&self, page: &ParsedPage, dpi: u32) -> Result<PageImage, BackendError> {
        render_page(page, dpi)
    }
}

/// The built-in interchange backend.
#[derive(Debug, Clone)]
pub struct InterchangeBackend {
    pub fetch: FetchOptions,
}

impl InterchangeBackend {
    pub fn new(fetch: FetchOptions) -> Self {
        InterchangeBackend { fetch }
    }
}

impl Default for InterchangeBackend {
    fn default() -> Self {
        InterchangeBackend::new(FetchOptions::default())
    }
}

impl Backend for InterchangeBackend {
    fn name(&self) -> &str {
        INTERCHANGE_FORMAT
    }

    fn load(
        &self,
        src: &InputSource,
        limits: &LoadLimits,
    ) -> Result<(ParsedDocument, Vec<String>), BackendError> {
        let (bytes, base_dir) = resolve_source(src, &self.fetch)?;
        if let Some(limit) = limits.max_bytes {
            if bytes.len() as u64 > limit {
                return Err(BackendError::SizeLimitExceeded { actual: bytes.len() as u64, limit });
            }
        }
        parse_interchange(&bytes, limits.max_pages, base_dir.as_deref())
    }
}

/// Named backend instances selectable via configuration.
pub struct BackendRegistry {
    backends: std::collections::BTreeMap<String, Arc<dyn Backend>>,
}

impl BackendRegistry {
    /// Registry holding only the built-in interchange backend.
    pub fn with_defaults() -> Self {
        let mut reg = BackendRegistry { backends: Default::default() };
        reg.register(Arc::new(InterchangeBackend::default())).expect("fresh registry");
        reg
    }

    pub fn register(&mut self, backend: Arc<dyn Backend>) -> Result<(), BackendError> {
        let name = backend.name().to_string();
        if self.backends.contains_key(&name) {
            return Err(BackendError::DuplicateBackend(name));
        }
        self.backends.insert(name, backend);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Backend>> {
        self.backends.get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.backends.keys().cloned().collect()
    }
}

/// Load a document through the built-in interchange backend with default
/// fetch options.
pub fn load_document(
    src: &InputSource,
    max_pages: Option<usize>,
) -> Result<(ParsedDocument, Vec<String>), BackendError> {
    InterchangeBackend::default().load(src, &LoadLimits { max_pages, max_bytes: None })
}

fn resolve_source(
    src: &InputSource,
    fetch: &FetchOptions,
) -> Result<(Vec<u8>, Option<PathBuf>), BackendError> {
    match src {
        InputSource::Path(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| BackendError::Unresolvable(path.display().to_string(), e.to_string()))?;
            Ok((bytes, path.parent().map(Path::to_path_buf)))
        }
        InputSource::Bytes(bytes) => Ok((bytes.clone(), None)),
        InputSource::Url(url) => {
            let client = reqwest::blocking::Client::builder()
                .timeout(fetch.timeout)
                .redirect(reqwest::redirect::Policy::limited(fetch.max_redirects))
                .build()
                .map_err(|e| BackendError::Unresolvable(url.clone(), e.to_string()))?;
            let response = client
                .get(url)
                .send()
                .and_then(|r| r.error_for_status())
                .map_err(|e| BackendError::Unresolvable(url.clone(), e.to_string()))?;
            let bytes = response
                .bytes()
                .map_err(|e| BackendError::Unresolvable(url.clone(), e.to_string()))?;
            Ok((bytes.to_vec(), None))
        }
    }
}

/// Parse and validate an interchange payload. Out-of-bound token boxes are
/// clamped to the page rectangle (with a warning) rather than rejected,
/// because real extractors produce slight overshoots.
pub fn parse_interchange(
    bytes: &[u8],
    max_pages: Option<usize>,
    base_dir: Option<&Path>,
) -> Result<(ParsedDocument, Vec<String>), BackendError> {
    if first_key(bytes).as_deref() != Some("header") {
        return Err(BackendError::Malformed {
            offset: 0,
            reason: "the header must be the first key of the payload".into(),
        });
    }
    let doc: InterchangeDoc = serde_json::from_slice(bytes).map_err(|e| {
        BackendError::Malformed { offset: byte_offset(bytes, e.line(), e.column()), reason: e.to_string() }
    })?;
    if doc.header.format_tag != INTERCHANGE_FORMAT {
        return Err(BackendError::UnrecognizedFormat);
    }
    if doc.header.version != INTERCHANGE_VERSION {
        return Err(BackendError::UnsupportedVersion(doc.header.version));
    }

    let mut warnings = Vec::new();
    let mut pages = doc.pages;
    for (i, page) in pages.iter().enumerate() {
        if page.page_no != (i + 1) as u32 {
            return Err(BackendError::Malformed {
                offset: 0,
                reason: format!(
                    "non-consecutive page numbers: expected {}, found {}",
                    i + 1,
                    page.page_no
                ),
            });
        }
        if page.width <= 0.0 || page.height <= 0.0 {
            return Err(BackendError::Malformed {
                offset: 0,
                reason: format!("page {} has non-positive dimensions", page.page_no),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for token in &page.tokens {
            if !seen.insert(token.id) {
                return Err(BackendError::Malformed {
                    offset: 0,
                    reason: format!("page {} repeats token id {}", page.page_no, token.id),
                });
            }
        }
    }
    if let Some(limit) = max_pages {
        pages.truncate(limit);
    }
    for page in &mut pages {
        for token in &mut page.tokens {
            let clamped = token.bbox.clamped(page.width, page.height);
            if clamped != token.bbox {
                warnings.push(format!(
                    "page {}: token {} bbox clamped to the page rectangle",
                    page.page_no, token.id
                ));
                token.bbox = clamped;
            }
        }
        if let Some(raster) = &mut page.raster {
            if raster.dpi == 0 {
                return Err(BackendError::Malformed {
                    offset: 0,
                    reason: format!("page {} raster has dpi 0", page.page_no),
                });
            }
            if let (RasterData::Path(p), Some(dir)) = (&mut raster.data, base_dir) {
                let path = Path::new(p.as_str());
                if path.is_relative() {
                    *p = dir.join(path).to_string_lossy().into_owned();
                }
            }
        }
    }
    Ok((ParsedDocument { name: doc.name, pages }, warnings))
}

/// Serialize a parsed document back to interchange JSON. Loading the output
/// again yields an identical document (round trip).
pub fn to_interchange_json(doc: &ParsedDocument) -> String {
    let payload = InterchangeDoc {
        header: InterchangeHeader {
            format_tag: INTERCHANGE_FORMAT.to_string(),
            version: INTERCHANGE_VERSION,
        },
        name: doc.name.clone(),
        pages: doc.pages.clone(),
    };
    serde_json::to_string_pretty(&payload).expect("interchange payloads always serialize")
}

/// Inspect a bounded prefix of the input and report the backend identifier
/// it matches, or `"unknown"`. Never consumes or mutates the input.
pub fn probe_format(bytes: &[u8]) -> &'static str {
    let prefix = &bytes[..bytes.len().min(1024)];
    if first_key(prefix).as_deref() != Some("header") {
        return "unknown";
    }
    let text = String::from_utf8_lossy(prefix);
    let Some(tag_pos) = text.find("\"format_tag\"") else { return "unknown" };
    let after = &text[tag_pos + "\"format_tag\"".len()..];
    let after = after.trim_start();
    let Some(after) = after.strip_prefix(':') else { return "unknown" };
    if after.trim_start().starts_with(&format!("\"{INTERCHANGE_FORMAT}\"")) {
        INTERCHANGE_FORMAT
    } else {
        "unknown"
    }
}

/// First object key of a JSON document prefix, when it can be determined.
fn first_key(bytes: &[u8]) -> Option<String> {
    let text = std::str::from_utf8(&bytes[..bytes.len().min(256)]).ok()?;
    let rest = text.trim_start_matches('\u{feff}').trim_start();
    let rest = rest.strip_prefix('{')?.trim_start();
    let rest = rest.strip_prefix('"')?;
    let end = rest.find('"')?; // interchange keys never contain escapes
    Some(rest[..end].to_string())
}

/// Translate a serde line/column position into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut seen_lines = 1;
    let mut offset = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if seen_lines == line {
            offset = i;
            break;
        }
        if b == b'\n' {
            seen_lines += 1;
        }
        offset = i + 1;
    }
    (offset + column.saturating_sub(1)).min(bytes.len())
}

/// Render one page at the requested dpi. When the page carries an embedded
/// raster it is decoded and rescaled; otherwise a synthetic raster is drawn
/// (white page, black token boxes). Output dimensions always follow
/// `ceil(points * dpi / 72)`.
pub fn render_page(page: &ParsedPage, dpi: u32) -> Result<PageImage, BackendError> {
    if dpi == 0 {
        return Err(BackendError::InvalidDpi);
    }
    if page.width <= 0.0 || page.height <= 0.0 {
        return Err(BackendError::InvalidPage);
    }
    let scale = dpi as f64 / 72.0;
    let width_px = (page.width * scale).ceil() as u32;
    let height_px = (page.height * scale).ceil() as u32;

    if let Some(raster) = &page.raster {
        let bytes = match &raster.data {
            RasterData::Path(p) => std::fs::read(p).map_err(|e| BackendError::Raster(e.to_string()))?,
            RasterData::Base64(b) => BASE64.decode(b).map_err(|e| BackendError::Raster(e.to_string()))?,
        };
        let decoded = image::load_from_memory(&bytes)
            .map_err(|e| BackendError::Raster(e.to_string()))?
            .to_luma8();
        let resized = image::imageops::resize(
            &decoded,
            width_px.max(1),
            height_px.max(1),
            image::imageops::FilterType::Triangle,
        );
        return Ok(PageImage { width_px, height_px, dpi, pixels: resized.into_raw() });
    }

    let mut pixels = vec![255u8; width_px as usize * height_px as usize];
    for token in &page.tokens {
        let x0 = (token.bbox.left() * scale).floor().max(0.0) as u32;
        let y0 = (token.bbox.top() * scale).floor().max(0.0) as u32;
        let x1 = ((token.bbox.right() * scale).ceil() as u32).min(width_px);
        let y1 = ((token.bbox.bottom() * scale).ceil() as u32).min(height_px);
        for y in y0..y1 {
            let row = y as usize * width_px as usize;
            for x in x0..x1 {
                pixels[row + x as usize] = 0;
            }
        }
    }
    Ok(PageImage { width_px, height_px, dpi, pixels })
}

/// Encode a grayscale page image as PNG (for embedding in fixtures).
pub fn encode_png(image: &PageImage) -> Vec<u8> {
    let buf: image::GrayImage =
        image::ImageBuffer::from_raw(image.width_px, image.height_px, image.pixels.clone())
            .expect("pixel buffer matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    image::DynamicImage::ImageLuma8(buf)
        .write_to(&mut out, image::ImageFormat::Png)
        .expect("png encoding of an in-memory buffer");
    out.into_inner()
}
