//! Deterministic synthetic documents for tests, demos and benchmarks.
//!
//! Generated pages mimic article layouts: a title block with authors on
//! page 1, one- or two-column prose, list blocks, numeric tables, running
//! headers and page-number footers, and occasional picture regions with
//! captions (delivered as externally provided proposals). Output is a
//! function of the seed alone.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::backend::{to_interchange_json, ParsedDocument, INTERCHANGE_EXTENSION};
use crate::layout::LayoutProposal;
use crate::model::{BoundingBox, DocItemLabel, ParsedPage, TextToken};

const PAGE_WIDTH: f64 = 612.0;
const PAGE_HEIGHT: f64 = 792.0;
const BODY_FONT: f64 = 10.0;
const LINE_HEIGHT: f64 = 10.0;
const BLOCK_GAP: f64 = 26.0;

const WORDS: &[&str] = &[
    "the", "of", "and", "to", "in", "is", "was", "that", "for", "with", "as", "on", "are",
    "this", "by", "from", "not", "have", "which", "they", "their", "more", "other", "some",
    "layout", "page", "table", "column", "row", "cell", "token", "document", "reading",
    "order", "structure", "analysis", "model", "pipeline", "stage", "backend", "format",
    "caption", "figure", "header", "footer", "section", "paragraph", "content", "result",
    "method", "system", "value", "number", "line", "block", "region", "label", "text",
];

const GIVEN_NAMES: &[&str] = &["Ada", "Grace", "Alan", "Edsger", "Barbara", "Donald"];
const FAMILY_NAMES: &[&str] = &["Byron", "Hopper", "Turing", "Dijkstra", "Liskov", "Knuth"];

fn word_width(word: &str, font: f64) -> f64 {
    0.55 * font * word.chars().count() as f64
}

struct PageBuilder {
    tokens: Vec<TextToken>,
    proposals: Vec<LayoutProposal>,
    next_id: u32,
}

impl PageBuilder {
    fn new() -> Self {
        PageBuilder { tokens: Vec::new(), proposals: Vec::new(), next_id: 0 }
    }

    fn push_word(&mut self, word: &str, x: f64, y: f64, font: f64) -> f64 {
        let w = word_width(word, font);
        let bbox = BoundingBox::new(
            round1(x),
            round1(y),
            round1((x + w).min(PAGE_WIDTH)),
            round1((y + font).min(PAGE_HEIGHT)),
        )
        .expect("generator coordinates are ordered");
        self.tokens.push(TextToken {
            id: self.next_id,
            text: word.to_string(),
            bbox,
            font_size: Some(font),
        });
        self.next_id += 1;
        w
    }

    /// Lay words out in lines within `[x0, x1]` starting at `y`; returns the
    /// bottom of the final line.
    fn push_lines(
        &mut self,
        rng: &mut StdRng,
        x0: f64,
        x1: f64,
        y: f64,
        lines: usize,
        font: f64,
        first_word: Option<&str>,
    ) -> f64 {
        let pitch = 1.4 * font;
        let mut y = y;
        for line in 0..lines {
            let mut x = x0;
            if line == 0 {
                if let Some(marker) = first_word {
                    x += self.push_word(marker, x, y, font) + 0.4 * font;
                }
            }
            loop {
                let word = WORDS[rng.random_range(0..WORDS.len())];
                let w = word_width(word, font);
                if x + w > x1 {
                    break;
                }
                self.push_word(word, x, y, font);
                x += w + 0.4 * font;
            }
            y += pitch;
        }
        y - pitch + font
    }

    fn push_table(&mut self, rng: &mut StdRng, x0: f64, y: f64, cols: usize, rows: usize) -> f64 {
        let col_pitch = 72.0;
        let row_pitch = 16.0;
        for row in 0..rows {
            for col in 0..cols {
                let text = if row == 0 {
                    WORDS[24 + (col % 20)].to_string()
                } else if col == 0 {
                    WORDS[24 + rng.random_range(0..20)].to_string()
                } else {
                    format!("{}.{}", rng.random_range(0..100), rng.random_range(0..10))
                };
                let x = x0 + col as f64 * col_pitch;
                self.push_word(&text, x, y + row as f64 * row_pitch, 9.0);
            }
        }
        y + (rows - 1) as f64 * row_pitch + LINE_HEIGHT
    }

    fn push_picture_with_caption(&mut self, rng: &mut StdRng, x0: f64, y: f64) -> f64 {
        let picture = BoundingBox::new(x0, y, x0 + 220.0, y + 120.0).unwrap();
        self.proposals.push(LayoutProposal::new(picture, DocItemLabel::Picture, 0.97));
        let caption_y = y + 128.0;
        let n = rng.random_range(4..8);
        let mut x = x0;
        let start_id = self.next_id;
        x += self.push_word("Figure", x, caption_y, 9.0) + 3.6;
        x += self.push_word("1:", x, caption_y, 9.0) + 3.6;
        for _ in 0..n {
            let word = WORDS[rng.random_range(0..WORDS.len())];
            x += self.push_word(word, x, caption_y, 9.0) + 3.6;
        }
        let caption_box = self.tokens[start_id as usize..]
            .iter()
            .map(|t| t.bbox)
            .reduce(|a, b| a.union(&b))
            .unwrap();
        // pad so the caption proposal outranks the detector's text block
        let padded = BoundingBox::new(
            caption_box.left() - 2.0,
            caption_box.top() - 2.0,
            caption_box.right() + 2.0,
            caption_box.bottom() + 2.0,
        )
        .unwrap();
        self.proposals.push(LayoutProposal::new(padded, DocItemLabel::Caption, 1.0));
        caption_y + LINE_HEIGHT
    }

    fn finish(self, page_no: u32) -> ParsedPage {
        ParsedPage {
            page_no,
            width: PAGE_WIDTH,
            height: PAGE_HEIGHT,
            tokens: self.tokens,
            raster: None,
            proposals: self.proposals,
        }
    }
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn author_line(rng: &mut StdRng) -> String {
    let n = rng.random_range(2..4);
    let mut names: Vec<String> = (0..n)
        .map(|_| {
            format!(
                "{} {}",
                GIVEN_NAMES[rng.random_range(0..GIVEN_NAMES.len())],
                FAMILY_NAMES[rng.random_range(0..FAMILY_NAMES.len())]
            )
        })
        .collect();
    let last = names.pop().unwrap();
    if names.is_empty() {
        last
    } else {
        format!("{} and {}", names.join(", "), last)
    }
}

/// Generate one synthetic document. Identical `(name, pages, seed)` inputs
/// produce identical output.
pub fn synthetic_document(name: &str, pages: usize, seed: u64) -> ParsedDocument {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(pages);
    for page_no in 1..=pages {
        let mut builder = PageBuilder::new();

        // running header and page-number footer
        builder.push_word("docforge", 50.0, 16.0, 9.0);
        builder.push_word("preprint", 110.0, 16.0, 9.0);
        builder.push_word(&page_no.to_string(), 300.0, 770.0, 9.0);

        let mut y = 80.0;
        if page_no == 1 {
            // title block, author line, then a section header; the 20pt gaps
            // keep the blocks from merging under the 1.5x line-height rule
            y = builder.push_lines(&mut rng, 50.0, 540.0, y, 1, 22.0, None) + 20.0;
            let mut x = 50.0;
            for word in author_line(&mut rng).split_whitespace() {
                let w = word_width(word, BODY_FONT);
                builder.push_word(word, x, y, BODY_FONT);
                x += w + 0.4 * BODY_FONT;
            }
            y += LINE_HEIGHT + 20.0;
            y = builder.push_lines(&mut rng, 50.0, 300.0, y, 1, 13.0, Some("1."));
            y += BLOCK_GAP;
        }

        let two_columns = rng.random_bool(0.5);
        let with_table = rng.random_bool(0.4);
        let with_picture = rng.random_bool(0.25);

        if two_columns {
            // right-column baselines are offset by half a pitch so lines do
            // not fuse across the gutter and the columns stay separate blocks
            let columns = [(50.0, 290.0, 0.0), (322.0, 562.0, 7.0)];
            for (x0, x1, phase) in columns {
                let mut cy = y + phase;
                while cy < 700.0 {
                    let lines = rng.random_range(3..7);
                    cy = builder.push_lines(&mut rng, x0, x1, cy, lines, BODY_FONT, None);
                    cy += BLOCK_GAP;
                }
            }
        } else {
            let mut cy = y;
            if with_table {
                let cols = rng.random_range(3..6);
                let rows = rng.random_range(3..6);
                cy = builder.push_table(&mut rng, 80.0, cy, cols, rows) + BLOCK_GAP;
            }
            if with_picture && cy < 560.0 {
                cy = builder.push_picture_with_caption(&mut rng, 120.0, cy) + BLOCK_GAP;
            }
            while cy < 700.0 {
                let lines = rng.random_range(3..7);
                let marker = rng.random_bool(0.15).then_some("•");
                cy = builder.push_lines(&mut rng, 50.0, 560.0, cy, lines, BODY_FONT, marker);
                cy += BLOCK_GAP;
            }
        }

        out.push(builder.finish(page_no as u32));
    }
    ParsedDocument { name: name.to_string(), pages: out }
}

/// Description of a corpus to generate on disk.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub docs: usize,
    pub pages_per_doc: usize,
    pub seed: u64,
}

/// Write a corpus of interchange files into `dir`, one per document; returns
/// the paths in document order.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(spec.docs);
    for i in 0..spec.docs {
        let name = format!("doc{i:03}");
        let doc = synthetic_document(&name, spec.pages_per_doc, spec.seed.wrapping_add(i as u64));
        let path = dir.join(format!("{name}{INTERCHANGE_EXTENSION}"));
        let mut file = std::fs::File::create(&path)?;
        file.write_all(to_interchange_json(&doc).as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}
