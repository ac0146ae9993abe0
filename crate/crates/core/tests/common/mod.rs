//! Shared fixtures and random-input generators for the integration suites.

#![allow(dead_code)]

pub mod oracles;

use rand::rngs::StdRng;
use rand::Rng;

use docforge_core::backend::ParsedDocument;
use docforge_core::layout::{LayoutCluster, LayoutProposal};
use docforge_core::model::{
    BoundingBox, DocItem, DocItemLabel, Document, DocumentMetadata, PageDescriptor, ParsedPage,
    Provenance, TextToken,
};
use docforge_core::tablestruct::{CellRole, TableCell, TableStructure};

pub fn bb(l: f64, t: f64, r: f64, b: f64) -> BoundingBox {
    BoundingBox::new(l, t, r, b).unwrap()
}

pub fn tok(id: u32, text: &str, l: f64, t: f64, r: f64, b: f64, font: Option<f64>) -> TextToken {
    TextToken { id, text: text.into(), bbox: bb(l, t, r, b), font_size: font }
}

/// Lay a sentence out as word tokens on one line.
pub fn line_of_words(
    start_id: u32,
    words: &[&str],
    x0: f64,
    y: f64,
    font: f64,
) -> Vec<TextToken> {
    let mut out = Vec::new();
    let mut x = x0;
    for (i, word) in words.iter().enumerate() {
        let w = 0.55 * font * word.chars().count() as f64;
        out.push(tok(start_id + i as u32, word, x, y, x + w, y + font, Some(font)));
        x += w + 0.4 * font;
    }
    out
}

/// Page-1 fixture modeled on a typical article title block: a large-font
/// title, an author line, an abstract marker and body prose, plus a running
/// header and a page-number footer.
pub fn doclaynet_title_page() -> ParsedDocument {
    let mut tokens = Vec::new();
    let mut next_id = 0u32;
    let mut push = |tokens: &mut Vec<TextToken>, words: &[&str], x0: f64, y: f64, font: f64| {
        let line = line_of_words(tokens.len() as u32, words, x0, y, font);
        next_id += line.len() as u32;
        tokens.extend(line);
    };

    push(&mut tokens, &["arXiv", "preprint"], 50.0, 18.0, 8.0);
    push(
        &mut tokens,
        &["DocLayNet:", "A", "Large", "Human-Annotated", "Dataset", "for"],
        50.0,
        80.0,
        20.0,
    );
    push(&mut tokens, &["Document-Layout", "Analysis"], 50.0, 108.0, 20.0);
    push(
        &mut tokens,
        &[
            "Birgit", "Pfitzmann,", "Christoph", "Auer,", "Michele", "Dolfi,", "Ahmed", "S",
            "Nassar", "and", "Peter", "Staar",
        ],
        50.0,
        160.0,
        10.0,
    );
    push(
        &mut tokens,
        &["Abstract", "accurate", "document", "layout", "analysis", "is", "a", "key"],
        50.0,
        200.0,
        10.0,
    );
    push(
        &mut tokens,
        &["requirement", "for", "high-quality", "PDF", "document", "conversion"],
        50.0,
        214.0,
        10.0,
    );
    push(&mut tokens, &["1"], 300.0, 770.0, 9.0);

    let _ = next_id;
    ParsedDocument {
        name: "doclaynet-title".into(),
        pages: vec![ParsedPage {
            page_no: 1,
            width: 612.0,
            height: 792.0,
            tokens,
            raster: None,
            proposals: vec![],
        }],
    }
}

/// A page carrying only a running header and a page-number footer.
pub fn header_footer_page() -> ParsedDocument {
    let mut tokens = line_of_words(0, &["Journal", "of", "Synthetic", "Documents"], 50.0, 16.0, 9.0);
    tokens.extend(line_of_words(10, &["page", "7"], 280.0, 770.0, 9.0));
    ParsedDocument {
        name: "header-footer".into(),
        pages: vec![ParsedPage {
            page_no: 1,
            width: 612.0,
            height: 792.0,
            tokens,
            raster: None,
            proposals: vec![],
        }],
    }
}

/// A body page with two prose columns and a numeric table grid; used for the
/// end-to-end no-retranscription and interleaving checks.
pub fn two_column_table_page(page_no: u32) -> ParsedPage {
    let mut tokens = Vec::new();
    let mut id = 0u32;
    let words = ["reading", "order", "of", "the", "page"];
    for line in 0..5 {
        let y = 120.0 + line as f64 * 14.0;
        tokens.extend(line_of_words(id, &words, 50.0, y, 10.0));
        id += words.len() as u32;
        tokens.extend(line_of_words(id, &words, 322.0, y + 7.0, 10.0));
        id += words.len() as u32;
    }
    for row in 0..4 {
        let y = 420.0 + row as f64 * 16.0;
        for col in 0..3 {
            let x = 100.0 + col as f64 * 80.0;
            let text = if row == 0 {
                ["class", "count", "score"][col]
            } else {
                ["human", "12", "0.95"][col]
            };
            let line = line_of_words(id, &[text], x, y, 9.0);
            id += 1;
            tokens.extend(line);
        }
    }
    ParsedPage { page_no, width: 612.0, height: 792.0, tokens, raster: None, proposals: vec![] }
}

pub fn cluster(id: u32, label: DocItemLabel, l: f64, t: f64, r: f64, b: f64) -> LayoutCluster {
    LayoutCluster {
        proposal: LayoutProposal::new(bb(l, t, r, b), label, 1.0),
        token_ids: vec![],
        cluster_id: id,
    }
}

/// The wrapped-paragraph fixture: part 1 in the left column, a full-width
/// table below it, part 2 in the right column under the table.
pub fn para_table_para_clusters() -> Vec<LayoutCluster> {
    vec![
        cluster(0, DocItemLabel::Text, 322.0, 470.0, 560.0, 650.0), // paragraph part 2
        cluster(1, DocItemLabel::Table, 50.0, 300.0, 560.0, 450.0), // full-width table
        cluster(2, DocItemLabel::Text, 50.0, 100.0, 290.0, 280.0),  // paragraph part 1
    ]
}

// ---------------------------------------------------------------------------
// random generators (integer-grid coordinates keep float comparisons exact)

pub fn random_proposals(rng: &mut StdRng, max_n: usize) -> Vec<LayoutProposal> {
    let n = rng.random_range(0..=max_n);
    (0..n)
        .map(|_| {
            let l = rng.random_range(0..20) as f64 * 5.0;
            let t = rng.random_range(0..20) as f64 * 5.0;
            let w = rng.random_range(1..12) as f64 * 5.0;
            let h = rng.random_range(1..12) as f64 * 5.0;
            let label = DocItemLabel::ALL[rng.random_range(0..DocItemLabel::ALL.len())];
            let confidence = rng.random_range(0..=20) as f64 * 0.05;
            LayoutProposal::new(bb(l, t, l + w, t + h), label, confidence)
        })
        .collect()
}

pub fn random_tokens(rng: &mut StdRng, max_n: usize) -> Vec<TextToken> {
    let n = rng.random_range(0..=max_n);
    (0..n)
        .map(|i| {
            let l = rng.random_range(0..110) as f64 * 5.0;
            let t = rng.random_range(0..150) as f64 * 5.0;
            let w = rng.random_range(1..10) as f64 * 5.0;
            let h = rng.random_range(1..4) as f64 * 5.0;
            tok(i as u32, "w", l, t, l + w, t + h, None)
        })
        .collect()
}

/// A random valid document for serialization round trips.
pub fn random_document(rng: &mut StdRng) -> Document {
    let n_pages = rng.random_range(0..4usize);
    let pages: Vec<PageDescriptor> = (0..n_pages)
        .map(|i| PageDescriptor {
            page_no: i as u32 + 1,
            width: rng.random_range(100..1000) as f64,
            height: rng.random_range(100..1400) as f64,
        })
        .collect();

    let mut items: Vec<DocItem> = Vec::new();
    if !pages.is_empty() {
        let n_items = rng.random_range(0..9usize);
        for _ in 0..n_items {
            let label = DocItemLabel::ALL[rng.random_range(0..DocItemLabel::ALL.len())];
            let page_no = rng.random_range(1..=n_pages) as u32;
            let text: String = match rng.random_range(0..4) {
                0 => String::new(),
                1 => "plain text".into(),
                2 => "piped | text\nwith newline".into(),
                _ => "unicode: škoda, ärger, 測定".into(),
            };
            let prov = vec![Provenance {
                page_no,
                bbox: bb(0.0, 0.0, rng.random_range(1..600) as f64, rng.random_range(1..700) as f64),
                token_ids: (0..rng.random_range(0..4u32)).collect(),
            }];
            let mut item = DocItem::new(label, text, prov);
            if label == DocItemLabel::Table {
                item.table = Some(random_table_structure(rng));
            }
            if label == DocItemLabel::Caption {
                let target = items
                    .iter()
                    .position(|i| matches!(i.label, DocItemLabel::Picture | DocItemLabel::Table));
                item.caption_of = target;
            }
            item.reference_entry =
                matches!(label, DocItemLabel::Text | DocItemLabel::ListItem) && rng.random_bool(0.2);
            items.push(item);
        }
    }

    Document {
        name: format!("doc-{}", rng.random_range(0..1000)),
        metadata: DocumentMetadata {
            title: rng.random_bool(0.5).then(|| "A Title".to_string()),
            authors: if rng.random_bool(0.5) { vec!["Jane Doe".into()] } else { vec![] },
            language: rng.random_bool(0.5).then(|| "en".to_string()),
        },
        pages,
        items,
    }
}

pub fn random_table_structure(rng: &mut StdRng) -> TableStructure {
    let n_rows = rng.random_range(1..5u32);
    let n_cols = rng.random_range(1..5u32);
    let mut occupied = vec![vec![false; n_cols as usize]; n_rows as usize];
    let mut cells = Vec::new();
    for r in 0..n_rows {
        for c in 0..n_cols {
            if occupied[r as usize][c as usize] || rng.random_bool(0.2) {
                continue;
            }
            let max_rs = n_rows - r;
            let max_cs = n_cols - c;
            let mut rs = rng.random_range(1..=max_rs.min(2));
            let mut cs = rng.random_range(1..=max_cs.min(3));
            // shrink the span until it fits the free region
            'fit: loop {
                for rr in r..r + rs {
                    for cc in c..c + cs {
                        if occupied[rr as usize][cc as usize] {
                            if cs > 1 {
                                cs -= 1;
                            } else {
                                rs -= 1;
                            }
                            if rs == 0 {
                                break 'fit;
                            }
                            continue 'fit;
                        }
                    }
                }
                break;
            }
            if rs == 0 {
                continue;
            }
            for rr in r..r + rs {
                for cc in c..c + cs {
                    occupied[rr as usize][cc as usize] = true;
                }
            }
            let role = match rng.random_range(0..3) {
                0 => CellRole::ColumnHeader,
                1 => CellRole::RowHeader,
                _ => CellRole::Body,
            };
            cells.push(TableCell {
                start_row: r,
                start_col: c,
                row_span: rs,
                col_span: cs,
                role,
                text: format!("r{r}c{c}"),
                source_token_ids: (0..rng.random_range(0..3u32)).collect(),
                region: rng
                    .random_bool(0.5)
                    .then(|| bb(c as f64 * 50.0, r as f64 * 20.0, c as f64 * 50.0 + 40.0, r as f64 * 20.0 + 15.0)),
            });
        }
    }
    TableStructure { n_rows, n_cols, cells }
}

/// Plan for a generated table: column/row bands plus fragments (one token
/// per fragment) with their intended grid extents.
pub struct TablePlan {
    pub region: BoundingBox,
    pub tokens: Vec<TextToken>,
}

/// Generate a clean grid of cell fragments with wide gutters, ragged
/// alignment, occasional empty cells and at most one spanning fragment.
/// Every row and column keeps at least one single-cell fragment.
pub fn random_table_plan(rng: &mut StdRng) -> TablePlan {
    let n_cols = rng.random_range(1..=4usize);
    let n_rows = rng.random_range(1..=4usize);
    let col_widths: Vec<f64> = (0..n_cols).map(|_| rng.random_range(6..13) as f64 * 5.0).collect();
    let col_gap = rng.random_range(7..11) as f64 * 5.0; // 35..50pt gutters
    let mut col_x = Vec::with_capacity(n_cols);
    let mut x = 0.0;
    for w in &col_widths {
        col_x.push(x);
        x += w + col_gap;
    }
    let row_height = 10.0;
    let row_gap = rng.random_range(3..7) as f64 * 2.0; // 6..12pt
    let row_y: Vec<f64> = (0..n_rows).map(|r| r as f64 * (row_height + row_gap)).collect();

    // optional single column-spanning fragment; a row span cannot be
    // expressed by one normal-height token, so generated cases stick to
    // column spans and row spans are covered by hand-built structures
    let mut span: Option<(usize, usize, usize)> = None; // (row, start_col, len)
    if n_cols >= 2 && rng.random_bool(0.5) {
        let len = rng.random_range(2..=n_cols);
        let start = rng.random_range(0..=n_cols - len);
        span = Some((rng.random_range(0..n_rows), start, len));
    }

    let covered_by_span = |r: usize, c: usize| match span {
        Some((row, start, len)) => r == row && (start..start + len).contains(&c),
        None => false,
    };

    // empty cells, keeping one single fragment per row and column
    let mut present = vec![vec![true; n_cols]; n_rows];
    for r in 0..n_rows {
        for c in 0..n_cols {
            if covered_by_span(r, c) {
                present[r][c] = false; // the span supplies this position
                continue;
            }
            if rng.random_bool(0.15) {
                present[r][c] = false;
                let row_has = (0..n_cols).any(|cc| present[r][cc] && !covered_by_span(r, cc));
                let col_has = (0..n_rows).any(|rr| present[rr][c] && !covered_by_span(rr, c));
                if !row_has || !col_has {
                    present[r][c] = true;
                }
            }
        }
    }

    let mut tokens = Vec::new();
    let mut id = 0u32;
    for r in 0..n_rows {
        for c in 0..n_cols {
            if !present[r][c] {
                continue;
            }
            let w = col_widths[c];
            let frag_w = (w * rng.random_range(6..=10) as f64 / 10.0).round();
            let offset = match rng.random_range(0..3) {
                0 => 0.0,                      // left aligned
                1 => w - frag_w,               // right aligned
                _ => ((w - frag_w) / 2.0).round(), // centered
            };
            tokens.push(tok(
                id,
                &format!("r{r}c{c}"),
                col_x[c] + offset,
                row_y[r],
                col_x[c] + offset + frag_w,
                row_y[r] + row_height,
                None,
            ));
            id += 1;
        }
    }
    if let Some((row, start, len)) = span {
        tokens.push(tok(
            id,
            "span",
            col_x[start],
            row_y[row],
            col_x[start + len - 1] + col_widths[start + len - 1],
            row_y[row] + row_height,
            None,
        ));
    }

    let region = bb(
        -5.0,
        -5.0,
        col_x[n_cols - 1] + col_widths[n_cols - 1] + 5.0,
        row_y[n_rows - 1] + row_height + 5.0,
    );
    TablePlan { region, tokens }
}

/// Cluster layout for a generated two-column page (reading-order cases).
pub fn random_two_column_clusters(rng: &mut StdRng) -> Vec<LayoutCluster> {
    let page_w = 612.0;
    let mut clusters = Vec::new();
    let mut id = 0u32;

    let mut push = |clusters: &mut Vec<LayoutCluster>, label, l: f64, t: f64, r: f64, b: f64| {
        clusters.push(cluster(id, label, l, t, r, b));
        id += 1;
    };

    if rng.random_bool(0.4) {
        push(&mut clusters, DocItemLabel::PageHeader, 50.0, 15.0, 250.0, 30.0);
    }
    // optional full-width band at the top (title or table)
    let mut y_top = 90.0;
    if rng.random_bool(0.5) {
        let h = rng.random_range(4..10) as f64 * 10.0;
        push(&mut clusters, DocItemLabel::Text, 50.0, y_top, 560.0, y_top + h);
        y_top += h + 20.0;
    }
    // two columns of stacked clusters with integer geometry
    for (x0, x1) in [(50.0, 290.0), (322.0, 562.0)] {
        let mut y = y_top + rng.random_range(0..3) as f64 * 10.0;
        let blocks = rng.random_range(1..5);
        for _ in 0..blocks {
            let h = rng.random_range(3..12) as f64 * 10.0;
            if y + h > 700.0 {
                break;
            }
            push(&mut clusters, DocItemLabel::Text, x0, y, x1, y + h);
            y += h + 20.0;
        }
    }
    if rng.random_bool(0.4) {
        push(&mut clusters, DocItemLabel::PageFooter, 280.0, 765.0, 330.0, 780.0);
    }
    let _ = page_w;
    clusters
}
