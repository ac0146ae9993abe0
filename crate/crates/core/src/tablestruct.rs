//! Table-structure stage: recover the logical row/column grid of a table
//! region from its text tokens, including cell spans and header roles, then
//! match the structure back to the original tokens so cell content is never
//! re-transcribed.
//!
//! Like the layout detector, this is a deterministic geometric stand-in
//! behind the contract a learned structure model would use. It copes with
//! borderless tables (inference is purely geometric), empty cells, rows and
//! columns (uncovered grid positions are legal), spanning cells, and ragged
//! alignment (interval-hull clustering).

use serde::{Deserialize, Serialize};

use crate::model::{BoundingBox, TextToken};

/// Role of a table cell in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRole {
    ColumnHeader,
    RowHeader,
    Body,
}

/// One logical table cell. Spans are expressed through `row_span`/`col_span`
/// (always at least 1); `region` is the union box of the fragments that
/// produced the cell and anchors the matchback step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub start_row: u32,
    pub start_col: u32,
    pub row_span: u32,
    pub col_span: u32,
    pub role: CellRole,
    pub text: String,
    pub source_token_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<BoundingBox>,
}

impl TableCell {
    fn rows(&self) -> std::ops::Range<u32> {
        self.start_row..self.start_row + self.row_span
    }

    fn cols(&self) -> std::ops::Range<u32> {
        self.start_col..self.start_col + self.col_span
    }

    fn overlaps(&self, other: &TableCell) -> bool {
        self.rows().start < other.rows().end
            && other.rows().start < self.rows().end
            && self.cols().start < other.cols().end
            && other.cols().start < self.cols().end
    }
}

/// A logical grid. Grid positions not covered by any cell are empty cells;
/// no two cells overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStructure {
    pub n_rows: u32,
    pub n_cols: u32,
    pub cells: Vec<TableCell>,
}

impl TableStructure {
    /// The 1x1 structure with no cells, used when a detected table region
    /// contains no tokens.
    pub fn empty() -> Self {
        TableStructure { n_rows: 1, n_cols: 1, cells: Vec::new() }
    }

    /// Structural invariant check; used by document validation.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_rows == 0 || self.n_cols == 0 {
            out.push("table grid must have positive dimensions".into());
        }
        for (i, cell) in self.cells.iter().enumerate() {
            if cell.row_span == 0 || cell.col_span == 0 {
                out.push(format!("cell {i} has a zero span"));
            }
            if cell.start_row + cell.row_span > self.n_rows
                || cell.start_col + cell.col_span > self.n_cols
            {
                out.push(format!("cell {i} extends outside the {}x{} grid", self.n_rows, self.n_cols));
            }
            for (j, other) in self.cells.iter().enumerate().skip(i + 1) {
                if cell.overlaps(other) {
                    out.push(format!("cells {i} and {j} overlap"));
                }
            }
        }
        out
    }
}

/// Thresholds for grid inference, all in one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableConfig {
    /// Tokens on one line merge into a fragment while their horizontal gap
    /// stays within this factor of the median character width.
    pub fragment_gap_char_factor: f64,
    /// Column cut when the gap between interval hulls exceeds
    /// `max(col_gap_factor * median fragment width, col_gap_floor_pt)`.
    pub col_gap_factor: f64,
    pub col_gap_floor_pt: f64,
    /// Row cut threshold as a factor of the median fragment height.
    pub row_gap_factor: f64,
    /// Fragments wider/taller than this factor of the median extent are
    /// treated as spanning and excluded from boundary estimation (they are
    /// still mapped onto the grid afterwards).
    pub span_outlier_factor: f64,
    /// A fragment covers a grid band when their overlap reaches this
    /// fraction of the smaller of the two extents.
    pub band_overlap_frac: f64,
    /// Minimum fraction of a token inside a cell region for matchback.
    pub matchback_min_overlap: f64,
    /// Fraction of body rows that must have a non-empty, non-numeric first
    /// column for the row-header rule.
    pub row_header_frac: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            fragment_gap_char_factor: 1.0,
            col_gap_factor: 0.5,
            col_gap_floor_pt: 4.0,
            row_gap_factor: 0.4,
            span_outlier_factor: 1.5,
            band_overlap_frac: 0.5,
            matchback_min_overlap: 0.5,
            row_header_frac: 0.6,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum TableError {
    /// No tokens in the region: the caller keeps the table item with an
    /// empty 1x1 structure and records a warning.
    #[error("table region contains no tokens")]
    NoTokens,
}

/// A merged run of tokens forming one cell fragment.
#[derive(Debug, Clone)]
pub(crate) struct Fragment {
    pub bbox: BoundingBox,
    pub token_ids: Vec<u32>,
    pub text: String,
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 })
}

fn same_line(a: &BoundingBox, b: &BoundingBox) -> bool {
    let min_h = a.height().min(b.height());
    if min_h <= 0.0 {
        return a.top().max(b.top()) <= a.bottom().min(b.bottom());
    }
    a.v_overlap(b) >= 0.5 * min_h
}

/// Merge tokens into cell fragments: tokens sharing a line whose horizontal
/// gap stays within `fragment_gap_char_factor` times the median character
/// width join the same fragment.
pub(crate) fn merge_fragments(tokens: &[TextToken], cfg: &TableConfig) -> Vec<Fragment> {
    let mut char_widths: Vec<f64> = tokens
        .iter()
        .map(|t| t.bbox.width() / t.text.chars().count().max(1) as f64)
        .collect();
    let char_w = median(&mut char_widths).unwrap_or(0.0);
    let max_gap = cfg.fragment_gap_char_factor * char_w;

    // group into lines first, then split each line at wide gaps
    let mut order: Vec<usize> = (0..tokens.len()).collect();
    order.sort_by(|&a, &b| {
        tokens[a]
            .bbox
            .top()
            .total_cmp(&tokens[b].bbox.top())
            .then(tokens[a].bbox.left().total_cmp(&tokens[b].bbox.left()))
            .then(tokens[a].id.cmp(&tokens[b].id))
    });
    let mut lines: Vec<Vec<usize>> = Vec::new();
    let mut line_boxes: Vec<BoundingBox> = Vec::new();
    for idx in order {
        let bbox = tokens[idx].bbox;
        match line_boxes.iter().position(|lb| same_line(lb, &bbox)) {
            Some(li) => {
                lines[li].push(idx);
                line_boxes[li] = line_boxes[li].union(&bbox);
            }
            None => {
                lines.push(vec![idx]);
                line_boxes.push(bbox);
            }
        }
    }

    let mut fragments = Vec::new();
    for mut line in lines {
        line.sort_by(|&a, &b| {
            tokens[a]
                .bbox
                .left()
                .total_cmp(&tokens[b].bbox.left())
                .then(tokens[a].id.cmp(&tokens[b].id))
        });
        let mut run: Vec<usize> = Vec::new();
        for idx in line {
            let split = run
                .last()
                .is_some_and(|&prev| tokens[idx].bbox.left() - tokens[prev].bbox.right() > max_gap);
            if split {
                fragments.push(build_fragment(&run, tokens));
                run.clear();
            }
            run.push(idx);
        }
        if !run.is_empty() {
            fragments.push(build_fragment(&run, tokens));
        }
    }
    fragments.sort_by(|a, b| {
        a.bbox
            .top()
            .total_cmp(&b.bbox.top())
            .then(a.bbox.left().total_cmp(&b.bbox.left()))
    });
    fragments
}

fn build_fragment(indices: &[usize], tokens: &[TextToken]) -> Fragment {
    let bbox = indices
        .iter()
        .skip(1)
        .fold(tokens[indices[0]].bbox, |acc, &i| acc.union(&tokens[i].bbox));
    let text = indices.iter().map(|&i| tokens[i].text.as_str()).collect::<Vec<_>>().join(" ");
    Fragment { bbox, token_ids: indices.iter().map(|&i| tokens[i].id).collect(), text }
}

/// One grid axis described by the band interval of every row/column.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Bands(pub Vec<(f64, f64)>);

/// Cluster 1-D intervals into bands: sort by midpoint, extend a running hull,
/// cut where the gap to the next interval exceeds `threshold`. Intervals in
/// `estimate` drive the clustering; band edges afterwards cover the full
/// `extent` by cutting at gap midpoints.
pub(crate) fn cluster_intervals(
    estimate: &[(f64, f64)],
    extent: (f64, f64),
    threshold: f64,
) -> Bands {
    if estimate.is_empty() {
        return Bands(vec![extent]);
    }
    let mut sorted: Vec<(f64, f64)> = estimate.to_vec();
    sorted.sort_by(|a, b| {
        let (ma, mb) = ((a.0 + a.1) / 2.0, (b.0 + b.1) / 2.0);
        ma.total_cmp(&mb).then(a.0.total_cmp(&b.0)).then(a.1.total_cmp(&b.1))
    });
    let mut hulls: Vec<(f64, f64)> = vec![sorted[0]];
    for iv in sorted.into_iter().skip(1) {
        let hull = hulls.last_mut().unwrap();
        if iv.0 - hull.1 > threshold {
            hulls.push(iv);
        } else {
            hull.0 = hull.0.min(iv.0);
            hull.1 = hull.1.max(iv.1);
        }
    }
    // band edges: extent ends outside, gap midpoints between hulls
    let mut bands = Vec::with_capacity(hulls.len());
    for (i, hull) in hulls.iter().enumerate() {
        let lo = if i == 0 { extent.0.min(hull.0) } else { (hulls[i - 1].1 + hull.0) / 2.0 };
        let hi = if i + 1 == hulls.len() {
            extent.1.max(hull.1)
        } else {
            (hull.1 + hulls[i + 1].0) / 2.0
        };
        bands.push((lo, hi));
    }
    Bands(bands)
}

/// Indices of the bands a 1-D interval covers: overlap of at least
/// `band_overlap_frac` of the smaller of the interval and the band.
fn covered_bands(interval: (f64, f64), bands: &Bands, frac: f64) -> Vec<usize> {
    let len = interval.1 - interval.0;
    bands
        .0
        .iter()
        .enumerate()
        .filter(|(_, band)| {
            let overlap = (interval.1.min(band.1) - interval.0.max(band.0)).max(0.0);
            let smaller = len.min(band.1 - band.0);
            if smaller <= 0.0 {
                // degenerate interval or band: decide by midpoint containment
                let mid = (interval.0 + interval.1) / 2.0;
                band.0 <= mid && mid <= band.1
            } else {
                overlap >= frac * smaller
            }
        })
        .map(|(i, _)| i)
        .collect()
}

/// Infer the logical grid of a table region from the tokens assigned to it.
///
/// Steps: merge tokens into fragments; estimate column and row bands by
/// interval-hull clustering (fragments much wider or taller than the median
/// are treated as spanning and left out of the estimate); map every fragment
/// onto the bands it covers, which yields spans; fold fragments landing on
/// the same grid extent into one cell; finally assign header roles.
pub fn infer_table_structure(
    region: BoundingBox,
    tokens: &[TextToken],
    cfg: &TableConfig,
) -> Result<TableStructure, TableError> {
    if tokens.is_empty() {
        return Err(TableError::NoTokens);
    }
    let fragments = merge_fragments(tokens, cfg);

    let mut widths: Vec<f64> = fragments.iter().map(|f| f.bbox.width()).collect();
    let mut heights: Vec<f64> = fragments.iter().map(|f| f.bbox.height()).collect();
    let median_w = median(&mut widths).unwrap_or(0.0);
    let median_h = median(&mut heights).unwrap_or(0.0);

    let col_threshold = (cfg.col_gap_factor * median_w).max(cfg.col_gap_floor_pt);
    let row_threshold = cfg.row_gap_factor * median_h;

    let col_estimate: Vec<(f64, f64)> = fragments
        .iter()
        .filter(|f| f.bbox.width() <= cfg.span_outlier_factor * median_w)
        .map(|f| (f.bbox.left(), f.bbox.right()))
        .collect();
    let row_estimate: Vec<(f64, f64)> = fragments
        .iter()
        .filter(|f| f.bbox.height() <= cfg.span_outlier_factor * median_h)
        .map(|f| (f.bbox.top(), f.bbox.bottom()))
        .collect();

    let col_bands = cluster_intervals(&col_estimate, (region.left(), region.right()), col_threshold);
    let row_bands = cluster_intervals(&row_estimate, (region.top(), region.bottom()), row_threshold);

    // map fragments to covered cell extents; group by extent
    let mut by_extent: std::collections::BTreeMap<(u32, u32, u32, u32), Vec<usize>> =
        Default::default();
    for (fi, fragment) in fragments.iter().enumerate() {
        let cols = covered_bands(
            (fragment.bbox.left(), fragment.bbox.right()),
            &col_bands,
            cfg.band_overlap_frac,
        );
        let rows = covered_bands(
            (fragment.bbox.top(), fragment.bbox.bottom()),
            &row_bands,
            cfg.band_overlap_frac,
        );
        // a fragment always covers at least the band holding its midpoint
        let cols = ensure_nonempty(cols, (fragment.bbox.left(), fragment.bbox.right()), &col_bands);
        let rows = ensure_nonempty(rows, (fragment.bbox.top(), fragment.bbox.bottom()), &row_bands);
        let extent = (
            rows[0] as u32,
            *rows.last().unwrap() as u32 + 1,
            cols[0] as u32,
            *cols.last().unwrap() as u32 + 1,
        );
        by_extent.entry(extent).or_default().push(fi);
    }

    // union any overlapping extents so the no-overlap invariant holds
    let mut extents: Vec<((u32, u32, u32, u32), Vec<usize>)> = by_extent.into_iter().collect();
    loop {
        let mut merged = false;
        'outer: for i in 0..extents.len() {
            for j in (i + 1)..extents.len() {
                let (a, b) = (extents[i].0, extents[j].0);
                if a.0 < b.1 && b.0 < a.1 && a.2 < b.3 && b.2 < a.3 {
                    let (_, frags) = extents.remove(j);
                    extents[i].0 =
                        (a.0.min(b.0), a.1.max(b.1), a.2.min(b.2), a.3.max(b.3));
                    extents[i].1.extend(frags);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }

    let mut cells: Vec<TableCell> = extents
        .into_iter()
        .map(|((r0, r1, c0, c1), mut frag_ids)| {
            frag_ids.sort_by(|&a, &b| {
                fragments[a]
                    .bbox
                    .top()
                    .total_cmp(&fragments[b].bbox.top())
                    .then(fragments[a].bbox.left().total_cmp(&fragments[b].bbox.left()))
            });
            let region = frag_ids
                .iter()
                .skip(1)
                .fold(fragments[frag_ids[0]].bbox, |acc, &i| acc.union(&fragments[i].bbox));
            let text =
                frag_ids.iter().map(|&i| fragments[i].text.as_str()).collect::<Vec<_>>().join(" ");
            let source_token_ids =
                frag_ids.iter().flat_map(|&i| fragments[i].token_ids.iter().copied()).collect();
            TableCell {
                start_row: r0,
                start_col: c0,
                row_span: r1 - r0,
                col_span: c1 - c0,
                role: CellRole::Body,
                text,
                source_token_ids,
                region: Some(region),
            }
        })
        .collect();
    cells.sort_by_key(|c| (c.start_row, c.start_col));

    let structure = TableStructure {
        n_rows: row_bands.0.len() as u32,
        n_cols: col_bands.0.len() as u32,
        cells,
    };
    Ok(classify_cell_roles(structure))
}

fn ensure_nonempty(found: Vec<usize>, interval: (f64, f64), bands: &Bands) -> Vec<usize> {
    if !found.is_empty() {
        return found;
    }
    let mid = (interval.0 + interval.1) / 2.0;
    let nearest = bands
        .0
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (mid - (a.0 + a.1) / 2.0).abs();
            let db = (mid - (b.0 + b.1) / 2.0).abs();
            da.total_cmp(&db)
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    vec![nearest]
}

fn looks_numeric(text: &str) -> bool {
    let cleaned: String =
        text.chars().filter(|c| !matches!(c, ',' | '%' | '$' | ' ' | '±')).collect();
    !cleaned.is_empty() && cleaned.parse::<f64>().is_ok()
}

/// Assign header roles. Column headers: rows 0 through the last row touched
/// by any column-spanning cell (just row 0 when there is none). Row headers:
/// first-column cells below the header rows, when enough body rows have a
/// non-empty, non-numeric first column.
pub fn classify_cell_roles(mut s: TableStructure) -> TableStructure {
    if s.n_rows == 0 {
        return s;
    }
    let header_last = s
        .cells
        .iter()
        .filter(|c| c.col_span > 1)
        .map(|c| c.start_row + c.row_span - 1)
        .max()
        .unwrap_or(0);

    for cell in &mut s.cells {
        cell.role =
            if cell.start_row <= header_last { CellRole::ColumnHeader } else { CellRole::Body };
    }

    let body_rows: Vec<u32> = ((header_last + 1)..s.n_rows).collect();
    if !body_rows.is_empty() {
        let frac = TableConfig::default().row_header_frac;
        let first_col: Vec<&TableCell> = s
            .cells
            .iter()
            .filter(|c| c.start_col == 0 && c.start_row > header_last)
            .collect();
        let non_empty = body_rows
            .iter()
            .filter(|&&r| {
                first_col
                    .iter()
                    .any(|c| c.rows().contains(&r) && !c.text.trim().is_empty())
            })
            .count();
        let non_numeric = body_rows
            .iter()
            .filter(|&&r| {
                first_col
                    .iter()
                    .any(|c| c.rows().contains(&r) && !c.text.trim().is_empty() && !looks_numeric(&c.text))
            })
            .count();
        let n = body_rows.len();
        if non_empty as f64 >= frac * n as f64 && non_numeric as f64 >= frac * n as f64 {
            for cell in &mut s.cells {
                if cell.start_col == 0 && cell.start_row > header_last {
                    cell.role = CellRole::RowHeader;
                }
            }
        }
    }
    s
}

/// Match page tokens back onto the structure's cell regions: each token goes
/// to the cell covering the largest fraction of it (at least
/// `matchback_min_overlap`); each token contributes to at most one cell. Cell
/// text becomes the space-joined token texts in reading order, so table
/// content is never transcribed from pixels. Returns the ids of tokens that
/// no cell claimed.
pub fn match_back(
    s: &mut TableStructure,
    page_tokens: &[TextToken],
    cfg: &TableConfig,
) -> Vec<u32> {
    let regions: Vec<Option<BoundingBox>> = s.cells.iter().map(|c| c.region).collect();
    if regions.iter().all(Option::is_none) {
        return Vec::new();
    }
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); s.cells.len()];
    let mut dropped = Vec::new();
    for (ti, token) in page_tokens.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (ci, region) in regions.iter().enumerate() {
            let Some(region) = region else { continue };
            let frac = token.bbox.overlap_frac(region);
            if frac < cfg.matchback_min_overlap {
                continue;
            }
            if best.is_none_or(|(_, bf)| frac > bf) {
                best = Some((ci, frac));
            }
        }
        match best {
            Some((ci, _)) => assigned[ci].push(ti),
            None => dropped.push(token.id),
        }
    }
    for (ci, token_indices) in assigned.into_iter().enumerate() {
        let mut ordered = token_indices;
        ordered.sort_by(|&a, &b| {
            page_tokens[a]
                .bbox
                .top()
                .total_cmp(&page_tokens[b].bbox.top())
                .then(page_tokens[a].bbox.left().total_cmp(&page_tokens[b].bbox.left()))
                .then(page_tokens[a].id.cmp(&page_tokens[b].id))
        });
        let cell = &mut s.cells[ci];
        cell.text =
            ordered.iter().map(|&i| page_tokens[i].text.as_str()).collect::<Vec<_>>().join(" ");
        cell.source_token_ids = ordered.iter().map(|&i| page_tokens[i].id).collect();
    }
    dropped
}
