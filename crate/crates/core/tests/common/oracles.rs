//! Independent reference implementations used to cross-check the engine.
//! Each oracle re-implements the specified rule from scratch (its own
//! geometry helpers, its own scan order) so agreement is meaningful.

use docforge_core::layout::{LayoutCluster, LayoutProposal};
use docforge_core::model::{BoundingBox, DocItemLabel, TextToken};
use docforge_core::tablestruct::TableStructure;

fn rect(b: &BoundingBox) -> (f64, f64, f64, f64) {
    (b.left(), b.top(), b.right(), b.bottom())
}

fn area_of(b: &BoundingBox) -> f64 {
    let (l, t, r, bo) = rect(b);
    (r - l) * (bo - t)
}

fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (al, at, ar, ab) = rect(a);
    let (bl, bt, br, bb) = rect(b);
    let w = ar.min(br) - al.max(bl);
    let h = ab.min(bb) - at.max(bt);
    if w < 0.0 || h < 0.0 {
        0.0
    } else {
        w * h
    }
}

fn iou_ref(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = area_of(a) + area_of(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn overlap_frac_ref(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let own = area_of(a);
    if own <= 0.0 {
        let (l, t, r, bo) = rect(a);
        let (cx, cy) = ((l + r) / 2.0, (t + bo) / 2.0);
        let (bl, bt, br, bb) = rect(b);
        return if bl <= cx && cx <= br && bt <= cy && cy <= bb { 1.0 } else { 0.0 };
    }
    intersection_area(a, b) / own
}

/// Exhaustive ordered-scan suppression: walk the proposals in priority order
/// and keep each one only when it survives against everything already kept.
pub fn nms_oracle(proposals: &[LayoutProposal], iou_thr: f64, containment_thr: f64) -> Vec<LayoutProposal> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&proposals[i], &proposals[j]);
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(area_of(&b.bbox).partial_cmp(&area_of(&a.bbox)).unwrap())
            .then(a.bbox.top().partial_cmp(&b.bbox.top()).unwrap())
            .then(a.bbox.left().partial_cmp(&b.bbox.left()).unwrap())
            .then(a.bbox.right().partial_cmp(&b.bbox.right()).unwrap())
            .then(a.bbox.bottom().partial_cmp(&b.bbox.bottom()).unwrap())
            .then(a.label.cmp(&b.label))
    });
    let mut kept: Vec<LayoutProposal> = Vec::new();
    'candidates: for i in order {
        let cand = &proposals[i];
        for k in &kept {
            if iou_ref(&cand.bbox, &k.bbox) >= iou_thr {
                continue 'candidates;
            }
            if cand.label != k.label && overlap_frac_ref(&cand.bbox, &k.bbox) >= containment_thr {
                continue 'candidates;
            }
        }
        kept.push(cand.clone());
    }
    kept
}

// ---------------------------------------------------------------------------
// reading order

const COLUMN_GAP_FRAC: f64 = 0.03;

/// Brute-force XY-cut: candidate gaps come from every pair of cluster edges,
/// validated by scanning all clusters for strip crossings.
pub fn xy_cut_oracle(clusters: &[LayoutCluster], page_width: f64) -> Vec<u32> {
    let mut headers: Vec<&LayoutCluster> = clusters
        .iter()
        .filter(|c| c.proposal.label == DocItemLabel::PageHeader)
        .collect();
    let mut footers: Vec<&LayoutCluster> = clusters
        .iter()
        .filter(|c| c.proposal.label == DocItemLabel::PageFooter)
        .collect();
    let body: Vec<&LayoutCluster> = clusters
        .iter()
        .filter(|c| {
            !matches!(c.proposal.label, DocItemLabel::PageHeader | DocItemLabel::PageFooter)
        })
        .collect();
    let positional = |a: &&LayoutCluster, b: &&LayoutCluster| {
        a.proposal
            .bbox
            .top()
            .partial_cmp(&b.proposal.bbox.top())
            .unwrap()
            .then(a.proposal.bbox.left().partial_cmp(&b.proposal.bbox.left()).unwrap())
            .then(a.cluster_id.cmp(&b.cluster_id))
    };
    headers.sort_by(positional);
    footers.sort_by(positional);

    let mut out: Vec<u32> = headers.iter().map(|c| c.cluster_id).collect();
    recurse(&body, COLUMN_GAP_FRAC * page_width, &mut out);
    out.extend(footers.iter().map(|c| c.cluster_id));
    out
}

fn recurse(group: &[&LayoutCluster], min_column_gap: f64, out: &mut Vec<u32>) {
    if group.len() <= 1 {
        out.extend(group.iter().map(|c| c.cluster_id));
        return;
    }
    let v = best_strip(group, true).filter(|&(_, w)| w > min_column_gap);
    let h = best_strip(group, false).filter(|&(_, w)| w > 0.0);
    let split = match (v, h) {
        (Some(v), Some(h)) if h.1 > v.1 => Some((h, false)),
        (Some(v), _) => Some((v, true)),
        (None, Some(h)) => Some((h, false)),
        (None, None) => None,
    };
    match split {
        Some(((start, _), vertical)) => {
            let (first, second): (Vec<&LayoutCluster>, Vec<&LayoutCluster>) =
                group.iter().partition(|c| {
                    let b = &c.proposal.bbox;
                    let mid = if vertical {
                        (b.left() + b.right()) / 2.0
                    } else {
                        (b.top() + b.bottom()) / 2.0
                    };
                    mid < start
                });
            recurse(&first, min_column_gap, out);
            recurse(&second, min_column_gap, out);
        }
        None => {
            let mut rest = group.to_vec();
            rest.sort_by(|a, b| {
                a.proposal
                    .bbox
                    .top()
                    .partial_cmp(&b.proposal.bbox.top())
                    .unwrap()
                    .then(a.proposal.bbox.left().partial_cmp(&b.proposal.bbox.left()).unwrap())
                    .then(a.cluster_id.cmp(&b.cluster_id))
            });
            out.extend(rest.iter().map(|c| c.cluster_id));
        }
    }
}

/// Widest fully empty strip between any two cluster edges on one axis,
/// `(start, width)`; the earliest strip on ties.
fn best_strip(group: &[&LayoutCluster], vertical: bool) -> Option<(f64, f64)> {
    let interval = |c: &LayoutCluster| {
        let b = &c.proposal.bbox;
        if vertical { (b.left(), b.right()) } else { (b.top(), b.bottom()) }
    };
    let mut best: Option<(f64, f64)> = None;
    for a in group {
        let (_, a_end) = interval(a);
        for b in group {
            let (b_start, _) = interval(b);
            if b_start <= a_end {
                continue;
            }
            let crossed = group.iter().any(|c| {
                let (s, e) = interval(c);
                s < b_start && e > a_end
            });
            if crossed {
                continue;
            }
            let width = b_start - a_end;
            let better = match best {
                None => true,
                Some((bs, bw)) => width > bw || (width == bw && a_end < bs),
            };
            if better {
                best = Some((a_end, width));
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// table grid

/// The grid an independent boundary search recovers: band ranges per axis
/// and the extent each fragment maps to.
#[derive(Debug, PartialEq)]
pub struct OracleGrid {
    pub n_rows: usize,
    pub n_cols: usize,
    /// (start_row, row_span, start_col, col_span, text) per fragment, sorted.
    pub cells: Vec<(u32, u32, u32, u32, String)>,
}

/// Boundary-search oracle for tables whose fragments are single tokens:
/// cut at every maximal empty strip wider than the threshold (so boundaries
/// cross no estimation fragment), then map fragments onto bands.
pub fn grid_oracle(region: &BoundingBox, tokens: &[TextToken]) -> OracleGrid {
    let widths: Vec<f64> = tokens.iter().map(|t| t.bbox.right() - t.bbox.left()).collect();
    let heights: Vec<f64> = tokens.iter().map(|t| t.bbox.bottom() - t.bbox.top()).collect();
    let median_w = median_ref(&widths);
    let median_h = median_ref(&heights);
    let col_threshold = (0.5 * median_w).max(4.0);
    let row_threshold = 0.4 * median_h;

    let col_estimate: Vec<(f64, f64)> = tokens
        .iter()
        .filter(|t| t.bbox.right() - t.bbox.left() <= 1.5 * median_w)
        .map(|t| (t.bbox.left(), t.bbox.right()))
        .collect();
    let row_estimate: Vec<(f64, f64)> = tokens
        .iter()
        .filter(|t| t.bbox.bottom() - t.bbox.top() <= 1.5 * median_h)
        .map(|t| (t.bbox.top(), t.bbox.bottom()))
        .collect();

    let col_bands = bands_from_strips(&col_estimate, (region.left(), region.right()), col_threshold);
    let row_bands = bands_from_strips(&row_estimate, (region.top(), region.bottom()), row_threshold);

    let mut cells: Vec<(u32, u32, u32, u32, String)> = tokens
        .iter()
        .map(|t| {
            let cols = bands_covered((t.bbox.left(), t.bbox.right()), &col_bands);
            let rows = bands_covered((t.bbox.top(), t.bbox.bottom()), &row_bands);
            (
                rows.0 as u32,
                (rows.1 - rows.0 + 1) as u32,
                cols.0 as u32,
                (cols.1 - cols.0 + 1) as u32,
                t.text.clone(),
            )
        })
        .collect();
    cells.sort();
    OracleGrid { n_rows: row_bands.len(), n_cols: col_bands.len(), cells }
}

fn median_ref(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Merge 1-D intervals whose gaps stay within `threshold` into groups; cut
/// at every wider strip. Band edges sit at strip midpoints and cover the
/// full extent.
fn bands_from_strips(intervals: &[(f64, f64)], extent: (f64, f64), threshold: f64) -> Vec<(f64, f64)> {
    if intervals.is_empty() {
        return vec![extent];
    }
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    let mut groups: Vec<(f64, f64)> = vec![sorted[0]];
    for &(s, e) in &sorted[1..] {
        let last = groups.last_mut().unwrap();
        if s - last.1 > threshold {
            groups.push((s, e));
        } else {
            last.1 = last.1.max(e);
            last.0 = last.0.min(s);
        }
    }
    let mut bands = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        let lo = if i == 0 { extent.0.min(g.0) } else { (groups[i - 1].1 + g.0) / 2.0 };
        let hi = if i + 1 == groups.len() { extent.1.max(g.1) } else { (g.1 + groups[i + 1].0) / 2.0 };
        bands.push((lo, hi));
    }
    bands
}

/// First and last band index an interval covers by at least half of the
/// smaller extent; falls back to the nearest band by midpoint.
fn bands_covered(interval: (f64, f64), bands: &[(f64, f64)]) -> (usize, usize) {
    let len = interval.1 - interval.0;
    let covered: Vec<usize> = bands
        .iter()
        .enumerate()
        .filter(|(_, band)| {
            let overlap = (interval.1.min(band.1) - interval.0.max(band.0)).max(0.0);
            let smaller = len.min(band.1 - band.0);
            if smaller <= 0.0 {
                let mid = (interval.0 + interval.1) / 2.0;
                band.0 <= mid && mid <= band.1
            } else {
                overlap >= 0.5 * smaller
            }
        })
        .map(|(i, _)| i)
        .collect();
    match (covered.first(), covered.last()) {
        (Some(&first), Some(&last)) => (first, last),
        _ => {
            let mid = (interval.0 + interval.1) / 2.0;
            let nearest = bands
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let da = (mid - (a.0 + a.1) / 2.0).abs();
                    let db = (mid - (b.0 + b.1) / 2.0).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
            (nearest, nearest)
        }
    }
}

/// Extract the impl's grid in the oracle's comparison shape.
pub fn grid_of(structure: &TableStructure) -> OracleGrid {
    let mut cells: Vec<(u32, u32, u32, u32, String)> = structure
        .cells
        .iter()
        .map(|c| (c.start_row, c.row_span, c.start_col, c.col_span, c.text.clone()))
        .collect();
    cells.sort();
    OracleGrid {
        n_rows: structure.n_rows as usize,
        n_cols: structure.n_cols as usize,
        cells,
    }
}

/// Span-expansion oracle for Markdown tables: materialize the full text
/// matrix, then build the expected pipe lines directly.
pub fn span_expansion_oracle(structure: &TableStructure, header_rows: usize) -> Vec<String> {
    let n_rows = structure.n_rows as usize;
    let n_cols = structure.n_cols as usize;
    let mut matrix = vec![vec![String::new(); n_cols]; n_rows];
    for cell in &structure.cells {
        for r in cell.start_row..cell.start_row + cell.row_span {
            for c in cell.start_col..cell.start_col + cell.col_span {
                matrix[r as usize][c as usize] =
                    cell.text.replace('\n', " ").replace('|', "\\|");
            }
        }
    }
    let mut lines = Vec::new();
    for (r, row) in matrix.iter().enumerate() {
        let mut line = String::from("|");
        for cell in row {
            line.push(' ');
            line.push_str(cell);
            line.push_str(" |");
        }
        lines.push(line);
        if r + 1 == header_rows {
            lines.push(format!("|{}", "---|".repeat(n_cols)));
        }
    }
    lines
}
