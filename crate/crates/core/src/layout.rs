//! Layout-analysis stage: propose labelled regions for a page from token
//! geometry, suppress overlapping proposals, and intersect the survivors
//! with the text tokens to form complete units.
//!
//! The detector here is a deterministic geometric heuristic living behind
//! the same contract a learned detector would use: tokens are merged into
//! visual lines, lines into blocks, and blocks are labelled by position,
//! font size, leading glyphs and internal gap structure.

use serde::{Deserialize, Serialize};

use crate::model::{BoundingBox, DocItemLabel, ParsedPage, TextToken};

/// A candidate labelled region with a confidence score in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutProposal {
    pub bbox: BoundingBox,
    pub label: DocItemLabel,
    pub confidence: f64,
}

impl LayoutProposal {
    pub fn new(bbox: BoundingBox, label: DocItemLabel, confidence: f64) -> Self {
        LayoutProposal { bbox, label, confidence: confidence.clamp(0.0, 1.0) }
    }
}

/// A suppressed proposal together with the tokens assigned to it.
/// `cluster_id` is unique per page; `token_ids` are reading-ordered within
/// the cluster (line top, then left).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutCluster {
    pub proposal: LayoutProposal,
    pub token_ids: Vec<u32>,
    pub cluster_id: u32,
}

/// All heuristic thresholds in one record so a different detector can
/// replace the stage without touching post-processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    /// Blocks entirely within this top fraction of the page become page headers.
    pub header_band_frac: f64,
    /// Blocks entirely below this fraction of the page become page footers.
    pub footer_band_frac: f64,
    /// Tokens on one line must overlap vertically by this fraction of the
    /// shorter token height.
    pub line_overlap_frac: f64,
    /// Lines merge into a block when their vertical gap is at most this
    /// factor times the page median line height.
    pub block_gap_factor: f64,
    /// ... and their x-intervals overlap by this fraction of the narrower line.
    pub block_h_overlap_frac: f64,
    /// Font-size ratio over the page median that marks a section header.
    pub section_font_ratio: f64,
    /// Maximum line count for a section header block.
    pub section_max_lines: usize,
    /// A block is a table when at least this many aligned gap columns persist.
    pub table_min_aligned_gaps: usize,
    /// ... over at least this many lines.
    pub table_min_lines: usize,
    /// IoU above which a lower-priority proposal is suppressed.
    pub nms_iou: f64,
    /// Containment fraction above which a proposal nested in a kept proposal
    /// of a different label is suppressed.
    pub nms_containment: f64,
    /// Minimum fraction of a token inside a proposal for assignment.
    pub assign_min_overlap: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            header_band_frac: 0.075,
            footer_band_frac: 0.925,
            line_overlap_frac: 0.5,
            block_gap_factor: 1.5,
            block_h_overlap_frac: 0.30,
            section_font_ratio: 1.15,
            section_max_lines: 2,
            table_min_aligned_gaps: 2,
            table_min_lines: 2,
            nms_iou: 0.5,
            nms_containment: 0.9,
            assign_min_overlap: 0.5,
        }
    }
}

/// A visual line of tokens (indices into the caller's token slice).
#[derive(Debug, Clone)]
pub(crate) struct Line {
    pub bbox: BoundingBox,
    pub token_indices: Vec<usize>,
}

/// A block of lines.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub bbox: BoundingBox,
    pub lines: Vec<Line>,
}

impl Block {
    fn token_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.lines.iter().flat_map(|l| l.token_indices.iter().copied())
    }
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 })
}

/// Decide whether two boxes share a visual line: their y-intervals overlap
/// by at least `frac` of the shorter height. Zero-height boxes count as on
/// the line when they sit within the other's span.
fn same_line(a: &BoundingBox, b: &BoundingBox, frac: f64) -> bool {
    let min_h = a.height().min(b.height());
    if min_h <= 0.0 {
        return a.top().max(b.top()) <= a.bottom().min(b.bottom());
    }
    a.v_overlap(b) >= frac * min_h
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let r = self.find(self.0[x]);
            self.0[x] = r;
        }
        self.0[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[rb.max(ra)] = rb.min(ra);
        }
    }
}

/// Group tokens into visual lines by pairwise vertical overlap, chaining
/// transitively. Lines come out sorted by (top, left); tokens within a line
/// by (left, top, id).
pub(crate) fn group_lines(tokens: &[TextToken], cfg: &LayoutConfig) -> Vec<Line> {
    let n = tokens.len();
    let mut dsu = Dsu::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if same_line(&tokens[i].bbox, &tokens[j].bbox, cfg.line_overlap_frac) {
                dsu.union(i, j);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = dsu.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut lines: Vec<Line> = groups
        .into_values()
        .map(|mut idx| {
            idx.sort_by(|&a, &b| {
                let (ta, tb) = (&tokens[a], &tokens[b]);
                ta.bbox
                    .left()
                    .total_cmp(&tb.bbox.left())
                    .then(ta.bbox.top().total_cmp(&tb.bbox.top()))
                    .then(ta.id.cmp(&tb.id))
            });
            let bbox = idx.iter().skip(1).fold(tokens[idx[0]].bbox, |acc, &i| acc.union(&tokens[i].bbox));
            Line { bbox, token_indices: idx }
        })
        .collect();
    lines.sort_by(|a, b| {
        a.bbox
            .top()
            .total_cmp(&b.bbox.top())
            .then(a.bbox.left().total_cmp(&b.bbox.left()))
    });
    lines
}

/// Merge lines into blocks: vertical gap at most `block_gap_factor` times the
/// median line height, and x-intervals overlapping by at least
/// `block_h_overlap_frac` of the narrower line.
pub(crate) fn lines_to_blocks(lines: Vec<Line>, cfg: &LayoutConfig) -> Vec<Block> {
    let mut heights: Vec<f64> = lines.iter().map(|l| l.bbox.height()).collect();
    let median_height = median(&mut heights).unwrap_or(0.0);
    let max_gap = cfg.block_gap_factor * median_height;

    let n = lines.len();
    let mut dsu = Dsu::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&lines[i].bbox, &lines[j].bbox);
            if a.v_gap(b) > max_gap {
                continue;
            }
            let min_w = a.width().min(b.width());
            let covered = if min_w <= 0.0 {
                a.left().max(b.left()) <= a.right().min(b.right())
            } else {
                a.h_overlap(b) >= cfg.block_h_overlap_frac * min_w
            };
            if covered {
                dsu.union(i, j);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = dsu.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut blocks: Vec<Block> = groups
        .into_values()
        .map(|idx| {
            let mut ls: Vec<Line> = idx.iter().map(|&i| lines[i].clone()).collect();
            ls.sort_by(|a, b| {
                a.bbox
                    .top()
                    .total_cmp(&b.bbox.top())
                    .then(a.bbox.left().total_cmp(&b.bbox.left()))
            });
            let bbox = ls.iter().skip(1).fold(ls[0].bbox, |acc, l| acc.union(&l.bbox));
            Block { bbox, lines: ls }
        })
        .collect();
    blocks.sort_by(|a, b| {
        a.bbox
            .top()
            .total_cmp(&b.bbox.top())
            .then(a.bbox.left().total_cmp(&b.bbox.left()))
    });
    blocks
}

fn approx_char_width(token: &TextToken) -> f64 {
    let chars = token.text.chars().count().max(1);
    token.bbox.width() / chars as f64
}

/// Does the leading token of the block start with a bullet or an enumeration
/// glyph such as `•`, `-`, `1.` or `(3)`?
fn has_list_marker(text: &str) -> bool {
    let t = text.trim_start();
    let mut chars = t.chars();
    let Some(first) = chars.next() else { return false };
    if matches!(first, '•' | '◦' | '▪' | '‣' | '·' | '–' | '—' | '*') {
        return true;
    }
    if first == '-' {
        // a lone dash or "- item"; avoid matching negative numbers
        return matches!(chars.next(), None | Some(' '));
    }
    // enumerations: "1." "12)" "(3)" "a." "iv." but not decimals like "9.4"
    let body = if first == '(' { chars.as_str() } else { t };
    let digits: String = body.chars().take_while(|c| c.is_ascii_alphanumeric()).collect();
    if digits.is_empty() || digits.len() > 3 {
        return false;
    }
    let mut rest = body[digits.len()..].chars();
    if !matches!(rest.next(), Some('.') | Some(')')) {
        return false;
    }
    matches!(rest.next(), None | Some(' '))
}

/// Count the aligned internal gap columns of a block: x-intervals wider than
/// the median character width that appear between consecutive tokens on at
/// least two distinct lines.
fn aligned_gap_columns(block: &Block, tokens: &[TextToken]) -> usize {
    let mut widths: Vec<f64> =
        block.token_indices().map(|i| approx_char_width(&tokens[i])).collect();
    let Some(char_w) = median(&mut widths) else { return 0 };

    // (x, +1/-1) events over all per-line gap intervals wider than char_w
    let mut events: Vec<(f64, i32)> = Vec::new();
    for line in &block.lines {
        for pair in line.token_indices.windows(2) {
            let prev = &tokens[pair[0]].bbox;
            let next = &tokens[pair[1]].bbox;
            let start = prev.right();
            let end = next.left();
            if end - start > char_w {
                events.push((start, 1));
                events.push((end, -1));
            }
        }
    }
    if events.is_empty() {
        return 0;
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut coverage = 0;
    let mut regions = 0;
    let mut in_region = false;
    for (_, delta) in events {
        coverage += delta;
        if coverage >= 2 && !in_region {
            regions += 1;
            in_region = true;
        } else if coverage < 2 {
            in_region = false;
        }
    }
    regions
}

/// Median font size of the block's tokens that carry one.
fn block_font(block: &Block, tokens: &[TextToken]) -> Option<f64> {
    let mut fonts: Vec<f64> = block.token_indices().filter_map(|i| tokens[i].font_size).collect();
    median(&mut fonts)
}

/// Run the geometric detector over a page: deterministic labelled proposals,
/// confidence 1.0. Pages without tokens produce no proposals.
pub fn detect_layout(page: &ParsedPage, cfg: &LayoutConfig) -> Vec<LayoutProposal> {
    let tokens = &page.tokens;
    if tokens.is_empty() {
        return Vec::new();
    }
    let lines = group_lines(tokens, cfg);
    let blocks = lines_to_blocks(lines, cfg);

    let mut page_fonts: Vec<f64> = tokens.iter().filter_map(|t| t.font_size).collect();
    let page_median_font = median(&mut page_fonts);

    let header_limit = cfg.header_band_frac * page.height;
    let footer_limit = cfg.footer_band_frac * page.height;
    let in_band: Vec<bool> = blocks
        .iter()
        .map(|b| b.bbox.bottom() <= header_limit || b.bbox.top() >= footer_limit)
        .collect();

    // the (top,left)-first block holding the page-max font, bands excluded
    let title_block = if page.page_no == 1 {
        blocks
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_band[*i])
            .filter_map(|(i, b)| block_font(b, tokens).map(|f| (i, f)))
            .max_by(|(ia, fa), (ib, fb)| fa.total_cmp(fb).then(ib.cmp(ia)))
            .map(|(i, _)| i)
    } else {
        None
    };

    blocks
        .iter()
        .enumerate()
        .map(|(i, block)| {
            let label = if block.bbox.bottom() <= header_limit {
                DocItemLabel::PageHeader
            } else if block.bbox.top() >= footer_limit {
                DocItemLabel::PageFooter
            } else if title_block == Some(i) {
                DocItemLabel::Title
            } else if matches!(
                (block_font(block, tokens), page_median_font),
                (Some(bf), Some(pf)) if bf >= cfg.section_font_ratio * pf
            ) && block.lines.len() <= cfg.section_max_lines
            {
                DocItemLabel::SectionHeader
            } else if block
                .lines
                .first()
                .and_then(|l| l.token_indices.first())
                .is_some_and(|&t| has_list_marker(&tokens[t].text))
            {
                DocItemLabel::ListItem
            } else if block.lines.len() >= cfg.table_min_lines
                && aligned_gap_columns(block, tokens) >= cfg.table_min_aligned_gaps
            {
                DocItemLabel::Table
            } else {
                DocItemLabel::Text
            };
            LayoutProposal::new(block.bbox, label, 1.0)
        })
        .collect()
}

/// Priority order for suppression: confidence descending, area descending,
/// then top-left lexicographic. The trailing components make the order total.
fn nms_order(a: &LayoutProposal, b: &LayoutProposal) -> std::cmp::Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(b.bbox.area().total_cmp(&a.bbox.area()))
        .then(a.bbox.top().total_cmp(&b.bbox.top()))
        .then(a.bbox.left().total_cmp(&b.bbox.left()))
        .then(a.bbox.right().total_cmp(&b.bbox.right()))
        .then(a.bbox.bottom().total_cmp(&b.bbox.bottom()))
        .then(a.label.cmp(&b.label))
}

/// Greedy non-maximum suppression. A proposal survives when its IoU with
/// every already-kept proposal stays below `nms_iou` and it is not nearly
/// contained (`nms_containment`) in a kept proposal of a different label.
/// Output is in priority order; kept proposals are unchanged.
pub fn suppress_overlaps(proposals: &[LayoutProposal], cfg: &LayoutConfig) -> Vec<LayoutProposal> {
    let mut sorted: Vec<&LayoutProposal> = proposals.iter().collect();
    sorted.sort_by(|a, b| nms_order(a, b));
    let mut kept: Vec<LayoutProposal> = Vec::new();
    for cand in sorted {
        let survives = kept.iter().all(|k| {
            cand.bbox.iou(&k.bbox) < cfg.nms_iou
                && !(cand.label != k.label
                    && cand.bbox.overlap_frac(&k.bbox) >= cfg.nms_containment)
        });
        if survives {
            kept.push(cand.clone());
        }
    }
    kept
}

/// Assign every token to the proposal that covers the largest fraction of it
/// (at least `assign_min_overlap`), ties broken by smaller proposal area and
/// then lower cluster id. Tokens no proposal claims are grouped into
/// synthetic `Text` clusters, one per connected line group. The result is a
/// partition: each input token appears in exactly one cluster.
pub fn assign_tokens(
    proposals: &[LayoutProposal],
    tokens: &[TextToken],
    cfg: &LayoutConfig,
) -> Vec<LayoutCluster> {
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); proposals.len()];
    let mut orphans: Vec<usize> = Vec::new();
    for (ti, token) in tokens.iter().enumerate() {
        let mut best: Option<(usize, f64, f64)> = None; // (proposal, frac, area)
        for (pi, prop) in proposals.iter().enumerate() {
            let frac = token.bbox.overlap_frac(&prop.bbox);
            if frac < cfg.assign_min_overlap {
                continue;
            }
            let area = prop.bbox.area();
            let better = match best {
                None => true,
                Some((_, bf, ba)) => frac > bf || (frac == bf && area < ba),
            };
            if better {
                best = Some((pi, frac, area));
            }
        }
        match best {
            Some((pi, _, _)) => assigned[pi].push(ti),
            None => orphans.push(ti),
        }
    }

    let mut clusters: Vec<LayoutCluster> = proposals
        .iter()
        .enumerate()
        .map(|(pi, prop)| LayoutCluster {
            proposal: prop.clone(),
            token_ids: order_within_cluster(&assigned[pi], tokens, cfg),
            cluster_id: pi as u32,
        })
        .collect();

    // orphan tokens fall back to synthetic text clusters, one per line group
    let orphan_tokens: Vec<TextToken> = orphans.iter().map(|&i| tokens[i].clone()).collect();
    let lines = group_lines(&orphan_tokens, cfg);
    for block in lines_to_blocks(lines, cfg) {
        let indices: Vec<usize> = block.token_indices().collect();
        let token_ids = order_within_cluster(&indices, &orphan_tokens, cfg);
        let cluster_id = clusters.len() as u32;
        clusters.push(LayoutCluster {
            proposal: LayoutProposal::new(block.bbox, DocItemLabel::Text, 1.0),
            token_ids,
            cluster_id,
        });
    }
    clusters
}

/// Reading order within one cluster: group the tokens into lines, order
/// lines by top, tokens within a line by left.
fn order_within_cluster(indices: &[usize], tokens: &[TextToken], cfg: &LayoutConfig) -> Vec<u32> {
    let subset: Vec<TextToken> = indices.iter().map(|&i| tokens[i].clone()).collect();
    group_lines(&subset, cfg)
        .into_iter()
        .flat_map(|line| line.token_indices.into_iter().map(|i| subset[i].id))
        .collect()
}
