//! Assembly: aggregate per-page predictions into a typed document.
//!
//! Runs single-threaded after the page-parallel barrier: reading order per
//! page (recursive XY-cut), caption-to-figure matching, stopword-based
//! language identification, and title/author metadata labelling.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::layout::LayoutCluster;
use crate::model::{
    validate_document, DocItem, DocItemLabel, Document, DocumentMetadata, PageDescriptor,
    Provenance,
};
use crate::pipeline::{PageState, PipelineConfig};
use crate::tablestruct::TableStructure;

#[derive(Debug, thiserror::Error)]
pub enum AssembleError {
    /// Assembly produced a document breaking its own invariants; this is a
    /// bug signal, not an input problem.
    #[error("assembled document failed validation: {0}")]
    InvariantViolation(String),
}

/// Fraction of the page width a vertical whitespace gap must exceed to act
/// as a column separator in the XY-cut.
pub const COLUMN_GAP_FRAC: f64 = 0.03;

/// How far a caption searches for its figure or table, as a multiple of the
/// caption's own height.
const CAPTION_SEARCH_HEIGHTS: f64 = 1.5 * 10.0;

/// Reading order for the clusters of one page: a permutation of the cluster
/// ids. Recursive XY-cut — split at the widest full-extent whitespace gap;
/// vertical gaps (column separators) must be wider than 3% of the page width
/// and order left-before-right, horizontal gaps order top-before-bottom.
/// Page headers always come first, page footers always last.
pub fn infer_reading_order(
    clusters: &[LayoutCluster],
    page_width: f64,
    _page_height: f64,
) -> Vec<u32> {
    let mut headers: Vec<&LayoutCluster> = Vec::new();
    let mut footers: Vec<&LayoutCluster> = Vec::new();
    let mut body: Vec<&LayoutCluster> = Vec::new();
    for cluster in clusters {
        match cluster.proposal.label {
            DocItemLabel::PageHeader => headers.push(cluster),
            DocItemLabel::PageFooter => footers.push(cluster),
            _ => body.push(cluster),
        }
    }
    let by_position = |a: &&LayoutCluster, b: &&LayoutCluster| {
        a.proposal
            .bbox
            .top()
            .total_cmp(&b.proposal.bbox.top())
            .then(a.proposal.bbox.left().total_cmp(&b.proposal.bbox.left()))
            .then(a.cluster_id.cmp(&b.cluster_id))
    };
    headers.sort_by(by_position);
    footers.sort_by(by_position);

    let mut order: Vec<u32> = headers.iter().map(|c| c.cluster_id).collect();
    xy_cut(&body, COLUMN_GAP_FRAC * page_width, &mut order);
    order.extend(footers.iter().map(|c| c.cluster_id));
    order
}

fn xy_cut(group: &[&LayoutCluster], min_column_gap: f64, out: &mut Vec<u32>) {
    if group.len() <= 1 {
        out.extend(group.iter().map(|c| c.cluster_id));
        return;
    }
    let v_gap = widest_gap(group.iter().map(|c| (c.proposal.bbox.left(), c.proposal.bbox.right())))
        .filter(|g| g.width > min_column_gap);
    let h_gap = widest_gap(group.iter().map(|c| (c.proposal.bbox.top(), c.proposal.bbox.bottom())))
        .filter(|g| g.width > 0.0);

    // prefer the wider gap; on a tie the vertical (column) cut wins
    let split = match (v_gap, h_gap) {
        (Some(v), Some(h)) if h.width > v.width => Some((h, false)),
        (Some(v), _) => Some((v, true)),
        (None, Some(h)) => Some((h, false)),
        (None, None) => None,
    };
    match split {
        Some((gap, vertical)) => {
            let (mut first, mut second): (Vec<&LayoutCluster>, Vec<&LayoutCluster>) =
                group.iter().partition(|c| {
                    let b = &c.proposal.bbox;
                    let mid = if vertical { (b.left() + b.right()) / 2.0 } else { (b.top() + b.bottom()) / 2.0 };
                    mid < gap.start
                });
            // a gap is full-extent, so neither side can be empty; recurse
            debug_assert!(!first.is_empty() && !second.is_empty());
            first.sort_by_key(|c| c.cluster_id);
            second.sort_by_key(|c| c.cluster_id);
            xy_cut(&first, min_column_gap, out);
            xy_cut(&second, min_column_gap, out);
        }
        None => {
            let mut rest: Vec<&LayoutCluster> = group.to_vec();
            rest.sort_by(|a, b| {
                a.proposal
                    .bbox
                    .top()
                    .total_cmp(&b.proposal.bbox.top())
                    .then(a.proposal.bbox.left().total_cmp(&b.proposal.bbox.left()))
                    .then(a.cluster_id.cmp(&b.cluster_id))
            });
            out.extend(rest.iter().map(|c| c.cluster_id));
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Gap {
    start: f64,
    width: f64,
}

/// Widest interior gap of the union of 1-D intervals; the first such gap on
/// ties. `None` when the intervals leave no interior gap.
fn widest_gap(intervals: impl Iterator<Item = (f64, f64)>) -> Option<Gap> {
    let mut sorted: Vec<(f64, f64)> = intervals.collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut best: Option<Gap> = None;
    let mut hull_end = sorted.first()?.1;
    for &(start, end) in sorted.iter().skip(1) {
        if start > hull_end {
            let width = start - hull_end;
            if best.is_none_or(|b| width > b.width) {
                best = Some(Gap { start: hull_end, width });
            }
        }
        hull_end = hull_end.max(end);
    }
    best
}

/// Link each caption on the page to the nearest picture or table by bbox edge
/// distance, searching above first and then below, within 15 caption heights.
/// Returns `(caption index, target index)` links plus warnings for captions
/// that stay unmatched. Links never target another caption and are injective.
pub fn match_captions(items: &[DocItem], page_no: u32) -> (Vec<(usize, usize)>, Vec<String>) {
    let on_page = |item: &DocItem| item.prov.iter().any(|p| p.page_no == page_no);
    let mut links = Vec::new();
    let mut warnings = Vec::new();
    let mut taken: Vec<usize> = Vec::new();

    for (ci, caption) in items.iter().enumerate() {
        if caption.label != DocItemLabel::Caption || !on_page(caption) || caption.caption_of.is_some()
        {
            continue;
        }
        let cbox = caption.prov[0].bbox;
        let radius = CAPTION_SEARCH_HEIGHTS * cbox.height();
        let candidates = |above: bool| {
            items
                .iter()
                .enumerate()
                .filter(|(ti, target)| {
                    matches!(target.label, DocItemLabel::Picture | DocItemLabel::Table)
                        && on_page(target)
                        && !taken.contains(ti)
                })
                .filter_map(|(ti, target)| {
                    let tbox = target.prov[0].bbox;
                    let (_, t_cy) = tbox.center();
                    let (_, c_cy) = cbox.center();
                    let is_above = t_cy <= c_cy;
                    if is_above != above {
                        return None;
                    }
                    let distance = if above {
                        (cbox.top() - tbox.bottom()).max(0.0)
                    } else {
                        (tbox.top() - cbox.bottom()).max(0.0)
                    };
                    (distance <= radius).then_some((distance, ti))
                })
                .min_by(|(da, ia), (db, ib)| da.total_cmp(db).then(ia.cmp(ib)))
        };
        match candidates(true).or_else(|| candidates(false)) {
            Some((_, ti)) => {
                links.push((ci, ti));
                taken.push(ti);
            }
            None => warnings.push(format!(
                "page {page_no}: caption at item {ci} has no picture or table within reach"
            )),
        }
    }
    (links, warnings)
}

const SUPPORTED_LANGUAGES: [(&str, &str); 5] = [
    ("en", include_str!("stopwords/en.txt")),
    ("de", include_str!("stopwords/de.txt")),
    ("fr", include_str!("stopwords/fr.txt")),
    ("es", include_str!("stopwords/es.txt")),
    ("it", include_str!("stopwords/it.txt")),
];

fn stopword_sets() -> &'static Vec<(&'static str, std::collections::HashSet<&'static str>)> {
    static SETS: OnceLock<Vec<(&'static str, std::collections::HashSet<&'static str>)>> =
        OnceLock::new();
    SETS.get_or_init(|| {
        SUPPORTED_LANGUAGES
            .iter()
            .map(|(code, raw)| (*code, raw.lines().map(str::trim).filter(|w| !w.is_empty()).collect()))
            .collect()
    })
}

/// The ISO-639-1 codes this build can identify.
pub fn supported_languages() -> Vec<&'static str> {
    SUPPORTED_LANGUAGES.iter().map(|(code, _)| *code).collect()
}

/// Identify the sample's language by stopword profiling. Returns the
/// dominant language when its hit count is at least twice the runner-up and
/// at least 10 absolute; otherwise `None`.
pub fn detect_language(sample: &str) -> Option<String> {
    let lowered = sample.to_lowercase();
    let words = lowered.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty());
    let mut counts: Vec<(&str, usize)> =
        stopword_sets().iter().map(|(code, _)| (*code, 0usize)).collect();
    for word in words {
        for (i, (_, set)) in stopword_sets().iter().enumerate() {
            if set.contains(word) {
                counts[i].1 += 1;
            }
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let (best_code, best) = counts[0];
    let runner_up = counts[1].1;
    (best >= 10 && best >= 2 * runner_up).then(|| best_code.to_string())
}

/// Text sample for language identification: the first 5000 characters of the
/// document's text and list-item content in reading order.
pub fn language_sample(items: &[DocItem]) -> String {
    let mut sample = String::new();
    for item in items {
        if !matches!(item.label, DocItemLabel::Text | DocItemLabel::ListItem) {
            continue;
        }
        if !sample.is_empty() {
            sample.push(' ');
        }
        sample.push_str(&item.text);
        if sample.chars().count() >= 5000 {
            break;
        }
    }
    sample.chars().take(5000).collect()
}

/// Title and author labelling from the page-1 item sequence. The title is
/// the first `Title` item; authors are mined from the text items between the
/// title and the first section header or abstract marker.
pub fn extract_metadata(items: &[DocItem]) -> DocumentMetadata {
    let on_page_1 = |item: &DocItem| item.prov.iter().any(|p| p.page_no == 1);
    let title_idx = items
        .iter()
        .position(|item| item.label == DocItemLabel::Title && on_page_1(item));
    let Some(title_idx) = title_idx else {
        return DocumentMetadata::default();
    };
    let title = items[title_idx].text.clone();

    let mut authors = Vec::new();
    for item in items.iter().skip(title_idx + 1) {
        if !on_page_1(item) {
            break;
        }
        let lowered = item.text.trim().to_lowercase();
        if item.label == DocItemLabel::SectionHeader || lowered.starts_with("abstract") {
            break;
        }
        if item.label == DocItemLabel::Text {
            authors.extend(split_author_names(&item.text));
        }
    }
    DocumentMetadata { title: Some(title), authors, language: None }
}

/// Split an author line on commas and the word "and", keeping candidates
/// that look like names: two to four tokens, each starting uppercase.
fn split_author_names(text: &str) -> Vec<String> {
    text.replace(" and ", ",")
        .split(',')
        .map(str::trim)
        .filter(|candidate| {
            let tokens: Vec<&str> = candidate.split_whitespace().collect();
            (2..=4).contains(&tokens.len())
                && tokens
                    .iter()
                    .all(|t| t.chars().next().is_some_and(char::is_uppercase))
        })
        .map(|c| c.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect()
}

fn is_references_header(item: &DocItem) -> bool {
    item.label == DocItemLabel::SectionHeader
        && matches!(item.text.trim().to_lowercase().as_str(), "references" | "bibliography")
}

/// Aggregate processed pages into a [`Document`]: items in global reading
/// order (pages ascending, XY-cut within each page), table clusters carrying
/// their structures, captions linked, metadata and language filled. The
/// result always passes [`validate_document`].
pub fn assemble_document(
    name: &str,
    pages: &[PageState],
    _cfg: &PipelineConfig,
) -> Result<(Document, Vec<String>), AssembleError> {
    let mut warnings = Vec::new();
    let mut doc = Document::empty(name);

    let mut ordered: Vec<&PageState> = pages.iter().collect();
    ordered.sort_by_key(|p| p.parsed.page_no);

    for state in &ordered {
        let page = &state.parsed;
        doc.pages.push(PageDescriptor {
            page_no: page.page_no,
            width: page.width,
            height: page.height,
        });

        let Some(layout) = &state.predictions.layout else {
            if state.failures.is_empty() {
                warnings.push(format!("page {}: no layout predictions", page.page_no));
            }
            continue;
        };
        let empty = BTreeMap::new();
        let tables: &BTreeMap<u32, TableStructure> =
            state.predictions.tables.as_ref().map(|t| &t.by_cluster).unwrap_or(&empty);

        let by_id: BTreeMap<u32, &LayoutCluster> =
            layout.clusters.iter().map(|c| (c.cluster_id, c)).collect();
        let order = infer_reading_order(&layout.clusters, page.width, page.height);

        let page_start = doc.items.len();
        for cluster_id in order {
            let cluster = by_id[&cluster_id];
            let label = cluster.proposal.label;
            let text = cluster
                .token_ids
                .iter()
                .filter_map(|id| page.token(*id))
                .map(|t| t.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let prov = vec![Provenance {
                page_no: page.page_no,
                bbox: cluster.proposal.bbox,
                token_ids: cluster.token_ids.clone(),
            }];
            let item = match label {
                // text inside figures is dropped; the caption keeps the content
                DocItemLabel::Picture => DocItem::new(label, "", prov),
                DocItemLabel::Table => match tables.get(&cluster_id) {
                    Some(structure) => {
                        let mut item = DocItem::new(label, "", prov);
                        item.table = Some(structure.clone());
                        item
                    }
                    // table structure disabled or unavailable: degrade to text
                    None => DocItem::new(DocItemLabel::Text, text, prov),
                },
                _ => DocItem::new(label, text, prov),
            };
            doc.items.push(item);
        }

        let (links, caption_warnings) = match_captions(&doc.items[page_start..], page.page_no);
        for (caption, target) in links {
            doc.items[page_start + caption].caption_of = Some(page_start + target);
        }
        warnings.extend(caption_warnings);
    }

    // references: tag list/text items following a references section header
    let mut in_references = false;
    for item in &mut doc.items {
        if item.label == DocItemLabel::SectionHeader {
            in_references = is_references_header(item);
        } else if in_references
            && matches!(item.label, DocItemLabel::Text | DocItemLabel::ListItem)
        {
            item.reference_entry = true;
        }
    }

    doc.metadata = extract_metadata(&doc.items);
    doc.metadata.language = detect_language(&language_sample(&doc.items));

    let report = validate_document(&doc);
    if !report.is_empty() {
        let joined = report.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        return Err(AssembleError::InvariantViolation(joined));
    }
    Ok((doc, warnings))
}
