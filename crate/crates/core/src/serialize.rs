//! Serialization of assembled documents: a versioned, canonical JSON schema
//! (byte-deterministic, fixed key order) and a Markdown rendering that
//! suppresses page furniture, repeats spanning table cells per covered
//! column, and keeps tables at their reading-order position.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{validate_document, DocItemLabel, Document};
use crate::tablestruct::{CellRole, TableStructure};

/// Identifier of the document JSON schema.
pub const DOCUMENT_SCHEMA_TAG: &str = "docforge-doc";
/// Document schema version this build reads and writes.
pub const DOCUMENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SerializeError {
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("unrecognized document schema '{0}' (expected '{DOCUMENT_SCHEMA_TAG}')")]
    UnrecognizedSchema(String),
    #[error("unsupported document schema version {0} (supported: {DOCUMENT_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
}

#[derive(Serialize, Deserialize)]
struct JsonDocument {
    schema_tag: String,
    version: u32,
    #[serde(flatten)]
    document: Document,
}

/// Serialize a document to canonical JSON: schema tag and version first,
/// keys in fixed schema order, byte-identical across runs for equal inputs.
pub fn to_json(doc: &Document) -> Result<String, SerializeError> {
    let report = validate_document(doc);
    if !report.is_empty() {
        let joined = report.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        return Err(SerializeError::InvalidDocument(joined));
    }
    let wrapper = JsonDocument {
        schema_tag: DOCUMENT_SCHEMA_TAG.to_string(),
        version: DOCUMENT_SCHEMA_VERSION,
        document: doc.clone(),
    };
    Ok(serde_json::to_string_pretty(&wrapper).expect("documents always serialize"))
}

/// Parse a document from its JSON form, rejecting unknown schemas and
/// versions, and validating the result.
pub fn from_json(text: &str) -> Result<Document, SerializeError> {
    let wrapper: JsonDocument = serde_json::from_str(text).map_err(|e| SerializeError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        reason: e.to_string(),
    })?;
    if wrapper.schema_tag != DOCUMENT_SCHEMA_TAG {
        return Err(SerializeError::UnrecognizedSchema(wrapper.schema_tag));
    }
    if wrapper.version != DOCUMENT_SCHEMA_VERSION {
        return Err(SerializeError::UnsupportedVersion(wrapper.version));
    }
    let report = validate_document(&wrapper.document);
    if !report.is_empty() {
        let joined = report.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        return Err(SerializeError::InvalidDocument(joined));
    }
    Ok(wrapper.document)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in text.lines().enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

/// Rendering policy for Markdown output.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkdownPolicy {
    /// Labels that produce no output at all (page furniture).
    pub suppress_labels: BTreeSet<DocItemLabel>,
    /// Heading prefixes per label.
    pub heading_map: BTreeMap<DocItemLabel, String>,
    pub list_bullet: String,
    pub picture_placeholder: String,
}

impl Default for MarkdownPolicy {
    fn default() -> Self {
        let mut heading_map = BTreeMap::new();
        heading_map.insert(DocItemLabel::Title, "##".to_string());
        heading_map.insert(DocItemLabel::SectionHeader, "###".to_string());
        MarkdownPolicy {
            suppress_labels: [DocItemLabel::PageHeader, DocItemLabel::PageFooter].into(),
            heading_map,
            list_bullet: "- ".to_string(),
            picture_placeholder: "<!-- image -->".to_string(),
        }
    }
}

impl MarkdownPolicy {
    /// Heading prefixes must be 1 to 6 `#` characters.
    pub fn validate(&self) -> Result<(), SerializeError> {
        for (label, prefix) in &self.heading_map {
            let ok = !prefix.is_empty()
                && prefix.len() <= 6
                && prefix.chars().all(|c| c == '#');
            if !ok {
                return Err(SerializeError::InvalidDocument(format!(
                    "invalid heading prefix '{prefix}' for {label}"
                )));
            }
        }
        Ok(())
    }
}

/// Render a document as Markdown. Items appear in document order; suppressed
/// labels are skipped entirely; authors follow the first title on their own
/// line; captions render under the picture or table they are linked to.
pub fn to_markdown(doc: &Document, policy: &MarkdownPolicy) -> String {
    // captions linked to a target render with the target, not in place
    let linked_caption_of: BTreeMap<usize, usize> = doc
        .items
        .iter()
        .enumerate()
        .filter_map(|(ci, item)| item.caption_of.map(|target| (target, ci)))
        .collect();
    let skip: BTreeSet<usize> = linked_caption_of.values().copied().collect();

    let mut blocks: Vec<String> = Vec::new();
    let mut title_rendered = false;
    for (idx, item) in doc.items.iter().enumerate() {
        if policy.suppress_labels.contains(&item.label) || skip.contains(&idx) {
            continue;
        }
        let caption_text = linked_caption_of
            .get(&idx)
            .map(|&ci| doc.items[ci].text.clone())
            .filter(|t| !t.is_empty());
        match item.label {
            DocItemLabel::Title | DocItemLabel::SectionHeader => {
                let prefix = policy
                    .heading_map
                    .get(&item.label)
                    .map(String::as_str)
                    .unwrap_or("##");
                blocks.push(format!("{prefix} {}", item.text));
                if item.label == DocItemLabel::Title
                    && !title_rendered
                    && !doc.metadata.authors.is_empty()
                {
                    blocks.push(doc.metadata.authors.join(", "));
                }
                title_rendered |= item.label == DocItemLabel::Title;
            }
            DocItemLabel::ListItem => {
                blocks.push(format!("{}{}", policy.list_bullet, strip_list_marker(&item.text)))
            }
            DocItemLabel::Formula | DocItemLabel::Code => {
                blocks.push(format!("```\n{}\n```", item.text))
            }
            DocItemLabel::Picture => {
                blocks.push(policy.picture_placeholder.clone());
                if let Some(caption) = caption_text {
                    blocks.push(caption);
                }
            }
            DocItemLabel::Table => {
                if let Some(table) = &item.table {
                    blocks.push(table_to_markdown(table));
                }
                if let Some(caption) = caption_text {
                    blocks.push(caption);
                }
            }
            DocItemLabel::Text | DocItemLabel::Caption | DocItemLabel::Footnote => {
                if !item.text.is_empty() {
                    blocks.push(item.text.clone());
                }
            }
            DocItemLabel::PageHeader | DocItemLabel::PageFooter => {}
        }
    }
    if blocks.is_empty() {
        String::new()
    } else {
        blocks.join("\n\n") + "\n"
    }
}

/// Drop a leading bullet glyph the detector used for classification, so the
/// rendered list item does not double its marker.
fn strip_list_marker(text: &str) -> &str {
    let t = text.trim_start();
    for marker in ['•', '◦', '▪', '‣', '·'] {
        if let Some(rest) = t.strip_prefix(marker) {
            return rest.trim_start();
        }
    }
    t
}

/// Render a table as a Markdown pipe table. Every spanning cell's text is
/// repeated once per covered row and column, so each data point stays
/// traceable to its headings by grid coordinates alone. Uncovered positions
/// render as empty cells. Header rows (leading rows whose cells are all
/// column headers) sit above the single separator row.
pub fn table_to_markdown(table: &TableStructure) -> String {
    let n_rows = table.n_rows as usize;
    let n_cols = table.n_cols as usize;
    if n_rows == 0 || n_cols == 0 {
        return String::new();
    }
    let mut matrix = vec![vec![String::new(); n_cols]; n_rows];
    for cell in &table.cells {
        let text = escape_cell(&cell.text);
        for r in cell.start_row..cell.start_row + cell.row_span {
            for c in cell.start_col..cell.start_col + cell.col_span {
                if let Some(slot) = matrix.get_mut(r as usize).and_then(|row| row.get_mut(c as usize))
                {
                    *slot = text.clone();
                }
            }
        }
    }

    let header_rows = header_row_count(table).max(1).min(n_rows);
    let mut lines = Vec::with_capacity(n_rows + 1);
    for (r, row) in matrix.iter().enumerate() {
        lines.push(format!("| {} |", row.join(" | ")));
        if r + 1 == header_rows {
            lines.push(format!("|{}", "---|".repeat(n_cols)));
        }
    }
    lines.join("\n")
}

/// Number of leading rows in which every covering cell is a column header.
/// A row without any covering cell ends the prefix.
fn header_row_count(table: &TableStructure) -> usize {
    let mut count = 0;
    for row in 0..table.n_rows {
        let mut covering = table
            .cells
            .iter()
            .filter(|c| c.start_row <= row && row < c.start_row + c.row_span)
            .peekable();
        if covering.peek().is_some() && covering.all(|c| c.role == CellRole::ColumnHeader) {
            count += 1;
        } else {
            break;
        }
    }
    count
}

fn escape_cell(text: &str) -> String {
    text.replace('\n', " ").replace('|', "\\|")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, DocItem, PageDescriptor, Provenance};
    use crate::tablestruct::TableCell;

    fn prov(page: u32) -> Vec<Provenance> {
        vec![Provenance {
            page_no: page,
            bbox: BoundingBox::new(10.0, 10.0, 100.0, 30.0).unwrap(),
            token_ids: vec![],
        }]
    }

    fn one_page_doc(items: Vec<DocItem>) -> Document {
        Document {
            name: "doc".into(),
            metadata: Default::default(),
            pages: vec![PageDescriptor { page_no: 1, width: 612.0, height: 792.0 }],
            items,
        }
    }

    fn cell(r: u32, c: u32, rs: u32, cs: u32, role: CellRole, text: &str) -> TableCell {
        TableCell {
            start_row: r,
            start_col: c,
            row_span: rs,
            col_span: cs,
            role,
            text: text.into(),
            source_token_ids: vec![],
            region: None,
        }
    }

    #[test]
    fn empty_document_has_fixed_minimal_json() {
        let json = to_json(&Document::empty("empty")).unwrap();
        assert!(json.starts_with("{\n  \"schema_tag\": \"docforge-doc\",\n  \"version\": 1,"));
        assert_eq!(json, to_json(&Document::empty("empty")).unwrap());
        let back = from_json(&json).unwrap();
        assert_eq!(back, Document::empty("empty"));
    }

    #[test]
    fn json_round_trip_preserves_a_rich_document() {
        let mut table_item = DocItem::new(DocItemLabel::Table, "", prov(1));
        table_item.table = Some(TableStructure {
            n_rows: 1,
            n_cols: 3,
            cells: vec![cell(0, 0, 1, 3, CellRole::ColumnHeader, "wide")],
        });
        let mut caption = DocItem::new(DocItemLabel::Caption, "Table 1: things", prov(1));
        caption.caption_of = Some(0);
        let mut doc = one_page_doc(vec![table_item, caption]);
        doc.metadata.title = Some("A Title".into());
        doc.metadata.authors = vec!["Jane Doe".into()];
        doc.metadata.language = Some("en".into());

        let json = to_json(&doc).unwrap();
        assert_eq!(from_json(&json).unwrap(), doc);
        // span fields appear in the serialized cell
        assert!(json.contains("\"col_span\": 3"));
    }

    #[test]
    fn from_json_rejects_wrong_schema_and_version() {
        let json = to_json(&Document::empty("x")).unwrap();
        let wrong_tag = json.replace("docforge-doc", "somebody-else");
        assert!(matches!(from_json(&wrong_tag), Err(SerializeError::UnrecognizedSchema(_))));
        let wrong_version = json.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(from_json(&wrong_version), Err(SerializeError::UnsupportedVersion(9))));
    }

    #[test]
    fn from_json_reports_parse_offset() {
        let json = to_json(&Document::empty("x")).unwrap();
        let truncated = &json[..json.len() - 2];
        match from_json(truncated) {
            Err(SerializeError::Parse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn to_json_refuses_invalid_documents() {
        let doc = one_page_doc(vec![DocItem::new(DocItemLabel::Table, "", prov(1))]);
        assert!(matches!(to_json(&doc), Err(SerializeError::InvalidDocument(_))));
    }

    #[test]
    fn title_renders_with_authors_beneath() {
        let mut doc = one_page_doc(vec![DocItem::new(
            DocItemLabel::Title,
            "DocLayNet: A Large Human-Annotated Dataset for Document-Layout Analysis",
            prov(1),
        )]);
        doc.metadata.authors = vec!["Jane Doe".into(), "John Q. Smith".into()];
        let md = to_markdown(&doc, &MarkdownPolicy::default());
        assert!(md.starts_with(
            "## DocLayNet: A Large Human-Annotated Dataset for Document-Layout Analysis\n\nJane Doe, John Q. Smith\n"
        ));
    }

    #[test]
    fn suppressed_labels_produce_no_output() {
        let doc = one_page_doc(vec![DocItem::new(DocItemLabel::PageHeader, "running head", prov(1))]);
        assert_eq!(to_markdown(&doc, &MarkdownPolicy::default()), "");
        let doc = one_page_doc(vec![DocItem::new(DocItemLabel::PageFooter, "7", prov(1))]);
        assert_eq!(to_markdown(&doc, &MarkdownPolicy::default()), "");
    }

    #[test]
    fn table_renders_between_paragraph_halves() {
        let mut table_item = DocItem::new(DocItemLabel::Table, "", prov(1));
        table_item.table = Some(TableStructure {
            n_rows: 1,
            n_cols: 1,
            cells: vec![cell(0, 0, 1, 1, CellRole::ColumnHeader, "x")],
        });
        let doc = one_page_doc(vec![
            DocItem::new(DocItemLabel::Text, "paragraph part one", prov(1)),
            table_item,
            DocItem::new(DocItemLabel::Text, "paragraph part two", prov(1)),
        ]);
        let md = to_markdown(&doc, &MarkdownPolicy::default());
        assert_eq!(md, "paragraph part one\n\n| x |\n|---|\n\nparagraph part two\n");
    }

    #[test]
    fn picture_renders_placeholder_and_linked_caption() {
        let picture = DocItem::new(DocItemLabel::Picture, "", prov(1));
        let mut caption = DocItem::new(DocItemLabel::Caption, "Figure 1: a sketch", prov(1));
        caption.caption_of = Some(0);
        let doc = one_page_doc(vec![picture, caption]);
        let md = to_markdown(&doc, &MarkdownPolicy::default());
        assert_eq!(md, "<!-- image -->\n\nFigure 1: a sketch\n");
    }

    #[test]
    fn unlinked_caption_renders_in_place() {
        let doc = one_page_doc(vec![DocItem::new(DocItemLabel::Caption, "orphan caption", prov(1))]);
        assert_eq!(to_markdown(&doc, &MarkdownPolicy::default()), "orphan caption\n");
    }

    #[test]
    fn code_and_formula_render_fenced() {
        let doc = one_page_doc(vec![DocItem::new(DocItemLabel::Code, "let x = 1;", prov(1))]);
        assert_eq!(to_markdown(&doc, &MarkdownPolicy::default()), "```\nlet x = 1;\n```\n");
    }

    #[test]
    fn list_items_render_with_bullets() {
        let doc = one_page_doc(vec![DocItem::new(DocItemLabel::ListItem, "• first point", prov(1))]);
        assert_eq!(to_markdown(&doc, &MarkdownPolicy::default()), "- first point\n");
    }

    #[test]
    fn minimal_table_renders_exactly() {
        let table = TableStructure {
            n_rows: 1,
            n_cols: 1,
            cells: vec![cell(0, 0, 1, 1, CellRole::ColumnHeader, "x")],
        };
        assert_eq!(table_to_markdown(&table), "| x |\n|---|");
    }

    #[test]
    fn spanning_header_repeats_per_covered_column() {
        let table = TableStructure {
            n_rows: 2,
            n_cols: 3,
            cells: vec![
                cell(0, 0, 1, 3, CellRole::ColumnHeader, "triple inter-annotator mAP@0.5-0.95 (%)"),
                cell(1, 0, 1, 1, CellRole::Body, "a"),
                cell(1, 1, 1, 1, CellRole::Body, "b"),
                cell(1, 2, 1, 1, CellRole::Body, "c"),
            ],
        };
        let md = table_to_markdown(&table);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "| triple inter-annotator mAP@0.5-0.95 (%) | triple inter-annotator mAP@0.5-0.95 (%) | triple inter-annotator mAP@0.5-0.95 (%) |"
        );
        assert_eq!(lines[1], "|---|---|---|");
        assert_eq!(lines[2], "| a | b | c |");
    }

    #[test]
    fn row_span_repeats_per_covered_row() {
        let table = TableStructure {
            n_rows: 2,
            n_cols: 2,
            cells: vec![
                cell(0, 0, 2, 1, CellRole::Body, "tall"),
                cell(0, 1, 1, 1, CellRole::Body, "r0"),
                cell(1, 1, 1, 1, CellRole::Body, "r1"),
            ],
        };
        let md = table_to_markdown(&table);
        // no header roles: the separator still lands after the first row
        assert_eq!(md, "| tall | r0 |\n|---|---|\n| tall | r1 |");
    }

    #[test]
    fn uncovered_positions_render_empty_and_pipes_escape() {
        let table = TableStructure {
            n_rows: 2,
            n_cols: 2,
            cells: vec![cell(0, 0, 1, 1, CellRole::ColumnHeader, "a|b")],
        };
        let md = table_to_markdown(&table);
        assert_eq!(md, "| a\\|b |  |\n|---|---|\n|  |  |");
    }

    #[test]
    fn policy_validation_rejects_bad_heading_prefixes() {
        let mut policy = MarkdownPolicy::default();
        assert!(policy.validate().is_ok());
        policy.heading_map.insert(DocItemLabel::Text, "***".into());
        assert!(policy.validate().is_err());
    }
}
