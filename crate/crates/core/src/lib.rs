//! docforge-core: a staged, deterministic document-conversion engine.
//!
//! A backend parses page tokens (with geometry) from a versioned
//! interchange format, a per-page stage chain runs layout analysis and
//! table-structure recovery, and an assembly step aggregates the pages
//! into a typed [`model::Document`] that serializes to JSON and Markdown.
//! A benchmark harness measures conversion throughput and peak memory.

pub mod assemble;
pub mod backend;
pub mod bench;
pub mod layout;
pub mod model;
pub mod pipeline;
pub mod serialize;
pub mod synth;
pub mod tablestruct;

pub use model::{BoundingBox, DocItem, DocItemLabel, Document, ParsedPage, TextToken};
