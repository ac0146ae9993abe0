//! Python bindings for the docforge conversion engine: convert documents
//! from paths, URLs or raw bytes, inspect results, and drive the benchmark
//! arithmetic and synthetic-corpus generator from Python.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use docforge_core::backend::InputSource;
use docforge_core::pipeline::{build_pipeline, ConversionStatus, PipelineConfig};
use docforge_core::serialize::{to_json, to_markdown, MarkdownPolicy};

/// Conversion options mirroring the pipeline configuration toggles.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct ConversionOptions {
    #[pyo3(get, set)]
    table_structure: bool,
    #[pyo3(get, set)]
    ocr: bool,
    #[pyo3(get, set)]
    max_pages: Option<usize>,
    #[pyo3(get, set)]
    max_file_bytes: Option<u64>,
    #[pyo3(get, set)]
    threads: Option<usize>,
    #[pyo3(get, set)]
    backend: String,
}

#[pymethods]
impl ConversionOptions {
    #[new]
    #[pyo3(signature = (table_structure=true, ocr=false, max_pages=None, max_file_bytes=None, threads=None, backend=None))]
    fn new(
        table_structure: bool,
        ocr: bool,
        max_pages: Option<usize>,
        max_file_bytes: Option<u64>,
        threads: Option<usize>,
        backend: Option<String>,
    ) -> Self {
        ConversionOptions {
            table_structure,
            ocr,
            max_pages,
            max_file_bytes,
            threads,
            backend: backend.unwrap_or_else(|| "docforge-pages".to_string()),
        }
    }
}

impl ConversionOptions {
    fn to_config(&self) -> PipelineConfig {
        PipelineConfig {
            enable_table_structure: self.table_structure,
            enable_ocr: self.ocr,
            max_pages: self.max_pages,
            max_file_bytes: self.max_file_bytes,
            thread_budget: self.threads,
            backend: self.backend.clone(),
            ..PipelineConfig::default()
        }
    }
}

/// Result of converting one source.
#[pyclass]
struct ConversionResult {
    inner: docforge_core::pipeline::ConversionResult,
}

#[pymethods]
impl ConversionResult {
    /// "success", "partial" or "failure".
    #[getter]
    fn status(&self) -> &'static str {
        match self.inner.status {
            ConversionStatus::Success => "success",
            ConversionStatus::Partial => "partial",
            ConversionStatus::Failure => "failure",
        }
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn page_count(&self) -> usize {
        self.inner.document.pages.len()
    }

    #[getter]
    fn item_count(&self) -> usize {
        self.inner.document.items.len()
    }

    #[getter]
    fn title(&self) -> Option<String> {
        self.inner.document.metadata.title.clone()
    }

    #[getter]
    fn authors(&self) -> Vec<String> {
        self.inner.document.metadata.authors.clone()
    }

    #[getter]
    fn language(&self) -> Option<String> {
        self.inner.document.metadata.language.clone()
    }

    /// Per-stage wall-clock seconds, in execution order.
    fn timings(&self) -> Vec<(String, f64)> {
        self.inner.timings.iter().map(|t| (t.stage.clone(), t.seconds)).collect()
    }

    fn to_markdown(&self) -> PyResult<String> {
        Ok(to_markdown(&self.inner.document, &MarkdownPolicy::default()))
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner.document).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "ConversionResult(status='{}', pages={}, items={})",
            self.status(),
            self.page_count(),
            self.item_count()
        )
    }
}

fn convert(src: InputSource, options: Option<&ConversionOptions>) -> PyResult<ConversionResult> {
    let cfg = options.map(ConversionOptions::to_config).unwrap_or_default();
    let pipeline = build_pipeline(cfg, None).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(ConversionResult { inner: pipeline.convert_single(&src) })
}

/// Convert a single document from a file path or URL.
#[pyfunction]
#[pyo3(signature = (source, options=None))]
fn convert_single(source: &str, options: Option<&ConversionOptions>) -> PyResult<ConversionResult> {
    convert(InputSource::from_str_auto(source), options)
}

/// Convert a single document from raw interchange bytes.
#[pyfunction]
#[pyo3(signature = (data, options=None))]
fn convert_bytes(data: Vec<u8>, options: Option<&ConversionOptions>) -> PyResult<ConversionResult> {
    convert(InputSource::Bytes(data), options)
}

/// Convert a batch of sources; results come back in input order and one
/// source's failure never aborts the rest.
#[pyfunction]
#[pyo3(signature = (sources, options=None))]
fn convert_batch(
    sources: Vec<String>,
    options: Option<&ConversionOptions>,
) -> PyResult<Vec<ConversionResult>> {
    sources.iter().map(|s| convert_single(s, options)).collect()
}

/// Identify the backend format of a byte prefix ("docforge-pages" or
/// "unknown").
#[pyfunction]
fn probe_format(data: &[u8]) -> &'static str {
    docforge_core::backend::probe_format(data)
}

/// Pages per second, reported to 2 decimals; raises on non-positive TTS.
#[pyfunction]
fn compute_throughput(page_count: usize, tts_s: f64) -> PyResult<f64> {
    docforge_core::bench::compute_throughput(page_count, tts_s)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Write a deterministic synthetic corpus of interchange files; returns the
/// file paths in document order.
#[pyfunction]
#[pyo3(signature = (dir, docs=3, pages_per_doc=4, seed=0))]
fn write_synthetic_corpus(
    dir: &str,
    docs: usize,
    pages_per_doc: usize,
    seed: u64,
) -> PyResult<Vec<String>> {
    let spec = docforge_core::synth::CorpusSpec { docs, pages_per_doc, seed };
    let paths = docforge_core::synth::write_corpus(std::path::Path::new(dir), &spec)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(paths.into_iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn docforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ConversionOptions>()?;
    m.add_class::<ConversionResult>()?;
    m.add_function(wrap_pyfunction!(convert_single, m)?)?;
    m.add_function(wrap_pyfunction!(convert_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(convert_batch, m)?)?;
    m.add_function(wrap_pyfunction!(probe_format, m)?)?;
    m.add_function(wrap_pyfunction!(compute_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(write_synthetic_corpus, m)?)?;
    m.add("INTERCHANGE_FORMAT", docforge_core::backend::INTERCHANGE_FORMAT)?;
    m.add("DOCUMENT_SCHEMA_TAG", docforge_core::serialize::DOCUMENT_SCHEMA_TAG)?;
    Ok(())
}
