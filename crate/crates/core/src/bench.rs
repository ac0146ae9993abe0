//! Benchmark harness: convert a corpus across a matrix of thread budgets and
//! backends, recording time-to-solution, throughput in pages per second, and
//! peak memory (resident set size, polled every 100 ms).
//!
//! The harness runs one matrix point at a time around the internally
//! parallel pipeline, so measurements stay clean.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use crate::backend::{InputSource, INTERCHANGE_EXTENSION};
use crate::pipeline::{build_pipeline, ConversionStatus, PipelineConfig, PipelineError};
use crate::serialize::{to_json, to_markdown, MarkdownPolicy};

/// Measurements for one matrix point.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub corpus: String,
    pub backend: String,
    pub thread_budget: usize,
    /// Pages across all successfully converted documents.
    pub page_count: usize,
    /// Wall-clock time-to-solution for the whole corpus, seconds.
    pub tts_s: f64,
    /// `page_count / tts_s`, reported to 2 decimals.
    pub pages_per_s: f64,
    /// Peak resident set size observed while converting.
    pub peak_mem_bytes: u64,
    /// Documents that failed to convert (the sweep continues regardless).
    pub failed_docs: usize,
    /// SHA-256 over all JSON and Markdown outputs, for determinism checks.
    pub output_digest: String,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("time-to-solution must be positive, got {0}")]
    NonPositiveTts(f64),
    #[error("corpus {0} is empty (no *{INTERCHANGE_EXTENSION} files)")]
    EmptyCorpus(String),
    #[error("cannot read corpus {0}: {1}")]
    CorpusUnreadable(String, String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Throughput in pages per second, reported to 2 decimals.
pub fn compute_throughput(page_count: usize, tts_s: f64) -> Result<f64, BenchError> {
    if tts_s <= 0.0 {
        return Err(BenchError::NonPositiveTts(tts_s));
    }
    Ok((page_count as f64 / tts_s * 100.0).round() / 100.0)
}

/// The benchmark matrix: every thread budget is crossed with every backend,
/// in the given order.
#[derive(Debug, Clone)]
pub struct BenchMatrix {
    pub thread_budgets: Vec<usize>,
    pub backends: Vec<String>,
}

/// Samples the process resident set size every 100 ms and keeps the maximum.
pub struct RssSampler {
    stop: Arc<AtomicBool>,
    handle: std::thread::JoinHandle<u64>,
}

impl RssSampler {
    pub fn start() -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            let mut peak = current_rss_bytes().unwrap_or(0);
            while !stop_flag.load(Ordering::Relaxed) {
                std::thread::sleep(Duration::from_millis(100));
                if let Some(rss) = current_rss_bytes() {
                    peak = peak.max(rss);
                }
            }
            if let Some(rss) = current_rss_bytes() {
                peak = peak.max(rss);
            }
            peak
        });
        RssSampler { stop, handle }
    }

    /// Stop sampling (after one final sample) and return the peak.
    pub fn finish(self) -> u64 {
        self.stop.store(true, Ordering::Relaxed);
        self.handle.join().unwrap_or(0)
    }
}

/// Current resident set size from `/proc/self/status`, when available.
pub fn current_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Interchange files of a corpus directory in stable (name) order.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| BenchError::CorpusUnreadable(dir.display().to_string(), e.to_string()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(INTERCHANGE_EXTENSION))
        })
        .collect();
    if files.is_empty() {
        return Err(BenchError::EmptyCorpus(dir.display().to_string()));
    }
    files.sort();
    Ok(files)
}

/// Convert the corpus once per matrix point (OCR disabled) and report TTS,
/// throughput and peak RSS for each. A document's conversion failure marks
/// the report but never aborts the sweep.
pub fn run_bench(
    corpus_dir: &Path,
    matrix: &BenchMatrix,
    base_cfg: &PipelineConfig,
) -> Result<Vec<BenchReport>, BenchError> {
    let files = corpus_files(corpus_dir)?;
    let corpus_name = corpus_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| corpus_dir.display().to_string());
    let policy = MarkdownPolicy::default();

    let mut reports = Vec::new();
    for &threads in &matrix.thread_budgets {
        for backend in &matrix.backends {
            let cfg = PipelineConfig {
                thread_budget: Some(threads),
                backend: backend.clone(),
                enable_ocr: false,
                ..base_cfg.clone()
            };
            let pipeline = build_pipeline(cfg, None)?;

            let sampler = RssSampler::start();
            let start = Instant::now();
            let mut page_count = 0usize;
            let mut failed_docs = 0usize;
            let mut digest = Sha256::new();
            for file in &files {
                let result = pipeline.convert_single(&InputSource::Path(file.clone()));
                if result.status == ConversionStatus::Failure {
                    failed_docs += 1;
                    continue;
                }
                page_count += result.document.pages.len();
                if let Ok(json) = to_json(&result.document) {
                    digest.update(json.as_bytes());
                }
                digest.update(to_markdown(&result.document, &policy).as_bytes());
            }
            let tts_s = start.elapsed().as_secs_f64();
            let peak_mem_bytes = sampler.finish();

            reports.push(BenchReport {
                corpus: corpus_name.clone(),
                backend: backend.clone(),
                thread_budget: threads,
                page_count,
                tts_s,
                pages_per_s: compute_throughput(page_count, tts_s)?,
                peak_mem_bytes,
                failed_docs,
                output_digest: digest.finalize().iter().map(|b| format!("{b:02x}")).collect(),
            });
        }
    }
    Ok(reports)
}

/// CSV with one row per report in matrix order; newline-terminated rows,
/// '.' decimal separator.
pub fn emit_report(reports: &[BenchReport]) -> String {
    let mut out = String::from("corpus,backend,threads,pages,tts_s,pages_per_s,peak_mem_mb\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{:.2},{:.2},{:.2}\n",
            r.corpus,
            r.backend,
            r.thread_budget,
            r.page_count,
            r.tts_s,
            r.pages_per_s,
            r.peak_mem_bytes as f64 / (1024.0 * 1024.0),
        ));
    }
    out
}
