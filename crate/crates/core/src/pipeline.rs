//! The conversion pipeline: a linear per-page stage chain between backend
//! parsing and document assembly.
//!
//! Stages transform a stream of page states and may only add predictions;
//! the runner enforces that contract at runtime. Pages are the concurrency
//! unit: within each stage, up to `thread_budget` pages are processed in
//! parallel, then everything is re-ordered by page number before assembly,
//! so conversion output is identical for every thread budget.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assemble;
use crate::backend::{
    Backend, BackendError, BackendRegistry, FetchOptions, InputSource, InterchangeBackend,
    LoadLimits, INTERCHANGE_FORMAT,
};
use crate::layout::{self, LayoutCluster, LayoutConfig};
use crate::model::{Document, ParsedPage, TextToken};
use crate::tablestruct::{self, TableConfig, TableError, TableStructure};

/// Predictions accumulated for one page. Stages fill their own slot and
/// leave the others untouched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PagePredictions {
    pub layout: Option<LayoutPrediction>,
    pub tables: Option<TablePrediction>,
    pub ocr: Option<OcrPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutPrediction {
    pub clusters: Vec<LayoutCluster>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TablePrediction {
    /// Structures keyed by the table cluster's id.
    pub by_cluster: BTreeMap<u32, TableStructure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrPrediction {
    /// Tokens recognized from the page raster. The built-in stage renders
    /// the high-resolution raster but ships no OCR engine, so this stays
    /// empty until an engine-backed stage replaces it.
    pub tokens: Vec<TextToken>,
    pub dpi: u32,
}

/// A page failure recorded by a stage; the page keeps flowing but its
/// predictions stay absent and the conversion degrades to `Partial`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFailure {
    pub stage: String,
    pub page_no: u32,
    pub message: String,
}

/// One page flowing through the stage chain. `parsed` is never mutated by
/// stages; they may only extend `predictions`, `warnings` and `failures`.
#[derive(Debug, Clone)]
pub struct PageState {
    pub parsed: Arc<ParsedPage>,
    pub predictions: PagePredictions,
    pub warnings: Vec<String>,
    pub failures: Vec<StageFailure>,
}

impl PageState {
    pub fn new(parsed: ParsedPage) -> Self {
        PageState {
            parsed: Arc::new(parsed),
            predictions: PagePredictions::default(),
            warnings: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, stage: &str, message: impl Into<String>) {
        self.failures.push(StageFailure {
            stage: stage.to_string(),
            page_no: self.parsed.page_no,
            message: message.into(),
        });
    }
}

/// A pipeline stage: accepts an iterator over page states and produces
/// another one. Stages must be stateless or internally synchronized, must
/// not rely on page arrival order, and must preserve the page multiset.
pub trait PipelineStage: Send + Sync {
    fn name(&self) -> &str;

    fn transform<'a>(
        &'a self,
        pages: Box<dyn Iterator<Item = PageState> + Send + 'a>,
    ) -> Box<dyn Iterator<Item = PageState> + Send + 'a>;
}

/// Pipeline configuration. `thread_budget` falls back to the
/// `OMP_NUM_THREADS` environment variable when not set explicitly, then to 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub enable_table_structure: bool,
    pub enable_ocr: bool,
    pub max_pages: Option<usize>,
    pub max_file_bytes: Option<u64>,
    pub thread_budget: Option<usize>,
    pub backend: String,
    pub layout_dpi: u32,
    pub ocr_dpi: u32,
    pub fetch_timeout_secs: u64,
    pub layout: LayoutConfig,
    pub table: TableConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            enable_table_structure: true,
            enable_ocr: false,
            max_pages: None,
            max_file_bytes: None,
            thread_budget: None,
            backend: INTERCHANGE_FORMAT.to_string(),
            layout_dpi: 72,
            ocr_dpi: 216,
            fetch_timeout_secs: 30,
            layout: LayoutConfig::default(),
            table: TableConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.thread_budget == Some(0) {
            return Err(PipelineError::InvalidConfig("thread_budget must be at least 1".into()));
        }
        if self.layout_dpi == 0 || self.ocr_dpi == 0 {
            return Err(PipelineError::InvalidConfig("dpi values must be positive".into()));
        }
        Ok(())
    }

    /// Effective thread budget: explicit setting, then `OMP_NUM_THREADS`,
    /// then the default of 4.
    pub fn resolved_thread_budget(&self) -> usize {
        resolve_thread_budget(self.thread_budget, std::env::var("OMP_NUM_THREADS").ok().as_deref())
    }
}

/// Pure resolution rule behind [`PipelineConfig::resolved_thread_budget`].
pub fn resolve_thread_budget(explicit: Option<usize>, omp_env: Option<&str>) -> usize {
    explicit
        .filter(|&n| n >= 1)
        .or_else(|| omp_env.and_then(|s| s.trim().parse::<usize>().ok()).filter(|&n| n >= 1))
        .unwrap_or(4)
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("stage chain is empty")]
    EmptyStageChain,
    #[error("duplicate stage name '{0}'")]
    DuplicateStage(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A stage broke its contract; this names the stage and is a bug in the
/// stage, not in the input.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StageContractError {
    #[error("stage '{stage}' changed the page multiset (expected pages {expected:?}, got {got:?})")]
    PageMultisetChanged { stage: String, expected: Vec<u32>, got: Vec<u32> },
    #[error("stage '{stage}' mutated the parsed content of page {page_no}")]
    MutatedParsedPage { stage: String, page_no: u32 },
    #[error("stage '{stage}' removed or rewrote predictions on page {page_no}")]
    RemovedPredictions { stage: String, page_no: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversionStatus {
    Success,
    Partial,
    Failure,
}

/// Wall-clock seconds spent in one pipeline phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Outcome of converting one source.
#[derive(Debug, Clone)]
pub struct ConversionResult {
    pub document: Document,
    pub status: ConversionStatus,
    pub warnings: Vec<String>,
    pub timings: Vec<StageTiming>,
}

impl ConversionResult {
    fn failure(name: &str, message: String, timings: Vec<StageTiming>) -> Self {
        ConversionResult {
            document: Document::empty(name),
            status: ConversionStatus::Failure,
            warnings: vec![message],
            timings,
        }
    }
}

// ---------------------------------------------------------------------------
// built-in stages

/// Layout analysis: geometric detection, merge with externally provided
/// proposals, overlap suppression, token assignment. Also renders the page
/// at the layout dpi so a raster-based detector can be dropped in.
pub struct LayoutStage {
    cfg: LayoutConfig,
    dpi: u32,
}

impl LayoutStage {
    pub fn new(cfg: LayoutConfig, dpi: u32) -> Self {
        LayoutStage { cfg, dpi }
    }

    fn process(&self, mut state: PageState) -> PageState {
        if let Err(e) = crate::backend::render_page(&state.parsed, self.dpi) {
            state.fail("layout", format!("page raster unavailable: {e}"));
            return state;
        }
        let mut proposals = layout::detect_layout(&state.parsed, &self.cfg);
        proposals.extend(state.parsed.proposals.iter().cloned());
        let kept = layout::suppress_overlaps(&proposals, &self.cfg);
        let clusters = layout::assign_tokens(&kept, &state.parsed.tokens, &self.cfg);
        state.predictions.layout = Some(LayoutPrediction { clusters });
        state
    }
}

impl PipelineStage for LayoutStage {
    fn name(&self) -> &str {
        "layout"
    }

    fn transform<'a>(
        &'a self,
        pages: Box<dyn Iterator<Item = PageState> + Send + 'a>,
    ) -> Box<dyn Iterator<Item = PageState> + Send + 'a> {
        Box::new(pages.map(move |state| self.process(state)))
    }
}

/// Table-structure recovery for every cluster the layout stage labelled as a
/// table: grid inference, role classification and matchback onto the
/// cluster's tokens.
pub struct TableStructureStage {
    cfg: TableConfig,
}

impl TableStructureStage {
    pub fn new(cfg: TableConfig) -> Self {
        TableStructureStage { cfg }
    }

    fn process(&self, mut state: PageState) -> PageState {
        let Some(layout) = &state.predictions.layout else {
            return state; // layout failed earlier; nothing to do
        };
        let mut prediction = TablePrediction::default();
        let mut warnings = Vec::new();
        for cluster in &layout.clusters {
            if cluster.proposal.label != crate::model::DocItemLabel::Table {
                continue;
            }
            let tokens: Vec<TextToken> = cluster
                .token_ids
                .iter()
                .filter_map(|id| state.parsed.token(*id).cloned())
                .collect();
            let structure =
                match tablestruct::infer_table_structure(cluster.proposal.bbox, &tokens, &self.cfg)
                {
                    Ok(mut s) => {
                        let dropped = tablestruct::match_back(&mut s, &tokens, &self.cfg);
                        if !dropped.is_empty() {
                            warnings.push(format!(
                                "page {}: {} token(s) dropped from table cluster {}",
                                state.parsed.page_no,
                                dropped.len(),
                                cluster.cluster_id
                            ));
                        }
                        s
                    }
                    Err(TableError::NoTokens) => {
                        warnings.push(format!(
                            "page {}: table cluster {} has no tokens, keeping an empty structure",
                            state.parsed.page_no, cluster.cluster_id
                        ));
                        TableStructure::empty()
                    }
                };
            prediction.by_cluster.insert(cluster.cluster_id, structure);
        }
        state.predictions.tables = Some(prediction);
        state.warnings.extend(warnings);
        state
    }
}

impl PipelineStage for TableStructureStage {
    fn name(&self) -> &str {
        "tablestruct"
    }

    fn transform<'a>(
        &'a self,
        pages: Box<dyn Iterator<Item = PageState> + Send + 'a>,
    ) -> Box<dyn Iterator<Item = PageState> + Send + 'a> {
        Box::new(pages.map(move |state| self.process(state)))
    }
}

/// OCR stage interface: renders the high-resolution page raster and records
/// an (empty) OCR prediction. An engine-backed implementation can replace
/// this stage without touching the rest of the pipeline.
pub struct OcrStage {
    dpi: u32,
}

impl OcrStage {
    pub fn new(dpi: u32) -> Self {
        OcrStage { dpi }
    }
}

impl PipelineStage for OcrStage {
    fn name(&self) -> &str {
        "ocr"
    }

    fn transform<'a>(
        &'a self,
        pages: Box<dyn Iterator<Item = PageState> + Send + 'a>,
    ) -> Box<dyn Iterator<Item = PageState> + Send + 'a> {
        Box::new(pages.map(move |mut state| {
            match crate::backend::render_page(&state.parsed, self.dpi) {
                Ok(_) => {
                    state.predictions.ocr = Some(OcrPrediction { tokens: Vec::new(), dpi: self.dpi })
                }
                Err(e) => state.fail("ocr", format!("page raster unavailable: {e}")),
            }
            state
        }))
    }
}

// ---------------------------------------------------------------------------
// stage runner

fn page_multiset(pages: &[PageState]) -> Vec<u32> {
    let mut nos: Vec<u32> = pages.iter().map(|p| p.parsed.page_no).collect();
    nos.sort_unstable();
    nos
}

/// Snapshot of the pieces of a page a stage is not allowed to touch.
struct PageSnapshot {
    parsed: Arc<ParsedPage>,
    predictions: PagePredictions,
}

fn enforce_contract(
    stage: &str,
    before: &[PageSnapshot],
    after: &[PageState],
) -> Result<(), StageContractError> {
    let expected: Vec<u32> = {
        let mut v: Vec<u32> = before.iter().map(|s| s.parsed.page_no).collect();
        v.sort_unstable();
        v
    };
    let got = page_multiset(after);
    if expected != got {
        return Err(StageContractError::PageMultisetChanged {
            stage: stage.to_string(),
            expected,
            got,
        });
    }
    for out in after {
        let page_no = out.parsed.page_no;
        let snap = before
            .iter()
            .find(|s| s.parsed.page_no == page_no)
            .expect("multiset equality implies presence");
        if !Arc::ptr_eq(&snap.parsed, &out.parsed) && *snap.parsed != *out.parsed {
            return Err(StageContractError::MutatedParsedPage { stage: stage.to_string(), page_no });
        }
        let removed = [
            snap.predictions.layout.as_ref().is_some_and(|v| out.predictions.layout.as_ref() != Some(v)),
            snap.predictions.tables.as_ref().is_some_and(|v| out.predictions.tables.as_ref() != Some(v)),
            snap.predictions.ocr.as_ref().is_some_and(|v| out.predictions.ocr.as_ref() != Some(v)),
        ];
        if removed.into_iter().any(|r| r) {
            return Err(StageContractError::RemovedPredictions { stage: stage.to_string(), page_no });
        }
    }
    Ok(())
}

/// Run one stage over a page stream with the stage contract enforced: the
/// page multiset is preserved, parsed content is untouched, and previously
/// recorded predictions survive unchanged.
pub fn run_stage(
    stage: &dyn PipelineStage,
    pages: Vec<PageState>,
) -> Result<Vec<PageState>, StageContractError> {
    run_stage_parallel(stage, pages, 1)
}

/// [`run_stage`] with the pages split across up to `workers` contiguous
/// chunks processed concurrently. Chunk outputs are concatenated in chunk
/// order, so the result is independent of scheduling.
pub fn run_stage_parallel(
    stage: &dyn PipelineStage,
    pages: Vec<PageState>,
    workers: usize,
) -> Result<Vec<PageState>, StageContractError> {
    let snapshots: Vec<PageSnapshot> = pages
        .iter()
        .map(|p| PageSnapshot { parsed: Arc::clone(&p.parsed), predictions: p.predictions.clone() })
        .collect();

    let workers = workers.max(1).min(pages.len().max(1));
    let out: Vec<PageState> = if workers <= 1 {
        stage.transform(Box::new(pages.into_iter())).collect()
    } else {
        let chunk_size = pages.len().div_ceil(workers);
        let chunks: Vec<Vec<PageState>> =
            pages.chunks(chunk_size).map(|c| c.to_vec()).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || -> Vec<PageState> {
                        stage.transform(Box::new(chunk.into_iter())).collect()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("stage worker panicked")).collect()
        })
    };
    enforce_contract(stage.name(), &snapshots, &out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// pipeline

/// A configured conversion pipeline.
pub struct Pipeline {
    cfg: PipelineConfig,
    stages: Vec<Arc<dyn PipelineStage>>,
    backend: Arc<dyn Backend>,
}

/// Build a pipeline from configuration. Without an override the stage chain
/// is `[layout, tablestruct?, ocr?]`, with the optional stages present when
/// their feature toggles are on. An override replaces the chain wholesale.
pub fn build_pipeline(
    cfg: PipelineConfig,
    stages_override: Option<Vec<Arc<dyn PipelineStage>>>,
) -> Result<Pipeline, PipelineError> {
    build_pipeline_with_registry(cfg, stages_override, &BackendRegistry::with_defaults())
}

/// [`build_pipeline`] resolving the backend from a caller-provided registry.
pub fn build_pipeline_with_registry(
    cfg: PipelineConfig,
    stages_override: Option<Vec<Arc<dyn PipelineStage>>>,
    registry: &BackendRegistry,
) -> Result<Pipeline, PipelineError> {
    cfg.validate()?;
    let stages = match stages_override {
        Some(stages) => stages,
        None => {
            let mut stages: Vec<Arc<dyn PipelineStage>> =
                vec![Arc::new(LayoutStage::new(cfg.layout.clone(), cfg.layout_dpi))];
            if cfg.enable_table_structure {
                stages.push(Arc::new(TableStructureStage::new(cfg.table.clone())));
            }
            if cfg.enable_ocr {
                stages.push(Arc::new(OcrStage::new(cfg.ocr_dpi)));
            }
            stages
        }
    };
    if stages.is_empty() {
        return Err(PipelineError::EmptyStageChain);
    }
    let mut seen = std::collections::BTreeSet::new();
    for stage in &stages {
        if !seen.insert(stage.name().to_string()) {
            return Err(PipelineError::DuplicateStage(stage.name().to_string()));
        }
    }
    let backend: Arc<dyn Backend> = if cfg.backend == INTERCHANGE_FORMAT {
        Arc::new(InterchangeBackend::new(FetchOptions {
            timeout: std::time::Duration::from_secs(cfg.fetch_timeout_secs),
            ..FetchOptions::default()
        }))
    } else {
        registry.get(&cfg.backend).ok_or_else(|| BackendError::UnknownBackend(cfg.backend.clone()))?
    };
    Ok(Pipeline { cfg, stages, backend })
}

impl Pipeline {
    /// Build with the default stage chain.
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        build_pipeline(cfg, None)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn stage_names(&self) -> Vec<String> {
        self.stages.iter().map(|s| s.name().to_string()).collect()
    }

    /// Convert one source: backend parse, per-page stage chain, assembly.
    /// Backend errors yield `Failure` with an empty document; per-page stage
    /// failures degrade to `Partial` with that page's predictions absent.
    /// For a fixed configuration the result is identical across thread
    /// budgets.
    pub fn convert_single(&self, src: &InputSource) -> ConversionResult {
        let mut timings = Vec::new();
        let limits =
            LoadLimits { max_pages: self.cfg.max_pages, max_bytes: self.cfg.max_file_bytes };

        let parse_start = Instant::now();
        let loaded = self.backend.load(src, &limits);
        timings.push(StageTiming {
            stage: "backend".into(),
            seconds: parse_start.elapsed().as_secs_f64(),
        });
        let (parsed, mut warnings) = match loaded {
            Ok(ok) => ok,
            Err(e) => return ConversionResult::failure("", e.to_string(), timings),
        };

        let name = parsed.name.clone();
        let budget = self.cfg.resolved_thread_budget();
        let mut states: Vec<PageState> = parsed.pages.into_iter().map(PageState::new).collect();
        for stage in &self.stages {
            let start = Instant::now();
            match run_stage_parallel(stage.as_ref(), states, budget) {
                Ok(out) => states = out,
                Err(e) => {
                    timings.push(StageTiming {
                        stage: stage.name().into(),
                        seconds: start.elapsed().as_secs_f64(),
                    });
                    return ConversionResult::failure(&name, e.to_string(), timings);
                }
            }
            timings.push(StageTiming {
                stage: stage.name().into(),
                seconds: start.elapsed().as_secs_f64(),
            });
        }

        let assemble_start = Instant::now();
        states.sort_by_key(|s| s.parsed.page_no);
        let mut failed_pages = 0usize;
        for state in &mut states {
            warnings.append(&mut state.warnings);
            if !state.failures.is_empty() {
                failed_pages += 1;
                // drop partial predictions so the page degrades cleanly
                state.predictions = PagePredictions::default();
                for failure in &state.failures {
                    warnings.push(format!(
                        "page {}: stage '{}' failed: {}",
                        failure.page_no, failure.stage, failure.message
                    ));
                }
            }
        }
        let assembled = assemble::assemble_document(&name, &states, &self.cfg);
        timings.push(StageTiming {
            stage: "assemble".into(),
            seconds: assemble_start.elapsed().as_secs_f64(),
        });
        match assembled {
            Ok((document, assemble_warnings)) => {
                warnings.extend(assemble_warnings);
                let status = if failed_pages > 0 {
                    ConversionStatus::Partial
                } else {
                    ConversionStatus::Success
                };
                ConversionResult { document, status, warnings, timings }
            }
            Err(e) => ConversionResult::failure(&name, e.to_string(), timings),
        }
    }

    /// Convert a batch of sources. Results come back in input order; one
    /// source's failure never aborts the rest.
    pub fn convert_batch(&self, srcs: &[InputSource]) -> Vec<ConversionResult> {
        srcs.iter().map(|src| self.convert_single(src)).collect()
    }
}
