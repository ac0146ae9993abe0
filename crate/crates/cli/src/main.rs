//! docforge: convert interchange documents to Markdown or JSON, and
//! benchmark conversion throughput and peak memory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use docforge_core::backend::{InputSource, INTERCHANGE_EXTENSION, INTERCHANGE_FORMAT};
use docforge_core::bench::{emit_report, run_bench, BenchMatrix};
use docforge_core::pipeline::{build_pipeline, ConversionStatus, PipelineConfig};
use docforge_core::serialize::{to_json, to_markdown, MarkdownPolicy};

#[derive(Parser)]
#[command(name = "docforge", version, about = "Document conversion engine and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert one or more sources (paths or URLs) to Markdown or JSON.
    Convert(ConvertArgs),
    /// Convert a corpus across a thread-budget/backend matrix and report
    /// TTS, pages/s and peak memory as CSV.
    Bench(BenchArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Md,
    Json,
}

#[derive(Args)]
struct ConvertArgs {
    /// Input files or URLs.
    #[arg(required = true)]
    sources: Vec<String>,

    /// Output format.
    #[arg(long = "to", value_enum, default_value = "md")]
    to: OutputFormat,

    /// Output directory.
    #[arg(long = "out", default_value = ".")]
    out: PathBuf,

    /// Disable table structure recovery.
    #[arg(long = "no-table-structure")]
    no_table_structure: bool,

    /// Enable the OCR stage (off by default).
    #[arg(long = "ocr", overrides_with = "no_ocr")]
    ocr: bool,

    /// Disable the OCR stage.
    #[arg(long = "no-ocr")]
    no_ocr: bool,

    /// Convert at most N pages per document.
    #[arg(long = "max-pages")]
    max_pages: Option<usize>,

    /// Reject inputs larger than N bytes.
    #[arg(long = "max-bytes")]
    max_bytes: Option<u64>,

    /// Thread budget (falls back to OMP_NUM_THREADS, then 4).
    #[arg(long = "threads")]
    threads: Option<usize>,

    /// Backend name.
    #[arg(long = "backend", default_value = INTERCHANGE_FORMAT)]
    backend: String,

    /// Pipeline configuration file (JSON; flags override its values).
    #[arg(long = "config")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory containing *.dpages.json files.
    corpus: PathBuf,

    /// Comma-separated thread budgets.
    #[arg(long = "threads", default_value = "4,16", value_delimiter = ',')]
    threads: Vec<usize>,

    /// Comma-separated backend names.
    #[arg(long = "backends", default_value = INTERCHANGE_FORMAT, value_delimiter = ',')]
    backends: Vec<String>,

    /// Write the CSV here instead of standard output.
    #[arg(long = "out")]
    out: Option<PathBuf>,

    /// Pipeline configuration file (JSON).
    #[arg(long = "config")]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Convert(args) => run_convert(args),
        Command::Bench(args) => run_bench_cmd(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))
        }
    }
}

fn run_convert(args: ConvertArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = load_config(args.config.as_deref())?;
    if args.no_table_structure {
        cfg.enable_table_structure = false;
    }
    if args.ocr {
        cfg.enable_ocr = true;
    }
    if args.no_ocr {
        cfg.enable_ocr = false;
    }
    if args.max_pages.is_some() {
        cfg.max_pages = args.max_pages;
    }
    if args.max_bytes.is_some() {
        cfg.max_file_bytes = args.max_bytes;
    }
    if args.threads.is_some() {
        cfg.thread_budget = args.threads;
    }
    cfg.backend = args.backend.clone();

    let pipeline = build_pipeline(cfg, None)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let policy = MarkdownPolicy::default();

    let mut any_failure = false;
    for source in &args.sources {
        let src = InputSource::from_str_auto(source);
        let result = pipeline.convert_single(&src);
        for warning in &result.warnings {
            eprintln!("{source}: {warning}");
        }
        if result.status == ConversionStatus::Failure {
            any_failure = true;
            eprintln!("{source}: conversion failed");
            continue;
        }
        if result.status == ConversionStatus::Partial {
            any_failure = true;
            eprintln!("{source}: converted with failed pages");
        }
        let stem = output_stem(source);
        let (path, payload) = match args.to {
            OutputFormat::Md => (
                args.out.join(format!("{stem}.md")),
                to_markdown(&result.document, &policy),
            ),
            OutputFormat::Json => {
                (args.out.join(format!("{stem}.json")), to_json(&result.document)?)
            }
        };
        std::fs::write(&path, payload)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("{source} -> {}", path.display());
    }
    Ok(ExitCode::from(if any_failure { 1 } else { 0 }))
}

/// Output file stem for a source: the file name with the interchange
/// extension (or any final extension) removed.
fn output_stem(source: &str) -> String {
    let name = source.rsplit(['/', '\\']).next().unwrap_or(source);
    if let Some(stem) = name.strip_suffix(INTERCHANGE_EXTENSION) {
        return stem.to_string();
    }
    match name.rsplit_once('.') {
        Some((stem, _)) if !stem.is_empty() => stem.to_string(),
        _ => name.to_string(),
    }
}

fn run_bench_cmd(args: BenchArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(args.config.as_deref())?;
    let matrix = BenchMatrix { thread_budgets: args.threads.clone(), backends: args.backends.clone() };
    let reports = run_bench(&args.corpus, &matrix, &cfg)?;
    let csv = emit_report(&reports);
    match &args.out {
        Some(path) => std::fs::write(path, &csv)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    let failed: usize = reports.iter().map(|r| r.failed_docs).sum();
    if failed > 0 {
        eprintln!("{failed} document conversion(s) failed during the sweep");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::from(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_stem_strips_interchange_extension() {
        assert_eq!(output_stem("fixture.dpages.json"), "fixture");
        assert_eq!(output_stem("dir/sub/fixture.dpages.json"), "fixture");
        assert_eq!(output_stem("https://host/path/doc.dpages.json"), "doc");
        assert_eq!(output_stem("plain.json"), "plain");
        assert_eq!(output_stem("noext"), "noext");
    }
}
