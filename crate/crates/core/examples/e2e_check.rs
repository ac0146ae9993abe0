use docforge_core::backend::{to_interchange_json, InputSource};
use docforge_core::pipeline::{Pipeline, PipelineConfig};
use docforge_core::serialize::{to_json, to_markdown, MarkdownPolicy};
use docforge_core::synth::synthetic_document;

fn main() {
    let doc = synthetic_document("demo", 3, 5);
    let payload = to_interchange_json(&doc).into_bytes();
    let pipeline = Pipeline::new(PipelineConfig::default()).unwrap();
    let result = pipeline.convert_single(&InputSource::Bytes(payload));
    println!("status: {:?}", result.status);
    println!("warnings: {:?}", result.warnings);
    println!("items: {}", result.document.items.len());
    println!("metadata: {:?}", result.document.metadata);
    for t in &result.timings { println!("  {}: {:.4}s", t.stage, t.seconds); }
    let md = to_markdown(&result.document, &MarkdownPolicy::default());
    println!("--- markdown (first 2000 chars) ---");
    println!("{}", &md.chars().take(2000).collect::<String>());
    let json = to_json(&result.document).unwrap();
    println!("--- json length: {} ---", json.len());
}
