//! Scores the committed ten-question mini benchmark from its transcripts.
//!
//! cargo run --example bench_replay

use std::path::Path;

use vidqa::backends::Backends;
use vidqa::bench::{load_dataset, run_benchmark, ManifestFormat};
use vidqa::config::ReplayMode;
use vidqa::EngineConfig;

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/minibench");
    let cfg = EngineConfig {
        replay_mode: ReplayMode::Replay,
        cache_dir: fixtures.join("traces"),
        ..EngineConfig::default()
    };
    let backends = Backends::from_config(&cfg).unwrap();
    let items = load_dataset(&fixtures.join("manifest.jsonl"), ManifestFormat::Mcq).unwrap();
    let report = run_benchmark(&backends, &cfg, &items, 4);
    print!("{}", report.to_text(true));
    for item in &report.items {
        let answer = item.predicted.as_ref().map(|p| p.answer.as_str()).unwrap_or("-");
        println!("{} {:>5} answer={answer} calls={}", item.item_id, item.correct, item.model_calls);
    }
}
