//! Answers one question entirely from recorded transcripts, then prints
//! the run record. No model, detector or video decoder is contacted.
//!
//! cargo run --example ask_replay

use std::path::Path;

use vidqa::backends::Backends;
use vidqa::config::ReplayMode;
use vidqa::{run_question_at, EngineConfig, QuestionSpec};

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/minibench");
    let cfg = EngineConfig {
        replay_mode: ReplayMode::Replay,
        cache_dir: fixtures.join("traces"),
        ..EngineConfig::default()
    };
    let backends = Backends::from_config(&cfg).unwrap();

    let mut question = QuestionSpec::with_options(
        "What does the girl do after she puts down the cup?",
        ["drinks water", "sits on the sofa", "opens the door", "picks up a phone", "waves at the camera"],
    );
    question.question_type_tag = Some("T".into());

    match run_question_at(&backends, &cfg, &fixtures.join("videos/q02.mp4"), &question) {
        Ok(record) => {
            let answer = record.final_answer.as_ref().unwrap();
            println!("answer {} ({:?}) after {} model calls", answer.answer, answer.provenance, record.model_calls());
            println!("{}", record.stable_json());
        }
        Err(failure) => eprintln!("{failure}"),
    }
}
