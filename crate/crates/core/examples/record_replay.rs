//! Records a run against scripted backends, then replays it with backends
//! that refuse every live call.
//!
//! cargo run --example record_replay

use serde_json::json;
use vidqa::backends::mock::{ScriptedDetector, ScriptedModel, StubVideo};
use vidqa::backends::{Backends, ModelClient, Recorder, TranscriptStore, VideoMeta, WireRequest};
use vidqa::grounding::{BoundingBox, Detection};
use vidqa::prompts;
use vidqa::{run_question, EngineConfig, QuestionSpec};

fn scripted(req: &WireRequest) -> Result<String, vidqa::backends::BackendError> {
    let p = req.prompt.as_str();
    let v = if p.starts_with(prompts::VLLM_ANALYZER.text) {
        json!({"reasoning": "The ball rolls under the couch at <<00:02,00:03>>.", "answer": "under the couch"})
    } else if p.starts_with(prompts::VLLM_CAPTIONER.text) {
        json!({"timeframes": ["<<00:00,00:02>>: a ball rolls across the floor", "<<00:02,00:04>>: the floor is empty"]})
    } else if p.starts_with(prompts::VLLM_TARGET_FINDER.text) {
        json!({"targets": ["ball", "couch"]})
    } else {
        json!({"reasoning": "The ball disappears near the couch.", "disagree": false})
    };
    Ok(v.to_string())
}

fn build(model: std::sync::Arc<ScriptedModel>, detector: std::sync::Arc<ScriptedDetector>, recorder: Recorder) -> Backends {
    let video = StubVideo::new(2.0, 8);
    let models = ModelClient::new(model, recorder.clone(), 2).with_trimmer(video.clone());
    Backends::new(models, detector, video, recorder)
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let meta = VideoMeta {
        path: "ball.mp4".into(),
        fps: 2.0,
        frame_count: 8,
        duration_s: 4.0,
        width: 64,
        height: 48,
        sha256: "ef".repeat(32),
    };
    let question = QuestionSpec::open("Where does the ball go?");
    let cfg = EngineConfig::default();

    let detector = ScriptedDetector::new(|t, _| {
        let ball = BoundingBox::new(10.0 * t, 30.0, 10.0 * t + 8.0, 38.0).unwrap();
        let couch = BoundingBox::new(30.0, 20.0, 60.0, 40.0).unwrap();
        let mut out = vec![Detection { class_name: "couch".into(), confidence: 0.9, bbox: couch }];
        if t < 2.5 {
            out.push(Detection { class_name: "ball".into(), confidence: 0.8, bbox: ball });
        }
        out
    });
    let store = TranscriptStore::open(dir.path()).unwrap();
    let recorded = run_question(&build(ScriptedModel::responder(scripted), detector, Recorder::record(store)), &cfg, &meta, &question).unwrap();
    println!("recorded {} transcripts", std::fs::read_dir(dir.path()).unwrap().count());

    let offline = ScriptedModel::offline();
    let store = TranscriptStore::open_existing(dir.path()).unwrap();
    let replayed = run_question(&build(offline.clone(), ScriptedDetector::offline(), Recorder::replay(store)), &cfg, &meta, &question).unwrap();
    println!("replayed answer: {}", replayed.final_answer.as_ref().unwrap().answer);
    println!("identical: {}", recorded.stable_json() == replayed.stable_json());
    println!("live calls during replay: {}", offline.calls());
}
