//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero when any fails.
//!
//! ```text
//! cargo test -p vidqa --test acceptance
//! ```

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde_json::{json, Value};

use vidqa::backends::mock::{ScriptedDetector, ScriptedModel, StubVideo};
use vidqa::backends::{Backends, FrameDetections, ModelClient, Recorder, VideoMeta, WireRequest};
use vidqa::bench::{load_dataset, run_benchmark, ManifestFormat};
use vidqa::config::load_config;
use vidqa::grounding::{consolidate_timeline, nms, BoundingBox, Detection};
use vidqa::prompts::{self, ALL_TEMPLATES};
use vidqa::time::{format_timeframe, parse_timeframe_token, Interval};
use vidqa::{run_question, run_question_at, EngineConfig, Provenance, QuestionSpec};

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn within(limit: Duration, started: Instant) -> Result<String, String> {
    let took = started.elapsed();
    if took <= limit {
        Ok(format!("{:.2}s", took.as_secs_f64()))
    } else {
        Err(format!("took {:.2}s, limit {:.0}s", took.as_secs_f64(), limit.as_secs_f64()))
    }
}

// ---- timeline ----

/// Presence matrix: per frame, which of up to three targets is detected.
fn timeline_case() -> impl Strategy<Value = (f64, f64, Vec<Vec<bool>>)> {
    (1u32..=30, 1u32..=500, 1usize..=100).prop_flat_map(|(fps, tau_milli, n)| {
        (
            Just(fps as f64),
            Just(tau_milli as f64 / 100.0),
            prop::collection::vec(prop::collection::vec(any::<bool>(), 3), n),
        )
    })
}

/// Independent oracle: `[ts[a], ts[b]]` is an appearance iff every step
/// inside is shorter than `tau_t` and both neighbours outside are at least
/// `tau_t` away (or absent).
fn timeline_oracle(ts: &[f64], tau_t: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for a in 0..ts.len() {
        for b in a..ts.len() {
            let inner = (a..b).all(|i| ts[i + 1] - ts[i] < tau_t);
            let left = a == 0 || ts[a] - ts[a - 1] >= tau_t;
            let right = b + 1 == ts.len() || ts[b + 1] - ts[b] >= tau_t;
            if inner && left && right {
                out.push((ts[a], ts[b]));
            }
        }
    }
    out
}

fn check_timeline() -> Result<String, String> {
    let started = Instant::now();
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let mut runner = runner(1000);
    runner
        .run(&timeline_case(), |(fps, tau_t, presence)| {
            let frames: Vec<FrameDetections> = presence
                .iter()
                .enumerate()
                .map(|(i, row)| FrameDetections {
                    timestamp_s: i as f64 / fps,
                    detections: names
                        .iter()
                        .zip(row)
                        .filter(|(_, &p)| p)
                        .map(|(n, _)| Detection {
                            class_name: n.clone(),
                            confidence: 0.9,
                            bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
                        })
                        .collect(),
                })
                .collect();
            let timeline = consolidate_timeline(&frames, &names, tau_t).unwrap();
            for (k, name) in names.iter().enumerate() {
                let ts: Vec<f64> = presence
                    .iter()
                    .enumerate()
                    .filter(|(_, row)| row[k])
                    .map(|(i, _)| i as f64 / fps)
                    .collect();
                let got: Vec<(f64, f64)> = timeline
                    .intervals(name)
                    .unwrap()
                    .iter()
                    .map(|iv| (iv.start_s(), iv.end_s()))
                    .collect();
                prop_assert_eq!(got, timeline_oracle(&ts, tau_t));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    within(Duration::from_secs(10), started).map(|t| format!("1000 cases, {t}"))
}

// ---- nms ----

fn nms_case() -> impl Strategy<Value = (f64, Vec<(usize, u8, [u16; 4])>)> {
    (
        1u32..=100,
        prop::collection::vec((0usize..3, 1u8..=20, [0u16..60, 0u16..60, 1u16..40, 1u16..40]), 0..=50),
    )
        .prop_map(|(tau, boxes)| (tau as f64 / 100.0, boxes))
}

fn ref_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    inter / union
}

/// O(n^2) reference: rank all boxes by (confidence desc, input index asc);
/// a box is kept iff no better-ranked kept box of its class overlaps it at
/// or above `tau`.
fn nms_reference(dets: &[Detection], tau: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut kept = vec![false; dets.len()];
    for (r, &i) in order.iter().enumerate() {
        kept[i] = order[..r].iter().all(|&j| {
            !kept[j]
                || dets[j].class_name != dets[i].class_name
                || ref_iou(dets[j].bbox.coords(), dets[i].bbox.coords()) < tau
        });
    }
    (0..dets.len()).filter(|&i| kept[i]).collect()
}

fn check_nms() -> Result<String, String> {
    let started = Instant::now();
    let mut runner = runner(500);
    runner
        .run(&nms_case(), |(tau, raw)| {
            let dets: Vec<Detection> = raw
                .iter()
                .map(|&(c, conf, [x, y, w, h])| Detection {
                    class_name: format!("class{c}"),
                    confidence: conf as f64 / 20.0,
                    bbox: BoundingBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap(),
                })
                .collect();
            let expected: Vec<Detection> = nms_reference(&dets, tau).into_iter().map(|i| dets[i].clone()).collect();
            prop_assert_eq!(nms(&dets, tau), expected);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    within(Duration::from_secs(5), started).map(|t| format!("500 cases, {t}"))
}

// ---- defaults ----

fn check_defaults() -> Result<String, String> {
    let cfg = load_config(None, &HashMap::new()).map_err(|e| e.to_string())?;
    let got = (cfg.tau_c, cfg.tau_nms, cfg.tau_t, cfg.max_targets, cfg.max_clarifications);
    if got == (0.05, 0.1, 1.5, 4, 3) {
        Ok(format!("{got:?}"))
    } else {
        Err(format!("got {got:?}"))
    }
}

// ---- prompts ----

fn check_prompts() -> Result<String, String> {
    let golden = PathBuf::from("tests/golden/prompts");
    let sub = "SUBINSTRUCTION MARKER";
    let mut slots = 0;
    for t in ALL_TEMPLATES {
        let expected = std::fs::read(golden.join(format!("{}.txt", t.name))).map_err(|e| format!("{}: {e}", t.name))?;
        let composed = t.compose(Some(sub), &[("Question", "q".into())]);
        let bytes = composed.as_bytes();
        if !bytes.starts_with(&expected) {
            return Err(format!("{} does not start with its golden text", t.name));
        }
        // whatever follows the golden bytes is the slot (if any) and the inputs
        let tail = &composed[expected.len()..];
        if t.answer_slot {
            slots += 1;
            if !tail.starts_with(sub) {
                return Err(format!("{}: subinstruction not placed in the trailing slot", t.name));
            }
        } else if tail.contains(sub) {
            return Err(format!("{}: has no slot but took a subinstruction", t.name));
        }
    }
    if slots != 2 {
        return Err(format!("expected 2 slot templates, found {slots}"));
    }
    Ok(format!("{} templates", ALL_TEMPLATES.len()))
}

// ---- minibench replay ----

fn check_minibench() -> Result<String, String> {
    let dir = common::fixture_dir();
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("expected.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let items = load_dataset(&dir.join("manifest.jsonl"), ManifestFormat::Mcq).map_err(|e| e.to_string())?;
    let cfg = EngineConfig::default();
    let started = Instant::now();
    let mut reports = Vec::new();
    for _ in 0..2 {
        let (backends, doubles) = common::replay_backends(&dir.join("traces"));
        let report = run_benchmark(&backends, &cfg, &items, 4);
        if doubles.total_calls() != 0 {
            return Err(format!("{} calls reached the test doubles", doubles.total_calls()));
        }
        reports.push(report);
    }
    let timing = within(Duration::from_secs(5), started)?;
    if reports[0].to_json() != reports[1].to_json() {
        return Err("two replays produced different reports".into());
    }
    let report = &reports[0];
    let answers = expected["answers"].as_array().unwrap();
    let mut matched = 0;
    for (want, got) in answers.iter().zip(&report.items) {
        let Some(p) = &got.predicted else { continue };
        let provenance = serde_json::to_value(p.provenance).unwrap();
        let same = want["id"] == got.item_id.as_str()
            && want["answer"] == p.answer.as_str()
            && want["chosen_option_index"] == json!(p.chosen_option_index)
            && want["provenance"] == provenance
            && want["correct"] == got.correct;
        matched += usize::from(same);
    }
    if matched != answers.len() || report.items.len() != answers.len() {
        return Err(format!("{matched}/{} answers match", answers.len()));
    }
    if report.accuracy != expected["accuracy"].as_f64().unwrap() {
        return Err(format!("accuracy {} != {}", report.accuracy, expected["accuracy"]));
    }
    Ok(format!("{matched}/{} answers, accuracy {:.2}, 0 live calls, {timing}", answers.len(), report.accuracy))
}

// ---- generic scripted run ----

struct Script {
    answer: String,
    reasoning: String,
    disagree: bool,
    questions: Vec<String>,
}

fn scripted_run(script: Script) -> vidqa::RunRecord {
    let script = Arc::new(script);
    let s = script.clone();
    let model = ScriptedModel::responder(move |req: &WireRequest| {
        let p = &req.prompt;
        let v = if p.starts_with(prompts::VLLM_ANALYZER.text) {
            json!({"reasoning": s.reasoning, "answer": s.answer})
        } else if p.starts_with(prompts::VLLM_CAPTIONER.text) {
            json!({"timeframes": ["<<00:00,00:04>>: a cat sits"]})
        } else if p.starts_with(prompts::VLLM_TARGET_FINDER.text) {
            json!({"targets": ["cat"]})
        } else if p.starts_with(prompts::LLM_COMPARATOR.text) {
            json!({"reasoning": "compared", "disagree": s.disagree})
        } else if p.starts_with(prompts::LLM_QUESTION_GENERATOR.text) {
            json!({"questions": s.questions})
        } else if p.starts_with(prompts::VLLM_QA.text) {
            json!({"answer": "a cat"})
        } else {
            json!({"reasoning": "refined", "answer": "refined answer"})
        };
        Ok(v.to_string())
    });
    let detector = ScriptedDetector::new(|t, classes| {
        if t < 2.0 {
            vec![Detection {
                class_name: classes[0].clone(),
                confidence: 0.9,
                bbox: BoundingBox::new(0.0, 0.0, 5.0, 5.0).unwrap(),
            }]
        } else {
            Vec::new()
        }
    });
    let video = StubVideo::new(2.0, 20);
    let recorder = Recorder::live();
    let models = ModelClient::new(model, recorder.clone(), 2).with_trimmer(video.clone());
    let backends = Backends::new(models, detector, video, recorder);
    let meta = VideoMeta {
        path: "clip.mp4".into(),
        fps: 2.0,
        frame_count: 20,
        duration_s: 10.0,
        width: 64,
        height: 48,
        sha256: "00".repeat(32),
    };
    let q = QuestionSpec::open("What is the cat doing?");
    run_question(&backends, &EngineConfig::default(), &meta, &q).expect("scripted run completes")
}

fn text() -> impl Strategy<Value = String> {
    "[a-z][a-z ]{0,30}[a-z]"
}

fn check_short_circuit() -> Result<String, String> {
    let mut runner = runner(128);
    let case = (text(), text(), any::<bool>());
    runner
        .run(&case, |(answer, reasoning, disagree)| {
            // disagree=false, or disagree=true with no usable questions
            let record = scripted_run(Script {
                answer: answer.clone(),
                reasoning: reasoning.clone(),
                disagree,
                questions: Vec::new(),
            });
            let fin = record.final_answer.as_ref().unwrap();
            prop_assert_eq!(&fin.answer, &answer);
            prop_assert_eq!(&fin.reasoning, &reasoning);
            prop_assert_eq!(fin.provenance, Provenance::FirstSight);
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // and every recorded fixture that stops before refinement
    let dir = common::fixture_dir();
    let items = load_dataset(&dir.join("manifest.jsonl"), ManifestFormat::Mcq).map_err(|e| e.to_string())?;
    let (backends, _) = common::replay_backends(&dir.join("traces"));
    let cfg = EngineConfig::default();
    let mut checked = 0;
    for item in &items {
        let record = run_question_at(&backends, &cfg, &item.video, &item.question).map_err(|f| f.to_string())?;
        let verdict = record.verdict.as_ref().ok_or("fixture without a verdict")?;
        if verdict.disagree && !record.questions.is_empty() {
            continue;
        }
        let first = record.rationale.as_ref().unwrap();
        let fin = record.final_answer.as_ref().unwrap();
        if fin.answer != first.answer || fin.provenance != Provenance::FirstSight {
            return Err(format!("{}: final {:?} differs from first sight {:?}", item.item_id, fin.answer, first.answer));
        }
        checked += 1;
    }
    Ok(format!("128 scripted cases, {checked} fixtures"))
}

fn check_call_bound() -> Result<String, String> {
    let mut worst = 0;
    let mut runner = runner(64);
    let case = (any::<bool>(), 0usize..10);
    runner
        .run(&case, |(disagree, n)| {
            let questions = (0..n).map(|i| format!("What happens at <<00:0{},00:0{}>>?", i % 5, i % 5 + 2)).collect();
            let record = scripted_run(Script {
                answer: "sits".into(),
                reasoning: "the cat sits".into(),
                disagree,
                questions,
            });
            prop_assert!(record.model_calls() <= 9, "{} calls", record.model_calls());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let dir = common::fixture_dir();
    let items = load_dataset(&dir.join("manifest.jsonl"), ManifestFormat::Mcq).map_err(|e| e.to_string())?;
    let (backends, _) = common::replay_backends(&dir.join("traces"));
    for r in run_benchmark(&backends, &EngineConfig::default(), &items, 1).items {
        if r.model_calls > 9 {
            return Err(format!("{}: {} calls", r.item_id, r.model_calls));
        }
        worst = worst.max(r.model_calls);
    }
    Ok(format!("max {worst} on the minibench, 64 scripted cases"))
}

fn check_round_trip() -> Result<String, String> {
    let mut runner = runner(1000);
    let secs = 0u32..6000;
    runner
        .run(&(secs.clone(), secs), |(a, b)| {
            let (lo, hi) = (a.min(b) as f64, a.max(b) as f64);
            let iv = Interval::new(lo, hi).unwrap();
            let parsed = parse_timeframe_token(&format_timeframe(&iv)).unwrap();
            prop_assert_eq!(parsed.interval, iv);
            prop_assert!(!parsed.swapped);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 cases".into())
}

fn main() {
    let criteria: [(&str, fn() -> Result<String, String>); 8] = [
        ("timeline matches the merge oracle", check_timeline),
        ("nms matches the quadratic reference", check_nms),
        ("default constants", check_defaults),
        ("prompt templates match golden files", check_prompts),
        ("minibench replay", check_minibench),
        ("short-circuit keeps the first-sight answer", check_short_circuit),
        ("at most 9 model calls per question", check_call_bound),
        ("timeframe round trip", check_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name} ({detail})"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
