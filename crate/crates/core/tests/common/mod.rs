//! Scripted scenarios behind the committed mini-benchmark fixtures, plus
//! helpers to build backends around them.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use vidqa::backends::mock::{ScriptedDetector, ScriptedModel, StubVideo};
use vidqa::backends::{Backends, BackendError, ModelClient, Recorder, TranscriptStore, WireRequest};
use vidqa::grounding::{BoundingBox, Detection};
use vidqa::prompts;

pub const FPS: f64 = 2.0;
pub const FRAMES: u64 = 40;

pub fn fixture_dir() -> PathBuf {
    // relative to the crate root, where cargo runs tests
    PathBuf::from("tests/fixtures/minibench")
}

pub struct Scenario {
    pub id: &'static str,
    pub tag: &'static str,
    pub question: &'static str,
    pub options: [&'static str; 5],
    pub truth: usize,
    /// Raw first-sight responses by attempt.
    pub first_sight: &'static [&'static str],
    pub captions: &'static str,
    pub targets: &'static str,
    pub comparator: &'static str,
    pub questions: Option<&'static str>,
    /// (clarification question text, raw answer)
    pub qa: &'static [(&'static str, &'static str)],
    pub refine: Option<&'static str>,
    pub expect_answer: &'static str,
    pub expect_option: Option<usize>,
    pub expect_refined: bool,
    pub expect_calls: usize,
}

impl Scenario {
    pub fn expect_correct(&self) -> bool {
        self.expect_option == Some(self.truth)
    }

    pub fn video_name(&self) -> String {
        format!("{}.mp4", self.id)
    }

    pub fn manifest_line(&self) -> String {
        serde_json::json!({
            "id": self.id,
            "video": format!("videos/{}", self.video_name()),
            "question": self.question,
            "options": self.options,
            "answer": self.truth,
            "type_tag": self.tag,
        })
        .to_string()
    }
}

pub const SCENARIOS: [Scenario; 10] = [
    Scenario {
        id: "q01",
        tag: "C",
        question: "Why did the man pick up the spoon?",
        options: ["to stir the batter", "to eat soup", "to hit a drum", "to clean it", "to hand it to a child"],
        truth: 0,
        first_sight: &[r#"{"reasoning":"The man picks up the spoon at <<00:02,00:05>> and stirs the bowl of batter.","answer":"0"}"#],
        captions: r#"{"timeframes":["<<00:00,00:05>>: a man stands at a kitchen counter next to a bowl","<<00:05,00:12>>: he stirs batter in the bowl with a spoon"]}"#,
        targets: r#"{"targets":["spoon","bowl","man"]}"#,
        comparator: r#"{"reasoning":"There is no disagreement between the reasoning and the grounding.","disagree":false}"#,
        questions: None,
        qa: &[],
        refine: None,
        expect_answer: "0",
        expect_option: Some(0),
        expect_refined: false,
        expect_calls: 4,
    },
    Scenario {
        id: "q02",
        tag: "T",
        question: "What does the girl do after she puts down the cup?",
        options: ["drinks water", "sits on the sofa", "opens the door", "picks up a phone", "waves at the camera"],
        truth: 1,
        first_sight: &[r#"{"reasoning":"After putting the cup down around <<00:06,00:08>> the girl walks to the door and opens it.","answer":"2"}"#],
        captions: r#"{"timeframes":["<<00:00,00:06>>: a girl drinks from a cup in a living room","<<00:06,00:08>>: she puts the cup on a table","<<00:08,00:14>>: the girl sits down on a sofa"]}"#,
        targets: r#"{"targets":["girl","cup","door","sofa"]}"#,
        comparator: r#"{"reasoning":"The reasoning places the girl at the door in <<00:08,00:12>>, but the captions and detections show her on the sofa and no door is detected.","disagree":true}"#,
        questions: Some(r#"{"questions":["Where is the girl during <<00:08,00:12>>?","Is a door opened during <<00:10,00:14>>?"]}"#),
        qa: &[
            ("Where is the girl during <<00:08,00:12>>?", r#"{"answer":"sitting on the sofa"}"#),
            ("Is a door opened during <<00:10,00:14>>?", r#"{"answer":"unanswerable"}"#),
        ],
        refine: Some(r#"{"reasoning":"The clarifications show that she sits on the sofa after putting the cup down; no door appears.","answer":"1"}"#),
        expect_answer: "1",
        expect_option: Some(1),
        expect_refined: true,
        expect_calls: 8,
    },
    Scenario {
        id: "q03",
        tag: "D",
        question: "What color is the dog's collar?",
        options: ["red", "blue", "green", "black", "white"],
        truth: 0,
        first_sight: &[r#"{"reasoning":"The dog is visible at <<00:01,00:09>> and its collar looks blue.","answer":"blue"}"#],
        captions: r#"{"timeframes":["<<00:00,00:10>>: a dog runs across a lawn"]}"#,
        targets: r#"{"targets":["dog","collar"]}"#,
        comparator: r#"{"reasoning":"No disagreement found.","disagree":false}"#,
        questions: None,
        qa: &[],
        refine: None,
        expect_answer: "blue",
        expect_option: Some(1),
        expect_refined: false,
        expect_calls: 4,
    },
    Scenario {
        id: "q04",
        tag: "C",
        question: "Why is the boy laughing?",
        options: ["he fell down", "a dog licks him", "he sees a clown", "his friend tickles him", "he wins a game"],
        truth: 3,
        first_sight: &[r#"{"reasoning":"His friend tickles him from <<00:03,00:07>> and he starts laughing.","answer":"3"}"#],
        captions: r#"{"timeframes":["<<00:00,00:03>>: two boys sit on a bench","<<00:03,00:08>>: one boy tickles the other, who laughs"]}"#,
        targets: r#"{"targets":["boy","friend"]}"#,
        comparator: r#"{"reasoning":"The tickling may start slightly earlier, around <<00:02,00:03>>, but this does not change the answer.","disagree":true}"#,
        questions: Some(r#"{"questions":[]}"#),
        qa: &[],
        refine: None,
        expect_answer: "3",
        expect_option: Some(3),
        expect_refined: false,
        expect_calls: 5,
    },
    Scenario {
        id: "q05",
        tag: "T",
        question: "What happens right before the car stops?",
        options: ["it honks", "it turns left", "a cyclist passes", "the light turns green", "a pedestrian crosses"],
        truth: 4,
        first_sight: &[
            "The answer is 4 because a pedestrian crosses.",
            r#"{"reasoning":"A pedestrian crosses in front of the car at <<00:05,00:07>> and the car stops.","answer":"4"}"#,
        ],
        captions: r#"{"timeframes":["<<00:00,00:05>>: a car drives down a street","<<00:05,00:07>>: a pedestrian crosses","<<00:07,00:10>>: the car is stopped"]}"#,
        targets: r#"{"targets":["car","pedestrian"]}"#,
        comparator: r#"{"reasoning":"No disagreement.","disagree":false}"#,
        questions: None,
        qa: &[],
        refine: None,
        expect_answer: "4",
        expect_option: Some(4),
        expect_refined: false,
        expect_calls: 4,
    },
    Scenario {
        id: "q06",
        tag: "D",
        question: "How many players are on the court?",
        options: ["one", "two", "three", "four", "five"],
        truth: 1,
        first_sight: &[r#"{"reasoning":"Two players in white outfits rally across the net throughout <<00:00,00:15>>.","answer":"1"}"#],
        captions: r#"{"timeframes":["<<00:00,00:15>>: two players rally on a tennis court","not a timeframe","<<00:15,00:19>>: the crowd applauds"]}"#,
        targets: r#"{"targets":["Ball","ball","player in white outfit","net","referee","crowd","scoreboard"]}"#,
        comparator: r#"{"reasoning":"No disagreement.","disagree":false}"#,
        questions: None,
        qa: &[],
        refine: None,
        expect_answer: "1",
        expect_option: Some(1),
        expect_refined: false,
        expect_calls: 4,
    },
    Scenario {
        id: "q07",
        tag: "C",
        question: "How does the chef cut the onion?",
        options: ["with his right hand", "with his left hand", "with scissors", "with a machine", "he does not cut it"],
        truth: 1,
        first_sight: &[r#"{"reasoning":"The chef holds the knife in his right hand at <<00:04,00:06>> while cutting.","answer":"0"}"#],
        captions: r#"{"timeframes":["<<00:00,00:04>>: a chef peels an onion","<<00:04,00:09>>: the chef slices the onion with a knife held in the left hand"]}"#,
        targets: r#"{"targets":["knife","onion","chef"]}"#,
        comparator: r#"{"reasoning":"The captions at <<00:04,00:06>> say the knife is in the left hand, contradicting the reasoning.","disagree":true}"#,
        questions: Some(r#"{"questions":["Which hand holds the knife?"]}"#),
        qa: &[("Which hand holds the knife?", r#"{"answer":"the left hand"}"#)],
        refine: Some(r#"{"reasoning":"The clarification shows the knife is held in the left hand.","answer":"left hand"}"#),
        expect_answer: "left hand",
        expect_option: Some(1),
        expect_refined: true,
        expect_calls: 7,
    },
    Scenario {
        id: "q08",
        tag: "T",
        question: "What does the woman do after closing the laptop?",
        options: ["makes a call", "leaves the room", "drinks coffee", "reads a book", "turns off the lamp"],
        truth: 3,
        first_sight: &[r#"{"reasoning":"She closes the laptop at <<00:03,00:04>> and then reads a book.","answer":"3"}"#],
        captions: r#"{"timeframes":["<<00:00,00:04>>: a woman types on a laptop and closes it","<<00:04,00:12>>: she picks up a mug"]}"#,
        targets: r#"{"targets":["woman","laptop","book","mug"]}"#,
        comparator: r#"{"reasoning":"The captions at <<00:04,00:12>> show her picking up a mug, not a book.","disagree":true}"#,
        questions: Some(r#"{"questions":["What does the woman hold during <<00:04,00:12>>?"]}"#),
        qa: &[("What does the woman hold during <<00:04,00:12>>?", r#"{"answer":"a mug"}"#)],
        refine: Some(r#"{"reasoning":"She holds a mug after closing the laptop, so she drinks coffee.","answer":"2"}"#),
        expect_answer: "2",
        expect_option: Some(2),
        expect_refined: true,
        expect_calls: 7,
    },
    Scenario {
        id: "q09",
        tag: "D",
        question: "Where is the cat sleeping?",
        options: ["on the bed", "under the table", "in a box", "on the chair", "on the windowsill"],
        truth: 4,
        first_sight: &[r#"{"reasoning":"The cat sleeps by the window during <<00:00,00:19>>; option 5 in counting order.","answer":"5"}"#],
        captions: r#"{"timeframes":["<<00:00,00:19>>: a cat sleeps on a windowsill"]}"#,
        targets: r#"{"targets":["cat","window"]}"#,
        comparator: r#"{"reasoning":"No disagreement.","disagree":false}"#,
        questions: None,
        qa: &[],
        refine: None,
        expect_answer: "5",
        expect_option: Some(4),
        expect_refined: false,
        expect_calls: 4,
    },
    Scenario {
        id: "q10",
        tag: "C",
        question: "Why does the man open the umbrella?",
        options: ["it starts raining", "to block the sun", "to dance", "to dry it", "to show a friend"],
        truth: 0,
        first_sight: &[r#"{"reasoning":"The sun comes out at <<00:02,00:04>> so he opens the umbrella for shade.","answer":"1"}"#],
        captions: r#"{"timeframes":["<<00:00,00:03>>: dark clouds over a street","<<00:03,00:10>>: rain falls and a man opens an umbrella"]}"#,
        targets: r#"{"targets":["man","umbrella","rain"]}"#,
        comparator: r#"{"reasoning":"Captions show rain at <<00:03,00:10>>, not sun at <<00:02,00:04>>.","disagree":true}"#,
        questions: Some(r#"{"questions":["Is it raining during <<00:03,00:06>>?","Is the sun visible during <<00:02,00:04>>?","What does the man do at <<00:05,00:07>>?","Are there clouds at <<00:00,00:03>>?","Is the street wet at <<00:08,00:10>>?"]}"#),
        qa: &[
            ("Is it raining during <<00:03,00:06>>?", r#"{"answer":"yes"}"#),
            ("Is the sun visible during <<00:02,00:04>>?", r#"{"answer":"no"}"#),
            ("What does the man do at <<00:05,00:07>>?", r#"{"answer":"opens an umbrella"}"#),
        ],
        refine: Some(r#"{"reasoning":"It is raining when he opens the umbrella.","answer":"0"}"#),
        expect_answer: "0",
        expect_option: Some(0),
        expect_refined: true,
        expect_calls: 9,
    },
];

/// The four items of the small tagged suite: three correct, one wrong.
pub const BENCH4: [&str; 4] = ["q01", "q02", "q03", "q04"];

fn scenario_for(req: &WireRequest) -> Option<&'static Scenario> {
    let prompt = &req.prompt;
    SCENARIOS.iter().find(|s| {
        let by_media = req
            .media_ref
            .as_deref()
            .is_some_and(|m| m.ends_with(&s.video_name()));
        by_media || prompt.contains(s.question) || prompt.contains(first_reasoning(s))
    })
}

fn first_reasoning(s: &Scenario) -> &'static str {
    let last = s.first_sight.last().unwrap();
    let start = last.find(r#""reasoning":""#).unwrap() + 13;
    let end = start + last[start..].find('"').unwrap();
    &last[start..end]
}

/// Answers every model call of every scenario.
pub fn respond(req: &WireRequest) -> Result<String, BackendError> {
    let miss = || BackendError::Transport(format!("no scripted answer for prompt {:?}", &req.prompt[..80.min(req.prompt.len())]));
    let p = &req.prompt;
    if p.starts_with(prompts::VLLM_QA.text) {
        // trimmed media has a temporary name, so match on the question alone
        return SCENARIOS
            .iter()
            .flat_map(|s| s.qa.iter())
            .find(|(q, _)| p.contains(q))
            .map(|(_, a)| a.to_string())
            .ok_or_else(miss);
    }
    let s = scenario_for(req).ok_or_else(miss)?;
    let text = if p.starts_with(prompts::VLLM_ANALYZER.text) {
        let attempt = usize::from(p.contains("did not match the required JSON schema"));
        s.first_sight[attempt.min(s.first_sight.len() - 1)]
    } else if p.starts_with(prompts::VLLM_CAPTIONER.text) {
        s.captions
    } else if p.starts_with(prompts::VLLM_TARGET_FINDER.text) {
        s.targets
    } else if p.starts_with(prompts::LLM_COMPARATOR.text) {
        s.comparator
    } else if p.starts_with(prompts::LLM_QUESTION_GENERATOR.text) {
        s.questions.ok_or_else(miss)?
    } else if p.starts_with(prompts::LLM_FINAL_REASONER.text) {
        s.refine.ok_or_else(miss)?
    } else {
        return Err(miss());
    };
    Ok(text.to_string())
}

fn bbox(x: f64) -> BoundingBox {
    BoundingBox::new(x, 10.0, x + 20.0, 30.0).unwrap()
}

/// Deterministic per-timestamp detector output. Target `k` is seen from
/// `1 + 2k` to `9 + 2k` seconds with a one-frame dropout at 4 s; anything
/// named like a door is never seen. Each frame also carries a duplicate
/// box for NMS, a low-confidence box and a detection of an unrequested
/// class.
pub fn detections(t: f64, classes: &[String]) -> Vec<Detection> {
    let mut out = Vec::new();
    for (k, class) in classes.iter().enumerate() {
        let (start, end) = (1.0 + 2.0 * k as f64, 9.0 + 2.0 * k as f64);
        if class.contains("door") || t < start || t > end || t == 4.0 {
            continue;
        }
        let x = 30.0 * k as f64;
        out.push(Detection { class_name: class.clone(), confidence: 0.8, bbox: bbox(x) });
        out.push(Detection { class_name: class.clone(), confidence: 0.6, bbox: bbox(x + 1.0) });
        out.push(Detection { class_name: class.clone(), confidence: 0.03, bbox: bbox(x + 200.0) });
    }
    if t == 0.0 {
        out.push(Detection { class_name: "shadow".into(), confidence: 0.9, bbox: bbox(0.0) });
    }
    out
}

pub struct Doubles {
    pub model: Arc<ScriptedModel>,
    pub detector: Arc<ScriptedDetector>,
    pub video: Arc<StubVideo>,
}

impl Doubles {
    pub fn total_calls(&self) -> usize {
        self.model.calls() + self.detector.calls() + self.video.calls()
    }
}

/// Backends whose transports are the scripted scenarios.
pub fn scripted_backends(recorder: Recorder) -> (Backends, Doubles) {
    let doubles = Doubles {
        model: ScriptedModel::responder(respond),
        detector: ScriptedDetector::new(detections),
        video: StubVideo::new(FPS, FRAMES),
    };
    (wire(recorder, &doubles), doubles)
}

/// Backends that can only serve from `store`; the doubles count any leak.
pub fn replay_backends(store: &Path) -> (Backends, Doubles) {
    let doubles = Doubles {
        model: ScriptedModel::offline(),
        detector: ScriptedDetector::offline(),
        video: StubVideo::new(FPS, FRAMES),
    };
    let recorder = Recorder::replay(TranscriptStore::open_existing(store).unwrap());
    (wire(recorder, &doubles), doubles)
}

fn wire(recorder: Recorder, d: &Doubles) -> Backends {
    let models = ModelClient::new(d.model.clone(), recorder.clone(), 2).with_trimmer(d.video.clone());
    Backends::new(models, d.detector.clone(), d.video.clone(), recorder)
}
