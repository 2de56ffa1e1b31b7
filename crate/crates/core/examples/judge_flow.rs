//! The judge stage's deterministic parts: the comparator prompt, turning
//! generated questions into time-scoped clarifications, and the windows
//! the VideoLLM is shown for each.
//!
//! cargo run --example judge_flow

use vidqa::analyzer::{CaptionedSegment, Rationale};
use vidqa::grounding::GroundedObjects;
use vidqa::judge::{clarification_window, comparator_prompt, parse_questions};
use vidqa::time::{format_timeframe, Interval};

fn main() {
    let rationale = Rationale {
        answer: "2".into(),
        reasoning: "She opens the door at <<00:08,00:12>>.".into(),
    };
    let captions = vec![CaptionedSegment {
        interval: Interval::new(8.0, 14.0).unwrap(),
        caption: "the girl sits down on a sofa".into(),
    }];
    let prompt = comparator_prompt(&rationale, &captions, &GroundedObjects::empty());
    println!("comparator prompt ends with:\n{}", &prompt[prompt.len().saturating_sub(260)..]);

    let raw = vec![
        "Where is the girl during <<00:08,00:12>>?".to_string(),
        "Is a door opened at any point?".to_string(),
        "What is on the table <<00:13,00:20>>?".to_string(),
        "Does anyone enter the room?".to_string(),
    ];
    let doubtful = [Interval::new(8.0, 12.0).unwrap()];
    let duration = 15.0;
    for q in parse_questions(&raw, &doubtful, duration, 3) {
        println!(
            "{} | asks about {}{} | shown {}",
            q.text,
            format_timeframe(&q.interval),
            if q.inferred_interval { " (inferred)" } else { "" },
            format_timeframe(&clarification_window(&q, 1.0, duration))
        );
    }
}
