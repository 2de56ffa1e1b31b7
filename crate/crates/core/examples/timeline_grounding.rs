//! Raw detector output to per-target appearance intervals: confidence
//! filter, per-class NMS, then gap bridging.
//!
//! cargo run --example timeline_grounding

use vidqa::backends::FrameDetections;
use vidqa::grounding::{clean_detections, consolidate_timeline, BoundingBox, Detection};

fn det(class: &str, confidence: f64, x: f64) -> Detection {
    Detection {
        class_name: class.into(),
        confidence,
        bbox: BoundingBox::new(x, 20.0, x + 40.0, 60.0).unwrap(),
    }
}

fn main() {
    let fps = 2.0;
    // a cup is visible for the first 3 s, missing for one frame at 1.5 s,
    // then again from 5 s; a person is seen throughout
    let frames: Vec<FrameDetections> = (0..14)
        .map(|i| {
            let t = i as f64 / fps;
            let mut dets = vec![det("person", 0.9, 100.0), det("person", 0.6, 102.0)];
            if (t <= 3.0 && t != 1.5) || t >= 5.0 {
                dets.push(det("cup", 0.4, 10.0));
            }
            dets.push(det("cup", 0.02, 200.0));
            dets.push(det("lamp", 0.8, 300.0));
            FrameDetections { timestamp_s: t, detections: dets }
        })
        .collect();

    let targets = vec!["cup".to_string(), "person".to_string()];
    let (cleaned, foreign) = clean_detections(frames, &targets, 0.05, 0.1);
    println!("discarded {foreign} detections of unrequested classes");
    println!("frame 0 after filtering: {} detections", cleaned[0].detections.len());

    for tau_t in [0.75, 1.5, 2.5] {
        let timeline = consolidate_timeline(&cleaned, &targets, tau_t).unwrap();
        println!("\ntau_t = {tau_t}");
        print!("{}", timeline.render());
    }
}
