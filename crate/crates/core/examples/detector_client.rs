//! Talks to a running detection service: health check, then one batch of
//! synthetic frames. The endpoint comes from VIDQA_DETECTOR_ENDPOINT.
//!
//! VIDQA_DETECTOR_ENDPOINT=http://127.0.0.1:8000 cargo run --example detector_client

use image::{Rgb, RgbImage};
use vidqa::backends::{detect_batch, DetectionTransport, HttpDetectionTransport};

fn main() {
    let endpoint = std::env::var("VIDQA_DETECTOR_ENDPOINT").unwrap_or_else(|_| "http://127.0.0.1:8000".into());
    let transport = HttpDetectionTransport::new(&endpoint, 30).unwrap();
    match transport.health() {
        Ok(info) => println!("detector at {endpoint}: {info}"),
        Err(e) => {
            eprintln!("detector at {endpoint} is not reachable: {e}");
            std::process::exit(1);
        }
    }
    let mut frame = RgbImage::from_pixel(320, 240, Rgb([240, 240, 240]));
    for x in 100..180 {
        for y in 80..160 {
            frame.put_pixel(x, y, Rgb([200, 30, 30]));
        }
    }
    let classes = vec!["red square".to_string(), "person".to_string()];
    match detect_batch(&transport, &[frame], &classes, 0.05, 0.1) {
        Ok(per_frame) => {
            for d in &per_frame[0] {
                println!("{} {:.2} {:?}", d.class_name, d.confidence, d.bbox.coords());
            }
        }
        Err(e) => eprintln!("detect failed: {e}"),
    }
}
