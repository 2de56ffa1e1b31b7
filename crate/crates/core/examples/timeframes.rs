//! The `<<MM:SS,MM:SS>>` timeframe notation used in captions and questions.
//!
//! cargo run --example timeframes

use vidqa::time::{format_timeframe, parse_timeframe_token, scan_timeframes, union_window, Interval};

fn main() {
    let token = parse_timeframe_token("<<00:12,00:05>>: a dog jumps the fence").unwrap();
    println!(
        "{} caption={:?} swapped={}",
        format_timeframe(&token.interval),
        token.caption,
        token.swapped
    );

    let text = "The cup is lifted at <<00:03,00:04>> and again at <<01:10,01:15>>; <<xx,yy>> is ignored.";
    let found: Vec<Interval> = scan_timeframes(text).into_iter().map(|t| t.interval).collect();
    for iv in &found {
        println!("found {} ({} s long)", format_timeframe(iv), iv.duration());
    }

    let window = union_window(&found, 1.0).unwrap();
    println!("covering window padded by 1 s: {}", format_timeframe(&window));
    println!("clamped to a 72 s video: {}", format_timeframe(&window.clamp_to(72.0)));
}
