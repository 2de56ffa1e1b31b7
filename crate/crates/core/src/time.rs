//! Timecodes and closed time intervals.
//!
//! Every model in the pipeline speaks the same temporal dialect: `mm:ss`
//! timecodes, paired into `<<mm:ss,mm:ss>>` timeframe tokens and optionally
//! followed by `: caption`. This module owns that grammar and the small amount
//! of interval algebra the rest of the crate needs.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeError {
    #[error("malformed timecode {0:?}")]
    MalformedTimecode(String),
    #[error("malformed timeframe {0:?}")]
    MalformedTimeframe(String),
    #[error("invalid interval [{start}, {end}]")]
    InvalidInterval { start: f64, end: f64 },
    #[error("empty interval list")]
    EmptyIntervalList,
}

/// A `mm:ss` position. Minutes are unbounded so videos longer than an hour
/// keep the same two-field format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timecode {
    minutes: u32,
    seconds: u8,
}

impl Timecode {
    pub fn new(minutes: u32, seconds: u8) -> Result<Self, TimeError> {
        if seconds > 59 {
            return Err(TimeError::MalformedTimecode(format!("{minutes}:{seconds}")));
        }
        Ok(Self { minutes, seconds })
    }

    /// Floors a position in seconds to a whole-second timecode.
    pub fn from_seconds_floor(seconds: f64) -> Self {
        let whole = if seconds.is_finite() && seconds > 0.0 {
            seconds.floor() as u64
        } else {
            0
        };
        Self {
            minutes: (whole / 60).min(u32::MAX as u64) as u32,
            seconds: (whole % 60) as u8,
        }
    }

    pub fn minutes(&self) -> u32 {
        self.minutes
    }

    pub fn seconds(&self) -> u8 {
        self.seconds
    }

    pub fn total_seconds(&self) -> u64 {
        60 * self.minutes as u64 + self.seconds as u64
    }
}

impl fmt::Display for Timecode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.minutes, self.seconds)
    }
}

impl FromStr for Timecode {
    type Err = TimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_timecode(s)
    }
}

/// Parses `MM:SS` where `MM` is one or more digits and `SS` is exactly two.
pub fn parse_timecode(token: &str) -> Result<Timecode, TimeError> {
    let malformed = || TimeError::MalformedTimecode(token.to_string());
    let (mm, ss) = token.split_once(':').ok_or_else(malformed)?;
    if mm.is_empty() || !mm.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    if ss.len() != 2 || !ss.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    let minutes: u32 = mm.parse().map_err(|_| malformed())?;
    let seconds: u8 = ss.parse().map_err(|_| malformed())?;
    Timecode::new(minutes, seconds).map_err(|_| malformed())
}

/// A closed span `[start_s, end_s]` in seconds. Construction enforces
/// `0 <= start_s <= end_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterval", into = "RawInterval")]
pub struct Interval {
    start_s: f64,
    end_s: f64,
}

#[derive(Serialize, Deserialize)]
struct RawInterval {
    start_s: f64,
    end_s: f64,
}

impl TryFrom<RawInterval> for Interval {
    type Error = TimeError;

    fn try_from(raw: RawInterval) -> Result<Self, Self::Error> {
        Interval::new(raw.start_s, raw.end_s)
    }
}

impl From<Interval> for RawInterval {
    fn from(iv: Interval) -> Self {
        RawInterval {
            start_s: iv.start_s,
            end_s: iv.end_s,
        }
    }
}

impl Interval {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self, TimeError> {
        if !start_s.is_finite() || !end_s.is_finite() || start_s < 0.0 || start_s > end_s {
            return Err(TimeError::InvalidInterval {
                start: start_s,
                end: end_s,
            });
        }
        Ok(Self { start_s, end_s })
    }

    /// A zero-length interval at `t`.
    pub fn instant(t: f64) -> Result<Self, TimeError> {
        Self::new(t, t)
    }

    pub fn start_s(&self) -> f64 {
        self.start_s
    }

    pub fn end_s(&self) -> f64 {
        self.end_s
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.start_s <= other.start_s && other.end_s <= self.end_s
    }

    pub fn contains_time(&self, t: f64) -> bool {
        self.start_s <= t && t <= self.end_s
    }

    /// Grows both ends by `pad_s`, clamping the start at zero.
    pub fn padded(&self, pad_s: f64) -> Interval {
        Interval {
            start_s: (self.start_s - pad_s).max(0.0),
            end_s: self.end_s + pad_s,
        }
    }

    /// Clamps to `[0, duration_s]`. An interval lying entirely past the end
    /// collapses onto `duration_s`.
    pub fn clamp_to(&self, duration_s: f64) -> Interval {
        let limit = duration_s.max(0.0);
        let start_s = self.start_s.min(limit);
        let end_s = self.end_s.min(limit).max(start_s);
        Interval { start_s, end_s }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_timeframe(self))
    }
}

/// Result of parsing one `<<MM:SS,MM:SS>>[: caption]` token.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTimeframe {
    pub interval: Interval,
    pub caption: Option<String>,
    /// The model emitted the endpoints in reverse order and they were swapped.
    pub swapped: bool,
}

static TIMEFRAME_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<<\s*([^<>,]*?)\s*,\s*([^<>,]*?)\s*>>").unwrap());

fn interval_from_codes(a: &str, b: &str) -> Result<(Interval, bool), TimeError> {
    let start = parse_timecode(a)?.total_seconds() as f64;
    let end = parse_timecode(b)?.total_seconds() as f64;
    let swapped = start > end;
    let (lo, hi) = if swapped { (end, start) } else { (start, end) };
    Ok((Interval::new(lo, hi)?, swapped))
}

/// Parses a caption line such as `<<00:05,00:12>>: person enters room`.
///
/// Reversed endpoints are swapped and flagged rather than rejected.
pub fn parse_timeframe_token(token: &str) -> Result<ParsedTimeframe, TimeError> {
    let malformed = || TimeError::MalformedTimeframe(token.to_string());
    let caps = TIMEFRAME_RE.captures(token).ok_or_else(malformed)?;
    let (interval, swapped) =
        interval_from_codes(&caps[1], &caps[2]).map_err(|_| malformed())?;
    let rest = &token[caps.get(0).unwrap().end()..];
    let caption = rest
        .trim_start_matches(|c: char| c == ':' || c == '-' || c.is_whitespace())
        .trim_end();
    Ok(ParsedTimeframe {
        interval,
        caption: (!caption.is_empty()).then(|| caption.to_string()),
        swapped,
    })
}

/// Every parsable timeframe token in free text, in order of appearance.
/// Unparsable tokens are skipped.
pub fn scan_timeframes(text: &str) -> Vec<ParsedTimeframe> {
    TIMEFRAME_RE
        .captures_iter(text)
        .filter_map(|caps| {
            interval_from_codes(&caps[1], &caps[2])
                .ok()
                .map(|(interval, swapped)| ParsedTimeframe {
                    interval,
                    caption: None,
                    swapped,
                })
        })
        .collect()
}

/// Renders `<<MM:SS,MM:SS>>`, flooring both endpoints to whole seconds.
pub fn format_timeframe(iv: &Interval) -> String {
    format!(
        "<<{},{}>>",
        Timecode::from_seconds_floor(iv.start_s),
        Timecode::from_seconds_floor(iv.end_s)
    )
}

/// Smallest interval covering every input, grown by `pad_s` on both sides
/// and clamped below at zero.
pub fn union_window(ivs: &[Interval], pad_s: f64) -> Result<Interval, TimeError> {
    let first = ivs.first().ok_or(TimeError::EmptyIntervalList)?;
    let (lo, hi) = ivs.iter().fold((first.start_s, first.end_s), |(lo, hi), iv| {
        (lo.min(iv.start_s), hi.max(iv.end_s))
    });
    Ok(Interval::new(lo, hi)?.padded(pad_s.max(0.0)))
}
