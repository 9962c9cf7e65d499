//! Generated frames replayed as a live capture.

use std::io;
use std::sync::Arc;

use crate::packet::capture::{CaptureSource, Frame, Paced, PlaybackControl};
use crate::time::Timestamp;

/// Repeats a frame sequence, shifting each pass by the scenario span so time
/// keeps moving forward.
pub struct LoopSource {
    frames: Vec<Frame>,
    pos: usize,
    shift_us: i64,
    span_us: i64,
    repeat: bool,
}

impl LoopSource {
    pub fn new(frames: Vec<Frame>, span_secs: u64, repeat: bool) -> Self {
        LoopSource { frames, pos: 0, shift_us: 0, span_us: span_secs.max(1) as i64 * 1_000_000, repeat }
    }
}

impl CaptureSource for LoopSource {
    fn name(&self) -> &str {
        "demo"
    }

    fn next_frame(&mut self) -> io::Result<Option<Frame>> {
        if self.pos == self.frames.len() {
            if !self.repeat || self.frames.is_empty() {
                return Ok(None);
            }
            self.pos = 0;
            self.shift_us += self.span_us;
        }
        let f = &self.frames[self.pos];
        self.pos += 1;
        Ok(Some(Frame { timestamp: Timestamp::from_micros(f.timestamp.as_micros() + self.shift_us), data: f.data.clone() }))
    }
}

pub type DemoFeed = Paced<LoopSource>;

/// Paced feed of a generated scenario. A single pass ends in the same store state as
/// replaying the scenario's pcap.
pub fn demo_feed(frames: Vec<Frame>, span_secs: u64, repeat: bool, speed: f64, control: Arc<PlaybackControl>) -> DemoFeed {
    Paced::new(LoopSource::new(frames, span_secs, repeat), speed, control)
}
