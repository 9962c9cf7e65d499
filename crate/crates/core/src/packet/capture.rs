//! Packet sources. Live interfaces and pcap replay both yield timestamped Ethernet
//! frames, so everything downstream can be exercised without capture privileges.

use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::pcap::{PcapError, PcapReader};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub timestamp: Timestamp,
    pub data: Vec<u8>,
}

pub trait CaptureSource: Send {
    fn name(&self) -> &str;

    /// Next frame, `Ok(None)` at end of stream. Timestamps never go backwards.
    fn next_frame(&mut self) -> io::Result<Option<Frame>>;
}

fn to_io(e: PcapError) -> io::Error {
    match e {
        PcapError::Io(e) => e,
        other => io::Error::new(io::ErrorKind::InvalidData, other),
    }
}

pub struct PcapSource<R> {
    name: String,
    reader: PcapReader<R>,
    last: Timestamp,
}

impl PcapSource<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, PcapError> {
        let f = File::open(path)?;
        Self::new(path.display().to_string(), BufReader::new(f))
    }
}

impl<R: Read> PcapSource<R> {
    pub fn new(name: impl Into<String>, reader: R) -> Result<Self, PcapError> {
        Ok(PcapSource { name: name.into(), reader: PcapReader::new(reader)?, last: Timestamp::ZERO })
    }
}

impl<R: Read + Send> CaptureSource for PcapSource<R> {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_frame(&mut self) -> io::Result<Option<Frame>> {
        match self.reader.next_record().map_err(to_io)? {
            Some(rec) => {
                // clamp reordered records so per-source time stays monotone
                self.last = self.last.max(rec.timestamp);
                Ok(Some(Frame { timestamp: self.last, data: rec.data }))
            }
            None => Ok(None),
        }
    }
}

/// In-memory frames, mostly for tests and the demo generator.
pub struct MemorySource {
    name: String,
    frames: std::vec::IntoIter<Frame>,
}

impl MemorySource {
    pub fn new(name: impl Into<String>, mut frames: Vec<Frame>) -> Self {
        let mut last = Timestamp::ZERO;
        for f in &mut frames {
            last = last.max(f.timestamp);
            f.timestamp = last;
        }
        MemorySource { name: name.into(), frames: frames.into_iter() }
    }
}

impl CaptureSource for MemorySource {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_frame(&mut self) -> io::Result<Option<Frame>> {
        Ok(self.frames.next())
    }
}

/// Shared pause/stop switch for a paced source.
#[derive(Debug, Default)]
pub struct PlaybackControl {
    paused: AtomicBool,
    stopped: AtomicBool,
}

impl PlaybackControl {
    pub fn pause(&self) {
        self.paused.store(true, Ordering::SeqCst);
    }

    pub fn resume(&self) {
        self.paused.store(false, Ordering::SeqCst);
    }

    pub fn is_paused(&self) -> bool {
        self.paused.load(Ordering::SeqCst)
    }

    /// Makes the source end at its next frame.
    pub fn stop(&self) {
        self.stopped.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped.load(Ordering::SeqCst)
    }
}

/// Releases frames no faster than their timestamps allow, scaled by `speed`.
/// Frame contents and timestamps pass through untouched.
pub struct Paced<S> {
    inner: S,
    speed: f64,
    control: Arc<PlaybackControl>,
    origin: Option<(Instant, Timestamp)>,
    paused_for: Duration,
}

impl<S: CaptureSource> Paced<S> {
    /// `speed` is the playback rate; 0 or infinity disables pacing.
    pub fn new(inner: S, speed: f64, control: Arc<PlaybackControl>) -> Self {
        Paced { inner, speed, control, origin: None, paused_for: Duration::ZERO }
    }

    pub fn control(&self) -> &Arc<PlaybackControl> {
        &self.control
    }

    fn hold_while_paused(&mut self) -> bool {
        let began = Instant::now();
        while self.control.is_paused() && !self.control.is_stopped() {
            std::thread::sleep(Duration::from_millis(5));
        }
        self.paused_for += began.elapsed();
        !self.control.is_stopped()
    }
}

impl<S: CaptureSource> CaptureSource for Paced<S> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn next_frame(&mut self) -> io::Result<Option<Frame>> {
        if !self.hold_while_paused() {
            return Ok(None);
        }
        let Some(frame) = self.inner.next_frame()? else {
            return Ok(None);
        };
        if self.speed.is_finite() && self.speed > 0.0 {
            let (start, t0) = *self.origin.get_or_insert((Instant::now(), frame.timestamp));
            let offset = frame.timestamp.since(t0).div_f64(self.speed);
            loop {
                let due = start + offset + self.paused_for;
                let now = Instant::now();
                if now >= due {
                    break;
                }
                std::thread::sleep((due - now).min(Duration::from_millis(20)));
                if self.control.is_paused() && !self.hold_while_paused() {
                    return Ok(None);
                }
            }
        }
        if self.control.is_stopped() {
            return Ok(None);
        }
        Ok(Some(frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::pcap::PcapWriter;

    fn frames(n: i64, gap_ms: i64) -> Vec<Frame> {
        (0..n).map(|i| Frame { timestamp: Timestamp::from_micros(i * gap_ms * 1000), data: vec![i as u8] }).collect()
    }

    fn drain(mut src: impl CaptureSource) -> (Vec<Frame>, Duration) {
        let t = Instant::now();
        let mut out = Vec::new();
        while let Some(f) = src.next_frame().unwrap() {
            out.push(f);
        }
        (out, t.elapsed())
    }

    #[test]
    fn speed_scales_wall_time() {
        let c = Arc::new(PlaybackControl::default());
        let (a, slow) = drain(Paced::new(MemorySource::new("m", frames(11, 20)), 1.0, c.clone()));
        let (b, fast) = drain(Paced::new(MemorySource::new("m", frames(11, 20)), 2.0, c));
        assert_eq!(a, b);
        assert!(slow >= Duration::from_millis(200), "{slow:?}");
        assert!(fast >= Duration::from_millis(100) && fast < slow, "{fast:?} vs {slow:?}");
    }

    #[test]
    fn paused_source_emits_nothing() {
        let c = Arc::new(PlaybackControl::default());
        c.pause();
        let (tx, rx) = std::sync::mpsc::channel();
        let mut src = Paced::new(MemorySource::new("m", frames(3, 0)), f64::INFINITY, c.clone());
        let h = std::thread::spawn(move || {
            while let Some(f) = src.next_frame().unwrap() {
                tx.send(f).unwrap();
            }
        });
        std::thread::sleep(Duration::from_millis(60));
        assert!(rx.try_recv().is_err());
        c.resume();
        h.join().unwrap();
        assert_eq!(rx.iter().count(), 3);
    }

    #[test]
    fn stop_ends_stream() {
        let c = Arc::new(PlaybackControl::default());
        let mut src = Paced::new(MemorySource::new("m", frames(3, 0)), 0.0, c.clone());
        assert!(src.next_frame().unwrap().is_some());
        c.stop();
        assert!(src.next_frame().unwrap().is_none());
    }

    #[test]
    fn pcap_source_clamps_reordered_timestamps() {
        let mut w = PcapWriter::new(Vec::new()).unwrap();
        w.write(Timestamp::from_secs(5), &[1]).unwrap();
        w.write(Timestamp::from_secs(4), &[2]).unwrap();
        w.write(Timestamp::from_secs(6), &[3]).unwrap();
        let bytes = w.into_inner();
        let mut src = PcapSource::new("t", &bytes[..]).unwrap();
        let mut ts = Vec::new();
        while let Some(f) = src.next_frame().unwrap() {
            ts.push(f.timestamp.secs());
        }
        assert_eq!(ts, vec![5, 5, 6]);
    }
}
