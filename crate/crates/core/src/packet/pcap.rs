//! Classic libpcap file format (not pcapng).

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::time::Timestamp;

pub const LINKTYPE_ETHERNET: u32 = 1;
const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
/// Upper bound on a single record; real snaplens are at most 256 KiB.
const MAX_RECORD: u32 = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not a pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("unsupported link type {0}: only Ethernet (1) captures are accepted")]
    UnsupportedLinkType(u32),
    #[error("record length {0} exceeds limit")]
    RecordTooLarge(u32),
    #[error("file truncated inside a record")]
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: [u8; 4]) -> u32 {
        match self {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapRecord {
    pub timestamp: Timestamp,
    pub data: Vec<u8>,
}

pub struct PcapReader<R> {
    inner: R,
    endian: Endian,
    nanos: bool,
    pub snaplen: u32,
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, PcapError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(PcapError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut hdr = [0u8; 24];
        if !read_exact_or_eof(&mut inner, &mut hdr)? {
            return Err(PcapError::Truncated);
        }
        let raw = [hdr[0], hdr[1], hdr[2], hdr[3]];
        let (endian, nanos) = match (u32::from_le_bytes(raw), u32::from_be_bytes(raw)) {
            (MAGIC_MICROS, _) => (Endian::Little, false),
            (MAGIC_NANOS, _) => (Endian::Little, true),
            (_, MAGIC_MICROS) => (Endian::Big, false),
            (_, MAGIC_NANOS) => (Endian::Big, true),
            _ => return Err(PcapError::BadMagic(u32::from_be_bytes(raw))),
        };
        let field = |i: usize| endian.u32([hdr[i], hdr[i + 1], hdr[i + 2], hdr[i + 3]]);
        let snaplen = field(16);
        let linktype = field(20) & 0x0fff_ffff;
        if linktype != LINKTYPE_ETHERNET {
            return Err(PcapError::UnsupportedLinkType(linktype));
        }
        Ok(PcapReader { inner, endian, nanos, snaplen })
    }

    pub fn next_record(&mut self) -> Result<Option<PcapRecord>, PcapError> {
        let mut rh = [0u8; 16];
        if !read_exact_or_eof(&mut self.inner, &mut rh)? {
            return Ok(None);
        }
        let field = |i: usize| self.endian.u32([rh[i], rh[i + 1], rh[i + 2], rh[i + 3]]);
        let (secs, frac, incl) = (field(0), field(4), field(8));
        if incl > MAX_RECORD {
            return Err(PcapError::RecordTooLarge(incl));
        }
        let mut data = vec![0u8; incl as usize];
        if !data.is_empty() && !read_exact_or_eof(&mut self.inner, &mut data)? {
            return Err(PcapError::Truncated);
        }
        let nanos = if self.nanos { frac } else { frac.saturating_mul(1_000) };
        Ok(Some(PcapRecord { timestamp: Timestamp::from_secs_nanos(i64::from(secs), nanos), data }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PcapRecord, PcapError>;
    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

/// Writes little-endian microsecond-resolution Ethernet captures.
pub struct PcapWriter<W> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        let mut hdr = Vec::with_capacity(24);
        hdr.extend_from_slice(&MAGIC_MICROS.to_le_bytes());
        hdr.extend_from_slice(&2u16.to_le_bytes());
        hdr.extend_from_slice(&4u16.to_le_bytes());
        hdr.extend_from_slice(&0i32.to_le_bytes());
        hdr.extend_from_slice(&0u32.to_le_bytes());
        hdr.extend_from_slice(&65535u32.to_le_bytes());
        hdr.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        inner.write_all(&hdr)?;
        Ok(PcapWriter { inner })
    }

    pub fn write(&mut self, ts: Timestamp, frame: &[u8]) -> io::Result<()> {
        let mut rh = [0u8; 16];
        rh[0..4].copy_from_slice(&(ts.secs() as u32).to_le_bytes());
        rh[4..8].copy_from_slice(&ts.subsec_micros().to_le_bytes());
        rh[8..12].copy_from_slice(&(frame.len() as u32).to_le_bytes());
        rh[12..16].copy_from_slice(&(frame.len() as u32).to_le_bytes());
        self.inner.write_all(&rh)?;
        self.inner.write_all(frame)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn be_header(magic: u32, linktype: u32) -> Vec<u8> {
        let mut h = Vec::new();
        h.extend_from_slice(&magic.to_be_bytes());
        h.extend_from_slice(&2u16.to_be_bytes());
        h.extend_from_slice(&4u16.to_be_bytes());
        h.extend_from_slice(&[0; 8]);
        h.extend_from_slice(&65535u32.to_be_bytes());
        h.extend_from_slice(&linktype.to_be_bytes());
        h
    }

    #[test]
    fn reads_big_endian_nanosecond_file() {
        let mut f = be_header(MAGIC_NANOS, 1);
        f.extend_from_slice(&10u32.to_be_bytes());
        f.extend_from_slice(&500_000_000u32.to_be_bytes());
        f.extend_from_slice(&3u32.to_be_bytes());
        f.extend_from_slice(&3u32.to_be_bytes());
        f.extend_from_slice(&[1, 2, 3]);
        let recs: Vec<_> = PcapReader::new(&f[..]).unwrap().collect::<Result<_, _>>().unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].timestamp, Timestamp::from_micros(10_500_000));
        assert_eq!(recs[0].data, vec![1, 2, 3]);
    }

    #[test]
    fn rejects_non_ethernet() {
        let f = be_header(MAGIC_MICROS, 101);
        assert!(matches!(PcapReader::new(&f[..]), Err(PcapError::UnsupportedLinkType(101))));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(PcapReader::new(&[0u8; 24][..]), Err(PcapError::BadMagic(0))));
        assert!(matches!(PcapReader::new(&[0u8; 3][..]), Err(PcapError::Truncated)));
        let mut f = be_header(MAGIC_MICROS, 1);
        f.extend_from_slice(&[0; 10]);
        let mut r = PcapReader::new(&f[..]).unwrap();
        assert!(matches!(r.next_record(), Err(PcapError::Truncated)));
    }

    #[test]
    fn writer_output_reads_back() {
        let mut w = PcapWriter::new(Vec::new()).unwrap();
        w.write(Timestamp::from_micros(1_000_123), &[9; 60]).unwrap();
        let bytes = w.into_inner();
        let recs: Vec<_> = PcapReader::new(&bytes[..]).unwrap().map(Result::unwrap).collect();
        assert_eq!(recs, vec![PcapRecord { timestamp: Timestamp::from_micros(1_000_123), data: vec![9; 60] }]);
    }
}
