//! Ethernet / IP / TCP / UDP framing.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use thiserror::Error;

use super::meta::{MacAddr, Protocol, RawPacketMeta};
use crate::time::Timestamp;

const ETH_HEADER: usize = 14;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;
const IPPROTO_TCP: u8 = 6;
const IPPROTO_UDP: u8 = 17;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame truncated")]
    Truncated,
    #[error("non-IP ethertype {0:#06x}")]
    NotIp(u16),
    #[error("bad IP header")]
    BadIpHeader,
}

fn be16(b: &[u8], at: usize) -> Result<u16, FrameError> {
    b.get(at..at + 2).map(|s| u16::from_be_bytes([s[0], s[1]])).ok_or(FrameError::Truncated)
}

fn mac_at(b: &[u8], at: usize) -> MacAddr {
    let mut m = [0u8; 6];
    m.copy_from_slice(&b[at..at + 6]);
    MacAddr(m)
}

/// Decodes an Ethernet II frame (optionally 802.1Q tagged).
pub fn decode_ethernet(timestamp: Timestamp, frame: &[u8]) -> Result<RawPacketMeta, FrameError> {
    if frame.len() < ETH_HEADER {
        return Err(FrameError::Truncated);
    }
    let dst_mac = mac_at(frame, 0);
    let src_mac = mac_at(frame, 6);
    let mut ethertype = be16(frame, 12)?;
    let mut off = ETH_HEADER;
    if ethertype == ETHERTYPE_VLAN {
        ethertype = be16(frame, 16)?;
        off += 4;
    }
    let ip = &frame[off.min(frame.len())..];
    let (src_ip, dst_ip, proto, l4) = match ethertype {
        ETHERTYPE_IPV4 => decode_ipv4(ip)?,
        ETHERTYPE_IPV6 => decode_ipv6(ip)?,
        other => return Err(FrameError::NotIp(other)),
    };
    let mut meta = RawPacketMeta {
        timestamp,
        src_mac: Some(src_mac),
        dst_mac: Some(dst_mac),
        src_ip,
        dst_ip,
        src_port: 0,
        dst_port: 0,
        protocol: Protocol::Other,
        payload: Vec::new(),
    };
    match (proto, l4) {
        (Some(IPPROTO_UDP), Some(seg)) if seg.len() >= 8 => {
            let udp_len = usize::from(be16(seg, 4)?).clamp(8, seg.len());
            meta.protocol = Protocol::Udp;
            meta.src_port = be16(seg, 0)?;
            meta.dst_port = be16(seg, 2)?;
            meta.payload = seg[8..udp_len].to_vec();
        }
        (Some(IPPROTO_TCP), Some(seg)) if seg.len() >= 20 => {
            let data_off = usize::from(seg[12] >> 4) * 4;
            if data_off < 20 || data_off > seg.len() {
                return Err(FrameError::Truncated);
            }
            meta.protocol = Protocol::Tcp;
            meta.src_port = be16(seg, 0)?;
            meta.dst_port = be16(seg, 2)?;
            meta.payload = seg[data_off..].to_vec();
        }
        (Some(IPPROTO_UDP | IPPROTO_TCP), Some(_)) => return Err(FrameError::Truncated),
        _ => {}
    }
    Ok(meta)
}

type IpParts<'a> = (IpAddr, IpAddr, Option<u8>, Option<&'a [u8]>);

fn decode_ipv4(b: &[u8]) -> Result<IpParts<'_>, FrameError> {
    if b.len() < 20 {
        return Err(FrameError::Truncated);
    }
    if b[0] >> 4 != 4 {
        return Err(FrameError::BadIpHeader);
    }
    let ihl = usize::from(b[0] & 0x0f) * 4;
    let total = usize::from(be16(b, 2)?);
    if ihl < 20 || total < ihl || b.len() < ihl {
        return Err(FrameError::BadIpHeader);
    }
    // Ethernet padding sits past the IP total length; trust the shorter of the two.
    let end = total.min(b.len());
    let src = Ipv4Addr::new(b[12], b[13], b[14], b[15]);
    let dst = Ipv4Addr::new(b[16], b[17], b[18], b[19]);
    let frag_offset = be16(b, 6)? & 0x1fff;
    // Non-first fragments carry no transport header.
    let l4 = if frag_offset == 0 { Some(&b[ihl..end]) } else { None };
    Ok((IpAddr::V4(src), IpAddr::V4(dst), Some(b[9]), l4))
}

fn decode_ipv6(b: &[u8]) -> Result<IpParts<'_>, FrameError> {
    if b.len() < 40 {
        return Err(FrameError::Truncated);
    }
    if b[0] >> 4 != 6 {
        return Err(FrameError::BadIpHeader);
    }
    let payload_len = usize::from(be16(b, 4)?);
    let end = (40 + payload_len).min(b.len());
    let mut src = [0u8; 16];
    let mut dst = [0u8; 16];
    src.copy_from_slice(&b[8..24]);
    dst.copy_from_slice(&b[24..40]);
    let mut next = b[6];
    let mut off = 40;
    // Hop-by-hop, routing, destination options, fragment.
    loop {
        match next {
            0 | 43 | 60 => {
                let h = b.get(off..off + 2).ok_or(FrameError::Truncated)?;
                next = h[0];
                off += (usize::from(h[1]) + 1) * 8;
            }
            44 => {
                let h = b.get(off..off + 8).ok_or(FrameError::Truncated)?;
                let frag_offset = u16::from_be_bytes([h[2], h[3]]) >> 3;
                next = h[0];
                off += 8;
                if frag_offset != 0 {
                    return Ok((IpAddr::V6(Ipv6Addr::from(src)), IpAddr::V6(Ipv6Addr::from(dst)), Some(next), None));
                }
            }
            _ => break,
        }
    }
    if off > end {
        return Err(FrameError::Truncated);
    }
    Ok((IpAddr::V6(Ipv6Addr::from(src)), IpAddr::V6(Ipv6Addr::from(dst)), Some(next), Some(&b[off..end])))
}

fn checksum_fold(mut sum: u32) -> u16 {
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

fn sum_words(data: &[u8]) -> u32 {
    let mut sum = 0u32;
    let mut chunks = data.chunks_exact(2);
    for c in &mut chunks {
        sum += u32::from(u16::from_be_bytes([c[0], c[1]]));
    }
    if let [last] = chunks.remainder() {
        sum += u32::from(*last) << 8;
    }
    sum
}

fn pseudo_header_sum(src: IpAddr, dst: IpAddr, proto: u8, len: usize) -> u32 {
    let mut sum = 0u32;
    match (src, dst) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            sum += sum_words(&s.octets()) + sum_words(&d.octets());
        }
        (IpAddr::V6(s), IpAddr::V6(d)) => {
            sum += sum_words(&s.octets()) + sum_words(&d.octets());
        }
        _ => {}
    }
    sum + u32::from(proto) + len as u32
}

/// Builds an Ethernet frame carrying `meta`'s transport payload.
///
/// Source and destination must share an address family; `Other` protocol frames carry
/// the payload directly in an IP packet with protocol number 253 (experimental).
pub fn encode_ethernet(meta: &RawPacketMeta) -> Vec<u8> {
    let (proto, mut segment) = match meta.protocol {
        Protocol::Udp => {
            let len = 8 + meta.payload.len();
            let mut s = Vec::with_capacity(len);
            s.extend_from_slice(&meta.src_port.to_be_bytes());
            s.extend_from_slice(&meta.dst_port.to_be_bytes());
            s.extend_from_slice(&(len as u16).to_be_bytes());
            s.extend_from_slice(&[0, 0]);
            s.extend_from_slice(&meta.payload);
            (IPPROTO_UDP, s)
        }
        Protocol::Tcp => {
            let mut s = Vec::with_capacity(20 + meta.payload.len());
            s.extend_from_slice(&meta.src_port.to_be_bytes());
            s.extend_from_slice(&meta.dst_port.to_be_bytes());
            s.extend_from_slice(&1u32.to_be_bytes());
            s.extend_from_slice(&0u32.to_be_bytes());
            s.push(5 << 4);
            s.push(0x18); // PSH|ACK
            s.extend_from_slice(&65535u16.to_be_bytes());
            s.extend_from_slice(&[0, 0, 0, 0]);
            s.extend_from_slice(&meta.payload);
            (IPPROTO_TCP, s)
        }
        Protocol::Other => (253, meta.payload.clone()),
    };
    if proto != 253 {
        let ck_at = if proto == IPPROTO_UDP { 6 } else { 16 };
        let sum = pseudo_header_sum(meta.src_ip, meta.dst_ip, proto, segment.len()) + sum_words(&segment);
        let mut ck = checksum_fold(sum);
        if ck == 0 && proto == IPPROTO_UDP {
            ck = 0xffff;
        }
        segment[ck_at..ck_at + 2].copy_from_slice(&ck.to_be_bytes());
    }

    let mut frame = Vec::with_capacity(ETH_HEADER + 40 + segment.len());
    frame.extend_from_slice(&meta.dst_mac.unwrap_or(MacAddr([0; 6])).0);
    frame.extend_from_slice(&meta.src_mac.unwrap_or(MacAddr([0; 6])).0);
    match (meta.src_ip, meta.dst_ip) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            frame.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
            let mut h = [0u8; 20];
            h[0] = 0x45;
            h[2..4].copy_from_slice(&((20 + segment.len()) as u16).to_be_bytes());
            h[6] = 0x40; // DF
            h[8] = 64;
            h[9] = proto;
            h[12..16].copy_from_slice(&s.octets());
            h[16..20].copy_from_slice(&d.octets());
            let ck = checksum_fold(sum_words(&h));
            h[10..12].copy_from_slice(&ck.to_be_bytes());
            frame.extend_from_slice(&h);
        }
        (s, d) => {
            let to6 = |ip: IpAddr| match ip {
                IpAddr::V4(v4) => v4.to_ipv6_mapped(),
                IpAddr::V6(v6) => v6,
            };
            frame.extend_from_slice(&ETHERTYPE_IPV6.to_be_bytes());
            frame.extend_from_slice(&[0x60, 0, 0, 0]);
            frame.extend_from_slice(&(segment.len() as u16).to_be_bytes());
            frame.push(proto);
            frame.push(64);
            frame.extend_from_slice(&to6(s).octets());
            frame.extend_from_slice(&to6(d).octets());
        }
    }
    frame.extend_from_slice(&segment);
    frame
}
