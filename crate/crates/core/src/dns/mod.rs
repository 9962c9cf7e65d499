//! DNS wire format (RFC 1035): just enough to read responses off the wire and to
//! synthesize answers for the sinkhole.

mod build;
mod parse;

pub use build::MessageBuilder;
pub use parse::{
    parse_header, parse_message, parse_response, read_name, Message, ParsedResponse, ResponseError, WireError,
};

use std::net::{Ipv4Addr, Ipv6Addr};

use serde::{Deserialize, Serialize};

use crate::name::Fqdn;

pub const HEADER_LEN: usize = 12;
pub const CLASS_IN: u16 = 1;
/// Classic UDP payload ceiling without EDNS.
pub const MAX_UDP_PAYLOAD: usize = 512;

pub const FLAG_QR: u16 = 0x8000;
pub const FLAG_AA: u16 = 0x0400;
pub const FLAG_TC: u16 = 0x0200;
pub const FLAG_RD: u16 = 0x0100;
pub const FLAG_RA: u16 = 0x0080;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordType {
    A,
    Ns,
    Cname,
    Soa,
    Ptr,
    Mx,
    Txt,
    Aaaa,
    Other(u16),
}

impl RecordType {
    pub fn code(self) -> u16 {
        match self {
            RecordType::A => 1,
            RecordType::Ns => 2,
            RecordType::Cname => 5,
            RecordType::Soa => 6,
            RecordType::Ptr => 12,
            RecordType::Mx => 15,
            RecordType::Txt => 16,
            RecordType::Aaaa => 28,
            RecordType::Other(c) => c,
        }
    }

    pub fn from_code(code: u16) -> Self {
        match code {
            1 => RecordType::A,
            2 => RecordType::Ns,
            5 => RecordType::Cname,
            6 => RecordType::Soa,
            12 => RecordType::Ptr,
            15 => RecordType::Mx,
            16 => RecordType::Txt,
            28 => RecordType::Aaaa,
            c => RecordType::Other(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Opcode {
    Query,
    Other(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rcode {
    NoError,
    FormErr,
    ServFail,
    NxDomain,
    NotImp,
    Refused,
    Other(u8),
}

impl Rcode {
    pub fn code(self) -> u8 {
        match self {
            Rcode::NoError => 0,
            Rcode::FormErr => 1,
            Rcode::ServFail => 2,
            Rcode::NxDomain => 3,
            Rcode::NotImp => 4,
            Rcode::Refused => 5,
            Rcode::Other(c) => c & 0x0f,
        }
    }

    pub fn from_code(c: u8) -> Self {
        match c & 0x0f {
            0 => Rcode::NoError,
            1 => Rcode::FormErr,
            2 => Rcode::ServFail,
            3 => Rcode::NxDomain,
            4 => Rcode::NotImp,
            5 => Rcode::Refused,
            o => Rcode::Other(o),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub id: u16,
    pub flags: u16,
    pub qdcount: u16,
    pub ancount: u16,
    pub nscount: u16,
    pub arcount: u16,
}

impl Header {
    pub fn is_response(&self) -> bool {
        self.flags & FLAG_QR != 0
    }

    pub fn opcode(&self) -> Opcode {
        match ((self.flags >> 11) & 0x0f) as u8 {
            0 => Opcode::Query,
            o => Opcode::Other(o),
        }
    }

    pub fn rcode(&self) -> Rcode {
        Rcode::from_code((self.flags & 0x0f) as u8)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub name: Fqdn,
    pub qtype: RecordType,
    pub qclass: u16,
}

/// Answer record data the collector cares about.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum AnswerData {
    A(Ipv4Addr),
    #[serde(rename = "AAAA")]
    Aaaa(Ipv6Addr),
    #[serde(rename = "CNAME")]
    Cname(Fqdn),
}

impl AnswerData {
    pub fn record_type(&self) -> RecordType {
        match self {
            AnswerData::A(_) => RecordType::A,
            AnswerData::Aaaa(_) => RecordType::Aaaa,
            AnswerData::Cname(_) => RecordType::Cname,
        }
    }
}

/// A resource record in the answer section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub name: Fqdn,
    pub ttl: u32,
    pub data: AnswerData,
}
