//! Random DNS responses with the answer list a parser should report.

use std::net::{Ipv4Addr, Ipv6Addr};

use rand::Rng;

use super::wire::{Encoder, Rdata, Rr};

fn random_name(rng: &mut impl Rng, tail: &[&str]) -> String {
    let mut labels: Vec<String> = (0..rng.gen_range(1..4))
        .map(|_| {
            let len = rng.gen_range(1..12);
            (0..len).map(|_| b"abcdefghijklmnopqrstuvwxyz0123456789-"[rng.gen_range(0..37)] as char).collect()
        })
        .collect();
    if rng.gen_bool(0.7) {
        labels.push(tail[rng.gen_range(0..tail.len())].to_owned());
    }
    labels.join(".")
}

pub struct Case {
    pub msg: Vec<u8>,
    pub qname: String,
    /// A, AAAA and CNAME answers in wire order; other types are left out.
    pub expected: Vec<Rdata>,
}

/// A response with 1..6 answers, CNAME chains and the odd TXT record, compressed
/// or not at random.
pub fn random_case(rng: &mut impl Rng) -> Case {
    let tails = ["example.com", "cdn.example.net", "amazonaws.com", "io"];
    let qname = random_name(rng, &tails);
    let mut answers = Vec::new();
    let mut expected = Vec::new();
    let mut owner = qname.clone();
    let n = rng.gen_range(1..6);
    for i in 0..n {
        let data = match rng.gen_range(0..10) {
            0..=2 if i + 1 < n => Rdata::Cname(random_name(rng, &tails)),
            3 if !expected.is_empty() => Rdata::Other(16, (0..rng.gen_range(0..20)).map(|_| rng.gen()).collect()),
            4..=5 => Rdata::Aaaa(Ipv6Addr::from(rng.gen::<u128>())),
            _ => Rdata::A(Ipv4Addr::from(rng.gen::<u32>())),
        };
        answers.push(Rr { owner: owner.clone(), ttl: rng.gen(), data: data.clone() });
        match data {
            Rdata::Other(..) => {}
            Rdata::Cname(ref target) => {
                owner = target.clone();
                expected.push(data);
            }
            _ => expected.push(data),
        }
    }
    let qtype = if rng.gen_bool(0.5) { 1 } else { 28 };
    let msg = Encoder::new(rng.gen_bool(0.5)).response(rng.gen(), &qname, qtype, &answers);
    Case { msg, qname, expected }
}
