use std::collections::BTreeSet;

use iotlens_core::filter::{compile, parse_hosts_list, Label, ListInput, MatchMode, PublicSuffixTable, BUNDLED_PSL};
use iotlens_core::Fqdn;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LABELS: &[&str] = &["a", "b", "c", "ads", "cdn", "t", "m1"];

fn random_name(rng: &mut impl Rng, min: usize, max: usize) -> String {
    let depth = rng.gen_range(min..=max);
    let mut labels: Vec<&str> = (0..depth).map(|_| *LABELS.choose(rng).unwrap()).collect();
    labels.push(if rng.gen_bool(0.5) { "x" } else { "y" });
    labels.join(".")
}

/// Longest rule equal to `name` or a parent of it, by scanning every rule.
fn brute_force<'a>(rules: &'a BTreeSet<String>, name: &str) -> Option<&'a String> {
    rules
        .iter()
        .filter(|r| name == r.as_str() || name.ends_with(&format!(".{r}")))
        .max_by_key(|r| r.len())
}

fn rule_set(rng: &mut impl Rng, n: usize) -> BTreeSet<String> {
    let mut rules = BTreeSet::new();
    while rules.len() < n {
        rules.insert(random_name(rng, 3, 4));
    }
    rules
}

fn hosts_text(rules: &BTreeSet<String>) -> String {
    rules.iter().map(|r| format!("0.0.0.0 {r}\n")).collect()
}

#[test]
fn ten_thousand_names_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let rules = rule_set(&mut rng, 1000);
    let rs = compile(&[ListInput::new("r", hosts_text(&rules))]).ruleset;
    assert_eq!(rs.len(), 1000);
    let mut trackers = 0;
    for _ in 0..10_000 {
        let name = random_name(&mut rng, 2, 6);
        let f = Fqdn::parse(&name).unwrap();
        let want = brute_force(&rules, &name);
        let got = rs.classify(&f, MatchMode::Suffix);
        assert_eq!(got.matched_rule.as_ref().map(Fqdn::as_str), want.map(String::as_str), "{name}");
        assert_eq!(got.label == Label::Tracker, want.is_some());
        let exact = rs.classify(&f, MatchMode::Exact);
        assert_eq!(exact.label == Label::Tracker, rules.contains(&name));
        trackers += usize::from(want.is_some());
    }
    // both outcomes are well represented
    assert!(trackers > 1000 && trackers < 9000, "{trackers}");
}

#[test]
fn adding_rules_never_unlabels() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let probes: Vec<Fqdn> = (0..300).map(|_| Fqdn::parse(&random_name(&mut rng, 1, 6)).unwrap()).collect();
    let mut rules = BTreeSet::new();
    let mut prev: Vec<Option<usize>> = vec![None; probes.len()];
    for _ in 0..1000 {
        rules.insert(random_name(&mut rng, 1, 4));
        let rs = compile(&[ListInput::new("r", hosts_text(&rules))]).ruleset;
        for (p, before) in probes.iter().zip(prev.iter_mut()) {
            let c = rs.classify(p, MatchMode::Suffix);
            let now = c.matched_rule.as_ref().map(Fqdn::label_count);
            if let Some(b) = *before {
                assert!(now.is_some_and(|n| n >= b), "{p} lost its label");
            }
            *before = now;
        }
    }
}

#[test]
fn hosts_concatenation_counts() {
    let mut lines: Vec<String> = (0..9480).map(|i| format!("0.0.0.0 host{i}.list{}.example", i % 37)).collect();
    for i in 0..500 {
        let dup = lines[i * 17].clone();
        lines.push(dup);
    }
    let junk = ["0.0.0.0 bad..name", "0.0.0.0 under$score.example", "two words here", "0.0.0.0 -", "||adblock.example^"];
    for i in 0..20 {
        lines.push(junk[i % junk.len()].replace("bad", &format!("bad{i}")));
    }
    lines.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(lines.len(), 10_000);
    let text = lines.join("\n");
    let parsed = parse_hosts_list(&text, "synthetic");
    assert_eq!(parsed.domains.len(), 9480);
    assert_eq!(parsed.warnings.len(), 20);
    let out = compile(&[ListInput::new("synthetic", text)]);
    assert_eq!(out.ruleset.len(), 9480);
    assert_eq!(out.warnings.len(), 20);
}

/// The published algorithm, applied naively to the rule list.
struct NaivePsl {
    rules: Vec<(Vec<String>, bool)>,
}

impl NaivePsl {
    fn icann_ascii() -> Self {
        let mut rules = Vec::new();
        for line in BUNDLED_PSL.lines() {
            if line.contains("===END ICANN DOMAINS===") {
                break;
            }
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") || !line.is_ascii() {
                continue;
            }
            let (exception, body) = match line.strip_prefix('!') {
                Some(b) => (true, b),
                None => (false, line),
            };
            rules.push((body.split('.').map(str::to_owned).collect(), exception));
        }
        NaivePsl { rules }
    }

    fn matches(rule: &[String], labels: &[&str]) -> bool {
        rule.len() <= labels.len()
            && rule.iter().rev().zip(labels.iter().rev()).all(|(r, l)| r == "*" || r == l)
    }

    fn registrable(&self, name: &str) -> Option<String> {
        let labels: Vec<&str> = name.split('.').collect();
        let matching: Vec<&(Vec<String>, bool)> = self.rules.iter().filter(|(r, _)| Self::matches(r, &labels)).collect();
        let suffix_len = if let Some((r, _)) = matching.iter().find(|(_, exc)| *exc) {
            r.len() - 1
        } else {
            matching.iter().map(|(r, _)| r.len()).max().unwrap_or(1)
        };
        (labels.len() > suffix_len).then(|| labels[labels.len() - suffix_len - 1..].join("."))
    }
}

#[test]
fn registrable_domain_matches_naive_algorithm() {
    let naive = NaivePsl::icann_ascii();
    let table = PublicSuffixTable::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..20_000 {
        let (rule, _) = &naive.rules[rng.gen_range(0..naive.rules.len())];
        let mut labels: Vec<String> = rule.iter().map(|l| if l == "*" { "w1".into() } else { l.clone() }).collect();
        for _ in 0..rng.gen_range(0..3) {
            labels.insert(0, (*LABELS.choose(&mut rng).unwrap()).to_owned());
        }
        if rng.gen_bool(0.1) {
            labels.remove(0);
        }
        if labels.is_empty() {
            continue;
        }
        let name = labels.join(".");
        let f = Fqdn::parse(&name).unwrap();
        assert_eq!(table.registrable_domain(&f).map(Fqdn::into_string), naive.registrable(&name), "{name}");
        checked += 1;
    }
    assert!(checked > 15_000);
    for (name, want) in [("www.example.co.uk", Some("example.co.uk")), ("co.uk", None), ("a.b.unknowntld", Some("b.unknowntld"))] {
        assert_eq!(naive.registrable(name).as_deref(), want);
    }
}

proptest! {
    #[test]
    fn exact_matches_are_suffix_matches(rules in prop::collection::btree_set("[abc]{1,2}(\\.[abc]{1,2}){0,2}\\.x", 0..30),
                                        name in "[abc]{1,2}(\\.[abc]{1,2}){0,4}\\.x") {
        let rs = compile(&[ListInput::new("r", hosts_text(&rules))]).ruleset;
        let f = Fqdn::parse(&name).unwrap();
        let exact = rs.classify(&f, MatchMode::Exact).label == Label::Tracker;
        let suffix = rs.classify(&f, MatchMode::Suffix);
        prop_assert!(!exact || suffix.label == Label::Tracker);
        prop_assert_eq!(suffix.matched_rule.map(Fqdn::into_string), brute_force(&rules, &name).cloned());
    }
}
