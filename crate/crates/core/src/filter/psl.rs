//! Registrable-domain extraction over Public Suffix List rules.

use std::collections::HashSet;

use crate::name::Fqdn;

const ICANN_BEGIN: &str = "===BEGIN ICANN DOMAINS===";
const ICANN_END: &str = "===END ICANN DOMAINS===";

/// The list snapshot bundled with the crate.
pub const BUNDLED_PSL: &str = include_str!("../../data/public_suffix_list.dat");

#[derive(Debug, Clone, Default)]
pub struct PublicSuffixTable {
    normal: HashSet<String>,
    /// `*.foo.bar` is stored as `foo.bar`.
    wildcard: HashSet<String>,
    /// `!www.foo.bar` is stored as `www.foo.bar`.
    exception: HashSet<String>,
}

fn to_ascii_rule(rule: &str) -> Option<String> {
    if rule.is_ascii() {
        return Some(rule.to_ascii_lowercase());
    }
    idna::domain_to_ascii(rule).ok()
}

impl PublicSuffixTable {
    /// Parses list text; `include_private` also loads the PRIVATE section
    /// (hosting-provider suffixes such as `cloudfront.net`).
    pub fn parse(text: &str, include_private: bool) -> Self {
        let mut t = PublicSuffixTable::default();
        let mut in_private = false;
        for line in text.lines() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix("//") {
                if comment.contains(ICANN_END) {
                    in_private = true;
                } else if comment.contains(ICANN_BEGIN) {
                    in_private = false;
                }
                continue;
            }
            if line.is_empty() || (in_private && !include_private) {
                continue;
            }
            // Rules end at the first whitespace.
            let rule = line.split_whitespace().next().unwrap_or("");
            if let Some(exc) = rule.strip_prefix('!') {
                if let Some(r) = to_ascii_rule(exc) {
                    t.exception.insert(r);
                }
            } else if let Some(wild) = rule.strip_prefix("*.") {
                if let Some(r) = to_ascii_rule(wild) {
                    t.wildcard.insert(r);
                }
            } else if let Some(r) = to_ascii_rule(rule) {
                t.normal.insert(r);
            }
        }
        t
    }

    pub fn bundled() -> Self {
        PublicSuffixTable::parse(BUNDLED_PSL, false)
    }

    pub fn rule_count(&self) -> usize {
        self.normal.len() + self.wildcard.len() + self.exception.len()
    }

    /// Every exception rule sits under a wildcard rule.
    pub fn exceptions_shadow_wildcards(&self) -> bool {
        self.exception
            .iter()
            .all(|e| e.split_once('.').is_some_and(|(_, parent)| self.wildcard.contains(parent)))
    }

    /// Number of labels in the public suffix of `name`.
    pub fn suffix_label_count(&self, name: &Fqdn) -> usize {
        let suffixes: Vec<&str> = name.suffixes().collect();
        let n = suffixes.len();
        // exception rules prevail; the suffix is the rule minus its leftmost label
        if let Some(i) = suffixes.iter().position(|s| self.exception.contains(*s)) {
            return n - i - 1;
        }
        for (i, s) in suffixes.iter().enumerate() {
            let wild = i + 1 < n && self.wildcard.contains(suffixes[i + 1]);
            if self.normal.contains(*s) || wild {
                return n - i;
            }
        }
        // implicit "*" rule
        1
    }

    pub fn public_suffix<'a>(&self, name: &'a Fqdn) -> &'a str {
        let k = self.suffix_label_count(name);
        name.suffixes().nth(name.label_count() - k).unwrap_or(name.as_str())
    }

    /// The public suffix plus one label, or `None` when `name` is itself a suffix.
    pub fn registrable_domain(&self, name: &Fqdn) -> Option<Fqdn> {
        let n = name.label_count();
        let k = self.suffix_label_count(name);
        if n <= k {
            return None;
        }
        let s = name.suffixes().nth(n - k - 1)?;
        Some(Fqdn::parse(s).expect("suffix of a valid name is valid"))
    }
}

pub fn extract_sld(fqdn: &Fqdn, psl: &PublicSuffixTable) -> Option<Fqdn> {
    psl.registrable_domain(fqdn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Fqdn {
        Fqdn::parse(s).unwrap()
    }

    fn small() -> PublicSuffixTable {
        PublicSuffixTable::parse("// c\ncom\nuk\nco.uk\n*.ck\n!www.ck\njp\n*.kawasaki.jp\n!city.kawasaki.jp\n", false)
    }

    #[test]
    fn basic_and_multi_label() {
        let t = small();
        assert_eq!(extract_sld(&n("metrics.example.com"), &t), Some(n("example.com")));
        assert_eq!(extract_sld(&n("example.co.uk"), &t), Some(n("example.co.uk")));
        assert_eq!(extract_sld(&n("a.b.example.co.uk"), &t), Some(n("example.co.uk")));
        assert_eq!(extract_sld(&n("co.uk"), &t), None);
        assert_eq!(extract_sld(&n("com"), &t), None);
    }

    #[test]
    fn wildcard_and_exception() {
        let t = small();
        assert_eq!(extract_sld(&n("foo.bar.ck"), &t), Some(n("foo.bar.ck")));
        assert_eq!(extract_sld(&n("bar.ck"), &t), None);
        assert_eq!(extract_sld(&n("www.ck"), &t), Some(n("www.ck")));
        assert_eq!(extract_sld(&n("a.www.ck"), &t), Some(n("www.ck")));
        assert_eq!(extract_sld(&n("a.city.kawasaki.jp"), &t), Some(n("city.kawasaki.jp")));
        assert!(t.exceptions_shadow_wildcards());
    }

    #[test]
    fn unlisted_names_use_default_rule() {
        let t = small();
        assert_eq!(extract_sld(&n("localhost"), &t), None);
        assert_eq!(extract_sld(&n("a.b.unlisted"), &t), Some(n("b.unlisted")));
    }

    #[test]
    fn private_section_is_optional() {
        let text = "// ===BEGIN ICANN DOMAINS===\nnet\n// ===END ICANN DOMAINS===\n// ===BEGIN PRIVATE DOMAINS===\ncloudfront.net\n";
        let icann = PublicSuffixTable::parse(text, false);
        let all = PublicSuffixTable::parse(text, true);
        let name = n("d111.cloudfront.net");
        assert_eq!(extract_sld(&name, &icann), Some(n("cloudfront.net")));
        assert_eq!(extract_sld(&name, &all), Some(name.clone()));
    }

    #[test]
    fn bundled_table_loads() {
        let t = PublicSuffixTable::bundled();
        assert!(t.rule_count() > 5000);
        assert!(t.exceptions_shadow_wildcards());
        assert_eq!(extract_sld(&n("device-metrics-us.amazon.com"), &t), Some(n("amazon.com")));
        assert_eq!(extract_sld(&n("bbc.co.uk"), &t), Some(n("bbc.co.uk")));
        assert_eq!(t.public_suffix(&n("a.b.co.uk")), "co.uk");
    }
}
