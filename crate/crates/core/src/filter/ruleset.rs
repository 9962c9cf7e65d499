use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::hosts::{parse_hosts_list, HostsWarning};
use crate::name::Fqdn;
use crate::time::Timestamp;

/// How a rule relates to the names it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// A rule covers its own name and every subdomain.
    #[default]
    Suffix,
    /// A rule covers only its own name, as raw hosts files do.
    Exact,
}

/// Longest rule in `rules` that covers `name`.
pub(crate) fn longest_match<'a, V>(
    rules: &'a HashMap<Fqdn, V>,
    name: &Fqdn,
    mode: MatchMode,
) -> Option<(&'a Fqdn, &'a V)> {
    match mode {
        MatchMode::Exact => rules.get_key_value(name.as_str()),
        MatchMode::Suffix => name.suffixes().find_map(|s| rules.get_key_value(s)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub name: String,
    pub location: String,
    pub entry_count: usize,
    pub fetched_at: Option<Timestamp>,
}

/// One filter list to compile.
#[derive(Debug, Clone)]
pub struct ListInput {
    pub name: String,
    pub location: String,
    pub text: String,
    pub fetched_at: Option<Timestamp>,
}

impl ListInput {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        let name = name.into();
        ListInput { location: name.clone(), name, text: text.into(), fetched_at: None }
    }
}

/// Union of compiled filter lists with per-domain provenance. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterRuleSet {
    rules: HashMap<Fqdn, Vec<String>>,
    sources: Vec<SourceMeta>,
}

#[derive(Debug, Clone)]
pub struct CompileOutput {
    pub ruleset: FilterRuleSet,
    pub warnings: Vec<HostsWarning>,
}

impl CompileOutput {
    /// Set when the union is empty; the ruleset still works and labels nothing.
    pub fn is_empty_ruleset(&self) -> bool {
        self.ruleset.is_empty()
    }
}

/// Merges lists into one ruleset. The result does not depend on list order.
pub fn compile(lists: &[ListInput]) -> CompileOutput {
    let mut rules: HashMap<Fqdn, Vec<String>> = HashMap::new();
    let mut sources = Vec::with_capacity(lists.len());
    let mut warnings = Vec::new();
    for list in lists {
        let parsed = parse_hosts_list(&list.text, &list.name);
        sources.push(SourceMeta {
            name: list.name.clone(),
            location: list.location.clone(),
            entry_count: parsed.domains.len(),
            fetched_at: list.fetched_at,
        });
        for d in parsed.domains {
            rules.entry(d).or_default().push(list.name.clone());
        }
        warnings.extend(parsed.warnings);
    }
    for prov in rules.values_mut() {
        prov.sort();
        prov.dedup();
    }
    sources.sort_by(|a, b| {
        (&a.name, &a.location, a.entry_count, a.fetched_at).cmp(&(&b.name, &b.location, b.entry_count, b.fetched_at))
    });
    warnings.sort_by(|a, b| (&a.list, a.line).cmp(&(&b.list, b.line)));
    if rules.is_empty() {
        tracing::warn!("compiled filter ruleset is empty; every domain will be labeled non-tracker");
    }
    CompileOutput { ruleset: FilterRuleSet { rules, sources }, warnings }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Tracker,
    NonTracker,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Tracker => "tracker",
            Label::NonTracker => "non_tracker",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    pub matched_rule: Option<Fqdn>,
    pub sources: Vec<String>,
}

impl FilterRuleSet {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn contains(&self, fqdn: &str) -> bool {
        self.rules.contains_key(fqdn)
    }

    pub fn provenance(&self, fqdn: &str) -> Option<&[String]> {
        self.rules.get(fqdn).map(Vec::as_slice)
    }

    pub fn sources(&self) -> &[SourceMeta] {
        &self.sources
    }

    /// Domains in lexicographic order.
    pub fn domains(&self) -> Vec<&Fqdn> {
        let mut v: Vec<_> = self.rules.keys().collect();
        v.sort();
        v
    }

    pub fn classify(&self, fqdn: &Fqdn, mode: MatchMode) -> Classification {
        match longest_match(&self.rules, fqdn, mode) {
            Some((rule, sources)) => Classification {
                label: Label::Tracker,
                matched_rule: Some(rule.clone()),
                sources: sources.clone(),
            },
            None => Classification { label: Label::NonTracker, matched_rule: None, sources: Vec::new() },
        }
    }

    /// Sorted hosts-format rendering (`0.0.0.0 domain`).
    pub fn to_hosts_text(&self) -> String {
        let mut s = String::with_capacity(self.rules.len() * 24);
        for d in self.domains() {
            s.push_str("0.0.0.0 ");
            s.push_str(d.as_str());
            s.push('\n');
        }
        s
    }

    /// Canonical JSON: sorted domains with provenance plus source metadata.
    pub fn to_canonical_json(&self) -> String {
        let rules: BTreeMap<&str, &Vec<String>> = self.rules.iter().map(|(k, v)| (k.as_str(), v)).collect();
        serde_json::json!({ "rules": rules, "sources": self.sources }).to_string()
    }
}

pub fn classify(fqdn: &Fqdn, ruleset: &FilterRuleSet, mode: MatchMode) -> Classification {
    ruleset.classify(fqdn, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(s: &str) -> Fqdn {
        Fqdn::parse(s).unwrap()
    }

    #[test]
    fn shared_domain_merges_provenance() {
        let out = compile(&[ListInput::new("listB", "t.example\n"), ListInput::new("listA", "0.0.0.0 t.example\n")]);
        assert_eq!(out.ruleset.len(), 1);
        assert_eq!(out.ruleset.provenance("t.example").unwrap(), ["listA", "listB"]);
    }

    #[test]
    fn disjoint_lists_add_up() {
        let out = compile(&[
            ListInput::new("a", "a1.x\na2.x\na3.x\n"),
            ListInput::new("b", "b1.x\nb2.x\nb3.x\nb4.x\n"),
        ]);
        assert_eq!(out.ruleset.len(), 7);
    }

    #[test]
    fn empty_union_still_usable() {
        let out = compile(&[ListInput::new("a", "# nothing\n")]);
        assert!(out.is_empty_ruleset());
        assert_eq!(out.ruleset.classify(&n("x.example"), MatchMode::Suffix).label, Label::NonTracker);
    }

    #[test]
    fn subdomain_matching_and_exact_mode() {
        let rs = compile(&[ListInput::new("a", "t.example\nb.t.example\n")]).ruleset;
        let c = rs.classify(&n("a.b.t.example"), MatchMode::Suffix);
        assert_eq!(c.label, Label::Tracker);
        assert_eq!(c.matched_rule, Some(n("b.t.example")));
        assert_eq!(c.sources, vec!["a".to_string()]);
        assert_eq!(rs.classify(&n("a.b.t.example"), MatchMode::Exact).label, Label::NonTracker);
        assert_eq!(rs.classify(&n("nott.example"), MatchMode::Suffix).label, Label::NonTracker);
        assert_eq!(rs.classify(&n("amazonalexa.com"), MatchMode::Suffix).label, Label::NonTracker);
    }

    #[test]
    fn recompiling_serialized_output_is_idempotent() {
        let rs = compile(&[ListInput::new("a", "a.x\nb.y\n"), ListInput::new("b", "b.y\nc.z\n")]).ruleset;
        let again = compile(&[ListInput::new("merged", rs.to_hosts_text())]).ruleset;
        assert_eq!(again.domains(), rs.domains());
    }

    fn list_strategy() -> impl Strategy<Value = Vec<(String, Vec<String>)>> {
        let name = "[a-c]{1,2}\\.(x|y)";
        prop::collection::vec(("[a-z]{1,6}", prop::collection::vec(name, 0..8)), 1..5)
    }

    proptest! {
        #[test]
        fn order_independent(lists in list_strategy()) {
            let inputs: Vec<_> = lists.iter().map(|(n, ds)| ListInput::new(n.clone(), ds.join("\n"))).collect();
            let mut rev = inputs.clone();
            rev.reverse();
            prop_assert_eq!(compile(&inputs).ruleset.to_canonical_json(), compile(&rev).ruleset.to_canonical_json());
        }

        #[test]
        fn classify_is_deterministic(name in "[a-c]{1,2}(\\.[a-c]{1,2}){0,3}\\.(x|y)", lists in list_strategy()) {
            let inputs: Vec<_> = lists.iter().map(|(n, ds)| ListInput::new(n.clone(), ds.join("\n"))).collect();
            let rs = compile(&inputs).ruleset;
            let f = n(&name);
            let c = rs.classify(&f, MatchMode::Suffix);
            prop_assert_eq!(&c, &rs.classify(&f, MatchMode::Suffix));
            prop_assert_eq!(c.label == Label::Tracker, c.matched_rule.is_some());
        }
    }
}
