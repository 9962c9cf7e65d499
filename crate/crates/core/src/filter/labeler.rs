use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::orgs::OrgTable;
use super::psl::PublicSuffixTable;
use super::ruleset::{Classification, FilterRuleSet, Label, MatchMode};
use crate::name::Fqdn;

/// Everything the store records about a domain besides counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainLabels {
    /// Registrable domain; the name itself when it has none.
    pub sld: Fqdn,
    pub organization: String,
    pub classification: Classification,
}

/// A ruleset version together with the suffix and organization tables.
#[derive(Debug, Clone)]
pub struct Labeler {
    pub ruleset: Arc<FilterRuleSet>,
    pub psl: Arc<PublicSuffixTable>,
    pub orgs: Arc<OrgTable>,
    pub mode: MatchMode,
    pub version: u64,
}

impl Labeler {
    pub fn new(ruleset: FilterRuleSet, psl: PublicSuffixTable, orgs: OrgTable, mode: MatchMode) -> Self {
        Labeler { ruleset: Arc::new(ruleset), psl: Arc::new(psl), orgs: Arc::new(orgs), mode, version: 1 }
    }

    /// Same tables with a different ruleset and the next version number.
    pub fn with_ruleset(&self, ruleset: FilterRuleSet) -> Self {
        Labeler { ruleset: Arc::new(ruleset), version: self.version + 1, ..self.clone() }
    }

    pub fn classify(&self, fqdn: &Fqdn) -> Classification {
        self.ruleset.classify(fqdn, self.mode)
    }

    pub fn sld(&self, fqdn: &Fqdn) -> Fqdn {
        self.psl.registrable_domain(fqdn).unwrap_or_else(|| fqdn.clone())
    }

    pub fn label(&self, fqdn: &Fqdn) -> DomainLabels {
        let sld = self.sld(fqdn);
        let organization = self.orgs.organization_of(sld.as_str()).to_owned();
        DomainLabels { sld, organization, classification: self.classify(fqdn) }
    }

    pub fn is_tracker(&self, fqdn: &Fqdn) -> bool {
        self.classify(fqdn).label == Label::Tracker
    }
}
