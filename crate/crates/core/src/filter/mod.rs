//! Filter-list compilation and domain labeling.

mod hosts;
mod labeler;
mod orgs;
mod psl;
mod ruleset;
pub mod sources;

pub use hosts::{parse_hosts_list, HostsWarning, ParsedList};
pub use labeler::{DomainLabels, Labeler};
pub use orgs::{organization_of, OrgTable, OrgTableError, BUNDLED_ORGS, UNKNOWN_ORG};
pub use psl::{extract_sld, PublicSuffixTable, BUNDLED_PSL};
pub(crate) use ruleset::longest_match;
pub use sources::{load_snapshot, parse_probes, ListCatalog, ListSource, SourcesError};
pub use ruleset::{
    classify, compile, Classification, CompileOutput, FilterRuleSet, Label, ListInput, MatchMode,
    SourceMeta,
};
