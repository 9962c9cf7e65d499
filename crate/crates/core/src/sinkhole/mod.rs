//! DNS sinkhole: forwards queries upstream unless the name is blocked.

mod blocklist;
mod handler;
mod server;

pub use blocklist::{block_domain, unblock_domain, BlockChange, BlockList, BlockListError, BlockListStore};
pub use handler::{
    BlockingMode, Sinkhole, SinkholeAction, SinkholeConfig, SinkholeDecision, Verdict, BLOCKED_TTL,
    DEFAULT_UPSTREAM_TIMEOUT,
};
pub use server::{serve_udp, DecisionObserver};
