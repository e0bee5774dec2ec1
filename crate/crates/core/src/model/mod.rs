//! Pages, nodes, watermarks, LRU lists and vmstat-style counters.
//!
//! Everything here is policy-agnostic. The policy engines in
//! [`crate::policy`] drive these types; the simulator owns one
//! [`TieredMemory`] per run.

mod counters;
mod lru;
mod memory;
mod node;

pub use counters::CounterSet;
pub use lru::LruList;
pub use memory::{InvariantViolation, TieredMemory};
pub use node::{NodeParams, NodeState, WatermarkFractions, WatermarkSet, WatermarkState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual page identifier, unique per live page in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageId(pub u64);

impl std::fmt::Display for PageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a node inside a [`TieredMemory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageType {
    Anon,
    File,
}

impl PageType {
    pub const ALL: [PageType; 2] = [PageType::Anon, PageType::File];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LruKind {
    Active,
    Inactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Local,
    Cxl,
}

/// Per-page state for one resident page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageFrame {
    pub page: PageId,
    pub kind: PageType,
    pub node: NodeId,
    pub lru: LruKind,
    /// Set on demotion, cleared on promotion.
    pub demoted: bool,
    /// The next access raises a NUMA hint fault.
    pub hint_poisoned: bool,
    pub last_access: u64,
    /// Accesses since the last scan period (AutoTiering-like baseline).
    pub access_count: u32,
    /// An in-flight migration keeps the page busy until this time.
    pub migrating_until: u64,
    /// Position key inside the LRU list; larger is closer to the head.
    pub(crate) lru_seq: u64,
}

impl PageFrame {
    pub fn new(page: PageId, kind: PageType) -> Self {
        Self {
            page,
            kind,
            node: NodeId(0),
            lru: LruKind::Inactive,
            demoted: false,
            hint_poisoned: false,
            last_access: 0,
            access_count: 0,
            migrating_until: 0,
            lru_seq: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("node {0:?} has no free pages")]
    NoFreePages(NodeId),
    #[error("page {0} is already resident")]
    AlreadyResident(PageId),
    #[error("page {0} is not resident")]
    NotResident(PageId),
    #[error("invalid watermarks: {0}")]
    InvalidWatermarks(String),
}
