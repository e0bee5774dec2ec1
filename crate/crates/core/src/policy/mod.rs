//! Allocation, reclaim, demotion and promotion engines.
//!
//! Four placement policies share the same machinery and differ only in
//! which knobs they enable:
//!
//! | policy            | local reclaim          | promotion gate                   |
//! |-------------------|------------------------|----------------------------------|
//! | `DefaultLinux`    | swap, low → high       | none                             |
//! | `NumaBalancing`   | swap, low → high       | local free ≥ high                |
//! | `Tpp`             | demote, demotion wm    | active LRU filter, free ≥ 1      |
//! | `AutoTieringLike` | demote, low → high     | reserved promotion buffer        |
//!
//! `Tpp` with `decouple_watermarks = false` falls back to the coupled
//! low → high reclaim window and the `NumaBalancing` promotion gate, while
//! local allocation still waits for free ≥ the demotion watermark.

mod access;
mod place;
mod reclaim;
mod scan;

pub use access::{handle_access, promote, AccessResult};
pub use place::{place_page, InterleaveCursor, PlacementState};
pub use reclaim::{
    autotiering_period, background_reclaim, direct_reclaim, reclaim_window, ReclaimOutcome,
    ReclaimWindow,
};
pub use scan::{numa_scan, ScanCursor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LruKind, ModelError, NodeId, PageId, PageType, TieredMemory, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    DefaultLinux,
    NumaBalancing,
    Tpp,
    AutoTieringLike,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::DefaultLinux,
        PolicyKind::NumaBalancing,
        PolicyKind::Tpp,
        PolicyKind::AutoTieringLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::DefaultLinux => "default_linux",
            PolicyKind::NumaBalancing => "numa_balancing",
            PolicyKind::Tpp => "tpp",
            PolicyKind::AutoTieringLike => "autotiering_like",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default_linux" | "default" | "linux" => Ok(PolicyKind::DefaultLinux),
            "numa_balancing" | "numa" | "autonuma" => Ok(PolicyKind::NumaBalancing),
            "tpp" => Ok(PolicyKind::Tpp),
            "autotiering_like" | "autotiering" => Ok(PolicyKind::AutoTieringLike),
            other => Err(format!("unknown policy '{other}'")),
        }
    }
}

/// N pages on the local node followed by K pages on the CXL node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interleave {
    pub n: u32,
    pub k: u32,
}

impl Interleave {
    pub fn new(n: u32, k: u32) -> Result<Self, PolicyError> {
        if n == 0 {
            return Err(PolicyError::Invalid("interleave n must be >= 1".into()));
        }
        Ok(Self { n, k })
    }
}

impl std::fmt::Display for Interleave {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.n, self.k)
    }
}

impl std::str::FromStr for Interleave {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PolicyError::Invalid(format!("interleave '{s}' is not N:K"));
        let (n, k) = s.split_once(':').ok_or_else(bad)?;
        Interleave::new(
            n.trim().parse().map_err(|_| bad())?,
            k.trim().parse().map_err(|_| bad())?,
        )
    }
}

/// Order in which reclaim drains the two inactive lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemotionOrder {
    FileFirst,
    Proportional,
}

/// Policy selector plus every tunable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub interleave: Option<Interleave>,
    /// Prefer the CXL node for file pages.
    pub type_aware_alloc: bool,
    /// Only promote pages already on an active list (Tpp).
    pub active_lru_filter: bool,
    /// Separate allocation and demotion watermarks (Tpp).
    pub decouple_watermarks: bool,
    /// Pages poisoned per node per scan pass.
    pub scan_quota: u64,
    pub scan_period_ns: u64,
    /// Demotion watermark as a fraction of local capacity.
    pub demote_scale_factor: f64,
    /// Promotion buffer as a fraction of local capacity (AutoTieringLike).
    pub reserved_promo_buffer: f64,
    /// Pages accessed fewer times than this in a scan period count as cold
    /// (AutoTieringLike).
    pub access_threshold: u32,
    pub demotion_order: DemotionOrder,
    /// List that demoted pages join on the CXL node.
    pub demoted_lru: LruKind,
    /// Pages handled per reclaim pass.
    pub reclaim_batch: usize,
}

pub const PAGE_SIZE_BYTES: u64 = 4096;
pub const DEFAULT_SCAN_BYTES: u64 = 256 << 20;

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            interleave: None,
            type_aware_alloc: false,
            active_lru_filter: kind == PolicyKind::Tpp,
            decouple_watermarks: kind == PolicyKind::Tpp,
            scan_quota: DEFAULT_SCAN_BYTES / PAGE_SIZE_BYTES,
            scan_period_ns: 1_000_000_000,
            demote_scale_factor: 0.02,
            reserved_promo_buffer: 0.01,
            access_threshold: 1,
            demotion_order: DemotionOrder::FileFirst,
            demoted_lru: LruKind::Inactive,
            reclaim_batch: 32,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if let Some(il) = self.interleave {
            Interleave::new(il.n, il.k)?;
        }
        if self.scan_period_ns == 0 {
            return Err(PolicyError::Invalid("scan_period_ns must be > 0".into()));
        }
        if self.reclaim_batch == 0 {
            return Err(PolicyError::Invalid("reclaim_batch must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.demote_scale_factor) {
            return Err(PolicyError::Invalid(
                "demote_scale_factor must be in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.reserved_promo_buffer) {
            return Err(PolicyError::Invalid(
                "reserved_promo_buffer must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Decoupled allocation/demotion watermarks are in force.
    pub fn decoupled(&self) -> bool {
        self.kind == PolicyKind::Tpp && self.decouple_watermarks
    }

    /// Local reclaim migrates to CXL instead of swapping.
    pub fn demotes(&self) -> bool {
        matches!(self.kind, PolicyKind::Tpp | PolicyKind::AutoTieringLike)
    }

    /// Whether numa_scan samples pages on `tier`.
    pub fn scans(&self, tier: Tier) -> bool {
        match self.kind {
            PolicyKind::DefaultLinux => false,
            PolicyKind::NumaBalancing | PolicyKind::AutoTieringLike => true,
            PolicyKind::Tpp => tier == Tier::Cxl,
        }
    }

    pub fn is_approximation(&self) -> bool {
        self.kind == PolicyKind::AutoTieringLike
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromotionOutcome {
    Promoted,
    DeferredMarkedAccessed,
    FailedLowMemory,
    FailedPageBusy,
    NotCandidate,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("out of memory: no node can host page {0}")]
    OutOfMemory(PageId),
    #[error("invalid policy: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mutable per-run policy state.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub placement: PlacementState,
    pub scan: ScanCursor,
    /// Remaining promotion credits (AutoTieringLike).
    pub promo_credits: u64,
    pub promo_credit_cap: u64,
    /// When false, reclaim never swaps and a full machine is out of memory.
    pub swap_enabled: bool,
}

impl PolicyState {
    pub fn new(spec: &PolicySpec, mem: &TieredMemory) -> Self {
        let local_cap = mem.node(mem.local()).capacity();
        let cap = (spec.reserved_promo_buffer * local_cap as f64).ceil() as u64;
        Self {
            placement: PlacementState::new(),
            scan: ScanCursor::new(mem.nodes().len()),
            promo_credits: cap,
            promo_credit_cap: cap,
            swap_enabled: true,
        }
    }

    pub(crate) fn refill_credits(&mut self, n: u64) {
        self.promo_credits = (self.promo_credits + n).min(self.promo_credit_cap);
    }
}

/// Puts a page that just left swap back into memory.
pub fn swap_in(
    spec: &PolicySpec,
    state: &mut PolicyState,
    mem: &mut TieredMemory,
    page: PageId,
    now: u64,
) -> Result<NodeId, PolicyError> {
    let kind = mem
        .swapped_type(page)
        .ok_or(ModelError::NotResident(page))?;
    let node = place_page(spec, kind, mem, &mut state.placement, page)?;
    mem.take_from_swap(page);
    mem.insert(node, page, kind, LruKind::Inactive, now)?;
    mem.counters.pgswapin += 1;
    count_alloc(mem, node);
    Ok(node)
}

pub(crate) fn count_alloc(mem: &mut TieredMemory, node: NodeId) {
    match mem.tier_of(node) {
        Tier::Local => mem.counters.pgalloc_local += 1,
        Tier::Cxl => mem.counters.pgalloc_cxl += 1,
    }
}

/// Allocates a new page through the placement policy.
pub fn allocate(
    spec: &PolicySpec,
    state: &mut PolicyState,
    mem: &mut TieredMemory,
    page: PageId,
    kind: PageType,
    now: u64,
) -> Result<NodeId, PolicyError> {
    let node = place_page(spec, kind, mem, &mut state.placement, page)?;
    mem.insert(node, page, kind, LruKind::Inactive, now)?;
    count_alloc(mem, node);
    Ok(node)
}
