use crate::model::{LruKind, ModelError, NodeId, PageId, TieredMemory, Tier};

use super::{PolicyKind, PolicySpec, PolicyState, PromotionOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessResult {
    pub latency_ns: f64,
    /// Node that served the access.
    pub node: NodeId,
    /// Present when the access raised a NUMA hint fault.
    pub promotion: Option<PromotionOutcome>,
    /// Local free pages at the moment a promotion gate was evaluated.
    pub local_free_at_fault: Option<u64>,
}

/// Serves one load or store on a resident page.
///
/// `latency_of` returns the current per-access latency of a node. A
/// successful promotion adds `migration_cost_ns` to the faulting access.
pub fn handle_access(
    spec: &PolicySpec,
    state: &mut PolicyState,
    mem: &mut TieredMemory,
    page: PageId,
    now: u64,
    latency_of: impl Fn(NodeId) -> f64,
    migration_cost_ns: f64,
) -> Result<AccessResult, ModelError> {
    let node = mem.locate(page).ok_or(ModelError::NotResident(page))?;
    let tier = mem.tier_of(node);
    let mut latency = latency_of(node);
    match tier {
        Tier::Local => mem.counters.pgaccess_local += 1,
        Tier::Cxl => mem.counters.pgaccess_cxl += 1,
    }

    let before = mem.node_mut(node).mark_accessed(page, now)?;
    let frame = mem.node_mut(node).frame_mut(page).expect("resident");
    frame.access_count = frame.access_count.saturating_add(1);
    let poisoned = std::mem::replace(&mut frame.hint_poisoned, false);

    let mut result = AccessResult {
        latency_ns: latency,
        node,
        promotion: None,
        local_free_at_fault: None,
    };
    if !poisoned {
        return Ok(result);
    }
    mem.counters.numa_hint_faults += 1;
    result.local_free_at_fault = Some(mem.node(mem.local()).free());
    let outcome = promotion_path(spec, state, mem, page, tier, before, now);
    if outcome == PromotionOutcome::Promoted {
        latency += migration_cost_ns;
    }
    result.latency_ns = latency;
    result.promotion = Some(outcome);
    Ok(result)
}

fn promotion_path(
    spec: &PolicySpec,
    state: &mut PolicyState,
    mem: &mut TieredMemory,
    page: PageId,
    tier: Tier,
    before: LruKind,
    now: u64,
) -> PromotionOutcome {
    if tier == Tier::Local || spec.kind == PolicyKind::DefaultLinux {
        return PromotionOutcome::NotCandidate;
    }
    if spec.kind == PolicyKind::Tpp && spec.active_lru_filter && before == LruKind::Inactive {
        // mark_accessed already moved it to the active list.
        return PromotionOutcome::DeferredMarkedAccessed;
    }

    let frame = mem.frame(page).expect("resident");
    let (kind, demoted) = (frame.kind, frame.demoted);
    mem.counters.candidate(kind);
    if demoted {
        mem.counters.pgpromote_candidate_demoted += 1;
    }

    let local = mem.node(mem.local());
    let gate_open = match spec.kind {
        PolicyKind::Tpp if spec.decouple_watermarks => true,
        PolicyKind::Tpp | PolicyKind::NumaBalancing => local.free() >= local.watermarks.high,
        PolicyKind::AutoTieringLike => state.promo_credits > 0,
        PolicyKind::DefaultLinux => unreachable!(),
    };
    if !gate_open {
        mem.counters.pgpromote_fail_low_memory += 1;
        return PromotionOutcome::FailedLowMemory;
    }
    let outcome = promote(mem, page, now);
    if outcome == PromotionOutcome::Promoted && spec.kind == PolicyKind::AutoTieringLike {
        state.promo_credits -= 1;
    }
    outcome
}

/// Migrates a CXL-resident page to the local node's active list.
///
/// Only needs one free local page; policy-specific watermark gates are
/// applied by the caller.
pub fn promote(mem: &mut TieredMemory, page: PageId, now: u64) -> PromotionOutcome {
    let Some(frame) = mem.frame(page) else {
        return PromotionOutcome::NotCandidate;
    };
    if mem.tier_of(frame.node) != Tier::Cxl {
        return PromotionOutcome::NotCandidate;
    }
    let kind = frame.kind;
    if frame.migrating_until > now {
        mem.counters.pgpromote_fail_page_busy += 1;
        return PromotionOutcome::FailedPageBusy;
    }
    let local = mem.local();
    if mem.node(local).free() == 0 {
        mem.counters.pgpromote_fail_low_memory += 1;
        return PromotionOutcome::FailedLowMemory;
    }
    mem.migrate(page, local, LruKind::Active)
        .expect("local has a free page");
    let frame = mem.frame_mut(page).expect("just migrated");
    frame.demoted = false;
    mem.counters.promoted(kind);
    PromotionOutcome::Promoted
}
