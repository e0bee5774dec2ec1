use crate::model::{LruKind, NodeId, NodeState, PageId, PageType, TieredMemory, Tier};

use super::{DemotionOrder, PolicySpec, PolicyState};

/// Free-page band in which a node's reclaim daemon runs: it wakes when
/// `free < trigger` and stops once `free >= target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReclaimWindow {
    pub trigger: u64,
    pub target: u64,
}

pub fn reclaim_window(spec: &PolicySpec, node: &NodeState) -> ReclaimWindow {
    let wm = &node.watermarks;
    if node.tier() == Tier::Local && spec.decoupled() {
        ReclaimWindow {
            trigger: wm.demotion,
            target: wm.demotion,
        }
    } else {
        ReclaimWindow {
            trigger: wm.low,
            target: wm.high,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReclaimOutcome {
    pub demoted: u64,
    pub swapped: u64,
}

impl ReclaimOutcome {
    pub fn pages(&self) -> u64 {
        self.demoted + self.swapped
    }
}

/// Ages active pages onto the inactive lists so that reclaim has
/// candidates: each inactive list is topped up toward the size of its
/// active list, and if fewer than `want` inactive pages exist overall the
/// shortfall is taken from the active tails, file first.
fn refill_inactive(node: &mut NodeState, want: usize) {
    for kind in [PageType::File, PageType::Anon] {
        let active = node.list_len(kind, LruKind::Active);
        let inactive = node.list_len(kind, LruKind::Inactive);
        if inactive < active {
            node.deactivate(kind, ((active - inactive).div_ceil(2)).min(want));
        }
    }
    let inactive = node.list_len(PageType::File, LruKind::Inactive)
        + node.list_len(PageType::Anon, LruKind::Inactive);
    if inactive < want {
        let need = want - inactive;
        let moved = node.deactivate(PageType::File, need);
        node.deactivate(PageType::Anon, need - moved);
    }
}

fn candidates(spec: &PolicySpec, node: &NodeState, n: usize) -> Vec<PageId> {
    match spec.demotion_order {
        DemotionOrder::FileFirst => node.select_reclaim_candidates(n, true),
        DemotionOrder::Proportional => node.select_reclaim_candidates_proportional(n),
    }
}

/// Moves one page to the nearest CXL node with room. Returns false when
/// every CXL node is full.
fn demote_one(
    spec: &PolicySpec,
    mem: &mut TieredMemory,
    page: PageId,
    now: u64,
    migration_cost_ns: u64,
) -> bool {
    let Some(target) = mem.cxl_nodes().find(|&id| mem.node(id).free() > 0) else {
        return false;
    };
    let kind = mem.frame(page).expect("candidate is resident").kind;
    mem.migrate(page, target, spec.demoted_lru)
        .expect("target has room");
    let frame = mem.frame_mut(page).expect("just migrated");
    frame.demoted = true;
    frame.migrating_until = now + migration_cost_ns;
    mem.counters.demoted(kind);
    true
}

/// One reclaim pass on `node`, handling at most `reclaim_batch` pages and
/// never pushing free above `target_free`.
///
/// Local nodes under a demoting policy migrate candidates to CXL and fall
/// back to swap per page when no CXL node has room. Every other node swaps.
pub fn background_reclaim(
    spec: &PolicySpec,
    state: &mut PolicyState,
    mem: &mut TieredMemory,
    node: NodeId,
    target_free: u64,
    now: u64,
    migration_cost_ns: u64,
) -> ReclaimOutcome {
    let mut out = ReclaimOutcome::default();
    let free = mem.node(node).free();
    let want = (target_free.saturating_sub(free) as usize).min(spec.reclaim_batch);
    if want == 0 {
        return out;
    }
    refill_inactive(mem.node_mut(node), want);
    let demote = spec.demotes() && mem.tier_of(node) == Tier::Local;
    for page in candidates(spec, mem.node(node), want) {
        if demote && demote_one(spec, mem, page, now, migration_cost_ns) {
            out.demoted += 1;
        } else if state.swap_enabled {
            mem.swap_out(page).expect("candidate is resident");
            out.swapped += 1;
        }
    }
    if out.demoted > 0 {
        state.refill_credits(out.demoted);
    }
    out
}

/// Periodic cold-page demotion of the AutoTiering-like baseline: local pages
/// touched fewer than `access_threshold` times since the last period are
/// demoted, tail first, until local free reaches `high` plus the promotion
/// buffer. Access counts are reset afterwards.
pub fn autotiering_period(
    spec: &PolicySpec,
    state: &mut PolicyState,
    mem: &mut TieredMemory,
    now: u64,
    migration_cost_ns: u64,
) -> u64 {
    let local = mem.local();
    let node = mem.node(local);
    let goal = node.watermarks.high + state.promo_credit_cap;
    let want = (goal.saturating_sub(node.free())).min(spec.scan_quota) as usize;
    let mut cold = Vec::new();
    if want > 0 {
        let order = [
            (PageType::File, LruKind::Inactive),
            (PageType::Anon, LruKind::Inactive),
            (PageType::File, LruKind::Active),
            (PageType::Anon, LruKind::Active),
        ];
        'outer: for (kind, lru) in order {
            for page in node.list(kind, lru).iter_from_tail() {
                if cold.len() >= want {
                    break 'outer;
                }
                if node.frame(page).expect("listed").access_count < spec.access_threshold {
                    cold.push(page);
                }
            }
        }
    }
    let mut demoted = 0;
    for page in cold {
        if !demote_one(spec, mem, page, now, migration_cost_ns) {
            break;
        }
        demoted += 1;
    }
    state.refill_credits(demoted);
    for id in 0..mem.nodes().len() {
        for f in mem.node_mut(NodeId(id)).frames_mut() {
            f.access_count = 0;
        }
    }
    demoted
}

/// Synchronous reclaim when no node has a free page: swaps one page out of
/// the farthest node that has anything resident.
pub fn direct_reclaim(mem: &mut TieredMemory) -> Option<PageId> {
    let order: Vec<NodeId> = mem.by_distance().iter().rev().copied().collect();
    for id in order {
        let node = mem.node_mut(id);
        if node.used() == 0 {
            continue;
        }
        refill_inactive(node, 1);
        if let Some(&page) = node.select_reclaim_candidates(1, true).first() {
            mem.swap_out(page).expect("candidate is resident");
            return Some(page);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::testutil::*;
    use crate::policy::PolicyKind;

    const LOCAL: NodeId = NodeId(0);
    const CXL: NodeId = NodeId(1);

    #[test]
    fn tpp_demotes_everything_when_cxl_has_room() {
        let spec = PolicySpec::new(PolicyKind::Tpp);
        let mut mem = memory(1000, 500);
        let mut st = PolicyState::new(&spec, &mem);
        fill(&mut mem, LOCAL, 0..990, PageType::File, LruKind::Inactive);
        let win = reclaim_window(&spec, mem.node(LOCAL));
        assert_eq!(win, ReclaimWindow { trigger: 20, target: 20 });
        let out = background_reclaim(&spec, &mut st, &mut mem, LOCAL, win.target, 0, 1000);
        assert_eq!(out, ReclaimOutcome { demoted: 10, swapped: 0 });
        assert_eq!(mem.node(LOCAL).free(), 20);
        assert_eq!(mem.counters.pgdemote_file, 10);
        assert_eq!(mem.counters.pgswapout, 0);
        // Oldest pages went first and carry the demoted flag.
        let f = mem.frame(PageId(0)).unwrap();
        assert_eq!(f.node, CXL);
        assert!(f.demoted);
        assert_eq!(f.lru, LruKind::Inactive);
        assert_eq!(f.migrating_until, 1000);
    }

    #[test]
    fn tpp_falls_back_to_swap_when_cxl_full() {
        let spec = PolicySpec::new(PolicyKind::Tpp);
        let mut mem = memory(1000, 10);
        let mut st = PolicyState::new(&spec, &mem);
        fill(&mut mem, CXL, 5000..5010, PageType::Anon, LruKind::Active);
        fill(&mut mem, LOCAL, 0..990, PageType::Anon, LruKind::Inactive);
        let out = background_reclaim(&spec, &mut st, &mut mem, LOCAL, 20, 0, 1000);
        assert_eq!(out, ReclaimOutcome { demoted: 0, swapped: 10 });
        assert_eq!(mem.counters.pgswapout, 10);
        assert!(mem.is_swapped(PageId(0)));
    }

    #[test]
    fn default_linux_swaps_exactly_the_deficit() {
        let spec = PolicySpec::new(PolicyKind::DefaultLinux);
        // capacity 1000: low 10, high 15. Build free = 5 with 30 inactive.
        let mut mem = memory(1000, 500);
        let mut st = PolicyState::new(&spec, &mem);
        fill(&mut mem, LOCAL, 0..30, PageType::File, LruKind::Inactive);
        fill(&mut mem, LOCAL, 30..995, PageType::Anon, LruKind::Active);
        let win = reclaim_window(&spec, mem.node(LOCAL));
        assert_eq!(mem.node(LOCAL).free(), 5);
        let deficit = win.target - mem.node(LOCAL).free();
        let mut spec_big = spec.clone();
        spec_big.reclaim_batch = 64;
        let out = background_reclaim(&spec_big, &mut st, &mut mem, LOCAL, win.target, 0, 1000);
        // Counting oracle: swapped = min(deficit, reclaimable, batch).
        assert_eq!(deficit, 10);
        assert_eq!(out.swapped, deficit.min(30));
        assert_eq!(mem.counters.pgswapout, 10);
        assert_eq!(mem.counters.demotions(), 0);
    }

    #[test]
    fn default_linux_deficit_of_twenty_from_thirty_candidates() {
        let spec = PolicySpec::new(PolicyKind::DefaultLinux);
        // capacity 4000: low 40, high 60. free = 40 -> deficit 20.
        let mut mem = memory(4000, 500);
        let mut st = PolicyState::new(&spec, &mem);
        fill(&mut mem, LOCAL, 0..30, PageType::File, LruKind::Inactive);
        fill(&mut mem, LOCAL, 30..3960, PageType::Anon, LruKind::Inactive);
        for i in 30..3960 {
            mem.node_mut(LOCAL).mark_accessed(PageId(i), 1).unwrap();
        }
        // Aging moves some anon pages to inactive, but file tails go first.
        let out = background_reclaim(&spec, &mut st, &mut mem, LOCAL, 60, 0, 1000);
        assert_eq!(out.swapped, 20);
        assert!((0..20).all(|i| mem.is_swapped(PageId(i))));
    }

    #[test]
    fn cxl_node_always_swaps() {
        let spec = PolicySpec::new(PolicyKind::Tpp);
        let mut mem = memory(1000, 100);
        let mut st = PolicyState::new(&spec, &mem);
        fill(&mut mem, CXL, 0..100, PageType::Anon, LruKind::Inactive);
        let win = reclaim_window(&spec, mem.node(CXL));
        let out = background_reclaim(&spec, &mut st, &mut mem, CXL, win.target, 0, 1000);
        assert_eq!(out.demoted, 0);
        assert_eq!(out.swapped, win.target);
    }

    #[test]
    fn reclaim_never_takes_active_pages_directly() {
        let spec = PolicySpec::new(PolicyKind::Tpp);
        let mut mem = memory(100, 100);
        let mut st = PolicyState::new(&spec, &mem);
        fill(&mut mem, LOCAL, 0..50, PageType::Anon, LruKind::Inactive);
        fill(&mut mem, LOCAL, 50..100, PageType::Anon, LruKind::Active);
        background_reclaim(&spec, &mut st, &mut mem, LOCAL, 5, 0, 1000);
        // Inactive outnumbers active so nothing was aged; only 0..5 left.
        assert!((0..5).all(|i| mem.locate(PageId(i)) == Some(CXL)));
        assert!((50..100).all(|i| mem.locate(PageId(i)) == Some(LOCAL)));
    }

    #[test]
    fn autotiering_demotes_cold_pages_and_refills_buffer() {
        let spec = PolicySpec::new(PolicyKind::AutoTieringLike);
        let mut mem = memory(1000, 500);
        let mut st = PolicyState::new(&spec, &mem);
        st.promo_credits = 0;
        fill(&mut mem, LOCAL, 0..1000, PageType::Anon, LruKind::Inactive);
        for i in 0..500 {
            mem.frame_mut(PageId(i)).unwrap().access_count = 3;
        }
        let n = autotiering_period(&spec, &mut st, &mut mem, 0, 1000);
        // goal = high 15 + buffer 10
        assert_eq!(n, 25);
        assert_eq!(st.promo_credits, 10);
        assert!((500..525).all(|i| mem.locate(PageId(i)) == Some(CXL)));
        assert!(mem.nodes().iter().flat_map(|n| n.frames()).all(|f| f.access_count == 0));
    }

    #[test]
    fn direct_reclaim_prefers_farthest_node() {
        let mut mem = memory(10, 10);
        fill(&mut mem, LOCAL, 0..10, PageType::Anon, LruKind::Active);
        fill(&mut mem, CXL, 10..20, PageType::Anon, LruKind::Active);
        let p = direct_reclaim(&mut mem).unwrap();
        assert!(p.0 >= 10);
        assert!(mem.is_swapped(p));
        let mut empty = memory(10, 10);
        assert_eq!(direct_reclaim(&mut empty), None);
    }
}
