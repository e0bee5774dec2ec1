use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::{
    CounterSet, LruKind, ModelError, NodeId, NodeParams, NodeState, PageFrame, PageId, PageType,
    Tier, WatermarkFractions,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invariant violated: {0}")]
pub struct InvariantViolation(pub String);

/// All nodes of one simulated machine plus the swap set and counters.
#[derive(Debug, Clone)]
pub struct TieredMemory {
    nodes: Vec<NodeState>,
    local: NodeId,
    /// Nodes ordered by distance, nearest first.
    by_distance: Vec<NodeId>,
    swap: HashMap<PageId, PageType>,
    pub counters: CounterSet,
}

impl TieredMemory {
    /// Builds the node set. Exactly one node must be on the local tier.
    pub fn new(params: &[NodeParams], fractions: &WatermarkFractions) -> Result<Self, ModelError> {
        let nodes = params
            .iter()
            .enumerate()
            .map(|(i, p)| NodeState::new(NodeId(i), p.clone(), fractions))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_nodes(nodes)
    }

    pub fn from_nodes(nodes: Vec<NodeState>) -> Result<Self, ModelError> {
        let locals: Vec<NodeId> = nodes
            .iter()
            .filter(|n| n.tier() == Tier::Local)
            .map(|n| n.id)
            .collect();
        if locals.len() != 1 {
            return Err(ModelError::InvalidWatermarks(format!(
                "expected exactly one local node, found {}",
                locals.len()
            )));
        }
        for (i, n) in nodes.iter().enumerate() {
            assert_eq!(n.id, NodeId(i), "node ids must match their index");
        }
        let mut by_distance: Vec<NodeId> = nodes.iter().map(|n| n.id).collect();
        by_distance.sort_by_key(|id| (nodes[id.0].tier() != Tier::Local, nodes[id.0].params.distance, id.0));
        Ok(Self {
            local: locals[0],
            nodes,
            by_distance,
            swap: HashMap::new(),
            counters: CounterSet::default(),
        })
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut NodeState {
        &mut self.nodes[id.0]
    }

    pub fn local(&self) -> NodeId {
        self.local
    }

    /// Every node, nearest first; the local node leads.
    pub fn by_distance(&self) -> &[NodeId] {
        &self.by_distance
    }

    /// CXL nodes, nearest first.
    pub fn cxl_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.by_distance
            .iter()
            .copied()
            .filter(|&id| self.nodes[id.0].tier() == Tier::Cxl)
    }

    pub fn tier_of(&self, id: NodeId) -> Tier {
        self.nodes[id.0].tier()
    }

    pub fn locate(&self, page: PageId) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.contains(page)).map(|n| n.id)
    }

    pub fn frame(&self, page: PageId) -> Option<&PageFrame> {
        self.nodes.iter().find_map(|n| n.frame(page))
    }

    pub fn is_swapped(&self, page: PageId) -> bool {
        self.swap.contains_key(&page)
    }

    pub fn swapped_type(&self, page: PageId) -> Option<PageType> {
        self.swap.get(&page).copied()
    }

    pub fn swap_len(&self) -> usize {
        self.swap.len()
    }

    pub fn resident_pages(&self) -> u64 {
        self.nodes.iter().map(NodeState::used).sum()
    }

    pub fn is_live(&self, page: PageId) -> bool {
        self.is_swapped(page) || self.locate(page).is_some()
    }

    /// Places a fresh page on `node` at the head of `lru`.
    pub fn insert(
        &mut self,
        node: NodeId,
        page: PageId,
        kind: PageType,
        lru: LruKind,
        now: u64,
    ) -> Result<(), ModelError> {
        if self.is_live(page) {
            return Err(ModelError::AlreadyResident(page));
        }
        let mut frame = PageFrame::new(page, kind);
        frame.last_access = now;
        self.nodes[node.0].lru_insert(frame, lru)
    }

    /// Moves a resident page to another node. Migration remaps the page, so
    /// any pending hint-fault poison is dropped.
    pub fn migrate(&mut self, page: PageId, to: NodeId, lru: LruKind) -> Result<(), ModelError> {
        let from = self.locate(page).ok_or(ModelError::NotResident(page))?;
        if self.nodes[to.0].free() == 0 {
            return Err(ModelError::NoFreePages(to));
        }
        let mut frame = self.nodes[from.0].lru_remove(page).expect("located page");
        frame.hint_poisoned = false;
        self.nodes[to.0].lru_insert(frame, lru)
    }

    pub fn swap_out(&mut self, page: PageId) -> Result<PageType, ModelError> {
        let from = self.locate(page).ok_or(ModelError::NotResident(page))?;
        let frame = self.nodes[from.0].lru_remove(page).expect("located page");
        self.swap.insert(page, frame.kind);
        self.counters.pgswapout += 1;
        Ok(frame.kind)
    }

    /// Takes a page out of the swap set (the caller re-places it).
    pub fn take_from_swap(&mut self, page: PageId) -> Option<PageType> {
        self.swap.remove(&page)
    }

    /// Drops a live page entirely, wherever it is.
    pub fn free_page(&mut self, page: PageId) -> Result<(), ModelError> {
        if self.swap.remove(&page).is_some() {
            return Ok(());
        }
        let from = self.locate(page).ok_or(ModelError::NotResident(page))?;
        self.nodes[from.0].lru_remove(page);
        Ok(())
    }

    /// Page conservation and per-node list consistency. `live`, when given,
    /// is the set of pages the trace considers allocated.
    pub fn audit(&self, live: Option<&HashSet<PageId>>) -> Result<(), InvariantViolation> {
        let fail = |m: String| Err(InvariantViolation(m));
        let mut seen: HashSet<PageId> = HashSet::new();
        let mut capacity = 0;
        let mut accounted = 0;
        for n in &self.nodes {
            n.audit().map_err(InvariantViolation)?;
            capacity += n.capacity();
            accounted += n.used() + n.free();
            for f in n.frames() {
                if !seen.insert(f.page) {
                    return fail(format!("page {} resident on two nodes", f.page));
                }
                if self.swap.contains_key(&f.page) {
                    return fail(format!("page {} both resident and swapped", f.page));
                }
                if f.demoted && n.tier() == Tier::Local {
                    return fail(format!("page {} on the local node still flagged demoted", f.page));
                }
            }
        }
        if capacity != accounted {
            return fail(format!("capacity {capacity} but {accounted} pages accounted"));
        }
        if let Some(live) = live {
            let total = seen.len() + self.swap.len();
            if total != live.len() {
                return fail(format!(
                    "{} live pages but {total} resident or swapped",
                    live.len()
                ));
            }
            for p in live {
                if !seen.contains(p) && !self.swap.contains_key(p) {
                    return fail(format!("live page {p} is nowhere"));
                }
            }
        }
        self.counters
            .check_promotion_chain()
            .map_err(InvariantViolation)?;
        Ok(())
    }

    pub(crate) fn frame_mut(&mut self, page: PageId) -> Option<&mut PageFrame> {
        self.nodes.iter_mut().find_map(|n| n.frame_mut(page))
    }
}
