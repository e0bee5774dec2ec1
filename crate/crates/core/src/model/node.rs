use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{LruKind, LruList, ModelError, NodeId, PageFrame, PageId, PageType, Tier};

/// Watermarks as fractions of node capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WatermarkFractions {
    pub min: f64,
    pub low: f64,
    pub high: f64,
    /// Allocation watermark for decoupled reclaim.
    pub allocation: f64,
    /// Demotion watermark for decoupled reclaim (`demote_scale_factor`).
    pub demotion: f64,
}

impl Default for WatermarkFractions {
    fn default() -> Self {
        Self {
            min: 0.005,
            low: 0.01,
            high: 0.015,
            allocation: 0.01,
            demotion: 0.02,
        }
    }
}

/// Watermarks resolved to page counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatermarkSet {
    pub min: u64,
    pub low: u64,
    pub high: u64,
    pub allocation: u64,
    pub demotion: u64,
}

impl WatermarkSet {
    /// Resolves fractions against `capacity`, rounding up and nudging each
    /// level just enough to keep `min < low < high` and
    /// `allocation < demotion` on tiny nodes.
    pub fn resolve(fractions: &WatermarkFractions, capacity: u64) -> Result<Self, ModelError> {
        let pages = |f: f64| -> Result<u64, ModelError> {
            if !(0.0..1.0).contains(&f) || f.is_nan() {
                return Err(ModelError::InvalidWatermarks(format!(
                    "fraction {f} outside [0, 1)"
                )));
            }
            Ok((f * capacity as f64).ceil() as u64)
        };
        let min = pages(fractions.min)?.max(1);
        let low = pages(fractions.low)?.max(min + 1);
        let high = pages(fractions.high)?.max(low + 1);
        let allocation = pages(fractions.allocation)?.max(1);
        let demotion = pages(fractions.demotion)?.max(allocation + 1);
        let set = Self {
            min,
            low,
            high,
            allocation,
            demotion,
        };
        set.validate(capacity)?;
        Ok(set)
    }

    pub fn validate(&self, capacity: u64) -> Result<(), ModelError> {
        if !(self.min < self.low && self.low < self.high && self.high <= capacity) {
            return Err(ModelError::InvalidWatermarks(format!(
                "need min < low < high <= capacity, got {} / {} / {} with capacity {capacity}",
                self.min, self.low, self.high
            )));
        }
        if self.demotion <= self.allocation || self.demotion > capacity {
            return Err(ModelError::InvalidWatermarks(format!(
                "need allocation < demotion <= capacity, got {} / {}",
                self.allocation, self.demotion
            )));
        }
        Ok(())
    }
}

/// Most severe watermark crossed by a node's free count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WatermarkState {
    Ok,
    BelowDemotion,
    BelowAllocation,
    BelowLow,
    BelowMin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub tier: Tier,
    pub capacity: u64,
    pub base_latency_ns: f64,
    /// Accesses per microsecond of simulated time.
    pub bandwidth: f64,
    pub distance: u32,
}

impl NodeParams {
    pub fn local(capacity: u64) -> Self {
        Self {
            tier: Tier::Local,
            capacity,
            base_latency_ns: 100.0,
            bandwidth: 100.0,
            distance: 10,
        }
    }

    pub fn cxl(capacity: u64) -> Self {
        Self {
            tier: Tier::Cxl,
            capacity,
            base_latency_ns: 170.0,
            bandwidth: 40.0,
            distance: 20,
        }
    }
}

fn list_index(kind: PageType, lru: LruKind) -> usize {
    match (kind, lru) {
        (PageType::Anon, LruKind::Active) => 0,
        (PageType::Anon, LruKind::Inactive) => 1,
        (PageType::File, LruKind::Active) => 2,
        (PageType::File, LruKind::Inactive) => 3,
    }
}

/// One memory tier: capacity, watermarks and the four LRU lists, plus the
/// frames of every page resident on it.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub params: NodeParams,
    pub watermarks: WatermarkSet,
    lists: [LruList; 4],
    frames: HashMap<PageId, PageFrame>,
    next_seq: u64,
}

impl NodeState {
    pub fn new(
        id: NodeId,
        params: NodeParams,
        fractions: &WatermarkFractions,
    ) -> Result<Self, ModelError> {
        let watermarks = WatermarkSet::resolve(fractions, params.capacity)?;
        Ok(Self::with_watermarks(id, params, watermarks))
    }

    pub fn with_watermarks(id: NodeId, params: NodeParams, watermarks: WatermarkSet) -> Self {
        Self {
            id,
            params,
            watermarks,
            lists: Default::default(),
            frames: HashMap::new(),
            next_seq: 1,
        }
    }

    pub fn tier(&self) -> Tier {
        self.params.tier
    }

    pub fn capacity(&self) -> u64 {
        self.params.capacity
    }

    pub fn used(&self) -> u64 {
        self.frames.len() as u64
    }

    pub fn free(&self) -> u64 {
        self.capacity() - self.used()
    }

    pub fn contains(&self, page: PageId) -> bool {
        self.frames.contains_key(&page)
    }

    pub fn frame(&self, page: PageId) -> Option<&PageFrame> {
        self.frames.get(&page)
    }

    pub fn frame_mut(&mut self, page: PageId) -> Option<&mut PageFrame> {
        self.frames.get_mut(&page)
    }

    pub fn frames(&self) -> impl Iterator<Item = &PageFrame> {
        self.frames.values()
    }

    pub(crate) fn frames_mut(&mut self) -> impl Iterator<Item = &mut PageFrame> {
        self.frames.values_mut()
    }

    pub fn list(&self, kind: PageType, lru: LruKind) -> &LruList {
        &self.lists[list_index(kind, lru)]
    }

    /// Lists in scan order: anon active, anon inactive, file active, file inactive.
    pub fn lists(&self) -> &[LruList; 4] {
        &self.lists
    }

    pub fn list_len(&self, kind: PageType, lru: LruKind) -> usize {
        self.list(kind, lru).len()
    }

    fn bump_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    /// Puts `frame` at the head of the chosen list of its type.
    pub fn lru_insert(&mut self, mut frame: PageFrame, lru: LruKind) -> Result<(), ModelError> {
        if self.frames.contains_key(&frame.page) {
            return Err(ModelError::AlreadyResident(frame.page));
        }
        if self.free() == 0 {
            return Err(ModelError::NoFreePages(self.id));
        }
        let seq = self.bump_seq();
        frame.node = self.id;
        frame.lru = lru;
        frame.lru_seq = seq;
        self.lists[list_index(frame.kind, lru)].push_head(seq, frame.page);
        self.frames.insert(frame.page, frame);
        Ok(())
    }

    /// Takes a page off its list and out of the node.
    pub fn lru_remove(&mut self, page: PageId) -> Option<PageFrame> {
        let frame = self.frames.remove(&page)?;
        let removed = self.lists[list_index(frame.kind, frame.lru)].remove(frame.lru_seq);
        debug_assert_eq!(removed, Some(page));
        Some(frame)
    }

    /// Moves the page to the head of its type's active list. Returns the list
    /// the page was on before the access.
    pub fn mark_accessed(&mut self, page: PageId, now: u64) -> Result<LruKind, ModelError> {
        let seq = self.next_seq;
        let frame = self
            .frames
            .get_mut(&page)
            .ok_or(ModelError::NotResident(page))?;
        let before = frame.lru;
        self.lists[list_index(frame.kind, frame.lru)].remove(frame.lru_seq);
        frame.lru = LruKind::Active;
        frame.lru_seq = seq;
        frame.last_access = now;
        self.lists[list_index(frame.kind, LruKind::Active)].push_head(seq, page);
        self.next_seq += 1;
        Ok(before)
    }

    /// Moves up to `n` pages from the tail of the active list of `kind` to
    /// the head of the matching inactive list.
    pub fn deactivate(&mut self, kind: PageType, n: usize) -> usize {
        let mut moved = 0;
        while moved < n {
            let Some(page) = self.lists[list_index(kind, LruKind::Active)].tail() else {
                break;
            };
            let seq = self.bump_seq();
            let frame = self.frames.get_mut(&page).expect("listed page has a frame");
            self.lists[list_index(kind, LruKind::Active)].remove(frame.lru_seq);
            frame.lru = LruKind::Inactive;
            frame.lru_seq = seq;
            self.lists[list_index(kind, LruKind::Inactive)].push_head(seq, page);
            moved += 1;
        }
        moved
    }

    /// Up to `n` reclaim candidates from the inactive tails: file first, then
    /// anon when `include_anon`. Nothing is removed.
    pub fn select_reclaim_candidates(&self, n: usize, include_anon: bool) -> Vec<PageId> {
        let mut out: Vec<PageId> = self
            .list(PageType::File, LruKind::Inactive)
            .iter_from_tail()
            .take(n)
            .collect();
        if include_anon && out.len() < n {
            let rest = n - out.len();
            out.extend(
                self.list(PageType::Anon, LruKind::Inactive)
                    .iter_from_tail()
                    .take(rest),
            );
        }
        out
    }

    /// Like [`Self::select_reclaim_candidates`] but draws from both inactive
    /// tails in proportion to their lengths.
    pub fn select_reclaim_candidates_proportional(&self, n: usize) -> Vec<PageId> {
        let file = self.list(PageType::File, LruKind::Inactive);
        let anon = self.list(PageType::Anon, LruKind::Inactive);
        let total = file.len() + anon.len();
        if total == 0 || n == 0 {
            return Vec::new();
        }
        let n = n.min(total);
        let mut from_file = ((n as u128 * file.len() as u128) / total as u128) as usize;
        let mut from_anon = n - from_file;
        if from_anon > anon.len() {
            from_file += from_anon - anon.len();
            from_anon = anon.len();
        }
        let mut out: Vec<PageId> = file.iter_from_tail().take(from_file).collect();
        out.extend(anon.iter_from_tail().take(from_anon));
        out
    }

    pub fn watermark_state(&self) -> WatermarkState {
        let free = self.free();
        let wm = &self.watermarks;
        if free < wm.min {
            WatermarkState::BelowMin
        } else if free < wm.low {
            WatermarkState::BelowLow
        } else if free < wm.allocation {
            WatermarkState::BelowAllocation
        } else if free < wm.demotion {
            WatermarkState::BelowDemotion
        } else {
            WatermarkState::Ok
        }
    }

    /// Checks list/frame consistency and the free-count identity.
    pub(crate) fn audit(&self) -> Result<(), String> {
        let listed: usize = self.lists.iter().map(LruList::len).sum();
        if listed != self.frames.len() {
            return Err(format!(
                "node {:?}: {} listed pages but {} frames",
                self.id,
                listed,
                self.frames.len()
            ));
        }
        if self.frames.len() as u64 > self.capacity() {
            return Err(format!("node {:?} over capacity", self.id));
        }
        for kind in PageType::ALL {
            for lru in [LruKind::Active, LruKind::Inactive] {
                for (seq, page) in self.list(kind, lru).seqs() {
                    let Some(frame) = self.frames.get(&page) else {
                        return Err(format!("node {:?}: listed page {page} has no frame", self.id));
                    };
                    if frame.kind != kind || frame.lru != lru || frame.lru_seq != seq {
                        return Err(format!(
                            "node {:?}: page {page} list membership disagrees with its frame",
                            self.id
                        ));
                    }
                    if frame.node != self.id {
                        return Err(format!("page {page} frame names the wrong node"));
                    }
                    if seq >= self.next_seq {
                        return Err(format!("page {page} has a future sequence number"));
                    }
                }
            }
        }
        for frame in self.frames.values() {
            if self.lists[list_index(frame.kind, frame.lru)].get(frame.lru_seq) != Some(frame.page)
            {
                return Err(format!("page {} frame is not on its list", frame.page));
            }
        }
        Ok(())
    }
}
