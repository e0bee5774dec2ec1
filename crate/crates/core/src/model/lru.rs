use std::collections::BTreeMap;

use super::PageId;

/// One LRU list ordered by activation sequence number.
///
/// The entry with the largest sequence number is the head (most recently
/// activated); the smallest is the tail. Moving a page to the head is a
/// remove plus an insert under a fresh sequence number.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LruList {
    entries: BTreeMap<u64, PageId>,
}

impl LruList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn push_head(&mut self, seq: u64, page: PageId) {
        debug_assert!(self.entries.last_key_value().is_none_or(|(&s, _)| s < seq));
        self.entries.insert(seq, page);
    }

    pub(crate) fn remove(&mut self, seq: u64) -> Option<PageId> {
        self.entries.remove(&seq)
    }

    pub(crate) fn get(&self, seq: u64) -> Option<PageId> {
        self.entries.get(&seq).copied()
    }

    pub fn tail(&self) -> Option<PageId> {
        self.entries.first_key_value().map(|(_, &p)| p)
    }

    pub fn head(&self) -> Option<PageId> {
        self.entries.last_key_value().map(|(_, &p)| p)
    }

    /// Head to tail.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = PageId> + '_ {
        self.entries.values().rev().copied()
    }

    /// Tail to head.
    pub fn iter_from_tail(&self) -> impl Iterator<Item = PageId> + '_ {
        self.entries.values().copied()
    }

    /// Tail to head, starting strictly after `seq`.
    pub(crate) fn iter_after(&self, seq: u64) -> impl Iterator<Item = (u64, PageId)> + '_ {
        self.entries
            .range((std::ops::Bound::Excluded(seq), std::ops::Bound::Unbounded))
            .map(|(&s, &p)| (s, p))
    }

    pub(crate) fn seqs(&self) -> impl Iterator<Item = (u64, PageId)> + '_ {
        self.entries.iter().map(|(&s, &p)| (s, p))
    }
}
