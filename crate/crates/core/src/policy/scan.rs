use crate::model::{NodeState, TieredMemory, Tier};

use super::PolicySpec;

/// Per-node resume point of the poisoning sweep: (list index, last sequence
/// number visited).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanCursor {
    positions: Vec<(usize, u64)>,
}

impl ScanCursor {
    pub fn new(nodes: usize) -> Self {
        Self {
            positions: vec![(0, 0); nodes],
        }
    }
}

/// Up to `quota` (list, seq, page) triples starting after `from` and
/// wrapping once around all four lists.
fn sweep(node: &NodeState, from: (usize, u64), quota: usize) -> Vec<(usize, u64, crate::model::PageId)> {
    let lists = node.lists();
    let (start, after) = from;
    let mut out = Vec::with_capacity(quota.min(node.used() as usize));
    let mut push = |li: usize, it: &mut dyn Iterator<Item = (u64, crate::model::PageId)>| {
        for (s, p) in it {
            if out.len() >= quota {
                return;
            }
            out.push((li, s, p));
        }
    };
    push(start, &mut lists[start].iter_after(after));
    for li in (start + 1..4).chain(0..start) {
        push(li, &mut lists[li].seqs());
    }
    push(start, &mut lists[start].seqs().take_while(|&(s, _)| s <= after));
    out
}

/// Poisons up to `scan_quota` pages on each node the policy samples.
/// Returns how many pages were newly poisoned.
pub fn numa_scan(spec: &PolicySpec, mem: &mut TieredMemory, cursor: &mut ScanCursor) -> u64 {
    let mut poisoned = 0;
    for i in 0..mem.nodes().len() {
        let id = mem.nodes()[i].id;
        let tier = mem.tier_of(id);
        if !spec.scans(tier) {
            continue;
        }
        let picks = sweep(mem.node(id), cursor.positions[i], spec.scan_quota as usize);
        for (li, seq, page) in picks {
            cursor.positions[i] = (li, seq);
            let frame = mem.node_mut(id).frame_mut(page).expect("listed page");
            if frame.hint_poisoned {
                continue;
            }
            frame.hint_poisoned = true;
            let kind = frame.kind;
            poisoned += 1;
            if tier == Tier::Cxl {
                mem.counters.sampled(kind);
            }
        }
    }
    poisoned
}
