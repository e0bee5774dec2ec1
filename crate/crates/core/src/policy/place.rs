use crate::model::{NodeId, NodeState, PageId, PageType, TieredMemory, WatermarkState};

use super::{PolicyError, PolicyKind, PolicySpec};

/// Position inside the N:K round robin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InterleaveCursor {
    pub position: u64,
}

#[derive(Debug, Clone, Default)]
pub struct PlacementState {
    pub interleave: InterleaveCursor,
}

impl PlacementState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Tpp without decoupling needs the node clear of every watermark,
/// demotion included, while its reclaim stops at `high`. Policies without
/// a demotion watermark only need `low` and `allocation`.
fn local_permits(spec: &PolicySpec, node: &NodeState) -> bool {
    match node.watermark_state() {
        WatermarkState::Ok => true,
        WatermarkState::BelowDemotion => spec.decoupled() || spec.kind != PolicyKind::Tpp,
        _ => false,
    }
}

/// Chooses the node a new (or swapped-in) page goes to.
pub fn place_page(
    spec: &PolicySpec,
    kind: PageType,
    mem: &TieredMemory,
    state: &mut PlacementState,
    page: PageId,
) -> Result<NodeId, PolicyError> {
    let local = mem.local();
    let first_cxl = mem.cxl_nodes().next();
    let any_free = || {
        mem.by_distance()
            .iter()
            .copied()
            .find(|&id| mem.node(id).free() > 0)
            .ok_or(PolicyError::OutOfMemory(page))
    };

    if let Some(il) = spec.interleave {
        let period = u64::from(il.n) + u64::from(il.k);
        let pos = state.interleave.position % period;
        state.interleave.position += 1;
        let target = if pos < u64::from(il.n) {
            local
        } else {
            first_cxl.unwrap_or(local)
        };
        if mem.node(target).free() > 0 {
            return Ok(target);
        }
        return any_free();
    }

    if spec.type_aware_alloc && kind == PageType::File {
        if let Some(cxl) = first_cxl {
            let n = mem.node(cxl);
            if n.free() > n.watermarks.min {
                return Ok(cxl);
            }
        }
    }

    if local_permits(spec, mem.node(local)) {
        return Ok(local);
    }
    for &id in mem.by_distance() {
        if id == local {
            continue;
        }
        let n = mem.node(id);
        if n.free() > 0 && n.watermark_state() != WatermarkState::BelowMin {
            return Ok(id);
        }
    }
    any_free()
}
