//! Randomized case builders and checkers shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tiersim::model::{LruKind, NodeId, NodeParams, NodeState, PageFrame, PageId, PageType, WatermarkFractions};
use tiersim::policy::{Interleave, PolicyKind, PolicySpec};
use tiersim::sim::{SimConfig, Simulator};
use tiersim::trace::{Op, TraceEvent};

pub const MAX_PAGES: u64 = 64;
pub const MAX_EVENTS: usize = 512;

/// A small random trace and a random config that puts it under pressure.
pub fn random_case(seed: u64) -> (Vec<TraceEvent>, SimConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = PolicyKind::ALL[rng.gen_range(0..PolicyKind::ALL.len())];
    let mut policy = PolicySpec::new(kind);
    if rng.gen_bool(0.2) {
        policy.interleave = Some(Interleave::new(rng.gen_range(1..4), rng.gen_range(0..3)).unwrap());
    }
    policy.type_aware_alloc = rng.gen_bool(0.2);
    if kind == PolicyKind::Tpp {
        policy.active_lru_filter = rng.gen_bool(0.7);
        policy.decouple_watermarks = rng.gen_bool(0.7);
    }
    policy.scan_quota = rng.gen_range(1..=16);
    policy.scan_period_ns = rng.gen_range(20_000..=200_000);
    policy.reclaim_batch = rng.gen_range(1..=8);

    let local = rng.gen_range(8..=40);
    let cxl = if rng.gen_bool(0.9) { rng.gen_range(8..=40) } else { 0 };
    let mut cfg = SimConfig::two_tier(local, cxl, policy);
    cfg.report_window_ns = 100_000;
    cfg.migration_cost_ns = rng.gen_range(0..=2_000);
    cfg.seed = seed;

    let n = rng.gen_range(1..=MAX_EVENTS);
    let mut events = Vec::with_capacity(n);
    let mut live: Vec<PageId> = Vec::new();
    let mut next = 0u64;
    let mut time = 0u64;
    for _ in 0..n {
        time += rng.gen_range(0..=20_000);
        let roll: f64 = rng.gen();
        let op = if live.is_empty() || (roll < 0.25 && next < MAX_PAGES) {
            if next >= MAX_PAGES {
                break;
            }
            let kind = if rng.gen_bool(0.5) { PageType::Anon } else { PageType::File };
            let p = PageId(next);
            next += 1;
            live.push(p);
            Op::Alloc(p, kind)
        } else if roll < 0.33 {
            let i = rng.gen_range(0..live.len());
            Op::Free(live.swap_remove(i))
        } else {
            // Skew accesses toward a few pages so promotion paths fire.
            let p = if rng.gen_bool(0.6) {
                live[rng.gen_range(0..live.len().min(4))]
            } else {
                *live.choose(&mut rng).unwrap()
            };
            if rng.gen_bool(0.3) {
                Op::Store(p)
            } else {
                Op::Load(p)
            }
        };
        events.push(TraceEvent::new(time, op));
    }
    (events, cfg)
}

/// Runs the case, auditing every invariant after every event.
pub fn check_case(events: &[TraceEvent], cfg: SimConfig) -> Result<(), String> {
    let mut sim = Simulator::new(cfg).map_err(|e| e.to_string())?;
    let mut before = sim.counters().clone();
    for (i, ev) in events.iter().enumerate() {
        sim.step(*ev).map_err(|e| format!("event {i} ({ev}): {e}"))?;
        sim.audit().map_err(|e| format!("after event {i} ({ev}): {e}"))?;
        let now = sim.counters().clone();
        now.check_promotion_chain()
            .map_err(|e| format!("after event {i}: {e}"))?;
        now.dominates(&before)
            .map_err(|e| format!("after event {i}: {e}"))?;
        before = now;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum LruOp {
    Insert { page: u8, file: bool, active: bool },
    Access(u8),
    Deactivate { file: bool, n: u8 },
    Remove(u8),
}

pub fn random_lru_ops(seed: u64, len: usize) -> Vec<LruOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| match rng.gen_range(0..4) {
            0 => LruOp::Insert {
                page: rng.gen_range(0..64),
                file: rng.gen(),
                active: rng.gen(),
            },
            1 => LruOp::Access(rng.gen_range(0..64)),
            2 => LruOp::Deactivate {
                file: rng.gen(),
                n: rng.gen_range(0..6),
            },
            _ => LruOp::Remove(rng.gen_range(0..64)),
        })
        .collect()
}

fn kind_of(file: bool) -> PageType {
    if file {
        PageType::File
    } else {
        PageType::Anon
    }
}

/// Applies `ops` to a node and to a plain vector model of the four lists
/// (head at index 0), comparing them after every step.
pub fn check_lru_ops(ops: &[LruOp], capacity: u64) -> Result<(), String> {
    let mut node = NodeState::new(NodeId(0), NodeParams::local(capacity), &WatermarkFractions::default())
        .map_err(|e| e.to_string())?;
    let mut lists: HashMap<(PageType, LruKind), Vec<PageId>> = HashMap::new();
    for k in PageType::ALL {
        for l in [LruKind::Active, LruKind::Inactive] {
            lists.insert((k, l), Vec::new());
        }
    }
    let mut resident: HashMap<PageId, (PageType, LruKind)> = HashMap::new();

    for (step, op) in ops.iter().enumerate() {
        match *op {
            LruOp::Insert { page, file, active } => {
                let p = PageId(page.into());
                let kind = kind_of(file);
                let lru = if active { LruKind::Active } else { LruKind::Inactive };
                let got = node.lru_insert(PageFrame::new(p, kind), lru);
                let expect_ok = !resident.contains_key(&p) && (resident.len() as u64) < capacity;
                if got.is_ok() != expect_ok {
                    return Err(format!("step {step}: insert {p} gave {got:?}"));
                }
                if expect_ok {
                    lists.get_mut(&(kind, lru)).unwrap().insert(0, p);
                    resident.insert(p, (kind, lru));
                }
            }
            LruOp::Access(page) => {
                let p = PageId(page.into());
                let got = node.mark_accessed(p, step as u64);
                match resident.get(&p).copied() {
                    None => {
                        if got.is_ok() {
                            return Err(format!("step {step}: access of absent {p} succeeded"));
                        }
                    }
                    Some((kind, lru)) => {
                        if got != Ok(lru) {
                            return Err(format!("step {step}: access {p} gave {got:?}, expected {lru:?}"));
                        }
                        lists.get_mut(&(kind, lru)).unwrap().retain(|&q| q != p);
                        lists.get_mut(&(kind, LruKind::Active)).unwrap().insert(0, p);
                        resident.insert(p, (kind, LruKind::Active));
                    }
                }
            }
            LruOp::Deactivate { file, n } => {
                let kind = kind_of(file);
                let mut moved = 0;
                for _ in 0..n {
                    let Some(p) = lists.get_mut(&(kind, LruKind::Active)).unwrap().pop() else {
                        break;
                    };
                    lists.get_mut(&(kind, LruKind::Inactive)).unwrap().insert(0, p);
                    resident.insert(p, (kind, LruKind::Inactive));
                    moved += 1;
                }
                let got = node.deactivate(kind, n.into());
                if got != moved {
                    return Err(format!("step {step}: deactivate moved {got}, expected {moved}"));
                }
            }
            LruOp::Remove(page) => {
                let p = PageId(page.into());
                let got = node.lru_remove(p).is_some();
                let expected = resident.remove(&p);
                if got != expected.is_some() {
                    return Err(format!("step {step}: remove {p} returned {got}"));
                }
                if let Some(key) = expected {
                    lists.get_mut(&key).unwrap().retain(|&q| q != p);
                }
            }
        }
        for (&(kind, lru), want) in &lists {
            let have: Vec<PageId> = node.list(kind, lru).iter().collect();
            if &have != want {
                return Err(format!("step {step}: {kind:?}/{lru:?} is {have:?}, oracle {want:?}"));
            }
        }
        if node.free() != capacity - resident.len() as u64 {
            return Err(format!("step {step}: free {} disagrees with oracle", node.free()));
        }
    }
    Ok(())
}
