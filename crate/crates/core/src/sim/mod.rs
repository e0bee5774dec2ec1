//! Trace-driven event loop.
//!
//! Time comes from the trace. Charged latency never stretches it; it only
//! feeds the report and `throughput_proxy`. Per-node latency in a window is
//! derived from the previous window's utilization.

mod bandwidth;
mod report;

pub use bandwidth::{access_latency, steady_state_utilization, UTILIZATION_CAP};
pub use report::{SimReport, WindowStats, WINDOW_CSV_HEADER};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    CounterSet, InvariantViolation, ModelError, NodeId, NodeParams, PageId, PageType,
    TieredMemory, Tier, WatermarkFractions,
};
use crate::policy::{
    allocate, autotiering_period, background_reclaim, direct_reclaim, handle_access, numa_scan,
    reclaim_window, swap_in, PolicyError, PolicyKind, PolicySpec, PolicyState, PromotionOutcome,
};
use crate::trace::{Op, TraceError, TraceEvent};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("out of memory: no room for page {0} and swap is disabled")]
    OutOfMemory(PageId),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("degenerate share: {0}")]
    DegenerateShare(String),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
}

impl From<ModelError> for SimError {
    fn from(e: ModelError) -> Self {
        SimError::InvalidConfig(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub nodes: Vec<NodeParams>,
    pub policy: PolicySpec,
    /// `demotion` is taken from `policy.demote_scale_factor`.
    pub watermarks: WatermarkFractions,
    pub swap_latency_ns: u64,
    pub migration_cost_ns: u64,
    pub report_window_ns: u64,
    pub seed: u64,
    pub unbounded_swap: bool,
}

impl SimConfig {
    pub fn new(nodes: Vec<NodeParams>, policy: PolicySpec) -> Self {
        Self {
            nodes,
            policy,
            watermarks: WatermarkFractions::default(),
            swap_latency_ns: 10_000,
            migration_cost_ns: 1_000,
            report_window_ns: 10_000_000,
            seed: 0,
            unbounded_swap: true,
        }
    }

    /// One local node and, if `cxl > 0`, one CXL node with default timings.
    pub fn two_tier(local: u64, cxl: u64, policy: PolicySpec) -> Self {
        let mut nodes = vec![NodeParams::local(local)];
        if cxl > 0 {
            nodes.push(NodeParams::cxl(cxl));
        }
        Self::new(nodes, policy)
    }

    pub fn fractions(&self) -> WatermarkFractions {
        WatermarkFractions {
            demotion: self.policy.demote_scale_factor,
            ..self.watermarks
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        let locals: Vec<&NodeParams> = self.nodes.iter().filter(|n| n.tier == Tier::Local).collect();
        if locals.len() != 1 {
            return bad(format!("need exactly one local node, got {}", locals.len()));
        }
        let local_latency = locals[0].base_latency_ns;
        for n in &self.nodes {
            if !(n.bandwidth > 0.0) {
                return bad("node bandwidth must be > 0".into());
            }
            if !(n.base_latency_ns > 0.0) || !n.base_latency_ns.is_finite() {
                return bad("node base latency must be positive and finite".into());
            }
            if n.tier == Tier::Cxl && n.base_latency_ns <= local_latency {
                return bad(format!(
                    "CXL latency {} must exceed local latency {local_latency}",
                    n.base_latency_ns
                ));
            }
        }
        if self.report_window_ns == 0 {
            return bad("report_window_ns must be > 0".into());
        }
        self.policy
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// What one event did, for callers that check per-step properties.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    pub node: Option<NodeId>,
    pub latency_ns: Option<f64>,
    pub promotion: Option<PromotionOutcome>,
    pub local_free_at_fault: Option<u64>,
}

#[derive(Debug, Clone, Default)]
struct Daemon {
    active: bool,
    /// The last pass freed nothing.
    stalled: bool,
    busy_until: u64,
}

#[derive(Debug, Clone)]
struct WindowAcc {
    start: u64,
    per_node: Vec<u64>,
    latency_sum: f64,
    base: CounterSet,
}

pub struct Simulator {
    config: SimConfig,
    mem: TieredMemory,
    state: PolicyState,
    live: HashSet<PageId>,
    daemons: Vec<Daemon>,
    latency: Vec<f64>,
    window: WindowAcc,
    windows: Vec<WindowStats>,
    next_scan: u64,
    events: usize,
    last_time: u64,
    total_latency: f64,
    total_eff_us: f64,
    local_swaps_with_cxl_room: u64,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mem = TieredMemory::new(&config.nodes, &config.fractions())?;
        let mut state = PolicyState::new(&config.policy, &mem);
        state.swap_enabled = config.unbounded_swap;
        let n = config.nodes.len();
        let next_scan = if config.policy.kind == PolicyKind::DefaultLinux {
            u64::MAX
        } else {
            config.policy.scan_period_ns
        };
        Ok(Self {
            latency: config.nodes.iter().map(|p| p.base_latency_ns).collect(),
            daemons: vec![Daemon::default(); n],
            window: WindowAcc {
                start: 0,
                per_node: vec![0; n],
                latency_sum: 0.0,
                base: CounterSet::default(),
            },
            windows: Vec::new(),
            live: HashSet::new(),
            next_scan,
            events: 0,
            last_time: 0,
            total_latency: 0.0,
            total_eff_us: 0.0,
            local_swaps_with_cxl_room: 0,
            config,
            mem,
            state,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn memory(&self) -> &TieredMemory {
        &self.mem
    }

    pub fn counters(&self) -> &CounterSet {
        &self.mem.counters
    }

    pub fn live_pages(&self) -> usize {
        self.live.len()
    }

    pub fn step(&mut self, ev: TraceEvent) -> Result<StepInfo, SimError> {
        if ev.time < self.last_time {
            return Err(TraceError::OutOfOrder {
                index: self.events,
                time: ev.time,
                previous: self.last_time,
            }
            .into());
        }
        self.advance(ev.time);
        let page = ev.op.page();
        let index = self.events;
        let bad = |problem| -> Result<StepInfo, SimError> {
            Err(SimError::Trace(TraceError::BadPage {
                index,
                page,
                problem,
            }))
        };
        let mut info = StepInfo::default();
        match ev.op {
            Op::Alloc(_, kind) => {
                if self.live.contains(&page) {
                    return bad("allocated while already live");
                }
                info.node = Some(self.allocate(page, kind, ev.time)?);
                self.live.insert(page);
            }
            Op::Load(_) | Op::Store(_) => {
                if !self.live.contains(&page) {
                    return bad("accessed while not allocated");
                }
                let mut extra = 0.0;
                if self.mem.is_swapped(page) {
                    self.swap_in(page, ev.time)?;
                    extra = self.config.swap_latency_ns as f64;
                }
                let latency = &self.latency;
                let r = handle_access(
                    &self.config.policy,
                    &mut self.state,
                    &mut self.mem,
                    page,
                    ev.time,
                    |n| latency[n.0],
                    self.config.migration_cost_ns as f64,
                )
                .expect("live page is resident after swap-in");
                let charged = r.latency_ns + extra;
                self.window.per_node[r.node.0] += 1;
                self.window.latency_sum += charged;
                self.total_latency += charged;
                info = StepInfo {
                    node: Some(r.node),
                    latency_ns: Some(charged),
                    promotion: r.promotion,
                    local_free_at_fault: r.local_free_at_fault,
                };
            }
            Op::Free(_) => {
                if !self.live.remove(&page) {
                    return bad("freed while not allocated");
                }
                self.mem.free_page(page).expect("live page exists");
            }
        }
        self.wake_daemons(ev.time);
        self.events += 1;
        self.last_time = ev.time;
        Ok(info)
    }

    fn allocate(&mut self, page: PageId, kind: PageType, now: u64) -> Result<NodeId, SimError> {
        loop {
            match allocate(&self.config.policy, &mut self.state, &mut self.mem, page, kind, now) {
                Ok(n) => return Ok(n),
                Err(PolicyError::OutOfMemory(_)) => self.direct_reclaim(page)?,
                Err(e) => unreachable!("allocation of a fresh page failed: {e}"),
            }
        }
    }

    fn swap_in(&mut self, page: PageId, now: u64) -> Result<NodeId, SimError> {
        loop {
            match swap_in(&self.config.policy, &mut self.state, &mut self.mem, page, now) {
                Ok(n) => return Ok(n),
                Err(PolicyError::OutOfMemory(_)) => self.direct_reclaim(page)?,
                Err(e) => unreachable!("swap-in of a swapped page failed: {e}"),
            }
        }
    }

    fn direct_reclaim(&mut self, page: PageId) -> Result<(), SimError> {
        if self.state.swap_enabled && direct_reclaim(&mut self.mem).is_some() {
            Ok(())
        } else {
            Err(SimError::OutOfMemory(page))
        }
    }

    /// Handles window boundaries and scan ticks up to and including `t`.
    fn advance(&mut self, t: u64) {
        loop {
            let window_end = self.window.start + self.config.report_window_ns;
            let next = window_end.min(self.next_scan);
            if next > t {
                break;
            }
            self.wake_daemons(next);
            if window_end <= self.next_scan {
                self.close_window();
            } else {
                self.scan_tick(next);
            }
        }
        self.wake_daemons(t);
    }

    fn scan_tick(&mut self, at: u64) {
        let spec = &self.config.policy;
        if spec.kind == PolicyKind::AutoTieringLike {
            autotiering_period(spec, &mut self.state, &mut self.mem, at, self.config.migration_cost_ns);
        }
        numa_scan(spec, &mut self.mem, &mut self.state.scan);
        self.next_scan += spec.scan_period_ns;
    }

    /// Wakes every daemon whose node is below its trigger and runs passes up
    /// to `now`. Demotions can push a CXL node below its own trigger, so
    /// this repeats until no pass runs. A stalled daemon is retried once.
    fn wake_daemons(&mut self, now: u64) {
        let mut first = true;
        loop {
            for i in 0..self.daemons.len() {
                let node = self.mem.node(NodeId(i));
                let win = reclaim_window(&self.config.policy, node);
                let d = &mut self.daemons[i];
                if !d.active && (first || !d.stalled) && node.free() < win.trigger {
                    d.active = true;
                    d.busy_until = d.busy_until.max(now);
                }
            }
            first = false;
            if !self.run_daemons(now) {
                break;
            }
        }
    }

    /// Runs reclaim passes whose start time is at or before `now`. Each pass
    /// keeps its node's daemon busy for the migration or swap cost of the
    /// pages it handled.
    fn run_daemons(&mut self, now: u64) -> bool {
        let cfg = &self.config;
        let mut ran = false;
        for i in 0..self.daemons.len() {
            let id = NodeId(i);
            let d = &mut self.daemons[i];
            while d.active && d.busy_until <= now {
                let win = reclaim_window(&cfg.policy, self.mem.node(id));
                if self.mem.node(id).free() >= win.target {
                    d.active = false;
                    d.stalled = false;
                    break;
                }
                let at = d.busy_until;
                let out = background_reclaim(
                    &cfg.policy,
                    &mut self.state,
                    &mut self.mem,
                    id,
                    win.target,
                    at,
                    cfg.migration_cost_ns,
                );
                if out.swapped > 0
                    && self.mem.tier_of(id) == Tier::Local
                    && cfg.policy.demotes()
                    && self.mem.cxl_nodes().any(|c| self.mem.node(c).free() > 0)
                {
                    self.local_swaps_with_cxl_room += out.swapped;
                }
                if out.pages() == 0 {
                    d.active = false;
                    d.stalled = true;
                    break;
                }
                d.stalled = false;
                ran = true;
                d.busy_until =
                    at + out.demoted * cfg.migration_cost_ns + out.swapped * cfg.swap_latency_ns;
            }
        }
        ran
    }

    fn close_window(&mut self) {
        let w_ns = self.config.report_window_ns;
        let w_us = w_ns as f64 / 1000.0;
        let bws: Vec<f64> = self.config.nodes.iter().map(|n| n.bandwidth).collect();
        let counts = &self.window.per_node;
        let service: Vec<f64> = counts.iter().zip(&bws).map(|(&c, &b)| c as f64 / b).collect();
        let eff = service.iter().copied().fold(w_us, f64::max);
        for (i, node) in self.config.nodes.iter().enumerate() {
            self.latency[i] = access_latency(node.base_latency_ns, service[i] / eff);
        }
        let accesses: u64 = counts.iter().sum();
        let local_accesses = counts[self.mem.local().0];
        let now = &self.mem.counters;
        let base = &self.window.base;
        let stats = window_stats(
            self.window.start,
            w_ns,
            accesses,
            local_accesses,
            self.window.latency_sum,
            accesses as f64 / (bws.iter().sum::<f64>() * eff),
            [
                now.pgalloc_local - base.pgalloc_local,
                now.pgalloc_cxl - base.pgalloc_cxl,
                now.promotions() - base.promotions(),
                now.demotions() - base.demotions(),
            ],
        );
        self.total_eff_us += eff;
        self.windows.push(stats);
        self.window = WindowAcc {
            start: self.window.start + w_ns,
            per_node: vec![0; counts.len()],
            latency_sum: 0.0,
            base: self.mem.counters.clone(),
        };
    }

    /// Model audit plus the daemon and policy invariants that must hold
    /// between events.
    pub fn audit(&self) -> Result<(), InvariantViolation> {
        self.mem.audit(Some(&self.live))?;
        let fail = |m: String| Err(InvariantViolation(m));
        for (i, d) in self.daemons.iter().enumerate() {
            let node = self.mem.node(NodeId(i));
            let win = reclaim_window(&self.config.policy, node);
            if node.free() < win.trigger && !d.active && !d.stalled {
                return fail(format!(
                    "node {i} has {} free below trigger {} but its daemon is idle",
                    node.free(),
                    win.trigger
                ));
            }
        }
        let c = &self.mem.counters;
        if self.config.policy.kind == PolicyKind::DefaultLinux
            && (c.demotions() > 0 || c.promotions() > 0 || c.numa_hint_faults > 0)
        {
            return fail("default_linux migrated pages".into());
        }
        if self.local_swaps_with_cxl_room > 0 {
            return fail(format!(
                "{} local pages swapped while a CXL node had room",
                self.local_swaps_with_cxl_room
            ));
        }
        Ok(())
    }

    pub fn finish(mut self) -> SimReport {
        if self.events > 0 {
            self.close_window();
        }
        let c = self.mem.counters.clone();
        let accesses = c.accesses();
        let duration = self.windows.len() as u64 * self.config.report_window_ns;
        let total_bw: f64 = self.config.nodes.iter().map(|n| n.bandwidth).sum();
        let utilization = if self.total_eff_us > 0.0 {
            accesses as f64 / (total_bw * self.total_eff_us)
        } else {
            0.0
        };
        let totals = window_stats(
            0,
            duration,
            accesses,
            c.pgaccess_local,
            self.total_latency,
            utilization,
            [c.pgalloc_local, c.pgalloc_cxl, c.promotions(), c.demotions()],
        );
        let throughput_proxy = if self.total_latency > 0.0 {
            accesses as f64 / (self.total_latency * 1e-9)
        } else {
            0.0
        };
        let policy = &self.config.policy;
        SimReport {
            policy: policy.kind.name().to_string(),
            note: policy.is_approximation().then(|| {
                "autotiering_like approximates the reserved promotion buffer; see README".to_string()
            }),
            counters: c,
            windows: self.windows,
            totals,
            throughput_proxy,
        }
    }
}

/// `moves` = [alloc local, alloc cxl, promotions, demotions] in pages.
fn window_stats(
    start_ns: u64,
    duration_ns: u64,
    accesses: u64,
    local_accesses: u64,
    latency_sum: f64,
    bandwidth_utilization: f64,
    moves: [u64; 4],
) -> WindowStats {
    let secs = duration_ns as f64 * 1e-9;
    let rate = |n: u64| if secs > 0.0 { n as f64 / secs } else { 0.0 };
    let (local_f, cxl_f, mean) = if accesses > 0 {
        let l = local_accesses as f64 / accesses as f64;
        (l, 1.0 - l, latency_sum / accesses as f64)
    } else {
        (0.0, 0.0, 0.0)
    };
    WindowStats {
        start_ns,
        duration_ns,
        accesses,
        local_accesses,
        cxl_accesses: accesses - local_accesses,
        local_traffic_fraction: local_f,
        cxl_traffic_fraction: cxl_f,
        mean_access_latency: mean,
        bandwidth_utilization: bandwidth_utilization.clamp(0.0, 1.0),
        allocation_rate_local: rate(moves[0]),
        allocation_rate_cxl: rate(moves[1]),
        promotion_rate: rate(moves[2]),
        demotion_rate: rate(moves[3]),
    }
}

/// Feeds a trace through a fresh simulator.
pub fn run(
    trace: impl IntoIterator<Item = TraceEvent>,
    config: SimConfig,
) -> Result<SimReport, SimError> {
    run_results(trace.into_iter().map(Ok), config)
}

/// Like [`run`] for fallible sources such as a trace file reader.
pub fn run_results(
    trace: impl IntoIterator<Item = Result<TraceEvent, TraceError>>,
    config: SimConfig,
) -> Result<SimReport, SimError> {
    let mut sim = Simulator::new(config)?;
    for ev in trace {
        sim.step(ev?)?;
    }
    Ok(sim.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Interleave;

    fn ev(time: u64, op: Op) -> TraceEvent {
        TraceEvent::new(time, op)
    }

    #[test]
    fn empty_trace_gives_empty_report() {
        let r = run(Vec::new(), SimConfig::two_tier(100, 100, PolicySpec::new(PolicyKind::Tpp))).unwrap();
        assert_eq!(r.counters, CounterSet::default());
        assert!(r.windows.is_empty());
        assert_eq!(r.throughput_proxy, 0.0);
    }

    #[test]
    fn all_local_trace_has_local_fraction_one() {
        let mut t = Vec::new();
        for i in 0..10 {
            t.push(ev(i, Op::Alloc(PageId(i), PageType::Anon)));
        }
        for i in 0..10 {
            t.push(ev(10 + i, Op::Load(PageId(i))));
        }
        let r = run(t, SimConfig::two_tier(1000, 100, PolicySpec::new(PolicyKind::Tpp))).unwrap();
        assert_eq!(r.totals.local_traffic_fraction, 1.0);
        assert_eq!(r.windows.len(), 1);
        assert_eq!(r.totals.mean_access_latency, 100.0);
        assert!((r.throughput_proxy - 1e7).abs() < 1e-3);
    }

    #[test]
    fn trace_errors_are_reported() {
        let cfg = || SimConfig::two_tier(100, 100, PolicySpec::new(PolicyKind::Tpp));
        let err = run(vec![ev(0, Op::Load(PageId(1)))], cfg()).unwrap_err();
        assert!(matches!(err, SimError::Trace(TraceError::BadPage { index: 0, .. })));
        let t = vec![
            ev(5, Op::Alloc(PageId(1), PageType::Anon)),
            ev(4, Op::Load(PageId(1))),
        ];
        assert!(matches!(run(t, cfg()).unwrap_err(), SimError::Trace(TraceError::OutOfOrder { .. })));
        let t = vec![
            ev(0, Op::Alloc(PageId(1), PageType::Anon)),
            ev(1, Op::Alloc(PageId(1), PageType::Anon)),
        ];
        assert!(run(t, cfg()).is_err());
    }

    #[test]
    fn overflow_without_swap_is_out_of_memory() {
        let mut cfg = SimConfig::two_tier(10, 10, PolicySpec::new(PolicyKind::Tpp));
        cfg.unbounded_swap = false;
        let t: Vec<_> = (0..21).map(|i| ev(i, Op::Alloc(PageId(i), PageType::Anon))).collect();
        assert!(matches!(run(t, cfg).unwrap_err(), SimError::OutOfMemory(_)));
    }

    #[test]
    fn overflow_with_swap_succeeds() {
        let cfg = SimConfig::two_tier(10, 10, PolicySpec::new(PolicyKind::DefaultLinux));
        let mut t: Vec<_> = (0..40).map(|i| ev(i, Op::Alloc(PageId(i), PageType::Anon))).collect();
        t.extend((0..40).map(|i| ev(100 + i, Op::Load(PageId(i)))));
        let r = run(t, cfg).unwrap();
        assert!(r.counters.pgswapout >= 20);
        assert!(r.counters.pgswapin > 0);
        assert_eq!(r.counters.accesses(), 40);
    }

    #[test]
    fn windows_cover_the_trace_and_conserve_accesses() {
        let mut cfg = SimConfig::two_tier(1000, 1000, PolicySpec::new(PolicyKind::Tpp));
        cfg.report_window_ns = 100;
        let mut t: Vec<_> = (0..50).map(|i| ev(i, Op::Alloc(PageId(i), PageType::Anon))).collect();
        t.extend((0..500).map(|i| ev(50 + i, Op::Load(PageId(i % 50)))));
        let r = run(t, cfg).unwrap();
        assert_eq!(r.windows.len(), 6);
        let sum: u64 = r.windows.iter().map(|w| w.accesses).sum();
        assert_eq!(sum, r.counters.pgaccess_local + r.counters.pgaccess_cxl);
    }

    #[test]
    fn interleave_places_exact_counts() {
        let mut spec = PolicySpec::new(PolicyKind::Tpp);
        spec.interleave = Some(Interleave::new(2, 1).unwrap());
        let cfg = SimConfig::two_tier(10_000, 10_000, spec);
        let t: Vec<_> = (0..3000).map(|i| ev(i, Op::Alloc(PageId(i), PageType::Anon))).collect();
        let r = run(t, cfg).unwrap();
        assert_eq!((r.counters.pgalloc_local, r.counters.pgalloc_cxl), (2000, 1000));
    }

    #[test]
    fn saturated_window_inflates_next_window_latency() {
        let mut nodes = vec![NodeParams::local(1000)];
        nodes[0].bandwidth = 0.001; // one access per ms
        let mut cfg = SimConfig::new(nodes, PolicySpec::new(PolicyKind::DefaultLinux));
        cfg.report_window_ns = 1_000_000;
        let mut t = vec![ev(0, Op::Alloc(PageId(0), PageType::Anon))];
        t.extend((0..10).map(|i| ev(i, Op::Load(PageId(0)))));
        t.push(ev(1_000_000, Op::Load(PageId(0))));
        let r = run(t, cfg).unwrap();
        assert_eq!(r.windows[0].mean_access_latency, 100.0);
        assert!((r.windows[0].bandwidth_utilization - 1.0).abs() < 1e-12);
        assert!((r.windows[1].mean_access_latency - 2000.0).abs() < 1e-6);
    }

    #[test]
    fn autotiering_report_is_flagged() {
        let r = run(
            vec![ev(0, Op::Alloc(PageId(0), PageType::Anon))],
            SimConfig::two_tier(100, 100, PolicySpec::new(PolicyKind::AutoTieringLike)),
        )
        .unwrap();
        assert!(r.note.is_some());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::two_tier(100, 100, PolicySpec::new(PolicyKind::Tpp));
        cfg.nodes[1].base_latency_ns = 90.0;
        assert!(Simulator::new(cfg).is_err());
        let cfg = SimConfig::new(vec![NodeParams::cxl(10)], PolicySpec::new(PolicyKind::Tpp));
        assert!(Simulator::new(cfg).is_err());
    }
}
