use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sampler::WeightedSampler;
use super::{WorkloadKind, WorkloadSpec};
use crate::model::{PageId, PageType};
use crate::trace::{Op, TraceEvent};

/// Popularity weight of each rank.
fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|r| ((r + 1) as f64).powf(-s)).collect()
}

/// Zipf over the first `hot` ranks carrying `1 - cold_share` of the mass,
/// the rest spread evenly.
fn two_level_weights(n: usize, hot: usize, s: f64, cold_share: f64) -> Vec<f64> {
    let hot = hot.min(n);
    if hot == n {
        return zipf_weights(n, s);
    }
    let mut w = zipf_weights(hot, s);
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x *= (1.0 - cold_share) / sum;
    }
    w.resize(n, cold_share / (n - hot) as f64);
    w
}

fn mixed_kinds(n: usize, anon_fraction: f64, rng: &mut ChaCha8Rng) -> Vec<PageType> {
    let anon = (anon_fraction * n as f64).round() as usize;
    let mut kinds: Vec<PageType> = (0..n)
        .map(|i| if i < anon { PageType::Anon } else { PageType::File })
        .collect();
    kinds.shuffle(rng);
    kinds
}

fn hot_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize).clamp(usize::from(n > 0), n)
}

/// A set of page slots sharing one popularity distribution. Slot `i` is
/// the `i`-th page allocated into the group; its rank is random.
struct Group {
    kinds: Vec<PageType>,
    pages: Vec<Option<PageId>>,
    base: Vec<f64>,
    sampler: WeightedSampler,
    /// rank -> slot
    order: Vec<usize>,
    hot: usize,
    share: f64,
    store_fraction: f64,
    next_alloc: usize,
    live: usize,
    churn: bool,
}

impl Group {
    fn new(kinds: Vec<PageType>, by_rank: Vec<f64>, hot: usize, rng: &mut ChaCha8Rng) -> Self {
        let n = kinds.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut base = vec![0.0; n];
        for (r, &slot) in order.iter().enumerate() {
            base[slot] = by_rank[r];
        }
        Self {
            kinds,
            pages: vec![None; n],
            base,
            sampler: WeightedSampler::new(n),
            order,
            hot,
            share: 0.0,
            store_fraction: 0.0,
            next_alloc: 0,
            live: 0,
            churn: false,
        }
    }

    fn with_share(mut self, share: f64, store_fraction: f64) -> Self {
        self.share = share;
        self.store_fraction = store_fraction;
        self
    }

    fn len(&self) -> usize {
        self.kinds.len()
    }

    fn fill_slot(&mut self, slot: usize, id: PageId) -> Op {
        self.pages[slot] = Some(id);
        self.sampler.set(slot, self.base[slot]);
        self.live += 1;
        Op::Alloc(id, self.kinds[slot])
    }

    fn empty_slot(&mut self, slot: usize) -> Op {
        let id = self.pages[slot].take().expect("slot is live");
        self.sampler.set(slot, 0.0);
        self.live -= 1;
        Op::Free(id)
    }

    fn random_live_slot(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        if self.live == 0 {
            return None;
        }
        loop {
            let slot = rng.gen_range(0..self.next_alloc);
            if self.pages[slot].is_some() {
                return Some(slot);
            }
        }
    }

    /// Re-draws `fraction` of the hot ranks from the cold ones.
    fn rotate(&mut self, fraction: f64, rng: &mut ChaCha8Rng) {
        let n = self.len();
        if self.hot == 0 || self.hot >= n {
            return;
        }
        let swaps = (fraction * self.hot as f64).round() as usize;
        for _ in 0..swaps {
            let i = rng.gen_range(0..self.hot);
            let j = rng.gen_range(self.hot..n);
            let (a, b) = (self.order[i], self.order[j]);
            self.order.swap(i, j);
            self.base.swap(a, b);
            for s in [a, b] {
                if self.pages[s].is_some() {
                    self.sampler.set(s, self.base[s]);
                }
            }
        }
    }
}

enum Phase {
    /// Allocates one page per plan entry (the entry names the group),
    /// followed on average by `per_alloc` accesses.
    Alloc {
        plan: Vec<usize>,
        pos: usize,
        per_alloc: f64,
    },
    /// Accesses, churn and one-touch loads until `until` ns.
    Steady { until: f64 },
    /// Frees every live page of a group, with `per_free` accesses after each.
    FreeAll { group: usize, per_free: f64 },
}

/// Streaming generator behind [`super::generate`].
pub struct TraceGen {
    rng: ChaCha8Rng,
    gap: f64,
    slot: u64,
    pending: VecDeque<Op>,
    groups: Vec<Group>,
    phases: VecDeque<Phase>,
    next_id: u64,
    /// Group whose pages each get exactly one load during steady phases.
    one_touch_group: Option<usize>,
    one_touch_pending: Vec<PageId>,
    churn_per_slot: f64,
    rotation_fraction: f64,
    rotation_period: f64,
    next_rotation: f64,
}

impl TraceGen {
    pub(super) fn new(spec: &WorkloadSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = spec.total_pages as usize;
        let slots_per_sec = spec.ops_rate * 1e6;
        let per_alloc = if spec.growth_rate > 0.0 {
            (slots_per_sec / spec.growth_rate - 1.0).max(0.0)
        } else {
            0.0
        };
        let anon = (spec.anon_fraction * n as f64).round() as usize;
        let duration = spec.duration_ns as f64;
        let mut groups = Vec::new();
        let mut phases = VecDeque::new();
        let mut one_touch_group = None;
        let sequential = |g: usize, n: usize| -> Vec<usize> { vec![g; n] };

        match spec.kind {
            WorkloadKind::ZipfSteady | WorkloadKind::UniformBandwidth => {
                let s = if spec.kind == WorkloadKind::UniformBandwidth { 0.0 } else { spec.zipf_s };
                let kinds = mixed_kinds(n, spec.anon_fraction, &mut rng);
                let hot = hot_count(n, spec.hot_fraction);
                groups.push(Group::new(kinds, zipf_weights(n, s), hot, &mut rng).with_share(1.0, spec.store_fraction));
                phases.push_back(Phase::Alloc { plan: sequential(0, n), pos: 0, per_alloc });
            }
            WorkloadKind::WebLike => {
                let file = n - anon;
                let fhot = hot_count(file, spec.file_hot_fraction);
                let ahot = hot_count(anon, spec.hot_fraction);
                groups.push(
                    Group::new(vec![PageType::File; file], zipf_weights(file, spec.zipf_s), fhot, &mut rng)
                        .with_share(spec.file_access_share, spec.store_fraction),
                );
                groups.push(
                    Group::new(vec![PageType::Anon; anon], zipf_weights(anon, spec.zipf_s), ahot, &mut rng)
                        .with_share(1.0 - spec.file_access_share, spec.store_fraction),
                );
                phases.push_back(Phase::Alloc { plan: sequential(0, file), pos: 0, per_alloc });
                phases.push_back(Phase::Alloc { plan: sequential(1, anon), pos: 0, per_alloc });
            }
            WorkloadKind::CacheLike | WorkloadKind::WarehouseLike => {
                let file = n - anon;
                let cache = spec.kind == WorkloadKind::CacheLike;
                let (ahot, fhot) = (hot_count(anon, spec.hot_fraction), hot_count(file, spec.file_hot_fraction));
                let (aw, fw) = if cache {
                    (
                        two_level_weights(anon, ahot, spec.zipf_s, spec.cold_access_share),
                        two_level_weights(file, fhot, spec.zipf_s, spec.cold_access_share),
                    )
                } else {
                    (zipf_weights(anon, spec.zipf_s), zipf_weights(file, spec.zipf_s))
                };
                // Warehouse file pages are written, not read.
                let file_stores = if cache { spec.store_fraction } else { 1.0 };
                let mut a = Group::new(vec![PageType::Anon; anon], aw, ahot, &mut rng)
                    .with_share(1.0 - spec.file_access_share, spec.store_fraction);
                let mut f = Group::new(vec![PageType::File; file], fw, fhot, &mut rng)
                    .with_share(spec.file_access_share, file_stores);
                a.churn = true;
                f.churn = true;
                groups.push(a);
                groups.push(f);
                let mut plan = sequential(0, anon);
                plan.extend(sequential(1, file));
                plan.shuffle(&mut rng);
                phases.push_back(Phase::Alloc { plan, pos: 0, per_alloc });
            }
            WorkloadKind::PingPong => {
                let once = (spec.one_touch_fraction * n as f64).round() as usize;
                let warm = n - once;
                let kinds = mixed_kinds(n, spec.anon_fraction, &mut rng);
                let hot = hot_count(warm, spec.hot_fraction);
                groups.push(
                    Group::new(kinds[..warm].to_vec(), zipf_weights(warm, spec.zipf_s), hot, &mut rng)
                        .with_share(1.0, spec.store_fraction),
                );
                groups.push(Group::new(kinds[warm..].to_vec(), vec![0.0; once], 0, &mut rng));
                one_touch_group = Some(1);
                let mut plan = sequential(0, warm);
                plan.extend(sequential(1, once));
                plan.shuffle(&mut rng);
                phases.push_back(Phase::Alloc { plan, pos: 0, per_alloc });
            }
            WorkloadKind::BurstyAlloc => {
                let kinds = mixed_kinds(n, spec.anon_fraction, &mut rng);
                let hot = hot_count(n, spec.hot_fraction);
                groups.push(Group::new(kinds, zipf_weights(n, spec.zipf_s), hot, &mut rng).with_share(1.0, spec.store_fraction));
                // Bursts alternate between two groups; each one frees the
                // pages of the burst before it once the allocation is over.
                let burst = spec.burst_pages as usize;
                for _ in 0..2 {
                    groups.push(Group::new(vec![PageType::Anon; burst], vec![0.0; burst], 0, &mut rng));
                }
                phases.push_back(Phase::Alloc { plan: sequential(0, n), pos: 0, per_alloc: 0.0 });
                let gap = 1000.0 / spec.ops_rate;
                let period = spec.burst_period_ns as f64;
                let mut start = n as f64 * gap;
                let mut cycle = 0;
                while start < duration {
                    phases.push_back(Phase::Alloc { plan: sequential(1 + cycle % 2, burst), pos: 0, per_alloc });
                    phases.push_back(Phase::Steady { until: (start + period / 2.0).min(duration) });
                    phases.push_back(Phase::FreeAll { group: 1 + (cycle + 1) % 2, per_free: per_alloc });
                    phases.push_back(Phase::Steady { until: (start + period).min(duration) });
                    start += period;
                    cycle += 1;
                }
            }
        }
        if spec.kind != WorkloadKind::BurstyAlloc {
            phases.push_back(Phase::Steady { until: duration });
        }

        Self {
            gap: 1000.0 / spec.ops_rate,
            slot: 0,
            pending: VecDeque::new(),
            groups,
            phases,
            next_id: 0,
            one_touch_group,
            one_touch_pending: Vec::new(),
            churn_per_slot: spec.churn_rate / 2.0 / slots_per_sec,
            rotation_fraction: spec.rotation_fraction,
            rotation_period: spec.rotation_period_ns as f64,
            next_rotation: spec.rotation_period_ns as f64,
            rng,
        }
    }

    fn alloc_into(&mut self, g: usize) {
        let id = PageId(self.next_id);
        self.next_id += 1;
        let group = &mut self.groups[g];
        let slot = group.next_alloc;
        group.next_alloc += 1;
        let op = group.fill_slot(slot, id);
        self.pending.push_back(op);
        if self.one_touch_group == Some(g) {
            self.one_touch_pending.push(id);
        }
    }

    /// One sampled access, if any group has live pages to draw from.
    fn access(&mut self) -> bool {
        let total: f64 = self
            .groups
            .iter()
            .filter(|g| g.live > 0)
            .map(|g| g.share)
            .sum();
        if !(total > 0.0) {
            return false;
        }
        let mut u = self.rng.gen::<f64>() * total;
        let mut pick = None;
        for (i, g) in self.groups.iter().enumerate() {
            if g.live == 0 || g.share <= 0.0 {
                continue;
            }
            pick = Some(i);
            if u < g.share {
                break;
            }
            u -= g.share;
        }
        let g = &self.groups[pick.expect("some group has share")];
        let Some(slot) = g.sampler.sample(&mut self.rng) else {
            return false;
        };
        let page = g.pages[slot].expect("sampled slot is live");
        let store = self.rng.gen::<f64>() < g.store_fraction;
        self.pending
            .push_back(if store { Op::Store(page) } else { Op::Load(page) });
        true
    }

    fn accesses(&mut self, mean: f64) {
        let mut n = mean.floor() as u64;
        if self.rng.gen::<f64>() < mean - mean.floor() {
            n += 1;
        }
        for _ in 0..n {
            if !self.access() {
                break;
            }
        }
    }

    fn churn(&mut self) -> bool {
        let live: usize = self.groups.iter().filter(|g| g.churn).map(|g| g.live).sum();
        if live == 0 {
            return false;
        }
        let mut k = self.rng.gen_range(0..live);
        let g = self
            .groups
            .iter()
            .position(|g| {
                if !g.churn {
                    return false;
                }
                if k < g.live {
                    return true;
                }
                k -= g.live;
                false
            })
            .expect("live churn page");
        let slot = self.groups[g].random_live_slot(&mut self.rng).expect("group is live");
        let free = self.groups[g].empty_slot(slot);
        let id = PageId(self.next_id);
        self.next_id += 1;
        let alloc = self.groups[g].fill_slot(slot, id);
        self.pending.push_back(free);
        self.pending.push_back(alloc);
        true
    }

    fn one_touch(&mut self) {
        let i = self.rng.gen_range(0..self.one_touch_pending.len());
        let page = self.one_touch_pending.swap_remove(i);
        self.pending.push_back(Op::Load(page));
    }

    /// Queues the ops of the next slot(s). False once the trace is over.
    fn fill(&mut self) -> bool {
        let now = self.slot as f64 * self.gap;
        if self.rotation_fraction > 0.0 && self.rotation_period > 0.0 {
            while now >= self.next_rotation {
                for g in &mut self.groups {
                    g.rotate(self.rotation_fraction, &mut self.rng);
                }
                self.next_rotation += self.rotation_period;
            }
        }
        let Some(phase) = self.phases.front_mut() else {
            return false;
        };
        match phase {
            Phase::Alloc { plan, pos, per_alloc } => {
                if *pos >= plan.len() {
                    self.phases.pop_front();
                    return true;
                }
                let (g, mean) = (plan[*pos], *per_alloc);
                *pos += 1;
                self.alloc_into(g);
                self.accesses(mean);
            }
            Phase::FreeAll { group, per_free } => {
                let (g, mean) = (*group, *per_free);
                let group = &mut self.groups[g];
                if group.next_alloc == 0 {
                    self.phases.pop_front();
                    return true;
                }
                group.next_alloc -= 1;
                let slot = group.next_alloc;
                if group.pages[slot].is_some() {
                    let op = group.empty_slot(slot);
                    self.pending.push_back(op);
                    self.accesses(mean);
                }
            }
            Phase::Steady { until } => {
                let until = *until;
                let waiting = self.one_touch_pending.len();
                if now >= until {
                    if waiting > 0 {
                        self.one_touch();
                    } else {
                        self.phases.pop_front();
                    }
                    return true;
                }
                let left = ((until - now) / self.gap).max(1.0);
                if waiting > 0 && self.rng.gen::<f64>() < waiting as f64 / left {
                    self.one_touch();
                    return true;
                }
                let churned = self.churn_per_slot > 0.0
                    && self.rng.gen::<f64>() < self.churn_per_slot
                    && self.churn();
                if !churned && !self.access() {
                    // Nothing to access: flush one-touch loads or end early.
                    if waiting > 0 {
                        self.one_touch();
                    } else {
                        self.phases.pop_front();
                    }
                }
            }
        }
        true
    }
}

impl Iterator for TraceGen {
    type Item = TraceEvent;

    fn next(&mut self) -> Option<TraceEvent> {
        while self.pending.is_empty() {
            if !self.fill() {
                return None;
            }
        }
        let op = self.pending.pop_front()?;
        let jitter = self.rng.gen::<f64>() * self.gap * 0.5;
        let time = (self.slot as f64 * self.gap + jitter) as u64;
        self.slot += 1;
        Some(TraceEvent { time, op })
    }
}
