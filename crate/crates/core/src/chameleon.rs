//! Sampling characterizer for page temperature.
//!
//! Access events are decimated 1-in-R inside a duty window at the start of
//! every mini-interval. Each sampled page owns a 64-bit activeness bitmap
//! (bit 0 is the current interval). At every interval boundary the current
//! table is handed over for processing, its bitmaps are shifted left into
//! the other table, and pages whose history has become all zeros are
//! dropped.

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PageId, PageType};
use crate::trace::{Op, TraceEvent};

pub const SECOND_NS: u64 = 1_000_000_000;
pub const HISTORY_BITS: u32 = 64;

pub const STATS_CSV_HEADER: &str =
    "interval_index,total_pages,hot_total,hot_anon,hot_file,alloc_anon,alloc_file";

#[derive(Debug, Error, PartialEq)]
#[error("invalid characterizer config: {0}")]
pub struct CharacterizerError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizerConfig {
    /// Keep one of every `sample_ratio` eligible accesses.
    pub sample_ratio: u64,
    pub mini_interval_ns: u64,
    pub interval_ns: u64,
    /// Leading share of each mini-interval during which sampling is on.
    pub duty_fraction: f64,
}

impl Default for CharacterizerConfig {
    fn default() -> Self {
        Self {
            sample_ratio: 200,
            mini_interval_ns: 5 * SECOND_NS,
            interval_ns: 60 * SECOND_NS,
            duty_fraction: 1.0,
        }
    }
}

impl CharacterizerConfig {
    pub fn validate(&self) -> Result<(), CharacterizerError> {
        let bad = |m: &str| Err(CharacterizerError(m.into()));
        if self.sample_ratio == 0 {
            return bad("sample_ratio must be >= 1");
        }
        if self.mini_interval_ns == 0 {
            return bad("mini_interval must be > 0");
        }
        if self.interval_ns == 0 || self.interval_ns % self.mini_interval_ns != 0 {
            return bad("interval must be a positive multiple of mini_interval");
        }
        if !(self.duty_fraction > 0.0 && self.duty_fraction <= 1.0) {
            return bad("duty_fraction must be in (0, 1]");
        }
        Ok(())
    }

    fn in_duty(&self, time: u64) -> bool {
        let offset = time % self.mini_interval_ns;
        (offset as f64) < self.duty_fraction * self.mini_interval_ns as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivenessRecord {
    pub page: PageId,
    pub kind: PageType,
    pub bitmap: u64,
}

/// One row of the per-interval export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IntervalStats {
    pub interval_index: u64,
    /// Live pages at the end of the interval.
    pub total_pages: u64,
    pub hot_total: u64,
    pub hot_anon: u64,
    pub hot_file: u64,
    /// Pages allocated during the interval.
    pub alloc_anon: u64,
    pub alloc_file: u64,
    /// Samples recorded during the interval (not exported).
    #[serde(skip)]
    pub samples: u64,
}

impl IntervalStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.interval_index,
            self.total_pages,
            self.hot_total,
            self.hot_anon,
            self.hot_file,
            self.alloc_anon,
            self.alloc_file
        )
    }
}

pub fn write_stats_csv<W: Write>(mut out: W, rows: &[IntervalStats]) -> io::Result<()> {
    writeln!(out, "{STATS_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HotFraction {
    pub total: f64,
    pub anon: f64,
    pub file: f64,
}

/// Re-access gaps of the pages active in the current interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReaccessHistogram {
    /// `counts[g]` pages whose previous activity was `g` intervals ago;
    /// index 0 is unused.
    pub counts: Vec<u64>,
    pub active_pages: u64,
}

impl ReaccessHistogram {
    pub fn fraction(&self, gap: usize) -> f64 {
        if self.active_pages == 0 {
            0.0
        } else {
            self.counts[gap] as f64 / self.active_pages as f64
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

/// Gap between the current activity (bit 0) and the one before it.
pub fn reaccess_gap(bitmap: u64) -> Option<u32> {
    let older = bitmap >> 1;
    if bitmap & 1 == 0 || older == 0 {
        None
    } else {
        Some(older.trailing_zeros() + 1)
    }
}

fn low_bits(k: u32) -> u64 {
    if k >= 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

#[derive(Debug, Clone)]
pub struct Characterizer {
    config: CharacterizerConfig,
    /// Collector writes into `tables[current]`; the other table is the one
    /// the worker processes at a rotation.
    tables: [HashMap<PageId, ActivenessRecord>; 2],
    current: usize,
    live: HashMap<PageId, PageType>,
    interval_index: u64,
    eligible: u64,
    pending: IntervalStats,
    history: Vec<IntervalStats>,
    seen_event: bool,
}

impl Characterizer {
    pub fn new(config: CharacterizerConfig) -> Result<Self, CharacterizerError> {
        config.validate()?;
        Ok(Self {
            config,
            tables: [HashMap::new(), HashMap::new()],
            current: 0,
            live: HashMap::new(),
            interval_index: 0,
            eligible: 0,
            pending: IntervalStats::default(),
            history: Vec::new(),
            seen_event: false,
        })
    }

    pub fn config(&self) -> &CharacterizerConfig {
        &self.config
    }

    pub fn interval_index(&self) -> u64 {
        self.interval_index
    }

    pub fn history(&self) -> &[IntervalStats] {
        &self.history
    }

    pub fn live_pages(&self) -> usize {
        self.live.len()
    }

    pub fn tracked_pages(&self) -> usize {
        self.tables[self.current].len()
    }

    pub fn record(&self, page: PageId) -> Option<&ActivenessRecord> {
        self.tables[self.current].get(&page)
    }

    pub fn bitmap(&self, page: PageId) -> u64 {
        self.record(page).map_or(0, |r| r.bitmap)
    }

    /// Feeds one event, first rotating through any interval boundaries
    /// that precede it.
    pub fn ingest(&mut self, ev: &TraceEvent) {
        let target = ev.time / self.config.interval_ns;
        while self.interval_index < target {
            self.rotate_interval();
        }
        self.seen_event = true;
        match ev.op {
            Op::Alloc(page, kind) => {
                self.live.insert(page, kind);
                match kind {
                    PageType::Anon => self.pending.alloc_anon += 1,
                    PageType::File => self.pending.alloc_file += 1,
                }
            }
            Op::Free(page) => {
                self.live.remove(&page);
                self.tables[self.current].remove(&page);
            }
            Op::Load(page) | Op::Store(page) => {
                if !self.config.in_duty(ev.time) {
                    return;
                }
                self.eligible += 1;
                if self.eligible < self.config.sample_ratio {
                    return;
                }
                self.eligible = 0;
                self.pending.samples += 1;
                let kind = self.live.get(&page).copied().unwrap_or(PageType::Anon);
                self.tables[self.current]
                    .entry(page)
                    .or_insert(ActivenessRecord { page, kind, bitmap: 0 })
                    .bitmap |= 1;
            }
        }
    }

    /// Closes the current interval: returns its statistics, shifts every
    /// bitmap into the other table and evicts the ones that reached zero.
    pub fn rotate_interval(&mut self) -> IntervalStats {
        let mut stats = std::mem::take(&mut self.pending);
        stats.interval_index = self.interval_index;
        stats.total_pages = self.live.len() as u64;

        let processing = self.current;
        self.current ^= 1;
        let (a, b) = self.tables.split_at_mut(1);
        let (from, into) = if processing == 0 {
            (&mut a[0], &mut b[0])
        } else {
            (&mut b[0], &mut a[0])
        };
        into.clear();
        for (page, mut rec) in from.drain() {
            if rec.bitmap & 1 == 1 && self.live.contains_key(&page) {
                stats.hot_total += 1;
                match rec.kind {
                    PageType::Anon => stats.hot_anon += 1,
                    PageType::File => stats.hot_file += 1,
                }
            }
            rec.bitmap <<= 1;
            if rec.bitmap != 0 {
                into.insert(page, rec);
            }
        }

        self.interval_index += 1;
        self.seen_event = false;
        self.history.push(stats);
        stats
    }

    /// Closes a trailing partial interval that saw events and returns the
    /// full per-interval history.
    pub fn finish(mut self) -> Vec<IntervalStats> {
        if self.seen_event {
            self.rotate_interval();
        }
        self.history
    }

    /// Share of live pages with activity in any of the last `k` intervals
    /// (the current one included), overall and per type.
    pub fn hot_fraction(&self, k: u32) -> HotFraction {
        let k = k.clamp(1, HISTORY_BITS);
        let mask = low_bits(k);
        let table = &self.tables[self.current];
        let mut live = [0u64; 2];
        let mut hot = [0u64; 2];
        for (page, &kind) in &self.live {
            let i = kind as usize;
            live[i] += 1;
            if table.get(page).is_some_and(|r| r.bitmap & mask != 0) {
                hot[i] += 1;
            }
        }
        let ratio = |h: u64, n: u64| if n == 0 { 0.0 } else { h as f64 / n as f64 };
        HotFraction {
            total: ratio(hot[0] + hot[1], live[0] + live[1]),
            anon: ratio(hot[0], live[0]),
            file: ratio(hot[1], live[1]),
        }
    }

    pub fn reaccess_distribution(&self) -> ReaccessHistogram {
        let mut counts = vec![0u64; HISTORY_BITS as usize];
        let mut active = 0;
        for rec in self.tables[self.current].values() {
            if rec.bitmap & 1 == 0 {
                continue;
            }
            active += 1;
            if let Some(g) = reaccess_gap(rec.bitmap) {
                counts[g as usize] += 1;
            }
        }
        ReaccessHistogram {
            counts,
            active_pages: active,
        }
    }
}
