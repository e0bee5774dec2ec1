//! Synthetic trace generators and trace file I/O.
//!
//! Each generator allocates its pages, then issues accesses at `ops_rate`
//! events per microsecond until `duration_ns`. Page popularity is Zipf over
//! a random permutation of pages, so hot pages are scattered across the
//! allocation order.

mod gen;
mod sampler;

pub use gen::TraceGen;
pub use sampler::WeightedSampler;

pub use crate::trace::{read_trace, write_trace, TraceError, TraceEvent};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    /// One Zipf-popular page set.
    ZipfSteady,
    /// File cache warmup, then anon growth with Zipf-hot anon accesses.
    WebLike,
    /// Large file set plus anon; per-type hot sets, a small cold share.
    CacheLike,
    /// Anon-dominant with cold file writes and page churn.
    WarehouseLike,
    /// Some pages receive exactly one load after allocation.
    PingPong,
    /// Periodic bursts of short-lived allocations.
    BurstyAlloc,
    /// Uniform accesses over all pages.
    UniformBandwidth,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 7] = [
        WorkloadKind::ZipfSteady,
        WorkloadKind::WebLike,
        WorkloadKind::CacheLike,
        WorkloadKind::WarehouseLike,
        WorkloadKind::PingPong,
        WorkloadKind::BurstyAlloc,
        WorkloadKind::UniformBandwidth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::ZipfSteady => "zipf",
            WorkloadKind::WebLike => "web",
            WorkloadKind::CacheLike => "cache",
            WorkloadKind::WarehouseLike => "warehouse",
            WorkloadKind::PingPong => "pingpong",
            WorkloadKind::BurstyAlloc => "bursty",
            WorkloadKind::UniformBandwidth => "uniform",
        }
    }
}

impl std::str::FromStr for WorkloadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', '_'], "");
        let kind = match norm.as_str() {
            "zipf" | "zipfsteady" => WorkloadKind::ZipfSteady,
            "web" | "weblike" => WorkloadKind::WebLike,
            "cache" | "cachelike" => WorkloadKind::CacheLike,
            "warehouse" | "warehouselike" => WorkloadKind::WarehouseLike,
            "pingpong" => WorkloadKind::PingPong,
            "bursty" | "burstyalloc" => WorkloadKind::BurstyAlloc,
            "uniform" | "uniformbandwidth" => WorkloadKind::UniformBandwidth,
            _ => return Err(format!("unknown workload kind '{s}'")),
        };
        Ok(kind)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid workload: {0}")]
pub struct SpecError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub total_pages: u64,
    pub anon_fraction: f64,
    /// Hot share of anon pages (of all pages for single-set kinds).
    pub hot_fraction: f64,
    /// Hot share of file pages.
    pub file_hot_fraction: f64,
    pub zipf_s: f64,
    pub duration_ns: u64,
    /// Trace events per microsecond.
    pub ops_rate: f64,
    /// Frees plus allocations per second during steady phases.
    pub churn_rate: f64,
    pub seed: u64,
    pub store_fraction: f64,
    /// Share of accesses that go to file pages.
    pub file_access_share: f64,
    /// Share of accesses outside the hot sets (CacheLike).
    pub cold_access_share: f64,
    /// Fraction of pages loaded exactly once (PingPong).
    pub one_touch_fraction: f64,
    /// Fraction of the hot set re-drawn every rotation period.
    pub rotation_fraction: f64,
    pub rotation_period_ns: u64,
    /// Pages allocated per second while a set is being built; 0 means one
    /// allocation per event slot.
    pub growth_rate: f64,
    /// Short-lived pages per burst (BurstyAlloc).
    pub burst_pages: u64,
    pub burst_period_ns: u64,
}

impl WorkloadSpec {
    /// Defaults for `kind`.
    pub fn new(kind: WorkloadKind, total_pages: u64, seed: u64) -> Self {
        let mut s = Self {
            kind,
            total_pages,
            anon_fraction: 0.5,
            hot_fraction: 0.2,
            file_hot_fraction: 0.2,
            zipf_s: 1.1,
            duration_ns: 200_000_000,
            ops_rate: 10.0,
            churn_rate: 0.0,
            seed,
            store_fraction: 0.3,
            file_access_share: 0.5,
            cold_access_share: 0.05,
            one_touch_fraction: 0.0,
            rotation_fraction: 0.1,
            rotation_period_ns: 120_000_000_000,
            growth_rate: 0.0,
            burst_pages: 0,
            burst_period_ns: 100_000_000,
        };
        match kind {
            WorkloadKind::WebLike => {
                s.anon_fraction = 0.6;
                s.file_access_share = 0.1;
            }
            WorkloadKind::CacheLike => {
                s.anon_fraction = 0.3;
                s.hot_fraction = 0.4;
                s.file_hot_fraction = 0.25;
                s.file_access_share = 0.6;
            }
            WorkloadKind::WarehouseLike => {
                s.anon_fraction = 0.85;
                s.file_access_share = 0.02;
                s.churn_rate = 50_000.0;
            }
            WorkloadKind::PingPong => {
                s.one_touch_fraction = 0.5;
            }
            WorkloadKind::BurstyAlloc => {
                s.burst_pages = total_pages / 4;
                s.growth_rate = 1_500_000.0;
            }
            WorkloadKind::UniformBandwidth => {
                s.store_fraction = 0.0;
            }
            WorkloadKind::ZipfSteady => {}
        }
        s
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let frac = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SpecError(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        if !(self.hot_fraction > 0.0 && self.hot_fraction <= 1.0) {
            return Err(SpecError(format!("hot_fraction = {} is outside (0, 1]", self.hot_fraction)));
        }
        if !(self.file_hot_fraction > 0.0 && self.file_hot_fraction <= 1.0) {
            return Err(SpecError(format!(
                "file_hot_fraction = {} is outside (0, 1]",
                self.file_hot_fraction
            )));
        }
        frac("anon_fraction", self.anon_fraction)?;
        frac("store_fraction", self.store_fraction)?;
        frac("file_access_share", self.file_access_share)?;
        frac("cold_access_share", self.cold_access_share)?;
        frac("one_touch_fraction", self.one_touch_fraction)?;
        frac("rotation_fraction", self.rotation_fraction)?;
        if self.total_pages == 0 {
            return Err(SpecError("total_pages must be > 0".into()));
        }
        if !(self.ops_rate > 0.0 && self.ops_rate.is_finite()) {
            return Err(SpecError("ops_rate must be positive".into()));
        }
        if !(self.zipf_s >= 0.0 && self.zipf_s.is_finite()) {
            return Err(SpecError("zipf_s must be >= 0".into()));
        }
        if !(self.churn_rate >= 0.0) || !(self.growth_rate >= 0.0) {
            return Err(SpecError("rates must be >= 0".into()));
        }
        if self.kind == WorkloadKind::BurstyAlloc && (self.burst_pages == 0 || self.burst_period_ns == 0) {
            return Err(SpecError("bursty workload needs burst_pages and burst_period_ns".into()));
        }
        Ok(())
    }
}

/// Streams the trace described by `spec`.
pub fn generate(spec: &WorkloadSpec) -> Result<TraceGen, SpecError> {
    spec.validate()?;
    Ok(TraceGen::new(spec))
}
