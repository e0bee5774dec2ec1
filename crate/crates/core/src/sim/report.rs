use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::CounterSet;

/// Traffic and migration statistics over one report window (or the whole
/// run, for totals). Rates are pages per simulated second.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub start_ns: u64,
    pub duration_ns: u64,
    pub accesses: u64,
    pub local_accesses: u64,
    pub cxl_accesses: u64,
    pub local_traffic_fraction: f64,
    pub cxl_traffic_fraction: f64,
    pub mean_access_latency: f64,
    pub bandwidth_utilization: f64,
    pub allocation_rate_local: f64,
    pub allocation_rate_cxl: f64,
    pub promotion_rate: f64,
    pub demotion_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: String,
    /// Set when the policy is only an approximation of the system it names.
    pub note: Option<String>,
    pub counters: CounterSet,
    pub windows: Vec<WindowStats>,
    pub totals: WindowStats,
    /// Completed accesses per second of charged latency.
    pub throughput_proxy: f64,
}

pub const WINDOW_CSV_HEADER: &str = "window,start_ns,accesses,local_traffic_fraction,cxl_traffic_fraction,mean_access_latency,bandwidth_utilization,allocation_rate_local,allocation_rate_cxl,promotion_rate,demotion_rate";

impl SimReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Window series with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(WINDOW_CSV_HEADER);
        out.push('\n');
        for (i, w) in self.windows.iter().enumerate() {
            writeln!(
                out,
                "{i},{},{},{},{},{},{},{},{},{},{}",
                w.start_ns,
                w.accesses,
                w.local_traffic_fraction,
                w.cxl_traffic_fraction,
                w.mean_access_latency,
                w.bandwidth_utilization,
                w.allocation_rate_local,
                w.allocation_rate_cxl,
                w.promotion_rate,
                w.demotion_rate
            )
            .unwrap();
        }
        out
    }

    pub fn local_traffic_fraction(&self) -> f64 {
        self.totals.local_traffic_fraction
    }

    /// Looks up a summary metric by name: a totals field, a counter, or
    /// `throughput_proxy`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        let t = &self.totals;
        let v = match name {
            "throughput_proxy" => self.throughput_proxy,
            "local_traffic_fraction" => t.local_traffic_fraction,
            "cxl_traffic_fraction" => t.cxl_traffic_fraction,
            "mean_access_latency" => t.mean_access_latency,
            "bandwidth_utilization" => t.bandwidth_utilization,
            "allocation_rate_local" => t.allocation_rate_local,
            "allocation_rate_cxl" => t.allocation_rate_cxl,
            "promotion_rate" => t.promotion_rate,
            "demotion_rate" => t.demotion_rate,
            "promotions" => self.counters.promotions() as f64,
            "demotions" => self.counters.demotions() as f64,
            other => self.counters.get(other)? as f64,
        };
        Some(v)
    }
}
