//! Flat `key = value` run configuration.
//!
//! Keys are grouped by prefix: `node.local.*`, `node.cxl.*`, `policy.*`,
//! `policy.tpp.*`, `policy.autotiering.*`, `watermark.*`, `workload.*`,
//! `chameleon.*` and `run.*`. Blank lines and lines starting with `#` are
//! ignored. Every file written by [`Settings::render`] parses back to the
//! same settings.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::chameleon::CharacterizerConfig;
use crate::model::{LruKind, NodeParams, Tier};
use crate::policy::{DemotionOrder, Interleave, PolicyKind, PolicySpec};
use crate::sim::SimConfig;
use crate::workload::{WorkloadKind, WorkloadSpec};

pub const DEFAULT_LOCAL_PAGES: u64 = 70_000;
pub const DEFAULT_CXL_PAGES: u64 = 35_000;
pub const DEFAULT_WORKLOAD_PAGES: u64 = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value '{value}' for '{key}': {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected 'key = value'")]
    Syntax { line: usize },
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    pub fn name(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(format!("unknown format '{s}' (json or csv)")),
        }
    }
}

/// Invocation-level settings recorded in a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub command: String,
    pub trace: Option<String>,
    pub output: Option<String>,
    pub format: OutputFormat,
    pub scenario: Option<String>,
}

/// Everything a command needs, resolved from defaults, a config file and
/// command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// One local node and one CXL node; a CXL capacity of 0 means the
    /// machine has no CXL node.
    pub sim: SimConfig,
    pub workload: WorkloadSpec,
    pub chameleon: CharacterizerConfig,
    /// Trailing intervals counted by the characterizer's hot fraction.
    pub hot_window: u32,
    pub run: RunOptions,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            sim: SimConfig::two_tier(DEFAULT_LOCAL_PAGES, DEFAULT_CXL_PAGES, PolicySpec::new(PolicyKind::Tpp)),
            workload: WorkloadSpec::new(WorkloadKind::ZipfSteady, DEFAULT_WORKLOAD_PAGES, 0),
            chameleon: CharacterizerConfig::default(),
            hot_window: 1,
            run: RunOptions {
                command: String::new(),
                trace: None,
                output: None,
                format: OutputFormat::Json,
                scenario: None,
            },
        }
    }
}

type Getter = fn(&Settings) -> String;
type Setter = fn(&mut Settings, &str) -> Result<(), String>;

struct Field {
    key: &'static str,
    get: Getter,
    set: Setter,
}

fn parse<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: Display,
{
    v.parse().map_err(|e: T::Err| e.to_string())
}

fn opt_string(v: &Option<String>) -> String {
    v.clone().unwrap_or_default()
}

fn string_opt(v: &str) -> Option<String> {
    (!v.is_empty()).then(|| v.to_string())
}

fn node(s: &Settings, tier: Tier) -> NodeParams {
    s.sim
        .nodes
        .iter()
        .find(|n| n.tier == tier)
        .cloned()
        .unwrap_or_else(|| match tier {
            Tier::Local => NodeParams::local(0),
            Tier::Cxl => NodeParams::cxl(0),
        })
}

fn node_mut(s: &mut Settings, tier: Tier) -> &mut NodeParams {
    let i = match s.sim.nodes.iter().position(|n| n.tier == tier) {
        Some(i) => i,
        None => {
            s.sim.nodes.push(match tier {
                Tier::Local => NodeParams::local(0),
                Tier::Cxl => NodeParams::cxl(0),
            });
            s.sim.nodes.len() - 1
        }
    };
    &mut s.sim.nodes[i]
}

macro_rules! plain {
    ($key:literal, $($path:ident).+) => {
        Field {
            key: $key,
            get: |s| s.$($path).+.to_string(),
            set: |s, v| {
                s.$($path).+ = parse(v)?;
                Ok(())
            },
        }
    };
}

macro_rules! node_field {
    ($key:literal, $tier:expr, $field:ident) => {
        Field {
            key: $key,
            get: |s| node(s, $tier).$field.to_string(),
            set: |s, v| {
                node_mut(s, $tier).$field = parse(v)?;
                Ok(())
            },
        }
    };
}

const FIELDS: &[Field] = &[
    Field {
        key: "run.command",
        get: |s| s.run.command.clone(),
        set: |s, v| {
            s.run.command = v.to_string();
            Ok(())
        },
    },
    Field {
        key: "run.trace",
        get: |s| opt_string(&s.run.trace),
        set: |s, v| {
            s.run.trace = string_opt(v);
            Ok(())
        },
    },
    Field {
        key: "run.output",
        get: |s| opt_string(&s.run.output),
        set: |s, v| {
            s.run.output = string_opt(v);
            Ok(())
        },
    },
    Field {
        key: "run.format",
        get: |s| s.run.format.name().to_string(),
        set: |s, v| {
            s.run.format = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "run.scenario",
        get: |s| opt_string(&s.run.scenario),
        set: |s, v| {
            s.run.scenario = string_opt(v);
            Ok(())
        },
    },
    plain!("run.seed", sim.seed),
    plain!("run.swap_latency_ns", sim.swap_latency_ns),
    plain!("run.migration_cost_ns", sim.migration_cost_ns),
    plain!("run.report_window_ns", sim.report_window_ns),
    plain!("run.unbounded_swap", sim.unbounded_swap),
    node_field!("node.local.capacity", Tier::Local, capacity),
    node_field!("node.local.base_latency_ns", Tier::Local, base_latency_ns),
    node_field!("node.local.bandwidth", Tier::Local, bandwidth),
    node_field!("node.local.distance", Tier::Local, distance),
    node_field!("node.cxl.capacity", Tier::Cxl, capacity),
    node_field!("node.cxl.base_latency_ns", Tier::Cxl, base_latency_ns),
    node_field!("node.cxl.bandwidth", Tier::Cxl, bandwidth),
    node_field!("node.cxl.distance", Tier::Cxl, distance),
    Field {
        key: "policy.kind",
        get: |s| s.sim.policy.kind.name().to_string(),
        set: |s, v| {
            s.sim.policy.kind = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "policy.interleave",
        get: |s| s.sim.policy.interleave.map_or_else(|| "none".to_string(), |il| il.to_string()),
        set: |s, v| {
            s.sim.policy.interleave = match v {
                "none" | "" => None,
                _ => Some(parse::<Interleave>(v)?),
            };
            Ok(())
        },
    },
    plain!("policy.type_aware_alloc", sim.policy.type_aware_alloc),
    plain!("policy.scan_quota", sim.policy.scan_quota),
    plain!("policy.scan_period_ns", sim.policy.scan_period_ns),
    plain!("policy.reclaim_batch", sim.policy.reclaim_batch),
    Field {
        key: "policy.demotion_order",
        get: |s| match s.sim.policy.demotion_order {
            DemotionOrder::FileFirst => "file_first".into(),
            DemotionOrder::Proportional => "proportional".into(),
        },
        set: |s, v| {
            s.sim.policy.demotion_order = match v {
                "file_first" => DemotionOrder::FileFirst,
                "proportional" => DemotionOrder::Proportional,
                _ => return Err("expected file_first or proportional".into()),
            };
            Ok(())
        },
    },
    Field {
        key: "policy.demoted_lru",
        get: |s| match s.sim.policy.demoted_lru {
            LruKind::Active => "active".into(),
            LruKind::Inactive => "inactive".into(),
        },
        set: |s, v| {
            s.sim.policy.demoted_lru = match v {
                "active" => LruKind::Active,
                "inactive" => LruKind::Inactive,
                _ => return Err("expected active or inactive".into()),
            };
            Ok(())
        },
    },
    plain!("policy.tpp.active_lru_filter", sim.policy.active_lru_filter),
    plain!("policy.tpp.decouple_watermarks", sim.policy.decouple_watermarks),
    plain!("policy.tpp.demote_scale_factor", sim.policy.demote_scale_factor),
    plain!("policy.autotiering.reserved_promo_buffer", sim.policy.reserved_promo_buffer),
    plain!("policy.autotiering.access_threshold", sim.policy.access_threshold),
    plain!("watermark.min", sim.watermarks.min),
    plain!("watermark.low", sim.watermarks.low),
    plain!("watermark.high", sim.watermarks.high),
    plain!("watermark.allocation", sim.watermarks.allocation),
    Field {
        key: "workload.kind",
        get: |s| s.workload.kind.name().to_string(),
        set: |s, v| {
            s.workload.kind = parse::<WorkloadKind>(v)?;
            Ok(())
        },
    },
    plain!("workload.total_pages", workload.total_pages),
    plain!("workload.seed", workload.seed),
    plain!("workload.duration_ns", workload.duration_ns),
    plain!("workload.ops_rate", workload.ops_rate),
    plain!("workload.anon_fraction", workload.anon_fraction),
    plain!("workload.hot_fraction", workload.hot_fraction),
    plain!("workload.file_hot_fraction", workload.file_hot_fraction),
    plain!("workload.zipf_s", workload.zipf_s),
    plain!("workload.churn_rate", workload.churn_rate),
    plain!("workload.store_fraction", workload.store_fraction),
    plain!("workload.file_access_share", workload.file_access_share),
    plain!("workload.cold_access_share", workload.cold_access_share),
    plain!("workload.one_touch_fraction", workload.one_touch_fraction),
    plain!("workload.rotation_fraction", workload.rotation_fraction),
    plain!("workload.rotation_period_ns", workload.rotation_period_ns),
    plain!("workload.growth_rate", workload.growth_rate),
    plain!("workload.burst_pages", workload.burst_pages),
    plain!("workload.burst_period_ns", workload.burst_period_ns),
    plain!("chameleon.sample_ratio", chameleon.sample_ratio),
    plain!("chameleon.mini_interval_ns", chameleon.mini_interval_ns),
    plain!("chameleon.interval_ns", chameleon.interval_ns),
    plain!("chameleon.duty_fraction", chameleon.duty_fraction),
    plain!("chameleon.hot_window", hot_window),
];

pub fn keys() -> impl Iterator<Item = &'static str> {
    FIELDS.iter().map(|f| f.key)
}

fn field(key: &str) -> Result<&'static Field, ConfigError> {
    FIELDS
        .iter()
        .find(|f| f.key == key)
        .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))
}

/// Splits `key=value` (spaces around `=` allowed).
pub fn split_assignment(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then_some((k, v.trim()))
}

/// The `key = value` lines of a config file, in order. Keys are checked
/// against the known set.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = split_assignment(line).ok_or(ConfigError::Syntax { line: i + 1 })?;
        field(k)?;
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

pub fn read_config(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

impl Settings {
    /// Defaults for a sim run of `kind`: the workload takes the kind's own
    /// defaults.
    pub fn for_workload(kind: WorkloadKind, pages: u64, seed: u64) -> Self {
        Self {
            workload: WorkloadSpec::new(kind, pages, seed),
            ..Self::default()
        }
    }

    pub fn get(&self, key: &str) -> Result<String, ConfigError> {
        Ok((field(key)?.get)(self))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let f = field(key)?;
        (f.set)(self, value).map_err(|reason| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason,
        })
    }

    /// Applies `key=value` strings in order.
    pub fn apply<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<(), ConfigError> {
        for (i, o) in overrides.into_iter().enumerate() {
            let (k, v) = split_assignment(o).ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<(), ConfigError> {
        self.parse(&read_config(path)?)
    }

    /// Every key with its resolved value, one per line.
    pub fn render(&self) -> String {
        let mut out = String::from("# tiersim run manifest\n");
        for f in FIELDS {
            out.push_str(f.key);
            out.push_str(" = ");
            out.push_str(&(f.get)(self));
            out.push('\n');
        }
        out
    }

    /// The simulator config, without a CXL node if its capacity is 0.
    pub fn sim_config(&self) -> SimConfig {
        let mut cfg = self.sim.clone();
        cfg.nodes.retain(|n| n.tier == Tier::Local || n.capacity > 0);
        cfg
    }
}
