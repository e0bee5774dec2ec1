//! Canned experiments: one workload, several simulator configs, and a list
//! of checks comparing their reports.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::model::NodeParams;
use crate::policy::{Interleave, PolicyKind, PolicySpec};
use crate::sim::{run, steady_state_utilization, SimConfig, SimError, SimReport, WindowStats};
use crate::trace::Op;
use crate::workload::{generate, SpecError, WorkloadKind, WorkloadSpec};

pub const PRESETS: [&str; 9] = [
    "web-2to1",
    "cache1-2to1",
    "cache2-2to1",
    "cache1-1to4",
    "cache2-1to4",
    "pingpong-filter",
    "bursty-decoupling",
    "interleave-sweep",
    "typeaware-cache",
];

/// Report quantity a check reads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Metric {
    /// A totals field, counter, or `throughput_proxy` (see
    /// [`SimReport::metric`]).
    Total(String),
    /// 95th percentile of a per-window field over all windows.
    WindowP95(String),
    /// Mean per-window promotion rate over the windows in which the named
    /// config allocated on a CXL node.
    PressurePromotionRate(String),
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Total(m) => write!(f, "{m}"),
            Metric::WindowP95(m) => write!(f, "p95({m})"),
            Metric::PressurePromotionRate(c) => write!(f, "promotion_rate[pressure of {c}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub config: String,
    pub metric: Metric,
}

impl Term {
    pub fn new(config: &str, metric: Metric) -> Self {
        Self {
            config: config.into(),
            metric,
        }
    }

    pub fn total(config: &str, metric: &str) -> Self {
        Self::new(config, Metric::Total(metric.into()))
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.config, self.metric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Comparator::Lt => a < b,
            Comparator::Le => a <= b,
            Comparator::Gt => a > b,
            Comparator::Ge => a >= b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Check {
    /// `lhs cmp factor * rhs + offset`; without `rhs` the right side is
    /// just `offset`.
    Compare {
        lhs: Term,
        cmp: Comparator,
        factor: f64,
        rhs: Option<Term>,
        offset: f64,
    },
    /// `|term - target| <= tolerance`.
    Near {
        term: Term,
        target: f64,
        tolerance: f64,
    },
    /// `expected` has the largest value of `metric` among `configs`.
    Argmax {
        metric: Metric,
        configs: Vec<String>,
        expected: String,
    },
}

impl Check {
    pub fn scaled(lhs: Term, cmp: Comparator, factor: f64, rhs: Term) -> Self {
        Check::Compare {
            lhs,
            cmp,
            factor,
            rhs: Some(rhs),
            offset: 0.0,
        }
    }

    pub fn offset(lhs: Term, cmp: Comparator, rhs: Term, offset: f64) -> Self {
        Check::Compare {
            lhs,
            cmp,
            factor: 1.0,
            rhs: Some(rhs),
            offset,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedConfig {
    pub label: String,
    pub config: SimConfig,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub workload: WorkloadSpec,
    pub configs: Vec<NamedConfig>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub description: String,
    pub passed: bool,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRun {
    pub name: String,
    pub configs: Vec<String>,
    pub reports: Vec<SimReport>,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown scenario '{0}'")]
    Unknown(String),
    #[error(transparent)]
    Workload(#[from] SpecError),
    #[error("{config}: {source}")]
    Run { config: String, source: SimError },
    #[error("check refers to missing {0}")]
    MissingMetric(String),
}

const TABLE_ROWS: [&str; 10] = [
    "local_traffic_fraction",
    "mean_access_latency",
    "throughput_proxy",
    "bandwidth_utilization",
    "promotions",
    "demotions",
    "pgpromote_candidate_demoted",
    "pgswapout",
    "pgalloc_local",
    "pgalloc_cxl",
];

impl ScenarioRun {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn report(&self, label: &str) -> Option<&SimReport> {
        let i = self.configs.iter().position(|c| c == label)?;
        Some(&self.reports[i])
    }

    /// Configs side by side, then one line per check.
    pub fn table(&self) -> String {
        let width = self.configs.iter().map(|c| c.len()).max().unwrap_or(0).max(14);
        let mut out = format!("scenario {}\n{:<28}", self.name, "metric");
        for c in &self.configs {
            write!(out, " {c:>width$}").unwrap();
        }
        out.push('\n');
        for row in TABLE_ROWS {
            write!(out, "{row:<28}").unwrap();
            for r in &self.reports {
                let v = r.metric(row).unwrap_or(f64::NAN);
                write!(out, " {:>width$}", format_value(v)).unwrap();
            }
            out.push('\n');
        }
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            writeln!(out, "{verdict} {} (observed {}, bound {})", c.description, format_value(c.observed), format_value(c.bound)).unwrap();
        }
        out
    }

    /// `config,metric,value` rows for the table metrics.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,metric,value\n");
        for (c, r) in self.configs.iter().zip(&self.reports) {
            for row in TABLE_ROWS {
                if let Some(v) = r.metric(row) {
                    writeln!(out, "{c},{row},{v}").unwrap();
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run serializes");
        s.push('\n');
        s
    }
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else if v.abs() >= 1000.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.4}")
    }
}

fn p95(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let rank = ((0.95 * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

fn window_field(w: &WindowStats, name: &str) -> Option<f64> {
    Some(match name {
        "local_traffic_fraction" => w.local_traffic_fraction,
        "cxl_traffic_fraction" => w.cxl_traffic_fraction,
        "mean_access_latency" => w.mean_access_latency,
        "bandwidth_utilization" => w.bandwidth_utilization,
        "allocation_rate_local" => w.allocation_rate_local,
        "allocation_rate_cxl" => w.allocation_rate_cxl,
        "promotion_rate" => w.promotion_rate,
        "demotion_rate" => w.demotion_rate,
        _ => return None,
    })
}

fn evaluate(labels: &[String], reports: &[SimReport], term: &Term) -> Result<f64, ScenarioError> {
    let missing = || ScenarioError::MissingMetric(term.to_string());
    let find = |label: &str| {
        labels
            .iter()
            .position(|l| l == label)
            .map(|i| &reports[i])
            .ok_or_else(missing)
    };
    let report = find(&term.config)?;
    match &term.metric {
        Metric::Total(name) => report.metric(name).ok_or_else(missing),
        Metric::WindowP95(name) => {
            let mut v = report
                .windows
                .iter()
                .map(|w| window_field(w, name))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(missing)?;
            Ok(p95(&mut v))
        }
        Metric::PressurePromotionRate(reference) => {
            let pressure = find(reference)?;
            let rates: Vec<f64> = pressure
                .windows
                .iter()
                .zip(&report.windows)
                .filter(|(p, _)| p.allocation_rate_cxl > 0.0)
                .map(|(_, w)| w.promotion_rate)
                .collect();
            Ok(if rates.is_empty() {
                0.0
            } else {
                rates.iter().sum::<f64>() / rates.len() as f64
            })
        }
    }
}

fn check(labels: &[String], reports: &[SimReport], c: &Check) -> Result<CheckResult, ScenarioError> {
    Ok(match c {
        Check::Compare {
            lhs,
            cmp,
            factor,
            rhs,
            offset,
        } => {
            let observed = evaluate(labels, reports, lhs)?;
            let (bound, rhs_text) = match rhs {
                Some(t) => {
                    let mut text = t.to_string();
                    if *factor != 1.0 {
                        text = format!("{factor} * {text}");
                    }
                    if *offset != 0.0 {
                        text = format!("{text} + {offset}");
                    }
                    (factor * evaluate(labels, reports, t)? + offset, text)
                }
                None => (*offset, offset.to_string()),
            };
            CheckResult {
                description: format!("{lhs} {} {rhs_text}", cmp.symbol()),
                passed: cmp.holds(observed, bound),
                observed,
                bound,
            }
        }
        Check::Near {
            term,
            target,
            tolerance,
        } => {
            let observed = evaluate(labels, reports, term)?;
            CheckResult {
                description: format!("{term} within {tolerance} of {target:.4}"),
                passed: (observed - target).abs() <= *tolerance,
                observed,
                bound: *target,
            }
        }
        Check::Argmax {
            metric,
            configs,
            expected,
        } => {
            let mut best = (f64::NEG_INFINITY, String::new());
            for cfg in configs {
                let v = evaluate(labels, reports, &Term::new(cfg, metric.clone()))?;
                if v > best.0 {
                    best = (v, cfg.clone());
                }
            }
            let want = evaluate(labels, reports, &Term::new(expected, metric.clone()))?;
            CheckResult {
                description: format!("argmax of {metric} over {} is {expected} (got {})", configs.join(", "), best.1),
                passed: best.1 == *expected,
                observed: want,
                bound: best.0,
            }
        }
    })
}

impl Scenario {
    /// Runs every config on the shared trace, in parallel.
    pub fn run(&self) -> Result<ScenarioRun, ScenarioError> {
        generate(&self.workload)?;
        let reports = self
            .configs
            .par_iter()
            .map(|nc| {
                let trace = generate(&self.workload).expect("validated above");
                run(trace, nc.config.clone()).map_err(|source| ScenarioError::Run {
                    config: nc.label.clone(),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let labels: Vec<String> = self.configs.iter().map(|c| c.label.clone()).collect();
        let checks = self
            .checks
            .iter()
            .map(|c| check(&labels, &reports, c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScenarioRun {
            name: self.name.clone(),
            configs: labels,
            reports,
            checks,
        })
    }

    pub fn config_mut(&mut self, label: &str) -> Option<&mut SimConfig> {
        self.configs
            .iter_mut()
            .find(|c| c.label == label)
            .map(|c| &mut c.config)
    }
}

/// Largest number of simultaneously live pages in the workload's trace.
pub fn peak_live_pages(spec: &WorkloadSpec) -> Result<u64, SpecError> {
    let (mut live, mut peak) = (0u64, 0u64);
    for ev in generate(spec)? {
        match ev.op {
            Op::Alloc(..) => {
                live += 1;
                peak = peak.max(live);
            }
            Op::Free(_) => live -= 1,
            _ => {}
        }
    }
    Ok(peak)
}

/// Single oversized local node holding 1.2x the workload's peak live set.
pub fn all_local_config(spec: &WorkloadSpec, template: &SimConfig) -> Result<SimConfig, SpecError> {
    let cap = (peak_live_pages(spec)? as f64 * 1.2).ceil() as u64;
    let mut local = template
        .nodes
        .iter()
        .find(|n| n.tier == crate::model::Tier::Local)
        .cloned()
        .unwrap_or_else(|| NodeParams::local(cap));
    local.capacity = cap;
    let mut cfg = template.clone();
    cfg.nodes = vec![local];
    cfg.policy = PolicySpec {
        kind: PolicyKind::DefaultLinux,
        interleave: None,
        ..template.policy.clone()
    };
    Ok(cfg)
}

/// Timing knobs shared by every preset: runs last a few hundred simulated
/// milliseconds, so scanning happens every 20 ms instead of every second.
const SCAN_PERIOD_NS: u64 = 20_000_000;

fn policy(kind: PolicyKind) -> PolicySpec {
    PolicySpec {
        scan_period_ns: SCAN_PERIOD_NS,
        ..PolicySpec::new(kind)
    }
}

fn config(local: u64, cxl: u64, spec: PolicySpec, seed: u64) -> SimConfig {
    let mut c = SimConfig::two_tier(local, cxl, spec);
    c.seed = seed;
    c
}

fn named(label: &str, config: SimConfig) -> NamedConfig {
    NamedConfig {
        label: label.into(),
        config,
    }
}

/// Local and CXL capacities for `pages` of working set: the machine holds
/// the whole set, split `l:c` between the tiers.
fn split(pages: u64, l: u64, c: u64) -> (u64, u64) {
    let total = pages * 21 / 20;
    (total * l / (l + c), total * c / (l + c))
}

fn cache_workload(variant: u8, seed: u64) -> WorkloadSpec {
    let mut w = WorkloadSpec::new(WorkloadKind::CacheLike, 60_000, seed);
    w.duration_ns = 300_000_000;
    if variant == 1 {
        // Anon-heavy hot set.
        w.anon_fraction = 0.4;
        w.hot_fraction = 0.4;
        w.file_hot_fraction = 0.2;
        w.file_access_share = 0.4;
    } else {
        // File-heavy, colder anon.
        w.anon_fraction = 0.25;
        w.hot_fraction = 0.2;
        w.file_hot_fraction = 0.3;
        w.file_access_share = 0.7;
    }
    w.churn_rate = 20_000.0;
    w
}

fn all_policies(local: u64, cxl: u64, seed: u64) -> Vec<NamedConfig> {
    PolicyKind::ALL
        .iter()
        .map(|&k| named(k.name(), config(local, cxl, policy(k), seed)))
        .collect()
}

/// Builds a preset by name.
pub fn preset(name: &str, seed: u64) -> Result<Scenario, ScenarioError> {
    use Comparator::*;
    let s = match name {
        "web-2to1" => {
            let mut w = WorkloadSpec::new(WorkloadKind::WebLike, 54_000, seed);
            w.anon_fraction = 0.55;
            w.file_access_share = 0.05;
            w.growth_rate = 400_000.0;
            w.duration_ns = 300_000_000;
            let (l, c) = (40_000, 20_000);
            let mut configs = all_policies(l, c, seed);
            configs.push(named("all_local", all_local_config(&w, &config(l, c, policy(PolicyKind::DefaultLinux), seed))?));
            Scenario {
                name: name.into(),
                workload: w,
                configs,
                checks: vec![
                    Check::offset(
                        Term::total("tpp", "local_traffic_fraction"),
                        Ge,
                        Term::total("default_linux", "local_traffic_fraction"),
                        0.15,
                    ),
                    Check::scaled(
                        Term::total("tpp", "throughput_proxy"),
                        Ge,
                        0.97,
                        Term::total("all_local", "throughput_proxy"),
                    ),
                ],
            }
        }
        "cache1-2to1" | "cache2-2to1" | "cache1-1to4" | "cache2-1to4" => {
            let variant = if name.starts_with("cache1") { 1 } else { 2 };
            let w = cache_workload(variant, seed);
            let (l, c) = if name.ends_with("2to1") {
                split(w.total_pages, 2, 1)
            } else {
                split(w.total_pages, 1, 4)
            };
            let mut configs = all_policies(l, c, seed);
            configs.push(named("all_local", all_local_config(&w, &config(l, c, policy(PolicyKind::DefaultLinux), seed))?));
            let mut checks = vec![
                Check::scaled(
                    Term::total("tpp", "local_traffic_fraction"),
                    Gt,
                    1.0,
                    Term::total("default_linux", "local_traffic_fraction"),
                ),
                Check::scaled(
                    Term::total("tpp", "throughput_proxy"),
                    Gt,
                    1.0,
                    Term::total("default_linux", "throughput_proxy"),
                ),
            ];
            if name.ends_with("1to4") {
                checks.push(Check::scaled(
                    Term::total("numa_balancing", "promotions"),
                    Lt,
                    0.2,
                    Term::total("tpp", "promotions"),
                ));
            }
            Scenario {
                name: name.into(),
                workload: w,
                configs,
                checks,
            }
        }
        "pingpong-filter" => {
            let mut w = WorkloadSpec::new(WorkloadKind::PingPong, 40_000, seed);
            w.one_touch_fraction = 0.7;
            w.duration_ns = 200_000_000;
            let (l, c) = (16_000, 32_000);
            let on = policy(PolicyKind::Tpp);
            let off = PolicySpec {
                active_lru_filter: false,
                ..on.clone()
            };
            Scenario {
                name: name.into(),
                workload: w,
                configs: vec![named("tpp", config(l, c, on, seed)), named("tpp_no_filter", config(l, c, off, seed))],
                checks: vec![
                    Check::scaled(Term::total("tpp", "promotions"), Le, 0.5, Term::total("tpp_no_filter", "promotions")),
                    Check::scaled(
                        Term::total("tpp", "pgpromote_candidate_demoted"),
                        Le,
                        0.7,
                        Term::total("tpp_no_filter", "pgpromote_candidate_demoted"),
                    ),
                ],
            }
        }
        "bursty-decoupling" => {
            let mut w = WorkloadSpec::new(WorkloadKind::BurstyAlloc, 55_000, seed);
            w.burst_pages = 25_000;
            w.burst_period_ns = 100_000_000;
            w.growth_rate = 1_500_000.0;
            w.ops_rate = 5.0;
            w.rotation_fraction = 0.2;
            w.rotation_period_ns = 10_000_000;
            w.duration_ns = 400_000_000;
            let (l, c) = (50_000, 70_000);
            let on = policy(PolicyKind::Tpp);
            let off = PolicySpec {
                decouple_watermarks: false,
                ..on.clone()
            };
            Scenario {
                name: name.into(),
                workload: w,
                configs: vec![named("tpp", config(l, c, on, seed)), named("tpp_coupled", config(l, c, off, seed))],
                checks: vec![
                    Check::scaled(
                        Term::new("tpp", Metric::WindowP95("allocation_rate_local".into())),
                        Ge,
                        1.2,
                        Term::new("tpp_coupled", Metric::WindowP95("allocation_rate_local".into())),
                    ),
                    Check::scaled(
                        Term::new("tpp_coupled", Metric::PressurePromotionRate("tpp_coupled".into())),
                        Lt,
                        0.2,
                        Term::new("tpp", Metric::PressurePromotionRate("tpp_coupled".into())),
                    ),
                ],
            }
        }
        "interleave-sweep" => {
            let mut w = WorkloadSpec::new(WorkloadKind::UniformBandwidth, 30_000, seed);
            w.ops_rate = 10.0;
            w.duration_ns = 100_000_000;
            let ratios = [(1, 1), (2, 1), (3, 1), (1, 2)];
            let mut configs = Vec::new();
            let mut checks = Vec::new();
            for (n, k) in ratios {
                let label = format!("interleave_{n}_{k}");
                let mut spec = policy(PolicyKind::DefaultLinux);
                spec.interleave = Some(Interleave::new(n, k).expect("n >= 1"));
                let mut cfg = config(40_000, 40_000, spec, seed);
                cfg.nodes[0].bandwidth = 2.5;
                cfg.nodes[1].bandwidth = 1.0;
                let total = f64::from(n + k);
                let target = steady_state_utilization(&[f64::from(n) / total, f64::from(k) / total], &[2.5, 1.0])
                    .expect("valid shares");
                checks.push(Check::Near {
                    term: Term::total(&label, "bandwidth_utilization"),
                    target,
                    tolerance: 0.05,
                });
                configs.push(named(&label, cfg));
            }
            checks.push(Check::Argmax {
                metric: Metric::Total("bandwidth_utilization".into()),
                configs: configs.iter().map(|c| c.label.clone()).collect(),
                expected: "interleave_2_1".into(),
            });
            Scenario {
                name: name.into(),
                workload: w,
                configs,
                checks,
            }
        }
        "typeaware-cache" => {
            let w = cache_workload(2, seed);
            let (l, c) = split(w.total_pages, 2, 1);
            let plain = policy(PolicyKind::Tpp);
            let aware = PolicySpec {
                type_aware_alloc: true,
                ..plain.clone()
            };
            Scenario {
                name: name.into(),
                workload: w,
                configs: vec![named("tpp", config(l, c, plain, seed)), named("tpp_type_aware", config(l, c, aware, seed))],
                checks: vec![Check::scaled(
                    Term::total("tpp_type_aware", "pgalloc_cxl"),
                    Gt,
                    1.0,
                    Term::total("tpp", "pgalloc_cxl"),
                )],
            }
        }
        other => return Err(ScenarioError::Unknown(other.into())),
    };
    Ok(s)
}
