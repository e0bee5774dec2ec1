//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness. Exits non-zero if a criterion fails,
//! unless it is listed in `KNOWN_FAILURES` (see the README section on
//! known deviations); a known failure that starts passing is reported.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tiersim::chameleon::{Characterizer, CharacterizerConfig};
use tiersim::model::{NodeId, NodeParams, NodeState, PageFrame, PageId, PageType, WatermarkFractions, LruKind};
use tiersim::policy::{Interleave, PolicyKind, PolicySpec};
use tiersim::scenario::{preset, ScenarioRun, PRESETS};
use tiersim::sim::{run, SimConfig, SimReport};
use tiersim::trace::{Op, TraceEvent};
use tiersim::workload::{generate, WorkloadKind, WorkloadSpec};

const SEED: u64 = 1;
const KNOWN_FAILURES: &[&str] = &["2b"];

struct Outcome {
    id: &'static str,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: &'static str, title: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome { id, title, passed, detail }
}

fn report<'a>(run: &'a ScenarioRun, label: &str) -> &'a SimReport {
    run.report(label).unwrap_or_else(|| panic!("{} has no config {label}", run.name))
}

fn promotions(r: &SimReport) -> u64 {
    r.counters.pgpromote_success_anon + r.counters.pgpromote_success_file
}

fn p95(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let rank = (0.95 * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

fn utilization_oracle(n: u32, k: u32, bw: [f64; 2]) -> f64 {
    let t = f64::from(n + k);
    let shares = [f64::from(n) / t, f64::from(k) / t];
    let rate = shares
        .iter()
        .zip(bw)
        .filter(|(s, _)| **s > 0.0)
        .map(|(s, b)| b / s)
        .fold(f64::INFINITY, f64::min);
    rate / (bw[0] + bw[1])
}

fn criterion_1() -> Outcome {
    let mut policy = PolicySpec::new(PolicyKind::DefaultLinux);
    policy.interleave = Some(Interleave::new(2, 1).unwrap());
    let trace: Vec<TraceEvent> = (0..3000)
        .map(|i| TraceEvent::new(i * 100, Op::Alloc(PageId(i), PageType::Anon)))
        .collect();
    let r = run(trace, SimConfig::two_tier(100_000, 100_000, policy)).unwrap();
    let (l, c) = (r.counters.pgalloc_local, r.counters.pgalloc_cxl);
    outcome(
        "1",
        "interleave 2:1 places 2000 local / 1000 CXL of 3000",
        l == 2000 && c == 1000,
        format!("local {l}, cxl {c}"),
    )
}

fn criterion_2(sweep: &ScenarioRun) -> [Outcome; 2] {
    let ratios = [(1, 1), (2, 1), (3, 1), (1, 2)];
    let mut within = true;
    let mut parts = Vec::new();
    let mut best = ((0, 0), f64::MIN);
    for (n, k) in ratios {
        let label = format!("interleave_{n}_{k}");
        let got = report(sweep, &label).totals.bandwidth_utilization;
        let want = utilization_oracle(n, k, [2.5, 1.0]);
        within &= (got - want).abs() <= 0.05;
        parts.push(format!("{n}:{k} {got:.4}/{want:.4}"));
        if got > best.1 {
            best = ((n, k), got);
        }
    }
    [
        outcome(
            "2a",
            "interleave utilization within 0.05 of the steady-state value",
            within,
            parts.join(", "),
        ),
        outcome(
            "2b",
            "interleave 2:1 has the highest utilization",
            best.0 == (2, 1),
            format!("argmax {}:{} ({:.4})", best.0 .0, best.0 .1, best.1),
        ),
    ]
}

fn criterion_3(web: &ScenarioRun) -> Outcome {
    let tpp = report(web, "tpp");
    let dl = report(web, "default_linux");
    let local = report(web, "all_local");
    let gap = tpp.totals.local_traffic_fraction - dl.totals.local_traffic_fraction;
    let ratio = tpp.throughput_proxy / local.throughput_proxy;
    outcome(
        "3",
        "web-2to1: TPP local traffic >= default + 0.15, throughput >= 0.97 of all-local",
        gap >= 0.15 && ratio >= 0.97,
        format!("local traffic gap {gap:.4}, throughput ratio {ratio:.4}"),
    )
}

fn criterion_4(pp: &ScenarioRun) -> Outcome {
    let on = report(pp, "tpp");
    let off = report(pp, "tpp_no_filter");
    let p = promotions(on) as f64 / promotions(off) as f64;
    let d = on.counters.pgpromote_candidate_demoted as f64 / off.counters.pgpromote_candidate_demoted as f64;
    outcome(
        "4",
        "pingpong-filter: promotions <= 0.5x, demoted candidates reduced >= 30%",
        p <= 0.5 && d <= 0.7,
        format!("promotion ratio {p:.4}, demoted candidate ratio {d:.4}"),
    )
}

fn criterion_5(bursty: &ScenarioRun) -> Outcome {
    let on = report(bursty, "tpp");
    let off = report(bursty, "tpp_coupled");
    let p95_on = p95(on.windows.iter().map(|w| w.allocation_rate_local).collect());
    let p95_off = p95(off.windows.iter().map(|w| w.allocation_rate_local).collect());
    let pressure: Vec<usize> = off
        .windows
        .iter()
        .enumerate()
        .filter(|(_, w)| w.allocation_rate_cxl > 0.0)
        .map(|(i, _)| i)
        .collect();
    let mean = |r: &SimReport| {
        pressure.iter().map(|&i| r.windows[i].promotion_rate).sum::<f64>() / pressure.len() as f64
    };
    let (promo_on, promo_off) = (mean(on), mean(off));
    outcome(
        "5",
        "bursty-decoupling: p95 local allocation rate >= 1.2x, coupled promotion < 0.2x under pressure",
        !pressure.is_empty() && p95_on >= 1.2 * p95_off && promo_off < 0.2 * promo_on,
        format!(
            "p95 {p95_on:.0} vs {p95_off:.0}; promotion rate {promo_off:.1} vs {promo_on:.1} over {} pressure windows",
            pressure.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();
    let mut policies = [0usize; 4];
    for seed in 0..1000 {
        let (events, cfg) = common::random_case(seed);
        policies[PolicyKind::ALL.iter().position(|&k| k == cfg.policy.kind).unwrap()] += 1;
        if let Err(e) = common::check_case(&events, cfg) {
            failures.push(format!("trace {seed}: {e}"));
        }
        if let Err(e) = common::check_lru_ops(&common::random_lru_ops(seed, 300), 64) {
            failures.push(format!("lru {seed}: {e}"));
        }
    }
    for capacity in [8, 50, 999, 4096] {
        let mut node = NodeState::new(NodeId(0), NodeParams::local(capacity), &WatermarkFractions::default()).unwrap();
        let mut last = node.watermark_state();
        for p in 0..capacity {
            node.lru_insert(PageFrame::new(PageId(p), PageType::File), LruKind::Inactive).unwrap();
            let s = node.watermark_state();
            if s < last {
                failures.push(format!("watermark state not monotone at capacity {capacity}"));
                break;
            }
            last = s;
        }
    }
    outcome(
        "6",
        "conservation suite: 1000 random traces, all policies, audited after every event",
        failures.is_empty() && policies.iter().all(|&n| n > 0),
        if failures.is_empty() {
            format!("0 violations; traces per policy {policies:?}")
        } else {
            format!("{} violations, first: {}", failures.len(), failures[0])
        },
    )
}

fn criterion_7() -> Outcome {
    const MS: u64 = 1_000_000;
    let full = CharacterizerConfig {
        sample_ratio: 1,
        mini_interval_ns: 2 * MS,
        interval_ns: 10 * MS,
        duty_fraction: 1.0,
    };
    let mut notes = Vec::new();

    // 22 of 100 pages touched in each interval, a different 22 each time.
    let mut c = Characterizer::new(full.clone()).unwrap();
    for p in 0..100 {
        c.ingest(&TraceEvent::new(0, Op::Alloc(PageId(p), PageType::Anon)));
    }
    let mut exact = true;
    for i in 0..8u64 {
        for p in 0..22 {
            c.ingest(&TraceEvent::new(i * 10 * MS + 1 + p, Op::Load(PageId((p + 13 * i) % 100))));
        }
        exact &= c.hot_fraction(1).total == 0.22;
    }
    notes.push(format!("22/100 exact: {exact}"));

    // Decimated counts never exceed full sampling.
    let mut w = WorkloadSpec::new(WorkloadKind::ZipfSteady, 5_000, SEED);
    w.duration_ns = 80 * MS;
    w.ops_rate = 2.0;
    let events: Vec<TraceEvent> = generate(&w).unwrap().collect();
    let sample = |cfg: CharacterizerConfig| {
        let mut c = Characterizer::new(cfg).unwrap();
        for ev in &events {
            c.ingest(ev);
        }
        c.finish()
    };
    let all = sample(full.clone());
    let some = sample(CharacterizerConfig {
        sample_ratio: 200,
        ..full.clone()
    });
    let bounded = all.len() == some.len() && all.iter().zip(&some).all(|(a, s)| s.hot_total <= a.hot_total);
    notes.push(format!("R=200 bounded on {} intervals: {bounded}", all.len()));

    // 64-step shift against a brute-force history.
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut c = Characterizer::new(full).unwrap();
    c.ingest(&TraceEvent::new(0, Op::Alloc(PageId(1), PageType::Anon)));
    let mut history: Vec<bool> = Vec::new();
    let mut shifts = true;
    for step in 0..200u64 {
        let active = rng.gen_bool(0.3);
        if active {
            c.ingest(&TraceEvent::new(step * 10 * MS + 5, Op::Load(PageId(1))));
        }
        history.push(active);
        let want = history
            .iter()
            .rev()
            .take(64)
            .enumerate()
            .filter(|(_, &h)| h)
            .fold(0u64, |acc, (age, _)| acc | 1 << age);
        shifts &= c.bitmap(PageId(1)) == want;
        c.rotate_interval();
    }
    notes.push(format!("shift oracle: {shifts}"));

    outcome("7", "characterizer exactness, decimation bound and bitmap shifts", exact && bounded && shifts, notes.join("; "))
}

fn criterion_8(cache: &ScenarioRun) -> Outcome {
    let nb = promotions(report(cache, "numa_balancing"));
    let tpp = promotions(report(cache, "tpp"));
    outcome(
        "8",
        "cache1-1to4: NUMA balancing promotions < 0.2x TPP",
        (nb as f64) < 0.2 * tpp as f64,
        format!("numa_balancing {nb}, tpp {tpp}"),
    )
}

fn main() {
    let start = Instant::now();
    let mut runs = Vec::new();
    let mut stable = Vec::new();
    for name in PRESETS {
        let first = preset(name, SEED).unwrap().run().unwrap();
        let second = preset(name, SEED).unwrap().run().unwrap();
        if first.to_json() != second.to_json() {
            stable.push(name);
        }
        runs.push(first);
    }
    let get = |name: &str| runs.iter().find(|r| r.name == name).unwrap();

    let mut results = vec![criterion_1()];
    results.extend(criterion_2(get("interleave-sweep")));
    results.push(criterion_3(get("web-2to1")));
    results.push(criterion_4(get("pingpong-filter")));
    results.push(criterion_5(get("bursty-decoupling")));
    results.push(criterion_6());
    results.push(criterion_7());
    results.push(criterion_8(get("cache1-1to4")));
    results.push(outcome(
        "9",
        "every preset rerun with the same seed gives identical JSON",
        stable.is_empty(),
        if stable.is_empty() {
            format!("{} presets", PRESETS.len())
        } else {
            format!("differs: {stable:?}")
        },
    ));

    let mut unexpected = 0;
    for r in &results {
        let known = KNOWN_FAILURES.contains(&r.id);
        let verdict = match (r.passed, known) {
            (true, false) => "PASS",
            (true, true) => "PASS (listed as known failure)",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {:<3} {verdict}: {} [{}]", r.id, r.title, r.detail);
    }
    println!(
        "acceptance: {} of {} passed, {} unexpected failures, {:.1}s",
        results.iter().filter(|r| r.passed).count(),
        results.len(),
        unexpected,
        start.elapsed().as_secs_f64()
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}
