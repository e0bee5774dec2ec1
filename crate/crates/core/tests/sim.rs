use proptest::prelude::*;
use tiersim::model::{PageId, PageType};
use tiersim::policy::{Interleave, PolicyKind, PolicySpec};
use tiersim::sim::{run, steady_state_utilization, SimConfig, SimError, SimReport};
use tiersim::trace::{Op, TraceEvent};
use tiersim::workload::{generate, WorkloadKind, WorkloadSpec};

fn allocs(n: u64) -> Vec<TraceEvent> {
    (0..n)
        .map(|i| TraceEvent::new(i * 10, Op::Alloc(PageId(i), PageType::Anon)))
        .collect()
}

/// Rate-limited throughput over the summed bandwidth: the busiest node
/// caps the total access rate.
fn utilization_oracle(shares: &[f64], bws: &[f64]) -> f64 {
    let rate = shares
        .iter()
        .zip(bws)
        .filter(|(s, _)| **s > 0.0)
        .map(|(s, b)| b / s)
        .fold(f64::INFINITY, f64::min);
    rate / bws.iter().sum::<f64>()
}

proptest! {
    #[test]
    fn interleave_places_exact_counts(n in 1u32..6, k in 0u32..6, rounds in 1u64..200) {
        let mut policy = PolicySpec::new(PolicyKind::DefaultLinux);
        policy.interleave = Some(Interleave::new(n, k).unwrap());
        let total = rounds * u64::from(n + k);
        let r = run(allocs(total), SimConfig::two_tier(total + 10, total + 10, policy)).unwrap();
        prop_assert_eq!(r.counters.pgalloc_local, rounds * u64::from(n));
        prop_assert_eq!(r.counters.pgalloc_cxl, rounds * u64::from(k));
    }

    #[test]
    fn steady_state_matches_oracle(a in 1u32..10, b in 0u32..10, bw0 in 0.5f64..10.0, bw1 in 0.5f64..10.0) {
        let total = f64::from(a + b);
        let shares = [f64::from(a) / total, f64::from(b) / total];
        let got = steady_state_utilization(&shares, &[bw0, bw1]).unwrap();
        let want = utilization_oracle(&shares, &[bw0, bw1]);
        prop_assert!((got - want).abs() < 1e-12, "{} vs {}", got, want);
    }
}

#[test]
fn degenerate_shares_are_rejected() {
    for (shares, bws) in [
        (vec![0.5, 0.4], vec![1.0, 1.0]),
        (vec![1.0], vec![1.0, 1.0]),
        (vec![1.0, 0.0], vec![0.0, 1.0]),
        (vec![1.5, -0.5], vec![1.0, 1.0]),
    ] {
        assert!(matches!(steady_state_utilization(&shares, &bws), Err(SimError::DegenerateShare(_))));
    }
}

#[test]
fn simulated_utilization_tracks_oracle() {
    let mut w = WorkloadSpec::new(WorkloadKind::UniformBandwidth, 4_000, 2);
    w.duration_ns = 20_000_000;
    w.ops_rate = 10.0;
    for (n, k) in [(1, 1), (2, 1), (3, 1), (1, 2), (1, 0)] {
        let mut policy = PolicySpec::new(PolicyKind::DefaultLinux);
        policy.interleave = Some(Interleave::new(n, k).unwrap());
        let mut cfg = SimConfig::two_tier(10_000, 10_000, policy);
        cfg.nodes[0].bandwidth = 2.5;
        cfg.nodes[1].bandwidth = 1.0;
        let r = run(generate(&w).unwrap(), cfg).unwrap();
        let t = f64::from(n + k);
        let want = utilization_oracle(&[f64::from(n) / t, f64::from(k) / t], &[2.5, 1.0]);
        let got = r.totals.bandwidth_utilization;
        assert!((got - want).abs() <= 0.05, "{n}:{k}: {got} vs {want}");
    }
}

#[test]
fn runs_are_deterministic_for_every_policy() {
    let mut w = WorkloadSpec::new(WorkloadKind::CacheLike, 6_000, 9);
    w.duration_ns = 30_000_000;
    w.churn_rate = 20_000.0;
    for kind in PolicyKind::ALL {
        let cfg = SimConfig::two_tier(2_000, 4_500, PolicySpec::new(kind));
        let a = run(generate(&w).unwrap(), cfg.clone()).unwrap();
        let b = run(generate(&w).unwrap(), cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json(), "{kind:?}");
        assert_eq!(SimReport::from_json(&a.to_json()).unwrap(), a);
        a.counters.check_promotion_chain().unwrap();
        assert_eq!(a.note.is_some(), kind == PolicyKind::AutoTieringLike);
    }
}

#[test]
fn default_linux_never_migrates() {
    let mut w = WorkloadSpec::new(WorkloadKind::WebLike, 6_000, 4);
    w.duration_ns = 30_000_000;
    let r = run(generate(&w).unwrap(), SimConfig::two_tier(2_000, 2_000, PolicySpec::new(PolicyKind::DefaultLinux))).unwrap();
    assert_eq!(r.counters.promotions() + r.counters.demotions() + r.counters.numa_hint_faults, 0);
    assert!(r.counters.pgswapout > 0);
}

#[test]
fn tpp_demotes_instead_of_swapping() {
    let mut w = WorkloadSpec::new(WorkloadKind::WebLike, 6_000, 4);
    w.duration_ns = 30_000_000;
    let r = run(generate(&w).unwrap(), SimConfig::two_tier(2_000, 5_000, PolicySpec::new(PolicyKind::Tpp))).unwrap();
    assert!(r.counters.demotions() > 0);
    assert_eq!(r.counters.pgswapout, 0);
}

#[test]
fn bounded_swap_runs_out_of_memory() {
    let mut cfg = SimConfig::two_tier(20, 20, PolicySpec::new(PolicyKind::Tpp));
    cfg.unbounded_swap = false;
    assert!(matches!(run(allocs(41), cfg), Err(SimError::OutOfMemory(PageId(40)))));
}
