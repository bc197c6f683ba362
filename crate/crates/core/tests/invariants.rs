use proptest::prelude::*;

use xpass_core::config::{Config, ScenarioKind};
use xpass_core::experiments::{self, DumbbellParams, GBPS};
use xpass_core::metrics::jain_index;
use xpass_core::net::{route_flow, FlowTuple};
use xpass_core::presets::{self, Scale};
use xpass_core::runner;
use xpass_core::sim::SimTime;
use xpass_core::topology::{fat_tree, FatTreeSpec};
use xpass_core::world::{Protocol, SimConfig};
use xpass_core::xpass::FeedbackState;

fn short(mut c: Config) -> Config {
    c.run.duration = SimTime::from_millis(2);
    c.run.warmup = SimTime::from_micros(500);
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn mixing_with_capacity_narrows_the_ratio(c in 2u64..1 << 40, b in 0.0f64..1.0, a in 0.0f64..1.0) {
        let rb = 2 + ((c - 2) as f64 * b) as u64;
        let ra = 1 + ((rb - 1) as f64 * a) as u64;
        let ra = ra.min(rb - 1);
        let (ra, rb, c) = (ra as u128, rb as u128, c as u128);
        prop_assert!((ra + c) * rb > ra * (rb + c));
        prop_assert!(ra + c < rb + c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn increases_halve_the_gap_to_max(init in 1.0f64..1e6, max in 1e6f64..1e7, k in 1usize..30) {
        let mut fb = FeedbackState::new(init, max);
        for _ in 0..k {
            fb.feedback_update(false, 0.0, 0.0);
        }
        let expect = max - (max - init) / 2f64.powi(k as i32);
        prop_assert!((fb.cur_rate() - expect).abs() <= 1e-9 * max);
    }

    #[test]
    fn jain_is_between_one_over_n_and_one(xs in proptest::collection::vec(0.0f64..1e10, 1..64)) {
        prop_assume!(xs.iter().any(|&x| x > 0.0));
        let j = jain_index(&xs).unwrap();
        let n = xs.len() as f64;
        prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
    }

    #[test]
    fn fat_tree_routes_are_symmetric(src in 0usize..16, dst in 0usize..16, sport: u16, dport: u16) {
        prop_assume!(src != dst);
        let topo = fat_tree(&FatTreeSpec::new(4, 8, 8, 16, 10 * GBPS)).unwrap();
        let hosts = topo.hosts();
        let t = FlowTuple { src: hosts[src], dst: hosts[dst], sport, dport };
        let r = route_flow(&topo, &t).unwrap();
        prop_assert!(r.is_symmetric());
        prop_assert_eq!(route_flow(&topo, &t).unwrap(), r);
    }
}

#[test]
fn fat_tree_self_test_passes_at_both_sizes() {
    for spec in [FatTreeSpec::new(4, 8, 8, 16, 10 * GBPS), FatTreeSpec::new(8, 16, 32, 192, 10 * GBPS)] {
        fat_tree(&spec).unwrap().self_test(500, 7).unwrap();
    }
}

#[test]
fn every_preset_is_deterministic_when_shortened() {
    for name in presets::names() {
        let c = short(presets::preset(name, Scale::Desk).unwrap());
        let (a, b) = (runner::execute(&c).unwrap(), runner::execute(&c).unwrap());
        assert_eq!(a.flows_csv(), b.flows_csv(), "{name}");
        assert_eq!(a.ports_csv(), b.ports_csv(), "{name}");
        assert_eq!(a.rates_csv(), b.rates_csv(), "{name}");
    }
}

#[test]
fn seeds_change_jittered_runs() {
    let mut c = short(presets::preset("fig4-creditq", Scale::Desk).unwrap());
    let a = runner::execute(&c).unwrap();
    c.seed += 1;
    let b = runner::execute(&c).unwrap();
    assert_ne!(a.rates_csv(), b.rates_csv());
}

#[test]
fn credit_pacing_never_drops_data_on_short_presets() {
    for name in presets::names() {
        let r = runner::execute(&short(presets::preset(name, Scale::Desk).unwrap())).unwrap();
        assert_eq!(r.run.data_drops(), 0, "{name}");
        assert!(r.violations.iter().all(|v| !v.contains("data queue reached")), "{name}: {:?}", r.violations);
    }
}

#[test]
fn dctcp_fills_the_link_and_keeps_a_queue() {
    let base = SimConfig { protocol: Protocol::Dctcp, ..SimConfig::default() };
    let p = DumbbellParams { flows: 4, ..DumbbellParams::default() };
    let o = experiments::dumbbell(&p, &base).unwrap();
    assert!(o.utilization > 0.95, "{}", o.utilization);
    assert!(o.avg_queue_bytes > 0.0);
    assert_eq!(o.credit_share, 0.0);
}

#[test]
fn shuffle_finishes_every_flow() {
    let mut c = presets::preset("fig8-shuffle", Scale::Desk).unwrap();
    c.shuffle.bytes = 100_000;
    assert_eq!(c.scenario, ScenarioKind::Shuffle);
    for proto in [Protocol::ExpressPass, Protocol::Dctcp] {
        c.protocol = proto;
        let r = runner::execute(&c).unwrap();
        assert_eq!(r.get("unfinished"), Some(0.0), "{proto:?}");
        assert_eq!(r.get("completed"), Some(224.0), "{proto:?}");
    }
}
