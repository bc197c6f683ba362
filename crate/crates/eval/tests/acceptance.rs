//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! lines show up in `cargo test` output; exits non-zero if any check fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xpass_core::config::Config;
use xpass_core::experiments::*;
use xpass_core::presets::{self, Scale};
use xpass_core::runner::{self, Report};
use xpass_core::sim::SimTime;
use xpass_core::world::{Protocol, SimConfig};
use xpass_core::xpass::{max_credit_rate, FeedbackState, XpassConfig};

struct Check {
    id: u32,
    pass: bool,
    detail: String,
}

fn check(id: u32, pass: bool, detail: impl Into<String>) -> Check {
    Check { id, pass, detail: detail.into() }
}

fn cfg(p: Protocol) -> SimConfig {
    SimConfig { protocol: p, ..SimConfig::default() }
}

fn ms(v: u64) -> SimTime {
    SimTime::from_millis(v)
}

fn g(bps: f64) -> String {
    format!("{:.4}G", bps / 1e9)
}

/// Desk-scale run of every preset, shared by the loss, bound and determinism checks.
fn preset_runs() -> &'static Vec<(&'static str, Report)> {
    static RUNS: OnceLock<Vec<(&'static str, Report)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        std::thread::scope(|s| {
            let hs: Vec<_> = presets::names()
                .into_iter()
                .map(|n| s.spawn(move || (n, runner::execute(&presets::preset(n, Scale::Desk).unwrap()).unwrap())))
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        })
    })
}

fn c1_zero_loss() -> Check {
    let mut bad = Vec::new();
    for (name, r) in preset_runs() {
        assert!(r.config.protocol.is_credit_based(), "{name}");
        let d = r.run.data_drops();
        if d != 0 {
            bad.push(format!("{name}={d}"));
        }
    }
    let n = preset_runs().len();
    check(1, bad.is_empty(), format!("data drops over {n} presets: {}", if bad.is_empty() { "0".into() } else { bad.join(" ") }))
}

fn c2_credit_share() -> Check {
    let o = dumbbell(&DumbbellParams::default(), &cfg(Protocol::ExpressPass)).unwrap();
    let gp_ok = (o.goodput_bps / 9.482e9 - 1.0).abs() <= 0.005;
    let share_ok = o.credit_share <= 0.0518 + 0.005;
    check(2, gp_ok && share_ok, format!("goodput {} (9.482G +-0.5%), credit share {:.4} (<= 0.0568)", g(o.goodput_bps), o.credit_share))
}

fn c3_ramp_up() -> Check {
    let x = XpassConfig::default();
    let max = max_credit_rate(10 * GBPS);
    let mut fb = FeedbackState::new(max * x.initial_rate_fraction, max);
    let mut exact = None;
    for k in 1..=20 {
        if fb.feedback_update(false, 0.0, 0.0) >= 0.9 * max {
            exact = Some(k);
            break;
        }
    }
    let p = DumbbellParams { duration: ms(3), warmup: SimTime::ZERO, ..DumbbellParams::default() };
    let o = dumbbell(&p, &cfg(Protocol::ExpressPass)).unwrap();
    let ups = &o.run.flows[0].updates;
    let sim = ups.iter().position(|u| u.cur_rate >= 0.9 * max).map(|i| i + 1);
    let exact_ok = exact.is_some_and(|k| k <= 4);
    let sim_ok = match (exact, sim) {
        (Some(e), Some(s)) => s.abs_diff(e) <= 1,
        _ => false,
    };
    check(3, exact_ok && sim_ok, format!("recurrence reaches 90% at update {exact:?} (<= 4), simulation at {sim:?} (+-1)"))
}

fn conv(proto: Protocol, gbps: u64, after: SimTime, smooth: usize) -> ConvergenceOutcome {
    let p = ConvergenceParams { rate_bps: gbps * GBPS, after, smooth, ..ConvergenceParams::default() };
    convergence(&p, &cfg(proto)).unwrap()
}

fn rtts(o: &ConvergenceOutcome) -> Option<f64> {
    o.in_rtts(ConvergenceParams::default().rtt)
}

fn c4_convergence() -> Check {
    let a = conv(Protocol::ExpressPass, 10, ms(3), 1);
    let b = conv(Protocol::ExpressPass, 100, ms(3), 1);
    let ok = |o: &ConvergenceOutcome| rtts(o).is_some_and(|r| r <= 5.0);
    check(
        4,
        ok(&a) && ok(&b),
        format!(
            "RTTs to within 10% of fair: 10G {:?}, 100G {:?} (<= 5); settled 10G {:?}, 100G {:?}",
            rtts(&a),
            rtts(&b),
            a.settled,
            b.settled
        ),
    )
}

fn c5_dctcp_contrast() -> Check {
    let xp = conv(Protocol::ExpressPass, 10, ms(3), 1);
    let d10 = conv(Protocol::Dctcp, 10, ms(60), 10);
    let d20 = conv(Protocol::Dctcp, 20, ms(100), 10);
    let secs = |o: &ConvergenceOutcome| o.convergence.map(|t| t.as_secs_f64());
    let (Some(x), Some(t10), Some(t20)) = (secs(&xp), secs(&d10), secs(&d20)) else {
        return check(5, false, format!("no convergence: xpass {:?} dctcp10 {:?} dctcp20 {:?}", xp.convergence, d10.convergence, d20.convergence));
    };
    let ratio = t10 / x;
    let scale = t20 / t10;
    check(
        5,
        ratio >= 20.0 && (1.4..=2.6).contains(&scale),
        format!("dctcp/xpass at 10G {ratio:.2} (>= 20); dctcp 20G/10G {scale:.3} (2 +-30%); dctcp {t10:.6}s, {t20:.6}s"),
    )
}

fn pl(proto: Protocol, n: usize) -> f64 {
    parking_lot(&ParkingLotParams { bottlenecks: n, ..ParkingLotParams::default() }, &cfg(proto)).unwrap().min_util
}

fn c6_parking_lot() -> Check {
    let (n2, n6) = (pl(Protocol::ExpressPassNaive, 2), pl(Protocol::ExpressPassNaive, 6));
    let (f2, f6) = (pl(Protocol::ExpressPass, 2), pl(Protocol::ExpressPass, 6));
    let naive_ok = (n2 - 0.833).abs() <= 0.02 && (n6 - 0.60).abs() <= 0.03;
    let fb_ok = f2 >= 0.95 && f6 >= 0.90;
    check(
        6,
        naive_ok && fb_ok,
        format!("naive N=2 {n2:.4} (0.833 +-0.02), N=6 {n6:.4} (0.60 +-0.03); feedback N=2 {f2:.4} (>= 0.95), N=6 {f6:.4} (>= 0.90)"),
    )
}

fn mb(proto: Protocol, left: usize) -> MultiBottleneckOutcome {
    multi_bottleneck(&MultiBottleneckParams { left_flows: left, ..MultiBottleneckParams::default() }, &cfg(proto)).unwrap()
}

fn c7_multi_bottleneck() -> Check {
    let naive = mb(Protocol::ExpressPassNaive, 2);
    let naive_ok = (naive.ratio / 2.0 - 1.0).abs() <= 0.10;
    let mut errs = Vec::new();
    for left in 1..=3 {
        let o = mb(Protocol::ExpressPass, left);
        errs.push((left + 1, o.flow0_bps / o.fair_bps - 1.0));
    }
    let fb_ok = errs.iter().all(|(_, e)| e.abs() <= 0.15);
    let errs: Vec<String> = errs.iter().map(|(n, e)| format!("N={n} {:+.1}%", e * 100.0)).collect();
    check(
        7,
        naive_ok && fb_ok,
        format!("naive cross/competing {:.3} (2.0 +-10%); feedback error vs max-min {} (+-15%)", naive.ratio, errs.join(", ")),
    )
}

fn jain64(jitter: f64, seed: u64) -> f64 {
    let mut c = cfg(Protocol::ExpressPass);
    c.xpass.jitter = jitter;
    c.seed = seed;
    c.sample_period = ms(1);
    dumbbell(&DumbbellParams { flows: 64, ..DumbbellParams::default() }, &c).unwrap().interval_jain
}

fn c8_jitter() -> Check {
    let seeds = [1u64, 2, 3];
    let with: Vec<f64> = seeds.iter().map(|&s| jain64(0.01, s)).collect();
    let without: Vec<f64> = seeds.iter().map(|&s| jain64(0.0, s)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ok = with.iter().all(|&j| j >= 0.95) && mean(&without) < mean(&with);
    let f = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    check(8, ok, format!("1 ms Jain, 64 flows, seeds 1-3: j=0.01 [{}] (>= 0.95), j=0 [{}] (lower)", f(&with), f(&without)))
}

fn c9_credit_queue() -> Check {
    let sizes = [1usize, 2, 4, 8, 16, 32, 64];
    let utils: Vec<f64> = sizes
        .iter()
        .map(|&q| {
            let mut c = cfg(Protocol::ExpressPass);
            c.credit_queue_pkts = q;
            dumbbell(&DumbbellParams { flows: 8, ..DumbbellParams::default() }, &c).unwrap().utilization
        })
        .collect();
    let at16 = utils[4];
    let monotone = utils[..5].windows(2).all(|w| w[1] >= w[0]);
    let plateau = utils[4..].iter().copied().fold(f64::MIN, f64::max);
    let ok = monotone && plateau - at16 <= 0.01 && at16 >= 0.96;
    let list: Vec<String> = sizes.iter().zip(&utils).map(|(q, u)| format!("{q}:{u:.5}")).collect();
    check(9, ok, format!("utilization by queue size {} (non-decreasing to 16, within 1pp of plateau, >= 0.96)", list.join(" ")))
}

fn c10_buffer_bound() -> Check {
    let mut worst = (String::new(), f64::MIN);
    let mut bad = Vec::new();
    for (name, r) in preset_runs() {
        let Some(bounds) = &r.run.bounds else {
            bad.push(format!("{name}: no bound computed"));
            continue;
        };
        for (p, b) in bounds.iter().enumerate() {
            let limit = b.bytes + xpass_core::net::MAX_DATA_WIRE as u64;
            let max = r.run.counters[p].max_data_bytes;
            if max > limit {
                bad.push(format!("{name} port {p}: {max} > {limit}"));
            }
            if limit > 0 && max as f64 / limit as f64 > worst.1 {
                worst = (format!("{name} port {p} {max}/{limit} B"), max as f64 / limit as f64);
            }
        }
    }
    check(10, bad.is_empty(), format!("max data queue vs bound + 1 frame: tightest {} ({:.3}); {}", worst.0, worst.1, if bad.is_empty() { "none over".into() } else { bad.join("; ") }))
}

fn c11_shuffle() -> Check {
    let xp = &preset_runs().iter().find(|(n, _)| *n == "fig8-shuffle").unwrap().1;
    let mut c = presets::preset("fig8-shuffle", Scale::Desk).unwrap();
    c.protocol = Protocol::Dctcp;
    let dc = runner::execute(&c).unwrap();
    let get = |r: &Report, k: &str| r.get(k).unwrap();
    let (xp99, xmax, dp99, dmax) = (get(xp, "fct_p99_s"), get(xp, "fct_max_s"), get(&dc, "fct_p99_s"), get(&dc, "fct_max_s"));
    let unfinished = get(xp, "unfinished") + get(&dc, "unfinished");
    check(
        11,
        xp99 <= dp99 && xmax <= dmax && unfinished == 0.0,
        format!(
            "H=8 t=2 1MB: p99 xpass {:.3} ms vs dctcp {:.3} ms, max {:.3} vs {:.3} ms, median {:.3} vs {:.3} ms",
            xp99 * 1e3,
            dp99 * 1e3,
            xmax * 1e3,
            dmax * 1e3,
            get(xp, "fct_median_s") * 1e3,
            get(&dc, "fct_median_s") * 1e3
        ),
    )
}

fn c12_many_flows() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [64usize, 128, 256] {
        let run = |proto| {
            let mut c = cfg(proto);
            c.sample_period = ms(1);
            dumbbell(&DumbbellParams { flows: n, ..DumbbellParams::default() }, &c).unwrap()
        };
        let (x, d) = (run(Protocol::ExpressPass), run(Protocol::Dctcp));
        ok &= x.interval_jain >= d.interval_jain && x.avg_queue_bytes < d.avg_queue_bytes;
        parts.push(format!(
            "n={n} jain {:.4}/{:.4} queue {:.0}/{:.0} B",
            x.interval_jain, d.interval_jain, x.avg_queue_bytes, d.avg_queue_bytes
        ));
    }
    check(12, ok, format!("xpass/dctcp {}", parts.join("; ")))
}

fn c13_app_limited() -> Check {
    let o = app_limited(&AppLimitedParams::default(), 0.2, &cfg(Protocol::ExpressPass)).unwrap();
    let rates: Vec<String> = o.cur_rate_bps.iter().take(5).map(|&r| g(r)).collect();
    check(
        13,
        o.first_within.is_some_and(|k| k <= 3),
        format!("offered {}, first update within 20%: {:?} (<= 3); rates {}", g(o.offered_bps), o.first_within, rates.join(" ")),
    )
}

fn c14_ratio_property() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut bad = 0u32;
    for _ in 0..100_000 {
        let c: u128 = rng.gen_range(2..=1u128 << 40);
        let rb = rng.gen_range(2..=c);
        let ra = rng.gen_range(1..rb);
        // (ra+c)/(rb+c) against ra/rb and 1, cross-multiplied in integers
        let above = (ra + c) * rb > ra * (rb + c);
        let below = ra + c < rb + c;
        if !(above && below) {
            bad += 1;
        }
    }
    check(14, bad == 0, format!("100000 integer triples, {bad} outside (ra/rb, 1)"))
}

fn c15_determinism() -> Check {
    let mut bad = Vec::new();
    for (name, first) in preset_runs() {
        let again = runner::execute(&presets::preset(name, Scale::Desk).unwrap()).unwrap();
        if first.flows_csv() != again.flows_csv() || first.ports_csv() != again.ports_csv() || first.rates_csv() != again.rates_csv() {
            bad.push(*name);
        }
        let reparsed = Config::from_toml(&first.config.to_toml()).unwrap();
        if reparsed.to_toml() != first.config.to_toml() {
            bad.push(*name);
        }
    }
    check(15, bad.is_empty(), format!("{} presets re-run with the same seed; differing: {:?}", preset_runs().len(), bad))
}

fn main() -> ExitCode {
    let checks: [fn() -> Check; 15] = [
        c1_zero_loss,
        c2_credit_share,
        c3_ramp_up,
        c4_convergence,
        c5_dctcp_contrast,
        c6_parking_lot,
        c7_multi_bottleneck,
        c8_jitter,
        c9_credit_queue,
        c10_buffer_bound,
        c11_shuffle,
        c12_many_flows,
        c13_app_limited,
        c14_ratio_property,
        c15_determinism,
    ];
    let t0 = std::time::Instant::now();
    preset_runs();
    let results: BTreeMap<u32, Check> = std::thread::scope(|s| {
        let hs: Vec<_> = checks.iter().map(|f| s.spawn(f)).collect();
        hs.into_iter().map(|h| h.join().expect("check panicked")).map(|c| (c.id, c)).collect()
    });
    let mut failed = 0;
    for c in results.values() {
        println!("criterion {:>2} {}: {}", c.id, if c.pass { "PASS" } else { "FAIL" }, c.detail);
        failed += usize::from(!c.pass);
    }
    println!("{} of {} criteria pass ({:.0?})", results.len() - failed, results.len(), t0.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
