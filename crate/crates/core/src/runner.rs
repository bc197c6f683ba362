//! Turns a [`Config`] into one run of its scenario and a flat summary.

use crate::config::{Config, ScenarioKind};
use crate::error::Result;
use crate::experiments::{self as ex, FctOutcome};
use crate::topology::FatTreeSpec;
use crate::world::RunResult;

/// One summary column. `None` is written as an empty field.
pub type Metric = (String, Option<f64>);

#[derive(Debug, Clone)]
pub struct Report {
    pub config: Config,
    pub summary: Vec<Metric>,
    pub run: RunResult,
    /// Bound, symmetry and completion violations, and data loss under credit pacing.
    pub violations: Vec<String>,
}

impl Report {
    pub fn flows_csv(&self) -> String {
        self.run.flows_csv()
    }
    pub fn ports_csv(&self) -> String {
        self.run.ports_csv()
    }
    pub fn rates_csv(&self) -> String {
        self.run.rates_csv()
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).and_then(|(_, v)| *v)
    }
}

struct Summary(Vec<Metric>);

impl Summary {
    fn put(&mut self, key: impl Into<String>, v: f64) {
        self.0.push((key.into(), Some(v)));
    }
    fn opt(&mut self, key: impl Into<String>, v: Option<f64>) {
        self.0.push((key.into(), v));
    }
    fn fct(&mut self, o: &FctOutcome) {
        let f = o.fct.as_ref();
        self.put("completed", f.map_or(0, |f| f.n) as f64);
        self.put("unfinished", o.unfinished as f64);
        for (key, v) in [
            ("fct_mean_s", f.map(|f| f.mean)),
            ("fct_median_s", f.map(|f| f.median)),
            ("fct_p99_s", f.map(|f| f.p99)),
            ("fct_max_s", f.map(|f| f.max)),
            ("fct_min_s", f.map(|f| f.min)),
        ] {
            self.opt(key, v);
        }
        self.put("avg_queue_bytes", o.avg_queue_bytes);
        self.put("max_queue_bytes", o.max_queue_bytes as f64);
        let wasted: u64 = o.run.flows.iter().map(|f| f.wasted_credits).sum();
        self.put("wasted_credits", wasted as f64);
    }
}

pub fn execute(cfg: &Config) -> Result<Report> {
    cfg.validate()?;
    let base = cfg.sim_config();
    let (rate_bps, rtt) = (cfg.net.rate, cfg.net.rtt);
    let (duration, warmup) = (cfg.run.duration, cfg.run.warmup);
    let mut s = Summary(Vec::new());
    let run = match cfg.scenario {
        ScenarioKind::Dumbbell => {
            let p = ex::DumbbellParams { flows: cfg.dumbbell.flows, rate_bps, rtt, duration, warmup, stagger: cfg.dumbbell.stagger };
            let o = ex::dumbbell(&p, &base)?;
            s.put("flows", p.flows as f64);
            s.put("goodput_bps", o.goodput_bps);
            s.put("utilization", o.utilization);
            s.put("credit_share", o.credit_share);
            s.put("jain", o.jain);
            s.put("interval_jain", o.interval_jain);
            s.put("avg_queue_bytes", o.avg_queue_bytes);
            s.put("max_queue_bytes", o.max_queue_bytes as f64);
            o.run
        }
        ScenarioKind::ParkingLot => {
            let p = ex::ParkingLotParams { bottlenecks: cfg.parking_lot.bottlenecks, rate_bps, rtt, duration, warmup };
            let o = ex::parking_lot(&p, &base)?;
            s.put("bottlenecks", p.bottlenecks as f64);
            s.put("min_util", o.min_util);
            for (i, u) in o.link_utils.iter().enumerate() {
                s.put(format!("link{}_util", i + 1), *u);
            }
            o.run
        }
        ScenarioKind::MultiBottleneck => {
            let p = ex::MultiBottleneckParams { left_flows: cfg.multi_bottleneck.left_flows, rate_bps, rtt, duration, warmup };
            let o = ex::multi_bottleneck(&p, &base)?;
            s.put("flows", (p.left_flows + 1) as f64);
            s.put("flow0_bps", o.flow0_bps);
            s.put("fair_bps", o.fair_bps);
            s.put("flow0_vs_fair", o.flow0_bps / o.fair_bps);
            s.put("flow0_vs_others", o.ratio);
            for (i, b) in o.others_bps.iter().enumerate() {
                s.put(format!("flow{}_bps", i + 1), *b);
            }
            o.run
        }
        ScenarioKind::Convergence => {
            let c = &cfg.convergence;
            let p = ex::ConvergenceParams {
                rate_bps,
                rtt,
                join: c.join,
                after: duration.saturating_sub(c.join),
                sample: cfg.run.sample,
                smooth: c.smooth,
                tolerance: c.tolerance,
            };
            let o = ex::convergence(&p, &base)?;
            s.put("fair_bps", o.fair_bps);
            s.opt("convergence_s", o.convergence.map(|t| t.as_secs_f64()));
            s.opt("convergence_rtts", o.in_rtts(rtt));
            s.opt("settled_s", o.settled.map(|t| t.as_secs_f64()));
            o.run
        }
        ScenarioKind::JoinLeave => {
            let p = ex::JoinLeaveParams { flows: cfg.join_leave.flows, rate_bps, rtt, step: cfg.join_leave.step, sample: cfg.run.sample };
            let o = ex::join_leave(&p, &base)?;
            for (k, j) in o.jain_by_count.iter().enumerate() {
                s.put(format!("jain_{}_flows", k + 1), *j);
            }
            o.run
        }
        ScenarioKind::Shuffle => {
            let h = &cfg.shuffle;
            let p = ex::ShuffleParams { hosts: h.hosts, tasks: h.tasks, bytes: h.bytes, rate_bps, link_delay: h.link_delay, horizon: duration };
            let o = ex::shuffle(&p, &base)?;
            s.fct(&o);
            o.run
        }
        ScenarioKind::Macro => {
            let m = &cfg.macro_;
            let fat_tree = FatTreeSpec {
                cores: m.cores,
                aggs: m.aggs,
                tors: m.tors,
                hosts: m.hosts,
                rate_bps,
                link_delay: m.link_delay,
                host_delay: m.host_delay,
            };
            let p = ex::MacroParams { fat_tree, cdf: m.cdf.clone(), load: m.load, arrivals: m.arrivals, horizon: duration, max_flows: m.max_flows };
            let o = ex::macro_workload(&p, &base)?;
            s.put("flows", o.run.flows.len() as f64);
            s.fct(&o);
            o.run
        }
        ScenarioKind::AppLimited => {
            let a = &cfg.app_limited;
            let p = ex::AppLimitedParams { rate_bps, rtt, fraction: a.fraction, duration };
            let o = ex::app_limited(&p, a.tolerance, &base)?;
            s.put("offered_bps", o.offered_bps);
            s.opt("first_update_within", o.first_within.map(|i| i as f64));
            for (i, r) in o.cur_rate_bps.iter().take(10).enumerate() {
                s.put(format!("update{}_bps", i + 1), *r);
            }
            o.run
        }
    };
    let credit_drops: u64 = run.counters.iter().map(|c| c.credits_dropped).sum();
    s.put("data_drops", run.data_drops() as f64);
    s.put("credit_drops", credit_drops as f64);
    s.put("events", run.sched.dispatched as f64);
    s.put("end_s", run.end.as_secs_f64());
    let violations = run.violations.clone();
    s.put("violations", violations.len() as f64);
    Ok(Report { config: cfg.clone(), summary: s.0, run, violations })
}

/// CSV of summaries behind the given leading columns. Columns are the union of
/// summary keys in first-seen order; a missing key is an empty field.
pub fn summary_csv(lead: &[&str], rows: &[(Vec<String>, &Report)]) -> String {
    let mut keys: Vec<&str> = Vec::new();
    for (_, r) in rows {
        for (k, _) in &r.summary {
            if !keys.contains(&k.as_str()) {
                keys.push(k);
            }
        }
    }
    let mut out = String::new();
    out.push_str(&lead.iter().copied().chain(keys.iter().copied()).collect::<Vec<_>>().join(","));
    out.push('\n');
    for (vals, r) in rows {
        let mut fields: Vec<String> = vals.clone();
        for k in &keys {
            fields.push(match r.summary.iter().find(|(kk, _)| kk == k) {
                Some((_, Some(v))) => format!("{v}"),
                _ => String::new(),
            });
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
