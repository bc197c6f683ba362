//! Scenario builders. Each takes its own parameters plus a base `SimConfig`
//! (protocol, queue sizes, protocol constants) and returns the run together
//! with the numbers its figure is made of.

use crate::error::{Error, Result};
use crate::metrics::{self, FctStats, DATA_WIRE_SHARE};
use crate::net::{reverse_port, PortId, MTU_PAYLOAD};
use crate::sim::{RngStream, SimTime};
use crate::topology::{self, FatTreeSpec, Topology};
use crate::workload::{self, FlowSizeCdf, FlowSpec};
use crate::world::{self, PortSampling, Protocol, RunResult, SimConfig};

pub const GBPS: u64 = 1_000_000_000;

/// Size that never finishes within any horizon we run.
const BACKLOGGED: u64 = 1 << 50;

/// Highest data wire rate credit pacing admits on a link of `rate_bps`.
pub fn xpass_data_ceiling(rate_bps: u64) -> f64 {
    rate_bps as f64 * DATA_WIRE_SHARE
}

/// Data wire rate a flow can reach alone under `protocol`.
pub fn data_ceiling(protocol: Protocol, rate_bps: u64) -> f64 {
    if protocol.is_credit_based() {
        xpass_data_ceiling(rate_bps)
    } else {
        rate_bps as f64
    }
}

fn measured(res: &RunResult) -> SimTime {
    res.end.saturating_sub(res.measure_from)
}

/// Utilization of `port` over the measurement window (1.0 = every credit slot used).
pub fn window_util(res: &RunResult, topo: &Topology, port: PortId) -> f64 {
    let p = port as usize;
    let bytes = res.counters[p].data_frame_bytes_sent - res.counters_at_start[p].data_frame_bytes_sent;
    metrics::utilization(bytes, topo.port_rate(port), measured(res))
}

/// Mean data wire rate of one flow over the measurement window.
pub fn window_rate(res: &RunResult, flow: usize) -> f64 {
    let w = measured(res).as_secs_f64();
    if w <= 0.0 {
        return 0.0;
    }
    res.flows[flow].window_wire as f64 * 8.0 / w
}

/// Credit bytes over all bytes on both directions of the link behind `port`.
pub fn credit_share(res: &RunResult, port: PortId) -> f64 {
    let (mut credit, mut total) = (0u64, 0u64);
    for p in [port, reverse_port(port)] {
        let (c, s) = (&res.counters[p as usize], &res.counters_at_start[p as usize]);
        let cb = c.credit_bytes_sent - s.credit_bytes_sent;
        credit += cb;
        total += cb + c.data_queue_bytes_sent - s.data_queue_bytes_sent;
    }
    if total == 0 {
        0.0
    } else {
        credit as f64 / total as f64
    }
}

/// Mean Jain index over rate-sample intervals ending after `from`. Flows with no
/// sample in an interval count as zero; intervals with no traffic are skipped.
pub fn interval_jain(res: &RunResult, flows: &[u32], from: SimTime, until: SimTime) -> Result<f64> {
    let (times, m) = res.rate_matrix(flows);
    let mut acc = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        if t <= from || t > until {
            continue;
        }
        let col: Vec<f64> = m.iter().map(|row| row[i]).collect();
        if col.iter().any(|&x| x > 0.0) {
            acc.push(metrics::jain_index(&col)?);
        }
    }
    if acc.is_empty() {
        return Err(Error::Metrics("no rate samples in the fairness window".into()));
    }
    Ok(acc.iter().sum::<f64>() / acc.len() as f64)
}

/// Average and maximum data-queue bytes over `ports`, from samples after `from`
/// and from the per-port high-water marks.
pub fn queue_stats(res: &RunResult, ports: &[PortId], from: SimTime) -> (f64, u64) {
    let samples: Vec<u64> = res
        .ports
        .iter()
        .filter(|s| s.time > from && ports.contains(&s.port))
        .map(|s| s.data_bytes)
        .collect();
    let avg = if samples.is_empty() { 0.0 } else { samples.iter().sum::<u64>() as f64 / samples.len() as f64 };
    let max = ports.iter().map(|&p| res.counters[p as usize].max_data_bytes).max().unwrap_or(0);
    (avg, max)
}

fn backlogged(id: usize, topo: &Topology, src: &str, dst: &str, start: SimTime) -> Result<FlowSpec> {
    let host = |n: &str| topo.host(n).ok_or_else(|| Error::config(format!("no host `{n}`")));
    Ok(FlowSpec::new(id as u32, host(src)?, host(dst)?, BACKLOGGED, start))
}

fn windowed(base: &SimConfig, duration: SimTime, warmup: SimTime) -> SimConfig {
    SimConfig { duration, measure_from: warmup, stop_when_done: false, ..base.clone() }
}

#[derive(Debug, Clone)]
pub struct DumbbellParams {
    pub flows: usize,
    pub rate_bps: u64,
    pub rtt: SimTime,
    pub duration: SimTime,
    pub warmup: SimTime,
    /// Start of flow `i` is `i * stagger`.
    pub stagger: SimTime,
}

impl Default for DumbbellParams {
    fn default() -> Self {
        DumbbellParams {
            flows: 1,
            rate_bps: 10 * GBPS,
            rtt: SimTime::from_micros(100),
            duration: SimTime::from_millis(10),
            warmup: SimTime::from_millis(2),
            stagger: SimTime::ZERO,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DumbbellOutcome {
    /// Sum of flow data wire rates over the window.
    pub goodput_bps: f64,
    pub utilization: f64,
    pub credit_share: f64,
    pub per_flow_bps: Vec<f64>,
    /// Jain index of per-flow window averages.
    pub jain: f64,
    /// Mean Jain index over sample intervals.
    pub interval_jain: f64,
    pub avg_queue_bytes: f64,
    pub max_queue_bytes: u64,
    pub topo: Topology,
    pub run: RunResult,
}

/// Backlogged flows `s{i} -> r{i}` sharing the dumbbell bottleneck.
pub fn dumbbell(p: &DumbbellParams, base: &SimConfig) -> Result<DumbbellOutcome> {
    let topo = topology::dumbbell(p.flows, p.rate_bps, p.rtt)?;
    let flows = (0..p.flows)
        .map(|i| backlogged(i, &topo, &format!("s{i}"), &format!("r{i}"), SimTime(p.stagger.0 * i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let run = world::run(topo.clone(), flows, windowed(base, p.duration, p.warmup))?;
    let bn = topo.labels["bottleneck"];
    let per_flow_bps: Vec<f64> = (0..p.flows).map(|i| window_rate(&run, i)).collect();
    let ids: Vec<u32> = (0..p.flows as u32).collect();
    let (avg_queue_bytes, max_queue_bytes) = queue_stats(&run, &[bn], p.warmup);
    Ok(DumbbellOutcome {
        goodput_bps: per_flow_bps.iter().sum(),
        utilization: window_util(&run, &topo, bn),
        credit_share: credit_share(&run, bn),
        jain: metrics::jain_index(&per_flow_bps)?,
        interval_jain: interval_jain(&run, &ids, p.warmup, run.end)?,
        per_flow_bps,
        avg_queue_bytes,
        max_queue_bytes,
        topo,
        run,
    })
}

#[derive(Debug, Clone)]
pub struct ParkingLotParams {
    pub bottlenecks: usize,
    pub rate_bps: u64,
    pub rtt: SimTime,
    pub duration: SimTime,
    pub warmup: SimTime,
}

impl Default for ParkingLotParams {
    fn default() -> Self {
        ParkingLotParams {
            bottlenecks: 2,
            rate_bps: 10 * GBPS,
            rtt: SimTime::from_micros(100),
            duration: SimTime::from_millis(10),
            warmup: SimTime::from_millis(2),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParkingLotOutcome {
    pub link_utils: Vec<f64>,
    pub min_util: f64,
    /// Long flow first, then cross flow `i` at index `i`.
    pub flow_bps: Vec<f64>,
    pub topo: Topology,
    pub run: RunResult,
}

/// One long flow across every link plus one cross flow per link.
pub fn parking_lot(p: &ParkingLotParams, base: &SimConfig) -> Result<ParkingLotOutcome> {
    let n = p.bottlenecks;
    let topo = topology::parking_lot(n, p.rate_bps, p.rtt)?;
    let mut flows = vec![backlogged(0, &topo, "long_src", "long_dst", SimTime::ZERO)?];
    for i in 1..=n {
        flows.push(backlogged(i, &topo, &format!("x{i}_src"), &format!("x{i}_dst"), SimTime::ZERO)?);
    }
    let run = world::run(topo.clone(), flows, windowed(base, p.duration, p.warmup))?;
    let link_utils: Vec<f64> = (1..=n).map(|i| window_util(&run, &topo, topo.labels[&format!("link{i}")])).collect();
    Ok(ParkingLotOutcome {
        min_util: link_utils.iter().copied().fold(f64::INFINITY, f64::min),
        link_utils,
        flow_bps: (0..=n).map(|i| window_rate(&run, i)).collect(),
        topo,
        run,
    })
}

#[derive(Debug, Clone)]
pub struct MultiBottleneckParams {
    /// Flows crossing both links; flow 0 crosses only Link 2.
    pub left_flows: usize,
    pub rate_bps: u64,
    pub rtt: SimTime,
    pub duration: SimTime,
    pub warmup: SimTime,
}

impl Default for MultiBottleneckParams {
    fn default() -> Self {
        MultiBottleneckParams {
            left_flows: 2,
            rate_bps: 10 * GBPS,
            rtt: SimTime::from_micros(100),
            duration: SimTime::from_millis(10),
            warmup: SimTime::from_millis(2),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultiBottleneckOutcome {
    pub flow0_bps: f64,
    pub others_bps: Vec<f64>,
    /// Max-min share of flow 0: the ceiling over all flows on Link 2.
    pub fair_bps: f64,
    /// Flow 0 over the mean of the others.
    pub ratio: f64,
    pub topo: Topology,
    pub run: RunResult,
}

pub fn multi_bottleneck(p: &MultiBottleneckParams, base: &SimConfig) -> Result<MultiBottleneckOutcome> {
    let n = p.left_flows;
    let topo = topology::multi_bottleneck(n, p.rate_bps, p.rtt)?;
    let flows = (0..=n)
        .map(|i| backlogged(i, &topo, &format!("f{i}_src"), &format!("f{i}_dst"), SimTime::ZERO))
        .collect::<Result<Vec<_>>>()?;
    let run = world::run(topo.clone(), flows, windowed(base, p.duration, p.warmup))?;
    let flow0_bps = window_rate(&run, 0);
    let others_bps: Vec<f64> = (1..=n).map(|i| window_rate(&run, i)).collect();
    let mean_other = others_bps.iter().sum::<f64>() / n as f64;
    Ok(MultiBottleneckOutcome {
        flow0_bps,
        fair_bps: data_ceiling(base.protocol, p.rate_bps) / (n + 1) as f64,
        ratio: if mean_other > 0.0 { flow0_bps / mean_other } else { f64::INFINITY },
        others_bps,
        topo,
        run,
    })
}

#[derive(Debug, Clone)]
pub struct ConvergenceParams {
    pub rate_bps: u64,
    pub rtt: SimTime,
    /// Second flow starts here.
    pub join: SimTime,
    /// Run length after the join.
    pub after: SimTime,
    /// Rate sampling interval.
    pub sample: SimTime,
    /// Trailing average over this many samples before testing convergence.
    pub smooth: usize,
    pub tolerance: f64,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        ConvergenceParams {
            rate_bps: 10 * GBPS,
            rtt: SimTime::from_micros(100),
            join: SimTime::from_millis(1),
            after: SimTime::from_millis(3),
            sample: SimTime::from_micros(100),
            smooth: 1,
            tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceOutcome {
    pub fair_bps: f64,
    /// Sample times from the join on.
    pub times: Vec<SimTime>,
    /// Smoothed rates of both flows on `times`.
    pub series: Vec<Vec<f64>>,
    /// From the join until both flows are first within tolerance.
    pub convergence: Option<SimTime>,
    /// From the join until both flows stay within tolerance to the end.
    pub settled: Option<SimTime>,
    pub topo: Topology,
    pub run: RunResult,
}

impl ConvergenceOutcome {
    pub fn in_rtts(&self, rtt: SimTime) -> Option<f64> {
        self.convergence.map(|t| t.as_secs_f64() / rtt.as_secs_f64())
    }
}

/// One flow saturates the dumbbell; a second joins at `join`.
pub fn convergence(p: &ConvergenceParams, base: &SimConfig) -> Result<ConvergenceOutcome> {
    let topo = topology::dumbbell(2, p.rate_bps, p.rtt)?;
    let flows = vec![
        backlogged(0, &topo, "s0", "r0", SimTime::ZERO)?,
        backlogged(1, &topo, "s1", "r1", p.join)?,
    ];
    let mut cfg = windowed(base, p.join + p.after, p.join);
    cfg.sample_period = p.sample;
    let run = world::run(topo.clone(), flows, cfg)?;
    let (times, m) = run.rate_matrix(&[0, 1]);
    let first = times.iter().position(|&t| t > p.join).unwrap_or(times.len());
    let series: Vec<Vec<f64>> = m.iter().map(|row| metrics::smooth(&row[first..], p.smooth)).collect();
    let times = times[first..].to_vec();
    let fair_bps = data_ceiling(base.protocol, p.rate_bps) / 2.0;
    let fair = [fair_bps, fair_bps];
    // a sample at t covers (t - sample, t], so each is credited to its start
    let since_join = |t: SimTime| t.saturating_sub(p.sample).saturating_sub(p.join);
    let convergence = metrics::first_within(&times, &series, &fair, p.tolerance).map(since_join);
    let settled = metrics::convergence_time(&times, &series, &fair, p.tolerance).map(since_join);
    Ok(ConvergenceOutcome { fair_bps, times, series, convergence, settled, topo, run })
}

#[derive(Debug, Clone)]
pub struct JoinLeaveParams {
    pub flows: usize,
    pub rate_bps: u64,
    pub rtt: SimTime,
    /// Time between consecutive joins and leaves.
    pub step: SimTime,
    pub sample: SimTime,
}

impl Default for JoinLeaveParams {
    fn default() -> Self {
        JoinLeaveParams {
            flows: 5,
            rate_bps: 10 * GBPS,
            rtt: SimTime::from_micros(100),
            step: SimTime::from_millis(1),
            sample: SimTime::from_micros(100),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JoinLeaveOutcome {
    /// Mean interval Jain index while `k + 1` flows are active, for the joining half.
    pub jain_by_count: Vec<f64>,
    pub topo: Topology,
    pub run: RunResult,
}

/// Flow `i` joins at `i * step`; flows leave last-in first-out, one per step,
/// after every flow has shared the link for two steps.
pub fn join_leave(p: &JoinLeaveParams, base: &SimConfig) -> Result<JoinLeaveOutcome> {
    let n = p.flows;
    if n == 0 {
        return Err(Error::config("join/leave needs at least one flow"));
    }
    let topo = topology::dumbbell(n, p.rate_bps, p.rtt)?;
    let end_steps = 2 * n as u64;
    let mut flows = Vec::with_capacity(n);
    for i in 0..n {
        let mut f = backlogged(i, &topo, &format!("s{i}"), &format!("r{i}"), SimTime(p.step.0 * i as u64))?;
        f.stop_at = Some(SimTime(p.step.0 * (end_steps - i as u64)));
        flows.push(f);
    }
    let mut cfg = base.clone();
    cfg.duration = SimTime(p.step.0 * end_steps);
    cfg.sample_period = p.sample;
    let run = world::run(topo.clone(), flows, cfg)?;
    let mut jain_by_count = Vec::with_capacity(n);
    for k in 0..n {
        let ids: Vec<u32> = (0..=k as u32).collect();
        // skip the first half of each step to let the newcomer settle
        let from = SimTime(p.step.0 * k as u64 + p.step.0 / 2);
        let until = SimTime(p.step.0 * (k as u64 + 1));
        let until = if k + 1 == n { SimTime(p.step.0 * (n as u64 + 1)) } else { until };
        jain_by_count.push(interval_jain(&run, &ids, from, until)?);
    }
    Ok(JoinLeaveOutcome { jain_by_count, topo, run })
}

#[derive(Debug, Clone)]
pub struct ShuffleParams {
    pub hosts: usize,
    pub tasks: usize,
    pub bytes: u64,
    pub rate_bps: u64,
    pub link_delay: SimTime,
    pub horizon: SimTime,
}

impl Default for ShuffleParams {
    fn default() -> Self {
        ShuffleParams {
            hosts: 8,
            tasks: 2,
            bytes: 1_000_000,
            rate_bps: 10 * GBPS,
            link_delay: SimTime::from_micros(5),
            horizon: SimTime::from_millis(200),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FctOutcome {
    /// `None` when no flow finished within the horizon.
    pub fct: Option<FctStats>,
    pub unfinished: usize,
    pub avg_queue_bytes: f64,
    pub max_queue_bytes: u64,
    pub topo: Topology,
    pub run: RunResult,
}

fn fct_outcome(topo: Topology, run: RunResult, ports: &[PortId]) -> Result<FctOutcome> {
    let fct = metrics::fct_stats(&run.completed_fcts()).ok();
    let unfinished = run.flows.iter().filter(|f| f.fct.is_none()).count();
    let (avg_queue_bytes, max_queue_bytes) = queue_stats(&run, ports, SimTime::ZERO);
    Ok(FctOutcome { fct, unfinished, avg_queue_bytes, max_queue_bytes, topo, run })
}

fn switch_ports(topo: &Topology) -> Vec<PortId> {
    (0..topo.port_count() as PortId).filter(|&p| topo.is_switch_port(p)).collect()
}

/// All-to-all transfer between tasks on hosts under one switch.
pub fn shuffle(p: &ShuffleParams, base: &SimConfig) -> Result<FctOutcome> {
    let topo = topology::single_tor(p.hosts, p.rate_bps, p.link_delay)?;
    let flows = workload::shuffle(&topo.hosts(), p.tasks, p.bytes)?;
    let mut cfg = base.clone();
    cfg.duration = p.horizon;
    cfg.stop_when_done = true;
    cfg.port_sampling = PortSampling::Switch;
    let run = world::run(topo.clone(), flows, cfg)?;
    let ports = switch_ports(&topo);
    fct_outcome(topo, run, &ports)
}

#[derive(Debug, Clone)]
pub struct MacroParams {
    pub fat_tree: FatTreeSpec,
    pub cdf: String,
    pub load: f64,
    /// Arrivals stop here; the run continues to `horizon`.
    pub arrivals: SimTime,
    pub horizon: SimTime,
    pub max_flows: Option<usize>,
}

impl Default for MacroParams {
    fn default() -> Self {
        MacroParams {
            fat_tree: FatTreeSpec::k_ary(4, 10 * GBPS),
            cdf: "data-mining".into(),
            load: 0.6,
            arrivals: SimTime::from_millis(10),
            horizon: SimTime::from_millis(20),
            max_flows: None,
        }
    }
}

/// Poisson arrivals with sizes from a CDF across a fat-tree.
pub fn macro_workload(p: &MacroParams, base: &SimConfig) -> Result<FctOutcome> {
    let topo = topology::fat_tree(&p.fat_tree)?;
    let cdf = FlowSizeCdf::resolve(&p.cdf)?;
    // workload draws use a stream apart from every per-flow stream
    let mut rng = RngStream::new(base.seed, 0);
    let flows = workload::poisson_flows(&topo.hosts(), p.fat_tree.rate_bps, &cdf, p.load, p.arrivals, p.max_flows, &mut rng)?;
    if flows.is_empty() {
        return Err(Error::config("macro workload produced no flows; lengthen the arrival window"));
    }
    let mut cfg = base.clone();
    cfg.duration = p.horizon;
    cfg.stop_when_done = true;
    cfg.port_sampling = PortSampling::Switch;
    let run = world::run(topo.clone(), flows, cfg)?;
    let ports = switch_ports(&topo);
    fct_outcome(topo, run, &ports)
}

#[derive(Debug, Clone)]
pub struct AppLimitedParams {
    pub rate_bps: u64,
    pub rtt: SimTime,
    /// Offered load of the limited flow as a fraction of its fair share.
    pub fraction: f64,
    pub duration: SimTime,
}

impl Default for AppLimitedParams {
    fn default() -> Self {
        AppLimitedParams {
            rate_bps: 10 * GBPS,
            rtt: SimTime::from_micros(100),
            fraction: 0.1,
            duration: SimTime::from_millis(5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppLimitedOutcome {
    /// Payload rate the application offers.
    pub offered_bps: f64,
    /// Receiver credit rate after each update, in payload bits per second.
    pub cur_rate_bps: Vec<f64>,
    /// 1-based index of the first update within the tolerance.
    pub first_within: Option<usize>,
    pub topo: Topology,
    pub run: RunResult,
}

/// A backlogged flow and an application-limited flow share the dumbbell.
pub fn app_limited(p: &AppLimitedParams, tolerance: f64, base: &SimConfig) -> Result<AppLimitedOutcome> {
    let topo = topology::dumbbell(2, p.rate_bps, p.rtt)?;
    let fair_payload = xpass_data_ceiling(p.rate_bps) / 2.0 * MTU_PAYLOAD as f64 / crate::net::MAX_DATA_WIRE as f64;
    let offered_bps = p.fraction * fair_payload;
    let mut limited = backlogged(1, &topo, "s1", "r1", SimTime::ZERO)?;
    limited.app_rate_bps = Some(offered_bps);
    let flows = vec![backlogged(0, &topo, "s0", "r0", SimTime::ZERO)?, limited];
    let run = world::run(topo.clone(), flows, windowed(base, p.duration, SimTime::ZERO))?;
    let per_credit = MTU_PAYLOAD as f64 * 8.0;
    let cur_rate_bps: Vec<f64> = run.flows[1].updates.iter().map(|u| u.cur_rate * per_credit).collect();
    let first_within = cur_rate_bps
        .iter()
        .position(|&r| (r - offered_bps).abs() <= tolerance * offered_bps)
        .map(|i| i + 1);
    Ok(AppLimitedOutcome { offered_bps, cur_rate_bps, first_within, topo, run })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> DumbbellParams {
        DumbbellParams {
            duration: SimTime::from_millis(2),
            warmup: SimTime::from_micros(800),
            ..DumbbellParams::default()
        }
    }

    #[test]
    fn single_flow_fills_the_credit_ceiling() {
        let out = dumbbell(&quick(), &SimConfig::default()).unwrap();
        let ceiling = xpass_data_ceiling(10 * GBPS);
        assert!((out.goodput_bps / ceiling - 1.0).abs() < 0.01, "{}", out.goodput_bps);
        assert!(out.utilization > 0.99 && out.utilization <= 1.0 + 1e-9, "{}", out.utilization);
        assert!(out.run.violations.is_empty(), "{:?}", out.run.violations);
    }

    #[test]
    fn queue_stats_reads_high_water_marks() {
        let out = dumbbell(&quick(), &SimConfig::default()).unwrap();
        let bn = out.topo.labels["bottleneck"];
        let (_, max) = queue_stats(&out.run, &[bn], SimTime::ZERO);
        assert_eq!(max, out.run.counters[bn as usize].max_data_bytes);
    }

    #[test]
    fn dctcp_ceiling_is_the_line_rate() {
        assert_eq!(data_ceiling(Protocol::Dctcp, 10 * GBPS), 1e10);
        assert!((data_ceiling(Protocol::ExpressPass, 10 * GBPS) - 9.482e9).abs() < 1e6);
    }
}
