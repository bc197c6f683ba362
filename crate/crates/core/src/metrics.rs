//! Derived statistics, CSV artifacts and the static data-queue bound.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::net::{reverse_port, PortId, Route, CREDIT_SLOT, CREDIT_WIRE, MAX_DATA_WIRE, MIN_FRAME, PREAMBLE_IPG};
use crate::sim::SimTime;
use crate::topology::Topology;

pub const FLOWS_HEADER: &str = "flow_id,src,dst,size,start_ps,fct_ps,wasted_credits,frag_bytes";
pub const PORTS_HEADER: &str = "time_ps,port_id,qdepth_data_B,qdepth_credit_pkts,credit_drops,data_drops";
pub const RATES_HEADER: &str = "time_ps,flow_id,rate_bps";

/// Share of wire time available to data frames (frame bytes, no preamble/IPG).
pub const DATA_FRAME_SHARE: f64 = (MAX_DATA_WIRE - PREAMBLE_IPG) as f64 / CREDIT_SLOT as f64;
/// Share of wire time available to data including preamble/IPG.
pub const DATA_WIRE_SHARE: f64 = MAX_DATA_WIRE as f64 / CREDIT_SLOT as f64;

pub fn jain_index(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Metrics("jain index of no flows".into()));
    }
    if xs.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Metrics("jain index needs finite non-negative throughputs".into()));
    }
    let sum: f64 = xs.iter().sum();
    let sq: f64 = xs.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(Error::Metrics("jain index undefined for all-zero throughputs".into()));
    }
    Ok(sum * sum / (xs.len() as f64 * sq))
}

/// Data frame bytes delivered over `window`, normalised to the most a
/// credit-shaped link can carry.
pub fn utilization(frame_bytes: u64, rate_bps: u64, window: SimTime) -> f64 {
    assert!(window > SimTime::ZERO);
    frame_bytes as f64 * 8.0 / (rate_bps as f64 * window.as_secs_f64() * DATA_FRAME_SHARE)
}

/// Trailing mean over `k` samples (shorter at the start).
pub fn smooth(xs: &[f64], k: usize) -> Vec<f64> {
    let k = k.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        acc += xs[i];
        if i >= k {
            acc -= xs[i - k];
        }
        out.push(acc / (i + 1).min(k) as f64);
    }
    out
}

fn all_within(series: &[Vec<f64>], fair: &[f64], tol: f64, i: usize) -> bool {
    series
        .iter()
        .zip(fair)
        .all(|(s, &f)| s.get(i).is_some_and(|&x| (x - f).abs() <= tol * f))
}

/// First sample time at which every series is within `tol` of its fair share.
pub fn first_within(times: &[SimTime], series: &[Vec<f64>], fair: &[f64], tol: f64) -> Option<SimTime> {
    if series.len() != fair.len() {
        return None;
    }
    (0..times.len()).find(|&i| all_within(series, fair, tol, i)).map(|i| times[i])
}

/// First sample time from which every series stays within `tol` of its fair
/// share until the end. `series[f][i]` is flow `f` at `times[i]`.
pub fn convergence_time(times: &[SimTime], series: &[Vec<f64>], fair: &[f64], tol: f64) -> Option<SimTime> {
    if series.is_empty() || times.is_empty() || series.len() != fair.len() {
        return None;
    }
    let mut first = None;
    for i in (0..times.len()).rev() {
        if all_within(series, fair, tol, i) {
            first = Some(i);
        } else {
            break;
        }
    }
    first.map(|i| times[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FctStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p99: f64,
    pub max: f64,
    pub min: f64,
}

/// Nearest rank: the smallest value with at least `p` percent of samples at or below it.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

pub fn fct_stats(fcts: &[f64]) -> Result<FctStats> {
    if fcts.is_empty() {
        return Err(Error::Metrics("no completed flows".into()));
    }
    let mut v = fcts.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(FctStats {
        n: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: percentile(&v, 50.0),
        p99: percentile(&v, 99.0),
        max: *v.last().unwrap(),
        min: v[0],
    })
}

/// Empirical CDF as (value, fraction at or below).
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
}

/// Bytes a link's data share accumulates over a delay spread.
pub fn bound_bytes(rate_bps: u64, spread: SimTime) -> f64 {
    rate_bps as f64 * DATA_WIRE_SHARE * spread.as_secs_f64() / 8.0
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PortBound {
    pub d_min: SimTime,
    pub d_max: SimTime,
    pub flows: usize,
    pub bytes: u64,
}

fn ser(bytes: u32, rate: u64) -> SimTime {
    SimTime::serialization(bytes as u64, rate)
}

/// Worst-case data-queue depth per port for credit-driven traffic.
///
/// Data leaving port `P` was paid for by a credit that crossed the reverse port
/// `P^1`, which paces credits at one per 1622 byte-times. If every credit came
/// back as data after the same delay `d`, arrivals at `P` would never exceed its
/// drain rate, so the queue is at most `rate * (d_max - d_min)` where `d` runs
/// from credit departure at `P^1` to data arrival at `P`. The spread includes
/// credit queueing downstream of `P^1`, data serialization size variation and
/// data queueing upstream of `P`, which is itself bounded by this function
/// (iterated to a fixed point). Each flow may add one credit request frame.
pub fn buffer_bound(topo: &Topology, routes: &[Route], credit_cap: impl Fn(PortId) -> usize) -> Result<Vec<PortBound>> {
    let np = topo.port_count();
    let mut data_at: Vec<Vec<(usize, usize)>> = vec![Vec::new(); np];
    let mut carries_credit = vec![false; np];
    let mut credit_ingress: Vec<BTreeSet<Option<PortId>>> = vec![BTreeSet::new(); np];
    for (f, r) in routes.iter().enumerate() {
        for (i, &p) in r.data.iter().enumerate() {
            data_at[p as usize].push((f, i));
        }
        for (k, &p) in r.credit.iter().enumerate() {
            carries_credit[p as usize] = true;
            credit_ingress[p as usize].insert(if k == 0 { None } else { Some(r.credit[k - 1]) });
        }
    }
    let credit_wait: Vec<SimTime> = (0..np as PortId)
        .map(|q| {
            let rate = topo.port_rate(q);
            let frame = if data_at[q as usize].is_empty() { SimTime::ZERO } else { ser(MAX_DATA_WIRE, rate) };
            let ing = &credit_ingress[q as usize];
            let paced = ing.len() == 1 && ing.iter().next().unwrap().is_some_and(|i| topo.port_rate(i) <= rate);
            if paced {
                frame
            } else {
                let gap = ser(CREDIT_SLOT, rate);
                SimTime(gap.0 * (credit_cap(q) as u64 + 1)) + frame
            }
        })
        .collect();

    let mut bytes = vec![0u64; np];
    for _round in 0..=np + 1 {
        let mut out = Vec::with_capacity(np);
        for p in 0..np {
            let rate = topo.port_rate(p as PortId);
            let rev = reverse_port(p as PortId);
            let mut lo = SimTime::MAX;
            let mut hi = SimTime::ZERO;
            for &(f, i) in &data_at[p] {
                let r = &routes[f];
                let n = r.data.len();
                let k = n - 1 - i;
                debug_assert_eq!(r.credit[k], rev);
                let mut base = ser(CREDIT_WIRE, topo.port_rate(rev)) + topo.port_delay(rev);
                let mut spread = SimTime::ZERO;
                for &q in &r.credit[k + 1..] {
                    base += ser(CREDIT_WIRE, topo.port_rate(q)) + topo.port_delay(q);
                    spread += credit_wait[q as usize];
                }
                let (mut dmin, mut dmax) = (base, base + spread);
                for &q in &r.data[..i] {
                    let qr = topo.port_rate(q);
                    dmin += ser(MIN_FRAME + PREAMBLE_IPG, qr) + topo.port_delay(q);
                    dmax += ser(MAX_DATA_WIRE, qr) + topo.port_delay(q);
                    let b = bytes[q as usize];
                    let mut wait_bytes = b;
                    if b > 0 {
                        wait_bytes += MAX_DATA_WIRE as u64;
                    }
                    if carries_credit[q as usize] {
                        wait_bytes += CREDIT_WIRE as u64;
                    }
                    dmax += SimTime::serialization(wait_bytes, qr);
                }
                lo = lo.min(dmin);
                hi = hi.max(dmax);
            }
            let flows = data_at[p].len();
            let pb = if flows == 0 {
                PortBound::default()
            } else {
                PortBound {
                    d_min: lo,
                    d_max: hi,
                    flows,
                    bytes: bound_bytes(rate, hi - lo).ceil() as u64,
                }
            };
            out.push(pb);
        }
        let next: Vec<u64> = out.iter().map(|b| b.bytes).collect();
        if next == bytes {
            for pb in out.iter_mut() {
                pb.bytes += CREDIT_WIRE as u64 * pb.flows as u64;
            }
            return Ok(out);
        }
        bytes = next;
    }
    Err(Error::Metrics("buffer bound did not reach a fixed point (cyclic data dependencies)".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRow {
    pub flow_id: u32,
    pub src: u32,
    pub dst: u32,
    pub size: u64,
    pub start: SimTime,
    pub fct: Option<SimTime>,
    pub wasted_credits: u64,
    pub frag_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortSample {
    pub time: SimTime,
    pub port: PortId,
    pub data_bytes: u64,
    pub credit_pkts: u64,
    pub credit_drops: u64,
    pub data_drops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    pub time: SimTime,
    pub flow: u32,
    pub rate_bps: f64,
}

/// Unfinished flows have an empty `fct_ps` cell.
pub fn flows_csv(rows: &[FlowRow]) -> String {
    let mut s = format!("{FLOWS_HEADER}\n");
    for r in rows {
        let fct = r.fct.map(|t| t.0.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.flow_id, r.src, r.dst, r.size, r.start.0, fct, r.wasted_credits, r.frag_bytes
        );
    }
    s
}

pub fn ports_csv(rows: &[PortSample]) -> String {
    let mut s = format!("{PORTS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.time.0, r.port, r.data_bytes, r.credit_pkts, r.credit_drops, r.data_drops
        );
    }
    s
}

pub fn rates_csv(rows: &[RateSample]) -> String {
    let mut s = format!("{RATES_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.0}", r.time.0, r.flow, r.rate_bps);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{route_flow, FlowTuple};
    use crate::topology;

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(jain_index(&[1.0, 0.0]).unwrap(), 0.5);
        assert!((jain_index(&[2.0, 1.0, 1.0]).unwrap() - 16.0 / 18.0).abs() < 1e-12);
        assert!((jain_index(&[5.0, 0.0, 0.0, 0.0]).unwrap() - 0.25).abs() < 1e-12);
        assert!(jain_index(&[0.0, 0.0]).is_err());
        assert!(jain_index(&[]).is_err());
    }

    #[test]
    fn utilization_normalises_to_data_share() {
        let rate = 10_000_000_000;
        let w = SimTime::from_millis(1);
        // a link busy with full frames and its share of credits
        let frames = (rate as f64 * w.as_secs_f64() / 8.0 / CREDIT_SLOT as f64) as u64;
        let u = utilization(frames * (MAX_DATA_WIRE - PREAMBLE_IPG) as u64, rate, w);
        assert!((u - 1.0).abs() < 1e-3, "{u}");
    }

    #[test]
    fn convergence_examples() {
        let times: Vec<SimTime> = (0..10).map(SimTime::from_micros).collect();
        let a = vec![0.0, 2.0, 4.0, 4.9, 5.2, 5.0, 5.0, 5.0, 5.0, 5.0];
        let b = vec![10.0, 8.0, 6.0, 5.1, 4.8, 5.0, 5.0, 5.0, 5.0, 5.0];
        let t = convergence_time(&times, &[a.clone(), b.clone()], &[5.0, 5.0], 0.1);
        assert_eq!(t, Some(SimTime::from_micros(3)));
        // a later excursion resets
        let mut a2 = a.clone();
        a2[7] = 3.0;
        assert_eq!(convergence_time(&times, &[a2, b], &[5.0, 5.0], 0.1), Some(SimTime::from_micros(8)));
        let never = vec![0.0; 10];
        assert_eq!(convergence_time(&times, &[never], &[5.0], 0.1), None);
    }

    #[test]
    fn smoothing() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn fct_examples() {
        let s = fct_stats(&[7.0]).unwrap();
        assert_eq!((s.mean, s.median, s.p99, s.max), (7.0, 7.0, 7.0, 7.0));
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = fct_stats(&v).unwrap();
        assert_eq!(s.p99, 99.0);
        assert_eq!(s.median, 50.0);
        assert_eq!(s.max, 100.0);
        assert!(fct_stats(&[]).is_err());
        let c = cdf(&[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(c[0], (1.0, 0.25));
        assert_eq!(c[3], (4.0, 1.0));
    }

    #[test]
    fn bound_from_delay_spread() {
        let b = bound_bytes(10_000_000_000, SimTime::from_micros(10));
        assert!((b - 11_852.0).abs() < 5.0, "{b}");
    }

    #[test]
    fn equal_delay_flows_need_at_most_one_frame() {
        let rate = 10_000_000_000;
        let topo = topology::dumbbell(4, rate, SimTime::from_micros(100)).unwrap();
        let routes: Vec<Route> = (0..4)
            .map(|i| {
                let t = FlowTuple {
                    src: topo.host(&format!("s{i}")).unwrap(),
                    dst: topo.host(&format!("r{i}")).unwrap(),
                    sport: i as u16,
                    dport: 5000,
                };
                route_flow(&topo, &t).unwrap()
            })
            .collect();
        let b = buffer_bound(&topo, &routes, |_| 16).unwrap();
        let bottleneck = topo.labels["bottleneck"];
        let pb = &b[bottleneck as usize];
        assert_eq!(pb.flows, 4);
        assert!(pb.bytes <= MAX_DATA_WIRE as u64 + 4 * CREDIT_WIRE as u64, "{pb:?}");
    }

    #[test]
    fn unequal_paths_widen_the_bound() {
        let rate = 10_000_000_000;
        let topo = topology::parking_lot(2, rate, SimTime::from_micros(100)).unwrap();
        let host = |n: &str| topo.host(n).unwrap();
        let pairs = [("long_src", "long_dst"), ("x1_src", "x1_dst"), ("x2_src", "x2_dst")];
        let routes: Vec<Route> = pairs
            .iter()
            .enumerate()
            .map(|(i, (s, d))| route_flow(&topo, &FlowTuple { src: host(s), dst: host(d), sport: i as u16, dport: 1 }).unwrap())
            .collect();
        let b = buffer_bound(&topo, &routes, |_| 16).unwrap();
        let mut any = false;
        for l in ["link1", "link2"] {
            let pb = &b[topo.labels[l] as usize];
            assert_eq!(pb.flows, 2);
            assert!(pb.d_max > pb.d_min);
            any |= pb.bytes > MAX_DATA_WIRE as u64;
        }
        assert!(any);
    }

    #[test]
    fn csv_headers() {
        let f = flows_csv(&[FlowRow {
            flow_id: 1,
            src: 2,
            dst: 3,
            size: 100,
            start: SimTime(5),
            fct: None,
            wasted_credits: 0,
            frag_bytes: 1400,
        }]);
        assert_eq!(f, format!("{FLOWS_HEADER}\n1,2,3,100,5,,0,1400\n"));
        assert!(ports_csv(&[]).starts_with("time_ps,port_id,qdepth_data_B"));
        assert_eq!(
            rates_csv(&[RateSample { time: SimTime(1), flow: 0, rate_bps: 9.482e9 }]),
            format!("{RATES_HEADER}\n1,0,9482000000\n")
        );
    }
}
