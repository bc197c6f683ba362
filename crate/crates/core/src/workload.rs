//! Flow schedules: Poisson arrivals with empirical size distributions, the
//! all-to-all shuffle, and incast.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::NodeId;
use crate::sim::{RngStream, SimTime};

/// Fraction of link capacity that is data payload plus headers for full frames.
pub const DATA_FRACTION: f64 = 0.9482;

pub const SCHEDULE_HEADER: &str = "flow_id,src,dst,size_bytes,start_ps";

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub size: u64,
    pub start: SimTime,
    /// Application supply rate; `None` is backlogged.
    pub app_rate_bps: Option<f64>,
    /// Abort time, for flows that leave before finishing.
    pub stop_at: Option<SimTime>,
}

impl FlowSpec {
    pub fn new(id: u32, src: NodeId, dst: NodeId, size: u64, start: SimTime) -> Self {
        FlowSpec { id, src, dst, size, start, app_rate_bps: None, stop_at: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Linear between breakpoints, with a point mass at the first one.
    Linear,
    /// Point masses at every breakpoint.
    Step,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSizeCdf {
    pub name: String,
    points: Vec<(u64, f64)>,
    pub interp: Interpolation,
}

const WEB_SEARCH: &str = include_str!("../data/web_search.cdf");
const DATA_MINING: &str = include_str!("../data/data_mining.cdf");

impl FlowSizeCdf {
    pub fn new(name: impl Into<String>, points: Vec<(u64, f64)>, interp: Interpolation) -> Result<Self> {
        let name = name.into();
        if points.is_empty() {
            return Err(Error::config(format!("cdf {name}: no breakpoints")));
        }
        for (i, &(s, p)) in points.iter().enumerate() {
            if s == 0 {
                return Err(Error::config(format!("cdf {name}: zero size at point {i}")));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config(format!("cdf {name}: probability {p} outside (0,1]")));
            }
            if i > 0 {
                let (ps, pp) = points[i - 1];
                if s <= ps {
                    return Err(Error::config(format!("cdf {name}: sizes not increasing at point {i}")));
                }
                if p <= pp {
                    return Err(Error::config(format!(
                        "cdf {name}: probabilities not increasing at point {i}"
                    )));
                }
            }
        }
        let last = points.last().unwrap().1;
        if (last - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("cdf {name}: ends at {last}, not 1.0")));
        }
        Ok(FlowSizeCdf { name, points, interp })
    }

    /// Rows of `size_bytes cumulative_prob`; `#` starts a comment.
    pub fn parse(name: &str, text: &str, interp: Interpolation) -> Result<Self> {
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::config(format!("cdf {name} line {}: expected `size prob`, got `{line}`", n + 1));
            let mut it = line.split_whitespace();
            let s: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let p: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if it.next().is_some() || s < 1.0 {
                return Err(bad());
            }
            points.push((s.round() as u64, p));
        }
        Self::new(name, points, interp)
    }

    pub fn load(path: &Path, interp: Interpolation) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
        Self::parse(name, &text, interp)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "web-search" => Self::parse(name, WEB_SEARCH, Interpolation::Linear),
            "data-mining" => Self::parse(name, DATA_MINING, Interpolation::Linear),
            _ => Err(Error::config(format!(
                "unknown size distribution `{name}` (web-search, data-mining, or a file path)"
            ))),
        }
    }

    /// A builtin name, or else a file path.
    pub fn resolve(name: &str) -> Result<Self> {
        match Self::builtin(name) {
            Ok(c) => Ok(c),
            Err(e) if !Path::new(name).is_file() => Err(e),
            Err(_) => Self::load(Path::new(name), Interpolation::Linear),
        }
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn quantile(&self, u: f64) -> u64 {
        let (s0, p0) = self.points[0];
        if u <= p0 {
            return s0;
        }
        let i = self.points.partition_point(|&(_, p)| p < u).min(self.points.len() - 1);
        let (s1, p1) = self.points[i];
        match self.interp {
            Interpolation::Step => s1,
            Interpolation::Linear => {
                let (sa, pa) = self.points[i - 1];
                let f = (u - pa) / (p1 - pa);
                (sa as f64 + f * (s1 - sa) as f64).round().max(1.0) as u64
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        self.quantile(rng.unit())
    }

    pub fn mean(&self) -> f64 {
        let (s0, p0) = self.points[0];
        let mut m = s0 as f64 * p0;
        for w in self.points.windows(2) {
            let ((sa, pa), (sb, pb)) = (w[0], w[1]);
            m += (pb - pa)
                * match self.interp {
                    Interpolation::Linear => (sa + sb) as f64 / 2.0,
                    Interpolation::Step => sb as f64,
                };
        }
        m
    }
}

/// Open-loop Poisson arrivals over `hosts` until `duration` or `max_flows`.
pub fn poisson_flows(
    hosts: &[NodeId],
    host_rate_bps: u64,
    cdf: &FlowSizeCdf,
    load: f64,
    duration: SimTime,
    max_flows: Option<usize>,
    rng: &mut RngStream,
) -> Result<Vec<FlowSpec>> {
    if !(load > 0.0 && load < 1.0) {
        return Err(Error::config(format!("load {load} must be in (0, 1)")));
    }
    if hosts.len() < 2 {
        return Err(Error::config("poisson workload needs at least two hosts"));
    }
    let lambda = load * hosts.len() as f64 * host_rate_bps as f64 * DATA_FRACTION / (8.0 * cdf.mean());
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += rng.exponential(1.0 / lambda);
        let start = SimTime::from_secs_f64(t);
        if start >= duration || max_flows.is_some_and(|m| out.len() >= m) {
            break;
        }
        let src = hosts[rng.below(hosts.len() as u64) as usize];
        let mut dst = src;
        while dst == src {
            dst = hosts[rng.below(hosts.len() as u64) as usize];
        }
        let size = cdf.sample(rng);
        out.push(FlowSpec::new(out.len() as u32, src, dst, size, start));
    }
    Ok(out)
}

/// Every task on every host sends `bytes` to every task on every other host.
pub fn shuffle(hosts: &[NodeId], tasks_per_host: usize, bytes: u64) -> Result<Vec<FlowSpec>> {
    if hosts.len() < 2 || tasks_per_host == 0 {
        return Err(Error::config("shuffle needs at least two hosts and one task per host"));
    }
    let mut out = Vec::new();
    for &src in hosts {
        for _ in 0..tasks_per_host {
            for &dst in hosts.iter().filter(|&&d| d != src) {
                for _ in 0..tasks_per_host {
                    out.push(FlowSpec::new(out.len() as u32, src, dst, bytes, SimTime::ZERO));
                }
            }
        }
    }
    Ok(out)
}

/// `n` simultaneous flows into `receiver`, senders assigned round robin.
pub fn incast(senders: &[NodeId], n: usize, bytes: u64, receiver: NodeId) -> Result<Vec<FlowSpec>> {
    let pool: Vec<NodeId> = senders.iter().copied().filter(|&s| s != receiver).collect();
    if n == 0 || pool.is_empty() {
        return Err(Error::config("incast needs at least one flow and one sender"));
    }
    Ok((0..n)
        .map(|i| FlowSpec::new(i as u32, pool[i % pool.len()], receiver, bytes, SimTime::ZERO))
        .collect())
}

pub fn schedule_csv(flows: &[FlowSpec]) -> String {
    let mut s = String::from(SCHEDULE_HEADER);
    s.push('\n');
    for f in flows {
        let _ = writeln!(s, "{},{},{},{},{}", f.id, f.src, f.dst, f.size, f.start.0);
    }
    s
}

pub fn parse_schedule_csv(text: &str) -> Result<Vec<FlowSpec>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SCHEDULE_HEADER => {}
        _ => return Err(Error::config(format!("schedule must start with `{SCHEDULE_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::config(format!("schedule line {}: `{line}`", n + 1));
        let v: Vec<u64> = line
            .split(',')
            .map(|c| c.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let [id, src, dst, size, start] = v[..] else { return Err(bad()) };
        if size == 0 {
            return Err(bad());
        }
        out.push(FlowSpec::new(id as u32, src as NodeId, dst as NodeId, size, SimTime(start)));
    }
    Ok(out)
}
