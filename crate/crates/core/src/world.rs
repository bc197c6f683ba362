//! One simulation run: a topology, a flow schedule and a protocol, driven by the
//! event scheduler until a horizon.

use serde::{Deserialize, Serialize};

use crate::dctcp::{self, DctcpConfig, DctcpReceiver, DctcpState, Segment};
use crate::error::{Error, Result};
use crate::metrics::{self, FlowRow, PortBound, PortSample, RateSample};
use crate::net::{
    link_of, route_flow, DataEnqueue, Direction, FlowTuple, LinkId, Network, Packet, PacketKind, PortCounters,
    PortId, PortParams, Route, TxDecision, MAX_DATA_WIRE,
};
use crate::sim::{Handler, RngStream, Scheduler, SchedulerStats, SimTime};
use crate::topology::Topology;
use crate::workload::FlowSpec;
use crate::xpass::{max_credit_rate, AppSource, CreditLedger, Phase, UpdateRecord, XpassConfig, XpassReceiver, XpassSender};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "expresspass")]
    ExpressPass,
    #[serde(rename = "expresspass-naive")]
    ExpressPassNaive,
    #[serde(rename = "dctcp")]
    Dctcp,
}

impl Protocol {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "expresspass" => Ok(Protocol::ExpressPass),
            "expresspass-naive" => Ok(Protocol::ExpressPassNaive),
            "dctcp" => Ok(Protocol::Dctcp),
            _ => Err(Error::config(format!(
                "unknown protocol `{s}` (expresspass, expresspass-naive, dctcp)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::ExpressPass => "expresspass",
            Protocol::ExpressPassNaive => "expresspass-naive",
            Protocol::Dctcp => "dctcp",
        }
    }

    pub fn is_credit_based(self) -> bool {
        !matches!(self, Protocol::Dctcp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortSampling {
    None,
    /// Only labelled ports (bottlenecks).
    Labels,
    Switch,
    All,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub xpass: XpassConfig,
    pub dctcp: DctcpConfig,
    pub credit_queue_pkts: usize,
    /// Per-port data buffer; `None` picks the protocol default.
    pub data_queue_bytes: Option<u64>,
    pub duration: SimTime,
    /// Port counters are snapshotted here so windowed rates exclude warm-up.
    pub measure_from: SimTime,
    /// Stop early once every flow has finished.
    pub stop_when_done: bool,
    pub sample_period: SimTime,
    pub port_sampling: PortSampling,
    pub record_rates: bool,
    pub seed: u64,
    /// Record and compare per-packet link lists for path symmetry.
    pub check_symmetry: bool,
    /// Compute the static data-queue bound and check observed depths against it.
    pub check_bound: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: Protocol::ExpressPass,
            xpass: XpassConfig::default(),
            dctcp: DctcpConfig::default(),
            credit_queue_pkts: 16,
            data_queue_bytes: None,
            duration: SimTime::from_millis(10),
            measure_from: SimTime::ZERO,
            stop_when_done: true,
            sample_period: SimTime::from_micros(100),
            port_sampling: PortSampling::Labels,
            record_rates: true,
            seed: 1,
            check_symmetry: true,
            check_bound: true,
        }
    }
}

#[derive(Debug)]
pub enum Ev {
    FlowStart(u32),
    FlowStop(u32),
    /// Packet finishes propagating over `port`'s link.
    Arrive(PortId, Box<Packet>),
    TxDone(PortId),
    Wake(PortId),
    Credit(u32),
    Update(u32),
    Rto(u32),
    Sample,
    Snapshot,
}

enum Endpoint {
    Xpass {
        tx: XpassSender,
        tx_ledger: CreditLedger,
        rx: XpassReceiver,
        rng: RngStream,
    },
    Dctcp {
        tx: DctcpState,
        rx: DctcpReceiver,
        rto_pending: bool,
    },
}

struct Flow {
    spec: FlowSpec,
    route: Route,
    started: bool,
    stopped: bool,
    fct: Option<SimTime>,
    delivered: u64,
    delivered_wire: u64,
    sampled_wire: u64,
    wire_at_snapshot: u64,
    credit_drops: u64,
    data_drops: u64,
    ep: Endpoint,
}

impl Flow {
    fn done(&self) -> bool {
        self.fct.is_some() || self.stopped
    }
}

/// Per-flow outcome.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub spec: FlowSpec,
    pub route: Route,
    pub fct: Option<SimTime>,
    pub delivered: u64,
    /// Data wire bytes delivered after `measure_from`.
    pub window_wire: u64,
    pub wasted_credits: u64,
    pub frag_bytes: u64,
    pub credits_sent: u64,
    pub credit_drops: u64,
    pub data_drops: u64,
    pub updates: Vec<UpdateRecord>,
    pub dctcp_timeouts: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub protocol: Protocol,
    pub end: SimTime,
    pub flows: Vec<FlowResult>,
    pub rates: Vec<RateSample>,
    pub ports: Vec<PortSample>,
    pub counters: Vec<PortCounters>,
    /// Counters at `measure_from`.
    pub counters_at_start: Vec<PortCounters>,
    pub measure_from: SimTime,
    pub bounds: Option<Vec<PortBound>>,
    pub violations: Vec<String>,
    pub sched: SchedulerStats,
}

impl RunResult {
    pub fn flows_csv(&self) -> String {
        let rows: Vec<FlowRow> = self
            .flows
            .iter()
            .map(|f| FlowRow {
                flow_id: f.spec.id,
                src: f.spec.src,
                dst: f.spec.dst,
                size: f.spec.size,
                start: f.spec.start,
                fct: f.fct,
                wasted_credits: f.wasted_credits,
                frag_bytes: f.frag_bytes,
            })
            .collect();
        metrics::flows_csv(&rows)
    }
    pub fn ports_csv(&self) -> String {
        metrics::ports_csv(&self.ports)
    }
    pub fn rates_csv(&self) -> String {
        metrics::rates_csv(&self.rates)
    }

    pub fn data_drops(&self) -> u64 {
        self.counters.iter().map(|c| c.data_drops).sum()
    }

    /// Rates of one flow as (time, bps).
    pub fn flow_rates(&self, flow: u32) -> Vec<(SimTime, f64)> {
        self.rates.iter().filter(|r| r.flow == flow).map(|r| (r.time, r.rate_bps)).collect()
    }

    /// Rate matrix on the common sample grid; missing samples are 0.
    pub fn rate_matrix(&self, flows: &[u32]) -> (Vec<SimTime>, Vec<Vec<f64>>) {
        let mut times: Vec<SimTime> = self.rates.iter().map(|r| r.time).collect();
        times.dedup();
        let idx = |t: SimTime| times.binary_search(&t).expect("sample time");
        let mut m = vec![vec![0.0; times.len()]; flows.len()];
        for r in &self.rates {
            if let Some(k) = flows.iter().position(|&f| f == r.flow) {
                m[k][idx(r.time)] = r.rate_bps;
            }
        }
        (times, m)
    }

    pub fn completed_fcts(&self) -> Vec<f64> {
        self.flows.iter().filter_map(|f| f.fct.map(|t| t.as_secs_f64())).collect()
    }
}

pub struct World {
    topo: Topology,
    cfg: SimConfig,
    net: Network,
    flows: Vec<Flow>,
    sampled_ports: Vec<PortId>,
    rates: Vec<RateSample>,
    port_samples: Vec<PortSample>,
    violations: Vec<String>,
    last_sample: SimTime,
    last_event: SimTime,
    remaining: usize,
    snapshot: Option<Vec<PortCounters>>,
}

fn port_params(topo: &Topology, cfg: &SimConfig, p: PortId) -> PortParams {
    let rate = topo.port_rate(p);
    match cfg.protocol {
        Protocol::Dctcp => PortParams {
            data_capacity_bytes: cfg
                .data_queue_bytes
                .unwrap_or(dctcp::default_queue_pkts(rate) * MAX_DATA_WIRE as u64),
            credit_capacity_pkts: cfg.credit_queue_pkts,
            ecn_threshold_pkts: Some(cfg.dctcp.k_pkts.unwrap_or_else(|| dctcp::scaled_k(rate))),
        },
        _ => PortParams {
            data_capacity_bytes: cfg.data_queue_bytes.unwrap_or(PortParams::default().data_capacity_bytes),
            credit_capacity_pkts: cfg.credit_queue_pkts,
            ecn_threshold_pkts: None,
        },
    }
}

impl World {
    pub fn new(topo: Topology, flows: Vec<FlowSpec>, cfg: SimConfig) -> Result<Self> {
        let net = Network::build(&topo, |p| port_params(&topo, &cfg, p));
        let mut fs = Vec::with_capacity(flows.len());
        for (i, spec) in flows.into_iter().enumerate() {
            if spec.id as usize != i {
                return Err(Error::config(format!("flow ids must be 0..n in order; got {} at {i}", spec.id)));
            }
            if spec.size == 0 {
                return Err(Error::config(format!("flow {i} has zero size")));
            }
            for h in [spec.src, spec.dst] {
                if h as usize >= topo.nodes.len() || topo.nodes[h as usize].kind.is_switch() {
                    return Err(Error::config(format!("flow {i}: endpoint {h} is not a host")));
                }
            }
            let tuple = FlowTuple {
                src: spec.src,
                dst: spec.dst,
                sport: 1024 + (spec.id % 60000) as u16,
                dport: 5000 + (spec.id / 60000) as u16,
            };
            let route = route_flow(&topo, &tuple)?;
            let ep = match cfg.protocol {
                Protocol::ExpressPass | Protocol::ExpressPassNaive => {
                    let mut xc = cfg.xpass.clone();
                    if cfg.protocol == Protocol::ExpressPassNaive {
                        xc.feedback = false;
                    }
                    let app = match spec.app_rate_bps {
                        Some(bps) => AppSource::RateLimited { bytes_per_sec: bps / 8.0 },
                        None => AppSource::Backlogged,
                    };
                    let rate = topo.host_rate(spec.dst);
                    Endpoint::Xpass {
                        tx: XpassSender::new(spec.size, spec.start, app)?,
                        tx_ledger: CreditLedger::default(),
                        rx: XpassReceiver::new(max_credit_rate(rate), xc),
                        rng: RngStream::new(cfg.seed, 1 + spec.id as u64),
                    }
                }
                Protocol::Dctcp => {
                    let rate = topo.host_rate(spec.src);
                    let base_rtt = topo.path_delay(&route.data) + topo.path_delay(&route.credit);
                    Endpoint::Dctcp {
                        tx: DctcpState::new(spec.size, rate, base_rtt, &cfg.dctcp)?,
                        rx: DctcpReceiver::new(spec.size),
                        rto_pending: false,
                    }
                }
            };
            fs.push(Flow {
                spec,
                route,
                started: false,
                stopped: false,
                fct: None,
                delivered: 0,
                delivered_wire: 0,
                sampled_wire: 0,
                wire_at_snapshot: 0,
                credit_drops: 0,
                data_drops: 0,
                ep,
            });
        }
        let sampled_ports = (0..topo.port_count() as PortId)
            .filter(|&p| match cfg.port_sampling {
                PortSampling::None => false,
                PortSampling::Labels => topo.labels.values().any(|&l| l == p),
                PortSampling::Switch => topo.is_switch_port(p),
                PortSampling::All => true,
            })
            .collect();
        let remaining = fs.len();
        Ok(World {
            topo,
            cfg,
            net,
            flows: fs,
            sampled_ports,
            rates: Vec::new(),
            port_samples: Vec::new(),
            violations: Vec::new(),
            last_sample: SimTime::ZERO,
            last_event: SimTime::ZERO,
            remaining,
            snapshot: None,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn run(mut self) -> Result<RunResult> {
        let mut sched: Scheduler<Ev> = Scheduler::new();
        for f in &self.flows {
            sched.schedule(f.spec.start, Ev::FlowStart(f.spec.id))?;
            if let Some(t) = f.spec.stop_at {
                sched.schedule(t, Ev::FlowStop(f.spec.id))?;
            }
        }
        sched.schedule(self.cfg.sample_period, Ev::Sample)?;
        if self.cfg.measure_from > SimTime::ZERO {
            sched.schedule(self.cfg.measure_from, Ev::Snapshot)?;
        }
        sched.run_until(self.cfg.duration, &mut self);
        let end = if self.remaining == 0 { self.last_event } else { sched.now() };
        if self.last_sample < end && end - self.last_sample >= SimTime(self.cfg.sample_period.0 / 2) {
            self.sample(end);
        }
        self.finish(end, sched.stats())
    }

    fn finish(mut self, end: SimTime, stats: SchedulerStats) -> Result<RunResult> {
        let counters: Vec<PortCounters> = self.net.ports.iter().map(|p| p.counters.clone()).collect();
        let mut bounds = None;
        if self.cfg.protocol.is_credit_based() {
            let drops: u64 = counters.iter().map(|c| c.data_drops).sum();
            if drops > 0 {
                self.violations.push(format!("{drops} data packets dropped under credit-based control"));
            }
            if self.cfg.check_bound && !self.flows.is_empty() {
                let routes: Vec<Route> = self.flows.iter().map(|f| f.route.clone()).collect();
                let cap = self.cfg.credit_queue_pkts;
                let mut b = metrics::buffer_bound(&self.topo, &routes, |_| cap)?;
                // a stop frame shares the data queue like a request
                for f in self.flows.iter().filter(|f| f.spec.stop_at.is_some()) {
                    for &p in &f.route.data {
                        b[p as usize].bytes += crate::net::CREDIT_WIRE as u64;
                    }
                }
                for (p, c) in counters.iter().enumerate() {
                    let limit = b[p].bytes + MAX_DATA_WIRE as u64;
                    if c.max_data_bytes > limit {
                        self.violations.push(format!(
                            "port {p}: data queue reached {} B, bound {} B + one frame",
                            c.max_data_bytes, b[p].bytes
                        ));
                    }
                }
                bounds = Some(b);
            }
        }
        let flows = self
            .flows
            .into_iter()
            .map(|f| {
                let (wasted, frag, sent, updates, timeouts) = match f.ep {
                    Endpoint::Xpass { tx_ledger, rx, .. } => {
                        (tx_ledger.wasted_credits, tx_ledger.fragmentation_bytes, rx.ledger.credits_sent, rx.updates, 0)
                    }
                    Endpoint::Dctcp { tx, .. } => (0, 0, 0, Vec::new(), tx.timeouts),
                };
                FlowResult {
                    spec: f.spec,
                    route: f.route,
                    fct: f.fct,
                    delivered: f.delivered,
                    window_wire: f.delivered_wire - f.wire_at_snapshot,
                    wasted_credits: wasted,
                    frag_bytes: frag,
                    credits_sent: sent,
                    credit_drops: f.credit_drops,
                    data_drops: f.data_drops,
                    updates,
                    dctcp_timeouts: timeouts,
                }
            })
            .collect();
        Ok(RunResult {
            protocol: self.cfg.protocol,
            end,
            flows,
            rates: self.rates,
            ports: self.port_samples,
            counters,
            counters_at_start: self
                .snapshot
                .unwrap_or_else(|| vec![PortCounters::default(); self.net.ports.len()]),
            measure_from: self.cfg.measure_from,
            bounds,
            violations: self.violations,
            sched: stats,
        })
    }

    fn kick(&mut self, sched: &mut Scheduler<Ev>, p: PortId) {
        let now = sched.now();
        let port = self.net.port_mut(p);
        match port.select_next(now) {
            TxDecision::Send(mut pkt) => {
                let ser = port.transmit(&pkt);
                let delay = port.delay;
                if let Some(path) = pkt.path.as_mut() {
                    path.push(link_of(p));
                }
                sched.schedule_in(ser, Ev::TxDone(p));
                sched.schedule_in(ser + delay, Ev::Arrive(p, Box::new(pkt)));
            }
            TxDecision::WaitUntil(t) => {
                if port.arm_wake(t) {
                    sched.schedule(t, Ev::Wake(p)).expect("shaper wake is in the future");
                }
            }
            TxDecision::Idle => {}
        }
    }

    /// Queues `pkt` at the egress for its current hop.
    fn send(&mut self, sched: &mut Scheduler<Ev>, mut pkt: Packet) {
        let now = sched.now();
        let f = pkt.flow as usize;
        let route = &self.flows[f].route;
        let hops = match pkt.dir {
            Direction::Forward => &route.data,
            Direction::Reverse => &route.credit,
        };
        let p = hops[pkt.hop as usize];
        if self.cfg.check_symmetry && pkt.path.is_none() {
            pkt.path = Some(Vec::with_capacity(hops.len()));
        }
        let port = self.net.port_mut(p);
        if pkt.kind == PacketKind::Credit {
            if port.enqueue_credit(pkt, now).expect("credit") == crate::net::CreditEnqueue::Dropped {
                self.flows[f].credit_drops += 1;
            }
        } else if port.enqueue_data(pkt, now) == DataEnqueue::Dropped {
            self.flows[f].data_drops += 1;
        }
        self.kick(sched, p);
    }

    fn arrive(&mut self, sched: &mut Scheduler<Ev>, _p: PortId, mut pkt: Packet) {
        let f = pkt.flow as usize;
        let route = &self.flows[f].route;
        let hops = match pkt.dir {
            Direction::Forward => route.data.len(),
            Direction::Reverse => route.credit.len(),
        };
        if (pkt.hop as usize) + 1 < hops {
            pkt.hop += 1;
            self.send(sched, pkt);
        } else {
            self.deliver(sched, pkt);
        }
    }

    fn check_path(&mut self, pkt: &Packet) {
        if let (Some(d), Some(c)) = (&pkt.path, &pkt.credit_path) {
            let rev: Vec<LinkId> = c.iter().rev().copied().collect();
            if *d != rev {
                self.violations.push(format!("flow {}: data path {d:?} is not the reverse of credit path {c:?}", pkt.flow));
            }
        }
    }

    fn deliver(&mut self, sched: &mut Scheduler<Ev>, pkt: Packet) {
        let now = sched.now();
        let f = pkt.flow as usize;
        match pkt.kind {
            PacketKind::CreditRequest => {
                let Endpoint::Xpass { rx, .. } = &mut self.flows[f].ep else { return };
                if rx.phase == Phase::AwaitingCreditRequest {
                    rx.on_credit_request(now);
                    let period = rx.period();
                    sched.schedule_in(SimTime::ZERO, Ev::Credit(f as u32));
                    sched.schedule_in(period, Ev::Update(f as u32));
                }
            }
            PacketKind::CreditStop => {
                if let Endpoint::Xpass { rx, .. } = &mut self.flows[f].ep {
                    rx.on_credit_stop();
                }
            }
            PacketKind::Credit => {
                let flow = &mut self.flows[f];
                let Endpoint::Xpass { tx, tx_ledger, .. } = &mut flow.ep else { return };
                if let Some(g) = tx.on_credit(tx_ledger, pkt.credit_seq, now) {
                    let mut d = Packet::data(f as u32, g.payload, now);
                    d.credit_seq = g.credit_seq;
                    d.is_last = g.is_last;
                    d.credit_sent = pkt.created;
                    d.credit_path = pkt.path;
                    self.send(sched, d);
                }
            }
            PacketKind::Data => self.deliver_data(sched, pkt),
            PacketKind::Ack => {
                let flow = &mut self.flows[f];
                let Endpoint::Dctcp { tx, .. } = &mut flow.ep else { return };
                if flow.stopped {
                    return;
                }
                let rtt = now - pkt.created;
                let mut out = tx.on_ack(pkt.seq, pkt.ecn_echo, Some(rtt), now);
                out.extend(tx.send_ready(now));
                self.dctcp_emit(sched, f, out);
            }
        }
    }

    fn deliver_data(&mut self, sched: &mut Scheduler<Ev>, pkt: Packet) {
        let now = sched.now();
        let f = pkt.flow as usize;
        if self.cfg.check_symmetry {
            self.check_path(&pkt);
        }
        let flow = &mut self.flows[f];
        match &mut flow.ep {
            Endpoint::Xpass { rx, .. } => {
                if rx.phase == Phase::Done && flow.fct.is_some() {
                    return;
                }
                match rx.on_data(pkt.credit_seq, pkt.payload, pkt.is_last, now) {
                    Ok(o) => {
                        flow.delivered += pkt.payload as u64;
                        flow.delivered_wire += pkt.wire_size as u64;
                        if o.finished {
                            if flow.delivered != flow.spec.size {
                                self.violations.push(format!(
                                    "flow {f}: last packet after {} of {} bytes",
                                    flow.delivered, flow.spec.size
                                ));
                            }
                            flow.fct = Some(now - flow.spec.start);
                            self.remaining -= 1;
                        }
                    }
                    Err(e) => self.violations.push(format!("flow {f}: {e}")),
                }
            }
            Endpoint::Dctcp { rx, .. } => {
                let before = rx.bytes_received;
                let ack_next = rx.on_data(pkt.seq, pkt.payload);
                let fresh = rx.bytes_received > before;
                if fresh {
                    flow.delivered += pkt.payload as u64;
                    flow.delivered_wire += pkt.wire_size as u64;
                }
                if rx.complete() && flow.fct.is_none() {
                    flow.fct = Some(now - flow.spec.start);
                    self.remaining -= 1;
                }
                let mut ack = Packet::control(PacketKind::Ack, f as u32, Direction::Reverse, pkt.created);
                ack.seq = ack_next;
                ack.ecn_echo = pkt.ecn_ce;
                self.send(sched, ack);
            }
        }
    }

    fn dctcp_emit(&mut self, sched: &mut Scheduler<Ev>, f: usize, segs: Vec<Segment>) {
        let now = sched.now();
        for s in segs {
            let mut d = Packet::data(f as u32, s.payload, now);
            d.seq = s.idx;
            d.ecn_capable = true;
            self.send(sched, d);
        }
        let Endpoint::Dctcp { tx, rto_pending, .. } = &mut self.flows[f].ep else { unreachable!() };
        if let (false, Some(d)) = (*rto_pending, tx.rto_deadline) {
            *rto_pending = true;
            sched.schedule(d.max(now), Ev::Rto(f as u32)).expect("rto in future");
        }
    }

    fn sample(&mut self, now: SimTime) {
        let dt = now - self.last_sample;
        if self.cfg.record_rates && dt > SimTime::ZERO {
            for fl in &mut self.flows {
                let active = fl.started && (fl.delivered_wire > fl.sampled_wire || !fl.done());
                if active {
                    let bytes = fl.delivered_wire - fl.sampled_wire;
                    self.rates.push(RateSample {
                        time: now,
                        flow: fl.spec.id,
                        rate_bps: bytes as f64 * 8.0 / dt.as_secs_f64(),
                    });
                }
                fl.sampled_wire = fl.delivered_wire;
            }
        }
        for &p in &self.sampled_ports {
            let port = self.net.port(p);
            self.port_samples.push(PortSample {
                time: now,
                port: p,
                data_bytes: port.data_bytes(),
                credit_pkts: port.credit_pkts() as u64,
                credit_drops: port.counters.credits_dropped,
                data_drops: port.counters.data_drops,
            });
        }
        self.last_sample = now;
    }
}

impl Handler<Ev> for World {
    fn handle(&mut self, sched: &mut Scheduler<Ev>, ev: Ev) {
        let now = sched.now();
        self.last_event = now;
        match ev {
            Ev::FlowStart(id) => {
                let f = id as usize;
                self.flows[f].started = true;
                match &mut self.flows[f].ep {
                    Endpoint::Xpass { .. } => {
                        let req = Packet::control(PacketKind::CreditRequest, id, Direction::Forward, now);
                        self.send(sched, req);
                    }
                    Endpoint::Dctcp { tx, .. } => {
                        let segs = tx.send_ready(now);
                        self.dctcp_emit(sched, f, segs);
                    }
                }
            }
            Ev::FlowStop(id) => {
                let f = id as usize;
                let flow = &mut self.flows[f];
                if flow.done() {
                    return;
                }
                flow.stopped = true;
                self.remaining -= 1;
                if let Endpoint::Xpass { tx, .. } = &mut flow.ep {
                    tx.abort();
                    let stop = Packet::control(PacketKind::CreditStop, id, Direction::Forward, now);
                    self.send(sched, stop);
                }
            }
            Ev::Arrive(p, pkt) => self.arrive(sched, p, *pkt),
            Ev::TxDone(p) => {
                self.net.port_mut(p).complete_transmission();
                self.kick(sched, p);
            }
            Ev::Wake(p) => {
                self.net.port_mut(p).clear_wake(now);
                self.kick(sched, p);
            }
            Ev::Credit(id) => {
                let f = id as usize;
                let Endpoint::Xpass { rx, .. } = &self.flows[f].ep else { return };
                if rx.phase != Phase::CreditFlowing {
                    return;
                }
                if rx.config().nic_clocked {
                    let nic = self.net.port(self.flows[f].route.credit[0]);
                    let ready = nic.shaper().next(now);
                    if nic.credit_pkts() == 0 && ready > now {
                        sched.schedule(ready, Ev::Credit(id)).expect("future");
                        return;
                    }
                }
                let Endpoint::Xpass { rx, rng, .. } = &mut self.flows[f].ep else { return };
                let (seq, next) = rx.generate_credit(now, rng).expect("credit generation");
                sched.schedule(next, Ev::Credit(id)).expect("future");
                let c = Packet::credit(id, seq, now);
                self.send(sched, c);
            }
            Ev::Update(id) => {
                let Endpoint::Xpass { rx, .. } = &mut self.flows[id as usize].ep else { return };
                if rx.phase != Phase::CreditFlowing {
                    return;
                }
                rx.on_update_timer(now);
                sched.schedule_in(rx.period(), Ev::Update(id));
            }
            Ev::Rto(id) => {
                let f = id as usize;
                let stopped = self.flows[f].stopped;
                let Endpoint::Dctcp { tx, rto_pending, .. } = &mut self.flows[f].ep else { return };
                *rto_pending = false;
                if stopped {
                    return;
                }
                match tx.rto_deadline {
                    None => {}
                    Some(d) if d > now => {
                        *rto_pending = true;
                        sched.schedule(d, Ev::Rto(id)).expect("future");
                    }
                    Some(_) => {
                        tx.on_timer(now);
                        let segs = tx.send_ready(now);
                        self.dctcp_emit(sched, f, segs);
                    }
                }
            }
            Ev::Snapshot => {
                self.snapshot = Some(self.net.ports.iter().map(|p| p.counters.clone()).collect());
                for f in &mut self.flows {
                    f.wire_at_snapshot = f.delivered_wire;
                }
            }
            Ev::Sample => {
                self.sample(now);
                let more = !(self.cfg.stop_when_done && self.remaining == 0 && self.flows.iter().all(|f| f.started));
                if more {
                    sched.schedule_in(self.cfg.sample_period, Ev::Sample);
                }
            }
        }
    }
}

/// Builds and runs a scenario.
pub fn run(topo: Topology, flows: Vec<FlowSpec>, cfg: SimConfig) -> Result<RunResult> {
    World::new(topo, flows, cfg)?.run()
}
