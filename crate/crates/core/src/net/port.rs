use std::collections::VecDeque;

use super::packet::{Packet, PacketKind, CREDIT_SLOT, MAX_DATA_WIRE, PREAMBLE_IPG};
use super::{LinkId, NodeId, PortId};
use crate::error::{Error, Result};
use crate::sim::SimTime;

/// Single-depth credit pacer: one 84-byte credit per 1622 byte-times of the link.
/// No burst credit accumulates while idle beyond the one packet that may leave at once.
///
/// Slots follow a schedule rather than the actual departures: a credit held back by
/// a data frame does not push later slots back, up to one data-frame time of lag.
#[derive(Debug, Clone)]
pub struct CreditShaper {
    gap: SimTime,
    next_eligible: SimTime,
}

impl CreditShaper {
    pub fn new(rate_bps: u64) -> Self {
        CreditShaper {
            gap: SimTime::serialization(CREDIT_SLOT as u64, rate_bps),
            next_eligible: SimTime::ZERO,
        }
    }

    pub fn gap(&self) -> SimTime {
        self.gap
    }

    /// Earliest departure time for the head credit.
    pub fn next(&self, now: SimTime) -> SimTime {
        now.max(self.next_eligible)
    }

    /// `eligible` is when the departing credit could first have left.
    fn consume(&mut self, eligible: SimTime, now: SimTime, max_lag: SimTime) {
        let floor = (now + self.gap).saturating_sub(max_lag);
        self.next_eligible = (eligible + self.gap).max(floor);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CreditEnqueue {
    Accepted,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataEnqueue {
    Accepted { marked: bool },
    Dropped,
}

/// What the port should do now that it is free to transmit.
#[derive(Debug)]
pub enum TxDecision {
    Send(Packet),
    /// A credit is queued but the shaper holds it until this time.
    WaitUntil(SimTime),
    Idle,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PortCounters {
    pub credits_sent: u64,
    pub credit_bytes_sent: u64,
    pub credits_dropped: u64,
    /// Wire bytes of everything that went through the data queue.
    pub data_queue_bytes_sent: u64,
    /// Frame bytes (wire minus preamble/IPG) of `Data` packets only.
    pub data_frame_bytes_sent: u64,
    pub data_wire_bytes_sent: u64,
    pub data_pkts_sent: u64,
    pub data_drops: u64,
    pub ecn_marks: u64,
    pub max_data_bytes: u64,
    pub max_credit_pkts: u64,
}

#[derive(Debug, Clone)]
pub struct PortParams {
    pub data_capacity_bytes: u64,
    pub credit_capacity_pkts: usize,
    pub ecn_threshold_pkts: Option<u32>,
}

impl Default for PortParams {
    fn default() -> Self {
        PortParams {
            data_capacity_bytes: 100 * MAX_DATA_WIRE as u64,
            credit_capacity_pkts: 16,
            ecn_threshold_pkts: None,
        }
    }
}

/// One direction of a link: the egress side on `node` towards `peer`.
#[derive(Debug, Clone)]
pub struct Port {
    pub id: PortId,
    pub node: NodeId,
    pub peer: NodeId,
    pub link: LinkId,
    pub rate_bps: u64,
    pub delay: SimTime,
    params: PortParams,
    data_q: VecDeque<Packet>,
    data_bytes: u64,
    credit_q: VecDeque<Packet>,
    shaper: CreditShaper,
    busy: bool,
    wake_at: Option<SimTime>,
    pub counters: PortCounters,
}

impl Port {
    pub fn new(
        id: PortId,
        node: NodeId,
        peer: NodeId,
        link: LinkId,
        rate_bps: u64,
        delay: SimTime,
        params: PortParams,
    ) -> Self {
        Port {
            id,
            node,
            peer,
            link,
            rate_bps,
            delay,
            params,
            data_q: VecDeque::new(),
            data_bytes: 0,
            credit_q: VecDeque::new(),
            shaper: CreditShaper::new(rate_bps),
            busy: false,
            wake_at: None,
            counters: PortCounters::default(),
        }
    }

    pub fn params(&self) -> &PortParams {
        &self.params
    }
    pub fn data_bytes(&self) -> u64 {
        self.data_bytes
    }
    pub fn data_pkts(&self) -> usize {
        self.data_q.len()
    }
    pub fn credit_pkts(&self) -> usize {
        self.credit_q.len()
    }
    pub fn is_busy(&self) -> bool {
        self.busy
    }
    pub fn shaper(&self) -> &CreditShaper {
        &self.shaper
    }

    /// Drop-tail admission into the credit queue.
    pub fn enqueue_credit(&mut self, mut pkt: Packet, now: SimTime) -> Result<CreditEnqueue> {
        if pkt.kind != PacketKind::Credit {
            return Err(Error::NotACredit(pkt.kind));
        }
        if self.credit_q.len() >= self.params.credit_capacity_pkts {
            self.counters.credits_dropped += 1;
            return Ok(CreditEnqueue::Dropped);
        }
        pkt.enqueued = now;
        self.credit_q.push_back(pkt);
        self.counters.max_credit_pkts = self.counters.max_credit_pkts.max(self.credit_q.len() as u64);
        Ok(CreditEnqueue::Accepted)
    }

    /// Byte-capacity FIFO admission; ECN-capable packets are CE-marked when the
    /// queue already holds more than K packets.
    pub fn enqueue_data(&mut self, mut pkt: Packet, now: SimTime) -> DataEnqueue {
        debug_assert!(pkt.kind != PacketKind::Credit);
        let size = pkt.wire_size as u64;
        if self.data_bytes + size > self.params.data_capacity_bytes {
            self.counters.data_drops += 1;
            return DataEnqueue::Dropped;
        }
        let mut marked = false;
        if let Some(k) = self.params.ecn_threshold_pkts {
            if pkt.ecn_capable && ecn_mark(self.data_q.len(), k) {
                pkt.ecn_ce = true;
                marked = true;
                self.counters.ecn_marks += 1;
            }
        }
        pkt.enqueued = now;
        self.data_bytes += size;
        self.data_q.push_back(pkt);
        self.counters.max_data_bytes = self.counters.max_data_bytes.max(self.data_bytes);
        DataEnqueue::Accepted { marked }
    }

    /// Earliest time the head credit may leave. `None` if no credit is queued.
    pub fn credit_shaper_next(&self, now: SimTime) -> Option<SimTime> {
        if self.credit_q.is_empty() {
            None
        } else {
            Some(self.shaper.next(now))
        }
    }

    /// Picks the next packet. Data has strict priority, except that a credit which
    /// has been eligible for a full data-frame time goes first.
    pub fn select_next(&mut self, now: SimTime) -> TxDecision {
        if self.busy {
            return TxDecision::Idle;
        }
        let credit_at = self.credit_shaper_next(now);
        let credit_ready = credit_at.is_some_and(|t| t <= now);
        let max_frame = SimTime::serialization(MAX_DATA_WIRE as u64, self.rate_bps);
        let eligible = self.credit_q.front().map(|c| self.shaper.next_eligible.max(c.enqueued));
        let overdue = credit_ready && eligible.is_some_and(|e| e + max_frame <= now);
        if !self.data_q.is_empty() && !overdue {
            let pkt = self.data_q.pop_front().expect("non-empty");
            self.data_bytes -= pkt.wire_size as u64;
            return TxDecision::Send(pkt);
        }
        if credit_ready {
            self.shaper.consume(eligible.expect("credit ready"), now, max_frame);
            return TxDecision::Send(self.credit_q.pop_front().expect("non-empty"));
        }
        match credit_at {
            Some(t) => TxDecision::WaitUntil(t),
            None => TxDecision::Idle,
        }
    }

    /// Starts serializing `pkt`; returns the serialization time. The port is busy
    /// until `complete_transmission` is called.
    pub fn transmit(&mut self, pkt: &Packet) -> SimTime {
        debug_assert!(!self.busy, "port {} already transmitting", self.id);
        self.busy = true;
        let wire = pkt.wire_size as u64;
        match pkt.kind {
            PacketKind::Credit => {
                self.counters.credits_sent += 1;
                self.counters.credit_bytes_sent += wire;
            }
            kind => {
                self.counters.data_queue_bytes_sent += wire;
                if kind == PacketKind::Data {
                    self.counters.data_pkts_sent += 1;
                    self.counters.data_wire_bytes_sent += wire;
                    self.counters.data_frame_bytes_sent += wire - PREAMBLE_IPG as u64;
                }
            }
        }
        SimTime::serialization(wire, self.rate_bps)
    }

    pub fn complete_transmission(&mut self) {
        self.busy = false;
    }

    /// Records a pending shaper wake-up. Returns false if one at or before `t` is
    /// already outstanding.
    pub fn arm_wake(&mut self, t: SimTime) -> bool {
        match self.wake_at {
            Some(w) if w <= t => false,
            _ => {
                self.wake_at = Some(t);
                true
            }
        }
    }

    pub fn clear_wake(&mut self, t: SimTime) {
        if self.wake_at == Some(t) {
            self.wake_at = None;
        }
    }
}

/// DCTCP threshold marking: mark iff the instantaneous queue exceeds K packets.
pub fn ecn_mark(depth_pkts: usize, k: u32) -> bool {
    depth_pkts > k as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::packet::Direction;

    const TEN_G: u64 = 10_000_000_000;

    fn port(params: PortParams) -> Port {
        Port::new(0, 0, 1, 0, TEN_G, SimTime::from_micros(1), params)
    }

    #[test]
    fn credit_queue_accepts_until_full() {
        let mut p = port(PortParams::default());
        for i in 0..16 {
            let r = p.enqueue_credit(Packet::credit(1, i, SimTime::ZERO), SimTime::ZERO).unwrap();
            assert_eq!(r, CreditEnqueue::Accepted);
        }
        let r = p.enqueue_credit(Packet::credit(1, 16, SimTime::ZERO), SimTime::ZERO).unwrap();
        assert_eq!(r, CreditEnqueue::Dropped);
        assert_eq!(p.counters.credits_dropped, 1);
        assert_eq!(p.credit_pkts(), 16);
    }

    #[test]
    fn credit_queue_rejects_data() {
        let mut p = port(PortParams::default());
        let err = p.enqueue_credit(Packet::data(1, 1500, SimTime::ZERO), SimTime::ZERO);
        assert!(matches!(err, Err(Error::NotACredit(PacketKind::Data))));
    }

    #[test]
    fn shaper_gap_at_10g_and_100g() {
        assert_eq!(CreditShaper::new(TEN_G).gap(), SimTime(1_297_600));
        assert_eq!(CreditShaper::new(100_000_000_000).gap(), SimTime(129_760));
        // 1538 bytes per 1297.6 ns is 9.482 Gbps of data.
        let gbps: f64 = 1538.0 * 8.0 / 1297.6;
        assert!((gbps - 9.482).abs() < 0.0005);
    }

    #[test]
    fn idle_shaper_releases_immediately_then_paces() {
        let mut p = port(PortParams::default());
        let t0 = SimTime::from_micros(50);
        for i in 0..3 {
            p.enqueue_credit(Packet::credit(1, i, t0), t0).unwrap();
        }
        assert_eq!(p.credit_shaper_next(t0), Some(t0));
        let TxDecision::Send(c) = p.select_next(t0) else { panic!() };
        p.transmit(&c);
        p.complete_transmission();
        let t1 = t0 + SimTime::serialization(84, TEN_G);
        match p.select_next(t1) {
            TxDecision::WaitUntil(t) => assert_eq!(t, t0 + SimTime(1_297_600)),
            other => panic!("{other:?}"),
        }
        // a long idle period does not bank more than one credit
        let later = t0 + SimTime::from_millis(1);
        let TxDecision::Send(_) = p.select_next(later) else { panic!() };
        p.transmit(&c);
        p.complete_transmission();
        assert!(matches!(p.select_next(later), TxDecision::WaitUntil(_)));
    }

    #[test]
    fn data_beats_eligible_credit_but_credit_never_starves() {
        let mut p = port(PortParams::default());
        let t = SimTime::ZERO;
        p.enqueue_credit(Packet::credit(1, 0, t), t).unwrap();
        for _ in 0..4 {
            p.enqueue_data(Packet::data(2, 1500, t), t);
        }
        let TxDecision::Send(first) = p.select_next(t) else { panic!() };
        assert_eq!(first.kind, PacketKind::Data);
        let ser = p.transmit(&first);
        p.complete_transmission();
        // one data frame later the credit has waited a full frame time and goes out
        let TxDecision::Send(second) = p.select_next(t + ser) else { panic!() };
        assert_eq!(second.kind, PacketKind::Credit);
    }

    #[test]
    fn credit_delayed_by_data_keeps_its_slot_schedule() {
        let mut p = port(PortParams::default());
        let t = SimTime::ZERO;
        let gap = SimTime(1_297_600);
        for i in 0..3 {
            p.enqueue_credit(Packet::credit(1, i, t), t).unwrap();
        }
        let TxDecision::Send(c0) = p.select_next(t) else { panic!() };
        let ser = p.transmit(&c0);
        p.complete_transmission();
        // a data frame starts just before the second slot opens
        let start = t + ser + SimTime::from_ps(100_000);
        p.enqueue_data(Packet::data(2, 1500, start), start);
        let TxDecision::Send(d) = p.select_next(start) else { panic!() };
        let busy_until = start + p.transmit(&d);
        p.complete_transmission();
        assert!(busy_until > gap);
        let TxDecision::Send(c1) = p.select_next(busy_until) else { panic!() };
        assert_eq!(c1.kind, PacketKind::Credit);
        p.transmit(&c1);
        p.complete_transmission();
        // the third slot is still two gaps after the first, not one gap after the late one
        match p.select_next(busy_until + ser) {
            TxDecision::WaitUntil(at) => assert_eq!(at, gap + gap),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serialization_times() {
        let mut p = port(PortParams::default());
        let d = Packet::data(1, 1500, SimTime::ZERO);
        assert_eq!(p.transmit(&d), SimTime::from_ps(1_230_400));
        p.complete_transmission();
        let c = Packet::credit(1, 0, SimTime::ZERO);
        assert_eq!(p.transmit(&c), SimTime::from_ps(67_200));
        p.complete_transmission();
        let ctl = Packet::control(PacketKind::CreditRequest, 1, Direction::Forward, SimTime::ZERO);
        assert_eq!(ctl.wire_size, 84);
    }

    #[test]
    fn data_queue_drops_on_byte_overflow() {
        let mut p = port(PortParams { data_capacity_bytes: 2 * 1538, ..Default::default() });
        assert!(matches!(p.enqueue_data(Packet::data(1, 1500, SimTime::ZERO), SimTime::ZERO), DataEnqueue::Accepted { .. }));
        assert!(matches!(p.enqueue_data(Packet::data(1, 1500, SimTime::ZERO), SimTime::ZERO), DataEnqueue::Accepted { .. }));
        assert_eq!(p.enqueue_data(Packet::data(1, 1500, SimTime::ZERO), SimTime::ZERO), DataEnqueue::Dropped);
        assert_eq!(p.counters.data_drops, 1);
        assert_eq!(p.counters.max_data_bytes, 2 * 1538);
    }

    #[test]
    fn ecn_threshold() {
        assert!(!ecn_mark(64, 65));
        assert!(!ecn_mark(65, 65));
        assert!(ecn_mark(66, 65));
        assert!(!ecn_mark(650, 650));
        assert!(ecn_mark(651, 650));
    }

    #[test]
    fn enqueue_marks_above_k() {
        let mut p = port(PortParams { ecn_threshold_pkts: Some(2), ..Default::default() });
        let mut marks = vec![];
        for _ in 0..5 {
            let mut d = Packet::data(1, 1500, SimTime::ZERO);
            d.ecn_capable = true;
            marks.push(p.enqueue_data(d, SimTime::ZERO));
        }
        let marked: Vec<bool> = marks
            .iter()
            .map(|m| matches!(m, DataEnqueue::Accepted { marked: true }))
            .collect();
        assert_eq!(marked, vec![false, false, false, true, true]);
    }
}
