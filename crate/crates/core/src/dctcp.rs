//! Window-based ECN baseline.
//!
//! Packet-granular: the window counts MTU-sized segments, every segment is
//! acknowledged individually with a cumulative ack, and the receiver buffers
//! out-of-order segments. Loss recovery is fast retransmit with partial-ack
//! retransmission, falling back to a retransmission timeout with go-back-N.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::net::MTU_PAYLOAD;
use crate::sim::SimTime;

const TEN_G: f64 = 10e9;

#[derive(Debug, Clone, PartialEq)]
pub struct DctcpConfig {
    /// Marking threshold in packets; `None` scales with link rate.
    pub k_pkts: Option<u32>,
    /// EWMA gain; `None` scales with link rate.
    pub g: Option<f64>,
    pub init_cwnd: f64,
    pub init_alpha: f64,
    pub min_rto: SimTime,
    pub dupack_threshold: u32,
}

impl Default for DctcpConfig {
    fn default() -> Self {
        DctcpConfig {
            k_pkts: None,
            g: None,
            init_cwnd: 10.0,
            init_alpha: 1.0,
            min_rto: SimTime::from_micros(200),
            dupack_threshold: 3,
        }
    }
}

/// Threshold scaled linearly from 65 packets at 10 Gbps.
pub fn scaled_k(rate_bps: u64) -> u32 {
    (65.0 * rate_bps as f64 / TEN_G).round().max(1.0) as u32
}

/// Gain scaled with the inverse square root of rate from 0.0625 at 10 Gbps.
pub fn scaled_g(rate_bps: u64) -> f64 {
    0.0625 * (TEN_G / rate_bps as f64).sqrt()
}

/// Switch buffer for baseline runs: 250 packets at 10 Gbps, linear in rate.
pub fn default_queue_pkts(rate_bps: u64) -> u64 {
    (250.0 * rate_bps as f64 / TEN_G).round().max(1.0) as u64
}

pub fn alpha_update(alpha: f64, f: f64, g: f64) -> f64 {
    ((1.0 - g) * alpha + g * f.clamp(0.0, 1.0)).clamp(0.0, 1.0)
}

pub fn window_cut(cwnd: f64, alpha: f64) -> f64 {
    (cwnd * (1.0 - alpha / 2.0)).max(1.0)
}

pub fn segments(size: u64) -> u64 {
    size.div_ceil(MTU_PAYLOAD as u64)
}

pub fn segment_payload(size: u64, idx: u64) -> u32 {
    let off = idx * MTU_PAYLOAD as u64;
    (size - off).min(MTU_PAYLOAD as u64) as u32
}

/// A segment the sender wants on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub idx: u64,
    pub payload: u32,
    pub retransmit: bool,
}

#[derive(Debug, Clone)]
pub struct DctcpState {
    pub cwnd: f64,
    pub ssthresh: f64,
    pub alpha: f64,
    pub g: f64,
    pub k_pkts: u32,
    size: u64,
    n_segs: u64,
    snd_una: u64,
    snd_nxt: u64,
    /// Highest segment ever sent plus one.
    snd_max: u64,
    window_end: u64,
    win_acked: u64,
    win_marked: u64,
    cut_this_window: bool,
    dupacks: u32,
    recover: Option<u64>,
    srtt: Option<f64>,
    rttvar: f64,
    rto_backoff: u32,
    min_rto: SimTime,
    dupack_threshold: u32,
    pub rto_deadline: Option<SimTime>,
    pub timeouts: u64,
    pub retransmits: u64,
    pub window_cuts: u64,
}

impl DctcpState {
    pub fn new(size: u64, rate_bps: u64, base_rtt: SimTime, cfg: &DctcpConfig) -> Result<Self> {
        if size == 0 {
            return Err(Error::config("flow size must be positive"));
        }
        if !(0.0..=1.0).contains(&cfg.init_alpha) {
            return Err(Error::config(format!("dctcp alpha {} outside [0,1]", cfg.init_alpha)));
        }
        let bdp = rate_bps as f64 * base_rtt.as_secs_f64() / (8.0 * MTU_PAYLOAD as f64);
        Ok(DctcpState {
            cwnd: cfg.init_cwnd.max(1.0),
            ssthresh: bdp.max(2.0),
            alpha: cfg.init_alpha,
            g: cfg.g.unwrap_or_else(|| scaled_g(rate_bps)),
            k_pkts: cfg.k_pkts.unwrap_or_else(|| scaled_k(rate_bps)),
            size,
            n_segs: segments(size),
            snd_una: 0,
            snd_nxt: 0,
            snd_max: 0,
            window_end: 0,
            win_acked: 0,
            win_marked: 0,
            cut_this_window: false,
            dupacks: 0,
            recover: None,
            srtt: None,
            rttvar: 0.0,
            rto_backoff: 0,
            min_rto: cfg.min_rto,
            dupack_threshold: cfg.dupack_threshold,
            rto_deadline: None,
            timeouts: 0,
            retransmits: 0,
            window_cuts: 0,
        })
    }

    pub fn done(&self) -> bool {
        self.snd_una >= self.n_segs
    }

    pub fn in_flight(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    pub fn rto(&self) -> SimTime {
        let base = match self.srtt {
            None => self.min_rto.0 as f64,
            Some(s) => (s + 4.0 * self.rttvar).max(self.min_rto.0 as f64),
        };
        SimTime::from_ps((base * f64::from(1u32 << self.rto_backoff.min(6))) as u64)
    }

    fn seg(&self, idx: u64, retransmit: bool) -> Segment {
        Segment { idx, payload: segment_payload(self.size, idx), retransmit }
    }

    fn arm(&mut self, now: SimTime) {
        self.rto_deadline = if self.in_flight() > 0 { Some(now + self.rto()) } else { None };
    }

    /// Segments allowed by the window right now.
    pub fn send_ready(&mut self, now: SimTime) -> Vec<Segment> {
        let mut out = Vec::new();
        let wnd = self.cwnd.floor().max(1.0) as u64;
        while self.snd_nxt < self.n_segs && self.in_flight() < wnd {
            let idx = self.snd_nxt;
            out.push(self.seg(idx, idx < self.snd_max));
            self.snd_nxt += 1;
            self.snd_max = self.snd_max.max(self.snd_nxt);
        }
        if !out.is_empty() && self.rto_deadline.is_none() {
            self.arm(now);
        }
        out
    }

    /// Handles a cumulative ack; returns segments to retransmit immediately.
    pub fn on_ack(&mut self, ack_next: u64, ecn_echo: bool, rtt_sample: Option<SimTime>, now: SimTime) -> Vec<Segment> {
        let mut out = Vec::new();
        if let Some(r) = rtt_sample {
            let r = r.0 as f64;
            match self.srtt {
                None => {
                    self.srtt = Some(r);
                    self.rttvar = r / 2.0;
                }
                Some(s) => {
                    self.rttvar = 0.75 * self.rttvar + 0.25 * (s - r).abs();
                    self.srtt = Some(0.875 * s + 0.125 * r);
                }
            }
        }
        if ack_next > self.snd_una {
            let newly = ack_next - self.snd_una;
            self.snd_una = ack_next;
            // a go-back-N resend may lag a late cumulative ack
            self.snd_nxt = self.snd_nxt.max(self.snd_una);
            self.dupacks = 0;
            self.rto_backoff = 0;
            self.win_acked += newly;
            if ecn_echo {
                self.win_marked += newly;
            }
            match self.recover {
                Some(r) if ack_next < r => {
                    self.retransmits += 1;
                    out.push(self.seg(ack_next, true));
                }
                Some(_) => self.recover = None,
                None => {}
            }
            if ecn_echo && !self.cut_this_window {
                self.cwnd = window_cut(self.cwnd, self.alpha);
                self.ssthresh = self.cwnd.max(2.0);
                self.cut_this_window = true;
                self.window_cuts += 1;
            } else if !ecn_echo && self.recover.is_none() {
                if self.cwnd < self.ssthresh {
                    self.cwnd += newly as f64;
                } else {
                    self.cwnd += newly as f64 / self.cwnd;
                }
            }
            if self.snd_una >= self.window_end {
                let f = self.win_marked as f64 / self.win_acked.max(1) as f64;
                self.alpha = alpha_update(self.alpha, f, self.g);
                self.win_acked = 0;
                self.win_marked = 0;
                self.cut_this_window = false;
                self.window_end = self.snd_nxt.max(self.snd_una + 1);
            }
            self.arm(now);
        } else if ack_next == self.snd_una && self.in_flight() > 0 {
            if ecn_echo {
                self.win_marked += 1;
                self.win_acked += 1;
            }
            self.dupacks += 1;
            if self.dupacks == self.dupack_threshold && self.recover.is_none() {
                self.recover = Some(self.snd_nxt);
                self.cwnd = (self.cwnd / 2.0).max(1.0);
                self.ssthresh = self.cwnd.max(2.0);
                self.retransmits += 1;
                out.push(self.seg(self.snd_una, true));
            }
        }
        out
    }

    /// Fires the retransmission timer if due. Returns whether it fired.
    pub fn on_timer(&mut self, now: SimTime) -> bool {
        match self.rto_deadline {
            Some(d) if d <= now && !self.done() => {
                self.timeouts += 1;
                self.ssthresh = (self.cwnd / 2.0).max(2.0);
                self.cwnd = 1.0;
                self.snd_nxt = self.snd_una;
                self.recover = None;
                self.dupacks = 0;
                self.rto_backoff += 1;
                self.rto_deadline = None;
                true
            }
            _ => false,
        }
    }
}

/// Cumulative-ack receiver with an out-of-order buffer.
#[derive(Debug, Clone, Default)]
pub struct DctcpReceiver {
    n_segs: u64,
    next: u64,
    ooo: BTreeSet<u64>,
    pub bytes_received: u64,
    pub duplicates: u64,
}

impl DctcpReceiver {
    pub fn new(size: u64) -> Self {
        DctcpReceiver { n_segs: segments(size), ..Default::default() }
    }

    /// Returns the cumulative ack to send back.
    pub fn on_data(&mut self, idx: u64, payload: u32) -> u64 {
        if idx < self.next || self.ooo.contains(&idx) {
            self.duplicates += 1;
        } else {
            self.bytes_received += payload as u64;
            self.ooo.insert(idx);
            while self.ooo.remove(&self.next) {
                self.next += 1;
            }
        }
        self.next
    }

    pub fn complete(&self) -> bool {
        self.next >= self.n_segs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ecn_mark;
    use proptest::prelude::*;

    #[test]
    fn marking_threshold() {
        assert!(!ecn_mark(64, 65));
        assert!(!ecn_mark(65, 65));
        assert!(ecn_mark(66, 65));
        assert!(!ecn_mark(650, scaled_k(100_000_000_000)));
        assert!(ecn_mark(651, scaled_k(100_000_000_000)));
    }

    #[test]
    fn rate_scaled_parameters() {
        assert_eq!(scaled_k(10_000_000_000), 65);
        assert_eq!(scaled_k(100_000_000_000), 650);
        assert_eq!(scaled_k(40_000_000_000), 260);
        assert!((scaled_g(10_000_000_000) - 0.0625).abs() < 1e-12);
        assert!((scaled_g(100_000_000_000) - 0.01976).abs() < 1e-5);
        assert!((scaled_g(40_000_000_000) - 0.03125).abs() < 1e-12);
        assert_eq!(default_queue_pkts(10_000_000_000), 250);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_update(0.0, 1.0, 0.0625), 0.0625);
        let mut a = 0.7;
        for _ in 0..500 {
            a = alpha_update(a, 0.0, 0.0625);
        }
        assert!(a < 1e-12);
        let mut a = 0.0;
        for _ in 0..500 {
            a = alpha_update(a, 1.0, 0.0625);
        }
        assert!((1.0 - a) < 1e-12);
    }

    #[test]
    fn cut_examples() {
        assert_eq!(window_cut(10.0, 1.0), 5.0);
        assert_eq!(window_cut(10.0, 0.0), 10.0);
        assert!((window_cut(10.0, 0.4) - 8.0).abs() < 1e-12);
        assert_eq!(window_cut(1.5, 1.0), 1.0);
    }

    proptest! {
        #[test]
        fn alpha_stays_in_unit_interval(a in 0.0f64..=1.0, fs in proptest::collection::vec(0.0f64..=1.0, 1..100), g in 0.001f64..1.0) {
            let mut a = a;
            for f in fs {
                a = alpha_update(a, f, g);
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }

        #[test]
        fn cut_never_below_one(c in 1.0f64..1e4, a in 0.0f64..=1.0) {
            let w = window_cut(c, a);
            prop_assert!(w >= 1.0 && w <= c);
        }
    }

    fn st(size: u64) -> DctcpState {
        DctcpState::new(size, 10_000_000_000, SimTime::from_micros(100), &DctcpConfig::default()).unwrap()
    }

    #[test]
    fn initial_window_and_slow_start() {
        let mut s = st(100 * 1500);
        let first = s.send_ready(SimTime::ZERO);
        assert_eq!(first.len(), 10);
        assert!(s.rto_deadline.is_some());
        s.on_ack(1, false, Some(SimTime::from_micros(100)), SimTime::from_micros(100));
        assert_eq!(s.cwnd, 11.0);
        assert_eq!(s.send_ready(SimTime::from_micros(100)).len(), 2);
    }

    #[test]
    fn one_cut_per_window() {
        let mut s = st(1000 * 1500);
        s.cwnd = 20.0;
        s.ssthresh = 10.0;
        s.alpha = 1.0;
        s.send_ready(SimTime::ZERO);
        // first ack closes the initial (empty) observation window
        s.on_ack(1, false, None, SimTime::ZERO);
        let (before, alpha) = (s.cwnd, s.alpha);
        assert_eq!(alpha, 0.9375);
        s.on_ack(2, true, None, SimTime::ZERO);
        assert_eq!(s.cwnd, window_cut(before, alpha));
        let after_cut = s.cwnd;
        s.on_ack(3, true, None, SimTime::ZERO);
        assert_eq!(s.cwnd, after_cut);
        assert_eq!(s.window_cuts, 1);
    }

    #[test]
    fn fast_retransmit_on_three_dupacks() {
        let mut s = st(100 * 1500);
        s.send_ready(SimTime::ZERO);
        // segment 0 lost; acks for 1,2,3 all say "next = 0"
        assert!(s.on_ack(0, false, None, SimTime::ZERO).is_empty());
        assert!(s.on_ack(0, false, None, SimTime::ZERO).is_empty());
        let r = s.on_ack(0, false, None, SimTime::ZERO);
        assert_eq!(r, vec![Segment { idx: 0, payload: 1500, retransmit: true }]);
        assert_eq!(s.cwnd, 5.0);
        // partial ack: segment 4 also lost
        let r = s.on_ack(4, false, None, SimTime::ZERO);
        assert_eq!(r[0].idx, 4);
        assert!(s.on_ack(10, false, None, SimTime::ZERO).is_empty());
    }

    #[test]
    fn timeout_goes_back_n() {
        let mut s = st(100 * 1500);
        s.send_ready(SimTime::ZERO);
        s.on_ack(3, false, None, SimTime::from_micros(10));
        let d = s.rto_deadline.unwrap();
        assert!(!s.on_timer(d - SimTime(1)));
        assert!(s.on_timer(d));
        assert_eq!(s.cwnd, 1.0);
        let resend = s.send_ready(d);
        assert_eq!(resend, vec![Segment { idx: 3, payload: 1500, retransmit: true }]);
        // backoff doubles
        assert_eq!(s.rto(), SimTime::from_micros(400));
    }

    #[test]
    fn tail_segment_and_completion() {
        let mut s = st(3100);
        let segs = s.send_ready(SimTime::ZERO);
        assert_eq!(segs.iter().map(|x| x.payload).collect::<Vec<_>>(), vec![1500, 1500, 100]);
        let mut r = DctcpReceiver::new(3100);
        assert_eq!(r.on_data(1, 1500), 0);
        assert_eq!(r.on_data(0, 1500), 2);
        assert!(!r.complete());
        assert_eq!(r.on_data(2, 100), 3);
        assert!(r.complete());
        assert_eq!(r.bytes_received, 3100);
        assert_eq!(r.on_data(2, 100), 3);
        assert_eq!(r.duplicates, 1);
        s.on_ack(3, false, None, SimTime::ZERO);
        assert!(s.done());
        assert_eq!(s.rto_deadline, None);
    }
}
