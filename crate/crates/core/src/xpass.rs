//! Credit-based endpoint state machines.
//!
//! The receiver paces credits at `cur_rate` with uniform jitter and adjusts the
//! rate once per update period: on any inferred credit loss it drops to the data
//! rate it actually received during the period, otherwise it moves halfway to
//! `max_rate`. The sender spends one credit per data frame; a credit that finds
//! nothing to send is discarded, and the receiver sees the hole in the echoed
//! sequence numbers as a loss.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::net::{wire_size, CREDIT_SLOT, MAX_DATA_WIRE, MTU_PAYLOAD};
use crate::sim::{RngStream, SimTime, PS_PER_SEC};

#[derive(Debug, Clone, PartialEq)]
pub struct XpassConfig {
    /// Jitter as a fraction of the inter-credit gap.
    pub jitter: f64,
    /// `initial_rate = max_rate * initial_rate_fraction`.
    pub initial_rate_fraction: f64,
    /// No echoes for this long while credits are outstanding counts as loss.
    pub min_rto: SimTime,
    /// EWMA gain for the credit-to-data round-trip estimate.
    pub rtt_gain: f64,
    /// Update period before the first round-trip sample.
    pub fallback_period: SimTime,
    /// `false` pins `cur_rate` at `max_rate` (naive credit sending).
    pub feedback: bool,
    /// Ignore holes left by credits issued before the last decrease.
    pub fresh_loss_only: bool,
    /// Hold a credit until the host NIC shaper can send it and time the next
    /// gap from the actual release, instead of queueing it at the NIC.
    pub nic_clocked: bool,
}

impl Default for XpassConfig {
    fn default() -> Self {
        XpassConfig {
            jitter: 0.01,
            initial_rate_fraction: 1.0 / 16.0,
            min_rto: SimTime::from_micros(200),
            rtt_gain: 0.5,
            fallback_period: SimTime::from_micros(100),
            feedback: true,
            fresh_loss_only: false,
            nic_clocked: false,
        }
    }
}

/// Credits per second an access link of `rate_bps` can shape.
pub fn max_credit_rate(rate_bps: u64) -> f64 {
    rate_bps as f64 / (CREDIT_SLOT as f64 * 8.0)
}

/// Rate controller state. Rates are credits per second.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackState {
    cur_rate: f64,
    max_rate: f64,
}

impl FeedbackState {
    pub fn new(initial_rate: f64, max_rate: f64) -> Self {
        assert!(max_rate > 0.0 && initial_rate > 0.0);
        FeedbackState {
            cur_rate: initial_rate.min(max_rate),
            max_rate,
        }
    }

    pub fn cur_rate(&self) -> f64 {
        self.cur_rate
    }
    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }

    /// One control step. `min_rate` keeps the flow alive when the measured rate is zero.
    pub fn feedback_update(&mut self, loss_detected: bool, avg_data_rate: f64, min_rate: f64) -> f64 {
        let min_rate = min_rate.min(self.max_rate);
        self.cur_rate = if loss_detected {
            avg_data_rate.clamp(min_rate, self.max_rate)
        } else {
            (self.cur_rate + self.max_rate) / 2.0
        };
        self.cur_rate
    }

    pub fn pin_to_max(&mut self) {
        self.cur_rate = self.max_rate;
    }
}

/// Sequence bookkeeping for one flow. The receiver issues and checks sequence
/// numbers; the sender accounts wasted credits and fragmentation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CreditLedger {
    next_seq: u64,
    highest_echoed: Option<u64>,
    pub credits_sent: u64,
    pub data_received: u64,
    pub losses: u64,
    pub period_credits_sent: u64,
    pub period_data_received: u64,
    pub period_losses: u64,
    pub wasted_credits: u64,
    pub fragmentation_bytes: u64,
    /// Holes below this sequence number predate the last decrease and are not
    /// counted in `period_losses`.
    pub fresh_from: u64,
}

impl CreditLedger {
    pub fn issue(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        self.credits_sent += 1;
        self.period_credits_sent += 1;
        s
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }
    pub fn highest_echoed(&self) -> Option<u64> {
        self.highest_echoed
    }

    /// Processes one echoed sequence number; returns the gap it reveals.
    pub fn detect_credit_loss(&mut self, echoed: u64) -> Result<u64> {
        if echoed >= self.next_seq {
            return Err(Error::Protocol(format!("echo of unissued credit {echoed}")));
        }
        let expected = match self.highest_echoed {
            Some(h) if echoed <= h => {
                return Err(Error::Protocol(format!(
                    "credit echo {echoed} not above {h}; reordering is unsupported"
                )))
            }
            Some(h) => h + 1,
            None => 0,
        };
        let gap = echoed - expected;
        self.highest_echoed = Some(echoed);
        self.data_received += 1;
        self.period_data_received += 1;
        self.losses += gap;
        self.period_losses += echoed - expected.max(self.fresh_from).min(echoed);
        Ok(gap)
    }

    fn reset_period(&mut self) {
        self.period_credits_sent = 0;
        self.period_data_received = 0;
        self.period_losses = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    AwaitingCreditRequest,
    CreditFlowing,
    /// Sender has emitted its last frame and is waiting out stray credits.
    Finishing,
    Done,
}

/// How fast the application hands bytes to the sender.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AppSource {
    Backlogged,
    /// Bytes become available at a constant rate from flow start, handed over
    /// in whole MTU-payload chunks.
    RateLimited { bytes_per_sec: f64 },
}

impl AppSource {
    pub fn available(&self, size: u64, elapsed: SimTime) -> u64 {
        match *self {
            AppSource::Backlogged => size,
            AppSource::RateLimited { bytes_per_sec } => {
                let b = (bytes_per_sec * elapsed.as_secs_f64()).floor() as u64;
                let chunk = MTU_PAYLOAD as u64;
                (b / chunk * chunk).min(size)
            }
        }
    }
}

/// Payload and flags for a data frame paid for by one credit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataGrant {
    pub credit_seq: u64,
    pub payload: u32,
    pub is_last: bool,
}

#[derive(Debug, Clone)]
pub struct XpassSender {
    pub size: u64,
    pub start: SimTime,
    pub app: AppSource,
    pub sent: u64,
    pub phase: Phase,
}

impl XpassSender {
    pub fn new(size: u64, start: SimTime, app: AppSource) -> Result<Self> {
        if size == 0 {
            return Err(Error::config("flow size must be positive"));
        }
        Ok(XpassSender {
            size,
            start,
            app,
            sent: 0,
            phase: Phase::CreditFlowing,
        })
    }

    pub fn remaining(&self) -> u64 {
        self.size - self.sent
    }

    /// Spends a credit. `None` means the credit expired unused.
    pub fn on_credit(&mut self, ledger: &mut CreditLedger, credit_seq: u64, now: SimTime) -> Option<DataGrant> {
        if self.phase != Phase::CreditFlowing {
            ledger.wasted_credits += 1;
            return None;
        }
        let available = self.app.available(self.size, now.saturating_sub(self.start));
        let ready = available.saturating_sub(self.sent);
        if ready == 0 {
            ledger.wasted_credits += 1;
            return None;
        }
        let payload = ready.min(MTU_PAYLOAD as u64) as u32;
        self.sent += payload as u64;
        ledger.fragmentation_bytes += (crate::net::MAX_DATA_WIRE - wire_size(payload)) as u64;
        let is_last = self.sent == self.size;
        if is_last {
            self.phase = Phase::Finishing;
        }
        Some(DataGrant { credit_seq, payload, is_last })
    }

    pub fn abort(&mut self) {
        self.phase = Phase::Done;
    }
}

/// One feedback step, kept for traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    pub time: SimTime,
    pub period: SimTime,
    pub loss: bool,
    pub timeout: bool,
    /// Payload bytes per second received during the period.
    pub avg_data_rate: f64,
    /// Credits per second after the update.
    pub cur_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataOutcome {
    pub losses: u64,
    pub finished: bool,
    pub rtt_sample: Option<SimTime>,
}

#[derive(Debug, Clone)]
pub struct XpassReceiver {
    pub phase: Phase,
    pub fb: FeedbackState,
    pub ledger: CreditLedger,
    cfg: XpassConfig,
    srtt: Option<SimTime>,
    outstanding: VecDeque<(u64, SimTime)>,
    period_start: SimTime,
    last_echo: SimTime,
    pub bytes_received: u64,
    period_bytes: u64,
    pub updates: Vec<UpdateRecord>,
}

impl XpassReceiver {
    pub fn new(max_rate: f64, cfg: XpassConfig) -> Self {
        let initial = if cfg.feedback {
            max_rate * cfg.initial_rate_fraction
        } else {
            max_rate
        };
        XpassReceiver {
            phase: Phase::AwaitingCreditRequest,
            fb: FeedbackState::new(initial, max_rate),
            ledger: CreditLedger::default(),
            cfg,
            srtt: None,
            outstanding: VecDeque::new(),
            period_start: SimTime::ZERO,
            last_echo: SimTime::ZERO,
            bytes_received: 0,
            period_bytes: 0,
            updates: Vec::new(),
        }
    }

    pub fn config(&self) -> &XpassConfig {
        &self.cfg
    }

    /// Credit request arrived: start pacing credits.
    pub fn on_credit_request(&mut self, now: SimTime) {
        if self.phase == Phase::AwaitingCreditRequest {
            self.phase = Phase::CreditFlowing;
            self.period_start = now;
            self.last_echo = now;
        }
    }

    pub fn srtt(&self) -> Option<SimTime> {
        self.srtt
    }

    /// Current update period: smoothed credit-to-data round trip, or the fallback.
    pub fn period(&self) -> SimTime {
        self.srtt.unwrap_or(self.cfg.fallback_period)
    }

    pub fn credit_gap(&self) -> SimTime {
        SimTime::from_secs_f64(1.0 / self.fb.cur_rate())
    }

    /// Issues the next credit and the time of the one after it.
    pub fn generate_credit(&mut self, now: SimTime, rng: &mut RngStream) -> Result<(u64, SimTime)> {
        if self.phase != Phase::CreditFlowing {
            return Err(Error::Protocol("credit generation outside CreditFlowing".into()));
        }
        let seq = self.ledger.issue();
        self.outstanding.push_back((seq, now));
        let gap = rng.uniform_jitter(self.credit_gap(), self.cfg.jitter)?;
        Ok((seq, now + gap.max(SimTime(1))))
    }

    pub fn on_data(&mut self, credit_seq: u64, payload: u32, is_last: bool, now: SimTime) -> Result<DataOutcome> {
        let losses = self.ledger.detect_credit_loss(credit_seq)?;
        self.bytes_received += payload as u64;
        self.period_bytes += payload as u64;
        self.last_echo = now;
        let mut rtt_sample = None;
        while let Some(&(seq, sent)) = self.outstanding.front() {
            if seq > credit_seq {
                break;
            }
            self.outstanding.pop_front();
            if seq == credit_seq {
                rtt_sample = Some(now - sent);
            }
        }
        if let Some(rtt) = rtt_sample {
            self.srtt = Some(match self.srtt {
                None => rtt,
                Some(s) => {
                    let g = self.cfg.rtt_gain;
                    SimTime::from_ps(((1.0 - g) * s.0 as f64 + g * rtt.0 as f64).round() as u64)
                }
            });
        }
        if is_last {
            self.phase = Phase::Done;
        }
        Ok(DataOutcome { losses, finished: is_last, rtt_sample })
    }

    /// Explicit stop from the sender.
    pub fn on_credit_stop(&mut self) {
        self.phase = Phase::Done;
    }

    /// End of an update period. Returns the record and the next period length.
    pub fn on_update_timer(&mut self, now: SimTime) -> UpdateRecord {
        let elapsed = now.saturating_sub(self.period_start).max(SimTime(1));
        let avg = self.period_bytes as f64 * PS_PER_SEC as f64 / elapsed.0 as f64;
        let rto = self.cfg.min_rto;
        let timeout = self
            .outstanding
            .front()
            .is_some_and(|&(_, sent)| sent + rto <= now && self.last_echo + rto <= now);
        let loss = self.ledger.period_losses > 0 || timeout;
        if timeout {
            self.outstanding.clear();
        }
        let period = self.period();
        if self.cfg.feedback {
            let min_rate = PS_PER_SEC as f64 / period.0 as f64;
            // one credit pays for one full-size frame on the wire
            self.fb.feedback_update(loss, avg / MAX_DATA_WIRE as f64, min_rate);
            if loss && self.cfg.fresh_loss_only {
                self.ledger.fresh_from = self.ledger.next_seq();
            }
        }
        self.ledger.reset_period();
        self.period_bytes = 0;
        self.period_start = now;
        let rec = UpdateRecord {
            time: now,
            period,
            loss,
            timeout,
            avg_data_rate: avg,
            cur_rate: self.fb.cur_rate(),
        };
        self.updates.push(rec);
        rec
    }
}
