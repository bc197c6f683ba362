//! Discrete-event core: picosecond clock, ordered event queue, seeded RNG streams.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Simulated time in integer picoseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

pub const PS_PER_NS: u64 = 1_000;
pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_MS: u64 = 1_000_000_000;
pub const PS_PER_SEC: u64 = 1_000_000_000_000;

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }
    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns * PS_PER_NS)
    }
    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * PS_PER_US)
    }
    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * PS_PER_MS)
    }

    /// Rounds to the nearest picosecond; negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime::ZERO;
        }
        SimTime((s * PS_PER_SEC as f64).round() as u64)
    }

    pub const fn ps(self) -> u64 {
        self.0
    }
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_SEC as f64
    }
    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 / PS_PER_US as f64
    }

    /// Time to put `bytes` on a wire of `rate_bps`, rounded up to the next picosecond.
    /// Exact for every byte count at 10/20/25/40/50/100 Gbps.
    pub fn serialization(bytes: u64, rate_bps: u64) -> Self {
        assert!(rate_bps > 0, "link rate must be positive");
        let num = bytes as u128 * 8 * PS_PER_SEC as u128;
        let rate = rate_bps as u128;
        SimTime(num.div_ceil(rate) as u64)
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

/// Identifies a scheduled event; usable for cancellation until it is dispatched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seqno(self) -> u64 {
        self.0
    }
}

#[derive(Debug)]
struct Entry<E> {
    time: SimTime,
    seqno: u64,
    action: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seqno) == (other.time, other.seqno)
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seqno).cmp(&(other.time, other.seqno))
    }
}

/// Counters for the conservation check: scheduled = dispatched + cancelled + pending.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SchedulerStats {
    pub scheduled: u64,
    pub dispatched: u64,
    pub cancelled: u64,
    pub pending: u64,
}

/// Event queue plus clock. Events fire in `(time, seqno)` order; `seqno` is
/// assigned at scheduling time, so equal-time events fire FIFO.
pub struct Scheduler<E> {
    now: SimTime,
    next_seqno: u64,
    heap: BinaryHeap<Reverse<Entry<E>>>,
    cancelled: HashSet<u64>,
    dispatched: u64,
    cancelled_count: u64,
    trace: Option<Vec<String>>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seqno: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            dispatched: 0,
            cancelled_count: 0,
            trace: None,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, time: SimTime, action: E) -> Result<EventHandle> {
        if time < self.now {
            return Err(Error::PastEvent {
                at: time,
                now: self.now,
            });
        }
        let seqno = self.next_seqno;
        self.next_seqno += 1;
        self.heap.push(Reverse(Entry {
            time,
            seqno,
            action,
        }));
        Ok(EventHandle(seqno))
    }

    /// Schedules `delay` after the current clock. Cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, action: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, action)
            .expect("relative schedule is never in the past")
    }

    /// Returns false if the handle was already dispatched or cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seqno || self.cancelled.contains(&handle.0) {
            return false;
        }
        let pending = self.heap.iter().any(|e| e.0.seqno == handle.0);
        if !pending {
            return false;
        }
        self.cancelled.insert(handle.0);
        self.cancelled_count += 1;
        true
    }

    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn stats(&self) -> SchedulerStats {
        SchedulerStats {
            scheduled: self.next_seqno,
            dispatched: self.dispatched,
            cancelled: self.cancelled_count,
            pending: self.pending() as u64,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Option<Vec<String>> {
        self.trace.take()
    }

    fn pop_due(&mut self, t_end: SimTime) -> Option<Entry<E>> {
        loop {
            let head = self.heap.peek()?;
            if head.0.time > t_end {
                return None;
            }
            let entry = self.heap.pop().expect("peeked").0;
            if self.cancelled.remove(&entry.seqno) {
                continue;
            }
            return Some(entry);
        }
    }
}

/// Receives dispatched events. The handler may schedule further events.
pub trait Handler<E> {
    fn handle(&mut self, sched: &mut Scheduler<E>, action: E);
}

impl<E: fmt::Debug> Scheduler<E> {
    /// Dispatches every event with `time <= t_end`, then parks the clock at `t_end`.
    pub fn run_until<H: Handler<E>>(&mut self, t_end: SimTime, handler: &mut H) -> u64 {
        let mut count = 0;
        while let Some(entry) = self.pop_due(t_end) {
            debug_assert!(entry.time >= self.now, "clock went backwards");
            self.now = entry.time;
            if let Some(trace) = self.trace.as_mut() {
                trace.push(format!("{} {} {:?}", entry.time.0, entry.seqno, entry.action));
            }
            self.dispatched += 1;
            count += 1;
            handler.handle(self, entry.action);
        }
        if t_end > self.now {
            self.now = t_end;
        }
        count
    }
}

/// Independent, reproducible random stream. Same `(seed, stream)` gives the same
/// draws on every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.gen_range(0..n)
    }

    /// Exponential with the given mean.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        let u: f64 = 1.0 - self.unit();
        -mean * u.ln()
    }

    /// Draw uniform in `[center*(1-fraction), center*(1+fraction)]`.
    pub fn uniform_jitter(&mut self, center: SimTime, fraction: f64) -> Result<SimTime> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidJitter(fraction));
        }
        if fraction == 0.0 {
            return Ok(center);
        }
        let c = center.0 as f64;
        let lo = c * (1.0 - fraction);
        let span = 2.0 * c * fraction;
        let v = (lo + span * self.unit()).round();
        // Rounding can step one tick outside the closed interval; clamp it back.
        let lo_tick = lo.ceil() as u64;
        let hi_tick = (c * (1.0 + fraction)).floor() as u64;
        Ok(SimTime((v as u64).clamp(lo_tick, hi_tick.max(lo_tick))))
    }
}
