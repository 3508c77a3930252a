//! Deterministic discrete-event engine.
//!
//! Events are ordered by `(time, seq)` where `seq` is issued at insertion,
//! so two events scheduled for the same instant dispatch in the order they
//! were scheduled. Time is kept in integer picoseconds.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{self, Write};
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Picoseconds in one second.
pub const PS_PER_SEC: u64 = 1_000_000_000_000;
pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_NS: u64 = 1_000;

/// Simulation time in integer picoseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * PS_PER_NS)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * PS_PER_US)
    }

    /// Rounds to the nearest picosecond.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * PS_PER_SEC as f64).round() as u64)
    }

    /// Rounds to the nearest picosecond.
    pub fn from_us_f64(us: f64) -> Self {
        SimTime((us * PS_PER_US as f64).round() as u64)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_SEC as f64
    }

    pub fn as_us_f64(self) -> f64 {
        self.0 as f64 / PS_PER_US as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
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

/// Identifier of a scheduled event. Equal to its insertion sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DesError {
    #[error("event scheduled in the past: at {at}, clock is {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

/// A dispatched event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<K> {
    pub time: SimTime,
    pub seq: u64,
    pub kind: K,
}

struct Entry<K>(Event<K>);

impl<K> PartialEq for Entry<K> {
    fn eq(&self, other: &Self) -> bool {
        self.0.time == other.0.time && self.0.seq == other.0.seq
    }
}

impl<K> Eq for Entry<K> {}

impl<K> PartialOrd for Entry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// BinaryHeap is a max-heap; reverse so the smallest (time, seq) pops first.
impl<K> Ord for Entry<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

/// Receives events from [`Scheduler::run_until`].
pub trait Handler<K> {
    type Error;

    fn handle(&mut self, sched: &mut Scheduler<K>, event: Event<K>) -> Result<(), Self::Error>;
}

/// Global clock plus pending-event queue.
pub struct Scheduler<K> {
    queue: BinaryHeap<Entry<K>>,
    now: SimTime,
    next_seq: u64,
    dispatched: u64,
    trace: Option<Box<dyn Write + Send>>,
    trace_error: Option<io::Error>,
}

impl<K> Default for Scheduler<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> Scheduler<K> {
    pub fn new() -> Self {
        Scheduler {
            queue: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            dispatched: 0,
            trace: None,
            trace_error: None,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Total events dispatched over the scheduler's lifetime.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, at: SimTime, kind: K) -> Result<EventId, DesError> {
        if at < self.now {
            return Err(DesError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Entry(Event { time: at, seq, kind }));
        Ok(EventId(seq))
    }

    /// Time of the earliest pending event.
    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|e| e.0.time)
    }

    /// Dispatches every event with `time <= t_end` in `(time, seq)` order,
    /// then leaves the clock at `t_end` (or where it was, if later).
    pub fn run_until<H>(&mut self, t_end: SimTime, handler: &mut H) -> Result<u64, H::Error>
    where
        H: Handler<K>,
        K: fmt::Display,
    {
        let mut count = 0;
        while let Some(top) = self.queue.peek() {
            if top.0.time > t_end {
                break;
            }
            let Entry(event) = self.queue.pop().expect("peeked");
            debug_assert!(event.time >= self.now);
            self.now = event.time;
            if self.trace.is_some() {
                self.write_trace(&event);
            }
            count += 1;
            self.dispatched += 1;
            handler.handle(self, event)?;
        }
        if t_end > self.now {
            self.now = t_end;
        }
        Ok(count)
    }

    /// Emit one line per dispatched event: `time_ps seq kind`.
    pub fn set_trace(&mut self, sink: Box<dyn Write + Send>) {
        self.trace = Some(sink);
    }

    /// Flushes the trace sink and reports the first write error, if any.
    pub fn finish_trace(&mut self) -> io::Result<()> {
        if let Some(err) = self.trace_error.take() {
            return Err(err);
        }
        match self.trace.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    fn write_trace(&mut self, event: &Event<K>)
    where
        K: fmt::Display,
    {
        if self.trace_error.is_some() {
            return;
        }
        if let Some(w) = self.trace.as_mut() {
            if let Err(e) = writeln!(w, "{} {} {}", event.time.as_ps(), event.seq, event.kind) {
                self.trace_error = Some(e);
            }
        }
    }
}
