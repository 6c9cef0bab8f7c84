//! Discrete-event core: virtual clock, `(fire_time, seq)`-ordered queue and
//! a running digest of the dispatch trace.
//!
//! Virtual time is an integer count of microseconds. Events scheduled for
//! the same instant fire in insertion order.

mod rng;

pub use rng::{Dist, RngStream, RngStreams, Sample, STREAM_NAMES};

use alloc::collections::BinaryHeap;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual time in microseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    /// Rounds to the nearest microsecond; negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime::ZERO;
        }
        let us = libm::round(s * 1e6);
        if us >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(us as u64)
        }
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn saturating_add(self, d: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(d.0))
    }

    pub fn saturating_sub(self, d: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(d.0))
    }
}

impl core::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// Event tag carried in the dispatch trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    RequestArrival,
    RequestComplete,
    TelemetryTick,
    FaultInject,
    FaultClear,
    MapeTick,
    ActionComplete,
}

impl EventKind {
    pub const fn tag(self) -> u8 {
        match self {
            EventKind::RequestArrival => 1,
            EventKind::RequestComplete => 2,
            EventKind::TelemetryTick => 3,
            EventKind::FaultInject => 4,
            EventKind::FaultClear => 5,
            EventKind::MapeTick => 6,
            EventKind::ActionComplete => 7,
        }
    }
}

/// Payloads placed on the queue report their kind for the trace digest.
pub trait SimEvent {
    fn kind(&self) -> EventKind;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId(pub u64);

/// An event popped from the queue.
#[derive(Clone, Debug)]
pub struct Scheduled<E> {
    pub fire_time: SimTime,
    pub seq: u64,
    pub event: E,
}

impl<E> Scheduled<E> {
    pub fn id(&self) -> EventId {
        EventId(self.seq)
    }
}

struct Entry<E> {
    fire_time: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_time == other.fire_time && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .cmp(&self.fire_time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("cannot schedule at {at}: clock is already at {now}")]
    InPast { at: SimTime, now: SimTime },
    #[error("run_until({t_end}) is behind the clock ({now})")]
    EndInPast { t_end: SimTime, now: SimTime },
}

/// Handler failure annotated with the event that triggered it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("handler failed on {kind:?} event #{seq} at {at}: {source}")]
pub struct RunError<H: core::error::Error + 'static> {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    #[source]
    pub source: H,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub events_fired: u64,
    pub clock: SimTime,
}

/// FNV-1a over `(fire_time, seq, kind)` of every dispatched event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDigest(pub u64);

impl Default for TraceDigest {
    fn default() -> Self {
        TraceDigest(FNV_OFFSET)
    }
}

pub(crate) const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
pub(crate) const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl TraceDigest {
    pub fn absorb(&mut self, fire_time: SimTime, seq: u64, kind: EventKind) {
        let mut h = fnv1a(self.0, &fire_time.0.to_le_bytes());
        h = fnv1a(h, &seq.to_le_bytes());
        self.0 = fnv1a(h, &[kind.tag()]);
    }
}

/// Ordered event queue plus the virtual clock.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    digest: TraceDigest,
    fired: u64,
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
            next_seq: 0,
            heap: BinaryHeap::new(),
            digest: TraceDigest::default(),
            fired: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn events_fired(&self) -> u64 {
        self.fired
    }

    pub fn digest(&self) -> TraceDigest {
        self.digest
    }

    pub fn schedule(&mut self, event: E, fire_time: SimTime) -> Result<EventId, EngineError> {
        if fire_time < self.now {
            return Err(EngineError::InPast {
                at: fire_time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry {
            fire_time,
            seq,
            event,
        });
        Ok(EventId(seq))
    }

    /// Schedules `delay` after the current clock; cannot fail.
    pub fn schedule_in(&mut self, event: E, delay: SimTime) -> EventId {
        let at = self.now.saturating_add(delay);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry {
            fire_time: at,
            seq,
            event,
        });
        EventId(seq)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.fire_time)
    }

    /// Pops the next event if it fires at or before `t_end`, advancing the clock.
    pub fn pop_due(&mut self, t_end: SimTime) -> Option<Scheduled<E>>
    where
        E: SimEvent,
    {
        if self.heap.peek()?.fire_time > t_end {
            return None;
        }
        let Entry {
            fire_time,
            seq,
            event,
        } = self.heap.pop()?;
        self.now = fire_time;
        self.fired += 1;
        self.digest.absorb(fire_time, seq, event.kind());
        Some(Scheduled {
            fire_time,
            seq,
            event,
        })
    }

    /// Dispatches every event with `fire_time <= t_end` in `(fire_time, seq)`
    /// order, then leaves the clock at `t_end`.
    pub fn run_until<H, Err>(
        &mut self,
        t_end: SimTime,
        mut handler: H,
    ) -> Result<RunSummary, RunUntilError<Err>>
    where
        E: SimEvent,
        Err: core::error::Error + 'static,
        H: FnMut(&mut Self, Scheduled<E>) -> Result<(), Err>,
    {
        if t_end < self.now {
            return Err(RunUntilError::Engine(EngineError::EndInPast {
                t_end,
                now: self.now,
            }));
        }
        let start = self.fired;
        while let Some(ev) = self.pop_due(t_end) {
            let (at, seq, kind) = (ev.fire_time, ev.seq, ev.event.kind());
            handler(self, ev).map_err(|source| {
                RunUntilError::Handler(RunError {
                    at,
                    seq,
                    kind,
                    source,
                })
            })?;
        }
        self.now = t_end;
        Ok(RunSummary {
            events_fired: self.fired - start,
            clock: t_end,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunUntilError<H: core::error::Error + 'static> {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Handler(RunError<H>),
}
