use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use super::{EventLog, HostId, LogRecord, SimTime};

/// Payloads name their kind for the event log.
pub trait Labelled {
    fn label(&self) -> &'static str;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(pub u64);

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("cannot schedule at {at} when the clock reads {now}")]
pub struct SchedulingInPast {
    pub at: SimTime,
    pub now: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event<M> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: HostId,
    pub payload: M,
}

impl<M> Event<M> {
    pub fn id(&self) -> EventId {
        EventId(self.seq)
    }
}

struct Queued<M>(Event<M>);

impl<M> PartialEq for Queued<M> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl<M> Eq for Queued<M> {}

impl<M> Queued<M> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_at, self.0.seq)
    }
}

impl<M> PartialOrd for Queued<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Queued<M> {
    // Reversed: BinaryHeap is a max-heap and we pop the earliest (fire_at, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Event queue ordered by `(fire_at, seq)`, with `seq` a global insertion
/// counter, so dispatch order is total and reproducible.
pub struct Scheduler<M> {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<M>>,
    log: Option<EventLog>,
}

impl<M: Labelled> Default for Scheduler<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M: Labelled> Scheduler<M> {
    pub fn new() -> Self {
        Self {
            clock: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            log: None,
        }
    }

    /// Records every dispatched event from now on.
    pub fn with_log(mut self) -> Self {
        self.log = Some(EventLog::default());
        self
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn log(&self) -> Option<&EventLog> {
        self.log.as_ref()
    }

    pub fn take_log(&mut self) -> Option<EventLog> {
        self.log.take()
    }

    pub fn schedule(
        &mut self,
        at: SimTime,
        target: HostId,
        payload: M,
    ) -> Result<EventId, SchedulingInPast> {
        if at < self.clock {
            return Err(SchedulingInPast {
                at,
                now: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event {
            fire_at: at,
            seq,
            target,
            payload,
        }));
        Ok(EventId(seq))
    }

    /// Schedules `delay` after the current clock; never in the past.
    pub fn schedule_in(&mut self, delay: SimTime, target: HostId, payload: M) -> EventId {
        self.schedule(self.clock + delay, target, payload)
            .expect("a non-negative delay is never in the past")
    }

    /// Pops the next event due at or before `deadline`, advancing the clock
    /// to its fire time.
    pub fn pop_due(&mut self, deadline: SimTime) -> Option<Event<M>> {
        if self.queue.peek()?.0.fire_at > deadline {
            return None;
        }
        let Queued(ev) = self.queue.pop()?;
        debug_assert!(ev.fire_at >= self.clock);
        self.clock = ev.fire_at;
        if let Some(log) = &mut self.log {
            log.records.push(LogRecord {
                tick: ev.fire_at.ticks(),
                host: ev.target.0,
                kind: ev.payload.label().to_string(),
            });
        }
        Some(ev)
    }

    /// Moves the clock forward to `t` if it is behind.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.clock {
            self.clock = t;
        }
    }

    /// Dispatches every event with `fire_at <= deadline`, then leaves the
    /// clock at `deadline`. Returns the number of events dispatched.
    pub fn run_until<F>(&mut self, deadline: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Event<M>),
    {
        let mut n = 0;
        while let Some(ev) = self.pop_due(deadline) {
            handler(self, ev);
            n += 1;
        }
        self.advance_to(deadline);
        n
    }
}
