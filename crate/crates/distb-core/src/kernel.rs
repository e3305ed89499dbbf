//! Discrete-event kernel: simulated clock, ordered event queue, run loop.
//!
//! Events are totally ordered by `(time, seq)` where `seq` is a global
//! insertion counter, so two events at the same tick dispatch in the order
//! they were scheduled. One tick is one millisecond of simulated time.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Simulated time in ticks; 1 tick = 1 ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_ms(ms: u64) -> Self {
        SimTime(ms)
    }

    pub fn from_secs(s: u64) -> Self {
        SimTime(s * 1000)
    }

    pub fn as_ms(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::fmt::Display for SimTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Identifies a simulated entity (node, switch, controller, attacker).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u64);

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Handle returned by [`EventQueue::schedule`]; equals the event's seq.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventId(pub u64);

/// A scheduled event. `K` is the payload type supplied by the simulation.
#[derive(Debug, Clone)]
pub struct Event<K> {
    pub time: SimTime,
    pub seq: u64,
    pub target: EntityId,
    pub kind: K,
}

struct HeapEntry<K> {
    ev: Event<K>,
}

impl<K> PartialEq for HeapEntry<K> {
    fn eq(&self, other: &Self) -> bool {
        self.ev.time == other.ev.time && self.ev.seq == other.ev.seq
    }
}

impl<K> Eq for HeapEntry<K> {}

impl<K> Ord for HeapEntry<K> {
    // Reversed so the BinaryHeap pops the smallest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.ev.time, other.ev.seq).cmp(&(self.ev.time, self.ev.seq))
    }
}

impl<K> PartialOrd for HeapEntry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Scheduling or dispatch failure. Any of these aborts the run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KernelError {
    /// Attempt to schedule an event before the current clock.
    PastEvent { now: SimTime, requested: SimTime },
    /// A handler failed while processing the identified event.
    HandlerFailed {
        time: SimTime,
        seq: u64,
        target: EntityId,
        kind: String,
        message: String,
    },
}

impl std::fmt::Display for KernelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelError::PastEvent { now, requested } => {
                write!(f, "past event: now={now}, requested={requested}")
            }
            KernelError::HandlerFailed {
                time,
                seq,
                target,
                kind,
                message,
            } => write!(
                f,
                "handler failed at t={time} seq={seq} target={target} kind={kind}: {message}"
            ),
        }
    }
}

impl std::error::Error for KernelError {}

/// Totals reported by [`EventQueue`] after a run segment.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunSummary {
    pub events_processed: u64,
    pub wall: std::time::Duration,
}

/// The event queue plus the simulated clock.
pub struct EventQueue<K> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<HeapEntry<K>>,
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueues an event at `time` for `target`. Scheduling in the past is
    /// a logic bug and is rejected.
    pub fn schedule(
        &mut self,
        time: SimTime,
        target: EntityId,
        kind: K,
    ) -> Result<EventId, KernelError> {
        if time < self.now {
            return Err(KernelError::PastEvent {
                now: self.now,
                requested: time,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(HeapEntry {
            ev: Event {
                time,
                seq,
                target,
                kind,
            },
        });
        Ok(EventId(seq))
    }

    /// Pops the next event if it is due at or before `t_end`.
    /// Advances the clock to the event's time.
    pub fn pop_due(&mut self, t_end: SimTime) -> Option<Event<K>> {
        match self.heap.peek() {
            Some(entry) if entry.ev.time <= t_end => {
                let ev = self.heap.pop().unwrap().ev;
                debug_assert!(ev.time >= self.now, "clock must never run backwards");
                self.now = ev.time;
                Some(ev)
            }
            _ => None,
        }
    }

    /// Advances the clock to `t_end` once all due events are drained.
    pub fn finish_at(&mut self, t_end: SimTime) {
        if t_end > self.now {
            self.now = t_end;
        }
    }
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_event_gets_seq_zero() {
        let mut q: EventQueue<&str> = EventQueue::new();
        let id = q.schedule(SimTime(0), EntityId(1), "a").unwrap();
        assert_eq!(id, EventId(0));
    }

    #[test]
    fn rejects_past_events() {
        let mut q: EventQueue<&str> = EventQueue::new();
        q.schedule(SimTime(5), EntityId(1), "a").unwrap();
        while q.pop_due(SimTime(10)).is_some() {}
        q.finish_at(SimTime(10));
        let err = q.schedule(SimTime(9), EntityId(1), "late").unwrap_err();
        assert!(matches!(err, KernelError::PastEvent { .. }));
    }

    #[test]
    fn same_tick_dispatches_in_seq_order() {
        let mut q: EventQueue<u32> = EventQueue::new();
        q.schedule(SimTime(5), EntityId(1), 10).unwrap();
        q.schedule(SimTime(5), EntityId(2), 11).unwrap();
        q.schedule(SimTime(9), EntityId(3), 12).unwrap();
        let mut seen = Vec::new();
        while let Some(ev) = q.pop_due(SimTime(9)) {
            seen.push((ev.time.0, ev.seq, ev.kind));
        }
        assert_eq!(seen, vec![(5, 0, 10), (5, 1, 11), (9, 2, 12)]);
    }

    #[test]
    fn empty_queue_run_reaches_t_end() {
        let mut q: EventQueue<u32> = EventQueue::new();
        assert!(q.pop_due(SimTime(1000)).is_none());
        q.finish_at(SimTime(1000));
        assert_eq!(q.now(), SimTime(1000));
    }

    #[test]
    fn clock_never_decreases() {
        let mut q: EventQueue<u32> = EventQueue::new();
        q.schedule(SimTime(3), EntityId(0), 0).unwrap();
        q.schedule(SimTime(1), EntityId(0), 1).unwrap();
        q.schedule(SimTime(2), EntityId(0), 2).unwrap();
        let mut last = SimTime::ZERO;
        while let Some(ev) = q.pop_due(SimTime(100)) {
            assert!(ev.time >= last);
            last = ev.time;
            assert_eq!(q.now(), ev.time);
        }
    }
}
