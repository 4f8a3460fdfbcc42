//! Discrete-event core: simulation time, the time-ordered event queue,
//! and the pop loop contract.
//!
//! Ordering is total and deterministic: events pop by (time, sequence
//! number), where the sequence number is assigned at scheduling. Two
//! events at the same instant therefore pop in scheduling order, and a
//! run is a pure function of the scheduled set.

use serde::{Deserialize, Serialize};

/// Simulation time in abstract time units. Never NaN: times are built
/// from non-negative config values by addition only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct SimTime(pub f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn after(self, dt: f64) -> SimTime {
        SimTime(self.0 + dt)
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for SimTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct SimEvent<K> {
    pub at: SimTime,
    pub seq: u64,
    pub kind: K,
}

/// Pending events keyed by (at, seq). `pop` advances `now`; scheduling
/// into the past is a logic error and aborts the run.
#[derive(Debug, Clone)]
pub struct EventQueue<K> {
    pending: std::collections::BTreeMap<(SimTime, u64), K>,
    next_seq: u64,
    now: SimTime,
    processed: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        EventQueue {
            pending: std::collections::BTreeMap::new(),
            next_seq: 0,
            now: SimTime::ZERO,
            processed: 0,
        }
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Enqueues `kind` at time `at` and returns the assigned sequence
    /// number. Panics if `at` lies before the current time.
    pub fn schedule(&mut self, at: SimTime, kind: K) -> u64 {
        assert!(
            at >= self.now,
            "event scheduled into the past: at={} now={}",
            at,
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert((at, seq), kind);
        seq
    }

    pub fn peek_at(&self) -> Option<SimTime> {
        self.pending.keys().next().map(|(at, _)| *at)
    }

    /// Pops the earliest event and advances `now` to its time.
    pub fn pop(&mut self) -> Option<SimEvent<K>> {
        let ((at, seq), kind) = self.pending.pop_first()?;
        debug_assert!(at >= self.now);
        self.now = at;
        self.processed += 1;
        Some(SimEvent { at, seq, kind })
    }

    /// Pops the earliest event only if it is due at or before `limit`.
    /// Later events stay queued; `now` is untouched when nothing pops.
    pub fn pop_if_at_most(&mut self, limit: SimTime) -> Option<SimEvent<K>> {
        match self.peek_at() {
            Some(at) if at <= limit => self.pop(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_time_events_pop_in_scheduling_order() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(1.0), "a");
        q.schedule(SimTime(1.0), "b");
        q.schedule(SimTime(0.5), "c");
        let order: Vec<&str> = std::iter::from_fn(|| q.pop().map(|e| e.kind)).collect();
        assert_eq!(order, ["c", "a", "b"]);
    }

    #[test]
    fn empty_queue_schedule_one_pop_returns_it() {
        let mut q = EventQueue::new();
        assert!(q.pop().is_none());
        q.schedule(SimTime(2.0), 7u8);
        let ev = q.pop().unwrap();
        assert_eq!(ev.kind, 7);
        assert_eq!(ev.at, SimTime(2.0));
        assert!(q.is_empty());
    }

    #[test]
    fn schedule_at_current_time_is_legal_and_pops_before_later_events() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(1.0), "later");
        q.schedule(SimTime(0.0), "first");
        assert_eq!(q.pop().unwrap().kind, "first");
        // now == 1.0 is still schedulable at exactly now
        q.schedule(SimTime(1.0), "now");
        assert_eq!(q.pop().unwrap().kind, "later");
        assert_eq!(q.pop().unwrap().kind, "now");
    }

    #[test]
    #[should_panic(expected = "scheduled into the past")]
    fn scheduling_into_the_past_aborts() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(5.0), ());
        q.pop();
        q.schedule(SimTime(4.0), ());
    }

    #[test]
    fn time_never_decreases_across_pops() {
        let mut q = EventQueue::new();
        for i in [3u64, 1, 4, 1, 5, 9, 2, 6] {
            q.schedule(SimTime(i as f64), i);
        }
        let mut last = SimTime::ZERO;
        while let Some(ev) = q.pop() {
            assert!(ev.at >= last);
            last = ev.at;
        }
        assert_eq!(q.processed(), 8);
    }

    #[test]
    fn pop_respects_limit() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(1.0), "a");
        q.schedule(SimTime(3.0), "b");
        assert_eq!(q.pop_if_at_most(SimTime(2.0)).unwrap().kind, "a");
        assert!(q.pop_if_at_most(SimTime(2.0)).is_none());
        assert_eq!(q.len(), 1);
        assert_eq!(q.pop_if_at_most(SimTime(3.0)).unwrap().kind, "b");
    }

    #[test]
    fn seq_is_unique_and_monotone() {
        let mut q = EventQueue::new();
        let s1 = q.schedule(SimTime(1.0), ());
        let s2 = q.schedule(SimTime(0.0), ());
        assert!(s2 > s1);
        let mut seen = std::collections::BTreeSet::new();
        while let Some(ev) = q.pop() {
            assert!(seen.insert(ev.seq));
        }
    }
}
