//! Discrete-event engine: integer-microsecond virtual clock, a queue ordered
//! by `(time, sequence)`, and an optional dispatch trace.
//!
//! The engine knows nothing about nodes; event kinds are supplied by the
//! caller through [`EventKind`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Virtual time in microseconds.
pub type SimTime = u64;

/// Rounds a non-negative duration in µs half-up to whole ticks.
pub fn round_us(duration: f64) -> SimTime {
    debug_assert!(duration >= 0.0);
    (duration + 0.5).floor() as SimTime
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("causality violation: event at {time} scheduled with clock at {clock}")]
    CausalityViolation { time: SimTime, clock: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub trait EventKind {
    /// Short tag used in trace lines.
    fn label(&self) -> &'static str;
}

#[derive(Debug, Clone)]
pub struct SimEvent<K> {
    pub time: SimTime,
    pub sequence: u64,
    pub target: NodeId,
    pub kind: K,
    pub payload: Vec<u8>,
}

impl<K> PartialEq for SimEvent<K> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.sequence) == (other.time, other.sequence)
    }
}

impl<K> Eq for SimEvent<K> {}

impl<K> PartialOrd for SimEvent<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for SimEvent<K> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.sequence).cmp(&(self.time, self.sequence))
    }
}

/// Pending events, popped in ascending `(time, sequence)` order.
#[derive(Debug)]
pub struct EventQueue<K> {
    heap: BinaryHeap<SimEvent<K>>,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
        }
    }
}

impl<K> EventQueue<K> {
    pub fn push(&mut self, ev: SimEvent<K>) {
        self.heap.push(ev);
    }

    pub fn pop(&mut self) -> Option<SimEvent<K>> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Default)]
struct Trace {
    hasher: Sha256,
    lines: Option<Vec<String>>,
}

pub struct Engine<K> {
    clock: SimTime,
    next_sequence: u64,
    queue: EventQueue<K>,
    trace: Trace,
    dispatched: u64,
}

impl<K: EventKind> Default for Engine<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: EventKind> Engine<K> {
    pub fn new() -> Self {
        Self {
            clock: 0,
            next_sequence: 0,
            queue: EventQueue::default(),
            trace: Trace::default(),
            dispatched: 0,
        }
    }

    /// Keeps a human-readable line per dispatched event in addition to the hash.
    pub fn record_trace_lines(&mut self) {
        self.trace.lines.get_or_insert_with(Vec::new);
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(
        &mut self,
        time: SimTime,
        target: NodeId,
        kind: K,
        payload: Vec<u8>,
    ) -> Result<u64, SimError> {
        if time < self.clock {
            return Err(SimError::CausalityViolation {
                time,
                clock: self.clock,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(SimEvent {
            time,
            sequence,
            target,
            kind,
            payload,
        });
        Ok(sequence)
    }

    /// Schedules `delay` µs after the current clock; cannot violate causality.
    pub fn schedule_in(
        &mut self,
        delay: SimTime,
        target: NodeId,
        kind: K,
        payload: Vec<u8>,
    ) -> u64 {
        self.schedule(self.clock + delay, target, kind, payload)
            .expect("relative schedule is never in the past")
    }

    fn dispatch_next<H>(&mut self, handler: &mut H)
    where
        H: FnMut(&mut Self, SimEvent<K>),
    {
        let ev = self.queue.pop().expect("caller checked non-empty");
        debug_assert!(ev.time >= self.clock);
        self.clock = ev.time;
        self.dispatched += 1;
        let line = format!(
            "{} {} {} {}",
            ev.time,
            ev.sequence,
            ev.target,
            ev.kind.label()
        );
        self.trace.hasher.update(line.as_bytes());
        self.trace.hasher.update(b"\n");
        if let Some(lines) = &mut self.trace.lines {
            lines.push(line);
        }
        handler(self, ev);
    }

    /// Dispatches every event with `time <= t_end`, then sets the clock to
    /// `t_end`. Handlers may schedule further events.
    pub fn run_until<H>(&mut self, t_end: SimTime, mut handler: H)
    where
        H: FnMut(&mut Self, SimEvent<K>),
    {
        let t_end = t_end.max(self.clock);
        while self.queue.peek_time().is_some_and(|t| t <= t_end) {
            self.dispatch_next(&mut handler);
        }
        self.clock = t_end;
    }

    /// Dispatches until the queue is empty. The clock stays at the last event.
    pub fn run_to_completion<H>(&mut self, mut handler: H)
    where
        H: FnMut(&mut Self, SimEvent<K>),
    {
        while !self.queue.is_empty() {
            self.dispatch_next(&mut handler);
        }
    }

    /// Hex SHA-256 over all trace lines dispatched so far.
    pub fn trace_hash(&self) -> String {
        let digest = self.trace.hasher.clone().finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn take_trace_lines(&mut self) -> Vec<String> {
        self.trace
            .lines
            .as_mut()
            .map(std::mem::take)
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    enum Tag {
        A,
        B,
        C,
    }

    impl EventKind for Tag {
        fn label(&self) -> &'static str {
            match self {
                Tag::A => "A",
                Tag::B => "B",
                Tag::C => "C",
            }
        }
    }

    const N: NodeId = NodeId(0);

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_us(722.0), 722);
        assert_eq!(round_us(95.2), 95);
        assert_eq!(round_us(0.5), 1);
        assert_eq!(round_us(1215.2777), 1215);
    }

    #[test]
    fn ties_dispatch_in_schedule_order() {
        let mut e = Engine::new();
        e.schedule(10, N, Tag::B, vec![]).unwrap();
        e.schedule(5, N, Tag::A, vec![]).unwrap();
        e.schedule(10, N, Tag::C, vec![]).unwrap();
        let mut seen = vec![];
        e.run_until(100, |_, ev| seen.push((ev.time, ev.kind)));
        assert_eq!(seen, vec![(5, Tag::A), (10, Tag::B), (10, Tag::C)]);
        assert_eq!(e.now(), 100);
    }

    #[test]
    fn schedule_now_goes_before_later_events() {
        let mut e = Engine::new();
        e.run_until(50, |_, _| {});
        e.schedule(60, N, Tag::B, vec![]).unwrap();
        e.schedule(50, N, Tag::A, vec![]).unwrap();
        let mut seen = vec![];
        e.run_until(100, |_, ev| seen.push(ev.kind));
        assert_eq!(seen, vec![Tag::A, Tag::B]);
    }

    #[test]
    fn past_schedule_is_rejected() {
        let mut e: Engine<Tag> = Engine::new();
        e.run_until(50, |_, _| {});
        assert_eq!(
            e.schedule(49, N, Tag::A, vec![]),
            Err(SimError::CausalityViolation {
                time: 49,
                clock: 50
            })
        );
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut e: Engine<Tag> = Engine::new();
        let mut count = 0;
        e.run_until(1_000, |_, _| count += 1);
        assert_eq!(count, 0);
        assert_eq!(e.now(), 1_000);
    }

    #[test]
    fn chained_events_within_horizon() {
        let mut e = Engine::new();
        e.schedule(0, N, Tag::A, vec![]).unwrap();
        let mut seen = vec![];
        e.run_until(10, |eng, ev| {
            if ev.kind == Tag::A {
                eng.schedule_in(10, N, Tag::B, vec![1, 2]);
            }
            seen.push((ev.time, ev.kind, ev.payload));
        });
        assert_eq!(seen, vec![(0, Tag::A, vec![]), (10, Tag::B, vec![1, 2])]);
    }

    #[test]
    fn trace_hash_tracks_dispatch_order() {
        let build = |swap: bool| {
            let mut e = Engine::new();
            e.record_trace_lines();
            let (x, y) = if swap {
                (Tag::B, Tag::A)
            } else {
                (Tag::A, Tag::B)
            };
            e.schedule(1, N, x, vec![]).unwrap();
            e.schedule(1, N, y, vec![]).unwrap();
            e.run_to_completion(|_, _| {});
            (e.trace_hash(), e.take_trace_lines())
        };
        let (h1, lines) = build(false);
        assert_eq!(lines, vec!["1 0 0 A", "1 1 0 B"]);
        assert_eq!(h1, build(false).0);
        assert_ne!(h1, build(true).0);
    }
}
