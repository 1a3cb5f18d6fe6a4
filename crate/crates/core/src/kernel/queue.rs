//! Time-ordered event queue with stable tie-breaking and cancellation.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use crate::error::SimError;
use crate::time::SimTime;

/// Handle returned by [`EventQueue::schedule`], used to cancel the event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

#[derive(Debug)]
struct Entry<E> {
    fire_at: SimTime,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.fire_at, self.seq) == (other.fire_at, other.seq)
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
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

/// A dispatched event together with its ordering key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatched<E> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: E,
}

/// Min-queue over `(fire_at, seq)`. `seq` grows with every call to
/// [`schedule`](EventQueue::schedule), so equal-time events pop in
/// scheduling order.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    cancelled: BTreeSet<u64>,
    next_seq: u64,
    now: SimTime,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            cancelled: BTreeSet::new(),
            next_seq: 0,
            now: SimTime::ZERO,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of live (not cancelled) events.
    pub fn len(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: E) -> Result<EventHandle, SimError> {
        if fire_at < self.now {
            return Err(SimError::ScheduleInPast {
                now: self.now,
                fire_at,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry {
            fire_at,
            seq,
            payload,
        }));
        Ok(EventHandle(seq))
    }

    /// Cancels a pending event. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq {
            return false;
        }
        let pending = self.heap.iter().any(|Reverse(e)| e.seq == handle.0);
        pending && self.cancelled.insert(handle.0)
    }

    fn skip_cancelled(&mut self) {
        while let Some(Reverse(top)) = self.heap.peek() {
            if self.cancelled.remove(&top.seq) {
                self.heap.pop();
            } else {
                break;
            }
        }
    }

    pub fn peek_time(&mut self) -> Option<SimTime> {
        self.skip_cancelled();
        self.heap.peek().map(|Reverse(e)| e.fire_at)
    }

    /// Pops the next event if it fires at or before `horizon`, advancing the
    /// clock to its time. Otherwise the clock moves to `horizon` and `None` is
    /// returned.
    pub fn pop_until(&mut self, horizon: SimTime) -> Option<Dispatched<E>> {
        match self.peek_time() {
            Some(t) if t <= horizon => {
                let Reverse(e) = self.heap.pop().expect("peeked entry");
                self.now = e.fire_at;
                Some(Dispatched {
                    fire_at: e.fire_at,
                    seq: e.seq,
                    payload: e.payload,
                })
            }
            _ => {
                if self.now < horizon {
                    self.now = horizon;
                }
                None
            }
        }
    }
}
