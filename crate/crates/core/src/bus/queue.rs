use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
struct Entry<T> {
    timestamp: f64,
    seq: u64,
    item: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.timestamp
            .total_cmp(&other.timestamp)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Capacity-bounded min-heap keyed by timestamp.
///
/// When full, an insert evicts the oldest entry (which may be the one just
/// inserted) and bumps the drop counter. Equal timestamps pop in insertion
/// order.
#[derive(Debug, Clone)]
pub struct BoundedTimeQueue<T> {
    capacity: usize,
    heap: BinaryHeap<Reverse<Entry<T>>>,
    dropped: u64,
    next_seq: u64,
}

pub const DEFAULT_QUEUE_CAPACITY: usize = 32;

impl<T> Default for BoundedTimeQueue<T> {
    fn default() -> Self {
        Self::new(DEFAULT_QUEUE_CAPACITY)
    }
}

impl<T> BoundedTimeQueue<T> {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self { capacity, heap: BinaryHeap::with_capacity(capacity + 1), dropped: 0, next_seq: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Inserts; returns the timestamp of the evicted entry, if any.
    pub fn push(&mut self, timestamp: f64, item: T) -> Option<f64> {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { timestamp, seq, item }));
        if self.heap.len() > self.capacity {
            self.dropped += 1;
            return self.heap.pop().map(|Reverse(e)| e.timestamp);
        }
        None
    }

    pub fn pop(&mut self) -> Option<(f64, T)> {
        self.heap.pop().map(|Reverse(e)| (e.timestamp, e.item))
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse(e)| e.timestamp)
    }

    pub fn newest_time(&self) -> Option<f64> {
        self.heap.iter().map(|Reverse(e)| e.timestamp).max_by(f64::total_cmp)
    }

    pub fn clear(&mut self) {
        self.heap.clear();
    }

    /// Removes every entry strictly older than `t`; returns how many.
    pub fn discard_older_than(&mut self, t: f64) -> usize {
        let mut n = 0;
        while self.peek_time().is_some_and(|ts| ts < t) {
            self.heap.pop();
            n += 1;
        }
        n
    }

    /// Pops the entry whose timestamp is closest to `target` (ties go to the
    /// older entry), discarding everything older than it. Returns `None`, and
    /// leaves the queue untouched apart from entries older than
    /// `target - max_offset`, when no entry lies within `max_offset`.
    pub fn pop_closest(&mut self, target: f64, max_offset: f64) -> Option<(f64, T)> {
        self.discard_older_than(target - max_offset);
        let best = self
            .heap
            .iter()
            .map(|Reverse(e)| (e.timestamp, e.seq))
            .min_by(|a, b| {
                (a.0 - target)
                    .abs()
                    .total_cmp(&(b.0 - target).abs())
                    .then(a.0.total_cmp(&b.0))
                    .then(a.1.cmp(&b.1))
            })?;
        if (best.0 - target).abs() > max_offset {
            return None;
        }
        loop {
            let Reverse(e) = self.heap.pop()?;
            if e.seq == best.1 {
                return Some((e.timestamp, e.item));
            }
        }
    }

    /// Entries in pop order without consuming the queue.
    pub fn sorted_times(&self) -> Vec<f64> {
        let mut v: Vec<_> = self.heap.iter().map(|Reverse(e)| (e.timestamp, e.seq)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v.into_iter().map(|(t, _)| t).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_timestamps_pop_in_insertion_order() {
        let mut q = BoundedTimeQueue::new(8);
        q.push(1.0, "a");
        q.push(1.0, "b");
        q.push(0.5, "c");
        assert_eq!(q.pop(), Some((0.5, "c")));
        assert_eq!(q.pop(), Some((1.0, "a")));
        assert_eq!(q.pop(), Some((1.0, "b")));
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn full_queue_evicts_oldest() {
        let mut q = BoundedTimeQueue::new(3);
        for t in 0..3 {
            assert_eq!(q.push(t as f64, t), None);
        }
        assert_eq!(q.push(10.0, 10), Some(0.0));
        // An insert older than everything held is itself the eviction victim.
        assert_eq!(q.push(-1.0, -1), Some(-1.0));
        assert_eq!(q.dropped(), 2);
        assert_eq!(q.sorted_times(), vec![1.0, 2.0, 10.0]);
    }

    #[test]
    fn pop_closest_discards_older() {
        let mut q = BoundedTimeQueue::new(8);
        for t in [0.8, 0.9, 1.0] {
            q.push(t, t);
        }
        assert_eq!(q.pop_closest(0.9, 0.5), Some((0.9, 0.9)));
        assert_eq!(q.sorted_times(), vec![1.0]);
        assert_eq!(q.pop_closest(3.0, 0.5), None);
        assert_eq!(q.len(), 0);
    }

    #[test]
    fn pop_closest_tie_prefers_older() {
        let mut q = BoundedTimeQueue::new(8);
        q.push(1.0, 'a');
        q.push(1.5, 'b');
        assert_eq!(q.pop_closest(1.25, 0.5), Some((1.0, 'a')));
        assert_eq!(q.len(), 1);
    }

    proptest! {
        #[test]
        fn pops_match_sort_oracle(ts in prop::collection::vec(0.0..100.0f64, 0..64)) {
            let mut q = BoundedTimeQueue::new(1024);
            for (i, t) in ts.iter().enumerate() {
                q.push(*t, i);
            }
            let mut oracle: Vec<(f64, usize)> = ts.iter().copied().zip(0..).collect();
            oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut got = Vec::new();
            while let Some(e) = q.pop() {
                got.push(e);
            }
            prop_assert_eq!(got, oracle);
        }

        #[test]
        fn circular_eviction_law(cap in 1usize..40, k in 0usize..40) {
            let mut q = BoundedTimeQueue::new(cap);
            for i in 0..cap + k {
                q.push(i as f64, i);
            }
            prop_assert_eq!(q.dropped(), k as u64);
            prop_assert_eq!(q.len(), cap);
            prop_assert_eq!(q.peek_time(), Some(k as f64));
        }
    }
}
