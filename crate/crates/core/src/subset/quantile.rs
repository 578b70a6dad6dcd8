//! Streaming quantile with the same interpolation as
//! [`quantile_sorted`](super::estimators::quantile_sorted).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Total-ordered wrapper so `f64` can live in a heap. NaN is rejected on push.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Tracks the order statistics at `⌊(n−1)p⌋` and the one above it as values
/// arrive, in `O(log n)` per insertion.
#[derive(Debug, Clone)]
pub struct RunningQuantile {
    p: f64,
    /// The `k + 1` smallest values (max-heap).
    lower: BinaryHeap<Key>,
    /// Everything else (min-heap).
    upper: BinaryHeap<Reverse<Key>>,
}

impl RunningQuantile {
    pub fn new(p: f64) -> Self {
        assert!((0.0..=1.0).contains(&p), "quantile level must be in [0, 1]");
        Self {
            p,
            lower: BinaryHeap::new(),
            upper: BinaryHeap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len() + self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, v: f64) {
        assert!(!v.is_nan(), "NaN response");
        match self.lower.peek() {
            Some(top) if v >= top.0 => self.upper.push(Reverse(Key(v))),
            _ => self.lower.push(Key(v)),
        }
        let target = self.rank() + 1;
        while self.lower.len() > target {
            let k = self.lower.pop().expect("non-empty");
            self.upper.push(Reverse(k));
        }
        while self.lower.len() < target {
            let Reverse(k) = self.upper.pop().expect("enough values");
            self.lower.push(k);
        }
    }

    fn rank(&self) -> usize {
        ((self.len() - 1) as f64 * self.p).floor() as usize
    }

    /// Interpolated quantile, or `None` before any value arrives.
    pub fn value(&self) -> Option<f64> {
        let lo = self.lower.peek()?.0;
        let h = (self.len() - 1) as f64 * self.p;
        let frac = h - h.floor();
        match self.upper.peek() {
            Some(Reverse(hi)) if frac > 0.0 => Some(lo + frac * (hi.0 - lo)),
            _ => Some(lo),
        }
    }
}
