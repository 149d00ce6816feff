//! Cache partitions: count vectors `(x_1..x_K)` where `x_k` items each cache `k` chunks.
//!
//! A partition is feasible for capacity `C` and `M` items when `sum_k k*x_k = C` and
//! `sum_k x_k <= M`. [`Partitions`] walks all of them lazily as an odometer: `x_2` is the
//! fastest digit and `x_K` the slowest, each digit bounded by what the slower digits leave
//! (`floor((C - sum_{n>k} n*x_n) / k)`), with `x_1` taking up the remainder.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CachePartition(Vec<usize>);

impl CachePartition {
    pub fn new(counts: Vec<usize>) -> Self {
        CachePartition(counts)
    }

    /// `x_k` for `k` in `1..=K`.
    pub fn count(&self, k: usize) -> usize {
        self.0[k - 1]
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    /// `sum_k k * x_k`.
    pub fn chunks(&self) -> usize {
        self.0.iter().enumerate().map(|(i, x)| (i + 1) * x).sum()
    }

    /// `sum_k x_k`.
    pub fn items(&self) -> usize {
        self.0.iter().sum()
    }
}

impl fmt::Display for CachePartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")
    }
}

/// Lazy generator of every feasible partition in odometer order.
#[derive(Debug, Clone)]
pub struct Partitions {
    capacity: usize,
    max_items: usize,
    /// `digits[i]` holds `x_{i+2}`.
    digits: Vec<usize>,
    done: bool,
    steps: u64,
}

/// All partitions of `capacity` chunks into levels `1..=k` using at most `max_items` items.
pub fn enumerate_partitions(capacity: usize, k: usize, max_items: usize) -> Partitions {
    assert!(k >= 1, "k must be at least 1");
    Partitions {
        capacity,
        max_items,
        digits: vec![0; k - 1],
        done: false,
        steps: 0,
    }
}

impl Partitions {
    /// Odometer states visited so far, feasible or not.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn current(&self) -> Vec<usize> {
        let used: usize = self
            .digits
            .iter()
            .enumerate()
            .map(|(i, x)| (i + 2) * x)
            .sum();
        let mut counts = Vec::with_capacity(self.digits.len() + 1);
        counts.push(self.capacity - used);
        counts.extend_from_slice(&self.digits);
        counts
    }

    fn advance(&mut self) {
        // Capacity consumed by digits slower than the one being incremented.
        let mut slower: usize = self
            .digits
            .iter()
            .enumerate()
            .map(|(i, x)| (i + 2) * x)
            .sum();
        for i in 0..self.digits.len() {
            let level = i + 2;
            slower -= level * self.digits[i];
            let bound = (self.capacity - slower) / level;
            if self.digits[i] < bound {
                self.digits[i] += 1;
                return;
            }
            self.digits[i] = 0;
        }
        self.done = true;
    }
}

impl Iterator for Partitions {
    type Item = CachePartition;

    fn next(&mut self) -> Option<CachePartition> {
        while !self.done {
            let counts = self.current();
            self.steps += 1;
            self.advance();
            if counts.iter().sum::<usize>() <= self.max_items {
                return Some(CachePartition(counts));
            }
        }
        None
    }
}

/// `prod_{k=2..K} (floor(C/k) + 1)`, saturating at `u128::MAX`.
pub fn partition_count_bound(capacity: usize, k: usize) -> u128 {
    (2..=k).fold(1u128, |acc, level| {
        acc.saturating_mul((capacity / level) as u128 + 1)
    })
}
