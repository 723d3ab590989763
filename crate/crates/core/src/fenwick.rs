//! Fenwick tree over exact integer weights.
//!
//! Supports point updates, prefix sums and inverse prefix-sum search in
//! `O(log n)`. Capacity is always a power of two so the search can descend
//! the implicit tree bit by bit.

#[derive(Debug, Clone, Default)]
pub struct FenwickTree {
    // 1-based internal storage, tree[0] unused.
    tree: Vec<u64>,
    weights: Vec<u64>,
    total: u64,
}

impl FenwickTree {
    pub fn with_capacity(capacity: usize) -> Self {
        let cap = capacity.max(1).next_power_of_two();
        Self {
            tree: vec![0; cap + 1],
            weights: vec![0; cap],
            total: 0,
        }
    }

    pub fn from_weights(weights: &[u64]) -> Self {
        let mut t = Self::with_capacity(weights.len());
        t.weights[..weights.len()].copy_from_slice(weights);
        t.rebuild();
        t
    }

    fn rebuild(&mut self) {
        let n = self.weights.len();
        self.tree.iter_mut().for_each(|x| *x = 0);
        for i in 1..=n {
            self.tree[i] += self.weights[i - 1];
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                self.tree[parent] += self.tree[i];
            }
        }
        self.total = self.weights.iter().sum();
    }

    pub fn capacity(&self) -> usize {
        self.weights.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn weight(&self, index: usize) -> u64 {
        self.weights[index]
    }

    /// Grows capacity (power of two) so that `index` is addressable.
    pub fn reserve_index(&mut self, index: usize) {
        if index < self.weights.len() {
            return;
        }
        let cap = (index + 1).next_power_of_two();
        self.weights.resize(cap, 0);
        self.tree.resize(cap + 1, 0);
        self.rebuild();
    }

    pub fn set(&mut self, index: usize, weight: u64) {
        self.reserve_index(index);
        let old = self.weights[index];
        if weight >= old {
            self.add(index, weight - old);
        } else {
            self.sub(index, old - weight);
        }
    }

    fn add(&mut self, index: usize, delta: u64) {
        self.weights[index] += delta;
        self.total += delta;
        let n = self.weights.len();
        let mut i = index + 1;
        while i <= n {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    fn sub(&mut self, index: usize, delta: u64) {
        self.weights[index] -= delta;
        self.total -= delta;
        let n = self.weights.len();
        let mut i = index + 1;
        while i <= n {
            self.tree[i] -= delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of weights at indices `< end`.
    pub fn prefix_sum(&self, end: usize) -> u64 {
        let mut i = end.min(self.weights.len());
        let mut sum = 0;
        while i > 0 {
            sum += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        sum
    }

    /// Smallest index `i` with `prefix_sum(i + 1) > target`.
    ///
    /// `target` must be below [`total`](Self::total); the returned index then
    /// always has a positive weight.
    pub fn find(&self, mut target: u64) -> usize {
        debug_assert!(target < self.total);
        let n = self.weights.len();
        let mut pos = 0;
        let mut step = n;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos
    }
}
