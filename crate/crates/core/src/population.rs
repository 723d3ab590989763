//! Exact cluster-size state of a finite system.
//!
//! Monomers are kept as a single counter. Every cluster of size two or more
//! occupies a slot in a [`FenwickTree`] whose weight is the cluster size, so
//! picking a uniformly random node (equivalently, a cluster with probability
//! proportional to its size) is one integer draw followed by an `O(log C)`
//! descent. A size histogram is maintained next to the tree for `k_max` and
//! snapshots.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fenwick::FenwickTree;
use crate::observables::SizeHistogram;

/// One member of the population as seen by a node pick.
///
/// Monomers are distinct entries even though they share the pool: two picks
/// landing on different monomer units can merge, the same unit cannot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Entry {
    Monomer(u64),
    Cluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodePick {
    pub entry: Entry,
    pub size: u64,
}

#[derive(Debug, Clone)]
pub struct ClusterPopulation {
    mass: u64,
    monomers: u64,
    slots: FenwickTree,
    free: Vec<usize>,
    next_slot: usize,
    sizes: BTreeMap<u64, u64>,
    stored: u64,
}

/// Slot-exact serialized form, used by checkpoints so that a resumed run
/// maps random draws to the same clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationLayout {
    pub mass: u64,
    pub monomers: u64,
    pub slots: Vec<u64>,
    pub free: Vec<usize>,
}

impl ClusterPopulation {
    pub fn all_monomers(mass: u64) -> Self {
        Self {
            mass,
            monomers: mass,
            slots: FenwickTree::with_capacity(16),
            free: Vec::new(),
            next_slot: 0,
            sizes: BTreeMap::new(),
            stored: 0,
        }
    }

    pub fn single_gel(mass: u64) -> Self {
        let mut pop = Self::all_monomers(mass);
        pop.monomers = 0;
        pop.insert(mass);
        pop
    }

    /// Builds a population from a size histogram. Slots are assigned in
    /// increasing size order.
    pub fn from_histogram(h: &SizeHistogram) -> Result<Self> {
        h.validate()?;
        let mut pop = Self::all_monomers(h.mass);
        pop.monomers = h.counts.get(&1).copied().unwrap_or(0);
        for (&size, &count) in h.counts.range(2..) {
            for _ in 0..count {
                pop.insert(size);
            }
        }
        Ok(pop)
    }

    pub fn layout(&self) -> PopulationLayout {
        PopulationLayout {
            mass: self.mass,
            monomers: self.monomers,
            slots: (0..self.next_slot).map(|i| self.slots.weight(i)).collect(),
            free: self.free.clone(),
        }
    }

    pub fn from_layout(layout: &PopulationLayout) -> Result<Self> {
        let slots = FenwickTree::from_weights(&layout.slots);
        let mut sizes = BTreeMap::new();
        let mut stored = 0;
        for &s in &layout.slots {
            if s == 1 {
                return Err(Error::Checkpoint("slot holds a monomer".into()));
            }
            if s >= 2 {
                *sizes.entry(s).or_insert(0) += 1;
                stored += 1;
            }
        }
        let mut free_seen = vec![false; layout.slots.len()];
        for &f in &layout.free {
            if f >= layout.slots.len() || layout.slots[f] != 0 || free_seen[f] {
                return Err(Error::Checkpoint(format!("bad free slot {f}")));
            }
            free_seen[f] = true;
        }
        let pop = Self {
            mass: layout.mass,
            monomers: layout.monomers,
            slots,
            free: layout.free.clone(),
            next_slot: layout.slots.len(),
            sizes,
            stored,
        };
        if pop.monomers + pop.slots.total() != pop.mass {
            return Err(Error::Checkpoint("mass does not add up".into()));
        }
        Ok(pop)
    }

    pub fn mass(&self) -> u64 {
        self.mass
    }

    pub fn monomers(&self) -> u64 {
        self.monomers
    }

    /// Number of clusters of size at least two.
    pub fn stored_clusters(&self) -> u64 {
        self.stored
    }

    /// Total number of clusters `N`, monomers included.
    pub fn n_clusters(&self) -> u64 {
        self.monomers + self.stored
    }

    pub fn k_max(&self) -> u64 {
        match self.sizes.last_key_value() {
            Some((&s, _)) => s,
            None if self.monomers > 0 => 1,
            None => 0,
        }
    }

    /// Number of clusters of size exactly `size`.
    pub fn count_of(&self, size: u64) -> u64 {
        if size == 1 {
            self.monomers
        } else {
            self.sizes.get(&size).copied().unwrap_or(0)
        }
    }

    pub fn size_of(&self, entry: Entry) -> Result<u64> {
        match entry {
            Entry::Monomer(i) if i < self.monomers => Ok(1),
            Entry::Monomer(i) => Err(Error::UnknownSlot(i as usize)),
            Entry::Cluster(slot) => {
                if slot < self.next_slot && self.slots.weight(slot) >= 2 {
                    Ok(self.slots.weight(slot))
                } else {
                    Err(Error::UnknownSlot(slot))
                }
            }
        }
    }

    pub fn histogram(&self) -> SizeHistogram {
        let mut counts = self.sizes.clone();
        if self.monomers > 0 {
            counts.insert(1, self.monomers);
        }
        SizeHistogram {
            mass: self.mass,
            counts,
        }
    }

    /// Picks a node uniformly at random and returns the entry containing it.
    pub fn sample_node<R: Rng + ?Sized>(&self, rng: &mut R) -> NodePick {
        let u = rng.random_range(0..self.mass);
        self.locate_node(u)
    }

    /// Maps a node index in `[0, M)` to its entry: indices below the monomer
    /// count are monomers, the rest are laid out over the cluster slots.
    pub fn locate_node(&self, u: u64) -> NodePick {
        if u < self.monomers {
            NodePick {
                entry: Entry::Monomer(u),
                size: 1,
            }
        } else {
            let slot = self.slots.find(u - self.monomers);
            NodePick {
                entry: Entry::Cluster(slot),
                size: self.slots.weight(slot),
            }
        }
    }

    /// Merges two distinct entries; returns the size of the new cluster.
    pub fn merge(&mut self, a: Entry, b: Entry) -> Result<u64> {
        if a == b {
            return Err(Error::SelfMerge);
        }
        let size_a = self.size_of(a)?;
        let size_b = self.size_of(b)?;
        let merged = size_a + size_b;
        match (a, b) {
            (Entry::Monomer(_), Entry::Monomer(_)) => {
                self.monomers -= 2;
                self.insert(merged);
            }
            (Entry::Cluster(slot), Entry::Monomer(_)) | (Entry::Monomer(_), Entry::Cluster(slot)) => {
                self.monomers -= 1;
                self.resize(slot, merged);
            }
            (Entry::Cluster(keep), Entry::Cluster(drop)) => {
                self.remove(drop);
                self.resize(keep, merged);
            }
        }
        Ok(merged)
    }

    /// Disintegrates a stored cluster into monomers; returns its size.
    pub fn shatter(&mut self, entry: Entry) -> Result<u64> {
        let Entry::Cluster(slot) = entry else {
            return Err(Error::ShatterMonomer);
        };
        let size = self.size_of(entry)?;
        self.remove(slot);
        self.monomers += size;
        Ok(size)
    }

    fn insert(&mut self, size: u64) -> usize {
        let slot = self.free.pop().unwrap_or_else(|| {
            self.next_slot += 1;
            self.next_slot - 1
        });
        self.slots.set(slot, size);
        *self.sizes.entry(size).or_insert(0) += 1;
        self.stored += 1;
        slot
    }

    fn remove(&mut self, slot: usize) {
        let size = self.slots.weight(slot);
        self.slots.set(slot, 0);
        self.free.push(slot);
        self.drop_size(size);
        self.stored -= 1;
    }

    fn resize(&mut self, slot: usize, size: u64) {
        let old = self.slots.weight(slot);
        self.drop_size(old);
        self.slots.set(slot, size);
        *self.sizes.entry(size).or_insert(0) += 1;
    }

    fn drop_size(&mut self, size: u64) {
        if let Some(c) = self.sizes.get_mut(&size) {
            *c -= 1;
            if *c == 0 {
                self.sizes.remove(&size);
            }
        }
    }

    /// Recomputes every cached quantity from the slot weights and compares.
    pub fn check_invariants(&self) -> Result<()> {
        let mut sizes = BTreeMap::new();
        let mut stored = 0;
        let mut sum = 0;
        for slot in 0..self.next_slot {
            let w = self.slots.weight(slot);
            if w == 1 || w > self.mass {
                return Err(Error::BadHistogram(format!("slot {slot} has size {w}")));
            }
            if w >= 2 {
                *sizes.entry(w).or_insert(0u64) += 1;
                stored += 1;
                sum += w;
            }
        }
        if sum != self.slots.total() || self.monomers + sum != self.mass {
            return Err(Error::BadHistogram(format!(
                "mass {} + {} != {}",
                self.monomers, sum, self.mass
            )));
        }
        if sizes != self.sizes || stored != self.stored {
            return Err(Error::BadHistogram("cached size counts drifted".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cluster_entry(pop: &ClusterPopulation, size: u64) -> Entry {
        (0..pop.next_slot)
            .map(Entry::Cluster)
            .find(|&e| pop.size_of(e).ok() == Some(size))
            .unwrap()
    }

    #[test]
    fn merging_two_monomers() {
        let mut pop = ClusterPopulation::all_monomers(10);
        let size = pop.merge(Entry::Monomer(0), Entry::Monomer(1)).unwrap();
        assert_eq!(size, 2);
        assert_eq!(pop.monomers(), 8);
        assert_eq!(pop.stored_clusters(), 1);
        assert_eq!(pop.n_clusters(), 9);
        assert_eq!(pop.k_max(), 2);
        pop.check_invariants().unwrap();
    }

    #[test]
    fn merging_three_and_five() {
        let h = SizeHistogram::from_pairs(8, &[(3, 1), (5, 1)]);
        let mut pop = ClusterPopulation::from_histogram(&h).unwrap();
        let a = cluster_entry(&pop, 3);
        let b = cluster_entry(&pop, 5);
        assert_eq!(pop.merge(a, b).unwrap(), 8);
        assert_eq!(pop.n_clusters(), 1);
        assert_eq!(pop.k_max(), 8);
        pop.check_invariants().unwrap();
    }

    #[test]
    fn self_merge_is_rejected() {
        let mut pop = ClusterPopulation::single_gel(10);
        let gel = cluster_entry(&pop, 10);
        assert_eq!(pop.merge(gel, gel), Err(Error::SelfMerge));
        let mut pop = ClusterPopulation::all_monomers(10);
        assert_eq!(pop.merge(Entry::Monomer(3), Entry::Monomer(3)), Err(Error::SelfMerge));
        pop.check_invariants().unwrap();
    }

    #[test]
    fn shatter_releases_monomers() {
        let h = SizeHistogram::from_pairs(5, &[(1, 3), (2, 1)]);
        let mut pop = ClusterPopulation::from_histogram(&h).unwrap();
        let n_before = pop.n_clusters();
        let e = cluster_entry(&pop, 2);
        assert_eq!(pop.shatter(e).unwrap(), 2);
        assert_eq!(pop.monomers(), 5);
        assert_eq!(pop.n_clusters(), n_before + 1);

        let mut gel = ClusterPopulation::single_gel(50);
        let e = cluster_entry(&gel, 50);
        gel.shatter(e).unwrap();
        assert_eq!(gel.monomers(), 50);
        assert_eq!(gel.stored_clusters(), 0);
        assert_eq!(gel.k_max(), 1);
        gel.check_invariants().unwrap();
    }

    #[test]
    fn shatter_of_monomer_pool_is_rejected() {
        let mut pop = ClusterPopulation::all_monomers(4);
        assert_eq!(pop.shatter(Entry::Monomer(0)), Err(Error::ShatterMonomer));
    }

    #[test]
    fn stale_handles_are_rejected() {
        let mut pop = ClusterPopulation::single_gel(6);
        let e = cluster_entry(&pop, 6);
        pop.shatter(e).unwrap();
        assert_eq!(pop.shatter(e), Err(Error::UnknownSlot(0)));
        assert!(pop.merge(Entry::Monomer(6), Entry::Monomer(0)).is_err());
    }

    #[test]
    fn sampling_degenerate_populations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pop = ClusterPopulation::all_monomers(20);
        for _ in 0..100 {
            assert_eq!(pop.sample_node(&mut rng).size, 1);
        }
        let gel = ClusterPopulation::single_gel(20);
        for _ in 0..100 {
            assert_eq!(gel.sample_node(&mut rng).size, 20);
        }
    }

    #[test]
    fn layout_round_trip_preserves_slots() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pop = ClusterPopulation::all_monomers(200);
        for _ in 0..500 {
            let a = pop.sample_node(&mut rng);
            let b = pop.sample_node(&mut rng);
            if a.entry != b.entry {
                pop.merge(a.entry, b.entry).unwrap();
            }
            if rng.random_bool(0.05) {
                let c = pop.sample_node(&mut rng);
                let _ = pop.shatter(c.entry);
            }
        }
        let back = ClusterPopulation::from_layout(&pop.layout()).unwrap();
        back.check_invariants().unwrap();
        for u in 0..200 {
            assert_eq!(back.locate_node(u), pop.locate_node(u));
        }
        assert_eq!(back.histogram(), pop.histogram());
    }
}
