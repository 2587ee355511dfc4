use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClassId, TaskDataset};

/// Cumulative per-class sample counts over every task seen so far.
///
/// Only classes that have appeared are stored, so every count is at least
/// one and the imbalance ratio is always defined.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceLedger {
    cumulative_counts: BTreeMap<ClassId, u64>,
}

impl ImbalanceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (ClassId, u64)>) -> Self {
        let mut ledger = Self::new();
        ledger.add_counts(counts);
        ledger
    }

    pub fn add_counts(&mut self, counts: impl IntoIterator<Item = (ClassId, u64)>) {
        for (id, n) in counts {
            if n > 0 {
                *self.cumulative_counts.entry(id).or_insert(0) += n;
            }
        }
    }

    /// Folds a task's class counts into the cumulative totals.
    pub fn update(&mut self, task: &TaskDataset) {
        self.add_counts(task.class_counts.iter().map(|(&id, &n)| (id, n as u64)));
    }

    pub fn counts(&self) -> &BTreeMap<ClassId, u64> {
        &self.cumulative_counts
    }

    pub fn class_count(&self) -> usize {
        self.cumulative_counts.len()
    }

    /// max(count) / min(count) over stored classes; 1 for an empty ledger.
    pub fn imbalance_ratio(&self) -> f64 {
        let max = self.cumulative_counts.values().max();
        let min = self.cumulative_counts.values().min();
        match (max, min) {
            (Some(&max), Some(&min)) => max as f64 / min as f64,
            _ => 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids<const N: usize>(pairs: [(u32, u64); N]) -> Vec<(ClassId, u64)> {
        pairs.into_iter().map(|(i, n)| (ClassId(i), n)).collect()
    }

    #[test]
    fn ratio_examples() {
        let l = ImbalanceLedger::from_counts(ids([(0, 4), (1, 2), (2, 8)]));
        assert_eq!(l.imbalance_ratio(), 4.0);

        let l = ImbalanceLedger::from_counts(ids([(0, 5), (1, 5), (2, 5)]));
        assert_eq!(l.imbalance_ratio(), 1.0);

        let mut l = ImbalanceLedger::from_counts(ids([(0, 3), (1, 1)]));
        l.add_counts(ids([(1, 5), (2, 2)]));
        assert_eq!(l.counts()[&ClassId(1)], 6);
        assert_eq!(l.imbalance_ratio(), 3.0);
    }

    #[test]
    fn zero_counts_are_not_stored() {
        let l = ImbalanceLedger::from_counts(ids([(0, 3), (1, 0)]));
        assert_eq!(l.class_count(), 1);
        assert_eq!(l.imbalance_ratio(), 1.0);
    }

    proptest! {
        #[test]
        fn ratio_at_least_one(counts in prop::collection::vec((0u32..20, 1u64..1000), 1..30)) {
            let l = ImbalanceLedger::from_counts(counts.iter().map(|&(i, n)| (ClassId(i), n)));
            let ir = l.imbalance_ratio();
            prop_assert!(ir >= 1.0);
            let all_equal = l.counts().values().all(|&v| v == *l.counts().values().next().unwrap());
            prop_assert_eq!(ir == 1.0, all_equal);
        }

        #[test]
        fn update_order_is_irrelevant(
            a in prop::collection::vec((0u32..10, 1u64..50), 0..10),
            b in prop::collection::vec((0u32..10, 1u64..50), 0..10),
        ) {
            let to_ids = |v: &Vec<(u32, u64)>| v.iter().map(|&(i, n)| (ClassId(i), n)).collect::<Vec<_>>();
            let mut ab = ImbalanceLedger::new();
            ab.add_counts(to_ids(&a));
            ab.add_counts(to_ids(&b));
            let mut ba = ImbalanceLedger::new();
            ba.add_counts(to_ids(&b));
            ba.add_counts(to_ids(&a));
            prop_assert_eq!(ab, ba);
        }
    }
}
