use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LabelStats {
    pub count: u64,
    pub words: u64,
}

/// Count of global synchronization events issued by one rank.
///
/// Every collective is one event regardless of how many messages it sends
/// internally, and every rank records the same events, so the numbers do not
/// depend on the process count.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SyncStats {
    pub sync_count: u64,
    /// Total `f64` values combined across all events.
    pub words_reduced: u64,
    /// Pairwise-combine rounds performed inside tree reductions.
    pub tree_rounds: u64,
    pub by_label: BTreeMap<String, LabelStats>,
}

impl SyncStats {
    pub(crate) fn record(&mut self, label: &str, words: usize, tree_rounds: u32) {
        self.sync_count += 1;
        self.words_reduced += words as u64;
        self.tree_rounds += u64::from(tree_rounds);
        let entry = self.by_label.entry(label.to_owned()).or_default();
        entry.count += 1;
        entry.words += words as u64;
    }

    /// Events whose label starts with `prefix`.
    pub fn count_prefixed(&self, prefix: &str) -> u64 {
        self.by_label
            .iter()
            .filter(|(l, _)| l.starts_with(prefix))
            .map(|(_, s)| s.count)
            .sum()
    }

    /// Copy without the events whose label starts with `prefix`.
    pub fn excluding(&self, prefix: &str) -> SyncStats {
        let mut out = SyncStats {
            tree_rounds: self.tree_rounds,
            ..SyncStats::default()
        };
        for (label, s) in &self.by_label {
            if label.starts_with(prefix) {
                continue;
            }
            out.sync_count += s.count;
            out.words_reduced += s.words;
            out.by_label.insert(label.clone(), *s);
        }
        out
    }

    /// Events recorded after `earlier` was taken from the same counter.
    pub fn since(&self, earlier: &SyncStats) -> SyncStats {
        let mut by_label = BTreeMap::new();
        for (label, s) in &self.by_label {
            let before = earlier.by_label.get(label).copied().unwrap_or_default();
            if s.count > before.count {
                by_label.insert(
                    label.clone(),
                    LabelStats {
                        count: s.count - before.count,
                        words: s.words - before.words,
                    },
                );
            }
        }
        SyncStats {
            sync_count: self.sync_count - earlier.sync_count,
            words_reduced: self.words_reduced - earlier.words_reduced,
            tree_rounds: self.tree_rounds - earlier.tree_rounds,
            by_label,
        }
    }

    pub fn reset(&mut self) {
        *self = SyncStats::default();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filtering_and_deltas() {
        let mut s = SyncStats::default();
        s.record("gram/a", 8, 0);
        let snap = s.clone();
        s.record("gram/a", 8, 0);
        s.record("tsqr/x", 4, 2);
        s.record("gather", 100, 0);
        assert_eq!(s.sync_count, 4);
        assert_eq!(s.count_prefixed("gram/"), 2);
        let algo = s.excluding("gather");
        assert_eq!(algo.sync_count, 3);
        assert_eq!(algo.words_reduced, 20);
        let d = s.since(&snap);
        assert_eq!(d.sync_count, 3);
        assert_eq!(d.by_label["gram/a"], LabelStats { count: 1, words: 8 });
        assert_eq!(d.tree_rounds, 2);
    }
}
