use std::fmt::Write as _;

use super::embed::EmbeddingSet;
use crate::dataset::PatchClass;
use crate::error::{Error, Result};

/// Which rows a neighbour search may return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborFilter {
    Class(PatchClass),
    /// Rows with this true label that the network also got right.
    WellClassifiedLabel(usize),
}

impl NeighborFilter {
    fn admits(self, set: &EmbeddingSet, row: usize) -> bool {
        match self {
            NeighborFilter::Class(c) => set.classes[row] == c,
            NeighborFilter::WellClassifiedLabel(l) => set.true_labels[row] == l && !set.is_misclassified(row),
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Up to `k` rows nearest to `query` in feature space among those admitted
/// by `filter`, excluding the query itself, by non-decreasing distance (row
/// index breaks ties).
pub fn feature_neighbors(
    set: &EmbeddingSet,
    query: usize,
    filter: NeighborFilter,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    if query >= set.len() {
        return Err(Error::invalid(format!("query row {query} outside {} rows", set.len())));
    }
    let mut hits: Vec<(usize, f64)> = (0..set.len())
        .filter(|&j| j != query && filter.admits(set, j))
        .map(|j| (j, euclidean(&set.features[query], &set.features[j])))
        .collect();
    if hits.is_empty() {
        return Err(Error::invalid(format!("no rows match {filter:?}")));
    }
    hits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    hits.truncate(k);
    Ok(hits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Misclassified {
    pub row: usize,
    pub class: PatchClass,
    pub error: f64,
    /// Closest correctly classified row carrying the label this row was
    /// wrongly given, with its distance.
    pub nearest_opposite: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisclassificationReport {
    /// Worst rows per class (index = class), largest error first.
    pub per_class: [Vec<Misclassified>; 4],
}

impl MisclassificationReport {
    pub fn is_empty(&self) -> bool {
        self.per_class.iter().all(Vec::is_empty)
    }

    pub fn to_text(&self, set: &EmbeddingSet) -> String {
        let mut s = String::new();
        for class in PatchClass::ALL {
            let rows = &self.per_class[class.index()];
            let _ = writeln!(s, "{class} misclassified {}", rows.len());
            for m in rows {
                let r = &set.records[m.row];
                let _ = write!(
                    s,
                    "  row {} image {} at ({}, {}) error {:.4}",
                    m.row, r.image, r.cx, r.cy, m.error
                );
                match m.nearest_opposite {
                    Some((j, d)) => {
                        let _ = writeln!(s, " nearest {} row {} distance {:.4}", set.classes[j], j, d);
                    }
                    None => s.push('\n'),
                }
            }
        }
        s
    }
}

/// For each class, the `top_k` misclassified rows with the largest error and
/// their nearest well-classified counterpart from the label they were
/// mistaken for.
pub fn misclassification_report(set: &EmbeddingSet, top_k: usize) -> MisclassificationReport {
    let mut per_class: [Vec<Misclassified>; 4] = Default::default();
    for row in (0..set.len()).filter(|&r| set.is_misclassified(r)) {
        per_class[set.classes[row].index()].push(Misclassified {
            row,
            class: set.classes[row],
            error: set.error(row),
            nearest_opposite: None,
        });
    }
    for rows in &mut per_class {
        rows.sort_by(|a, b| b.error.total_cmp(&a.error).then(a.row.cmp(&b.row)));
        rows.truncate(top_k);
        for m in rows.iter_mut() {
            let filter = NeighborFilter::WellClassifiedLabel(set.predicted[m.row]);
            m.nearest_opposite = feature_neighbors(set, m.row, filter, 1)
                .ok()
                .and_then(|v| v.first().copied());
        }
    }
    MisclassificationReport { per_class }
}

#[cfg(test)]
mod tests {
    use super::super::embed::FEATURE_WIDTH;
    use super::*;
    use crate::dataset::{PatchRecord, Target};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, seed: u64) -> EmbeddingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = (0..n)
            .map(|_| (0..FEATURE_WIDTH).map(|_| rng.random_range(0..4) as f64).collect())
            .collect();
        let classes: Vec<PatchClass> = (0..n).map(|i| PatchClass::ALL[i % 4]).collect();
        let probs = (0..n).map(|_| rng.random()).collect();
        let records = (0..n)
            .map(|i| PatchRecord {
                image: 0,
                cx: i as u32,
                cy: 0,
                class: classes[i],
            })
            .collect();
        EmbeddingSet::from_rows(Target::Detector, features, classes, probs, records).unwrap()
    }

    #[test]
    fn neighbours_are_sorted_and_exclude_the_query() {
        let set = random_set(40, 1);
        let hits = feature_neighbors(&set, 3, NeighborFilter::Class(PatchClass::C4), 100).unwrap();
        assert!(hits.iter().all(|&(j, _)| j != 3 && set.classes[j] == PatchClass::C4));
        assert!(hits.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(hits.len(), 10 - 1);
    }

    #[test]
    fn duplicate_row_is_at_distance_zero() {
        let mut set = random_set(12, 2);
        set.features[8] = set.features[0].clone();
        let hits = feature_neighbors(&set, 0, NeighborFilter::Class(PatchClass::C1), 1).unwrap();
        assert_eq!(hits, vec![(8, 0.0)]);
    }

    #[test]
    fn empty_filter_rejected() {
        let set = random_set(4, 3);
        assert!(feature_neighbors(&set, 0, NeighborFilter::Class(PatchClass::C1), 3).is_err());
    }

    #[test]
    fn perfect_classifier_reports_nothing() {
        let mut set = random_set(20, 4);
        for r in 0..20 {
            set.probabilities[r] = set.true_labels[r] as f64;
            set.predicted[r] = set.true_labels[r];
        }
        assert!(misclassification_report(&set, 5).is_empty());
    }

    #[test]
    fn report_rows_are_wrong_and_bounded() {
        let set = random_set(200, 5);
        let report = misclassification_report(&set, 5);
        assert!(!report.is_empty());
        for rows in &report.per_class {
            assert!(rows.len() <= 5);
            for m in rows {
                assert_ne!(set.predicted[m.row], set.true_labels[m.row]);
                assert!(m.error >= 0.5 && m.error <= 1.0);
                let (j, _) = m.nearest_opposite.unwrap();
                assert_eq!(set.true_labels[j], set.predicted[m.row]);
                assert!(!set.is_misclassified(j));
            }
            assert!(rows.windows(2).all(|w| w[0].error >= w[1].error));
        }
        assert!(report.to_text(&set).contains("C1 misclassified"));
    }
}
