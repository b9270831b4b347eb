//! Positive/negative ordered-pair bookkeeping for a two-view batch.
//!
//! Views are interleaved: rows `2k` and `2k + 1` hold the two augmentations
//! of source sample `k`, so the positive partner of view `i` is `i ^ 1`.

use crate::error::{ensure_dim, Error, Result};

/// Ordered pair indices for a batch of `n` source samples (`2n` views).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndexSet {
    n: usize,
    positives: Vec<(usize, usize)>,
    negatives_by_anchor: Vec<Vec<usize>>,
}

/// Positive partner of view `i`.
#[inline]
pub fn partner(i: usize) -> usize {
    i ^ 1
}

/// Builds the pair structure for `n ≥ 1` source samples.
pub fn build_pairs(n: usize) -> Result<PairIndexSet> {
    if n == 0 {
        return Err(Error::domain("batch size must be at least 1"));
    }
    let views = 2 * n;
    let positives = (0..views).map(|a| (a, partner(a))).collect();
    let negatives_by_anchor = (0..views)
        .map(|a| {
            (0..views)
                .filter(|&j| j != a && j != partner(a))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(PairIndexSet {
        n,
        positives,
        negatives_by_anchor,
    })
}

impl PairIndexSet {
    /// Number of source samples.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of views (rows of a feature batch).
    pub fn views(&self) -> usize {
        2 * self.n
    }

    /// Ordered positive pairs `(a, partner(a))`, one per anchor.
    pub fn positives(&self) -> &[(usize, usize)] {
        &self.positives
    }

    pub fn negatives_of(&self, anchor: usize) -> &[usize] {
        &self.negatives_by_anchor[anchor]
    }

    pub fn negatives_by_anchor(&self) -> &[Vec<usize>] {
        &self.negatives_by_anchor
    }

    /// `T_P = 2N`.
    pub fn t_p(&self) -> usize {
        self.positives.len()
    }

    /// `T_N = 4N² − 4N`, counted from the stored lists.
    pub fn t_n(&self) -> usize {
        self.negatives_by_anchor.iter().map(Vec::len).sum()
    }

    /// Iterates every ordered negative pair `(anchor, other)`.
    pub fn negative_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.negatives_by_anchor
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().map(move |&j| (a, j)))
    }

    pub fn is_negative(&self, i: usize, j: usize) -> bool {
        i != j && j != partner(i) && i < self.views() && j < self.views()
    }
}

/// Flags negatives whose two views share a class label, aligned with
/// [`PairIndexSet::negatives_by_anchor`].
pub fn false_negative_mask(pairs: &PairIndexSet, labels: &[usize]) -> Result<Vec<Vec<bool>>> {
    ensure_dim("false_negative_mask labels", pairs.views(), labels.len())?;
    Ok(pairs
        .negatives_by_anchor
        .iter()
        .enumerate()
        .map(|(a, list)| list.iter().map(|&j| labels[a] == labels[j]).collect())
        .collect())
}

/// Expands per-source labels to per-view labels under the interleaved layout.
pub fn view_labels(source_labels: &[usize]) -> Vec<usize> {
    source_labels.iter().flat_map(|&l| [l, l]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Walks the full 2N×2N grid: diagonal cells are self-pairs, cells
    /// whose views come from the same source are positives, the rest are
    /// negatives.
    fn grid_oracle(n: usize) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..2 * n {
            for j in 0..2 * n {
                if i == j {
                    continue;
                }
                if i / 2 == j / 2 {
                    pos.push((i, j));
                } else {
                    neg.push((i, j));
                }
            }
        }
        (pos, neg)
    }

    #[test]
    fn counts_for_paper_batch() {
        let p = build_pairs(128).unwrap();
        assert_eq!(p.t_p(), 256);
        assert_eq!(p.t_n(), 65024);
    }

    #[test]
    fn single_sample_has_no_negatives() {
        let p = build_pairs(1).unwrap();
        assert_eq!((p.t_p(), p.t_n()), (2, 0));
        assert!(build_pairs(0).is_err());
    }

    #[test]
    fn matches_grid_enumeration() {
        for n in 1..=8 {
            let p = build_pairs(n).unwrap();
            let (pos, neg) = grid_oracle(n);
            assert_eq!(p.positives(), pos.as_slice());
            assert_eq!(p.negative_pairs().collect::<Vec<_>>(), neg);
            let tp = p.t_p();
            assert_eq!(p.t_n(), tp * tp - 2 * tp);
        }
        let p = build_pairs(2).unwrap();
        assert_eq!((p.t_p(), p.t_n()), (4, 8));
    }

    #[test]
    fn negative_relation_symmetric_and_irreflexive() {
        let p = build_pairs(5).unwrap();
        for (i, j) in p.negative_pairs() {
            assert_ne!(i, j);
            assert!(p.negatives_of(j).contains(&i));
            assert!(p.is_negative(i, j));
        }
        for &(i, j) in p.positives() {
            assert_eq!(partner(j), i);
        }
    }

    #[test]
    fn false_negative_examples() {
        let p = build_pairs(4).unwrap();
        let all_same = vec![3; 8];
        let m = false_negative_mask(&p, &all_same).unwrap();
        assert!(m.iter().flatten().all(|&b| b));

        let distinct = view_labels(&[0, 1, 2, 3]);
        let m = false_negative_mask(&p, &distinct).unwrap();
        assert!(m.iter().flatten().all(|&b| !b));

        let labels = view_labels(&[0, 0, 1, 1]);
        let m = false_negative_mask(&p, &labels).unwrap();
        let flagged = m.iter().flatten().filter(|&&b| b).count();
        let mut expected = 0;
        for i in 0..8 {
            for j in 0..8 {
                if i != j && i / 2 != j / 2 && labels[i] == labels[j] {
                    expected += 1;
                }
            }
        }
        assert_eq!(flagged, expected);
        assert_eq!(expected, 16);

        assert!(false_negative_mask(&p, &[0; 3]).is_err());
    }
}
