//! Single-locus-variant pairs, their dependence groups and weights.
//!
//! At a focal locus, two STs form an SLV pair when their allele ids agree at
//! every other locus. Agreement on all other loci is an equivalence relation,
//! so the STs involved in SLV pairs split into classes (groups) in which every
//! two members form a pair and no member pairs with anything outside.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::dataset::{hamming_bytes, BuildMode, DatasetError, MlstDataset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SlvError {
    #[error("STs {st_a} and {st_b} carry different alleles at {locus} with identical sequences")]
    ZeroDifferencePair { locus: String, st_a: u32, st_b: u32 },
    #[error("group {group} at {locus} has {pairs} pairs but {members} members")]
    IncompleteGroup { locus: String, group: u32, members: usize, pairs: usize },
    #[error("pair ({st_a}, {st_b}) listed twice at {locus}")]
    DuplicatePair { locus: String, st_a: u32, st_b: u32 },
    #[error("ST {st} appears in more than one group at {locus}")]
    OverlappingGroups { locus: String, st: u32 },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlvPair {
    pub st_a: u32,
    pub st_b: u32,
    /// Nucleotide differences at the focal locus; always ≥ 1.
    pub x: u32,
    pub group_id: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlvGroup {
    pub group_id: u32,
    /// Member ST ids, ascending.
    pub members: Vec<u32>,
}

impl SlvGroup {
    /// k_g = n_g(n_g − 1)/2
    pub fn pair_count(&self) -> usize {
        pair_count(self.members.len())
    }
}

#[inline]
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Weight of every pair in a group of `n_g` STs: {n_g(n_g − 1)/2}^(−1/2).
pub fn pair_weight(n_g: usize) -> f64 {
    1.0 / libm::sqrt(pair_count(n_g) as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSummary {
    /// G
    pub groups: usize,
    /// n_1, …, n_G
    pub sizes: Vec<usize>,
    /// n = Σ k_g
    pub pairs: usize,
}

/// All SLV pairs at one locus, ordered by group id, then `st_a`, then `st_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlvPartition {
    pub locus: String,
    pub groups: Vec<SlvGroup>,
    pub pairs: Vec<SlvPair>,
}

impl SlvPartition {
    pub fn empty(locus: impl Into<String>) -> Self {
        Self { locus: locus.into(), groups: Vec::new(), pairs: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn summary(&self) -> PartitionSummary {
        let sizes: Vec<usize> = self.groups.iter().map(|g| g.members.len()).collect();
        PartitionSummary { groups: sizes.len(), pairs: sizes.iter().map(|&n| pair_count(n)).sum(), sizes }
    }

    /// Pair counts k_g, one per group.
    pub fn group_pair_counts(&self) -> Vec<usize> {
        self.groups.iter().map(SlvGroup::pair_count).collect()
    }

    /// Consecutive slices of `pairs`, one per group.
    pub fn pairs_by_group(&self) -> impl Iterator<Item = &[SlvPair]> {
        let mut rest = self.pairs.as_slice();
        self.groups.iter().map(move |g| {
            let (head, tail) = rest.split_at(g.pair_count());
            rest = tail;
            head
        })
    }

    /// Builds a partition in which every pair is its own group (of two
    /// synthetic STs 2i+1 and 2i+2).
    pub fn singletons(locus: impl Into<String>, xs: &[u32]) -> Self {
        let mut groups = Vec::with_capacity(xs.len());
        let mut pairs = Vec::with_capacity(xs.len());
        for (i, &x) in xs.iter().enumerate() {
            let (a, b) = (2 * i as u32 + 1, 2 * i as u32 + 2);
            let group_id = i as u32 + 1;
            groups.push(SlvGroup { group_id, members: alloc::vec![a, b] });
            pairs.push(SlvPair { st_a: a, st_b: b, x, group_id, weight: 1.0 });
        }
        Self { locus: locus.into(), groups, pairs }
    }

    /// Rebuilds a partition from pair rows `(group_id, st_a, st_b, x)`.
    ///
    /// Groups are reconstructed from the ids and must be complete: a group of
    /// n STs lists all n(n−1)/2 pairs. Weights are recomputed from group sizes.
    pub fn from_rows(locus: impl Into<String>, rows: &[(u32, u32, u32, u32)]) -> Result<Self, SlvError> {
        let locus = locus.into();
        let mut by_group: BTreeMap<u32, Vec<(u32, u32, u32)>> = BTreeMap::new();
        for &(g, a, b, x) in rows {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            if x == 0 || a == b {
                return Err(SlvError::ZeroDifferencePair { locus, st_a: a, st_b: b });
            }
            by_group.entry(g).or_default().push((a, b, x));
        }
        let mut owner: BTreeMap<u32, u32> = BTreeMap::new();
        let mut groups = Vec::with_capacity(by_group.len());
        let mut pairs = Vec::with_capacity(rows.len());
        for (group_id, mut list) in by_group {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
                return Err(SlvError::DuplicatePair { locus, st_a: w[0].0, st_b: w[0].1 });
            }
            let mut members: Vec<u32> = list.iter().flat_map(|&(a, b, _)| [a, b]).collect();
            members.sort_unstable();
            members.dedup();
            if pair_count(members.len()) != list.len() {
                return Err(SlvError::IncompleteGroup { locus, group: group_id, members: members.len(), pairs: list.len() });
            }
            for &st in &members {
                if owner.insert(st, group_id).is_some() {
                    return Err(SlvError::OverlappingGroups { locus, st });
                }
            }
            let weight = pair_weight(members.len());
            pairs.extend(list.iter().map(|&(st_a, st_b, x)| SlvPair { st_a, st_b, x, group_id, weight }));
            groups.push(SlvGroup { group_id, members });
        }
        Ok(Self { locus, groups, pairs })
    }
}

/// Non-fatal events during lenient extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlvWarning {
    /// `dropped` has a different allele id from `kept` at the focal locus but
    /// an identical sequence; it was removed from the group.
    ZeroDifference { locus: String, kept: u32, dropped: u32 },
}

/// Extracts the SLV partition at `locus`.
///
/// STs that cannot be compared at the focal locus are left out. In strict
/// mode, a pair of distinct allele ids with identical sequences is an error;
/// in lenient mode the later ST of such a pair is dropped from its group (so
/// groups stay complete) and a warning is returned.
/// Kept member indices and their (i, j, x) pairs.
type RawGroup = (Vec<usize>, Vec<(usize, usize, u32)>);

pub fn extract_slv(dataset: &MlstDataset, locus: usize, mode: BuildMode) -> Result<(SlvPartition, Vec<SlvWarning>), SlvError> {
    let name = dataset.loci()[locus].name.clone();
    let profiles = dataset.profiles();
    let mut classes: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
    for (pi, p) in profiles.iter().enumerate() {
        if !dataset.is_usable(pi, locus) {
            continue;
        }
        let reduced: Vec<u32> = p
            .alleles
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != locus)
            .map(|(_, &a)| a)
            .collect();
        classes.entry(reduced).or_default().push(pi);
    }

    let mut warnings = Vec::new();
    let mut raw_groups: Vec<RawGroup> = Vec::new();
    for members in classes.into_values().filter(|m| m.len() >= 2) {
        let mut kept: Vec<usize> = Vec::with_capacity(members.len());
        let mut pairs = Vec::new();
        'member: for &pi in &members {
            let seq = dataset.sequence(pi, locus).expect("usable").sequence.as_bytes();
            let mut row = Vec::with_capacity(kept.len());
            for &pk in &kept {
                debug_assert_ne!(profiles[pk].alleles[locus], profiles[pi].alleles[locus]);
                let other = dataset.sequence(pk, locus).expect("usable").sequence.as_bytes();
                let x = hamming_bytes(other, seq)? as u32;
                if x == 0 {
                    let (kept_st, dropped) = (profiles[pk].st_id, profiles[pi].st_id);
                    if mode == BuildMode::Strict {
                        return Err(SlvError::ZeroDifferencePair { locus: name, st_a: kept_st, st_b: dropped });
                    }
                    warnings.push(SlvWarning::ZeroDifference { locus: name.clone(), kept: kept_st, dropped });
                    continue 'member;
                }
                row.push((pk, pi, x));
            }
            kept.push(pi);
            pairs.extend(row);
        }
        if kept.len() >= 2 {
            raw_groups.push((kept, pairs));
        }
    }
    // Profiles are sorted by ST id, so ordering by the first member index
    // orders groups by their smallest ST.
    raw_groups.sort_by_key(|(m, _)| m[0]);

    let mut partition = SlvPartition::empty(name);
    for (gi, (members, mut pairs)) in raw_groups.into_iter().enumerate() {
        let group_id = gi as u32 + 1;
        let weight = pair_weight(members.len());
        pairs.sort_unstable_by_key(|&(a, b, _)| (a, b));
        partition.pairs.extend(pairs.into_iter().map(|(a, b, x)| SlvPair {
            st_a: profiles[a].st_id,
            st_b: profiles[b].st_id,
            x,
            group_id,
            weight,
        }));
        partition.groups.push(SlvGroup { group_id, members: members.iter().map(|&m| profiles[m].st_id).collect() });
    }
    Ok((partition, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, AlleleSequence, StProfile};
    use alloc::string::ToString;
    use alloc::vec;

    fn four_sts_one_group() -> MlstDataset {
        let loci = vec!["a".to_string(), "b".to_string()];
        let alleles = vec![
            vec![
                AlleleSequence::new("a", 1, "AAAA"),
                AlleleSequence::new("a", 2, "AAAT"),
                AlleleSequence::new("a", 3, "AATT"),
                AlleleSequence::new("a", 4, "ATTT"),
            ],
            vec![AlleleSequence::new("b", 1, "CCCC")],
        ];
        let profiles = (1..=4).map(|i| StProfile::new(i, vec![i, 1])).collect();
        build_dataset(&loci, profiles, alleles, BuildMode::Strict).unwrap().0
    }

    #[test]
    fn four_sts_give_six_equally_weighted_pairs() {
        let ds = four_sts_one_group();
        let (p, w) = extract_slv(&ds, 0, BuildMode::Strict).unwrap();
        assert!(w.is_empty());
        assert_eq!(p.groups.len(), 1);
        assert_eq!(p.n_pairs(), 6);
        for pair in &p.pairs {
            assert!((pair.weight - 1.0 / libm::sqrt(6.0)).abs() < 1e-15);
        }
        let xs: Vec<u32> = p.pairs.iter().map(|q| q.x).collect();
        assert_eq!(xs, vec![1, 2, 3, 1, 2, 1]);
        // No SLVs at locus b: the a-alleles all differ.
        assert!(extract_slv(&ds, 1, BuildMode::Strict).unwrap().0.is_empty());
    }

    #[test]
    fn weights_for_small_groups() {
        assert_eq!(pair_weight(2), 1.0);
        assert!((pair_weight(3) - 0.577_350_269_189_625_8).abs() < 1e-15);
    }

    #[test]
    fn summary_counts() {
        let p = SlvPartition::from_rows("l", &[(1, 1, 2, 3), (1, 1, 3, 4), (1, 2, 3, 1), (2, 7, 8, 2)]).unwrap();
        let s = p.summary();
        assert_eq!(s, PartitionSummary { groups: 2, sizes: vec![3, 2], pairs: 4 });
        let e = SlvPartition::empty("l").summary();
        assert_eq!(e, PartitionSummary { groups: 0, sizes: vec![], pairs: 0 });
    }

    #[test]
    fn squared_weights_sum_to_group_count() {
        let p = SlvPartition::from_rows("l", &[(1, 1, 2, 3), (1, 1, 3, 4), (1, 2, 3, 1), (2, 7, 8, 2)]).unwrap();
        let s: f64 = p.pairs.iter().map(|q| q.weight * q.weight).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn incomplete_group_rows_are_rejected() {
        let err = SlvPartition::from_rows("l", &[(1, 1, 2, 3), (1, 1, 3, 4)]).unwrap_err();
        assert!(matches!(err, SlvError::IncompleteGroup { members: 3, pairs: 2, .. }));
    }

    #[test]
    fn zero_difference_strict_vs_lenient() {
        let loci = vec!["a".to_string(), "b".to_string()];
        let alleles = vec![
            vec![AlleleSequence::new("a", 1, "AAAA"), AlleleSequence::new("a", 2, "AAAA"), AlleleSequence::new("a", 3, "TAAA")],
            vec![AlleleSequence::new("b", 1, "CCCC")],
        ];
        let profiles: Vec<StProfile> = (1..=3).map(|i| StProfile::new(i, vec![i, 1])).collect();
        let ds = build_dataset(&loci, profiles, alleles, BuildMode::Strict).unwrap().0;
        assert!(matches!(extract_slv(&ds, 0, BuildMode::Strict), Err(SlvError::ZeroDifferencePair { st_a: 1, st_b: 2, .. })));
        let (p, w) = extract_slv(&ds, 0, BuildMode::Lenient).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(p.groups[0].members, vec![1, 3]);
        assert_eq!(p.pairs.len(), 1);
        assert_eq!(p.pairs[0].weight, 1.0);
    }
}
