//! MLST datasets: loci, allele sequences and sequence-type profiles.
//!
//! A dataset is assembled once by [`build_dataset`] and immutable afterwards.
//! Profiles are kept sorted by ST id and alleles by allele id, so the result
//! does not depend on input order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

/// Placeholder for masked (non-ACGT) positions in lenient mode.
pub const WILDCARD: u8 = b'N';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BuildMode {
    /// Every data problem is an error.
    #[default]
    Strict,
    /// Problems are recorded and the affected ST is excluded where it cannot
    /// be compared.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("need at least 2 loci, got {0}")]
    TooFewLoci(usize),
    #[error("need at least 2 sequence types, got {0}")]
    TooFewSts(usize),
    #[error("duplicate ST {0}")]
    DuplicateSt(u32),
    #[error("STs {0} and {1} have identical allelic profiles")]
    DuplicateProfile(u32, u32),
    #[error("ST {st} lists {got} alleles but there are {expected} loci")]
    ProfileWidth { st: u32, got: usize, expected: usize },
    #[error("duplicate allele {locus}_{allele}")]
    DuplicateAllele { locus: String, allele: u32 },
    #[error("ST {st} references allele {locus}_{allele}, which has no sequence")]
    ReferentialIntegrity { st: u32, locus: String, allele: u32 },
    #[error("allele {locus}_{allele} has length {got}, expected {expected}")]
    UnequalLength { locus: String, allele: u32, got: usize, expected: usize },
    #[error("allele {locus}_{allele} has invalid base '{base}' at position {position}")]
    InvalidBase { locus: String, allele: u32, position: usize, base: char },
    #[error("allele {locus}_{allele} has an empty sequence")]
    EmptySequence { locus: String, allele: u32 },
    #[error("sequences of length {0} and {1} cannot be compared")]
    LengthMismatch(usize, usize),
    #[error("no locus named {0}")]
    UnknownLocus(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocusMeta {
    pub name: String,
    /// Modal allele length, in bases.
    pub length: usize,
    pub allele_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlleleSequence {
    pub locus: String,
    pub allele_id: u32,
    /// Uppercase sequence; masked positions hold [`WILDCARD`].
    pub sequence: String,
}

impl AlleleSequence {
    pub fn new(locus: impl Into<String>, allele_id: u32, sequence: impl Into<String>) -> Self {
        let mut sequence: String = sequence.into();
        sequence.make_ascii_uppercase();
        Self { locus: locus.into(), allele_id, sequence }
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StProfile {
    pub st_id: u32,
    /// One allele id per locus, in dataset locus order.
    pub alleles: Vec<u32>,
    pub isolate_count: Option<u32>,
}

impl StProfile {
    pub fn new(st_id: u32, alleles: Vec<u32>) -> Self {
        Self { st_id, alleles, isolate_count: None }
    }

    /// Number of isolates of this ST; 1 when not recorded.
    pub fn count(&self) -> u32 {
        self.isolate_count.unwrap_or(1)
    }
}

/// Why an ST cannot be compared at a locus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExclusionReason {
    MissingAllele,
    OffLength,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub locus: String,
    pub st_id: u32,
    pub allele_id: u32,
    pub reason: ExclusionReason,
}

/// What lenient construction had to drop or mask.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildSummary {
    pub exclusions: Vec<Exclusion>,
    /// (locus, allele id, number of masked positions)
    pub masked_alleles: Vec<(String, u32, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlstDataset {
    loci: Vec<LocusMeta>,
    alleles: Vec<BTreeMap<u32, AlleleSequence>>,
    profiles: Vec<StProfile>,
    /// Per locus: indices into `profiles` that cannot be compared there.
    unusable: Vec<BTreeSet<usize>>,
}

impl MlstDataset {
    pub fn loci(&self) -> &[LocusMeta] {
        &self.loci
    }

    pub fn num_loci(&self) -> usize {
        self.loci.len()
    }

    pub fn locus_index(&self, name: &str) -> Result<usize, DatasetError> {
        self.loci
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| DatasetError::UnknownLocus(name.into()))
    }

    /// Profiles sorted by ST id.
    pub fn profiles(&self) -> &[StProfile] {
        &self.profiles
    }

    pub fn allele(&self, locus: usize, allele_id: u32) -> Option<&AlleleSequence> {
        self.alleles[locus].get(&allele_id)
    }

    /// Alleles of one locus, sorted by id.
    pub fn alleles(&self, locus: usize) -> impl Iterator<Item = &AlleleSequence> {
        self.alleles[locus].values()
    }

    /// Whether the ST at `profile_index` has a comparable sequence at `locus`.
    pub fn is_usable(&self, profile_index: usize, locus: usize) -> bool {
        !self.unusable[locus].contains(&profile_index)
    }

    /// Sequence of the ST at `profile_index` at `locus`, if comparable.
    pub fn sequence(&self, profile_index: usize, locus: usize) -> Option<&AlleleSequence> {
        if !self.is_usable(profile_index, locus) {
            return None;
        }
        self.allele(locus, self.profiles[profile_index].alleles[locus])
    }

    /// Assembles a dataset from parts that already satisfy the per-locus and
    /// per-profile invariants; only the minimum-size checks are skipped.
    pub(crate) fn from_validated(loci: Vec<LocusMeta>, alleles: Vec<BTreeMap<u32, AlleleSequence>>, mut profiles: Vec<StProfile>) -> Self {
        profiles.sort_by_key(|p| p.st_id);
        let unusable = (0..loci.len()).map(|_| BTreeSet::new()).collect();
        Self { loci, alleles, profiles, unusable }
    }
}

fn is_base(b: u8) -> bool {
    matches!(b, b'A' | b'C' | b'G' | b'T')
}

/// Number of positions at which two equal-length sequences differ.
///
/// Positions holding [`WILDCARD`] in either sequence are not counted.
pub fn hamming(a: &AlleleSequence, b: &AlleleSequence) -> Result<usize, DatasetError> {
    hamming_bytes(a.sequence.as_bytes(), b.sequence.as_bytes())
}

pub(crate) fn hamming_bytes(a: &[u8], b: &[u8]) -> Result<usize, DatasetError> {
    if a.len() != b.len() {
        return Err(DatasetError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .filter(|(x, y)| x != y && **x != WILDCARD && **y != WILDCARD)
        .count())
}

fn modal_length(alleles: &BTreeMap<u32, AlleleSequence>) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for a in alleles.values() {
        *counts.entry(a.len()).or_default() += 1;
    }
    // Most frequent length; ties go to the shorter length.
    counts
        .iter()
        .fold((0usize, 0usize), |best, (&len, &n)| if n > best.1 { (len, n) } else { best })
        .0
}

/// Validates and assembles a dataset.
///
/// `locus_names[l]` names the locus whose allele ids sit at position `l` of
/// every profile; `alleles_by_locus[l]` holds that locus's sequences.
pub fn build_dataset(
    locus_names: &[String],
    profiles: Vec<StProfile>,
    alleles_by_locus: Vec<Vec<AlleleSequence>>,
    mode: BuildMode,
) -> Result<(MlstDataset, BuildSummary), DatasetError> {
    let n_loci = locus_names.len();
    if n_loci < 2 {
        return Err(DatasetError::TooFewLoci(n_loci));
    }
    if profiles.len() < 2 {
        return Err(DatasetError::TooFewSts(profiles.len()));
    }
    assert_eq!(alleles_by_locus.len(), n_loci, "one allele list per locus");

    let mut summary = BuildSummary::default();
    let mut alleles: Vec<BTreeMap<u32, AlleleSequence>> = Vec::with_capacity(n_loci);
    for (name, list) in locus_names.iter().zip(alleles_by_locus) {
        let mut map = BTreeMap::new();
        for mut allele in list {
            allele.locus.clone_from(name);
            allele.sequence.make_ascii_uppercase();
            if allele.is_empty() {
                return Err(DatasetError::EmptySequence { locus: name.clone(), allele: allele.allele_id });
            }
            if let Some(position) = allele.sequence.bytes().position(|b| !is_base(b)) {
                match mode {
                    BuildMode::Strict => {
                        return Err(DatasetError::InvalidBase {
                            locus: name.clone(),
                            allele: allele.allele_id,
                            position,
                            base: allele.sequence.as_bytes()[position] as char,
                        })
                    }
                    BuildMode::Lenient => {
                        let masked: String = allele
                            .sequence
                            .bytes()
                            .map(|b| if is_base(b) { b as char } else { WILDCARD as char })
                            .collect();
                        let n_masked = masked.bytes().filter(|&b| b == WILDCARD).count();
                        summary.masked_alleles.push((name.clone(), allele.allele_id, n_masked));
                        allele.sequence = masked;
                    }
                }
            }
            let id = allele.allele_id;
            if map.insert(id, allele).is_some() {
                return Err(DatasetError::DuplicateAllele { locus: name.clone(), allele: id });
            }
        }
        alleles.push(map);
    }

    let mut loci = Vec::with_capacity(n_loci);
    for (name, map) in locus_names.iter().zip(&alleles) {
        let length = modal_length(map);
        if mode == BuildMode::Strict {
            if let Some(bad) = map.values().find(|a| a.len() != length) {
                return Err(DatasetError::UnequalLength {
                    locus: name.clone(),
                    allele: bad.allele_id,
                    got: bad.len(),
                    expected: length,
                });
            }
        }
        loci.push(LocusMeta { name: name.clone(), length, allele_count: map.len() });
    }

    let mut profiles = profiles;
    profiles.sort_by_key(|p| p.st_id);
    let mut seen_vectors: BTreeMap<&[u32], u32> = BTreeMap::new();
    for (i, p) in profiles.iter().enumerate() {
        if p.alleles.len() != n_loci {
            return Err(DatasetError::ProfileWidth { st: p.st_id, got: p.alleles.len(), expected: n_loci });
        }
        if i > 0 && profiles[i - 1].st_id == p.st_id {
            return Err(DatasetError::DuplicateSt(p.st_id));
        }
        if let Some(&other) = seen_vectors.get(p.alleles.as_slice()) {
            return Err(DatasetError::DuplicateProfile(other, p.st_id));
        }
        seen_vectors.insert(&p.alleles, p.st_id);
    }

    let mut unusable: Vec<BTreeSet<usize>> = (0..n_loci).map(|_| BTreeSet::new()).collect();
    for (pi, p) in profiles.iter().enumerate() {
        for (l, &allele_id) in p.alleles.iter().enumerate() {
            let reason = match alleles[l].get(&allele_id) {
                None => Some(ExclusionReason::MissingAllele),
                Some(a) if a.len() != loci[l].length => Some(ExclusionReason::OffLength),
                Some(_) => None,
            };
            let Some(reason) = reason else { continue };
            if mode == BuildMode::Strict {
                // Off-length alleles were already rejected above.
                return Err(DatasetError::ReferentialIntegrity {
                    st: p.st_id,
                    locus: loci[l].name.clone(),
                    allele: allele_id,
                });
            }
            unusable[l].insert(pi);
            summary.exclusions.push(Exclusion { locus: loci[l].name.clone(), st_id: p.st_id, allele_id, reason });
        }
    }

    Ok((MlstDataset { loci, alleles, profiles, unusable }, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn seq(locus: &str, id: u32, s: &str) -> AlleleSequence {
        AlleleSequence::new(locus, id, s)
    }

    fn two_locus_alleles() -> Vec<Vec<AlleleSequence>> {
        vec![
            vec![seq("a", 1, "ACGT"), seq("a", 2, "ACGA")],
            vec![seq("b", 1, "TTTT"), seq("b", 2, "TTTA")],
        ]
    }

    #[test]
    fn hamming_examples() {
        let a = seq("x", 1, "ACGT");
        assert_eq!(hamming(&a, &seq("x", 2, "ACGT")).unwrap(), 0);
        assert_eq!(hamming(&a, &seq("x", 2, "ACGA")).unwrap(), 1);
        assert_eq!(hamming(&seq("x", 1, "AAAA"), &seq("x", 2, "TTTT")).unwrap(), 4);
        assert!(matches!(hamming(&a, &seq("x", 3, "ACG")), Err(DatasetError::LengthMismatch(4, 3))));
    }

    #[test]
    fn wildcards_are_not_counted() {
        assert_eq!(hamming(&seq("x", 1, "ANGT"), &seq("x", 2, "TCGA")).unwrap(), 2);
    }

    #[test]
    fn strict_mode_rejects_missing_allele() {
        let profiles = vec![StProfile::new(1, vec![1, 1]), StProfile::new(2, vec![99, 2])];
        let err = build_dataset(&names(&["a", "b"]), profiles, two_locus_alleles(), BuildMode::Strict).unwrap_err();
        assert!(matches!(err, DatasetError::ReferentialIntegrity { allele: 99, .. }));
    }

    #[test]
    fn lenient_mode_flags_missing_allele() {
        let profiles = vec![StProfile::new(1, vec![1, 1]), StProfile::new(2, vec![99, 2])];
        let (ds, summary) = build_dataset(&names(&["a", "b"]), profiles, two_locus_alleles(), BuildMode::Lenient).unwrap();
        assert_eq!(summary.exclusions.len(), 1);
        assert_eq!(summary.exclusions[0].st_id, 2);
        assert!(!ds.is_usable(1, 0));
        assert!(ds.is_usable(1, 1));
    }

    #[test]
    fn too_few_loci_and_sts() {
        let err = build_dataset(&names(&["a"]), vec![], vec![vec![]], BuildMode::Strict).unwrap_err();
        assert_eq!(err, DatasetError::TooFewLoci(1));
        let err = build_dataset(&names(&["a", "b"]), vec![StProfile::new(1, vec![1, 1])], two_locus_alleles(), BuildMode::Strict)
            .unwrap_err();
        assert_eq!(err, DatasetError::TooFewSts(1));
    }

    #[test]
    fn duplicate_profiles_and_sts_are_errors() {
        let p = vec![StProfile::new(1, vec![1, 1]), StProfile::new(1, vec![2, 1])];
        assert_eq!(
            build_dataset(&names(&["a", "b"]), p, two_locus_alleles(), BuildMode::Strict).unwrap_err(),
            DatasetError::DuplicateSt(1)
        );
        let p = vec![StProfile::new(1, vec![1, 1]), StProfile::new(2, vec![1, 1])];
        assert_eq!(
            build_dataset(&names(&["a", "b"]), p, two_locus_alleles(), BuildMode::Strict).unwrap_err(),
            DatasetError::DuplicateProfile(1, 2)
        );
    }

    #[test]
    fn unequal_lengths_strict_vs_lenient() {
        let mut alleles = two_locus_alleles();
        alleles[0].push(seq("a", 3, "ACGTA"));
        alleles[0].push(seq("a", 4, "ACGG"));
        let profiles = vec![StProfile::new(1, vec![1, 1]), StProfile::new(2, vec![3, 2]), StProfile::new(3, vec![4, 2])];
        let err = build_dataset(&names(&["a", "b"]), profiles.clone(), alleles.clone(), BuildMode::Strict).unwrap_err();
        assert!(matches!(err, DatasetError::UnequalLength { allele: 3, .. }));
        let (ds, summary) = build_dataset(&names(&["a", "b"]), profiles, alleles, BuildMode::Lenient).unwrap();
        assert_eq!(ds.loci()[0].length, 4);
        assert_eq!(summary.exclusions[0].reason, ExclusionReason::OffLength);
        assert!(ds.sequence(1, 0).is_none());
    }

    #[test]
    fn invalid_bases_strict_vs_lenient() {
        let mut alleles = two_locus_alleles();
        alleles[1][1] = seq("b", 2, "TTNA");
        let profiles = vec![StProfile::new(1, vec![1, 1]), StProfile::new(2, vec![2, 2])];
        let err = build_dataset(&names(&["a", "b"]), profiles.clone(), alleles.clone(), BuildMode::Strict).unwrap_err();
        assert!(matches!(err, DatasetError::InvalidBase { position: 2, .. }));
        let (ds, summary) = build_dataset(&names(&["a", "b"]), profiles, alleles, BuildMode::Lenient).unwrap();
        assert_eq!(summary.masked_alleles, vec![("b".to_string(), 2, 1)]);
        assert_eq!(ds.allele(1, 2).unwrap().sequence, "TTNA");
    }

    #[test]
    fn construction_is_order_independent() {
        let p1 = vec![StProfile::new(2, vec![2, 2]), StProfile::new(1, vec![1, 1])];
        let p2 = vec![StProfile::new(1, vec![1, 1]), StProfile::new(2, vec![2, 2])];
        let mut a2 = two_locus_alleles();
        a2[0].reverse();
        let d1 = build_dataset(&names(&["a", "b"]), p1, two_locus_alleles(), BuildMode::Strict).unwrap().0;
        let d2 = build_dataset(&names(&["a", "b"]), p2, a2, BuildMode::Strict).unwrap().0;
        assert_eq!(d1, d2);
    }
}
