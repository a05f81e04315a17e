//! Clonal-frame coalescent simulation of MLST data.
//!
//! A Kingman genealogy is drawn for the sample, mutation and recombination
//! events are overlaid on its branches, and the resulting sequences are typed
//! into alleles and STs. A recombination event imports a batch of nucleotide
//! differences into one locus; how many, and which, is set by the
//! [`ImportModel`].

mod matched;
mod overlay;
mod tree;

pub use matched::{sample_matched, MatchedLocus};
pub use tree::{simulate_coalescent_tree, CoalescentTree};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::dataset::{AlleleSequence, LocusMeta, MlstDataset, StProfile};
use crate::import::PairwiseDiffTable;
use crate::rng::stream_rng;

/// Seven housekeeping-gene fragment lengths typical of an MLST scheme.
pub const REFERENCE_LOCI: [(&str, usize); 7] =
    [("aspA", 477), ("glnA", 477), ("gltA", 402), ("glyA", 507), ("pgm", 498), ("tkt", 459), ("uncA", 489)];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("no loci configured")]
    NoLoci,
    #[error("locus {locus}: {reason}")]
    InvalidLocus { locus: String, reason: &'static str },
    #[error("invalid import model: {0}")]
    InvalidImportModel(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLocus {
    pub name: String,
    /// m_l
    pub length: usize,
    /// Coalescent-scaled mutation rate θ_l.
    pub theta: f64,
    /// Recombination rate relative to mutation, λ_l.
    pub lambda: f64,
}

/// Where imported differences come from in the complete-import model.
#[derive(Debug, Clone, PartialEq)]
pub enum DiversitySource {
    /// Copy from another lineage alive at the time of the event.
    Lineages,
    /// Draw the number of changes from a fixed per-locus difference table.
    Tables(Vec<PairwiseDiffTable>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImportModel {
    /// Number of changed sites geometric on 1.. with this mean, truncated to
    /// the locus length.
    Geometric { mean: f64 },
    /// Number of changed sites drawn from a per-locus pmf over 1..m_l.
    Empirical { pmfs: Vec<Vec<f64>> },
    /// Whole-locus import with probability `p_a`, else a prefix or suffix
    /// covering a uniform fraction of it.
    Complete { p_a: f64, source: DiversitySource },
}

impl Default for ImportModel {
    fn default() -> Self {
        ImportModel::Complete { p_a: 0.8, source: DiversitySource::Lineages }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_samples: usize,
    pub loci: Vec<SimLocus>,
    pub import: ImportModel,
    pub seed: u64,
    pub record_events: bool,
}

impl SimConfig {
    /// Splits `theta` over loci in proportion to their lengths, with a common λ.
    pub fn proportional(loci: &[(&str, usize)], theta: f64, lambda: f64, n_samples: usize, seed: u64) -> Self {
        let total: usize = loci.iter().map(|l| l.1).sum();
        let loci = loci
            .iter()
            .map(|&(name, length)| SimLocus { name: name.into(), length, theta: theta * length as f64 / total as f64, lambda })
            .collect();
        Self { n_samples, loci, import: ImportModel::default(), seed, record_events: false }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_samples < 2 {
            return Err(SimError::TooFewSamples(self.n_samples));
        }
        if self.loci.is_empty() {
            return Err(SimError::NoLoci);
        }
        for l in &self.loci {
            let bad = |reason| Err(SimError::InvalidLocus { locus: l.name.clone(), reason });
            if l.length == 0 {
                return bad("length must be at least 1");
            }
            if !(l.theta >= 0.0 && l.theta.is_finite()) {
                return bad("theta must be finite and non-negative");
            }
            if !(l.lambda >= 0.0 && l.lambda.is_finite()) {
                return bad("lambda must be finite and non-negative");
            }
        }
        match &self.import {
            ImportModel::Geometric { mean } => {
                if !(*mean >= 1.0 && mean.is_finite()) {
                    return Err(SimError::InvalidImportModel("geometric mean must be at least 1"));
                }
            }
            ImportModel::Empirical { pmfs } => {
                if pmfs.len() != self.loci.len() {
                    return Err(SimError::InvalidImportModel("one pmf per locus required"));
                }
                for (pmf, l) in pmfs.iter().zip(&self.loci) {
                    if pmf.is_empty() || pmf.len() > l.length {
                        return Err(SimError::InvalidImportModel("pmf must cover 1..k with k ≤ locus length"));
                    }
                    if pmf.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                        return Err(SimError::InvalidImportModel("pmf entries must be finite and non-negative"));
                    }
                    if (pmf.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                        return Err(SimError::InvalidImportModel("pmf entries must sum to 1"));
                    }
                }
            }
            ImportModel::Complete { p_a, source } => {
                if !(0.0..=1.0).contains(p_a) {
                    return Err(SimError::InvalidImportModel("p_a must lie in [0, 1]"));
                }
                if let DiversitySource::Tables(tables) = source {
                    if tables.len() != self.loci.len() || tables.iter().any(PairwiseDiffTable::is_empty) {
                        return Err(SimError::InvalidImportModel("one non-empty difference table per locus required"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Mutation,
    Recombination,
}

/// One applied event. `changes` lists (site within locus, new base).
#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    /// Node below the branch carrying the event.
    pub branch: usize,
    pub age: f64,
    pub locus: usize,
    pub kind: EventKind,
    pub changes: Vec<(u32, u8)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimStats {
    pub mutations: usize,
    pub recombinations: usize,
    /// Recombination events that could not change any site.
    pub void_recombinations: usize,
    pub height: f64,
    pub total_length: f64,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub dataset: MlstDataset,
    /// ST of each sample.
    pub sample_st: Vec<u32>,
    pub tree: CoalescentTree,
    /// Root sequence per locus.
    pub root: Vec<Vec<u8>>,
    /// Present when `record_events` was set; ordered oldest first.
    pub events: Option<Vec<SimEvent>>,
    pub stats: SimStats,
    pub config: SimConfig,
}

/// Runs one simulation. Deterministic in `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<SimResult, SimError> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, 0);
    let tree = simulate_coalescent_tree(config.n_samples, &mut rng);
    let ov = overlay::overlay(&tree, config, &mut rng);
    let (dataset, sample_st) = type_samples(config, &ov.leaves);
    let mut root = Vec::with_capacity(config.loci.len());
    let mut o = 0;
    for l in &config.loci {
        root.push(ov.root[o..o + l.length].to_vec());
        o += l.length;
    }
    Ok(SimResult { dataset, sample_st, tree, root, events: ov.events, stats: ov.stats, config: config.clone() })
}

/// Assigns allele ids (per locus, by first appearance) and ST ids (by first
/// appearance of the allele vector) to the sampled sequences.
fn type_samples(config: &SimConfig, leaves: &[Vec<u8>]) -> (MlstDataset, Vec<u32>) {
    let n_loci = config.loci.len();
    let mut allele_ids: Vec<BTreeMap<&[u8], u32>> = (0..n_loci).map(|_| BTreeMap::new()).collect();
    let mut alleles: Vec<BTreeMap<u32, AlleleSequence>> = (0..n_loci).map(|_| BTreeMap::new()).collect();
    let mut st_ids: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
    let mut counts: Vec<u32> = Vec::new();
    let mut profiles: Vec<StProfile> = Vec::new();
    let mut sample_st = Vec::with_capacity(leaves.len());
    for seq in leaves {
        let mut vector = Vec::with_capacity(n_loci);
        let mut o = 0;
        for (l, locus) in config.loci.iter().enumerate() {
            let s = &seq[o..o + locus.length];
            o += locus.length;
            let next = allele_ids[l].len() as u32 + 1;
            let id = *allele_ids[l].entry(s).or_insert_with(|| {
                let text = core::str::from_utf8(s).expect("ASCII bases");
                alleles[l].insert(next, AlleleSequence::new(locus.name.clone(), next, text));
                next
            });
            vector.push(id);
        }
        let next = st_ids.len() as u32 + 1;
        let st = *st_ids.entry(vector.clone()).or_insert_with(|| {
            profiles.push(StProfile::new(next, vector));
            counts.push(0);
            next
        });
        counts[st as usize - 1] += 1;
        sample_st.push(st);
    }
    for p in &mut profiles {
        p.isolate_count = Some(counts[p.st_id as usize - 1]);
    }
    let loci = config
        .loci
        .iter()
        .zip(&alleles)
        .map(|(l, a)| LocusMeta { name: l.name.clone(), length: l.length, allele_count: a.len() })
        .collect();
    (MlstDataset::from_validated(loci, alleles, profiles), sample_st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small(seed: u64) -> SimConfig {
        let mut c = SimConfig::proportional(&[("a", 50), ("b", 60), ("c", 40)], 6.0, 1.0, 30, seed);
        c.record_events = true;
        c
    }

    #[test]
    fn deterministic() {
        let a = simulate(&small(5)).unwrap();
        let b = simulate(&small(5)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.events, b.events);
        assert_eq!(a.sample_st.len(), 30);
    }

    #[test]
    fn no_events_gives_one_st() {
        let mut c = small(1);
        for l in &mut c.loci {
            l.theta = 0.0;
        }
        let r = simulate(&c).unwrap();
        assert_eq!(r.dataset.profiles().len(), 1);
        assert_eq!(r.dataset.profiles()[0].isolate_count, Some(30));
    }

    #[test]
    fn invalid_configs() {
        let mut c = small(1);
        c.import = ImportModel::Geometric { mean: 0.5 };
        assert!(c.validate().is_err());
        c.import = ImportModel::Empirical { pmfs: vec![vec![1.0]; 2] };
        assert!(c.validate().is_err());
        c.import = ImportModel::Complete { p_a: 1.5, source: DiversitySource::Lineages };
        assert!(c.validate().is_err());
        c.import = ImportModel::default();
        c.n_samples = 1;
        assert!(c.validate().is_err());
    }
}
