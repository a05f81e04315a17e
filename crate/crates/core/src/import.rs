//! Distribution of the number of nucleotide differences introduced at a locus
//! by a single recombination event, estimated by Monte Carlo from the
//! diversity observed at that locus.
//!
//! Each draw picks two sampled units i, j independently (i = j allowed). With
//! probability `p_a` the event covers the whole locus and introduces x_ij
//! differences; otherwise it covers a uniform fraction u of the locus and
//! introduces Binomial(x_ij, u) differences. Tallies n_x are smoothed into
//!
//! ```text
//! q(x) = (n_x + 1) / (M + m − n_0),   x = 1..m,
//! ```
//!
//! which is strictly positive and sums to one over 1..m.
//!
//! Draws are generated in fixed-size chunks; chunk c uses ChaCha sub-stream c
//! of the seed, so a parallel driver that tallies chunks independently and
//! sums the counts reproduces the serial result exactly.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::dataset::{hamming_bytes, MlstDataset};
use crate::rng::stream_rng;

/// Draws per sub-stream chunk.
pub const CHUNK_DRAWS: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImportError {
    #[error("locus {locus} has {units} comparable units; need at least 2")]
    TooFewUnits { locus: String, units: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(&'static str),
}

/// How sampled units are formed from STs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// One unit per ST.
    #[default]
    BySt,
    /// Each ST repeated by its isolate count.
    ByIsolate,
}

/// Pairwise difference counts x_ij between K sampled units at one locus.
///
/// Units sharing a sequence share a class; the table stores the class-level
/// distance matrix, so K can be large without a K×K allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseDiffTable {
    pub locus: String,
    /// ST id of each unit (repeated when units are isolates).
    pub units: Vec<u32>,
    unit_class: Vec<usize>,
    n_classes: usize,
    class_dist: Vec<u32>,
}

impl PairwiseDiffTable {
    /// Builds a table from an explicit K×K matrix (row-major).
    pub fn from_matrix(locus: impl Into<String>, units: Vec<u32>, matrix: Vec<u32>) -> Result<Self, ImportError> {
        let k = units.len();
        if matrix.len() != k * k {
            return Err(ImportError::InvalidParams("matrix must be K×K"));
        }
        for i in 0..k {
            if matrix[i * k + i] != 0 {
                return Err(ImportError::InvalidParams("diagonal must be zero"));
            }
            for j in 0..i {
                if matrix[i * k + j] != matrix[j * k + i] {
                    return Err(ImportError::InvalidParams("matrix must be symmetric"));
                }
            }
        }
        Ok(Self { locus: locus.into(), units, unit_class: (0..k).collect(), n_classes: k, class_dist: matrix })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// x_ij
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.class_dist[self.unit_class[i] * self.n_classes + self.unit_class[j]]
    }

    pub fn max_diff(&self) -> u32 {
        self.class_dist.iter().copied().max().unwrap_or(0)
    }

    /// Mean of x_ij over unordered pairs i < j; 0 with fewer than two units.
    pub fn mean_pairwise(&self) -> f64 {
        let k = self.len();
        if k < 2 {
            return 0.0;
        }
        let mut class_size = vec![0u64; self.n_classes];
        for &c in &self.unit_class {
            class_size[c] += 1;
        }
        let mut total = 0.0f64;
        for a in 0..self.n_classes {
            for b in (a + 1)..self.n_classes {
                total += (class_size[a] * class_size[b]) as f64 * self.class_dist[a * self.n_classes + b] as f64;
            }
        }
        total / (k * (k - 1) / 2) as f64
    }
}

/// Pairwise differences between the comparable units at `locus`.
pub fn pairwise_diffs(dataset: &MlstDataset, locus: usize, weighting: Weighting) -> Result<PairwiseDiffTable, ImportError> {
    let name = dataset.loci()[locus].name.clone();
    let mut class_alleles: Vec<u32> = Vec::new();
    let mut units = Vec::new();
    let mut unit_class = Vec::new();
    for (pi, p) in dataset.profiles().iter().enumerate() {
        if !dataset.is_usable(pi, locus) {
            continue;
        }
        let allele = p.alleles[locus];
        let class = match class_alleles.iter().position(|&a| a == allele) {
            Some(c) => c,
            None => {
                class_alleles.push(allele);
                class_alleles.len() - 1
            }
        };
        let copies = match weighting {
            Weighting::BySt => 1,
            Weighting::ByIsolate => p.count(),
        };
        for _ in 0..copies {
            units.push(p.st_id);
            unit_class.push(class);
        }
    }
    if units.len() < 2 {
        return Err(ImportError::TooFewUnits { locus: name, units: units.len() });
    }
    let n = class_alleles.len();
    let seqs: Vec<&[u8]> = class_alleles
        .iter()
        .map(|&a| dataset.allele(locus, a).expect("usable allele").sequence.as_bytes())
        .collect();
    let mut class_dist = vec![0u32; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let d = hamming_bytes(seqs[a], seqs[b]).expect("usable alleles share the modal length") as u32;
            class_dist[a * n + b] = d;
            class_dist[b * n + a] = d;
        }
    }
    Ok(PairwiseDiffTable { locus: name, units, unit_class, n_classes: n, class_dist })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportProvenance {
    pub p_a: f64,
    /// M
    pub draws: u64,
    pub seed: u64,
    /// K
    pub units: usize,
}

/// Smoothed pmf q(x), x = 1..m.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportDistribution {
    pub locus: String,
    pub m: usize,
    q: Vec<f64>,
    pub provenance: Option<ImportProvenance>,
}

impl ImportDistribution {
    /// Smoothed estimate from tallies `counts[x]`, x = 0..=m.
    pub fn from_counts(locus: impl Into<String>, counts: &[u64], provenance: Option<ImportProvenance>) -> Result<Self, ImportError> {
        if counts.len() < 2 {
            return Err(ImportError::InvalidParams("need counts for x = 0..=m with m ≥ 1"));
        }
        let m = counts.len() - 1;
        let draws: u64 = counts.iter().sum();
        let denom = (draws - counts[0]) as f64 + m as f64;
        let q = counts[1..].iter().map(|&n| (n as f64 + 1.0) / denom).collect();
        Ok(Self { locus: locus.into(), m, q, provenance })
    }

    /// Wraps an explicit pmf over 1..m. Entries must be positive and sum to one
    /// within 1e−6; the pmf is renormalized exactly.
    pub fn from_pmf(locus: impl Into<String>, pmf: Vec<f64>) -> Result<Self, ImportError> {
        if pmf.is_empty() {
            return Err(ImportError::InvalidDistribution("empty pmf"));
        }
        if pmf.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(ImportError::InvalidDistribution("pmf entries must be positive and finite"));
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(ImportError::InvalidDistribution("pmf must sum to 1"));
        }
        let q = pmf.iter().map(|p| p / sum).collect();
        Ok(Self { locus: locus.into(), m: pmf.len(), q, provenance: None })
    }

    /// q(x) for 1 ≤ x ≤ m.
    #[inline]
    pub fn q(&self, x: usize) -> f64 {
        self.q[x - 1]
    }

    /// (q(1), …, q(m))
    pub fn pmf(&self) -> &[f64] {
        &self.q
    }
}

fn validate(table: &PairwiseDiffTable, m: usize, p_a: f64, draws: u64) -> Result<(), ImportError> {
    if draws == 0 {
        return Err(ImportError::InvalidParams("M must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p_a) {
        return Err(ImportError::InvalidParams("p_a must lie in [0, 1]"));
    }
    if m == 0 || (table.max_diff() as usize) > m {
        return Err(ImportError::InvalidParams("m must be at least 1 and at least max x_ij"));
    }
    if table.is_empty() {
        return Err(ImportError::InvalidParams("table has no units"));
    }
    Ok(())
}

/// Number of chunks covering `draws`.
pub fn chunk_count(draws: u64) -> u64 {
    draws.div_ceil(CHUNK_DRAWS)
}

/// Tallies (x = 0..=m) for chunk `chunk` of a run of `draws` draws.
pub fn tally_chunk(table: &PairwiseDiffTable, m: usize, p_a: f64, draws: u64, seed: u64, chunk: u64) -> Vec<u64> {
    let start = chunk * CHUNK_DRAWS;
    let n = CHUNK_DRAWS.min(draws.saturating_sub(start));
    let mut rng = stream_rng(seed, chunk);
    let k = table.len();
    let mut counts = vec![0u64; m + 1];
    for _ in 0..n {
        let i = rng.random_range(0..k);
        let j = rng.random_range(0..k);
        let x_ij = table.get(i, j);
        let full: f64 = rng.random();
        let x = if full < p_a {
            x_ij
        } else {
            let u: f64 = rng.random();
            Binomial::new(x_ij as u64, u).expect("u in [0, 1)").sample(&mut rng) as u32
        };
        counts[x as usize] += 1;
    }
    counts
}

/// Monte Carlo estimate of q from `draws` (M) draws.
pub fn estimate_import_dist(table: &PairwiseDiffTable, m: usize, p_a: f64, draws: u64, seed: u64) -> Result<ImportDistribution, ImportError> {
    validate(table, m, p_a, draws)?;
    let mut counts = vec![0u64; m + 1];
    for chunk in 0..chunk_count(draws) {
        for (total, c) in counts.iter_mut().zip(tally_chunk(table, m, p_a, draws, seed, chunk)) {
            *total += c;
        }
    }
    finish(table, m, p_a, draws, seed, &counts)
}

/// Builds the distribution from summed chunk tallies (for parallel drivers).
pub fn finish(table: &PairwiseDiffTable, m: usize, p_a: f64, draws: u64, seed: u64, counts: &[u64]) -> Result<ImportDistribution, ImportError> {
    validate(table, m, p_a, draws)?;
    if counts.len() != m + 1 || counts.iter().sum::<u64>() != draws {
        return Err(ImportError::InvalidParams("tallies do not cover exactly M draws on 0..=m"));
    }
    let provenance = ImportProvenance { p_a, draws, seed, units: table.len() };
    ImportDistribution::from_counts(table.locus.clone(), counts, Some(provenance))
}
