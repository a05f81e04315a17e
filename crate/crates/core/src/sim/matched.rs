//! Pair data drawn directly from the inference model.
//!
//! Each pair's x is sampled from the normalized mixture of the truncated
//! geometric mutation term and the supplied import pmf, and every pair is its
//! own group. Estimators applied to such data face no model misspecification.

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;

use crate::likelihood::PairModel;
use crate::slv::SlvPartition;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedLocus {
    pub model: PairModel,
    pub lambda: f64,
    pub n_pairs: usize,
}

impl MatchedLocus {
    pub fn name(&self) -> &String {
        &self.model.locus
    }
}

/// Draws `n_pairs` independent x values at `lambda` from `model` and wraps
/// them as single-pair groups.
pub fn sample_matched<R: Rng + ?Sized>(locus: &MatchedLocus, rng: &mut R) -> SlvPartition {
    let pmf = locus.model.at(locus.lambda).pmf();
    let dist = WeightedIndex::new(&pmf).expect("model pmf is positive");
    let xs: Vec<u32> = (0..locus.n_pairs).map(|_| dist.sample(rng) as u32 + 1).collect();
    SlvPartition::singletons(locus.model.locus.clone(), &xs)
}
