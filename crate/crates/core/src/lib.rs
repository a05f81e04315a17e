//! Composite-likelihood estimation of the relative rate of recombination to
//! mutation (λ) in bacteria from single-locus-variant (SLV) pairs.
//!
//! This crate holds the algorithmic core and is `no_std` (it needs `alloc`).
//! Everything that touches the filesystem, threads or a command line lives in
//! the companion `slvrate` crate.
//!
//! The pipeline, bottom-up:
//!
//! - [`dataset`]: sequence types, allele sequences and validated MLST datasets.
//! - [`slv`]: extraction of SLV pairs per locus, grouping and pair weights.
//! - [`import`]: Monte Carlo distribution of the number of differences a
//!   single recombination event introduces at a locus.
//! - [`likelihood`]: per-pair conditional log-likelihood and its score.
//! - [`locus`]: per-locus composite likelihood, within-group score
//!   correlation, Godambe quantities and deviance intervals.
//! - [`joint`]: common-λ estimation across loci and the test for variation.
//! - [`sim`]: a clonal-frame coalescent simulator.
//! - [`analysis`]: the end-to-end analysis of a dataset.
//! - [`numerics`]: optimizers, special functions and small dense matrices.

#![no_std]
#![forbid(unsafe_code)]
// Negated comparisons such as `!(x > 0.0)` deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod dataset;
pub mod import;
pub mod joint;
pub mod likelihood;
pub mod locus;
pub mod numerics;
pub mod rng;
pub mod sim;
pub mod slv;

pub use analysis::{analyze_dataset, analyze_partitions, AlphaMode, Analysis, AnalysisOptions};
pub use dataset::{hamming, AlleleSequence, BuildMode, LocusMeta, MlstDataset, StProfile};
pub use import::{ImportDistribution, PairwiseDiffTable, Weighting};
pub use joint::{JointFit, VariationTestResult};
pub use likelihood::{PairModel, ThetaMethod, ThetaRatio};
pub use locus::{CompositeLikelihood, LocusFit};
pub use numerics::Tolerances;
pub use slv::{SlvGroup, SlvPair, SlvPartition};
