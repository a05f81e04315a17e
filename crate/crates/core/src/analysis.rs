//! End-to-end analysis: SLV extraction, import distributions, per-locus fits
//! with a shared within-group correlation, the common-λ fit and the test for
//! variation in λ across loci.

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::dataset::{BuildMode, MlstDataset};
use crate::import::{estimate_import_dist, pairwise_diffs, ImportDistribution, ImportError, Weighting};
use crate::joint::{joint_maximize, variation_test, JointError, JointFit, VariationTestResult};
use crate::likelihood::{theta_ratios, LikelihoodError, PairModel, ThetaMethod, ThetaRatio};
use crate::locus::{CompositeLikelihood, LocusError, LocusFit};
use crate::numerics::Tolerances;
use crate::rng::derive_seed;
use crate::slv::{extract_slv, SlvError, SlvPartition, SlvWarning};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Slv(#[from] SlvError),
    #[error(transparent)]
    Import(#[from] ImportError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Locus(#[from] LocusError),
    #[error("{partitions} partitions but {models} models")]
    Mismatch { partitions: usize, models: usize },
}

/// Which within-group correlation each locus uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaMode {
    /// Mean of the identifiable per-locus estimates, shared by all loci.
    #[default]
    Common,
    /// Each locus its own estimate; loci without one use the common value.
    PerLocus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportOptions {
    pub p_a: f64,
    /// Monte Carlo draws M per locus.
    pub draws: u64,
    /// Base seed; locus l uses `derive_seed(seed, l)`.
    pub seed: u64,
    pub weighting: Weighting,
}

impl Default for ImportOptions {
    fn default() -> Self {
        Self { p_a: 0.8, draws: 100_000, seed: 1, weighting: Weighting::BySt }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub theta_method: ThetaMethod,
    pub alpha_mode: AlphaMode,
    pub level: f64,
    pub import: ImportOptions,
    pub build_mode: BuildMode,
    pub tolerances: Tolerances,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            theta_method: ThetaMethod::Length,
            alpha_mode: AlphaMode::Common,
            level: 0.95,
            import: ImportOptions::default(),
            build_mode: BuildMode::Strict,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    /// Loci in input order; `None` where the locus had no SLV pairs.
    pub fits: Vec<(String, Option<LocusFit>)>,
    /// Mean of the identifiable per-locus α estimates (0 when there are none).
    pub common_alpha: f64,
    pub alpha_identifiable: bool,
    pub joint: Result<JointFit, JointError>,
    pub variation: Result<VariationTestResult, JointError>,
    /// Loci left out of joint inference for lack of SLV pairs.
    pub excluded: Vec<String>,
}

impl Analysis {
    pub fn fitted(&self) -> impl Iterator<Item = &LocusFit> {
        self.fits.iter().filter_map(|(_, f)| f.as_ref())
    }
}

/// Fits every locus and runs joint inference over the loci with SLV pairs.
pub fn analyze_partitions(partitions: Vec<SlvPartition>, models: Vec<PairModel>, opts: &AnalysisOptions) -> Result<Analysis, AnalysisError> {
    if partitions.len() != models.len() {
        return Err(AnalysisError::Mismatch { partitions: partitions.len(), models: models.len() });
    }
    let tol = &opts.tolerances;
    let mut names = Vec::new();
    let mut cls = Vec::new();
    let mut excluded = Vec::new();
    for (p, m) in partitions.into_iter().zip(models) {
        names.push(p.locus.clone());
        if p.is_empty() {
            excluded.push(p.locus.clone());
        } else {
            cls.push(CompositeLikelihood::new(p, m)?);
        }
    }
    let prefits = cls.iter().map(|c| c.prefit(tol)).collect::<Result<Vec<_>, _>>()?;
    let local: Vec<f64> = prefits.iter().filter_map(|p| p.local.as_ref().ok().map(|f| f.alpha)).collect();
    let alpha_identifiable = !local.is_empty();
    let common_alpha = if alpha_identifiable { local.iter().sum::<f64>() / local.len() as f64 } else { 0.0 };

    let mut fits = Vec::with_capacity(cls.len());
    for (cl, pre) in cls.iter().zip(&prefits) {
        let alpha = match (opts.alpha_mode, &pre.local) {
            (AlphaMode::PerLocus, Ok(f)) => f.alpha,
            _ => common_alpha,
        };
        fits.push(pre.finish(cl, alpha, opts.level, tol)?);
    }
    let joint = joint_maximize(&cls, &fits, opts.level, tol);
    let variation = match &joint {
        Ok(j) => variation_test(&cls, &fits, j, tol),
        Err(e) => Err(e.clone()),
    };
    let mut fit_iter = fits.into_iter();
    let fits = names
        .into_iter()
        .map(|n| {
            let f = if excluded.contains(&n) { None } else { fit_iter.next() };
            (n, f)
        })
        .collect();
    Ok(Analysis { fits, common_alpha, alpha_identifiable, joint, variation, excluded })
}

/// Everything derived from a dataset before fitting.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub partitions: Vec<SlvPartition>,
    pub warnings: Vec<SlvWarning>,
    pub ratios: Vec<ThetaRatio>,
}

/// SLV partitions and θ ratios for every locus.
pub fn prepare(dataset: &MlstDataset, opts: &AnalysisOptions) -> Result<Prepared, AnalysisError> {
    let mut partitions = Vec::new();
    let mut warnings = Vec::new();
    for l in 0..dataset.num_loci() {
        let (p, w) = extract_slv(dataset, l, opts.build_mode)?;
        partitions.push(p);
        warnings.extend(w);
    }
    let ratios = theta_ratios(dataset, opts.theta_method)?;
    Ok(Prepared { partitions, warnings, ratios })
}

/// Import distribution for locus `l` under `opts`.
pub fn locus_import_dist(dataset: &MlstDataset, l: usize, opts: &ImportOptions) -> Result<ImportDistribution, ImportError> {
    let table = pairwise_diffs(dataset, l, opts.weighting)?;
    estimate_import_dist(&table, dataset.loci()[l].length, opts.p_a, opts.draws, derive_seed(opts.seed, l as u64))
}

/// Full analysis of a dataset using the supplied import distributions, one
/// per locus in dataset order.
pub fn analyze_with(dataset: &MlstDataset, dists: Vec<ImportDistribution>, opts: &AnalysisOptions) -> Result<Analysis, AnalysisError> {
    let prepared = prepare(dataset, opts)?;
    let models = prepared
        .ratios
        .iter()
        .zip(dists)
        .map(|(r, q)| PairModel::new(r.locus.clone(), r.r, q))
        .collect::<Result<Vec<_>, _>>()?;
    analyze_partitions(prepared.partitions, models, opts)
}

/// Full analysis of a dataset, estimating import distributions serially.
pub fn analyze_dataset(dataset: &MlstDataset, opts: &AnalysisOptions) -> Result<Analysis, AnalysisError> {
    let dists = (0..dataset.num_loci())
        .map(|l| locus_import_dist(dataset, l, &opts.import))
        .collect::<Result<Vec<_>, _>>()?;
    analyze_with(dataset, dists, opts)
}
