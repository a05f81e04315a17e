//! Conditional likelihood for the number of differences x at an SLV pair.
//!
//! With r = θ_l/θ and q the import distribution, the unnormalized mass is
//!
//! ```text
//! f(λ, x) = (r/(1+λ))^x + c(λ) q(x),   c(λ) = r/(1−r) − r/(1+λ−r),
//! ```
//!
//! normalized over x = 1..m. Everything is evaluated in log space.

use alloc::string::String;
use alloc::vec::Vec;
use libm::{exp, log};
use thiserror::Error;

use crate::dataset::MlstDataset;
use crate::import::{pairwise_diffs, ImportDistribution, ImportError, Weighting};
use crate::numerics::log_add_exp;

/// Largest accepted θ_l/θ.
pub const MAX_RATIO: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LikelihoodError {
    #[error("locus {locus}: degenerate mutation-rate ratio {r} ({reason})")]
    DegenerateRatio { locus: String, r: f64, reason: &'static str },
    #[error("locus {locus}: import distribution covers 1..{q_len} but locus length is {m}")]
    SupportMismatch { locus: String, m: usize, q_len: usize },
    #[error(transparent)]
    Import(#[from] ImportError),
}

/// How θ_l/θ is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaMethod {
    /// Proportional to locus length.
    #[default]
    Length,
    /// Proportional to the mean pairwise difference at the locus.
    Pairwise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaRatio {
    pub locus: String,
    pub r: f64,
    pub method: ThetaMethod,
}

/// θ_l/θ for every locus of the dataset. Pairwise means are taken over STs.
pub fn theta_ratios(dataset: &MlstDataset, method: ThetaMethod) -> Result<Vec<ThetaRatio>, LikelihoodError> {
    let raw: Vec<f64> = match method {
        ThetaMethod::Length => dataset.loci().iter().map(|l| l.length as f64).collect(),
        ThetaMethod::Pairwise => (0..dataset.num_loci())
            .map(|l| pairwise_diffs(dataset, l, Weighting::BySt).map(|t| t.mean_pairwise()))
            .collect::<Result<_, _>>()?,
    };
    ratios_from(dataset.loci().iter().map(|l| l.name.clone()).collect(), &raw, method)
}

/// Normalizes per-locus sizes (lengths or mean differences) into ratios.
pub fn ratios_from(loci: Vec<String>, raw: &[f64], method: ThetaMethod) -> Result<Vec<ThetaRatio>, LikelihoodError> {
    let total: f64 = raw.iter().sum();
    let mut out = Vec::with_capacity(raw.len());
    for (locus, &v) in loci.into_iter().zip(raw) {
        let r = if total > 0.0 { v / total } else { 0.0 };
        if !(r > 0.0) {
            return Err(LikelihoodError::DegenerateRatio { locus, r, reason: "no variation at locus" });
        }
        if r > MAX_RATIO {
            return Err(LikelihoodError::DegenerateRatio { locus, r, reason: "ratio above 0.9" });
        }
        out.push(ThetaRatio { locus, r, method });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub locus: String,
    pub r: f64,
    pub q: ImportDistribution,
    pub m: usize,
}

/// The model evaluated at one λ: log f(λ, x) and d/dλ log f(λ, x) for every
/// x, plus the normalizer and its log-derivative.
#[derive(Debug, Clone)]
pub struct ModelAt {
    pub lambda: f64,
    log_f: Vec<f64>,
    dlog_f: Vec<f64>,
    log_q: Vec<f64>,
    log_base: f64,
    log_dc: f64,
    log_norm: f64,
    dlog_norm: f64,
}

impl ModelAt {
    /// ℓ(λ; x)
    #[inline]
    pub fn loglik(&self, x: usize) -> f64 {
        self.log_f[x - 1] - self.log_norm
    }

    /// u(λ; x)
    #[inline]
    pub fn score(&self, x: usize) -> f64 {
        self.dlog_f[x - 1] - self.dlog_norm
    }

    /// exp ℓ(λ; x) · u(λ; x), evaluated without forming u, which can overflow
    /// when λ is near 0 and x is large.
    pub fn weighted_score(&self, x: usize) -> f64 {
        let lm = x as f64 * self.log_base;
        -(x as f64) / (1.0 + self.lambda) * exp(lm - self.log_norm) + exp(self.log_dc + self.log_q[x - 1] - self.log_norm)
            - exp(self.loglik(x)) * self.dlog_norm
    }

    /// exp ℓ(λ; x) for x = 1..m.
    pub fn pmf(&self) -> Vec<f64> {
        self.log_f.iter().map(|lf| exp(lf - self.log_norm)).collect()
    }
}

impl PairModel {
    pub fn new(locus: impl Into<String>, r: f64, q: ImportDistribution) -> Result<Self, LikelihoodError> {
        let locus = locus.into();
        if !(r > 0.0 && r <= MAX_RATIO) {
            return Err(LikelihoodError::DegenerateRatio { locus, r, reason: "ratio must lie in (0, 0.9]" });
        }
        let m = q.m;
        Ok(Self { locus, r, q, m })
    }

    /// c(λ) = rλ / ((1−r)(1+λ−r)); exactly zero at λ = 0.
    pub fn c(&self, lambda: f64) -> f64 {
        let r = self.r;
        r * lambda / ((1.0 - r) * (1.0 + lambda - r))
    }

    /// f(λ, x)
    pub fn unnormalized_mass(&self, lambda: f64, x: usize) -> f64 {
        exp(self.log_mass(lambda, x))
    }

    /// log f(λ, x)
    pub fn log_mass(&self, lambda: f64, x: usize) -> f64 {
        let log_mut = x as f64 * log(self.r / (1.0 + lambda));
        let c = self.c(lambda);
        if c > 0.0 {
            log_add_exp(log_mut, log(c) + log(self.q.q(x)))
        } else {
            log_mut
        }
    }

    pub fn at(&self, lambda: f64) -> ModelAt {
        let r = self.r;
        let log_base = log(r / (1.0 + lambda));
        let log_c = log(self.c(lambda));
        // d/dλ of c(λ)
        let log_dc = log(r) - 2.0 * log(1.0 + lambda - r);
        let inv_1l = 1.0 / (1.0 + lambda);
        let mut log_f = Vec::with_capacity(self.m);
        let mut dlog_f = Vec::with_capacity(self.m);
        let mut log_q = Vec::with_capacity(self.m);
        for x in 1..=self.m {
            let lm = x as f64 * log_base;
            let lq = log(self.q.q(x));
            log_q.push(lq);
            let lf = if log_c.is_finite() { log_add_exp(lm, log_c + lq) } else { lm };
            let d = -(x as f64) * inv_1l * exp(lm - lf) + exp(log_dc + lq - lf);
            log_f.push(lf);
            dlog_f.push(d);
        }
        let log_norm = crate::numerics::log_sum_exp(&log_f);
        // Σ f'/Σ f, term by term in the scale of the normalizer.
        let dlog_norm = (1..=self.m)
            .map(|x| -(x as f64) * inv_1l * exp(x as f64 * log_base - log_norm) + exp(log_dc + log_q[x - 1] - log_norm))
            .sum();
        ModelAt { lambda, log_f, dlog_f, log_q, log_base, log_dc, log_norm, dlog_norm }
    }

    /// ℓ(λ; x)
    pub fn loglik(&self, lambda: f64, x: usize) -> f64 {
        self.at(lambda).loglik(x)
    }

    /// u(λ; x) = dℓ/dλ
    pub fn score(&self, lambda: f64, x: usize) -> f64 {
        self.at(lambda).score(x)
    }
}
