//! Numeric kernels shared by the estimators.

mod gamma;
mod matrix;
mod optimize;

pub use gamma::{chi2_cdf, chi2_quantile, chi2_upper_tail, ln_gamma, reg_inc_gamma, reg_inc_gamma_upper};
pub use matrix::{gen_eigen_spd, invert, MatrixError, SmallMatrix, MAX_DIM};
pub use optimize::{bisect_crossing, maximize_scalar, OptResult};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("objective returned a non-finite value {value} at {at}")]
    NonFinite { at: f64, value: f64 },
    #[error("no sign change on [{lo}, {hi}] (g(lo) = {g_lo}, g(hi) = {g_hi})")]
    NoBracket { lo: f64, hi: f64, g_lo: f64, g_hi: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

/// Every tolerance and numeric bound used by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Largest λ considered by any maximizer or interval search.
    pub lambda_max: f64,
    /// Bracket width, in t = λ/(1+λ), at which the λ maximizer stops.
    pub opt_t_tol: f64,
    /// Bracket width, in t, for confidence-interval endpoints.
    pub ci_t_tol: f64,
    /// Width at which the α maximizer stops.
    pub alpha_tol: f64,
    /// Upper bound for α; the correlation model is singular at α = 1.
    pub alpha_max: f64,
    /// Relative pivot threshold for matrix factorizations.
    pub pivot: f64,
    /// Negative likelihood-ratio statistics no larger than this in magnitude
    /// are treated as zero.
    pub lr_clamp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            lambda_max: 1e4,
            opt_t_tol: 1e-8,
            ci_t_tol: 1e-9,
            alpha_tol: 1e-8,
            alpha_max: 1.0 - 1e-9,
            pivot: 1e-12,
            lr_clamp: 1e-9,
        }
    }
}

impl Tolerances {
    /// Upper end of the t = λ/(1+λ) search interval.
    pub fn t_max(&self) -> f64 {
        self.lambda_max / (1.0 + self.lambda_max)
    }
}

/// λ ↦ t = λ/(1+λ).
#[inline]
pub fn lambda_to_t(lambda: f64) -> f64 {
    lambda / (1.0 + lambda)
}

/// t ↦ λ = t/(1−t).
#[inline]
pub fn t_to_lambda(t: f64) -> f64 {
    t / (1.0 - t)
}

/// log(exp(a) + exp(b)), exact when either side is −∞.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

/// log Σ exp(v_i); −∞ for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_matches_direct_sum() {
        let v = log_add_exp(libm::log(2.0), libm::log(3.0));
        assert!((v - libm::log(5.0)).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert_eq!(log_add_exp(-2.0, f64::NEG_INFINITY), -2.0);
    }

    #[test]
    fn log_sum_exp_handles_large_magnitudes() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn t_transform_round_trips() {
        for &l in &[0.0, 0.2, 1.0, 5.0, 1e4] {
            assert!((t_to_lambda(lambda_to_t(l)) - l).abs() <= 1e-9 * (1.0 + l));
        }
    }
}
