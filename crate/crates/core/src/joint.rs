//! Inference across loci: a common λ maximizing Σ_l Cl^(l)(λ), and a
//! composite likelihood-ratio test of whether λ differs between loci.

use alloc::string::String;
use alloc::vec::Vec;
use thiserror::Error;

use crate::locus::{deviance_ci, maximize_lambda, CompositeLikelihood, Interval, LocusError, LocusFit};
use crate::numerics::{chi2_upper_tail, gen_eigen_spd, invert, MatrixError, NumericsError, SmallMatrix, Tolerances, MAX_DIM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JointError {
    #[error("joint inference needs at least 2 loci with SLV pairs, got {0}")]
    TooFewLoci(usize),
    #[error("at most {MAX_DIM} loci are supported, got {0}")]
    TooManyLoci(usize),
    #[error("non-positive information at locus {locus} (I = {i}, J = {j})")]
    NonPositiveInfo { locus: String, i: f64, j: f64 },
    #[error("information matrix is singular: {0}")]
    SingularInfo(#[from] MatrixError),
    #[error("likelihood-ratio statistic {0} is negative beyond tolerance")]
    NegativeStatistic(f64),
    #[error("loci and fits do not line up")]
    Mismatch,
    #[error(transparent)]
    Locus(#[from] LocusError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub lambda_hat: f64,
    pub cl_max: f64,
    /// Σ_l J^(l) / Σ_l I^(l)
    pub gamma: f64,
    pub ci: Interval,
    pub at_lower: bool,
    pub at_upper: bool,
    pub loci: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationTestResult {
    pub lr_star: f64,
    pub nu1: f64,
    pub lr: f64,
    pub df: u32,
    pub p_value: f64,
    /// Eigenvalues of H⁻¹G, ascending.
    pub eta: Vec<f64>,
    pub per_locus_lambda: Vec<(String, f64)>,
}

fn check(cls: &[CompositeLikelihood], fits: &[LocusFit]) -> Result<(), JointError> {
    if cls.len() != fits.len() || cls.iter().zip(fits).any(|(c, f)| c.locus() != f.locus) {
        return Err(JointError::Mismatch);
    }
    if cls.len() < 2 {
        return Err(JointError::TooFewLoci(cls.len()));
    }
    if cls.len() > MAX_DIM {
        return Err(JointError::TooManyLoci(cls.len()));
    }
    Ok(())
}

fn joint_value(cls: &[CompositeLikelihood], lambda: f64) -> f64 {
    cls.iter().map(|c| c.value(lambda)).sum()
}

/// Common-λ fit with interval at `level`.
pub fn joint_maximize(cls: &[CompositeLikelihood], fits: &[LocusFit], level: f64, tol: &Tolerances) -> Result<JointFit, JointError> {
    check(cls, fits)?;
    let max = maximize_lambda(|l| joint_value(cls, l), tol)?;
    let sum_i: f64 = fits.iter().map(|f| f.i).sum();
    let sum_j: f64 = fits.iter().map(|f| f.j).sum();
    if !(sum_i > 0.0 && sum_j > 0.0) {
        return Err(JointError::NonPositiveInfo { locus: String::from("(all)"), i: sum_i, j: sum_j });
    }
    let gamma = sum_j / sum_i;
    let ci = deviance_ci(|l| joint_value(cls, l), &max, gamma, level, tol)?;
    Ok(JointFit {
        lambda_hat: max.lambda_hat,
        cl_max: max.cl_max,
        gamma,
        ci,
        at_lower: max.at_lower,
        at_upper: max.at_upper,
        loci: cls.iter().map(|c| String::from(c.locus())).collect(),
    })
}

/// L×L matrix with first row, column and diagonal (Σ v, v_2, …, v_L).
pub fn build_arrowhead(values: &[f64]) -> Result<SmallMatrix, JointError> {
    if values.len() < 2 {
        return Err(JointError::TooFewLoci(values.len()));
    }
    let mut m = SmallMatrix::zeros(values.len())?;
    m[(0, 0)] = values.iter().sum();
    for (l, &v) in values.iter().enumerate().skip(1) {
        m[(0, l)] = v;
        m[(l, 0)] = v;
        m[(l, l)] = v;
    }
    Ok(m)
}

/// ν₁ and the eigenvalues η from per-locus I^(l), J^(l).
pub fn scaling_factor(i: &[f64], j: &[f64], pivot: f64) -> Result<(f64, Vec<f64>), JointError> {
    let i_phi = build_arrowhead(i)?;
    let j_phi = build_arrowhead(j)?;
    let i_inv = invert(&i_phi, pivot)?;
    let sandwich = i_phi.mul(&invert(&j_phi, pivot)?)?.mul(&i_phi)?;
    let h = i_inv.without_first()?;
    let g = invert(&sandwich, pivot)?.without_first()?;
    let df = (i.len() - 1) as f64;
    let nu1 = invert(&h, pivot)?.mul(&g)?.trace() / df;
    let eta = gen_eigen_spd(&g, &h, pivot)?;
    Ok((nu1, eta))
}

/// Composite likelihood-ratio test of a common λ.
pub fn variation_test(
    cls: &[CompositeLikelihood],
    fits: &[LocusFit],
    joint: &JointFit,
    tol: &Tolerances,
) -> Result<VariationTestResult, JointError> {
    check(cls, fits)?;
    for f in fits {
        if !(f.i > 0.0 && f.j > 0.0) {
            return Err(JointError::NonPositiveInfo { locus: f.locus.clone(), i: f.i, j: f.j });
        }
    }
    // Each separate maximum is at least the value at the joint maximizer, so
    // optimizer noise cannot push the statistic below zero.
    let separate: f64 = cls
        .iter()
        .zip(fits)
        .map(|(c, f)| f.cl_max.max(c.value(joint.lambda_hat)))
        .sum();
    let mut lr_star = 2.0 * (separate - joint.cl_max);
    if lr_star < -tol.lr_clamp {
        return Err(JointError::NegativeStatistic(lr_star));
    }
    if lr_star < tol.lr_clamp {
        lr_star = 0.0;
    }
    let i: Vec<f64> = fits.iter().map(|f| f.i).collect();
    let j: Vec<f64> = fits.iter().map(|f| f.j).collect();
    let (nu1, eta) = scaling_factor(&i, &j, tol.pivot)?;
    let df = (fits.len() - 1) as u32;
    let lr = lr_star / nu1;
    Ok(VariationTestResult {
        lr_star,
        nu1,
        lr,
        df,
        p_value: chi2_upper_tail(lr, df),
        eta,
        per_locus_lambda: fits.iter().map(|f| (f.locus.clone(), f.lambda_hat)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrowhead_layout() {
        let m = build_arrowhead(&[1.0, 2.0, 3.0]).unwrap();
        let want = SmallMatrix::from_rows(&[&[6.0, 2.0, 3.0], &[2.0, 2.0, 0.0], &[3.0, 0.0, 3.0]]).unwrap();
        assert_eq!(m, want);
        assert!(matches!(build_arrowhead(&[1.0]), Err(JointError::TooFewLoci(1))));
    }

    #[test]
    fn nu1_is_one_when_j_equals_i() {
        let v = [0.7, 1.9, 3.2, 0.4, 2.5, 1.1, 5.0];
        let (nu1, eta) = scaling_factor(&v, &v, 1e-12).unwrap();
        assert!((nu1 - 1.0).abs() < 1e-12);
        assert!(eta.iter().all(|e| (e - 1.0).abs() < 1e-10));
    }

    #[test]
    fn nu1_scale_invariant_and_consistent_with_eigenvalues() {
        let i = [1.0, 2.0, 0.5, 4.0];
        let j = [1.3, 2.9, 0.6, 7.0];
        let (a, eta) = scaling_factor(&i, &j, 1e-12).unwrap();
        let s: Vec<f64> = i.iter().map(|v| v * 37.0).collect();
        let t: Vec<f64> = j.iter().map(|v| v * 37.0).collect();
        let (b, _) = scaling_factor(&s, &t, 1e-12).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((eta.iter().sum::<f64>() / 3.0 - a).abs() < 1e-8);
    }
}
