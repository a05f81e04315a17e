//! Per-locus composite likelihood Cl(λ) = Σ_i w_i ℓ(λ; x_i), its maximizer,
//! the within-group score correlation model, Godambe quantities and
//! deviance-based confidence intervals.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use libm::{log, sqrt};
use thiserror::Error;

use crate::likelihood::PairModel;
use crate::numerics::{
    bisect_crossing, chi2_quantile, lambda_to_t, maximize_scalar, t_to_lambda, NumericsError, Tolerances,
};
use crate::slv::SlvPartition;

/// Number of α grid points scanned before the local Brent refinement.
const ALPHA_GRID: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocusError {
    #[error("locus {locus} has no SLV pairs")]
    EmptyPartition { locus: String },
    #[error("locus {locus}: pair with x = {x} outside 1..{m}")]
    XOutOfRange { locus: String, x: u32, m: usize },
    #[error("within-group correlation is unidentifiable: every group has a single pair")]
    AlphaUnidentifiable,
    #[error("all scores are identical; correlation model is degenerate")]
    DegenerateScores,
    #[error("deviance does not cross the threshold on the {side} side of λ̂ = {lambda_hat} (W at end = {w_end})")]
    NonMonotoneDeviance { side: &'static str, lambda_hat: f64, w_end: f64 },
    #[error("level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A maximized λ curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub lambda_hat: f64,
    pub cl_max: f64,
    /// λ̂ is at 0.
    pub at_lower: bool,
    /// λ̂ is at the upper search bound.
    pub at_upper: bool,
}

/// Maximizes `f(λ)` over [0, Λ_max] on t = λ/(1+λ).
pub fn maximize_lambda<F: FnMut(f64) -> f64>(mut f: F, tol: &Tolerances) -> Result<Maximum, NumericsError> {
    let t_max = tol.t_max();
    let res = maximize_scalar(|t| f(t_to_lambda(t)), 0.0, t_max, tol.opt_t_tol)?;
    Ok(Maximum {
        lambda_hat: t_to_lambda(res.argmax),
        cl_max: res.value,
        at_lower: res.at_boundary && res.argmax <= tol.opt_t_tol,
        at_upper: res.at_boundary && t_max - res.argmax <= tol.opt_t_tol,
    })
}

/// Confidence interval for λ; `upper` is +∞ when the deviance never reaches
/// the threshold below Λ_max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, lambda: f64) -> bool {
        self.lower <= lambda && lambda <= self.upper
    }
}

/// {λ : W(λ) ≤ χ²₁(level)} with W(λ) = (2/γ)[cl_max − Cl(λ)], located by
/// bisection in t outward from λ̂.
pub fn deviance_ci<F: FnMut(f64) -> f64>(
    mut cl: F,
    max: &Maximum,
    gamma: f64,
    level: f64,
    tol: &Tolerances,
) -> Result<Interval, LocusError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(LocusError::InvalidLevel(level));
    }
    let threshold = chi2_quantile(level, 1);
    let mut excess = |t: f64| 2.0 / gamma * (max.cl_max - cl(t_to_lambda(t))) - threshold;
    let t_hat = lambda_to_t(max.lambda_hat);
    let t_max = tol.t_max();

    let lower = if t_hat <= 0.0 || excess(0.0) <= 0.0 {
        0.0
    } else {
        match bisect_crossing(&mut excess, 0.0, t_hat, tol.ci_t_tol) {
            Ok(t) => t_to_lambda(t),
            Err(NumericsError::NoBracket { g_lo, .. }) => {
                return Err(LocusError::NonMonotoneDeviance { side: "lower", lambda_hat: max.lambda_hat, w_end: g_lo + threshold })
            }
            Err(e) => return Err(e.into()),
        }
    };
    let upper = if t_hat >= t_max || excess(t_max) <= 0.0 {
        f64::INFINITY
    } else {
        match bisect_crossing(&mut excess, t_hat, t_max, tol.ci_t_tol) {
            Ok(t) => t_to_lambda(t),
            Err(NumericsError::NoBracket { g_hi, .. }) => {
                return Err(LocusError::NonMonotoneDeviance { side: "upper", lambda_hat: max.lambda_hat, w_end: g_hi + threshold })
            }
            Err(e) => return Err(e.into()),
        }
    };
    Ok(Interval { lower, upper })
}

/// Scores at one λ, grouped as in the partition.
pub type GroupScores = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct CompositeLikelihood {
    pub partition: SlvPartition,
    pub model: PairModel,
    /// (x, Σ w_i over pairs with that x), ascending in x.
    histogram: Vec<(usize, f64)>,
}

impl CompositeLikelihood {
    pub fn new(partition: SlvPartition, model: PairModel) -> Result<Self, LocusError> {
        if partition.is_empty() {
            return Err(LocusError::EmptyPartition { locus: partition.locus.clone() });
        }
        let mut totals = vec![0.0f64; model.m + 1];
        let mut seen = vec![false; model.m + 1];
        for p in &partition.pairs {
            let x = p.x as usize;
            if x == 0 || x > model.m {
                return Err(LocusError::XOutOfRange { locus: partition.locus.clone(), x: p.x, m: model.m });
            }
            totals[x] += p.weight;
            seen[x] = true;
        }
        let histogram = (1..=model.m).filter(|&x| seen[x]).map(|x| (x, totals[x])).collect();
        Ok(Self { partition, model, histogram })
    }

    pub fn locus(&self) -> &str {
        &self.partition.locus
    }

    /// Cl(λ)
    pub fn value(&self, lambda: f64) -> f64 {
        let at = self.model.at(lambda);
        self.histogram.iter().map(|&(x, w)| w * at.loglik(x)).sum()
    }

    pub fn maximize(&self, tol: &Tolerances) -> Result<Maximum, LocusError> {
        Ok(maximize_lambda(|l| self.value(l), tol)?)
    }

    /// u(λ; x_i) for every pair, grouped.
    pub fn group_scores(&self, lambda: f64) -> GroupScores {
        let at = self.model.at(lambda);
        self.partition
            .pairs_by_group()
            .map(|pairs| pairs.iter().map(|p| at.score(p.x as usize)).collect())
            .collect()
    }

    /// Maximizes Cl and fits the local correlation model at λ̂.
    pub fn prefit(&self, tol: &Tolerances) -> Result<Prefit, LocusError> {
        let max = self.maximize(tol)?;
        let scores = self.group_scores(max.lambda_hat);
        let local = fit_alpha_sigma(&scores, tol);
        Ok(Prefit { max, scores, local })
    }

    /// Full fit with α chosen by `alpha`.
    pub fn fit(&self, alpha: AlphaChoice, level: f64, tol: &Tolerances) -> Result<LocusFit, LocusError> {
        let pre = self.prefit(tol)?;
        let a = match alpha {
            AlphaChoice::Local => pre.local.as_ref().map(|f| f.alpha).unwrap_or(0.0),
            AlphaChoice::Fixed(a) => a,
        };
        pre.finish(self, a, level, tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    /// This locus's own estimate, or 0 when it is unidentifiable.
    Local,
    Fixed(f64),
}

/// First stage of a locus fit: the maximum and the local α estimate.
#[derive(Debug, Clone)]
pub struct Prefit {
    pub max: Maximum,
    pub scores: GroupScores,
    pub local: Result<AlphaSigmaFit, LocusError>,
}

impl Prefit {
    /// Completes the fit using correlation `alpha`.
    pub fn finish(&self, cl: &CompositeLikelihood, alpha: f64, level: f64, tol: &Tolerances) -> Result<LocusFit, LocusError> {
        let stats = group_stats(&self.scores);
        let sigma2 = profile_sigma2(&stats, alpha);
        let pair_counts = cl.partition.group_pair_counts();
        let g = godambe(&pair_counts, alpha, sigma2);
        let ci = deviance_ci(|l| cl.value(l), &self.max, g.gamma, level, tol)?;
        let n = cl.partition.n_pairs();
        let raw_score_variance = self.scores.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64;
        Ok(LocusFit {
            locus: cl.partition.locus.clone(),
            lambda_hat: self.max.lambda_hat,
            cl_max: self.max.cl_max,
            alpha,
            alpha_local: self.local.as_ref().ok().map(|f| f.alpha),
            sigma2,
            i: g.i,
            j: g.j,
            gamma: g.gamma,
            ci,
            n_pairs: n,
            groups: pair_counts.len(),
            at_lower: self.max.at_lower,
            at_upper: self.max.at_upper,
            raw_score_variance,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocusFit {
    pub locus: String,
    pub lambda_hat: f64,
    pub cl_max: f64,
    /// Correlation used for I, J and the interval.
    pub alpha: f64,
    /// This locus's own estimate, when identifiable.
    pub alpha_local: Option<f64>,
    pub sigma2: f64,
    pub i: f64,
    pub j: f64,
    pub gamma: f64,
    pub ci: Interval,
    pub n_pairs: usize,
    /// G
    pub groups: usize,
    pub at_lower: bool,
    pub at_upper: bool,
    /// Mean squared score at λ̂ (diagnostic only).
    pub raw_score_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSigmaFit {
    pub alpha: f64,
    pub sigma2: f64,
    pub loglik_at_max: f64,
}

/// Per-group (k, Σv, Σv²).
#[derive(Debug, Clone, Copy)]
struct GroupStat {
    k: f64,
    s1: f64,
    s2: f64,
}

fn group_stats(groups: &[Vec<f64>]) -> Vec<GroupStat> {
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| GroupStat { k: g.len() as f64, s1: g.iter().sum(), s2: g.iter().map(|v| v * v).sum() })
        .collect()
}

/// σ²(1−α) at the σ² maximizing the Gaussian likelihood for fixed α.
fn profile_s(stats: &[GroupStat], alpha: f64) -> f64 {
    let total_k: f64 = stats.iter().map(|s| s.k).sum();
    stats.iter().map(|s| s.s2 - alpha * s.s1 * s.s1 / (1.0 + (s.k - 1.0) * alpha)).sum::<f64>() / total_k
}

fn profile_sigma2(stats: &[GroupStat], alpha: f64) -> f64 {
    profile_s(stats, alpha) / (1.0 - alpha)
}

fn profile_loglik(stats: &[GroupStat], alpha: f64) -> f64 {
    let s = profile_s(stats, alpha);
    if !(s > 0.0) {
        return f64::NEG_INFINITY;
    }
    let log_s = log(s);
    let log_1ma = log(1.0 - alpha);
    stats
        .iter()
        .map(|g| -0.5 * g.k * log_s - 0.5 * log(1.0 + (g.k - 1.0) * alpha) + 0.5 * log_1ma - 0.5 * g.k)
        .sum()
}

/// Log-likelihood of grouped scores under the equicorrelated Gaussian model
/// with correlation `alpha` and variance `sigma2` (additive constants dropped).
pub fn alpha_sigma_loglik(groups: &[Vec<f64>], alpha: f64, sigma2: f64) -> f64 {
    let a = 1.0 / (1.0 - alpha);
    group_stats(groups)
        .iter()
        .map(|g| {
            let b = -alpha / ((1.0 - alpha) * (1.0 + (g.k - 1.0) * alpha));
            -0.5 * g.k * log(sigma2 * (1.0 - alpha))
                - 0.5 * log((1.0 + (g.k - 1.0) * alpha) / (1.0 - alpha))
                - 0.5 * (a * g.s2 + b * g.s1 * g.s1) / sigma2
        })
        .sum()
}

/// Maximum-likelihood (α, σ²) for grouped scores. σ² is profiled out in
/// closed form and α is found by a grid scan followed by Brent refinement.
pub fn fit_alpha_sigma(groups: &[Vec<f64>], tol: &Tolerances) -> Result<AlphaSigmaFit, LocusError> {
    let stats = group_stats(groups);
    if stats.iter().all(|g| g.k < 2.0) {
        return Err(LocusError::AlphaUnidentifiable);
    }
    let mut all = groups.iter().flatten();
    let first = *all.next().expect("non-empty group");
    if all.all(|&v| v == first) {
        return Err(LocusError::DegenerateScores);
    }
    let hi = tol.alpha_max;
    let grid: Vec<f64> = (0..=ALPHA_GRID).map(|i| hi * i as f64 / ALPHA_GRID as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&a| profile_loglik(&stats, a)).collect();
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let lo = grid[best.saturating_sub(1)];
    let up = grid[(best + 1).min(ALPHA_GRID)];
    let res = maximize_scalar(
        |a| {
            let v = profile_loglik(&stats, a);
            if v.is_finite() {
                v
            } else {
                f64::MIN
            }
        },
        lo,
        up,
        tol.alpha_tol,
    )?;
    let (alpha, value) = if res.value >= values[best] { (res.argmax, res.value) } else { (grid[best], values[best]) };
    Ok(AlphaSigmaFit { alpha, sigma2: profile_sigma2(&stats, alpha), loglik_at_max: value })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Godambe {
    pub i: f64,
    pub j: f64,
    pub gamma: f64,
}

/// I = σ² Σ_g √k_g, J = σ²(G + α Σ_g (k_g − 1)), γ = J/I (computed without σ²).
pub fn godambe(pair_counts: &[usize], alpha: f64, sigma2: f64) -> Godambe {
    let g = pair_counts.len() as f64;
    let root_sum: f64 = pair_counts.iter().map(|&k| sqrt(k as f64)).sum();
    let excess: f64 = pair_counts.iter().map(|&k| k as f64 - 1.0).sum();
    let j_over_s = g + alpha * excess;
    Godambe { i: sigma2 * root_sum, j: sigma2 * j_over_s, gamma: j_over_s / root_sum }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::import::ImportDistribution;
    use crate::slv::SlvPartition;

    fn toy_model() -> PairModel {
        PairModel::new("l", 0.2, ImportDistribution::from_pmf("l", vec![0.2, 0.3, 0.5]).unwrap()).unwrap()
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(godambe(&[1, 1, 1, 1], 0.7, 2.0).gamma, 1.0);
        let g = godambe(&[3, 1], 0.5, 4.0);
        assert!((g.gamma - 3.0 / (1.0 + sqrt(3.0))).abs() < 1e-12);
        assert!((g.j / g.i - g.gamma).abs() < 1e-12);
        let g0 = godambe(&[6, 3, 1], 0.0, 1.0);
        assert!((g0.gamma - 3.0 / (sqrt(6.0) + sqrt(3.0) + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn single_pair_equals_loglik() {
        let p = SlvPartition::singletons("l", &[2]);
        let cl = CompositeLikelihood::new(p, toy_model()).unwrap();
        assert_eq!(cl.value(1.3), toy_model().loglik(1.3, 2));
    }

    #[test]
    fn empty_and_out_of_range() {
        assert!(matches!(
            CompositeLikelihood::new(SlvPartition::empty("l"), toy_model()),
            Err(LocusError::EmptyPartition { .. })
        ));
        assert!(matches!(
            CompositeLikelihood::new(SlvPartition::singletons("l", &[4]), toy_model()),
            Err(LocusError::XOutOfRange { .. })
        ));
    }

    #[test]
    fn unidentifiable_and_degenerate() {
        let tol = Tolerances::default();
        assert_eq!(fit_alpha_sigma(&[vec![1.0], vec![2.0]], &tol), Err(LocusError::AlphaUnidentifiable));
        assert_eq!(fit_alpha_sigma(&[vec![1.0, 1.0], vec![1.0]], &tol), Err(LocusError::DegenerateScores));
    }

    #[test]
    fn profile_matches_full_likelihood() {
        let groups = vec![vec![0.3, -1.2, 0.8], vec![1.1], vec![-0.4, 0.2, 0.9, -2.0, 0.1, 0.6]];
        let stats = group_stats(&groups);
        for a in [0.0, 0.2, 0.7] {
            let s2 = profile_sigma2(&stats, a);
            assert!((profile_loglik(&stats, a) - alpha_sigma_loglik(&groups, a, s2)).abs() < 1e-12);
            // σ² is a stationary point of the full likelihood.
            let h = 1e-5 * s2;
            assert!(alpha_sigma_loglik(&groups, a, s2) >= alpha_sigma_loglik(&groups, a, s2 + h));
            assert!(alpha_sigma_loglik(&groups, a, s2) >= alpha_sigma_loglik(&groups, a, s2 - h));
        }
    }

    #[test]
    fn mutation_only_data_hits_lower_bound() {
        let p = SlvPartition::singletons("l", &[1; 20]);
        let q = ImportDistribution::from_pmf("l", vec![0.01, 0.04, 0.95]).unwrap();
        let cl = CompositeLikelihood::new(p, PairModel::new("l", 0.2, q).unwrap()).unwrap();
        let fit = cl.fit(AlphaChoice::Local, 0.95, &Tolerances::default()).unwrap();
        assert_eq!(fit.lambda_hat, 0.0);
        assert!(fit.at_lower);
        assert_eq!(fit.ci.lower, 0.0);
        assert!(fit.ci.upper > 0.0);
    }
}
