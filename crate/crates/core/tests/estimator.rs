use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use slvrate_core::import::ImportDistribution;
use slvrate_core::likelihood::PairModel;
use slvrate_core::locus::{alpha_sigma_loglik, deviance_ci, fit_alpha_sigma, godambe, AlphaChoice, CompositeLikelihood, LocusError, Maximum};
use slvrate_core::numerics::{chi2_quantile, t_to_lambda, Tolerances};
use slvrate_core::rng::stream_rng;
use slvrate_core::sim::{sample_matched, MatchedLocus};
use slvrate_core::slv::SlvPartition;

fn equicorrelated(groups: usize, k: usize, alpha: f64, sigma2: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    let s = sigma2.sqrt();
    (0..groups)
        .map(|_| {
            let shared: f64 = StandardNormal.sample(&mut rng);
            (0..k)
                .map(|_| {
                    let own: f64 = StandardNormal.sample(&mut rng);
                    s * (alpha.sqrt() * shared + (1.0 - alpha).sqrt() * own)
                })
                .collect()
        })
        .collect()
}

#[test]
fn alpha_sigma_recovered_from_equicorrelated_scores() {
    let tol = Tolerances::default();
    let fit = fit_alpha_sigma(&equicorrelated(500, 3, 0.3, 4.0, 2024), &tol).unwrap();
    assert!(fit.alpha > 0.2 && fit.alpha < 0.4, "α̂ = {}", fit.alpha);
    assert!(fit.sigma2 > 3.4 && fit.sigma2 < 4.6, "σ̂² = {}", fit.sigma2);
}

#[test]
fn alpha_near_zero_for_independent_scores() {
    let tol = Tolerances::default();
    let mut hits = 0;
    for seed in 0..20 {
        let fit = fit_alpha_sigma(&equicorrelated(1000, 2, 0.0, 1.0, seed), &tol).unwrap();
        if fit.alpha < 0.1 {
            hits += 1;
        }
    }
    assert!(hits >= 19, "{hits}/20");
}

#[test]
fn alpha_fit_beats_moment_start() {
    let tol = Tolerances::default();
    for seed in 0..10 {
        let groups = equicorrelated(60, 1 + (seed as usize % 4), 0.4, 2.0, seed + 100);
        let mut groups = groups;
        groups.push(vec![0.5, -0.2, 1.1]);
        let fit = fit_alpha_sigma(&groups, &tol).unwrap();
        let n: usize = groups.iter().map(Vec::len).sum();
        let mom = groups.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64;
        assert!(fit.loglik_at_max >= alpha_sigma_loglik(&groups, 0.0, mom) - 1e-9);
        assert!((fit.loglik_at_max - alpha_sigma_loglik(&groups, fit.alpha, fit.sigma2)).abs() < 1e-9);
    }
}

#[test]
fn alpha_errors() {
    let tol = Tolerances::default();
    assert_eq!(fit_alpha_sigma(&[vec![0.1], vec![0.4], vec![-1.0]], &tol), Err(LocusError::AlphaUnidentifiable));
    assert_eq!(fit_alpha_sigma(&[vec![0.3, 0.3], vec![0.3]], &tol), Err(LocusError::DegenerateScores));
}

#[test]
fn gamma_formula() {
    for a in [0.0, 0.25, 0.5, 0.99] {
        assert_eq!(godambe(&[1; 17], a, 3.3).gamma, 1.0);
    }
    let g = godambe(&[3, 1], 0.5, 1.0);
    assert!((g.gamma - 3.0 / (1.0 + 3f64.sqrt())).abs() < 1e-12);
    // γ does not depend on σ².
    assert_eq!(godambe(&[6, 3], 0.3, 1.0).gamma, godambe(&[6, 3], 0.3, 123.0).gamma);
}

fn toy_model() -> PairModel {
    PairModel::new("l", 0.2, ImportDistribution::from_pmf("l", vec![0.2, 0.3, 0.5]).unwrap()).unwrap()
}

fn dense_grid_argmax(cl: &CompositeLikelihood, points: usize, t_max: f64) -> f64 {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..points {
        let t = t_max * i as f64 / (points - 1) as f64;
        let v = cl.value(t_to_lambda(t));
        if v > best.0 {
            best = (v, t);
        }
    }
    t_to_lambda(best.1)
}

#[test]
fn maximizer_matches_dense_grid() {
    let tol = Tolerances::default();
    let cl = CompositeLikelihood::new(SlvPartition::singletons("l", &[1; 12]), toy_model()).unwrap();
    let oracle = dense_grid_argmax(&cl, 1_000_001, tol.t_max());
    let max = cl.maximize(&tol).unwrap();
    assert!((max.lambda_hat - oracle).abs() < 1e-6, "{} vs {oracle}", max.lambda_hat);

    let cl = CompositeLikelihood::new(SlvPartition::singletons("l", &[1, 1, 1, 2, 3, 3, 1, 2]), toy_model()).unwrap();
    let oracle = dense_grid_argmax(&cl, 1_000_001, tol.t_max());
    let max = cl.maximize(&tol).unwrap();
    assert!((max.lambda_hat - oracle).abs() < 1e-4, "{} vs {oracle}", max.lambda_hat);
    assert!(!max.at_lower && !max.at_upper);
}

#[test]
fn mutation_explains_all_gives_zero() {
    let q = ImportDistribution::from_pmf("l", vec![0.01, 0.01, 0.98]).unwrap();
    let cl = CompositeLikelihood::new(SlvPartition::singletons("l", &[1; 30]), PairModel::new("l", 0.2, q).unwrap()).unwrap();
    let tol = Tolerances::default();
    let max = cl.maximize(&tol).unwrap();
    assert_eq!(max.lambda_hat, 0.0);
    assert!(max.at_lower);
    // Cl is decreasing on a dense grid.
    let mut prev = f64::INFINITY;
    for i in 0..2000 {
        let v = cl.value(i as f64 * 0.01);
        assert!(v <= prev);
        prev = v;
    }
}

#[test]
fn recovers_lambda_from_model_samples() {
    let q: Vec<f64> = {
        let raw: Vec<f64> = (1..=400).map(|x| (-(x as f64 - 20.0).powi(2) / 200.0).exp() + 1e-4).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    };
    let model = PairModel::new("l", 1.0 / 7.0, ImportDistribution::from_pmf("l", q).unwrap()).unwrap();
    let locus = MatchedLocus { model, lambda: 1.0, n_pairs: 10_000 };
    let p = sample_matched(&locus, &mut stream_rng(77, 0));
    let cl = CompositeLikelihood::new(p, locus.model.clone()).unwrap();
    let fit = cl.fit(AlphaChoice::Local, 0.95, &Tolerances::default()).unwrap();
    assert!(fit.lambda_hat > 0.9 && fit.lambda_hat < 1.1, "λ̂ = {}", fit.lambda_hat);
    assert!(fit.ci.contains(1.0) || fit.ci.lower > 0.9);
    assert_eq!(fit.gamma, 1.0);
}

#[test]
fn weights_scale_cl_not_argmax() {
    let tol = Tolerances::default();
    let xs = [1u32, 2, 3, 3, 1, 2, 3];
    let base = SlvPartition::singletons("l", &xs);
    let mut scaled = base.clone();
    for p in &mut scaled.pairs {
        p.weight *= 2.5;
    }
    let a = CompositeLikelihood::new(base.clone(), toy_model()).unwrap();
    let b = CompositeLikelihood::new(scaled, toy_model()).unwrap();
    assert!((b.value(0.7) - 2.5 * a.value(0.7)).abs() < 1e-12);
    assert!((a.maximize(&tol).unwrap().lambda_hat - b.maximize(&tol).unwrap().lambda_hat).abs() < 1e-6);

    let doubled: Vec<u32> = xs.iter().chain(xs.iter()).copied().collect();
    let c = CompositeLikelihood::new(SlvPartition::singletons("l", &doubled), toy_model()).unwrap();
    assert!((c.value(0.7) - 2.0 * a.value(0.7)).abs() < 1e-12);
}

#[test]
fn three_member_group_value() {
    let q: Vec<f64> = vec![0.1; 10];
    let model = PairModel::new("l3", 1.0 / 3.0, ImportDistribution::from_pmf("l3", q).unwrap()).unwrap();
    let p = SlvPartition::from_rows("l3", &[(1, 4, 5, 5), (1, 4, 6, 6), (1, 5, 6, 1)]).unwrap();
    let cl = CompositeLikelihood::new(p, model.clone()).unwrap();
    let want = (model.loglik(1.0, 5) + model.loglik(1.0, 6) + model.loglik(1.0, 1)) / 3f64.sqrt();
    assert!((cl.value(1.0) - want).abs() < 1e-14);
}

fn random_partition(seed: u64) -> SlvPartition {
    let mut rng = stream_rng(seed, 1);
    let mut rows = Vec::new();
    let mut st = 1;
    for g in 1..=25u32 {
        let n = rng.random_range(2..5u32);
        let members: Vec<u32> = (0..n).map(|i| st + i).collect();
        st += n;
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                rows.push((g, members[i], members[j], rng.random_range(1..=3u32)));
            }
        }
    }
    SlvPartition::from_rows("l", &rows).unwrap()
}

#[test]
fn deviance_interval_properties() {
    let tol = Tolerances::default();
    let threshold = chi2_quantile(0.95, 1);
    for seed in 0..5 {
        let cl = CompositeLikelihood::new(random_partition(seed), toy_model()).unwrap();
        let fit = cl.fit(AlphaChoice::Local, 0.95, &tol).unwrap();
        let w = |l: f64| 2.0 / fit.gamma * (fit.cl_max - cl.value(l));
        assert!(w(fit.lambda_hat).abs() < 1e-9);
        for i in 0..400 {
            assert!(w(i as f64 * 0.05) >= -1e-9);
        }
        assert!(fit.ci.contains(fit.lambda_hat));
        if fit.ci.lower > 0.0 {
            assert!((w(fit.ci.lower) - threshold).abs() <= 1e-4);
        }
        if fit.ci.upper.is_finite() {
            assert!((w(fit.ci.upper) - threshold).abs() <= 1e-4, "{}", w(fit.ci.upper));
        }

        let max = Maximum { lambda_hat: fit.lambda_hat, cl_max: fit.cl_max, at_lower: fit.at_lower, at_upper: fit.at_upper };
        let wide = deviance_ci(|l| cl.value(l), &max, 2.0 * fit.gamma, 0.95, &tol).unwrap();
        assert!(wide.lower <= fit.ci.lower && wide.upper >= fit.ci.upper);
        assert!(wide.lower < fit.ci.lower || fit.ci.lower == 0.0);
    }
}

#[test]
fn fits_are_bit_identical() {
    let tol = Tolerances::default();
    let cl = CompositeLikelihood::new(random_partition(9), toy_model()).unwrap();
    let a = cl.fit(AlphaChoice::Local, 0.95, &tol).unwrap();
    let b = cl.clone().fit(AlphaChoice::Local, 0.95, &tol).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}
