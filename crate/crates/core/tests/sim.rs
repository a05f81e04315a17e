use std::collections::BTreeMap;

use slvrate_core::analysis::{analyze_dataset, AnalysisOptions};
use slvrate_core::dataset::{hamming, BuildMode};
use slvrate_core::rng::stream_rng;
use slvrate_core::sim::{simulate, simulate_coalescent_tree, EventKind, ImportModel, SimConfig, REFERENCE_LOCI};
use slvrate_core::slv::extract_slv;

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn two_sample_coalescence_time() {
    let mut rng = stream_rng(100, 0);
    let times: Vec<f64> = (0..10_000).map(|_| simulate_coalescent_tree(2, &mut rng).height()).collect();
    let (mean, _) = mean_and_se(&times);
    assert!(mean > 0.97 && mean < 1.03, "{mean}");
}

#[test]
fn ten_sample_tree_height() {
    let mut rng = stream_rng(101, 0);
    let heights: Vec<f64> = (0..10_000).map(|_| simulate_coalescent_tree(10, &mut rng).height()).collect();
    let (mean, se) = mean_and_se(&heights);
    // E[height] = Σ_{k=2}^{n} 2/(k(k−1)) = 2(1 − 1/n)
    assert!((mean - 1.8).abs() < 3.0 * se, "{mean} ± {se}");
}

fn mutation_only(n: usize, theta: f64, seed: u64) -> SimConfig {
    let mut c = SimConfig::proportional(&[("a", 300), ("b", 500)], theta, 0.0, n, seed);
    c.record_events = true;
    c
}

#[test]
fn mutation_counts_match_branch_lengths() {
    let (mut observed, mut expected) = (0.0, 0.0);
    for rep in 0..400 {
        let c = mutation_only(8, 16.0, rep);
        let r = simulate(&c).unwrap();
        let events = r.events.as_ref().unwrap();
        observed += events.iter().filter(|e| e.locus == 1 && e.kind == EventKind::Mutation).count() as f64;
        expected += r.stats.total_length * c.loci[1].theta / 2.0;
    }
    // Poisson total: standard error √expected.
    assert!((observed - expected).abs() < 3.0 * expected.sqrt(), "{observed} vs {expected}");
}

#[test]
fn pairwise_differences_match_theta() {
    let theta = 8.0;
    let mut means = Vec::new();
    for rep in 0..2000 {
        let c = mutation_only(6, theta, 10_000 + rep);
        let r = simulate(&c).unwrap();
        let ds = &r.dataset;
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..r.sample_st.len() {
            for j in i + 1..r.sample_st.len() {
                let pi = ds.profiles().iter().position(|p| p.st_id == r.sample_st[i]).unwrap();
                let pj = ds.profiles().iter().position(|p| p.st_id == r.sample_st[j]).unwrap();
                total += hamming(ds.sequence(pi, 1).unwrap(), ds.sequence(pj, 1).unwrap()).unwrap() as f64;
                pairs += 1.0;
            }
        }
        means.push(total / pairs);
    }
    let (mean, _) = mean_and_se(&means);
    let theta_l = theta * 500.0 / 800.0;
    assert!((mean / theta_l - 1.0).abs() < 0.05, "{mean} vs {theta_l}");
}

fn check_realizable(c: &SimConfig) {
    let r = simulate(c).unwrap();
    let events = r.events.as_ref().unwrap();
    let mut by_branch: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in events.iter().enumerate() {
        by_branch.entry(e.branch).or_default().push(i);
    }
    let mut seen: BTreeMap<Vec<Vec<u8>>, u32> = BTreeMap::new();
    for leaf in 0..c.n_samples {
        let mut seq = r.root.clone();
        for node in r.tree.path_from_root(leaf) {
            // Event log is ordered oldest first.
            for &i in by_branch.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
                for &(site, base) in &events[i].changes {
                    seq[events[i].locus][site as usize] = base;
                }
            }
        }
        let st = r.sample_st[leaf];
        let pi = r.dataset.profiles().iter().position(|p| p.st_id == st).unwrap();
        for (l, s) in seq.iter().enumerate() {
            assert_eq!(r.dataset.sequence(pi, l).unwrap().sequence.as_bytes(), s.as_slice());
        }
        // Identical sequence vectors share an ST; distinct ones never do.
        if let Some(&other) = seen.get(&seq) {
            assert_eq!(other, st);
        } else {
            assert!(!seen.values().any(|&v| v == st));
            seen.insert(seq, st);
        }
    }
}

#[test]
fn leaves_are_realizable_from_the_event_log() {
    for (seed, import) in [
        (1, ImportModel::default()),
        (2, ImportModel::Geometric { mean: 4.0 }),
        (3, ImportModel::Empirical { pmfs: vec![vec![0.5, 0.25, 0.25], vec![1.0]] }),
    ] {
        let mut c = SimConfig::proportional(&[("a", 60), ("b", 40)], 12.0, 2.0, 40, seed);
        c.import = import;
        c.record_events = true;
        check_realizable(&c);
    }
}

#[test]
fn deterministic_under_seed() {
    let c = SimConfig::proportional(&REFERENCE_LOCI, 100.0, 1.0, 300, 9);
    let a = simulate(&c).unwrap();
    let b = simulate(&c).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.sample_st, b.sample_st);
}

#[test]
fn no_recombination_gives_small_lambda() {
    let mut estimates = Vec::new();
    for rep in 0..50 {
        let c = SimConfig::proportional(&REFERENCE_LOCI, 20.0, 0.0, 400, 500 + rep);
        let r = simulate(&c).unwrap();
        let opts = AnalysisOptions { import: slvrate_core::analysis::ImportOptions { draws: 20_000, ..Default::default() }, ..Default::default() };
        if let Ok(a) = analyze_dataset(&r.dataset, &opts) {
            estimates.extend(a.fitted().map(|f| f.lambda_hat));
        }
    }
    assert!(estimates.len() > 100);
    estimates.sort_by(f64::total_cmp);
    let median = estimates[estimates.len() / 2];
    assert!(median <= 0.1, "median λ̂ = {median}");
}

#[test]
fn default_scenario_has_realistic_counts() {
    let c = SimConfig::proportional(&REFERENCE_LOCI, 100.0, 1.0, 5000, 42);
    let r = simulate(&c).unwrap();
    let sts = r.dataset.profiles().len();
    let slvs: usize = (0..7).map(|l| extract_slv(&r.dataset, l, BuildMode::Strict).unwrap().0.n_pairs()).sum();
    eprintln!("N=5000: {sts} STs, {slvs} SLV pairs");
    assert!(sts as f64 > 629.0 / 3.0 && (sts as f64) < 629.0 * 3.0, "{sts} STs");
    assert!(slvs as f64 > 600.0 / 3.0 && (slvs as f64) < 600.0 * 3.0, "{slvs} SLV pairs");
}
