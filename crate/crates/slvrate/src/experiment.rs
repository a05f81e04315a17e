//! Simulation experiments: repeated simulate → fit → test runs with summary
//! metrics and Monte Carlo standard errors.
//!
//! Replicate `i` uses seed `derive_seed(seed, i)` for everything it draws, so
//! replicates can run in any order on any number of threads.

use std::collections::BTreeMap;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;
use slvrate_core::analysis::{analyze_dataset, analyze_partitions, Analysis, AnalysisOptions};
use slvrate_core::import::ImportDistribution;
use slvrate_core::likelihood::PairModel;
use slvrate_core::rng::{derive_seed, stream_rng};
use slvrate_core::sim::{sample_matched, simulate, DiversitySource, ImportModel, MatchedLocus, SimLocus};
use slvrate_core::slv::SlvPartition;

use crate::config::{Design, ImportModelConfig, RunConfig};
use crate::format::{fmt_num, read_import_dist, InputDigest, Num, Provenance, SIG_DIGITS};
use crate::parallel::with_threads;

/// Resolves the simulator's import model, reading any distribution files.
pub fn load_import_model(cfg: &RunConfig) -> anyhow::Result<(ImportModel, Vec<InputDigest>)> {
    Ok(match &cfg.simulate.import_model {
        ImportModelConfig::Complete { p_a } => (ImportModel::Complete { p_a: *p_a, source: DiversitySource::Lineages }, Vec::new()),
        ImportModelConfig::Geometric { mean } => (ImportModel::Geometric { mean: *mean }, Vec::new()),
        ImportModelConfig::Empirical { pmfs, dist_files } if dist_files.is_empty() => (ImportModel::Empirical { pmfs: pmfs.clone() }, Vec::new()),
        ImportModelConfig::Empirical { dist_files, .. } => {
            let mut pmfs = Vec::new();
            let mut digests = Vec::new();
            for path in dist_files {
                let (file, digest) = read_import_dist(path)?;
                pmfs.push(file.distribution().with_context(|| format!("{}", path.display()))?.pmf().to_vec());
                digests.push(digest);
            }
            (ImportModel::Empirical { pmfs }, digests)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocusOutcome {
    pub locus: String,
    pub lambda_true: f64,
    /// (λ̂, lower, upper, pairs); `None` when the locus had no SLV pairs.
    pub fit: Option<(f64, f64, f64, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: u64,
    pub seed: u64,
    pub n_sts: Option<usize>,
    pub loci: Vec<LocusOutcome>,
    /// (λ̂, lower, upper) of the common-λ fit.
    pub joint: Option<(f64, f64, f64)>,
    pub p_value: Option<f64>,
    pub error: Option<String>,
}

impl ReplicateResult {
    fn failed(replicate: u64, seed: u64, error: String) -> Self {
        Self { replicate, seed, n_sts: None, loci: Vec::new(), joint: None, p_value: None, error: Some(error) }
    }
}

fn outcome(replicate: u64, seed: u64, n_sts: Option<usize>, loci: &[SimLocus], a: &Analysis) -> ReplicateResult {
    let outcomes = loci
        .iter()
        .zip(&a.fits)
        .map(|(l, (_, f))| LocusOutcome {
            locus: l.name.clone(),
            lambda_true: l.lambda,
            fit: f.as_ref().map(|f| (f.lambda_hat, f.ci.lower, f.ci.upper, f.n_pairs)),
        })
        .collect();
    ReplicateResult {
        replicate,
        seed,
        n_sts,
        loci: outcomes,
        joint: a.joint.as_ref().ok().map(|j| (j.lambda_hat, j.ci.lower, j.ci.upper)),
        p_value: a.variation.as_ref().ok().map(|v| v.p_value),
        error: None,
    }
}

/// Inference models for the matched design: r_l = θ_l/Σθ and q_l from the
/// empirical pmfs.
pub fn matched_models(loci: &[SimLocus], import: &ImportModel) -> anyhow::Result<Vec<PairModel>> {
    let ImportModel::Empirical { pmfs } = import else {
        bail!("the matched design needs simulate.import_model.model = \"empirical\"");
    };
    if pmfs.len() != loci.len() {
        bail!("{} pmfs for {} loci", pmfs.len(), loci.len());
    }
    let total: f64 = loci.iter().map(|l| l.theta).sum();
    loci.iter()
        .zip(pmfs)
        .map(|(l, pmf)| {
            let q = ImportDistribution::from_pmf(l.name.clone(), pmf.clone())?;
            Ok(PairModel::new(l.name.clone(), l.theta / total, q)?)
        })
        .collect()
}

/// One replicate of the configured design.
pub fn run_replicate(cfg: &RunConfig, import: &ImportModel, opts: &AnalysisOptions, replicate: u64) -> ReplicateResult {
    let seed = derive_seed(cfg.seed, replicate);
    let mut opts = *opts;
    opts.import.seed = seed;
    let loci = cfg.sim_loci();
    if cfg.experiment.design == Design::Matched {
        let models = match matched_models(&loci, import) {
            Ok(m) => m,
            Err(e) => return ReplicateResult::failed(replicate, seed, format!("{e:#}")),
        };
        let partitions: Vec<SlvPartition> = models
            .iter()
            .zip(&loci)
            .enumerate()
            .map(|(i, (m, l))| {
                let locus = MatchedLocus { model: m.clone(), lambda: l.lambda, n_pairs: cfg.experiment.pairs_per_locus };
                sample_matched(&locus, &mut stream_rng(seed, i as u64))
            })
            .collect();
        return match analyze_partitions(partitions, models, &opts) {
            Ok(a) => outcome(replicate, seed, None, &loci, &a),
            Err(e) => ReplicateResult::failed(replicate, seed, e.to_string()),
        };
    }
    let sim = match simulate(&cfg.sim_config(import.clone(), seed)) {
        Ok(s) => s,
        Err(e) => return ReplicateResult::failed(replicate, seed, e.to_string()),
    };
    match analyze_dataset(&sim.dataset, &opts) {
        Ok(a) => outcome(replicate, seed, Some(sim.dataset.profiles().len()), &loci, &a),
        Err(e) => ReplicateResult::failed(replicate, seed, e.to_string()),
    }
}

/// All replicates, in replicate order.
pub fn run_replicates(cfg: &RunConfig, import: &ImportModel) -> Vec<ReplicateResult> {
    let opts = cfg.analysis_options();
    with_threads(cfg.threads, || (0..cfg.experiment.replicates).into_par_iter().map(|r| run_replicate(cfg, import, &opts, r)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metric {
    pub value: Num,
    pub mc_stderr: Num,
    /// Observations behind the value.
    pub n: usize,
}

impl Metric {
    pub fn value(&self) -> f64 {
        self.value.0
    }
}

fn mean_metric(v: &[f64]) -> Option<Metric> {
    let n = v.len();
    if n == 0 {
        return None;
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let se = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt() } else { f64::NAN };
    Some(Metric { value: Num(mean), mc_stderr: Num(se), n })
}

fn proportion_metric(hits: &[bool]) -> Option<Metric> {
    let n = hits.len();
    if n == 0 {
        return None;
    }
    let p = hits.iter().filter(|&&h| h).count() as f64 / n as f64;
    Some(Metric { value: Num(p), mc_stderr: Num((p * (1.0 - p) / n as f64).sqrt()), n })
}

/// Root mean square error with a delta-method standard error.
fn rmse_metric(errors: &[f64]) -> Option<Metric> {
    let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let m = mean_metric(&sq)?;
    let rmse = m.value.0.sqrt();
    let se = if rmse > 0.0 { m.mc_stderr.0 / (2.0 * rmse) } else { 0.0 };
    Some(Metric { value: Num(rmse), mc_stderr: Num(se), n: m.n })
}

/// Estimate-accuracy metrics for (estimate, lower, upper, truth) records.
fn accuracy(prefix: &str, recs: &[(f64, f64, f64, f64)], out: &mut BTreeMap<String, Metric>) {
    let errors: Vec<f64> = recs.iter().map(|r| r.0 - r.3).collect();
    let mut put = |name: &str, m: Option<Metric>| {
        if let Some(m) = m {
            out.insert(format!("{prefix}.{name}"), m);
        }
    };
    put("mean_lambda_hat", mean_metric(&recs.iter().map(|r| r.0).collect::<Vec<_>>()));
    put("bias", mean_metric(&errors));
    if recs.iter().all(|r| r.3 > 0.0) {
        put("relative_bias", mean_metric(&recs.iter().map(|r| (r.0 - r.3) / r.3).collect::<Vec<_>>()));
    }
    put("rmse", rmse_metric(&errors));
    put("coverage", proportion_metric(&recs.iter().map(|r| r.1 <= r.3 && r.3 <= r.2).collect::<Vec<_>>()));
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub replicate: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub design: Design,
    pub replicates: u64,
    pub failed: usize,
    /// (replicate, locus) combinations without SLV pairs, left out of the
    /// per-locus summaries.
    pub loci_without_pairs: usize,
    /// Replicates without a common-λ fit or variation test.
    pub joint_unavailable: usize,
    pub per_metric: BTreeMap<String, Metric>,
    pub failures: Vec<Failure>,
}

/// Summary metrics over replicate results.
pub fn summarize(results: &[ReplicateResult], test_level: f64) -> BTreeMap<String, Metric> {
    let mut out = BTreeMap::new();
    let ok: Vec<&ReplicateResult> = results.iter().filter(|r| r.error.is_none()).collect();
    let all: Vec<(f64, f64, f64, f64)> = ok
        .iter()
        .flat_map(|r| r.loci.iter().filter_map(|l| l.fit.map(|f| (f.0, f.1, f.2, l.lambda_true))))
        .collect();
    accuracy("locus", &all, &mut out);

    let names: Vec<String> = ok.first().map(|r| r.loci.iter().map(|l| l.locus.clone()).collect()).unwrap_or_default();
    let mut rmses = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let recs: Vec<(f64, f64, f64, f64)> = ok.iter().filter_map(|r| r.loci.get(i).and_then(|l| l.fit.map(|f| (f.0, f.1, f.2, l.lambda_true)))).collect();
        accuracy(&format!("locus.{name}"), &recs, &mut out);
        if let Some(m) = out.get(&format!("locus.{name}.rmse")) {
            rmses.push(m.value.0);
        }
    }
    if let Some(m) = mean_metric(&rmses) {
        out.insert("locus.mean_rmse".into(), m);
    }

    // The joint estimate has a truth only when every locus shares λ.
    let common = ok.first().and_then(|r| {
        let l0 = r.loci.first()?.lambda_true;
        r.loci.iter().all(|l| l.lambda_true == l0).then_some(l0)
    });
    if let Some(truth) = common {
        let recs: Vec<(f64, f64, f64, f64)> = ok.iter().filter_map(|r| r.joint.map(|j| (j.0, j.1, j.2, truth))).collect();
        accuracy("joint", &recs, &mut out);
    }
    let rejections: Vec<bool> = ok.iter().filter_map(|r| r.p_value.map(|p| p < test_level)).collect();
    if let Some(m) = proportion_metric(&rejections) {
        out.insert("rejection_rate".into(), m);
    }
    let sts: Vec<f64> = ok.iter().filter_map(|r| r.n_sts.map(|n| n as f64)).collect();
    if let Some(m) = mean_metric(&sts) {
        out.insert("mean_sts".into(), m);
    }
    let pairs: Vec<f64> = ok.iter().map(|r| r.loci.iter().filter_map(|l| l.fit.map(|f| f.3 as f64)).sum()).collect();
    if let Some(m) = mean_metric(&pairs) {
        out.insert("mean_slv_pairs".into(), m);
    }
    out
}

pub fn report(cfg: &RunConfig, results: &[ReplicateResult], provenance: Provenance) -> ExperimentReport {
    let ok = results.iter().filter(|r| r.error.is_none());
    ExperimentReport {
        provenance,
        design: cfg.experiment.design,
        replicates: cfg.experiment.replicates,
        failed: results.iter().filter(|r| r.error.is_some()).count(),
        loci_without_pairs: ok.clone().map(|r| r.loci.iter().filter(|l| l.fit.is_none()).count()).sum(),
        joint_unavailable: ok.filter(|r| r.p_value.is_none()).count(),
        per_metric: summarize(results, cfg.experiment.test_level),
        failures: results
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| Failure { replicate: r.replicate, message: e.clone() }))
            .collect(),
    }
}

pub const REPLICATE_HEADER: [&str; 10] = ["replicate", "seed", "locus", "lambda_true", "lambda_hat", "ci_lower", "ci_upper", "covered", "n_pairs", "p_value"];

/// Per-replicate rows: one per locus, then a `joint` row carrying the
/// variation-test p-value. Missing values are `NA`.
pub fn replicate_rows(results: &[ReplicateResult]) -> Vec<Vec<String>> {
    let na = || "NA".to_string();
    let num = |x: f64| fmt_num(x, SIG_DIGITS);
    let mut rows = Vec::new();
    for r in results.iter().filter(|r| r.error.is_none()) {
        for l in &r.loci {
            let mut row = vec![r.replicate.to_string(), r.seed.to_string(), l.locus.clone(), num(l.lambda_true)];
            match l.fit {
                Some((est, lo, hi, n)) => row.extend([num(est), num(lo), num(hi), u8::from(lo <= l.lambda_true && l.lambda_true <= hi).to_string(), n.to_string()]),
                None => row.extend([na(), na(), na(), na(), "0".into()]),
            }
            row.push(na());
            rows.push(row);
        }
        let l0 = r.loci.first().map(|l| l.lambda_true);
        let common = l0.filter(|&v| r.loci.iter().all(|l| l.lambda_true == v));
        let mut row = vec![r.replicate.to_string(), r.seed.to_string(), "joint".into(), common.map_or_else(na, num)];
        match (r.joint, common) {
            (Some((est, lo, hi)), Some(t)) => row.extend([num(est), num(lo), num(hi), u8::from(lo <= t && t <= hi).to_string()]),
            (Some((est, lo, hi)), None) => row.extend([num(est), num(lo), num(hi), na()]),
            (None, _) => row.extend([na(), na(), na(), na()]),
        }
        row.push(r.loci.iter().filter_map(|l| l.fit.map(|f| f.3)).sum::<usize>().to_string());
        row.push(r.p_value.map_or_else(na, num));
        rows.push(row);
    }
    rows
}
