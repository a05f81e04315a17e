//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 for usage and configuration problems (bad
//! flags, unreadable or missing files, invalid config values), 2 for data and
//! model problems (malformed input data, degenerate fits, too few loci).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use slvrate_core::analysis::{analyze_partitions, Analysis};
use slvrate_core::import::{pairwise_diffs, Weighting};
use slvrate_core::likelihood::{ratios_from, PairModel, ThetaMethod};
use slvrate_core::slv::extract_slv;
use thiserror::Error;

use crate::config::{AlphaArg, ConfigError, Design, Mode, RunConfig, ThetaRatioArg, WeightingArg};
use crate::experiment::{load_import_model, replicate_rows, report, run_replicates, REPLICATE_HEADER};
use crate::format::{
    digest_file, forest_tsv, parse_slv_tsv, read_import_dist, slv_tsv, to_json, tsv, AnalysisOut, FormatError, ImportDistFile, InputDigest, JointFitOut,
    Num, Provenance, VariationOut,
};
use crate::io::{load_dataset, read_text, write_dataset, LoadedDataset, ParseError};
use crate::parallel::{locus_import_dist_par, with_threads};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0:#}")]
    Usage(anyhow::Error),
    #[error("{0:#}")]
    Data(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

fn data(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Data(e.into())
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        if e.is_missing_input() { usage(e) } else { data(e) }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Read { .. } => usage(e),
            _ => data(e),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        usage(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "slvrate", version, about = "Estimate recombination-to-mutation rates from MLST single-locus variants")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// How data problems are handled.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Base random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Profile table (TSV with a header row).
    #[arg(long)]
    pub profiles: PathBuf,
    /// Directory holding one FASTA file per locus, named `{locus}.fasta`.
    #[arg(long)]
    pub alleles: PathBuf,
    /// Name of the ST column.
    #[arg(long, default_value = "ST")]
    pub st_column: String,
    /// Locus columns, comma-separated (default: all other columns).
    #[arg(long, value_delimiter = ',')]
    pub loci: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// SLV table written by `extract`.
    #[arg(long)]
    pub slv: PathBuf,
    /// Import-distribution files written by `import-dist`, one per locus.
    #[arg(long, num_args = 1.., required = true)]
    pub dist: Vec<PathBuf>,
    /// How the per-locus mutation-rate ratios are set: by locus length or by
    /// mean pairwise difference
    #[arg(long, value_enum)]
    pub theta_ratio: Option<ThetaRatioArg>,
    /// One within-group score correlation for all loci, or one per locus
    #[arg(long, value_enum)]
    pub alpha: Option<AlphaArg>,
    /// Confidence level.
    #[arg(long)]
    pub level: Option<f64>,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract SLV pairs, groups and weights for every locus.
    Extract {
        #[command(flatten)]
        data: DataArgs,
        /// Output TSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo estimate of the import distribution per locus.
    ImportDist {
        #[command(flatten)]
        data: DataArgs,
        /// Loci to estimate (default: all).
        #[arg(long = "locus")]
        locus: Vec<String>,
        /// Probability that an import replaces the whole locus.
        #[arg(long = "pa")]
        p_a: Option<f64>,
        /// Monte Carlo draws per locus.
        #[arg(short = 'M', long)]
        draws: Option<u64>,
        /// Draw donor and recipient per ST or per isolate
        #[arg(long, value_enum)]
        weighting: Option<WeightingArg>,
        /// Output directory; one `{locus}.json` per locus.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-locus estimates of λ with confidence intervals.
    Estimate(FitArgs),
    /// Per-locus estimates plus the common-λ estimate.
    Joint(FitArgs),
    /// Per-locus and common-λ estimates plus the test for variation in λ.
    TestVariation {
        #[command(flatten)]
        fit: FitArgs,
        /// Forest-plot TSV (default: next to --out with a .forest.tsv suffix).
        #[arg(long)]
        forest: Option<PathBuf>,
    },
    /// Simulate a dataset on a clonal-frame coalescent.
    Simulate {
        /// Number of sampled isolates
        #[arg(long)]
        n_samples: Option<usize>,
        /// Output directory for profiles.tsv, FASTA files and simulation.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated simulation and analysis with summary metrics.
    Experiment {
        #[arg(long, value_enum)]
        design: Option<Design>,
        /// Number of simulated datasets
        #[arg(long)]
        replicates: Option<u64>,
        /// Output directory for report.json and replicates.tsv.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Configuration from file and flags.
fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::ImportDist { p_a, draws, weighting, .. } => {
            cfg.import.p_a = p_a.unwrap_or(cfg.import.p_a);
            cfg.import.draws = draws.unwrap_or(cfg.import.draws);
            cfg.import.weighting = weighting.unwrap_or(cfg.import.weighting);
        }
        Command::Estimate(f) | Command::Joint(f) | Command::TestVariation { fit: f, .. } => {
            cfg.analysis.theta_ratio = f.theta_ratio.unwrap_or(cfg.analysis.theta_ratio);
            cfg.analysis.alpha = f.alpha.unwrap_or(cfg.analysis.alpha);
            cfg.analysis.level = f.level.unwrap_or(cfg.analysis.level);
        }
        Command::Simulate { n_samples, .. } => {
            cfg.simulate.n_samples = n_samples.unwrap_or(cfg.simulate.n_samples);
        }
        Command::Experiment { design, replicates, .. } => {
            cfg.experiment.design = design.unwrap_or(cfg.experiment.design);
            cfg.experiment.replicates = replicates.unwrap_or(cfg.experiment.replicates);
        }
        Command::Extract { .. } => {}
    }
    cfg.validate().map_err(|(key, message)| usage(anyhow!("invalid '{key}': {message}")))?;
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(usage)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display())).map_err(usage)
}

fn digests(paths: &[PathBuf]) -> Result<Vec<InputDigest>, CliError> {
    paths.iter().map(|p| digest_file(p).with_context(|| format!("{}", p.display())).map_err(usage)).collect()
}

fn load(args: &DataArgs, cfg: &RunConfig) -> Result<LoadedDataset, CliError> {
    let loaded = load_dataset(&args.profiles, &args.alleles, &args.st_column, &args.loci, cfg.mode.into())?;
    for e in &loaded.summary.exclusions {
        eprintln!("warning: ST {} excluded at locus {} (allele {}): {:?}", e.st_id, e.locus, e.allele_id, e.reason);
    }
    Ok(loaded)
}

fn provenance(command: &str, cfg: &RunConfig, args: serde_json::Value, inputs: Vec<InputDigest>) -> Provenance {
    let mut config = cfg.echo();
    config["args"] = args;
    Provenance::new(command, config, inputs)
}

fn cmd_extract(cfg: &RunConfig, data_args: &DataArgs, out: &Path) -> Result<(), CliError> {
    let loaded = load(data_args, cfg)?;
    let ds = &loaded.dataset;
    let mut partitions = Vec::with_capacity(ds.num_loci());
    for l in 0..ds.num_loci() {
        let (p, warnings) = extract_slv(ds, l, cfg.mode.into()).map_err(data)?;
        for w in warnings {
            eprintln!("warning: {w:?}");
        }
        partitions.push(p);
    }
    let prov = provenance("extract", cfg, json!({ "st_column": data_args.st_column, "loci": data_args.loci }), digests(&loaded.files)?);
    write(out, &slv_tsv(&partitions, &prov))?;
    let pairs: usize = partitions.iter().map(|p| p.n_pairs()).sum();
    eprintln!("{} STs, {} loci, {pairs} SLV pairs", ds.profiles().len(), ds.num_loci());
    Ok(())
}

fn cmd_import_dist(cfg: &RunConfig, data_args: &DataArgs, loci: &[String], out: &Path) -> Result<(), CliError> {
    let loaded = load(data_args, cfg)?;
    let ds = &loaded.dataset;
    let indices: Vec<usize> = if loci.is_empty() {
        (0..ds.num_loci()).collect()
    } else {
        loci.iter().map(|n| ds.locus_index(n).map_err(usage)).collect::<Result<_, _>>()?
    };
    let opts = cfg.analysis_options().import;
    let inputs = digests(&loaded.files)?;
    for l in indices {
        let name = &ds.loci()[l].name;
        let (dist, counts) = with_threads(cfg.threads, || locus_import_dist_par(ds, l, &opts)).map_err(data)?;
        let mean = pairwise_diffs(ds, l, Weighting::BySt).map_err(data)?.mean_pairwise();
        let prov = provenance("import-dist", cfg, json!({ "locus": name, "st_column": data_args.st_column }), inputs.clone());
        write(&out.join(format!("{name}.json")), &to_json(&ImportDistFile::new(&dist, counts, mean, prov)))?;
    }
    Ok(())
}

/// Partitions from the SLV table and models from the import files, in table
/// order, then the full analysis.
fn fit(cfg: &RunConfig, args: &FitArgs) -> Result<(Analysis, Vec<InputDigest>), CliError> {
    let text = read_text(&args.slv)?;
    let partitions = parse_slv_tsv(&args.slv, &text)?;
    let mut inputs = digests(std::slice::from_ref(&args.slv))?;
    let mut files: Vec<ImportDistFile> = Vec::new();
    for p in &args.dist {
        let (f, d) = read_import_dist(p)?;
        if files.iter().any(|g| g.locus == f.locus) {
            return Err(usage(anyhow!("{}: second import distribution for locus {}", p.display(), f.locus)));
        }
        files.push(f);
        inputs.push(d);
    }
    let mut dists = Vec::with_capacity(partitions.len());
    for p in &partitions {
        let f = files
            .iter()
            .find(|f| f.locus == p.locus)
            .ok_or_else(|| usage(anyhow!("no import distribution given for locus {}", p.locus)))?;
        dists.push(f);
    }
    let method: ThetaMethod = cfg.analysis.theta_ratio.into();
    let raw: Vec<f64> = dists
        .iter()
        .map(|f| match method {
            ThetaMethod::Length => f.m as f64,
            ThetaMethod::Pairwise => f.mean_pairwise.0,
        })
        .collect();
    let ratios = ratios_from(partitions.iter().map(|p| p.locus.clone()).collect(), &raw, method).map_err(data)?;
    let models = ratios
        .iter()
        .zip(&dists)
        .map(|(r, f)| PairModel::new(r.locus.clone(), r.r, f.distribution().map_err(data)?).map_err(data))
        .collect::<Result<Vec<_>, CliError>>()?;
    let analysis = analyze_partitions(partitions, models, &cfg.analysis_options()).map_err(data)?;
    Ok((analysis, inputs))
}

fn cmd_fit(cfg: &RunConfig, command: &str, args: &FitArgs, forest: Option<&Path>) -> Result<(), CliError> {
    let (a, inputs) = fit(cfg, args)?;
    let prov = provenance(command, cfg, json!({}), inputs);
    let mut out = AnalysisOut::loci_only(&a, prov.clone());
    if command != "estimate" {
        let joint = a.joint.as_ref().map_err(|e| data(e.clone()))?;
        out.joint = Some(JointFitOut::from(joint));
        if command == "test-variation" {
            let v = a.variation.as_ref().map_err(|e| data(e.clone()))?;
            out.variation = Some(VariationOut::from(v));
            let forest = forest.map(Path::to_path_buf).unwrap_or_else(|| args.out.with_extension("forest.tsv"));
            write(&forest, &forest_tsv(&a, joint, &prov))?;
            eprintln!("LR* = {:.4}, nu1 = {:.4}, df = {}, p = {:.4}", v.lr_star, v.nu1, v.df, v.p_value);
        }
    }
    write(&args.out, &to_json(&out))
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (import, inputs) = load_import_model(cfg).map_err(usage)?;
    let sim_cfg = cfg.sim_config(import, cfg.seed);
    let r = slvrate_core::sim::simulate(&sim_cfg).map_err(usage)?;
    let prov = provenance("simulate", cfg, json!({}), inputs);
    write_dataset(&r.dataset, out, &prov.comment_lines()).with_context(|| format!("writing {}", out.display())).map_err(usage)?;
    let truth: Vec<serde_json::Value> = sim_cfg
        .loci
        .iter()
        .map(|l| json!({ "name": l.name, "length": l.length, "theta": Num(l.theta), "lambda": Num(l.lambda) }))
        .collect();
    let manifest = json!({
        "provenance": prov,
        "seed": cfg.seed,
        "n_samples": sim_cfg.n_samples,
        "loci": truth,
        "n_sts": r.dataset.profiles().len(),
        "stats": {
            "mutations": r.stats.mutations,
            "recombinations": r.stats.recombinations,
            "void_recombinations": r.stats.void_recombinations,
            "tree_height": Num(r.stats.height),
            "total_branch_length": Num(r.stats.total_length),
        },
        "sample_st": r.sample_st,
    });
    write(&out.join("simulation.json"), &to_json(&manifest))?;
    eprintln!("{} samples, {} STs", sim_cfg.n_samples, r.dataset.profiles().len());
    Ok(())
}

fn cmd_experiment(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (import, inputs) = load_import_model(cfg).map_err(usage)?;
    cfg.sim_config(import.clone(), cfg.seed).validate().map_err(usage)?;
    if cfg.experiment.design == Design::Matched {
        crate::experiment::matched_models(&cfg.sim_loci(), &import).map_err(usage)?;
    }
    let results = run_replicates(cfg, &import);
    let prov = provenance("experiment", cfg, json!({}), inputs);
    let rep = report(cfg, &results, prov.clone());
    write(&out.join("report.json"), &to_json(&rep))?;
    write(&out.join("replicates.tsv"), &tsv(&prov, &REPLICATE_HEADER, &replicate_rows(&results)))?;
    for key in ["locus.coverage", "joint.rmse", "locus.mean_rmse", "rejection_rate"] {
        if let Some(m) = rep.per_metric.get(key) {
            eprintln!("{key}: {:.4} (± {:.4})", m.value.0, m.mc_stderr.0);
        }
    }
    if rep.failed > 0 {
        eprintln!("warning: {} of {} replicates failed", rep.failed, rep.replicates);
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Extract { data, out } => cmd_extract(&cfg, data, out),
        Command::ImportDist { data, locus, out, .. } => cmd_import_dist(&cfg, data, locus, out),
        Command::Estimate(f) => cmd_fit(&cfg, "estimate", f, None),
        Command::Joint(f) => cmd_fit(&cfg, "joint", f, None),
        Command::TestVariation { fit, forest } => cmd_fit(&cfg, "test-variation", fit, forest.as_deref()),
        Command::Simulate { out, .. } => cmd_simulate(&cfg, out),
        Command::Experiment { out, .. } => cmd_experiment(&cfg, out),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
