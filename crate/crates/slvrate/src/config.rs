//! Run configuration.
//!
//! A single TOML file configures every subcommand; each reads the sections it
//! needs. Precedence, lowest to highest: built-in defaults, the config file,
//! command-line flags. The resolved configuration is echoed into every output
//! file, except `threads`, which never changes a result.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slvrate_core::analysis::{AlphaMode, AnalysisOptions, ImportOptions};
use slvrate_core::dataset::BuildMode;
use slvrate_core::import::Weighting;
use slvrate_core::likelihood::ThetaMethod;
use slvrate_core::numerics::Tolerances;
use slvrate_core::sim::{ImportModel, SimConfig, SimLocus, REFERENCE_LOCI};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{location}: invalid '{key}': {message}")]
    Invalid { location: String, key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Strict,
    Lenient,
}

impl From<Mode> for BuildMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Strict => BuildMode::Strict,
            Mode::Lenient => BuildMode::Lenient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ThetaRatioArg {
    #[default]
    Length,
    Pairwise,
}

impl From<ThetaRatioArg> for ThetaMethod {
    fn from(t: ThetaRatioArg) -> Self {
        match t {
            ThetaRatioArg::Length => ThetaMethod::Length,
            ThetaRatioArg::Pairwise => ThetaMethod::Pairwise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AlphaArg {
    #[default]
    Common,
    PerLocus,
}

impl From<AlphaArg> for AlphaMode {
    fn from(a: AlphaArg) -> Self {
        match a {
            AlphaArg::Common => AlphaMode::Common,
            AlphaArg::PerLocus => AlphaMode::PerLocus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WeightingArg {
    #[default]
    BySt,
    ByIsolate,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::BySt => Weighting::BySt,
            WeightingArg::ByIsolate => Weighting::ByIsolate,
        }
    }
}

/// Overrides for [`Tolerances`]; unset fields keep the built-in values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub lambda_max: Option<f64>,
    pub opt_t_tol: Option<f64>,
    pub ci_t_tol: Option<f64>,
    pub alpha_tol: Option<f64>,
    pub pivot: Option<f64>,
    pub lr_clamp: Option<f64>,
}

impl ToleranceConfig {
    pub fn resolve(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            lambda_max: self.lambda_max.unwrap_or(d.lambda_max),
            opt_t_tol: self.opt_t_tol.unwrap_or(d.opt_t_tol),
            ci_t_tol: self.ci_t_tol.unwrap_or(d.ci_t_tol),
            alpha_tol: self.alpha_tol.unwrap_or(d.alpha_tol),
            alpha_max: d.alpha_max,
            pivot: self.pivot.unwrap_or(d.pivot),
            lr_clamp: self.lr_clamp.unwrap_or(d.lr_clamp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportConfig {
    /// Probability that a recombination event replaces the whole locus.
    pub p_a: f64,
    /// Monte Carlo draws per locus.
    pub draws: u64,
    pub weighting: WeightingArg,
}

impl Default for ImportConfig {
    fn default() -> Self {
        let d = ImportOptions::default();
        Self { p_a: d.p_a, draws: d.draws, weighting: WeightingArg::BySt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub theta_ratio: ThetaRatioArg,
    pub alpha: AlphaArg,
    /// Confidence level of every interval.
    pub level: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { theta_ratio: ThetaRatioArg::Length, alpha: AlphaArg::Common, level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocusConfig {
    pub name: String,
    pub length: usize,
    /// Overrides the length-proportional share of the total θ.
    pub theta: Option<f64>,
    /// Overrides the common λ.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImportModelConfig {
    /// Whole-locus import with probability `p_a`, otherwise a prefix or
    /// suffix, copied from another lineage alive at the time.
    Complete { p_a: f64 },
    Geometric { mean: f64 },
    /// One pmf over 1..k per locus, given inline or as import-dist JSON files.
    Empirical {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        pmfs: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        dist_files: Vec<PathBuf>,
    },
}

impl Default for ImportModelConfig {
    fn default() -> Self {
        ImportModelConfig::Complete { p_a: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_samples: usize,
    /// Total θ across loci.
    pub theta: f64,
    pub lambda: f64,
    /// Defaults to the seven reference loci.
    pub loci: Vec<LocusConfig>,
    pub import_model: ImportModelConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { n_samples: 2000, theta: 100.0, lambda: 1.0, loci: Vec::new(), import_model: ImportModelConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Interval coverage and estimator accuracy.
    #[default]
    Coverage,
    /// Rejection rate of the variation test under a common λ.
    Type1,
    /// Rejection rate of the variation test when λ differs across loci.
    Power,
    /// Pair data drawn directly from the inference model, one pair per group.
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: Design,
    pub replicates: u64,
    /// Level at which the variation test rejects.
    pub test_level: f64,
    /// Pairs per locus for the matched design.
    pub pairs_per_locus: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { design: Design::Coverage, replicates: 100, test_level: 0.05, pairs_per_locus: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; all available cores when unset.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    pub mode: Mode,
    pub tolerances: ToleranceConfig,
    pub import: ImportConfig,
    pub analysis: AnalysisConfig,
    pub simulate: SimulateConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: None,
            mode: Mode::Strict,
            tolerances: ToleranceConfig::default(),
            import: ImportConfig::default(),
            analysis: AnalysisConfig::default(),
            simulate: SimulateConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

/// 1-based line and column of byte `offset` in `text`.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

/// Line of the first assignment to `key` (the last dotted component).
fn key_line(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(leaf).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

impl RunConfig {
    pub fn parse(path: &Path, text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            ConfigError::Parse { path: path.to_path_buf(), line, column, message: e.message().trim().to_string() }
        })?;
        cfg.validate().map_err(|(key, message)| {
            let location = match key_line(text, &key) {
                Some(line) => format!("{}:{line}", path.display()),
                None => path.display().to_string(),
            };
            ConfigError::Invalid { location, key, message }
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::parse(path, &text)
    }

    /// Checks value ranges; on failure returns the offending key and why.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let bad = |k: &str, m: &str| Err((k.to_string(), m.to_string()));
        if !(0.0..=1.0).contains(&self.import.p_a) {
            return bad("import.p_a", "must lie in [0, 1]");
        }
        if self.import.draws == 0 {
            return bad("import.draws", "must be at least 1");
        }
        if !(self.analysis.level > 0.0 && self.analysis.level < 1.0) {
            return bad("analysis.level", "must lie strictly between 0 and 1");
        }
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1");
        }
        let t = &self.tolerances;
        for (k, v) in [
            ("tolerances.lambda_max", t.lambda_max),
            ("tolerances.opt_t_tol", t.opt_t_tol),
            ("tolerances.ci_t_tol", t.ci_t_tol),
            ("tolerances.alpha_tol", t.alpha_tol),
            ("tolerances.pivot", t.pivot),
            ("tolerances.lr_clamp", t.lr_clamp),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(k, "must be positive and finite");
                }
            }
        }
        let s = &self.simulate;
        if s.n_samples < 2 {
            return bad("simulate.n_samples", "must be at least 2");
        }
        if !(s.theta >= 0.0 && s.theta.is_finite()) {
            return bad("simulate.theta", "must be finite and non-negative");
        }
        if !(s.lambda >= 0.0 && s.lambda.is_finite()) {
            return bad("simulate.lambda", "must be finite and non-negative");
        }
        for l in &s.loci {
            if l.length == 0 {
                return bad("simulate.loci.length", "must be at least 1");
            }
            if l.theta.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                return bad("simulate.loci.theta", "must be finite and non-negative");
            }
            if l.lambda.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                return bad("simulate.loci.lambda", "must be finite and non-negative");
            }
        }
        match &s.import_model {
            ImportModelConfig::Complete { p_a } if !(0.0..=1.0).contains(p_a) => return bad("simulate.import_model.p_a", "must lie in [0, 1]"),
            ImportModelConfig::Geometric { mean } if !(*mean >= 1.0 && mean.is_finite()) => return bad("simulate.import_model.mean", "must be at least 1"),
            ImportModelConfig::Empirical { pmfs, dist_files } if pmfs.is_empty() == dist_files.is_empty() => {
                return bad("simulate.import_model", "give exactly one of pmfs and dist_files")
            }
            _ => {}
        }
        let e = &self.experiment;
        if e.replicates == 0 {
            return bad("experiment.replicates", "must be at least 1");
        }
        if !(e.test_level > 0.0 && e.test_level < 1.0) {
            return bad("experiment.test_level", "must lie strictly between 0 and 1");
        }
        if e.pairs_per_locus == 0 {
            return bad("experiment.pairs_per_locus", "must be at least 1");
        }
        Ok(())
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            theta_method: self.analysis.theta_ratio.into(),
            alpha_mode: self.analysis.alpha.into(),
            level: self.analysis.level,
            import: ImportOptions { p_a: self.import.p_a, draws: self.import.draws, seed: self.seed, weighting: self.import.weighting.into() },
            build_mode: self.mode.into(),
            tolerances: self.tolerances.resolve(),
        }
    }

    /// Loci with their θ_l and λ_l resolved.
    pub fn sim_loci(&self) -> Vec<SimLocus> {
        let s = &self.simulate;
        let loci: Vec<LocusConfig> = if s.loci.is_empty() {
            REFERENCE_LOCI.iter().map(|&(name, length)| LocusConfig { name: name.into(), length, theta: None, lambda: None }).collect()
        } else {
            s.loci.clone()
        };
        let total: usize = loci.iter().map(|l| l.length).sum();
        loci.into_iter()
            .map(|l| SimLocus {
                theta: l.theta.unwrap_or(s.theta * l.length as f64 / total as f64),
                lambda: l.lambda.unwrap_or(s.lambda),
                name: l.name,
                length: l.length,
            })
            .collect()
    }

    /// Simulator configuration for seed `seed`, with empirical pmfs already
    /// loaded by the caller.
    pub fn sim_config(&self, import: ImportModel, seed: u64) -> SimConfig {
        SimConfig { n_samples: self.simulate.n_samples, loci: self.sim_loci(), import, seed, record_events: false }
    }

    /// JSON echo of the resolved configuration.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(Path::new("run.toml"), text)
    }

    #[test]
    fn defaults_and_overrides() {
        let c = parse("seed = 7\n[import]\np_a = 0.5\n[simulate]\nn_samples = 50\n[[simulate.loci]]\nname = \"a\"\nlength = 10\nlambda = 3.0\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.import.p_a, 0.5);
        assert_eq!(c.import.draws, 100_000);
        let loci = c.sim_loci();
        assert_eq!(loci.len(), 1);
        assert_eq!(loci[0].lambda, 3.0);
        assert_eq!(loci[0].theta, 100.0);
        assert_eq!(parse("").unwrap().sim_loci().len(), 7);
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let e = parse("seed = 1\n[import]\np_a = = 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 3, .. }), "{e}");
        assert!(e.to_string().starts_with("run.toml:3:"));
        let e = parse("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }), "{e}");
    }

    #[test]
    fn range_errors_name_the_line() {
        let e = parse("seed = 1\n\n[import]\np_a = 1.5\n").unwrap_err();
        assert_eq!(e.to_string(), "run.toml:4: invalid 'import.p_a': must lie in [0, 1]");
    }

    #[test]
    fn threads_are_not_echoed() {
        let c = parse("threads = 3\n").unwrap();
        assert_eq!(c.threads, Some(3));
        assert!(c.echo().get("threads").is_none());
    }
}
