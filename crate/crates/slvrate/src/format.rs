//! Output file formats.
//!
//! Every artifact carries a provenance block (tool, version, resolved config,
//! SHA-256 of each input). JSON files hold it as a `provenance` field and TSV
//! files as leading `#` lines. Floating-point values are rounded to 12
//! significant digits so output bytes do not depend on the last bits of a
//! computation; infinities are written as the string `"inf"`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use slvrate_core::import::{ImportDistribution, ImportProvenance};
use slvrate_core::joint::{JointFit, VariationTestResult};
use slvrate_core::locus::{Interval, LocusFit};
use slvrate_core::slv::{SlvError, SlvPartition};
use slvrate_core::Analysis;
use thiserror::Error;

pub const TOOL: &str = "slvrate";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Significant digits for floats in every output file.
pub const SIG_DIGITS: usize = 12;

/// Significant digits for weights in SLV tables.
pub const WEIGHT_DIGITS: usize = 10;

/// `x` rounded to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().expect("formatted float parses")
}

/// Text form used in TSV files: shortest representation of the rounded value,
/// `inf`/`-inf` for infinities and `nan` for NaN.
pub fn fmt_num(x: f64, digits: usize) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        let r = round_sig(x, digits);
        if r == 0.0 { "0".into() } else { format!("{r}") }
    }
}

/// A float serialized with [`SIG_DIGITS`] significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_nan() {
            s.serialize_none()
        } else if x.is_infinite() {
            s.serialize_str(if x > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(round_sig(x, SIG_DIGITS))
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
            Null(()),
        }
        match Raw::deserialize(d)? {
            Raw::F(v) => Ok(Num(v)),
            Raw::Null(()) => Ok(Num(f64::NAN)),
            Raw::S(s) => match s.as_str() {
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                other => other.parse().map(Num).map_err(serde::de::Error::custom),
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Slv { path: PathBuf, source: SlvError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> std::io::Result<InputDigest> {
    Ok(InputDigest { path: path.display().to_string(), sha256: sha256_hex(&std::fs::read(path)?) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(command: &str, config: serde_json::Value, inputs: Vec<InputDigest>) -> Self {
        Self { tool: TOOL.into(), version: VERSION.into(), command: command.into(), config, inputs }
    }

    /// `#` comment lines for TSV headers (without the leading `# `).
    pub fn comment_lines(&self) -> Vec<String> {
        let mut out = vec![format!("tool: {} {}", self.tool, self.version), format!("command: {}", self.command)];
        out.push(format!("config: {}", serde_json::to_string(&self.config).expect("config serializes")));
        for i in &self.inputs {
            out.push(format!("input: {} sha256={}", i.path, i.sha256));
        }
        out
    }
}

fn push_comments(s: &mut String, lines: &[String]) {
    for l in lines {
        let _ = writeln!(s, "# {l}");
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

// SLV tables

pub const SLV_HEADER: [&str; 6] = ["locus", "group_id", "st_a", "st_b", "x", "weight"];

/// SLV pairs of every locus in one table. A `# loci:` line lists all loci,
/// including those without pairs.
pub fn slv_tsv(partitions: &[SlvPartition], prov: &Provenance) -> String {
    let mut s = String::new();
    push_comments(&mut s, &prov.comment_lines());
    let names: Vec<&str> = partitions.iter().map(|p| p.locus.as_str()).collect();
    let _ = writeln!(s, "# loci: {}", names.join(","));
    s.push_str(&SLV_HEADER.join("\t"));
    s.push('\n');
    for p in partitions {
        for pair in &p.pairs {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}\t{}", p.locus, pair.group_id, pair.st_a, pair.st_b, pair.x, fmt_num(pair.weight, WEIGHT_DIGITS));
        }
    }
    s
}

/// Reads an SLV table back into partitions, one per locus in `# loci:` order
/// (or first-appearance order when that line is absent). Weights are
/// recomputed from group sizes.
pub fn parse_slv_tsv(path: &Path, text: &str) -> Result<Vec<SlvPartition>, FormatError> {
    let line_err = |line: usize, message: String| FormatError::Line { path: path.to_path_buf(), line, message };
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(u32, u32, u32, u32)>> = BTreeMap::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim_end_matches('\r');
        if l.trim().is_empty() {
            continue;
        }
        if let Some(c) = l.strip_prefix('#') {
            if let Some(list) = c.trim().strip_prefix("loci:") {
                order = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            }
            continue;
        }
        let fields: Vec<&str> = l.split('\t').collect();
        if !header_seen {
            if fields != SLV_HEADER {
                return Err(line_err(line, format!("expected header '{}'", SLV_HEADER.join("\\t"))));
            }
            header_seen = true;
            continue;
        }
        if fields.len() != SLV_HEADER.len() {
            return Err(line_err(line, format!("expected {} fields, found {}", SLV_HEADER.len(), fields.len())));
        }
        let int = |k: usize| fields[k].parse::<u32>().map_err(|_| line_err(line, format!("'{}' in column '{}' is not an integer", fields[k], SLV_HEADER[k])));
        let locus = fields[0].to_string();
        if !order.contains(&locus) {
            order.push(locus.clone());
        }
        rows.entry(locus).or_default().push((int(1)?, int(2)?, int(3)?, int(4)?));
    }
    if !header_seen {
        return Err(FormatError::File { path: path.to_path_buf(), message: "no header row".into() });
    }
    order
        .into_iter()
        .map(|locus| {
            let r = rows.remove(&locus).unwrap_or_default();
            SlvPartition::from_rows(locus, &r).map_err(|source| FormatError::Slv { path: path.to_path_buf(), source })
        })
        .collect()
}

// Import distributions

/// On-disk import distribution. The raw tallies are stored so the smoothed
/// pmf is rebuilt bit-exactly when read back; `q` is for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportDistFile {
    pub provenance: Provenance,
    pub locus: String,
    pub m: usize,
    pub p_a: Num,
    pub draws: u64,
    pub seed: u64,
    pub units: usize,
    /// Mean pairwise difference between STs at the locus.
    pub mean_pairwise: Num,
    /// Tallies for x = 0..=m.
    pub counts: Vec<u64>,
    /// Smoothed q(x) for x = 1..=m.
    pub q: Vec<Num>,
}

impl ImportDistFile {
    pub fn new(dist: &ImportDistribution, counts: Vec<u64>, mean_pairwise: f64, provenance: Provenance) -> Self {
        let p = dist.provenance.expect("estimated distributions carry provenance");
        Self {
            provenance,
            locus: dist.locus.clone(),
            m: dist.m,
            p_a: Num(p.p_a),
            draws: p.draws,
            seed: p.seed,
            units: p.units,
            mean_pairwise: Num(mean_pairwise),
            counts,
            q: dist.pmf().iter().map(|&v| Num(v)).collect(),
        }
    }

    pub fn distribution(&self) -> Result<ImportDistribution, slvrate_core::import::ImportError> {
        let prov = ImportProvenance { p_a: self.p_a.0, draws: self.draws, seed: self.seed, units: self.units };
        if self.counts.len() != self.m + 1 || self.counts.iter().sum::<u64>() != self.draws {
            return Err(slvrate_core::import::ImportError::InvalidDistribution("counts do not match m and draws"));
        }
        ImportDistribution::from_counts(self.locus.clone(), &self.counts, Some(prov))
    }
}

/// Reads an import-distribution file and digests it.
pub fn read_import_dist(path: &Path) -> Result<(ImportDistFile, InputDigest), FormatError> {
    let bytes = std::fs::read(path).map_err(|source| FormatError::Read { path: path.to_path_buf(), source })?;
    let file: ImportDistFile = serde_json::from_slice(&bytes).map_err(|e| FormatError::Line { path: path.to_path_buf(), line: e.line(), message: e.to_string() })?;
    Ok((file, InputDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) }))
}

// Fit results

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalOut {
    pub lower: Num,
    pub upper: Num,
}

impl From<&Interval> for IntervalOut {
    fn from(i: &Interval) -> Self {
        Self { lower: Num(i.lower), upper: Num(i.upper) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocusFitOut {
    pub locus: String,
    pub lambda_hat: Num,
    pub ci: IntervalOut,
    pub cl_max: Num,
    pub alpha: Num,
    pub alpha_local: Option<Num>,
    pub sigma2: Num,
    pub i: Num,
    pub j: Num,
    pub gamma: Num,
    pub n_pairs: usize,
    pub groups: usize,
    pub at_lower: bool,
    pub at_upper: bool,
}

impl From<&LocusFit> for LocusFitOut {
    fn from(f: &LocusFit) -> Self {
        Self {
            locus: f.locus.clone(),
            lambda_hat: Num(f.lambda_hat),
            ci: (&f.ci).into(),
            cl_max: Num(f.cl_max),
            alpha: Num(f.alpha),
            alpha_local: f.alpha_local.map(Num),
            sigma2: Num(f.sigma2),
            i: Num(f.i),
            j: Num(f.j),
            gamma: Num(f.gamma),
            n_pairs: f.n_pairs,
            groups: f.groups,
            at_lower: f.at_lower,
            at_upper: f.at_upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointFitOut {
    pub lambda_hat: Num,
    pub ci: IntervalOut,
    pub cl_max: Num,
    pub gamma: Num,
    pub at_lower: bool,
    pub at_upper: bool,
    pub loci: Vec<String>,
}

impl From<&JointFit> for JointFitOut {
    fn from(j: &JointFit) -> Self {
        Self {
            lambda_hat: Num(j.lambda_hat),
            ci: (&j.ci).into(),
            cl_max: Num(j.cl_max),
            gamma: Num(j.gamma),
            at_lower: j.at_lower,
            at_upper: j.at_upper,
            loci: j.loci.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationOut {
    pub lr_star: Num,
    pub nu1: Num,
    pub lr: Num,
    pub df: u32,
    pub p_value: Num,
    pub eta: Vec<Num>,
}

impl From<&VariationTestResult> for VariationOut {
    fn from(v: &VariationTestResult) -> Self {
        Self {
            lr_star: Num(v.lr_star),
            nu1: Num(v.nu1),
            lr: Num(v.lr),
            df: v.df,
            p_value: Num(v.p_value),
            eta: v.eta.iter().map(|&e| Num(e)).collect(),
        }
    }
}

/// Result file for `estimate`, `joint` and `test-variation`; the latter two
/// fill in the optional parts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisOut {
    pub provenance: Provenance,
    pub common_alpha: Num,
    pub alpha_identifiable: bool,
    pub loci: Vec<LocusFitOut>,
    /// Loci without SLV pairs.
    pub excluded: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointFitOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variation: Option<VariationOut>,
}

impl AnalysisOut {
    pub fn loci_only(a: &Analysis, provenance: Provenance) -> Self {
        Self {
            provenance,
            common_alpha: Num(a.common_alpha),
            alpha_identifiable: a.alpha_identifiable,
            loci: a.fitted().map(LocusFitOut::from).collect(),
            excluded: a.excluded.clone(),
            joint: None,
            variation: None,
        }
    }
}

/// Forest-plot table: one row per locus and a final `joint` row.
pub fn forest_tsv(a: &Analysis, joint: &JointFit, prov: &Provenance) -> String {
    let mut s = String::new();
    push_comments(&mut s, &prov.comment_lines());
    s.push_str("label\tlambda_hat\tci_lower\tci_upper\tn_pairs\n");
    for f in a.fitted() {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", f.locus, fmt_num(f.lambda_hat, SIG_DIGITS), fmt_num(f.ci.lower, SIG_DIGITS), fmt_num(f.ci.upper, SIG_DIGITS), f.n_pairs);
    }
    let total: usize = a.fitted().map(|f| f.n_pairs).sum();
    let _ = writeln!(s, "joint\t{}\t{}\t{}\t{}", fmt_num(joint.lambda_hat, SIG_DIGITS), fmt_num(joint.ci.lower, SIG_DIGITS), fmt_num(joint.ci.upper, SIG_DIGITS), total);
    s
}

/// Generic TSV with provenance comments.
pub fn tsv(prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    push_comments(&mut s, &prov.comment_lines());
    s.push_str(&header.join("\t"));
    s.push('\n');
    for r in rows {
        s.push_str(&r.join("\t"));
        s.push('\n');
    }
    s
}
