//! Profile tables and allele FASTA files.
//!
//! Profiles are tab-separated with a header row: one ST column, one column per
//! locus and any number of ignored columns. Allele files are FASTA, one file
//! per locus, with headers `>{locus}_{allele_id}` or `>{allele_id}`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use slvrate_core::dataset::{build_dataset, AlleleSequence, BuildMode, BuildSummary, DatasetError, MlstDataset, StProfile};
use thiserror::Error;

/// Columns that are never loci.
pub const NON_LOCUS_COLUMNS: [&str; 4] = ["clonal_complex", "species", "isolate_count", "count"];

/// Column holding the optional number of isolates per ST.
pub const COUNT_COLUMN: &str = "isolate_count";

/// File extensions tried, in order, for a locus's allele file.
pub const FASTA_EXTENSIONS: [&str; 4] = ["fasta", "fa", "fas", "tfa"];

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: empty file")]
    EmptyFile { path: PathBuf },
    #[error("{path}:{line}: missing column '{column}'")]
    MissingColumn { path: PathBuf, line: usize, column: String },
    #[error("{path}:{line}: duplicate ST '{token}'")]
    DuplicateSt { path: PathBuf, line: usize, token: String },
    #[error("{path}:{line}: '{token}' in column '{column}' is not a positive integer")]
    NonInteger { path: PathBuf, line: usize, column: String, token: String },
    #[error("{path}:{line}: expected {expected} fields, found {found}")]
    RowWidth { path: PathBuf, line: usize, expected: usize, found: usize },
    #[error("{path}:{line}: malformed header '{token}'")]
    MalformedHeader { path: PathBuf, line: usize, token: String },
    #[error("{path}:{line}: duplicate allele '{token}'")]
    DuplicateAllele { path: PathBuf, line: usize, token: String },
    #[error("{path}:{line}: allele '{token}' has an empty sequence")]
    EmptySequence { path: PathBuf, line: usize, token: String },
    #[error("{path}:{line}: sequence data before the first header")]
    OrphanSequence { path: PathBuf, line: usize },
    #[error("no allele file for locus '{locus}' in {dir} (tried {tried})")]
    MissingAlleleFile { locus: String, dir: PathBuf, tried: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl ParseError {
    /// Whether the error is about locating or reading a file rather than its
    /// contents.
    pub fn is_missing_input(&self) -> bool {
        matches!(self, ParseError::Read { .. } | ParseError::MissingAlleleFile { .. })
    }
}

pub fn read_text(path: &Path) -> Result<String, ParseError> {
    fs::read_to_string(path).map_err(|source| ParseError::Read { path: path.to_path_buf(), source })
}

/// Data lines of a TSV, skipping blank lines and `#` comments, with 1-based
/// line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn positive_int(path: &Path, line: usize, column: &str, token: &str) -> Result<u32, ParseError> {
    match token.trim().parse::<u32>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(ParseError::NonInteger { path: path.to_path_buf(), line, column: column.to_string(), token: token.to_string() }),
    }
}

/// Parsed profile table: locus names in column order and one profile per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub loci: Vec<String>,
    pub profiles: Vec<StProfile>,
}

/// Parses a profile TSV. With `locus_columns` empty, every column other than
/// `st_column` and [`NON_LOCUS_COLUMNS`] is a locus.
pub fn parse_profiles_str(path: &Path, text: &str, st_column: &str, locus_columns: &[String]) -> Result<ProfileTable, ParseError> {
    let mut lines = data_lines(text);
    let (header_line, header) = lines.next().ok_or_else(|| ParseError::EmptyFile { path: path.to_path_buf() })?;
    let columns: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name: &str| {
        columns.iter().position(|c| *c == name).ok_or_else(|| ParseError::MissingColumn {
            path: path.to_path_buf(),
            line: header_line,
            column: name.to_string(),
        })
    };
    let st_index = find(st_column)?;
    let count_index = columns.iter().position(|c| *c == COUNT_COLUMN);
    let locus_indices: Vec<usize> = if locus_columns.is_empty() {
        (0..columns.len()).filter(|&i| i != st_index && !NON_LOCUS_COLUMNS.contains(&columns[i])).collect()
    } else {
        locus_columns.iter().map(|c| find(c)).collect::<Result<_, _>>()?
    };
    let loci: Vec<String> = locus_indices.iter().map(|&i| columns[i].to_string()).collect();

    let mut seen = BTreeSet::new();
    let mut profiles = Vec::new();
    for (line, row) in lines {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(ParseError::RowWidth { path: path.to_path_buf(), line, expected: columns.len(), found: fields.len() });
        }
        let st = positive_int(path, line, st_column, fields[st_index])?;
        if !seen.insert(st) {
            return Err(ParseError::DuplicateSt { path: path.to_path_buf(), line, token: fields[st_index].to_string() });
        }
        let alleles = locus_indices
            .iter()
            .map(|&i| positive_int(path, line, columns[i], fields[i]))
            .collect::<Result<Vec<_>, _>>()?;
        let mut profile = StProfile::new(st, alleles);
        if let Some(ci) = count_index {
            profile.isolate_count = Some(positive_int(path, line, COUNT_COLUMN, fields[ci])?);
        }
        profiles.push(profile);
    }
    if profiles.is_empty() {
        return Err(ParseError::EmptyFile { path: path.to_path_buf() });
    }
    Ok(ProfileTable { loci, profiles })
}

pub fn parse_profiles(path: &Path, st_column: &str, locus_columns: &[String]) -> Result<ProfileTable, ParseError> {
    parse_profiles_str(path, &read_text(path)?, st_column, locus_columns)
}

/// Allele id from a FASTA header token: the trailing integer after the last
/// `_` or `-`, or the whole token.
fn header_allele_id(token: &str) -> Option<u32> {
    let tail = token.rsplit(['_', '-']).next().unwrap_or(token);
    tail.parse::<u32>().ok().filter(|&v| v > 0)
}

/// Parses allele FASTA text. Sequences are uppercased and multi-line records
/// concatenated.
pub fn parse_allele_fasta_str(path: &Path, text: &str, locus: &str) -> Result<Vec<AlleleSequence>, ParseError> {
    let mut out: Vec<AlleleSequence> = Vec::new();
    let mut ids = BTreeSet::new();
    let mut current: Option<(usize, String, u32, String)> = None;
    let close = |rec: Option<(usize, String, u32, String)>, out: &mut Vec<AlleleSequence>| -> Result<(), ParseError> {
        if let Some((line, token, id, seq)) = rec {
            if seq.is_empty() {
                return Err(ParseError::EmptySequence { path: path.to_path_buf(), line, token });
            }
            out.push(AlleleSequence::new(locus, id, seq));
        }
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with(';') {
            continue;
        }
        if let Some(header) = l.strip_prefix('>') {
            let token = header.split_whitespace().next().unwrap_or("").to_string();
            let id = header_allele_id(&token).ok_or_else(|| ParseError::MalformedHeader { path: path.to_path_buf(), line, token: token.clone() })?;
            if !ids.insert(id) {
                return Err(ParseError::DuplicateAllele { path: path.to_path_buf(), line, token });
            }
            close(current.take(), &mut out)?;
            current = Some((line, token, id, String::new()));
        } else {
            match current.as_mut() {
                Some((_, _, _, seq)) => seq.extend(l.chars().filter(|c| !c.is_whitespace()).map(|c| c.to_ascii_uppercase())),
                None => return Err(ParseError::OrphanSequence { path: path.to_path_buf(), line }),
            }
        }
    }
    close(current.take(), &mut out)?;
    if out.is_empty() {
        return Err(ParseError::EmptyFile { path: path.to_path_buf() });
    }
    Ok(out)
}

pub fn parse_allele_fasta(path: &Path, locus: &str) -> Result<Vec<AlleleSequence>, ParseError> {
    parse_allele_fasta_str(path, &read_text(path)?, locus)
}

/// The allele file for `locus` in `dir`.
pub fn allele_file(dir: &Path, locus: &str) -> Result<PathBuf, ParseError> {
    FASTA_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{locus}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| ParseError::MissingAlleleFile {
            locus: locus.to_string(),
            dir: dir.to_path_buf(),
            tried: FASTA_EXTENSIONS.map(|e| format!("{locus}.{e}")).join(", "),
        })
}

/// A dataset together with the files it was read from.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: MlstDataset,
    pub summary: BuildSummary,
    pub files: Vec<PathBuf>,
}

/// Reads a profile table and one allele file per locus from `alleles_dir`.
pub fn load_dataset(profiles: &Path, alleles_dir: &Path, st_column: &str, locus_columns: &[String], mode: BuildMode) -> Result<LoadedDataset, ParseError> {
    let table = parse_profiles(profiles, st_column, locus_columns)?;
    let mut files = vec![profiles.to_path_buf()];
    let mut alleles = Vec::with_capacity(table.loci.len());
    for locus in &table.loci {
        let path = allele_file(alleles_dir, locus)?;
        alleles.push(parse_allele_fasta(&path, locus)?);
        files.push(path);
    }
    let (dataset, summary) = build_dataset(&table.loci, table.profiles, alleles, mode)?;
    Ok(LoadedDataset { dataset, summary, files })
}

/// Profile TSV for a dataset; includes the isolate-count column when any ST
/// carries one.
pub fn profiles_tsv(dataset: &MlstDataset, comments: &[String]) -> String {
    let with_counts = dataset.profiles().iter().any(|p| p.isolate_count.is_some());
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {c}");
    }
    s.push_str("ST");
    for l in dataset.loci() {
        s.push('\t');
        s.push_str(&l.name);
    }
    if with_counts {
        s.push('\t');
        s.push_str(COUNT_COLUMN);
    }
    s.push('\n');
    for p in dataset.profiles() {
        let _ = write!(s, "{}", p.st_id);
        for a in &p.alleles {
            let _ = write!(s, "\t{a}");
        }
        if with_counts {
            let _ = write!(s, "\t{}", p.count());
        }
        s.push('\n');
    }
    s
}

/// FASTA for every allele of locus `l`, 60 bases per line.
pub fn alleles_fasta(dataset: &MlstDataset, l: usize) -> String {
    let name = &dataset.loci()[l].name;
    let mut s = String::new();
    for a in dataset.alleles(l) {
        let _ = writeln!(s, ">{name}_{}", a.allele_id);
        for chunk in a.sequence.as_bytes().chunks(60) {
            s.push_str(std::str::from_utf8(chunk).expect("ASCII sequence"));
            s.push('\n');
        }
    }
    s
}

/// Writes a dataset as `profiles.tsv` plus `{locus}.fasta` files in `dir`.
pub fn write_dataset(dataset: &MlstDataset, dir: &Path, comments: &[String]) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let p = dir.join("profiles.tsv");
    fs::write(&p, profiles_tsv(dataset, comments))?;
    written.push(p);
    for (l, meta) in dataset.loci().iter().enumerate() {
        let p = dir.join(format!("{}.fasta", meta.name));
        fs::write(&p, alleles_fasta(dataset, l))?;
        written.push(p);
    }
    Ok(written)
}
