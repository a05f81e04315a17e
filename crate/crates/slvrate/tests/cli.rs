use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slvrate::config::RunConfig;
use slvrate::io::{load_dataset, write_dataset};
use slvrate_core::dataset::BuildMode;
use tempfile::TempDir;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn toy() -> PathBuf {
    repo_root().join("data/toy")
}

fn slvrate<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slvrate")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = slvrate(args);
    assert!(out.status.success(), "slvrate {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

/// Small simulated dataset with its SLV table and import distributions.
struct Pipeline {
    dir: TempDir,
    config: String,
}

impl Pipeline {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("run.toml");
        std::fs::write(&config, "seed = 5\n[simulate]\nn_samples = 500\n[import]\ndraws = 100000\n").unwrap();
        let p = Pipeline { dir, config: s(&config) };
        ok(&["--config", &p.config, "simulate", "--out", &p.path("sim")]);
        ok(&["--config", &p.config, "extract", "--profiles", &p.path("sim/profiles.tsv"), "--alleles", &p.path("sim"), "--out", &p.path("slv.tsv")]);
        ok(&["--config", &p.config, "import-dist", "--profiles", &p.path("sim/profiles.tsv"), "--alleles", &p.path("sim"), "--out", &p.path("dist")]);
        p
    }

    fn path(&self, rel: &str) -> String {
        s(&self.dir.path().join(rel))
    }

    fn dists(&self) -> Vec<String> {
        let mut v: Vec<String> = std::fs::read_dir(self.dir.path().join("dist")).unwrap().map(|e| s(&e.unwrap().path())).collect();
        v.sort();
        v
    }

    fn fit(&self, command: &str, out: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec!["--config".into(), self.config.clone(), command.into(), "--slv".into(), self.path("slv.tsv")];
        args.extend(["--out".into(), self.path(out)]);
        args.extend(extra.iter().map(|a| a.to_string()));
        args.push("--dist".into());
        args.extend(self.dists());
        slvrate(&args)
    }

    fn json(&self, rel: &str) -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(self.dir.path().join(rel)).unwrap()).unwrap()
    }
}

#[test]
fn full_pipeline_produces_consistent_outputs() {
    let p = Pipeline::new();
    assert_eq!(p.dists().len(), 7);

    let sim = p.json("sim/simulation.json");
    assert_eq!(sim["provenance"]["config"]["seed"], 5);

    let out = p.fit("estimate", "estimate.json", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let est = p.json("estimate.json");
    let loci = est["loci"].as_array().unwrap();
    assert_eq!(loci.len(), 7);
    assert_eq!(est["provenance"]["config"]["seed"], 5);
    // Every input file is recorded with its digest.
    assert_eq!(est["provenance"]["inputs"].as_array().unwrap().len(), 8);

    let out = p.fit("test-variation", "variation.json", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = p.json("variation.json");
    let pv = v["variation"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pv));
    let forest = std::fs::read_to_string(p.dir.path().join("variation.forest.tsv")).unwrap();
    let rows: Vec<&str> = forest.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "label\tlambda_hat\tci_lower\tci_upper\tn_pairs");
    assert_eq!(rows.last().unwrap().split('\t').next(), Some("joint"));

    let out = p.fit("joint", "joint.json", &["--theta-ratio", "pairwise", "--alpha", "per-locus"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let j = p.json("joint.json");
    assert!(j["joint"]["lambda_hat"].as_f64().unwrap() > 0.0);
    assert_eq!(j["provenance"]["config"]["analysis"]["theta_ratio"], "pairwise");
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let p = Pipeline::new();
    let run = |threads: &str, out: &str| {
        let args = ["--threads", threads, "--config", &p.config, "import-dist", "--profiles", &p.path("sim/profiles.tsv"), "--alleles", &p.path("sim"), "--out", &p.path(out)];
        ok(&args);
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(p.dir.path().join(out))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let original: Vec<(String, Vec<u8>)> = p.dists().iter().map(|f| (Path::new(f).file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(f).unwrap())).collect();
    assert_eq!(run("1", "d1"), original);
    assert_eq!(run("2", "d2"), original);

    p.fit("estimate", "a.json", &[]);
    p.fit("estimate", "b.json", &[]);
    assert_eq!(std::fs::read(p.path("a.json")).unwrap(), std::fs::read(p.path("b.json")).unwrap());
}

#[test]
fn toy_extract_writes_the_four_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("slv.tsv");
    ok(&["extract", "--profiles", &s(&toy().join("profiles.tsv")), "--alleles", &s(&toy()), "--out", &s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "locus\tgroup_id\tst_a\tst_b\tx\tweight");
    let body: Vec<Vec<&str>> = rows[1..].iter().map(|r| r.split('\t').collect()).collect();
    assert_eq!(body.len(), 4);
    let key: Vec<(&str, &str, &str, &str)> = body.iter().map(|r| (r[0], r[2], r[3], r[4])).collect();
    assert_eq!(key, [("locus2", "2", "3", "1"), ("locus3", "4", "5", "5"), ("locus3", "4", "6", "6"), ("locus3", "5", "6", "1")]);
    assert_eq!(body[0][5], "1");
    assert_eq!(body[1][5], "0.5773502692");
    assert!(text.contains("# loci: locus1,locus2,locus3"));
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = slvrate(&["extract", "--profiles", "/nonexistent/profiles.tsv", "--alleles", &s(&toy()), "--out", &s(&dir.path().join("x.tsv"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("/nonexistent/profiles.tsv"));
}

#[test]
fn out_of_range_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = slvrate(&["import-dist", "--profiles", &s(&toy().join("profiles.tsv")), "--alleles", &s(&toy()), "--pa", "1.5", "--out", &s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("p_a"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&slvrate(&["estimate", "--bogus"])), 1);
    assert_eq!(code(&slvrate(&["--help"])), 0);
}

#[test]
fn malformed_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 3\n\n[import]\np_a = 2.0\n").unwrap();
    let out = slvrate(&["--config", &s(&cfg), "simulate", "--out", &s(&dir.path().join("sim"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bad.toml:4"), "{}", stderr(&out));

    std::fs::write(&cfg, "seed = 3\n[simulate]\nn_samples = \"many\"\n").unwrap();
    let out = slvrate(&["--config", &s(&cfg), "simulate", "--out", &s(&dir.path().join("sim"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bad.toml:3"), "{}", stderr(&out));
}

#[test]
fn joint_with_one_locus_with_pairs_is_a_data_error() {
    let p = Pipeline::new();
    let text = std::fs::read_to_string(p.path("slv.tsv")).unwrap();
    let keep = text.lines().find(|l| !l.starts_with('#') && !l.starts_with("locus\t")).unwrap().split('\t').next().unwrap().to_string();
    let kept: String = text
        .lines()
        .filter(|l| l.starts_with('#') || l.starts_with("locus\t") || l.starts_with(&format!("{keep}\t")))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(p.path("slv.tsv"), kept).unwrap();
    let out = p.fit("joint", "j.json", &[]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("joint"), "{}", stderr(&out));
    let out = p.fit("estimate", "e.json", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(p.json("e.json")["excluded"].as_array().unwrap().len(), 6);
}

#[test]
fn invalid_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let profiles = dir.path().join("profiles.tsv");
    std::fs::write(&profiles, "ST\tlocus1\tlocus2\tlocus3\n1\t1\tx\t1\n").unwrap();
    let out = slvrate(&["extract", "--profiles", &s(&profiles), "--alleles", &s(&toy()), "--out", &s(&dir.path().join("o.tsv"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("profiles.tsv:2"), "{}", stderr(&out));

    std::fs::write(&profiles, "").unwrap();
    let out = slvrate(&["extract", "--profiles", &s(&profiles), "--alleles", &s(&toy()), "--out", &s(&dir.path().join("o.tsv"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulated_dataset_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = load_dataset(&toy().join("profiles.tsv"), &toy(), "ST", &[], BuildMode::Strict).unwrap();
    write_dataset(&loaded.dataset, dir.path(), &[]).unwrap();
    let again = load_dataset(&dir.path().join("profiles.tsv"), dir.path(), "ST", &[], BuildMode::Strict).unwrap();
    assert_eq!(again.dataset, loaded.dataset);
}

#[test]
fn example_configs_are_valid() {
    let dir = repo_root().join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{e}"));
        cfg.validate().unwrap_or_else(|(k, m)| panic!("{}: {k}: {m}", path.display()));
        n += 1;
    }
    assert!(n >= 5);
}
