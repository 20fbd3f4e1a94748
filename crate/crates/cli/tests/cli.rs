use std::path::Path;
use std::process::{Command, Output};

fn prsbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prsbias")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Named column of the single data row of a tab-separated table on stdout.
fn field(o: &Output, name: &str) -> String {
    let text = stdout(o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let row: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let k = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    row[k].to_string()
}

fn value(o: &Output, name: &str) -> f64 {
    field(o, name).parse().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn partial_r2_correction_matches_worked_example() {
    let o = prsbias(&["correct", "--r2", "0.001974", "--n1", "55374", "--p", "129052", "--h2a", "0.100", "--h2e", "0.660", "--case", "ae"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let corrected = value(&o, "corrected_r2");
    assert!((corrected - 0.0727).abs() < 0.0005, "corrected R2 {corrected}");
}

#[test]
fn zero_raw_stays_zero() {
    let o = prsbias(&["correct", "--raw", "0", "--n1", "10000", "--n2", "10000", "--p", "10000", "--h2a", "1", "--h2b", "1", "--case", "ab"]);
    assert!(o.status.success());
    assert_eq!(value(&o, "corrected"), 0.0);
}

#[test]
fn two_score_correction_doubles_at_equal_sizes() {
    let o = prsbias(&[
        "correct", "--raw", "0.45", "--n1", "10000", "--n2", "10000", "--n3", "10000", "--p", "10000", "--h2a", "1", "--h2b", "1",
        "--case", "ab",
    ]);
    assert!(o.status.success());
    assert!((value(&o, "corrected") - 0.90).abs() < 1e-12);
    assert!((value(&o, "factor") - 0.5).abs() < 1e-12);
    assert_eq!(field(&o, "regime"), "consistent_regime");
}

#[test]
fn missing_parameters_are_a_usage_error() {
    let o = prsbias(&["correct", "--raw", "0.45", "--n1", "10000", "--p", "10000", "--case", "ab"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("n2") && err.contains("h2_alpha") && err.contains("h2_beta"), "{err}");
}

#[test]
fn unknown_subcommand_and_bad_case_are_usage_errors() {
    assert_eq!(prsbias(&["frobnicate"]).status.code(), Some(2));
    let o = prsbias(&["correct", "--raw", "0.1", "--p", "10", "--case", "vi"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn strict_mode_refuses_degenerate_designs() {
    let base = ["correct", "--raw", "0.3", "--n1", "50", "--n3", "50", "--p", "50000", "--h2a", "1", "--h2e", "1", "--case", "ae"];
    let o = prsbias(&base);
    assert!(o.status.success());
    assert_eq!(field(&o, "regime"), "degenerate_regime");
    let mut strict = base.to_vec();
    strict.push("--strict");
    assert_eq!(prsbias(&strict).status.code(), Some(4));
}

#[test]
fn missing_input_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = prsbias(&["gwas", "--genotypes", "/nonexistent/g.bin", "--phenotype", "/nonexistent/y.tsv", "--out", arg(&dir.path().join("s.tsv"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn file_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (disc, target) = (d.join("disc.bin"), d.join("target.tsv"));
    assert!(prsbias(&["gen-genotypes", "--n", "200", "--p", "60", "--seed", "5", "--out", arg(&disc)]).status.success());
    assert!(prsbias(&["gen-genotypes", "--n", "150", "--p", "60", "--seed", "6", "--out", arg(&target), "--tsv"]).status.success());
    assert!(d.join("disc.bin.manifest.txt").exists());

    let phenotype = |n: usize, shift: usize| -> String {
        let mut s = String::from("sample_id\tvalue\n");
        for i in 0..n {
            s.push_str(&format!("s{i}\t{}\n", ((i * 7 + shift) % 13) as f64 - 6.0));
        }
        s
    };
    let (y, e) = (d.join("y.tsv"), d.join("e.tsv"));
    std::fs::write(&y, phenotype(200, 0)).unwrap();
    std::fs::write(&e, phenotype(150, 3)).unwrap();

    let summary = d.join("summary.tsv");
    let o = prsbias(&["gwas", "--genotypes", arg(&disc), "--phenotype", arg(&y), "--out", arg(&summary)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(d.join("summary.tsv.manifest.txt")).unwrap();
    assert!(manifest.contains("sha256:"));

    let scores = d.join("scores.tsv");
    let o = prsbias(&["score", "--genotypes", arg(&target), "--summary", arg(&summary), "--out", arg(&scores), "--pvalue", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&scores).unwrap().lines().count(), 151);

    let o = prsbias(&[
        "estimate", "--left", arg(&e), "--right", arg(&scores), "--case", "ae", "--n1", "200", "--n3", "150", "--p", "60", "--h2a", "0.5",
        "--h2e", "0.5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let raw = value(&o, "raw");
    assert!(raw.abs() <= 1.0);
    assert!((value(&o, "corrected") - raw / value(&o, "factor")).abs() < 1e-12);

    let o = prsbias(&[
        "estimate", "--left", arg(&summary), "--right", arg(&summary), "--case", "summary-ab", "--n1", "200", "--n2", "200", "--p", "60",
        "--h2a", "1", "--h2b", "1",
    ]);
    assert!(o.status.success());
    assert!((value(&o, "raw") - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_writes_tables_and_respects_workers() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.txt");
    std::fs::write(
        &config,
        "scenario = fig2_all_snp\nn1 = 200\nn2 = 200\nn3 = 200\np = 150\nm = 30\nphi = 0.5\nreplicates = 3\nmaster_seed = 9\n",
    )
    .unwrap();
    let mut tables = Vec::new();
    for workers in ["1", "2"] {
        let out = dir.path().join(format!("out{workers}"));
        let o = prsbias(&["--workers", workers, "simulate", arg(&config), "--output", arg(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for name in ["replicates.tsv", "aggregate.tsv", "failures.tsv", "config.txt", "manifest.txt"] {
            assert!(out.join(name).exists(), "missing {name}");
        }
        tables.push(std::fs::read(out.join("replicates.tsv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn simulate_reports_bad_config_lines() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.txt");
    std::fs::write(&config, "scenario = fig2_all_snp\nreplicates = many\n").unwrap();
    let o = prsbias(&["simulate", arg(&config)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn moments_subcommand_reports_a_z_score() {
    let o = prsbias(&["moments", "--tag", "cov_ae_num", "--n1", "100", "--n3", "100", "--p", "200", "--m", "40", "--replicates", "60"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(value(&o, "z").abs() < 4.0);
}
