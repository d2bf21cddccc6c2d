use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coordgen::dist::io::read_pmf;
use coordgen::dist::{entropy, mutual_info};
use coordgen::rng::derive_seed;
use coordgen::softcover::{expected_tv_estimate, replicate_tv, SoftcoverSpec};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coordgen"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn value(csv: &str, quantity: &str) -> f64 {
    rows(csv)
        .into_iter()
        .find(|r| r[0] == quantity)
        .unwrap_or_else(|| panic!("no row {quantity}"))[1]
        .parse()
        .unwrap()
}

const UNIFORM_PAIR: &str =
    r#"{"variables":[{"name":"X","alphabet":[0,1]},{"name":"Y","alphabet":[0,1]}],"probs":[0.25,0.25,0.25,0.25]}"#;
const EQUAL_PAIR: &str =
    r#"{"variables":[{"name":"X","alphabet":[0,1]},{"name":"Y","alphabet":[0,1]}],"probs":[0.5,0,0,0.5]}"#;

#[test]
fn info_on_small_pairs() {
    let dir = TempDir::new().unwrap();
    let o = run(&["info", "--pmf", write(&dir, "u.json", UNIFORM_PAIR).to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(value(&s, "H(X)"), 1.0);
    assert_eq!(value(&s, "H(Y)"), 1.0);
    assert_eq!(value(&s, "I(X;Y)"), 0.0);

    let o = run(&["info", "--pmf", write(&dir, "e.json", EQUAL_PAIR).to_str().unwrap()]);
    assert_eq!(value(&stdout(&o), "I(X;Y)"), 1.0);
}

#[test]
fn info_on_shipped_demand_matches_library() {
    let o = run(&["info", "--config", data("info.config.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    let q = read_pmf(data("demand4.json")).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    for v in ["X1", "X2", "Y1", "Y2"] {
        assert!(close(value(&s, &format!("H({v})")), entropy(&q, &[v], &[]).unwrap()));
    }
    let yc = mutual_info(&q, &["Y1"], &["Y2"], &["X1", "X2"]).unwrap();
    assert!(close(value(&s, "I(Y1;Y2|X1X2)"), yc));
    assert!(close(value(&s, "markov Y1|X1,X2|Y2"), yc));
    assert!(value(&s, "markov Y1|X1|X2").abs() < 1e-12);
}

#[test]
fn malformed_pmf_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", r#"{"variables":[{"name":"X","alphabet":[0,1]}],"probs":[0.5]}"#);
    let o = run(&["info", "--pmf", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("probs"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["softcover"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    // No seed anywhere.
    let dir = TempDir::new().unwrap();
    std::fs::copy(data("copy_bit.json"), dir.path().join("copy_bit.json")).unwrap();
    let cfg = write(&dir, "c.json", r#"{"pmf":"copy_bit.json","layers":["F"],"v_vars":["V"],"rates":[[1.0]],"n":[2],"replicates":2}"#);
    assert_eq!(run(&["softcover", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn missing_pmf_reference_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"pmf":"nope.json","layers":["F"],"v_vars":["V"],"rates":[],"n":[],"replicates":1,"seed":1}"#);
    let o = run(&["softcover", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pmf"));
}

fn softcover_config(dir: &TempDir, rates: &str, n: &str) -> PathBuf {
    std::fs::copy(data("copy_bit.json"), dir.path().join("copy_bit.json")).unwrap();
    let text = format!(
        r#"{{"pmf":"copy_bit.json","layers":["F"],"v_vars":["V"],"rates":{rates},"n":{n},"replicates":10,"seed":9}}"#
    );
    write(dir, "c.json", &text)
}

#[test]
fn softcover_empty_grid_is_header_only() {
    let dir = TempDir::new().unwrap();
    let cfg = softcover_config(&dir, "[]", "[2,4]");
    let o = run(&["softcover", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn softcover_single_cell_matches_library() {
    let dir = TempDir::new().unwrap();
    let cfg = softcover_config(&dir, "[[1.25]]", "[4]");
    let o = run(&["softcover", "--config", cfg.to_str().unwrap(), "--seed", "13"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 2);
    let base = read_pmf(data("copy_bit.json")).unwrap();
    let spec = SoftcoverSpec::new(&base, &["F"], &["V"], &[], &[1.25], 4).unwrap();
    let rec = expected_tv_estimate(&spec, 10, 13).unwrap();
    assert_eq!(r[1][4].parse::<f64>().unwrap(), rec.mean_tv);
    assert_eq!(r[1][6], "13");
}

#[test]
fn threshold_demo_is_monotone() {
    let o = run(&["softcover", "--config", data("threshold_demo.config.json").to_str().unwrap()]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    let tv: Vec<f64> = r[1..].iter().map(|row| row[4].parse().unwrap()).collect();
    assert!(tv[..4].windows(2).all(|w| w[1] < w[0]), "{tv:?}");
    assert!(tv[7] >= 2.0 * tv[3]);
}

#[test]
fn resource_cap_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = softcover_config(&dir, "[[1.5]]", "[40]");
    assert_eq!(run(&["softcover", "--config", cfg.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn rate_below_conditional_entropy_exits_four() {
    let dir = TempDir::new().unwrap();
    std::fs::copy(data("dsbs.json"), dir.path().join("dsbs.json")).unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"pmf":"dsbs.json","scheme":"exchange","x1":"X1","x2":"X2","exchange_rates":[0.3,0.3],"n":[8],"trials":10,"seed":1}"#,
    );
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn exchange_above_alphabet_rate_has_no_errors() {
    let dir = TempDir::new().unwrap();
    std::fs::copy(data("dsbs.json"), dir.path().join("dsbs.json")).unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"pmf":"dsbs.json","scheme":"exchange","x1":"X1","x2":"X2","exchange_rates":[1.05,1.05],"n":[4,16],"trials":100,"seed":1}"#,
    );
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    for row in &rows(&stdout(&o))[1..] {
        assert_eq!(row[5], "0.0");
        assert_eq!(row[4], "2");
    }
}

#[test]
fn softcover_scheme_matches_softcover_module() {
    let o = run(&["simulate", "--config", data("softcover_protocol.config.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let base = read_pmf(data("layered.json")).unwrap();
    for row in &rows(&stdout(&o))[1..] {
        let n: usize = row[1].parse().unwrap();
        let spec = SoftcoverSpec::new(&base, &["F"], &["Y1", "Y2"], &["X"], &[0.75], n).unwrap();
        let direct = replicate_tv(&spec, derive_seed(11, &[n as u64, 0]), 0).unwrap();
        let tv: f64 = row[5].parse().unwrap();
        assert!((tv - direct).abs() < 1e-9, "n = {n}: {tv} vs {direct}");
        assert_eq!(row[6], "", "exact runs have no trial count");
    }
}

#[test]
fn region_job_writes_certificates() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r1.csv");
    let o = run(&["region", "--config", data("region_r1.config.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(r[1][0], "minimize");
    assert_eq!(r[1][10], "true");
    assert_eq!(r[1][11], "true");
    assert_eq!(r[3][7], "not-excluded");
    let certs: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r1.certificates.json")).unwrap()).unwrap();
    let first = &certs["certificates"][0]["certificate"];
    assert_eq!(first["upper_bound"], true);
    let aux = serde_json::to_string(&first["aux"]).unwrap();
    let p = coordgen::dist::io::parse_pmf(&aux).unwrap();
    assert_eq!(p.names(), ["U", "X1", "X2", "Y1", "Y2"]);
}

#[test]
fn region_chain_failure_exits_four() {
    let dir = TempDir::new().unwrap();
    // Y1 = X2 with X1 constant: no one-round scheme exists.
    write(
        &dir,
        "q.json",
        r#"{"variables":[{"name":"X1","alphabet":[0]},{"name":"X2","alphabet":[0,1]},{"name":"Y1","alphabet":[0,1]},{"name":"Y2","alphabet":[0]}],"probs":[0.5,0,0,0.5]}"#,
    );
    let cfg = write(&dir, "c.json", r#"{"pmf":"q.json","region":"R1","cards":[2],"seed":1}"#);
    let out = dir.path().join("o.csv");
    let o = run(&["region", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn output_does_not_depend_on_workers() {
    let dir = TempDir::new().unwrap();
    let mut outs = Vec::new();
    for w in ["1", "8"] {
        let out = dir.path().join(format!("r{w}.csv"));
        let o = run(&[
            "region",
            "--config",
            data("region_r2.config.json").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            w,
        ]);
        assert!(o.status.success());
        outs.push((
            std::fs::read(&out).unwrap(),
            std::fs::read(out.with_extension("certificates.json")).unwrap(),
        ));
    }
    assert_eq!(outs[0], outs[1]);
}
