use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use shine_core::dataio::{synth_logreg_data, write_libsvm};

fn shine(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shine"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SHINE_SEED_OFFSET")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Data rows of a versioned CSV, split into fields, after checking the schema line.
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("schema=1"), "{}", path.display());
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

fn without_timing(path: &Path) -> Vec<Vec<String>> {
    let (header, mut rows) = table(path);
    let t = column(&header, "cumulative_seconds");
    for r in &mut rows {
        r.remove(t);
    }
    rows
}

#[test]
fn bilevel_writes_trace_per_seed_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = shine(&["bilevel", "--data", "synth:400x10", "--method", "shine", "--seeds", "0..4"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for s in 0..5 {
        let (header, rows) = table(&dir.path().join(format!("bilevel_shine_seed{s}.csv")));
        assert_eq!(header[0], "outer_iter");
        assert_eq!(rows.len(), 50);
        let status = column(&header, "status");
        assert_eq!(rows[0][status], "initial");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bilevel_shine_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 5);
    assert!(summary["median_final_test_loss"].as_f64().unwrap().is_finite());
    assert!(summary["total_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bilevel_is_deterministic_apart_from_timing() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["bilevel", "--data", "synth:300x8", "--method", "hoag", "--seeds", "2,3", "--max-iters", "15"];
    assert_eq!(code(&shine(&[&args[..], &["--jobs", "1"]].concat(), a.path())), 0);
    assert_eq!(code(&shine(&[&args[..], &["--jobs", "3"]].concat(), b.path())), 0);
    for s in [2, 3] {
        let name = format!("bilevel_hoag_seed{s}.csv");
        assert_eq!(without_timing(&a.path().join(&name)), without_timing(&b.path().join(&name)));
    }
}

#[test]
fn limited_backward_caps_inversion_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let o = shine(&["bilevel", "--data", "synth:300x40", "--method", "hoag-limited:5", "--max-iters", "20"], dir.path());
    assert_eq!(code(&o), 0);
    let (header, rows) = table(&dir.path().join("bilevel_hoag-limited_5_seed0.csv"));
    let bw = column(&header, "backward_iters");
    assert!(rows.iter().all(|r| r[bw].parse::<usize>().unwrap() <= 5));
}

#[test]
fn random_search_and_nls_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = shine(&["bilevel", "--data", "synth:200x5", "--method", "random-search", "--max-iters", "10"], dir.path());
    assert_eq!(code(&o), 0);
    let (_, rows) = table(&dir.path().join("bilevel_random-search_seed0.csv"));
    assert_eq!(rows.len(), 10);
    let o = shine(&["bilevel", "--data", "synth:200x5", "--problem", "nls", "--max-iters", "5"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn libsvm_input_and_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.svm");
    write_libsvm(&synth_logreg_data(200, 6, 4, 0.1), fs::File::create(&data).unwrap()).unwrap();
    let o = shine(
        &["bilevel", "--data", data.to_str().unwrap(), "--method", "jacobian-free", "--max-iters", "5", "--format", "json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bilevel_jacobian-free_seed0.json")).unwrap()).unwrap();
    let rows = trace["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["backward_iters"] == 0));
}

#[test]
fn seed_offset_shifts_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_shine"))
        .args(["bilevel", "--data", "synth:200x5", "--seeds", "0..1", "--max-iters", "3", "--out"])
        .arg(dir.path())
        .env("SHINE_SEED_OFFSET", "10")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("bilevel_shine_seed10.csv").exists());
    assert!(dir.path().join("bilevel_shine_seed11.csv").exists());
    assert!(!dir.path().join("bilevel_shine_seed0.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&shine(&["bilevel", "--method", "bogus"], dir.path())), 2);
    assert_eq!(code(&shine(&["bilevel", "--seeds", "5..1"], dir.path())), 2);
    assert_eq!(code(&shine(&["bilevel", "--data", "synth:ax3"], dir.path())), 2);
    assert_eq!(code(&shine(&["bilevel", "--data", "/definitely/missing.svm"], dir.path())), 3);
    assert_eq!(code(&shine(&["opa-quality", "--data", "synth:50x501"], dir.path())), 3);
    assert_eq!(code(&shine(&["deq-toy", "--method", "random-search"], dir.path())), 2);
    assert_eq!(code(&shine(&["spectral", "--dim", "0"], dir.path())), 2);
}

#[test]
fn opa_quality_writes_three_rows_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = shine(&["opa-quality", "--seeds", "0..99"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = table(&dir.path().join("opa_quality.csv"));
    assert_eq!(header, ["seed", "direction", "cosine", "norm_ratio"]);
    assert_eq!(rows.len(), 300);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("opa_quality_summary.json")).unwrap()).unwrap();
    let med = |d: &str| {
        summary["directions"]
            .as_array()
            .unwrap()
            .iter()
            .find(|x| x["direction"] == d)
            .unwrap()["median_cosine"]
            .as_f64()
            .unwrap()
    };
    assert!(med("prescribed") > med("random"));
}

#[test]
fn deq_toy_exact_trace_is_finite() {
    let dir = tempfile::tempdir().unwrap();
    let o = shine(&["deq-toy", "--method", "exact", "--steps", "200"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = table(&dir.path().join("deq_hoag_seed0.csv"));
    assert_eq!(rows.len(), 200);
    let loss = column(&header, "train_loss");
    assert!(rows.iter().all(|r| r[loss].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn deq_toy_fallback_and_probe_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = shine(&["deq-toy", "--method", "shine-fallback", "--steps", "30", "--probe-every", "5"], dir.path());
    assert_eq!(code(&o), 0);
    let (header, rows) = table(&dir.path().join("deq_shine-fallback_seed0.csv"));
    let fb = column(&header, "fallback_count");
    let cos = column(&header, "cosine");
    let counts: Vec<usize> = rows.iter().map(|r| r[fb].parse().unwrap()).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    for (i, r) in rows.iter().enumerate() {
        if i % 5 == 0 {
            let c: f64 = r[cos].parse().unwrap();
            assert!((-1.0..=1.0).contains(&c));
        } else {
            assert_eq!(r[cos], "nan");
        }
    }
}

#[test]
fn deq_toy_divergence_exits_numerical_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = shine(&["deq-toy", "--method", "shine", "--lr", "1e6", "--steps", "50"], dir.path());
    assert_eq!(code(&o), 4);
    let (header, rows) = table(&dir.path().join("deq_shine_seed0.csv"));
    assert_eq!(rows.last().unwrap()[column(&header, "status")], "diverged");
}

#[test]
fn deq_toy_opa_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = shine(&["deq-toy", "--method", "shine-opa", "--steps", "10"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn spectral_probes() {
    let dir = tempfile::tempdir().unwrap();
    let radius = |args: &[&str]| {
        let o = shine(args, dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let (header, rows) = table(&dir.path().join("spectral.csv"));
        rows[0][column(&header, "radius")].parse::<f64>().unwrap()
    };
    assert!(radius(&["spectral", "--zero-w"]).abs() <= 1e-8);
    assert!((radius(&["spectral", "--linear-probe", "0.5"]) - 0.5).abs() <= 1e-12);
    let r = radius(&["spectral"]);
    assert!(r.is_finite() && r >= 0.0);
}
