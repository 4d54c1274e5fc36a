use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn ncprob(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncprob"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn numbers(v: &serde_json::Value) -> Vec<f64> {
    match v {
        serde_json::Value::Number(n) => vec![n.as_f64().unwrap()],
        serde_json::Value::Array(a) => a.iter().flat_map(numbers).collect(),
        serde_json::Value::Object(o) => o.values().flat_map(numbers).collect(),
        _ => Vec::new(),
    }
}

#[test]
fn missing_file_is_a_validation_error() {
    let out = ncprob(&["cumulants", "--species", "free", "--in", "no/such/file.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/file.json"));
}

#[test]
fn malformed_file_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        "{\n  \"type\": \"cp\",\n  \"gamma\": {\"dim\": 1, \"re\": [[0, 1]]},\n  \"A\": {\"dim\": 1, \"re\": [[0]]},\n  \"V\": [[1]]\n}\n",
    )
    .unwrap();
    let out = ncprob(&["cumulants", "--species", "free", "--in", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("{}:3:", bad.display())), "{err}");

    std::fs::write(&bad, "{\"type\": \"cp\",\n \"A\": [1, 2\n").unwrap();
    let out = ncprob(&["cumulants", "--species", "free", "--in", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn arcsine_has_a_single_monotone_cumulant() {
    let out = ncprob(&["cumulants", "--species", "monotone", "--in", p(&data("arcsine.json")), "--order", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["header"]["command"], "cumulants");
    assert_eq!(v["header"]["tool"], "ncprob");
    let maps = v["result"]["maps"].as_array().unwrap();
    assert_eq!(maps.len(), 4);
    let re = |k: usize| maps[k - 1][0]["re"][0][0].as_f64().unwrap();
    assert!((re(2) - 1.0).abs() < 1e-13);
    for k in [1, 3, 4] {
        assert!(re(k).abs() < 1e-13, "c_{k} = {}", re(k));
    }
}

#[test]
fn reruns_are_byte_identical_across_threads() {
    let args = |threads: &'static str| {
        vec![
            "bp", "--rule", "clt", "--schedule", "2,4,8", "--order", "4", "--seed", "7", "--threads", threads,
        ]
    };
    let a = ncprob(&args("1"));
    let b = ncprob(&args("1"));
    let c = ncprob(&args("4"));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let d = ncprob(&["bp", "--rule", "clt", "--schedule", "2,4,8", "--order", "4", "--seed", "8"]);
    assert_ne!(a.stdout, d.stdout);
}

#[test]
fn boolean_seed_rates_are_one_over_k() {
    let out = ncprob(&["bp", "--species", "free,monotone"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let v = json(&out);
    for s in v["result"]["species"].as_array().unwrap() {
        let slope = s["slope"].as_f64().unwrap_or_else(|| panic!("no slope in {text}"));
        assert!((slope + 1.0).abs() < 0.05, "slope {slope}");
    }
}

#[test]
fn unstable_flow_exits_with_an_error_document() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("flow.json");
    let out = ncprob(&[
        "flow", "--generator", p(&data("arcsine.json")), "--b-imag", "0.1", "--t-max", "1", "--method", "picard",
        "--max-iters", "3", "-o", p(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["header"]["command"], "flow");
    assert!(v.get("result").is_none());
    assert_eq!(v["error"]["kind"], "divergence");
}

#[test]
fn flow_writes_csv_with_header() {
    let out = ncprob(&["flow", "--generator", p(&data("cp_d2.json")), "--b-imag", "2", "--t-max", "0.1", "--dt", "0.05"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# ncprob "));
    assert!(lines.next().unwrap().starts_with("t,re_0_0,im_0_0"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn evolution_and_recovery_are_accurate() {
    let out = ncprob(&["evolution-check", "--in", p(&data("realized_d2.json")), "--order", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["result"]["residual"].as_f64().unwrap() < 1e-10);

    let out = ncprob(&["recover-sigma", "--generator", p(&data("cp_d2.json")), "--words", p(&data("words_d2.json"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["result"]["max_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn power_with_eta_matches_scalar_power() {
    let path = data("bernoulli.json");
    let src = p(&path);
    let t = ncprob(&["power", "--in", src, "--t", "2", "--order", "4"]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let dir = tempfile::tempdir().unwrap();
    let eta = dir.path().join("eta.json");
    std::fs::write(&eta, r#"{"eta": [[2]]}"#).unwrap();
    let e = ncprob(&["power", "--in", src, "--eta", p(&eta), "--order", "4"]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    let a = json(&t)["result"]["maps"].clone();
    let b = json(&e)["result"]["maps"].clone();
    let (a, b) = (numbers(&a), numbers(&b));
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
}

#[test]
fn check_item_two_passes() {
    let out = ncprob(&["check", "--item", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["result"]["passed"], true);
}
