use std::process::{Command, Output};

fn permix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permix"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("spawn permix")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn csv_header_and_precision() {
    let o = permix(&["chi2", "--theta", "-1,1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# permix "));
    assert_eq!(lines[1], "# command: chi2");
    let config: serde_json::Value = serde_json::from_str(lines[2].trim_start_matches("# config: ")).unwrap();
    assert_eq!(config["opts"]["theta"], serde_json::json!([-1.0, 1.0]));
    assert!(config["opts"].get("threads").is_none());
    assert_eq!(lines[3], "n,chi2,log1p_chi2,row_sum_residual,method");
    let chi2: f64 = lines[4].split(',').nth(1).unwrap().parse().unwrap();
    // two members at ±1: χ² = f² with f = λ₂ of the 2×2 overlap
    let a = permix(&["overlap", "--theta", "-1,1"]);
    let row0: Vec<f64> = stdout(&a)
        .lines()
        .nth(4)
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    let f = row0[0] - row0[1];
    assert!((chi2 - f * f).abs() < 1e-12 * chi2);
}

#[test]
fn json_format_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bounds.json");
    let o = permix(&[
        "bounds",
        "--theta",
        "0,0.5,2",
        "--format",
        "json",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["command"], "bounds");
    let row = &doc["result"]["rows"][0];
    assert_eq!(row["sandwich_holds"], true);
    assert!(row["log_exact"].as_f64().unwrap() <= row["log_upper"].as_f64().unwrap());
}

#[test]
fn verify_single_audit_and_negative_control() {
    let ok = permix(&["verify", "--only", "hessian"]);
    assert_eq!(ok.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert_eq!(doc["result"]["audits"].as_array().unwrap().len(), 1);
    assert_eq!(doc["result"]["pass"], true);

    let bad = permix(&["verify", "--only", "overlap", "--perturb"]);
    assert_eq!(bad.status.code(), Some(1));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&bad)).unwrap();
    assert_eq!(doc["result"]["audits"][0]["pass"], false);
    assert!(doc["result"]["audits"][0]["worst_slack"].as_f64().unwrap() < 0.0);
}

#[test]
fn full_verify_passes() {
    let o = permix(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn exit_codes() {
    // unknown audit and malformed options are usage errors
    assert_eq!(permix(&["verify", "--only", "nope"]).status.code(), Some(2));
    assert_eq!(permix(&["chi2"]).status.code(), Some(2));
    assert_eq!(permix(&["sweep-gaussian", "--n", "7"]).status.code(), Some(2));
    // invalid family parameter
    let neg = permix(&["chi2", "--family", "poisson", "--theta", "-1,2"]);
    assert_eq!(neg.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&neg.stderr).starts_with("permix chi2:"));
    // permanent beyond the engine limit
    let many: Vec<String> = (0..31).map(|i| (0.1 * i as f64).to_string()).collect();
    assert_eq!(permix(&["chi2", "--theta", &many.join(",")]).status.code(), Some(3));
}

#[test]
fn sweep_small_n_matches_permanent() {
    let o = permix(&["sweep-poisson", "--grid", "0.5,1.5", "--n", "4,8"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let diff = header.iter().position(|h| *h == "abs_diff").unwrap();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert!(r[diff].parse::<f64>().unwrap() < 1e-10, "{r:?}");
    }
}

#[test]
fn threads_do_not_change_output() {
    let a = permix(&["compound-gap", "--samples", "3000", "--threads", "1"]);
    let b = permix(&["compound-gap", "--samples", "3000", "--threads", "4"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
