use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_taylorgrad"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn without_wall_time(report: &str) -> String {
    report
        .lines()
        .filter(|l| !l.contains("\"wall_time_seconds\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn compare_matches_golden_report() {
    let o = run(&["compare", "--config", data("pinned.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let golden = std::fs::read_to_string(data("pinned.golden.json")).unwrap();
    assert_eq!(without_wall_time(&stdout(&o)), without_wall_time(&golden));
}

#[test]
fn report_echoes_config_and_recomputes_discrepancy() {
    let o = run(&["compare", "--config", data("pinned.json").to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data("pinned.json")).unwrap()).unwrap();
    assert_eq!(report["metadata"]["config"], config);
    assert_eq!(report["metadata"]["bound_kind"], "estimated");
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for row in rows {
        if row["method"] == "saliency" {
            assert!(row["series_value"].is_null());
            continue;
        }
        let v = row["value"].as_f64().unwrap();
        let s = row["series_value"].as_f64().unwrap();
        assert_eq!(row["discrepancy"].as_f64().unwrap(), (v - s).abs());
    }
}

#[test]
fn csv_output_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let o = run(&[
        "compare",
        "--config",
        data("pinned.json").to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "coordinate,sigma,n,method,value,standard_error,series_value,remainder_bound,discrepancy,within_bound"
    );
    assert_eq!(lines.count(), 6);
}

#[test]
fn thread_count_does_not_change_the_report() {
    let cfg = data("pinned.json");
    let reports: Vec<String> = ["1", "3", "8"]
        .iter()
        .map(|t| {
            let o = run(&["--threads", t, "compare", "--config", cfg.to_str().unwrap()]);
            without_wall_time(&stdout(&o))
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn failed_bounds_exit_with_two() {
    // the VarGrad row misses the exact variance by the omitted covariance terms
    let o = run(&["compare", "--config", data("quartic.json").to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(2));
    let text = stdout(&o);
    let vargrad = text.lines().find(|l| l.contains("vargrad_mc")).unwrap();
    assert!(vargrad.ends_with(",false"), "{vargrad}");
    assert!(vargrad.contains(",57.75,"), "{vargrad}");
    let smoothgrad = text.lines().find(|l| l.contains("smoothgrad_mc")).unwrap();
    assert!(smoothgrad.ends_with(",true"));
}

#[test]
fn execution_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"function":"x1","point":[1],"sigma":0.1,"n":10,"seed":1,"colour":"red"}"#,
        r#"{"function":"x1 +","point":[1],"sigma":0.1,"n":10,"seed":1}"#,
        r#"{"function":"x1","point":[1],"sigma":[0.1,0.2],"n":10,"seed":1}"#,
        r#"{"function":"exp(exp(x1))","point":[3],"sigma":30,"n":100,"seed":1}"#,
    ];
    for (k, text) in cases.iter().enumerate() {
        let p = dir.path().join(format!("c{k}.json"));
        std::fs::write(&p, text).unwrap();
        let o = run(&["compare", "--config", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{text}");
        assert!(!o.stderr.is_empty());
    }
    let o = run(&["compare", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_orders_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sweep.json");
    std::fs::write(
        &p,
        r#"{"function":"x1^2*x2","point":[0.5,1],"sigma":[0.1,0.2,0.4],"n":[100,1000],"seed":9,"truncation_l":2,"outputs":{"format":"csv"}}"#,
    )
    .unwrap();
    let o = run(&["sweep", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let keys: Vec<(u32, String, u32)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].to_string(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(keys.len(), 2 * 3 * 2 * 3);
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| {
        (a.0, a.1.parse::<f64>().unwrap(), a.2)
            .partial_cmp(&(b.0, b.1.parse::<f64>().unwrap(), b.2))
            .unwrap()
    });
    assert_eq!(keys, sorted);
}

#[test]
fn lemmata_is_reproducible() {
    let a = run(&["lemmata", "--seed", "4", "--n", "20000"]);
    let b = run(&["--threads", "2", "lemmata", "--seed", "4", "--n", "20000"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(without_wall_time(&stdout(&a)), without_wall_time(&stdout(&b)));
    let report: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert!(report["rows"].as_array().unwrap().iter().all(|r| r["pass"] == true));
}

#[test]
fn lemmata_with_tiny_n_still_passes_odd_rows() {
    let o = run(&["lemmata", "--seed", "4", "--n", "10", "--format", "csv"]);
    let text = stdout(&o);
    for line in text.lines().filter(|l| l.starts_with("odd_moment_vanishes")) {
        assert!(line.ends_with(",true"), "{line}");
    }
}
