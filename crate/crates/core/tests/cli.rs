//! End-to-end tests of the pipeline driver: file formats, exit codes,
//! byte-level idempotence, and report-schema conformance.

use std::fs;
use std::path::Path;

use halfmax::cli::run;
use serde_json::Value;
use tempfile::TempDir;

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["halfmax"];
    argv.extend_from_slice(args);
    run(argv)
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Minimal JSON-schema walker covering the subset our schema uses: type,
/// required, additionalProperties, enum, minimum/exclusiveMinimum, items.
fn validate_against_schema(schema: &Value, instance: &Value) -> Result<(), String> {
    fn type_ok(ty: &str, v: &Value) -> bool {
        match ty {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "number" => v.is_number(),
            "integer" => v.is_u64() || v.is_i64(),
            "boolean" => v.is_boolean(),
            _ => false,
        }
    }
    if let Some(ty) = schema.get("type").and_then(Value::as_str) {
        if !type_ok(ty, instance) {
            return Err(format!("expected {ty}, got {instance}"));
        }
    }
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(instance) {
            return Err(format!("{instance} not in enum {allowed:?}"));
        }
    }
    if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
        let v = instance.as_f64().ok_or("expected a number")?;
        if v < min {
            return Err(format!("{v} below minimum {min}"));
        }
    }
    if let Some(min) = schema.get("exclusiveMinimum").and_then(Value::as_f64) {
        let v = instance.as_f64().ok_or("expected a number")?;
        if v <= min {
            return Err(format!("{v} not above {min}"));
        }
    }
    if let Some(obj) = instance.as_object() {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for key in required {
                let key = key.as_str().unwrap();
                if !obj.contains_key(key) {
                    return Err(format!("missing required field {key}"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
            if let Some(props) = props {
                for key in obj.keys() {
                    if !props.contains_key(key) {
                        return Err(format!("unexpected field {key}"));
                    }
                }
            }
        }
        if let Some(props) = props {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    validate_against_schema(sub, v).map_err(|e| format!("{key}: {e}"))?;
                }
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(arr) = instance.as_array() {
            for (i, v) in arr.iter().enumerate() {
                validate_against_schema(items, v).map_err(|e| format!("[{i}]: {e}"))?;
            }
        }
    }
    Ok(())
}

fn schema() -> Value {
    let text = read(Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../docs/report.schema.json"
    )));
    serde_json::from_str(&text).unwrap()
}

#[test]
fn full_pipeline_on_example1() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).to_str().unwrap().to_string();

    assert_eq!(
        cli(&[
            "gen",
            "--spec",
            "example1",
            "--seed",
            "7",
            "--out",
            &s("data.json")
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "preselect",
            "--data",
            &s("data.json"),
            "--out",
            &s("pool.json")
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "fit",
            "--data",
            &s("data.json"),
            "--pool",
            &s("pool.json"),
            "--t",
            "1.1",
            "--out",
            &s("state.json"),
            "--report",
            &s("fit_report.json"),
            "--dist",
            &s("fit_dist.csv"),
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "prune",
            "--data",
            &s("data.json"),
            "--state",
            &s("state.json"),
            "--t",
            "2.0",
            "--out",
            &s("pruned.json"),
            "--report",
            &s("prune_report.json"),
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "predict",
            "--data",
            &s("data.json"),
            "--state",
            &s("pruned.json"),
            "--out",
            &s("pred.csv"),
            "--dist",
            &s("dist.csv"),
        ]),
        0
    );

    // reports validate against the shipped schema
    let schema = schema();
    for name in ["fit_report.json", "prune_report.json"] {
        let report: Value = serde_json::from_str(&read(&p(name))).unwrap();
        validate_against_schema(&schema, &report)
            .unwrap_or_else(|e| panic!("{name} does not match the schema: {e}"));
    }

    // fit stopped by threshold: residual strictly below the budget
    let report: Value = serde_json::from_str(&read(&p("fit_report.json"))).unwrap();
    if report["stop_reason"] == "residual-below-threshold" {
        assert!(report["residual2"].as_f64().unwrap() < report["epsilon_norm2"].as_f64().unwrap());
    }

    // distribution CSV: unit sum, N rows
    let dist = read(&p("dist.csv"));
    let mut lines = dist.lines();
    assert_eq!(lines.next().unwrap(), "n,p_half,p");
    let phalf: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(phalf.len(), 50);
    let sum: f64 = phalf.iter().sum();
    assert!((sum - 1.0).abs() < 1e-10);

    // prediction CSV: header with f_true (synthetic data carries it), M rows
    let pred = read(&p("pred.csv"));
    let mut lines = pred.lines();
    assert_eq!(lines.next().unwrap(), "i,f_obs,f_pred,f_true,sigma");
    assert_eq!(lines.count(), 100);
}

#[test]
fn reruns_are_byte_identical_except_timing() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).to_str().unwrap().to_string();

    for round in ["a", "b"] {
        assert_eq!(
            cli(&[
                "gen",
                "--spec",
                "example1",
                "--seed",
                "3",
                "--out",
                &s(&format!("data_{round}.json"))
            ]),
            0
        );
        assert_eq!(
            cli(&[
                "fit",
                "--data",
                &s(&format!("data_{round}.json")),
                "--out",
                &s(&format!("state_{round}.json")),
                "--report",
                &s(&format!("report_{round}.json")),
                "--dist",
                &s(&format!("dist_{round}.csv")),
            ]),
            0
        );
    }
    assert_eq!(read(&p("data_a.json")), read(&p("data_b.json")));
    assert_eq!(read(&p("state_a.json")), read(&p("state_b.json")));
    assert_eq!(read(&p("dist_a.csv")), read(&p("dist_b.csv")));

    // the report is identical after discounting the wall-clock field
    let mut ra: Value = serde_json::from_str(&read(&p("report_a.json"))).unwrap();
    let mut rb: Value = serde_json::from_str(&read(&p("report_b.json"))).unwrap();
    ra["timing_ms"] = serde_json::json!(0);
    rb["timing_ms"] = serde_json::json!(0);
    assert_eq!(ra, rb);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).to_str().unwrap().to_string();

    // 2: bad arguments
    assert_eq!(cli(&["fit"]), 2); // missing required flags
    assert_eq!(cli(&["nonsense"]), 2);
    // 0: help
    assert_eq!(cli(&["--help"]), 0);

    // 3: missing / malformed dataset
    assert_eq!(
        cli(&[
            "preselect",
            "--data",
            &s("absent.json"),
            "--out",
            &s("pool.json")
        ]),
        3
    );
    fs::write(p("garbage.json"), "{not json").unwrap();
    assert_eq!(
        cli(&[
            "preselect",
            "--data",
            &s("garbage.json"),
            "--out",
            &s("pool.json")
        ]),
        3
    );

    // 2: out-of-range tolerance / stopping factor on a valid dataset
    assert_eq!(
        cli(&[
            "gen",
            "--spec",
            "example1",
            "--seed",
            "2",
            "--out",
            &s("data.json")
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "preselect",
            "--data",
            &s("data.json"),
            "--tol",
            "2.0",
            "--out",
            &s("pool.json")
        ]),
        2
    );
    assert_eq!(
        cli(&[
            "fit",
            "--data",
            &s("data.json"),
            "--t",
            "0",
            "--out",
            &s("state.json")
        ]),
        2
    );

    // 4: degeneracy — a single-component kernel admits no candidates
    let degenerate = serde_json::json!({
        "M": 3, "N": 1,
        "kernel": [[1.0], [2.0], [3.0]],
        "f_obs": [1.0, 2.0, 3.5],
        "sigma": [0.1, 0.1, 0.1],
        "seed": 0
    });
    fs::write(p("n1.json"), serde_json::to_string(&degenerate).unwrap()).unwrap();
    assert_eq!(
        cli(&["fit", "--data", &s("n1.json"), "--out", &s("state.json")]),
        4
    );
    // ... while preselect reports an empty pool with a warning, exit 0
    assert_eq!(
        cli(&[
            "preselect",
            "--data",
            &s("n1.json"),
            "--out",
            &s("pool.json")
        ]),
        0
    );
    let pool: Value = serde_json::from_str(&read(&p("pool.json"))).unwrap();
    assert_eq!(pool["pool"].as_array().unwrap().len(), 0);
    assert_eq!(pool["degenerate"], Value::Bool(true));
}

#[test]
fn example2_counts_through_the_cli() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).to_str().unwrap().to_string();

    assert_eq!(
        cli(&[
            "gen",
            "--spec",
            "example2",
            "--seed",
            "1",
            "--out",
            &s("data.json")
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "preselect",
            "--data",
            &s("data.json"),
            "--out",
            &s("pool.json")
        ]),
        0
    );
    let pool: Value = serde_json::from_str(&read(&p("pool.json"))).unwrap();
    let pool_len = pool["pool"].as_array().unwrap().len();
    assert!((80..=120).contains(&pool_len), "pool {pool_len}");

    assert_eq!(
        cli(&[
            "fit",
            "--data",
            &s("data.json"),
            "--pool",
            &s("pool.json"),
            "--t",
            "1.1",
            "--measure",
            "uniform",
            "--out",
            &s("state.json"),
            "--report",
            &s("fit_report.json"),
        ]),
        0
    );
    let fit: Value = serde_json::from_str(&read(&p("fit_report.json"))).unwrap();
    let kfit = fit["k"].as_u64().unwrap();
    assert!((7..=13).contains(&kfit), "kfit {kfit}");

    assert_eq!(
        cli(&[
            "prune",
            "--data",
            &s("data.json"),
            "--state",
            &s("state.json"),
            "--t",
            "2.0",
            "--out",
            &s("pruned.json"),
            "--report",
            &s("prune_report.json"),
        ]),
        0
    );
    let pr: Value = serde_json::from_str(&read(&p("prune_report.json"))).unwrap();
    let kprune = pr["k"].as_u64().unwrap();
    assert!((4..=7).contains(&kprune), "kprune {kprune}");
}

#[test]
fn fit_with_max_k_zero_emits_the_uniform_distribution() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).to_str().unwrap().to_string();

    assert_eq!(
        cli(&[
            "gen",
            "--spec",
            "example1",
            "--seed",
            "5",
            "--out",
            &s("data.json")
        ]),
        0
    );
    assert_eq!(
        cli(&[
            "fit",
            "--data",
            &s("data.json"),
            "--max-k",
            "0",
            "--out",
            &s("state.json"),
            "--report",
            &s("report.json"),
            "--dist",
            &s("dist.csv"),
        ]),
        0
    );
    let report: Value = serde_json::from_str(&read(&p("report.json"))).unwrap();
    assert_eq!(report["k"], serde_json::json!(0));
    assert_eq!(report["stop_reason"], serde_json::json!("max-selections"));
    let dist = read(&p("dist.csv"));
    for line in dist.lines().skip(1) {
        let phalf: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(phalf, 1.0 / 50.0);
    }
}

#[test]
fn gen_accepts_a_spec_file_and_seed_override() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).to_str().unwrap().to_string();

    let spec = serde_json::json!({
        "kernel_family": "custom",
        "M": 4, "N": 3,
        "noise_fraction": 0.05,
        "seed": 1,
        "measure_mode": "uniform",
        "truth": { "tabulated": [0.2, 0.5, 0.3] },
        "kernel": [[1.0, 0.3, 0.1], [0.3, 1.0, 0.3], [0.1, 0.3, 1.0], [0.5, 0.5, 0.5]]
    });
    fs::write(p("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(
        cli(&[
            "gen",
            "--spec",
            &s("spec.json"),
            "--seed",
            "42",
            "--out",
            &s("data.json")
        ]),
        0
    );
    let data: Value = serde_json::from_str(&read(&p("data.json"))).unwrap();
    assert_eq!(data["seed"], serde_json::json!(42));
    assert_eq!(data["M"], serde_json::json!(4));
    // custom kernels are stored as explicit rows
    assert!(data["kernel"].is_array());
}

#[test]
fn out_dir_resolves_relative_outputs() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    assert_eq!(
        cli(&[
            "--out-dir",
            out_dir,
            "gen",
            "--spec",
            "example1",
            "--out",
            "data.json"
        ]),
        0
    );
    assert!(dir.path().join("data.json").exists());
}
