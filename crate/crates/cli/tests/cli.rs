use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn laplace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laplace"))
        .args(args)
        .env_remove("LAPLACE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// 400 rows where `y` copies `race`; `gender` and `x` are noise.
fn fairness_csv(dir: &Path) -> PathBuf {
    let mut s = String::from("race,gender,x,y\n");
    for i in 0..400u32 {
        let race = ["a", "b"][(i % 2) as usize];
        let gender = ["f", "m"][((i / 2) % 2) as usize];
        let x = (i * 7) % 3;
        let y = if race == "a" { "yes" } else { "no" };
        s.push_str(&format!("{race},{gender},{x},{y}\n"));
    }
    let path = dir.join("fair.csv");
    std::fs::write(&path, s).unwrap();
    path
}

#[cfg(unix)]
fn stub(dir: &Path, body: &str) -> PathBuf {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join("model.sh");
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

#[test]
fn generate_sizes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let out = laplace(&[
        "generate",
        "--network",
        "alarm",
        "--n",
        "10000",
        "--seed",
        "3",
        "--out",
        p(&a),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 10_001);
    assert!(text.lines().all(|l| l.split(',').count() == 37));

    let b = dir.path().join("b.csv");
    laplace(&["generate", "--n", "10000", "--seed", "3", "-o", p(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let one = laplace(&["generate", "--n", "1"]);
    assert_eq!(String::from_utf8(one.stdout).unwrap().lines().count(), 2);
}

#[test]
fn generate_reports_schema_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("net.json");
    std::fs::write(
        &bad,
        r#"{"variables":[{"name":"a","states":["0","1"]}],"edges":[["a","zzz"]],"cpts":{"a":[[0.5,0.5]]}}"#,
    )
    .unwrap();
    let out = laplace(&["generate", "--network", p(&bad), "--n", "5"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("edges[0]"));
}

#[test]
fn explain_alarm_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = laplace(&[
        "explain",
        "--network",
        "alarm",
        "--target",
        "Intubation",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let e = json(dir.path().join("explanation.json"));
    assert_eq!(e["target"], "INTUBATION");
    let pc = e["blanket"]["pc"].as_array().unwrap().len();
    let sp = e["blanket"]["spouses"].as_array().unwrap().len();
    assert!(pc + sp > 0);
    let total: f64 = e["posterior"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
    let dot = std::fs::read_to_string(dir.path().join("explanation.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(dir.path().join("model.json").exists());
}

#[cfg(unix)]
#[test]
fn constant_external_model_gives_degenerate_explanation() {
    let dir = tempfile::tempdir().unwrap();
    let data = fairness_csv(dir.path());
    let model = stub(dir.path(), r#"tail -n +2 "$2" | sed 's/.*/no/' > "$3""#);
    let out = laplace(&[
        "explain",
        "--data",
        p(&data),
        "--target",
        "y",
        "--rho",
        "0",
        "--model",
        "external",
        "--model-command",
        p(&model),
        "--samples",
        "500",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let e = json(dir.path().join("explanation.json"));
    assert_eq!(e["network"]["variables"].as_array().unwrap().len(), 1);
    assert_eq!(e["explained_class"], "no");
    assert_eq!(e["predicted_class"], "no");
}

#[cfg(unix)]
#[test]
fn failing_external_model_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = fairness_csv(dir.path());
    let model = stub(dir.path(), "echo broken >&2; exit 1");
    let out = laplace(&[
        "explain",
        "--data",
        p(&data),
        "--target",
        "y",
        "--model",
        "external",
        "--model-command",
        p(&model),
        "--samples",
        "100",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken"));
}

#[test]
fn sensitive_flags_follow_blanket_membership() {
    let dir = tempfile::tempdir().unwrap();
    let data = fairness_csv(dir.path());
    let out = laplace(&[
        "explain",
        "--data",
        p(&data),
        "--target",
        "y",
        "--model",
        "nb",
        "--sensitive",
        "race,gender",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let e = json(dir.path().join("explanation.json"));
    let blanket: Vec<&str> = e["blanket"]["pc"]
        .as_array()
        .unwrap()
        .iter()
        .chain(e["blanket"]["spouses"].as_array().unwrap())
        .map(|v| v.as_str().unwrap())
        .collect();
    let flagged: Vec<&str> = e["flagged_sensitive"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(blanket.contains(&"race"));
    for name in ["race", "gender"] {
        assert_eq!(flagged.contains(&name), blanket.contains(&name));
    }
    let dot = std::fs::read_to_string(dir.path().join("explanation.dot")).unwrap();
    assert!(dot.contains("sensitive"));
}

#[test]
fn numeric_columns_keep_original_values() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = String::from("temp,label\n");
    for i in 0..300 {
        let t = i as f64 * 0.37;
        s.push_str(&format!("{t},{}\n", if t > 50.0 { "hot" } else { "cold" }));
    }
    let data = dir.path().join("num.csv");
    std::fs::write(&data, s).unwrap();
    let out = laplace(&[
        "explain",
        "--data",
        p(&data),
        "--target",
        "label",
        "--bins",
        "5",
        "--model",
        "nb",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let e = json(dir.path().join("explanation.json"));
    let original = e["instance"]["original"]["temp"].as_str().unwrap();
    assert!(original.parse::<f64>().is_ok());
    assert!(e["instance"]["discretized"]["temp"]
        .as_str()
        .unwrap()
        .starts_with('['));
}

#[test]
fn benchmark_config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# quick run\nnetwork = alarm\ntarget = Intubation\nrows = 3000\nsamples = 1500\nrepetitions = 3\ntrees = 10\n",
    )
    .unwrap();
    let a = dir.path().join("a");
    let out = laplace(&[
        "benchmark",
        "-c",
        p(&cfg),
        "--repetitions",
        "2",
        "--out",
        p(&a),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(a.join("report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert_eq!(report["feature_sets"].as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(a.join("report.md"))
        .unwrap()
        .contains("| laplace |"));

    let b = dir.path().join("b");
    let out = Command::new(env!("CARGO_BIN_EXE_laplace"))
        .args([
            "benchmark",
            "-c",
            p(&cfg),
            "--repetitions",
            "2",
            "--out",
            p(&b),
        ])
        .env("LAPLACE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read(a.join("report.json")).unwrap(),
        std::fs::read(b.join("report.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("report.md")).unwrap(),
        std::fs::read(b.join("report.md")).unwrap()
    );
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(code(&laplace(&["explain", "-c", p(&cfg)])), 1);
    assert_eq!(code(&laplace(&["explain", "--network", "alarm"])), 1);
    assert_eq!(
        code(&laplace(&["explain", "--alpha", "lots", "--target", "x"])),
        1
    );
    assert_eq!(code(&laplace(&["frobnicate"])), 1);
    assert_eq!(code(&laplace(&["--help"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(
        code(&laplace(&[
            "explain",
            "--data",
            p(&missing),
            "--target",
            "y"
        ])),
        2
    );
    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "a,b\n1,2\n3\n").unwrap();
    let out = laplace(&["explain", "--data", p(&ragged), "--target", "b"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains('3'));
}

#[test]
fn oracle_blankets() {
    let out = laplace(&[
        "oracle",
        "mb",
        "--network",
        "alarm",
        "--target",
        "Intubation",
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mut got: Vec<&str> = v["blanket"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap())
        .collect();
    got.sort();
    assert_eq!(
        got,
        [
            "KINKEDTUBE",
            "MINVOL",
            "PRESS",
            "PULMEMBOLUS",
            "SHUNT",
            "VENTALV",
            "VENTLUNG",
            "VENTTUBE"
        ]
    );

    let dir = tempfile::tempdir().unwrap();
    let single = dir.path().join("one.json");
    std::fs::write(
        &single,
        r#"{"variables":[{"name":"a","states":["0","1"]}],"edges":[],"cpts":{"a":[[0.3,0.7]]}}"#,
    )
    .unwrap();
    let out = laplace(&["oracle", "mb", "--network", p(&single), "--target", "a"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["blanket"].as_array().unwrap().is_empty());
}

#[test]
fn oracle_posterior_matches_inference_on_random_networks() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..10 {
        let net = dir.path().join(format!("r{seed}.json"));
        let out = laplace(&[
            "oracle",
            "random-dag",
            "--nodes",
            "10",
            "--seed",
            &seed.to_string(),
            "-o",
            p(&net),
        ]);
        assert_eq!(code(&out), 0);
        let out = laplace(&[
            "oracle",
            "posterior",
            "--network",
            p(&net),
            "--target",
            "X3",
            "--evidence",
            "X0=1,X7=0",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v["max_abs_diff"].as_f64().unwrap() < 1e-12);
    }
    let refused = laplace(&[
        "oracle",
        "posterior",
        "--network",
        "alarm",
        "--target",
        "Intubation",
    ]);
    assert_eq!(code(&refused), 2);
    assert!(String::from_utf8_lossy(&refused.stderr).contains("at most 20"));
}
