use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cesurvey(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cesurvey"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> &Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&ok(out).stdout).expect("JSON on stdout")
}

fn synth(dir: &Path, units: &str) {
    ok(&cesurvey(dir, &["--seed", "11", "synth", "--units", units, "--out", "pop.csv"]));
}

#[test]
fn synth_sample_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "400");
    ok(&cesurvey(
        dir.path(),
        &["--seed", "5", "sample", "--pop", "pop.csv", "--scheme", "tille", "--n", "30", "--out", "draw.json"],
    ));
    let report = json(&cesurvey(
        dir.path(),
        &["estimate", "--pop", "pop.csv", "--scheme-file", "draw.json", "--dump-weights", "w.csv"],
    ));
    let theta = report["theta_hat"][0].as_f64().unwrap();
    let se = report["se"][0].as_f64().unwrap();
    let ci = &report["ci"][0];
    assert!((0.0..=1.0).contains(&theta));
    assert!(se > 0.0);
    assert!(ci[0].as_f64().unwrap() < theta && theta < ci[1].as_f64().unwrap());
    assert_eq!(report["n"], 30);
    assert_eq!(report["population_size"], 400);

    let weights = fs::read_to_string(dir.path().join("w.csv")).unwrap();
    let total: f64 = weights.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert_eq!(weights.lines().count(), 31);
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn worked_proportion_example() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.csv"), "y,size\n1,4\n0,2\n0,2\n1,2\n").unwrap();
    let draw = r#"{"indices":[1,2,3,4],"pi":[0.4,0.2,0.2,0.2],"joint_pi":null,"scheme":"tille"}"#;
    fs::write(dir.path().join("draw.json"), draw).unwrap();
    let report = json(&cesurvey(dir.path(), &["estimate", "--pop", "tiny.csv", "--scheme-file", "draw.json"]));
    assert!((report["theta_hat"][0].as_f64().unwrap() - 3.0 / 7.0).abs() < 1e-12);
    let v = report["se"][0].as_f64().unwrap().powi(2);
    assert!((v - 0.063307).abs() < 5e-7, "{v}");
}

#[test]
fn explicit_seed_is_reproducible_and_missing_seed_is_printed() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "300");
    let args = ["--seed", "9", "estimate", "--pop", "pop.csv", "--scheme", "systematic", "--n", "25"];
    let a = ok(&cesurvey(dir.path(), &args)).stdout.clone();
    let b = ok(&cesurvey(dir.path(), &args)).stdout.clone();
    assert_eq!(a, b);

    let out = cesurvey(dir.path(), &["estimate", "--pop", "pop.csv", "--scheme", "systematic", "--n", "25"]);
    let stderr = String::from_utf8_lossy(&ok(&out).stderr).to_string();
    let seed: u64 = stderr
        .lines()
        .find_map(|l| l.strip_prefix("seed: "))
        .expect("seed announced")
        .trim()
        .parse()
        .unwrap();
    let replay = ok(&cesurvey(
        dir.path(),
        &["--seed", &seed.to_string(), "estimate", "--pop", "pop.csv", "--scheme", "systematic", "--n", "25"],
    ))
    .stdout
    .clone();
    assert_eq!(out.stdout, replay);
}

#[test]
fn inclusion_csv_has_max_deviation_column() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.csv"), "y,size\n0,1\n1,2\n0,3\n1,4\n0,5\n1,6\n0,7\n").unwrap();
    let out = ok(&cesurvey(
        dir.path(),
        &["--seed", "1", "inclusion", "--pop", "tiny.csv", "--scheme", "tille", "--n", "3", "--reps", "100000"],
    ))
    .stdout
    .clone();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "id,target,empirical,abs_dev,max_abs_dev");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 7);
    let max = rows.iter().map(|r| r[3]).fold(0.0, f64::max);
    let target_sum: f64 = rows.iter().map(|r| r[1]).sum();
    assert!((target_sum - 3.0).abs() < 1e-12);
    for r in &rows {
        assert_eq!(r[4], max);
        assert!((r[1] - r[2]).abs() == r[3]);
    }
    // 100k draws put each frequency within about 0.0016 of its target
    assert!(max < 0.01, "{max}");
}

#[test]
fn simulate_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "500");
    fs::write(
        dir.path().join("study.toml"),
        "schemes = [\"tille\", \"systematic\"]\nn = 20\nreps = 60\nseed = 3\nestimators = [\"ce\", \"ht\"]\n",
    )
    .unwrap();
    ok(&cesurvey(
        dir.path(),
        &["simulate", "--config", "study.toml", "--pop", "pop.csv", "--out", "report.json", "--hist-out", "hist.csv"],
    ));
    let report = ce_survey::mc::load_report(dir.path().join("report.json")).unwrap();
    assert_eq!(report.cells.len(), 4);
    assert_eq!(report.config.seed, 3);
    let hist = fs::read_to_string(dir.path().join("hist.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 4 * 50);

    // --seed overrides the file and --threads does not change results
    let run = |threads: &str| {
        ok(&cesurvey(
            dir.path(),
            &["--seed", "8", "--threads", threads, "simulate", "--config", "study.toml", "--pop", "pop.csv"],
        ))
        .stdout
        .clone()
    };
    let one: Value = serde_json::from_slice(&run("1")).unwrap();
    let four: Value = serde_json::from_slice(&run("4")).unwrap();
    assert_eq!(one["config"]["seed"], 8);
    assert_eq!(one["cells"], four["cells"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "200");
    let code = |args: &[&str]| cesurvey(dir.path(), args).status.code();

    assert_eq!(code(&["estimate", "--bogus"]), Some(2));
    assert_eq!(code(&["estimate", "--pop", "missing.csv", "--scheme", "tille", "--n", "5"]), Some(2));
    assert_eq!(code(&["--seed", "1", "estimate", "--pop", "pop.csv", "--scheme", "tille", "--n", "0"]), Some(2));
    fs::write(dir.path().join("bad.toml"), "schemes = [\"tille\"]\nn = 5\nreps = 5\ntypo = 1\n").unwrap();
    assert_eq!(code(&["simulate", "--config", "bad.toml", "--pop", "pop.csv"]), Some(2));

    // every response is 0: the logistic score has no root
    let mut csv = String::from("y,size,x\n");
    for k in 1..=30 {
        csv.push_str(&format!("0,{k},{}\n", k as f64 / 10.0));
    }
    fs::write(dir.path().join("flat.csv"), csv).unwrap();
    let out = cesurvey(
        dir.path(),
        &["--seed", "2", "estimate", "--pop", "flat.csv", "--col-aux", "x", "--model", "logistic", "--scheme", "tille", "--n", "10"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn smoothed_visibility_and_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "400");
    let out = ok(&cesurvey(
        dir.path(),
        &[
            "--seed", "4", "--format", "csv", "estimate", "--pop", "pop.csv", "--scheme", "tille", "--n", "40",
            "--visibility", "smooth", "--smooth-basis", "1,size",
        ],
    ))
    .stdout
    .clone();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("param,theta_hat,se,ci_lo,ci_hi\n0,"));
}
