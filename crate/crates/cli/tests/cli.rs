use std::path::Path;
use std::process::{Command, Output};

use mrvr::model_file::{to_bytes, ModelFile, ModelMetadata, TrainedModel};
use mrvr::table::{load_table, TableRole};
use mrvr::{fit_fast, FitOptions, KernelConfig, TrainingData};

fn mrvr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrvr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn simulate_train_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&mrvr(&["simulate", "--v", "2", "--n", "200", "--seed", "7", "--out", "data.csv"], d));
    assert!(d.join("data.omega.csv").exists());
    let train = ok(&mrvr(
        &["train", "--data", "data.csv", "--method", "proposed", "--width", "1.6", "--seed", "3", "--out", "m.mrvr"],
        d,
    ));
    assert!(train.contains("iterations:") && train.contains("log marginal likelihood:"));
    let pred = ok(&mrvr(&["predict", "--model", "m.mrvr", "--data", "data.csv", "--out", "p.csv"], d));
    let rmse_line = pred.lines().find(|l| l.starts_with("rmse:")).expect("rmse printed");
    let printed: f64 = rmse_line.trim_start_matches("rmse:").trim().parse().unwrap();

    // the same steps through the library
    let table = load_table(&d.join("data.csv"), TableRole::InputsAndTargets).unwrap();
    let targets = table.targets.unwrap();
    let data = TrainingData::new(table.inputs.clone(), targets.clone()).unwrap();
    let model = fit_fast(&data, &KernelConfig::gaussian(1.6).unwrap(), &FitOptions::default()).unwrap();
    let mut means = targets.clone();
    for i in 0..data.n_samples() {
        let (m, _) = model.predict(&[table.inputs[(i, 0)]]).unwrap();
        means.row_mut(i).copy_from(&m);
    }
    assert_eq!(printed, mrvr::eval::rmse(&targets, &means).unwrap());

    let out = std::fs::read_to_string(d.join("p.csv")).unwrap();
    let header = out.lines().next().unwrap();
    assert_eq!(header, "x1,mean_1,mean_2,var_1,var_2,cov_1_1,cov_1_2,cov_2_1,cov_2_2");
    assert_eq!(out.lines().count(), 201);
}

#[test]
fn cli_model_file_matches_library_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&mrvr(&["simulate", "--v", "3", "--n", "40", "--seed", "11", "--out", "s.csv"], d));
    ok(&mrvr(
        &["train", "--data", "s.csv", "--method", "proposed", "--width", "1.6", "--seed", "5", "--out", "m.mrvr"],
        d,
    ));
    let table = load_table(&d.join("s.csv"), TableRole::InputsAndTargets).unwrap();
    let data = TrainingData::new(table.inputs, table.targets.unwrap()).unwrap();
    let model = fit_fast(&data, &KernelConfig::gaussian(1.6).unwrap(), &FitOptions::default()).unwrap();
    let file = ModelFile {
        metadata: ModelMetadata {
            n_samples: 40,
            n_inputs: 1,
            n_outputs: 3,
            seed: Some(5),
        },
        model: TrainedModel::Proposed(model),
    };
    assert_eq!(std::fs::read(d.join("m.mrvr")).unwrap(), to_bytes(&file));
}

#[test]
fn existing_method_prediction_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&mrvr(&["simulate", "--v", "2", "--n", "60", "--seed", "2", "--out", "s.csv"], d));
    ok(&mrvr(
        &["train", "--data", "s.csv", "--method", "existing", "--width", "1.6", "--seed", "1", "--out", "m.mrvr"],
        d,
    ));
    std::fs::write(d.join("q.csv"), "x1\n0.5\n-3\n").unwrap();
    let out = ok(&mrvr(&["predict", "--model", "m.mrvr", "--data", "q.csv", "--out", "p.csv"], d));
    assert!(!out.contains("rmse"));
    let p = std::fs::read_to_string(d.join("p.csv")).unwrap();
    assert_eq!(p.lines().next().unwrap(), "x1,mean_1,mean_2,var_1,var_2");
    assert_eq!(p.lines().count(), 3);
}

#[test]
fn missing_seed_is_generated_and_printed() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&mrvr(&["simulate", "--v", "1", "--n", "10", "--out", "s.csv"], dir.path()));
    assert!(out.lines().any(|l| l.starts_with("seed: ")));
}

#[test]
fn usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = mrvr(&["train", "--method", "proposed", "--width", "1.6", "--out", "m.mrvr"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--data"));
    assert_eq!(mrvr(&["frobnicate"], d).status.code(), Some(2));
    assert_eq!(mrvr(&["train", "--bogus"], d).status.code(), Some(2));
    assert_eq!(
        mrvr(&["train", "--data", "a.csv", "--method", "other", "--width", "1", "--out", "m"], d).status.code(),
        Some(2)
    );

    let missing = mrvr(&["train", "--data", "nope.csv", "--method", "proposed", "--width", "1.6", "--out", "m"], d);
    assert_eq!(missing.status.code(), Some(3));

    std::fs::write(d.join("bad.csv"), "x1,t1\n1,2\n2,nan\n").unwrap();
    let bad = mrvr(&["train", "--data", "bad.csv", "--method", "existing", "--width", "1.6", "--out", "m"], d);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("row 3, column 2"));

    std::fs::write(d.join("junk.mrvr"), b"MRVR\x07").unwrap();
    std::fs::write(d.join("q.csv"), "x1\n1\n").unwrap();
    let junk = mrvr(&["predict", "--model", "junk.mrvr", "--data", "q.csv", "--out", "p.csv"], d);
    assert_eq!(junk.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&junk.stderr).contains("version"));
}

#[test]
fn numerical_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // identical inputs with opposite targets: no basis explains anything
    std::fs::write(d.join("flat.csv"), "x1,t1\n0,1\n0,-1\n").unwrap();
    let out = mrvr(&["train", "--data", "flat.csv", "--method", "proposed", "--width", "1", "--seed", "1", "--out", "m"], d);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn benchmark_writes_five_measure_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(&mrvr(&["benchmark", "--grid", "V=1;N=50", "--reps", "3", "--seed", "4", "--out", "bench"], d));
    assert!(out.contains("rmse"));
    let csv = std::fs::read_to_string(d.join("bench/report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "V,N,measure,median_existing,median_proposed,difference,p_value,n_ok,n_failed");
    assert_eq!(lines.len(), 6);
    let measures: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(
        measures,
        ["runtime_seconds", "entropy_loss", "quadratic_loss", "rmse", "rv_count"]
    );
    assert!(d.join("bench/report.txt").exists());
}
