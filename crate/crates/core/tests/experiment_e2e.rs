use std::fs;
use std::path::Path;

use gaitfuse::experiment::{load_config, read_scores_csv, run_experiment, run_export};
use gaitfuse::{Error, ErrorKind};

fn write_config(dir: &Path, separation: f64, extra: &str) -> std::path::PathBuf {
    let text = format!(
        "experiment.seed = 42\n\
         experiment.split = 0.8\n\
         experiment.out_dir = out\n\
         dataset.kind = synthetic\n\
         dataset.classes = 4\n\
         dataset.samples_per_class = 40\n\
         dataset.timesteps = 10\n\
         dataset.dim1 = 4\n\
         dataset.dim2 = 4\n\
         dataset.separation = {separation}\n\
         sfe.k1 = 3\n\
         sfe.k2 = 3\n\
         corrmnn.hidden = 8\n\
         corrmnn.mlp_widths = 16, 8\n\
         corrmnn.batch_size = 32\n\
         corrmnn.epochs = 10\n\
         hmm.states = 3\n\
         hmm.iterations = 30\n\
         {extra}"
    );
    let path = dir.join("exp.cfg");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn small_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&write_config(dir.path(), 5.0, "")).unwrap();
    let outcome = run_experiment(&cfg).unwrap();
    let out = dir.path().join("out");
    for name in [
        "metrics.csv",
        "confusion.csv",
        "roc_0.csv",
        "roc_3.csv",
        "scores.csv",
        "features.csv",
        "loss_curve.csv",
        "timings.csv",
        "manifest.txt",
        "corrmnn.bin",
        "lda.bin",
        "gmm_direct.bin",
        "hmm_0.bin",
        "hmm_3.txt",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    assert!(fs::read_dir(&out).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
    let m = outcome.metrics.unwrap();
    let total: usize = m.confusion.iter().flatten().sum();
    assert_eq!(total, outcome.split.test.len());
    assert!(m.accuracy > 0.5, "{}", m.accuracy);
    assert!(m.roc.iter().all(|r| r.auc.is_some_and(|a| (0.0..=1.0).contains(&a))));

    let (truth, pred, scores) = read_scores_csv(&out.join("scores.csv")).unwrap();
    let again = gaitfuse::experiment::compute_metrics(&truth, &pred, &scores).unwrap();
    assert_eq!(again, m);

    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value\naccuracy,"));
    assert!(metrics.contains("baseline_sfe_nearest_mean,"));
}

#[test]
fn features_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&write_config(dir.path(), 3.0, "")).unwrap();
    let outcome = run_export(&cfg).unwrap();
    assert!(outcome.metrics.is_none());
    let text = fs::read_to_string(dir.path().join("out/features.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), outcome.features.len() + 1);
    let f0 = &outcome.features[0];
    let width = 1 + f0.f_sp.len() + f0.f_tp.rows() * f0.f_tp.cols();
    assert_eq!(lines[0].split(',').count(), width);
    for (line, f) in lines[1..].iter().zip(&outcome.features) {
        let vals: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        let expected: Vec<f64> = f.f_sp.iter().chain(f.f_tp.as_slice()).copied().collect();
        assert_eq!(vals, expected);
    }
    assert!(!dir.path().join("out/metrics.csv").exists());
}

#[test]
fn same_seed_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), 2.0, "");
    let cfg = load_config(&path).unwrap();
    run_experiment(&cfg).unwrap();
    let a = fs::read(dir.path().join("out/metrics.csv")).unwrap();
    let b_scores = fs::read(dir.path().join("out/scores.csv")).unwrap();
    run_experiment(&cfg).unwrap();
    assert_eq!(a, fs::read(dir.path().join("out/metrics.csv")).unwrap());
    assert_eq!(b_scores, fs::read(dir.path().join("out/scores.csv")).unwrap());
}

#[test]
fn failing_stage_is_named_and_outputs_removed() {
    let dir = tempfile::tempdir().unwrap();
    // more LDA dimensions than classes allow: fails in the sfe stage, after loading
    let cfg = load_config(&write_config(dir.path(), 5.0, "sfe.d_out = 7\n")).unwrap();
    let err = run_experiment(&cfg).unwrap_err();
    match &err {
        Error::Stage { stage, .. } => assert_eq!(*stage, "sfe"),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(err.kind(), ErrorKind::Data);
    let leftover: Vec<_> = fs::read_dir(dir.path().join("out")).unwrap().collect();
    assert!(leftover.is_empty());
}

#[test]
fn records_dataset_from_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg_text = String::from(
        "experiment.seed = 1\nexperiment.split_unit = record\ndataset.kind = records\n\
         dataset.classes = slow, fast\ndataset.timestep1 = 4\ndataset.timestep2 = 8\n\
         dataset.ch1_columns = a, b\ndataset.ch2_columns = 0\n\
         sfe.k1 = 2\nsfe.k2 = 2\ncorrmnn.hidden = 4\ncorrmnn.mlp_widths = 4\ncorrmnn.epochs = 2\n\
         corrmnn.k_corr = 2\nhmm.states = 2\nhmm.iterations = 5\n",
    );
    for r in 0..6 {
        let class = if r % 2 == 0 { "slow" } else { "fast" };
        let f = if r % 2 == 0 { 0.1 } else { 0.9 };
        let mut c1 = String::from("a,b\n");
        let mut c2 = String::from("force\n");
        for t in 0..40 {
            let x = t as f64;
            c1.push_str(&format!("{},{}\n", (x * f).sin() + 0.01 * r as f64, (x * f).cos()));
            c2.push_str(&format!("{}\n", (0.5 * x * f).sin() + 0.1 * (x * 1.7).cos()));
            c2.push_str(&format!("{}\n", (0.5 * x * f + 0.25).sin()));
        }
        fs::write(dir.path().join(format!("r{r}_1.csv")), c1).unwrap();
        fs::write(dir.path().join(format!("r{r}_2.csv")), c2).unwrap();
        cfg_text.push_str(&format!("dataset.record = {class}, csv, r{r}_1.csv, csv, r{r}_2.csv\n"));
    }
    let path = dir.path().join("rec.cfg");
    fs::write(&path, cfg_text).unwrap();
    let cfg = load_config(&path).unwrap();
    let outcome = run_experiment(&cfg).unwrap();
    assert_eq!(outcome.class_names, vec!["slow", "fast"]);
    let m = outcome.metrics.unwrap();
    assert_eq!(m.confusion.len(), 2);
    let manifest = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 7);
}
