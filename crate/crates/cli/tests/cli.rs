use std::path::Path;
use std::process::Command as Proc;

use loglo_cli::commands::{budget_report, group_thousands, BudgetArgs};
use loglo_cli::{parse_config, parse_config_str, run_command, Pde};
use loglo_core::datagen::Dataset;
use loglo_core::metrics::MetricReport;
use loglo_core::operator::load_checkpoint;
use loglo_core::spectra::radial_bin_map;
use loglo_core::Error;

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_loglo"))
}

fn run(args: &[&str]) -> i32 {
    run_command(std::iter::once("loglo").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: &str = r#"{
  "pde": "heat", "seed": 3,
  "data": {"n_traj": 3, "n_t": 5, "nx": 16, "ny": 16},
  "model": {"width": 4, "n_layers": 1, "global_modes": [4, 4], "patch_size": 4},
  "train": {"epochs": 2, "batch_size": 4, "loss": {"radial_cutoffs": [2, 5]}}
}"#;

fn tiny_setup(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, TINY).unwrap();
    cfg
}

#[test]
fn minimal_config_resolves_defaults() {
    let c = parse_config_str(r#"{"pde":"heat"}"#).unwrap();
    assert_eq!(c.pde, Pde::Heat);
    assert_eq!(c.model.width, 65);
    assert_eq!(c.model.global_modes, (40, 40));
    assert_eq!(c.model.patch_size, 16);
    assert_eq!(c.train.loss.radial_cutoffs, (4, 12));
    assert_eq!(c.data.dt, Some(0.01));
    assert_eq!(c.train.seed, c.seed);
}

#[test]
fn config_errors_name_the_field() {
    for (text, needle) in [
        (r#"{"pde":"heat","bogus":1}"#, "bogus"),
        (r#"{"model":{"widht":3}}"#, "model"),
        (r#"{"train":{"loss":{"lambda":"x"}}}"#, "train.loss.lambda"),
        (r#"{"pde":"burgers"}"#, "pde"),
    ] {
        match parse_config_str(text) {
            Err(Error::Config(m)) => assert!(m.contains(needle), "{m}"),
            other => panic!("{text}: {other:?}"),
        }
    }
    assert!(matches!(
        parse_config_str(r#"{"train":{"loss":{"lambda":1.5}}}"#),
        Err(Error::Config(_))
    ));
    assert!(matches!(parse_config(Path::new("/nonexistent/cfg.json")), Err(Error::Io { .. })));
}

#[test]
fn resolved_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config(&tiny_setup(dir.path())).unwrap();
    let written = c.write_resolved(dir.path()).unwrap();
    assert_eq!(parse_config(&written).unwrap(), c);
}

#[test]
fn budget_table() {
    let out = bin().args(["budget", "--dc", "65", "--k", "40", "--l", "4", "--p", "16"]).output().unwrap();
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.contains("27,040,000") && s.contains("2,433,600"), "{s}");

    let args = BudgetArgs {
        dc: 65,
        k: 40,
        l: 4,
        p: 16,
        dim: 2,
        nx: Some(128),
        ny: Some(128),
        nz: None,
        batch: 1,
        json: true,
        out: None,
    };
    let r = budget_report(&args).unwrap();
    assert_eq!((r.global, r.local), (27_040_000, 2_433_600));
    assert!(r.local < r.global);
    assert_eq!(group_thousands(1_146_880), "1,146,880");
    assert_eq!(group_thousands(999), "999");
}

#[test]
fn errors_are_one_json_line() {
    let cases: [(&[&str], i32, &str); 3] = [
        (&["frobnicate"], 2, "usage"),
        (&["budget", "--dc", "0", "--k", "1", "--l", "1", "--p", "2"], 2, "config"),
        (&["train", "--config", "/nonexistent.json"], 3, "io"),
    ];
    for (args, code, kind) in cases {
        let out = bin().args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
        assert_eq!(v["error"], kind);
        assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let out = bin()
        .env("LOGLO_THREADS", "zero")
        .args(["budget", "--dc", "2", "--k", "1", "--l", "1", "--p", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let ok = bin()
        .env("LOGLO_THREADS", "1")
        .args(["budget", "--dc", "2", "--k", "1", "--l", "1", "--p", "2"])
        .output()
        .unwrap();
    assert!(ok.status.success());
}

#[test]
fn generate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(run(&["generate", "--config", p(&cfg), "--out", p(d)]), 0);
    }
    for f in ["meta.json", "data.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let c = dir.path().join("c");
    assert_eq!(run(&["generate", "--config", p(&cfg), "--out", p(&c), "--seed", "4", "--pde", "advdiff"]), 0);
    let ds = Dataset::read(&c).unwrap();
    assert_eq!((ds.meta.pde.as_str(), ds.meta.seed), ("advdiff", 4));
}

#[test]
fn zero_epochs_writes_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--config", p(&cfg), "--epochs", "0", "--out", p(&out)]), 0);
    assert!(out.join("checkpoint_0.bin").exists());
    assert!(out.join("resolved_config.json").exists());
    let log = std::fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1);
    let resolved = parse_config(&out.join("resolved_config.json")).unwrap();
    assert_eq!(resolved.train.epochs, 0);
    assert_eq!(resolved.out_dir, out);
}

#[test]
fn training_is_reproducible_and_evaluate_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let data = dir.path().join("data");
    assert_eq!(run(&["generate", "--config", p(&cfg), "--out", p(&data)]), 0);
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for r in [&r1, &r2] {
        assert_eq!(run(&["train", "--config", p(&cfg), "--train-data", p(&data), "--out", p(r)]), 0);
    }
    for f in ["checkpoint_2.bin", "checkpoint_2.json"] {
        assert_eq!(std::fs::read(r1.join(f)).unwrap(), std::fs::read(r2.join(f)).unwrap(), "{f}");
    }

    let ck = r1.join("checkpoint_2.bin");
    let ev = dir.path().join("ev");
    let args = ["evaluate", "--checkpoint", p(&ck), "--data", p(&data), "--steps", "3", "--i-low", "2", "--i-high", "5", "--out", p(&ev)];
    assert_eq!(run(&args), 0);
    let got: serde_json::Value = serde_json::from_slice(&std::fs::read(ev.join("metrics.json")).unwrap()).unwrap();

    let model = load_checkpoint(&ck, None).unwrap().model;
    let ds = Dataset::read(&data).unwrap();
    let spec = radial_bin_map(16, 16, 2, 5).unwrap();
    let (x, y) = ds.one_step_pairs(0..3).unwrap();
    let one = MetricReport::evaluate(&[model.forward(&x).unwrap()], &[y], &spec).unwrap();
    assert_eq!(got["one_step"], serde_json::to_value(&one).unwrap());

    let (u0, target) = ds.rollout_window(0..3, 0, 3).unwrap();
    let r = loglo_core::train::rollout(&model, &u0, 3).unwrap();
    let k = MetricReport::evaluate(&r.frames, &target, &spec).unwrap();
    assert_eq!(got["k_step"], serde_json::to_value(&k).unwrap());
    assert!(ev.join("metrics.csv").exists() && ev.join("rollout_metrics.csv").exists());
}

#[test]
fn identical_prediction_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let data = dir.path().join("data");
    assert_eq!(run(&["generate", "--config", p(&cfg), "--out", p(&data)]), 0);
    let ev = dir.path().join("ev");
    let d = p(&data);
    assert_eq!(run(&["evaluate", "--pred", d, "--target", d, "--steps", "2", "--i-low", "2", "--i-high", "5", "--out", p(&ev)]), 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(ev.join("metrics.json")).unwrap()).unwrap();
    for rep in ["one_step", "k_step"] {
        let o = v[rep].as_object().unwrap();
        for (name, val) in o {
            match name.as_str() {
                "pearson_by_t" => assert!(val.as_array().unwrap().iter().all(|x| x.as_f64() == Some(1.0))),
                "by_step" => {}
                _ => assert_eq!(val.as_f64(), Some(0.0), "{rep}.{name}"),
            }
        }
    }
}

#[test]
fn rollout_writes_trajectory_and_pearson() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let data = dir.path().join("data");
    let run_dir = dir.path().join("run");
    assert_eq!(run(&["generate", "--config", p(&cfg), "--out", p(&data)]), 0);
    assert_eq!(run(&["train", "--config", p(&cfg), "--train-data", p(&data), "--epochs", "1", "--out", p(&run_dir)]), 0);
    let ro = dir.path().join("ro");
    let ck = run_dir.join("checkpoint_1.bin");
    let args = ["rollout", "--checkpoint", p(&ck), "--data", p(&data), "--steps", "3", "--t0", "1", "--i-low", "2", "--i-high", "5", "--out", p(&ro)];
    assert_eq!(run(&args), 0);
    let traj = Dataset::read(&ro.join("trajectory")).unwrap();
    let truth = Dataset::read(&data).unwrap();
    assert_eq!(traj.meta.n_t, 4);
    assert_eq!(traj.frame(2, 0).unwrap().data(), truth.frame(2, 1).unwrap().data());
    let pearson = std::fs::read_to_string(ro.join("pearson_by_t.csv")).unwrap();
    assert_eq!(pearson.lines().count(), 4);

    // the written trajectory scores like the in-process rollout
    let model = load_checkpoint(&ck, None).unwrap().model;
    let first = model.forward(&truth.frame(0, 1).unwrap()).unwrap();
    let stored = traj.frame(0, 1).unwrap();
    for (a, b) in first.data().iter().zip(stored.data()) {
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3), "{a} vs {b}");
    }

    // too long a horizon for the data
    assert_eq!(run(&["rollout", "--checkpoint", p(&ck), "--data", p(&data), "--steps", "20", "--out", p(&ro)]), 2);
}

#[test]
fn spectra_cutoffs_change_only_band_labels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let data = dir.path().join("data");
    let run_dir = dir.path().join("run");
    assert_eq!(run(&["generate", "--config", p(&cfg), "--out", p(&data)]), 0);
    assert_eq!(run(&["train", "--config", p(&cfg), "--train-data", p(&data), "--epochs", "0", "--out", p(&run_dir)]), 0);
    let ck = run_dir.join("checkpoint_0.bin");
    let read = |lo: &str, hi: &str| {
        let out = dir.path().join(format!("sp{lo}"));
        let args = ["spectra", "--checkpoint", p(&ck), "--data", p(&data), "--steps", "2", "--i-low", lo, "--i-high", hi, "--out", p(&out)];
        assert_eq!(run(&args), 0);
        let mut r = csv::Reader::from_path(out.join("spectra.csv")).unwrap();
        assert_eq!(r.headers().unwrap(), vec!["channel", "timestep", "radius", "band", "value"]);
        r.records()
            .map(|x| x.unwrap().iter().map(str::to_owned).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    let a = read("2", "5");
    let b = read("3", "6");
    assert_eq!(a.len(), 2 * 10);
    assert_eq!(a.len(), b.len());
    let mut differs = false;
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((&x[0..3], &x[4]), (&y[0..3], &y[4]));
        differs |= x[3] != y[3];
    }
    assert!(differs);

    let en = dir.path().join("energy");
    let args = ["spectra", "--pred", p(&data), "--target", p(&data), "--kind", "energy", "--i-low", "2", "--i-high", "5", "--out", p(&en)];
    assert_eq!(run(&args), 0);
}
