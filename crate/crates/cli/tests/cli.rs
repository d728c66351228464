use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdtwin::dsl::parse_model_spec;
use hdtwin::engine::{read_split_dir, Model};
use hdtwin::optim::{params_from_table, parse_params_table};
use hdtwin::orchestrator::read_run_manifest;

fn hdtwin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdtwin"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/cancer-chemo-radio")
}

/// Parses the last `METRICS` line.
fn metrics(o: &Output) -> BTreeMap<String, String> {
    let out = stdout(o);
    let last = out.lines().last().unwrap_or_default();
    assert!(last.starts_with("METRICS"), "last line is not a metrics line: {out}");
    last.split_whitespace()
        .skip(1)
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn write_run_config(dir: &Path, replay: &Path, seeds: &str, out: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        format!(
            "system = \"cancer-chemo-radio\"\nmethod = \"evolve\"\nseeds = {seeds}\n\
             client = \"replay:{}\"\nout = \"{out}\"\n\n\
             [evolve]\ngenerations = 3\n\n[evolve.optim]\nmax_epochs = 15\npatience = 5\nbatch_size = 256\n\n\
             [generator]\ntrajectories = 8\n",
            replay.display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn usage_errors_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(hdtwin(&["frobnicate"], tmp.path()).status.code(), Some(2));
    assert_eq!(hdtwin(&["gen-data", "--sytem", "cancer"], tmp.path()).status.code(), Some(2));
    let o = hdtwin(&["gen-data", "--system", "nope", "--out", "d"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("d").exists());
}

#[test]
fn help_lists_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdtwin(&["fit", "--help"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let h = stdout(&o);
    for needle in ["--learning-rate", "default: 0.01", "--patience", "default: 20", "--max-epochs", "default: 2000"] {
        assert!(h.contains(needle), "missing {needle}:\n{h}");
    }
    let h = stdout(&hdtwin(&["evolve", "--help"], tmp.path()));
    for needle in ["generations = 20", "capacity = 16", "temperature = 0.7", "human_feedback_dir", "[sindy]"] {
        assert!(h.contains(needle), "missing {needle}:\n{h}");
    }
    let h = stdout(&hdtwin(&["baseline", "--help"], tmp.path()));
    for needle in ["--ood-train-range", "default: 0,574", "--sindy-degree", "--intervention-day"] {
        assert!(h.contains(needle), "missing {needle}:\n{h}");
    }
}

#[test]
fn gen_data_writes_three_splits_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hdtwin(&["gen-data", "--system", "cancer", "--seed", "7", "--out", "d", "--trajectories", "4"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = tmp.path().join("d");
    assert!(d.join("manifest.toml").is_file());
    for s in ["train", "val", "test"] {
        assert_eq!(read_split_dir(&d.join(s)).unwrap().trajectories.len(), 4);
    }
    assert_eq!(metrics(&o)["seed"], "7");
}

#[test]
fn fit_then_eval_matches_library_values() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    assert!(hdtwin(&["gen-data", "--system", "cancer-chemo-radio", "--out", "d", "--trajectories", "6"], t)
        .status
        .success());
    let spec = fixtures().join("gen-02.hdt");
    let o = hdtwin(
        &["fit", "--spec", spec.to_str().unwrap(), "--data", "d", "--out", "f", "--max-epochs", "10", "--patience", "5"],
        t,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(metrics(&o)["epochs_run"], "10");

    let o = hdtwin(&["eval", "--spec", "f/model.hdt", "--params", "f/params.tbl", "--data", "d/test"], t);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = metrics(&o);

    let ds = read_split_dir(&t.join("d/test")).unwrap();
    let spec = parse_model_spec(&fs::read_to_string(t.join("f/model.hdt")).unwrap()).unwrap();
    let model = Model::compile(&spec, &ds.schema).unwrap();
    let entries = parse_params_table(&fs::read_to_string(t.join("f/params.tbl")).unwrap()).unwrap();
    let p = params_from_table(model.layout().clone(), &entries).unwrap();
    let lib = model.per_component_mse(&p, &ds.transitions()).unwrap();

    let close = |key: &str, want: f64| {
        let got: f64 = m[key].parse().unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{key}: {got} vs {want}");
    };
    close("upsilon", lib.upsilon);
    for (name, d) in ds.schema.state_names().zip(&lib.delta) {
        close(&format!("delta.{name}"), *d);
    }
}

#[test]
fn eval_rejects_mismatched_params() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    hdtwin(&["gen-data", "--system", "cancer-chemo-radio", "--out", "d", "--trajectories", "2"], t);
    fs::write(t.join("p.tbl"), "alpha 0.1\n").unwrap();
    let spec = fixtures().join("gen-02.hdt");
    let o = hdtwin(&["eval", "--spec", spec.to_str().unwrap(), "--params", "p.tbl", "--data", "d/test"], t);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn replayed_evolve_archives_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = write_run_config(t, &fixtures().join("replay.txt"), "[0, 1]", "runs/a");
    let o1 = hdtwin(&["evolve", "--config", cfg.to_str().unwrap()], t);
    assert!(o1.status.success(), "{}", String::from_utf8_lossy(&o1.stderr));
    let m = metrics(&o1);
    assert_eq!(m["seeds"], "2");
    assert_eq!(m["failures"], "0");

    let a = t.join("runs/a");
    for seed in ["seed-0", "seed-1"] {
        let man = read_run_manifest(&a.join(seed)).unwrap();
        assert_eq!(man.generations_run, 3);
        assert!(man.test.t_mse.is_finite());
        for f in ["best.hdt", "best.tbl", "report.csv", "transcript/replay.txt", "population/gen-001/candidate.hdt"] {
            assert!(a.join(seed).join(f).is_file(), "{seed}/{f} missing");
        }
    }

    let o2 = hdtwin(&["evolve", "--config", cfg.to_str().unwrap(), "--out", "runs/b"], t);
    assert!(o2.status.success());
    assert_eq!(tree(&a), tree(&t.join("runs/b")));
}

#[test]
fn config_problems_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = write_run_config(t, &t.join("missing.txt"), "[0]", "runs");
    assert_eq!(hdtwin(&["evolve", "--config", cfg.to_str().unwrap()], t).status.code(), Some(2));

    fs::write(t.join("bad.toml"), "system = \"cancer\"\ncolour = \"blue\"\n").unwrap();
    assert_eq!(hdtwin(&["evolve", "--config", "bad.toml"], t).status.code(), Some(2));
    fs::write(t.join("bad.toml"), "system = \"cancer\"\nmethod = \"baseline:nope\"\n").unwrap();
    assert_eq!(hdtwin(&["evolve", "--config", "bad.toml"], t).status.code(), Some(2));
    fs::write(t.join("bad.toml"), "system = \"cancer\"\n[evolve]\ngenerations = 0\n").unwrap();
    assert_eq!(hdtwin(&["evolve", "--config", "bad.toml"], t).status.code(), Some(2));
    assert!(!t.join("runs").exists());
}

#[test]
fn exhausted_replay_is_a_transport_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();

    fs::write(t.join("empty.txt"), "hdtwin-replay 1\n").unwrap();
    let cfg = write_run_config(t, &t.join("empty.txt"), "[0]", "runs/empty");
    let o = hdtwin(&["evolve", "--config", cfg.to_str().unwrap()], t);
    assert_eq!(o.status.code(), Some(4));
    assert!(t.join("runs/empty/seed-0/error.txt").is_file());

    // One proposal only: the run keeps its result but reports the interruption.
    let full = fs::read_to_string(fixtures().join("replay.txt")).unwrap();
    let second = full.match_indices("\n>>> ").nth(1).unwrap().0;
    fs::write(t.join("short.txt"), &full[..=second]).unwrap();
    let cfg = write_run_config(t, &t.join("short.txt"), "[0]", "runs/short");
    let o = hdtwin(&["evolve", "--config", cfg.to_str().unwrap()], t);
    assert_eq!(o.status.code(), Some(4));
    let man = read_run_manifest(&t.join("runs/short/seed-0")).unwrap();
    assert!(man.interrupted.is_some());
    assert_eq!(man.best.generation, 1);
}

#[test]
fn proposals_that_never_validate_are_run_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let mut replay = String::from("hdtwin-replay 1\n");
    for _ in 0..4 {
        let body = "not a spec";
        replay.push_str(&format!(">>> propose {}\n{body}\n", body.len()));
    }
    fs::write(t.join("junk.txt"), replay).unwrap();
    let cfg = write_run_config(t, &t.join("junk.txt"), "[0]", "runs");
    fs::write(&cfg, fs::read_to_string(&cfg).unwrap().replace("generations = 3", "generations = 1")).unwrap();
    let o = hdtwin(&["evolve", "--config", cfg.to_str().unwrap()], t);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn report_aggregates_seeds_with_student_t() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    for seed in ["0", "1", "2"] {
        let out = format!("runs/seed-{seed}");
        let o = hdtwin(
            &["baseline", "--system", "lv2", "--id", "lv2", "--seed", seed, "--out", &out, "--trajectories", "3", "--max-epochs", "20"],
            t,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let values: Vec<f64> = (0..3)
        .map(|s| read_run_manifest(&t.join(format!("runs/seed-{s}"))).unwrap().test.t_mse)
        .collect();
    let o = hdtwin(&["report", "runs", "--out", "report.csv"], t);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = metrics(&o);
    assert_eq!(m["method"], "baseline:lv2");
    assert_eq!(m["n"], "3");

    let mean = values.iter().sum::<f64>() / 3.0;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    // t quantile 0.975 with 2 degrees of freedom.
    let hw = 4.302_652_729_911_275 * sd / 3f64.sqrt();
    let got_mean: f64 = m["t_mse_mean"].parse().unwrap();
    let got_hw: f64 = m["t_mse_ci95"].parse().unwrap();
    assert!((got_mean - mean).abs() <= 1e-12 * mean.abs().max(1e-300));
    assert!((got_hw - hw).abs() <= 1e-9 * hw.abs().max(1e-300));
    assert!(fs::read_to_string(t.join("report.csv")).unwrap().starts_with("system,method,metric,n,"));
}
