//! Exit-gate checks, one pass/fail line per criterion on stdout.
//!
//! Lines are written straight to the process stdout so they show without
//! `--nocapture`; a failing criterion also fails its test.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hdtwin::agents::{
    ClientError, EndpointConfig, HttpClient, LlmClient, ModelingContext, Population, PopulationEntry, ScriptedClient,
    API_KEY_ENV,
};
use hdtwin::baselines::{sindy_fit, SindyConfig};
use hdtwin::dsl::{parse_model_spec, ModelSpec};
use hdtwin::engine::{ComponentLoss, DataBundle, Model, ParamVector, Split};
use hdtwin::optim::{adam_update, fit, OptimConfig};
use hdtwin::orchestrator::{
    evolve, fit_baseline, read_run_manifest, rollout_mse_from, run_experiment, scale_param, write_run_archive,
    EvolveConfig, ExperimentConfig, Method,
};
use hdtwin::systems::{builtin_system, generate_dataset, GenConfig, Intervention, SYSTEM_IDS};
use rand::Rng;

fn report(n: &str, name: &str, start: Instant, limit: Option<Duration>, outcome: Result<String, String>) {
    let secs = start.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(d), Some(l)) if secs > l => Err(format!("{d}; took {:.1}s, limit {}s", secs.as_secs_f64(), l.as_secs())),
        (o, _) => o,
    };
    let (status, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let line = format!("acceptance {n} {name}: {status} ({detail}; {:.1}s)\n", secs.as_secs_f64());
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    if let Err(d) = outcome {
        panic!("criterion {n} failed: {d}");
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn generated(id: &str, cfg: GenConfig) -> DataBundle {
    generate_dataset(&builtin_system(id).unwrap(), &cfg).unwrap()
}

fn with_inits(mut spec: ModelSpec, inits: &[(&str, f64)]) -> ModelSpec {
    for (name, v) in inits {
        spec.params.iter_mut().find(|p| p.name == *name).unwrap().init = *v;
    }
    spec
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let s = common::two_state_schema();
    let mut r = common::rng(101);
    let (mut cases, mut worst) = (0, 0.0f64);
    while cases < 150 {
        let spec = common::random_spec(&mut r);
        let m = Model::compile(&spec, &s).unwrap();
        let mut p = m.init_params(r.random());
        for v in p.values.iter_mut() {
            *v += r.random_range(-0.1..0.1);
        }
        let set = common::random_transitions(&mut r, 16);
        let batch: Vec<usize> = (0..r.random_range(1..16)).map(|_| r.random_range(0..16)).collect();
        let Ok((loss, _)) = m.loss_gradient(&p, &set, &batch) else {
            continue;
        };
        if !(loss.is_finite() && loss < 1e6) {
            continue;
        }
        worst = worst.max(common::gradient_check(&m, &p, &set, &batch));
        cases += 1;
    }
    let detail = format!("{cases} cases, worst relative error {worst:.2e}");
    let outcome = if worst <= 1e-4 { Ok(detail) } else { Err(detail) };
    report("1", "gradient-correctness", start, Some(Duration::from_secs(60)), outcome);
}

/// Fits from every start and keeps the lowest validation loss, the same
/// selection rule the evolution loop applies across candidates.
fn multi_start_fit(
    sys: &hdtwin::systems::SystemDef,
    data: &DataBundle,
    starts: &[Vec<(&str, f64)>],
) -> (Model, hdtwin::optim::FitResult) {
    starts
        .iter()
        .map(|inits| {
            let spec = with_inits(sys.truth.clone(), inits);
            let model = Model::compile(&spec, data.schema()).unwrap();
            let r = fit(
                &model,
                ParamVector::init(&spec, 0),
                &data.train.transitions(),
                &data.val.transitions(),
                &OptimConfig::default(),
            )
            .unwrap();
            (model, r)
        })
        .min_by(|a, b| a.1.val.upsilon.total_cmp(&b.1.val.upsilon))
        .unwrap()
}

/// Each of ρ and K a third above or below its true value.
fn rho_k_starts(rest: &[(&'static str, f64)]) -> Vec<Vec<(&'static str, f64)>> {
    let mut out = Vec::new();
    for fr in [2.0 / 3.0, 4.0 / 3.0] {
        for fk in [2.0 / 3.0, 4.0 / 3.0] {
            let mut v = vec![("rho", 7e-5 * fr), ("K", 30.0 * fk)];
            v.extend_from_slice(rest);
            out.push(v);
        }
    }
    out
}

#[test]
fn criterion_02_oracle_recovery() {
    let start = Instant::now();
    let sys = builtin_system("cancer").unwrap();
    let data = generated("cancer", GenConfig::default());
    let (model, r) = multi_start_fit(&sys, &data, &rho_k_starts(&[]));
    let test = model.one_step_mse(&r.params, &data.test.transitions()).unwrap();
    let rho = r.params.scalar("rho").unwrap();
    let k = r.params.scalar("K").unwrap();
    let (er, ek) = (rel(rho, 7e-5), rel(k, 30.0));
    let detail = format!(
        "best of 4 starts: rho {rho:.4e} ({:.2}%), K {k:.4} ({:.2}%), test MSE {test:.3e}",
        100.0 * er,
        100.0 * ek,
    );
    let outcome = if er <= 0.05 && ek <= 0.05 && test < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    };
    report("2", "oracle-recovery", start, Some(Duration::from_secs(180)), outcome);
}

fn replay_client() -> ScriptedClient {
    ScriptedClient::from_replay_text(&fs::read_to_string(fixture("cancer-chemo-radio/replay.txt")).unwrap()).unwrap()
}

#[test]
fn criterion_03_replay_evolution() {
    let start = Instant::now();
    let sys = builtin_system("cancer-chemo-radio").unwrap();
    let data = generated("cancer-chemo-radio", GenConfig::default());
    let ctx = ModelingContext::for_system(&sys, 6);
    let cfg = EvolveConfig {
        generations: 6,
        ..EvolveConfig::default()
    };
    let run = evolve(&ctx, &data, &cfg, &mut replay_client()).unwrap();
    let monotone = run.curve.windows(2).all(|w| w[1] <= w[0]);
    let t = run.t_mse();
    let curve: Vec<String> = run.curve.iter().map(|v| format!("{v:.3e}")).collect();
    let detail = format!(
        "{} generations, best-υ curve [{}], best from generation {}, test MSE {t:.4}",
        run.generations.len(),
        curve.join(", "),
        run.best.generation
    );
    let outcome = if run.generations.len() == 6 && monotone && t <= 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    };
    report("3", "replay-evolution", start, Some(Duration::from_secs(600)), outcome);
}

#[test]
fn criterion_04_sindy_sanity() {
    let start = Instant::now();
    let mut problems = Vec::new();

    let sys = builtin_system("cancer").unwrap();
    let data = generated("cancer", GenConfig::default());
    let f = sindy_fit(&data.train, &SindyConfig::default()).unwrap();
    let m = Model::compile(&f.spec, &sys.schema).unwrap();
    let cancer = m.one_step_mse(&m.init_params(0), &data.test.transitions()).unwrap();
    if !(100.0..=1000.0).contains(&cancer) {
        problems.push(format!("lung cancer test MSE {cancer:.4} outside [100, 1000]"));
    }

    let labels = |f: &hdtwin::baselines::SindyFit, j: usize| -> Vec<String> {
        f.support(j).iter().map(|k| f.labels[*k].clone()).collect()
    };
    let (h, l) = ("hare_population", "lynx_population");
    let lv2: Vec<Vec<String>> = vec![vec![h.into(), format!("{h}*{l}")], vec![l.into(), format!("{h}*{l}")]];
    let (x, y, z) = ("prey_population", "intermediate_population", "top_predators_population");
    let lv3: Vec<Vec<String>> = vec![
        vec![x.into(), format!("{x}*{y}"), format!("{x}*{z}")],
        vec![y.into(), format!("{x}*{y}")],
        vec![z.into(), format!("{x}*{z}")],
    ];
    for (id, want) in [("lv2", lv2), ("lv3-plankton", lv3)] {
        let data = generated(id, GenConfig::default());
        let f = sindy_fit(&data.train, &SindyConfig::default()).unwrap();
        for (j, w) in want.iter().enumerate() {
            let got = labels(&f, j);
            if &got != w {
                problems.push(format!("{id} component {j}: support {got:?}, expected {w:?}"));
            }
        }
    }
    let detail = format!("lung cancer test MSE {cancer:.4}");
    let outcome = if problems.is_empty() {
        Ok(format!("{detail}, LV2/LV3 supports exact"))
    } else {
        Err(problems.join("; "))
    };
    report("4", "sindy-sanity", start, Some(Duration::from_secs(120)), outcome);
}

#[test]
fn criterion_05_loss_identities() {
    let start = Instant::now();
    let mut problems = Vec::new();

    let s = common::two_state_schema();
    let mut r = common::rng(55);
    let mut worst_mean: f64 = 0.0;
    for _ in 0..50 {
        let spec = common::random_spec(&mut r);
        let m = Model::compile(&spec, &s).unwrap();
        let set = common::random_transitions(&mut r, 40);
        let Ok(l) = m.per_component_mse(&m.init_params(r.random()), &set) else {
            continue;
        };
        let mean = l.delta.iter().sum::<f64>() / l.delta.len() as f64;
        worst_mean = worst_mean.max((l.upsilon - mean).abs() / mean.abs().max(1.0));
    }
    if worst_mean > 1e-12 {
        problems.push(format!("|υ - mean(δ)| reached {worst_mean:e}"));
    }

    let mut worst_self: f64 = 0.0;
    for id in SYSTEM_IDS {
        let sys = builtin_system(id).unwrap();
        let b = generated(
            id,
            GenConfig {
                trajectories: Some(20),
                seed: 3,
                ..GenConfig::default()
            },
        );
        let m = Model::compile(&sys.truth, &sys.schema).unwrap();
        let p = m.init_params(0);
        for split in Split::ALL {
            let mse = m.one_step_mse(&p, &b.split(split).transitions()).unwrap();
            worst_self = worst_self.max(mse);
        }
    }
    if worst_self > 1e-12 {
        problems.push(format!("self-consistency MSE reached {worst_self:e}"));
    }

    let b = generated("seir-covid", GenConfig::default());
    let mut worst_sum: f64 = 0.0;
    for split in Split::ALL {
        for traj in &b.split(split).trajectories {
            for row in &traj.states {
                worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    if worst_sum > 1e-9 {
        problems.push(format!("S+E+I+R drift reached {worst_sum:e}"));
    }

    let outcome = if problems.is_empty() {
        Ok(format!(
            "υ-mean gap {worst_mean:.1e}, self MSE {worst_self:.1e} over {} systems, SEIR drift {worst_sum:.1e}",
            SYSTEM_IDS.len()
        ))
    } else {
        Err(problems.join("; "))
    };
    report("5", "loss-identities", start, None, outcome);
}

#[test]
fn criterion_06_evolvability() {
    let start = Instant::now();
    let data = generated(
        "seir-covid",
        GenConfig {
            intervention: Some(Intervention::default()),
            ..GenConfig::default()
        },
    );
    let fitted = fit_baseline("seir", &data, &OptimConfig::default(), 0).unwrap();
    let entry = PopulationEntry::new(fitted.spec.clone(), fitted.params.clone(), fitted.val.clone(), 1, "seir".into());
    let scaled = scale_param(&entry, "beta", 0.25).unwrap();
    let model = Model::compile(&entry.spec, data.schema()).unwrap();
    let before = rollout_mse_from(&model, &entry.params, &data.test, 19.0).unwrap().total();
    let after = rollout_mse_from(&model, &scaled.params, &data.test, 19.0).unwrap().total();
    let ratio = after / before;
    let detail = format!("day-19 rollout MSE {after:.3e} scaled vs {before:.3e} unscaled, ratio {:.2}%", 100.0 * ratio);
    let outcome = if ratio <= 0.05 { Ok(detail) } else { Err(detail) };
    report("6", "evolvability", start, Some(Duration::from_secs(60)), outcome);
}

#[test]
fn criterion_07_ood_harness() {
    let start = Instant::now();
    let mut problems = Vec::new();
    let sys = builtin_system("cancer-chemo-radio").unwrap();
    let ood = generated(
        "cancer-chemo-radio",
        GenConfig {
            ood: true,
            ..GenConfig::default()
        },
    );
    let vols = |b: &DataBundle, s: Split| -> (f64, f64) {
        b.split(s)
            .trajectories
            .iter()
            .flat_map(|t| t.states.iter().map(|r| r[0]))
            .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let inits = |b: &DataBundle, s: Split| -> (f64, f64) {
        b.split(s)
            .trajectories
            .iter()
            .map(|t| t.states[0][0])
            .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    for s in [Split::Train, Split::Val] {
        let (lo, hi) = inits(&ood, s);
        if lo < 0.0 || hi > 574.0 {
            problems.push(format!("{} initial volumes span [{lo}, {hi}]", s.as_str()));
        }
    }
    let (tlo, thi) = inits(&ood, Split::Test);
    if tlo < 804.0 || thi > 1149.0 {
        problems.push(format!("test initial volumes span [{tlo}, {thi}]"));
    }
    let seen_max = vols(&ood, Split::Train).1.max(vols(&ood, Split::Val).1);
    let test_min = vols(&ood, Split::Test).0;
    if test_min <= seen_max {
        problems.push(format!("visited volumes overlap: test min {test_min} <= train/val max {seen_max}"));
    }

    // Same training distribution, test drawn from it too.
    let iid = generated(
        "cancer-chemo-radio",
        GenConfig {
            dt: Some(1.0 / 24.0),
            init_range: Some((0.0, 574.0)),
            ..GenConfig::default()
        },
    );
    let rest = [("beta_c", 0.028 * 4.0 / 3.0), ("alpha_r", 0.0398 * 4.0 / 3.0), ("beta_r", 0.00398 * 4.0 / 3.0)];
    let (model, r) = multi_start_fit(&sys, &ood, &rho_k_starts(&rest));
    let ood_mse = model.one_step_mse(&r.params, &ood.test.transitions()).unwrap();
    let iid_mse = model.one_step_mse(&r.params, &iid.test.transitions()).unwrap();
    let ratio = ood_mse / iid_mse;
    if !(ratio <= 10.0) {
        problems.push(format!("OOD/IID test MSE ratio {ratio:.3e} (OOD {ood_mse:.3e}, IID {iid_mse:.3e})"));
    }
    let outcome = if problems.is_empty() {
        Ok(format!(
            "test min {test_min:.1} > train/val max {seen_max:.1}; OOD {ood_mse:.3e} vs IID {iid_mse:.3e} (ratio {ratio:.2})"
        ))
    } else {
        Err(problems.join("; "))
    };
    report("7", "ood-harness", start, None, outcome);
}

fn decay_entry(id: usize, loss: f64, generation: usize) -> PopulationEntry {
    let spec = parse_model_spec(&format!(
        "param a{id} = 0.5\nd(prey_population)/dt = -a{id} * prey_population\nd(intermediate_population)/dt = 0\nd(top_predators_population)/dt = 0"
    ))
    .unwrap();
    let params = ParamVector::init(&spec, 0);
    PopulationEntry::new(spec, params, ComponentLoss::from_delta(vec![loss; 3]), generation, format!("model {id}"))
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

#[test]
fn criterion_08_population_and_determinism() {
    let start = Instant::now();
    let mut problems = Vec::new();

    let mut r = common::rng(8);
    for case in 0..300 {
        let cap = r.random_range(1..7);
        let mut pop = Population::new(cap);
        let mut oracle: Vec<(usize, f64, usize)> = Vec::new();
        for arrival in 0..r.random_range(0..40) {
            let id = r.random_range(0..12);
            let loss = if r.random_bool(0.1) {
                f64::INFINITY
            } else {
                r.random_range(0..8) as f64 / 4.0
            };
            pop.insert(decay_entry(id, loss, arrival));
            if loss.is_finite() && !oracle.iter().any(|e| e.0 == id) {
                oracle.push((id, loss, arrival));
                oracle.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.2.cmp(&b.2)));
                oracle.truncate(cap);
            }
            let got: Vec<(usize, f64)> = pop.entries().iter().map(|e| (e.generation, e.upsilon())).collect();
            let want: Vec<(usize, f64)> = oracle.iter().map(|e| (e.2, e.1)).collect();
            if got != want {
                problems.push(format!("case {case}: population {got:?}, oracle {want:?}"));
                break;
            }
        }
    }

    let sys = builtin_system("cancer-chemo-radio").unwrap();
    let ctx = ModelingContext::for_system(&sys, 3);
    let cfg = EvolveConfig {
        generations: 3,
        optim: OptimConfig {
            max_epochs: 30,
            patience: 5,
            batch_size: 256,
            ..OptimConfig::default()
        },
        ..EvolveConfig::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let data = generated(
            "cancer-chemo-radio",
            GenConfig {
                trajectories: Some(40),
                seed: 12,
                ..GenConfig::default()
            },
        );
        let run = evolve(&ctx, &data, &cfg, &mut replay_client()).unwrap();
        let dir = tmp.path().join(name);
        write_run_archive(&dir, &run, &sys.schema).unwrap();
        trees.push(tree(&dir));
    }
    if trees[0] != trees[1] {
        problems.push("archives of identical runs differ".into());
    }
    let outcome = if problems.is_empty() {
        Ok(format!("300 random insert sequences match; archives identical over {} files", trees[0].len()))
    } else {
        Err(problems.join("; "))
    };
    report("8", "population-and-determinism", start, None, outcome);
}

#[test]
fn criterion_09_adam_oracle() {
    let start = Instant::now();
    let cfg = OptimConfig::default();
    // Two steps from w = 1 with gradients 0.5 then -0.25, lr 0.01.
    let (w1, m1, v1) = adam_update(1.0, 0.5, 0.0, 0.0, 1, &cfg);
    let (w2, _, _) = adam_update(w1, -0.25, m1, v1, 2, &cfg);
    // Step 1: m = 0.05, v = 0.00025, bias-corrected 0.5 and 0.25.
    let want1 = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
    // Step 2: m = 0.045 - 0.025 = 0.02, v = 0.00024975 + 0.0000625 = 0.00031225.
    let mhat = 0.02 / (1.0 - 0.81);
    let vhat: f64 = 0.000_312_25 / (1.0 - 0.998_001);
    let want2 = want1 - 0.01 * mhat / (vhat.sqrt() + 1e-8);
    let (e1, e2) = ((w1 - want1).abs(), (w2 - want2).abs());
    let detail = format!("w1 {w1:.15}, w2 {w2:.15}, errors {e1:.1e} and {e2:.1e}");
    let outcome = if e1 <= 1e-12 && e2 <= 1e-12 { Ok(detail) } else { Err(detail) };
    report("9", "adam-oracle", start, None, outcome);
}

#[test]
fn criterion_10_ci_aggregation() {
    let start = Instant::now();
    let mut problems = Vec::new();
    // Two-sided 95% Student-t quantiles by degrees of freedom.
    let t_table = [(1, 12.706_204_736), (2, 4.302_652_730), (4, 2.776_445_105), (9, 2.262_157_163)];
    let mut r = common::rng(10);
    let mut lists: Vec<Vec<f64>> = vec![vec![1.0, 2.0, 3.0]];
    for (df, _) in &t_table {
        lists.push((0..=*df).map(|_| r.random_range(0.0..5.0)).collect());
    }
    for values in &lists {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let t = t_table.iter().find(|(df, _)| *df == n - 1).unwrap().1;
        let want = t * sd / (n as f64).sqrt();

        let got = hdtwin::orchestrator::aggregate(values).unwrap();
        if (got.mean - mean).abs() > 1e-3 || (got.half_width.unwrap() - want).abs() > 1e-3 {
            problems.push(format!("{values:?}: got {got}, oracle {mean} ± {want}"));
        }
    }
    let first = hdtwin::orchestrator::aggregate(&[1.0, 2.0, 3.0]).unwrap();

    // run_experiment over zero-shot seeds: its aggregate must equal the
    // oracle applied to its own per-seed values.
    let sys = builtin_system("seir-covid").unwrap();
    let truth = hdtwin::dsl::canonicalize(&sys.truth);
    let wrong = truth.replace("param beta = 0.3", "param beta = 0.35");
    let replies = [truth.clone(), wrong.clone(), truth.replace("param beta = 0.3", "param beta = 0.2")];
    let mut k = 0;
    let mut clients = |_: u64| -> Result<Box<dyn LlmClient>, ClientError> {
        let text = hdtwin::agents::format_reply(&replies[k % replies.len()], "seir");
        k += 1;
        Ok(Box::new(ScriptedClient::from_texts([text])))
    };
    let cfg = ExperimentConfig {
        data: GenConfig {
            trajectories: Some(4),
            ..GenConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let rep = run_experiment("seir-covid", &Method::ZeroShot, &[0, 1, 2], &cfg, &mut clients).unwrap();
    let values: Vec<f64> = rep.seeds.iter().map(|s| *s.t_mse.as_ref().unwrap()).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let want = 4.302_652_730 * sd / n.sqrt();
    let agg = rep.aggregate.unwrap();
    if (agg.mean - mean).abs() > 1e-3 * mean.abs().max(1e-12) || (agg.half_width.unwrap() - want).abs() > 1e-3 * want.abs().max(1e-12) {
        problems.push(format!("run_experiment: got {agg}, oracle {mean} ± {want}"));
    }
    let outcome = if problems.is_empty() {
        Ok(format!(
            "[1,2,3] -> {:.3} ± {:.3}; {} lists and a 3-seed experiment match",
            first.mean,
            first.half_width.unwrap(),
            lists.len()
        ))
    } else {
        Err(problems.join("; "))
    };
    report("10", "ci-aggregation", start, None, outcome);
}

#[test]
#[ignore = "needs a live chat-completions endpoint and HDTWIN_LLM_API_KEY"]
fn criterion_11_live_llm_smoke() {
    let start = Instant::now();
    let sys = builtin_system("lv2").unwrap();
    let data = generated(
        "lv2",
        GenConfig {
            trajectories: Some(10),
            ..GenConfig::default()
        },
    );
    let mut endpoint = EndpointConfig::default();
    if let Ok(url) = std::env::var("HDTWIN_LLM_BASE_URL") {
        endpoint.base_url = url;
    }
    let mut cfg = EvolveConfig {
        generations: 1,
        ..EvolveConfig::default()
    };
    if let Ok(model) = std::env::var("HDTWIN_LLM_MODEL") {
        cfg.decoding.model = model;
    }
    let outcome = (|| -> Result<String, String> {
        if std::env::var(API_KEY_ENV).is_err() {
            return Err(format!("{API_KEY_ENV} is not set"));
        }
        let mut client = HttpClient::new(&endpoint, &cfg.decoding).map_err(|e| e.to_string())?;
        let ctx = ModelingContext::for_system(&sys, 1);
        let run = evolve(&ctx, &data, &cfg, &mut client).map_err(|e| e.to_string())?;
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        write_run_archive(tmp.path(), &run, &sys.schema).map_err(|e| e.to_string())?;
        let m = read_run_manifest(tmp.path()).map_err(|e| e.to_string())?;
        if !m.best.upsilon.is_finite() {
            return Err("archived entry has no finite validation loss".into());
        }
        Ok(format!("best υ {:.3e}, fingerprint {}", m.best.upsilon, m.best.fingerprint))
    })();
    report("11", "live-llm-smoke", start, None, outcome);
}

#[test]
fn supplementary_cancer_range_sanity() {
    let start = Instant::now();
    let mut fractions = Vec::new();
    let mut ok = true;
    // The ranges quoted in the chemo-radio prompt, applied to every variant.
    let ranges = builtin_system("cancer-chemo-radio").unwrap().schema.states;
    for id in ["cancer", "cancer-chemo", "cancer-chemo-radio"] {
        let b = generated(
            id,
            GenConfig {
                trajectories: Some(200),
                ..GenConfig::default()
            },
        );
        let (mut inside, mut total) = (0usize, 0usize);
        for s in Split::ALL {
            for traj in &b.split(s).trajectories {
                for row in &traj.states {
                    for (v, spec) in row.iter().zip(&ranges) {
                        total += 1;
                        inside += usize::from(*v >= spec.low && *v <= spec.high);
                    }
                }
            }
        }
        let f = inside as f64 / total as f64;
        ok &= f >= 0.99;
        fractions.push(format!("{id} {:.2}%", 100.0 * f));
    }
    let detail = format!("state values inside the prompt ranges: {}", fractions.join(", "));
    report("S1", "cancer-range-sanity", start, None, if ok { Ok(detail) } else { Err(detail) });
}
