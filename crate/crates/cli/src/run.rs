//! Subcommands that generate data, fit models and run experiments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use hdtwin::agents::{ClientError, EndpointConfig, HttpClient, LlmClient, ReplayEntry, ScriptedClient};
use hdtwin::dsl::{canonicalize, format_violations, parse_model_spec, validate, ModelSpec, SystemSchema};
use hdtwin::engine::{read_split_dir, DataBundle, Model};
use hdtwin::optim::{format_curves_csv, format_params_table, params_from_table, parse_params_table};
use hdtwin::orchestrator::{
    aggregate, fit_spec, run_on_data, write_fitted_archive, write_run_archive, write_transcript, EvolveConfig,
    FittedModel, Method, SeedRun, TestMetric,
};
use hdtwin::systems::{builtin_system, generate_dataset, load_csv_dataset, GenConfig, SplitRule};

use crate::args::{DataArgs, GenArgs, OptimArgs, SindyArgs};
use crate::config::{self, ClientMode};
use crate::{metrics_line, ConfigContext, Failure};

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .run_err()?;
    }
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .run_err()
}

fn read_spec(path: &Path, schema: &SystemSchema) -> Result<ModelSpec, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .config_err()?;
    let spec = parse_model_spec(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .config_err()?;
    let violations = validate(&spec, schema);
    if !violations.is_empty() {
        return Err(Failure::Config(anyhow!(
            "{} does not fit the data schema:\n{}",
            path.display(),
            format_violations(&violations)
        )));
    }
    Ok(spec)
}

fn read_bundle(path: &Path, system: Option<&str>) -> Result<DataBundle, Failure> {
    let bundle = DataBundle::read(path)
        .with_context(|| format!("reading data bundle {}", path.display()))
        .config_err()?;
    if let Some(system) = system.filter(|s| *s != bundle.system) {
        return Err(Failure::Config(anyhow!(
            "data bundle {} holds system `{}`, not `{system}`",
            path.display(),
            bundle.system
        )));
    }
    Ok(bundle)
}

fn generate(system: &str, cfg: &GenConfig) -> Result<DataBundle, Failure> {
    let sys = builtin_system(system).config_err()?;
    generate_dataset(&sys, cfg).map_err(|e| match e {
        hdtwin::systems::SystemError::Config(_) => Failure::Config(e.into()),
        _ => Failure::Run(e.into()),
    })
}

fn default_split(system: &str) -> Option<SplitRule> {
    match system {
        "lv2" => Some(SplitRule::hare_lynx()),
        "lv3-plankton" => Some(SplitRule::plankton()),
        _ => None,
    }
}

pub fn gen_data(
    system: &str,
    seed: u64,
    out: &Path,
    from_csv: Option<&Path>,
    split: Option<SplitRule>,
    gen: &GenArgs,
) -> Result<(), Failure> {
    let bundle = match from_csv {
        Some(csv) => {
            let sys = builtin_system(system).config_err()?;
            let rule = split
                .or_else(|| default_split(system))
                .ok_or_else(|| Failure::Config(anyhow!("--split is required for system `{system}`")))?;
            let mut b = load_csv_dataset(csv, &sys.schema, &rule)
                .with_context(|| format!("loading {}", csv.display()))
                .config_err()?;
            b.system = system.to_string();
            b
        }
        None => generate(system, &gen.config(seed))?,
    };
    bundle
        .write(out)
        .with_context(|| format!("writing {}", out.display()))
        .run_err()?;
    println!(
        "{}",
        metrics_line(&[
            ("system", bundle.system.clone()),
            ("seed", seed.to_string()),
            ("train_trajectories", bundle.train.trajectories.len().to_string()),
            ("val_trajectories", bundle.val.trajectories.len().to_string()),
            ("test_trajectories", bundle.test.trajectories.len().to_string()),
            ("train_transitions", bundle.train.transition_count().to_string()),
        ])
    );
    Ok(())
}

fn loss_pairs(prefix: &str, schema: &SystemSchema, delta: &[f64]) -> Vec<(String, String)> {
    schema
        .state_names()
        .zip(delta)
        .map(|(n, d)| (format!("{prefix}.{n}"), format!("{d:?}")))
        .collect()
}

fn fitted_metrics(f: &FittedModel, schema: &SystemSchema, metric: TestMetric) -> Vec<(String, String)> {
    let mut v = vec![("val_upsilon".to_string(), format!("{:?}", f.val.upsilon))];
    v.extend(loss_pairs("val_delta", schema, &f.val.delta));
    v.push(("test_metric".into(), metric.to_string()));
    v.push(("test_t_mse".into(), format!("{:?}", f.test.t_mse(metric))));
    v.push(("epochs_run".into(), f.curves.last().map_or(0, |c| c.epoch).to_string()));
    if let Some(fault) = &f.fault {
        v.push(("fault".into(), fault.replace('\n', " ")));
    }
    v
}

fn print_metrics(pairs: &[(String, String)]) {
    let refs: Vec<(&str, String)> = pairs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    println!("{}", metrics_line(&refs));
}

pub fn fit(spec: &Path, data: &Path, out: &Path, seed: u64, metric: TestMetric, optim: &OptimArgs) -> Result<(), Failure> {
    let bundle = read_bundle(data, None)?;
    let schema = bundle.schema().clone();
    let spec = read_spec(spec, &schema)?;
    let optim = optim.config(seed);
    optim.check().config_err()?;
    let fitted = fit_spec(&spec, &bundle, &optim, seed)?;

    let pairs = fitted_metrics(&fitted, &schema, metric);
    let mut text = String::new();
    for (k, v) in &pairs {
        let _ = writeln!(text, "{k} = {v}");
    }
    write_file(&out.join("model.hdt"), &canonicalize(&fitted.spec))?;
    write_file(&out.join("params.tbl"), &format_params_table(&fitted.params))?;
    write_file(&out.join("curves.csv"), &format_curves_csv(&fitted.curves))?;
    write_file(&out.join("metrics.txt"), &text)?;
    print_metrics(&pairs);
    if !fitted.val.upsilon.is_finite() {
        return Err(Failure::Run(anyhow!(
            "fit produced no finite validation loss: {}",
            fitted.fault.as_deref().unwrap_or("non-finite loss")
        )));
    }
    Ok(())
}

pub fn eval(spec: &Path, params: &Path, data: &Path) -> Result<(), Failure> {
    let ds = read_split_dir(data)
        .with_context(|| format!("reading split {}", data.display()))
        .config_err()?;
    let spec = read_spec(spec, &ds.schema)?;
    let model = Model::compile(&spec, &ds.schema).config_err()?;
    let text = fs::read_to_string(params)
        .with_context(|| format!("reading {}", params.display()))
        .config_err()?;
    let entries = parse_params_table(&text)
        .with_context(|| format!("parsing {}", params.display()))
        .config_err()?;
    let pv = params_from_table(model.layout().clone(), &entries)
        .with_context(|| format!("matching {} to the model program", params.display()))
        .config_err()?;

    let one_step = model.per_component_mse(&pv, &ds.transitions()).run_err()?;
    let mut pairs = vec![
        ("split".to_string(), ds.split.as_str().to_string()),
        ("upsilon".to_string(), format!("{:?}", one_step.upsilon)),
    ];
    pairs.extend(loss_pairs("delta", &ds.schema, &one_step.delta));
    pairs.push(("mse".into(), format!("{:?}", one_step.total())));
    match model.rollout_mse(&pv, &ds) {
        Ok(r) => {
            pairs.push(("rollout_mse".into(), format!("{:?}", r.total())));
            pairs.extend(loss_pairs("rollout_delta", &ds.schema, &r.delta));
        }
        Err(e) => pairs.push(("rollout_fault".into(), e.to_string())),
    }
    for (k, v) in &pairs {
        println!("{k} = {v}");
    }
    print_metrics(&pairs);
    Ok(())
}

fn no_client(_: u64) -> Result<Box<dyn LlmClient>, ClientError> {
    Err(ClientError::Config("this method does not use a language model".into()))
}

#[allow(clippy::too_many_arguments)]
pub fn baseline(
    system: &str,
    id: &str,
    seed: u64,
    out: &Path,
    metric: TestMetric,
    data: &DataArgs,
    optim: &OptimArgs,
    sindy: &SindyArgs,
) -> Result<(), Failure> {
    let method: Method = if id == "sindy" {
        Method::Sindy
    } else {
        format!("baseline:{id}").parse().map_err(|e: String| Failure::Config(anyhow!(e)))?
    };
    let sys = builtin_system(system).config_err()?;
    let sindy = sindy.config(system);
    sindy.check().config_err()?;
    let ecfg = EvolveConfig {
        seed,
        test_metric: metric,
        optim: optim.config(seed),
        ..EvolveConfig::default()
    };
    ecfg.optim.check().config_err()?;
    let bundle = match &data.data {
        Some(p) => read_bundle(p, Some(system))?,
        None => generate(system, &data.gen.config(seed))?,
    };
    let run = run_on_data(&sys, &method, &bundle, &ecfg, &sindy, &mut no_client)?;
    let SeedRun::Fitted(fitted) = run else {
        unreachable!("baseline methods return fitted models")
    };
    write_fitted_archive(out, system, &method, seed, &fitted, metric, bundle.schema()).run_err()?;
    let mut pairs = vec![
        ("system".to_string(), system.to_string()),
        ("method".to_string(), method.to_string()),
        ("seed".to_string(), seed.to_string()),
    ];
    pairs.extend(fitted_metrics(&fitted, bundle.schema(), metric));
    print_metrics(&pairs);
    Ok(())
}

fn client_for(
    mode: &ClientMode,
    replay: Option<&[ReplayEntry]>,
    endpoint: &EndpointConfig,
    ecfg: &EvolveConfig,
) -> Result<Box<dyn LlmClient>, ClientError> {
    match (mode, replay) {
        (ClientMode::Replay(_), Some(entries)) => Ok(Box::new(ScriptedClient::new(entries.to_vec()))),
        (ClientMode::Replay(p), None) => Err(ClientError::Replay(format!("{} was not loaded", p.display()))),
        (ClientMode::Http, _) => Ok(Box::new(HttpClient::new(endpoint, &ecfg.decoding)?)),
    }
}

pub fn evolve(config_path: &Path, out_override: Option<&Path>) -> Result<(), Failure> {
    let loaded = config::load(config_path, out_override).config_err()?;
    let cfg = &loaded.file;
    let sys = builtin_system(&cfg.system).config_err()?;
    let metric = cfg.evolve.test_metric;
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating {}", cfg.out.display()))
        .run_err()?;

    let mut summary = String::from("seed,status,t_mse,error\n");
    let mut values = Vec::new();
    let mut worst: Option<Failure> = None;
    for &seed in &cfg.seeds {
        let dir = cfg.out.join(format!("seed-{seed}"));
        let bundle = match &loaded.data {
            Some(b) => b.clone(),
            None => generate(
                &cfg.system,
                &GenConfig {
                    seed,
                    ..cfg.generator.clone()
                },
            )?,
        };
        let mut ecfg = cfg.evolve.clone();
        ecfg.seed = seed;
        ecfg.optim.seed = seed;
        let mut factory =
            |_: u64| client_for(&cfg.client, loaded.replay.as_deref(), &cfg.endpoint, &ecfg);
        let result = run_on_data(&sys, &cfg.method, &bundle, &ecfg, &cfg.sindy, &mut factory);

        let mut pairs = vec![
            ("system".to_string(), cfg.system.clone()),
            ("method".to_string(), cfg.method.to_string()),
            ("seed".to_string(), seed.to_string()),
        ];
        match result {
            Ok(run) => {
                let t = run.t_mse(metric);
                let mut status = "ok";
                match &run {
                    SeedRun::Agent(r) => {
                        write_run_archive(&dir, r, bundle.schema()).run_err()?;
                        pairs.push(("generations".into(), r.generations.len().to_string()));
                        pairs.push(("best_upsilon".into(), format!("{:?}", r.best.upsilon())));
                        if let Some(why) = &r.interrupted {
                            status = "interrupted";
                            log::warn!("seed {seed}: run interrupted: {why}");
                            worst.get_or_insert(Failure::Transport(anyhow!("seed {seed} interrupted: {why}")));
                        }
                    }
                    SeedRun::Fitted(f) => {
                        write_fitted_archive(&dir, &cfg.system, &cfg.method, seed, f, metric, bundle.schema())
                            .run_err()?;
                        pairs.push(("best_upsilon".into(), format!("{:?}", f.val.upsilon)));
                    }
                }
                pairs.push(("status".into(), status.into()));
                pairs.push(("t_mse".into(), format!("{t:?}")));
                let _ = writeln!(summary, "{seed},{status},{t:?},");
                values.push(t);
            }
            Err(e) => {
                if let Some(t) = e.transcript() {
                    write_transcript(&dir.join("transcript"), t).run_err()?;
                }
                let msg = e.to_string();
                write_file(&dir.join("error.txt"), &format!("{msg}\n"))?;
                log::error!("seed {seed}: {msg}");
                pairs.push(("status".into(), "failed".into()));
                let _ = writeln!(summary, "{seed},failed,,\"{}\"", msg.replace('"', "'").replace('\n', " "));
                let f = Failure::from(e);
                worst = match worst {
                    Some(w) if w.code() >= f.code() => Some(w),
                    _ => Some(f),
                };
            }
        }
        print_metrics(&pairs);
    }
    write_file(&cfg.out.join("experiment.csv"), &summary)?;

    let mut pairs = vec![
        ("system".to_string(), cfg.system.clone()),
        ("method".to_string(), cfg.method.to_string()),
        ("metric".to_string(), metric.to_string()),
        ("seeds".to_string(), cfg.seeds.len().to_string()),
        ("failures".to_string(), (cfg.seeds.len() - values.len()).to_string()),
    ];
    if let Some(a) = aggregate(&values) {
        pairs.push(("t_mse_mean".into(), format!("{:?}", a.mean)));
        pairs.push((
            "t_mse_ci95".into(),
            a.half_width.map_or_else(|| "nan".into(), |h| format!("{h:?}")),
        ));
    }
    print_metrics(&pairs);
    match worst {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

