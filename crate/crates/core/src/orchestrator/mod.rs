//! The generate, fit, select and critique loop, its single-proposal
//! ablations, baselines run through the same fitting stack, intervention
//! adaptation and multi-seed experiments.

mod archive;
mod stats;

pub use archive::{
    read_run_manifest, write_fitted_archive, write_run_archive, write_transcript, ArchiveError, BestSummary, RunManifest, TestSummary,
    ARCHIVE_FORMAT,
};
pub use stats::{aggregate, Aggregate, CONFIDENCE};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    critique, first_task_prompt, propose, propose_with, system_message, val_loss_line, ClientError, DecodingConfig,
    ExchangeKind, Feedback, InsertOutcome, LlmClient, Message, ModelingContext, Population, PopulationEntry, Proposal,
    ProposeError, Transcript, DEFAULT_CAPACITY,
};
use crate::baselines::{builtin_baseline_spec, sindy_fit, BaselineError, SindyConfig, BASELINE_IDS};
use crate::dsl::{canonicalize, Fingerprint, ModelSpec, SystemSchema};
use crate::engine::{ComponentLoss, DataBundle, Dataset, EngineError, Model, ParamVector};
use crate::optim::{fit, EpochRecord, FitError, FitResult, OptimConfig, StopReason};
use crate::systems::{builtin_system, generate_dataset, GenConfig, SystemDef, SystemError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Evolve,
    ZeroShot,
    ZeroOptim,
    Baseline(String),
    Sindy,
}

impl Method {
    pub fn uses_client(&self) -> bool {
        matches!(self, Method::Evolve | Method::ZeroShot | Method::ZeroOptim)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Evolve => f.write_str("evolve"),
            Method::ZeroShot => f.write_str("zero-shot"),
            Method::ZeroOptim => f.write_str("zero-optim"),
            Method::Baseline(id) => write!(f, "baseline:{id}"),
            Method::Sindy => f.write_str("sindy"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "evolve" => Ok(Method::Evolve),
            "zero-shot" => Ok(Method::ZeroShot),
            "zero-optim" => Ok(Method::ZeroOptim),
            "sindy" => Ok(Method::Sindy),
            _ => match s.strip_prefix("baseline:") {
                Some(id) if BASELINE_IDS.contains(&id) => Ok(Method::Baseline(id.to_string())),
                Some(id) => Err(format!("unknown baseline `{id}` (known: {})", BASELINE_IDS.join(", "))),
                None => Err(format!(
                    "unknown method `{s}` (use evolve, zero-shot, zero-optim, baseline:<id> or sindy)"
                )),
            },
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Which test loss is the headline `T_MSE`; both are always computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMetric {
    #[default]
    OneStep,
    Rollout,
}

impl FromStr for TestMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "one-step" => Ok(TestMetric::OneStep),
            "rollout" => Ok(TestMetric::Rollout),
            _ => Err(format!("unknown test metric `{s}` (expected one-step or rollout)")),
        }
    }
}

impl fmt::Display for TestMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMetric::OneStep => "one-step",
            TestMetric::Rollout => "rollout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub generations: usize,
    pub capacity: usize,
    pub seed: u64,
    pub test_metric: TestMetric,
    /// Directory of optional `gen-XXX.txt` notes appended to the feedback
    /// before generation XXX is proposed.
    pub human_feedback_dir: Option<PathBuf>,
    pub optim: OptimConfig,
    pub decoding: DecodingConfig,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            generations: 20,
            capacity: DEFAULT_CAPACITY,
            seed: 0,
            test_metric: TestMetric::OneStep,
            human_feedback_dir: None,
            optim: OptimConfig::default(),
            decoding: DecodingConfig::default(),
        }
    }
}

impl EvolveConfig {
    pub fn check(&self) -> Result<(), OrchestratorError> {
        if self.generations == 0 {
            return Err(OrchestratorError::Config("generations must be at least 1".into()));
        }
        if self.capacity == 0 {
            return Err(OrchestratorError::Config("capacity must be at least 1".into()));
        }
        self.optim.check().map_err(|e| OrchestratorError::Config(e.to_string()))?;
        self.decoding.check().map_err(|e| OrchestratorError::Config(e.to_string()))
    }

    /// Seed for the network weights of the candidate proposed at `generation`.
    pub fn init_seed(&self, generation: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(generation as u64)
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no generation produced a usable model ({generations} attempted); last problem: {last}")]
    NoSuccess {
        generations: usize,
        last: String,
        transcript: Box<Transcript>,
    },
    #[error("agent transport failed: {error}")]
    Transport {
        error: ClientError,
        transcript: Box<Transcript>,
    },
    #[error(transparent)]
    Propose(#[from] ProposeError),
    #[error("`{0}` is not a scalar parameter of the model")]
    UnknownParam(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    System(#[from] SystemError),
}

impl OrchestratorError {
    pub fn transcript(&self) -> Option<&Transcript> {
        match self {
            OrchestratorError::NoSuccess { transcript, .. } | OrchestratorError::Transport { transcript, .. } => {
                Some(transcript)
            }
            _ => None,
        }
    }
}

/// Test-split losses of one fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct TestMetrics {
    pub one_step: ComponentLoss,
    pub rollout: Result<ComponentLoss, String>,
}

impl TestMetrics {
    pub fn evaluate(model: &Model, params: &ParamVector, test: &Dataset) -> Result<TestMetrics, EngineError> {
        let one_step = model.per_component_mse(params, &test.transitions())?;
        let rollout = model.rollout_mse(params, test).map_err(|e| e.to_string());
        Ok(TestMetrics { one_step, rollout })
    }

    /// Headline MSE: the summed per-component loss.
    pub fn t_mse(&self, metric: TestMetric) -> f64 {
        match metric {
            TestMetric::OneStep => self.one_step.total(),
            TestMetric::Rollout => self.rollout.as_ref().map_or(f64::INFINITY, ComponentLoss::total),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenStatus {
    Inserted,
    Duplicate,
    Rejected,
    Faulted,
    ProposalFailed,
}

impl GenStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GenStatus::Inserted => "inserted",
            GenStatus::Duplicate => "duplicate",
            GenStatus::Rejected => "rejected",
            GenStatus::Faulted => "faulted",
            GenStatus::ProposalFailed => "proposal-failed",
        }
    }
}

/// A population member as listed after one generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standing {
    pub fingerprint: Fingerprint,
    pub upsilon: f64,
    pub generation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub status: GenStatus,
    pub attempts: usize,
    pub spec: Option<ModelSpec>,
    pub description: String,
    pub params: Option<ParamVector>,
    pub val: Option<ComponentLoss>,
    pub curves: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stop: Option<StopReason>,
    /// Fault or proposal failure message.
    pub message: Option<String>,
    /// Best validation loss held after this generation.
    pub best_upsilon: f64,
    pub population: Vec<Standing>,
    /// Feedback produced after this generation, if any.
    pub feedback: Option<Feedback>,
    /// Human note read before proposing this generation.
    pub human_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub generation: usize,
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub system: String,
    pub method: Method,
    pub config: EvolveConfig,
    pub best: PopulationEntry,
    pub population: Population,
    pub generations: Vec<GenerationRecord>,
    /// Best validation loss after each generation.
    pub curve: Vec<f64>,
    pub test: TestMetrics,
    pub transcript: Transcript,
    /// Transport failure that ended the run early.
    pub interrupted: Option<String>,
    /// Wall-clock per stage; kept out of archives.
    pub timings: Vec<StageTiming>,
}

impl RunResult {
    pub fn t_mse(&self) -> f64 {
        self.test.t_mse(self.config.test_metric)
    }
}

fn human_note(cfg: &EvolveConfig, generation: usize) -> Option<String> {
    let dir = cfg.human_feedback_dir.as_ref()?;
    let text = std::fs::read_to_string(dir.join(format!("gen-{generation:03}.txt"))).ok()?;
    let text = text.trim();
    (!text.is_empty()).then(|| text.to_string())
}

fn merged_feedback(critique: Option<&Feedback>, note: Option<&str>, generation: usize) -> Option<Feedback> {
    match (critique, note) {
        (c, None) => c.cloned(),
        (None, Some(n)) => Some(Feedback {
            text: n.to_string(),
            generation,
            warning: None,
        }),
        (Some(c), Some(n)) => {
            let text = if c.text.trim().is_empty() {
                n.to_string()
            } else {
                format!("{}\n\n{n}", c.text)
            };
            Some(Feedback { text, ..c.clone() })
        }
    }
}

fn standings(pop: &Population) -> Vec<Standing> {
    pop.entries()
        .iter()
        .map(|e| Standing {
            fingerprint: e.fingerprint,
            upsilon: e.upsilon(),
            generation: e.generation,
        })
        .collect()
}

fn empty_record(generation: usize) -> GenerationRecord {
    GenerationRecord {
        generation,
        status: GenStatus::ProposalFailed,
        attempts: 0,
        spec: None,
        description: String::new(),
        params: None,
        val: None,
        curves: Vec::new(),
        best_epoch: 0,
        epochs_run: 0,
        stop: None,
        message: None,
        best_upsilon: f64::INFINITY,
        population: Vec::new(),
        feedback: None,
        human_note: None,
    }
}

/// Fits (or, with `fit_params` false, only evaluates) a proposal and
/// offers it to the population.
fn place(
    proposal: Proposal,
    generation: usize,
    data: &DataBundle,
    cfg: &EvolveConfig,
    fit_params: bool,
    pop: &mut Population,
    rec: &mut GenerationRecord,
) {
    rec.attempts = proposal.attempts;
    rec.description = proposal.description.clone();
    let spec = proposal.spec;
    rec.spec = Some(spec.clone());
    let model = match Model::compile(&spec, data.schema()) {
        Ok(m) => m,
        Err(e) => {
            rec.status = GenStatus::Faulted;
            rec.message = Some(e.to_string());
            return;
        }
    };
    let init = ParamVector::init(&spec, cfg.init_seed(generation));
    let (params, val) = if fit_params {
        match fit(&model, init, &data.train.transitions(), &data.val.transitions(), &cfg.optim) {
            Ok(r) => {
                let FitResult {
                    params,
                    val,
                    best_epoch,
                    epochs_run,
                    curves,
                    stop,
                    fault,
                } = r;
                rec.best_epoch = best_epoch;
                rec.epochs_run = epochs_run;
                rec.curves = curves;
                rec.stop = Some(stop);
                rec.message = fault;
                (params, val)
            }
            Err(e) => {
                rec.status = GenStatus::Faulted;
                rec.message = Some(e.to_string());
                return;
            }
        }
    } else {
        match model.per_component_mse(&init, &data.val.transitions()) {
            Ok(val) => (init, val),
            Err(e) => {
                rec.status = GenStatus::Faulted;
                rec.message = Some(e.to_string());
                return;
            }
        }
    };
    rec.params = Some(params.clone());
    rec.val = Some(val.clone());
    if !val.upsilon.is_finite() {
        rec.status = GenStatus::Faulted;
        rec.message.get_or_insert_with(|| "non-finite validation loss".into());
        return;
    }
    let entry = PopulationEntry::new(spec, params, val, generation, proposal.description);
    rec.status = match pop.insert(entry) {
        InsertOutcome::Inserted => GenStatus::Inserted,
        InsertOutcome::Duplicate => GenStatus::Duplicate,
        InsertOutcome::Rejected => GenStatus::Rejected,
        InsertOutcome::Invalid => GenStatus::Faulted,
    };
}

fn run_loop(
    ctx: &ModelingContext,
    data: &DataBundle,
    cfg: &EvolveConfig,
    client: &mut dyn LlmClient,
    method: Method,
    fit_params: bool,
) -> Result<RunResult, OrchestratorError> {
    cfg.check()?;
    ctx.check().map_err(OrchestratorError::Config)?;
    if ctx.schema != *data.schema() {
        return Err(OrchestratorError::Config(
            "modeling context and datasets describe different systems".into(),
        ));
    }
    let mut pop = Population::new(cfg.capacity);
    let mut transcript = Transcript::default();
    let mut records = Vec::with_capacity(cfg.generations);
    let mut curve = Vec::with_capacity(cfg.generations);
    let mut timings = Vec::new();
    let mut feedback: Option<Feedback> = None;
    let mut interrupted = None;
    let mut last_problem = String::new();

    for g in 1..=cfg.generations {
        let mut rec = empty_record(g);
        rec.human_note = human_note(cfg, g);
        let prompt_feedback = merged_feedback(feedback.as_ref(), rec.human_note.as_deref(), g);

        let clock = Instant::now();
        let proposal = propose(client, &cfg.decoding, ctx, &pop, prompt_feedback.as_ref(), g, &mut transcript);
        timings.push(StageTiming {
            generation: g,
            stage: "propose",
            seconds: clock.elapsed().as_secs_f64(),
        });
        match proposal {
            Ok(p) => {
                let clock = Instant::now();
                place(p, g, data, cfg, fit_params, &mut pop, &mut rec);
                timings.push(StageTiming {
                    generation: g,
                    stage: "fit",
                    seconds: clock.elapsed().as_secs_f64(),
                });
                if rec.status == GenStatus::Faulted {
                    log::warn!("generation {g}: candidate faulted: {}", rec.message.as_deref().unwrap_or(""));
                    last_problem = rec.message.clone().unwrap_or_default();
                }
            }
            Err(ProposeError::Client(e)) => {
                log::warn!("generation {g}: modeling agent unavailable: {e}");
                rec.message = Some(e.to_string());
                interrupted = Some(e);
            }
            Err(e) => {
                log::warn!("generation {g}: {e}");
                rec.message = Some(e.to_string());
                last_problem = e.to_string();
            }
        }
        rec.attempts = rec.attempts.max(
            transcript
                .exchanges
                .iter()
                .filter(|x| x.kind == ExchangeKind::Propose && x.generation == g)
                .count(),
        );
        pop.record_generation(g);
        rec.best_upsilon = pop.best().map_or(f64::INFINITY, PopulationEntry::upsilon);
        rec.population = standings(&pop);
        curve.push(rec.best_upsilon);

        if interrupted.is_none() && g < cfg.generations && !pop.is_empty() {
            let clock = Instant::now();
            let fb = critique(client, &cfg.decoding, ctx, &pop, g, &mut transcript);
            timings.push(StageTiming {
                generation: g,
                stage: "critique",
                seconds: clock.elapsed().as_secs_f64(),
            });
            if let Some(w) = &fb.warning {
                log::warn!("generation {g}: {w}");
            }
            rec.feedback = Some(fb.clone());
            feedback = Some(fb);
        }
        records.push(rec);
        if interrupted.is_some() {
            break;
        }
    }

    let Some(best) = pop.best().cloned() else {
        let transcript = Box::new(transcript);
        return Err(match interrupted {
            Some(error) => OrchestratorError::Transport { error, transcript },
            None => OrchestratorError::NoSuccess {
                generations: records.len(),
                last: last_problem,
                transcript,
            },
        });
    };
    let clock = Instant::now();
    let model = Model::compile(&best.spec, data.schema())?;
    let test = TestMetrics::evaluate(&model, &best.params, &data.test)?;
    timings.push(StageTiming {
        generation: records.len(),
        stage: "test",
        seconds: clock.elapsed().as_secs_f64(),
    });
    Ok(RunResult {
        system: data.system.clone(),
        method,
        config: cfg.clone(),
        best,
        population: pop,
        generations: records,
        curve,
        test,
        transcript,
        interrupted: interrupted.map(|e| e.to_string()),
        timings,
    })
}

pub fn evolve(
    ctx: &ModelingContext,
    data: &DataBundle,
    cfg: &EvolveConfig,
    client: &mut dyn LlmClient,
) -> Result<RunResult, OrchestratorError> {
    run_loop(ctx, data, cfg, client, Method::Evolve, true)
}

/// One proposal, evaluated with its own initial values.
pub fn zero_shot(
    ctx: &ModelingContext,
    data: &DataBundle,
    cfg: &EvolveConfig,
    client: &mut dyn LlmClient,
) -> Result<RunResult, OrchestratorError> {
    let cfg = EvolveConfig {
        generations: 1,
        ..cfg.clone()
    };
    run_loop(ctx, data, &cfg, client, Method::ZeroShot, false)
}

/// One proposal, fitted.
pub fn zero_optim(
    ctx: &ModelingContext,
    data: &DataBundle,
    cfg: &EvolveConfig,
    client: &mut dyn LlmClient,
) -> Result<RunResult, OrchestratorError> {
    let cfg = EvolveConfig {
        generations: 1,
        ..cfg.clone()
    };
    run_loop(ctx, data, &cfg, client, Method::ZeroOptim, true)
}

/// Copy with one fitted scalar multiplied by `factor`. The copy's losses
/// are NaN until it is evaluated again.
pub fn scale_param(entry: &PopulationEntry, name: &str, factor: f64) -> Result<PopulationEntry, OrchestratorError> {
    let mut out = entry.clone();
    let v = entry
        .params
        .scalar(name)
        .ok_or_else(|| OrchestratorError::UnknownParam(name.to_string()))?;
    out.params.set_scalar(name, v * factor);
    let dim = entry.val.delta.len();
    out.val = ComponentLoss {
        delta: vec![f64::NAN; dim],
        upsilon: f64::NAN,
    };
    Ok(out)
}

/// The entry's spec with each parameter's initial value replaced by its
/// fitted value.
pub fn inline_params(entry: &PopulationEntry) -> ModelSpec {
    let mut spec = entry.spec.clone();
    for p in &mut spec.params {
        if let Some(v) = entry.params.scalar(&p.name) {
            p.init = v;
        }
    }
    spec
}

/// Parameters for `spec` starting from its own initial values, reusing the
/// entry's fitted network weights wherever a network of the same name and
/// shape survives.
pub fn carry_params(entry: &PopulationEntry, spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut p = ParamVector::init(spec, seed);
    for m in &spec.mlps {
        let same = entry.spec.mlps.iter().any(|old| old == m);
        if let (true, Some(old)) = (same, entry.params.mlp_values(&m.name)) {
            if let Some(dst) = p.mlp_values_mut(&m.name) {
                if dst.len() == old.len() {
                    dst.copy_from_slice(old);
                }
            }
        }
    }
    p
}

pub fn adaptation_prompt(entry: &PopulationEntry, instruction: &str, schema: &SystemSchema) -> String {
    format!(
        "The model below was optimized to the training dataset. Its optimized parameter values are written into the parameter declarations.
{val}
###
```
{spec}```
###

The system has since been changed by an intervention that does not appear in the training dataset:```
{instruction}
```

Modify the model so that it simulates the system under this intervention. Keep every part of the model that the intervention does not affect unchanged, including the parameter values. Return the complete model specification.",
        val = val_loss_line(entry, schema),
        spec = canonicalize(&inline_params(entry)),
        instruction = instruction.trim(),
    )
}

/// Asks the modeling agent to adapt a fitted model to a described
/// intervention. The caller evaluates the returned spec.
pub fn adapt_model(
    entry: &PopulationEntry,
    instruction: &str,
    ctx: &ModelingContext,
    client: &mut dyn LlmClient,
    decoding: &DecodingConfig,
    transcript: &mut Transcript,
) -> Result<Proposal, ProposeError> {
    let messages = vec![
        Message::system(system_message()),
        Message::user(first_task_prompt(ctx, ctx.generations)),
        Message::user(adaptation_prompt(entry, instruction, &ctx.schema)),
    ];
    propose_with(
        client,
        decoding,
        messages,
        &ctx.schema,
        ExchangeKind::Adapt,
        entry.generation,
        transcript,
    )
}

/// Per-component rollout MSE where each trajectory is simulated from its
/// first row at or after `from_time` and compared on every later row.
pub fn rollout_mse_from(
    model: &Model,
    params: &ParamVector,
    data: &Dataset,
    from_time: f64,
) -> Result<ComponentLoss, EngineError> {
    let dx = model.state_dim();
    let mut sums = vec![0.0; dx];
    let mut count = 0usize;
    for traj in &data.trajectories {
        let Some(k) = traj.times.iter().position(|&t| t >= from_time) else {
            continue;
        };
        let sim = model.rollout(params, &traj.states[k], traj.times[k], data.schema.dt, &traj.actions[k..])?;
        for (pred, truth) in sim.states.iter().zip(&traj.states[k..]).skip(1) {
            for j in 0..dx {
                let r = pred[j] - truth[j];
                sums[j] += r * r;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(EngineError::NoTransitions);
    }
    Ok(ComponentLoss::from_delta(sums.into_iter().map(|s| s / count as f64).collect()))
}

/// A single model fitted outside the agent loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub val: ComponentLoss,
    pub test: TestMetrics,
    pub curves: Vec<EpochRecord>,
    pub fault: Option<String>,
}

/// Fits `spec` on the bundle's train split with validation early stopping.
pub fn fit_spec(
    spec: &ModelSpec,
    data: &DataBundle,
    optim: &OptimConfig,
    init_seed: u64,
) -> Result<FittedModel, OrchestratorError> {
    let model = Model::compile(spec, data.schema())?;
    let r = fit(
        &model,
        ParamVector::init(spec, init_seed),
        &data.train.transitions(),
        &data.val.transitions(),
        optim,
    )?;
    let test = TestMetrics::evaluate(&model, &r.params, &data.test)?;
    Ok(FittedModel {
        spec: spec.clone(),
        params: r.params,
        val: r.val,
        test,
        curves: r.curves,
        fault: r.fault,
    })
}

pub fn fit_baseline(
    id: &str,
    data: &DataBundle,
    optim: &OptimConfig,
    init_seed: u64,
) -> Result<FittedModel, OrchestratorError> {
    let spec = builtin_baseline_spec(id, data.schema())?;
    fit_spec(&spec, data, optim, init_seed)
}

/// Sparse regression on the train split; the coefficients are the
/// parameters, so no gradient fitting follows.
pub fn fit_sindy(data: &DataBundle, cfg: &SindyConfig) -> Result<FittedModel, OrchestratorError> {
    let s = sindy_fit(&data.train, cfg)?;
    let model = Model::compile(&s.spec, data.schema())?;
    let params = ParamVector::init(&s.spec, 0);
    let val = model.per_component_mse(&params, &data.val.transitions())?;
    let test = TestMetrics::evaluate(&model, &params, &data.test)?;
    Ok(FittedModel {
        spec: s.spec,
        params,
        val,
        test,
        curves: Vec::new(),
        fault: None,
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub evolve: EvolveConfig,
    pub data: GenConfig,
    pub sindy: SindyConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub t_mse: Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub system: String,
    pub method: Method,
    pub seeds: Vec<SeedOutcome>,
    /// Over the seeds that succeeded.
    pub aggregate: Option<Aggregate>,
}

impl ExperimentReport {
    pub fn failures(&self) -> impl Iterator<Item = &SeedOutcome> {
        self.seeds.iter().filter(|s| s.t_mse.is_err())
    }
}

/// Makes a fresh agent session for one seed.
pub type ClientFactory<'a> = dyn FnMut(u64) -> Result<Box<dyn LlmClient>, ClientError> + 'a;

/// Outcome of one method on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedRun {
    Agent(Box<RunResult>),
    Fitted(Box<FittedModel>),
}

impl SeedRun {
    pub fn t_mse(&self, metric: TestMetric) -> f64 {
        match self {
            SeedRun::Agent(r) => r.test.t_mse(metric),
            SeedRun::Fitted(f) => f.test.t_mse(metric),
        }
    }
}

/// Runs `method` on given data. `cfg.seed` and the optimizer seed are
/// used as they are.
pub fn run_on_data(
    sys: &SystemDef,
    method: &Method,
    data: &DataBundle,
    cfg: &EvolveConfig,
    sindy: &SindyConfig,
    clients: &mut ClientFactory<'_>,
) -> Result<SeedRun, OrchestratorError> {
    Ok(match method {
        Method::Baseline(id) => SeedRun::Fitted(Box::new(fit_baseline(id, data, &cfg.optim, cfg.init_seed(0))?)),
        Method::Sindy => SeedRun::Fitted(Box::new(fit_sindy(data, sindy)?)),
        _ => {
            let ctx = ModelingContext::for_system(sys, cfg.generations);
            let mut client = clients(cfg.seed).map_err(|error| OrchestratorError::Transport {
                error,
                transcript: Box::default(),
            })?;
            let run = match method {
                Method::ZeroShot => zero_shot(&ctx, data, cfg, client.as_mut())?,
                Method::ZeroOptim => zero_optim(&ctx, data, cfg, client.as_mut())?,
                _ => evolve(&ctx, data, cfg, client.as_mut())?,
            };
            SeedRun::Agent(Box::new(run))
        }
    })
}

/// Generates the seed's datasets and runs `method` on them, seeding the
/// generator, the network initialisation and the optimizer with `seed`.
pub fn run_seed(
    system: &str,
    method: &Method,
    seed: u64,
    cfg: &ExperimentConfig,
    clients: &mut ClientFactory<'_>,
) -> Result<(DataBundle, SeedRun), OrchestratorError> {
    let sys = builtin_system(system)?;
    let data = generate_dataset(
        &sys,
        &GenConfig {
            seed,
            ..cfg.data.clone()
        },
    )?;
    let mut ecfg = cfg.evolve.clone();
    ecfg.seed = seed;
    ecfg.optim.seed = seed;
    let run = run_on_data(&sys, method, &data, &ecfg, &cfg.sindy, clients)?;
    Ok((data, run))
}

/// Runs `method` once per seed on freshly generated data and aggregates
/// the test MSEs. Failed seeds are reported, not dropped.
pub fn run_experiment(
    system: &str,
    method: &Method,
    seeds: &[u64],
    cfg: &ExperimentConfig,
    clients: &mut ClientFactory<'_>,
) -> Result<ExperimentReport, OrchestratorError> {
    if seeds.is_empty() {
        return Err(OrchestratorError::Config("at least one seed is required".into()));
    }
    builtin_system(system)?;
    let mut outcomes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let metric = cfg.evolve.test_metric;
        let t_mse = run_seed(system, method, seed, cfg, clients)
            .map(|(_, run)| run.t_mse(metric))
            .map_err(|e| e.to_string());
        if let Err(e) = &t_mse {
            log::warn!("seed {seed}: {e}");
        }
        outcomes.push(SeedOutcome { seed, t_mse });
    }
    let ok: Vec<f64> = outcomes.iter().filter_map(|o| o.t_mse.as_ref().ok().copied()).collect();
    Ok(ExperimentReport {
        system: system.to_string(),
        method: method.clone(),
        aggregate: aggregate(&ok),
        seeds: outcomes,
    })
}

