//! Run archive: a directory of plain-text files describing one run.
//!
//! ```text
//! run.manifest                 TOML summary: config, best entry, test losses
//! report.csv                   one row per generation
//! transcript/replay.txt        every reply, replayable by the scripted client
//! transcript/NNNN-kind-gGGG-aA.txt   one request and its reply
//! population/gen-GGG/          candidate.hdt, params.tbl, metrics.txt,
//!                              curves.csv, population.txt, feedback.txt
//! ```
//!
//! Nothing time-dependent is written, so identical runs give identical trees.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EvolveConfig, FittedModel, GenerationRecord, Method, RunResult, TestMetric, TestMetrics};
use crate::agents::{format_replay, Exchange, Role, Transcript};
use crate::dsl::{canonicalize, fingerprint, SystemSchema};
use crate::optim::{format_curves_csv, format_params_table};

pub const ARCHIVE_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSummary {
    pub generation: usize,
    pub fingerprint: String,
    pub description: String,
    pub upsilon: f64,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub metric: TestMetric,
    pub t_mse: f64,
    pub one_step: Vec<f64>,
    pub rollout: Option<Vec<f64>>,
    pub rollout_fault: Option<String>,
}

impl TestSummary {
    fn new(test: &TestMetrics, metric: TestMetric) -> Self {
        TestSummary {
            metric,
            t_mse: test.t_mse(metric),
            one_step: test.one_step.delta.clone(),
            rollout: test.rollout.as_ref().ok().map(|l| l.delta.clone()),
            rollout_fault: test.rollout.as_ref().err().cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: u32,
    pub system: String,
    pub method: Method,
    pub seed: u64,
    pub states: Vec<String>,
    pub generations_run: usize,
    pub interrupted: Option<String>,
    pub best: BestSummary,
    pub test: TestSummary,
    pub config: Option<EvolveConfig>,
}

fn write(path: &Path, text: &str) -> Result<(), ArchiveError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| ArchiveError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn manifest_text(m: &RunManifest, path: &Path) -> Result<String, ArchiveError> {
    toml::to_string(m).map_err(|e| ArchiveError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_run_manifest(dir: &Path) -> Result<RunManifest, ArchiveError> {
    let path = dir.join("run.manifest");
    let text = fs::read_to_string(&path).map_err(|source| ArchiveError::Io {
        path: path.clone(),
        source,
    })?;
    let m: RunManifest = toml::from_str(&text).map_err(|e| ArchiveError::Manifest {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if m.format != ARCHIVE_FORMAT {
        return Err(ArchiveError::Manifest {
            path,
            message: format!("unsupported archive format {}", m.format),
        });
    }
    Ok(m)
}

fn exchange_text(x: &Exchange) -> String {
    let mut out = String::new();
    for m in &x.request {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        let _ = write!(out, "=== {role}\n{}\n", m.content);
    }
    match &x.reply {
        Ok(text) => {
            let _ = write!(out, "=== reply\n{text}\n");
        }
        Err(e) => {
            let _ = write!(out, "=== error\n{e}\n");
        }
    }
    out
}

fn metrics_text(rec: &GenerationRecord, schema: &SystemSchema) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "generation = {}", rec.generation);
    let _ = writeln!(out, "status = {}", rec.status.as_str());
    let _ = writeln!(out, "attempts = {}", rec.attempts);
    if let Some(spec) = &rec.spec {
        let _ = writeln!(out, "fingerprint = {}", fingerprint(spec));
    }
    let _ = writeln!(out, "description = {}", rec.description.replace('\n', " "));
    if let Some(val) = &rec.val {
        let _ = writeln!(out, "val_upsilon = {:?}", val.upsilon);
        for (name, d) in schema.state_names().zip(&val.delta) {
            let _ = writeln!(out, "val_delta.{name} = {d:?}");
        }
    }
    if let Some(stop) = rec.stop {
        let _ = writeln!(out, "epochs_run = {}", rec.epochs_run);
        let _ = writeln!(out, "best_epoch = {}", rec.best_epoch);
        let _ = writeln!(out, "stop = {stop:?}");
    }
    if let Some(m) = &rec.message {
        let _ = writeln!(out, "message = {}", m.replace('\n', " "));
    }
    let _ = writeln!(out, "best_upsilon = {:?}", rec.best_upsilon);
    let _ = writeln!(out, "population_size = {}", rec.population.len());
    out
}

fn population_text(rec: &GenerationRecord) -> String {
    let mut out = String::from("rank fingerprint upsilon generation\n");
    for (i, s) in rec.population.iter().enumerate() {
        let _ = writeln!(out, "{} {} {:?} {}", i + 1, s.fingerprint, s.upsilon, s.generation);
    }
    out
}

fn report_csv(records: &[GenerationRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record([
        "generation",
        "status",
        "upsilon",
        "best_upsilon",
        "population_size",
        "fingerprint",
        "description",
    ]);
    for r in records {
        let _ = w.write_record([
            r.generation.to_string(),
            r.status.as_str().to_string(),
            r.val.as_ref().map_or(String::new(), |v| format!("{:?}", v.upsilon)),
            format!("{:?}", r.best_upsilon),
            r.population.len().to_string(),
            r.spec.as_ref().map_or(String::new(), |s| fingerprint(s).to_string()),
            r.description.clone(),
        ]);
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

/// Writes `replay.txt` and one file per exchange into `dir`.
pub fn write_transcript(dir: &Path, transcript: &Transcript) -> Result<(), ArchiveError> {
    write(&dir.join("replay.txt"), &format_replay(&transcript.replay_entries()))?;
    for (i, x) in transcript.exchanges.iter().enumerate() {
        let name = format!("{:04}-{}-g{:03}-a{}.txt", i + 1, x.kind.as_str(), x.generation, x.attempt);
        write(&dir.join(name), &exchange_text(x))?;
    }
    Ok(())
}

/// Writes the archive of an agent run into `dir`, which is created.
pub fn write_run_archive(dir: &Path, run: &RunResult, schema: &SystemSchema) -> Result<(), ArchiveError> {
    let manifest = RunManifest {
        format: ARCHIVE_FORMAT,
        system: run.system.clone(),
        method: run.method.clone(),
        seed: run.config.seed,
        states: schema.state_names().map(str::to_string).collect(),
        generations_run: run.generations.len(),
        interrupted: run.interrupted.clone(),
        best: BestSummary {
            generation: run.best.generation,
            fingerprint: run.best.fingerprint.to_string(),
            description: run.best.description.clone(),
            upsilon: run.best.upsilon(),
            delta: run.best.val.delta.clone(),
        },
        test: TestSummary::new(&run.test, run.config.test_metric),
        config: Some(run.config.clone()),
    };
    let path = dir.join("run.manifest");
    write(&path, &manifest_text(&manifest, &path)?)?;
    write(&dir.join("report.csv"), &report_csv(&run.generations))?;
    write(&dir.join("best.hdt"), &run.best.canonical)?;
    write(&dir.join("best.tbl"), &format_params_table(&run.best.params))?;

    write_transcript(&dir.join("transcript"), &run.transcript)?;

    for rec in &run.generations {
        let gdir = dir.join("population").join(format!("gen-{:03}", rec.generation));
        write(&gdir.join("metrics.txt"), &metrics_text(rec, schema))?;
        write(&gdir.join("population.txt"), &population_text(rec))?;
        if let Some(spec) = &rec.spec {
            write(&gdir.join("candidate.hdt"), &canonicalize(spec))?;
        }
        if let Some(p) = &rec.params {
            write(&gdir.join("params.tbl"), &format_params_table(p))?;
        }
        if !rec.curves.is_empty() {
            write(&gdir.join("curves.csv"), &format_curves_csv(&rec.curves))?;
        }
        if let Some(fb) = rec.feedback.as_ref().filter(|f| !f.text.is_empty()) {
            write(&gdir.join("feedback.txt"), &fb.text)?;
        }
        if let Some(note) = &rec.human_note {
            write(&gdir.join("human-feedback.txt"), note)?;
        }
    }
    Ok(())
}

/// Writes the archive of a model fitted outside the agent loop.
pub fn write_fitted_archive(
    dir: &Path,
    system: &str,
    method: &Method,
    seed: u64,
    fitted: &FittedModel,
    metric: TestMetric,
    schema: &SystemSchema,
) -> Result<(), ArchiveError> {
    let manifest = RunManifest {
        format: ARCHIVE_FORMAT,
        system: system.to_string(),
        method: method.clone(),
        seed,
        states: schema.state_names().map(str::to_string).collect(),
        generations_run: 0,
        interrupted: None,
        best: BestSummary {
            generation: 0,
            fingerprint: fingerprint(&fitted.spec).to_string(),
            description: fitted.spec.metadata.clone(),
            upsilon: fitted.val.upsilon,
            delta: fitted.val.delta.clone(),
        },
        test: TestSummary::new(&fitted.test, metric),
        config: None,
    };
    let path = dir.join("run.manifest");
    write(&path, &manifest_text(&manifest, &path)?)?;
    write(&dir.join("best.hdt"), &canonicalize(&fitted.spec))?;
    write(&dir.join("best.tbl"), &format_params_table(&fitted.params))?;
    if !fitted.curves.is_empty() {
        write(&dir.join("curves.csv"), &format_curves_csv(&fitted.curves))?;
    }
    Ok(())
}
