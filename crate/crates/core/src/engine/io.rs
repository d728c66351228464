//! On-disk dataset layout.
//!
//! ```text
//! root/manifest.toml          bundle summary (system, seed, schema, notes)
//! root/<split>/manifest.toml  per-split sidecar
//! root/<split>/traj-00000.csv header `t,<states...>,<actions...>`
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a bundle back reproduces every value bit for bit.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::data::{DataError, Dataset, Split, Trajectory};
use crate::dsl::SystemSchema;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv header must be `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("csv row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("csv row {row}: time is not strictly increasing")]
    NonMonotoneTime { row: usize },
    #[error("invalid trajectory: {0}")]
    Data(#[from] DataError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("split: {0}")]
    Split(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataIoError + '_ {
    move |source| DataIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn csv_header(schema: &SystemSchema) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(schema.state_names().map(str::to_string))
        .chain(schema.action_names().map(str::to_string))
        .collect()
}

pub fn write_trajectory_csv<W: io::Write>(
    out: W,
    traj: &Trajectory,
    schema: &SystemSchema,
) -> Result<(), DataIoError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| DataIoError::MalformedRow {
        row: 0,
        message: e.to_string(),
    };
    w.write_record(csv_header(schema)).map_err(csv_err)?;
    for k in 0..traj.len() {
        let row = std::iter::once(traj.times[k])
            .chain(traj.states[k].iter().copied())
            .chain(traj.actions[k].iter().copied())
            .map(fmt_f64);
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| DataIoError::Io {
        path: PathBuf::from("<csv>"),
        source: e,
    })?;
    Ok(())
}

/// Reads one trajectory in the documented column layout.
pub fn read_trajectory_csv<R: io::Read>(
    input: R,
    schema: &SystemSchema,
) -> Result<Trajectory, DataIoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let expected = csv_header(schema);
    let header = rdr.headers().map_err(|e| DataIoError::MalformedRow {
        row: 1,
        message: e.to_string(),
    })?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(DataIoError::Header {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    let (dx, du) = (schema.state_dim(), schema.action_dim());
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut actions = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // 1-based file line, counting the header
        let row = i + 2;
        let rec = rec.map_err(|e| DataIoError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != 1 + dx + du {
            return Err(DataIoError::MalformedRow {
                row,
                message: format!("expected {} fields, found {}", 1 + dx + du, rec.len()),
            });
        }
        let mut vals = Vec::with_capacity(rec.len());
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| DataIoError::MalformedRow {
                row,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(DataIoError::MalformedRow {
                    row,
                    message: format!("non-finite value `{field}`"),
                });
            }
            vals.push(v);
        }
        if let Some(&prev) = times.last() {
            if !(vals[0] > prev) {
                return Err(DataIoError::NonMonotoneTime { row });
            }
        }
        times.push(vals[0]);
        states.push(vals[1..1 + dx].to_vec());
        actions.push(vals[1 + dx..].to_vec());
    }
    Ok(Trajectory::new(times, states, actions, schema)?)
}

/// Sidecar stored next to each split's trajectory files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub format: u32,
    pub system: String,
    pub split: Split,
    pub seed: Option<u64>,
    pub trajectories: usize,
    pub schema: SystemSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: Split,
    pub trajectories: usize,
    pub transitions: usize,
}

/// Top-level manifest of a generated or imported dataset bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: u32,
    pub system: String,
    pub seed: Option<u64>,
    /// Generator flags and loader decisions (e.g. dropped rows).
    #[serde(default)]
    pub notes: Vec<String>,
    pub schema: SystemSchema,
    pub splits: Vec<SplitSummary>,
}

impl BundleManifest {
    pub fn from_toml_str(text: &str) -> Result<Self, DataIoError> {
        let m: BundleManifest = toml::from_str(text).map_err(|e| DataIoError::Manifest(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<(), DataIoError> {
        if self.format != FORMAT_VERSION {
            return Err(DataIoError::Manifest(format!(
                "unsupported format version {}",
                self.format
            )));
        }
        self.schema
            .check()
            .map_err(|e| DataIoError::Manifest(e.to_string()))
    }
}

impl SplitManifest {
    pub fn from_toml_str(text: &str) -> Result<Self, DataIoError> {
        let m: SplitManifest = toml::from_str(text).map_err(|e| DataIoError::Manifest(e.to_string()))?;
        if m.format != FORMAT_VERSION {
            return Err(DataIoError::Manifest(format!(
                "unsupported format version {}",
                m.format
            )));
        }
        m.schema
            .check()
            .map_err(|e| DataIoError::Manifest(e.to_string()))?;
        Ok(m)
    }
}

/// Train/val/test datasets of one system.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBundle {
    pub system: String,
    pub seed: Option<u64>,
    pub notes: Vec<String>,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl DataBundle {
    pub fn split(&self, s: Split) -> &Dataset {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn schema(&self) -> &SystemSchema {
        &self.train.schema
    }

    pub fn manifest(&self) -> BundleManifest {
        BundleManifest {
            format: FORMAT_VERSION,
            system: self.system.clone(),
            seed: self.seed,
            notes: self.notes.clone(),
            schema: self.schema().clone(),
            splits: Split::ALL
                .iter()
                .map(|&s| SplitSummary {
                    split: s,
                    trajectories: self.split(s).trajectories.len(),
                    transitions: self.split(s).transition_count(),
                })
                .collect(),
        }
    }

    pub fn write(&self, root: &Path) -> Result<(), DataIoError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        let text = toml::to_string(&self.manifest()).map_err(|e| DataIoError::Manifest(e.to_string()))?;
        let path = root.join("manifest.toml");
        fs::write(&path, text).map_err(io_err(&path))?;
        for s in Split::ALL {
            let ds = self.split(s);
            let dir = root.join(s.as_str());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let sm = SplitManifest {
                format: FORMAT_VERSION,
                system: self.system.clone(),
                split: s,
                seed: self.seed,
                trajectories: ds.trajectories.len(),
                schema: ds.schema.clone(),
            };
            let text = toml::to_string(&sm).map_err(|e| DataIoError::Manifest(e.to_string()))?;
            let path = dir.join("manifest.toml");
            fs::write(&path, text).map_err(io_err(&path))?;
            for (i, traj) in ds.trajectories.iter().enumerate() {
                let path = dir.join(format!("traj-{i:05}.csv"));
                let file = fs::File::create(&path).map_err(io_err(&path))?;
                write_trajectory_csv(io::BufWriter::new(file), traj, &ds.schema)?;
            }
        }
        Ok(())
    }

    pub fn read(root: &Path) -> Result<DataBundle, DataIoError> {
        let path = root.join("manifest.toml");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest = BundleManifest::from_toml_str(&text)?;
        let mut sets = Vec::with_capacity(3);
        for s in Split::ALL {
            sets.push(read_split(&root.join(s.as_str()), s)?);
        }
        let test = sets.pop().expect("three splits");
        let val = sets.pop().expect("three splits");
        let train = sets.pop().expect("three splits");
        Ok(DataBundle {
            system: manifest.system,
            seed: manifest.seed,
            notes: manifest.notes,
            train,
            val,
            test,
        })
    }
}

fn read_split(dir: &Path, split: Split) -> Result<Dataset, DataIoError> {
    let ds = read_split_dir(dir)?;
    if ds.split != split {
        return Err(DataIoError::Manifest(format!(
            "{} holds split `{}`",
            dir.display(),
            ds.split
        )));
    }
    Ok(ds)
}

/// Reads one split directory written by [`DataBundle::write`].
pub fn read_split_dir(dir: &Path) -> Result<Dataset, DataIoError> {
    let path = dir.join("manifest.toml");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m = SplitManifest::from_toml_str(&text)?;
    let mut trajectories = Vec::with_capacity(m.trajectories);
    for i in 0..m.trajectories {
        let path = dir.join(format!("traj-{i:05}.csv"));
        let file = fs::File::open(&path).map_err(io_err(&path))?;
        trajectories.push(read_trajectory_csv(io::BufReader::new(file), &m.schema)?);
    }
    Ok(Dataset::new(m.schema, m.split, trajectories))
}
