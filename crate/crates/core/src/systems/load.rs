//! Chronological splitting of a single observed trajectory.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsl::SystemSchema;
use crate::engine::{read_trajectory_csv, DataBundle, DataIoError, Dataset, Split, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitRule {
    /// Train and val take `floor(f * rows)`, test takes the remainder.
    Fractions { train: f64, val: f64, test: f64 },
    /// Exact row counts; rows past their sum are dropped from the end.
    Counts { train: usize, val: usize, test: usize },
}

impl SplitRule {
    pub fn hare_lynx() -> Self {
        SplitRule::Counts {
            train: 63,
            val: 14,
            test: 14,
        }
    }

    pub fn plankton() -> Self {
        SplitRule::Counts {
            train: 70,
            val: 15,
            test: 15,
        }
    }

    /// Row counts for a file with `rows` rows.
    pub fn counts(&self, rows: usize) -> Result<[usize; 3], DataIoError> {
        match *self {
            SplitRule::Fractions { train, val, test } => {
                let fs = [train, val, test];
                if fs.iter().any(|f| !(0.0..=1.0).contains(f)) || ((train + val + test) - 1.0).abs() > 1e-9 {
                    return Err(DataIoError::Split(format!(
                        "split fractions must lie in [0, 1] and sum to 1, got {train}/{val}/{test}"
                    )));
                }
                let a = (train * rows as f64).floor() as usize;
                let b = (val * rows as f64).floor() as usize;
                Ok([a, b, rows - a - b])
            }
            SplitRule::Counts { train, val, test } => {
                if train + val + test > rows {
                    return Err(DataIoError::Split(format!(
                        "split counts {train}/{val}/{test} exceed the {rows} rows available"
                    )));
                }
                Ok([train, val, test])
            }
        }
    }
}

/// Reads one trajectory and splits it chronologically.
pub fn load_csv_reader<R: io::Read>(
    reader: R,
    schema: &SystemSchema,
    rule: &SplitRule,
    name: &str,
) -> Result<DataBundle, DataIoError> {
    let traj = read_trajectory_csv(reader, schema)?;
    let rows = traj.len();
    let counts = rule.counts(rows)?;
    if counts.iter().any(|&c| c == 0) {
        return Err(DataIoError::Split(format!(
            "{rows} rows give an empty split ({}/{}/{})",
            counts[0], counts[1], counts[2]
        )));
    }
    let mut notes = vec![format!(
        "chronological split of {rows} rows into {}/{}/{}",
        counts[0], counts[1], counts[2]
    )];
    let used: usize = counts.iter().sum();
    if used < rows {
        notes.push(format!("dropped the last {} rows", rows - used));
    }
    let mut start = 0;
    let mut sets = Vec::with_capacity(3);
    for (split, n) in Split::ALL.into_iter().zip(counts) {
        let r = start..start + n;
        let piece = Trajectory {
            times: traj.times[r.clone()].to_vec(),
            states: traj.states[r.clone()].to_vec(),
            actions: traj.actions[r].to_vec(),
        };
        sets.push(Dataset::new(schema.clone(), split, vec![piece]));
        start += n;
    }
    let test = sets.pop().expect("three splits");
    let val = sets.pop().expect("three splits");
    let train = sets.pop().expect("three splits");
    Ok(DataBundle {
        system: name.to_string(),
        seed: None,
        notes,
        train,
        val,
        test,
    })
}

pub fn load_csv_dataset(path: &Path, schema: &SystemSchema, rule: &SplitRule) -> Result<DataBundle, DataIoError> {
    let file = fs::File::open(path).map_err(|source| DataIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    load_csv_reader(io::BufReader::new(file), schema, rule, &name)
}
