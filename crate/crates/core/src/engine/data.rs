use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::SystemSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("trajectory is empty")]
    Empty,
    #[error("row {row}: expected {expected} values, found {found}")]
    Width {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("time is not strictly increasing at row {0}")]
    NonMonotoneTime(usize),
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
}

/// One regularly sampled state-action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `actions[k]` is applied over `[times[k], times[k+1])`.
    pub actions: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        states: Vec<Vec<f64>>,
        actions: Vec<Vec<f64>>,
        schema: &SystemSchema,
    ) -> Result<Self, DataError> {
        let t = Trajectory {
            times,
            states,
            actions,
        };
        t.check(schema)?;
        Ok(t)
    }

    pub fn check(&self, schema: &SystemSchema) -> Result<(), DataError> {
        if self.times.is_empty() {
            return Err(DataError::Empty);
        }
        for (rows, width) in [(&self.states, schema.state_dim()), (&self.actions, schema.action_dim())] {
            if rows.len() != self.times.len() {
                return Err(DataError::Width {
                    row: rows.len().min(self.times.len()),
                    expected: self.times.len(),
                    found: rows.len(),
                });
            }
            for (i, r) in rows.iter().enumerate() {
                if r.len() != width {
                    return Err(DataError::Width {
                        row: i,
                        expected: width,
                        found: r.len(),
                    });
                }
                if r.iter().any(|v| !v.is_finite()) {
                    return Err(DataError::NonFinite(i));
                }
            }
        }
        for (i, w) in self.times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(DataError::NonMonotoneTime(i + 1));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: SystemSchema,
    pub split: Split,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(schema: SystemSchema, split: Split, trajectories: Vec<Trajectory>) -> Self {
        Dataset {
            schema,
            split,
            trajectories,
        }
    }

    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len().saturating_sub(1)).sum()
    }

    /// Teacher-forcing tuples `(x(t), u(t), t, x(t + dt))`.
    pub fn transitions(&self) -> TransitionSet {
        let dx = self.schema.state_dim();
        let du = self.schema.action_dim();
        let n = self.transition_count();
        let mut set = TransitionSet {
            dx,
            du,
            dt: self.schema.dt,
            len: n,
            x: Vec::with_capacity(n * dx),
            u: Vec::with_capacity(n * du),
            t: Vec::with_capacity(n),
            y: Vec::with_capacity(n * dx),
        };
        for traj in &self.trajectories {
            for k in 0..traj.len().saturating_sub(1) {
                set.x.extend_from_slice(&traj.states[k]);
                set.u.extend_from_slice(&traj.actions[k]);
                set.t.push(traj.times[k]);
                set.y.extend_from_slice(&traj.states[k + 1]);
            }
        }
        set
    }
}

/// Contiguous storage of every transition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSet {
    pub dx: usize,
    pub du: usize,
    pub dt: f64,
    pub len: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl TransitionSet {
    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dx..(i + 1) * self.dx]
    }

    #[inline]
    pub fn u(&self, i: usize) -> &[f64] {
        &self.u[i * self.du..(i + 1) * self.du]
    }

    #[inline]
    pub fn y(&self, i: usize) -> &[f64] {
        &self.y[i * self.dx..(i + 1) * self.dx]
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}
