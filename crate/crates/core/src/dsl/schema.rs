use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::TIME_VAR;

/// A named variable with its expected value range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSpec {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl VarSpec {
    pub fn new(name: impl Into<String>, low: f64, high: f64) -> Self {
        VarSpec {
            name: name.into(),
            low,
            high,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("schema needs at least one state variable")]
    NoStates,
    #[error("range of `{0}` has low > high")]
    BadRange(String),
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("variable name `{0}` is declared twice or collides with the time variable")]
    DuplicateName(String),
}

/// State/action spaces and sampling step of a dynamical system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSchema {
    pub states: Vec<VarSpec>,
    #[serde(default)]
    pub actions: Vec<VarSpec>,
    pub time_units: String,
    pub dt: f64,
}

impl SystemSchema {
    pub fn new(
        states: Vec<VarSpec>,
        actions: Vec<VarSpec>,
        time_units: impl Into<String>,
        dt: f64,
    ) -> Result<Self, SchemaError> {
        let schema = SystemSchema {
            states,
            actions,
            time_units: time_units.into(),
            dt,
        };
        schema.check()?;
        Ok(schema)
    }

    pub fn check(&self) -> Result<(), SchemaError> {
        if self.states.is_empty() {
            return Err(SchemaError::NoStates);
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SchemaError::BadTimeStep(self.dt));
        }
        let mut seen = std::collections::HashSet::new();
        for v in self.states.iter().chain(&self.actions) {
            if !(v.low <= v.high) {
                return Err(SchemaError::BadRange(v.name.clone()));
            }
            if v.name == TIME_VAR || !seen.insert(v.name.as_str()) {
                return Err(SchemaError::DuplicateName(v.name.clone()));
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.states.len()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.len()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|v| v.name == name)
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|v| v.name == name)
    }

    pub fn state_names(&self) -> impl Iterator<Item = &str> {
        self.states.iter().map(|v| v.name.as_str())
    }

    pub fn action_names(&self) -> impl Iterator<Item = &str> {
        self.actions.iter().map(|v| v.name.as_str())
    }

    /// Copy with a different time step (used by the out-of-distribution recipe).
    pub fn with_dt(&self, dt: f64) -> Self {
        SystemSchema {
            dt,
            ..self.clone()
        }
    }
}
