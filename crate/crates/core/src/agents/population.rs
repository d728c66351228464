//! Top-K store of fitted candidates, ordered by validation loss.

use crate::dsl::{canonicalize, fingerprint, Fingerprint, ModelSpec};
use crate::engine::{ComponentLoss, ParamVector};

pub const DEFAULT_CAPACITY: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationEntry {
    pub spec: ModelSpec,
    pub canonical: String,
    pub fingerprint: Fingerprint,
    /// Fitted values; the spec's own inits are the starting point.
    pub params: ParamVector,
    pub val: ComponentLoss,
    pub generation: usize,
    pub description: String,
}

impl PopulationEntry {
    pub fn new(spec: ModelSpec, params: ParamVector, val: ComponentLoss, generation: usize, description: String) -> Self {
        PopulationEntry {
            canonical: canonicalize(&spec),
            fingerprint: fingerprint(&spec),
            spec,
            params,
            val,
            generation,
            description,
        }
    }

    pub fn upsilon(&self) -> f64 {
        self.val.upsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    /// A structurally identical spec is already held.
    Duplicate,
    /// Full, and the entry is no better than the current worst.
    Rejected,
    /// Non-finite validation loss.
    Invalid,
}

/// Best entry at the end of one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryItem {
    pub generation: usize,
    pub upsilon: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    capacity: usize,
    entries: Vec<PopulationEntry>,
    pub history: Vec<HistoryItem>,
}

impl Population {
    pub fn new(capacity: usize) -> Self {
        Population {
            capacity: capacity.max(1),
            entries: Vec::new(),
            history: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Sorted ascending by validation loss.
    pub fn entries(&self) -> &[PopulationEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&PopulationEntry> {
        self.entries.first()
    }

    pub fn contains(&self, fp: Fingerprint) -> bool {
        self.entries.iter().any(|e| e.fingerprint == fp)
    }

    pub fn insert(&mut self, entry: PopulationEntry) -> InsertOutcome {
        if !entry.upsilon().is_finite() {
            return InsertOutcome::Invalid;
        }
        if self.contains(entry.fingerprint) {
            return InsertOutcome::Duplicate;
        }
        // Ties keep the earlier entry ahead.
        let pos = self.entries.partition_point(|e| e.upsilon() <= entry.upsilon());
        if pos >= self.capacity {
            return InsertOutcome::Rejected;
        }
        self.entries.insert(pos, entry);
        self.entries.truncate(self.capacity);
        InsertOutcome::Inserted
    }

    /// Appends the current best to the per-generation history.
    pub fn record_generation(&mut self, generation: usize) {
        if let Some(best) = self.best() {
            let item = HistoryItem {
                generation,
                upsilon: best.upsilon(),
                description: best.description.clone(),
            };
            self.history.push(item);
        }
    }
}
