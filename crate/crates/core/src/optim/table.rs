//! Text forms of fitted parameters and loss curves.
//!
//! Params table: one line per scalar or network, `name count v1 .. vn`,
//! values in shortest round-trip notation.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use super::EpochRecord;
use crate::engine::{ParamLayout, ParamVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("table has no entry for `{0}`")]
    Missing(String),
    #[error("entry `{name}` has {found} values, layout expects {expected}")]
    Count {
        name: String,
        expected: usize,
        found: usize,
    },
}

pub fn format_params_table(p: &ParamVector) -> String {
    let mut out = String::new();
    for (name, v) in p.scalars() {
        let _ = writeln!(out, "{name} 1 {v:?}");
    }
    for m in &p.layout.mlps {
        let _ = write!(out, "{} {}", m.name, m.end - m.start);
        for v in &p.values[m.start..m.end] {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_params_table(text: &str) -> Result<Vec<(String, Vec<f64>)>, TableError> {
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut fields = line.split_whitespace();
        let Some(name) = fields.next() else {
            continue;
        };
        let malformed = |message: String| TableError::Malformed {
            line: line_no,
            message,
        };
        let count: usize = fields
            .next()
            .ok_or_else(|| malformed(format!("`{name}` has no value count")))?
            .parse()
            .map_err(|_| malformed("value count is not an integer".into()))?;
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|_| malformed(format!("`{f}` is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != count {
            return Err(malformed(format!(
                "`{name}` declares {count} values but lists {}",
                values.len()
            )));
        }
        if entries.iter().any(|(n, _)| n == name) {
            return Err(malformed(format!("`{name}` appears twice")));
        }
        entries.push((name.to_string(), values));
    }
    Ok(entries)
}

/// Fills a vector with `layout` from parsed table entries.
pub fn params_from_table(
    layout: Arc<ParamLayout>,
    entries: &[(String, Vec<f64>)],
) -> Result<ParamVector, TableError> {
    let find = |name: &str| {
        entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| TableError::Missing(name.to_string()))
    };
    let mut values = vec![0.0; layout.len];
    for (i, name) in layout.scalars.iter().enumerate() {
        let v = find(name)?;
        if v.len() != 1 {
            return Err(TableError::Count {
                name: name.clone(),
                expected: 1,
                found: v.len(),
            });
        }
        values[i] = v[0];
    }
    for m in &layout.mlps {
        let v = find(&m.name)?;
        if v.len() != m.end - m.start {
            return Err(TableError::Count {
                name: m.name.clone(),
                expected: m.end - m.start,
                found: v.len(),
            });
        }
        values[m.start..m.end].copy_from_slice(v);
    }
    Ok(ParamVector { layout, values })
}

pub fn format_curves_csv(curves: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in curves {
        let _ = writeln!(out, "{},{:?},{:?}", r.epoch, r.train_loss, r.val_loss);
    }
    out
}
