//! Static checks of a parsed spec against a system schema.

use std::collections::{HashMap, HashSet};
use std::fmt;

use super::ast::*;
use super::schema::SystemSchema;

/// Upper bound on scalars plus network weights in one spec.
pub const MAX_OPTIMIZABLE_PARAMS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

impl Violation {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Violation {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}

/// Renders violations one per line, the form fed back to a proposer.
pub fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(Violation::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Returns every violation found; an empty list means the spec can be
/// compiled against `schema`.
pub fn validate(spec: &ModelSpec, schema: &SystemSchema) -> Vec<Violation> {
    let mut out = Vec::new();
    let states: Vec<&str> = schema.state_names().collect();
    let actions: HashSet<&str> = schema.action_names().collect();

    if spec.components.len() != states.len() {
        out.push(Violation::new(
            "component-count",
            format!(
                "expected {} derivative lines (one per state: {}), found {}",
                states.len(),
                states.join(", "),
                spec.components.len()
            ),
        ));
    }
    let mut seen_targets = HashSet::new();
    for (i, c) in spec.components.iter().enumerate() {
        if !seen_targets.insert(c.target.as_str()) {
            out.push(Violation::new(
                "duplicate-target",
                format!("state `{}` has more than one derivative line", c.target),
            ));
            continue;
        }
        match states.iter().position(|s| *s == c.target) {
            None => out.push(Violation::new(
                "unknown-target",
                format!(
                    "`{}` is not a state of this system (states: {})",
                    c.target,
                    states.join(", ")
                ),
            )),
            Some(pos) if pos != i => out.push(Violation::new(
                "component-order",
                format!(
                    "derivative of `{}` is line {} but must be line {} to follow state order",
                    c.target,
                    i + 1,
                    pos + 1
                ),
            )),
            Some(_) => {}
        }
    }

    // declarations
    let reserved: HashSet<&str> = states
        .iter()
        .copied()
        .chain(actions.iter().copied())
        .chain(std::iter::once(TIME_VAR))
        .collect();
    let mut names: HashSet<&str> = HashSet::new();
    for name in spec
        .params
        .iter()
        .map(|p| p.name.as_str())
        .chain(spec.mlps.iter().map(|m| m.name.as_str()))
    {
        if reserved.contains(name) {
            out.push(Violation::new(
                "duplicate-name",
                format!("`{name}` is already a state, action or time variable"),
            ));
        } else if !names.insert(name) {
            out.push(Violation::new(
                "duplicate-name",
                format!("`{name}` is declared more than once"),
            ));
        }
    }
    for p in &spec.params {
        if !p.init.is_finite() {
            out.push(Violation::new(
                "non-finite-init",
                format!("parameter `{}` has non-finite init {}", p.name, p.init),
            ));
        }
    }
    let params: HashSet<&str> = spec.params.iter().map(|p| p.name.as_str()).collect();
    let mlp_outputs: HashMap<&str, usize> =
        spec.mlps.iter().map(|m| (m.name.as_str(), m.outputs)).collect();

    for m in &spec.mlps {
        if m.inputs.is_empty() || m.outputs == 0 || m.hidden.contains(&0) {
            out.push(Violation::new(
                "mlp-shape",
                format!("network `{}` has an empty input list or a zero-width layer", m.name),
            ));
        }
        for input in &m.inputs {
            let ok = match input {
                InputRef::State(n) => states.contains(&n.as_str()),
                InputRef::Action(n) => actions.contains(n.as_str()),
                InputRef::Time => true,
            };
            if !ok {
                out.push(unresolved(input.name(), &states, &actions));
            }
        }
    }

    let use_mlp = |mlp: &str, index: usize, out: &mut Vec<Violation>| match mlp_outputs.get(mlp) {
        None => out.push(Violation::new(
            "unresolved-symbol",
            format!("`{mlp}` is not a declared network"),
        )),
        Some(&n) if index >= n => out.push(Violation::new(
            "mlp-output-index",
            format!("network `{mlp}` has {n} output(s); index {index} is out of range"),
        )),
        Some(_) => {}
    };

    let mut reported: HashSet<String> = HashSet::new();
    for c in &spec.components {
        c.expr.walk(&mut |e| match e {
            Expr::Const(v) if !v.is_finite() => out.push(Violation::new(
                "non-finite-constant",
                format!("derivative of `{}` contains constant {v}", c.target),
            )),
            Expr::Param(n) if !params.contains(n.as_str()) && reported.insert(n.clone()) => {
                out.push(Violation::new(
                    "unresolved-symbol",
                    format!("parameter `{n}` is used but never declared"),
                ))
            }
            Expr::State(n) if !states.contains(&n.as_str()) && reported.insert(n.clone()) => {
                out.push(unresolved(n, &states, &actions))
            }
            Expr::Action(n) if !actions.contains(n.as_str()) && reported.insert(n.clone()) => {
                out.push(unresolved(n, &states, &actions))
            }
            Expr::MlpOut { mlp, index } => use_mlp(mlp, *index, &mut out),
            _ => {}
        });
        if let Some(r) = &c.residual {
            use_mlp(&r.mlp, r.index, &mut out);
        }
    }

    let total = spec.optimizable_param_count();
    if total > MAX_OPTIMIZABLE_PARAMS {
        out.push(Violation::new(
            "param-count",
            format!("spec has {total} optimizable parameters; the limit is {MAX_OPTIMIZABLE_PARAMS}"),
        ));
    }
    out
}

fn unresolved(name: &str, states: &[&str], actions: &HashSet<&str>) -> Violation {
    let mut acts: Vec<&str> = actions.iter().copied().collect();
    acts.sort_unstable();
    let message = if states.contains(&name) {
        format!("state `{name}` is used but has no derivative line")
    } else {
        format!(
            "undeclared symbol `{name}` (states: {}; actions: {}; declare constants with `param`)",
            states.join(", "),
            if acts.is_empty() { "none".to_string() } else { acts.join(", ") }
        )
    };
    Violation::new("unresolved-symbol", message)
}
