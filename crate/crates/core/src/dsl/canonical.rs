//! Canonical printing and structural fingerprints.
//!
//! The printer emits the minimum parentheses needed for the parser to
//! rebuild the same tree, so `parse(canonicalize(s))` is a fixed point.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::ast::*;

/// 64-bit hash of a spec's structure (inits and description excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub u64);

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        "0.0".to_string()
    } else {
        format!("{v:?}")
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(v) if *v < 0.0 => PREC_NEG,
        Expr::Unary(UnaryOp::Neg, _) => PREC_NEG,
        Expr::Binary(op, _, _) => match op {
            BinaryOp::Add | BinaryOp::Sub => PREC_ADD,
            BinaryOp::Mul | BinaryOp::Div => PREC_MUL,
            BinaryOp::Pow => PREC_POW,
        },
        _ => PREC_ATOM,
    }
}

fn write_wrapped(out: &mut String, e: &Expr, wrap: bool) {
    if wrap {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

pub fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Const(v) => out.push_str(&format_number(*v)),
        Expr::Param(n) | Expr::State(n) | Expr::Action(n) => out.push_str(n),
        Expr::Time => out.push_str(TIME_VAR),
        Expr::MlpOut { mlp, index } => {
            let _ = write!(out, "{mlp}[{index}]");
        }
        Expr::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            write_wrapped(out, a, precedence(a) < PREC_NEG || matches!(**a, Expr::Const(_)));
        }
        Expr::Unary(op, a) => {
            out.push_str(op.function_name().expect("non-negation unary has a name"));
            out.push('(');
            write_expr(out, a);
            out.push(')');
        }
        Expr::Binary(BinaryOp::Pow, base, exp) => {
            write_wrapped(out, base, precedence(base) != PREC_ATOM);
            out.push_str(" ^ ");
            write_wrapped(out, exp, precedence(exp) < PREC_NEG);
        }
        Expr::Binary(op, lhs, rhs) => {
            let p = precedence(e);
            write_wrapped(out, lhs, precedence(lhs) < p);
            let _ = write!(out, " {} ", op.symbol());
            write_wrapped(out, rhs, precedence(rhs) <= p);
        }
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_mlp(out: &mut String, m: &MlpDecl) {
    let inputs: Vec<&str> = m.inputs.iter().map(InputRef::name).collect();
    let hidden: Vec<String> = m.hidden.iter().map(usize::to_string).collect();
    let _ = writeln!(
        out,
        "mlp {}({}) hidden [{}] act {} outputs {}",
        m.name,
        inputs.join(", "),
        hidden.join(", "),
        m.activation,
        m.outputs
    );
}

fn write_component(out: &mut String, c: &ComponentDef) {
    let _ = write!(out, "d({})/dt = ", c.target);
    write_expr(out, &c.expr);
    if let Some(r) = &c.residual {
        let _ = write!(out, " + {}[{}]", r.mlp, r.index);
    }
    out.push('\n');
}

fn render(spec: &ModelSpec, structural: bool) -> String {
    let spec = spec.normalized();
    let mut out = String::new();
    if !structural && !spec.metadata.is_empty() {
        // split, not lines(): a trailing empty describe line must survive
        for line in spec.metadata.split('\n') {
            let line = line.trim();
            if line.is_empty() {
                out.push_str("describe\n");
            } else {
                let _ = writeln!(out, "describe {line}");
            }
        }
    }
    for p in &spec.params {
        if structural {
            let _ = writeln!(out, "param {}", p.name);
        } else {
            let _ = writeln!(out, "param {} = {}", p.name, format_number(p.init));
        }
    }
    for m in &spec.mlps {
        write_mlp(&mut out, m);
    }
    for c in &spec.components {
        write_component(&mut out, c);
    }
    out
}

/// Canonical source text: description, sorted params with inits, sorted
/// networks, then components in their stored order.
pub fn canonicalize(spec: &ModelSpec) -> String {
    render(spec, false)
}

/// Canonical text without the description and init values.
pub fn structural_text(spec: &ModelSpec) -> String {
    render(spec, true)
}

pub fn fingerprint(spec: &ModelSpec) -> Fingerprint {
    let digest = Sha256::digest(structural_text(spec).as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    Fingerprint(u64::from_be_bytes(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model_spec;

    fn roundtrip(src: &str) -> String {
        let spec = parse_model_spec(src).unwrap();
        let text = canonicalize(&spec);
        let again = parse_model_spec(&text).unwrap();
        assert_eq!(again, spec.normalized(), "reparse of:\n{text}");
        assert_eq!(canonicalize(&again), text);
        text
    }

    #[test]
    fn minimal_parentheses() {
        let text = roundtrip("d(x)/dt = (a - (b - x)) * (x / (x * a)) + (x ^ 2) ^ 3 + -(2) + x^-2");
        assert_eq!(
            text,
            "d(x)/dt = (a - (b - x)) * (x / (x * a)) + (x ^ 2.0) ^ 3.0 + -(2.0) + x ^ -2.0\n"
        );
    }

    #[test]
    fn negative_constant_as_power_base() {
        let spec = ModelSpec {
            components: vec![ComponentDef {
                target: "x".into(),
                expr: Expr::binary(BinaryOp::Pow, Expr::Const(-2.0), Expr::state("x")),
                residual: None,
            }],
            ..Default::default()
        };
        let text = canonicalize(&spec);
        assert_eq!(text, "d(x)/dt = (-2.0) ^ x\n");
        assert_eq!(parse_model_spec(&text).unwrap(), spec);
    }

    #[test]
    fn declarations_sorted_and_inits_printed() {
        let text = roundtrip(
            "describe two\ndescribe lines\nparam b = 1e-5\nparam a = -3\nmlp z(x) hidden [] act relu outputs 1\nmlp m(x, t) hidden [3, 2] act leaky_relu outputs 1\nd(x)/dt = a * x + b + m[0]",
        );
        assert_eq!(
            text,
            "describe two\ndescribe lines\nparam a = -3.0\nparam b = 1e-5\n\
             mlp m(x, t) hidden [3, 2] act leaky_relu outputs 1\n\
             mlp z(x) hidden [] act relu outputs 1\nd(x)/dt = a * x + b + m[0]\n"
        );
    }

    #[test]
    fn empty_describe_lines_are_kept() {
        let text = roundtrip("\ndescribe\ndescribe");
        assert_eq!(text, "describe\ndescribe\n");
        assert_eq!(canonicalize(&parse_model_spec(&text).unwrap()), text);
    }

    #[test]
    fn fingerprint_ignores_inits_order_and_description() {
        let a = parse_model_spec("describe one\nparam a = 1\nparam b = 2\nd(x)/dt = a * x - b").unwrap();
        let b = parse_model_spec("param b = 7\nparam a = 0.5\nd(x)/dt = a * x - b").unwrap();
        let c = parse_model_spec("param a = 1\nparam b = 2\nd(x)/dt = a * x + b").unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        assert!(a.structurally_eq(&b));
        assert_ne!(fingerprint(&a), fingerprint(&c));
        assert_eq!(fingerprint(&a).to_string().len(), 16);
    }
}
