//! Shared oracles for integration tests.
#![allow(dead_code)]

use hdtwin::dsl::{
    Activation, BinaryOp, ComponentDef, Expr, InputRef, MlpDecl, ModelSpec, ParamDecl,
    SystemSchema, UnaryOp, VarSpec,
};
use hdtwin::engine::{Model, ParamVector, TransitionSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn two_state_schema() -> SystemSchema {
    SystemSchema::new(
        vec![VarSpec::new("x", -3.0, 3.0), VarSpec::new("y", -3.0, 3.0)],
        vec![VarSpec::new("u", 0.0, 1.0)],
        "days",
        0.1,
    )
    .unwrap()
}

const PARAMS: [&str; 3] = ["a", "b", "c"];

fn one() -> Expr {
    Expr::Const(1.0)
}

/// Random smooth expression; every guarded operator is fed an argument
/// that stays well inside its unclamped domain.
pub fn random_expr(r: &mut ChaCha8Rng, depth: u32, with_mlp: bool) -> Expr {
    if depth == 0 || r.random_bool(0.25) {
        return match r.random_range(0..7) {
            0 => Expr::Const(r.random_range(-2.0..2.0)),
            1 => Expr::state("x"),
            2 => Expr::state("y"),
            3 => Expr::action("u"),
            4 => Expr::Time,
            5 if with_mlp => Expr::MlpOut {
                mlp: "net".into(),
                index: r.random_range(0..2),
            },
            _ => Expr::param(PARAMS[r.random_range(0..PARAMS.len())]),
        };
    }
    let a = random_expr(r, depth - 1, with_mlp);
    match r.random_range(0..12) {
        0 => a + random_expr(r, depth - 1, with_mlp),
        1 => a - random_expr(r, depth - 1, with_mlp),
        2 | 3 => a * random_expr(r, depth - 1, with_mlp),
        4 => {
            let b = random_expr(r, depth - 1, with_mlp);
            a / (one() + b.clone() * b)
        }
        5 => {
            // positive base, free exponent
            let e = random_expr(r, depth - 1, with_mlp);
            Expr::binary(
                BinaryOp::Pow,
                Expr::unary(UnaryOp::Sigmoid, a) + Expr::Const(0.5),
                Expr::unary(UnaryOp::Tanh, e),
            )
        }
        6 => Expr::binary(BinaryOp::Pow, a, Expr::Const(2.0)),
        7 => Expr::unary(UnaryOp::Log, one() + a.clone() * a),
        8 => Expr::unary(UnaryOp::Sqrt, one() + a.clone() * a),
        9 => Expr::unary(UnaryOp::Exp, Expr::unary(UnaryOp::Tanh, a)),
        10 => Expr::unary(if r.random_bool(0.5) { UnaryOp::Sin } else { UnaryOp::Cos }, a),
        _ => -a,
    }
}

pub fn random_spec(r: &mut ChaCha8Rng) -> ModelSpec {
    let with_mlp = r.random_bool(0.5);
    let mut components = Vec::new();
    for target in ["x", "y"] {
        let residual = (with_mlp && r.random_bool(0.5)).then(|| hdtwin::dsl::MlpRef {
            mlp: "net".into(),
            index: if target == "x" { 0 } else { 1 },
        });
        components.push(ComponentDef {
            target: target.into(),
            expr: random_expr(r, 4, with_mlp),
            residual,
        });
    }
    let mlps = if with_mlp {
        let act = if r.random_bool(0.5) {
            Activation::Tanh
        } else {
            Activation::LeakyRelu
        };
        vec![MlpDecl {
            name: "net".into(),
            inputs: vec![
                InputRef::State("x".into()),
                InputRef::State("y".into()),
                InputRef::Action("u".into()),
                InputRef::Time,
            ],
            hidden: vec![r.random_range(2..6), r.random_range(2..5)],
            activation: act,
            outputs: 2,
        }]
    } else {
        Vec::new()
    };
    let params = PARAMS
        .iter()
        .map(|n| ParamDecl {
            name: n.to_string(),
            init: r.random_range(-1.0..1.0),
        })
        .collect();
    ModelSpec {
        components,
        params,
        mlps,
        metadata: String::new(),
    }
}

/// Random transitions over the two-state schema.
pub fn random_transitions(r: &mut ChaCha8Rng, n: usize) -> TransitionSet {
    let mut set = TransitionSet {
        dx: 2,
        du: 1,
        dt: 0.1,
        len: n,
        x: Vec::new(),
        u: Vec::new(),
        t: Vec::new(),
        y: Vec::new(),
    };
    for _ in 0..n {
        set.x.push(r.random_range(-2.0..2.0));
        set.x.push(r.random_range(-2.0..2.0));
        set.u.push(r.random_range(0.0..1.0));
        set.t.push(r.random_range(0.0..5.0));
        set.y.push(r.random_range(-2.0..2.0));
        set.y.push(r.random_range(-2.0..2.0));
    }
    set
}

/// Batch loss by direct summation, one derivative evaluation per transition.
pub fn brute_force_batch_loss(model: &Model, p: &ParamVector, set: &TransitionSet, batch: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in batch {
        let f = model.eval_derivative(p, set.x(i), set.u(i), set.t[i]).unwrap();
        for j in 0..set.dx {
            let r = set.x(i)[j] + f[j] * set.dt - set.y(i)[j];
            total += r * r;
        }
    }
    total / batch.len() as f64
}

/// Largest relative error between reverse-mode and the five-point central
/// difference with step `1e-4 * max(1, |w|)`, retried at a tenth of that step
/// so a ReLU kink inside the wider stencil does not count as a mismatch.
/// Entries where both are below 1e-8 count as agreeing.
pub fn gradient_check(model: &Model, p: &ParamVector, set: &TransitionSet, batch: &[usize]) -> f64 {
    let (_, grads) = model.loss_gradient(p, set, batch).unwrap();
    let at = |k: usize, d: f64| {
        let mut q = p.clone();
        q.values[k] += d;
        brute_force_batch_loss(model, &q, set, batch)
    };
    let mut worst: f64 = 0.0;
    for k in 0..p.len() {
        let g = grads.values[k];
        let rel = [1e-4, 1e-5]
            .iter()
            .map(|&scale| {
                let h = scale * p.values[k].abs().max(1.0);
                let fd = (at(k, -2.0 * h) - 8.0 * at(k, -h) + 8.0 * at(k, h) - at(k, 2.0 * h)) / (12.0 * h);
                if g.abs() < 1e-8 && fd.abs() < 1e-8 {
                    0.0
                } else {
                    (g - fd).abs() / g.abs().max(fd.abs())
                }
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(rel);
    }
    worst
}
