//! Compiled form of a spec: a flat expression tape per component plus dense
//! networks, evaluated forward and differentiated in reverse.

use std::sync::Arc;

use thiserror::Error;

use super::params::{Gradients, ParamLayout, ParamVector};
use crate::dsl::{
    validate, Activation, BinaryOp, Expr, InputRef, ModelSpec, SystemSchema, UnaryOp, Violation,
};

/// Smallest magnitude allowed for log/sqrt arguments, divisors and the base
/// of a non-integer power.
pub const GUARD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("spec does not fit the schema: {}", crate::dsl::format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("non-finite derivative in component {component} (`{target}`)")]
    EvalFault { component: usize, target: String },
    #[error("rollout step {step}: non-finite derivative in component {component} (`{target}`)")]
    RolloutFault {
        step: usize,
        component: usize,
        target: String,
    },
    #[error("non-finite gradient for parameter `{0}`")]
    GradientFault(String),
    #[error("parameter vector does not match this model's layout")]
    LayoutMismatch,
    #[error("dataset has no transitions")]
    NoTransitions,
    #[error("dataset schema does not match the model schema")]
    SchemaMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Const(f64),
    State(usize),
    Action(usize),
    Time,
    Param(usize),
    MlpOut(usize, usize),
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Input {
    State(usize),
    Action(usize),
    Time,
}

#[derive(Debug, Clone)]
struct CompiledMlp {
    inputs: Vec<Input>,
    used: bool,
}

/// A validated spec bound to a schema, ready for evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    schema: SystemSchema,
    layout: Arc<ParamLayout>,
    nodes: Vec<Node>,
    outputs: Vec<usize>,
    mlps: Vec<CompiledMlp>,
}

/// Scratch buffers reused across evaluations of one model.
#[derive(Debug, Clone)]
pub struct Workspace {
    vals: Vec<f64>,
    adj: Vec<f64>,
    /// Per network: activations per layer (index 0 is the input).
    acts: Vec<Vec<Vec<f64>>>,
    pre: Vec<Vec<Vec<f64>>>,
    mlp_grad: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    /// Last evaluated derivative.
    pub out: Vec<f64>,
}

#[inline]
fn guard_pos(a: f64) -> f64 {
    if a < GUARD_EPS {
        GUARD_EPS
    } else {
        a
    }
}

#[inline]
fn guard_den(d: f64) -> f64 {
    if d.abs() < GUARD_EPS {
        GUARD_EPS.copysign(d)
    } else {
        d
    }
}

#[inline]
fn is_integer(e: f64) -> bool {
    e.is_finite() && e.fract() == 0.0
}

#[inline]
fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Guarded forward value of a unary operator.
pub fn unary_value(op: UnaryOp, a: f64) -> f64 {
    match op {
        UnaryOp::Neg => -a,
        UnaryOp::Log => guard_pos(a).ln(),
        UnaryOp::Exp => a.exp(),
        UnaryOp::Sin => a.sin(),
        UnaryOp::Cos => a.cos(),
        UnaryOp::Sqrt => guard_pos(a).sqrt(),
        UnaryOp::Abs => a.abs(),
        UnaryOp::Sigmoid => sigmoid(a),
        UnaryOp::Tanh => a.tanh(),
    }
}

/// Derivative of [`unary_value`] given its input and output.
pub fn unary_grad(op: UnaryOp, a: f64, out: f64) -> f64 {
    match op {
        UnaryOp::Neg => -1.0,
        UnaryOp::Log => {
            if a < GUARD_EPS {
                0.0
            } else {
                1.0 / a
            }
        }
        UnaryOp::Exp => out,
        UnaryOp::Sin => a.cos(),
        UnaryOp::Cos => -a.sin(),
        UnaryOp::Sqrt => {
            if a < GUARD_EPS {
                0.0
            } else {
                0.5 / out
            }
        }
        UnaryOp::Abs => {
            if a > 0.0 {
                1.0
            } else if a < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        UnaryOp::Sigmoid => out * (1.0 - out),
        UnaryOp::Tanh => 1.0 - out * out,
    }
}

/// Guarded forward value of a binary operator.
pub fn binary_value(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / guard_den(b),
        BinaryOp::Pow => {
            if is_integer(b) {
                a.powf(b)
            } else {
                guard_pos(a).powf(b)
            }
        }
    }
}

/// Partial derivatives of [`binary_value`] with respect to both operands.
pub fn binary_grad(op: BinaryOp, a: f64, b: f64, out: f64) -> (f64, f64) {
    match op {
        BinaryOp::Add => (1.0, 1.0),
        BinaryOp::Sub => (1.0, -1.0),
        BinaryOp::Mul => (b, a),
        BinaryOp::Div => {
            let d = guard_den(b);
            let db = if b.abs() < GUARD_EPS { 0.0 } else { -out / d };
            (1.0 / d, db)
        }
        BinaryOp::Pow => {
            if is_integer(b) {
                let da = if b == 0.0 { 0.0 } else { b * a.powf(b - 1.0) };
                let db = if a > 0.0 { out * a.ln() } else { 0.0 };
                (da, db)
            } else if a < GUARD_EPS {
                (0.0, out * GUARD_EPS.ln())
            } else {
                (b * a.powf(b - 1.0), out * a.ln())
            }
        }
    }
}

#[inline]
fn activate(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Relu => z.max(0.0),
        Activation::LeakyRelu => {
            if z > 0.0 {
                z
            } else {
                Activation::LEAKY_SLOPE * z
            }
        }
        Activation::Tanh => z.tanh(),
    }
}

#[inline]
fn activate_grad(act: Activation, z: f64, a: f64) -> f64 {
    match act {
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::LeakyRelu => {
            if z > 0.0 {
                1.0
            } else {
                Activation::LEAKY_SLOPE
            }
        }
        Activation::Tanh => 1.0 - a * a,
    }
}

struct Compiler<'a> {
    schema: &'a SystemSchema,
    layout: &'a ParamLayout,
    nodes: Vec<Node>,
}

impl Compiler<'_> {
    fn push(&mut self, n: Node) -> usize {
        self.nodes.push(n);
        self.nodes.len() - 1
    }

    fn emit(&mut self, e: &Expr) -> usize {
        let node = match e {
            Expr::Const(v) => Node::Const(*v),
            Expr::State(n) => Node::State(self.schema.state_index(n).expect("validated")),
            Expr::Action(n) => Node::Action(self.schema.action_index(n).expect("validated")),
            Expr::Time => Node::Time,
            Expr::Param(n) => Node::Param(self.layout.scalar_index(n).expect("validated")),
            Expr::MlpOut { mlp, index } => {
                Node::MlpOut(self.layout.mlp_index(mlp).expect("validated"), *index)
            }
            Expr::Unary(op, a) => {
                let a = self.emit(a);
                Node::Unary(*op, a)
            }
            Expr::Binary(op, a, b) => {
                let a = self.emit(a);
                let b = self.emit(b);
                Node::Binary(*op, a, b)
            }
        };
        self.push(node)
    }
}

impl Model {
    /// Validates `spec` against `schema` and compiles it.
    pub fn compile(spec: &ModelSpec, schema: &SystemSchema) -> Result<Model, EngineError> {
        let violations = validate(spec, schema);
        if !violations.is_empty() {
            return Err(EngineError::Invalid(violations));
        }
        let layout = Arc::new(ParamLayout::from_spec(spec));
        let mut c = Compiler {
            schema,
            layout: &layout,
            nodes: Vec::new(),
        };
        let mut outputs = Vec::with_capacity(spec.components.len());
        for comp in &spec.components {
            let mut root = c.emit(&comp.expr);
            if let Some(r) = &comp.residual {
                let m = c.layout.mlp_index(&r.mlp).expect("validated");
                let leaf = c.push(Node::MlpOut(m, r.index));
                root = c.push(Node::Binary(BinaryOp::Add, root, leaf));
            }
            outputs.push(root);
        }
        let nodes = c.nodes;
        let mlps = layout
            .mlps
            .iter()
            .enumerate()
            .map(|(mi, m)| {
                let decl = spec.mlp(&m.name).expect("layout built from spec");
                let inputs = decl
                    .inputs
                    .iter()
                    .map(|i| match i {
                        InputRef::State(n) => Input::State(schema.state_index(n).expect("validated")),
                        InputRef::Action(n) => {
                            Input::Action(schema.action_index(n).expect("validated"))
                        }
                        InputRef::Time => Input::Time,
                    })
                    .collect();
                let used = nodes.iter().any(|n| matches!(n, Node::MlpOut(k, _) if *k == mi));
                CompiledMlp { inputs, used }
            })
            .collect();
        Ok(Model {
            spec: spec.clone(),
            schema: schema.clone(),
            layout,
            nodes,
            outputs,
            mlps,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn schema(&self) -> &SystemSchema {
        &self.schema
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn state_dim(&self) -> usize {
        self.schema.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.schema.action_dim()
    }

    /// Initial parameters: declared scalar inits, seeded network weights.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        ParamVector::init(&self.spec, seed)
    }

    pub fn check_params(&self, p: &ParamVector) -> Result<(), EngineError> {
        if p.values.len() == self.layout.len && *p.layout == *self.layout {
            Ok(())
        } else {
            Err(EngineError::LayoutMismatch)
        }
    }

    pub fn workspace(&self) -> Workspace {
        let mut acts = Vec::new();
        let mut pre = Vec::new();
        let mut widest = 0;
        for m in &self.layout.mlps {
            let mut a = vec![vec![0.0; m.layers[0].fan_in]];
            let mut z = Vec::new();
            for l in &m.layers {
                a.push(vec![0.0; l.fan_out]);
                z.push(vec![0.0; l.fan_out]);
                widest = widest.max(l.fan_out).max(l.fan_in);
            }
            acts.push(a);
            pre.push(z);
        }
        Workspace {
            vals: vec![0.0; self.nodes.len()],
            adj: vec![0.0; self.nodes.len()],
            mlp_grad: self
                .layout
                .mlps
                .iter()
                .map(|m| vec![0.0; m.layers.last().map_or(0, |l| l.fan_out)])
                .collect(),
            acts,
            pre,
            delta: vec![0.0; widest],
            delta_prev: vec![0.0; widest],
            out: vec![0.0; self.outputs.len()],
        }
    }

    fn mlp_forward(&self, p: &[f64], x: &[f64], u: &[f64], t: f64, ws: &mut Workspace) {
        for (mi, cm) in self.mlps.iter().enumerate() {
            if !cm.used {
                continue;
            }
            let m = &self.layout.mlps[mi];
            let acts = &mut ws.acts[mi];
            for (k, inp) in cm.inputs.iter().enumerate() {
                acts[0][k] = match *inp {
                    Input::State(i) => x[i],
                    Input::Action(i) => u[i],
                    Input::Time => t,
                };
            }
            let last = m.layers.len() - 1;
            for (li, l) in m.layers.iter().enumerate() {
                let (head, tail) = acts.split_at_mut(li + 1);
                let input = &head[li];
                let output = &mut tail[0];
                let z = &mut ws.pre[mi][li];
                let w = &p[l.weights..l.weights + l.fan_in * l.fan_out];
                let b = &p[l.bias..l.bias + l.fan_out];
                for o in 0..l.fan_out {
                    let row = &w[o * l.fan_in..(o + 1) * l.fan_in];
                    let mut s = b[o];
                    for (wi, xi) in row.iter().zip(input.iter()) {
                        s += wi * xi;
                    }
                    z[o] = s;
                    output[o] = if li == last { s } else { activate(m.activation, s) };
                }
            }
        }
    }

    /// Forward pass; the derivative is left in `ws.out`.
    pub fn eval_into(
        &self,
        params: &ParamVector,
        x: &[f64],
        u: &[f64],
        t: f64,
        ws: &mut Workspace,
    ) -> Result<(), EngineError> {
        let p = &params.values[..];
        self.mlp_forward(p, x, u, t, ws);
        let vals = &mut ws.vals;
        for (i, node) in self.nodes.iter().enumerate() {
            vals[i] = match *node {
                Node::Const(v) => v,
                Node::State(k) => x[k],
                Node::Action(k) => u[k],
                Node::Time => t,
                Node::Param(k) => p[k],
                Node::MlpOut(m, o) => {
                    let a = &ws.acts[m];
                    a[a.len() - 1][o]
                }
                Node::Unary(op, a) => unary_value(op, vals[a]),
                Node::Binary(op, a, b) => binary_value(op, vals[a], vals[b]),
            };
        }
        for (j, &root) in self.outputs.iter().enumerate() {
            let v = vals[root];
            if !v.is_finite() {
                return Err(EngineError::EvalFault {
                    component: j,
                    target: self.spec.components[j].target.clone(),
                });
            }
            ws.out[j] = v;
        }
        Ok(())
    }

    /// Reverse pass after [`eval_into`](Self::eval_into) at the same point:
    /// adds `sum_j upstream[j] * d out_j / d w` into `grads`.
    pub fn backward_into(
        &self,
        params: &ParamVector,
        upstream: &[f64],
        ws: &mut Workspace,
        grads: &mut [f64],
    ) {
        let p = &params.values[..];
        let adj = &mut ws.adj;
        adj.iter_mut().for_each(|a| *a = 0.0);
        for g in ws.mlp_grad.iter_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for (j, &root) in self.outputs.iter().enumerate() {
            adj[root] += upstream[j];
        }
        let vals = &ws.vals;
        for i in (0..self.nodes.len()).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match self.nodes[i] {
                Node::Param(k) => grads[k] += g,
                Node::MlpOut(m, o) => ws.mlp_grad[m][o] += g,
                Node::Unary(op, a) => adj[a] += g * unary_grad(op, vals[a], vals[i]),
                Node::Binary(op, a, b) => {
                    let (da, db) = binary_grad(op, vals[a], vals[b], vals[i]);
                    adj[a] += g * da;
                    adj[b] += g * db;
                }
                _ => {}
            }
        }
        for (mi, cm) in self.mlps.iter().enumerate() {
            if !cm.used || ws.mlp_grad[mi].iter().all(|g| *g == 0.0) {
                continue;
            }
            let m = &self.layout.mlps[mi];
            let acts = &ws.acts[mi];
            let pre = &ws.pre[mi];
            let out_width = m.layers.last().expect("at least one layer").fan_out;
            ws.delta[..out_width].copy_from_slice(&ws.mlp_grad[mi]);
            for li in (0..m.layers.len()).rev() {
                let l = &m.layers[li];
                let input = &acts[li];
                let delta = &ws.delta[..l.fan_out];
                for o in 0..l.fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    grads[l.bias + o] += d;
                    let row = &mut grads[l.weights + o * l.fan_in..l.weights + (o + 1) * l.fan_in];
                    for (gw, xi) in row.iter_mut().zip(input.iter()) {
                        *gw += d * xi;
                    }
                }
                if li == 0 {
                    break;
                }
                // propagate into the previous layer's pre-activation
                let w = &p[l.weights..l.weights + l.fan_in * l.fan_out];
                let prev = &mut ws.delta_prev[..l.fan_in];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for o in 0..l.fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[o * l.fan_in..(o + 1) * l.fan_in];
                    for (pv, wi) in prev.iter_mut().zip(row.iter()) {
                        *pv += d * wi;
                    }
                }
                let z = &pre[li - 1];
                let a = &acts[li];
                for k in 0..l.fan_in {
                    prev[k] *= activate_grad(m.activation, z[k], a[k]);
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
    }

    /// `dx/dt` at one point.
    pub fn eval_derivative(
        &self,
        params: &ParamVector,
        x: &[f64],
        u: &[f64],
        t: f64,
    ) -> Result<Vec<f64>, EngineError> {
        self.check_params(params)?;
        let mut ws = self.workspace();
        self.eval_into(params, x, u, t, &mut ws)?;
        Ok(ws.out)
    }

    /// One explicit Euler step into `next`.
    pub fn euler_step_into(
        &self,
        params: &ParamVector,
        x: &[f64],
        u: &[f64],
        t: f64,
        dt: f64,
        ws: &mut Workspace,
        next: &mut [f64],
    ) -> Result<(), EngineError> {
        self.eval_into(params, x, u, t, ws)?;
        for j in 0..x.len() {
            next[j] = x[j] + ws.out[j] * dt;
        }
        Ok(())
    }

    /// Gradient container for this model's layout.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients::zeros(self.layout.clone())
    }
}
