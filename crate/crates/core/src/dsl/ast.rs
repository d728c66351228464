//! Syntax tree for hybrid model specifications.

use std::fmt;

/// Name of the time variable inside expressions and network inputs.
pub const TIME_VAR: &str = "t";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Log,
    Exp,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Sigmoid,
    Tanh,
}

impl UnaryOp {
    /// Function-call spelling; `None` for prefix negation.
    pub fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Log => Some("log"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Sqrt => Some("sqrt"),
            UnaryOp::Abs => Some("abs"),
            UnaryOp::Sigmoid => Some("sigmoid"),
            UnaryOp::Tanh => Some("tanh"),
        }
    }

    pub fn from_function_name(name: &str) -> Option<Self> {
        Some(match name {
            "log" | "ln" => UnaryOp::Log,
            "exp" => UnaryOp::Exp,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            "sigmoid" => UnaryOp::Sigmoid,
            "tanh" => UnaryOp::Tanh,
            _ => return None,
        })
    }

    pub const ALL: [UnaryOp; 9] = [
        UnaryOp::Neg,
        UnaryOp::Log,
        UnaryOp::Exp,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Sqrt,
        UnaryOp::Abs,
        UnaryOp::Sigmoid,
        UnaryOp::Tanh,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }

    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Pow,
    ];
}

/// Expression tree for one component's mechanistic dynamics.
///
/// Leaves reference symbols by name; binding to schema indices happens when
/// the engine compiles a spec against a [`SystemSchema`](super::SystemSchema).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(String),
    State(String),
    Action(String),
    Time,
    MlpOut { mlp: String, index: usize },
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn param(name: impl Into<String>) -> Self {
        Expr::Param(name.into())
    }

    pub fn state(name: impl Into<String>) -> Self {
        Expr::State(name.into())
    }

    pub fn action(name: impl Into<String>) -> Self {
        Expr::Action(name.into())
    }

    pub fn unary(op: UnaryOp, arg: Expr) -> Self {
        Expr::Unary(op, Box::new(arg))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Number of nodes in the tree.
    pub fn node_count(&self) -> usize {
        match self {
            Expr::Unary(_, a) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
            _ => 1,
        }
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, a) => a.walk(f),
            Expr::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    /// Names of parameters referenced anywhere in the tree.
    pub fn param_refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Param(p) = e {
                out.push(p.as_str());
            }
        });
        out
    }

    /// Rewrites every `Param(name)` leaf in place.
    pub fn map_params(&mut self, f: &mut impl FnMut(&str) -> Option<Expr>) {
        match self {
            Expr::Param(p) => {
                if let Some(rep) = f(p) {
                    *self = rep;
                }
            }
            Expr::Unary(_, a) => a.map_params(f),
            Expr::Binary(_, a, b) => {
                a.map_params(f);
                b.map_params(f);
            }
            _ => {}
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, self, rhs)
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryOp::Neg, self)
    }
}

/// Reference to one output slot of a declared network.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpRef {
    pub mlp: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDef {
    /// State variable whose time derivative this component defines.
    pub target: String,
    pub expr: Expr,
    /// Additive neural residual.
    pub residual: Option<MlpRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub init: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    /// Leaky ReLU with negative slope 0.1.
    LeakyRelu,
    Tanh,
}

impl Activation {
    pub const LEAKY_SLOPE: f64 = 0.1;

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "relu" => Some(Activation::Relu),
            "leaky_relu" | "leakyrelu" | "leaky" => Some(Activation::LeakyRelu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Input fed to a network.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InputRef {
    State(String),
    Action(String),
    Time,
}

impl InputRef {
    pub fn name(&self) -> &str {
        match self {
            InputRef::State(n) | InputRef::Action(n) => n,
            InputRef::Time => TIME_VAR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpDecl {
    pub name: String,
    pub inputs: Vec<InputRef>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub outputs: usize,
}

impl MlpDecl {
    /// `(fan_in, fan_out)` for every dense layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.inputs.len());
        widths.extend_from_slice(&self.hidden);
        widths.push(self.outputs);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(fan_in, fan_out)| fan_in * fan_out + fan_out)
            .sum()
    }
}

/// A complete hybrid model specification.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelSpec {
    pub components: Vec<ComponentDef>,
    pub params: Vec<ParamDecl>,
    pub mlps: Vec<MlpDecl>,
    /// Free-text description supplied by whoever wrote the spec.
    pub metadata: String,
}

impl ModelSpec {
    pub fn param(&self, name: &str) -> Option<&ParamDecl> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn mlp(&self, name: &str) -> Option<&MlpDecl> {
        self.mlps.iter().find(|m| m.name == name)
    }

    /// Scalar parameters plus every network weight and bias.
    pub fn optimizable_param_count(&self) -> usize {
        self.params.len() + self.mlps.iter().map(MlpDecl::param_count).sum::<usize>()
    }

    /// Copy with declarations sorted by name, the order canonical text uses.
    pub fn normalized(&self) -> ModelSpec {
        let mut out = self.clone();
        out.params.sort_by(|a, b| a.name.cmp(&b.name));
        out.mlps.sort_by(|a, b| a.name.cmp(&b.name));
        out
    }

    /// Equality up to declaration order and parameter init values.
    pub fn structurally_eq(&self, other: &ModelSpec) -> bool {
        let a = self.normalized();
        let b = other.normalized();
        a.components == b.components
            && a.mlps == b.mlps
            && a.params.len() == b.params.len()
            && a.params.iter().zip(&b.params).all(|(x, y)| x.name == y.name)
    }

    /// Replaces the init value of every named scalar found in `values`.
    pub fn with_param_inits<'a>(
        &self,
        values: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> ModelSpec {
        let mut out = self.clone();
        for (name, v) in values {
            if let Some(p) = out.params.iter_mut().find(|p| p.name == name) {
                p.init = v;
            }
        }
        out
    }
}
