//! Recursive-descent parser for `.hdt` model specifications.
//!
//! Source is line oriented:
//!
//! ```text
//! # comment
//! describe logistic growth
//! param alpha = 0.1
//! mlp res(x, u) hidden [16, 8] act tanh outputs 1
//! d(x)/dt = alpha * x * (1 - x / kappa) + res[0]
//! ```
//!
//! Expression precedence, loosest first: `+ -`, `* /`, prefix `-`, `^`
//! (right associative, also spelled `**`).

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::error::{DslError, DslErrorKind};
use super::lexer::{lex_line, Token, TokenKind};

struct ComponentLine {
    target: String,
    tokens: Vec<Token>,
    line: usize,
    /// Column just past the end of the line, for end-of-input errors.
    end_column: usize,
}

fn err(kind: DslErrorKind, line: usize, column: usize, message: impl Into<String>) -> DslError {
    DslError {
        kind,
        line,
        column,
        message: message.into(),
    }
}

fn word_after<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(keyword)?;
    if rest.is_empty() {
        Some("")
    } else if rest.starts_with(char::is_whitespace) {
        Some(rest.trim())
    } else {
        None
    }
}

/// Parses DSL source into a [`ModelSpec`].
///
/// Identifiers that name a component target resolve to states, `t` to time,
/// declared names to parameters or networks; every other identifier is taken
/// to be an action variable and is checked later against a schema by
/// [`validate`](super::validate).
pub fn parse_model_spec(text: &str) -> Result<ModelSpec, DslError> {
    let mut params: Vec<ParamDecl> = Vec::new();
    let mut param_lines: Vec<(usize, usize)> = Vec::new();
    let mut raw_mlps: Vec<(String, Vec<Token>, Vec<usize>, Activation, usize, usize)> = Vec::new();
    let mut components: Vec<ComponentLine> = Vec::new();
    let mut description: Vec<String> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = word_after(trimmed, "describe") {
            description.push(rest.to_string());
            continue;
        }
        let tokens = lex_line(raw_line, line_no)?;
        let end_column = raw_line.chars().count() + 1;
        let Some(first) = tokens.first() else {
            continue;
        };
        match &first.kind {
            TokenKind::Ident(kw) if kw == "param" => {
                let (decl, col) = parse_param_line(&tokens, line_no, end_column)?;
                params.push(decl);
                param_lines.push((line_no, col));
            }
            TokenKind::Ident(kw) if kw == "mlp" => {
                raw_mlps.push(parse_mlp_line(&tokens, line_no, end_column)?);
            }
            TokenKind::Ident(kw)
                if kw == "d" && matches!(tokens.get(1).map(|t| &t.kind), Some(TokenKind::LParen)) =>
            {
                components.push(parse_component_header(tokens, line_no, end_column)?);
            }
            _ => {
                return Err(err(
                    DslErrorKind::Syntax,
                    line_no,
                    first.column,
                    "expected `param`, `mlp`, `describe` or `d(VAR)/dt = ...`",
                ))
            }
        }
    }

    // name collisions
    let mut targets: HashSet<String> = HashSet::new();
    for c in &components {
        if c.target == TIME_VAR {
            return Err(err(
                DslErrorKind::Duplicate,
                c.line,
                3,
                format!("`{TIME_VAR}` is the time variable and cannot be a state"),
            ));
        }
        if !targets.insert(c.target.clone()) {
            return Err(err(
                DslErrorKind::Duplicate,
                c.line,
                3,
                format!("state `{}` has more than one derivative line", c.target),
            ));
        }
    }
    let mut declared: HashSet<String> = HashSet::new();
    for (p, (line, col)) in params.iter().zip(&param_lines) {
        if p.name == TIME_VAR || targets.contains(&p.name) || !declared.insert(p.name.clone()) {
            return Err(err(
                DslErrorKind::Duplicate,
                *line,
                *col,
                format!("parameter name `{}` is already in use", p.name),
            ));
        }
    }
    for (name, _, _, _, _, line) in &raw_mlps {
        if name == TIME_VAR || targets.contains(name) || !declared.insert(name.clone()) {
            return Err(err(
                DslErrorKind::Duplicate,
                *line,
                5,
                format!("network name `{name}` is already in use"),
            ));
        }
    }

    let param_names: HashSet<&str> = params.iter().map(|p| p.name.as_str()).collect();
    let mlp_outputs: HashMap<&str, usize> = raw_mlps
        .iter()
        .map(|(n, _, _, _, o, _)| (n.as_str(), *o))
        .collect();

    let mut mlps = Vec::with_capacity(raw_mlps.len());
    for (name, input_tokens, hidden, activation, outputs, _) in &raw_mlps {
        let mut inputs = Vec::with_capacity(input_tokens.len());
        for tok in input_tokens {
            let TokenKind::Ident(n) = &tok.kind else {
                unreachable!("input list holds identifiers only")
            };
            if param_names.contains(n.as_str()) || mlp_outputs.contains_key(n.as_str()) {
                return Err(err(
                    DslErrorKind::Unresolved,
                    tok.line,
                    tok.column,
                    format!("network input `{n}` must be a state, action or `{TIME_VAR}`"),
                ));
            }
            inputs.push(if n == TIME_VAR {
                InputRef::Time
            } else if targets.contains(n) {
                InputRef::State(n.clone())
            } else {
                InputRef::Action(n.clone())
            });
        }
        mlps.push(MlpDecl {
            name: name.clone(),
            inputs,
            hidden: hidden.clone(),
            activation: *activation,
            outputs: *outputs,
        });
    }

    let scope = Scope {
        targets: &targets,
        params: &param_names,
        mlps: &mlp_outputs,
    };
    let mut out_components = Vec::with_capacity(components.len());
    for c in components {
        let mut p = ExprParser {
            tokens: &c.tokens,
            pos: 0,
            line: c.line,
            end_column: c.end_column,
            scope: &scope,
        };
        let expr = p.expr()?;
        if let Some(tok) = p.peek() {
            return Err(err(
                DslErrorKind::Syntax,
                tok.line,
                tok.column,
                format!("unexpected {} after expression", tok.kind.describe()),
            ));
        }
        let (expr, residual) = split_residual(expr);
        out_components.push(ComponentDef {
            target: c.target,
            expr,
            residual,
        });
    }

    Ok(ModelSpec {
        components: out_components,
        params,
        mlps,
        metadata: description.join("\n"),
    })
}

/// Peels a trailing `+ net[i]` off the top of a component expression.
fn split_residual(expr: Expr) -> (Expr, Option<MlpRef>) {
    match expr {
        Expr::MlpOut { mlp, index } => (Expr::Const(0.0), Some(MlpRef { mlp, index })),
        Expr::Binary(BinaryOp::Add, lhs, rhs) => match *rhs {
            Expr::MlpOut { mlp, index } => (*lhs, Some(MlpRef { mlp, index })),
            other => (Expr::Binary(BinaryOp::Add, lhs, Box::new(other)), None),
        },
        other => (other, None),
    }
}

fn expect_ident<'a>(
    tokens: &'a [Token],
    i: usize,
    line: usize,
    end_column: usize,
    what: &str,
) -> Result<&'a str, DslError> {
    match tokens.get(i) {
        Some(Token {
            kind: TokenKind::Ident(s),
            ..
        }) => Ok(s),
        Some(t) => Err(err(
            DslErrorKind::Syntax,
            line,
            t.column,
            format!("expected {what}, found {}", t.kind.describe()),
        )),
        None => Err(err(
            DslErrorKind::Syntax,
            line,
            end_column,
            format!("expected {what} before end of line"),
        )),
    }
}

fn expect_kind(
    tokens: &[Token],
    i: usize,
    kind: &TokenKind,
    line: usize,
    end_column: usize,
) -> Result<(), DslError> {
    match tokens.get(i) {
        Some(t) if &t.kind == kind => Ok(()),
        Some(t) => Err(err(
            DslErrorKind::Syntax,
            line,
            t.column,
            format!("expected {}, found {}", kind.describe(), t.kind.describe()),
        )),
        None => Err(err(
            DslErrorKind::Syntax,
            line,
            end_column,
            format!("expected {} before end of line", kind.describe()),
        )),
    }
}

fn expect_keyword(
    tokens: &[Token],
    i: usize,
    words: &[&str],
    line: usize,
    end_column: usize,
) -> Result<(), DslError> {
    let got = expect_ident(tokens, i, line, end_column, &format!("`{}`", words[0]))?;
    if words.contains(&got) {
        Ok(())
    } else {
        Err(err(
            DslErrorKind::Syntax,
            line,
            tokens[i].column,
            format!("expected `{}`, found `{got}`", words[0]),
        ))
    }
}

fn expect_count(
    tokens: &[Token],
    i: usize,
    line: usize,
    end_column: usize,
) -> Result<usize, DslError> {
    match tokens.get(i) {
        Some(Token {
            kind: TokenKind::Number(v),
            column,
            ..
        }) => {
            if *v >= 0.0 && v.fract() == 0.0 && *v <= u32::MAX as f64 {
                Ok(*v as usize)
            } else {
                Err(err(
                    DslErrorKind::Syntax,
                    line,
                    *column,
                    format!("expected a non-negative integer, found `{v}`"),
                ))
            }
        }
        Some(t) => Err(err(
            DslErrorKind::Syntax,
            line,
            t.column,
            format!("expected an integer, found {}", t.kind.describe()),
        )),
        None => Err(err(
            DslErrorKind::Syntax,
            line,
            end_column,
            "expected an integer before end of line",
        )),
    }
}

fn parse_param_line(
    tokens: &[Token],
    line: usize,
    end_column: usize,
) -> Result<(ParamDecl, usize), DslError> {
    let name = expect_ident(tokens, 1, line, end_column, "a parameter name")?.to_string();
    let name_col = tokens[1].column;
    expect_kind(tokens, 2, &TokenKind::Equals, line, end_column)?;
    let mut i = 3;
    let mut sign = 1.0;
    while let Some(Token {
        kind: TokenKind::Minus | TokenKind::Plus,
        ..
    }) = tokens.get(i)
    {
        if tokens[i].kind == TokenKind::Minus {
            sign = -sign;
        }
        i += 1;
    }
    let init = match tokens.get(i) {
        Some(Token {
            kind: TokenKind::Number(v),
            ..
        }) => sign * v,
        Some(t) => {
            return Err(err(
                DslErrorKind::Syntax,
                line,
                t.column,
                format!("parameter init must be a number, found {}", t.kind.describe()),
            ))
        }
        None => {
            return Err(err(
                DslErrorKind::Syntax,
                line,
                end_column,
                format!("parameter `{name}` is missing its initial value"),
            ))
        }
    };
    if let Some(t) = tokens.get(i + 1) {
        return Err(err(
            DslErrorKind::Syntax,
            line,
            t.column,
            format!("unexpected {} after parameter init", t.kind.describe()),
        ));
    }
    Ok((ParamDecl { name, init }, name_col))
}

type RawMlp = (String, Vec<Token>, Vec<usize>, Activation, usize, usize);

fn parse_mlp_line(tokens: &[Token], line: usize, end_column: usize) -> Result<RawMlp, DslError> {
    let name = expect_ident(tokens, 1, line, end_column, "a network name")?.to_string();
    expect_kind(tokens, 2, &TokenKind::LParen, line, end_column)?;
    let mut i = 3;
    let mut inputs = Vec::new();
    if tokens.get(i).map(|t| &t.kind) != Some(&TokenKind::RParen) {
        loop {
            expect_ident(tokens, i, line, end_column, "a network input")?;
            inputs.push(tokens[i].clone());
            i += 1;
            match tokens.get(i).map(|t| &t.kind) {
                Some(TokenKind::Comma) => i += 1,
                _ => break,
            }
        }
    }
    expect_kind(tokens, i, &TokenKind::RParen, line, end_column)?;
    i += 1;
    expect_keyword(tokens, i, &["hidden"], line, end_column)?;
    i += 1;
    expect_kind(tokens, i, &TokenKind::LBracket, line, end_column)?;
    i += 1;
    let mut hidden = Vec::new();
    if tokens.get(i).map(|t| &t.kind) != Some(&TokenKind::RBracket) {
        loop {
            hidden.push(expect_count(tokens, i, line, end_column)?);
            i += 1;
            match tokens.get(i).map(|t| &t.kind) {
                Some(TokenKind::Comma) => i += 1,
                _ => break,
            }
        }
    }
    expect_kind(tokens, i, &TokenKind::RBracket, line, end_column)?;
    i += 1;
    expect_keyword(tokens, i, &["act", "activation"], line, end_column)?;
    i += 1;
    let act_name = expect_ident(tokens, i, line, end_column, "an activation name")?;
    let activation = Activation::from_name(act_name).ok_or_else(|| {
        err(
            DslErrorKind::Unresolved,
            line,
            tokens[i].column,
            format!("unknown activation `{act_name}` (use relu, leaky_relu or tanh)"),
        )
    })?;
    i += 1;
    expect_keyword(tokens, i, &["outputs"], line, end_column)?;
    i += 1;
    let outputs = expect_count(tokens, i, line, end_column)?;
    i += 1;
    if let Some(t) = tokens.get(i) {
        return Err(err(
            DslErrorKind::Syntax,
            line,
            t.column,
            format!("unexpected {} after network declaration", t.kind.describe()),
        ));
    }
    if inputs.is_empty() {
        return Err(err(
            DslErrorKind::Arity,
            line,
            tokens[2].column,
            format!("network `{name}` needs at least one input"),
        ));
    }
    if outputs == 0 || hidden.contains(&0) {
        return Err(err(
            DslErrorKind::Arity,
            line,
            tokens[1].column,
            format!("network `{name}` has a layer of width zero"),
        ));
    }
    Ok((name, inputs, hidden, activation, outputs, line))
}

fn parse_component_header(
    tokens: Vec<Token>,
    line: usize,
    end_column: usize,
) -> Result<ComponentLine, DslError> {
    let target = expect_ident(&tokens, 2, line, end_column, "a state name")?.to_string();
    expect_kind(&tokens, 3, &TokenKind::RParen, line, end_column)?;
    expect_kind(&tokens, 4, &TokenKind::Slash, line, end_column)?;
    expect_keyword(&tokens, 5, &["dt"], line, end_column)?;
    expect_kind(&tokens, 6, &TokenKind::Equals, line, end_column)?;
    if tokens.len() == 7 {
        return Err(err(
            DslErrorKind::Syntax,
            line,
            end_column,
            format!("derivative of `{target}` has no expression"),
        ));
    }
    Ok(ComponentLine {
        target,
        tokens: tokens[7..].to_vec(),
        line,
        end_column,
    })
}

struct Scope<'a> {
    targets: &'a HashSet<String>,
    params: &'a HashSet<&'a str>,
    mlps: &'a HashMap<&'a str, usize>,
}

struct ExprParser<'a> {
    tokens: &'a [Token],
    pos: usize,
    line: usize,
    end_column: usize,
    scope: &'a Scope<'a>,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&'a TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    /// Operand after a binary operator; a missing one is an arity error.
    fn operand_after(&mut self, op: &Token, f: fn(&mut Self) -> Result<Expr, DslError>) -> Result<Expr, DslError> {
        if self.peek().is_none() {
            return Err(err(
                DslErrorKind::Arity,
                op.line,
                op.column,
                format!("operator {} is missing its right operand", op.kind.describe()),
            ));
        }
        f(self)
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        while let Some(tok) = self.peek() {
            let op = match tok.kind {
                TokenKind::Plus => BinaryOp::Add,
                TokenKind::Minus => BinaryOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.operand_after(tok, Self::term)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        while let Some(tok) = self.peek() {
            let op = match tok.kind {
                TokenKind::Star => BinaryOp::Mul,
                TokenKind::Slash => BinaryOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.operand_after(tok, Self::unary)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        match self.peek() {
            Some(tok) if tok.kind == TokenKind::Minus => {
                self.pos += 1;
                // a literal directly after `-` folds into a negative constant
                if let (Some(TokenKind::Number(v)), next) =
                    (self.peek_kind(), self.tokens.get(self.pos + 1).map(|t| &t.kind))
                {
                    if next != Some(&TokenKind::Caret) {
                        self.pos += 1;
                        return Ok(Expr::Const(-v));
                    }
                }
                let arg = self.operand_after(tok, Self::unary)?;
                Ok(Expr::unary(UnaryOp::Neg, arg))
            }
            Some(tok) if tok.kind == TokenKind::Plus => {
                self.pos += 1;
                self.operand_after(tok, Self::unary)
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, DslError> {
        let base = self.primary()?;
        if let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Caret {
                self.pos += 1;
                let exponent = self.operand_after(tok, Self::unary)?;
                return Ok(Expr::binary(BinaryOp::Pow, base, exponent));
            }
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let Some(tok) = self.next() else {
            return Err(err(
                DslErrorKind::Syntax,
                self.line,
                self.end_column,
                "expected an operand before end of line",
            ));
        };
        match &tok.kind {
            TokenKind::Number(v) => Ok(Expr::Const(*v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                match self.next() {
                    Some(t) if t.kind == TokenKind::RParen => Ok(inner),
                    Some(t) => Err(err(
                        DslErrorKind::Syntax,
                        t.line,
                        t.column,
                        format!("expected `)`, found {}", t.kind.describe()),
                    )),
                    None => Err(err(
                        DslErrorKind::Syntax,
                        tok.line,
                        tok.column,
                        "unclosed `(`",
                    )),
                }
            }
            TokenKind::Ident(name) => match self.peek_kind() {
                Some(TokenKind::LParen) => self.call(tok, name),
                Some(TokenKind::LBracket) => self.index(tok, name),
                _ => self.symbol(tok, name),
            },
            other => Err(err(
                DslErrorKind::Syntax,
                tok.line,
                tok.column,
                format!("expected an operand, found {}", other.describe()),
            )),
        }
    }

    fn call(&mut self, tok: &Token, name: &str) -> Result<Expr, DslError> {
        self.pos += 1; // `(`
        let mut args = Vec::new();
        if self.peek_kind() != Some(&TokenKind::RParen) {
            loop {
                args.push(self.expr()?);
                match self.peek_kind() {
                    Some(TokenKind::Comma) => self.pos += 1,
                    _ => break,
                }
            }
        }
        match self.next() {
            Some(t) if t.kind == TokenKind::RParen => {}
            Some(t) => {
                return Err(err(
                    DslErrorKind::Syntax,
                    t.line,
                    t.column,
                    format!("expected `)` or `,`, found {}", t.kind.describe()),
                ))
            }
            None => {
                return Err(err(
                    DslErrorKind::Syntax,
                    tok.line,
                    tok.column,
                    format!("unclosed call to `{name}`"),
                ))
            }
        }
        let (expected, build): (usize, Box<dyn Fn(Vec<Expr>) -> Expr>) = if name == "pow" {
            (
                2,
                Box::new(|mut a: Vec<Expr>| {
                    let e = a.pop().expect("two args");
                    let b = a.pop().expect("two args");
                    Expr::binary(BinaryOp::Pow, b, e)
                }),
            )
        } else if let Some(op) = UnaryOp::from_function_name(name) {
            (
                1,
                Box::new(move |mut a: Vec<Expr>| Expr::unary(op, a.pop().expect("one arg"))),
            )
        } else {
            return Err(err(
                DslErrorKind::Unresolved,
                tok.line,
                tok.column,
                format!("unknown function `{name}`"),
            ));
        };
        if args.len() != expected {
            return Err(err(
                DslErrorKind::Arity,
                tok.line,
                tok.column,
                format!("`{name}` takes {expected} argument(s), got {}", args.len()),
            ));
        }
        Ok(build(args))
    }

    fn index(&mut self, tok: &Token, name: &str) -> Result<Expr, DslError> {
        self.pos += 1; // `[`
        let Some(&outputs) = self.scope.mlps.get(name) else {
            return Err(err(
                DslErrorKind::Unresolved,
                tok.line,
                tok.column,
                format!("`{name}` is not a declared network"),
            ));
        };
        let index = expect_count(self.tokens, self.pos, self.line, self.end_column)?;
        self.pos += 1;
        expect_kind(self.tokens, self.pos, &TokenKind::RBracket, self.line, self.end_column)?;
        self.pos += 1;
        if index >= outputs {
            return Err(err(
                DslErrorKind::Arity,
                tok.line,
                tok.column,
                format!("network `{name}` has {outputs} output(s); index {index} is out of range"),
            ));
        }
        Ok(Expr::MlpOut {
            mlp: name.to_string(),
            index,
        })
    }

    fn symbol(&mut self, tok: &Token, name: &str) -> Result<Expr, DslError> {
        if name == TIME_VAR {
            Ok(Expr::Time)
        } else if self.scope.targets.contains(name) {
            Ok(Expr::State(name.to_string()))
        } else if self.scope.params.contains(name) {
            Ok(Expr::Param(name.to_string()))
        } else if self.scope.mlps.contains_key(name) {
            Err(err(
                DslErrorKind::Unresolved,
                tok.line,
                tok.column,
                format!("network `{name}` must be indexed, e.g. `{name}[0]`"),
            ))
        } else {
            Ok(Expr::Action(name.to_string()))
        }
    }
}
