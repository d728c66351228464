//! Sparse regression over a polynomial library with sequential thresholding.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::dsl::{ComponentDef, Expr, ModelSpec, ParamDecl, SystemSchema};
use crate::engine::{Dataset, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SindyConfig {
    pub degree: usize,
    /// Ridge strength inside each thresholded solve.
    pub alpha: f64,
    pub threshold: f64,
    pub max_iter: usize,
}

impl Default for SindyConfig {
    fn default() -> Self {
        SindyConfig {
            degree: 2,
            alpha: 0.5,
            threshold: 0.02,
            max_iter: 20,
        }
    }
}

impl SindyConfig {
    /// Tighter threshold for the epidemic system, whose rates act on fractions.
    pub fn covid() -> Self {
        SindyConfig {
            threshold: 1e-5,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<(), BaselineError> {
        if self.degree == 0 {
            return Err(BaselineError::Config("degree must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(BaselineError::Config("alpha and threshold must be finite and non-negative".into()));
        }
        if self.max_iter == 0 {
            return Err(BaselineError::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Forward differences `(x[k+1] - x[k]) / dt`, one row per step but the last.
pub fn finite_difference_derivatives(traj: &Trajectory, dt: f64) -> Result<Vec<Vec<f64>>, BaselineError> {
    if traj.len() < 2 {
        return Err(BaselineError::TooShort(traj.len()));
    }
    Ok(traj
        .states
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (b - a) / dt).collect())
        .collect())
}

/// Exponent of each library variable; all zero is the constant term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(vars)
            .filter(|(e, _)| **e > 0)
            .map(|(e, v)| v.powi(*e as i32))
            .product()
    }

    /// Human-readable form, e.g. `1`, `x`, `x*y`, `x^2`.
    pub fn label(&self, names: &[String]) -> String {
        if self.degree() == 0 {
            return "1".into();
        }
        self.0
            .iter()
            .zip(names)
            .filter(|(e, _)| **e > 0)
            .map(|(e, n)| if *e == 1 { n.clone() } else { format!("{n}^{e}") })
            .collect::<Vec<_>>()
            .join("*")
    }
}

/// All monomials up to `degree`, ordered by degree then lexicographically
/// by variable index.
pub fn polynomial_library(n_vars: usize, degree: usize) -> Vec<Monomial> {
    let mut out = vec![Monomial(vec![0; n_vars])];
    let mut prev: Vec<(usize, Vec<u32>)> = vec![(0, vec![0; n_vars])];
    for _ in 0..degree {
        let mut next = Vec::new();
        for (start, exps) in &prev {
            for v in *start..n_vars {
                let mut e = exps.clone();
                e[v] += 1;
                next.push((v, e));
            }
        }
        out.extend(next.iter().map(|(_, e)| Monomial(e.clone())));
        prev = next;
    }
    out
}

#[derive(Debug, Clone)]
pub struct SindyFit {
    pub spec: ModelSpec,
    pub library: Vec<Monomial>,
    pub labels: Vec<String>,
    /// `coefficients[j][k]`: weight of library term `k` in state `j`'s derivative.
    pub coefficients: Vec<Vec<f64>>,
    /// Of the ridge-regularized normal matrix over the full library.
    pub condition_number: f64,
    pub iterations: usize,
}

impl SindyFit {
    /// Indices of the non-zero terms for state `j`.
    pub fn support(&self, j: usize) -> Vec<usize> {
        support_of(&self.coefficients[j])
    }
}

fn support_of(c: &[f64]) -> Vec<usize> {
    c.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, _)| k)
        .collect()
}

/// Zeroes every entry below `threshold` in magnitude.
pub fn apply_threshold(coefficients: &[f64], threshold: f64) -> Vec<f64> {
    coefficients
        .iter()
        .map(|c| if c.abs() < threshold { 0.0 } else { *c })
        .collect()
}

/// Solves `(G_SS + alpha I) w = b_S` over the support `s`.
fn solve_on(g: &DMatrix<f64>, b: &DVector<f64>, s: &[usize], alpha: f64) -> Result<Vec<f64>, BaselineError> {
    let n = s.len();
    let mut full = vec![0.0; b.len()];
    if n == 0 {
        return Ok(full);
    }
    let a = DMatrix::from_fn(n, n, |i, j| g[(s[i], s[j])] + if i == j { alpha } else { 0.0 });
    let rhs = DVector::from_fn(n, |i, _| b[s[i]]);
    let w = match a.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => a
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| BaselineError::Singular(e.to_string()))?,
    };
    for (i, k) in s.iter().enumerate() {
        full[*k] = w[i];
    }
    Ok(full)
}

/// Sequential thresholded ridge regression for one target, followed by an
/// unregularized refit on the surviving support.
fn stlsq(
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    cfg: &SindyConfig,
) -> Result<(Vec<f64>, usize), BaselineError> {
    let mut support: Vec<usize> = (0..b.len()).collect();
    let mut iterations = 0;
    loop {
        let mut w = Vec::new();
        for _ in 0..cfg.max_iter {
            iterations += 1;
            w = apply_threshold(&solve_on(g, b, &support, cfg.alpha)?, cfg.threshold);
            let next = support_of(&w);
            if next == support {
                break;
            }
            support = next;
        }
        let refit = apply_threshold(&solve_on(g, b, &support, 0.0)?, cfg.threshold);
        let next = support_of(&refit);
        if next == support {
            return Ok((refit, iterations));
        }
        if iterations >= cfg.max_iter * b.len().max(1) {
            log::warn!("thresholding did not settle after {iterations} solves");
            return Ok((w, iterations));
        }
        support = next;
    }
}

fn condition_number(g: &DMatrix<f64>, alpha: f64) -> f64 {
    let n = g.nrows();
    let a = g + DMatrix::<f64>::identity(n, n) * alpha;
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Variable names of the library, states then actions.
pub fn library_variables(schema: &SystemSchema) -> Vec<String> {
    schema.state_names().chain(schema.action_names()).map(str::to_string).collect()
}

pub fn sindy_fit(data: &Dataset, cfg: &SindyConfig) -> Result<SindyFit, BaselineError> {
    cfg.check()?;
    let schema = &data.schema;
    let set = data.transitions();
    if set.is_empty() {
        return Err(BaselineError::Empty);
    }
    let names = library_variables(schema);
    let library = polynomial_library(names.len(), cfg.degree);
    let p = library.len();
    let dx = schema.state_dim();

    let mut g = DMatrix::<f64>::zeros(p, p);
    let mut bs = vec![DVector::<f64>::zeros(p); dx];
    let mut vars = vec![0.0; names.len()];
    let mut theta = vec![0.0; p];
    for i in 0..set.len {
        vars[..dx].copy_from_slice(set.x(i));
        vars[dx..].copy_from_slice(set.u(i));
        for (k, m) in library.iter().enumerate() {
            theta[k] = m.eval(&vars);
        }
        for a in 0..p {
            for b in a..p {
                g[(a, b)] += theta[a] * theta[b];
            }
        }
        let (x, y) = (set.x(i), set.y(i));
        for j in 0..dx {
            let d = (y[j] - x[j]) / set.dt;
            for k in 0..p {
                bs[j][k] += theta[k] * d;
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    if !g.iter().all(|v| v.is_finite()) {
        return Err(BaselineError::Singular("library features overflow".into()));
    }
    let condition_number = condition_number(&g, cfg.alpha);
    let mut coefficients = Vec::with_capacity(dx);
    let mut iterations = 0;
    for b in &bs {
        let (c, it) = stlsq(&g, b, cfg)?;
        iterations += it;
        coefficients.push(c);
    }
    let labels = library.iter().map(|m| m.label(&names)).collect();
    let spec = polynomial_spec(schema, &library, &coefficients);
    Ok(SindyFit {
        spec,
        library,
        labels,
        coefficients,
        condition_number,
        iterations,
    })
}

fn monomial_expr(m: &Monomial, schema: &SystemSchema) -> Option<Expr> {
    let dx = schema.state_dim();
    let names = library_variables(schema);
    let mut out: Option<Expr> = None;
    for (i, &e) in m.0.iter().enumerate() {
        if e == 0 {
            continue;
        }
        let v = if i < dx {
            Expr::state(&names[i])
        } else {
            Expr::action(&names[i])
        };
        let f = if e == 1 {
            v
        } else {
            Expr::binary(crate::dsl::BinaryOp::Pow, v, Expr::Const(e as f64))
        };
        out = Some(match out {
            Some(acc) => acc * f,
            None => f,
        });
    }
    out
}

/// Spec with one parameter per surviving coefficient, named `c<j>_<k>`.
pub fn polynomial_spec(schema: &SystemSchema, library: &[Monomial], coefficients: &[Vec<f64>]) -> ModelSpec {
    let mut params = Vec::new();
    let mut components = Vec::new();
    let names = library_variables(schema);
    let mut described = Vec::new();
    for (j, target) in schema.state_names().enumerate() {
        let mut expr: Option<Expr> = None;
        let mut terms = Vec::new();
        for (k, &c) in coefficients[j].iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let name = format!("c{j}_{k}");
            params.push(ParamDecl {
                name: name.clone(),
                init: c,
            });
            let term = match monomial_expr(&library[k], schema) {
                Some(m) => Expr::param(&name) * m,
                None => Expr::param(&name),
            };
            terms.push(library[k].label(&names));
            expr = Some(match expr {
                Some(acc) => acc + term,
                None => term,
            });
        }
        described.push(format!(
            "{target}: {}",
            if terms.is_empty() { "0".to_string() } else { terms.join(" + ") }
        ));
        components.push(ComponentDef {
            target: target.to_string(),
            expr: expr.unwrap_or(Expr::Const(0.0)),
            residual: None,
        });
    }
    ModelSpec {
        components,
        params,
        mlps: Vec::new(),
        metadata: format!("Sparse polynomial regression. Terms per state: {}", described.join("; ")),
    }
}
