//! Scalar expression language used for every smooth datum of a model:
//! sections, relation guards, function tables, lift fields and base maps.
//!
//! Variables are resolved to positional indices at parse time against a
//! [`Scope`]; evaluation takes a plain slice of values in scope order.

mod parse;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use parse::{parse_expr, parse_in_scope};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable `{name}` at byte {offset}")]
    UndeclaredVariable { name: String, offset: usize },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("domain error ({what}) in `{subtree}`")]
    Domain { what: &'static str, subtree: String },
    #[error("not differentiable at this point: `{subtree}`")]
    NonDifferentiable { subtree: String },
    #[error("variable `{0}` is not bound")]
    Unbound(String),
    #[error("variable `{0}` is bound twice")]
    DuplicateBinding(String),
}

/// Ordered list of variable names, with optional aliases that resolve to
/// the same slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scope {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Scope {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut scope = Scope::default();
        for name in names {
            scope.push(name);
        }
        scope
    }

    pub fn push(&mut self, name: impl Into<String>) -> usize {
        let name = name.into();
        let idx = self.names.len();
        self.lookup.entry(name.clone()).or_insert(idx);
        self.names.push(name);
        idx
    }

    pub fn with_alias(mut self, alias: impl Into<String>, idx: usize) -> Self {
        assert!(idx < self.names.len(), "alias target out of range");
        self.lookup.entry(alias.into()).or_insert(idx);
        self
    }

    /// `x1..xn` followed by `y1..yk`.
    pub fn base_fiber(base_dim: usize, fiber_dim: usize) -> Self {
        let xs = (1..=base_dim).map(|i| format!("x{i}"));
        let ys = (1..=fiber_dim).map(|i| format!("y{i}"));
        Scope::new(xs.chain(ys))
    }

    /// `x1..xn` only. A one-dimensional scope also accepts `t`.
    pub fn base(base_dim: usize) -> Self {
        let scope = Scope::new((1..=base_dim).map(|i| format!("x{i}")));
        if base_dim == 1 {
            scope.with_alias("t", 0)
        } else {
            scope
        }
    }

    /// Scope of an interpretation entry for a symbol of the given arity:
    /// base variables `x1..xn`, then argument `j` component `i` as `y{j}{i}`.
    /// For unary symbols `y{i}` is accepted as an alias of `y1{i}`.
    pub fn symbol(base_dim: usize, fiber_dim: usize, arity: usize) -> Self {
        let mut scope = Scope::new((1..=base_dim).map(|i| format!("x{i}")));
        for j in 1..=arity {
            for i in 1..=fiber_dim {
                scope.push(format!("y{j}{i}"));
            }
        }
        if arity == 1 {
            for i in 1..=fiber_dim {
                scope = scope.with_alias(format!("y{i}"), base_dim + i - 1);
            }
        }
        scope
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarBinding {
    pub name: String,
    pub value: f64,
}

impl VarBinding {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        VarBinding {
            name: name.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

/// Value together with its derivative along one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dual {
    v: f64,
    d: f64,
}

fn domain(what: &'static str, e: &Expr) -> ExprError {
    ExprError::Domain {
        what,
        subtree: e.to_string(),
    }
}

fn finite(x: f64, e: &Expr) -> Result<f64, ExprError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(domain("non-finite result", e))
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    /// Evaluate with `vals[i]` bound to variable `i`.
    pub fn eval(&self, vals: &[f64]) -> Result<f64, ExprError> {
        let x = match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => match vals.get(*i) {
                Some(v) => *v,
                None => return Err(ExprError::Unbound(format!("v{}", i + 1))),
            },
            Expr::Neg(a) => -a.eval(vals)?,
            Expr::Add(a, b) => a.eval(vals)? + b.eval(vals)?,
            Expr::Sub(a, b) => a.eval(vals)? - b.eval(vals)?,
            Expr::Mul(a, b) => a.eval(vals)? * b.eval(vals)?,
            Expr::Div(a, b) => {
                let num = a.eval(vals)?;
                let den = b.eval(vals)?;
                if den == 0.0 {
                    return Err(domain("division by zero", self));
                }
                num / den
            }
            Expr::Pow(a, n) => {
                let base = a.eval(vals)?;
                if base == 0.0 && *n < 0 {
                    return Err(domain("negative power of zero", self));
                }
                base.powi(*n)
            }
            Expr::Call(f, a) => {
                let x = a.eval(vals)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Abs => x.abs(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(domain("square root of a negative number", self));
                        }
                        x.sqrt()
                    }
                }
            }
        };
        finite(x, self)
    }

    fn eval_dual(&self, vals: &[f64], wrt: usize) -> Result<Dual, ExprError> {
        let out = match self {
            Expr::Num(v) => Dual { v: *v, d: 0.0 },
            Expr::Var(i) => Dual {
                v: *vals.get(*i).ok_or_else(|| ExprError::Unbound(format!("v{}", i + 1)))?,
                d: if *i == wrt { 1.0 } else { 0.0 },
            },
            Expr::Neg(a) => {
                let a = a.eval_dual(vals, wrt)?;
                Dual { v: -a.v, d: -a.d }
            }
            Expr::Add(a, b) => {
                let (a, b) = (a.eval_dual(vals, wrt)?, b.eval_dual(vals, wrt)?);
                Dual {
                    v: a.v + b.v,
                    d: a.d + b.d,
                }
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.eval_dual(vals, wrt)?, b.eval_dual(vals, wrt)?);
                Dual {
                    v: a.v - b.v,
                    d: a.d - b.d,
                }
            }
            Expr::Mul(a, b) => {
                let (a, b) = (a.eval_dual(vals, wrt)?, b.eval_dual(vals, wrt)?);
                Dual {
                    v: a.v * b.v,
                    d: a.d * b.v + a.v * b.d,
                }
            }
            Expr::Div(a, b) => {
                let (a, b) = (a.eval_dual(vals, wrt)?, b.eval_dual(vals, wrt)?);
                if b.v == 0.0 {
                    return Err(domain("division by zero", self));
                }
                Dual {
                    v: a.v / b.v,
                    d: (a.d * b.v - a.v * b.d) / (b.v * b.v),
                }
            }
            Expr::Pow(a, n) => {
                let a = a.eval_dual(vals, wrt)?;
                if a.v == 0.0 && *n < 1 {
                    if *n == 0 {
                        return Ok(Dual { v: 1.0, d: 0.0 });
                    }
                    return Err(domain("negative power of zero", self));
                }
                let n = *n;
                Dual {
                    v: a.v.powi(n),
                    d: f64::from(n) * a.v.powi(n - 1) * a.d,
                }
            }
            Expr::Call(f, inner) => {
                let a = inner.eval_dual(vals, wrt)?;
                match f {
                    Func::Sin => Dual {
                        v: a.v.sin(),
                        d: a.v.cos() * a.d,
                    },
                    Func::Cos => Dual {
                        v: a.v.cos(),
                        d: -a.v.sin() * a.d,
                    },
                    Func::Exp => {
                        let e = a.v.exp();
                        Dual { v: e, d: e * a.d }
                    }
                    Func::Sqrt => {
                        if a.v < 0.0 {
                            return Err(domain("square root of a negative number", self));
                        }
                        if a.v == 0.0 {
                            return Err(ExprError::NonDifferentiable {
                                subtree: self.to_string(),
                            });
                        }
                        let s = a.v.sqrt();
                        Dual {
                            v: s,
                            d: a.d / (2.0 * s),
                        }
                    }
                    Func::Abs => {
                        if a.v == 0.0 {
                            return Err(ExprError::NonDifferentiable {
                                subtree: self.to_string(),
                            });
                        }
                        Dual {
                            v: a.v.abs(),
                            d: a.d * a.v.signum(),
                        }
                    }
                }
            }
        };
        finite(out.v, self)?;
        finite(out.d, self)?;
        Ok(out)
    }

    /// Exact first derivative with respect to variable `wrt` (forward mode).
    pub fn diff(&self, vals: &[f64], wrt: usize) -> Result<f64, ExprError> {
        Ok(self.eval_dual(vals, wrt)?.d)
    }

    /// Value and derivative in one pass.
    pub fn eval_with_derivative(&self, vals: &[f64], wrt: usize) -> Result<(f64, f64), ExprError> {
        let d = self.eval_dual(vals, wrt)?;
        Ok((d.v, d.d))
    }

    pub fn gradient(&self, vals: &[f64]) -> Result<Vec<f64>, ExprError> {
        (0..vals.len()).map(|i| self.diff(vals, i)).collect()
    }

    /// Replace every variable `i` by `f(i)`.
    pub fn substitute(&self, f: &impl Fn(usize) -> Expr) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(i) => f(*i),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(f))),
            Expr::Add(a, b) => Expr::Add(Box::new(a.substitute(f)), Box::new(b.substitute(f))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.substitute(f)), Box::new(b.substitute(f))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.substitute(f)), Box::new(b.substitute(f))),
            Expr::Div(a, b) => Expr::Div(Box::new(a.substitute(f)), Box::new(b.substitute(f))),
            Expr::Pow(a, n) => Expr::Pow(Box::new(a.substitute(f)), *n),
            Expr::Call(g, a) => Expr::Call(*g, Box::new(a.substitute(f))),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn display<'a>(&'a self, scope: &'a Scope) -> ExprDisplay<'a> {
        ExprDisplay {
            expr: self,
            scope: Some(scope),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

/// Evaluate against named bindings. Every variable of `scope` must be bound
/// exactly once.
pub fn eval_expr(e: &Expr, scope: &Scope, bindings: &[VarBinding]) -> Result<f64, ExprError> {
    let vals = bind(scope, bindings)?;
    e.eval(&vals)
}

/// Derivative of `e` with respect to the variable named `wrt`.
pub fn diff_expr(e: &Expr, scope: &Scope, bindings: &[VarBinding], wrt: &str) -> Result<f64, ExprError> {
    let vals = bind(scope, bindings)?;
    let idx = scope.index(wrt).ok_or_else(|| ExprError::Unbound(wrt.to_string()))?;
    e.diff(&vals, idx)
}

fn bind(scope: &Scope, bindings: &[VarBinding]) -> Result<Vec<f64>, ExprError> {
    let mut vals = vec![None; scope.len()];
    for b in bindings {
        let idx = scope.index(&b.name).ok_or_else(|| ExprError::Unbound(b.name.clone()))?;
        if vals[idx].replace(b.value).is_some() {
            return Err(ExprError::DuplicateBinding(b.name.clone()));
        }
    }
    vals.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| ExprError::Unbound(scope.name(i).to_string())))
        .collect()
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    scope: Option<&'a Scope>,
}

impl ExprDisplay<'_> {
    fn child(&self, e: &Expr, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        let inner = ExprDisplay {
            expr: e,
            scope: self.scope,
        };
        if parens {
            write!(f, "({inner})")
        } else {
            write!(f, "{inner}")
        }
    }
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.expr;
        let p = e.precedence();
        match e {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(i) => match self.scope {
                Some(s) if *i < s.len() => f.write_str(s.name(*i)),
                _ => write!(f, "v{}", i + 1),
            },
            Expr::Neg(a) => {
                f.write_str("-")?;
                self.child(a, f, a.precedence() < p)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let op = match e {
                    Expr::Add(..) => " + ",
                    Expr::Sub(..) => " - ",
                    Expr::Mul(..) => " * ",
                    _ => " / ",
                };
                self.child(a, f, a.precedence() < p)?;
                f.write_str(op)?;
                // operators associate to the left; keep a right-nested tree as written
                self.child(b, f, b.precedence() <= p)
            }
            Expr::Pow(a, n) => {
                self.child(a, f, a.precedence() < 5)?;
                write!(f, "^{n}")
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                self.child(a, f, false)?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        ExprDisplay {
            expr: self,
            scope: None,
        }
        .fmt(f)
    }
}
