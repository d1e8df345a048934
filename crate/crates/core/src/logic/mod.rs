//! First-order syntax: signatures, terms, formulas, and classical truth in a
//! single fiber.

mod parse;
mod structure;

use std::fmt;

use thiserror::Error;

use crate::expr::ExprError;

pub use parse::{parse_formula, parse_term};
pub(crate) use structure::points_equal;
pub use structure::{eval_term, tarski_eval, tarski_eval_with_tol, FiberStructure, Interpretation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulaError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown symbol `{name}` at byte {offset}")]
    UnknownSymbol { name: String, offset: usize },
    #[error("`{name}` expects {expected} argument(s), found {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("symbol `{0}` is declared more than once")]
    DuplicateSymbol(String),
    #[error("symbol `{0}` must have positive arity")]
    ZeroArity(String),
    #[error("interpretation: {0}")]
    Interpretation(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Signature {
    relations: Vec<(String, usize)>,
    functions: Vec<(String, usize)>,
    constants: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    Relation(usize),
    Function(usize),
    Constant(usize),
}

impl Signature {
    pub fn new(
        relations: Vec<(String, usize)>,
        functions: Vec<(String, usize)>,
        constants: Vec<String>,
    ) -> Result<Self, FormulaError> {
        let mut seen = std::collections::HashSet::new();
        let names = relations
            .iter()
            .map(|(n, a)| (n, Some(*a)))
            .chain(functions.iter().map(|(n, a)| (n, Some(*a))))
            .chain(constants.iter().map(|n| (n, None)));
        for (name, arity) in names {
            if !seen.insert(name.clone()) {
                return Err(FormulaError::DuplicateSymbol(name.clone()));
            }
            if arity == Some(0) {
                return Err(FormulaError::ZeroArity(name.clone()));
            }
        }
        Ok(Signature {
            relations,
            functions,
            constants,
        })
    }

    /// Signature with only equality.
    pub fn empty() -> Self {
        Signature::default()
    }

    /// Convenience for the common one-relation signature.
    pub fn unary_relation(name: &str) -> Self {
        Signature::new(vec![(name.to_string(), 1)], vec![], vec![]).unwrap()
    }

    pub fn lookup(&self, name: &str) -> Option<Symbol> {
        if let Some(i) = self.relations.iter().position(|(n, _)| n == name) {
            return Some(Symbol::Relation(i));
        }
        if let Some(i) = self.functions.iter().position(|(n, _)| n == name) {
            return Some(Symbol::Function(i));
        }
        self.constants.iter().position(|n| n == name).map(Symbol::Constant)
    }

    pub fn relations(&self) -> &[(String, usize)] {
        &self.relations
    }

    pub fn functions(&self) -> &[(String, usize)] {
        &self.functions
    }

    pub fn constants(&self) -> &[String] {
        &self.constants
    }
}

/// Variables are positional: the formula's free variables occupy slots
/// `0..r` and each quantifier binds the next slot.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(usize),
    Const(usize),
    App(usize, Vec<Term>),
}

impl Term {
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Term::Var(i) => Some(*i),
            Term::Const(_) => None,
            Term::App(_, args) => args.iter().filter_map(Term::max_var).max(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) | Term::Const(_) => 0,
            Term::App(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Eq(Term, Term),
    Rel(usize, Vec<Term>),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Exists {
        var: usize,
        name: String,
        body: Box<Formula>,
    },
    Forall {
        var: usize,
        name: String,
        body: Box<Formula>,
    },
}

impl Formula {
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    /// Built only from relation atoms, `&`, `|` and `exists`.
    pub fn is_positive_eq_free(&self) -> bool {
        match self {
            Formula::Rel(..) => true,
            Formula::And(a, b) | Formula::Or(a, b) => a.is_positive_eq_free() && b.is_positive_eq_free(),
            Formula::Exists { body, .. } => body.is_positive_eq_free(),
            _ => false,
        }
    }

    /// Free of negation and implication.
    pub fn is_neg_imp_free(&self) -> bool {
        match self {
            Formula::Eq(..) | Formula::Rel(..) => true,
            Formula::Not(_) | Formula::Implies(..) => false,
            Formula::And(a, b) | Formula::Or(a, b) => a.is_neg_imp_free() && b.is_neg_imp_free(),
            Formula::Exists { body, .. } | Formula::Forall { body, .. } => body.is_neg_imp_free(),
        }
    }

    /// Nesting depth of the clauses whose forcing quantifies over a
    /// neighbourhood of sub-evaluations (negation, implication, universal;
    /// plus existential when `exists_neighborhood` is set).
    pub fn neighborhood_depth(&self, exists_neighborhood: bool) -> usize {
        match self {
            Formula::Eq(..) | Formula::Rel(..) => 0,
            Formula::Not(a) => 1 + a.neighborhood_depth(exists_neighborhood),
            Formula::Implies(a, b) => {
                1 + a
                    .neighborhood_depth(exists_neighborhood)
                    .max(b.neighborhood_depth(exists_neighborhood))
            }
            Formula::And(a, b) | Formula::Or(a, b) => a
                .neighborhood_depth(exists_neighborhood)
                .max(b.neighborhood_depth(exists_neighborhood)),
            Formula::Forall { body, .. } => 1 + body.neighborhood_depth(exists_neighborhood),
            Formula::Exists { body, .. } => {
                usize::from(exists_neighborhood) + body.neighborhood_depth(exists_neighborhood)
            }
        }
    }

    /// One more than the largest variable slot used outside its binder, i.e.
    /// how many free variables an assignment must cover.
    pub fn free_slots(&self) -> usize {
        fn term(t: &Term, bound: &[usize]) -> usize {
            match t {
                Term::Var(i) if !bound.contains(i) => i + 1,
                Term::Var(_) | Term::Const(_) => 0,
                Term::App(_, args) => args.iter().map(|a| term(a, bound)).max().unwrap_or(0),
            }
        }
        fn walk(f: &Formula, bound: &mut Vec<usize>) -> usize {
            match f {
                Formula::Eq(a, b) => term(a, bound).max(term(b, bound)),
                Formula::Rel(_, args) => args.iter().map(|a| term(a, bound)).max().unwrap_or(0),
                Formula::Not(a) => walk(a, bound),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => walk(a, bound).max(walk(b, bound)),
                Formula::Exists { var, body, .. } | Formula::Forall { var, body, .. } => {
                    bound.push(*var);
                    let r = walk(body, bound);
                    bound.pop();
                    r
                }
            }
        }
        walk(self, &mut Vec::new())
    }

    /// Which of the `free` free-variable slots the formula references.
    pub fn uses_free(&self, free: usize) -> Vec<bool> {
        let mut used = vec![false; free];
        self.visit_terms(&mut |t| mark(t, &mut used));
        used
    }

    fn visit_terms(&self, f: &mut impl FnMut(&Term)) {
        match self {
            Formula::Eq(a, b) => {
                f(a);
                f(b);
            }
            Formula::Rel(_, args) => args.iter().for_each(&mut *f),
            Formula::Not(a) => a.visit_terms(f),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.visit_terms(f);
                b.visit_terms(f);
            }
            Formula::Exists { body, .. } | Formula::Forall { body, .. } => body.visit_terms(f),
        }
    }

    pub fn display<'a>(&'a self, sig: &'a Signature, free: &'a [String]) -> FormulaDisplay<'a> {
        FormulaDisplay {
            formula: self,
            sig,
            free,
        }
    }
}

fn mark(t: &Term, used: &mut [bool]) {
    match t {
        Term::Var(i) => {
            if let Some(u) = used.get_mut(*i) {
                *u = true;
            }
        }
        Term::Const(_) => {}
        Term::App(_, args) => args.iter().for_each(|a| mark(a, used)),
    }
}

pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    sig: &'a Signature,
    free: &'a [String],
}

impl FormulaDisplay<'_> {
    fn term(&self, t: &Term, bound: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match t {
            Term::Var(i) => {
                let name = if *i < self.free.len() {
                    self.free[*i].clone()
                } else {
                    bound
                        .get(*i - self.free.len())
                        .cloned()
                        .unwrap_or_else(|| format!("_{i}"))
                };
                f.write_str(&name)
            }
            Term::Const(c) => f.write_str(&self.sig.constants()[*c]),
            Term::App(g, args) => {
                write!(f, "{}(", self.sig.functions()[*g].0)?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    self.term(a, bound, f)?;
                }
                f.write_str(")")
            }
        }
    }

    fn go(&self, phi: &Formula, bound: &mut Vec<String>, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match phi {
            Formula::Eq(a, b) => {
                self.term(a, bound, f)?;
                f.write_str(" = ")?;
                self.term(b, bound, f)
            }
            Formula::Rel(r, args) => {
                write!(f, "{}(", self.sig.relations()[*r].0)?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    self.term(a, bound, f)?;
                }
                f.write_str(")")
            }
            Formula::Not(a) => {
                f.write_str("!")?;
                self.paren(a, bound, f)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                let op = match phi {
                    Formula::And(..) => " & ",
                    Formula::Or(..) => " | ",
                    _ => " -> ",
                };
                self.paren(a, bound, f)?;
                f.write_str(op)?;
                self.paren(b, bound, f)
            }
            Formula::Exists { name, body, .. } | Formula::Forall { name, body, .. } => {
                let q = if matches!(phi, Formula::Exists { .. }) {
                    "exists"
                } else {
                    "forall"
                };
                write!(f, "{q} {name}. ")?;
                bound.push(name.clone());
                let r = self.go(body, bound, f);
                bound.pop();
                r
            }
        }
    }

    fn paren(&self, phi: &Formula, bound: &mut Vec<String>, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if matches!(phi, Formula::Eq(..) | Formula::Rel(..) | Formula::Not(_)) {
            self.go(phi, bound, f)
        } else {
            f.write_str("(")?;
            self.go(phi, bound, f)?;
            f.write_str(")")
        }
    }
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.go(self.formula, &mut Vec::new(), f)
    }
}
