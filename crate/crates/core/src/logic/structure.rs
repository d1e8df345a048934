use crate::expr::{parse_in_scope, Expr, ExprError, Scope};

use super::{Formula, FormulaError, Signature, Term};

/// Interpretation tables of a signature over a trivial bundle `B x R^k`.
///
/// A relation of arity `r` is a guard expression over `x1..xn` and
/// `y{j}{i}` (argument `j`, component `i`); the relation holds exactly where
/// the guard is strictly positive, so its extension is open. Function
/// symbols carry `k` component expressions in the same variables, constants
/// carry `k` expressions in the base variables only.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpretation {
    base_dim: usize,
    fiber_dim: usize,
    relations: Vec<Expr>,
    functions: Vec<Vec<Expr>>,
    constants: Vec<Vec<Expr>>,
}

impl Interpretation {
    pub fn from_exprs(
        sig: &Signature,
        base_dim: usize,
        fiber_dim: usize,
        relations: Vec<Expr>,
        functions: Vec<Vec<Expr>>,
        constants: Vec<Vec<Expr>>,
    ) -> Result<Self, FormulaError> {
        let bad = |msg: String| Err(FormulaError::Interpretation(msg));
        if relations.len() != sig.relations().len() {
            return bad(format!(
                "{} relation guard(s) for {} relation symbol(s)",
                relations.len(),
                sig.relations().len()
            ));
        }
        if functions.len() != sig.functions().len() || constants.len() != sig.constants().len() {
            return bad("function/constant tables do not match the signature".into());
        }
        for ((name, arity), guard) in sig.relations().iter().zip(&relations) {
            let width = base_dim + arity * fiber_dim;
            if guard.max_var().is_some_and(|v| v >= width) {
                return bad(format!("guard of `{name}` references an unknown variable"));
            }
        }
        for ((name, arity), comps) in sig.functions().iter().zip(&functions) {
            let width = base_dim + arity * fiber_dim;
            if comps.len() != fiber_dim || comps.iter().any(|e| e.max_var().is_some_and(|v| v >= width)) {
                return bad(format!("`{name}` needs {fiber_dim} component(s) in its own variables"));
            }
        }
        for (name, comps) in sig.constants().iter().zip(&constants) {
            if comps.len() != fiber_dim || comps.iter().any(|e| e.max_var().is_some_and(|v| v >= base_dim)) {
                return bad(format!("`{name}` needs {fiber_dim} component(s) in the base variables"));
            }
        }
        Ok(Interpretation {
            base_dim,
            fiber_dim,
            relations,
            functions,
            constants,
        })
    }

    /// Parse every table entry from source text. Missing relations, functions
    /// or constants are an error.
    pub fn parse(
        sig: &Signature,
        base_dim: usize,
        fiber_dim: usize,
        relations: &[(&str, &str)],
        functions: &[(&str, Vec<&str>)],
        constants: &[(&str, Vec<&str>)],
    ) -> Result<Self, FormulaError> {
        let rels = sig
            .relations()
            .iter()
            .map(|(name, arity)| {
                let scope = Scope::symbol(base_dim, fiber_dim, *arity);
                Ok(parse_in_scope(lookup(relations, name)?, &scope)?)
            })
            .collect::<Result<Vec<_>, FormulaError>>()?;
        let funcs = sig
            .functions()
            .iter()
            .map(|(name, arity)| {
                let scope = Scope::symbol(base_dim, fiber_dim, *arity);
                lookup(functions, name)?
                    .into_iter()
                    .map(|src| Ok(parse_in_scope(src, &scope)?))
                    .collect()
            })
            .collect::<Result<Vec<_>, FormulaError>>()?;
        let consts = sig
            .constants()
            .iter()
            .map(|name| {
                let scope = Scope::base(base_dim);
                lookup(constants, name)?
                    .into_iter()
                    .map(|src| Ok(parse_in_scope(src, &scope)?))
                    .collect()
            })
            .collect::<Result<Vec<_>, FormulaError>>()?;
        Interpretation::from_exprs(sig, base_dim, fiber_dim, rels, funcs, consts)
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn relation_guards(&self) -> &[Expr] {
        &self.relations
    }

    pub fn function_tables(&self) -> &[Vec<Expr>] {
        &self.functions
    }

    pub fn constant_tables(&self) -> &[Vec<Expr>] {
        &self.constants
    }

    /// Rewrite every table entry with `base` replacing the base variables.
    /// `base` has expressions over a new base of dimension `new_base_dim`;
    /// fiber variables are shifted accordingly.
    pub fn precompose(&self, base: &[Expr], new_base_dim: usize) -> Interpretation {
        let old = self.base_dim;
        let shift = |i: usize| {
            if i < old {
                base[i].clone()
            } else {
                Expr::Var(i - old + new_base_dim)
            }
        };
        Interpretation {
            base_dim: new_base_dim,
            fiber_dim: self.fiber_dim,
            relations: self.relations.iter().map(|g| g.substitute(&shift)).collect(),
            functions: self
                .functions
                .iter()
                .map(|c| c.iter().map(|e| e.substitute(&shift)).collect())
                .collect(),
            constants: self
                .constants
                .iter()
                .map(|c| c.iter().map(|e| e.substitute(&shift)).collect())
                .collect(),
        }
    }

    /// The structure on the fiber over `m`.
    pub fn at(&self, m: &[f64]) -> FiberStructure<'_> {
        FiberStructure {
            interp: self,
            base_point: m.to_vec(),
        }
    }
}

/// An interpretation pinned at one base point.
#[derive(Debug, Clone)]
pub struct FiberStructure<'a> {
    interp: &'a Interpretation,
    base_point: Vec<f64>,
}

impl FiberStructure<'_> {
    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn fiber_dim(&self) -> usize {
        self.interp.fiber_dim
    }

    fn vars(&self, args: &[&[f64]]) -> Vec<f64> {
        let mut v = self.base_point.clone();
        for a in args {
            v.extend_from_slice(a);
        }
        v
    }

    pub fn guard_value(&self, rel: usize, args: &[&[f64]]) -> Result<f64, ExprError> {
        self.interp.relations[rel].eval(&self.vars(args))
    }

    pub fn relation_holds(&self, rel: usize, args: &[&[f64]]) -> Result<bool, ExprError> {
        Ok(self.guard_value(rel, args)? > 0.0)
    }

    pub fn apply_function(&self, func: usize, args: &[&[f64]]) -> Result<Vec<f64>, ExprError> {
        let vars = self.vars(args);
        self.interp.functions[func].iter().map(|e| e.eval(&vars)).collect()
    }

    pub fn constant(&self, c: usize) -> Result<Vec<f64>, ExprError> {
        self.interp.constants[c]
            .iter()
            .map(|e| e.eval(&self.base_point))
            .collect()
    }
}

fn lookup<T: Clone>(table: &[(&str, T)], name: &str) -> Result<T, FormulaError> {
    table
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| s.clone())
        .ok_or_else(|| FormulaError::Interpretation(format!("no interpretation for `{name}`")))
}

/// Interpret `t` in `fs` with `assignment[i]` bound to variable slot `i`.
pub fn eval_term(t: &Term, fs: &FiberStructure<'_>, assignment: &[Vec<f64>]) -> Result<Vec<f64>, ExprError> {
    match t {
        Term::Var(i) => assignment
            .get(*i)
            .cloned()
            .ok_or_else(|| ExprError::Unbound(format!("slot {i}"))),
        Term::Const(c) => fs.constant(*c),
        Term::App(g, args) => {
            let vals = args
                .iter()
                .map(|a| eval_term(a, fs, assignment))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&[f64]> = vals.iter().map(Vec::as_slice).collect();
            fs.apply_function(*g, &refs)
        }
    }
}

pub(crate) fn points_equal(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Classical truth with exact equality. Quantifiers range over
/// `witness_pool`.
pub fn tarski_eval(
    phi: &Formula,
    fs: &FiberStructure<'_>,
    assignment: &[Vec<f64>],
    witness_pool: &[Vec<f64>],
) -> Result<bool, ExprError> {
    tarski_eval_with_tol(phi, fs, assignment, witness_pool, 0.0)
}

pub fn tarski_eval_with_tol(
    phi: &Formula,
    fs: &FiberStructure<'_>,
    assignment: &[Vec<f64>],
    witness_pool: &[Vec<f64>],
    eq_tol: f64,
) -> Result<bool, ExprError> {
    let mut env = assignment.to_vec();
    tarski(phi, fs, &mut env, witness_pool, eq_tol)
}

fn tarski(
    phi: &Formula,
    fs: &FiberStructure<'_>,
    env: &mut Vec<Vec<f64>>,
    pool: &[Vec<f64>],
    tol: f64,
) -> Result<bool, ExprError> {
    Ok(match phi {
        Formula::Eq(a, b) => points_equal(&eval_term(a, fs, env)?, &eval_term(b, fs, env)?, tol),
        Formula::Rel(r, args) => {
            let vals = args
                .iter()
                .map(|a| eval_term(a, fs, env))
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&[f64]> = vals.iter().map(Vec::as_slice).collect();
            fs.relation_holds(*r, &refs)?
        }
        Formula::Not(a) => !tarski(a, fs, env, pool, tol)?,
        Formula::And(a, b) => tarski(a, fs, env, pool, tol)? && tarski(b, fs, env, pool, tol)?,
        Formula::Or(a, b) => tarski(a, fs, env, pool, tol)? || tarski(b, fs, env, pool, tol)?,
        Formula::Implies(a, b) => !tarski(a, fs, env, pool, tol)? || tarski(b, fs, env, pool, tol)?,
        Formula::Exists { var, body, .. } | Formula::Forall { var, body, .. } => {
            let exists = matches!(phi, Formula::Exists { .. });
            env.truncate(*var);
            let mut result = !exists;
            for w in pool {
                env.push(w.clone());
                let v = tarski(body, fs, env, pool, tol);
                env.pop();
                if v? == exists {
                    result = exists;
                    break;
                }
            }
            result
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;

    fn plane_interp() -> (Signature, Interpretation) {
        let sig = Signature::unary_relation("R");
        let interp = Interpretation::parse(&sig, 2, 1, &[("R", "y1^2")], &[], &[]).unwrap();
        (sig, interp)
    }

    #[test]
    fn relation_guard_at_zero_and_one() {
        let (sig, interp) = plane_interp();
        let fs = interp.at(&[0.0, 0.0]);
        let phi = parse_formula("R(a)", &sig, &["a".to_string()]).unwrap();
        assert!(!tarski_eval(&phi, &fs, &[vec![0.0]], &[]).unwrap());
        assert!(tarski_eval(&phi, &fs, &[vec![1.0]], &[]).unwrap());
    }

    #[test]
    fn identity_is_true() {
        let (sig, interp) = plane_interp();
        let phi = parse_formula("x1 = x1", &sig, &["x1".to_string()]).unwrap();
        for a in [-3.0, 0.0, 17.5] {
            assert!(tarski_eval(&phi, &interp.at(&[0.3, 0.1]), &[vec![a]], &[]).unwrap());
        }
    }

    #[test]
    fn term_clauses() {
        let sig = Signature::new(vec![], vec![("f".into(), 1)], vec!["c".into()]).unwrap();
        let interp = Interpretation::parse(&sig, 1, 1, &[], &[("f", vec!["2 * y11"])], &[("c", vec!["x1"])]).unwrap();
        let fs = interp.at(&[3.0]);
        assert_eq!(eval_term(&Term::Var(0), &fs, &[vec![7.0]]).unwrap(), vec![7.0]);
        assert_eq!(eval_term(&Term::Const(0), &fs, &[]).unwrap(), vec![3.0]);
        let fx = Term::App(0, vec![Term::Var(0)]);
        assert_eq!(eval_term(&fx, &fs, &[vec![5.0]]).unwrap(), vec![10.0]);
    }

    #[test]
    fn quantifiers_range_over_the_pool() {
        let (sig, interp) = plane_interp();
        let fs = interp.at(&[0.0, 0.0]);
        let ex = parse_formula("exists v. R(v)", &sig, &[]).unwrap();
        let all = parse_formula("forall v. R(v)", &sig, &[]).unwrap();
        assert!(!tarski_eval(&ex, &fs, &[], &[vec![0.0]]).unwrap());
        assert!(tarski_eval(&ex, &fs, &[], &[vec![0.0], vec![2.0]]).unwrap());
        assert!(tarski_eval(&all, &fs, &[], &[vec![1.0], vec![2.0]]).unwrap());
        assert!(!tarski_eval(&all, &fs, &[], &[vec![1.0], vec![0.0]]).unwrap());
    }

    #[test]
    fn precompose_moves_base_variables() {
        let (_, interp) = plane_interp();
        let sig = Signature::unary_relation("R");
        let g = Interpretation::parse(&sig, 2, 1, &[("R", "y1 - x1 * x2")], &[], &[]).unwrap();
        let t = Expr::Var(0);
        let pulled = g.precompose(&[t.clone(), Expr::Neg(Box::new(t))], 1);
        // at t = 2: y1 - (2)(-2) = y1 + 4
        assert_eq!(pulled.at(&[2.0]).guard_value(0, &[&[1.0]]).unwrap(), 5.0);
        assert_eq!(interp.base_dim(), 2);
    }
}
