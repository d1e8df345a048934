//! Seeded randomized trials: pullback compatibility of parallel forcing, and
//! stability of classically true positive formulas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{check_pullback_compatibility, FamilySpec};
use crate::bundle::{AxisBox, Section, SmoothMap, StructureBundle};
use crate::error::{Error, Result};
use crate::expr::{parse_in_scope, Scope};
use crate::forcing::{positive_stability_check, witness_values, NeighborhoodPolicy};
use crate::logic::{parse_formula, tarski_eval_with_tol, Formula, Interpretation, Signature, Term};
use crate::transport::Connection;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub index: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub passed: usize,
    pub failures: Vec<TrialFailure>,
}

impl TrialSummary {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }

    fn collect(results: Vec<(usize, Result<bool>, String)>) -> Self {
        let trials = results.len();
        let mut passed = 0;
        let mut failures = Vec::new();
        for (index, r, desc) in results {
            match r {
                Ok(true) => passed += 1,
                Ok(false) => failures.push(TrialFailure { index, detail: desc }),
                Err(e) => failures.push(TrialFailure {
                    index,
                    detail: format!("{desc}: error: {e}"),
                }),
            }
        }
        TrialSummary {
            trials,
            passed,
            failures,
        }
    }
}

fn coef(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    // three decimals keep the printed instance exact
    (rng.gen_range(-scale..=scale) * 1000.0).round() / 1000.0
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

struct PullbackInstance {
    guard: String,
    lift: [String; 2],
    map: Vec<String>,
    source_dim: usize,
    formula: String,
    free: Vec<String>,
    n: Vec<f64>,
    e: Vec<Vec<f64>>,
    family_seed: u64,
}

impl PullbackInstance {
    fn describe(&self) -> String {
        format!(
            "guard `{}`, L = [{}, {}], f = ({}), phi = `{}`, n = {:?}, e = {:?}",
            self.guard,
            self.lift[0],
            self.lift[1],
            self.map.join(", "),
            self.formula,
            self.n,
            self.e
        )
    }

    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let source_dim = rng.gen_range(1..=2);
        let n: Vec<f64> = (0..source_dim).map(|_| coef(rng, 0.5)).collect();
        let map: Vec<String> = (0..2)
            .map(|_| {
                let mut s = format!("{}", coef(rng, 0.5));
                for j in 1..=source_dim {
                    s.push_str(&format!(" + {} * x{j}", coef(rng, 0.5)));
                }
                s.push_str(&format!(" + {} * x1^2", coef(rng, 0.3)));
                s
            })
            .collect();
        let m = eval_map(&map, source_dim, &n);
        let (a, b, c) = (coef(rng, 1.0), coef(rng, 1.0), coef(rng, 1.0));
        let kind = rng.gen_range(0..4);
        let (guard, on_zero) = match kind {
            0 => (format!("y1 - {a} * x1 - {b} * x2 - {c}"), a * m[0] + b * m[1] + c),
            1 => (format!("(y1 - {a} * x1 - {c})^2"), a * m[0] + c),
            2 => (
                format!("1 - (y1 - {c})^2 - {} * x1^2", a.abs()),
                c + (1.0 - a.abs() * m[0] * m[0]).max(0.0).sqrt(),
            ),
            _ => (format!("(y1 - {c})^2 + (x2 - {b})^2"), c),
        };
        let lift_templates = ["0", "A", "A * y1", "A + B * x1", "A * y1 + B * x2", "A * sin(x1)"];
        let mut lift = [String::new(), String::new()];
        for l in &mut lift {
            let t = pick(rng, &lift_templates);
            *l = t
                .replace('A', &coef(rng, 1.0).to_string())
                .replace('B', &coef(rng, 1.0).to_string());
        }
        let one = [
            "R(x)",
            "!R(x)",
            "!!R(x)",
            "R(x) | !R(x)",
            "!R(x) -> R(x)",
            "exists v. R(v) & !(v = x)",
        ];
        let two = ["x = y", "!(x = y)", "R(x) & !R(y)", "R(x) -> R(y)", "!!(x = y)"];
        let e1 = if rng.gen_bool(0.5) { on_zero } else { coef(rng, 2.0) };
        let (formula, free, e) = if rng.gen_bool(0.6) {
            (pick(rng, &one).to_string(), vec!["x".to_string()], vec![vec![e1]])
        } else {
            let e2 = if rng.gen_bool(0.5) { e1 } else { coef(rng, 2.0) };
            (
                pick(rng, &two).to_string(),
                vec!["x".to_string(), "y".to_string()],
                vec![vec![e1], vec![e2]],
            )
        };
        PullbackInstance {
            guard,
            lift,
            map,
            source_dim,
            formula,
            free,
            n,
            e,
            family_seed: rng.gen(),
        }
    }

    fn run(&self, random_paths: usize, pol: &NeighborhoodPolicy) -> Result<bool> {
        let base = AxisBox::cube(2, -2.0, 2.0)?;
        let fiber = AxisBox::cube(1, -20.0, 20.0)?;
        let sig = Signature::unary_relation("R");
        let interp = Interpretation::parse(&sig, 2, 1, &[("R", self.guard.as_str())], &[], &[])?;
        let sb = StructureBundle::new(base.clone(), fiber.clone(), sig, interp)?;
        let scope = Scope::base_fiber(2, 1);
        let row = self
            .lift
            .iter()
            .map(|s| parse_in_scope(s, &scope))
            .collect::<Result<Vec<_>, _>>()?;
        let c = Connection::new(base, fiber, vec![row])?;
        let src_scope = Scope::base(self.source_dim);
        let comps = self
            .map
            .iter()
            .map(|s| parse_in_scope(s, &src_scope))
            .collect::<Result<Vec<_>, _>>()?;
        let f = SmoothMap::new(self.source_dim, comps)?;
        let source = AxisBox::cube(self.source_dim, -1.0, 1.0)?;
        let phi = parse_formula(&self.formula, sb.signature(), &self.free)?;
        let m = f.eval(&self.n)?;
        let spec = FamilySpec {
            random: random_paths,
            seed: self.family_seed,
            ..FamilySpec::default()
        };
        let report = check_pullback_compatibility(
            &sb,
            &c,
            &f,
            &source,
            &m,
            std::slice::from_ref(&self.n),
            &self.e,
            &phi,
            &spec,
            pol,
        )?;
        Ok(report.agree)
    }
}

fn eval_map(map: &[String], source_dim: usize, n: &[f64]) -> Vec<f64> {
    let scope = Scope::base(source_dim);
    map.iter()
        .map(|s| parse_in_scope(s, &scope).and_then(|e| e.eval(n)).unwrap_or(0.0))
        .collect()
}

/// Random bundles, connections, maps and formulas over a template pool; each
/// trial compares parallel forcing at `f(n)` with parallel forcing at `n` on
/// the pullback.
pub fn pullback_theorem_trials(
    count: usize,
    seed: u64,
    random_paths: usize,
    pol: &NeighborhoodPolicy,
) -> Result<TrialSummary> {
    pol.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances: Vec<PullbackInstance> = (0..count).map(|_| PullbackInstance::draw(&mut rng)).collect();
    let results = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| (i, inst.run(random_paths, pol), inst.describe()))
        .collect();
    Ok(TrialSummary::collect(results))
}

struct PositiveInstance {
    fiber_dim: usize,
    r_guard: String,
    s_guard: String,
    f_comps: Vec<String>,
    sections: Vec<Vec<String>>,
    formula: String,
    m: Vec<f64>,
}

const POSITIVE_MARGIN: f64 = 0.05;
const POSITIVE_ATTEMPTS: usize = 10_000;

fn poly(rng: &mut ChaCha8Rng, vars: &[String], scale: f64) -> String {
    let mut s = coef(rng, scale).to_string();
    for v in vars {
        if rng.gen_bool(0.7) {
            s.push_str(&format!(" + {} * {v}", coef(rng, scale)));
        }
    }
    if let Some(v) = vars.last() {
        if rng.gen_bool(0.4) {
            s.push_str(&format!(" + {} * {v}^2", coef(rng, scale * 0.3)));
        }
    }
    s
}

fn random_term(rng: &mut ChaCha8Rng, scope: usize) -> Term {
    let v = Term::Var(rng.gen_range(0..scope));
    if rng.gen_bool(0.25) {
        Term::App(0, vec![v])
    } else {
        v
    }
}

fn random_positive(rng: &mut ChaCha8Rng, depth: usize, quantifiers: usize, scope: usize) -> Formula {
    let atom = depth == 0 || rng.gen_bool(0.3);
    if atom {
        return if rng.gen_bool(0.6) {
            Formula::Rel(0, vec![random_term(rng, scope)])
        } else {
            Formula::Rel(1, vec![random_term(rng, scope), random_term(rng, scope)])
        };
    }
    let choice = rng.gen_range(0..if quantifiers > 0 { 3 } else { 2 });
    match choice {
        0 => Formula::and(
            random_positive(rng, depth - 1, quantifiers / 2, scope),
            random_positive(rng, depth - 1, quantifiers - quantifiers / 2, scope),
        ),
        1 => Formula::or(
            random_positive(rng, depth - 1, quantifiers / 2, scope),
            random_positive(rng, depth - 1, quantifiers - quantifiers / 2, scope),
        ),
        _ => Formula::Exists {
            var: scope,
            name: format!("v{}", scope + 1),
            body: Box::new(random_positive(rng, depth - 1, quantifiers - 1, scope + 1)),
        },
    }
}

fn positive_signature() -> Signature {
    Signature::new(vec![("R".into(), 1), ("S".into(), 2)], vec![("f".into(), 1)], vec![]).expect("fixed signature")
}

impl PositiveInstance {
    fn describe(&self) -> String {
        format!(
            "R: `{}`, S: `{}`, f = ({}), sections {:?}, phi = `{}`, m = {:?}",
            self.r_guard,
            self.s_guard,
            self.f_comps.join(", "),
            self.sections,
            self.formula,
            self.m
        )
    }

    fn build(&self) -> Result<(StructureBundle, Vec<Section>, Formula)> {
        let k = self.fiber_dim;
        let sig = positive_signature();
        let interp = Interpretation::parse(
            &sig,
            2,
            k,
            &[("R", self.r_guard.as_str()), ("S", self.s_guard.as_str())],
            &[("f", self.f_comps.iter().map(String::as_str).collect())],
            &[],
        )?;
        let base = AxisBox::cube(2, -1.0, 1.0)?;
        let sb = StructureBundle::new(base.clone(), AxisBox::cube(k, -2.0, 2.0)?, sig, interp)?;
        let scope = Scope::base(2);
        let sections = self
            .sections
            .iter()
            .map(|comps| {
                let exprs = comps
                    .iter()
                    .map(|s| parse_in_scope(s, &scope))
                    .collect::<Result<Vec<_>, _>>()?;
                Section::new(base.clone(), exprs)
            })
            .collect::<Result<Vec<_>>>()?;
        let free: Vec<String> = (1..=self.sections.len()).map(|i| format!("s{i}")).collect();
        let phi = parse_formula(&self.formula, sb.signature(), &free)?;
        Ok((sb, sections, phi))
    }

    /// The formula is classically true at `m`, and every atom of it, at every
    /// combination of argument values it can meet there, has a guard at least
    /// `POSITIVE_MARGIN` away from 0.
    fn admissible(&self, pol: &NeighborhoodPolicy) -> Result<bool> {
        let (sb, sections, phi) = self.build()?;
        let fs = sb.fiber_structure(&self.m)?;
        let pool = witness_values(&sb, &sections, &self.m, pol)?;
        let mut cands: Vec<Vec<Vec<f64>>> = sections
            .iter()
            .map(|s| Ok(vec![s.eval(&self.m)?]))
            .collect::<Result<Vec<_>>>()?;
        fn term_values(
            t: &Term,
            cands: &[Vec<Vec<f64>>],
            fs: &crate::logic::FiberStructure<'_>,
        ) -> Result<Vec<Vec<f64>>> {
            match t {
                Term::Var(i) => Ok(cands[*i].clone()),
                Term::Const(c) => Ok(vec![fs.constant(*c)?]),
                Term::App(g, args) => {
                    let inner = term_values(&args[0], cands, fs)?;
                    inner.iter().map(|v| Ok(fs.apply_function(*g, &[v])?)).collect()
                }
            }
        }
        fn walk(
            phi: &Formula,
            cands: &mut Vec<Vec<Vec<f64>>>,
            pool: &[Vec<f64>],
            fs: &crate::logic::FiberStructure<'_>,
        ) -> Result<bool> {
            match phi {
                Formula::Rel(r, args) => {
                    let vals = args
                        .iter()
                        .map(|a| term_values(a, cands, fs))
                        .collect::<Result<Vec<_>>>()?;
                    let combos = crate::bundle::product(
                        &vals
                            .iter()
                            .map(|v| (0..v.len()).map(|i| i as f64).collect())
                            .collect::<Vec<_>>(),
                    );
                    for combo in combos {
                        let refs: Vec<&[f64]> = combo
                            .iter()
                            .zip(&vals)
                            .map(|(i, v)| v[*i as usize].as_slice())
                            .collect();
                        if fs.guard_value(*r, &refs)?.abs() < POSITIVE_MARGIN {
                            return Ok(false);
                        }
                    }
                    Ok(true)
                }
                Formula::And(a, b) | Formula::Or(a, b) => Ok(walk(a, cands, pool, fs)? && walk(b, cands, pool, fs)?),
                Formula::Exists { body, .. } => {
                    cands.push(pool.to_vec());
                    let ok = walk(body, cands, pool, fs);
                    cands.pop();
                    ok
                }
                _ => Ok(false),
            }
        }
        if !walk(&phi, &mut cands, &pool, &fs)? {
            return Ok(false);
        }
        let assignment: Vec<Vec<f64>> = cands.into_iter().map(|mut c| c.remove(0)).collect();
        Ok(tarski_eval_with_tol(&phi, &fs, &assignment, &pool, pol.tol_eq)?)
    }

    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let k = rng.gen_range(1..=2);
        let xs = ["x1".to_string(), "x2".to_string()];
        let y1: Vec<String> = (1..=k).map(|i| format!("y1{i}")).collect();
        let y2: Vec<String> = (1..=k).map(|i| format!("y2{i}")).collect();
        let r_vars: Vec<String> = xs.iter().chain(&y1).cloned().collect();
        let s_vars: Vec<String> = xs.iter().chain(&y1).chain(&y2).cloned().collect();
        let r_guard = poly(rng, &r_vars, 0.5);
        let mut s_guard = poly(rng, &s_vars, 0.5);
        s_guard.push_str(&format!(" + {} * y11 * y21", coef(rng, 0.3)));
        let f_comps = (1..=k)
            .map(|i| {
                format!(
                    "{} * y1{i} + {} * x1 + {}",
                    coef(rng, 0.8),
                    coef(rng, 0.5),
                    coef(rng, 0.5)
                )
            })
            .collect();
        let count = rng.gen_range(1..=2);
        let sections = (0..count)
            .map(|_| {
                (0..k)
                    .map(|_| format!("{} + {} * x1 + {} * x2", coef(rng, 1.0), coef(rng, 0.5), coef(rng, 0.5)))
                    .collect()
            })
            .collect();
        let phi = random_positive(rng, 3, 2, count);
        let sig = positive_signature();
        let free: Vec<String> = (1..=count).map(|i| format!("s{i}")).collect();
        let formula = phi.display(&sig, &free).to_string();
        let m = vec![coef(rng, 0.8), coef(rng, 0.8)];
        PositiveInstance {
            fiber_dim: k,
            r_guard,
            s_guard,
            f_comps,
            sections,
            formula,
            m,
        }
    }

    fn run(&self, pol: &NeighborhoodPolicy) -> Result<bool> {
        let (sb, sections, phi) = self.build()?;
        positive_stability_check(&sb, &phi, &sections, &self.m, pol)
    }
}

/// Random structures and positive formulas without `=`, kept only when the
/// formula is classically true at the evaluation point and every atom is a
/// fixed margin away from its boundary there; each trial checks forcing.
pub fn positive_lemma_trials(count: usize, seed: u64, pol: &NeighborhoodPolicy) -> Result<TrialSummary> {
    pol.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(count);
    let mut attempts = 0;
    while instances.len() < count {
        attempts += 1;
        if attempts > POSITIVE_ATTEMPTS {
            return Err(Error::Invalid("could not draw enough well-separated instances".into()));
        }
        let inst = PositiveInstance::draw(&mut rng);
        if inst.admissible(pol)? {
            instances.push(inst);
        }
    }
    let results = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| (i, inst.run(pol), inst.describe()))
        .collect();
    Ok(TrialSummary::collect(results))
}
