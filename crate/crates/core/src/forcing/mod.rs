//! Pointwise forcing over sampled neighborhoods.
//!
//! "There is an open neighborhood U of m" is read as "some radius of the
//! halving schedule", and "for all u in U" as "for every deterministic sample
//! of that ball". Sample sets are nested: the samples at radius `eps_k` are
//! the center together with the offsets of every level `j >= k` scaled by
//! `eps_j`. A check that passes at some radius therefore passes at every
//! smaller one, so recursive clauses are decided at the smallest radius and
//! the top level reports the largest passing radius as its witness.

mod samples;

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::bundle::{AxisBox, Section, StructureBundle};
use crate::error::{Error, Result};
use crate::expr::ExprError;
use crate::logic::{eval_term, tarski_eval_with_tol, FiberStructure, Formula, Term};

pub(crate) use samples::BallOffsets;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborhoodPolicy {
    /// Largest radius of the schedule.
    pub eps0: f64,
    /// Radii are `eps0 * 2^-k` for `k = 0..=halvings`.
    pub halvings: usize,
    /// Offsets per radius level.
    pub samples: usize,
    /// Budget for nested `!`, `->` and `forall` clauses.
    pub max_depth: usize,
    pub tol_eq: f64,
    /// RK4 step and checkpoint spacing.
    pub step: f64,
    /// Grid spacing for extension sets.
    pub grid: f64,
    /// Constant witness sections per fiber axis.
    pub witness_points: usize,
    /// Box for constant witness sections; the bundle's fiber box when unset.
    #[serde(skip)]
    pub witness_box: Option<AxisBox>,
    /// Give `exists` a neighborhood like `forall`.
    pub exists_neighborhood: bool,
}

impl Default for NeighborhoodPolicy {
    fn default() -> Self {
        NeighborhoodPolicy {
            eps0: 0.5,
            halvings: 8,
            samples: 64,
            max_depth: 3,
            tol_eq: 1e-9,
            step: 1e-3,
            grid: 0.01,
            witness_points: 5,
            witness_box: None,
            exists_neighborhood: false,
        }
    }
}

impl NeighborhoodPolicy {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Policy(m.to_string()));
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return bad("eps0 must be positive");
        }
        if self.halvings < 1 {
            return bad("at least one halving is required");
        }
        if self.samples < 8 {
            return bad("at least 8 samples per ball are required");
        }
        if self.max_depth < 1 {
            return bad("depth budget must be at least 1");
        }
        if !(self.tol_eq >= 0.0) {
            return bad("equality tolerance must be non-negative");
        }
        if !(self.step > 0.0) || !(self.grid > 0.0) {
            return bad("step and grid must be positive");
        }
        if self.witness_points < 1 {
            return bad("at least one witness point per axis is required");
        }
        Ok(())
    }

    pub fn radius(&self, level: usize) -> f64 {
        self.eps0 * 0.5f64.powi(level as i32)
    }

    pub fn smallest_radius(&self) -> f64 {
        self.radius(self.halvings)
    }

    /// Farthest a recursive evaluation can wander from its starting point.
    pub fn reach(&self) -> f64 {
        (self.max_depth + 2) as f64 * self.smallest_radius()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Forced,
    NotForced,
}

impl Decision {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Decision::Forced
        } else {
            Decision::NotForced
        }
    }

    pub fn is_forced(self) -> bool {
        self == Decision::Forced
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForcingVerdict {
    pub decision: Decision,
    /// Largest scheduled radius whose neighborhood check passes.
    pub witness_eps: Option<f64>,
    /// Sample points visited.
    pub samples: usize,
    /// Deepest neighborhood nesting reached.
    pub depth: usize,
}

/// A member of the witness family for quantifiers.
#[derive(Debug, Clone, PartialEq)]
enum Witness {
    Declared(usize),
    Constant(usize),
    Apply(usize, Vec<usize>),
    Point(Vec<f64>),
}

pub(crate) struct Forcer<'a> {
    sb: &'a StructureBundle,
    sections: &'a [Section],
    pol: &'a NeighborhoodPolicy,
    offsets: BallOffsets,
    family: Vec<Witness>,
    visited: AtomicUsize,
    deepest: AtomicUsize,
}

fn family_for(sb: &StructureBundle, declared: usize, pol: &NeighborhoodPolicy) -> Vec<Witness> {
    let mut family: Vec<Witness> = (0..declared).map(Witness::Declared).collect();
    family.extend((0..sb.signature().constants().len()).map(Witness::Constant));
    for (g, (_, arity)) in sb.signature().functions().iter().enumerate() {
        if declared == 0 {
            break;
        }
        let mut idx = vec![0usize; *arity];
        loop {
            family.push(Witness::Apply(g, idx.clone()));
            let mut pos = 0;
            while pos < idx.len() {
                idx[pos] += 1;
                if idx[pos] < declared {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == idx.len() {
                break;
            }
        }
    }
    let wbox = pol.witness_box.as_ref().unwrap_or(sb.fiber_box());
    if pol.witness_points == 1 {
        family.push(Witness::Point(wbox.center()));
    } else {
        family.extend(wbox.lattice(pol.witness_points).into_iter().map(Witness::Point));
    }
    family
}

impl<'a> Forcer<'a> {
    pub(crate) fn new(sb: &'a StructureBundle, sections: &'a [Section], pol: &'a NeighborhoodPolicy) -> Result<Self> {
        pol.validate()?;
        for s in sections {
            if s.fiber_dim() != sb.fiber_dim() || s.domain().dim() != sb.base_dim() {
                return Err(Error::Dimension("section does not belong to the bundle".into()));
            }
        }
        Ok(Forcer {
            sb,
            sections,
            pol,
            offsets: BallOffsets::new(sb.base_dim(), pol.samples, pol.halvings + 1),
            family: family_for(sb, sections.len(), pol),
            visited: AtomicUsize::new(0),
            deepest: AtomicUsize::new(0),
        })
    }

    pub(crate) fn check_formula(&self, phi: &Formula) -> Result<()> {
        let need = phi.neighborhood_depth(self.pol.exists_neighborhood);
        if need > self.pol.max_depth {
            return Err(Error::DepthExhausted {
                limit: self.pol.max_depth,
            });
        }
        let needed = phi.free_slots();
        if needed > self.sections.len() {
            return Err(Error::Invalid(format!(
                "formula has {} free variable(s) but {} section(s) were given",
                needed,
                self.sections.len()
            )));
        }
        Ok(())
    }

    fn admissible(&self, p: &[f64]) -> bool {
        self.sb.base().contains(p) && self.sections.iter().all(|s| s.is_defined_at(p))
    }

    /// Samples of the ball of radius `eps_level` around `u`.
    pub(crate) fn ball(&self, u: &[f64], level: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(1 + self.pol.samples * (self.offsets.len() - level));
        if self.admissible(u) {
            out.push(u.to_vec());
        }
        for j in level..self.offsets.len() {
            let eps = self.pol.radius(j);
            for d in self.offsets.level(j) {
                let p: Vec<f64> = u.iter().zip(d).map(|(a, b)| a + eps * b).collect();
                if self.admissible(&p) {
                    out.push(p);
                }
            }
        }
        self.visited.fetch_add(out.len(), Ordering::Relaxed);
        out
    }

    /// Points around `u` at radius `rho` using the coarsest offset level.
    fn small_ball(&self, u: &[f64], rho: f64) -> Vec<Vec<f64>> {
        let mut out = vec![u.to_vec()];
        for d in self.offsets.level(0) {
            let p: Vec<f64> = u.iter().zip(d).map(|(a, b)| a + rho * b).collect();
            if self.admissible(&p) {
                out.push(p);
            }
        }
        out
    }

    fn fs(&self, p: &[f64]) -> FiberStructure<'a> {
        self.sb.interpretation().at(p)
    }

    fn witness_value(&self, w: &Witness, p: &[f64], fs: &FiberStructure<'_>) -> Result<Vec<f64>, ExprError> {
        match w {
            Witness::Declared(i) => self.sections[*i].eval_unchecked(p),
            Witness::Constant(c) => fs.constant(*c),
            Witness::Apply(g, args) => {
                let vals = args
                    .iter()
                    .map(|i| self.sections[*i].eval_unchecked(p))
                    .collect::<Result<Vec<_>, _>>()?;
                let refs: Vec<&[f64]> = vals.iter().map(Vec::as_slice).collect();
                fs.apply_function(*g, &refs)
            }
            Witness::Point(v) => Ok(v.clone()),
        }
    }

    fn assignment(&self, env: &[usize], p: &[f64], fs: &FiberStructure<'_>) -> Result<Vec<Vec<f64>>, ExprError> {
        env.iter()
            .map(|&w| self.witness_value(&self.family[w], p, fs))
            .collect()
    }

    fn atom_true(&self, phi: &Formula, p: &[f64], env: &[usize]) -> Result<bool> {
        let fs = self.fs(p);
        let a = self.assignment(env, p, &fs)?;
        let eval = |t: &Term| eval_term(t, &fs, &a);
        Ok(match phi {
            Formula::Eq(l, r) => crate::logic::points_equal(&eval(l)?, &eval(r)?, self.pol.tol_eq),
            Formula::Rel(rel, args) => {
                let vals = args.iter().map(eval).collect::<Result<Vec<_>, _>>()?;
                let refs: Vec<&[f64]> = vals.iter().map(Vec::as_slice).collect();
                fs.relation_holds(*rel, &refs)?
            }
            _ => unreachable!("not an atom"),
        })
    }

    fn enter(&self, depth: usize) -> Result<usize> {
        let next = depth + 1;
        if next > self.pol.max_depth {
            return Err(Error::DepthExhausted {
                limit: self.pol.max_depth,
            });
        }
        self.deepest.fetch_max(next, Ordering::Relaxed);
        Ok(next)
    }

    fn with(&self, env: &[usize], w: usize) -> Vec<usize> {
        let mut e = env.to_vec();
        e.push(w);
        e
    }

    fn witness_defined(&self, w: usize, p: &[f64]) -> bool {
        match &self.family[w] {
            Witness::Declared(i) => self.sections[*i].is_defined_at(p),
            Witness::Apply(_, args) => args.iter().all(|i| self.sections[*i].is_defined_at(p)),
            _ => true,
        }
    }

    /// The neighborhood check of `phi` at `u` over the ball of the given level.
    fn holds_at_level(&self, phi: &Formula, u: &[f64], env: &[usize], level: usize, depth: usize) -> Result<bool> {
        match phi {
            Formula::Eq(..) | Formula::Rel(..) => {
                for v in self.ball(u, level) {
                    if !self.atom_true(phi, &v, env)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Not(a) => {
                let d = self.enter(depth)?;
                for v in self.ball(u, level) {
                    if self.decide(a, &v, env, d)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Implies(a, b) => {
                let d = self.enter(depth)?;
                for v in self.ball(u, level) {
                    if self.decide(a, &v, env, d)? && !self.decide(b, &v, env, d)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Forall { body, .. } => {
                let d = self.enter(depth)?;
                for v in self.ball(u, level) {
                    for w in 0..self.family.len() {
                        if self.witness_defined(w, &v) && !self.decide(body, &v, &self.with(env, w), d)? {
                            return Ok(false);
                        }
                    }
                }
                Ok(true)
            }
            Formula::Exists { body, .. } => {
                let d = self.enter(depth)?;
                let ball = self.ball(u, level);
                'family: for w in 0..self.family.len() {
                    let env_w = self.with(env, w);
                    for v in &ball {
                        if !self.witness_defined(w, v) || !self.decide(body, v, &env_w, d)? {
                            continue 'family;
                        }
                    }
                    return Ok(true);
                }
                Ok(false)
            }
            Formula::And(..) | Formula::Or(..) => unreachable!("no neighborhood clause"),
        }
    }

    /// Forced at `u`, with recursive neighborhoods at the smallest radius.
    pub(crate) fn decide(&self, phi: &Formula, u: &[f64], env: &[usize], depth: usize) -> Result<bool> {
        match phi {
            Formula::And(a, b) => Ok(self.decide(a, u, env, depth)? && self.decide(b, u, env, depth)?),
            Formula::Or(a, b) => Ok(self.decide(a, u, env, depth)? || self.decide(b, u, env, depth)?),
            Formula::Exists { body, .. } if !self.pol.exists_neighborhood => {
                for w in 0..self.family.len() {
                    if self.witness_defined(w, u) && self.decide(body, u, &self.with(env, w), depth)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            _ => self.holds_at_level(phi, u, env, self.pol.halvings, depth),
        }
    }

    /// Decision together with the level of the largest passing radius.
    fn verdict(&self, phi: &Formula, u: &[f64], env: &[usize], depth: usize) -> Result<Option<usize>> {
        match phi {
            Formula::And(a, b) => {
                let (x, y) = (self.verdict(a, u, env, depth)?, self.verdict(b, u, env, depth)?);
                Ok(match (x, y) {
                    (Some(i), Some(j)) => Some(i.max(j)),
                    _ => None,
                })
            }
            Formula::Or(a, b) => {
                let (x, y) = (self.verdict(a, u, env, depth)?, self.verdict(b, u, env, depth)?);
                Ok([x, y].into_iter().flatten().min())
            }
            Formula::Exists { body, .. } if !self.pol.exists_neighborhood => {
                let mut best = None;
                for w in 0..self.family.len() {
                    if self.witness_defined(w, u) {
                        if let Some(l) = self.verdict(body, u, &self.with(env, w), depth)? {
                            best = Some(best.map_or(l, |b: usize| b.min(l)));
                        }
                    }
                }
                Ok(best)
            }
            _ => {
                if !self.holds_at_level(phi, u, env, self.pol.halvings, depth)? {
                    return Ok(None);
                }
                for level in 0..self.pol.halvings {
                    if self.holds_at_level(phi, u, env, level, depth)? {
                        return Ok(Some(level));
                    }
                }
                Ok(Some(self.pol.halvings))
            }
        }
    }

    pub(crate) fn free_env(&self) -> Vec<usize> {
        (0..self.sections.len()).collect()
    }

    fn visited(&self) -> usize {
        self.visited.load(Ordering::Relaxed)
    }

    fn deepest(&self) -> usize {
        self.deepest.load(Ordering::Relaxed)
    }
}

fn check_point(sb: &StructureBundle, sections: &[Section], m: &[f64]) -> Result<()> {
    if !sb.base().contains(m) {
        return Err(Error::OutOfBox {
            what: "base point".into(),
            point: m.to_vec(),
        });
    }
    if let Some(i) = sections.iter().position(|s| !s.is_defined_at(m)) {
        return Err(Error::OutOfBox {
            what: format!("point outside the domain of section {}", i + 1),
            point: m.to_vec(),
        });
    }
    Ok(())
}

/// Does `sb` force `phi(sections)` at `m`?
pub fn force(
    sb: &StructureBundle,
    m: &[f64],
    phi: &Formula,
    sections: &[Section],
    pol: &NeighborhoodPolicy,
) -> Result<ForcingVerdict> {
    let f = Forcer::new(sb, sections, pol)?;
    f.check_formula(phi)?;
    check_point(sb, sections, m)?;
    let level = f.verdict(phi, m, &f.free_env(), 0)?;
    Ok(ForcingVerdict {
        decision: Decision::from_bool(level.is_some()),
        witness_eps: level.map(|l| pol.radius(l)),
        samples: f.visited(),
        depth: f.deepest(),
    })
}

/// Forcing decision only, without searching for the largest witness radius.
pub fn is_forced(
    sb: &StructureBundle,
    m: &[f64],
    phi: &Formula,
    sections: &[Section],
    pol: &NeighborhoodPolicy,
) -> Result<bool> {
    let f = Forcer::new(sb, sections, pol)?;
    f.check_formula(phi)?;
    check_point(sb, sections, m)?;
    f.decide(phi, m, &f.free_env(), 0)
}

/// Grid points of a box with a membership flag each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSet {
    pub points: Vec<Vec<f64>>,
    pub member: Vec<bool>,
}

impl GridSet {
    pub fn members(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.points
            .iter()
            .zip(&self.member)
            .filter(|(_, m)| **m)
            .map(|(p, _)| p)
    }

    pub fn member_count(&self) -> usize {
        self.member.iter().filter(|m| **m).count()
    }
}

/// Grid points `k * grid` of `region` at which the formula is forced.
pub fn spatial_extension(
    sb: &StructureBundle,
    phi: &Formula,
    sections: &[Section],
    region: &AxisBox,
    grid: f64,
    pol: &NeighborhoodPolicy,
) -> Result<GridSet> {
    if !(grid > 0.0) {
        return Err(Error::Policy("grid spacing must be positive".into()));
    }
    if !sb.base().contains_box(region) {
        return Err(Error::OutOfBox {
            what: "extension region".into(),
            point: region.hi().to_vec(),
        });
    }
    let f = Forcer::new(sb, sections, pol)?;
    f.check_formula(phi)?;
    let points = region.grid(grid);
    let env = f.free_env();
    let member = points
        .par_iter()
        .map(|p| {
            if sections.iter().all(|s| s.is_defined_at(p)) {
                f.decide(phi, p, &env, 0)
            } else {
                Ok(false)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridSet { points, member })
}

/// Sampled density: at some scheduled radius every sample `u` of the ball has
/// a point forcing the formula within `eps / sqrt(N)` of it.
pub fn density_check(
    sb: &StructureBundle,
    phi: &Formula,
    sections: &[Section],
    m: &[f64],
    pol: &NeighborhoodPolicy,
) -> Result<bool> {
    let f = Forcer::new(sb, sections, pol)?;
    f.check_formula(phi)?;
    check_point(sb, sections, m)?;
    let env = f.free_env();
    'level: for level in 0..=pol.halvings {
        let rho = pol.radius(level) / (pol.samples as f64).sqrt();
        for u in f.ball(m, level) {
            let mut hit = false;
            for v in f.small_ball(&u, rho) {
                if f.decide(phi, &v, &env, 0)? {
                    hit = true;
                    break;
                }
            }
            if !hit {
                continue 'level;
            }
        }
        return Ok(true);
    }
    Ok(false)
}

/// For a formula built from non-equality atoms with `&`, `|` and `exists`:
/// classical truth at `m` (quantifiers over the witness family's values)
/// implies forcing at `m`.
pub fn positive_stability_check(
    sb: &StructureBundle,
    phi: &Formula,
    sections: &[Section],
    m: &[f64],
    pol: &NeighborhoodPolicy,
) -> Result<bool> {
    if !phi.is_positive_eq_free() {
        return Err(Error::NotPositive);
    }
    let f = Forcer::new(sb, sections, pol)?;
    f.check_formula(phi)?;
    check_point(sb, sections, m)?;
    let fs = sb.fiber_structure(m)?;
    let assignment = f.assignment(&f.free_env(), m, &fs)?;
    let pool = witness_pool(&f, m, &fs)?;
    if !tarski_eval_with_tol(phi, &fs, &assignment, &pool, pol.tol_eq)? {
        return Ok(true);
    }
    f.decide(phi, m, &f.free_env(), 0)
}

fn witness_pool(f: &Forcer<'_>, m: &[f64], fs: &FiberStructure<'_>) -> Result<Vec<Vec<f64>>> {
    (0..f.family.len())
        .filter(|&w| f.witness_defined(w, m))
        .map(|w| Ok(f.witness_value(&f.family[w], m, fs)?))
        .collect()
}

/// Values of the witness family at `m`: the pool classical quantifiers range
/// over when comparing with forcing.
pub fn witness_values(
    sb: &StructureBundle,
    sections: &[Section],
    m: &[f64],
    pol: &NeighborhoodPolicy,
) -> Result<Vec<Vec<f64>>> {
    let f = Forcer::new(sb, sections, pol)?;
    let fs = sb.fiber_structure(m)?;
    witness_pool(&f, m, &fs)
}

/// Sample points of the ball of radius `eps0 * 2^-level` around `m` that
/// the evaluator would visit.
pub fn ball_samples(
    sb: &StructureBundle,
    sections: &[Section],
    m: &[f64],
    level: usize,
    pol: &NeighborhoodPolicy,
) -> Result<Vec<Vec<f64>>> {
    let f = Forcer::new(sb, sections, pol)?;
    if level > pol.halvings {
        return Err(Error::Policy(format!("level {level} beyond the schedule")));
    }
    Ok(f.ball(m, level))
}

#[cfg(test)]
mod tests;
