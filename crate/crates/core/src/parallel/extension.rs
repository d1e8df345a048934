//! Horizontal and vertical extension sets by breadth-first search over
//! lattices anchored at the seed.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{check_tuple, parallel_forced, FamilySpec, PathFamily};
use crate::bundle::{pack, unpack, AxisBox, Section, SmoothMap, StructureBundle};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forcing::{Forcer, NeighborhoodPolicy};
use crate::logic::{Formula, Term};
use crate::transport::{lift_curve, Connection};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtensionSet {
    pub axis_names: Vec<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub member: Vec<bool>,
    /// Member from which each member was reached.
    pub parent: Vec<Option<usize>>,
    pub seed: usize,
    /// Transported tuple carried to each member of a horizontal extension.
    #[serde(skip)]
    pub tuples: Vec<Option<Vec<Vec<f64>>>>,
}

impl ExtensionSet {
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

    pub fn seed_point(&self) -> &[f64] {
        &self.points[self.seed]
    }

    /// Lattice indices from the seed to `idx` (empty for non-members).
    pub fn path_to(&self, idx: usize) -> Vec<usize> {
        if !self.member[idx] {
            return Vec::new();
        }
        let mut path = vec![idx];
        let mut cur = idx;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Smallest and largest member coordinate along `axis`.
    pub fn member_range(&self, axis: usize) -> Option<(f64, f64)> {
        self.members().map(|p| p[axis]).fold(None, |acc, x| match acc {
            None => Some((x, x)),
            Some((a, b)) => Some((a.min(x), b.max(x))),
        })
    }

    /// One row per lattice point: coordinates, member flag (0/1) and the row
    /// of the member it was reached from (-1 for the seed and non-members).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for name in &self.axis_names {
            out.push_str(name);
            out.push(',');
        }
        out.push_str("member,path_id\n");
        for (i, p) in self.points.iter().enumerate() {
            for v in p {
                let _ = write!(out, "{v},");
            }
            let parent = self.parent[i].map_or(-1, |j| j as i64);
            let _ = writeln!(out, "{},{parent}", u8::from(self.member[i]));
        }
        out
    }

    /// Scatter plot in a fixed 800 x 800 view box; `None` above two dimensions.
    pub fn to_svg(&self) -> Option<String> {
        let d = self.axis_names.len();
        if d == 0 || d > 2 {
            return None;
        }
        let scale = |v: f64, axis: usize| {
            let (lo, hi) = (self.lo[axis], self.hi[axis]);
            40.0 + 720.0 * (v - lo) / (hi - lo)
        };
        let mut out = String::from(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 800\" width=\"800\" height=\"800\">\n\
             <rect x=\"0\" y=\"0\" width=\"800\" height=\"800\" fill=\"white\"/>\n",
        );
        for (p, m) in self.points.iter().zip(&self.member) {
            let x = scale(p[0], 0);
            let y = if d == 2 { 800.0 - scale(p[1], 1) } else { 400.0 };
            let fill = if *m { "#1f4e9c" } else { "#d0d0d0" };
            let _ = writeln!(out, "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"3\" fill=\"{fill}\"/>");
        }
        out.push_str("</svg>\n");
        Some(out)
    }
}

struct Lattice {
    origin: Vec<f64>,
    step: f64,
    kmin: Vec<i64>,
    counts: Vec<usize>,
}

impl Lattice {
    fn new(region: &AxisBox, origin: &[f64], step: f64) -> Self {
        let mut kmin = Vec::new();
        let mut counts = Vec::new();
        for ((lo, hi), o) in region.lo().iter().zip(region.hi()).zip(origin) {
            let first = ((lo - o) / step - 1e-9).ceil() as i64;
            let last = ((hi - o) / step + 1e-9).floor() as i64;
            kmin.push(first);
            counts.push((last - first + 1).max(0) as usize);
        }
        Lattice {
            origin: origin.to_vec(),
            step,
            kmin,
            counts,
        }
    }

    fn len(&self) -> usize {
        self.counts.iter().product()
    }

    fn multi(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.counts.len()];
        for a in (0..self.counts.len()).rev() {
            out[a] = idx % self.counts[a];
            idx /= self.counts[a];
        }
        out
    }

    fn flat(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.counts).fold(0, |acc, (i, n)| acc * n + i)
    }

    fn point(&self, idx: usize) -> Vec<f64> {
        self.multi(idx)
            .iter()
            .enumerate()
            .map(|(a, &i)| {
                let k = self.kmin[a] + i as i64;
                if k == 0 {
                    self.origin[a]
                } else {
                    self.origin[a] + k as f64 * self.step
                }
            })
            .collect()
    }

    fn seed(&self) -> usize {
        let multi: Vec<usize> = self.kmin.iter().map(|k| (-k) as usize).collect();
        self.flat(&multi)
    }

    /// King-move neighbors in a fixed order.
    fn neighbors(&self, idx: usize) -> Vec<usize> {
        let base = self.multi(idx);
        let d = base.len();
        let mut out = Vec::new();
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            let mut next = base.clone();
            let mut ok = true;
            let mut moved = false;
            #[allow(clippy::needless_range_loop)]
            for a in 0..d {
                let delta = (c % 3) as i64 - 1;
                c /= 3;
                let v = next[a] as i64 + delta;
                if v < 0 || v >= self.counts[a] as i64 {
                    ok = false;
                    break;
                }
                moved |= delta != 0;
                next[a] = v as usize;
            }
            if ok && moved {
                out.push(self.flat(&next));
            }
        }
        out
    }
}

/// Layered breadth-first search. Every (member, candidate) pair is tried once;
/// the pairs of a layer are evaluated concurrently and merged in order.
/// Membership, BFS parent and carried state per lattice point.
type Search<S> = (Vec<bool>, Vec<Option<usize>>, Vec<Option<S>>);

fn bfs<S, F>(lattice: &Lattice, seed_state: S, edge: F) -> Result<Search<S>>
where
    S: Clone + Send + Sync,
    F: Fn(usize, &S, usize) -> Result<Option<S>> + Sync,
{
    let n = lattice.len();
    let mut member = vec![false; n];
    let mut parent = vec![None; n];
    let mut state: Vec<Option<S>> = vec![None; n];
    let seed = lattice.seed();
    member[seed] = true;
    state[seed] = Some(seed_state);
    let mut layer = vec![seed];
    while !layer.is_empty() {
        let pairs: Vec<(usize, usize)> = layer
            .iter()
            .flat_map(|&u| lattice.neighbors(u).into_iter().map(move |v| (u, v)))
            .filter(|&(_, v)| !member[v])
            .collect();
        let results: Vec<Result<Option<S>>> = pairs
            .par_iter()
            .map(|&(u, v)| edge(u, state[u].as_ref().expect("member state"), v))
            .collect();
        let mut next = Vec::new();
        for ((u, v), r) in pairs.into_iter().zip(results) {
            if let Some(s) = r? {
                if !member[v] {
                    member[v] = true;
                    parent[v] = Some(u);
                    state[v] = Some(s);
                    next.push(v);
                }
            }
        }
        next.sort_unstable();
        layer = next;
    }
    Ok((member, parent, state))
}

fn segment_map(u: &[f64], dir: &[f64]) -> SmoothMap {
    let comps = u
        .iter()
        .zip(dir)
        .map(|(&p, &d)| {
            if d == 0.0 {
                Expr::Num(p)
            } else {
                Expr::add(Expr::Num(p), Expr::mul(Expr::Num(d), Expr::Var(0)))
            }
        })
        .collect();
    SmoothMap::new(1, comps).expect("segment in one variable")
}

/// Checkpoints `0 = s_0 < .. < s_n = len` with spacing at most `h`.
fn checkpoints(len: f64, h: f64) -> Vec<f64> {
    let n = (len / h).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| if i == n { len } else { len * i as f64 / n as f64 })
        .collect()
}

/// Transport `tuple` from `u` to `v` along the straight segment and force
/// `phi` at every checkpoint on the pullback along it. Returns the tuple at
/// `v` when every checkpoint passes.
fn horizontal_step(
    sb: &StructureBundle,
    c: &Connection,
    phi: &Formula,
    pol: &NeighborhoodPolicy,
    u: &[f64],
    v: &[f64],
    tuple: &[Vec<f64>],
) -> Result<Option<Vec<Vec<f64>>>> {
    let len = u.iter().zip(v).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
    let dir: Vec<f64> = u.iter().zip(v).map(|(a, b)| (b - a) / len).collect();
    let reach = pol.reach() * 1.01;
    let (mut lo, mut hi) = (-reach, len + reach);
    let base = sb.base();
    for (i, &d) in dir.iter().enumerate() {
        if d != 0.0 {
            let a = (base.lo()[i] - u[i]) / d;
            let b = (base.hi()[i] - u[i]) / d;
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    lo = lo.min(0.0);
    hi = hi.max(len);
    let path = segment_map(u, &dir);
    let window = AxisBox::new(vec![lo], vec![hi])?;
    let pb = sb.pullback(&path, &window)?;
    let sections = tuple
        .iter()
        .map(|a| Section::sampled(window.clone(), lift_curve(c, &path, a, lo, hi, pol.step, &[len])?))
        .collect::<Result<Vec<_>>>()?;
    let f = Forcer::new(&pb, &sections, pol)?;
    f.check_formula(phi)?;
    let env = f.free_env();
    for s in checkpoints(len, pol.step) {
        if !f.decide(phi, &[s], &env, 0)? {
            return Ok(None);
        }
    }
    Ok(Some(
        sections.iter().map(|s| s.eval(&[len])).collect::<Result<Vec<_>>>()?,
    ))
}

/// Forcing on the pullback along the constant path at `m` with constant
/// sections `e`.
fn forced_at_rest(
    sb: &StructureBundle,
    m: &[f64],
    e: &[Vec<f64>],
    phi: &Formula,
    pol: &NeighborhoodPolicy,
) -> Result<bool> {
    let unit = AxisBox::new(vec![-1.0], vec![1.0])?;
    let pb = sb.pullback(&SmoothMap::constant(1, m), &unit)?;
    let sections: Vec<Section> = e.iter().map(|a| Section::constant(unit.clone(), a)).collect();
    let f = Forcer::new(&pb, &sections, pol)?;
    f.check_formula(phi)?;
    f.decide(phi, &[0.0], &f.free_env(), 0)
}

fn seed_forced(
    sb: &StructureBundle,
    c: &Connection,
    m: &[f64],
    e: &[Vec<f64>],
    phi: &Formula,
    spec: &FamilySpec,
    pol: &NeighborhoodPolicy,
) -> Result<bool> {
    if forced_at_rest(sb, m, e, phi, pol)? {
        return Ok(true);
    }
    let fam = PathFamily::generate(sb.base(), m, spec)?;
    Ok(parallel_forced(sb, c, e, phi, &fam, pol)?.decision.is_forced())
}

/// Base lattice points reachable from `m` by segment chains along which the
/// transported tuple keeps `phi` forced at every checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn horizontal_extension(
    sb: &StructureBundle,
    c: &Connection,
    m: &[f64],
    e: &[Vec<f64>],
    phi: &Formula,
    region: &AxisBox,
    grid: f64,
    spec: &FamilySpec,
    pol: &NeighborhoodPolicy,
) -> Result<ExtensionSet> {
    check_tuple(sb, c, e)?;
    pol.validate()?;
    if !(grid > 0.0) {
        return Err(Error::Policy("grid spacing must be positive".into()));
    }
    if !sb.base().contains_box(region) {
        return Err(Error::OutOfBox {
            what: "extension region".into(),
            point: region.hi().to_vec(),
        });
    }
    if !region.contains(m) {
        return Err(Error::OutOfBox {
            what: "seed point".into(),
            point: m.to_vec(),
        });
    }
    let lattice = Lattice::new(region, m, grid);
    let points: Vec<Vec<f64>> = (0..lattice.len()).map(|i| lattice.point(i)).collect();
    let axis_names = (1..=m.len()).map(|i| format!("x{i}")).collect();
    let seed = lattice.seed();
    if !seed_forced(sb, c, m, e, phi, spec, pol)? {
        let n = points.len();
        return Ok(ExtensionSet {
            axis_names,
            lo: region.lo().to_vec(),
            hi: region.hi().to_vec(),
            points,
            member: vec![false; n],
            parent: vec![None; n],
            seed,
            tuples: vec![None; n],
        });
    }
    let (member, parent, tuples) = bfs(&lattice, e.to_vec(), |u, tuple, v| {
        horizontal_step(sb, c, phi, pol, &points[u], &points[v], tuple)
    })?;
    Ok(ExtensionSet {
        axis_names,
        lo: region.lo().to_vec(),
        hi: region.hi().to_vec(),
        points,
        member,
        parent,
        seed,
        tuples,
    })
}

/// Replay the segment chain that reached member `idx`, recomputing every
/// transport and checkpoint.
pub fn recheck_horizontal_member(
    sb: &StructureBundle,
    c: &Connection,
    e: &[Vec<f64>],
    phi: &Formula,
    set: &ExtensionSet,
    idx: usize,
    pol: &NeighborhoodPolicy,
) -> Result<bool> {
    let chain = set.path_to(idx);
    if chain.is_empty() {
        return Ok(false);
    }
    let mut tuple = e.to_vec();
    for w in chain.windows(2) {
        match horizontal_step(sb, c, phi, pol, &set.points[w[0]], &set.points[w[1]], &tuple)? {
            Some(t) => tuple = t,
            None => return Ok(false),
        }
    }
    Ok(true)
}

/// Checkpoints per unit lattice step along a vertical segment.
const VERTICAL_CHECKPOINTS: f64 = 16.0;

/// Fiber-tuple lattice points of `region` reachable from `e` by straight
/// segments whose checkpoints are all parallel-forced at `m`.
#[allow(clippy::too_many_arguments)]
pub fn vertical_extension(
    sb: &StructureBundle,
    c: &Connection,
    m: &[f64],
    e: &[Vec<f64>],
    phi: &Formula,
    region: &AxisBox,
    grid: f64,
    spec: &FamilySpec,
    pol: &NeighborhoodPolicy,
) -> Result<ExtensionSet> {
    check_tuple(sb, c, e)?;
    pol.validate()?;
    if e.is_empty() {
        return Err(Error::Invalid(
            "vertical extension needs at least one fiber point".into(),
        ));
    }
    if !(grid > 0.0) {
        return Err(Error::Policy("grid spacing must be positive".into()));
    }
    let seed_point = pack(e);
    if region.dim() != seed_point.len() {
        return Err(Error::Dimension(format!(
            "fiber region has dimension {}, tuple has {} coordinate(s)",
            region.dim(),
            seed_point.len()
        )));
    }
    if !region.contains(&seed_point) {
        return Err(Error::OutOfBox {
            what: "seed tuple".into(),
            point: seed_point,
        });
    }
    let copies = e.len();
    let fam = PathFamily::generate(sb.base(), m, spec)?;
    let lattice = Lattice::new(region, &seed_point, grid);
    let points: Vec<Vec<f64>> = (0..lattice.len()).map(|i| lattice.point(i)).collect();
    let k = sb.fiber_dim();
    let axis_names = (1..=copies)
        .flat_map(|j| (1..=k).map(move |i| format!("y{j}{i}")))
        .collect();
    let forced = |p: &[f64]| -> Result<bool> {
        Ok(parallel_forced(sb, c, &unpack(p, copies), phi, &fam, pol)?
            .decision
            .is_forced())
    };
    let seed = lattice.seed();
    let (member, parent) = if forced(&seed_point)? {
        let (member, parent, _) = bfs(&lattice, (), |u, _, v| {
            let (a, b) = (&points[u], &points[v]);
            let len = a.iter().zip(b).map(|(x, y)| (y - x).powi(2)).sum::<f64>().sqrt();
            for s in checkpoints(len, grid / VERTICAL_CHECKPOINTS).into_iter().skip(1) {
                let p: Vec<f64> = if s == len {
                    b.clone()
                } else {
                    a.iter().zip(b).map(|(x, y)| x + (s / len) * (y - x)).collect()
                };
                if !forced(&p)? {
                    return Ok(None);
                }
            }
            Ok(Some(()))
        })?;
        (member, parent)
    } else {
        (vec![false; points.len()], vec![None; points.len()])
    };
    let n = points.len();
    Ok(ExtensionSet {
        axis_names,
        lo: region.lo().to_vec(),
        hi: region.hi().to_vec(),
        points,
        member,
        parent,
        seed,
        tuples: vec![None; n],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop46Options {
    /// Region of `(x, y)` fiber pairs.
    pub fiber_region: AxisBox,
    pub base_region: AxisBox,
    pub fiber_grid: f64,
    pub base_grid: f64,
    pub family: FamilySpec,
    pub policy: NeighborhoodPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop46Report {
    pub holds: bool,
    pub vertical_is_diagonal: bool,
    pub horizontal_is_everything: bool,
    pub diagonal_points: usize,
    pub vertical_members: usize,
    pub base_points: usize,
    pub horizontal_members: usize,
    pub diagnostic: Option<String>,
}

/// For `x = y` started at `(a, a)`: the vertical extension should be exactly
/// the diagonal of the fiber lattice and the horizontal extension the whole
/// base lattice.
pub fn prop46_check(
    sb: &StructureBundle,
    c: &Connection,
    m: &[f64],
    a: &[f64],
    opts: &Prop46Options,
) -> Result<Prop46Report> {
    let phi = Formula::Eq(Term::Var(0), Term::Var(1));
    let e = vec![a.to_vec(), a.to_vec()];
    let k = a.len();
    let seed = pack(&e);
    let fail = |msg: String| Prop46Report {
        holds: false,
        vertical_is_diagonal: false,
        horizontal_is_everything: false,
        diagonal_points: 0,
        vertical_members: 0,
        base_points: 0,
        horizontal_members: 0,
        diagnostic: Some(msg),
    };
    if opts.fiber_region.dim() != 2 * k {
        return Ok(fail(format!(
            "fiber region has dimension {}, expected {}",
            opts.fiber_region.dim(),
            2 * k
        )));
    }
    if !opts.fiber_region.contains(&seed) {
        return Ok(fail(format!("the seed pair {seed:?} is not in the fiber region")));
    }
    let vertical = vertical_extension(
        sb,
        c,
        m,
        &e,
        &phi,
        &opts.fiber_region,
        opts.fiber_grid,
        &opts.family,
        &opts.policy,
    )?;
    let on_diagonal = |p: &[f64]| p[..k] == p[k..];
    let mut mismatches = Vec::new();
    let mut diagonal_points = 0;
    for (p, &mem) in vertical.points.iter().zip(&vertical.member) {
        let diag = on_diagonal(p);
        diagonal_points += usize::from(diag);
        if diag != mem && mismatches.len() < 5 {
            mismatches.push(format!("{p:?} member={mem}"));
        }
    }
    let vertical_is_diagonal = mismatches.is_empty();
    let horizontal = horizontal_extension(
        sb,
        c,
        m,
        &e,
        &phi,
        &opts.base_region,
        opts.base_grid,
        &opts.family,
        &opts.policy,
    )?;
    let horizontal_is_everything = horizontal.member.iter().all(|x| *x);
    let mut diagnostic = None;
    if !vertical_is_diagonal {
        diagnostic = Some(format!(
            "vertical extension differs from the diagonal at {}",
            mismatches.join("; ")
        ));
    } else if !horizontal_is_everything {
        let missing = horizontal.points.len() - horizontal.member_count();
        diagnostic = Some(format!("horizontal extension misses {missing} base point(s)"));
    }
    Ok(Prop46Report {
        holds: vertical_is_diagonal && horizontal_is_everything,
        vertical_is_diagonal,
        horizontal_is_everything,
        diagonal_points,
        vertical_members: vertical.member_count(),
        base_points: horizontal.points.len(),
        horizontal_members: horizontal.member_count(),
        diagnostic,
    })
}
