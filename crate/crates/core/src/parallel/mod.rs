//! Forcing along parallel transports: a tuple of fiber points is carried
//! along every path of a finite family through the base point, the bundle is
//! pulled back along the path, and the formula is forced at the path's origin.

mod extension;
mod trials;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bundle::{AxisBox, SmoothMap, StructureBundle};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forcing::{Decision, Forcer, NeighborhoodPolicy};
use crate::logic::Formula;
use crate::transport::{lift_section, pullback_connection, Connection};

pub use extension::{
    horizontal_extension, prop46_check, recheck_horizontal_member, vertical_extension, ExtensionSet, Prop46Options,
    Prop46Report,
};
pub use trials::{positive_lemma_trials, pullback_theorem_trials, TrialFailure, TrialSummary};

/// How to build the finite path family through a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySpec {
    /// Seeded random cubic paths.
    pub random: usize,
    pub seed: u64,
    /// Scale of every path before shrinking to fit the box.
    pub radius: f64,
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec {
            random: 16,
            seed: 0,
            radius: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyPath {
    pub label: String,
    /// `[-1, 1] -> base`, sending 0 to the family's base point.
    pub map: SmoothMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathFamily {
    point: Vec<f64>,
    paths: Vec<FamilyPath>,
}

const SHRINKS: usize = 4;

fn unit_interval() -> AxisBox {
    AxisBox::new(vec![-1.0], vec![1.0]).expect("valid interval")
}

/// `m + r (a t + b t^2 + c t^3)` component-wise.
fn cubic(m: &[f64], r: f64, a: &[f64], b: &[f64], c: &[f64]) -> SmoothMap {
    let t = || Expr::Var(0);
    let comps = (0..m.len())
        .map(|i| {
            let mut e = Expr::Num(m[i]);
            for (coef, pow) in [(a[i], 1), (b[i], 2), (c[i], 3)] {
                if coef != 0.0 {
                    let mono = if pow == 1 { t() } else { Expr::Pow(Box::new(t()), pow) };
                    e = Expr::add(e, Expr::mul(Expr::Num(r * coef), mono));
                }
            }
            e
        })
        .collect();
    SmoothMap::new(1, comps).expect("cubic path in one variable")
}

/// Label and coefficients `a, b, c` of `m + a t + b t^2 + c t^3`.
type Shape = (String, Vec<f64>, Vec<f64>, Vec<f64>);

impl PathFamily {
    /// Axis segments in both orientations, eight fixed arcs and `spec.random`
    /// seeded cubics, each shrunk until it fits `base` (or dropped).
    pub fn generate(base: &AxisBox, m: &[f64], spec: &FamilySpec) -> Result<Self> {
        if m.len() != base.dim() {
            return Err(Error::Dimension("family point has the wrong dimension".into()));
        }
        if !base.contains(m) {
            return Err(Error::OutOfBox {
                what: "family point".into(),
                point: m.to_vec(),
            });
        }
        let n = m.len();
        let zero = vec![0.0; n];
        let mut shapes: Vec<Shape> = Vec::new();
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut a = zero.clone();
                a[i] = sign;
                let tag = if sign > 0.0 { '+' } else { '-' };
                shapes.push((format!("axis{}{tag}", i + 1), a, zero.clone(), zero.clone()));
            }
        }
        for q in 0..8 {
            let theta = q as f64 * std::f64::consts::FRAC_PI_4;
            let (a, b): (Vec<f64>, Vec<f64>) = if n == 1 {
                let a = if q % 2 == 0 { 1.0 } else { -1.0 };
                let b = [0.5, -0.5, 0.9, -0.9][q / 2];
                (vec![a], vec![b])
            } else {
                let mut a = zero.clone();
                let mut b = zero.clone();
                let (i, j) = (q % n, (q + 1) % n);
                a[i] += theta.cos();
                a[j] += theta.sin();
                b[i] -= 0.5 * theta.sin();
                b[j] += 0.5 * theta.cos();
                (a, b)
            };
            shapes.push((format!("arc{}", q + 1), a, b, zero.clone()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for q in 0..spec.random {
            let mut draw = || (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect::<Vec<f64>>();
            let (a, b, c) = (draw(), draw(), draw());
            shapes.push((format!("cubic{}", q + 1), a, b, c));
        }
        let unit = unit_interval();
        let mut paths = Vec::new();
        for (label, a, b, c) in shapes {
            let mut r = spec.radius;
            for _ in 0..=SHRINKS {
                let map = cubic(m, r, &a, &b, &c);
                if map.check_image(&unit, base).is_ok() {
                    paths.push(FamilyPath { label, map });
                    break;
                }
                r *= 0.5;
            }
        }
        if paths.is_empty() {
            return Err(Error::EmptyFamily);
        }
        Ok(PathFamily {
            point: m.to_vec(),
            paths,
        })
    }

    pub fn from_paths(point: Vec<f64>, paths: Vec<FamilyPath>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptyFamily);
        }
        for p in &paths {
            if p.map.source_dim() != 1 || p.map.target_dim() != point.len() {
                return Err(Error::Dimension(format!("path `{}` has the wrong shape", p.label)));
            }
        }
        Ok(PathFamily { point, paths })
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn paths(&self) -> &[FamilyPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// The family `f o sigma` through `f(point)`.
    pub fn map_through(&self, f: &SmoothMap) -> Result<PathFamily> {
        let point = f.eval(&self.point)?;
        let paths = self
            .paths
            .iter()
            .map(|p| {
                Ok(FamilyPath {
                    label: p.label.clone(),
                    map: f.compose(&p.map)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PathFamily { point, paths })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParallelVerdict {
    pub decision: Decision,
    /// Label of the first path along which forcing fails.
    pub counterexample: Option<String>,
    pub paths_checked: usize,
}

fn check_tuple(sb: &StructureBundle, c: &Connection, e: &[Vec<f64>]) -> Result<()> {
    if c.base_dim() != sb.base_dim() || c.fiber_dim() != sb.fiber_dim() {
        return Err(Error::Dimension("connection does not match the bundle".into()));
    }
    if let Some(p) = e.iter().find(|p| p.len() != sb.fiber_dim()) {
        return Err(Error::Dimension(format!(
            "fiber point {p:?} does not have {} coordinate(s)",
            sb.fiber_dim()
        )));
    }
    Ok(())
}

/// Force `phi` at `t = 0` on the pullback along `path`, with the lifts of `e`.
pub(crate) fn forced_along(
    sb: &StructureBundle,
    c: &Connection,
    path: &SmoothMap,
    e: &[Vec<f64>],
    phi: &Formula,
    pol: &NeighborhoodPolicy,
) -> Result<bool> {
    let w = (pol.reach() * 1.01).min(1.0);
    let pb = sb.pullback(path, &unit_interval())?;
    let sections = e
        .iter()
        .map(|a| lift_section(c, path, a, -w, w, pol.step))
        .collect::<Result<Vec<_>>>()?;
    let f = Forcer::new(&pb, &sections, pol)?;
    f.check_formula(phi)?;
    f.decide(phi, &[0.0], &f.free_env(), 0)
}

/// Is `phi(e_1, ..)` forced along every path of `fam`?
pub fn parallel_forced(
    sb: &StructureBundle,
    c: &Connection,
    e: &[Vec<f64>],
    phi: &Formula,
    fam: &PathFamily,
    pol: &NeighborhoodPolicy,
) -> Result<ParallelVerdict> {
    check_tuple(sb, c, e)?;
    pol.validate()?;
    if fam.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let results: Vec<Result<bool>> = fam
        .paths
        .par_iter()
        .map(|p| forced_along(sb, c, &p.map, e, phi, pol))
        .collect();
    for (p, r) in fam.paths.iter().zip(results) {
        if !r? {
            return Ok(ParallelVerdict {
                decision: Decision::NotForced,
                counterexample: Some(p.label.clone()),
                paths_checked: fam.len(),
            });
        }
    }
    Ok(ParallelVerdict {
        decision: Decision::Forced,
        counterexample: None,
        paths_checked: fam.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub agree: bool,
    /// Per preimage: the verdict on the original bundle along the mapped
    /// family, then the verdict on the pulled-back bundle.
    pub pairs: Vec<(Decision, Decision)>,
}

/// Compare parallel forcing at `m` with parallel forcing at each preimage `n`
/// of the pulled-back bundle and connection. The family at `n` is generated
/// over `source`; the target side uses its image under `f`.
#[allow(clippy::too_many_arguments)]
pub fn check_pullback_compatibility(
    sb: &StructureBundle,
    c: &Connection,
    f: &SmoothMap,
    source: &AxisBox,
    m: &[f64],
    preimages: &[Vec<f64>],
    e: &[Vec<f64>],
    phi: &Formula,
    spec: &FamilySpec,
    pol: &NeighborhoodPolicy,
) -> Result<CompatibilityReport> {
    if preimages.is_empty() {
        return Err(Error::Invalid("no preimage points given".into()));
    }
    let pb = sb.pullback(f, source)?;
    let pc = pullback_connection(c, f, source)?;
    let mut pairs = Vec::with_capacity(preimages.len());
    for n in preimages {
        let image = f.eval(n)?;
        if image.iter().zip(m).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::Invalid(format!("{n:?} is not a preimage of {m:?}")));
        }
        let fam = PathFamily::generate(source, n, spec)?;
        let left = parallel_forced(sb, c, e, phi, &fam.map_through(f)?, pol)?.decision;
        let right = parallel_forced(&pb, &pc, e, phi, &fam, pol)?.decision;
        pairs.push((left, right));
    }
    Ok(CompatibilityReport {
        agree: pairs.iter().all(|(l, r)| l == r),
        pairs,
    })
}
