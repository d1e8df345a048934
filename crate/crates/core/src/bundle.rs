//! Trivial bundles `B x R^k` over axis-aligned boxes, bundles of structures,
//! sections and pullbacks.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::logic::{FiberStructure, Interpretation, Signature, Term};

const BOX_SLACK: f64 = 1e-12;

/// A closed axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

pub type BaseBox = AxisBox;

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidBox(format!(
                "bounds of length {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] < hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(Error::InvalidBox(format!(
                "axis {} has bounds [{}, {}]",
                i + 1,
                lo[i],
                hi[i]
            )));
        }
        Ok(AxisBox { lo, hi })
    }

    /// The same interval on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        AxisBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (lo, hi))| *x >= lo - BOX_SLACK && *x <= hi + BOX_SLACK)
    }

    pub fn contains_box(&self, other: &AxisBox) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    pub fn intersect(&self, other: &AxisBox) -> Result<AxisBox> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension("intersecting boxes of different dimension".into()));
        }
        let lo = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        AxisBox::new(lo, hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Corner points and a regular lattice with `per_axis` points per axis.
    pub fn lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let mut out = vec![Vec::new()];
        for (lo, hi) in self.lo.iter().zip(&self.hi) {
            let mut next = Vec::with_capacity(out.len() * per_axis);
            for p in &out {
                for i in 0..per_axis {
                    let mut q = p.clone();
                    q.push(lo + (hi - lo) * i as f64 / (per_axis - 1) as f64);
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }

    /// Points `k * step` inside the box, one axis after another (the last axis
    /// varies fastest).
    pub fn grid(&self, step: f64) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(lo, hi)| {
                let first = (lo / step - 1e-9).ceil() as i64;
                let last = (hi / step + 1e-9).floor() as i64;
                (first..=last).map(|k| k as f64 * step).collect()
            })
            .collect();
        product(&axes)
    }

    pub fn product(&self, other: &AxisBox) -> AxisBox {
        AxisBox {
            lo: self.lo.iter().chain(&other.lo).copied().collect(),
            hi: self.hi.iter().chain(&other.hi).copied().collect(),
        }
    }
}

pub(crate) fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for p in &out {
            for &x in axis {
                let mut q = p.clone();
                q.push(x);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberBundle {
    pub base: AxisBox,
    pub fiber_dim: usize,
}

/// Pack a tuple of fiber points into one point of the direct sum.
pub fn pack(points: &[Vec<f64>]) -> Vec<f64> {
    points.concat()
}

/// Split a direct-sum point into `copies` blocks of equal length.
pub fn unpack(point: &[f64], copies: usize) -> Vec<Vec<f64>> {
    let k = point.len() / copies.max(1);
    point.chunks(k.max(1)).map(<[f64]>::to_vec).collect()
}

/// Bundle of structures over a box: every symbol is interpreted by expressions
/// whose base variables are free.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureBundle {
    bundle: FiberBundle,
    signature: Signature,
    interp: Interpretation,
    fiber_box: AxisBox,
}

impl StructureBundle {
    pub fn new(base: AxisBox, fiber_box: AxisBox, signature: Signature, interp: Interpretation) -> Result<Self> {
        if interp.base_dim() != base.dim() || interp.fiber_dim() != fiber_box.dim() {
            return Err(Error::Dimension(format!(
                "interpretation over {}+{} variables for a {}-dimensional base and {}-dimensional fiber",
                interp.base_dim(),
                interp.fiber_dim(),
                base.dim(),
                fiber_box.dim()
            )));
        }
        Ok(StructureBundle {
            bundle: FiberBundle {
                base,
                fiber_dim: fiber_box.dim(),
            },
            signature,
            interp,
            fiber_box,
        })
    }

    pub fn base(&self) -> &AxisBox {
        &self.bundle.base
    }

    pub fn bundle(&self) -> &FiberBundle {
        &self.bundle
    }

    pub fn base_dim(&self) -> usize {
        self.bundle.base.dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.bundle.fiber_dim
    }

    /// The box fiber points are expected to stay in, used for witness grids
    /// and for detecting runaway transports.
    pub fn fiber_box(&self) -> &AxisBox {
        &self.fiber_box
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn interpretation(&self) -> &Interpretation {
        &self.interp
    }

    pub fn fiber_structure(&self, m: &[f64]) -> Result<FiberStructure<'_>> {
        if !self.base().contains(m) {
            return Err(Error::OutOfBox {
                what: "base point".into(),
                point: m.to_vec(),
            });
        }
        Ok(self.interp.at(m))
    }

    pub fn direct_sum(&self, copies: usize) -> Result<FiberBundle> {
        if copies == 0 {
            return Err(Error::Dimension("direct sum of zero copies".into()));
        }
        Ok(FiberBundle {
            base: self.base().clone(),
            fiber_dim: self.fiber_dim() * copies,
        })
    }

    /// Precompose every interpretation with `h`; `source` becomes the new base.
    pub fn pullback(&self, h: &SmoothMap, source: &AxisBox) -> Result<StructureBundle> {
        if h.source_dim() != source.dim() || h.target_dim() != self.base_dim() {
            return Err(Error::Dimension(format!(
                "map {}->{} cannot pull back along a {}-dimensional source into a {}-dimensional base",
                h.source_dim(),
                h.target_dim(),
                source.dim(),
                self.base_dim()
            )));
        }
        h.check_image(source, self.base())?;
        Ok(StructureBundle {
            bundle: FiberBundle {
                base: source.clone(),
                fiber_dim: self.fiber_dim(),
            },
            signature: self.signature.clone(),
            interp: self.interp.precompose(h.components(), source.dim()),
            fiber_box: self.fiber_box.clone(),
        })
    }

    /// The section `m -> t(s_1(m), ..)` built by composing expressions.
    pub fn term_section(&self, t: &Term, sections: &[Section]) -> Result<Section> {
        let mut domain = self.base().clone();
        let mut comps = Vec::with_capacity(sections.len());
        for s in sections {
            domain = domain.intersect(s.domain())?;
            match s.values() {
                SectionValues::Exprs(e) => comps.push(e.clone()),
                SectionValues::Sampled(_) => {
                    return Err(Error::Invalid("term sections need expression sections".into()))
                }
            }
        }
        let exprs = self.compose_term(t, &comps)?;
        Section::new(domain, exprs)
    }

    fn compose_term(&self, t: &Term, sections: &[Vec<Expr>]) -> Result<Vec<Expr>> {
        let n = self.base_dim();
        let k = self.fiber_dim();
        match t {
            Term::Var(i) => sections
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::Invalid(format!("term variable {} has no section", i + 1))),
            Term::Const(c) => Ok(self.interp.constant_tables()[*c].clone()),
            Term::App(g, args) => {
                let args = args
                    .iter()
                    .map(|a| self.compose_term(a, sections))
                    .collect::<Result<Vec<_>>>()?;
                let subst = |v: usize| {
                    if v < n {
                        Expr::Var(v)
                    } else {
                        let j = (v - n) / k;
                        args[j][(v - n) % k].clone()
                    }
                };
                Ok(self.interp.function_tables()[*g]
                    .iter()
                    .map(|e| e.substitute(&subst))
                    .collect())
            }
        }
    }
}

/// Precomputed lift: node times, values and time derivatives; evaluated by
/// cubic Hermite interpolation, exact at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    nodes: Vec<f64>,
    values: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl SampledCurve {
    pub fn new(nodes: Vec<f64>, values: Vec<Vec<f64>>, slopes: Vec<Vec<f64>>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != values.len() || nodes.len() != slopes.len() {
            return Err(Error::Invalid("sampled curve needs matching, non-empty tables".into()));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invalid("sampled curve nodes must increase".into()));
        }
        Ok(SampledCurve { nodes, values, slopes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn span(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let i = self.nodes.partition_point(|&x| x < t);
        if i < self.nodes.len() && self.nodes[i] == t {
            return self.values[i].clone();
        }
        if i == 0 {
            return self.values[0].clone();
        }
        if i == self.nodes.len() {
            return self.values[i - 1].clone();
        }
        let (t0, t1) = (self.nodes[i - 1], self.nodes[i]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (0..self.values[i].len())
            .map(|c| {
                h00 * self.values[i - 1][c]
                    + h10 * h * self.slopes[i - 1][c]
                    + h01 * self.values[i][c]
                    + h11 * h * self.slopes[i][c]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectionValues {
    Exprs(Vec<Expr>),
    /// Only over one-dimensional bases.
    Sampled(Arc<SampledCurve>),
}

/// A section over a sub-box of the base, given by its fiber components.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    domain: AxisBox,
    values: SectionValues,
}

impl Section {
    pub fn new(domain: AxisBox, components: Vec<Expr>) -> Result<Self> {
        let n = domain.dim();
        if components.iter().any(|e| e.max_var().is_some_and(|v| v >= n)) {
            return Err(Error::Dimension("section component uses a non-base variable".into()));
        }
        Ok(Section {
            domain,
            values: SectionValues::Exprs(components),
        })
    }

    /// The constant section through `point`.
    pub fn constant(domain: AxisBox, point: &[f64]) -> Self {
        Section {
            domain,
            values: SectionValues::Exprs(point.iter().map(|&v| Expr::Num(v)).collect()),
        }
    }

    pub fn sampled(domain: AxisBox, curve: SampledCurve) -> Result<Self> {
        if domain.dim() != 1 {
            return Err(Error::Dimension(
                "sampled sections live over a one-dimensional base".into(),
            ));
        }
        Ok(Section {
            domain,
            values: SectionValues::Sampled(Arc::new(curve)),
        })
    }

    /// `s o h`, a section of the pullback bundle over `source`.
    pub fn pullback(&self, h: &SmoothMap, source: &AxisBox) -> Result<Section> {
        if h.source_dim() != source.dim() || h.target_dim() != self.domain.dim() {
            return Err(Error::Dimension(
                "section pullback along a map of the wrong shape".into(),
            ));
        }
        let SectionValues::Exprs(comps) = &self.values else {
            return Err(Error::Invalid("only expression sections can be pulled back".into()));
        };
        h.check_image(source, &self.domain)?;
        let subst = |v: usize| h.components()[v].clone();
        Ok(Section {
            domain: source.clone(),
            values: SectionValues::Exprs(comps.iter().map(|e| e.substitute(&subst)).collect()),
        })
    }

    pub fn domain(&self) -> &AxisBox {
        &self.domain
    }

    pub fn values(&self) -> &SectionValues {
        &self.values
    }

    pub fn fiber_dim(&self) -> usize {
        match &self.values {
            SectionValues::Exprs(e) => e.len(),
            SectionValues::Sampled(c) => c.values[0].len(),
        }
    }

    pub fn is_defined_at(&self, m: &[f64]) -> bool {
        self.domain.contains(m)
    }

    pub fn eval(&self, m: &[f64]) -> Result<Vec<f64>> {
        if !self.domain.contains(m) {
            return Err(Error::OutOfBox {
                what: "section argument".into(),
                point: m.to_vec(),
            });
        }
        Ok(self.eval_unchecked(m)?)
    }

    pub(crate) fn eval_unchecked(&self, m: &[f64]) -> Result<Vec<f64>, crate::expr::ExprError> {
        match &self.values {
            SectionValues::Exprs(e) => e.iter().map(|c| c.eval(m)).collect(),
            SectionValues::Sampled(c) => Ok(c.eval(m[0])),
        }
    }
}

/// Smooth map `R^p -> R^q` given by component expressions in `x1..xp`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothMap {
    source_dim: usize,
    components: Vec<Expr>,
}

impl SmoothMap {
    pub fn new(source_dim: usize, components: Vec<Expr>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Dimension("smooth map without components".into()));
        }
        if components.iter().any(|e| e.max_var().is_some_and(|v| v >= source_dim)) {
            return Err(Error::Dimension(format!(
                "map component uses a variable beyond x{source_dim}"
            )));
        }
        Ok(SmoothMap { source_dim, components })
    }

    pub fn identity(dim: usize) -> Self {
        SmoothMap {
            source_dim: dim,
            components: (0..dim).map(Expr::Var).collect(),
        }
    }

    pub fn constant(source_dim: usize, point: &[f64]) -> Self {
        SmoothMap {
            source_dim,
            components: point.iter().map(|&v| Expr::Num(v)).collect(),
        }
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .components
            .iter()
            .map(|e| e.eval(p))
            .collect::<Result<Vec<_>, _>>()?)
    }

    /// Derivative along `v` at `p`, i.e. `J(p) v`.
    pub fn push_forward(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.components
            .iter()
            .map(|e| {
                let g = e.gradient(p)?;
                Ok(g.iter().zip(v).map(|(a, b)| a * b).sum())
            })
            .collect()
    }

    /// Jacobian rows, one per component.
    pub fn jacobian(&self, p: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .components
            .iter()
            .map(|e| e.gradient(p))
            .collect::<Result<Vec<_>, _>>()?)
    }

    /// `self` after `inner`.
    pub fn compose(&self, inner: &SmoothMap) -> Result<SmoothMap> {
        if inner.target_dim() != self.source_dim {
            return Err(Error::Dimension("composing maps with mismatched dimensions".into()));
        }
        let subst = |v: usize| inner.components[v].clone();
        Ok(SmoothMap {
            source_dim: inner.source_dim,
            components: self.components.iter().map(|e| e.substitute(&subst)).collect(),
        })
    }

    /// Sample the source box and fail if an image point leaves `target`.
    pub fn check_image(&self, source: &AxisBox, target: &AxisBox) -> Result<()> {
        let per_axis = match source.dim() {
            1 => 129,
            2 => 17,
            3 => 7,
            _ => 3,
        };
        for p in source.lattice(per_axis) {
            let q = self.eval(&p)?;
            if !target.contains(&q) {
                return Err(Error::OutOfBox {
                    what: format!("image of {p:?}"),
                    point: q,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::logic::{eval_term, Signature};

    fn plane_bundle() -> StructureBundle {
        let sig = Signature::unary_relation("R");
        let interp = Interpretation::parse(&sig, 2, 1, &[("R", "y1^2")], &[], &[]).unwrap();
        StructureBundle::new(
            AxisBox::cube(2, -1.0, 1.0).unwrap(),
            AxisBox::cube(1, -5.0, 5.0).unwrap(),
            sig,
            interp,
        )
        .unwrap()
    }

    fn const_bundle() -> StructureBundle {
        let sig = Signature::new(vec![], vec![("f".into(), 1)], vec!["c".into()]).unwrap();
        let interp = Interpretation::parse(&sig, 1, 1, &[], &[("f", vec!["2 * y11"])], &[("c", vec!["x1"])]).unwrap();
        StructureBundle::new(
            AxisBox::cube(1, -3.0, 3.0).unwrap(),
            AxisBox::cube(1, -10.0, 10.0).unwrap(),
            sig,
            interp,
        )
        .unwrap()
    }

    fn section(src: &[&str], vars: &[&str], domain: AxisBox) -> Section {
        Section::new(domain, src.iter().map(|s| parse_expr(s, vars).unwrap()).collect()).unwrap()
    }

    #[test]
    fn box_validation() {
        assert!(AxisBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(AxisBox::new(vec![], vec![]).is_err());
        let b = AxisBox::cube(2, -1.0, 1.0).unwrap();
        assert!(b.contains(&[1.0, -1.0]));
        assert!(!b.contains(&[1.1, 0.0]));
    }

    #[test]
    fn grid_is_anchored_at_multiples_of_the_step() {
        let g = AxisBox::cube(2, -0.1, 0.1).unwrap().grid(0.05);
        assert_eq!(g.len(), 25);
        assert!(g.iter().any(|p| p[0] + p[1] == 0.0 && p[0] != 0.0));
    }

    #[test]
    fn fiber_structure_pins_the_base() {
        let sb = plane_bundle();
        let fs = sb.fiber_structure(&[0.0, 0.0]).unwrap();
        assert!(!fs.relation_holds(0, &[&[0.0]]).unwrap());
        assert!(fs.relation_holds(0, &[&[0.5]]).unwrap());
        assert!(sb.fiber_structure(&[2.0, 0.0]).is_err());

        let cb = const_bundle();
        assert_eq!(cb.fiber_structure(&[2.0]).unwrap().constant(0).unwrap(), vec![2.0]);
    }

    #[test]
    fn direct_sum_and_packing() {
        let sb = plane_bundle();
        assert_eq!(sb.direct_sum(2).unwrap().fiber_dim, 2);
        assert_eq!(sb.direct_sum(1).unwrap(), *sb.bundle());
        assert!(sb.direct_sum(0).is_err());
        for a in [-1.0, 0.0, 0.5] {
            for b in [-2.0, 3.0] {
                let tuple = vec![vec![a], vec![b]];
                assert_eq!(unpack(&pack(&tuple), 2), tuple);
            }
        }
    }

    #[test]
    fn pullback_along_antidiagonal() {
        let sb = plane_bundle();
        let sigma = SmoothMap::new(
            1,
            vec![parse_expr("t", &["t"]).unwrap(), parse_expr("-t", &["t"]).unwrap()],
        )
        .unwrap();
        let src = AxisBox::cube(1, -1.0, 1.0).unwrap();
        let pb = sb.pullback(&sigma, &src).unwrap();
        assert_eq!(pb.base_dim(), 1);
        for t in [-0.7, 0.0, 0.3] {
            let fs = pb.fiber_structure(&[t]).unwrap();
            assert!(!fs.relation_holds(0, &[&[0.0]]).unwrap());
            assert!(fs.relation_holds(0, &[&[-0.2]]).unwrap());
        }
        let escape = SmoothMap::new(1, vec![parse_expr("2*t", &["t"]).unwrap(), Expr::Num(0.0)]).unwrap();
        assert!(matches!(sb.pullback(&escape, &src), Err(Error::OutOfBox { .. })));
    }

    #[test]
    fn pullback_along_a_constant_map_freezes_the_fiber() {
        let sig = Signature::unary_relation("R");
        let interp = Interpretation::parse(&sig, 2, 1, &[("R", "y1 - x1 * x2 + sin(x1)")], &[], &[]).unwrap();
        let sb = StructureBundle::new(
            AxisBox::cube(2, -1.0, 1.0).unwrap(),
            AxisBox::cube(1, -5.0, 5.0).unwrap(),
            sig,
            interp,
        )
        .unwrap();
        let m0 = [0.4, -0.3];
        let pb = sb
            .pullback(&SmoothMap::constant(1, &m0), &AxisBox::cube(1, -1.0, 1.0).unwrap())
            .unwrap();
        let direct = sb.fiber_structure(&m0).unwrap();
        for t in [-1.0, 0.0, 0.5] {
            let fs = pb.fiber_structure(&[t]).unwrap();
            for i in -10..=10 {
                let y = [i as f64 * 0.1];
                assert_eq!(fs.guard_value(0, &[&y]).unwrap(), direct.guard_value(0, &[&y]).unwrap());
            }
        }
    }

    #[test]
    fn identity_pullback_keeps_tables() {
        let sb = plane_bundle();
        let pb = sb.pullback(&SmoothMap::identity(2), sb.base()).unwrap();
        assert_eq!(pb.interpretation(), sb.interpretation());
    }

    #[test]
    fn term_sections() {
        let cb = const_bundle();
        let dom = cb.base().clone();
        let s = section(&["x1"], &["x1"], dom.clone());
        assert_eq!(cb.term_section(&Term::Var(0), std::slice::from_ref(&s)).unwrap(), s);

        let fs_ = cb
            .term_section(&Term::App(0, vec![Term::Var(0)]), std::slice::from_ref(&s))
            .unwrap();
        for i in 0..50 {
            let x = -3.0 + 6.0 * i as f64 / 49.0;
            assert_eq!(fs_.eval(&[x]).unwrap(), vec![2.0 * x]);
            let direct = eval_term(
                &Term::App(0, vec![Term::Var(0)]),
                &cb.fiber_structure(&[x]).unwrap(),
                &[s.eval(&[x]).unwrap()],
            )
            .unwrap();
            assert_eq!(fs_.eval(&[x]).unwrap(), direct);
        }
        let c = cb.term_section(&Term::Const(0), &[]).unwrap();
        assert_eq!(c.eval(&[1.5]).unwrap(), vec![1.5]);
    }

    #[test]
    fn sections_evaluate() {
        let dom = AxisBox::cube(1, -2.0, 2.0).unwrap();
        let s1 = section(&["x1"], &["x1"], dom.clone());
        let s2 = section(&["-x1"], &["x1"], dom.clone());
        assert_eq!(s1.eval(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(s2.eval(&[1.0]).unwrap(), vec![-1.0]);
        assert_eq!(Section::constant(dom.clone(), &[4.0]).eval(&[-1.3]).unwrap(), vec![4.0]);
        assert!(s1.eval(&[3.0]).is_err());
    }

    #[test]
    fn hermite_curve_is_exact_at_nodes_and_cubic_between() {
        // y = t^3 has exact cubic Hermite interpolation
        let nodes: Vec<f64> = (0..=4).map(|i| -1.0 + 0.5 * i as f64).collect();
        let values = nodes.iter().map(|t| vec![t * t * t]).collect();
        let slopes = nodes.iter().map(|t| vec![3.0 * t * t]).collect();
        let c = SampledCurve::new(nodes, values, slopes).unwrap();
        for t in [-0.9, -0.25, 0.0, 0.3, 0.77] {
            assert!((c.eval(t)[0] - t * t * t).abs() < 1e-14);
        }
    }

    #[test]
    fn composition_matches_nested_pullbacks() {
        let sig = Signature::unary_relation("R");
        let interp = Interpretation::parse(&sig, 2, 1, &[("R", "y1 + x1^2 - cos(x2)")], &[], &[]).unwrap();
        let sb = StructureBundle::new(
            AxisBox::cube(2, -2.0, 2.0).unwrap(),
            AxisBox::cube(1, -5.0, 5.0).unwrap(),
            sig,
            interp,
        )
        .unwrap();
        let h2 = SmoothMap::new(
            2,
            vec![
                parse_expr("x1 * x2", &["x1", "x2"]).unwrap(),
                parse_expr("sin(x1)", &["x1", "x2"]).unwrap(),
            ],
        )
        .unwrap();
        let h1 = SmoothMap::new(
            1,
            vec![parse_expr("t", &["t"]).unwrap(), parse_expr("t^2 - 1", &["t"]).unwrap()],
        )
        .unwrap();
        let unit = AxisBox::cube(1, -1.0, 1.0).unwrap();
        let mid = AxisBox::cube(2, -1.0, 1.0).unwrap();
        let nested = sb.pullback(&h2, &mid).unwrap().pullback(&h1, &unit).unwrap();
        let direct = sb.pullback(&h2.compose(&h1).unwrap(), &unit).unwrap();
        for i in 0..100 {
            let t = -1.0 + 2.0 * i as f64 / 99.0;
            let y = [0.1 * (i % 7) as f64];
            let a = nested.fiber_structure(&[t]).unwrap().guard_value(0, &[&y]).unwrap();
            let b = direct.fiber_structure(&[t]).unwrap().guard_value(0, &[&y]).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
