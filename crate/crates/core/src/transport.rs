//! Connections given by horizontal-lift fields and fixed-step RK4 parallel
//! transport.

use std::sync::Arc;

use crate::bundle::{AxisBox, SampledCurve, Section, SmoothMap};
use crate::error::{Error, Result};
use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq)]
pub enum LiftField {
    /// `k x n` matrix of expressions over `x1..xn, y1..yk`.
    Table(Vec<Vec<Expr>>),
    /// `L'(p, a) = L(h(p), a) J_h(p)`.
    Pullback { inner: Arc<Connection>, map: SmoothMap },
    /// Each block of `inner.fiber_dim()` coordinates is lifted by `inner`.
    DirectSum { inner: Arc<Connection>, copies: usize },
}

/// A connection on the trivial bundle over `base`: the horizontal lift of a
/// base velocity `v` at `(x, a)` is `(v, L(x, a) v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    base: AxisBox,
    fiber_box: AxisBox,
    field: LiftField,
}

impl Connection {
    pub fn new(base: AxisBox, fiber_box: AxisBox, table: Vec<Vec<Expr>>) -> Result<Self> {
        let (n, k) = (base.dim(), fiber_box.dim());
        if table.len() != k || table.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension(format!("lift field must be {k} x {n}")));
        }
        if table.iter().flatten().any(|e| e.max_var().is_some_and(|v| v >= n + k)) {
            return Err(Error::Dimension("lift field uses an unknown variable".into()));
        }
        Ok(Connection {
            base,
            fiber_box,
            field: LiftField::Table(table),
        })
    }

    pub fn flat(base: AxisBox, fiber_box: AxisBox) -> Self {
        let table = vec![vec![Expr::Num(0.0); base.dim()]; fiber_box.dim()];
        Connection {
            base,
            fiber_box,
            field: LiftField::Table(table),
        }
    }

    pub fn base(&self) -> &AxisBox {
        &self.base
    }

    pub fn fiber_box(&self) -> &AxisBox {
        &self.fiber_box
    }

    pub fn base_dim(&self) -> usize {
        self.base.dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_box.dim()
    }

    pub fn field(&self) -> &LiftField {
        &self.field
    }

    /// `L(x, y) v`.
    pub fn lift(&self, x: &[f64], y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match &self.field {
            LiftField::Table(rows) => {
                let vars: Vec<f64> = x.iter().chain(y).copied().collect();
                rows.iter()
                    .map(|row| {
                        let mut acc = 0.0;
                        for (e, vi) in row.iter().zip(v) {
                            if *vi != 0.0 {
                                acc += e.eval(&vars)? * vi;
                            }
                        }
                        Ok(acc)
                    })
                    .collect()
            }
            LiftField::Pullback { inner, map } => {
                let hx = map.eval(x)?;
                let jv = map.push_forward(x, v)?;
                inner.lift(&hx, y, &jv)
            }
            LiftField::DirectSum { inner, .. } => {
                let k = inner.fiber_dim();
                let mut out = Vec::with_capacity(y.len());
                for block in y.chunks(k) {
                    out.extend(inner.lift(x, block, v)?);
                }
                Ok(out)
            }
        }
    }

    /// The lift matrix at `(x, y)`, one row per fiber coordinate.
    pub fn matrix(&self, x: &[f64], y: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.base_dim();
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            cols.push(self.lift(x, y, &e)?);
        }
        Ok((0..self.fiber_dim())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect())
    }

    /// The vertical projector `(v_b, v_f) -> (0, v_f - L v_b)`.
    pub fn projector(&self, x: &[f64], y: &[f64], vb: &[f64], vf: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let l = self.lift(x, y, vb)?;
        Ok((vec![0.0; vb.len()], vf.iter().zip(&l).map(|(a, b)| a - b).collect()))
    }
}

pub fn pullback_connection(c: &Connection, h: &SmoothMap, source: &AxisBox) -> Result<Connection> {
    if h.source_dim() != source.dim() || h.target_dim() != c.base_dim() {
        return Err(Error::Dimension("pullback map does not fit the connection".into()));
    }
    h.check_image(source, c.base())?;
    Ok(Connection {
        base: source.clone(),
        fiber_box: c.fiber_box.clone(),
        field: LiftField::Pullback {
            inner: Arc::new(c.clone()),
            map: h.clone(),
        },
    })
}

pub fn direct_sum_connection(c: &Connection, copies: usize) -> Result<Connection> {
    if copies == 0 {
        return Err(Error::Dimension("direct sum of zero copies".into()));
    }
    if copies == 1 {
        return Ok(c.clone());
    }
    let mut fiber_box = c.fiber_box.clone();
    for _ in 1..copies {
        fiber_box = fiber_box.product(&c.fiber_box);
    }
    Ok(Connection {
        base: c.base.clone(),
        fiber_box,
        field: LiftField::DirectSum {
            inner: Arc::new(c.clone()),
            copies,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportResult {
    pub samples: Vec<(f64, Vec<f64>)>,
    /// Signed step actually used.
    pub step: f64,
    pub terminal: Vec<f64>,
    /// `dy/dt` at each sample.
    pub velocities: Vec<Vec<f64>>,
}

fn velocity(c: &Connection, path: &SmoothMap, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    let x = path.eval(&[t])?;
    let v = path.push_forward(&[t], &[1.0])?;
    c.lift(&x, y, &v)
}

fn check_node(c: &Connection, path: &SmoothMap, t: f64, y: &[f64]) -> Result<()> {
    let x = path.eval(&[t])?;
    if !c.base.contains(&x) {
        return Err(Error::BaseEscape { t, point: x });
    }
    if !c.fiber_box.contains(y) {
        return Err(Error::FiberEscape { t, point: y.to_vec() });
    }
    Ok(())
}

/// Solve `y' = L(path(t), y) path'(t)` from `a0` at `t_span.0` to `t_span.1`
/// with classical RK4 and `ceil(|t1 - t0| / h)` equal steps.
pub fn parallel_transport(
    c: &Connection,
    path: &SmoothMap,
    a0: &[f64],
    t_span: (f64, f64),
    h: f64,
) -> Result<TransportResult> {
    if path.source_dim() != 1 || path.target_dim() != c.base_dim() {
        return Err(Error::Dimension(
            "transport needs a path into the connection's base".into(),
        ));
    }
    if a0.len() != c.fiber_dim() {
        return Err(Error::Dimension(format!(
            "initial point has {} coordinate(s), fiber has {}",
            a0.len(),
            c.fiber_dim()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Policy(format!("step must be positive, got {h}")));
    }
    let (t0, t1) = t_span;
    let steps = ((t1 - t0).abs() / h).ceil().max(1.0) as usize;
    let dt = (t1 - t0) / steps as f64;
    let mut y = a0.to_vec();
    check_node(c, path, t0, &y)?;
    let mut k1 = velocity(c, path, t0, &y)?;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut velocities = Vec::with_capacity(steps + 1);
    samples.push((t0, y.clone()));
    velocities.push(k1.clone());
    let axpy = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    // Kahan compensation for the running state
    let mut carry = vec![0.0; y.len()];
    for i in 0..steps {
        let t = t0 + dt * i as f64;
        let k2 = velocity(c, path, t + 0.5 * dt, &axpy(&y, &k1, 0.5 * dt))?;
        let k3 = velocity(c, path, t + 0.5 * dt, &axpy(&y, &k2, 0.5 * dt))?;
        let k4 = velocity(c, path, t + dt, &axpy(&y, &k3, dt))?;
        for (j, yj) in y.iter_mut().enumerate() {
            let inc = dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) - carry[j];
            let next = *yj + inc;
            carry[j] = (next - *yj) - inc;
            *yj = next;
        }
        let t_next = if i + 1 == steps { t1 } else { t0 + dt * (i + 1) as f64 };
        check_node(c, path, t_next, &y)?;
        k1 = velocity(c, path, t_next, &y)?;
        samples.push((t_next, y.clone()));
        velocities.push(k1.clone());
    }
    Ok(TransportResult {
        terminal: y,
        samples,
        step: dt,
        velocities,
    })
}

/// Lift through `a0` at `t = 0` over `[lo, hi]` (with `lo <= 0 <= hi`) as an
/// interpolated curve. Every entry of `marks` inside `(0, hi)` becomes a node.
pub fn lift_curve(
    c: &Connection,
    path: &SmoothMap,
    a0: &[f64],
    lo: f64,
    hi: f64,
    h: f64,
    marks: &[f64],
) -> Result<SampledCurve> {
    if !(lo <= 0.0 && 0.0 <= hi) {
        return Err(Error::Invalid(format!("lift window [{lo}, {hi}] must contain 0")));
    }
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    let mut slopes = Vec::new();
    if lo < 0.0 {
        let back = parallel_transport(c, path, a0, (0.0, lo), h)?;
        for ((t, y), v) in back.samples.into_iter().zip(back.velocities).skip(1).rev() {
            nodes.push(t);
            values.push(y);
            slopes.push(v);
        }
    }
    let mut stops: Vec<f64> = marks.iter().copied().filter(|&m| m > 0.0 && m < hi).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    stops.push(hi);
    let mut start = 0.0;
    let mut y = a0.to_vec();
    let mut first = true;
    for stop in stops {
        if stop <= start && !first {
            continue;
        }
        let leg = parallel_transport(c, path, &y, (start, stop), h)?;
        let skip = if first { 0 } else { 1 };
        for ((t, yy), v) in leg.samples.into_iter().zip(leg.velocities).skip(skip) {
            if nodes.last().is_some_and(|&last| t <= last) {
                continue;
            }
            nodes.push(t);
            values.push(yy);
            slopes.push(v);
        }
        y = leg.terminal;
        start = stop;
        first = false;
    }
    SampledCurve::new(nodes, values, slopes)
}

/// The lift through `a0` at `t = 0` as a section over `[lo, hi]`.
pub fn lift_section(c: &Connection, path: &SmoothMap, a0: &[f64], lo: f64, hi: f64, h: f64) -> Result<Section> {
    let curve = lift_curve(c, path, a0, lo, hi, h, &[])?;
    let domain = if lo < hi {
        AxisBox::new(vec![lo], vec![hi])?
    } else {
        AxisBox::new(vec![lo - h], vec![hi + h])?
    };
    Section::sampled(domain, curve)
}

/// Largest max-norm distance between the lifts from `a` and from `a + delta`
/// (every coordinate shifted).
pub fn lift_uniqueness_gap(
    c: &Connection,
    path: &SmoothMap,
    a: &[f64],
    delta: f64,
    t_span: (f64, f64),
    h: f64,
) -> Result<f64> {
    let shifted: Vec<f64> = a.iter().map(|v| v + delta).collect();
    let one = parallel_transport(c, path, a, t_span, h)?;
    let two = parallel_transport(c, path, &shifted, t_span, h)?;
    Ok(one
        .samples
        .iter()
        .zip(&two.samples)
        .flat_map(|((_, p), (_, q))| p.iter().zip(q).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max))
}

/// Holonomy defect of the square loop `m -> m + r e_i -> m + r e_i + r e_j ->
/// m + r e_j -> m`, divided by `r^2`.
pub fn curvature_estimate(
    c: &Connection,
    m: &[f64],
    a: &[f64],
    i: usize,
    j: usize,
    r: f64,
    h: f64,
) -> Result<Vec<f64>> {
    let n = c.base_dim();
    if i >= n || j >= n || i == j {
        return Err(Error::Dimension(format!("axes {i} and {j} for a {n}-dimensional base")));
    }
    if m.len() != n {
        return Err(Error::Dimension("base point has the wrong dimension".into()));
    }
    let mut corners = vec![m.to_vec(); 5];
    corners[1][i] += r;
    corners[2][i] += r;
    corners[2][j] += r;
    corners[3][j] += r;
    let step = h.min(r / 16.0);
    let mut y = a.to_vec();
    for leg in corners.windows(2) {
        let (p, q) = (&leg[0], &leg[1]);
        let comps = p
            .iter()
            .zip(q)
            .map(|(&pk, &qk)| {
                if pk == qk {
                    Expr::Num(pk)
                } else {
                    Expr::add(Expr::Num(pk), Expr::mul(Expr::Num((qk - pk) / r), Expr::Var(0)))
                }
            })
            .collect();
        let path = SmoothMap::new(1, comps)?;
        y = parallel_transport(c, &path, &y, (0.0, r), step)?.terminal;
    }
    Ok(y.iter().zip(a).map(|(end, start)| (end - start) / (r * r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn line(a: &str) -> SmoothMap {
        SmoothMap::new(1, vec![parse_expr(a, &["t"]).unwrap()]).unwrap()
    }

    fn conn1(l: &str) -> Connection {
        Connection::new(
            AxisBox::cube(1, -3.0, 3.0).unwrap(),
            AxisBox::cube(1, -50.0, 50.0).unwrap(),
            vec![vec![parse_expr(l, &["x1", "y1"]).unwrap()]],
        )
        .unwrap()
    }

    #[test]
    fn flat_transport_is_constant() {
        let c = Connection::flat(
            AxisBox::cube(2, -1.0, 1.0).unwrap(),
            AxisBox::cube(2, -5.0, 5.0).unwrap(),
        );
        let path = SmoothMap::new(
            1,
            vec![
                parse_expr("t^2", &["t"]).unwrap(),
                parse_expr("sin(t)", &["t"]).unwrap(),
            ],
        )
        .unwrap();
        let r = parallel_transport(&c, &path, &[0.3, -1.2], (0.0, 0.9), 1e-2).unwrap();
        assert!(r.samples.iter().all(|(_, y)| y == &vec![0.3, -1.2]));
    }

    #[test]
    fn constant_lift_is_linear() {
        let r = parallel_transport(&conn1("1"), &line("t"), &[0.0], (0.0, 1.0), 1e-3).unwrap();
        assert!((r.terminal[0] - 1.0).abs() < 1e-8);
        assert_eq!(r.samples[0], (0.0, vec![0.0]));
    }

    #[test]
    fn exponential_lift() {
        let r = parallel_transport(&conn1("y1"), &line("t"), &[1.0], (0.0, 1.0), 1e-3).unwrap();
        assert!((r.terminal[0] - 1f64.exp()).abs() < 1e-6);
    }

    #[test]
    fn escapes_are_errors() {
        let c = conn1("y1");
        assert!(matches!(
            parallel_transport(&c, &line("4*t"), &[1.0], (0.0, 1.0), 1e-2),
            Err(Error::BaseEscape { .. })
        ));
        let c = conn1("y1^2");
        assert!(matches!(
            parallel_transport(&c, &line("t"), &[1.0], (0.0, 1.0), 1e-3),
            Err(Error::FiberEscape { .. })
        ));
    }

    #[test]
    fn pullback_connection_applies_the_chain_rule() {
        let c = conn1("1");
        let h = line("2*t");
        let src = AxisBox::cube(1, -1.0, 1.0).unwrap();
        let pc = pullback_connection(&c, &h, &src).unwrap();
        assert_eq!(pc.matrix(&[0.3], &[0.0]).unwrap(), vec![vec![2.0]]);
        let r = parallel_transport(&pc, &line("t"), &[0.0], (0.0, 1.0), 1e-3).unwrap();
        assert!((r.terminal[0] - 2.0).abs() < 1e-10);

        let id = pullback_connection(&c, &SmoothMap::identity(1), c.base()).unwrap();
        assert_eq!(id.matrix(&[0.5], &[1.0]).unwrap(), c.matrix(&[0.5], &[1.0]).unwrap());
    }

    #[test]
    fn pullback_of_flat_is_flat() {
        let c = Connection::flat(
            AxisBox::cube(2, -1.0, 1.0).unwrap(),
            AxisBox::cube(1, -5.0, 5.0).unwrap(),
        );
        let sigma = SmoothMap::new(
            1,
            vec![parse_expr("t", &["t"]).unwrap(), parse_expr("-t", &["t"]).unwrap()],
        )
        .unwrap();
        let pc = pullback_connection(&c, &sigma, &AxisBox::cube(1, -1.0, 1.0).unwrap()).unwrap();
        assert_eq!(pc.matrix(&[0.4], &[2.0]).unwrap(), vec![vec![0.0]]);
    }

    #[test]
    fn direct_sum_transports_blockwise() {
        let c = conn1("y1 * cos(x1)");
        let sum = direct_sum_connection(&c, 2).unwrap();
        assert_eq!(direct_sum_connection(&c, 1).unwrap(), c);
        let path = line("t - t^2");
        let joint = parallel_transport(&sum, &path, &[0.5, -2.0], (0.0, 1.0), 1e-3).unwrap();
        let a = parallel_transport(&c, &path, &[0.5], (0.0, 1.0), 1e-3).unwrap();
        let b = parallel_transport(&c, &path, &[-2.0], (0.0, 1.0), 1e-3).unwrap();
        assert!((joint.terminal[0] - a.terminal[0]).abs() <= 1e-12);
        assert!((joint.terminal[1] - b.terminal[0]).abs() <= 1e-12);

        let flat = Connection::flat(
            AxisBox::cube(1, -1.0, 1.0).unwrap(),
            AxisBox::cube(2, -1.0, 1.0).unwrap(),
        );
        let flat3 = direct_sum_connection(&flat, 3).unwrap();
        assert_eq!(flat3.fiber_dim(), 6);
        assert!(flat3
            .matrix(&[0.0], &[0.0; 6])
            .unwrap()
            .iter()
            .flatten()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn uniqueness_gaps() {
        let flat = conn1("0");
        assert_eq!(
            lift_uniqueness_gap(&flat, &line("t"), &[0.0], 0.0, (0.0, 1.0), 1e-3).unwrap(),
            0.0
        );
        assert_eq!(
            lift_uniqueness_gap(&flat, &line("t"), &[0.0], 0.1, (0.0, 1.0), 1e-3).unwrap(),
            0.1
        );
        let exp = conn1("y1");
        let gap = lift_uniqueness_gap(&exp, &line("t"), &[1.0], 0.1, (0.0, 1.0), 1e-3).unwrap();
        assert!((gap - 0.1 * 1f64.exp()).abs() < 1e-6);
    }

    #[test]
    fn lift_curve_has_nodes_at_zero_and_marks() {
        let c = conn1("y1");
        let curve = lift_curve(&c, &line("t"), &[1.0], -0.0105, 0.0333, 1e-3, &[0.02]).unwrap();
        assert!(curve.nodes().contains(&0.0));
        assert!(curve.nodes().contains(&0.02));
        assert_eq!(curve.eval(0.0), vec![1.0]);
        for t in [-0.01, 0.0071, 0.03] {
            assert!((curve.eval(t)[0] - t.exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn projector_is_idempotent_onto_vertical() {
        let c = conn1("y1 + x1");
        let (x, y) = ([0.2], [0.7]);
        let (b1, f1) = c.projector(&x, &y, &[1.5], &[0.3]).unwrap();
        let (b2, f2) = c.projector(&x, &y, &b1, &f1).unwrap();
        assert_eq!(b1, vec![0.0]);
        assert_eq!((b1, f1), (b2, f2));
    }
}
