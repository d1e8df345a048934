//! The example suite: every worked example and property batch, run against the
//! shipped models and reported as one row each.

use std::time::Instant;

use serde::Serialize;

use crate::bundle::{AxisBox, SmoothMap};
use crate::error::{Error, Result};
use crate::forcing::{force, Decision, NeighborhoodPolicy};
use crate::logic::{parse_formula, tarski_eval_with_tol, Formula};
use crate::model::Model;
use crate::parallel::{
    horizontal_extension, parallel_forced, positive_lemma_trials, prop46_check, pullback_theorem_trials, FamilySpec,
    PathFamily, Prop46Options,
};
use crate::transport::{curvature_estimate, lift_uniqueness_gap, parallel_transport, Connection};

/// Shipped model files, by file name.
pub const SHIPPED_MODELS: &[(&str, &str)] = &[
    (
        "paper_sec2_equality.model",
        include_str!("../models/paper_sec2_equality.model"),
    ),
    (
        "paper_sec3_pullback.model",
        include_str!("../models/paper_sec3_pullback.model"),
    ),
    (
        "paper_sec3_parallel.model",
        include_str!("../models/paper_sec3_parallel.model"),
    ),
    ("paper_sec4_ball.model", include_str!("../models/paper_sec4_ball.model")),
    ("paper_sec4_axis.model", include_str!("../models/paper_sec4_axis.model")),
    ("exponential.model", include_str!("../models/exponential.model")),
    ("curvature.model", include_str!("../models/curvature.model")),
];

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub seed: u64,
    pub trials: usize,
    /// Keep only rows whose location or name starts with this.
    pub only: Option<String>,
    pub policy: NeighborhoodPolicy,
    pub family: FamilySpec,
    /// Model sources by file name; defaults to [`SHIPPED_MODELS`].
    pub models: Vec<(String, String)>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 7,
            trials: 200,
            only: None,
            policy: NeighborhoodPolicy::default(),
            family: FamilySpec::default(),
            models: SHIPPED_MODELS
                .iter()
                .map(|(n, s)| (n.to_string(), s.to_string()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub location: String,
    pub name: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub trials: usize,
    pub rows: Vec<SuiteRow>,
    /// Wall-clock milliseconds per row, same order as `rows`.
    pub timings_ms: Vec<u128>,
}

#[derive(Serialize)]
struct Verdicts<'a> {
    seed: u64,
    trials: usize,
    rows: &'a [SuiteRow],
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Everything except timings, as JSON; stable across runs.
    pub fn verdict_json(&self) -> String {
        serde_json::to_string_pretty(&Verdicts {
            seed: self.seed,
            trials: self.trials,
            rows: &self.rows,
        })
        .expect("rows serialize")
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        for (r, ms) in self.rows.iter().zip(&self.timings_ms) {
            out.push_str(&format!(
                "{} {:<9} {:<26} expected {} | observed {} ({ms} ms)\n",
                if r.pass { "PASS" } else { "FAIL" },
                r.location,
                r.name,
                r.expected,
                r.observed
            ));
        }
        let passed = self.rows.iter().filter(|r| r.pass).count();
        out.push_str(&format!("{passed}/{} rows passed\n", self.rows.len()));
        out
    }
}

type Check = fn(&[Model], &SuiteOptions) -> Result<(String, bool)>;

struct RowSpec {
    location: &'static str,
    name: &'static str,
    models: &'static [&'static str],
    expected: &'static str,
    check: Check,
}

const ROWS: &[RowSpec] = &[
    RowSpec {
        location: "sec2",
        name: "equality-instability",
        models: &["paper_sec2_equality.model"],
        expected: "pointwise true, NotForced",
        check: equality_instability,
    },
    RowSpec {
        location: "sec2",
        name: "positive-lemma",
        models: &[],
        expected: "all trials pass",
        check: positive_lemma,
    },
    RowSpec {
        location: "sec3",
        name: "pullback-example",
        models: &["paper_sec3_pullback.model"],
        expected: "Forced, pullback NotForced",
        check: pullback_example,
    },
    RowSpec {
        location: "sec3",
        name: "parallel-counterexample",
        models: &["paper_sec3_parallel.model"],
        expected: "Forced, parallel NotForced",
        check: parallel_counterexample,
    },
    RowSpec {
        location: "sec3",
        name: "pullback-theorem",
        models: &[],
        expected: "all trials pass",
        check: pullback_theorem,
    },
    RowSpec {
        location: "sec3",
        name: "lift-uniqueness",
        models: &[
            "paper_sec3_parallel.model",
            "paper_sec4_ball.model",
            "paper_sec4_axis.model",
            "exponential.model",
            "curvature.model",
        ],
        expected: "gap <= 1e-9",
        check: lift_uniqueness,
    },
    RowSpec {
        location: "sec4",
        name: "ball-flat",
        models: &["paper_sec4_ball.model"],
        expected: "(-1, 1) within 0.02",
        check: ball_flat,
    },
    RowSpec {
        location: "sec4",
        name: "ball-tilted",
        models: &["paper_sec4_ball.model"],
        expected: "(-0.7071, 0.7071) within 0.02",
        check: ball_tilted,
    },
    RowSpec {
        location: "sec4",
        name: "axis-negation",
        models: &["paper_sec4_axis.model"],
        expected: "exactly the first axis",
        check: axis_negation,
    },
    RowSpec {
        location: "sec4",
        name: "axis-relation",
        models: &["paper_sec4_axis.model"],
        expected: "empty",
        check: axis_relation,
    },
    RowSpec {
        location: "sec4",
        name: "equality-extensions",
        models: &["paper_sec4_ball.model"],
        expected: "diagonal and whole base, both connections",
        check: equality_extensions,
    },
    RowSpec {
        location: "appendix",
        name: "transport-exponential",
        models: &["exponential.model"],
        expected: "error <= 1e-6, halving gain >= 8",
        check: transport_exponential,
    },
    RowSpec {
        location: "appendix",
        name: "curvature",
        models: &["curvature.model"],
        expected: "flat <= 1e-10, bracket within 5%",
        check: curvature,
    },
];

/// Run every selected row. A model that fails to load fails only the rows
/// that use it.
pub fn run_suite(opts: &SuiteOptions) -> SuiteReport {
    let mut rows = Vec::new();
    let mut timings_ms = Vec::new();
    for spec in ROWS {
        if let Some(only) = &opts.only {
            if !spec.location.starts_with(only.as_str()) && !spec.name.starts_with(only.as_str()) {
                continue;
            }
        }
        let start = Instant::now();
        let (observed, pass) = match load(spec.models, opts) {
            Err(e) => (format!("load failure: {e}"), false),
            Ok(models) => match (spec.check)(&models, opts) {
                Ok(r) => r,
                Err(e) => (format!("error: {e}"), false),
            },
        };
        timings_ms.push(start.elapsed().as_millis());
        rows.push(SuiteRow {
            location: spec.location.to_string(),
            name: spec.name.to_string(),
            expected: spec.expected.to_string(),
            observed,
            pass,
        });
    }
    SuiteReport {
        seed: opts.seed,
        trials: opts.trials,
        rows,
        timings_ms,
    }
}

fn load(names: &[&str], opts: &SuiteOptions) -> Result<Vec<Model>> {
    names
        .iter()
        .map(|name| {
            let (_, src) = opts
                .models
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Invalid(format!("{name} is missing")))?;
            Model::parse(src).map_err(|e| Error::Invalid(format!("{name}: {e}")))
        })
        .collect()
}

fn formula(m: &Model, src: &str, free: &[&str]) -> Result<Formula> {
    let free: Vec<String> = free.iter().map(|s| s.to_string()).collect();
    Ok(parse_formula(src, m.bundle.signature(), &free)?)
}

fn equality_instability(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    let m = &models[0];
    let (s1, s2) = (m.section("s1")?.clone(), m.section("s2")?.clone());
    let phi = formula(m, "x = y", &["x", "y"])?;
    let fs = m.bundle.fiber_structure(&[0.0])?;
    let pointwise = tarski_eval_with_tol(
        &phi,
        &fs,
        &[s1.eval(&[0.0])?, s2.eval(&[0.0])?],
        &[],
        opts.policy.tol_eq,
    )?;
    let forced = force(&m.bundle, &[0.0], &phi, &[s1, s2], &opts.policy)?.decision;
    Ok((
        format!("pointwise {pointwise}, {forced:?}"),
        pointwise && forced == Decision::NotForced,
    ))
}

fn trial_row(summary: crate::parallel::TrialSummary) -> (String, bool) {
    let mut observed = format!("{}/{}", summary.passed, summary.trials);
    if let Some(f) = summary.failures.first() {
        observed.push_str(&format!("; first failure #{}: {}", f.index, f.detail));
    }
    (observed, summary.all_passed())
}

fn positive_lemma(_: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    Ok(trial_row(positive_lemma_trials(opts.trials, opts.seed, &opts.policy)?))
}

fn pullback_theorem(_: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    Ok(trial_row(pullback_theorem_trials(
        opts.trials,
        opts.seed,
        opts.family.random,
        &opts.policy,
    )?))
}

fn pullback_example(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    let m = &models[0];
    let s = m.section("s")?;
    let phi = formula(m, "!!R(s)", &["s"])?;
    let here = force(&m.bundle, &[0.0, 0.0], &phi, std::slice::from_ref(s), &opts.policy)?.decision;
    let sigma = m.map("sigma")?;
    let pb = m.bundle.pullback(&sigma.map, &sigma.source)?;
    let pulled = s.pullback(&sigma.map, &sigma.source)?;
    let there = force(&pb, &[0.0], &phi, &[pulled], &opts.policy)?.decision;
    Ok((
        format!("{here:?}, pullback {there:?}"),
        here == Decision::Forced && there == Decision::NotForced,
    ))
}

fn parallel_counterexample(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    let m = &models[0];
    let s = m.section("s")?;
    let phi = formula(m, "!R(x)", &["x"])?;
    let here = force(&m.bundle, &[0.0], &phi, std::slice::from_ref(s), &opts.policy)?.decision;
    let fam = PathFamily::generate(m.bundle.base(), &[0.0], &opts.family)?;
    let pv = parallel_forced(&m.bundle, m.connection("Phi")?, &[vec![0.0]], &phi, &fam, &opts.policy)?;
    let path = pv.counterexample.clone().unwrap_or_else(|| "none".into());
    Ok((
        format!("{here:?}, parallel {:?} along {path}", pv.decision),
        here == Decision::Forced && pv.decision == Decision::NotForced && pv.counterexample.is_some(),
    ))
}

fn lift_uniqueness(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for m in models {
        let base = m.bundle.base();
        let center = base.center();
        let start: Vec<f64> = m.bundle.fiber_box().center().iter().map(|v| v + 0.5).collect();
        for (_, c) in &m.connections {
            for axis in 0..base.dim() {
                let comps = (0..base.dim())
                    .map(|i| {
                        if i == axis {
                            crate::expr::Expr::add(crate::expr::Expr::Num(center[i]), crate::expr::Expr::Var(0))
                        } else {
                            crate::expr::Expr::Num(center[i])
                        }
                    })
                    .collect();
                let path = SmoothMap::new(1, comps)?;
                let gap = lift_uniqueness_gap(c, &path, &start, 0.0, (0.0, 0.5), opts.policy.step)?;
                worst = worst.max(gap);
                count += 1;
            }
        }
    }
    Ok((format!("max gap {worst:.3e} over {count} lifts"), worst <= 1e-9))
}

fn ball_row(models: &[Model], opts: &SuiteOptions, conn: &str, radius: f64) -> Result<(String, bool)> {
    let m = &models[0];
    let phi = formula(m, "R(x1)", &["x1"])?;
    let set = horizontal_extension(
        &m.bundle,
        m.connection(conn)?,
        &[0.0],
        &[vec![0.0]],
        &phi,
        m.bundle.base(),
        opts.policy.grid,
        &opts.family,
        &opts.policy,
    )?;
    match set.member_range(0) {
        None => Ok(("empty".into(), false)),
        Some((lo, hi)) => Ok((
            format!("[{lo:.4}, {hi:.4}], {} members", set.member_count()),
            (lo + radius).abs() <= 0.02 && (hi - radius).abs() <= 0.02,
        )),
    }
}

fn ball_flat(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    ball_row(models, opts, "Phi1", 1.0)
}

fn ball_tilted(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    ball_row(models, opts, "Phi2", std::f64::consts::FRAC_1_SQRT_2)
}

const AXIS_GRID: f64 = 0.05;

fn axis_set(models: &[Model], opts: &SuiteOptions, src: &str) -> Result<crate::parallel::ExtensionSet> {
    let m = &models[0];
    let phi = formula(m, src, &["x"])?;
    horizontal_extension(
        &m.bundle,
        m.connection("Phi")?,
        &[0.0, 0.0],
        &[vec![0.0]],
        &phi,
        m.bundle.base(),
        AXIS_GRID,
        &opts.family,
        &opts.policy,
    )
}

fn axis_negation(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    let set = axis_set(models, opts, "!R(x)")?;
    let on_axis = set.points.iter().filter(|p| p[1] == 0.0).count();
    let exact = set.points.iter().zip(&set.member).all(|(p, m)| *m == (p[1] == 0.0));
    Ok((
        format!("{} members, {on_axis} axis points, exact {exact}", set.member_count()),
        exact,
    ))
}

fn axis_relation(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    let set = axis_set(models, opts, "R(x)")?;
    let n = set.member_count();
    Ok((if n == 0 { "empty".into() } else { format!("{n} members") }, n == 0))
}

fn equality_extensions(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    let m = &models[0];
    let grid = m.fiber_grid.unwrap_or(0.25);
    let p46 = Prop46Options {
        fiber_region: AxisBox::cube(2, -1.0, 1.0)?,
        base_region: m.bundle.base().clone(),
        fiber_grid: grid,
        base_grid: grid,
        family: opts.family.clone(),
        policy: opts.policy.clone(),
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["Phi1", "Phi2"] {
        let rep = prop46_check(&m.bundle, m.connection(name)?, &[0.0], &[0.0], &p46)?;
        ok &= rep.holds;
        parts.push(format!(
            "{name}: {}/{} diagonal, {}/{} base{}",
            rep.vertical_members,
            rep.diagonal_points,
            rep.horizontal_members,
            rep.base_points,
            rep.diagnostic.map(|d| format!(" ({d})")).unwrap_or_default()
        ));
    }
    Ok((parts.join("; "), ok))
}

fn transport_exponential(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    let m = &models[0];
    let c = m.connection("Exp")?;
    let line = m.map("line")?;
    let h = opts.policy.step;
    let err_at = |h: f64| -> Result<f64> {
        let r = parallel_transport(c, &line.map, &[1.0], (0.0, 1.0), h)?;
        Ok((r.terminal[0] - std::f64::consts::E).abs())
    };
    let (coarse, fine) = (err_at(h)?, err_at(h / 2.0)?);
    let gain = coarse / fine;
    Ok((
        format!("error {coarse:.2e} at h, {fine:.2e} at h/2, gain {gain:.1}"),
        coarse <= 1e-6 && gain >= 8.0,
    ))
}

/// Vertical part of `[X_i, X_j]` for `X_i = d/dx_i + L_i d/dy`, from
/// derivatives of the lift field.
fn bracket(c: &Connection, x: &[f64], y: &[f64], i: usize, j: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let k = y.len();
    let crate::transport::LiftField::Table(table) = c.field() else {
        return Err(Error::Invalid("bracket needs a tabulated lift field".into()));
    };
    let vals: Vec<f64> = x.iter().chain(y).copied().collect();
    let mut out = vec![0.0; k];
    for (a, row) in table.iter().enumerate() {
        let li = &row[i];
        let lj = &row[j];
        let mut v = lj.diff(&vals, i)? - li.diff(&vals, j)?;
        #[allow(clippy::needless_range_loop)]
        for b in 0..k {
            v +=
                table[b][i].eval(&vals)? * lj.diff(&vals, n + b)? - table[b][j].eval(&vals)? * li.diff(&vals, n + b)?;
        }
        out[a] = v;
    }
    Ok(out)
}

fn curvature(models: &[Model], opts: &SuiteOptions) -> Result<(String, bool)> {
    let m = &models[0];
    let (x, y) = ([0.1, -0.2], [0.5]);
    let r = 1e-3;
    let flat = curvature_estimate(m.connection("Flat")?, &x, &y, 0, 1, r, opts.policy.step)?[0];
    let twist = m.connection("Twist")?;
    let est = curvature_estimate(twist, &x, &y, 0, 1, r, opts.policy.step)?[0];
    let exact = bracket(twist, &x, &y, 0, 1)?[0];
    let rel = (est - exact).abs() / exact.abs();
    Ok((
        format!("flat {flat:.1e}, estimate {est:.5} vs bracket {exact:.5}"),
        flat.abs() <= 1e-10 && rel <= 0.05,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_models_load() {
        for (name, src) in SHIPPED_MODELS {
            Model::parse(src).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn only_filters_by_location() {
        let opts = SuiteOptions {
            only: Some("appendix".into()),
            ..SuiteOptions::default()
        };
        let rep = run_suite(&opts);
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.all_passed(), "{}", rep.table());
    }

    #[test]
    fn a_broken_model_fails_its_rows_only() {
        let mut opts = SuiteOptions {
            only: Some("sec3".into()),
            trials: 2,
            ..SuiteOptions::default()
        };
        for (name, src) in &mut opts.models {
            if name == "paper_sec3_pullback.model" {
                *src = src.replace("[relation R]", "[relation R");
            }
        }
        let rep = run_suite(&opts);
        for row in &rep.rows {
            if row.name == "pullback-example" {
                assert!(!row.pass);
                assert!(row.observed.starts_with("load failure"), "{}", row.observed);
            } else {
                assert!(row.pass, "{}: {}", row.name, row.observed);
            }
        }
    }

    #[test]
    fn bracket_of_the_twisted_field_is_the_fiber_coordinate() {
        let m = Model::parse(SHIPPED_MODELS[6].1).unwrap();
        let b = bracket(m.connection("Twist").unwrap(), &[0.3, 0.4], &[2.0], 0, 1).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-12);
        let b = bracket(m.connection("Shear").unwrap(), &[0.3, 0.4], &[2.0], 0, 1).unwrap();
        assert!(b[0].abs() < 1e-12);
    }
}
