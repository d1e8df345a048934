use super::*;
use crate::bundle::SmoothMap;
use crate::expr::parse_expr;
use crate::logic::{parse_formula, tarski_eval, Interpretation, Signature};

fn names(n: &[&str]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

fn exprs(src: &[&str], vars: &[&str]) -> Vec<crate::expr::Expr> {
    src.iter().map(|s| parse_expr(s, vars).unwrap()).collect()
}

/// Base R^2, fiber R, R(z) iff z != 0.
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

fn line_bundle(guard: &str) -> StructureBundle {
    let sig = Signature::unary_relation("R");
    let interp = Interpretation::parse(&sig, 1, 1, &[("R", guard)], &[], &[]).unwrap();
    StructureBundle::new(
        AxisBox::cube(1, -1.0, 1.0).unwrap(),
        AxisBox::cube(1, -5.0, 5.0).unwrap(),
        sig,
        interp,
    )
    .unwrap()
}

fn diagonal_section(sb: &StructureBundle) -> Section {
    Section::new(sb.base().clone(), exprs(&["x1 + x2"], &["x1", "x2"])).unwrap()
}

#[test]
fn equality_is_not_stable_at_a_crossing() {
    let sb = line_bundle("1");
    let s1 = Section::new(sb.base().clone(), exprs(&["x1"], &["x1"])).unwrap();
    let s2 = Section::new(sb.base().clone(), exprs(&["-x1"], &["x1"])).unwrap();
    let phi = parse_formula("x = y", sb.signature(), &names(&["x", "y"])).unwrap();
    let fs = sb.fiber_structure(&[0.0]).unwrap();
    let pointwise = tarski_eval(&phi, &fs, &[s1.eval(&[0.0]).unwrap(), s2.eval(&[0.0]).unwrap()], &[]).unwrap();
    assert!(pointwise);
    let v = force(&sb, &[0.0], &phi, &[s1, s2], &NeighborhoodPolicy::default()).unwrap();
    assert_eq!(v.decision, Decision::NotForced);
    assert_eq!(v.witness_eps, None);
}

#[test]
fn double_negation_forced_on_the_plane() {
    let sb = plane_bundle();
    let s = diagonal_section(&sb);
    let phi = parse_formula("!!R(s)", sb.signature(), &names(&["s"])).unwrap();
    let v = force(
        &sb,
        &[0.0, 0.0],
        &phi,
        std::slice::from_ref(&s),
        &NeighborhoodPolicy::default(),
    )
    .unwrap();
    assert_eq!(v.decision, Decision::Forced);
    assert_eq!(v.depth, 2);
    let plain = parse_formula("R(s)", sb.signature(), &names(&["s"])).unwrap();
    assert!(!is_forced(&sb, &[0.0, 0.0], &plain, &[s], &NeighborhoodPolicy::default()).unwrap());
}

#[test]
fn double_negation_lost_on_the_antidiagonal_pullback() {
    let sb = plane_bundle();
    let sigma = SmoothMap::new(1, exprs(&["t", "-t"], &["t"])).unwrap();
    let pb = sb.pullback(&sigma, &AxisBox::cube(1, -1.0, 1.0).unwrap()).unwrap();
    let s = Section::new(pb.base().clone(), exprs(&["0"], &["t"])).unwrap();
    let phi = parse_formula("!!R(s)", pb.signature(), &names(&["s"])).unwrap();
    let v = force(&pb, &[0.0], &phi, &[s], &NeighborhoodPolicy::default()).unwrap();
    assert_eq!(v.decision, Decision::NotForced);
}

#[test]
fn identity_forced_with_the_largest_radius() {
    let sb = plane_bundle();
    let s = diagonal_section(&sb);
    let phi = parse_formula("x = x", sb.signature(), &names(&["x"])).unwrap();
    let pol = NeighborhoodPolicy::default();
    let v = force(&sb, &[0.3, -0.2], &phi, &[s], &pol).unwrap();
    assert_eq!(v.decision, Decision::Forced);
    assert_eq!(v.witness_eps, Some(pol.eps0));
}

#[test]
fn depth_budget_is_a_hard_error() {
    let sb = plane_bundle();
    let s = diagonal_section(&sb);
    let phi = parse_formula("!!!!R(s)", sb.signature(), &names(&["s"])).unwrap();
    let err = force(&sb, &[0.0, 0.0], &phi, &[s], &NeighborhoodPolicy::default()).unwrap_err();
    assert_eq!(err, Error::DepthExhausted { limit: 3 });
}

#[test]
fn policy_is_validated() {
    let sb = plane_bundle();
    let phi = parse_formula("exists v. R(v)", sb.signature(), &[]).unwrap();
    for pol in [
        NeighborhoodPolicy {
            eps0: 0.0,
            ..Default::default()
        },
        NeighborhoodPolicy {
            halvings: 0,
            ..Default::default()
        },
        NeighborhoodPolicy {
            samples: 4,
            ..Default::default()
        },
        NeighborhoodPolicy {
            max_depth: 0,
            ..Default::default()
        },
    ] {
        assert!(matches!(
            force(&sb, &[0.0, 0.0], &phi, &[], &pol),
            Err(Error::Policy(_))
        ));
    }
}

#[test]
fn exists_uses_the_witness_family() {
    let sb = plane_bundle();
    let phi = parse_formula("exists v. R(v)", sb.signature(), &[]).unwrap();
    assert!(force(&sb, &[0.0, 0.0], &phi, &[], &NeighborhoodPolicy::default())
        .unwrap()
        .decision
        .is_forced());
    let all = parse_formula("forall v. R(v)", sb.signature(), &[]).unwrap();
    assert!(!is_forced(&sb, &[0.0, 0.0], &all, &[], &NeighborhoodPolicy::default()).unwrap());
    let pol = NeighborhoodPolicy {
        witness_box: Some(AxisBox::cube(1, 1.0, 2.0).unwrap()),
        ..Default::default()
    };
    assert!(is_forced(&sb, &[0.0, 0.0], &all, &[], &pol).unwrap());
    let pol = NeighborhoodPolicy {
        exists_neighborhood: true,
        ..Default::default()
    };
    assert!(is_forced(&sb, &[0.0, 0.0], &phi, &[], &pol).unwrap());
}

#[test]
fn spatial_extension_avoids_the_antidiagonal() {
    let sb = plane_bundle();
    let s = diagonal_section(&sb);
    let phi = parse_formula("R(s)", sb.signature(), &names(&["s"])).unwrap();
    let pol = NeighborhoodPolicy::default();
    let region = AxisBox::cube(2, -1.0, 1.0).unwrap();
    let set = spatial_extension(&sb, &phi, std::slice::from_ref(&s), &region, 0.1, &pol).unwrap();
    assert_eq!(set.points.len(), 21 * 21);
    for (p, m) in set.points.iter().zip(&set.member) {
        assert_eq!(*m, p[0] + p[1] != 0.0, "{p:?}");
    }
    let top = parse_formula("s = s", sb.signature(), &names(&["s"])).unwrap();
    let set = spatial_extension(&sb, &top, std::slice::from_ref(&s), &region, 0.1, &pol).unwrap();
    assert!(set.member.iter().all(|m| *m));
    let bottom = parse_formula("!(s = s)", sb.signature(), &names(&["s"])).unwrap();
    let set = spatial_extension(&sb, &bottom, &[s], &region, 0.1, &pol).unwrap();
    assert_eq!(set.member_count(), 0);
}

#[test]
fn density_of_a_complement_of_a_line() {
    let sb = plane_bundle();
    let s = diagonal_section(&sb);
    let pol = NeighborhoodPolicy::default();
    let r = parse_formula("R(s)", sb.signature(), &names(&["s"])).unwrap();
    assert!(density_check(&sb, &r, std::slice::from_ref(&s), &[0.0, 0.0], &pol).unwrap());
    let nn = parse_formula("!!R(s)", sb.signature(), &names(&["s"])).unwrap();
    assert!(is_forced(&sb, &[0.0, 0.0], &nn, std::slice::from_ref(&s), &pol).unwrap());
    let never = parse_formula("!(s = s)", sb.signature(), &names(&["s"])).unwrap();
    assert!(!density_check(&sb, &never, std::slice::from_ref(&s), &[0.0, 0.0], &pol).unwrap());
    let always = parse_formula("s = s", sb.signature(), &names(&["s"])).unwrap();
    assert!(density_check(&sb, &always, &[s], &[0.0, 0.0], &pol).unwrap());
}

#[test]
fn positive_stability() {
    let sb = plane_bundle();
    let pol = NeighborhoodPolicy::default();
    let s = Section::new(sb.base().clone(), exprs(&["1 + x1"], &["x1", "x2"])).unwrap();
    let r = parse_formula("R(s)", sb.signature(), &names(&["s"])).unwrap();
    assert!(positive_stability_check(&sb, &r, std::slice::from_ref(&s), &[0.0, 0.0], &pol).unwrap());
    assert!(is_forced(&sb, &[0.0, 0.0], &r, std::slice::from_ref(&s), &pol).unwrap());
    let eq = parse_formula("R(s) & s = s", sb.signature(), &names(&["s"])).unwrap();
    assert_eq!(
        positive_stability_check(&sb, &eq, &[s], &[0.0, 0.0], &pol),
        Err(Error::NotPositive)
    );
    let zero = diagonal_section(&sb);
    assert!(positive_stability_check(&sb, &r, &[zero], &[0.0, 0.0], &pol).unwrap());
}

#[test]
fn forced_points_have_forced_neighbors() {
    let sb = plane_bundle();
    let s = diagonal_section(&sb);
    let pol = NeighborhoodPolicy::default();
    for (src, m) in [
        ("!!R(s)", [0.0, 0.0]),
        ("R(s)", [0.3, 0.2]),
        ("!(s = s) -> R(s)", [0.1, 0.1]),
    ] {
        let phi = parse_formula(src, sb.signature(), &names(&["s"])).unwrap();
        let v = force(&sb, &m, &phi, std::slice::from_ref(&s), &pol).unwrap();
        assert!(v.decision.is_forced(), "{src}");
        let eps = v.witness_eps.unwrap();
        let level = (0..=pol.halvings).find(|&l| pol.radius(l) == eps).unwrap();
        let nearby: Vec<_> = ball_samples(&sb, std::slice::from_ref(&s), &m, level, &pol)
            .unwrap()
            .into_iter()
            .filter(|u| u.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < eps / 2.0)
            .step_by(7)
            .collect();
        assert!(!nearby.is_empty());
        for u in nearby {
            assert!(
                is_forced(&sb, &u, &phi, std::slice::from_ref(&s), &pol).unwrap(),
                "{src} at {u:?}"
            );
        }
    }
}

#[test]
fn nested_samples_shrink_with_the_radius() {
    let sb = plane_bundle();
    let pol = NeighborhoodPolicy::default();
    let m = [0.0, 0.0];
    for level in 0..pol.halvings {
        let outer = ball_samples(&sb, &[], &m, level, &pol).unwrap();
        let inner = ball_samples(&sb, &[], &m, level + 1, &pol).unwrap();
        assert!(inner.iter().all(|p| outer.contains(p)));
        assert!(outer
            .iter()
            .all(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt() <= pol.radius(level) + 1e-15));
    }
}

#[test]
fn verdicts_are_deterministic() {
    let sb = plane_bundle();
    let s = diagonal_section(&sb);
    let phi = parse_formula("!!R(s) & (R(s) -> !(s = s))", sb.signature(), &names(&["s"])).unwrap();
    let pol = NeighborhoodPolicy::default();
    let a = force(&sb, &[0.2, -0.1], &phi, std::slice::from_ref(&s), &pol).unwrap();
    let b = force(&sb, &[0.2, -0.1], &phi, &[s], &pol).unwrap();
    assert_eq!(a, b);
}

#[test]
fn forced_positive_formulas_are_classically_true() {
    let sb = plane_bundle();
    let pol = NeighborhoodPolicy::default();
    let s = Section::new(sb.base().clone(), exprs(&["x1 - 0.25"], &["x1", "x2"])).unwrap();
    for src in ["R(s)", "R(s) | s = s", "exists v. R(v) & v = s", "forall v. v = v"] {
        let phi = parse_formula(src, sb.signature(), &names(&["s"])).unwrap();
        for i in 0..20 {
            let m = [-0.9 + 0.09 * i as f64, 0.1];
            if is_forced(&sb, &m, &phi, std::slice::from_ref(&s), &pol).unwrap() {
                let fs = sb.fiber_structure(&m).unwrap();
                let pool = witness_values(&sb, std::slice::from_ref(&s), &m, &pol).unwrap();
                assert!(tarski_eval_with_tol(&phi, &fs, &[s.eval(&m).unwrap()], &pool, pol.tol_eq).unwrap());
            }
        }
    }
}
