use fiberforce::expr::parse_expr;
use fiberforce::logic::{eval_term, parse_term, Interpretation, Signature};
use fiberforce::{
    lift_uniqueness_gap, parallel_transport, pullback_connection, AxisBox, Connection, Model, Section, SmoothMap,
    StructureBundle,
};
use proptest::prelude::*;

fn map(vars: &[&str], comps: &[&str]) -> SmoothMap {
    let exprs = comps.iter().map(|c| parse_expr(c, vars).unwrap()).collect();
    SmoothMap::new(vars.len(), exprs).unwrap()
}

fn model(name: &str) -> Model {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("models")
        .join(name);
    Model::load(path).unwrap()
}

fn plane_bundle(c: [f64; 4]) -> StructureBundle {
    let sig = Signature::new(vec![("R".into(), 1)], vec![], vec![]).unwrap();
    let guard = format!(
        "{:?} + {:?} * x1 * y1 + {:?} * sin(x2) + {:?} * y1^2",
        c[0], c[1], c[2], c[3]
    );
    let interp = Interpretation::parse(&sig, 2, 1, &[("R", &guard)], &[], &[]).unwrap();
    StructureBundle::new(
        AxisBox::cube(2, -2.0, 2.0).unwrap(),
        AxisBox::cube(1, -5.0, 5.0).unwrap(),
        sig,
        interp,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pullback_is_functorial(c in prop::array::uniform4(-1.0..1.0f64), seed_y in -5.0..5.0f64) {
        let sb = plane_bundle(c);
        let square = AxisBox::cube(2, -1.0, 1.0).unwrap();
        let line = AxisBox::cube(1, -1.0, 1.0).unwrap();
        let h2 = map(&["u", "v"], &["0.5 * u + 0.3 * v", "sin(u) * v"]);
        let h1 = map(&["t"], &["t", "t^2 - 0.5"]);
        let twice = sb.pullback(&h2, &square).unwrap().pullback(&h1, &line).unwrap();
        let once = sb.pullback(&h2.compose(&h1).unwrap(), &line).unwrap();
        for i in 0..100 {
            let t = -1.0 + 2.0 * i as f64 / 99.0;
            let y = [seed_y * (1.0 - t) / 2.0];
            let a = twice.fiber_structure(&[t]).unwrap().guard_value(0, &[&y]).unwrap();
            let b = once.fiber_structure(&[t]).unwrap().guard_value(0, &[&y]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12, "t = {t}: {a} vs {b}");
        }
    }

    #[test]
    fn positive_guards_stay_positive_nearby(c in prop::array::uniform4(-1.0..1.0f64), x in prop::array::uniform2(-1.5..1.5f64), y in -4.0..4.0f64) {
        let sb = plane_bundle(c);
        let guard = &sb.interpretation().relation_guards()[0];
        let p = [x[0], x[1], y];
        let g = guard.eval(&p).unwrap();
        prop_assume!(g > 1e-3);
        // Lipschitz bound of the guard on the unit ball around p
        let lip = c[1].abs() * (x[0].abs() + y.abs() + 2.0) + c[2].abs() + c[3].abs() * 2.0 * (y.abs() + 1.0);
        let r = (g / (2.0 * lip.max(1e-9))).min(1.0);
        for i in 0..64 {
            let a = i as f64 * 2.399963;
            let s = r * ((i + 1) as f64 / 64.0).sqrt();
            let q = [p[0] + s * a.cos(), p[1] + s * a.sin(), p[2] + s * (0.7 * a).sin()];
            let s3 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2);
            if s3.sqrt() <= r {
                prop_assert!(guard.eval(&q).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn term_sections_commute_with_evaluation(a in -1.0..1.0f64, b in -1.0..1.0f64, m in prop::array::uniform2(-1.0..1.0f64)) {
        let sig = Signature::new(vec![], vec![("f".into(), 1), ("g".into(), 2)], vec!["c".into()]).unwrap();
        let interp = Interpretation::parse(
            &sig,
            2,
            1,
            &[],
            &[("f", vec!["x1 + y1^2"]), ("g", vec!["y11 * y21 - x2"])],
            &[("c", vec!["x1 * x2"])],
        )
        .unwrap();
        let base = AxisBox::cube(2, -1.0, 1.0).unwrap();
        let sb = StructureBundle::new(base.clone(), AxisBox::cube(1, -50.0, 50.0).unwrap(), sig.clone(), interp).unwrap();
        let s1 = Section::new(base.clone(), vec![parse_expr(&format!("{a:?} * x1 + x2"), &["x1", "x2"]).unwrap()]).unwrap();
        let s2 = Section::new(base, vec![parse_expr(&format!("sin(x2) - {b:?}"), &["x1", "x2"]).unwrap()]).unwrap();
        let vars = ["u".to_string(), "v".to_string()];
        for src in ["f(u)", "g(f(u), v)", "g(c, f(f(v)))", "u"] {
            let t = parse_term(src, &sig, &vars).unwrap();
            let composed = sb.term_section(&t, &[s1.clone(), s2.clone()]).unwrap().eval(&m).unwrap();
            let fs = sb.fiber_structure(&m).unwrap();
            let direct = eval_term(&t, &fs, &[s1.eval(&m).unwrap(), s2.eval(&m).unwrap()]).unwrap();
            prop_assert_eq!(composed, direct, "{}", src);
        }
    }

    #[test]
    fn transport_ignores_parametrization(a0 in -1.0..1.0f64, d in prop::array::uniform2(-0.6..0.6f64)) {
        let m = model("curvature.model");
        let c = m.connection("Twist").unwrap();
        let path = map(&["t"], &[&format!("{:?} * t", d[0]), &format!("0.1 + {:?} * t", d[1])]);
        // tau(t) = (t + t^3) / 2 maps [0, 1] onto itself monotonically
        let slow = map(&["t"], &[&format!("{:?} * (t + t^3) / 2", d[0]), &format!("0.1 + {:?} * (t + t^3) / 2", d[1])]);
        let a = parallel_transport(c, &path, &[a0], (0.0, 1.0), 1e-3).unwrap().terminal[0];
        let b = parallel_transport(c, &slow, &[a0], (0.0, 1.0), 1e-3).unwrap().terminal[0];
        prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }

    #[test]
    fn pullback_transport_is_transport_along_the_image(a0 in -1.0..1.0f64, k in -0.8..0.8f64) {
        let m = model("curvature.model");
        let line = AxisBox::cube(1, -1.0, 1.0).unwrap();
        let h = map(&["u"], &["0.6 * sin(u)", "0.5 * u^2 - 0.2"]);
        let sigma = map(&["t"], &[&format!("{k:?} * t - 0.1")]);
        for (name, c) in &m.connections {
            let pc = pullback_connection(c, &h, &line).unwrap();
            let a = parallel_transport(&pc, &sigma, &[a0], (0.0, 1.0), 1e-3).unwrap().terminal[0];
            let b = parallel_transport(c, &h.compose(&sigma).unwrap(), &[a0], (0.0, 1.0), 1e-3).unwrap().terminal[0];
            prop_assert!((a - b).abs() <= 1e-6, "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn transport_order_on_the_exponential() {
    let m = model("exponential.model");
    let c = m.connection("Exp").unwrap();
    let line = m.map("line").unwrap();
    let err = |h: f64| {
        (parallel_transport(c, &line.map, &[1.0], (0.0, 1.0), h)
            .unwrap()
            .terminal[0]
            - 1f64.exp())
        .abs()
    };
    for h in [0.1, 0.05, 0.02] {
        assert!(err(h) / err(h / 2.0) >= 8.0, "h = {h}");
    }
}

#[test]
fn lifts_are_unique_on_every_shipped_connection() {
    for name in [
        "paper_sec3_parallel.model",
        "paper_sec4_ball.model",
        "paper_sec4_axis.model",
        "curvature.model",
    ] {
        let m = model(name);
        let n = m.bundle.base_dim();
        let diag = map(&["t"], &vec!["0.3 * t"; n].iter().map(|s| &**s).collect::<Vec<_>>());
        let conns: Vec<Connection> = m.connections.iter().map(|(_, c)| c.clone()).collect();
        for c in conns {
            let gap = lift_uniqueness_gap(&c, &diag, &[0.25], 0.0, (0.0, 1.0), 1e-3).unwrap();
            assert!(gap <= 1e-9, "{name}: {gap}");
        }
    }
}
