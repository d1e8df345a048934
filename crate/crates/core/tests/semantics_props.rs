use fiberforce::forcing::{ball_samples, witness_values};
use fiberforce::logic::{parse_formula, tarski_eval_with_tol, Formula};
use fiberforce::{
    force, horizontal_extension, parallel_forced, AxisBox, Decision, FamilySpec, Model, NeighborhoodPolicy, PathFamily,
    Section,
};
use proptest::prelude::*;

fn model(name: &str) -> Model {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("models")
        .join(name);
    Model::load(path).unwrap()
}

fn formula(m: &Model, src: &str, free: &[&str]) -> Formula {
    let free: Vec<String> = free.iter().map(|s| s.to_string()).collect();
    parse_formula(src, m.bundle.signature(), &free).unwrap()
}

/// Golden models with a section and formulas in one free variable.
fn cases() -> Vec<(Model, Vec<Section>, Vec<&'static str>)> {
    let plane = model("paper_sec3_pullback.model");
    let s = vec![plane.section("s").unwrap().clone()];
    let line = model("paper_sec4_ball.model");
    let half = vec![Section::new(
        line.bundle.base().clone(),
        vec![fiberforce::expr::parse_expr("0.5 * x1", &["x1"]).unwrap()],
    )
    .unwrap()];
    vec![
        (
            plane,
            s,
            vec![
                "R(x)",
                "!R(x)",
                "!!R(x)",
                "R(x) | !R(x)",
                "exists y. R(y)",
                "forall y. R(x) | R(y)",
            ],
        ),
        (
            line,
            half,
            vec![
                "R(x)",
                "!R(x)",
                "!!R(x)",
                "R(x) & exists y. !R(y)",
                "forall y. R(y) | R(x)",
            ],
        ),
    ]
}

fn in_base(m: &Model, p: &[f64]) -> Vec<f64> {
    let b = m.bundle.base();
    p.iter()
        .enumerate()
        .take(b.dim())
        .map(|(i, v)| b.lo()[i] + (b.hi()[i] - b.lo()[i]) * v)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn forcing_spreads_to_half_the_witness_ball(p in prop::array::uniform2(0.05..0.95f64)) {
        let pol = NeighborhoodPolicy { samples: 16, ..NeighborhoodPolicy::default() };
        for (m, sections, formulas) in cases() {
            let at = in_base(&m, &p);
            for src in formulas {
                let phi = formula(&m, src, &["x"]);
                let v = force(&m.bundle, &at, &phi, &sections, &pol).unwrap();
                let Some(eps) = v.witness_eps else { continue };
                let level = (0..=pol.halvings).find(|&l| pol.radius(l) == eps).unwrap() + 1;
                if level > pol.halvings {
                    continue;
                }
                for u in ball_samples(&m.bundle, &sections, &at, level, &pol).unwrap() {
                    let w = force(&m.bundle, &u, &phi, &sections, &pol).unwrap();
                    prop_assert_eq!(w.decision, Decision::Forced, "{} at {:?} from {:?}", src, u, at);
                }
            }
        }
    }

    #[test]
    fn forced_negation_free_formulas_are_true(p in prop::array::uniform2(0.0..1.0f64)) {
        let pol = NeighborhoodPolicy { samples: 16, ..NeighborhoodPolicy::default() };
        for (m, sections, formulas) in cases() {
            let at = in_base(&m, &p);
            let fs = m.bundle.fiber_structure(&at).unwrap();
            let pool = witness_values(&m.bundle, &sections, &at, &pol).unwrap();
            let assignment: Vec<Vec<f64>> = sections.iter().map(|s| s.eval(&at).unwrap()).collect();
            for src in formulas {
                let phi = formula(&m, src, &["x"]);
                if !phi.is_neg_imp_free() {
                    continue;
                }
                let forced = force(&m.bundle, &at, &phi, &sections, &pol).unwrap().decision;
                if forced == Decision::Forced {
                    prop_assert!(tarski_eval_with_tol(&phi, &fs, &assignment, &pool, pol.tol_eq).unwrap(), "{}", src);
                }
            }
        }
    }

    #[test]
    fn verdicts_are_deterministic(p in prop::array::uniform2(0.0..1.0f64)) {
        let pol = NeighborhoodPolicy { samples: 16, ..NeighborhoodPolicy::default() };
        for (m, sections, formulas) in cases() {
            let at = in_base(&m, &p);
            for src in formulas {
                let phi = formula(&m, src, &["x"]);
                let a = force(&m.bundle, &at, &phi, &sections, &pol).unwrap();
                let b = force(&m.bundle, &at, &phi, &sections, &pol).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn larger_path_families_only_refute(x in -0.9..0.9f64, e in -2.0..2.0f64, keep in 1usize..10, seed in 0u64..50) {
        let m = model("paper_sec3_parallel.model");
        let pol = NeighborhoodPolicy::default();
        let c = m.connection("Phi").unwrap();
        let full = PathFamily::generate(m.bundle.base(), &[x], &FamilySpec { seed, ..FamilySpec::default() }).unwrap();
        let part = PathFamily::from_paths(vec![x], full.paths().iter().take(keep).cloned().collect()).unwrap();
        for src in ["R(v)", "!R(v)", "!!R(v)", "R(v) | !R(v)"] {
            let phi = formula(&m, src, &["v"]);
            let big = parallel_forced(&m.bundle, c, &[vec![e]], &phi, &full, &pol).unwrap().decision;
            let small = parallel_forced(&m.bundle, c, &[vec![e]], &phi, &part, &pol).unwrap().decision;
            if big == Decision::Forced {
                prop_assert_eq!(small, Decision::Forced, "{}", src);
            }
        }
    }

    #[test]
    fn equal_fiber_points_stay_equal(p in prop::array::uniform2(0.1..0.9f64), a in -0.5..0.5f64) {
        let pol = NeighborhoodPolicy::default();
        for name in ["paper_sec3_parallel.model", "paper_sec4_ball.model", "paper_sec4_axis.model", "curvature.model", "exponential.model"] {
            let m = model(name);
            let at = in_base(&m, &p);
            let phi = formula(&m, "x = y", &["x", "y"]);
            let fam = PathFamily::generate(m.bundle.base(), &at, &FamilySpec::default()).unwrap();
            for (cname, c) in &m.connections {
                let v = parallel_forced(&m.bundle, c, &[vec![a], vec![a]], &phi, &fam, &pol).unwrap();
                prop_assert_eq!(v.decision, Decision::Forced, "{} {}", name, cname);
            }
        }
    }
}

#[test]
fn extensions_contain_a_parallel_forced_seed() {
    let m = model("paper_sec4_ball.model");
    let pol = NeighborhoodPolicy::default();
    let phi = formula(&m, "R(x)", &["x"]);
    let region = AxisBox::cube(1, -1.0, 1.0).unwrap();
    for (name, c) in &m.connections {
        for x in [-0.3, 0.0, 0.2] {
            let fam = PathFamily::generate(m.bundle.base(), &[x], &FamilySpec::default()).unwrap();
            let forced = parallel_forced(&m.bundle, c, &[vec![0.0]], &phi, &fam, &pol)
                .unwrap()
                .decision;
            let set = horizontal_extension(
                &m.bundle,
                c,
                &[x],
                &[vec![0.0]],
                &phi,
                &region,
                0.1,
                &FamilySpec::default(),
                &pol,
            )
            .unwrap();
            if forced == Decision::Forced {
                assert!(set.member[set.seed], "{name} at {x}");
            }
        }
    }
}
