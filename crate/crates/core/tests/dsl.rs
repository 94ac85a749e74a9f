use proptest::prelude::*;
use rbdsdep::dsl::{
    check_g_contraction, check_linear_growth, check_pi_minorant, inf_convolution, parse_expr,
    sample_cloud, sample_ordered_pairs, sample_pairs, sup_convolution, BinOp, CloudSpec, Env,
    EnvelopeParams, Expr, Func, GeneratorSpec, Var,
};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-1e3f64..1e3).prop_map(Expr::Num),
        prop_oneof![
            Just(Var::T),
            Just(Var::Y),
            Just(Var::Z(0)),
            Just(Var::Z(1)),
            Just(Var::U(0)),
            Just(Var::W(0)),
            Just(Var::N(0)),
            Just(Var::ZNorm),
            Just(Var::UNorm),
        ]
        .prop_map(Expr::Var),
    ]
}

fn expr_tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)];
        let unary = prop_oneof![
            Just(Func::Abs),
            Just(Func::Sign),
            Just(Func::Exp),
            Just(Func::Sin),
            Just(Func::Cos),
            Just(Func::Sqrt),
            Just(Func::Pos),
            Just(Func::Neg),
            Just(Func::IndicatorPos),
        ];
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Bin(o, Box::new(a), Box::new(b))),
            (unary, inner.clone()).prop_map(|(f, a)| Expr::Call(f, vec![a])),
            (prop_oneof![Just(Func::Max), Just(Func::Min)], inner.clone(), inner)
                .prop_map(|(f, a, b)| Expr::Call(f, vec![a, b])),
        ]
    })
}

fn env<'a>(t: f64, y: f64, z: &'a [f64], u: &'a [f64], w: &'a [f64], n: &'a [f64]) -> Env<'a> {
    Env {
        t,
        y,
        z,
        u,
        w,
        n,
        intensities: &[0.7],
    }
}

proptest! {
    #[test]
    fn print_parse_round_trip(e in expr_tree(), y in -3.0f64..3.0, z in -3.0f64..3.0) {
        let text = e.to_string();
        let once = parse_expr(&text).unwrap();
        let twice = parse_expr(&once.to_string()).unwrap();
        prop_assert_eq!(&once, &twice);
        let (zs, us, ws, ns) = ([z, -z], [0.5], [0.2], [1.0]);
        let at = env(0.3, y, &zs, &us, &ws, &ns);
        match (e.eval(&at), once.eval(&at)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits(), "{}", text),
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "{text}: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn envelopes_are_ordered_in_n(y in -4.0f64..4.0, k in 0usize..3) {
        let f = ["min(abs(y), 2)", "y*y", "indicator_pos(y)"][k];
        let f = parse_expr(f).unwrap();
        let at = Env { y, ..Env::at_time(0.0) };
        let fv = f.eval(&at).unwrap();
        let mut prev_inf = f64::NEG_INFINITY;
        let mut prev_sup = f64::INFINITY;
        for n in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let p = EnvelopeParams::new(n, vec![-5.0], vec![5.0], 201, 1.0).unwrap();
            let lo = inf_convolution(&f, &p, &at).unwrap();
            prop_assert!(prev_inf <= lo + 1e-12 && lo <= fv + 1e-12);
            prev_inf = lo;
            // the sup-convolution of y² is unbounded for every n
            if k != 1 {
                let hi = sup_convolution(&f, &p, &at).unwrap();
                prop_assert!(fv <= hi + 1e-12 && hi <= prev_sup + 1e-12);
                prev_sup = hi;
            }
        }
    }

    #[test]
    fn envelope_is_n_lipschitz(a in -4.0f64..4.0, b in -4.0f64..4.0, n in 1.0f64..20.0) {
        let f = parse_expr("indicator_pos(y) + 0.1*y*y").unwrap();
        let p = EnvelopeParams::new(n, vec![-5.0], vec![5.0], 201, 1.0).unwrap();
        let fa = inf_convolution(&f, &p, &Env { y: a, ..Env::at_time(0.0) }).unwrap();
        let fb = inf_convolution(&f, &p, &Env { y: b, ..Env::at_time(0.0) }).unwrap();
        prop_assert!((fa - fb).abs() <= n * (a - b).abs() + 1e-12);
    }
}

#[test]
fn growth_examples() {
    let lam = [0.7];
    let spec = CloudSpec {
        y: (-3.0, 3.0),
        ..CloudSpec::standard(1, &lam, 1.0)
    };
    let cloud = sample_cloud(&spec);
    let g = |f: &str, c: f64| GeneratorSpec::new(parse_expr(f).unwrap(), parse_expr("0").unwrap(), c, 0.5).unwrap();
    assert!(check_linear_growth(&g("sign(y)", 1.0), &cloud, &lam).unwrap().passed());
    let rep = check_linear_growth(&g("y*y", 1.0), &cloud, &lam).unwrap();
    assert!(!rep.passed());
    assert!(rep.violations.iter().any(|v| v.lhs == 9.0 && v.rhs == 4.0));
    let rep = check_linear_growth(&g("1 + abs(y) + znorm + unorm", 1.0), &cloud, &lam).unwrap();
    assert!(rep.passed() && (rep.worst_ratio - 1.0).abs() < 1e-12);
}

#[test]
fn contraction_and_minorant_examples() {
    let lam = [0.7];
    let spec = CloudSpec::standard(1, &lam, 1.0);
    let pairs = sample_pairs(&spec);
    let ordered = sample_ordered_pairs(&spec);
    let mk = |f: &str, g: &str, c: f64, a: f64| {
        GeneratorSpec::new(parse_expr(f).unwrap(), parse_expr(g).unwrap(), c, a).unwrap()
    };
    assert!(check_g_contraction(&mk("0", "0.5*z1", 1.0, 0.25), &pairs, &lam).unwrap().passed());
    assert!(!check_g_contraction(&mk("0", "z1", 1.0, 0.5), &pairs, &lam).unwrap().passed());

    let with_pi = |f: &str, pi: &str| mk(f, "0", 1.0, 0.5).with_pi(parse_expr(pi).unwrap());
    assert!(check_pi_minorant(&with_pi("indicator_pos(y)", "0"), &ordered, &lam).unwrap().passed());
    assert!(check_pi_minorant(&with_pi("y + z1", "-abs(z1)"), &ordered, &lam).unwrap().passed());
    assert!(!check_pi_minorant(&with_pi("-2*y", "0"), &ordered, &lam).unwrap().passed());
}

/// Brute-force check of the minorant example by an independent grid of
/// ordered pairs.
#[test]
fn minorant_example_on_a_pair_grid() {
    let f = parse_expr("y + z1").unwrap();
    let pi = parse_expr("-abs(z1)").unwrap();
    let pts: Vec<f64> = (0..21).map(|k| -2.0 + 0.2 * k as f64).collect();
    for &y in &pts {
        for &y2 in pts.iter().filter(|&&v| v <= y) {
            for &z in &pts {
                for &z2 in &pts {
                    let a = f.eval(&Env { y, z: &[z], ..Env::at_time(0.0) }).unwrap();
                    let b = f.eval(&Env { y: y2, z: &[z2], ..Env::at_time(0.0) }).unwrap();
                    let p = pi.eval(&Env { y: y - y2, z: &[z - z2], ..Env::at_time(0.0) }).unwrap();
                    assert!(a - b >= p - 1e-12);
                }
            }
        }
    }
}
