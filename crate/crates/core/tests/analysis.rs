mod common;

use common::{expr, Instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbdsdep::analysis::{
    compare_solutions, ito_residual_check, norm_report, positivity_check, positivity_instance,
    skorokhod_check, ItoComponents, Verdict,
};
use rbdsdep::drivers::{build_time_grid, simulate_scenarios, DriverMode, MarkSpace};
use rbdsdep::solver::{solve_tree_exact, Backend};
use rbdsdep::Error;

#[test]
fn constant_drift_gap_integrates_to_horizon() {
    let lo = Instance::default();
    let hi = Instance {
        f: "1",
        ..Default::default()
    };
    let tree = lo.tree();
    let (rep, _) = compare_solutions(&lo.problem(), &hi.problem(), Backend::Tree(&tree), 1e-12).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass);
    assert!(rep.conclusion_margin.unwrap() >= 0.0);
    assert!((rep.root_gap.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn terminal_shift_propagates() {
    let lo = Instance {
        terminal: "w1",
        ..Default::default()
    };
    let hi = Instance {
        terminal: "w1 + 1",
        ..Default::default()
    };
    let tree = lo.tree();
    let (rep, _) = compare_solutions(&lo.problem(), &hi.problem(), Backend::Tree(&tree), 1e-12).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass);
    assert!((rep.root_gap.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn violated_premise_is_never_a_pass() {
    let lo = Instance {
        terminal: "w1 + 1",
        ..Default::default()
    };
    let hi = Instance {
        terminal: "w1",
        ..Default::default()
    };
    let tree = lo.tree();
    let (rep, sols) = compare_solutions(&lo.problem(), &hi.problem(), Backend::Tree(&tree), 1e-12).unwrap();
    assert_eq!(rep.verdict, Verdict::PremisesNotMet);
    assert!(rep.conclusion_margin.is_none() && sols.is_none());

    let lo = Instance {
        f: "y",
        ..Default::default()
    };
    let (rep, _) = compare_solutions(&lo.problem(), &Instance::default().problem(), Backend::Tree(&tree), 1e-12)
        .unwrap();
    assert_eq!(rep.verdict, Verdict::PremisesNotMet);
    assert!(!rep.premises[2].passed);
}

#[test]
fn mismatched_g_is_rejected() {
    let a = Instance::default();
    let b = Instance {
        g: "0.1*y",
        ..Default::default()
    };
    let tree = a.tree();
    assert!(matches!(
        compare_solutions(&a.problem(), &b.problem(), Backend::Tree(&tree), 1e-12),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn randomized_ordered_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let base = Instance {
        intensities: &[0.8],
        steps: 3,
        ..Default::default()
    };
    let tree = base.tree();
    for _ in 0..5 {
        let f2 = format!(
            "{:.3} + {:.3}*y + {:.3}*y*y + {:.3}*w1 + {:.3}*t*y",
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.05..0.05),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.5..0.5),
        );
        let f1 = format!("{f2} - abs({:.3} + {:.3}*y)", rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5));
        let xi1 = format!("w1 + {:.3}*n1", rng.random_range(0.0..1.0));
        let xi2 = format!("{xi1} + {:.3}*abs(w1)", rng.random_range(0.0..1.0));
        let s1 = format!("min(w1, 0) - {:.3}", rng.random_range(0.5..1.0));
        let s2 = format!("{s1} + {:.3}", rng.random_range(0.0..0.4));
        let p1 = Instance {
            f: &f1,
            g: "0.2*sin(y)",
            terminal: &xi1,
            barrier: &s1,
            ..base
        };
        let p2 = Instance {
            f: &f2,
            g: "0.2*sin(y)",
            terminal: &xi2,
            barrier: &s2,
            ..base
        };
        let (rep, _) = compare_solutions(&p1.problem(), &p2.problem(), Backend::Tree(&tree), 1e-12).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "{f1} / {f2}: {rep:?}");
    }
}

#[test]
fn skorokhod_detects_injected_violation() {
    let inst = Instance {
        barrier: "1 - t",
        ..Default::default()
    };
    let mut sol = solve_tree_exact(&inst.problem(), &inst.tree()).unwrap();
    let rep = skorokhod_check(&sol);
    assert!(rep.passed() && rep.max == 0.0);
    assert!((sol.k_terminal_mean() - 1.0).abs() < 1e-12);

    sol.y[[0, 1]] += 0.5;
    let rep = skorokhod_check(&sol);
    assert!(!rep.passed());
    assert!(rep.per_path[0] > 0.0);
    assert_eq!(rep.per_path[1], 0.0);
}

#[test]
fn positivity_examples() {
    let zero = Instance::default();
    let tree = zero.tree();
    let (rep, sol) = positivity_instance(&zero.problem(), &expr("0"), &expr("0"), Backend::Tree(&tree), 1e-10)
        .unwrap();
    assert_eq!(rep.verdict, Verdict::Pass);
    assert_eq!(positivity_check(&sol.unwrap()), 0.0);

    let one = Instance {
        terminal: "1",
        ..Default::default()
    };
    let (rep, _) = positivity_instance(&one.problem(), &expr("-abs(z1)"), &expr("1"), Backend::Tree(&tree), 1e-10)
        .unwrap();
    assert_eq!(rep.verdict, Verdict::Pass);
    assert!(rep.min_y.unwrap() >= -1e-10);

    let neg = Instance {
        terminal: "-1",
        barrier: "-2",
        ..Default::default()
    };
    let (rep, sol) = positivity_instance(&neg.problem(), &expr("0"), &expr("0"), Backend::Tree(&tree), 1e-10)
        .unwrap();
    assert_eq!(rep.verdict, Verdict::PremisesNotMet);
    assert!(sol.is_none());
}

#[test]
fn norms_of_trivial_solutions() {
    let zero = Instance::default();
    let sol = solve_tree_exact(&zero.problem(), &zero.tree()).unwrap();
    let n = norm_report(&sol).unwrap();
    assert_eq!((n.sup_y2, n.z_m2, n.u_l2, n.k_t2), (0.0, 0.0, 0.0, 0.0));

    let w = Instance {
        terminal: "w1",
        ..Default::default()
    };
    let mut sol = solve_tree_exact(&w.problem(), &w.tree()).unwrap();
    assert!((norm_report(&sol).unwrap().z_m2 - 1.0).abs() < 1e-12);

    sol.z[[3, 2, 0]] = f64::NAN;
    match norm_report(&sol) {
        Err(Error::NonFinite { what, index }) => {
            assert_eq!(what, "Z");
            assert_eq!(index, vec![3, 2, 0]);
        }
        other => panic!("{other:?}"),
    }
}

fn ito(
    intensities: Vec<f64>,
    comp: ItoComponents,
    seed: u64,
) -> rbdsdep::analysis::ItoReport {
    let grid = build_time_grid(1.0, 20).unwrap();
    let marks = MarkSpace::new(vec![1.0; intensities.len()], intensities).unwrap();
    let sc = simulate_scenarios(&grid, 1, &marks, 10_000, seed, DriverMode::Gaussian).unwrap();
    ito_residual_check(&sc, &comp).unwrap()
}

#[test]
fn brownian_quadratic_variation() {
    let rep = ito(
        vec![],
        ItoComponents {
            alpha0: 0.0,
            beta: expr("0"),
            gamma: expr("0"),
            eta: vec![expr("1")],
            sigma: vec![],
            k_rate: expr("0"),
        },
        5,
    );
    assert!(rep.passed(1e-10, 5.0));
    for (i, s) in rep.second_moment.iter().enumerate() {
        let t = i as f64 / 20.0;
        assert!((s.mean - t).abs() <= 5.0 * s.se + 1e-15, "t={t}: {s:?}");
    }
}

#[test]
fn compensated_poisson_variance() {
    let lam = 2.0;
    let rep = ito(
        vec![lam],
        ItoComponents {
            alpha0: 0.0,
            beta: expr("0"),
            gamma: expr("0"),
            eta: vec![expr("0")],
            sigma: vec![expr("1")],
            k_rate: expr("0"),
        },
        6,
    );
    assert!(rep.passed(1e-10, 5.0));
    for (i, s) in rep.second_moment.iter().enumerate() {
        let t = i as f64 / 20.0;
        assert!((s.mean - lam * t).abs() <= 5.0 * s.se + 1e-15, "t={t}: {s:?}");
    }
}

#[test]
fn mixed_semimartingale_identity() {
    let rep = ito(
        vec![0.7],
        ItoComponents {
            alpha0: 0.5,
            beta: expr("cos(t) - 0.2*w1"),
            gamma: expr("0.3 + 0.1*sin(w1)"),
            eta: vec![expr("0.5 + 0.2*cos(w1)")],
            sigma: vec![expr("0.4*exp(-n1)")],
            k_rate: expr("0.2 + 0.1*pos(w1)"),
        },
        7,
    );
    assert!(rep.identity_residual <= 1e-10);
    assert!(rep.martingale_terms.iter().all(|t| t.within(5.0)), "{:?}", rep.martingale_terms);
    assert!(rep.quadratic_variation.iter().all(|q| q.mean > 0.0));
}

#[test]
fn negative_k_rate_is_rejected() {
    let grid = build_time_grid(1.0, 2).unwrap();
    let sc = simulate_scenarios(&grid, 1, &MarkSpace::empty(), 10, 1, DriverMode::Gaussian).unwrap();
    let comp = ItoComponents {
        alpha0: 0.0,
        beta: expr("0"),
        gamma: expr("0"),
        eta: vec![expr("1")],
        sigma: vec![],
        k_rate: expr("-1"),
    };
    assert!(matches!(ito_residual_check(&sc, &comp), Err(Error::InvalidArgument(_))));
}
