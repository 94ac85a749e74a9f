mod common;

use std::collections::BTreeMap;

use common::Instance;
use rbdsdep::drivers::{simulate_scenarios, DriverMode};
use rbdsdep::dsl::Env;
use rbdsdep::solver::{
    solve_lsmc, solve_tree_exact, BasisKind, LsmcParams, ProblemSpec, SolutionGrid, TreeModel,
};
use rbdsdep::Error;

#[test]
fn constant_terminal_is_a_martingale() {
    let inst = Instance {
        terminal: "3",
        intensities: &[0.5],
        ..Default::default()
    };
    let sol = solve_tree_exact(&inst.problem(), &inst.tree()).unwrap();
    assert!(sol.y.iter().all(|&v| v == 3.0));
    assert!(sol.z.iter().all(|&v| v.abs() < 1e-15));
    assert!(sol.u.iter().all(|&v| v.abs() < 1e-15));
    assert!(sol.k.iter().all(|&v| v == 0.0));
}

#[test]
fn unit_drift_integrates_to_remaining_time() {
    let inst = Instance {
        f: "1",
        ..Default::default()
    };
    let sol = solve_tree_exact(&inst.problem(), &inst.tree()).unwrap();
    assert!((sol.y0() - 1.0).abs() < 1e-12);
    for i in 0..=4 {
        let want = 1.0 - sol.grid.time(i);
        assert!(sol.y.column(i).iter().all(|v| (v - want).abs() < 1e-12));
    }
}

#[test]
fn decreasing_obstacle_is_its_own_snell_envelope() {
    let inst = Instance {
        barrier: "1 - t",
        ..Default::default()
    };
    let sol = solve_tree_exact(&inst.problem(), &inst.tree()).unwrap();
    assert!((sol.y0() - 1.0).abs() < 1e-12);
    assert!((sol.k_terminal_mean() - 1.0).abs() < 1e-12);
    for i in 0..=4 {
        let want = 1.0 - sol.grid.time(i);
        assert!(sol.y.column(i).iter().all(|v| (v - want).abs() < 1e-12));
    }
}

#[test]
fn incompatible_terminal_is_rejected() {
    let inst = Instance {
        barrier: "w1",
        terminal: "w1 - 0.1",
        ..Default::default()
    };
    let err = solve_tree_exact(&inst.problem(), &inst.tree()).unwrap_err();
    assert!(matches!(err, Error::Compatibility { .. }));
}

/// Groups paths by the explicit increment history visible at step `i`.
fn atoms(tree: &TreeModel, i: usize) -> BTreeMap<Vec<i64>, Vec<usize>> {
    let sc = tree.scenarios();
    let (paths, n, d) = sc.dw().dim();
    let m = sc.jumps().dim().2;
    let mut out: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for p in 0..paths {
        let mut key = Vec::new();
        for s in 0..i {
            key.extend((0..d).map(|j| sc.dw()[[p, s, j]].signum() as i64));
            key.extend((0..m).map(|k| i64::from(sc.jumps()[[p, s, k]])));
        }
        key.push(-7);
        key.extend((i..n).map(|s| sc.db()[[p, s]].signum() as i64));
        out.entry(key).or_default().push(p);
    }
    out
}

fn balance_residual(problem: &ProblemSpec, tree: &TreeModel, sol: &SolutionGrid) -> f64 {
    let sc = tree.scenarios();
    let w = sc.weights();
    let lam = problem.marks.intensities();
    let dt = problem.grid.dt();
    let levels = sc.brownian_levels();
    let counts = sc.jump_totals();
    let (d, m) = (problem.dim_d, problem.m());
    let mut worst: f64 = 0.0;
    for i in 0..problem.grid.steps() {
        for paths in atoms(tree, i).values() {
            let mass: f64 = paths.iter().map(|&p| w[p]).sum();
            let mut mean = 0.0;
            for &p in paths {
                let z: Vec<f64> = (0..d).map(|j| sol.z[[p, i + 1, j]]).collect();
                let u: Vec<f64> = (0..m).map(|k| sol.u[[p, i + 1, k]]).collect();
                let wv: Vec<f64> = (0..d).map(|j| levels[[p, i + 1, j]]).collect();
                let nv: Vec<f64> = (0..m).map(|k| counts[[p, i + 1, k]]).collect();
                let env = Env {
                    t: problem.grid.time(i + 1),
                    y: sol.y[[p, i + 1]],
                    z: &z,
                    u: &u,
                    w: &wv,
                    n: &nv,
                    intensities: lam,
                };
                let f = problem.generator.f.eval(&env).unwrap();
                let g = problem.generator.g.eval(&env).unwrap();
                let mut rhs = sol.y[[p, i + 1]] + f * dt + g * sc.db()[[p, i]] + sol.dk[[p, i]];
                for j in 0..d {
                    rhs -= sol.z[[p, i, j]] * sc.dw()[[p, i, j]];
                }
                for k in 0..m {
                    rhs -= sol.u[[p, i, k]] * (f64::from(sc.jumps()[[p, i, k]]) - lam[k] * dt);
                }
                mean += w[p] * (sol.y[[p, i]] - rhs);
            }
            worst = worst.max((mean / mass).abs());
        }
    }
    worst
}

#[test]
fn oracle_balance_holds_in_conditional_mean() {
    let cases = [
        Instance {
            f: "0.3*y - 0.2*z1 + 0.1*u1 + sin(w1)",
            g: "0.2*y + 0.1*z1",
            barrier: "min(w1, 0) - 0.2",
            terminal: "w1 + 0.5*n1",
            steps: 3,
            intensities: &[0.8],
            ..Default::default()
        },
        Instance {
            f: "abs(z1) - 0.5*abs(z2) + 0.2*y",
            g: "0.3*sin(y)",
            barrier: "w1 - w2 + 0.8 - 0.6*t",
            terminal: "pos(w1 - w2) + 0.3",
            steps: 3,
            d: 2,
            ..Default::default()
        },
    ];
    for inst in cases {
        let problem = inst.problem();
        let tree = inst.tree();
        let sol = solve_tree_exact(&problem, &tree).unwrap();
        let r = balance_residual(&problem, &tree, &sol);
        assert!(r < 1e-10, "balance residual {r}");
        assert!(sol.dk.iter().any(|&v| v > 0.0), "instance should touch the barrier");
    }
}

#[test]
fn solution_is_constant_on_conditioning_atoms() {
    let inst = Instance {
        f: "0.5*y + z1",
        g: "0.3*y",
        barrier: "min(w1, 0)",
        terminal: "w1*w1 + n1",
        steps: 3,
        intensities: &[1.0],
        ..Default::default()
    };
    let tree = inst.tree();
    let sol = solve_tree_exact(&inst.problem(), &tree).unwrap();
    for i in 0..3 {
        for paths in atoms(&tree, i).values() {
            let v = sol.y[[paths[0], i]];
            assert!(paths.iter().all(|&p| sol.y[[p, i]] == v));
        }
    }
}

fn saturated(ridge: f64) -> LsmcParams {
    LsmcParams {
        basis: BasisKind::Indicator,
        ridge,
        max_condition: 1e12,
    }
}

#[test]
fn saturated_regression_matches_tree() {
    let inst = Instance {
        f: "0.4*y - 0.3*abs(z1) + 0.2*u1 + cos(t)",
        g: "0.25*sin(y)",
        barrier: "min(w1, 0) - 0.3",
        terminal: "w1 + 0.4*n1",
        steps: 3,
        intensities: &[0.9],
        ..Default::default()
    };
    let problem = inst.problem();
    let tree = inst.tree();
    let exact = solve_tree_exact(&problem, &tree).unwrap();
    let reg = solve_lsmc(&problem, tree.scenarios(), &saturated(0.0)).unwrap();
    for (a, b) in exact.y.iter().zip(reg.y.iter()) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!((exact.y0() - reg.y0()).abs() < 1e-10);
    assert_eq!(reg.diagnostics.as_ref().unwrap().len(), 3);
}

#[test]
fn regression_recovers_brownian_representation() {
    let inst = Instance {
        terminal: "w1",
        steps: 10,
        ..Default::default()
    };
    let problem = inst.problem();
    let sc = simulate_scenarios(&problem.grid, 1, &problem.marks, 20_000, 11, DriverMode::Gaussian)
        .unwrap();
    let sol = solve_lsmc(&problem, &sc, &LsmcParams::default()).unwrap();
    assert!(sol.y0().abs() <= 3.0 * sol.y0_se, "Y0 {} SE {}", sol.y0(), sol.y0_se);
    let diag = sol.diagnostics.as_ref().unwrap();
    for i in 0..10 {
        let z_mean = sol.mean_at(sol.z.slice(ndarray::s![.., i, 0]).iter().copied());
        let se = diag[i].target_se[1];
        assert!((z_mean - 1.0).abs() <= 3.0 * se, "step {i}: Z {z_mean} SE {se}");
    }

    let inst = Instance {
        f: "1",
        terminal: "w1",
        steps: 10,
        ..Default::default()
    };
    let sol = solve_lsmc(&inst.problem(), &sc, &LsmcParams::default()).unwrap();
    assert!((sol.y0() - 1.0).abs() <= 3.0 * sol.y0_se);
}

#[test]
fn regression_error_shrinks_like_inverse_root_of_paths() {
    // linear drift keeps the discrete root exact: (1 + dt/2)^N E[max(W_T, 0)]
    let inst = Instance {
        f: "0.5*y",
        terminal: "pos(w1)",
        steps: 5,
        ..Default::default()
    };
    let problem = inst.problem();
    let dt = problem.grid.dt();
    let exact = (1.0 + 0.5 * dt).powi(5) * (1.0 / (2.0 * std::f64::consts::PI)).sqrt();
    let params = LsmcParams {
        ridge: 0.0,
        ..LsmcParams::default()
    };
    let rmse: Vec<f64> = [1000usize, 4000, 16000]
        .iter()
        .map(|&paths| {
            let seeds = 32;
            let ss: f64 = (0..seeds)
                .map(|seed| {
                    let sc = simulate_scenarios(&problem.grid, 1, &problem.marks, paths, 100 + seed, DriverMode::Gaussian)
                        .unwrap();
                    (solve_lsmc(&problem, &sc, &params).unwrap().y0() - exact).powi(2)
                })
                .sum();
            (ss / seeds as f64).sqrt()
        })
        .collect();
    let slope = (rmse[2] / rmse[0]).ln() / 16f64.ln();
    assert!((-0.75..=-0.25).contains(&slope), "rmse {rmse:?} slope {slope}");
}

#[test]
fn too_few_paths_for_basis() {
    let inst = Instance {
        terminal: "w1",
        ..Default::default()
    };
    let problem = inst.problem();
    let sc = simulate_scenarios(&problem.grid, 1, &problem.marks, 50, 1, DriverMode::Gaussian).unwrap();
    assert!(matches!(
        solve_lsmc(&problem, &sc, &LsmcParams::default()),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn collinear_basis_is_rank_deficient() {
    // the barrier value duplicates the W feature
    let inst = Instance {
        barrier: "w1 - 10",
        terminal: "w1",
        ..Default::default()
    };
    let problem = inst.problem();
    let sc = simulate_scenarios(&problem.grid, 1, &problem.marks, 2000, 3, DriverMode::Gaussian).unwrap();
    let params = LsmcParams {
        ridge: 0.0,
        ..LsmcParams::default()
    };
    match solve_lsmc(&problem, &sc, &params) {
        Err(Error::RankDeficient { step, basis, .. }) => {
            assert!(step < 4);
            assert!(basis.contains("polynomial"));
        }
        other => panic!("expected rank deficiency, got {other:?}"),
    }
}

#[test]
fn tree_and_lsmc_agree_on_problem_data() {
    let inst = Instance {
        terminal: "w1",
        ..Default::default()
    };
    let problem = inst.problem();
    let other = Instance {
        terminal: "w1",
        steps: 3,
        ..Default::default()
    }
    .tree();
    assert!(matches!(
        solve_tree_exact(&problem, &other),
        Err(Error::ShapeMismatch(_))
    ));
}
