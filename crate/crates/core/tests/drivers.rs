use rbdsdep::drivers::{build_time_grid, simulate_scenarios, DriverMode, MarkSpace, ScenarioSet};

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn gaussian(lam: f64, steps: usize, paths: usize, seed: u64) -> ScenarioSet {
    let grid = build_time_grid(1.0, steps).unwrap();
    let marks = MarkSpace::new(vec![1.0], vec![lam]).unwrap();
    simulate_scenarios(&grid, 2, &marks, paths, seed, DriverMode::Gaussian).unwrap()
}

#[test]
fn gaussian_increment_variance_matches_dt() {
    let sc = gaussian(1.0, 10, 10_000, 11);
    let dt = sc.grid().dt();
    for i in 0..10 {
        for j in 0..2 {
            let sq: Vec<f64> = (0..sc.path_count()).map(|p| sc.dw()[[p, i, j]].powi(2)).collect();
            let (m, se) = mean_se(&sq);
            assert!((m - dt).abs() <= 5.0 * se, "step {i} comp {j}: {m} vs {dt} (se {se})");
        }
        let sq: Vec<f64> = (0..sc.path_count()).map(|p| sc.db()[[p, i]].powi(2)).collect();
        let (m, se) = mean_se(&sq);
        assert!((m - dt).abs() <= 5.0 * se);
    }
}

#[test]
fn jump_counts_have_rate_lambda() {
    let sc = gaussian(2.0, 100, 10_000, 12);
    let totals = sc.jump_totals();
    let counts: Vec<f64> = (0..sc.path_count()).map(|p| totals[[p, 100, 0]]).collect();
    let (m, se) = mean_se(&counts);
    assert!((m - 2.0).abs() <= 5.0 * se, "{m} (se {se})");

    let dt = sc.grid().dt();
    let comp: Vec<f64> = (0..sc.path_count())
        .map(|p| (0..100).map(|i| f64::from(sc.jumps()[[p, i, 0]]) - 2.0 * dt).sum())
        .collect();
    let (m, se) = mean_se(&comp);
    assert!(m.abs() <= 5.0 * se, "{m} (se {se})");
}

#[test]
fn two_point_moments_are_exact() {
    let grid = build_time_grid(1.0, 8).unwrap();
    let marks = MarkSpace::new(vec![1.0], vec![0.5]).unwrap();
    let sc = simulate_scenarios(&grid, 1, &marks, 500, 3, DriverMode::TwoPoint).unwrap();
    let dt = grid.dt();
    for &x in sc.dw().iter().chain(sc.db().iter()) {
        assert_eq!(x.abs(), dt.sqrt());
    }
    assert!(sc.jumps().iter().all(|&c| c <= 1));
    let v = sc.compensated_variance()[0];
    assert_eq!(v, 0.5 * dt * (1.0 - 0.5 * dt));
}

#[test]
fn scenarios_do_not_depend_on_the_pool() {
    let make = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| gaussian(1.5, 6, 2_000, 99))
    };
    let one = make(1);
    for threads in [2, 8] {
        let other = make(threads);
        assert_eq!(one.dw(), other.dw());
        assert_eq!(one.db(), other.db());
        assert_eq!(one.jumps(), other.jumps());
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    one.write_csv(&mut a).unwrap();
    make(4).write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn levels_and_remainders_are_consistent() {
    let sc = gaussian(1.0, 5, 50, 4);
    let w = sc.brownian_levels();
    let r = sc.backward_remainders();
    for p in 0..50 {
        assert_eq!(w[[p, 0, 0]], 0.0);
        assert_eq!(r[[p, 5]], 0.0);
        let total: f64 = (0..5).map(|i| sc.db()[[p, i]]).sum();
        assert!((r[[p, 0]] - total).abs() < 1e-14);
    }
}
