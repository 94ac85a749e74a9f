//! Samples Brownian, backward Brownian and Poisson drivers and prints a few
//! empirical moments next to their exact values.

use rbdsdep::drivers::{build_time_grid, simulate_scenarios, DriverMode, MarkSpace};

fn main() -> rbdsdep::Result<()> {
    let grid = build_time_grid(1.0, 50)?;
    let marks = MarkSpace::new(vec![1.0, -0.5], vec![2.0, 0.5])?;
    let sc = simulate_scenarios(&grid, 2, &marks, 20_000, 42, DriverMode::Gaussian)?;
    let paths = sc.path_count() as f64;

    let w = sc.brownian_levels();
    let n = grid.steps();
    let var_w: f64 = (0..sc.path_count()).map(|p| w[[p, n, 0]].powi(2)).sum::<f64>() / paths;
    println!("E W_T^2      = {var_w:.4}  (exact {})", grid.horizon());

    let r = sc.backward_remainders();
    let var_b: f64 = (0..sc.path_count()).map(|p| r[[p, 0]].powi(2)).sum::<f64>() / paths;
    println!("E B_T^2      = {var_b:.4}  (exact {})", grid.horizon());

    let counts = sc.jump_totals();
    for (k, lam) in marks.intensities().iter().enumerate() {
        let mean: f64 = (0..sc.path_count()).map(|p| counts[[p, n, k]]).sum::<f64>() / paths;
        println!("E N_{}(T)     = {mean:.4}  (exact {})", k + 1, lam * grid.horizon());
    }

    let mut head = Vec::new();
    simulate_scenarios(&grid, 2, &marks, 1, 42, DriverMode::TwoPoint)?.write_csv(&mut head)?;
    let text = String::from_utf8_lossy(&head);
    for line in text.lines().take(5) {
        println!("{line}");
    }
    Ok(())
}
