//! Discrete Itô identity for a mixed process with Brownian, backward
//! Brownian, jump and increasing parts.

use rbdsdep::analysis::{ito_residual_check, ItoComponents};
use rbdsdep::drivers::{build_time_grid, simulate_scenarios, DriverMode, MarkSpace};
use rbdsdep::dsl::parse_expr;

fn main() -> rbdsdep::Result<()> {
    let e = |s: &str| parse_expr(s).unwrap();
    let grid = build_time_grid(1.0, 20)?;
    let marks = MarkSpace::new(vec![1.0], vec![0.7])?;
    let sc = simulate_scenarios(&grid, 1, &marks, 10_000, 3, DriverMode::Gaussian)?;
    let comp = ItoComponents {
        alpha0: 0.5,
        beta: e("cos(t) - 0.2*w1"),
        gamma: e("0.3 + 0.1*sin(w1)"),
        eta: vec![e("0.5 + 0.2*cos(w1)")],
        sigma: vec![e("0.4*exp(-n1)")],
        k_rate: e("0.2 + 0.1*pos(w1)"),
    };
    let rep = ito_residual_check(&sc, &comp)?;
    println!("identity residual {:.2e}", rep.identity_residual);
    for t in rep.martingale_terms.iter().chain(&rep.quadratic_variation) {
        println!("{:<28} {:>10.5} ± {:.5}", t.name, t.mean, t.se);
    }
    let last = rep.second_moment.last().unwrap();
    println!("E alpha_T^2 = {:.5} ± {:.5}", last.mean, last.se);
    Ok(())
}
