//! Regression solver on simulated Gaussian drivers, with the exact tree as
//! a reference on two-point drivers.

use rbdsdep::drivers::{build_time_grid, simulate_scenarios, DriverMode, MarkSpace};
use rbdsdep::dsl::{parse_expr, GeneratorSpec};
use rbdsdep::solver::{solve_lsmc, solve_tree_exact, BasisKind, LsmcParams, ProblemSpec, TreeModel};

fn main() -> rbdsdep::Result<()> {
    let e = |s: &str| parse_expr(s).unwrap();
    let gen = GeneratorSpec::new(e("-0.05*y + 0.1*z1"), e("0.1*sin(y)"), 1.0, 0.5)?;
    let marks = MarkSpace::new(vec![1.0], vec![0.5])?;
    let grid = build_time_grid(1.0, 10)?;
    let problem = ProblemSpec::new(gen, e("pos(1 - exp(0.2*w1))"), e("abs(exp(0.2*w1) - 1) + 0.1*n1"), grid.clone(), 1, marks.clone())?;

    for paths in [2_000, 8_000, 32_000] {
        let sc = simulate_scenarios(&grid, 1, &marks, paths, 7, DriverMode::Gaussian)?;
        let sol = solve_lsmc(&problem, &sc, &LsmcParams::default())?;
        let worst = sol
            .diagnostics
            .as_ref()
            .map(|d| d.iter().map(|s| s.condition).fold(0.0, f64::max))
            .unwrap_or(0.0);
        println!("P = {paths:>6}: Y0 = {:.5} ± {:.5}, worst condition {worst:.2e}", sol.y0(), sol.y0_se);
    }

    let small = ProblemSpec { grid: build_time_grid(1.0, 3)?, ..problem };
    let tree = TreeModel::with_defaults(&small.grid, 1, &small.marks)?;
    let exact = solve_tree_exact(&small, &tree)?;
    let params = LsmcParams { basis: BasisKind::Indicator, ridge: 0.0, max_condition: 1e12 };
    let reg = solve_lsmc(&small, tree.scenarios(), &params)?;
    println!("saturated basis on the tree: {:.12} vs exact {:.12}", reg.y0(), exact.y0());
    Ok(())
}
