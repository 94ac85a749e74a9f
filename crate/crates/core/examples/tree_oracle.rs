//! Exact solution on the enumerated two-point tree: an obstacle problem
//! whose answer is known and a jump-driven instance.

use rbdsdep::drivers::{build_time_grid, MarkSpace};
use rbdsdep::dsl::{parse_expr, GeneratorSpec};
use rbdsdep::solver::{solve_tree_exact, ProblemSpec, TreeModel};

fn problem(f: &str, g: &str, barrier: &str, terminal: &str, lam: &[f64]) -> rbdsdep::Result<ProblemSpec> {
    let e = |s: &str| parse_expr(s).unwrap();
    let gen = GeneratorSpec::new(e(f), e(g), 1.0, 0.5)?;
    let marks = MarkSpace::new(vec![1.0; lam.len()], lam.to_vec())?;
    ProblemSpec::new(gen, e(barrier), e(terminal), build_time_grid(1.0, 4)?, 1, marks)
}

fn main() -> rbdsdep::Result<()> {
    let snell = problem("0", "0", "1 - t", "0", &[])?;
    let tree = TreeModel::with_defaults(&snell.grid, snell.dim_d, &snell.marks)?;
    let sol = solve_tree_exact(&snell, &tree)?;
    println!("decreasing obstacle: Y0 = {:.12}, E K_T = {:.12}", sol.y0(), sol.k_terminal_mean());

    let jumps = problem("-0.1*y + 0.2*z1", "0.2*sin(y)", "min(w1, 0) - 0.2", "abs(w1) + 0.5*n1", &[0.8])?;
    let tree = TreeModel::with_defaults(&jumps.grid, jumps.dim_d, &jumps.marks)?;
    println!("tree: {} leaves, branching {}", tree.node_count(), tree.branching());
    let sol = solve_tree_exact(&jumps, &tree)?;
    let s = sol.summary();
    println!("jump instance: Y0 = {:.8}, E K_T = {:.6}", s.y0, s.k_t_mean);
    Ok(())
}
