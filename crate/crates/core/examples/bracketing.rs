//! Bracketing iteration for a discontinuous drift, starting from the lower
//! anchor and staying below the upper anchor.

use rbdsdep::drivers::{build_time_grid, MarkSpace};
use rbdsdep::dsl::{parse_expr, GeneratorSpec};
use rbdsdep::schemes::{run_bracketing_sequence, StopRule};
use rbdsdep::solver::{Backend, ProblemSpec, TreeModel};

fn main() -> rbdsdep::Result<()> {
    let e = |s: &str| parse_expr(s).unwrap();
    let gen = GeneratorSpec::new(e("indicator_pos(y)"), e("0.2*sin(y)"), 1.0, 0.5)?
        .with_pi(e("0"))
        .with_ft(e("1"));
    let marks = MarkSpace::new(vec![1.0], vec![1.0])?;
    let problem = ProblemSpec::new(gen, e("min(w1, 0) - 0.5"), e("w1 + 0.3*n1 - 0.1"), build_time_grid(1.0, 4)?, 1, marks)?;
    let tree = TreeModel::with_defaults(&problem.grid, 1, &problem.marks)?;

    let run = run_bracketing_sequence(&problem, 6, Backend::Tree(&tree), StopRule::default())?;
    let (lower, upper) = run.anchors.as_ref().unwrap();
    println!("lower anchor Y0 = {:.8}", lower.y0());
    for (k, (y0, margin)) in run.y0_series.iter().zip(&run.margins).enumerate() {
        println!("iterate {}: Y0 = {y0:.8}, sandwich margin {margin:.2e}", k + 1);
    }
    println!("upper anchor Y0 = {:.8}", upper.y0());
    println!("stopped early: {}", run.stopped_early);
    Ok(())
}
