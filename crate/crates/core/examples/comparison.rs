//! Certifies the premises of an ordered pair of problems and measures the
//! node-wise ordering of their solutions.

use rbdsdep::analysis::compare_solutions;
use rbdsdep::drivers::{build_time_grid, MarkSpace};
use rbdsdep::dsl::{parse_expr, GeneratorSpec};
use rbdsdep::solver::{Backend, ProblemSpec, TreeModel};

fn problem(f: &str, terminal: &str) -> rbdsdep::Result<ProblemSpec> {
    let e = |s: &str| parse_expr(s).unwrap();
    let gen = GeneratorSpec::new(e(f), e("0.2*sin(y)"), 1.0, 0.5)?;
    let marks = MarkSpace::new(vec![1.0], vec![0.8])?;
    ProblemSpec::new(gen, e("min(w1, 0) - 0.5"), e(terminal), build_time_grid(1.0, 3)?, 1, marks)
}

fn main() -> rbdsdep::Result<()> {
    let lo = problem("0.2 + 0.5*y - 0.3*w1", "w1 + 0.5*n1")?;
    let tree = TreeModel::with_defaults(&lo.grid, 1, &lo.marks)?;
    for (f, xi) in [
        ("0.7 + 0.5*y - 0.3*w1", "w1 + 0.5*n1 + 0.2*abs(w1)"),
        ("-0.7 + 0.5*y - 0.3*w1", "w1 + 0.5*n1"),
    ] {
        let hi = problem(f, xi)?;
        let (rep, _) = compare_solutions(&lo, &hi, Backend::Tree(&tree), 1e-12)?;
        println!("upper f = {f}");
        for p in &rep.premises {
            println!("  premise {:<10} passed: {:<5} worst margin {:.3e}", p.name, p.passed, p.worst_margin);
        }
        println!("  verdict {:?}, margin {:?}, root gap {:?}", rep.verdict, rep.conclusion_margin, rep.root_gap);
    }
    Ok(())
}
