//! Monotone approximation of a continuous, non-Lipschitz drift from below
//! and above by envelope sequences.

use rbdsdep::drivers::{build_time_grid, MarkSpace};
use rbdsdep::dsl::{parse_expr, EnvelopeParams, GeneratorSpec};
use rbdsdep::schemes::{run_inf_envelope_sequence, run_sup_envelope_sequence, StopRule};
use rbdsdep::solver::{Backend, ProblemSpec, TreeModel};

fn main() -> rbdsdep::Result<()> {
    let e = |s: &str| parse_expr(s).unwrap();
    let gen = GeneratorSpec::new(e("sqrt(abs(y))"), e("0.2*sin(y)"), 1.0, 0.5)?;
    let marks = MarkSpace::new(vec![1.0], vec![1.0])?;
    let problem = ProblemSpec::new(gen, e("min(w1, 0) - 0.1"), e("w1 + 0.5*n1"), build_time_grid(0.5, 5)?, 1, marks)?;
    let tree = TreeModel::with_defaults(&problem.grid, 1, &problem.marks)?;
    let env = EnvelopeParams::boxed(1.0, 1, 1, (-6.0, 6.0), (-50.0, 50.0), 201, 1.0)?;
    let ns = [1.0, 2.0, 4.0, 8.0];

    let inf = run_inf_envelope_sequence(&problem, &env, &ns, Backend::Tree(&tree), StopRule::never())?;
    let sup = run_sup_envelope_sequence(&problem, &env, &ns, Backend::Tree(&tree), StopRule::never())?;
    println!("{:>4} {:>12} {:>12} {:>10}", "n", "inf Y0", "sup Y0", "|Z| inf");
    for k in 0..ns.len() {
        println!(
            "{:>4} {:>12.8} {:>12.8} {:>10.5}",
            ns[k], inf.y0_series[k], sup.y0_series[k], inf.norms[k].z_m2
        );
    }
    println!("upper bound V0 = {:.6}", inf.bound.as_ref().unwrap().y0());
    inf.write_csv(std::io::stdout().lock())?;
    Ok(())
}
