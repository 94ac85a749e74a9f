//! Parses generator expressions and runs the sampled hypothesis checks.

use rbdsdep::dsl::{
    check_g_contraction, check_linear_growth, check_pi_minorant, parse_expr, sample_cloud,
    sample_ordered_pairs, sample_pairs, CloudSpec, GeneratorSpec,
};

fn main() -> rbdsdep::Result<()> {
    let lam = [0.7];
    let spec = CloudSpec::standard(1, &lam, 1.0);
    let cloud = sample_cloud(&spec);
    let pairs = sample_pairs(&spec);
    let ordered = sample_ordered_pairs(&spec);

    for (f, g) in [("sign(y) + 0.5*z1", "0.3*sin(y)"), ("y*y", "0.5*z1"), ("indicator_pos(y)", "z1")] {
        let f_expr = parse_expr(f).map_err(|e| rbdsdep::Error::Config(e.to_string()))?;
        let g_expr = parse_expr(g).map_err(|e| rbdsdep::Error::Config(e.to_string()))?;
        println!("f = {f_expr}, g = {g_expr}, discontinuous: {}", f_expr.has_discontinuity());
        let gen = GeneratorSpec::new(f_expr, g_expr, 1.0, 0.5)?.with_pi(parse_expr("-abs(z1)").unwrap());
        for rep in [
            check_linear_growth(&gen, &cloud, &lam)?,
            check_g_contraction(&gen, &pairs, &lam)?,
            check_pi_minorant(&gen, &ordered, &lam)?,
        ] {
            println!(
                "  {:<12} passed: {:<5} worst ratio {:.3} ({} violations in {} samples)",
                rep.hypothesis,
                rep.passed(),
                rep.worst_ratio,
                rep.violations.len(),
                rep.samples
            );
        }
    }

    match parse_expr("max(y, ") {
        Ok(_) => unreachable!(),
        Err(e) => println!("parse error: {e}"),
    }
    Ok(())
}
