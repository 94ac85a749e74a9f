//! Inf- and sup-convolutions of a step function for increasing indices.

use rbdsdep::dsl::{inf_convolution, parse_expr, sup_convolution, tabulate_envelope, Env, EnvelopeKind, EnvelopeParams};

fn main() -> rbdsdep::Result<()> {
    let f = parse_expr("indicator_pos(y) + 0.1*abs(y)").unwrap();
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "y", "f", "inf n=4", "sup n=4", "inf n=32");
    let p4 = EnvelopeParams::new(4.0, vec![-3.0], vec![3.0], 201, 1.0)?;
    let p32 = p4.with_n(32.0)?;
    for k in 0..=10 {
        let y = -0.5 + 0.1 * k as f64;
        let at = Env { y, ..Env::at_time(0.0) };
        println!(
            "{y:>6.2} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            f.eval(&at).unwrap(),
            inf_convolution(&f, &p4, &at)?,
            sup_convolution(&f, &p4, &at)?,
            inf_convolution(&f, &p32, &at)?,
        );
    }

    let coarse = EnvelopeParams::new(2.0, vec![-1.0], vec![1.0], 5, 1.0)?;
    let table = tabulate_envelope(&f, &coarse, EnvelopeKind::Inf, &Env::at_time(0.0))?;
    table.write_csv(std::io::stdout().lock())?;
    Ok(())
}
