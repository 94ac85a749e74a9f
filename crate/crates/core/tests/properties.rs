mod common;

use common::Instance;
use proptest::prelude::*;
use rbdsdep::analysis::skorokhod_check;
use rbdsdep::solver::{reflect_step, solve_tree_exact};

#[derive(Debug, Clone)]
struct Coeffs {
    a: f64,
    b: f64,
    c: f64,
    e: f64,
    jump: f64,
    drop: f64,
}

fn coeffs() -> impl Strategy<Value = Coeffs> {
    (-1.0f64..1.0, -0.8f64..0.8, -1.0f64..1.0, -0.3f64..0.3, 0.0f64..1.0, 0.0f64..1.0).prop_map(
        |(a, b, c, e, jump, drop)| Coeffs {
            a,
            b,
            c,
            e,
            jump,
            drop,
        },
    )
}

struct Texts {
    f: String,
    g: String,
    terminal: String,
    barrier: String,
}

impl Coeffs {
    fn texts(&self, shift: f64) -> Texts {
        Texts {
            f: format!("{} + {}*y + {}*w1", self.a, self.b, self.c),
            g: format!("{}*sin(y)", self.e),
            terminal: format!("w1 + {}*n1 + {shift}", self.jump),
            barrier: format!("min(w1, 0) - {}", self.drop),
        }
    }
}

fn instance(t: &Texts) -> Instance<'_> {
    Instance {
        f: &t.f,
        g: &t.g,
        terminal: &t.terminal,
        barrier: &t.barrier,
        steps: 3,
        intensities: &[0.8],
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reflection_is_complementary(y in -1e6f64..1e6, s in -1e6f64..1e6) {
        let (out, dk) = reflect_step(y, s);
        prop_assert!(out >= s && dk >= 0.0);
        prop_assert_eq!(dk * (out - s), 0.0);
        prop_assert_eq!(out, y.max(s));
    }

    #[test]
    fn tree_solutions_satisfy_the_skorokhod_conditions(c in coeffs()) {
        let t = c.texts(0.0);
        let inst = instance(&t);
        let sol = solve_tree_exact(&inst.problem(), &inst.tree()).unwrap();
        let rep = skorokhod_check(&sol);
        prop_assert!(rep.passed() && rep.bitwise_zero, "{rep:?}");
        prop_assert!(sol.y.iter().zip(sol.barrier.iter()).all(|(y, s)| y >= s));
        prop_assert!(sol.dk.iter().all(|&d| d >= 0.0));
        for p in 0..sol.paths() {
            prop_assert_eq!(sol.k[[p, 0]], 0.0);
            for i in 0..sol.steps() {
                prop_assert!(sol.k[[p, i + 1]] >= sol.k[[p, i]]);
            }
        }
    }

    #[test]
    fn root_is_monotone_in_the_terminal_shift(c in coeffs(), shift in 0.0f64..1.0) {
        let (lo, hi) = (c.texts(0.0), c.texts(shift));
        let (lo, hi) = (instance(&lo), instance(&hi));
        let tree = lo.tree();
        let y_lo = solve_tree_exact(&lo.problem(), &tree).unwrap().y0();
        let y_hi = solve_tree_exact(&hi.problem(), &tree).unwrap().y0();
        prop_assert!(y_hi >= y_lo - 1e-12, "{y_lo} > {y_hi}");
    }
}
