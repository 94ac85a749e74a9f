#![allow(dead_code)]

use rbdsdep::drivers::{build_time_grid, MarkSpace};
use rbdsdep::dsl::{parse_expr, Expr, GeneratorSpec};
use rbdsdep::solver::{ProblemSpec, TreeModel};

pub fn expr(src: &str) -> Expr {
    parse_expr(src).unwrap_or_else(|e| panic!("{src}: {e}"))
}

pub struct Instance<'a> {
    pub f: &'a str,
    pub g: &'a str,
    pub barrier: &'a str,
    pub terminal: &'a str,
    pub horizon: f64,
    pub steps: usize,
    pub d: usize,
    pub intensities: &'a [f64],
    pub c: f64,
}

impl Default for Instance<'_> {
    fn default() -> Self {
        Instance {
            f: "0",
            g: "0",
            barrier: "-10",
            terminal: "0",
            horizon: 1.0,
            steps: 4,
            d: 1,
            intensities: &[],
            c: 1.0,
        }
    }
}

impl Instance<'_> {
    pub fn problem(&self) -> ProblemSpec {
        let gen = GeneratorSpec::new(expr(self.f), expr(self.g), self.c, 0.5).unwrap();
        let marks = MarkSpace::new(vec![1.0; self.intensities.len()], self.intensities.to_vec())
            .unwrap();
        ProblemSpec::new(
            gen,
            expr(self.barrier),
            expr(self.terminal),
            build_time_grid(self.horizon, self.steps).unwrap(),
            self.d,
            marks,
        )
        .unwrap()
    }

    pub fn tree(&self) -> TreeModel {
        let p = self.problem();
        TreeModel::with_defaults(&p.grid, p.dim_d, &p.marks).unwrap()
    }
}
