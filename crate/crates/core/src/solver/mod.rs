//! Backward solvers for the discrete reflected equation.
//!
//! Both backends run the same explicit recursion on a set of paths:
//!
//! ```text
//! Ỹ_i    = E_i[Y_{i+1} + f(t_{i+1}, Θ_{i+1}) dt + g(t_{i+1}, Θ_{i+1}) ΔB_i]
//! Z_i    = E_i[Y_{i+1} ΔW_i] / dt
//! U_i,k  = E_i[Y_{i+1} (c_i,k − λ_k dt)] / Var(c_i,k)
//! Y_i    = max(Ỹ_i, S_i),   ΔK_i = Y_i − Ỹ_i
//! ```
//!
//! with `Θ = (Y, Z, U)`, `Z_N = U_N = 0` and `E_i` conditioning on the `W`
//! and jump history before step `i` together with the `B` increments of
//! steps `i..N`.  The tree backend computes `E_i` exactly by grouping
//! enumerated paths; the regression backend projects onto a basis.

mod lsmc;
mod tree;

use std::io::Write;

use ndarray::{s, Array2, Array3};
use rayon::prelude::*;
use serde::Serialize;

use crate::drivers::{DriverMode, MarkSpace, ScenarioSet, TimeGrid};
use crate::dsl::{Env, Envelope, Expr, GeneratorSpec, Scope};
use crate::{Error, Result};

pub use lsmc::{solve_lsmc, BasisKind, LsmcParams, StepDiagnostics};
pub use tree::{solve_tree_exact, TreeModel, DEFAULT_TREE_BUDGET, DEFAULT_TREE_MAX_STEPS};

pub const SOLUTION_SCHEMA: &str = "rbdsdep/solution/v1";

/// Data of one reflected equation: coefficients, barrier, terminal value and
/// the driver dimensions.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub generator: GeneratorSpec,
    /// `S(t, w)`
    pub barrier: Expr,
    /// `ξ(w_T, n_T)`
    pub terminal: Expr,
    pub grid: TimeGrid,
    pub dim_d: usize,
    pub marks: MarkSpace,
}

impl ProblemSpec {
    pub fn new(
        generator: GeneratorSpec,
        barrier: Expr,
        terminal: Expr,
        grid: TimeGrid,
        dim_d: usize,
        marks: MarkSpace,
    ) -> Result<Self> {
        if dim_d == 0 {
            return Err(Error::InvalidArgument("W dimension must be at least 1".into()));
        }
        generator.check_scopes(dim_d, marks.len())?;
        barrier.check_scope(&Scope::barrier(dim_d))?;
        terminal.check_scope(&Scope::terminal(dim_d, marks.len()))?;
        if barrier.has_discontinuity() {
            log::warn!("barrier `{barrier}` contains a discontinuous primitive");
        }
        Ok(ProblemSpec {
            generator,
            barrier,
            terminal,
            grid,
            dim_d,
            marks,
        })
    }

    pub fn m(&self) -> usize {
        self.marks.len()
    }

    /// Same problem with another drift expression.
    pub fn with_f(&self, f: Expr) -> Self {
        let mut p = self.clone();
        p.generator.f = f;
        p
    }
}

/// Position of a generator evaluation: path index and time index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef {
    pub path: usize,
    pub step: usize,
}

/// Drift coefficient as seen by the solvers.  Implementations may depend on
/// the node, which lets a previous solution enter as a frozen process.
pub trait Generator: Sync {
    fn eval(&self, node: NodeRef, env: &Env<'_>) -> Result<f64>;
}

impl Generator for Expr {
    fn eval(&self, node: NodeRef, env: &Env<'_>) -> Result<f64> {
        Expr::eval(self, env).map_err(|e| {
            Error::eval(format!("`{self}` at path {} step {}", node.path, node.step), e)
        })
    }
}

impl Generator for Envelope {
    fn eval(&self, _node: NodeRef, env: &Env<'_>) -> Result<f64> {
        Envelope::eval(self, env)
    }
}

/// `y = max(ỹ, s)` and `ΔK = y − ỹ`; `ΔK (y − s) = 0` holds exactly.
pub fn reflect_step(y_tilde: f64, s: f64) -> (f64, f64) {
    if y_tilde >= s {
        (y_tilde, 0.0)
    } else {
        (s, s - y_tilde)
    }
}

/// One child of a node in a one-step conditional expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub prob: f64,
    pub y_next: f64,
    pub dw: Vec<f64>,
    pub jumps: Vec<u32>,
}

/// Law of the per-step jump counts, which fixes the variance used to
/// normalise `U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpLaw {
    Bernoulli,
    Poisson,
}

/// Projections `Z = E[Y ΔW]/dt` and `U_k = E[Y (c_k − λ_k dt)] / Var(c_k)`
/// over explicit branches.  Marks with `λ_k dt = 0` get `U_k = 0`.
pub fn extract_zu(
    branches: &[Branch],
    dt: f64,
    intensities: &[f64],
    law: JumpLaw,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let total: f64 = branches.iter().map(|b| b.prob).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "branch probabilities sum to {total}, not 1"
        )));
    }
    let d = branches.first().map_or(0, |b| b.dw.len());
    let mut z = vec![0.0; d];
    let mut u = vec![0.0; intensities.len()];
    for b in branches {
        if b.dw.len() != d || b.jumps.len() != intensities.len() {
            return Err(Error::ShapeMismatch("branch increments have unequal sizes".into()));
        }
        for j in 0..d {
            z[j] += b.prob * b.y_next * b.dw[j] / dt;
        }
        for (k, l) in intensities.iter().enumerate() {
            u[k] += b.prob * b.y_next * (f64::from(b.jumps[k]) - l * dt);
        }
    }
    for (k, l) in intensities.iter().enumerate() {
        let ldt = l * dt;
        let var = match law {
            JumpLaw::Bernoulli => ldt * (1.0 - ldt),
            JumpLaw::Poisson => ldt,
        };
        if ldt == 0.0 || var <= 0.0 {
            log::warn!("mark {} has degenerate compensator {ldt}; excluded", k + 1);
            u[k] = 0.0;
        } else {
            u[k] /= var;
        }
    }
    Ok((z, u))
}

/// Key of the conditioning atom of path `p` at step `i` for two-point
/// drivers: signs of `ΔW` and jump indicators before step `i`, signs of `ΔB`
/// from step `i` on.
pub(crate) fn atom_keys(sc: &ScenarioSet, step: usize) -> Result<Vec<u64>> {
    let (paths, n, d) = sc.dw.dim();
    let m = sc.marks.len();
    if sc.mode != DriverMode::TwoPoint {
        return Err(Error::InvalidArgument(
            "atom keys need two-point scenarios".into(),
        ));
    }
    if n * (d + m + 1) > 64 {
        return Err(Error::InvalidArgument(format!(
            "{n} steps with {} bits each do not fit a 64-bit atom key",
            d + m + 1
        )));
    }
    Ok((0..paths)
        .map(|p| {
            let mut key = 0u64;
            let mut push = |bit: bool| key = (key << 1) | u64::from(bit);
            for s in 0..step {
                for j in 0..d {
                    push(sc.dw[[p, s, j]] > 0.0);
                }
                for k in 0..m {
                    push(sc.jumps[[p, s, k]] > 0);
                }
            }
            for s in step..n {
                push(sc.db[[p, s]] > 0.0);
            }
            key
        })
        .collect())
}

/// Discrete solution `(Y, Z, U, K)` on every path, with `Ỹ`, `ΔK` and the
/// barrier values kept for validators.
#[derive(Debug, Clone)]
pub struct SolutionGrid {
    pub grid: TimeGrid,
    pub dim_d: usize,
    pub intensities: Vec<f64>,
    /// probability of every path (sums to one)
    pub weights: Vec<f64>,
    /// `(path, time index)`
    pub y: Array2<f64>,
    /// `(path, time index, component)`
    pub z: Array3<f64>,
    /// `(path, time index, mark)`
    pub u: Array3<f64>,
    pub k: Array2<f64>,
    pub y_tilde: Array2<f64>,
    /// `ΔK_i = K_{i+1} − K_i`, zero at `i = N`
    pub dk: Array2<f64>,
    pub barrier: Array2<f64>,
    /// regression diagnostics per step (regression backend only)
    pub diagnostics: Option<Vec<StepDiagnostics>>,
    /// standard error of the root estimate (zero for the exact tree)
    pub y0_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    pub y0: f64,
    pub y0_se: f64,
    pub y0_min: f64,
    pub y0_max: f64,
    pub k_t_mean: f64,
    pub paths: usize,
    pub steps: usize,
}

impl SolutionGrid {
    pub fn paths(&self) -> usize {
        self.y.nrows()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn mean_at(&self, values: impl Iterator<Item = f64>) -> f64 {
        values.zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Probability-weighted mean of `Y_0` over paths.  `Y_0` is random through
    /// the backward noise, so the per-path values are in [`Self::root_values`].
    pub fn y0(&self) -> f64 {
        self.mean_at(self.y.column(0).iter().copied())
    }

    pub fn root_values(&self) -> Vec<f64> {
        self.y.column(0).to_vec()
    }

    pub fn k_terminal_mean(&self) -> f64 {
        self.mean_at(self.k.column(self.steps()).iter().copied())
    }

    pub fn summary(&self) -> SolutionSummary {
        let roots = self.y.column(0);
        SolutionSummary {
            y0: self.y0(),
            y0_se: self.y0_se,
            y0_min: roots.iter().copied().fold(f64::INFINITY, f64::min),
            y0_max: roots.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            k_t_mean: self.k_terminal_mean(),
            paths: self.paths(),
            steps: self.steps(),
        }
    }

    /// One row per path and time index:
    /// `path,step,t,weight,Y,Z1..Zd,U1..Um,K,dK,S`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(
            out,
            "# schema={SOLUTION_SCHEMA} paths={} steps={}",
            self.paths(),
            self.steps()
        )?;
        let d = self.z.dim().2;
        let m = self.u.dim().2;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["path", "step", "t", "weight", "Y"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=d).map(|j| format!("Z{j}")));
        header.extend((1..=m).map(|k| format!("U{k}")));
        header.extend(["K", "dK", "S"].iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for p in 0..self.paths() {
            for i in 0..=self.steps() {
                let mut row = vec![
                    p.to_string(),
                    i.to_string(),
                    format!("{:e}", self.grid.time(i)),
                    format!("{:e}", self.weights[p]),
                    format!("{:e}", self.y[[p, i]]),
                ];
                row.extend((0..d).map(|j| format!("{:e}", self.z[[p, i, j]])));
                row.extend((0..m).map(|k| format!("{:e}", self.u[[p, i, k]])));
                row.push(format!("{:e}", self.k[[p, i]]));
                row.push(format!("{:e}", self.dk[[p, i]]));
                row.push(format!("{:e}", self.barrier[[p, i]]));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Conditional expectation at one step, applied to the target columns
/// `(y, z_1..z_d, u_1..u_m)`.
pub(crate) trait Projection {
    fn project(&mut self, step: usize, targets: &Array2<f64>) -> Result<Array2<f64>>;
}

/// Where conditional expectations come from.
#[derive(Debug, Clone, Copy)]
pub enum Backend<'a> {
    Tree(&'a TreeModel),
    Lsmc {
        scenarios: &'a ScenarioSet,
        params: &'a LsmcParams,
    },
}

impl<'a> Backend<'a> {
    pub fn scenarios(&self) -> &'a ScenarioSet {
        match self {
            Backend::Tree(t) => t.scenarios(),
            Backend::Lsmc { scenarios, .. } => scenarios,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Backend::Tree(_))
    }
}

/// Solves `problem` with the drift replaced by `f`; `g`, barrier and
/// terminal value come from `problem`.
pub fn solve_with(problem: &ProblemSpec, f: &dyn Generator, backend: Backend<'_>) -> Result<SolutionGrid> {
    match backend {
        Backend::Tree(tree) => {
            let mut proj = tree::GroupProjection::new(tree.scenarios());
            backward(problem, f, tree.scenarios(), &mut proj)
        }
        Backend::Lsmc { scenarios, params } => {
            let mut proj = lsmc::RegressionProjection::new(problem, scenarios, params)?;
            let mut sol = backward(problem, f, scenarios, &mut proj)?;
            sol.y0_se = proj.root_standard_error();
            sol.diagnostics = Some(proj.into_diagnostics());
            Ok(sol)
        }
    }
}

/// Solves `problem` with its own drift.
pub fn solve(problem: &ProblemSpec, backend: Backend<'_>) -> Result<SolutionGrid> {
    solve_with(problem, &problem.generator.f, backend)
}

pub(crate) struct PathState {
    pub w: Array3<f64>,
    pub n: Array3<f64>,
    pub barrier: Array2<f64>,
}

pub(crate) fn path_state(problem: &ProblemSpec, sc: &ScenarioSet) -> Result<PathState> {
    let w = sc.brownian_levels();
    let n = sc.jump_totals();
    let (paths, steps) = (sc.path_count(), sc.grid.steps());
    let mut barrier = Array2::zeros((paths, steps + 1));
    for p in 0..paths {
        for i in 0..=steps {
            let env = Env {
                w: w.slice(s![p, i, ..]).to_slice().expect("standard layout"),
                ..Env::at_time(sc.grid.time(i))
            };
            barrier[[p, i]] = problem
                .barrier
                .eval(&env)
                .map_err(|e| Error::eval(format!("barrier at path {p} step {i}"), e))?;
        }
    }
    Ok(PathState { w, n, barrier })
}

fn check_compatible(problem: &ProblemSpec, sc: &ScenarioSet) -> Result<()> {
    if sc.grid != problem.grid {
        return Err(Error::ShapeMismatch("scenario grid differs from problem grid".into()));
    }
    if sc.dim_d != problem.dim_d || sc.marks != problem.marks {
        return Err(Error::ShapeMismatch(
            "scenario dimensions or marks differ from problem".into(),
        ));
    }
    Ok(())
}

fn backward(
    problem: &ProblemSpec,
    f: &dyn Generator,
    sc: &ScenarioSet,
    proj: &mut dyn Projection,
) -> Result<SolutionGrid> {
    check_compatible(problem, sc)?;
    let grid = &problem.grid;
    let (paths, steps) = (sc.path_count(), grid.steps());
    let (d, m) = (problem.dim_d, problem.m());
    let dt = grid.dt();
    let lam = problem.marks.intensities().to_vec();
    let var = sc.compensated_variance();
    let state = path_state(problem, sc)?;

    let mut y = Array2::zeros((paths, steps + 1));
    let mut z = Array3::zeros((paths, steps + 1, d));
    let mut u = Array3::zeros((paths, steps + 1, m));
    let mut y_tilde = Array2::zeros((paths, steps + 1));
    let mut dk = Array2::zeros((paths, steps + 1));

    let t_end = grid.time(steps);
    for p in 0..paths {
        let env = Env {
            w: state.w.slice(s![p, steps, ..]).to_slice().expect("standard layout"),
            n: state.n.slice(s![p, steps, ..]).to_slice().expect("standard layout"),
            ..Env::at_time(t_end)
        };
        let xi = problem
            .terminal
            .eval(&env)
            .map_err(|e| Error::eval(format!("terminal value at path {p}"), e))?;
        let s_t = state.barrier[[p, steps]];
        if s_t > xi {
            return Err(Error::Compatibility {
                path: p,
                barrier: s_t,
                terminal: xi,
            });
        }
        y[[p, steps]] = xi;
        y_tilde[[p, steps]] = xi;
    }

    let cols = 1 + d + m;
    for i in (0..steps).rev() {
        let t_next = grid.time(i + 1);
        let rows: Vec<Result<Vec<f64>>> = (0..paths)
            .into_par_iter()
            .map(|p| {
                let zn = z.slice(s![p, i + 1, ..]);
                let un = u.slice(s![p, i + 1, ..]);
                let env = Env {
                    t: t_next,
                    y: y[[p, i + 1]],
                    z: zn.to_slice().expect("standard layout"),
                    u: un.to_slice().expect("standard layout"),
                    w: state.w.slice(s![p, i + 1, ..]).to_slice().expect("standard layout"),
                    n: state.n.slice(s![p, i + 1, ..]).to_slice().expect("standard layout"),
                    intensities: &lam,
                };
                let node = NodeRef { path: p, step: i + 1 };
                let fv = f.eval(node, &env)?;
                let gv = problem.generator.g.eval(&env).map_err(|e| {
                    Error::eval(format!("g at path {p} step {}", i + 1), e)
                })?;
                let yn = env.y;
                let mut row = Vec::with_capacity(cols);
                row.push(yn + fv * dt + gv * sc.db[[p, i]]);
                row.extend((0..d).map(|j| yn * sc.dw[[p, i, j]] / dt));
                row.extend((0..m).map(|k| {
                    let c = f64::from(sc.jumps[[p, i, k]]) - lam[k] * dt;
                    yn * c / var[k]
                }));
                Ok(row)
            })
            .collect();
        let mut targets = Array2::zeros((paths, cols));
        for (p, row) in rows.into_iter().enumerate() {
            for (c, v) in row?.into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        what: "regression target".into(),
                        index: vec![p, i, c],
                    });
                }
                targets[[p, c]] = v;
            }
        }
        let fitted = proj.project(i, &targets)?;
        for p in 0..paths {
            let (yi, dki) = reflect_step(fitted[[p, 0]], state.barrier[[p, i]]);
            y_tilde[[p, i]] = fitted[[p, 0]];
            y[[p, i]] = yi;
            dk[[p, i]] = dki;
            for j in 0..d {
                z[[p, i, j]] = fitted[[p, 1 + j]];
            }
            for k in 0..m {
                u[[p, i, k]] = fitted[[p, 1 + d + k]];
            }
        }
    }

    let mut k_proc = Array2::zeros((paths, steps + 1));
    for p in 0..paths {
        for i in 0..steps {
            k_proc[[p, i + 1]] = k_proc[[p, i]] + dk[[p, i]];
        }
    }
    Ok(SolutionGrid {
        grid: grid.clone(),
        dim_d: d,
        intensities: lam,
        weights: sc.weights(),
        y,
        z,
        u,
        k: k_proc,
        y_tilde,
        dk,
        barrier: state.barrier,
        diagnostics: None,
        y0_se: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect_step(2.0, 1.0), (2.0, 0.0));
        assert_eq!(reflect_step(0.5, 1.0), (1.0, 0.5));
        assert_eq!(reflect_step(1.0, 1.0), (1.0, 0.0));
    }

    fn two_point_branches(values: impl Fn(f64, u32) -> f64, dt: f64, ldt: f64) -> Vec<Branch> {
        let mut out = Vec::new();
        for sign in [-1.0, 1.0] {
            for jump in [0u32, 1] {
                let dw = sign * dt.sqrt();
                let prob = 0.5 * if jump == 1 { ldt } else { 1.0 - ldt };
                out.push(Branch {
                    prob,
                    y_next: values(dw, jump),
                    dw: vec![dw],
                    jumps: vec![jump],
                });
            }
        }
        out
    }

    #[test]
    fn extract_zu_examples() {
        let dt = 0.25;
        let lam = [0.8];
        let b = two_point_branches(|_, _| 3.0, dt, 0.2);
        let (z, u) = extract_zu(&b, dt, &lam, JumpLaw::Bernoulli).unwrap();
        assert!(z[0].abs() < 1e-15 && u[0].abs() < 1e-15);

        let b = two_point_branches(|dw, _| dw, dt, 0.2);
        let (z, _) = extract_zu(&b, dt, &lam, JumpLaw::Bernoulli).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-15);

        let b = two_point_branches(|_, c| f64::from(c) - 0.2, dt, 0.2);
        let (z, u) = extract_zu(&b, dt, &lam, JumpLaw::Bernoulli).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-14, "{u:?}");
        assert!(z[0].abs() < 1e-15);
    }

    #[test]
    fn extract_zu_rejects_bad_probabilities() {
        let mut b = two_point_branches(|_, _| 1.0, 0.25, 0.2);
        b[0].prob += 0.1;
        assert!(extract_zu(&b, 0.25, &[0.8], JumpLaw::Bernoulli).is_err());
    }

    #[test]
    fn zero_intensity_mark_is_excluded() {
        let b = vec![Branch {
            prob: 1.0,
            y_next: 2.0,
            dw: vec![0.0],
            jumps: vec![0],
        }];
        let (_, u) = extract_zu(&b, 0.1, &[0.0], JumpLaw::Poisson).unwrap();
        assert_eq!(u, vec![0.0]);
    }
}
