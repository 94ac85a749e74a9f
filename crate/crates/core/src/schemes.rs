//! Approximation pipelines built from repeated solves: monotone sequences of
//! Lipschitz envelopes, the dominating solution `V`, and the bracketing
//! iteration for discontinuous drifts.
//!
//! Discrete ordering between two solves needs a monotone one-step map
//! `y ↦ y + f(y) dt + g(y) ΔB`; with an `n`-Lipschitz envelope and a
//! `L_g`-Lipschitz `g` this holds when `n dt + L_g √dt ≤ 1`, and drifts that
//! depend on `z` or `u` can break it because `Z` enters with a lag.

use std::io::Write;

use ndarray::s;
use serde::Serialize;

use crate::analysis::{norm_report, NormReport};
use crate::dsl::{
    check_dominated_growth, check_g_contraction, check_linear_growth, check_pi_minorant,
    parse_expr, sample_cloud, sample_ordered_pairs, sample_pairs, CheckReport, CloudSpec, Env,
    Envelope, EnvelopeKind, EnvelopeParams, Expr,
};
use crate::solver::{solve_with, Backend, Generator, NodeRef, ProblemSpec, SolutionGrid};
use crate::{Error, Result};

pub const SEQUENCE_SCHEMA: &str = "rbdsdep/sequence/v1";

/// Node-wise ordering tolerance of the bracketing sandwich.
pub const SANDWICH_TOL: f64 = 1e-10;

/// Default index list before clipping to `n ≥ C`.
pub const DEFAULT_NS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceMode {
    InfEnvelope,
    Bracketing,
    SupEnvelope,
}

/// Stop when successive root estimates differ by less than this.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub root_tolerance: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            root_tolerance: Some(1e-9),
        }
    }
}

impl StopRule {
    pub fn never() -> Self {
        StopRule {
            root_tolerance: None,
        }
    }

    fn done(&self, series: &[f64]) -> bool {
        match (self.root_tolerance, series) {
            (Some(tol), [.., a, b]) => (b - a).abs() < tol,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub mode: SequenceMode,
    /// convolution index `n`, or the iterate number for bracketing
    pub index_set: Vec<f64>,
    pub solutions: Vec<SolutionGrid>,
    pub y0_series: Vec<f64>,
    pub norms: Vec<NormReport>,
    /// `sqrt(E Σ |Zⁿ⁺¹ − Zⁿ|² dt)` between consecutive members
    pub z_diff_norms: Vec<f64>,
    /// `sqrt(E Σ ‖Uⁿ⁺¹ − Uⁿ‖²_λ dt)` between consecutive members
    pub u_diff_norms: Vec<f64>,
    /// smallest node-wise gap in the ordering each member must satisfy
    pub margins: Vec<f64>,
    /// `V` for the inf sequence, the `−H` solution for the sup sequence
    pub bound: Option<SolutionGrid>,
    /// lower and upper anchors of the bracketing iteration
    pub anchors: Option<(SolutionGrid, SolutionGrid)>,
    pub hypotheses: Vec<CheckReport>,
    pub stopped_early: bool,
}

impl SequenceRun {
    fn new(mode: SequenceMode) -> Self {
        SequenceRun {
            mode,
            index_set: Vec::new(),
            solutions: Vec::new(),
            y0_series: Vec::new(),
            norms: Vec::new(),
            z_diff_norms: Vec::new(),
            u_diff_norms: Vec::new(),
            margins: Vec::new(),
            bound: None,
            anchors: None,
            hypotheses: Vec::new(),
            stopped_early: false,
        }
    }

    fn push(&mut self, index: f64, sol: SolutionGrid, margin: f64) -> Result<()> {
        if let Some(prev) = self.solutions.last() {
            let (dz, du) = diff_norms(prev, &sol);
            self.z_diff_norms.push(dz);
            self.u_diff_norms.push(du);
        }
        self.norms.push(norm_report(&sol)?);
        self.index_set.push(index);
        self.y0_series.push(sol.y0());
        self.margins.push(margin);
        self.solutions.push(sol);
        Ok(())
    }

    pub fn last(&self) -> Option<&SolutionGrid> {
        self.solutions.last()
    }

    /// Largest decrease of the root series in the direction it must move
    /// (zero when the series is monotone).
    pub fn worst_monotonicity_violation(&self) -> f64 {
        let sign = if self.mode == SequenceMode::SupEnvelope { -1.0 } else { 1.0 };
        self.y0_series
            .windows(2)
            .map(|w| (sign * (w[0] - w[1])).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Rows `index,Y0,K_T,Z_norm,U_norm,margin`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        let mode = serde_json::to_value(self.mode)?;
        writeln!(
            out,
            "# schema={SEQUENCE_SCHEMA} mode={}",
            mode.as_str().unwrap_or_default()
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "Y0", "K_T", "Z_norm", "U_norm", "margin"])?;
        for (i, sol) in self.solutions.iter().enumerate() {
            w.write_record([
                format!("{}", self.index_set[i]),
                format!("{:e}", self.y0_series[i]),
                format!("{:e}", sol.k_terminal_mean()),
                format!("{:e}", self.norms[i].z_m2),
                format!("{:e}", self.norms[i].u_l2),
                format!("{:e}", self.margins[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn diff_norms(a: &SolutionGrid, b: &SolutionGrid) -> (f64, f64) {
    let dt = a.grid.dt();
    let steps = a.steps();
    let mut dz = 0.0;
    let mut du = 0.0;
    for p in 0..a.paths() {
        let w = a.weights[p];
        for i in 0..steps {
            let zs = a.z.slice(s![p, i, ..]);
            let zt = b.z.slice(s![p, i, ..]);
            dz += w * dt * zs.iter().zip(zt.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            let us = a.u.slice(s![p, i, ..]);
            let ut = b.u.slice(s![p, i, ..]);
            du += w
                * dt
                * us.iter()
                    .zip(ut.iter())
                    .zip(&a.intensities)
                    .map(|((x, y), l)| l * (x - y).powi(2))
                    .sum::<f64>();
        }
    }
    (dz.sqrt(), du.sqrt())
}

/// `min over nodes of (upper − lower)`.
pub fn node_margin(lower: &SolutionGrid, upper: &SolutionGrid) -> f64 {
    lower
        .y
        .iter()
        .zip(upper.y.iter())
        .map(|(l, u)| u - l)
        .fold(f64::INFINITY, f64::min)
}

/// Clips an index list to `n ≥ C`.
pub fn clip_indices(ns: &[f64], growth_c: f64) -> Vec<f64> {
    ns.iter().copied().filter(|&n| n >= growth_c).collect()
}

fn growth_terms(c: f64) -> String {
    format!("{c} * (abs(y) + znorm + unorm)")
}

/// `H = C(1 + |y| + |z| + |u|)`.
pub fn dominating_generator(growth_c: f64) -> Expr {
    parse_expr(&format!("{growth_c} * (1 + abs(y) + znorm + unorm)")).expect("fixed grammar")
}

fn hypothesis_cloud(problem: &ProblemSpec) -> CloudSpec {
    CloudSpec::standard(problem.dim_d, problem.marks.intensities(), problem.grid.horizon())
}

fn require(report: CheckReport) -> Result<CheckReport> {
    if report.passed() {
        Ok(report)
    } else {
        let v = &report.violations[0];
        Err(Error::Hypothesis {
            hypothesis: report.hypothesis.clone(),
            detail: format!(
                "{} violations, first at {:?} ({} vs {})",
                report.violations.len(),
                v.coordinates,
                v.lhs,
                v.rhs
            ),
        })
    }
}

/// Solution with drift `H`; dominates every inf-envelope member.
pub fn solve_upper_bound_v(problem: &ProblemSpec, backend: Backend<'_>) -> Result<SolutionGrid> {
    let h = dominating_generator(problem.generator.growth_c);
    solve_with(problem, &h, backend)
}

/// Solves with `f_n = inf_convolution(f, n)` for each `n` in `ns` and with
/// `H` for the bound `V`.  Margins are `min(Yⁿ − Yⁿ⁻¹, V − Yⁿ)` node-wise.
pub fn run_inf_envelope_sequence(
    problem: &ProblemSpec,
    env: &EnvelopeParams,
    ns: &[f64],
    backend: Backend<'_>,
    stop: StopRule,
) -> Result<SequenceRun> {
    run_envelope_sequence(problem, env, ns, backend, stop, EnvelopeKind::Inf)
}

/// Mirror of [`run_inf_envelope_sequence`] with sup-convolutions; the bound
/// is the solution with drift `−H` and the root series is nonincreasing.
pub fn run_sup_envelope_sequence(
    problem: &ProblemSpec,
    env: &EnvelopeParams,
    ns: &[f64],
    backend: Backend<'_>,
    stop: StopRule,
) -> Result<SequenceRun> {
    run_envelope_sequence(problem, env, ns, backend, stop, EnvelopeKind::Sup)
}

fn run_envelope_sequence(
    problem: &ProblemSpec,
    env: &EnvelopeParams,
    ns: &[f64],
    backend: Backend<'_>,
    stop: StopRule,
    kind: EnvelopeKind,
) -> Result<SequenceRun> {
    if ns.is_empty() {
        return Err(Error::InvalidArgument("empty index list".into()));
    }
    let c = problem.generator.growth_c;
    if let Some(n) = ns.iter().find(|&&n| n < c) {
        return Err(Error::InvalidArgument(format!(
            "index n = {n} is below the growth constant C = {c}"
        )));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("index list must be increasing".into()));
    }
    let cloud = sample_cloud(&hypothesis_cloud(problem));
    let growth = require(check_linear_growth(&problem.generator, &cloud, problem.marks.intensities())?)?;

    let mode = match kind {
        EnvelopeKind::Inf => SequenceMode::InfEnvelope,
        EnvelopeKind::Sup => SequenceMode::SupEnvelope,
    };
    let mut run = SequenceRun::new(mode);
    run.hypotheses.push(growth);
    let bound = match kind {
        EnvelopeKind::Inf => solve_upper_bound_v(problem, backend)?,
        EnvelopeKind::Sup => {
            let h = dominating_generator(c);
            solve_with(problem, &Expr::Neg(Box::new(h)), backend)?
        }
    };
    for &n in ns {
        let params = env.with_n(n)?;
        let gen = Envelope::new(
            problem.generator.f.clone(),
            params,
            kind,
            problem.dim_d,
            problem.m(),
        )?;
        let sol = solve_with(problem, &gen, backend)?;
        let mut margin = match kind {
            EnvelopeKind::Inf => node_margin(&sol, &bound),
            EnvelopeKind::Sup => node_margin(&bound, &sol),
        };
        if let Some(prev) = run.solutions.last() {
            margin = margin.min(match kind {
                EnvelopeKind::Inf => node_margin(prev, &sol),
                EnvelopeKind::Sup => node_margin(&sol, prev),
            });
        }
        log::info!("{mode:?} n = {n}: Y0 = {:.12}, margin = {margin:e}", sol.y0());
        run.push(n, sol, margin)?;
        if stop.done(&run.y0_series) {
            run.stopped_early = run.index_set.len() < ns.len();
            break;
        }
    }
    run.bound = Some(bound);
    Ok(run)
}

/// Drift `f(t, Ŷ, Ẑ, Û) + π(t, y − Ŷ, z − Ẑ, u − Û)` with `(Ŷ, Ẑ, Û)` a
/// previous solution frozen node by node.
pub struct FrozenGenerator<'a> {
    pub f: &'a Expr,
    pub pi: &'a Expr,
    pub previous: &'a SolutionGrid,
}

impl Generator for FrozenGenerator<'_> {
    fn eval(&self, node: NodeRef, env: &Env<'_>) -> Result<f64> {
        let prev = self.previous;
        let (p, i) = (node.path, node.step);
        let zp = prev.z.slice(s![p, i, ..]);
        let up = prev.u.slice(s![p, i, ..]);
        let zp = zp.to_slice().expect("standard layout");
        let up = up.to_slice().expect("standard layout");
        let frozen = Env {
            y: prev.y[[p, i]],
            z: zp,
            u: up,
            ..*env
        };
        let fv = self.f.eval(&frozen).map_err(|e| {
            Error::eval(format!("frozen f at path {p} step {i}"), e)
        })?;
        let dz: Vec<f64> = env.z.iter().zip(zp).map(|(a, b)| a - b).collect();
        let du: Vec<f64> = env.u.iter().zip(up).map(|(a, b)| a - b).collect();
        let delta = Env {
            y: env.y - frozen.y,
            z: &dz,
            u: &du,
            ..*env
        };
        let pv = self
            .pi
            .eval(&delta)
            .map_err(|e| Error::eval(format!("pi at path {p} step {i}"), e))?;
        Ok(fv + pv)
    }
}

/// Bracketing iteration: anchors with drifts `∓(C(|y| + |z| + |u|) + f_t)`,
/// then `iterations` frozen solves starting from the lower anchor.  Every
/// iterate must satisfy `Ỹ⁰ ≤ Ỹⁿ⁻¹ ≤ Ỹⁿ ≤ Y⁰` node-wise within
/// [`SANDWICH_TOL`].
pub fn run_bracketing_sequence(
    problem: &ProblemSpec,
    iterations: usize,
    backend: Backend<'_>,
    stop: StopRule,
) -> Result<SequenceRun> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("need at least one iterate".into()));
    }
    let gen = &problem.generator;
    let pi = gen
        .pi
        .as_ref()
        .ok_or_else(|| Error::Config("bracketing needs the minorant pi".into()))?;
    let ft = gen
        .ft
        .as_ref()
        .ok_or_else(|| Error::Config("bracketing needs the dominating process f_t".into()))?;
    let lam = problem.marks.intensities();
    let cloud_spec = hypothesis_cloud(problem);
    let cloud = sample_cloud(&cloud_spec);
    let mut run = SequenceRun::new(SequenceMode::Bracketing);
    run.hypotheses.push(require(check_dominated_growth(gen, &cloud, lam)?)?);
    run.hypotheses.push(require(check_pi_minorant(gen, &sample_ordered_pairs(&cloud_spec), lam)?)?);
    run.hypotheses.push(require(check_g_contraction(gen, &sample_pairs(&cloud_spec), lam)?)?);

    let terms = growth_terms(gen.growth_c);
    let lower_gen = parse_expr(&format!("-({terms}) - ({ft})")).expect("fixed grammar");
    let upper_gen = parse_expr(&format!("{terms} + ({ft})")).expect("fixed grammar");
    let lower = solve_with(problem, &lower_gen, backend)?;
    let upper = solve_with(problem, &upper_gen, backend)?;

    for n in 1..=iterations {
        let sol = {
            let previous = run.solutions.last().unwrap_or(&lower);
            let frozen = FrozenGenerator {
                f: &gen.f,
                pi,
                previous,
            };
            solve_with(problem, &frozen, backend)?
        };
        let previous = run.solutions.last().unwrap_or(&lower);
        let mut worst = (f64::INFINITY, 0usize, 0usize);
        for ((p, i), &y) in sol.y.indexed_iter() {
            let m = (y - lower.y[[p, i]])
                .min(y - previous.y[[p, i]])
                .min(upper.y[[p, i]] - y);
            if m < worst.0 {
                worst = (m, p, i);
            }
        }
        if worst.0 < -SANDWICH_TOL {
            return Err(Error::SandwichViolation {
                iterate: n,
                path: worst.1,
                step: worst.2,
                margin: worst.0,
            });
        }
        log::info!("bracketing iterate {n}: Y0 = {:.12}, margin = {:e}", sol.y0(), worst.0);
        run.push(n as f64, sol, worst.0)?;
        if stop.done(&run.y0_series) {
            run.stopped_early = n < iterations;
            break;
        }
    }
    run.anchors = Some((lower, upper));
    Ok(run)
}
