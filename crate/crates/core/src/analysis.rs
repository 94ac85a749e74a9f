//! Validators over solver output: comparison, Skorokhod complementarity,
//! positivity, empirical norms and the discrete Itô identity.

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::drivers::ScenarioSet;
use crate::dsl::{
    check_g_contraction, sample_cloud, sample_pairs, CheckReport, CloudSpec, Env, Expr,
    GeneratorSpec, SamplePoint, Scope,
};
use crate::solver::{path_state, solve, Backend, ProblemSpec, SolutionGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    PremisesNotMet,
}

/// Outcome of checking one premise.
#[derive(Debug, Clone, Serialize)]
pub struct Premise {
    pub name: String,
    pub passed: bool,
    /// smallest `rhs − lhs` over everything checked
    pub worst_margin: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub premises: Vec<Premise>,
    /// `min (Y² − Y¹)` over all paths and times; absent when premises fail
    /// before solving
    pub conclusion_margin: Option<f64>,
    /// `Y²_0 − Y¹_0` (probability-weighted)
    pub root_gap: Option<f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
}

fn premise(name: &str, margins: impl Iterator<Item = f64>) -> Premise {
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for m in margins {
        worst = worst.min(m);
        checked += 1;
    }
    Premise {
        name: name.to_string(),
        passed: worst >= 0.0,
        worst_margin: worst,
        checked,
    }
}

fn same_setting(p1: &ProblemSpec, p2: &ProblemSpec) -> Result<()> {
    if p1.grid != p2.grid || p1.dim_d != p2.dim_d || p1.marks != p2.marks {
        return Err(Error::InvalidArgument(
            "compared problems must share grid, dimensions and marks".into(),
        ));
    }
    if p1.generator.g != p2.generator.g {
        return Err(Error::InvalidArgument("compared problems must share g".into()));
    }
    Ok(())
}

fn terminal_values(problem: &ProblemSpec, sc: &ScenarioSet) -> Result<Vec<f64>> {
    let w = sc.brownian_levels();
    let n = sc.jump_totals();
    let steps = problem.grid.steps();
    (0..sc.path_count())
        .map(|p| {
            let env = Env {
                w: w.slice(s![p, steps, ..]).to_slice().expect("standard layout"),
                n: n.slice(s![p, steps, ..]).to_slice().expect("standard layout"),
                ..Env::at_time(problem.grid.horizon())
            };
            problem
                .terminal
                .eval(&env)
                .map_err(|e| Error::eval(format!("terminal value at path {p}"), e))
        })
        .collect()
}

/// Every node state `(t_i, Y, Z, U, W, N)` of a solution as a sample point.
pub fn node_states(sol: &SolutionGrid, sc: &ScenarioSet) -> Vec<SamplePoint> {
    let w = sc.brownian_levels();
    let n = sc.jump_totals();
    let mut out = Vec::with_capacity(sol.paths() * (sol.steps() + 1));
    for p in 0..sol.paths() {
        for i in 0..=sol.steps() {
            out.push(SamplePoint {
                t: sol.grid.time(i),
                y: sol.y[[p, i]],
                z: sol.z.slice(s![p, i, ..]).to_vec(),
                u: sol.u.slice(s![p, i, ..]).to_vec(),
                w: w.slice(s![p, i, ..]).to_vec(),
                n: n.slice(s![p, i, ..]).to_vec(),
            });
        }
    }
    out
}

/// Certifies `ξ¹ ≤ ξ²` on every terminal node, `S¹ ≤ S²` on every path and
/// time, and `f¹ ≤ f²` on the box cloud plus every node state of both
/// solutions; then reports `min (Y² − Y¹)`.
pub fn compare_solutions(
    p1: &ProblemSpec,
    p2: &ProblemSpec,
    backend: Backend<'_>,
    tolerance: f64,
) -> Result<(ComparisonReport, Option<(SolutionGrid, SolutionGrid)>)> {
    same_setting(p1, p2)?;
    let sc = backend.scenarios();
    let xi1 = terminal_values(p1, sc)?;
    let xi2 = terminal_values(p2, sc)?;
    let mut premises = vec![premise(
        "terminal: xi1 <= xi2",
        xi1.iter().zip(&xi2).map(|(a, b)| b - a),
    )];
    let s1 = path_state(p1, sc)?.barrier;
    let s2 = path_state(p2, sc)?.barrier;
    premises.push(premise(
        "barrier: S1 <= S2",
        s1.iter().zip(s2.iter()).map(|(a, b)| b - a),
    ));
    let not_met = |premises: Vec<Premise>| ComparisonReport {
        premises,
        conclusion_margin: None,
        root_gap: None,
        tolerance,
        verdict: Verdict::PremisesNotMet,
    };
    if premises.iter().any(|p| !p.passed) {
        return Ok((not_met(premises), None));
    }

    let sol1 = solve(p1, backend)?;
    let sol2 = solve(p2, backend)?;
    let lam = p1.marks.intensities();
    let mut cloud = sample_cloud(&CloudSpec::standard(p1.dim_d, lam, p1.grid.horizon()));
    cloud.extend(node_states(&sol1, sc));
    cloud.extend(node_states(&sol2, sc));
    let gaps: Vec<f64> = cloud
        .par_iter()
        .map(|pt| {
            let env = pt.env(lam);
            let a = p1.generator.f.eval(&env).map_err(|e| Error::eval("f1 on cloud", e))?;
            let b = p2.generator.f.eval(&env).map_err(|e| Error::eval("f2 on cloud", e))?;
            Ok(b - a)
        })
        .collect::<Result<_>>()?;
    premises.push(premise("drift: f1 <= f2", gaps.into_iter()));
    if premises.iter().any(|p| !p.passed) {
        return Ok((not_met(premises), Some((sol1, sol2))));
    }

    let margin = crate::schemes::node_margin(&sol1, &sol2);
    let report = ComparisonReport {
        premises,
        conclusion_margin: Some(margin),
        root_gap: Some(sol2.y0() - sol1.y0()),
        tolerance,
        verdict: if margin >= -tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
    };
    Ok((report, Some((sol1, sol2))))
}

#[derive(Debug, Clone, Serialize)]
pub struct SkorokhodReport {
    /// `|Σ_i (Y_i − S_i) ΔK_i|` per path
    pub per_path: Vec<f64>,
    pub max: f64,
    /// every product `(Y_i − S_i) ΔK_i` is exactly `0.0`
    pub bitwise_zero: bool,
    /// `K_0 = 0` and `K` nondecreasing on every path
    pub k_valid: bool,
    /// `min (Y − S)` over nodes
    pub barrier_margin: f64,
}

impl SkorokhodReport {
    pub fn passed(&self) -> bool {
        self.bitwise_zero && self.k_valid && self.barrier_margin >= -1e-12
    }
}

pub fn skorokhod_check(sol: &SolutionGrid) -> SkorokhodReport {
    let steps = sol.steps();
    let mut per_path = Vec::with_capacity(sol.paths());
    let mut bitwise_zero = true;
    let mut k_valid = true;
    let mut barrier_margin = f64::INFINITY;
    for p in 0..sol.paths() {
        let mut sum = 0.0;
        for i in 0..=steps {
            let gap = sol.y[[p, i]] - sol.barrier[[p, i]];
            let prod = gap * sol.dk[[p, i]];
            bitwise_zero &= prod == 0.0;
            sum += prod;
            barrier_margin = barrier_margin.min(gap);
            if i < steps {
                k_valid &= sol.k[[p, i + 1]] >= sol.k[[p, i]];
            }
        }
        k_valid &= sol.k[[p, 0]] == 0.0;
        per_path.push(sum.abs());
    }
    let max = per_path.iter().copied().fold(0.0, f64::max);
    SkorokhodReport {
        per_path,
        max,
        bitwise_zero,
        k_valid,
        barrier_margin,
    }
}

/// Smallest `Y` over all nodes.
pub fn positivity_check(sol: &SolutionGrid) -> f64 {
    sol.y.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityReport {
    pub premises: Vec<Premise>,
    pub g_contraction: Option<CheckReport>,
    pub min_y: Option<f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// Solves with drift `π + h` and checks `min Y ≥ −tolerance`, after
/// certifying `ξ ≥ 0` on terminal nodes, `h ≥ 0` on grid times, and the
/// contraction of `g`.
pub fn positivity_instance(
    problem: &ProblemSpec,
    pi: &Expr,
    h: &Expr,
    backend: Backend<'_>,
    tolerance: f64,
) -> Result<(PositivityReport, Option<SolutionGrid>)> {
    pi.check_scope(&Scope::minorant(problem.dim_d, problem.m()))?;
    h.check_scope(&Scope::time_only())?;
    let sc = backend.scenarios();
    let xi = terminal_values(problem, sc)?;
    let mut premises = vec![premise("terminal: xi >= 0", xi.into_iter())];
    let hs: Vec<f64> = problem
        .grid
        .times()
        .iter()
        .map(|&t| h.eval(&Env::at_time(t)).map_err(|e| Error::eval("h", e)))
        .collect::<Result<_>>()?;
    premises.push(premise("h >= 0", hs.into_iter()));
    let lam = problem.marks.intensities();
    let pairs = sample_pairs(&CloudSpec::standard(problem.dim_d, lam, problem.grid.horizon()));
    let contraction = check_g_contraction(&problem.generator, &pairs, lam)?;
    premises.push(Premise {
        name: "g contraction".into(),
        passed: contraction.passed(),
        worst_margin: contraction.worst_slack,
        checked: contraction.samples,
    });
    if premises.iter().any(|p| !p.passed) {
        return Ok((
            PositivityReport {
                premises,
                g_contraction: Some(contraction),
                min_y: None,
                tolerance,
                verdict: Verdict::PremisesNotMet,
            },
            None,
        ));
    }
    let f = Expr::add(pi.clone(), h.clone());
    let shifted = ProblemSpec {
        generator: GeneratorSpec {
            f,
            ..problem.generator.clone()
        },
        ..problem.clone()
    };
    let sol = solve(&shifted, backend)?;
    let min_y = positivity_check(&sol);
    Ok((
        PositivityReport {
            premises,
            g_contraction: Some(contraction),
            min_y: Some(min_y),
            tolerance,
            verdict: if min_y >= -tolerance {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
        },
        Some(sol),
    ))
}

/// Empirical process norms of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport {
    /// `E max_i |Y_i|²`
    pub sup_y2: f64,
    /// `E Σ_{i<N} |Z_i|² dt`
    pub z_m2: f64,
    /// `E Σ_{i<N} ‖U_i‖²_λ dt`
    pub u_l2: f64,
    /// `E K_N²`
    pub k_t2: f64,
}

pub fn norm_report(sol: &SolutionGrid) -> Result<NormReport> {
    let check = |what: &str, a: &Array2<f64>| -> Result<()> {
        match a.indexed_iter().find(|(_, v)| !v.is_finite()) {
            Some(((p, i), _)) => Err(Error::NonFinite {
                what: what.to_string(),
                index: vec![p, i],
            }),
            None => Ok(()),
        }
    };
    check("Y", &sol.y)?;
    check("K", &sol.k)?;
    for (name, arr) in [("Z", &sol.z), ("U", &sol.u)] {
        if let Some(((p, i, c), _)) = arr.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: name.to_string(),
                index: vec![p, i, c],
            });
        }
    }
    let dt = sol.grid.dt();
    let steps = sol.steps();
    let mut rep = NormReport {
        sup_y2: 0.0,
        z_m2: 0.0,
        u_l2: 0.0,
        k_t2: 0.0,
    };
    for p in 0..sol.paths() {
        let w = sol.weights[p];
        let sup = sol.y.row(p).iter().map(|v| v * v).fold(0.0, f64::max);
        rep.sup_y2 += w * sup;
        for i in 0..steps {
            rep.z_m2 += w * dt * sol.z.slice(s![p, i, ..]).iter().map(|v| v * v).sum::<f64>();
            rep.u_l2 += w
                * dt
                * sol
                    .u
                    .slice(s![p, i, ..])
                    .iter()
                    .zip(&sol.intensities)
                    .map(|(v, l)| l * v * v)
                    .sum::<f64>();
        }
        rep.k_t2 += w * sol.k[[p, steps]].powi(2);
    }
    Ok(rep)
}

/// Coefficients of a discrete semimartingale
/// `α_{i+1} = α_i + β_i dt + γ_i ΔB_i + η_i·ΔW_i + k_i dt + Σ_k σ_{i,k}(c_{i,k} − λ_k dt)`,
/// each evaluated at `(t_i, W_{t_i}, N(t_i))`.  `k` must be nonnegative.
#[derive(Debug, Clone)]
pub struct ItoComponents {
    pub alpha0: f64,
    pub beta: Expr,
    pub gamma: Expr,
    pub eta: Vec<Expr>,
    pub sigma: Vec<Expr>,
    pub k_rate: Expr,
}

#[derive(Debug, Clone, Serialize)]
pub struct TermStat {
    pub name: String,
    pub mean: f64,
    pub se: f64,
}

impl TermStat {
    pub fn within(&self, bands: f64) -> bool {
        self.mean.abs() <= bands * self.se || (self.mean == 0.0 && self.se == 0.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ItoReport {
    /// `max_p |α_N² − (α_0² + Σ 2α_iΔα_i + Σ (Δα_i)²)|`
    pub identity_residual: f64,
    /// `Σ 2α_i η_i ΔW_i`, `Σ 2α_i γ_i ΔB_i`, `Σ 2α_i σ_i (c_i − λ dt)`
    pub martingale_terms: Vec<TermStat>,
    /// sample mean and standard error of `|α_{t_i}|²` at every grid time
    pub second_moment: Vec<TermStat>,
    /// sample means of the quadratic-variation pieces `Σ|η|²dt`, `Σ|γ|²dt`,
    /// `Σ_k Σ_i (σ_{i,k} c_{i,k})²`
    pub quadratic_variation: Vec<TermStat>,
}

impl ItoReport {
    pub fn passed(&self, tol: f64, bands: f64) -> bool {
        self.identity_residual <= tol && self.martingale_terms.iter().all(|t| t.within(bands))
    }
}

fn stat(name: &str, values: &[f64]) -> TermStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    TermStat {
        name: name.to_string(),
        mean,
        se: (var / n).sqrt(),
    }
}

struct PathIto {
    residual: f64,
    mart: [f64; 3],
    squares: Vec<f64>,
    qv: [f64; 3],
}

/// Builds `α` on every scenario path and evaluates the discrete identity.
pub fn ito_residual_check(sc: &ScenarioSet, comp: &ItoComponents) -> Result<ItoReport> {
    let (d, m) = (sc.dim_d(), sc.marks().len());
    if comp.eta.len() != d || comp.sigma.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "components have {} eta and {} sigma entries, drivers have d = {d}, m = {m}",
            comp.eta.len(),
            comp.sigma.len()
        )));
    }
    let scope = Scope::terminal(d, m);
    for e in [&comp.beta, &comp.gamma, &comp.k_rate]
        .into_iter()
        .chain(&comp.eta)
        .chain(&comp.sigma)
    {
        e.check_scope(&scope)?;
    }
    let grid = sc.grid();
    let dt = grid.dt();
    let steps = grid.steps();
    let lam = sc.marks().intensities();
    let w = sc.brownian_levels();
    let n = sc.jump_totals();
    let ev = |e: &Expr, env: &Env<'_>, what: &str| {
        e.eval(env).map_err(|err| Error::eval(what.to_string(), err))
    };
    let paths: Vec<PathIto> = (0..sc.path_count())
        .into_par_iter()
        .map(|p| {
            let mut a = comp.alpha0;
            let mut sum_cross = 0.0;
            let mut sum_sq = 0.0;
            let mut mart = [0.0; 3];
            let mut qv = [0.0; 3];
            let mut squares = vec![a * a];
            for i in 0..steps {
                let env = Env {
                    w: w.slice(s![p, i, ..]).to_slice().expect("standard layout"),
                    n: n.slice(s![p, i, ..]).to_slice().expect("standard layout"),
                    ..Env::at_time(grid.time(i))
                };
                let beta = ev(&comp.beta, &env, "beta")?;
                let gamma = ev(&comp.gamma, &env, "gamma")?;
                let k = ev(&comp.k_rate, &env, "k_rate")?;
                if k < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "k_rate must be nonnegative, got {k} at path {p} step {i}"
                    )));
                }
                let mut dw_part = 0.0;
                let mut eta_sq = 0.0;
                for j in 0..d {
                    let eta = ev(&comp.eta[j], &env, "eta")?;
                    dw_part += eta * sc.dw()[[p, i, j]];
                    eta_sq += eta * eta;
                }
                let mut jump_part = 0.0;
                let mut jump_sq = 0.0;
                for kk in 0..m {
                    let sigma = ev(&comp.sigma[kk], &env, "sigma")?;
                    let c = f64::from(sc.jumps()[[p, i, kk]]);
                    jump_part += sigma * (c - lam[kk] * dt);
                    jump_sq += (sigma * c).powi(2);
                }
                let db_part = gamma * sc.db()[[p, i]];
                let da = beta * dt + db_part + dw_part + k * dt + jump_part;
                sum_cross += 2.0 * a * da;
                sum_sq += da * da;
                mart[0] += 2.0 * a * dw_part;
                mart[1] += 2.0 * a * db_part;
                mart[2] += 2.0 * a * jump_part;
                qv[0] += eta_sq * dt;
                qv[1] += gamma * gamma * dt;
                qv[2] += jump_sq;
                a += da;
                squares.push(a * a);
            }
            let residual = (a * a - (comp.alpha0 * comp.alpha0 + sum_cross + sum_sq)).abs();
            Ok(PathIto {
                residual,
                mart,
                squares,
                qv,
            })
        })
        .collect::<Result<_>>()?;

    let identity_residual = paths.iter().map(|p| p.residual).fold(0.0, f64::max);
    let names = ["dW term", "dB term", "jump term"];
    let martingale_terms = (0..3)
        .map(|k| stat(names[k], &paths.iter().map(|p| p.mart[k]).collect::<Vec<_>>()))
        .collect();
    let qv_names = ["eta^2 dt", "gamma^2 dt", "jump squares"];
    let quadratic_variation = (0..3)
        .map(|k| stat(qv_names[k], &paths.iter().map(|p| p.qv[k]).collect::<Vec<_>>()))
        .collect();
    let second_moment = (0..=steps)
        .map(|i| {
            stat(
                &format!("t={}", grid.time(i)),
                &paths.iter().map(|p| p.squares[i]).collect::<Vec<_>>(),
            )
        })
        .collect();
    Ok(ItoReport {
        identity_residual,
        martingale_terms,
        second_moment,
        quadratic_variation,
    })
}
