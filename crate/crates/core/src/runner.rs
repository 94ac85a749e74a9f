//! Executes a validated [`ExperimentConfig`]: builds drivers, runs the
//! selected pipeline and writes reports atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    compare_solutions, ito_residual_check, norm_report, positivity_instance, skorokhod_check,
    Verdict,
};
use crate::config::{ExperimentConfig, OutputFormat, PipelineKind, SolverKind};
use crate::drivers::{simulate_scenarios, ScenarioSet};
use crate::schemes::{
    run_bracketing_sequence, run_inf_envelope_sequence, run_sup_envelope_sequence,
    SequenceRun, StopRule,
};
use crate::solver::{solve, Backend, LsmcParams, SolutionGrid, TreeModel};
use crate::{Error, Result};

pub const REPORT_SCHEMA: &str = "rbdsdep/report/v1";
pub const MANIFEST_SCHEMA: &str = "rbdsdep/manifest/v1";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// all validators of the pipeline passed
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub report: Value,
}

struct Output {
    files: Vec<(String, Vec<u8>)>,
    report: Value,
    passed: bool,
}

enum Drivers {
    Tree(TreeModel),
    Sampled(ScenarioSet, LsmcParams),
}

impl Drivers {
    fn backend(&self) -> Backend<'_> {
        match self {
            Drivers::Tree(t) => Backend::Tree(t),
            Drivers::Sampled(sc, params) => Backend::Lsmc {
                scenarios: sc,
                params,
            },
        }
    }
}

fn build_drivers(cfg: &ExperimentConfig) -> Result<Drivers> {
    let grid = cfg.time_grid()?;
    let marks = cfg.mark_space()?;
    match cfg.scheme.solver {
        SolverKind::Tree => Ok(Drivers::Tree(TreeModel::new(
            &grid,
            cfg.dims.d,
            &marks,
            cfg.scheme.tree_max_steps,
            u128::from(cfg.scheme.tree_budget),
        )?)),
        SolverKind::Lsmc => Ok(Drivers::Sampled(
            sampled(cfg)?,
            cfg.lsmc_params(),
        )),
    }
}

fn sampled(cfg: &ExperimentConfig) -> Result<ScenarioSet> {
    simulate_scenarios(
        &cfg.time_grid()?,
        cfg.dims.d,
        &cfg.mark_space()?,
        cfg.drivers.paths,
        cfg.drivers.seed,
        cfg.drivers.mode,
    )
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn solution_value(sol: &SolutionGrid) -> Result<Value> {
    let sk = skorokhod_check(sol);
    Ok(json!({
        "summary": to_value(&sol.summary())?,
        "norms": to_value(&norm_report(sol)?)?,
        "skorokhod": {
            "max": sk.max,
            "bitwise_zero": sk.bitwise_zero,
            "k_valid": sk.k_valid,
            "barrier_margin": sk.barrier_margin,
        },
        "diagnostics": to_value(&sol.diagnostics)?,
    }))
}

fn stop_rule(cfg: &ExperimentConfig) -> StopRule {
    StopRule {
        root_tolerance: (cfg.scheme.stop_tolerance > 0.0).then_some(cfg.scheme.stop_tolerance),
    }
}

fn sequence_output(cfg: &ExperimentConfig, run: &SequenceRun, exact: bool) -> Result<Output> {
    let tol = cfg.pipeline.tolerance;
    let skorokhod_ok = run.solutions.iter().all(|s| skorokhod_check(s).passed());
    let monotone = run.worst_monotonicity_violation();
    let margins_ok = !exact || run.margins.iter().all(|&m| m >= -tol);
    let mut files = Vec::new();
    if cfg.writes(OutputFormat::Csv) {
        files.push(("sequence.csv".to_string(), csv_bytes(|b| run.write_csv(b))?));
        if let Some(last) = run.last() {
            files.push(("solution.csv".to_string(), csv_bytes(|b| last.write_csv(b))?));
        }
    }
    let report = json!({
        "mode": to_value(&run.mode)?,
        "index_set": run.index_set,
        "y0_series": run.y0_series,
        "margins": run.margins,
        "norms": to_value(&run.norms)?,
        "z_diff_norms": run.z_diff_norms,
        "u_diff_norms": run.u_diff_norms,
        "worst_monotonicity_violation": monotone,
        "bound_y0": run.bound.as_ref().map(|b| b.y0()),
        "anchors_y0": run.anchors.as_ref().map(|(l, u)| [l.y0(), u.y0()]),
        "stopped_early": run.stopped_early,
        "hypotheses": run.hypotheses.iter().map(|h| json!({
            "hypothesis": h.hypothesis,
            "samples": h.samples,
            "violations": h.violations.len(),
            "worst_ratio": h.worst_ratio,
        })).collect::<Vec<_>>(),
        "estimate": run.last().map(|s| s.y0()),
        "skorokhod_exact": skorokhod_ok,
    });
    Ok(Output {
        files,
        report,
        passed: skorokhod_ok && monotone <= tol && margins_ok,
    })
}

fn execute(cfg: &ExperimentConfig) -> Result<Output> {
    let problem = cfg.problem()?;
    let tol = cfg.pipeline.tolerance;
    let csv = cfg.writes(OutputFormat::Csv);
    match cfg.pipeline.kind {
        PipelineKind::Solve => {
            let drivers = build_drivers(cfg)?;
            let sol = solve(&problem, drivers.backend())?;
            let mut files = Vec::new();
            if csv {
                files.push(("solution.csv".to_string(), csv_bytes(|b| sol.write_csv(b))?));
                if let Drivers::Sampled(sc, _) = &drivers {
                    files.push(("scenarios.csv".to_string(), csv_bytes(|b| sc.write_csv(b))?));
                }
            }
            let passed = skorokhod_check(&sol).passed();
            Ok(Output {
                files,
                report: solution_value(&sol)?,
                passed,
            })
        }
        PipelineKind::InfSequence | PipelineKind::SupSequence => {
            let drivers = build_drivers(cfg)?;
            let env = cfg.envelope_params()?;
            let ns = cfg.indices();
            let run = if cfg.pipeline.kind == PipelineKind::InfSequence {
                run_inf_envelope_sequence(&problem, &env, &ns, drivers.backend(), stop_rule(cfg))?
            } else {
                run_sup_envelope_sequence(&problem, &env, &ns, drivers.backend(), stop_rule(cfg))?
            };
            sequence_output(cfg, &run, drivers.backend().is_exact())
        }
        PipelineKind::Bracketing => {
            let drivers = build_drivers(cfg)?;
            let run = run_bracketing_sequence(
                &problem,
                cfg.scheme.iterations,
                drivers.backend(),
                stop_rule(cfg),
            )?;
            sequence_output(cfg, &run, drivers.backend().is_exact())
        }
        PipelineKind::Compare => {
            let drivers = build_drivers(cfg)?;
            let other = cfg.compare_problem()?;
            let (rep, sols) = compare_solutions(&problem, &other, drivers.backend(), tol)?;
            let mut files = Vec::new();
            if let (true, Some((a, b))) = (csv, &sols) {
                files.push(("solution_1.csv".to_string(), csv_bytes(|w| a.write_csv(w))?));
                files.push(("solution_2.csv".to_string(), csv_bytes(|w| b.write_csv(w))?));
            }
            Ok(Output {
                files,
                passed: rep.verdict == Verdict::Pass,
                report: to_value(&rep)?,
            })
        }
        PipelineKind::ItoCheck => {
            let sc = sampled(cfg)?;
            let comp = cfg.ito_components()?;
            let rep = ito_residual_check(&sc, &comp)?;
            let bands = cfg.ito.as_ref().map_or(5.0, |c| c.bands);
            let mut files = Vec::new();
            if csv {
                files.push((
                    "second_moment.csv".to_string(),
                    csv_bytes(|buf| {
                        writeln!(buf, "# schema=rbdsdep/second-moment/v1")?;
                        let mut w = csv::Writer::from_writer(buf);
                        w.write_record(["t", "mean", "se"])?;
                        for (i, s) in rep.second_moment.iter().enumerate() {
                            w.write_record([
                                format!("{:e}", sc.grid().time(i)),
                                format!("{:e}", s.mean),
                                format!("{:e}", s.se),
                            ])?;
                        }
                        w.flush()?;
                        Ok(())
                    })?,
                ));
            }
            Ok(Output {
                files,
                passed: rep.passed(tol, bands),
                report: to_value(&rep)?,
            })
        }
        PipelineKind::Positivity => {
            let drivers = build_drivers(cfg)?;
            let (pi, h) = cfg.positivity_exprs()?;
            let (rep, sol) = positivity_instance(&problem, &pi, &h, drivers.backend(), tol)?;
            let mut files = Vec::new();
            if let (true, Some(s)) = (csv, &sol) {
                files.push(("solution.csv".to_string(), csv_bytes(|w| s.write_csv(w))?));
            }
            Ok(Output {
                files,
                passed: rep.verdict == Verdict::Pass,
                report: to_value(&rep)?,
            })
        }
    }
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
    Ok(path)
}

/// Runs `cfg` and writes its outputs into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let hash = cfg.hash();
    log::info!("running {:?} (config {hash})", cfg.pipeline.kind);
    let output = execute(cfg)?;
    let wall = start.elapsed().as_secs_f64();

    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, bytes) in &output.files {
        written.push(write_atomic(out_dir, name, bytes)?);
    }
    let mut report = json!({
        "schema": REPORT_SCHEMA,
        "config_hash": hash,
        "pipeline": to_value(&cfg.pipeline.kind)?,
        "passed": output.passed,
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut report, &output.report) {
        for (k, v) in src {
            dst.insert(k.clone(), v.clone());
        }
    } else {
        report["result"] = output.report.clone();
    }
    if cfg.writes(OutputFormat::Json) {
        let bytes = serde_json::to_vec_pretty(&report)?;
        written.push(write_atomic(out_dir, "report.json", &bytes)?);
    }
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = json!({
        "schema": MANIFEST_SCHEMA,
        "config_hash": hash,
        "seed": cfg.drivers.seed,
        "pipeline": to_value(&cfg.pipeline.kind)?,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "wall_time_s": wall,
        "timestamp": timestamp,
        "passed": output.passed,
        "files": written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect::<Vec<_>>(),
    });
    written.push(write_atomic(
        out_dir,
        "manifest.json",
        &serde_json::to_vec_pretty(&manifest)?,
    )?);
    log::info!("{} files written to {}", written.len(), out_dir.display());
    Ok(RunOutcome {
        passed: output.passed,
        files: written,
        report,
    })
}

/// [`run`] inside a dedicated pool of `threads` workers (all cores if
/// `None`).
pub fn run_with_threads(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<RunOutcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        if k == 0 {
            return Err(Error::InvalidArgument("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| run(cfg, out_dir))
}
