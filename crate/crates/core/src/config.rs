//! Experiment configuration: one TOML document per run, validated in full at
//! load time and identified by the SHA-256 of its canonical JSON form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::ItoComponents;
use crate::drivers::{build_time_grid, DriverMode, MarkSpace, TimeGrid};
use crate::dsl::{parse_expr_in, EnvelopeParams, Expr, GeneratorSpec, Scope};
use crate::schemes::{clip_indices, DEFAULT_NS};
use crate::solver::{BasisKind, LsmcParams, ProblemSpec, DEFAULT_TREE_BUDGET, DEFAULT_TREE_MAX_STEPS};
use crate::{Error, Result};

pub const CONFIG_GRAMMAR: &str = r#"[grid]        horizon = <real > 0>            steps = <int >= 1>
[dims]        d = <int >= 1> (1)              marks = [<nonzero real>..] ([])
              intensities = [<real > 0>..] ([], same length as marks)
[drivers]     paths = <int >= 1> (1000)       seed = <int> (0)
              mode = "gaussian" | "two-point" ("two-point")
[problem]     f, g, barrier, terminal = <expr>
              pi, ft = <expr> (optional)      growth_c = <real > 0> (1)
              alpha = <real in (0, 1)> (0.5)
[scheme]      solver = "tree" | "lsmc" ("tree")
              basis = "polynomial" | "indicator" ("polynomial")
              degree = <int >= 1> (2)         ridge = <real >= 0> (1e-8)
              max_condition = <real > 1> (1e12)
              tree_max_steps = <int> (6)      tree_budget = <int> (4194304)
              ns = [<real >= growth_c>, increasing] ([1, 2, 4, 8, 16] clipped)
              iterations = <int >= 1> (5)     stop_tolerance = <real >= 0> (1e-9, 0 disables)
[scheme.envelope]
              y_box = [lo, hi] ([-10, 10])    zu_box = [lo, hi] ([-10, 10])
              grid_points = <int >= 2> (201)
[pipeline]    kind = "solve" | "inf_sequence" | "sup_sequence" | "bracketing"
                   | "compare" | "ito_check" | "positivity"
              tolerance = <real >= 0> (1e-10)
[compare]     f, barrier, terminal = <expr> (second problem; unset keys copy [problem])
[ito]         alpha0 = <real>  beta, gamma, k_rate = <expr>  eta = [<expr> x d]  sigma = [<expr> x m]
              bands = <real > 0> (5)
[positivity]  pi, h = <expr>
[outputs]     dir = <path> ("out")            formats = ["csv", "json"] (both)

Expressions in [problem] see t, y, z1..zd, u1..um, w1..wd, n1..nm, znorm, unorm
except: barrier sees t, w1..wd; terminal sees t, w1..wd, n1..nm; ft and h see t;
[ito] components see t, w1..wd, n1..nm.  Unknown keys are errors."#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimsConfig {
    pub d: usize,
    pub marks: Vec<f64>,
    pub intensities: Vec<f64>,
}

impl Default for DimsConfig {
    fn default() -> Self {
        DimsConfig {
            d: 1,
            marks: Vec::new(),
            intensities: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriversConfig {
    pub paths: usize,
    pub seed: u64,
    pub mode: DriverMode,
}

impl Default for DriversConfig {
    fn default() -> Self {
        DriversConfig {
            paths: 1000,
            seed: 0,
            mode: DriverMode::TwoPoint,
        }
    }
}

fn default_c() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub f: String,
    pub g: String,
    pub barrier: String,
    pub terminal: String,
    pub pi: Option<String>,
    pub ft: Option<String>,
    #[serde(default = "default_c")]
    pub growth_c: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Tree,
    Lsmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisName {
    Polynomial,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeConfig {
    pub y_box: [f64; 2],
    pub zu_box: [f64; 2],
    pub grid_points: usize,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            y_box: [-10.0, 10.0],
            zu_box: [-10.0, 10.0],
            grid_points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub solver: SolverKind,
    pub basis: BasisName,
    pub degree: usize,
    pub ridge: f64,
    pub max_condition: f64,
    pub tree_max_steps: usize,
    pub tree_budget: u64,
    pub ns: Option<Vec<f64>>,
    pub iterations: usize,
    pub stop_tolerance: f64,
    pub envelope: EnvelopeConfig,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        let lsmc = LsmcParams::default();
        SchemeConfig {
            solver: SolverKind::Tree,
            basis: BasisName::Polynomial,
            degree: 2,
            ridge: lsmc.ridge,
            max_condition: lsmc.max_condition,
            tree_max_steps: DEFAULT_TREE_MAX_STEPS,
            tree_budget: DEFAULT_TREE_BUDGET as u64,
            ns: None,
            iterations: 5,
            stop_tolerance: 1e-9,
            envelope: EnvelopeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Solve,
    InfSequence,
    SupSequence,
    Bracketing,
    Compare,
    ItoCheck,
    Positivity,
}

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub kind: PipelineKind,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub f: Option<String>,
    pub barrier: Option<String>,
    pub terminal: Option<String>,
}

fn default_bands() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItoConfig {
    #[serde(default)]
    pub alpha0: f64,
    pub beta: String,
    pub gamma: String,
    pub eta: Vec<String>,
    #[serde(default)]
    pub sigma: Vec<String>,
    pub k_rate: String,
    #[serde(default = "default_bands")]
    pub bands: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositivityConfig {
    pub pi: String,
    pub h: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsConfig {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig {
            dir: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub dims: DimsConfig,
    #[serde(default)]
    pub drivers: DriversConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    pub pipeline: PipelineConfig,
    pub compare: Option<CompareConfig>,
    pub ito: Option<ItoConfig>,
    pub positivity: Option<PositivityConfig>,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

fn key_err(key: &str, constraint: impl Into<String>) -> Error {
    Error::ConfigKey {
        key: key.to_string(),
        constraint: constraint.into(),
    }
}

fn expr_at(key: &str, src: &str, scope: &Scope) -> Result<Expr> {
    parse_expr_in(src, scope).map_err(|e| key_err(key, e.to_string()))
}

fn n_choose_k(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical form: JSON with sorted keys, output settings excluded.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("outputs");
        }
        serde_json::to_string(&v).expect("value serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        build_time_grid(self.grid.horizon, self.grid.steps)
            .map_err(|e| key_err("grid", e.to_string()))
    }

    pub fn mark_space(&self) -> Result<MarkSpace> {
        MarkSpace::new(self.dims.marks.clone(), self.dims.intensities.clone())
            .map_err(|e| key_err("dims.marks", e.to_string()))
    }

    fn m(&self) -> usize {
        self.dims.marks.len()
    }

    pub fn generator(&self) -> Result<GeneratorSpec> {
        let (d, m) = (self.dims.d, self.m());
        let p = &self.problem;
        let gen_scope = Scope::generator(d, m);
        let f = expr_at("problem.f", &p.f, &gen_scope)?;
        let g = expr_at("problem.g", &p.g, &gen_scope)?;
        if !(p.growth_c > 0.0 && p.growth_c.is_finite()) {
            return Err(key_err("problem.growth_c", format!("must be > 0, got {}", p.growth_c)));
        }
        if !(p.alpha > 0.0 && p.alpha < 1.0) {
            return Err(key_err(
                "problem.alpha",
                format!("the contraction constant of g must satisfy 0 < alpha < 1, got {}", p.alpha),
            ));
        }
        let mut spec = GeneratorSpec::new(f, g, p.growth_c, p.alpha)?;
        if let Some(pi) = &p.pi {
            spec = spec.with_pi(expr_at("problem.pi", pi, &Scope::minorant(d, m))?);
        }
        if let Some(ft) = &p.ft {
            spec = spec.with_ft(expr_at("problem.ft", ft, &Scope::time_only())?);
        }
        Ok(spec)
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let d = self.dims.d;
        let barrier = expr_at("problem.barrier", &self.problem.barrier, &Scope::barrier(d))?;
        let terminal = expr_at(
            "problem.terminal",
            &self.problem.terminal,
            &Scope::terminal(d, self.m()),
        )?;
        ProblemSpec::new(
            self.generator()?,
            barrier,
            terminal,
            self.time_grid()?,
            d,
            self.mark_space()?,
        )
    }

    /// The second problem of a comparison: `[compare]` overrides on top of
    /// `[problem]`.
    pub fn compare_problem(&self) -> Result<ProblemSpec> {
        let c = self
            .compare
            .as_ref()
            .ok_or_else(|| key_err("compare", "required by pipeline compare"))?;
        let mut p = self.problem()?;
        let (d, m) = (self.dims.d, self.m());
        if let Some(f) = &c.f {
            p.generator.f = expr_at("compare.f", f, &Scope::generator(d, m))?;
        }
        if let Some(s) = &c.barrier {
            p.barrier = expr_at("compare.barrier", s, &Scope::barrier(d))?;
        }
        if let Some(xi) = &c.terminal {
            p.terminal = expr_at("compare.terminal", xi, &Scope::terminal(d, m))?;
        }
        Ok(p)
    }

    pub fn lsmc_params(&self) -> LsmcParams {
        LsmcParams {
            basis: match self.scheme.basis {
                BasisName::Polynomial => BasisKind::Polynomial {
                    degree: self.scheme.degree,
                },
                BasisName::Indicator => BasisKind::Indicator,
            },
            ridge: self.scheme.ridge,
            max_condition: self.scheme.max_condition,
        }
    }

    /// Index list of the envelope sequences.
    pub fn indices(&self) -> Vec<f64> {
        match &self.scheme.ns {
            Some(ns) => ns.clone(),
            None => clip_indices(&DEFAULT_NS, self.problem.growth_c),
        }
    }

    pub fn envelope_params(&self) -> Result<EnvelopeParams> {
        let e = &self.scheme.envelope;
        let n = self.indices().first().copied().unwrap_or(self.problem.growth_c);
        EnvelopeParams::boxed(
            n,
            self.dims.d,
            self.m(),
            (e.y_box[0], e.y_box[1]),
            (e.zu_box[0], e.zu_box[1]),
            e.grid_points,
            self.problem.growth_c,
        )
        .map_err(|err| key_err("scheme.envelope", err.to_string()))
    }

    pub fn ito_components(&self) -> Result<ItoComponents> {
        let c = self
            .ito
            .as_ref()
            .ok_or_else(|| key_err("ito", "required by pipeline ito_check"))?;
        let (d, m) = (self.dims.d, self.m());
        let scope = Scope::terminal(d, m);
        if c.eta.len() != d {
            return Err(key_err("ito.eta", format!("needs d = {d} entries, got {}", c.eta.len())));
        }
        if c.sigma.len() != m {
            return Err(key_err("ito.sigma", format!("needs m = {m} entries, got {}", c.sigma.len())));
        }
        if !(c.bands > 0.0) {
            return Err(key_err("ito.bands", "must be > 0"));
        }
        Ok(ItoComponents {
            alpha0: c.alpha0,
            beta: expr_at("ito.beta", &c.beta, &scope)?,
            gamma: expr_at("ito.gamma", &c.gamma, &scope)?,
            eta: c
                .eta
                .iter()
                .map(|s| expr_at("ito.eta", s, &scope))
                .collect::<Result<_>>()?,
            sigma: c
                .sigma
                .iter()
                .map(|s| expr_at("ito.sigma", s, &scope))
                .collect::<Result<_>>()?,
            k_rate: expr_at("ito.k_rate", &c.k_rate, &scope)?,
        })
    }

    pub fn positivity_exprs(&self) -> Result<(Expr, Expr)> {
        let c = self
            .positivity
            .as_ref()
            .ok_or_else(|| key_err("positivity", "required by pipeline positivity"))?;
        Ok((
            expr_at("positivity.pi", &c.pi, &Scope::minorant(self.dims.d, self.m()))?,
            expr_at("positivity.h", &c.h, &Scope::time_only())?,
        ))
    }

    /// Checks every field against the preconditions of the module that
    /// consumes it.
    pub fn validate(&self) -> Result<()> {
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) {
            return Err(key_err("grid.horizon", format!("must be > 0, got {}", self.grid.horizon)));
        }
        if self.grid.steps == 0 {
            return Err(key_err("grid.steps", "must be >= 1"));
        }
        if self.dims.d == 0 {
            return Err(key_err("dims.d", "must be >= 1"));
        }
        if self.dims.marks.len() != self.dims.intensities.len() {
            return Err(key_err("dims.intensities", "must have one entry per mark"));
        }
        let marks = self.mark_space()?;
        let grid = self.time_grid()?;
        let lam_dt = marks.total_intensity() * grid.dt();
        if self.drivers.paths == 0 {
            return Err(key_err("drivers.paths", "must be >= 1"));
        }
        if self.drivers.mode == DriverMode::TwoPoint && lam_dt >= 1.0 {
            return Err(key_err(
                "drivers.mode",
                format!("two-point mode needs total_intensity * dt < 1, got {lam_dt}"),
            ));
        }
        let problem = self.problem()?;

        let s = &self.scheme;
        let uses_solver = self.pipeline.kind != PipelineKind::ItoCheck;
        match s.solver {
            SolverKind::Tree if uses_solver => {
                if grid.steps() > s.tree_max_steps {
                    return Err(key_err(
                        "grid.steps",
                        format!("tree solver needs steps <= tree_max_steps = {}", s.tree_max_steps),
                    ));
                }
                if lam_dt >= 1.0 {
                    return Err(key_err(
                        "dims.intensities",
                        format!("tree solver needs total_intensity * dt < 1, got {lam_dt}"),
                    ));
                }
                let bits = (self.dims.d + 1 + self.m()) * grid.steps();
                if bits >= 64 || (1u64 << bits) > s.tree_budget {
                    return Err(key_err(
                        "scheme.tree_budget",
                        format!("tree needs 2^{bits} paths, budget is {}", s.tree_budget),
                    ));
                }
            }
            SolverKind::Lsmc if uses_solver => {
                if !(s.ridge >= 0.0 && s.ridge.is_finite()) {
                    return Err(key_err("scheme.ridge", "must be >= 0"));
                }
                if !(s.max_condition > 1.0) {
                    return Err(key_err("scheme.max_condition", "must be > 1"));
                }
                match s.basis {
                    BasisName::Polynomial => {
                        if s.degree == 0 {
                            return Err(key_err("scheme.degree", "must be >= 1"));
                        }
                        let feats = self.dims.d + self.m() + 2;
                        let size = n_choose_k(feats + s.degree, s.degree) + 1;
                        if self.drivers.paths < 10 * size {
                            return Err(key_err(
                                "drivers.paths",
                                format!("regression needs at least 10 x basis size = {}", 10 * size),
                            ));
                        }
                    }
                    BasisName::Indicator => {
                        if self.drivers.mode != DriverMode::TwoPoint {
                            return Err(key_err("scheme.basis", "indicator basis needs two-point drivers"));
                        }
                        if grid.steps() * (self.dims.d + self.m() + 1) > 64 {
                            return Err(key_err("scheme.basis", "indicator basis needs N(d + m + 1) <= 64"));
                        }
                    }
                }
            }
            _ => {}
        }
        if s.iterations == 0 {
            return Err(key_err("scheme.iterations", "must be >= 1"));
        }
        if !(s.stop_tolerance >= 0.0) {
            return Err(key_err("scheme.stop_tolerance", "must be >= 0"));
        }
        if !(self.pipeline.tolerance >= 0.0) {
            return Err(key_err("pipeline.tolerance", "must be >= 0"));
        }

        match self.pipeline.kind {
            PipelineKind::InfSequence | PipelineKind::SupSequence => {
                let ns = self.indices();
                if ns.is_empty() {
                    return Err(key_err("scheme.ns", "no index is >= growth_c"));
                }
                if let Some(n) = ns.iter().find(|&&n| !(n >= self.problem.growth_c)) {
                    return Err(key_err("scheme.ns", format!("index {n} is below growth_c")));
                }
                if ns.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(key_err("scheme.ns", "must be strictly increasing"));
                }
                self.envelope_params()?;
            }
            PipelineKind::Bracketing => {
                if problem.generator.pi.is_none() {
                    return Err(key_err("problem.pi", "required by pipeline bracketing"));
                }
                if problem.generator.ft.is_none() {
                    return Err(key_err("problem.ft", "required by pipeline bracketing"));
                }
            }
            PipelineKind::Compare => {
                self.compare_problem()?;
            }
            PipelineKind::ItoCheck => {
                self.ito_components()?;
            }
            PipelineKind::Positivity => {
                self.positivity_exprs()?;
            }
            PipelineKind::Solve => {}
        }
        if self.outputs.formats.is_empty() {
            return Err(key_err("outputs.formats", "needs at least one format"));
        }
        Ok(())
    }

    pub fn writes(&self, format: OutputFormat) -> bool {
        self.outputs.formats.contains(&format)
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_toml_str(&text)
}
