//! Sampling-based checks of the structural hypotheses on `f`, `g` and `π`.
//!
//! A reported violation is definitive; an empty report is evidence on the
//! cloud, not a proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Env, Expr, Scope};
use crate::{Error, Result};

const PAIR_SLACK: f64 = 1e-9;
const GROWTH_SLACK: f64 = 1e-12;

/// Coefficients of one equation together with the constants `C` and `α`.
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub f: Expr,
    pub g: Expr,
    /// minorant of `f`-differences, required by the bracketing scheme
    pub pi: Option<Expr>,
    /// deterministic dominating process `f_t`
    pub ft: Option<Expr>,
    pub growth_c: f64,
    pub alpha: f64,
}

impl GeneratorSpec {
    pub fn new(f: Expr, g: Expr, growth_c: f64, alpha: f64) -> Result<Self> {
        if !(growth_c > 0.0 && growth_c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "growth constant C must be > 0, got {growth_c}"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "contraction constant alpha must lie strictly in (0, 1), got {alpha}"
            )));
        }
        Ok(GeneratorSpec {
            f,
            g,
            pi: None,
            ft: None,
            growth_c,
            alpha,
        })
    }

    pub fn with_pi(mut self, pi: Expr) -> Self {
        self.pi = Some(pi);
        self
    }

    pub fn with_ft(mut self, ft: Expr) -> Self {
        self.ft = Some(ft);
        self
    }

    /// Checks every expression against the variables available for `d`, `m`.
    pub fn check_scopes(&self, d: usize, m: usize) -> Result<()> {
        self.f.check_scope(&Scope::generator(d, m))?;
        self.g.check_scope(&Scope::generator(d, m))?;
        if let Some(pi) = &self.pi {
            pi.check_scope(&Scope::minorant(d, m))?;
        }
        if let Some(ft) = &self.ft {
            ft.check_scope(&Scope::time_only())?;
        }
        Ok(())
    }
}

/// One sample `(t, y, z, u)` plus the path state `(w, n)` it is taken on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub t: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub n: Vec<f64>,
}

impl SamplePoint {
    pub fn env<'a>(&'a self, intensities: &'a [f64]) -> Env<'a> {
        Env {
            t: self.t,
            y: self.y,
            z: &self.z,
            u: &self.u,
            w: &self.w,
            n: &self.n,
            intensities,
        }
    }

    fn coords(&self) -> Vec<f64> {
        let mut v = vec![self.t, self.y];
        v.extend(&self.z);
        v.extend(&self.u);
        v
    }
}

/// Sampling box for hypothesis clouds.  Every cloud also contains the
/// points `y ∈ {lower, 0, upper}` with `z = u = w = n = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudSpec {
    pub d: usize,
    pub m: usize,
    pub intensities: Vec<f64>,
    pub horizon: f64,
    pub y: (f64, f64),
    pub z: (f64, f64),
    pub u: (f64, f64),
    pub w: (f64, f64),
    pub n_max: u32,
    pub samples: usize,
    pub seed: u64,
}

impl CloudSpec {
    /// Box `y, z, u ∈ [-5, 5]`, `w ∈ [-3, 3]`, jump counts `0..=3`,
    /// 2000 samples.
    pub fn standard(d: usize, intensities: &[f64], horizon: f64) -> Self {
        CloudSpec {
            d,
            m: intensities.len(),
            intensities: intensities.to_vec(),
            horizon,
            y: (-5.0, 5.0),
            z: (-5.0, 5.0),
            u: (-5.0, 5.0),
            w: (-3.0, 3.0),
            n_max: 3,
            samples: 2000,
            seed: 0x5eed,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> SamplePoint {
        let mut uni = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        let t = uni((0.0, self.horizon));
        let y = uni(self.y);
        let z = (0..self.d).map(|_| uni(self.z)).collect();
        let u = (0..self.m).map(|_| uni(self.u)).collect();
        let w = (0..self.d).map(|_| uni(self.w)).collect();
        let n = (0..self.m)
            .map(|_| rng.random_range(0..=self.n_max) as f64)
            .collect();
        SamplePoint { t, y, z, u, w, n }
    }

    fn anchors(&self) -> Vec<SamplePoint> {
        [self.y.0, 0.0, self.y.1]
            .into_iter()
            .map(|y| SamplePoint {
                t: 0.0,
                y,
                z: vec![0.0; self.d],
                u: vec![0.0; self.m],
                w: vec![0.0; self.d],
                n: vec![0.0; self.m],
            })
            .collect()
    }
}

pub fn sample_cloud(spec: &CloudSpec) -> Vec<SamplePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pts = spec.anchors();
    pts.extend((0..spec.samples).map(|_| spec.draw(&mut rng)));
    pts
}

/// Pairs sharing `(t, w, n)` with independent `(y, z, u)`.
pub fn sample_pairs(spec: &CloudSpec) -> Vec<(SamplePoint, SamplePoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9a1f);
    (0..spec.samples)
        .map(|_| {
            let a = spec.draw(&mut rng);
            let other = spec.draw(&mut rng);
            let b = SamplePoint {
                t: a.t,
                w: a.w.clone(),
                n: a.n.clone(),
                ..other
            };
            (a, b)
        })
        .collect()
}

/// As [`sample_pairs`], with `y ≥ y′` in every pair.
pub fn sample_ordered_pairs(spec: &CloudSpec) -> Vec<(SamplePoint, SamplePoint)> {
    let mut pairs = sample_pairs(spec);
    for (a, b) in &mut pairs {
        if a.y < b.y {
            std::mem::swap(&mut a.y, &mut b.y);
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub index: usize,
    /// `(t, y, z.., u..)`, followed by the primed point for pair checks
    pub coordinates: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub hypothesis: String,
    pub samples: usize,
    pub violations: Vec<Violation>,
    /// largest `lhs / rhs` seen (infinite when `rhs = 0 < lhs`)
    pub worst_ratio: f64,
    /// smallest `rhs - lhs` seen
    pub worst_slack: f64,
}

impl CheckReport {
    fn new(hypothesis: &str) -> Self {
        CheckReport {
            hypothesis: hypothesis.to_string(),
            samples: 0,
            violations: Vec::new(),
            worst_ratio: 0.0,
            worst_slack: f64::INFINITY,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn record(&mut self, index: usize, lhs: f64, rhs: f64, slack: f64, coords: impl FnOnce() -> Vec<f64>) {
        self.samples += 1;
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        self.worst_ratio = self.worst_ratio.max(ratio);
        self.worst_slack = self.worst_slack.min(rhs - lhs);
        if lhs > rhs + slack {
            self.violations.push(Violation {
                index,
                coordinates: coords(),
                lhs,
                rhs,
            });
        }
    }
}

fn eval_at(expr: &Expr, what: &str, p: &SamplePoint, intensities: &[f64]) -> Result<f64> {
    expr.eval(&p.env(intensities))
        .map_err(|e| Error::eval(format!("{what} at {:?}", p.coords()), e))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn lambda_norm(u: &[f64], intensities: &[f64]) -> f64 {
    u.iter()
        .zip(intensities)
        .map(|(u, l)| l * u * u)
        .sum::<f64>()
        .sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn pair_coords(a: &SamplePoint, b: &SamplePoint) -> Vec<f64> {
    let mut v = a.coords();
    v.extend(b.coords());
    v
}

/// `|f| ≤ C(1 + |y| + |z| + |u|)` with `|u|` the `L²(λ)` norm.
pub fn check_linear_growth(
    spec: &GeneratorSpec,
    cloud: &[SamplePoint],
    intensities: &[f64],
) -> Result<CheckReport> {
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("empty sample cloud".into()));
    }
    let mut rep = CheckReport::new("linear growth of f");
    for (i, p) in cloud.iter().enumerate() {
        let lhs = eval_at(&spec.f, "f", p, intensities)?.abs();
        let rhs = spec.growth_c
            * (1.0 + p.y.abs() + norm(&p.z) + lambda_norm(&p.u, intensities));
        rep.record(i, lhs, rhs, GROWTH_SLACK * rhs.max(1.0), || p.coords());
    }
    Ok(rep)
}

/// `|f| ≤ f_t + C(|y| + |z| + |u|)` with `f_t ≥ 0`.
pub fn check_dominated_growth(
    spec: &GeneratorSpec,
    cloud: &[SamplePoint],
    intensities: &[f64],
) -> Result<CheckReport> {
    let ft = spec
        .ft
        .as_ref()
        .ok_or_else(|| Error::Config("dominating process f_t is required".into()))?;
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("empty sample cloud".into()));
    }
    let mut rep = CheckReport::new("dominated growth of f");
    for (i, p) in cloud.iter().enumerate() {
        let ftv = eval_at(ft, "f_t", p, intensities)?;
        if ftv < 0.0 {
            rep.record(i, 0.0, ftv, 0.0, || p.coords());
            continue;
        }
        let lhs = eval_at(&spec.f, "f", p, intensities)?.abs();
        let rhs = ftv + spec.growth_c * (p.y.abs() + norm(&p.z) + lambda_norm(&p.u, intensities));
        rep.record(i, lhs, rhs, GROWTH_SLACK * rhs.max(1.0), || p.coords());
    }
    Ok(rep)
}

fn check_same_time(pairs: &[(SamplePoint, SamplePoint)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty pair cloud".into()));
    }
    match pairs
        .iter()
        .position(|(a, b)| a.t != b.t || a.w != b.w || a.n != b.n)
    {
        Some(i) => Err(Error::InvalidArgument(format!(
            "pair {i} does not share t and path state"
        ))),
        None => Ok(()),
    }
}

/// `|g − g′|² ≤ C|y − y′|² + α(|z − z′|² + |u − u′|²)`.
pub fn check_g_contraction(
    spec: &GeneratorSpec,
    pairs: &[(SamplePoint, SamplePoint)],
    intensities: &[f64],
) -> Result<CheckReport> {
    check_same_time(pairs)?;
    let mut rep = CheckReport::new("contraction of g");
    for (i, (a, b)) in pairs.iter().enumerate() {
        let ga = eval_at(&spec.g, "g", a, intensities)?;
        let gb = eval_at(&spec.g, "g", b, intensities)?;
        let lhs = (ga - gb).powi(2);
        let dz = norm(&diff(&a.z, &b.z));
        let du = lambda_norm(&diff(&a.u, &b.u), intensities);
        let rhs = spec.growth_c * (a.y - b.y).powi(2) + spec.alpha * (dz * dz + du * du);
        rep.record(i, lhs, rhs, PAIR_SLACK, || pair_coords(a, b));
    }
    Ok(rep)
}

/// For `y ≥ y′`: `f − f′ ≥ π(t, y − y′, z − z′, u − u′)`, and
/// `|π| ≤ C(|y| + |z| + |u|)` at the same difference arguments.
pub fn check_pi_minorant(
    spec: &GeneratorSpec,
    ordered_pairs: &[(SamplePoint, SamplePoint)],
    intensities: &[f64],
) -> Result<CheckReport> {
    let pi = spec
        .pi
        .as_ref()
        .ok_or_else(|| Error::Config("minorant pi is required".into()))?;
    check_same_time(ordered_pairs)?;
    if let Some(i) = ordered_pairs.iter().position(|(a, b)| a.y < b.y) {
        return Err(Error::InvalidArgument(format!("pair {i} has y < y'")));
    }
    let mut rep = CheckReport::new("minorant pi");
    for (i, (a, b)) in ordered_pairs.iter().enumerate() {
        let delta = SamplePoint {
            t: a.t,
            y: a.y - b.y,
            z: diff(&a.z, &b.z),
            u: diff(&a.u, &b.u),
            w: a.w.clone(),
            n: a.n.clone(),
        };
        let piv = eval_at(pi, "pi", &delta, intensities)?;
        let fa = eval_at(&spec.f, "f", a, intensities)?;
        let fb = eval_at(&spec.f, "f", b, intensities)?;
        // minorant: pi - (f - f') must not be positive
        rep.record(i, piv, fa - fb, PAIR_SLACK, || pair_coords(a, b));
        let bound = spec.growth_c
            * (delta.y.abs() + norm(&delta.z) + lambda_norm(&delta.u, intensities));
        rep.record(i, piv.abs(), bound, PAIR_SLACK, || pair_coords(a, b));
    }
    Ok(rep)
}
