//! Time grids and sampled driving noise.
//!
//! Three mutually independent drivers are simulated on a uniform grid: a
//! forward Brownian motion `W` in `R^d`, a scalar Brownian motion `B` that
//! enters the equation through a backward integral, and a Poisson random
//! measure on a finite mark space.  Every path draws from its own ChaCha
//! stream (the path index selects the stream), so output does not depend on
//! how paths are scheduled across threads.

use std::io::Write;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCENARIO_SCHEMA: &str = "rbdsdep/scenarios/v1";

/// Uniform partition of `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step".into()));
        }
        let n = steps as f64;
        let times = (0..=steps)
            .map(|i| if i == steps { horizon } else { horizon * (i as f64 / n) })
            .collect();
        Ok(Self {
            horizon,
            steps,
            dt: horizon / n,
            times,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }
}

/// Builds the uniform grid `t_i = i T / N`.
pub fn build_time_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(horizon, steps)
}

/// Finite atomic Lévy measure: mark `e_k` fires with intensity `λ_k`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MarkSpace {
    marks: Vec<f64>,
    intensities: Vec<f64>,
}

impl MarkSpace {
    pub fn new(marks: Vec<f64>, intensities: Vec<f64>) -> Result<Self> {
        if marks.len() != intensities.len() {
            return Err(Error::InvalidArgument(format!(
                "{} marks but {} intensities",
                marks.len(),
                intensities.len()
            )));
        }
        if let Some(e) = marks.iter().find(|e| !e.is_finite() || **e == 0.0) {
            return Err(Error::InvalidArgument(format!(
                "marks must be finite and nonzero, got {e}"
            )));
        }
        if let Some(l) = intensities.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "intensities must be positive, got {l}"
            )));
        }
        Ok(Self { marks, intensities })
    }

    /// The jump-free mark space (`m = 0`).
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn total_intensity(&self) -> f64 {
        self.intensities.iter().sum()
    }

    /// `‖u‖² = Σ_k λ_k u_k²`, the squared `L²(λ)` norm of a mark function.
    pub fn l2_norm_sq(&self, u: &[f64]) -> f64 {
        self.intensities
            .iter()
            .zip(u)
            .map(|(l, v)| l * v * v)
            .sum()
    }
}

/// Per-step compensator weights `λ_k dt`.
pub fn compensator_increments(marks: &MarkSpace, dt: f64) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    Ok(marks.intensities().iter().map(|l| l * dt).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverMode {
    /// Gaussian Brownian increments and Poisson jump counts.
    Gaussian,
    /// `±√dt` increments and at most one jump per mark and step.
    TwoPoint,
}

/// Sampled increments of `W`, `B` and the jump measure, one row per path.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub(crate) grid: TimeGrid,
    pub(crate) dim_d: usize,
    pub(crate) marks: MarkSpace,
    pub(crate) seed: u64,
    pub(crate) mode: DriverMode,
    /// `(path, step, component)`
    pub(crate) dw: Array3<f64>,
    /// `(path, step)`
    pub(crate) db: Array2<f64>,
    /// `(path, step, mark)`
    pub(crate) jumps: Array3<u32>,
    /// Exact path probabilities for enumerated trees; `None` means equal weights.
    pub(crate) weights: Option<Vec<f64>>,
}

struct PathDraw {
    dw: Vec<f64>,
    db: Vec<f64>,
    jumps: Vec<u32>,
}

/// Samples `paths` independent paths of the three drivers.
pub fn simulate_scenarios(
    grid: &TimeGrid,
    dim_d: usize,
    marks: &MarkSpace,
    paths: usize,
    seed: u64,
    mode: DriverMode,
) -> Result<ScenarioSet> {
    if paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    if dim_d == 0 {
        return Err(Error::InvalidArgument("W dimension must be at least 1".into()));
    }
    let dt = grid.dt();
    if mode == DriverMode::TwoPoint && marks.total_intensity() * dt >= 1.0 {
        return Err(Error::Config(format!(
            "two-point mode needs total_intensity * dt < 1, got {}",
            marks.total_intensity() * dt
        )));
    }
    let n = grid.steps();
    let m = marks.len();
    let sqrt_dt = dt.sqrt();
    let rates = compensator_increments(marks, dt)?;
    let poissons: Vec<Poisson<f64>> = rates
        .iter()
        .map(|&r| Poisson::new(r).map_err(|e| Error::InvalidArgument(e.to_string())))
        .collect::<Result<_>>()?;

    let draws: Vec<PathDraw> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut draw = PathDraw {
                dw: Vec::with_capacity(n * dim_d),
                db: Vec::with_capacity(n),
                jumps: Vec::with_capacity(n * m),
            };
            for _ in 0..n {
                match mode {
                    DriverMode::Gaussian => {
                        for _ in 0..dim_d {
                            let g: f64 = StandardNormal.sample(&mut rng);
                            draw.dw.push(g * sqrt_dt);
                        }
                        let g: f64 = StandardNormal.sample(&mut rng);
                        draw.db.push(g * sqrt_dt);
                        for dist in &poissons {
                            draw.jumps.push(dist.sample(&mut rng) as u32);
                        }
                    }
                    DriverMode::TwoPoint => {
                        for _ in 0..dim_d {
                            draw.dw.push(if rng.random::<bool>() { sqrt_dt } else { -sqrt_dt });
                        }
                        draw.db.push(if rng.random::<bool>() { sqrt_dt } else { -sqrt_dt });
                        for &r in &rates {
                            draw.jumps.push(u32::from(rng.random::<f64>() < r));
                        }
                    }
                }
            }
            draw
        })
        .collect();

    let mut dw = Array3::zeros((paths, n, dim_d));
    let mut db = Array2::zeros((paths, n));
    let mut jumps = Array3::zeros((paths, n, m));
    for (p, draw) in draws.into_iter().enumerate() {
        for i in 0..n {
            for j in 0..dim_d {
                dw[[p, i, j]] = draw.dw[i * dim_d + j];
            }
            db[[p, i]] = draw.db[i];
            for k in 0..m {
                jumps[[p, i, k]] = draw.jumps[i * m + k];
            }
        }
    }
    Ok(ScenarioSet {
        grid: grid.clone(),
        dim_d,
        marks: marks.clone(),
        seed,
        mode,
        dw,
        db,
        jumps,
        weights: None,
    })
}

impl ScenarioSet {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    pub fn marks(&self) -> &MarkSpace {
        &self.marks
    }

    pub fn path_count(&self) -> usize {
        self.db.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> DriverMode {
        self.mode
    }

    pub fn dw(&self) -> &Array3<f64> {
        &self.dw
    }

    pub fn db(&self) -> &Array2<f64> {
        &self.db
    }

    pub fn jumps(&self) -> &Array3<u32> {
        &self.jumps
    }

    /// Probability weight of every path (sums to one).
    pub fn weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.path_count() as f64; self.path_count()],
        }
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    /// Variance of one compensated count `c_k - λ_k dt` under the sampling law:
    /// `λ dt (1 - λ dt)` for Bernoulli jumps, `λ dt` for Poisson counts.
    pub fn compensated_variance(&self) -> Vec<f64> {
        let dt = self.grid.dt();
        self.marks
            .intensities()
            .iter()
            .map(|l| match self.mode {
                DriverMode::Gaussian => l * dt,
                DriverMode::TwoPoint => l * dt * (1.0 - l * dt),
            })
            .collect()
    }

    /// `W_{t_i}` per path, shape `(path, time index 0..=N, component)`.
    pub fn brownian_levels(&self) -> Array3<f64> {
        let (p, n, d) = self.dw.dim();
        let mut w = Array3::zeros((p, n + 1, d));
        for path in 0..p {
            for i in 0..n {
                for j in 0..d {
                    w[[path, i + 1, j]] = w[[path, i, j]] + self.dw[[path, i, j]];
                }
            }
        }
        w
    }

    /// Jump counts `N_k(t_i)` per path as reals, shape `(path, time index, mark)`.
    pub fn jump_totals(&self) -> Array3<f64> {
        let (p, n, m) = self.jumps.dim();
        let mut c = Array3::zeros((p, n + 1, m));
        for path in 0..p {
            for i in 0..n {
                for k in 0..m {
                    c[[path, i + 1, k]] = c[[path, i, k]] + f64::from(self.jumps[[path, i, k]]);
                }
            }
        }
        c
    }

    /// `B_T - B_{t_i}` per path, shape `(path, time index)`.
    pub fn backward_remainders(&self) -> Array2<f64> {
        let (p, n) = self.db.dim();
        let mut r = Array2::zeros((p, n + 1));
        for path in 0..p {
            for i in (0..n).rev() {
                r[[path, i]] = r[[path, i + 1]] + self.db[[path, i]];
            }
        }
        r
    }

    /// Writes one row per path-step: `path,step,dW1..dWd,dB,jump1..jumpm`.
    ///
    /// The first line is a `#` comment carrying the schema id.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(
            out,
            "# schema={SCENARIO_SCHEMA} seed={} mode={:?}",
            self.seed, self.mode
        )?;
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["path".to_string(), "step".to_string()];
        header.extend((1..=self.dim_d).map(|j| format!("dW{j}")));
        header.push("dB".into());
        header.extend((1..=self.marks.len()).map(|k| format!("jump{k}")));
        wtr.write_record(&header)?;
        let (p, n, d) = self.dw.dim();
        for path in 0..p {
            for i in 0..n {
                let mut row = vec![path.to_string(), i.to_string()];
                row.extend((0..d).map(|j| self.dw[[path, i, j]].to_string()));
                row.push(self.db[[path, i]].to_string());
                row.extend((0..self.marks.len()).map(|k| self.jumps[[path, i, k]].to_string()));
                wtr.write_record(&row)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = build_time_grid(1.0, 4).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = build_time_grid(2.0, 1).unwrap();
        assert_eq!(g.times(), &[0.0, 2.0]);
        assert_eq!(g.dt(), 2.0);
        assert!(build_time_grid(1.0, 0).is_err());
        assert!(build_time_grid(-1.0, 3).is_err());
        assert!(build_time_grid(0.0, 3).is_err());
    }

    #[test]
    fn grid_endpoint_is_exact() {
        for n in 1..200 {
            let g = build_time_grid(0.7, n).unwrap();
            assert_eq!(*g.times().last().unwrap(), 0.7);
            assert!((g.dt() * n as f64 - 0.7).abs() <= 1e-12 * 0.7);
            assert!(g.times().windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn compensator_examples() {
        let two = MarkSpace::new(vec![1.0], vec![2.0]).unwrap();
        assert_eq!(compensator_increments(&two, 0.25).unwrap(), vec![0.5]);
        assert!(compensator_increments(&MarkSpace::empty(), 0.25).unwrap().is_empty());
        let pair = MarkSpace::new(vec![1.0, -1.0], vec![1.0, 3.0]).unwrap();
        let w = compensator_increments(&pair, 0.1).unwrap();
        assert!((w[0] - 0.1).abs() < 1e-15 && (w[1] - 0.3).abs() < 1e-15);
        assert!(compensator_increments(&pair, 0.0).is_err());
    }

    #[test]
    fn mark_space_rejects_bad_atoms() {
        assert!(MarkSpace::new(vec![0.0], vec![1.0]).is_err());
        assert!(MarkSpace::new(vec![1.0], vec![0.0]).is_err());
        assert!(MarkSpace::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn two_point_values_and_no_jumps() {
        let g = build_time_grid(1.0, 4).unwrap();
        let s = simulate_scenarios(&g, 1, &MarkSpace::empty(), 8, 3, DriverMode::TwoPoint).unwrap();
        assert!(s.dw().iter().all(|v| *v == 0.5 || *v == -0.5));
        assert!(s.db().iter().all(|v| *v == 0.5 || *v == -0.5));
        assert_eq!(s.jumps().len(), 0);
    }

    #[test]
    fn two_point_rejects_large_intensity() {
        let g = build_time_grid(1.0, 2).unwrap();
        let marks = MarkSpace::new(vec![1.0], vec![2.0]).unwrap();
        let err = simulate_scenarios(&g, 1, &marks, 8, 3, DriverMode::TwoPoint).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let g = build_time_grid(1.0, 10).unwrap();
        let marks = MarkSpace::new(vec![0.5, -1.0], vec![1.0, 2.0]).unwrap();
        for mode in [DriverMode::Gaussian, DriverMode::TwoPoint] {
            let a = simulate_scenarios(&g, 2, &marks, 50, 11, mode).unwrap();
            let b = simulate_scenarios(&g, 2, &marks, 50, 11, mode).unwrap();
            assert_eq!(a.dw(), b.dw());
            assert_eq!(a.db(), b.db());
            assert_eq!(a.jumps(), b.jumps());
            let c = simulate_scenarios(&g, 2, &marks, 50, 12, mode).unwrap();
            assert_ne!(a.dw(), c.dw());
        }
    }

    #[test]
    fn csv_layout() {
        let g = build_time_grid(1.0, 2).unwrap();
        let marks = MarkSpace::new(vec![1.0], vec![0.5]).unwrap();
        let s = simulate_scenarios(&g, 1, &marks, 2, 1, DriverMode::TwoPoint).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines[0].starts_with("# schema=rbdsdep/scenarios/v1"));
        assert_eq!(lines[1], "path,step,dW1,dB,jump1");
        assert_eq!(lines.len(), 2 + 4);
    }
}
