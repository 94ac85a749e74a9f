//! Exhaustive two-point tree: every combination of `±√dt` increments for `W`
//! and `B` and jump indicators per mark, with exact probabilities.

use std::collections::HashMap;

use ndarray::{Array2, Array3};

use super::{atom_keys, solve, Backend, ProblemSpec, Projection, SolutionGrid};
use crate::drivers::{DriverMode, MarkSpace, ScenarioSet, TimeGrid};
use crate::{Error, Result};

pub const DEFAULT_TREE_MAX_STEPS: usize = 6;
pub const DEFAULT_TREE_BUDGET: u128 = 1 << 22;

/// All `(2^d · 2 · 2^m)^N` paths of the two-point drivers stored as a
/// weighted scenario set.
#[derive(Debug, Clone)]
pub struct TreeModel {
    scenarios: ScenarioSet,
    branching: usize,
}

impl TreeModel {
    pub fn new(
        grid: &TimeGrid,
        dim_d: usize,
        marks: &MarkSpace,
        max_steps: usize,
        budget: u128,
    ) -> Result<Self> {
        if dim_d == 0 {
            return Err(Error::InvalidArgument("W dimension must be at least 1".into()));
        }
        let steps = grid.steps();
        if steps > max_steps {
            return Err(Error::InvalidArgument(format!(
                "tree needs N <= {max_steps}, got {steps}"
            )));
        }
        let dt = grid.dt();
        if marks.total_intensity() * dt >= 1.0 {
            return Err(Error::Config(format!(
                "tree needs total intensity * dt < 1, got {}",
                marks.total_intensity() * dt
            )));
        }
        let m = marks.len();
        let bits = dim_d + 1 + m;
        let nodes = (bits as u32)
            .checked_mul(steps as u32)
            .filter(|&b| b < 128)
            .map(|b| 1u128 << b)
            .unwrap_or(u128::MAX);
        if nodes > budget {
            return Err(Error::BudgetExceeded { nodes, budget });
        }
        let branching = 1usize << bits;
        let paths = nodes as usize;
        let sq = dt.sqrt();
        let lam_dt: Vec<f64> = marks.intensities().iter().map(|l| l * dt).collect();

        let mut dw = Array3::zeros((paths, steps, dim_d));
        let mut db = Array2::zeros((paths, steps));
        let mut jumps = Array3::zeros((paths, steps, m));
        let mut weights = vec![0.0; paths];
        for (p, weight) in weights.iter_mut().enumerate() {
            let mut prob = 1.0;
            let mut rest = p;
            for s in (0..steps).rev() {
                let digit = rest % branching;
                rest /= branching;
                for j in 0..dim_d {
                    dw[[p, s, j]] = if digit >> j & 1 == 1 { sq } else { -sq };
                }
                db[[p, s]] = if digit >> dim_d & 1 == 1 { sq } else { -sq };
                prob *= 0.5f64.powi(dim_d as i32 + 1);
                for k in 0..m {
                    let fired = digit >> (dim_d + 1 + k) & 1 == 1;
                    jumps[[p, s, k]] = u32::from(fired);
                    prob *= if fired { lam_dt[k] } else { 1.0 - lam_dt[k] };
                }
            }
            *weight = prob;
        }
        let scenarios = ScenarioSet {
            grid: grid.clone(),
            dim_d,
            marks: marks.clone(),
            seed: 0,
            mode: DriverMode::TwoPoint,
            dw,
            db,
            jumps,
            weights: Some(weights),
        };
        Ok(TreeModel {
            scenarios,
            branching,
        })
    }

    /// Tree with `N <= 6` and at most `2^22` paths.
    pub fn with_defaults(grid: &TimeGrid, dim_d: usize, marks: &MarkSpace) -> Result<Self> {
        Self::new(grid, dim_d, marks, DEFAULT_TREE_MAX_STEPS, DEFAULT_TREE_BUDGET)
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    /// Number of children of every node.
    pub fn branching(&self) -> usize {
        self.branching
    }

    /// Number of enumerated paths (leaves).
    pub fn node_count(&self) -> usize {
        self.scenarios.path_count()
    }
}

/// Exact backward recursion on the tree.
pub fn solve_tree_exact(problem: &ProblemSpec, tree: &TreeModel) -> Result<SolutionGrid> {
    solve(problem, Backend::Tree(tree))
}

/// Exact conditional expectation: probability-weighted mean over each atom.
pub(crate) struct GroupProjection<'a> {
    sc: &'a ScenarioSet,
    weights: Vec<f64>,
}

impl<'a> GroupProjection<'a> {
    pub fn new(sc: &'a ScenarioSet) -> Self {
        GroupProjection {
            sc,
            weights: sc.weights(),
        }
    }
}

impl Projection for GroupProjection<'_> {
    fn project(&mut self, step: usize, targets: &Array2<f64>) -> Result<Array2<f64>> {
        let keys = atom_keys(self.sc, step)?;
        let cols = targets.ncols();
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut group = Vec::with_capacity(keys.len());
        for key in &keys {
            let next = index.len();
            group.push(*index.entry(*key).or_insert(next));
        }
        let mut mass = vec![0.0; index.len()];
        let mut sums = Array2::<f64>::zeros((index.len(), cols));
        for (p, &g) in group.iter().enumerate() {
            let w = self.weights[p];
            mass[g] += w;
            for c in 0..cols {
                sums[[g, c]] += w * targets[[p, c]];
            }
        }
        let mut out = Array2::zeros(targets.raw_dim());
        for (p, &g) in group.iter().enumerate() {
            for c in 0..cols {
                out[[p, c]] = sums[[g, c]] / mass[g];
            }
        }
        Ok(out)
    }
}
