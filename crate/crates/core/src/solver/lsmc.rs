//! Regression Monte Carlo: conditional expectations by weighted least squares
//! on a basis of the conditioning state.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{atom_keys, path_state, solve, Backend, ProblemSpec, Projection, SolutionGrid};
use crate::drivers::ScenarioSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BasisKind {
    /// Monomials of total degree `<= degree` in the standardized features
    /// `W_{t_i}`, `N(t_i)`, `B_T − B_{t_{i+1}}`, `ΔB_i`, plus the barrier value.
    Polynomial { degree: usize },
    /// One indicator per conditioning atom of two-point scenarios; exact on
    /// exhaustive enumerations.
    Indicator,
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisKind::Polynomial { degree } => write!(f, "polynomial(degree {degree})"),
            BasisKind::Indicator => write!(f, "indicator"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsmcParams {
    pub basis: BasisKind,
    /// ridge weight added to the Jacobi-scaled normal matrix
    pub ridge: f64,
    /// largest accepted condition number of the scaled normal matrix
    pub max_condition: f64,
}

impl Default for LsmcParams {
    fn default() -> Self {
        LsmcParams {
            basis: BasisKind::Polynomial { degree: 2 },
            ridge: 1e-8,
            max_condition: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub basis_size: usize,
    pub condition: f64,
    /// weighted RMS residual per target column `(y, z.., u..)`
    pub residual_rms: Vec<f64>,
    /// standard error of the mean of each target column
    pub target_se: Vec<f64>,
}

/// Regression-based solve of `problem` on `scenarios`.
pub fn solve_lsmc(
    problem: &ProblemSpec,
    scenarios: &ScenarioSet,
    params: &LsmcParams,
) -> Result<SolutionGrid> {
    solve(problem, Backend::Lsmc { scenarios, params })
}

pub(crate) struct RegressionProjection<'a> {
    sc: &'a ScenarioSet,
    params: &'a LsmcParams,
    weights: Vec<f64>,
    w: Array3<f64>,
    n: Array3<f64>,
    remainders: Array2<f64>,
    barrier: Array2<f64>,
    diagnostics: Vec<StepDiagnostics>,
}

impl<'a> RegressionProjection<'a> {
    pub fn new(problem: &ProblemSpec, sc: &'a ScenarioSet, params: &'a LsmcParams) -> Result<Self> {
        if !(params.ridge >= 0.0 && params.ridge.is_finite()) {
            return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {}", params.ridge)));
        }
        if let BasisKind::Polynomial { degree } = params.basis {
            if degree == 0 {
                return Err(Error::InvalidArgument("polynomial degree must be >= 1".into()));
            }
        }
        let state = path_state(problem, sc)?;
        Ok(RegressionProjection {
            sc,
            params,
            weights: sc.weights(),
            w: state.w,
            n: state.n,
            remainders: sc.backward_remainders(),
            barrier: state.barrier,
            diagnostics: Vec::new(),
        })
    }

    pub fn into_diagnostics(mut self) -> Vec<StepDiagnostics> {
        self.diagnostics.sort_by_key(|d| d.step);
        self.diagnostics
    }

    pub fn root_standard_error(&self) -> f64 {
        self.diagnostics
            .iter()
            .find(|d| d.step == 0)
            .map_or(0.0, |d| d.target_se[0])
    }

    fn design(&self, step: usize) -> Result<DMatrix<f64>> {
        let paths = self.sc.path_count();
        match self.params.basis {
            BasisKind::Indicator => {
                let keys = atom_keys(self.sc, step)?;
                let mut cols: HashMap<u64, usize> = HashMap::new();
                for k in &keys {
                    let next = cols.len();
                    cols.entry(*k).or_insert(next);
                }
                let mut phi = DMatrix::zeros(paths, cols.len());
                for (p, k) in keys.iter().enumerate() {
                    phi[(p, cols[k])] = 1.0;
                }
                Ok(phi)
            }
            BasisKind::Polynomial { degree } => {
                let (d, m) = (self.w.dim().2, self.n.dim().2);
                let mut raw: Vec<Vec<f64>> = Vec::new();
                for j in 0..d {
                    raw.push((0..paths).map(|p| self.w[[p, step, j]]).collect());
                }
                for k in 0..m {
                    raw.push((0..paths).map(|p| self.n[[p, step, k]]).collect());
                }
                raw.push((0..paths).map(|p| self.remainders[[p, step + 1]]).collect());
                raw.push((0..paths).map(|p| self.sc.db[[p, step]]).collect());
                let feats: Vec<Vec<f64>> =
                    raw.iter().filter_map(|c| self.standardize(c)).collect();
                let barrier: Vec<f64> = (0..paths).map(|p| self.barrier[[p, step]]).collect();
                let extra = self.standardize(&barrier);

                let exps = monomials(feats.len(), degree);
                let ncols = exps.len() + usize::from(extra.is_some());
                let mut phi = DMatrix::zeros(paths, ncols);
                for p in 0..paths {
                    for (c, e) in exps.iter().enumerate() {
                        phi[(p, c)] = e
                            .iter()
                            .zip(&feats)
                            .map(|(&k, f)| f[p].powi(k as i32))
                            .product();
                    }
                    if let Some(b) = &extra {
                        phi[(p, ncols - 1)] = b[p];
                    }
                }
                Ok(phi)
            }
        }
    }

    fn standardize(&self, col: &[f64]) -> Option<Vec<f64>> {
        let mean: f64 = col.iter().zip(&self.weights).map(|(x, w)| x * w).sum();
        let var: f64 = col
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * (x - mean).powi(2))
            .sum();
        let sd = var.sqrt();
        if sd <= 1e-12 * (1.0 + mean.abs()) {
            return None;
        }
        Some(col.iter().map(|x| (x - mean) / sd).collect())
    }
}

/// Exponent vectors of all monomials of total degree `<= degree` in `k`
/// variables, constant first.
fn monomials(k: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; k]];
    let mut frontier = vec![vec![0; k]];
    for _ in 0..degree {
        let mut next = Vec::new();
        for e in &frontier {
            // raise variables at or after the last nonzero one, so each
            // monomial is generated once
            let start = e.iter().rposition(|&x| x > 0).unwrap_or(0);
            for v in start..k {
                let mut f = e.clone();
                f[v] += 1;
                next.push(f);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

impl Projection for RegressionProjection<'_> {
    fn project(&mut self, step: usize, targets: &Array2<f64>) -> Result<Array2<f64>> {
        let phi = self.design(step)?;
        let (paths, kdim) = phi.shape();
        if paths < 10 * kdim {
            return Err(Error::InvalidArgument(format!(
                "step {step}: {paths} paths is fewer than 10 x basis size {kdim} ({})",
                self.params.basis
            )));
        }
        let q = targets.ncols();
        let sqrt_w: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let phi_w = DMatrix::from_fn(paths, kdim, |p, c| phi[(p, c)] * sqrt_w[p]);
        let t_w = DMatrix::from_fn(paths, q, |p, c| targets[[p, c]] * sqrt_w[p]);
        let gram = phi_w.transpose() * &phi_w;
        let rhs = phi_w.transpose() * &t_w;

        let basis = self.params.basis.to_string();
        let scale: Vec<f64> = (0..kdim)
            .map(|j| {
                let g = gram[(j, j)];
                if g > 0.0 {
                    1.0 / g.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        if scale.iter().any(|&s| s == 0.0) {
            return Err(Error::RankDeficient {
                step,
                basis,
                condition: f64::INFINITY,
            });
        }
        let mut a = DMatrix::from_fn(kdim, kdim, |i, j| gram[(i, j)] * scale[i] * scale[j]);
        for j in 0..kdim {
            a[(j, j)] += self.params.ridge;
        }
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= self.params.max_condition) {
            return Err(Error::RankDeficient {
                step,
                basis,
                condition,
            });
        }
        let chol = a.cholesky().ok_or(Error::RankDeficient {
            step,
            basis,
            condition,
        })?;
        let scaled_rhs = DMatrix::from_fn(kdim, q, |i, c| rhs[(i, c)] * scale[i]);
        let x = chol.solve(&scaled_rhs);
        let beta = DMatrix::from_fn(kdim, q, |i, c| x[(i, c)] * scale[i]);
        let fit = &phi * beta;

        let p_eff = 1.0 / self.weights.iter().map(|w| w * w).sum::<f64>();
        let mut residual_rms = Vec::with_capacity(q);
        let mut target_se = Vec::with_capacity(q);
        for c in 0..q {
            let mean: f64 = (0..paths).map(|p| self.weights[p] * targets[[p, c]]).sum();
            let var: f64 = (0..paths)
                .map(|p| self.weights[p] * (targets[[p, c]] - mean).powi(2))
                .sum();
            let res: f64 = (0..paths)
                .map(|p| self.weights[p] * (targets[[p, c]] - fit[(p, c)]).powi(2))
                .sum();
            residual_rms.push(res.sqrt());
            target_se.push((var / p_eff).sqrt());
        }
        self.diagnostics.push(StepDiagnostics {
            step,
            basis_size: kdim,
            condition,
            residual_rms,
            target_se,
        });
        Ok(Array2::from_shape_fn((paths, q), |(p, c)| fit[(p, c)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(3, 2).len(), 10);
        assert_eq!(monomials(4, 2).len(), 15);
        assert_eq!(monomials(2, 3).len(), 10);
        assert_eq!(monomials(0, 2).len(), 1);
        let m = monomials(2, 2);
        let mut uniq = m.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), m.len());
    }
}
