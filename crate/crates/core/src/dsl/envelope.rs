//! Inf- and sup-convolution envelopes of a generator over a bounded grid.
//!
//! For a query `x = (y, z, u)` the candidate set on each axis is the regular
//! grid of the box plus the query coordinate itself, so on-grid queries use
//! exactly the grid and `f_n(x) ≤ f(x)` holds for every query in the box.
//! Axes the expression does not depend on are skipped (their penalty is 0).

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use super::{Env, Expr, Var};
use crate::{Error, Result};

const BOUNDARY_TOL: f64 = 1e-12;
const MAX_CACHED_TABLE: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeKind {
    /// `inf [f(x′) + n|x − x′|]`, lies below `f`
    Inf,
    /// `sup [f(x′) − n|x − x′|]`, lies above `f`
    Sup,
}

impl EnvelopeKind {
    fn sign(self) -> f64 {
        match self {
            EnvelopeKind::Inf => 1.0,
            EnvelopeKind::Sup => -1.0,
        }
    }
}

/// Convolution index, search box per axis `(y, z1..zd, u1..um)` and grid size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub n: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub grid_points: usize,
    pub growth_c: f64,
}

impl EnvelopeParams {
    pub fn new(
        n: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
        grid_points: usize,
        growth_c: f64,
    ) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument(
                "envelope box needs matching, nonempty lower and upper bounds".into(),
            ));
        }
        for (a, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidArgument(format!(
                    "envelope box axis {a} must be bounded with positive width, got [{lo}, {hi}]"
                )));
            }
        }
        if grid_points < 2 {
            return Err(Error::InvalidArgument("envelope grid needs at least 2 points".into()));
        }
        if !(n >= growth_c && n.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "convolution index n = {n} must be >= growth constant C = {growth_c}"
            )));
        }
        Ok(EnvelopeParams {
            n,
            lower,
            upper,
            grid_points,
            growth_c,
        })
    }

    /// Same interval `y_box` for `y` and `zu_box` for every `z` and `u` axis.
    pub fn boxed(
        n: f64,
        d: usize,
        m: usize,
        y_box: (f64, f64),
        zu_box: (f64, f64),
        grid_points: usize,
        growth_c: f64,
    ) -> Result<Self> {
        let mut lower = vec![y_box.0];
        let mut upper = vec![y_box.1];
        lower.extend(std::iter::repeat_n(zu_box.0, d + m));
        upper.extend(std::iter::repeat_n(zu_box.1, d + m));
        Self::new(n, lower, upper, grid_points, growth_c)
    }

    pub fn with_n(&self, n: f64) -> Result<Self> {
        Self::new(n, self.lower.clone(), self.upper.clone(), self.grid_points, self.growth_c)
    }

    pub fn axes(&self) -> usize {
        self.lower.len()
    }

    pub fn grid_value(&self, axis: usize, k: usize) -> f64 {
        let (lo, hi) = (self.lower[axis], self.upper[axis]);
        if k + 1 == self.grid_points {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (self.grid_points - 1) as f64
        }
    }

    pub fn grid(&self, axis: usize) -> Vec<f64> {
        (0..self.grid_points).map(|k| self.grid_value(axis, k)).collect()
    }

    /// Grid spacing on `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.grid_points - 1) as f64
    }
}

/// Envelope of one expression, with a per-time table of grid values when
/// the expression does not depend on the path state `(w, n)`.
#[derive(Debug)]
pub struct Envelope {
    f: Expr,
    params: EnvelopeParams,
    kind: EnvelopeKind,
    d: usize,
    active: Vec<usize>,
    cacheable: bool,
    tables: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

struct Candidate {
    value: f64,
    grid_index: Option<usize>,
    boundary: bool,
}

impl Envelope {
    pub fn new(f: Expr, params: EnvelopeParams, kind: EnvelopeKind, d: usize, m: usize) -> Result<Self> {
        if params.axes() != 1 + d + m {
            return Err(Error::ShapeMismatch(format!(
                "envelope box has {} axes, expected 1 + d + m = {}",
                params.axes(),
                1 + d + m
            )));
        }
        let active: Vec<usize> = (0..params.axes())
            .filter(|&a| f.depends_on_axis(a, d))
            .collect();
        let table_len = params.grid_points.checked_pow(active.len() as u32);
        let cacheable = !f.uses(|v| matches!(v, Var::W(_) | Var::N(_)))
            && table_len.is_some_and(|l| l <= MAX_CACHED_TABLE);
        Ok(Envelope {
            f,
            params,
            kind,
            d,
            active,
            cacheable,
            tables: Mutex::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &EnvelopeParams {
        &self.params
    }

    pub fn kind(&self) -> EnvelopeKind {
        self.kind
    }

    fn coordinate(&self, env: &Env<'_>, axis: usize) -> f64 {
        if axis == 0 {
            env.y
        } else if axis <= self.d {
            env.z[axis - 1]
        } else {
            env.u[axis - 1 - self.d]
        }
    }

    fn eval_f(&self, env: &Env<'_>, x: &[f64]) -> Result<f64> {
        let (z, u) = x[1..].split_at(self.d);
        let e = Env {
            y: x[0],
            z,
            u,
            ..*env
        };
        self.f
            .eval(&e)
            .map_err(|err| Error::eval(format!("envelope candidate {x:?}"), err))
    }

    fn table(&self, env: &Env<'_>, x: &mut [f64]) -> Result<Option<Arc<Vec<f64>>>> {
        if !self.cacheable {
            return Ok(None);
        }
        let key = env.t.to_bits();
        if let Some(t) = self.tables.lock().expect("envelope cache poisoned").get(&key) {
            return Ok(Some(Arc::clone(t)));
        }
        let k = self.active.len();
        let p = self.params.grid_points;
        let len = p.pow(k as u32);
        let mut values = Vec::with_capacity(len);
        let mut idx = vec![0usize; k];
        for _ in 0..len {
            for (j, &a) in self.active.iter().enumerate() {
                x[a] = self.params.grid_value(a, idx[j]);
            }
            values.push(self.eval_f(env, x)?);
            for j in (0..k).rev() {
                idx[j] += 1;
                if idx[j] < p {
                    break;
                }
                idx[j] = 0;
            }
        }
        let table = Arc::new(values);
        self.tables
            .lock()
            .expect("envelope cache poisoned")
            .insert(key, Arc::clone(&table));
        Ok(Some(table))
    }

    /// Envelope value at the state in `env`.
    pub fn eval(&self, env: &Env<'_>) -> Result<f64> {
        let axes = self.params.axes();
        if env.z.len() != self.d || env.u.len() != axes - 1 - self.d {
            return Err(Error::ShapeMismatch(format!(
                "envelope query has {} z and {} u components",
                env.z.len(),
                env.u.len()
            )));
        }
        let mut x: Vec<f64> = (0..axes).map(|a| self.coordinate(env, a)).collect();
        for (a, &v) in x.iter().enumerate() {
            let (lo, hi) = (self.params.lower[a], self.params.upper[a]);
            if !(v >= lo && v <= hi) {
                return Err(Error::Domain {
                    axis: a,
                    value: v,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        let query = x.clone();
        let p = self.params.grid_points;
        let cands: Vec<Vec<Candidate>> = self
            .active
            .iter()
            .map(|&a| {
                let xa = query[a];
                let mut list = Vec::with_capacity(p + 1);
                let mut on_grid = false;
                for k in 0..p {
                    let g = self.params.grid_value(a, k);
                    on_grid |= g == xa;
                    list.push(Candidate {
                        value: g,
                        grid_index: Some(k),
                        boundary: (k == 0 || k + 1 == p) && g != xa,
                    });
                }
                if !on_grid {
                    list.push(Candidate {
                        value: xa,
                        grid_index: None,
                        boundary: false,
                    });
                }
                list
            })
            .collect();

        let table = self.table(env, &mut x)?;
        let s = self.kind.sign();
        let n = self.params.n;
        let k = self.active.len();
        let mut idx = vec![0usize; k];
        let mut best_all = f64::INFINITY;
        let mut best_all_point: Vec<f64> = query.clone();
        let mut best_interior = f64::INFINITY;
        loop {
            let mut dist = 0.0;
            let mut flat = Some(0usize);
            let mut boundary = false;
            for (j, &a) in self.active.iter().enumerate() {
                let c = &cands[j][idx[j]];
                x[a] = c.value;
                dist += (query[a] - c.value).abs();
                boundary |= c.boundary;
                flat = match (flat, c.grid_index) {
                    (Some(f), Some(g)) => Some(f * p + g),
                    _ => None,
                };
            }
            let fv = match (&table, flat) {
                (Some(t), Some(i)) => t[i],
                _ => self.eval_f(env, &x)?,
            };
            let v = s * fv + n * dist;
            if v < best_all {
                best_all = v;
                best_all_point.copy_from_slice(&x);
            }
            if !boundary && v < best_interior {
                best_interior = v;
            }
            let mut j = k;
            loop {
                if j == 0 {
                    if best_all < best_interior - BOUNDARY_TOL {
                        return Err(Error::BoxTooSmall {
                            point: best_all_point,
                        });
                    }
                    return Ok(s * best_all);
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < cands[j].len() {
                    break;
                }
                idx[j] = 0;
            }
        }
    }
}

/// `inf_{x′ in grid} f(t, x′) + n|x − x′|₁` at the state in `env`.
pub fn inf_convolution(f: &Expr, params: &EnvelopeParams, env: &Env<'_>) -> Result<f64> {
    Envelope::new(f.clone(), params.clone(), EnvelopeKind::Inf, env.z.len(), env.u.len())?.eval(env)
}

/// `sup_{x′ in grid} f(t, x′) − n|x − x′|₁` at the state in `env`.
pub fn sup_convolution(f: &Expr, params: &EnvelopeParams, env: &Env<'_>) -> Result<f64> {
    Envelope::new(f.clone(), params.clone(), EnvelopeKind::Sup, env.z.len(), env.u.len())?.eval(env)
}

/// Envelope and original values at every grid point of the active axes.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeTable {
    pub kind: EnvelopeKind,
    pub n: f64,
    /// axis names of the coordinates in `points`
    pub axes: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub f_values: Vec<f64>,
}

pub const ENVELOPE_SCHEMA: &str = "rbdsdep/envelope/v1";

impl EnvelopeTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "# schema={ENVELOPE_SCHEMA} kind={:?} n={}", self.kind, self.n)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.axes.clone();
        header.push("envelope".into());
        header.push("f".into());
        w.write_record(&header)?;
        for ((p, v), f) in self.points.iter().zip(&self.values).zip(&self.f_values) {
            let mut row: Vec<String> = p.iter().map(|x| format!("{x:e}")).collect();
            row.push(format!("{v:e}"));
            row.push(format!("{f:e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn axis_name(a: usize, d: usize) -> String {
    if a == 0 {
        "y".into()
    } else if a <= d {
        format!("z{a}")
    } else {
        format!("u{}", a - d)
    }
}

/// Tabulates the envelope on the grid of every active axis; inactive axes
/// are held at the values in `base`.
pub fn tabulate_envelope(
    f: &Expr,
    params: &EnvelopeParams,
    kind: EnvelopeKind,
    base: &Env<'_>,
) -> Result<EnvelopeTable> {
    let d = base.z.len();
    let env = Envelope::new(f.clone(), params.clone(), kind, d, base.u.len())?;
    let k = env.active.len();
    let p = params.grid_points;
    let len = p.pow(k as u32);
    let mut z = base.z.to_vec();
    let mut u = base.u.to_vec();
    let mut out = EnvelopeTable {
        kind,
        n: params.n,
        axes: env.active.iter().map(|&a| axis_name(a, d)).collect(),
        points: Vec::with_capacity(len),
        values: Vec::with_capacity(len),
        f_values: Vec::with_capacity(len),
    };
    let mut idx = vec![0usize; k];
    for _ in 0..len {
        let mut y = base.y;
        let mut point = Vec::with_capacity(k);
        for (j, &a) in env.active.iter().enumerate() {
            let v = params.grid_value(a, idx[j]);
            point.push(v);
            if a == 0 {
                y = v;
            } else if a <= d {
                z[a - 1] = v;
            } else {
                u[a - 1 - d] = v;
            }
        }
        let e = Env { y, z: &z, u: &u, ..*base };
        out.values.push(env.eval(&e)?);
        out.f_values
            .push(f.eval(&e).map_err(|err| Error::eval(format!("f at {point:?}"), err))?);
        out.points.push(point);
        for j in (0..k).rev() {
            idx[j] += 1;
            if idx[j] < p {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(out)
}
