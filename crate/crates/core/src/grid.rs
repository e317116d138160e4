//! Uniform radial mesh, quadrature and the discrete radial Laplacian.
//!
//! The Laplacian is built in flux form: with `W = diag(weights)` and
//! `a_i` the discrete surface area between nodes `i` and `i+1` divided by `h`,
//!
//! ```text
//! (W L u)_i = a_i (u_{i+1} - u_i) - a_{i-1} (u_i - u_{i-1})
//! ```
//!
//! so `W L` is symmetric and `-<u, L u>_W` is a sum of squares. The areas
//! are chosen so that `L r^2 = 2n` holds exactly at every interior node.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hankel::HankelPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Two,
    Four,
}

impl Dimension {
    pub fn from_int(n: usize) -> Result<Self> {
        match n {
            2 => Ok(Dimension::Two),
            4 => Ok(Dimension::Four),
            other => Err(Error::InvalidGrid(format!("dimension must be 2 or 4, got {other}"))),
        }
    }

    pub fn n(self) -> usize {
        match self {
            Dimension::Two => 2,
            Dimension::Four => 4,
        }
    }

    /// Area of the unit sphere S^{n-1}: 2π for n=2, 2π² for n=4.
    pub fn surface(self) -> f64 {
        match self {
            Dimension::Two => 2.0 * PI,
            Dimension::Four => 2.0 * PI * PI,
        }
    }

    pub fn ball_volume(self, r: f64) -> f64 {
        self.surface() * r.powi(self.n() as i32) / self.n() as f64
    }

    /// Inverse of `ball_volume`.
    pub fn ball_radius(self, mu: f64) -> f64 {
        let n = self.n() as f64;
        (n * mu.max(0.0) / self.surface()).powf(1.0 / n)
    }
}

pub struct RadialGrid {
    r_max: f64,
    h: f64,
    dim: Dimension,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    flux: Vec<f64>,
    hankel: OnceLock<Arc<HankelPlan>>,
}

impl fmt::Debug for RadialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialGrid")
            .field("r_max", &self.r_max)
            .field("n_points", &self.nodes.len())
            .field("dimension", &self.dim.n())
            .finish()
    }
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.r_max == other.r_max && self.nodes.len() == other.nodes.len() && self.dim == other.dim
    }
}

pub fn build_grid(r_max: f64, n_points: usize, dimension: usize) -> Result<Arc<RadialGrid>> {
    let dim = Dimension::from_int(dimension)?;
    RadialGrid::new(r_max, n_points, dim).map(Arc::new)
}

impl RadialGrid {
    pub fn new(r_max: f64, n_points: usize, dim: Dimension) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::InvalidGrid(format!("r_max must be positive, got {r_max}")));
        }
        if n_points < 16 {
            return Err(Error::GridTooSmall { got: n_points, need: 16 });
        }
        let n = dim.n() as i32;
        let s = dim.surface();
        let h = r_max / (n_points - 1) as f64;
        let nodes: Vec<f64> = (0..n_points).map(|i| i as f64 * h).collect();
        // c_i = w_i / (s h): r^{n-1} in the interior, half at r_max. At the
        // origin r^{n-1} vanishes; a small positive cell keeps W invertible.
        let mut c: Vec<f64> = nodes.iter().map(|r| r.powi(n - 1)).collect();
        c[0] = match dim {
            Dimension::Two => h / 12.0,
            Dimension::Four => (0.5 * h).powi(4) / (4.0 * h),
        };
        c[n_points - 1] *= 0.5;
        let weights: Vec<f64> = c.iter().map(|ci| s * h * ci).collect();
        let mut flux = Vec::with_capacity(n_points);
        let mut volume = 0.0;
        for i in 0..n_points {
            volume += c[i];
            let mid = (i as f64 + 0.5) * h;
            flux.push(s * n as f64 * volume / mid);
        }
        Ok(RadialGrid { r_max, h, dim, nodes, weights, flux, hankel: OnceLock::new() })
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn dimension(&self) -> Dimension {
        self.dim
    }
    pub fn n_points(&self) -> usize {
        self.nodes.len()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// Coupling between node `i` and `i+1`; the last entry couples to the
    /// zero ghost value beyond `r_max`.
    pub fn flux(&self) -> &[f64] {
        &self.flux
    }

    pub(crate) fn hankel_plan(&self) -> Arc<HankelPlan> {
        self.hankel.get_or_init(|| Arc::new(HankelPlan::new(self))).clone()
    }

    pub fn integrate_values(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.weights.len());
        self.weights.iter().zip(v).map(|(w, x)| w * x).sum()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights.iter().zip(u.iter().zip(v)).map(|(w, (a, b))| w * a * b).sum()
    }

    /// `S u = W L u`, the symmetric stiffness form.
    pub fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        let m = u.len();
        let a = &self.flux;
        let mut out = vec![0.0; m];
        for i in 0..m {
            let right = if i + 1 < m { u[i + 1] } else { 0.0 };
            let mut v = a[i] * (right - u[i]);
            if i > 0 {
                v -= a[i - 1] * (u[i] - u[i - 1]);
            }
            out[i] = v;
        }
        out
    }

    pub fn laplacian_values(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.stiffness_apply(u);
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o /= w;
        }
        out
    }

    pub fn bilaplacian_values(&self, u: &[f64]) -> Vec<f64> {
        self.laplacian_values(&self.laplacian_values(u))
    }

    /// Discrete `∫|∇u|²`, including the jump to the ghost node.
    pub fn grad_sq(&self, u: &[f64]) -> f64 {
        let m = u.len();
        (0..m)
            .map(|i| {
                let right = if i + 1 < m { u[i + 1] } else { 0.0 };
                self.flux[i] * (right - u[i]).powi(2)
            })
            .sum()
    }

    /// Ball of radius h/2 around the origin plus shells of width h, used as
    /// the measure of each node by rearrangement.
    pub fn cell_volumes(&self) -> Vec<f64> {
        let h = self.h;
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let hi = if i + 1 == self.nodes.len() { r } else { r + 0.5 * h };
                let lo = (r - 0.5 * h).max(0.0);
                self.dim.ball_volume(hi) - self.dim.ball_volume(lo)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::LengthMismatch { got: values.len(), expected: grid.n_points() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(RadialField { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.n_points();
        RadialField { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        RadialField::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        RadialField { grid: self.grid.clone(), values }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.with_values(self.values.iter().map(|v| c * v).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn same_grid(&self, other: &RadialField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HNorms {
    pub l2_sq: f64,
    pub lap_l2_sq: f64,
}

pub fn integrate(field: &RadialField) -> f64 {
    field.grid.integrate_values(&field.values)
}

pub fn radial_laplacian(field: &RadialField) -> Result<RadialField> {
    if field.grid.n_points() < 3 {
        return Err(Error::GridTooSmall { got: field.grid.n_points(), need: 3 });
    }
    Ok(field.with_values(field.grid.laplacian_values(&field.values)))
}

pub fn bilaplacian(field: &RadialField) -> Result<RadialField> {
    if field.grid.n_points() < 5 {
        return Err(Error::GridTooSmall { got: field.grid.n_points(), need: 5 });
    }
    Ok(field.with_values(field.grid.bilaplacian_values(&field.values)))
}

pub fn h_norms(field: &RadialField) -> HNorms {
    let g = &field.grid;
    let lap = g.laplacian_values(&field.values);
    HNorms { l2_sq: g.inner(&field.values, &field.values), lap_l2_sq: g.inner(&lap, &lap) }
}

pub fn grad_l2_sq(field: &RadialField) -> f64 {
    field.grid.grad_sq(&field.values)
}

/// Monotone cubic (Fritsch–Carlson) interpolation on a uniform mesh starting
/// at 0, with zero slope imposed at the origin (even profiles). Outside the
/// mesh the value is 0.
pub(crate) struct Pchip<'a> {
    h: f64,
    y: &'a [f64],
    d: Vec<f64>,
}

impl<'a> Pchip<'a> {
    pub(crate) fn new(h: f64, y: &'a [f64]) -> Self {
        let m = y.len();
        let delta: Vec<f64> = (0..m - 1).map(|i| (y[i + 1] - y[i]) / h).collect();
        let mut d = vec![0.0; m];
        for i in 1..m - 1 {
            let (a, b) = (delta[i - 1], delta[i]);
            if a * b > 0.0 {
                d[i] = 2.0 * a * b / (a + b);
            }
        }
        // three-point one-sided slope at the far end, limited for monotonicity
        let last = m - 1;
        let mut dl = (3.0 * delta[last - 1] - delta[last - 2]) / 2.0;
        if dl * delta[last - 1] <= 0.0 {
            dl = 0.0;
        } else if delta[last - 1] * delta[last - 2] <= 0.0 && dl.abs() > 3.0 * delta[last - 1].abs() {
            dl = 3.0 * delta[last - 1];
        }
        d[last] = dl;
        Pchip { h, y, d }
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        let m = self.y.len();
        let xmax = self.h * (m - 1) as f64;
        if x < 0.0 || x > xmax {
            return 0.0;
        }
        let mut i = (x / self.h).floor() as usize;
        if i >= m - 1 {
            i = m - 2;
        }
        let t = (x - i as f64 * self.h) / self.h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (d0, d1) = (self.d[i] * self.h, self.d[i + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * d1
    }
}
