//! Dense unitary Hankel transform for radial profiles.
//!
//! For n=4, `û(ρ) = ∫ u(r) J₁(ρr)/(ρr) r³ dr`; for n=2, `û(ρ) = ∫ u(r) J₀(ρr) r dr`.
//! Both are their own inverse. The frequency mesh has the same number of
//! nodes with spacing `π/(8 r_max)`, and both quadratures carry
//! Euler–Maclaurin corrections at the origin so odd-power integrands keep
//! high order.

use puruspe::Jn;
use rayon::prelude::*;

use crate::grid::{Dimension, RadialGrid};

pub(crate) struct HankelPlan {
    pub(crate) rho: Vec<f64>,
    pub(crate) d_rho: f64,
    r_weights: Vec<f64>,
    rho_weights: Vec<f64>,
    /// kernel[j * n + i] = K(ρ_j r_i)
    kernel: Vec<f64>,
    n: usize,
}

pub(crate) fn kernel(dim: Dimension, x: f64) -> f64 {
    match dim {
        Dimension::Four => {
            if x.abs() < 1e-4 {
                let x2 = x * x;
                0.5 - x2 / 16.0 + x2 * x2 / 384.0
            } else {
                Jn(1, x) / x
            }
        }
        Dimension::Two => Jn(0, x),
    }
}

/// `ρ_max h = π/8`, well inside the range where the origin corrections hold.
const OVERSAMPLE: f64 = 8.0;

/// Weights for `∫₀^X x^{n-1} g(x) dx` with `g` even and negligible at `X`.
pub(crate) fn corrected_weights(dim: Dimension, dx: f64, count: usize) -> Vec<f64> {
    let p = dim.n() as i32 - 1;
    let mut q: Vec<f64> = (0..count).map(|i| dx * (i as f64 * dx).powi(p)).collect();
    q[count - 1] *= 0.5;
    // g(kh) ≈ g0 + A k² + B k⁴ from the first three samples
    let b = [0.25, -1.0 / 3.0, 1.0 / 12.0];
    let a = [-1.0 - b[0], 1.0 - b[1], -b[2]];
    let (c0, ca, cb, scale) = match dim {
        Dimension::Four => (-1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, dx.powi(4)),
        Dimension::Two => (1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, dx.powi(2)),
    };
    for k in 0..3 {
        let e0 = if k == 0 { c0 } else { 0.0 };
        q[k] += scale * (e0 + ca * a[k] + cb * b[k]);
    }
    q
}

impl HankelPlan {
    pub(crate) fn new(grid: &RadialGrid) -> Self {
        let dim = grid.dimension();
        let n = grid.n_points();
        let d_rho = std::f64::consts::PI / (OVERSAMPLE * grid.r_max());
        let rho: Vec<f64> = (0..n).map(|j| j as f64 * d_rho).collect();
        let r = grid.nodes();
        let kernel: Vec<f64> = rho
            .par_iter()
            .flat_map_iter(|&p| r.iter().map(move |&x| kernel(dim, p * x)))
            .collect();
        HankelPlan {
            r_weights: corrected_weights(dim, grid.h(), n),
            rho_weights: corrected_weights(dim, d_rho, n),
            rho,
            d_rho,
            kernel,
            n,
        }
    }

    pub(crate) fn forward(&self, u: &[f64]) -> Vec<f64> {
        let wu: Vec<f64> = u.iter().zip(&self.r_weights).map(|(a, b)| a * b).collect();
        (0..self.n)
            .map(|j| {
                let row = &self.kernel[j * self.n..(j + 1) * self.n];
                row.iter().zip(&wu).map(|(k, v)| k * v).sum()
            })
            .collect()
    }

    pub(crate) fn inverse(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for j in 0..self.n {
            let c = p[j] * self.rho_weights[j];
            if c == 0.0 {
                continue;
            }
            let row = &self.kernel[j * self.n..(j + 1) * self.n];
            for (o, k) in out.iter_mut().zip(row) {
                *o += c * k;
            }
        }
        out
    }

    /// Spectral `∫ p² dρ` over R^n with the same surface factor as the grid.
    pub(crate) fn spectral_l2_sq(&self, dim: Dimension, p: &[f64]) -> f64 {
        dim.surface() * p.iter().zip(&self.rho_weights).map(|(v, w)| w * v * v).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn corrected_weights_integrate_gaussian_moments() {
        // ∫₀^∞ x³ e^{-x²} dx = 1/2 and ∫₀^∞ x e^{-x²} dx = 1/2
        for dim in [Dimension::Two, Dimension::Four] {
            let dx = 0.05;
            let q = corrected_weights(dim, dx, 400);
            let s: f64 = q.iter().enumerate().map(|(i, w)| w * (-(i as f64 * dx).powi(2)).exp()).sum();
            assert!((s - 0.5).abs() < 1e-10, "{dim:?}: {s}");
        }
    }

    #[test]
    fn gaussian_is_fixed_point() {
        for dim in [2, 4] {
            let g = build_grid(20.0, 1024, dim).unwrap();
            let plan = HankelPlan::new(&g);
            let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 2.0).exp()).collect();
            let p = plan.forward(&u);
            for (rho, v) in plan.rho.iter().zip(&p) {
                assert!((v - (-rho * rho / 2.0).exp()).abs() < 1e-8, "dim {dim} rho {rho} v {v}");
            }
            let back = plan.inverse(&p);
            for (a, b) in back.iter().zip(&u) {
                assert!((a - b).abs() < 1e-8, "dim {dim}: {a} vs {b}");
            }
        }
    }
}
