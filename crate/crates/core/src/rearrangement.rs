//! Fourier rearrangement `w = F⁻¹{(F u)*}` for radial fields.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dimension, RadialField, RadialGrid};

/// Relative size of `|u(r_max)|` above which a profile counts as truncated.
pub const DECAY_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralProfile {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl SpectralProfile {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::LengthMismatch { got: values.len(), expected: grid.n_points() });
        }
        Ok(SpectralProfile { grid, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Frequency nodes `ρ_j = j·π/(8 r_max)`.
    pub fn frequencies(&self) -> Vec<f64> {
        self.grid.hankel_plan().rho.clone()
    }

    pub fn d_rho(&self) -> f64 {
        self.grid.hankel_plan().d_rho
    }

    pub fn l2_sq(&self) -> f64 {
        self.grid.hankel_plan().spectral_l2_sq(self.grid.dimension(), &self.values)
    }

    /// Measure of each frequency node: ball of radius Δρ/2 at the origin,
    /// shells of width Δρ elsewhere.
    fn cell_measure(&self) -> Vec<f64> {
        let dim = self.grid.dimension();
        let d = self.d_rho();
        let m = self.values.len();
        (0..m)
            .map(|j| {
                let rho = j as f64 * d;
                let hi = if j + 1 == m { rho } else { rho + 0.5 * d };
                dim.ball_volume(hi) - dim.ball_volume((rho - 0.5 * d).max(0.0))
            })
            .collect()
    }
}

pub fn fourier_radial(u: &RadialField) -> Result<SpectralProfile> {
    let peak = u.max_abs();
    let tail = u.values().last().copied().unwrap_or(0.0).abs();
    if peak > 0.0 && tail > DECAY_TOLERANCE * peak {
        return Err(Error::NonDecaying { tail, peak });
    }
    let plan = u.grid().hankel_plan();
    Ok(SpectralProfile { grid: u.grid().clone(), values: plan.forward(u.values()) })
}

pub fn inverse_fourier_radial(p: &SpectralProfile) -> RadialField {
    let plan = p.grid.hankel_plan();
    RadialField::new(p.grid.clone(), plan.inverse(&p.values)).expect("inverse transform of a finite profile is finite")
}

/// Radially decreasing profile equimeasurable with `|p|`.
///
/// Nodes are sorted by magnitude (ties: smaller frequency first); each one
/// occupies its cell measure, and its value is placed at the position inside
/// that chunk where its own node sits within its cell, so decreasing
/// profiles are reproduced exactly. The result is read back on the mesh by
/// linear interpolation in the measure variable.
pub fn schwarz_profile(p: &SpectralProfile) -> SpectralProfile {
    let dim = p.grid.dimension();
    let mags: Vec<f64> = p.values.iter().map(|v| v.abs()).collect();
    let mut order: Vec<usize> = (0..mags.len()).collect();
    order.sort_by(|&a, &b| mags[b].partial_cmp(&mags[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let cells = p.cell_measure();
    let d = p.d_rho();
    let mut mu = Vec::with_capacity(mags.len());
    let mut level = Vec::with_capacity(mags.len());
    let mut acc = 0.0;
    for &i in &order {
        let rho = i as f64 * d;
        let inner = dim.ball_volume(rho) - dim.ball_volume((rho - 0.5 * d).max(0.0));
        mu.push(acc + inner);
        level.push(mags[i]);
        acc += cells[i];
    }
    let values = (0..mags.len())
        .map(|j| {
            let target = dim.ball_volume(j as f64 * d);
            interpolate_monotone(&mu, &level, target)
        })
        .collect();
    SpectralProfile { grid: p.grid.clone(), values }
}

fn interpolate_monotone(x: &[f64], y: &[f64], t: f64) -> f64 {
    if t <= x[0] {
        return y[0];
    }
    let k = x.partition_point(|&v| v <= t);
    if k >= x.len() {
        return *y.last().unwrap();
    }
    let (x0, x1) = (x[k - 1], x[k]);
    if x1 <= x0 {
        return y[k];
    }
    let s = (t - x0) / (x1 - x0);
    y[k - 1] + s * (y[k] - y[k - 1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RearrangeChecks {
    pub l2_sq_u: f64,
    /// `‖w‖²` of the rearranged field on R^n, i.e. `‖(Fu)*‖²`.
    pub l2_sq_w: f64,
    /// `‖w‖²` restricted to `[0, r_max]`.
    pub l2_sq_w_grid: f64,
    pub spectral_l2_sq: f64,
    /// `|‖û‖ - ‖u‖| / ‖u‖`
    pub plancherel_error: f64,
    pub lap_u: f64,
    pub lap_w: f64,
    pub exp_mass_u: f64,
    pub exp_mass_w: f64,
    pub mass_ok: bool,
    pub lap_ok: bool,
    pub exp_ok: bool,
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct Rearranged {
    pub field: RadialField,
    pub checks: RearrangeChecks,
}

fn critical_alpha(dim: Dimension) -> f64 {
    match dim {
        Dimension::Four => 2.0,
        Dimension::Two => 1.0,
    }
}

/// `∫(exp(α u²) - 1)` with α = 2 in R⁴ and 1 in R².
pub fn exp_mass(u: &RadialField) -> f64 {
    let a = critical_alpha(u.grid().dimension());
    let g = u.grid();
    g.weights().iter().zip(u.values()).map(|(w, &x)| w * (a * x * x).exp_m1()).sum()
}

/// `‖Δu‖` (n=4) or `‖∇u‖` (n=2) from the spectral side, `‖ρ^m û‖`.
///
/// The rearranged field generally decays only algebraically, so its
/// restriction to `[0, r_max]` jumps at the Dirichlet ghost node; the
/// spectral norm measures the field itself rather than that jump.
fn principal_norm(p: &SpectralProfile) -> f64 {
    let power = match p.grid.dimension() {
        Dimension::Four => 2,
        Dimension::Two => 1,
    };
    let rho = p.frequencies();
    let scaled: Vec<f64> = p.values.iter().zip(&rho).map(|(v, r)| v * r.powi(power)).collect();
    p.grid.hankel_plan().spectral_l2_sq(p.grid.dimension(), &scaled).sqrt()
}

pub fn fourier_rearrange(u: &RadialField) -> Result<Rearranged> {
    let g = u.grid().clone();
    let p = fourier_radial(u)?;
    let star = schwarz_profile(&p);
    let w = inverse_fourier_radial(&star);
    let l2_u = g.inner(u.values(), u.values());
    let l2_w = star.l2_sq();
    let l2_w_grid = g.inner(w.values(), w.values());
    let spectral = p.l2_sq();
    let plancherel_error = if l2_u > 0.0 { (spectral.sqrt() - l2_u.sqrt()).abs() / l2_u.sqrt() } else { 0.0 };
    let (lap_u, lap_w) = (principal_norm(&p), principal_norm(&star));
    let (exp_u, exp_w) = (exp_mass(u), exp_mass(&w));
    let mass_ok = l2_u == 0.0 || (l2_w - l2_u).abs() <= 1e-6 * l2_u;
    let lap_ok = lap_w <= lap_u * (1.0 + 1e-6);
    let exp_ok = exp_w >= exp_u * (1.0 - 1e-6);
    let checks = RearrangeChecks {
        l2_sq_u: l2_u,
        l2_sq_w: l2_w,
        l2_sq_w_grid: l2_w_grid,
        spectral_l2_sq: spectral,
        plancherel_error,
        lap_u,
        lap_w,
        exp_mass_u: exp_u,
        exp_mass_w: exp_w,
        mass_ok,
        lap_ok,
        exp_ok,
        flagged: !(mass_ok && lap_ok && exp_ok),
    };
    Ok(Rearranged { field: w, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn gaussian_transform_and_rearrangement() {
        let g = build_grid(20.0, 2048, 4).unwrap();
        let u = RadialField::from_fn(g.clone(), |r| (-r * r / 2.0).exp()).unwrap();
        let p = fourier_radial(&u).unwrap();
        for (rho, v) in p.frequencies().iter().zip(p.values()) {
            assert!((v - (-rho * rho / 2.0).exp()).abs() < 1e-6);
        }
        let out = fourier_rearrange(&u).unwrap();
        assert!(!out.checks.flagged, "{:?}", out.checks);
        let diff = out.field.values().iter().zip(u.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-7);
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = build_grid(10.0, 256, 4).unwrap();
        let z = RadialField::zeros(g);
        assert!(fourier_radial(&z).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(fourier_rearrange(&z).unwrap().field.is_zero());
    }

    #[test]
    fn decreasing_profile_is_fixed() {
        let g = build_grid(10.0, 256, 4).unwrap();
        let vals: Vec<f64> = (0..256).map(|j| 1.0 / (1.0 + j as f64)).collect();
        let p = SpectralProfile::new(g, vals.clone()).unwrap();
        let s = schwarz_profile(&p);
        for (a, b) in s.values().iter().zip(&vals) {
            assert!((a - b).abs() < 1e-10);
        }
        let neg = SpectralProfile::new(p.grid.clone(), vals.iter().map(|v| -v).collect()).unwrap();
        assert_eq!(schwarz_profile(&neg).values(), s.values());
    }

    #[test]
    fn annulus_moves_to_ball_of_equal_measure() {
        let g = build_grid(10.0, 512, 4).unwrap();
        let vals: Vec<f64> = (0..512).map(|j| if (100..200).contains(&j) { 2.0 } else { 0.0 }).collect();
        let p = SpectralProfile::new(g, vals).unwrap();
        let cells = p.cell_measure();
        let mass: f64 = cells[100..200].iter().sum();
        let s = schwarz_profile(&p);
        let d = p.d_rho();
        let radius = Dimension::Four.ball_radius(mass);
        for (j, v) in s.values().iter().enumerate() {
            let rho = j as f64 * d;
            if rho < radius - 2.0 * d {
                assert_eq!(*v, 2.0);
            }
            if rho > radius + 2.0 * d {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn non_decaying_input_rejected() {
        let g = build_grid(5.0, 128, 4).unwrap();
        let u = RadialField::from_fn(g, |_| 1.0).unwrap();
        assert!(matches!(fourier_radial(&u), Err(Error::NonDecaying { .. })));
    }
}
