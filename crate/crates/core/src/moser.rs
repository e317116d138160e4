//! Plateau and Moser test families in R⁴, exact piecewise profiles, and the
//! finite-k necessity witnesses.
//!
//! A [`Profile`] keeps the branch formulas, so norms are measured by
//! quadrature branch by branch (the logarithmic branch in `ln r`) rather than
//! on the uniform mesh. This matters for the Moser family: the concentration
//! radius `exp(-b²/4K)` is far below the mesh spacing once `b ≥ 4`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{classify_growth, default_probes, LimitEstimate};
use crate::banded::Banded;
use crate::error::{Error, Result};
use crate::grid::{Dimension, Pchip, RadialField, RadialGrid};

/// Nodes required inside the Moser concentration ball.
pub const MIN_CORE_NODES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserParams {
    pub a_k: f64,
    pub r_k: f64,
    pub b_k: f64,
    pub s_k: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

impl MoserParams {
    /// Plateau of height `a` on `[0, R]`. The Moser fields are unused.
    pub fn plateau(a: f64, r: f64) -> Self {
        MoserParams { a_k: a, r_k: r, b_k: 1.0, s_k: 1.0, k: 1.0 }
    }

    /// Moser height `b` with `R = exp(-b²/K)`. The plateau height is unused.
    pub fn moser(b: f64, k: f64) -> Self {
        MoserParams { a_k: 1.0, r_k: (-b * b / k).exp(), b_k: b, s_k: 1.0, k }
    }

    fn check(&self) -> Result<()> {
        let all = [self.a_k, self.r_k, self.b_k, self.s_k, self.k];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(format!("Moser parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Form {
    /// `Σ c_k (r - origin)^k`
    Poly { origin: f64, coeffs: Vec<f64> },
    /// `c ln(r0 / r)`
    Log { c: f64, r0: f64 },
    /// `exp(-(r/σ)²)`
    Gauss { sigma: f64 },
    /// `c0 + c1 r² + c2 ln r + c3 r⁻²`, radially biharmonic in R⁴.
    Biharmonic { c: [f64; 4] },
}

impl Form {
    /// Value, first and second derivative.
    fn jet(&self, x: f64) -> (f64, f64, f64) {
        match self {
            Form::Poly { origin, coeffs } => {
                let s = x - origin;
                let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
                for (k, c) in coeffs.iter().enumerate() {
                    let kf = k as f64;
                    v += c * s.powi(k as i32);
                    if k >= 1 {
                        d1 += kf * c * s.powi(k as i32 - 1);
                    }
                    if k >= 2 {
                        d2 += kf * (kf - 1.0) * c * s.powi(k as i32 - 2);
                    }
                }
                (v, d1, d2)
            }
            Form::Log { c, r0 } => (c * (r0 / x).ln(), -c / x, c / (x * x)),
            Form::Gauss { sigma } => {
                let q = x / sigma;
                let e = (-q * q).exp();
                let s2 = sigma * sigma;
                (e, -2.0 * x / s2 * e, (4.0 * x * x / (s2 * s2) - 2.0 / s2) * e)
            }
            Form::Biharmonic { c } => {
                let (x2, x4) = (x * x, x.powi(4));
                (
                    c[0] + c[1] * x2 + c[2] * x.ln() + c[3] / x2,
                    2.0 * c[1] * x + c[2] / x - 2.0 * c[3] / (x2 * x),
                    2.0 * c[1] - c[2] / x2 + 6.0 * c[3] / x4,
                )
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub form: Form,
}

/// Exact radial profile `amplitude · f(r / scale)` with `f` piecewise and
/// zero beyond the last piece.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    dim: Dimension,
    pieces: Vec<Piece>,
    amplitude: f64,
    scale: f64,
}

/// Quintic on `[lo, lo + w]` with value 0 at both ends, slope `m0` at `lo`,
/// slope 0 at `lo + w`, and zero second derivative at both ends.
fn quintic_cap(lo: f64, w: f64, m0: f64) -> Piece {
    let coeffs = vec![0.0, m0, 0.0, -6.0 * m0 / (w * w), 8.0 * m0 / w.powi(3), -3.0 * m0 / w.powi(4)];
    Piece { lo, hi: lo + w, form: Form::Poly { origin: lo, coeffs } }
}

/// Radially biharmonic cap on `[lo, hi]` with the same end data as
/// [`quintic_cap`] except the second derivatives. Among all caps with that
/// data it minimizes `∫|Δη|²` over the shell.
fn biharmonic_cap(lo: f64, hi: f64, m0: f64) -> Piece {
    let row = |x: f64| [1.0, x * x, x.ln(), 1.0 / (x * x)];
    let drow = |x: f64| [0.0, 2.0 * x, 1.0 / x, -2.0 / x.powi(3)];
    let rows = [row(lo), drow(lo), row(hi), drow(hi)];
    let mut m = Banded::zeros(4, 3, 3);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            m.add(i, j, *v);
        }
    }
    let mut rhs = [0.0, m0, 0.0, 0.0];
    assert!(m.factor(), "cap system is regular for 0 < lo < hi");
    m.solve(&mut rhs);
    Piece { lo, hi, form: Form::Biharmonic { c: rhs } }
}

/// Outer cap of the Moser profile on `[1, 2]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cap {
    /// Quintic with zero second derivative at both ends.
    #[default]
    Quintic,
    /// Energy-minimal biharmonic cap.
    Biharmonic,
}

/// Composite Simpson with panel doubling until the relative change drops
/// below `1e-13`.
fn quad(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let simpson = |n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    };
    let mut n = 64;
    let mut prev = simpson(n);
    while n < 1 << 21 {
        n *= 2;
        let cur = simpson(n);
        if (cur - prev).abs() <= 1e-13 * cur.abs() || cur == prev {
            return cur + (cur - prev) / 15.0;
        }
        prev = cur;
    }
    prev
}

impl Profile {
    pub fn new(dim: Dimension, pieces: Vec<Piece>) -> Self {
        Profile { dim, pieces, amplitude: 1.0, scale: 1.0 }
    }

    pub fn gaussian(dim: Dimension, a: f64, sigma: f64) -> Self {
        let p = Piece { lo: 0.0, hi: 12.0 * sigma, form: Form::Gauss { sigma } };
        Profile { dim, pieces: vec![p], amplitude: a, scale: 1.0 }
    }

    pub fn dimension(&self) -> Dimension {
        self.dim
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn scaled(&self, c: f64) -> Self {
        Profile { amplitude: self.amplitude * c, ..self.clone() }
    }

    /// `r ↦ u(r / s)`.
    pub fn dilated(&self, s: f64) -> Self {
        Profile { scale: self.scale * s, ..self.clone() }
    }

    pub fn support(&self) -> f64 {
        self.pieces.last().map_or(0.0, |p| p.hi) * self.scale
    }

    fn piece_at(&self, x: f64) -> Option<&Piece> {
        self.pieces.iter().find(|p| x <= p.hi && x >= p.lo)
    }

    fn jet(&self, x: f64) -> (f64, f64, f64) {
        self.piece_at(x).map_or((0.0, 0.0, 0.0), |p| p.form.jet(x))
    }

    pub fn value(&self, r: f64) -> f64 {
        self.amplitude * self.jet(r / self.scale).0
    }

    pub fn slope(&self, r: f64) -> f64 {
        self.amplitude * self.jet(r / self.scale).1 / self.scale
    }

    pub fn laplacian(&self, r: f64) -> f64 {
        let x = r / self.scale;
        let (_, d1, d2) = self.jet(x);
        let n1 = self.dim.n() as f64 - 1.0;
        let lap = if x == 0.0 { (n1 + 1.0) * d2 } else { d2 + n1 * d1 / x };
        self.amplitude * lap / (self.scale * self.scale)
    }

    /// One-sided values at a branch radius (in unscaled units).
    pub fn one_sided(&self, i: usize) -> [(f64, f64); 2] {
        let x = self.pieces[i].hi;
        let l = self.pieces[i].form.jet(x);
        let r = self.pieces.get(i + 1).map_or((0.0, 0.0, 0.0), |p| p.form.jet(x));
        [(l.0, l.1), (r.0, r.1)]
    }

    /// `Σ_pieces ∫ h(x, jet) x^{n-1} dx` in the unscaled variable.
    fn sum_pieces(&self, h: &dyn Fn(f64, (f64, f64, f64)) -> f64) -> f64 {
        let n1 = self.dim.n() as i32 - 1;
        self.pieces
            .iter()
            .map(|p| match &p.form {
                Form::Log { .. } if p.lo > 0.0 => {
                    // x = e^y, dx = x dy
                    let f = |y: f64| {
                        let x = y.exp();
                        h(x, p.form.jet(x)) * x.powi(n1 + 1)
                    };
                    quad(&f, p.lo.ln(), p.hi.ln())
                }
                _ => quad(&|x: f64| h(x, p.form.jet(x)) * x.powi(n1), p.lo, p.hi),
            })
            .sum()
    }

    pub fn l2_sq(&self) -> f64 {
        let n = self.dim.n() as i32;
        self.dim.surface() * self.scale.powi(n) * self.amplitude.powi(2) * self.sum_pieces(&|_, j| j.0 * j.0)
    }

    /// `‖Δu‖²`.
    pub fn lap_l2_sq(&self) -> f64 {
        let n = self.dim.n() as i32;
        let n1 = (n - 1) as f64;
        let s = self.sum_pieces(&|x, (_, d1, d2)| {
            let l = if x == 0.0 { (n1 + 1.0) * d2 } else { d2 + n1 * d1 / x };
            l * l
        });
        self.dim.surface() * self.scale.powi(n - 4) * self.amplitude.powi(2) * s
    }

    /// `‖∇u‖²`.
    pub fn grad_l2_sq(&self) -> f64 {
        let n = self.dim.n() as i32;
        self.dim.surface() * self.scale.powi(n - 2) * self.amplitude.powi(2) * self.sum_pieces(&|_, j| j.1 * j.1)
    }

    /// `‖Δu‖²` in R⁴, `‖∇u‖²` in R².
    pub fn principal_sq(&self) -> f64 {
        match self.dim {
            Dimension::Four => self.lap_l2_sq(),
            Dimension::Two => self.grad_l2_sq(),
        }
    }

    /// `∫ g(u)` over the support.
    pub fn integral(&self, g: &dyn Fn(f64) -> f64) -> f64 {
        let n = self.dim.n() as i32;
        let a = self.amplitude;
        self.dim.surface() * self.scale.powi(n) * self.sum_pieces(&|_, j| g(a * j.0))
    }

    /// `∫ g(u)` restricted to `r ≤ radius` (radius in scaled units).
    pub fn integral_within(&self, g: &dyn Fn(f64) -> f64, radius: f64) -> f64 {
        let cut = radius / self.scale;
        let pieces: Vec<Piece> = self
            .pieces
            .iter()
            .filter(|p| p.lo < cut)
            .map(|p| Piece { lo: p.lo, hi: p.hi.min(cut), form: p.form.clone() })
            .collect();
        Profile { pieces, ..self.clone() }.integral(g)
    }

    pub fn sample(&self, grid: &Arc<RadialGrid>) -> Result<RadialField> {
        if grid.dimension() != self.dim {
            return Err(Error::GridMismatch);
        }
        if self.support() > grid.r_max() * (1.0 + 1e-12) {
            return Err(Error::SupportEscapes { support: self.support() / self.scale, scale: self.scale, r_max: grid.r_max() });
        }
        RadialField::from_fn(grid.clone(), |r| self.value(r))
    }
}

fn plateau_pieces(a: f64, r1: f64, r2: f64, r3: f64) -> Vec<Piece> {
    let w = r2 - r1;
    vec![
        Piece { lo: 0.0, hi: r1, form: Form::Poly { origin: 0.0, coeffs: vec![a] } },
        Piece { lo: r1, hi: r2, form: Form::Poly { origin: r1, coeffs: vec![a, 0.0, -a / (w * w)] } },
        quintic_cap(r2, r3 - r2, -2.0 * a / w),
    ]
}

/// `c = 4K/b`; branch radii `rho < one < two`.
fn moser_pieces(c: f64, rho: f64, one: f64, two: f64, cap: Cap) -> Vec<Piece> {
    let top = c * ((one / rho).ln() + 0.5);
    vec![
        Piece { lo: 0.0, hi: rho, form: Form::Poly { origin: 0.0, coeffs: vec![top, 0.0, -c / (2.0 * rho * rho)] } },
        Piece { lo: rho, hi: one, form: Form::Log { c, r0: one } },
        match cap {
            Cap::Quintic => quintic_cap(one, two - one, -c / one),
            Cap::Biharmonic => biharmonic_cap(one, two, -c / one),
        },
    ]
}

/// Plateau profile `φ_k` with the exact branch radii `R, R+1, R+2`.
pub fn plateau_profile(params: &MoserParams) -> Result<Profile> {
    params.check()?;
    let (a, r) = (params.a_k, params.r_k);
    Ok(Profile::new(Dimension::Four, plateau_pieces(a, r, r + 1.0, r + 2.0)))
}

/// Moser profile `ψ_k` with the exact branch radii `R^{1/4}, 1, 2`.
pub fn moser_profile(params: &MoserParams) -> Result<Profile> {
    moser_profile_with_cap(params, Cap::Quintic)
}

pub fn moser_profile_with_cap(params: &MoserParams, cap: Cap) -> Result<Profile> {
    params.check()?;
    if params.r_k >= 1.0 {
        return Err(Error::InvalidArgument(format!("Moser radius R = {} must lie in (0, 1)", params.r_k)));
    }
    let c = 4.0 * params.k / params.b_k;
    Ok(Profile::new(Dimension::Four, moser_pieces(c, params.r_k.powf(0.25), 1.0, 2.0, cap)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapped {
    pub field: RadialField,
    pub profile: Profile,
    /// Largest distance between a paper branch radius and its mesh node.
    pub snap_offset: f64,
}

fn snap(x: f64, h: f64) -> f64 {
    (x / h).round() * h
}

fn require_four(grid: &RadialGrid) -> Result<()> {
    if grid.dimension() != Dimension::Four {
        return Err(Error::InvalidArgument("plateau and Moser families live in R⁴".into()));
    }
    Ok(())
}

pub fn plateau_field_snapped(params: &MoserParams, grid: &Arc<RadialGrid>) -> Result<Snapped> {
    params.check()?;
    require_four(grid)?;
    let (a, r) = (params.a_k, params.r_k);
    if r + 2.0 > grid.r_max() {
        return Err(Error::SupportEscapes { support: r + 2.0, scale: 1.0, r_max: grid.r_max() });
    }
    let h = grid.h();
    let exact = [r, r + 1.0, r + 2.0];
    let s = exact.map(|x| snap(x, h).min(grid.r_max()));
    let profile = Profile::new(Dimension::Four, plateau_pieces(a, s[0], s[1], s[2]));
    let snap_offset = exact.iter().zip(&s).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(Snapped { field: profile.sample(grid)?, profile, snap_offset })
}

pub fn plateau_field(params: &MoserParams, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    plateau_field_snapped(params, grid).map(|s| s.field)
}

pub fn moser_field_snapped(params: &MoserParams, grid: &Arc<RadialGrid>) -> Result<Snapped> {
    params.check()?;
    require_four(grid)?;
    if params.r_k >= 1.0 {
        return Err(Error::InvalidArgument(format!("Moser radius R = {} must lie in (0, 1)", params.r_k)));
    }
    if grid.r_max() < 2.0 {
        return Err(Error::SupportEscapes { support: 2.0, scale: 1.0, r_max: grid.r_max() });
    }
    let h = grid.h();
    let rho = params.r_k.powf(0.25);
    let nodes = (rho / h).round() as usize;
    if nodes < MIN_CORE_NODES {
        return Err(Error::UnderResolved { radius: rho, nodes });
    }
    let c = 4.0 * params.k / params.b_k;
    let peak = c * ((1.0 / rho).ln() + 0.5);
    if 2.0 * peak * peak > 700.0 {
        return Err(Error::Overflow { value: peak, cap: (350.0f64).sqrt() });
    }
    let exact = [rho, 1.0, 2.0];
    let s = exact.map(|x| snap(x, h));
    let profile = Profile::new(Dimension::Four, moser_pieces(c, s[0], s[1], s[2], Cap::Quintic));
    let snap_offset = exact.iter().zip(&s).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(Snapped { field: profile.sample(grid)?, profile, snap_offset })
}

pub fn moser_field(params: &MoserParams, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    moser_field_snapped(params, grid).map(|s| s.field)
}

/// `r ↦ u(r / s)` on the same mesh by monotone cubic interpolation. The
/// support is the outermost node where `u` is nonzero.
pub fn dilate(u: &RadialField, s: f64) -> Result<RadialField> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("dilation must be positive, got {s}")));
    }
    let g = u.grid();
    let last = u.values().iter().rposition(|v| *v != 0.0).unwrap_or(0);
    let support = g.nodes()[last];
    if s * support > g.r_max() * (1.0 + 1e-12) {
        return Err(Error::SupportEscapes { support, scale: s, r_max: g.r_max() });
    }
    let pchip = Pchip::new(g.h(), u.values());
    RadialField::new(g.clone(), g.nodes().iter().map(|r| pchip.eval(r / s)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserRow {
    pub b: f64,
    pub l2_sq: f64,
    pub lap_l2_sq: f64,
    /// `‖Δψ‖² - 32π²K`
    pub lap_excess: f64,
    pub g_integral: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserTable {
    #[serde(rename = "K")]
    pub k: f64,
    pub rows: Vec<MoserRow>,
    /// Fitted exponent of `|‖Δψ‖² - 32π²K|` against `b`.
    pub lap_exponent: f64,
    /// Fitted exponent of `‖ψ‖²` against `b`.
    pub l2_exponent: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Norms of `ψ_k` for each `b` and the fitted decay exponents.
pub fn moser_sweep(k: f64, bs: &[f64], g: &(dyn Fn(f64) -> f64 + Sync)) -> Result<MoserTable> {
    if bs.len() < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least two heights".into()));
    }
    let target = 32.0 * PI * PI * k;
    let rows = bs
        .iter()
        .map(|&b| {
            let p = moser_profile(&MoserParams::moser(b, k))?;
            let lap = p.lap_l2_sq();
            Ok(MoserRow { b, l2_sq: p.l2_sq(), lap_l2_sq: lap, lap_excess: lap - target, g_integral: p.integral(g) })
        })
        .collect::<Result<Vec<_>>>()?;
    let ex: Vec<f64> = rows.iter().map(|r| r.lap_excess).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.l2_sq).collect();
    Ok(MoserTable { k, lap_exponent: loglog_slope(bs, &ex), l2_exponent: loglog_slope(bs, &l2), rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessMode {
    UnboundedOrigin,
    NoncompactOrigin,
    UnboundedInfinity,
    NoncompactInfinity,
}

impl std::str::FromStr for WitnessMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unbounded_origin" => WitnessMode::UnboundedOrigin,
            "noncompact_origin" => WitnessMode::NoncompactOrigin,
            "unbounded_infinity" => WitnessMode::UnboundedInfinity,
            "noncompact_infinity" => WitnessMode::NoncompactInfinity,
            _ => return Err(Error::InvalidArgument(format!("unknown witness mode {s:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessTerm {
    pub k: usize,
    pub params: MoserParams,
    /// `g(a)/a²` at the origin, `b² exp(-b²/K) g(b)` at infinity.
    pub c_k: f64,
    pub l2_sq: f64,
    pub lap_l2_sq: f64,
    pub g_integral: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub mode: WitnessMode,
    #[serde(rename = "K")]
    pub k: f64,
    pub terms: Vec<WitnessTerm>,
    #[serde(skip)]
    pub profiles: Vec<Profile>,
}

/// Default sequence index set: plateau heights `a_k = 1/k`, Moser heights `b_k = k`.
pub const WITNESS_INDICES: [usize; 4] = [2, 4, 8, 16];

/// Counterexample sequence for a failed growth condition. Origin modes use
/// plateaus with `a_k = 1/k`; infinity modes use dilated Moser profiles with
/// `b_k = 2 + k/4` (kept small enough that `g(ψ_k)` stays finite).
pub fn necessity_witness(mode: WitnessMode, g: &dyn Fn(f64) -> f64, k: f64, indices: &[usize]) -> Result<Witness> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument("K must be positive".into()));
    }
    let cls = classify_growth(g, k, &default_probes())?;
    let violated = match mode {
        WitnessMode::UnboundedOrigin => matches!(cls.limsup_origin, LimitEstimate::Infinite),
        WitnessMode::NoncompactOrigin => !cls.limsup_origin.is_zero(),
        WitnessMode::UnboundedInfinity => matches!(cls.limsup_infinity, LimitEstimate::Infinite),
        WitnessMode::NoncompactInfinity => !cls.limsup_infinity.is_zero(),
    };
    if !violated {
        return Err(Error::WitnessInapplicable(format!(
            "{mode:?}: origin limit {:?}, infinity limit {:?}",
            cls.limsup_origin, cls.limsup_infinity
        )));
    }
    let mut terms = Vec::with_capacity(indices.len());
    let mut profiles = Vec::with_capacity(indices.len());
    for &i in indices {
        let (params, c_k, profile) = match mode {
            WitnessMode::UnboundedOrigin | WitnessMode::NoncompactOrigin => {
                let a = 1.0 / i as f64;
                let c = g(a) / (a * a);
                let r = if mode == WitnessMode::UnboundedOrigin {
                    a.powf(-0.25) + a.powf(-0.5) * c.powf(-0.125)
                } else {
                    a.powf(-0.5)
                };
                let params = MoserParams::plateau(a, r);
                (params, c, plateau_profile(&params)?)
            }
            WitnessMode::UnboundedInfinity | WitnessMode::NoncompactInfinity => {
                let b = 2.0 + i as f64 / 4.0;
                let mut params = MoserParams::moser(b, k);
                let c = b * b * params.r_k * g(b);
                let s4 = if mode == WitnessMode::UnboundedInfinity { b * b / c.sqrt() } else { b * b };
                params.s_k = s4.powf(0.25);
                (params, c, moser_profile(&params)?.dilated(params.s_k))
            }
        };
        if !(c_k.is_finite() && c_k > 0.0) {
            return Err(Error::NotEvaluable(format!("c_k = {c_k} at index {i}")));
        }
        terms.push(WitnessTerm {
            k: i,
            params,
            c_k,
            l2_sq: profile.l2_sq(),
            lap_l2_sq: profile.lap_l2_sq(),
            g_integral: profile.integral(g),
        });
        profiles.push(profile);
    }
    Ok(Witness { mode, k, terms, profiles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::model::simpson;

    #[test]
    fn moser_center_and_branch_continuity() {
        for b in [3.0, 5.0, 8.0] {
            let p = moser_profile(&MoserParams::moser(b, 1.0)).unwrap();
            assert!((p.value(0.0) - (b + 2.0 / b)).abs() < 1e-12 * b);
            for i in 0..p.pieces().len() {
                let [(vl, dl), (vr, dr)] = p.one_sided(i);
                assert!((vl - vr).abs() < 1e-10, "b={b} branch {i}: {vl} vs {vr}");
                assert!((dl - dr).abs() < 1e-6 * (1.0 + dl.abs()), "b={b} branch {i}: {dl} vs {dr}");
            }
            // the quadratic branch meets the log branch at height b
            let rho = p.pieces()[0].hi;
            assert!((p.value(rho) - b).abs() < 1e-10);
        }
    }

    #[test]
    fn plateau_shape() {
        let p = plateau_profile(&MoserParams::plateau(0.1, 5.0)).unwrap();
        assert_eq!(p.value(0.0), 0.1);
        assert_eq!(p.value(7.0 + 1e-9), 0.0);
        assert!((p.slope(6.0) + 0.2).abs() < 1e-12);
        for i in 0..3 {
            let [(vl, dl), (vr, dr)] = p.one_sided(i);
            assert!((vl - vr).abs() < 1e-12 && (dl - dr).abs() < 1e-12);
        }
    }

    #[test]
    fn moser_energy_closed_form() {
        // core ball gives 128π²K²/b², the log branch exactly 32π²K
        let k = 1.0;
        let q = |t: f64| t - 6.0 * t.powi(3) + 8.0 * t.powi(4) - 3.0 * t.powi(5);
        let q1 = |t: f64| 1.0 - 18.0 * t * t + 32.0 * t.powi(3) - 15.0 * t.powi(4);
        let q2 = |t: f64| -36.0 * t + 96.0 * t * t - 60.0 * t.powi(3);
        let _ = q;
        let cap = 2.0 * PI * PI * simpson(|r| r.powi(3) * (q2(r - 1.0) + 3.0 * q1(r - 1.0) / r).powi(2), 1.0, 2.0, 1e-13);
        for b in [3.0, 5.0, 8.0] {
            let p = moser_profile(&MoserParams::moser(b, k)).unwrap();
            let expect = 32.0 * PI * PI * k + (128.0 * PI * PI + 16.0 * cap) * k * k / (b * b);
            assert!((p.lap_l2_sq() - expect).abs() < 1e-9 * expect, "b={b}");
        }
    }

    #[test]
    fn grid_field_matches_profile() {
        let g = build_grid(20.0, 2048, 4).unwrap();
        let s = moser_field_snapped(&MoserParams::moser(3.0, 1.0), &g).unwrap();
        assert!(s.snap_offset <= g.h() / 2.0);
        let l = g.laplacian_values(s.field.values());
        let lap = g.inner(&l, &l);
        assert!((lap - s.profile.lap_l2_sq()).abs() < 2e-2 * lap, "{lap} vs {}", s.profile.lap_l2_sq());
        assert!(matches!(moser_field(&MoserParams::moser(5.0, 1.0), &g), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn dilation_identity_and_escape() {
        let g = build_grid(20.0, 2048, 4).unwrap();
        let u = plateau_field(&MoserParams::plateau(0.1, 5.0), &g).unwrap();
        let same = dilate(&u, 1.0).unwrap();
        let d = same.values().iter().zip(u.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(d < 1e-10);
        assert!(matches!(dilate(&u, 3.0), Err(Error::SupportEscapes { .. })));
        assert!(plateau_field(&MoserParams::plateau(0.1, 19.0), &g).is_err());
    }

    #[test]
    fn exact_dilation_laws() {
        let p = moser_profile(&MoserParams::moser(3.0, 1.0)).unwrap();
        let q = p.dilated(1.7);
        let s4 = 1.7f64.powi(4);
        assert!((q.l2_sq() - s4 * p.l2_sq()).abs() < 1e-10 * q.l2_sq());
        assert!((q.lap_l2_sq() - p.lap_l2_sq()).abs() < 1e-10 * p.lap_l2_sq());
        let g = |t: f64| t.powi(4);
        assert!((q.integral(&g) - s4 * p.integral(&g)).abs() < 1e-10 * q.integral(&g));
    }

    #[test]
    fn biharmonic_cap_is_smaller_and_matches() {
        let params = MoserParams::moser(4.0, 1.0);
        let q = moser_profile(&params).unwrap();
        let b = moser_profile_with_cap(&params, Cap::Biharmonic).unwrap();
        let [(vl, dl), (vr, dr)] = b.one_sided(1);
        assert!((vl - vr).abs() < 1e-12 && (dl - dr).abs() < 1e-12);
        let [(v2, d2), _] = b.one_sided(2);
        assert!(v2.abs() < 1e-12 && d2.abs() < 1e-12);
        assert!(b.laplacian(1.5) != 0.0);
        // 32π²K + 16K²/b² (8π² + J) with J = 2π²·12.33 for the quintic, 2π²·4.13 here
        let excess = |p: &Profile| (p.lap_l2_sq() - 32.0 * PI * PI) * 16.0 / (16.0 * 2.0 * PI * PI) - 4.0;
        assert!((excess(&q) - 12.3286).abs() < 1e-3, "{}", excess(&q));
        assert!((excess(&b) - 4.1315).abs() < 1e-3, "{}", excess(&b));
    }

    #[test]
    fn witness_inapplicable_for_quadratic() {
        let e = necessity_witness(WitnessMode::UnboundedOrigin, &|t| t * t, 1.0, &WITNESS_INDICES).unwrap_err();
        assert!(matches!(e, Error::WitnessInapplicable(_)));
    }
}
