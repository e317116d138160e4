//! Scaling projections onto the Pohozaev and Nehari manifolds, constrained
//! minimization, Lagrange recovery and PDE residuals.
//!
//! Both minimizers take preconditioned gradient steps. With `S = W L` the
//! symmetric stiffness matrix, the preconditioner is
//!
//! ```text
//! P = S W⁻¹ S + c W   (n=4)        P = -S + c W   (n=2)
//! ```
//!
//! and a search direction solves `P d = -W ∇E`, where `∇E` is the gradient in
//! the weighted inner product. Retraction onto the manifold is the unique
//! scaling `u ↦ s u`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::banded::Banded;
use crate::error::{Error, Result};
use crate::functionals::Problem;
use crate::grid::{Pchip, RadialField, RadialGrid};
use crate::model::{Potential, ProblemConfig};
use crate::rearrangement::fourier_rearrange;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Stop when the objective dropped by less than `tol` (relative) over
    /// the last `window` iterations.
    pub tol: f64,
    pub window: usize,
    /// Stop when `<∇E, P⁻¹∇E> ≤ grad_tol² (1 + |E|)` on the tangent space.
    pub grad_tol: f64,
    /// Fourier rearrangement every this many iterations (0 disables).
    pub rearrange_interval: usize,
    /// Keep `‖u‖₂` fixed to first order in the Pohozaev minimization.
    pub pin_l2: bool,
    /// Newton refinement of the recovered solution.
    pub polish: bool,
    pub trace_stride: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 20_000,
            tol: 1e-10,
            window: 25,
            grad_tol: 1e-7,
            rearrange_interval: 10,
            pin_l2: true,
            polish: true,
            trace_stride: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub constraint_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Pohozaev,
    Nehari,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: SolveMode,
    #[serde(skip)]
    pub field: Option<RadialField>,
    /// `½D(u)` in Pohozaev mode, `I_V(u)` in Nehari mode.
    pub objective: f64,
    /// Pohozaev mode only.
    pub lagrange_theta: Option<f64>,
    /// Relative residual of the full equation: for Pohozaev mode, of the
    /// rescaled minimizer before any Newton refinement.
    pub residual_weak: f64,
    pub constraint_residual: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub rearrangements_accepted: usize,
    pub rearrangements_rejected: usize,
    pub trace: Vec<TraceEntry>,
}

impl SolveReport {
    pub fn field(&self) -> &RadialField {
        self.field.as_ref().expect("solver reports carry their field")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    #[serde(rename = "m_V")]
    pub m_v: f64,
    pub m_infty: f64,
    pub gap: f64,
    pub both_positive: bool,
    /// `I_V(t u_∞)` for the `m_∞` minimizer projected onto the `V` Nehari
    /// manifold; an upper bound for `m_V`.
    pub projected_level: f64,
    pub iterations_v: usize,
    pub iterations_infty: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Constraint {
    Pohozaev,
    Nehari,
}

impl Problem {
    fn constraint_at(&self, kind: Constraint, u: &[f64], s: f64) -> f64 {
        let su: Vec<f64> = u.iter().map(|x| s * x).collect();
        match kind {
            Constraint::Pohozaev => self.pohozaev(&su),
            Constraint::Nehari => self.nehari(&su),
        }
    }
}

fn peak(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Unique positive root of `s ↦ C(s u)`: doubling or halving from `s = 1`
/// until the sign flips, then a safeguarded false-position refinement.
fn project(p: &Problem, u: &[f64], kind: Constraint) -> Result<f64> {
    let m = peak(u);
    if m == 0.0 {
        return Err(Error::ZeroField);
    }
    let s_cap = p.config.overflow_cap / m;
    let h = |s: f64| p.constraint_at(kind, u, s);
    let (mut lo, mut hi);
    let mut s = 1.0f64.min(s_cap);
    if h(s) > 0.0 {
        loop {
            lo = s;
            if s >= s_cap {
                return Err(Error::NoSignChange { scale: s });
            }
            s = (2.0 * s).min(s_cap);
            if h(s) <= 0.0 {
                hi = s;
                break;
            }
        }
    } else {
        let mut halvings = 0;
        loop {
            hi = s;
            s *= 0.5;
            halvings += 1;
            if h(s) > 0.0 {
                lo = s;
                break;
            }
            if halvings > 200 {
                return Err(Error::NoSignChange { scale: s });
            }
        }
    }
    // Illinois variant of regula falsi on the bracket
    let (mut flo, mut fhi) = (h(lo), h(hi));
    let mut side = 0i8;
    for _ in 0..200 {
        if fhi == 0.0 {
            return Ok(hi);
        }
        let mut mid = (lo * fhi - hi * flo) / (fhi - flo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let fm = h(mid);
        if fm > 0.0 {
            lo = mid;
            flo = fm;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            fhi = fm;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if h(lo).abs() <= h(hi).abs() { lo } else { hi })
}

pub fn project_pohozaev(u: &RadialField, config: &ProblemConfig) -> Result<f64> {
    let p = Problem::new(config.clone(), u.grid().clone())?;
    p.check_field(u)?;
    project(&p, u.values(), Constraint::Pohozaev)
}

pub fn project_nehari(u: &RadialField, config: &ProblemConfig) -> Result<f64> {
    let p = Problem::new(config.clone(), u.grid().clone())?;
    p.check_field(u)?;
    project(&p, u.values(), Constraint::Nehari)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub scales: Vec<f64>,
    pub values: Vec<f64>,
    pub sign_changes: usize,
    /// Scales on either side of the first sign change.
    pub bracket: Option<(f64, f64)>,
}

/// `t ↦ C(t u)` on `count` log-spaced scales up to the overflow cap, over
/// `decades` decades.
pub fn constraint_scan(u: &RadialField, config: &ProblemConfig, nehari: bool, count: usize, decades: f64) -> Result<ScanReport> {
    let p = Problem::new(config.clone(), u.grid().clone())?;
    let m = peak(u.values());
    if m == 0.0 {
        return Err(Error::ZeroField);
    }
    let kind = if nehari { Constraint::Nehari } else { Constraint::Pohozaev };
    let t_max = config.overflow_cap / m;
    let scales: Vec<f64> =
        (0..count).map(|i| t_max * 10f64.powf(-decades * (1.0 - i as f64 / (count - 1) as f64))).collect();
    let values: Vec<f64> = scales.iter().map(|&t| p.constraint_at(kind, u.values(), t)).collect();
    let mut sign_changes = 0;
    let mut bracket = None;
    for i in 1..count {
        if (values[i - 1] > 0.0) != (values[i] > 0.0) {
            sign_changes += 1;
            bracket.get_or_insert((scales[i - 1], scales[i]));
        }
    }
    Ok(ScanReport { scales, values, sign_changes, bracket })
}

/// `S = W L` as (diagonal, superdiagonal).
fn stiffness(grid: &RadialGrid) -> (Vec<f64>, Vec<f64>) {
    let a = grid.flux();
    let m = a.len();
    let diag: Vec<f64> = (0..m).map(|i| -a[i] - if i > 0 { a[i - 1] } else { 0.0 }).collect();
    (diag, a[..m - 1].to_vec())
}

/// `S W⁻¹ S + diag(extra)` (n=4) or `-S + diag(extra)` (n=2), unfactored.
fn principal_matrix(grid: &RadialGrid, extra: &[f64]) -> Banded {
    let (d, e) = stiffness(grid);
    let m = d.len();
    let w = grid.weights();
    let s = |i: usize, j: usize| -> f64 {
        if i == j {
            d[i]
        } else if j == i + 1 {
            e[i]
        } else if i == j + 1 {
            e[j]
        } else {
            0.0
        }
    };
    let mut b = Banded::zeros(m, 2, 2);
    for i in 0..m {
        if grid.dimension().n() == 4 {
            for j in i.saturating_sub(2)..(i + 3).min(m) {
                let mut v = 0.0;
                for k in i.saturating_sub(1)..(i + 2).min(m) {
                    v += s(i, k) * s(k, j) / w[k];
                }
                b.add(i, j, v);
            }
        } else {
            for j in i.saturating_sub(1)..(i + 2).min(m) {
                b.add(i, j, -s(i, j));
            }
        }
        b.add(i, i, extra[i]);
    }
    b
}

struct Preconditioner {
    lu: Banded,
    w: Vec<f64>,
}

impl Preconditioner {
    fn new(grid: &RadialGrid, shift: f64) -> Self {
        let extra: Vec<f64> = grid.weights().iter().map(|w| shift * w).collect();
        let mut lu = principal_matrix(grid, &extra);
        assert!(lu.factor(), "preconditioner is positive definite");
        Preconditioner { lu, w: grid.weights().to_vec() }
    }

    /// `P⁻¹ g` for a weighted gradient `g`.
    fn apply(&self, g: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = g.iter().zip(&self.w).map(|(a, w)| a * w).collect();
        self.lu.solve(&mut x);
        x
    }
}

fn dot_w(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
}

fn axpy(u: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    u.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Relative residual of `A₀u + Vu = f(u)` in the dual norm of the energy
/// space, `‖r‖_* = <r, (A₀ + 1)⁻¹ r>^{1/2}`:
/// `‖A₀u + Vu - f(u)‖_* / (‖f(u)‖_* + ‖Vu‖_*)`, and 0 for `u = 0`.
pub fn residual_weak(u: &RadialField, config: &ProblemConfig) -> Result<f64> {
    let p = Problem::new(config.clone(), u.grid().clone())?;
    p.check_field(u)?;
    Ok(relative_residual(&p, &Preconditioner::new(p.grid(), 1.0), u.values()))
}

fn dual_norm(pre: &Preconditioner, r: &[f64]) -> f64 {
    dot_w(&pre.w, r, &pre.apply(r)).max(0.0).sqrt()
}

fn relative_residual(p: &Problem, dual: &Preconditioner, u: &[f64]) -> f64 {
    let r = p.energy_gradient(u);
    let nl = &p.config.nonlinearity;
    let f: Vec<f64> = u.iter().map(|&x| nl.f(x)).collect();
    let vu: Vec<f64> = u.iter().zip(p.potential_values()).map(|(x, v)| v * x).collect();
    let den = dual_norm(dual, &f) + dual_norm(dual, &vu);
    if den == 0.0 {
        0.0
    } else {
        dual_norm(dual, &r) / den
    }
}

struct Windowed {
    history: Vec<f64>,
    window: usize,
    tol: f64,
}

impl Windowed {
    fn stalled(&mut self, obj: f64) -> bool {
        self.history.push(obj);
        let n = self.history.len();
        if n <= self.window {
            return false;
        }
        let old = self.history[n - 1 - self.window];
        (old - obj) <= self.tol * obj.abs().max(1e-300)
    }
}

/// Solves the 2×2 (or 1×1) system for the normal components.
fn tangent_coefficients(g: &[[f64; 2]; 2], rhs: [f64; 2], two: bool) -> [f64; 2] {
    if !two {
        return [rhs[0] / g[0][0], 0.0];
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    [(rhs[0] * g[1][1] - rhs[1] * g[0][1]) / det, (g[0][0] * rhs[1] - g[1][0] * rhs[0]) / det]
}

/// Minimizes `½D(u)` over `G(u) = 0` for a constant potential.
///
/// Each step projects the preconditioned gradient of `½D` onto the tangent
/// space of `{G = 0}` (and of `{‖u‖₂ = const}` when pinned), takes a
/// backtracking step and rescales back onto the manifold. Every
/// `rearrange_interval` iterations the Fourier rearrangement of the iterate is
/// tried and kept if it does not raise the objective; on rejection the
/// interval doubles.
pub fn minimize_pohozaev(config: &ProblemConfig, init: &RadialField, opts: &SolveOptions) -> Result<SolveReport> {
    if !config.potential.is_constant() {
        return Err(Error::HypothesisViolated("the Pohozaev minimization needs a constant potential".into()));
    }
    let p = Problem::new(config.clone(), init.grid().clone())?;
    p.check_field(init)?;
    let grid = p.grid().clone();
    let w = grid.weights().to_vec();
    let pre = Preconditioner::new(&grid, config.potential.gamma_inf());
    let obj = |u: &[f64]| 0.5 * p.principal(u);

    let s0 = project(&p, init.values(), Constraint::Pohozaev)?;
    let mut u: Vec<f64> = init.values().iter().map(|x| s0 * x).collect();
    let mut e = obj(&u);
    let mut tau = 1.0;
    let mut interval = opts.rearrange_interval;
    let mut next_rearrange = interval;
    let (mut acc, mut rej) = (0, 0);
    let mut trace = Vec::new();
    let mut stall = Windowed { history: Vec::new(), window: opts.window, tol: opts.tol };
    let mut gnorm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for it in 0..opts.max_iters {
        iterations = it;
        let gd = p.principal_apply(&u);
        let nl = &p.config.nonlinearity;
        let gg: Vec<f64> = u.iter().zip(p.potential_values()).map(|(x, v)| 2.0 * (v * x - nl.f(*x))).collect();
        let gm: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        let (pd, pg, pm) = (pre.apply(&gd), pre.apply(&gg), pre.apply(&gm));
        let gram = [[dot_w(&w, &gg, &pg), dot_w(&w, &gg, &pm)], [dot_w(&w, &gm, &pg), dot_w(&w, &gm, &pm)]];
        let rhs = [dot_w(&w, &gg, &pd), dot_w(&w, &gm, &pd)];
        let [a, b] = tangent_coefficients(&gram, rhs, opts.pin_l2);
        let d: Vec<f64> = (0..u.len()).map(|i| -(pd[i] - a * pg[i] - b * pm[i])).collect();
        let g2 = -dot_w(&w, &gd, &d);
        gnorm = g2.max(0.0).sqrt();
        if it % opts.trace_stride.max(1) == 0 {
            trace.push(TraceEntry { iteration: it, objective: e, constraint_residual: p.pohozaev(&u).abs() });
        }
        if g2 <= opts.grad_tol * opts.grad_tol * (1.0 + e.abs()) || stall.stalled(e) {
            converged = true;
            break;
        }

        let mut stepped = false;
        for _ in 0..60 {
            let trial = axpy(&u, tau, &d);
            let moved = p.guard(&trial).and_then(|_| project(&p, &trial, Constraint::Pohozaev));
            if let Ok(s) = moved {
                let cand: Vec<f64> = trial.iter().map(|x| s * x).collect();
                let ec = obj(&cand);
                if p.guard(&cand).is_ok() && ec <= e - 1e-4 * tau * g2 {
                    u = cand;
                    e = ec;
                    stepped = true;
                    tau = (tau * 2.0).min(1e3);
                    break;
                }
            }
            tau *= 0.5;
        }
        if !stepped {
            // no descent at rounding level: the iterate is as good as it gets
            converged = g2 <= 1e-10 * (1.0 + e.abs());
            break;
        }

        if interval > 0 && it + 1 >= next_rearrange {
            let field = RadialField::new(grid.clone(), u.clone())?;
            let improved = fourier_rearrange(&field).ok().and_then(|r| {
                let s = project(&p, r.field.values(), Constraint::Pohozaev).ok()?;
                let cand: Vec<f64> = r.field.values().iter().map(|x| s * x).collect();
                p.guard(&cand).ok()?;
                let ec = obj(&cand);
                (ec <= e).then_some((cand, ec))
            });
            match improved {
                Some((cand, ec)) => {
                    u = cand;
                    e = ec;
                    acc += 1;
                }
                None => {
                    rej += 1;
                    interval *= 2;
                }
            }
            next_rearrange = it + 1 + interval;
        }
    }
    if !converged {
        return Err(Error::NotConverged { iterations: opts.max_iters, gradient: gnorm });
    }
    let field = RadialField::new(grid.clone(), u.clone())?;
    let theta = lagrange_theta(&p, &u);
    let residual = recover_solution(&field, theta, config).map(|r| relative_residual(&p, &Preconditioner::new(&grid, 1.0), r.values())).unwrap_or(f64::NAN);
    trace.push(TraceEntry { iteration: iterations, objective: e, constraint_residual: p.pohozaev(&u).abs() });
    Ok(SolveReport {
        mode: SolveMode::Pohozaev,
        field: Some(field),
        objective: e,
        lagrange_theta: Some(theta),
        residual_weak: residual,
        constraint_residual: p.pohozaev(&u).abs(),
        gradient_norm: gnorm,
        iterations,
        rearrangements_accepted: acc,
        rearrangements_rejected: rej,
        trace,
    })
}

/// `θ` from `D(u) = (2θ - 1) ∫(V u - f(u)) u`.
fn lagrange_theta(p: &Problem, u: &[f64]) -> f64 {
    let d = p.principal(u);
    let q = p.pot_l2_sq(u) - p.f_dot_u(u);
    0.5 * (1.0 + d / q)
}

pub const RECOVERY_TAIL: f64 = 1e-6;

/// `ũ(x) = u(x / σ)` with `σ = (1 - 2θ)^{1/4}` in R⁴ and `(1 - 2θ)^{1/2}` in R².
///
/// The multiplier equation `A₀u = (2θ - 1)(γu - f(u))` becomes the full
/// equation after a dilation by `σ` with `σ^{2m} = 1 - 2θ`, where `A₀` has
/// order `2m`. Values below `RECOVERY_TAIL · max|u|` count as outside the
/// support; whatever the dilation pushes past `r_max` is dropped.
pub fn recover_solution(u: &RadialField, theta: f64, config: &ProblemConfig) -> Result<RadialField> {
    if !(theta < 0.5) {
        return Err(Error::HypothesisViolated(format!("recovery needs 2θ - 1 < 0, got θ = {theta}")));
    }
    if config.dimension() != u.grid().dimension() {
        return Err(Error::GridMismatch);
    }
    let order = config.dimension().n() as f64;
    let sigma = (1.0 - 2.0 * theta).powf(1.0 / order);
    let g = u.grid();
    let floor = RECOVERY_TAIL * u.max_abs();
    let last = u.values().iter().rposition(|v| v.abs() > floor).unwrap_or(0);
    let support = g.nodes()[last];
    if sigma * support > g.r_max() * (1.0 + 1e-12) {
        return Err(Error::SupportEscapes { support, scale: sigma, r_max: g.r_max() });
    }
    let pchip = Pchip::new(g.h(), u.values());
    RadialField::new(g.clone(), g.nodes().iter().map(|r| pchip.eval(r / sigma)).collect())
}

/// Newton iteration on the discrete equation `A₀u + Vu = f(u)` with a banded
/// Jacobian and residual-halving damping. Returns the refined field and the
/// number of Newton steps.
pub fn newton_polish(u: &RadialField, config: &ProblemConfig, max_steps: usize) -> Result<(RadialField, usize)> {
    let p = Problem::new(config.clone(), u.grid().clone())?;
    p.check_field(u)?;
    let grid = p.grid().clone();
    let w = grid.weights();
    let nl = &p.config.nonlinearity;
    let mut x = u.values().to_vec();
    let dual = Preconditioner::new(&grid, 1.0);
    let norm = |x: &[f64]| dual_norm(&dual, &p.energy_gradient(x));
    let mut rn = norm(&x);
    let mut steps = 0;
    while steps < max_steps {
        if relative_residual(&p, &dual, &x) < 1e-14 {
            break;
        }
        let extra: Vec<f64> =
            (0..x.len()).map(|i| w[i] * (p.potential_values()[i] - nl.df(x[i]))).collect();
        let mut jac = principal_matrix(&grid, &extra);
        if !jac.factor() {
            break;
        }
        let r = p.energy_gradient(&x);
        let mut dx: Vec<f64> = r.iter().zip(w).map(|(a, wi)| -a * wi).collect();
        jac.solve(&mut dx);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-4 {
            let cand = axpy(&x, t, &dx);
            if p.guard(&cand).is_ok() {
                let cn = norm(&cand);
                if cn < rn {
                    x = cand;
                    rn = cn;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        steps += 1;
        if !moved {
            break;
        }
    }
    Ok((RadialField::new(grid, x)?, steps))
}

/// Minimizes `I_V` over the Nehari manifold by preconditioned gradient steps
/// followed by re-projection `u ↦ t_u u`.
pub fn minimize_nehari(config: &ProblemConfig, init: &RadialField, opts: &SolveOptions) -> Result<SolveReport> {
    let p = Problem::new(config.clone(), init.grid().clone())?;
    p.check_field(init)?;
    let grid = p.grid().clone();
    let w = grid.weights().to_vec();
    let pre = Preconditioner::new(&grid, config.potential.gamma_inf());

    let t0 = project(&p, init.values(), Constraint::Nehari)?;
    let mut u: Vec<f64> = init.values().iter().map(|x| t0 * x).collect();
    let mut e = p.energy(&u);
    let mut tau = 1.0;
    let mut trace = Vec::new();
    let mut stall = Windowed { history: Vec::new(), window: opts.window, tol: opts.tol };
    let mut gnorm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for it in 0..opts.max_iters {
        iterations = it;
        let g = p.energy_gradient(&u);
        let pg = pre.apply(&g);
        let g2 = dot_w(&w, &g, &pg);
        gnorm = g2.max(0.0).sqrt();
        if it % opts.trace_stride.max(1) == 0 {
            trace.push(TraceEntry { iteration: it, objective: e, constraint_residual: p.nehari(&u).abs() });
        }
        if g2 <= opts.grad_tol * opts.grad_tol * (1.0 + e.abs()) || stall.stalled(e) {
            converged = true;
            break;
        }
        let mut stepped = false;
        for _ in 0..60 {
            let trial = axpy(&u, -tau, &pg);
            let moved = p.guard(&trial).and_then(|_| project(&p, &trial, Constraint::Nehari));
            if let Ok(t) = moved {
                let cand: Vec<f64> = trial.iter().map(|x| t * x).collect();
                let ec = p.energy(&cand);
                if p.guard(&cand).is_ok() && ec <= e - 1e-4 * tau * g2 {
                    u = cand;
                    e = ec;
                    stepped = true;
                    tau = (tau * 2.0).min(1e3);
                    break;
                }
            }
            tau *= 0.5;
        }
        if !stepped {
            converged = g2 <= 1e-10 * (1.0 + e.abs());
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged { iterations: opts.max_iters, gradient: gnorm });
    }
    trace.push(TraceEntry { iteration: iterations, objective: e, constraint_residual: p.nehari(&u).abs() });
    let field = RadialField::new(grid, u.clone())?;
    Ok(SolveReport {
        mode: SolveMode::Nehari,
        residual_weak: relative_residual(&p, &Preconditioner::new(p.grid(), 1.0), &u),
        constraint_residual: p.nehari(&u).abs(),
        field: Some(field),
        objective: e,
        lagrange_theta: None,
        gradient_norm: gnorm,
        iterations,
        rearrangements_accepted: 0,
        rearrangements_rejected: 0,
        trace,
    })
}

/// `m_V` and `m_∞ = m_{γ_∞}` from the same initial field.
pub fn limiting_gap(config_v: &ProblemConfig, init: &RadialField, opts: &SolveOptions) -> Result<GapReport> {
    config_v.validate()?;
    let gamma = config_v.potential.gamma_inf();
    let config_inf = config_v.with_potential(Potential::constant(gamma)?)?;
    let rv = minimize_nehari(config_v, init, opts)?;
    let ri = minimize_nehari(&config_inf, init, opts)?;
    let p = Problem::new(config_v.clone(), init.grid().clone())?;
    let ui = ri.field();
    let t = project(&p, ui.values(), Constraint::Nehari)?;
    let tu: Vec<f64> = ui.values().iter().map(|x| t * x).collect();
    Ok(GapReport {
        m_v: rv.objective,
        m_infty: ri.objective,
        gap: ri.objective - rv.objective,
        both_positive: rv.objective > 0.0 && ri.objective > 0.0,
        projected_level: p.energy(&tu),
        iterations_v: rv.iterations,
        iterations_infty: ri.iterations,
    })
}

/// Positive smooth initial field: a sum of three Gaussian bumps with
/// heights, centers and widths drawn from `seed`.
pub fn seeded_init(grid: &Arc<RadialGrid>, seed: u64) -> Result<RadialField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(f64, f64, f64)> =
        (0..3).map(|_| (rng.gen_range(0.3..1.0), rng.gen_range(0.0..2.0), rng.gen_range(0.6..1.5))).collect();
    RadialField::from_fn(grid.clone(), |r| {
        bumps.iter().map(|(a, c, s)| a * (-(r - c).powi(2) / (2.0 * s * s)).exp()).sum::<f64>()
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundState {
    pub minimizer: SolveReport,
    /// `A = ½D` at the constrained minimizer.
    pub a_level: f64,
    pub theta: f64,
    #[serde(skip)]
    pub field: Option<RadialField>,
    pub residual_before_polish: f64,
    pub residual_weak: f64,
    pub newton_steps: usize,
    pub energy_i: f64,
    pub nehari_n: f64,
    pub pohozaev_g: f64,
    /// Each identity divided by the sum of the magnitudes of its terms:
    /// `|N| / (D + P + ∫f(u)u)` and `|G| / (P + 2∫F(u))`.
    pub nehari_relative: f64,
    pub pohozaev_relative: f64,
}

impl GroundState {
    pub fn field(&self) -> &RadialField {
        self.field.as_ref().expect("ground state carries its field")
    }
}

/// Pohozaev minimization, Lagrange recovery and optional Newton refinement.
pub fn solve_ground_state(config: &ProblemConfig, init: &RadialField, opts: &SolveOptions) -> Result<GroundState> {
    let rep = minimize_pohozaev(config, init, opts)?;
    let theta = rep.lagrange_theta.expect("Pohozaev mode reports θ");
    let rec = recover_solution(rep.field(), theta, config)?;
    let p = Problem::new(config.clone(), rec.grid().clone())?;
    let dual = Preconditioner::new(p.grid(), 1.0);
    let before = relative_residual(&p, &dual, rec.values());
    let (field, steps) = if opts.polish { newton_polish(&rec, config, 40)? } else { (rec, 0) };
    let u = field.values();
    let d = p.principal(u);
    let pot = p.pot_l2_sq(u);
    let n = p.nehari(u);
    let g = p.pohozaev(u);
    Ok(GroundState {
        a_level: rep.objective,
        theta,
        residual_before_polish: before,
        residual_weak: relative_residual(&p, &dual, u),
        newton_steps: steps,
        energy_i: p.energy(u),
        nehari_n: n,
        pohozaev_g: g,
        nehari_relative: n.abs() / (d + pot + p.f_dot_u(u).abs()),
        pohozaev_relative: g.abs() / (pot + 2.0 * p.f_mass(u).abs()),
        field: Some(field),
        minimizer: rep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::model::OrderDim;

    fn setup(n: usize) -> (Arc<RadialGrid>, ProblemConfig) {
        let (od, r) = if n == 4 { (OrderDim::Biharmonic4, 20.0) } else { (OrderDim::Laplace2, 30.0) };
        (build_grid(r, 512, n).unwrap(), ProblemConfig::exp_critical(od, 1.0, 0.5).unwrap())
    }

    #[test]
    fn banded_principal_matches_operator() {
        for n in [2, 4] {
            let (g, c) = setup(n);
            let p = Problem::new(c, g.clone()).unwrap();
            let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 3.0).exp() * (1.0 + r)).collect();
            let zero = vec![0.0; u.len()];
            let m = principal_matrix(&g, &zero);
            let direct = p.principal_apply(&u);
            for i in 0..u.len() {
                let lo = i.saturating_sub(2);
                let hi = (i + 3).min(u.len());
                let mu: f64 = (lo..hi).map(|j| m.entry(i, j) * u[j]).sum();
                let scale: f64 = (lo..hi).map(|j| (m.entry(i, j) * u[j]).abs()).sum();
                let want = g.weights()[i] * direct[i];
                assert!((mu - want).abs() <= 1e-12 * scale, "n={n} i={i}: {mu} vs {want}");
            }
        }
    }

    #[test]
    fn projections_land_on_manifolds() {
        for n in [2, 4] {
            let (g, c) = setup(n);
            let p = Problem::new(c.clone(), g.clone()).unwrap();
            let u = seeded_init(&g, 7).unwrap();
            let t = project_nehari(&u, &c).unwrap();
            let s = project_pohozaev(&u, &c).unwrap();
            let tu: Vec<f64> = u.values().iter().map(|x| t * x).collect();
            let su: Vec<f64> = u.values().iter().map(|x| s * x).collect();
            assert!(p.nehari(&tu).abs() <= 1e-10 * p.principal(&tu));
            assert!(p.pohozaev(&su).abs() <= 1e-10 * p.pot_l2_sq(&su));
            let scan = constraint_scan(&u, &c, true, 1000, 6.0).unwrap();
            assert_eq!(scan.sign_changes, 1);
            let (a, b) = scan.bracket.unwrap();
            assert!(a <= t && t <= b);
        }
    }

    #[test]
    fn projection_errors() {
        let (g, c) = setup(4);
        let z = RadialField::zeros(g.clone());
        assert!(matches!(project_nehari(&z, &c), Err(Error::ZeroField)));
    }

    #[test]
    fn recovery_preconditions() {
        let (g, c) = setup(4);
        let u = RadialField::from_fn(g.clone(), |r| (-r * r).exp()).unwrap();
        let same = recover_solution(&u, 0.0, &c).unwrap();
        for (a, b) in same.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(recover_solution(&u, 0.6, &c), Err(Error::HypothesisViolated(_))));
        assert!(matches!(recover_solution(&u, 0.5, &c), Err(Error::HypothesisViolated(_))));
        let wide = RadialField::from_fn(g.clone(), |r| (-r / 4.0).exp()).unwrap();
        assert!(matches!(recover_solution(&wide, -2.0, &c), Err(Error::SupportEscapes { .. })));
    }

    #[test]
    fn residual_of_zero_is_zero() {
        let (g, c) = setup(4);
        assert_eq!(residual_weak(&RadialField::zeros(g), &c).unwrap(), 0.0);
    }

    #[test]
    fn ground_state_2d_small() {
        let (g, c) = setup(2);
        let init = seeded_init(&g, 3).unwrap();
        let gs = solve_ground_state(&c, &init, &SolveOptions::default()).unwrap();
        assert!(gs.theta < 0.5);
        assert!(gs.residual_weak < 1e-8, "{}", gs.residual_weak);
        let neh = minimize_nehari(&c, &init, &SolveOptions::default()).unwrap();
        assert!((neh.objective - gs.energy_i).abs() < 1e-5 * neh.objective);
    }

    #[test]
    fn degenerate_gap_vanishes() {
        let g = build_grid(20.0, 256, 4).unwrap();
        let c = ProblemConfig::exp_critical(OrderDim::Biharmonic4, 1.0, 0.3).unwrap();
        let init = seeded_init(&g, 1).unwrap();
        let r = limiting_gap(&c, &init, &SolveOptions::default()).unwrap();
        assert!(r.gap.abs() <= 1e-12 * r.m_v);
        assert!(r.both_positive);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let (g, _) = setup(4);
        assert_eq!(seeded_init(&g, 11).unwrap().values(), seeded_init(&g, 11).unwrap().values());
        assert_ne!(seeded_init(&g, 11).unwrap().values(), seeded_init(&g, 12).unwrap().values());
    }
}
