//! Nonlinearities, potentials and the problem configuration.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{expm1_minus_id, Expr};
use crate::grid::{Dimension, RadialGrid};

/// The pair (m, n): `(-Δ)^m` on R^n.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderDim {
    #[serde(rename = "m2n4")]
    Biharmonic4,
    #[serde(rename = "m1n2")]
    Laplace2,
}

impl OrderDim {
    pub fn dimension(self) -> Dimension {
        match self {
            OrderDim::Biharmonic4 => Dimension::Four,
            OrderDim::Laplace2 => Dimension::Two,
        }
    }

    pub fn from_dimension(dim: Dimension) -> Self {
        match dim {
            Dimension::Four => OrderDim::Biharmonic4,
            Dimension::Two => OrderDim::Laplace2,
        }
    }

    /// Adams (n=4) or Moser (n=2) threshold.
    pub fn adams_beta(self) -> f64 {
        match self {
            OrderDim::Biharmonic4 => 32.0 * PI * PI,
            OrderDim::Laplace2 => 4.0 * PI,
        }
    }

    pub fn critical_alpha0(self) -> f64 {
        match self {
            OrderDim::Biharmonic4 => 2.0,
            OrderDim::Laplace2 => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NonlinearityKind {
    /// `f(t) = λ t exp(α₀ t²)`
    ExpCritical { lambda: f64 },
    /// `F(t) = (exp(t²) - 1 - t²) / (1 + |t|^θ)`
    ExactGrowthFamily { theta: f64 },
    UserExpr {
        f: Expr,
        #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
        big_f: Option<Expr>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
    pub alpha0: f64,
    pub ar_mu: f64,
    #[serde(skip)]
    primitive: Arc<OnceLock<PrimitiveTable>>,
}

impl PartialEq for NonlinearitySpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.alpha0 == other.alpha0 && self.ar_mu == other.ar_mu
    }
}

impl NonlinearitySpec {
    /// The ratio `t f(t) / F(t)` tends to 2 at the origin, so μ sits on the
    /// boundary value 2 for this family.
    pub fn exp_critical(lambda: f64, order_dim: OrderDim) -> Self {
        Self::from_kind(NonlinearityKind::ExpCritical { lambda }, order_dim.critical_alpha0(), 2.0)
    }

    pub fn exact_growth(theta: f64) -> Self {
        Self::from_kind(NonlinearityKind::ExactGrowthFamily { theta }, 1.0, 2.5)
    }

    pub fn user(f: Expr, big_f: Option<Expr>, alpha0: f64, ar_mu: f64) -> Result<Self> {
        if !(alpha0 >= 0.0 && alpha0.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha0 must be nonnegative, got {alpha0}")));
        }
        let spec = Self::from_kind(NonlinearityKind::UserExpr { f, big_f }, alpha0, ar_mu);
        let f0 = spec.f(0.0);
        if !(f0.abs() <= 1e-12) {
            return Err(Error::InvalidArgument(format!("f(0) must vanish, got {f0}")));
        }
        Ok(spec)
    }

    fn from_kind(kind: NonlinearityKind, alpha0: f64, ar_mu: f64) -> Self {
        NonlinearitySpec { kind, alpha0, ar_mu, primitive: Arc::new(OnceLock::new()) }
    }

    pub fn f(&self, t: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::ExpCritical { lambda } => lambda * t * (self.alpha0 * t * t).exp(),
            NonlinearityKind::ExactGrowthFamily { theta } => {
                if t == 0.0 {
                    return 0.0;
                }
                let a = t.abs();
                let e = expm1_minus_id(t * t);
                let d = 1.0 + a.powf(*theta);
                let de = 2.0 * t * (t * t).exp_m1();
                de / d - e * theta * a.powf(theta - 1.0) * t.signum() / (d * d)
            }
            NonlinearityKind::UserExpr { f, .. } => f.eval(t),
        }
    }

    /// The primitive `F(t) = ∫₀ᵗ f`.
    pub fn big_f(&self, t: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::ExpCritical { lambda } => {
                lambda / (2.0 * self.alpha0) * (self.alpha0 * t * t).exp_m1()
            }
            NonlinearityKind::ExactGrowthFamily { theta } => {
                expm1_minus_id(t * t) / (1.0 + t.abs().powf(*theta))
            }
            NonlinearityKind::UserExpr { big_f: Some(e), .. } => e.eval(t),
            NonlinearityKind::UserExpr { big_f: None, .. } => {
                self.primitive.get_or_init(|| PrimitiveTable::build(|s| self.f(s))).eval(t, |s| self.f(s))
            }
        }
    }

    /// `f'(t)`; analytic for the presets, central differences otherwise.
    pub fn df(&self, t: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::ExpCritical { lambda } => {
                let a = self.alpha0;
                lambda * (a * t * t).exp() * (1.0 + 2.0 * a * t * t)
            }
            _ => {
                let h = 1e-5 * (1.0 + t.abs());
                (self.f(t + h) - self.f(t - h)) / (2.0 * h)
            }
        }
    }

    /// `f(t) / t`, finite at the origin.
    pub fn f_over_t(&self, t: f64) -> f64 {
        if t == 0.0 {
            self.df(0.0)
        } else {
            self.f(t) / t
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self.kind {
            NonlinearityKind::ExpCritical { lambda } => Some(lambda),
            _ => None,
        }
    }
}

/// Tabulated primitive of a user nonlinearity: values of `F` on a uniform
/// mesh of [-T, T] by adaptive Simpson, cubic Hermite in between.
#[derive(Debug)]
struct PrimitiveTable {
    dt: f64,
    pos: Vec<f64>,
    neg: Vec<f64>,
}

const TABLE_STEP: f64 = 1e-3;
const TABLE_SPAN: f64 = 12.0;

fn simpson_adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    simpson_adaptive(&f, a, b, tol)
}

impl PrimitiveTable {
    fn build(f: impl Fn(f64) -> f64) -> Self {
        let count = (TABLE_SPAN / TABLE_STEP).round() as usize;
        let side = |sign: f64| {
            let mut out = Vec::with_capacity(count + 1);
            let mut acc: f64 = 0.0;
            out.push(0.0);
            for i in 0..count {
                let a = sign * i as f64 * TABLE_STEP;
                let b = sign * (i + 1) as f64 * TABLE_STEP;
                let piece = simpson_adaptive(&f, a, b, 1e-14 * (1.0 + acc.abs()));
                acc += piece;
                if !acc.is_finite() {
                    break;
                }
                out.push(acc);
            }
            out
        };
        PrimitiveTable { dt: TABLE_STEP, pos: side(1.0), neg: side(-1.0) }
    }

    fn eval(&self, t: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (table, sign) = if t >= 0.0 { (&self.pos, 1.0) } else { (&self.neg, -1.0) };
        let x = t.abs() / self.dt;
        let i = x.floor() as usize;
        if i + 1 >= table.len() {
            let last = table.len() - 1;
            let a = sign * last as f64 * self.dt;
            return table[last] + simpson_adaptive(&f, a, t, 1e-12 * (1.0 + table[last].abs()));
        }
        let s = x - i as f64;
        let (a, b) = (sign * i as f64 * self.dt, sign * (i + 1) as f64 * self.dt);
        // Hermite basis on [a, b] with derivatives f(a), f(b)
        let h = b - a;
        let (y0, y1, d0, d1) = (table[i], table[i + 1], f(a) * h, f(b) * h);
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Potential {
    Constant { gamma: f64 },
    RadialRabinowitz { profile: Expr, v0: f64, gamma_inf: f64 },
}

impl Potential {
    pub fn constant(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Potential::Constant { gamma })
    }

    /// `V0` is the minimum over the grid nodes and `gamma_inf` the value at
    /// `r_max`. `V ≡ γ` is accepted as the degenerate case.
    pub fn radial(profile: Expr, grid: &RadialGrid) -> Result<Self> {
        let mut v0 = f64::INFINITY;
        for &r in grid.nodes() {
            let v = profile.eval(r);
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("potential is not finite at r = {r}")));
            }
            v0 = v0.min(v);
        }
        let gamma_inf = profile.eval(grid.r_max());
        if !(v0 > 0.0) {
            return Err(Error::HypothesisViolated(format!("potential minimum {v0} must be positive")));
        }
        if v0 > gamma_inf + 1e-6 {
            return Err(Error::HypothesisViolated(format!(
                "potential minimum {v0} exceeds its value {gamma_inf} at r_max"
            )));
        }
        Ok(Potential::RadialRabinowitz { profile, v0, gamma_inf })
    }

    pub fn v0(&self) -> f64 {
        match self {
            Potential::Constant { gamma } => *gamma,
            Potential::RadialRabinowitz { v0, .. } => *v0,
        }
    }

    pub fn gamma_inf(&self) -> f64 {
        match self {
            Potential::Constant { gamma } => *gamma,
            Potential::RadialRabinowitz { gamma_inf, .. } => *gamma_inf,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Potential::Constant { .. })
    }

    /// Strict trapping shape: minimum strictly below the value at infinity.
    pub fn is_trapping(&self) -> bool {
        self.v0() < self.gamma_inf() - 1e-6
    }

    pub fn sample(&self, grid: &RadialGrid) -> Vec<f64> {
        grid.nodes().iter().map(|&r| eval_potential(self, r)).collect()
    }
}

pub fn eval_potential(pot: &Potential, r: f64) -> f64 {
    match pot {
        Potential::Constant { gamma } => *gamma,
        Potential::RadialRabinowitz { profile, .. } => profile.eval(r),
    }
}

pub const DEFAULT_OVERFLOW_CAP: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub order_dim: OrderDim,
    pub lambda: f64,
    pub potential: Potential,
    pub nonlinearity: NonlinearitySpec,
    pub adams_beta: f64,
    pub overflow_cap: f64,
}

impl ProblemConfig {
    pub fn new(order_dim: OrderDim, lambda: f64, potential: Potential, nonlinearity: NonlinearitySpec) -> Result<Self> {
        let cfg = ProblemConfig {
            order_dim,
            lambda,
            potential,
            nonlinearity,
            adams_beta: order_dim.adams_beta(),
            overflow_cap: DEFAULT_OVERFLOW_CAP,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `f(t) = λ t exp(α₀ t²)` with constant potential γ.
    pub fn exp_critical(order_dim: OrderDim, gamma: f64, lambda: f64) -> Result<Self> {
        Self::new(order_dim, lambda, Potential::constant(gamma)?, NonlinearitySpec::exp_critical(lambda, order_dim))
    }

    pub fn with_potential(&self, potential: Potential) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.potential = potential;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Potential::Constant { gamma } = self.potential {
            if !(gamma > 0.0) {
                return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
            }
        }
        let v0 = self.potential.v0();
        if !(self.lambda < v0) {
            return Err(Error::HypothesisViolated(format!("lambda = {} must be below V0 = {v0}", self.lambda)));
        }
        if let Some(l) = self.nonlinearity.lambda() {
            if l != self.lambda {
                return Err(Error::InvalidArgument(format!("nonlinearity lambda {l} differs from problem lambda {}", self.lambda)));
            }
            if !(l > 0.0) {
                return Err(Error::HypothesisViolated(format!("lambda = {l} must be positive")));
            }
        }
        if (self.adams_beta - self.order_dim.adams_beta()).abs() > 1e-12 * self.adams_beta.abs() {
            return Err(Error::InvalidArgument("adams_beta inconsistent with order_dim".into()));
        }
        if !(self.overflow_cap > 0.0) {
            return Err(Error::InvalidArgument("overflow_cap must be positive".into()));
        }
        Ok(())
    }

    pub fn dimension(&self) -> Dimension {
        self.order_dim.dimension()
    }

    pub fn guard(&self, t: f64) -> Result<()> {
        if t.abs() > self.overflow_cap || !t.is_finite() {
            Err(Error::Overflow { value: t, cap: self.overflow_cap })
        } else {
            Ok(())
        }
    }

    /// `g_λ(t) = 2F(t) - λ t²`, so that `G = (V - λ)‖u‖² - ∫g_λ(u)`.
    pub fn g_lambda(&self, t: f64) -> f64 {
        match self.nonlinearity.kind {
            NonlinearityKind::ExpCritical { lambda } => {
                let a = self.nonlinearity.alpha0;
                lambda / a * expm1_minus_id(a * t * t)
            }
            _ => 2.0 * self.nonlinearity.big_f(t) - self.lambda * t * t,
        }
    }

    /// Threshold `R(F) = β / α₀`.
    pub fn threshold_r(&self) -> f64 {
        self.adams_beta / self.nonlinearity.alpha0
    }
}

fn finite_or_overflow(v: f64, t: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow { value: t, cap: f64::NAN })
    }
}

pub fn eval_f(spec: &NonlinearitySpec, t: f64) -> Result<f64> {
    finite_or_overflow(spec.f(t), t)
}

pub fn eval_big_f(spec: &NonlinearitySpec, t: f64) -> Result<f64> {
    finite_or_overflow(spec.big_f(t), t)
}

pub fn eval_g_lambda(config: &ProblemConfig, t: f64) -> Result<f64> {
    config.guard(t)?;
    finite_or_overflow(config.g_lambda(t), t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `min t f(t) / F(t)` over the grid.
    pub worst_ar_ratio: f64,
    pub ar_mu: f64,
    /// (i) holds when the worst ratio is at least μ, up to 1e-9.
    pub ar_holds: bool,
    pub t0: f64,
    /// `max F/f` over `t ≥ t0`.
    pub m0: f64,
    pub f_bound_holds: bool,
    pub alpha0_estimate: f64,
    pub critical: bool,
}

/// Numeric check of the Ambrosetti–Rabinowitz condition and of `F ≤ M₀ f`
/// for large `t`. `t0` is fixed at the first grid point ≥ 1 (or the largest
/// point if the grid stays below 1).
pub fn check_conditions(spec: &NonlinearitySpec, t_grid: &[f64]) -> Result<ConditionReport> {
    if t_grid.len() < 2 {
        return Err(Error::InvalidArgument("t_grid needs at least two points".into()));
    }
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("t_grid must be positive".into()));
    }
    let mut worst = f64::INFINITY;
    for &t in t_grid {
        let (f, big) = (eval_f(spec, t)?, eval_big_f(spec, t)?);
        if !(big > 0.0) {
            return Err(Error::NotEvaluable(format!("F({t}) = {big} is not positive")));
        }
        worst = worst.min(t * f / big);
    }
    let t0 = t_grid.iter().copied().find(|&t| t >= 1.0).unwrap_or(*t_grid.last().unwrap());
    let mut m0: f64 = 0.0;
    for &t in t_grid.iter().filter(|&&t| t >= t0) {
        let f = spec.f(t);
        if !(f > 0.0) {
            m0 = f64::INFINITY;
            break;
        }
        m0 = m0.max(spec.big_f(t) / f);
    }
    let k = t_grid.len();
    let (ta, tb) = (t_grid[k - 2], t_grid[k - 1]);
    let alpha0_estimate = (spec.f(tb).ln() - spec.f(ta).ln()) / (tb * tb - ta * ta);
    Ok(ConditionReport {
        worst_ar_ratio: worst,
        ar_mu: spec.ar_mu,
        ar_holds: worst >= spec.ar_mu - 1e-9,
        t0,
        m0,
        f_bound_holds: m0.is_finite(),
        alpha0_estimate,
        critical: alpha0_estimate > 0.25,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::grid::build_grid;

    #[test]
    fn exp_critical_values() {
        let s = NonlinearitySpec::exp_critical(0.5, OrderDim::Biharmonic4);
        assert_eq!(eval_f(&s, 0.0).unwrap(), 0.0);
        assert!((eval_f(&s, 1.0).unwrap() - 3.6945280494653).abs() < 1e-10);
        assert!((eval_f(&s, -1.0).unwrap() + 3.6945280494653).abs() < 1e-10);
    }

    #[test]
    fn g_lambda_values() {
        let cfg = |l: f64| ProblemConfig::exp_critical(OrderDim::Biharmonic4, 10.0, l).unwrap();
        assert_eq!(eval_g_lambda(&cfg(1.0), 0.0).unwrap(), 0.0);
        let t: f64 = 1e-4;
        // series: (1/2)(2t⁴ + (4/3)t⁶ + (2/3)t⁸)
        let series = t.powi(4) + 2.0 / 3.0 * t.powi(6) + t.powi(8) / 3.0;
        assert!(((eval_g_lambda(&cfg(1.0), t).unwrap() - series) / series).abs() < 1e-6);
        assert!((eval_g_lambda(&cfg(2.0), 1.0).unwrap() - (1f64.exp().powi(2) - 3.0)).abs() < 1e-12);
        assert!(eval_g_lambda(&cfg(1.0), 7.0).is_err());
    }

    #[test]
    fn potentials() {
        assert_eq!(eval_potential(&Potential::constant(1.0).unwrap(), 7.0), 1.0);
        let g = build_grid(20.0, 512, 4).unwrap();
        let v = Potential::radial(parse_expression("1-0.4*exp(-t^2)").unwrap(), &g).unwrap();
        assert!((eval_potential(&v, 0.0) - 0.6).abs() < 1e-15);
        assert!(eval_potential(&v, 20.0) >= 1.0 - 1e-6);
        assert!(v.is_trapping());
        assert!((v.v0() - 0.6).abs() < 1e-12);
        assert!(Potential::constant(-1.0).is_err());
        assert!(!Potential::radial(parse_expression("1+0.4*exp(-t^2)").unwrap(), &g).unwrap().is_trapping());
        assert!(Potential::radial(parse_expression("t-1").unwrap(), &g).is_err());
    }

    #[test]
    fn lambda_hypothesis() {
        assert!(ProblemConfig::exp_critical(OrderDim::Biharmonic4, 1.0, 1.0).is_err());
        assert!(ProblemConfig::exp_critical(OrderDim::Biharmonic4, 1.0, 0.5).is_ok());
        let c = ProblemConfig::exp_critical(OrderDim::Laplace2, 1.0, 0.5).unwrap();
        assert!((c.adams_beta - 4.0 * PI).abs() < 1e-15);
        assert_eq!(c.nonlinearity.alpha0, 1.0);
    }

    #[test]
    fn conditions_for_presets() {
        let grid: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64).collect();
        let r = check_conditions(&NonlinearitySpec::exp_critical(1.0, OrderDim::Biharmonic4), &grid).unwrap();
        assert!(r.worst_ar_ratio > 2.0 && r.worst_ar_ratio < 2.1);
        assert!(r.ar_holds && r.f_bound_holds && r.critical);
        assert!((r.alpha0_estimate - 2.0).abs() < 0.05);
        let r = check_conditions(&NonlinearitySpec::exact_growth(1.0), &grid).unwrap();
        assert!(r.ar_holds && r.f_bound_holds);
        assert!((r.alpha0_estimate - 1.0).abs() < 0.1);
        let sub = NonlinearitySpec::user(parse_expression("2*t").unwrap(), None, 0.0, 2.0).unwrap();
        let r = check_conditions(&sub, &grid).unwrap();
        assert!(!r.critical && r.alpha0_estimate.abs() < 0.05);
    }

    #[test]
    fn user_primitive_matches_simpson() {
        let s = NonlinearitySpec::user(parse_expression("t*exp(t^2)").unwrap(), None, 1.0, 2.0).unwrap();
        for i in 0..=50 {
            let t = 0.1 * i as f64;
            let reference = simpson(|x| s.f(x), 0.0, t, 1e-11 * (1.0 + (t * t).exp()));
            let v = s.big_f(t);
            assert!((v - reference).abs() <= 1e-8 * (1.0 + v.abs()), "t={t}: {v} vs {reference}");
            assert!((v - 0.5 * (t * t).exp_m1()).abs() <= 1e-8 * (1.0 + v.abs()));
        }
        assert!((s.big_f(-1.3) - s.big_f(1.3)).abs() < 1e-10);
    }

    #[test]
    fn exact_growth_derivative_consistent() {
        for theta in [1.0, 3.0] {
            let s = NonlinearitySpec::exact_growth(theta);
            for i in 1..40 {
                let t = 0.1 * i as f64;
                let h = 1e-6;
                let fd = (s.big_f(t + h) - s.big_f(t - h)) / (2.0 * h);
                assert!((fd - s.f(t)).abs() < 1e-6 * (1.0 + s.f(t).abs()));
            }
        }
    }
}
