//! Numeric classifiers for the growth conditions
//!
//! ```text
//! lim_{t→∞} t² exp(-t²/K) g(t)      lim_{t→0} t⁻² g(t)
//! ```
//!
//! Both limits are estimated from the trend of `log10 q` against `log10 t`
//! over a tail window of log-spaced probes. Verdicts are evidence only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dimension, RadialField};
use crate::moser::Profile;

/// Fraction of the probe range (in decades) used as the tail window.
pub const TAIL_FRACTION: f64 = 0.25;
/// Trend threshold for `d log10 q / d log10 t`, per decade.
pub const SLOPE_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitEstimate {
    Finite { value: f64 },
    Infinite,
    Oscillatory,
}

impl LimitEstimate {
    pub fn is_zero(&self) -> bool {
        matches!(self, LimitEstimate::Finite { value } if *value == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, LimitEstimate::Finite { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthClassification {
    #[serde(rename = "K")]
    pub k: f64,
    pub limsup_infinity: LimitEstimate,
    pub limsup_origin: LimitEstimate,
    pub slope_infinity: f64,
    pub slope_origin: f64,
    /// Largest probe at which `g` was finite.
    pub t_max_used: f64,
    pub bounded_verdict: Verdict,
    pub compact_verdict: Verdict,
}

/// `count` log-spaced probes on `[1e-4, t_max]`.
pub fn log_probes(t_max: f64, count: usize) -> Vec<f64> {
    let (a, b) = (1e-4f64.log10(), t_max.log10());
    (0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)).collect()
}

/// Default probes: 400 points up to 16 (beyond which `exp(2t²)` overflows).
pub fn default_probes() -> Vec<f64> {
    log_probes(16.0, 400)
}

/// Trend of `y` against `x` on a window: least-squares slope, plus whether
/// the increments change sign often enough to call it oscillatory.
fn trend(x: &[f64], y: &[f64]) -> (f64, bool) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let steps: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let up = steps.iter().filter(|&&d| d > 0.0).count();
    let down = steps.iter().filter(|&&d| d < 0.0).count();
    let quota = steps.len() / 4;
    let span = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    let oscillating = up > quota && down > quota && span > 10.0 * SLOPE_THRESHOLD && slope.abs() <= SLOPE_THRESHOLD * 10.0;
    (slope, oscillating)
}

/// `towards` is +1 when the limit is approached with increasing `t`.
fn estimate(logt: &[f64], logq: &[f64], q_edge: f64, towards: f64) -> (LimitEstimate, f64) {
    if logq.iter().all(|v| *v == f64::NEG_INFINITY) {
        return (LimitEstimate::Finite { value: 0.0 }, f64::NEG_INFINITY);
    }
    if logq.iter().any(|v| !v.is_finite()) {
        // g vanishes at some probes but not all
        return (LimitEstimate::Oscillatory, f64::NAN);
    }
    let (slope, osc) = trend(logt, logq);
    let s = towards * slope;
    let est = if osc {
        LimitEstimate::Oscillatory
    } else if s > SLOPE_THRESHOLD {
        LimitEstimate::Infinite
    } else if s < -SLOPE_THRESHOLD {
        LimitEstimate::Finite { value: 0.0 }
    } else {
        LimitEstimate::Finite { value: q_edge }
    };
    (est, s)
}

pub fn classify_growth(g: &dyn Fn(f64) -> f64, k: f64, t_probe: &[f64]) -> Result<GrowthClassification> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument("K must be positive".into()));
    }
    if t_probe.len() < 16 || t_probe.iter().any(|&t| !(t > 0.0)) || t_probe.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("t_probe must be at least 16 increasing positive values".into()));
    }
    let mut ts = Vec::with_capacity(t_probe.len());
    let mut gs = Vec::with_capacity(t_probe.len());
    for &t in t_probe {
        let v = g(t);
        if !v.is_finite() {
            break;
        }
        if v < 0.0 {
            return Err(Error::NotEvaluable(format!("g({t}) = {v} is negative")));
        }
        ts.push(t);
        gs.push(v);
    }
    if ts.len() < 16 {
        return Err(Error::NotEvaluable("g overflows on most of the probe range".into()));
    }
    let logt: Vec<f64> = ts.iter().map(|t| t.log10()).collect();
    let span = logt[logt.len() - 1] - logt[0];
    let window = span * TAIL_FRACTION;

    let lo: Vec<usize> = (0..ts.len()).filter(|&i| logt[i] <= logt[0] + window).collect();
    let hi: Vec<usize> = (0..ts.len()).filter(|&i| logt[i] >= logt[ts.len() - 1] - window).collect();

    let q0 = |i: usize| gs[i] / (ts[i] * ts[i]);
    // log10 of t² exp(-t²/K) g(t), kept in logs so the exponential never overflows
    let lq_inf = |i: usize| (2.0 * ts[i].ln() - ts[i] * ts[i] / k + gs[i].ln()) / std::f64::consts::LN_10;

    let (o_x, o_y): (Vec<f64>, Vec<f64>) = lo.iter().map(|&i| (logt[i], q0(i).log10())).unzip();
    let (origin, slope_origin) = estimate(&o_x, &o_y, q0(lo[0]), -1.0);
    let (i_x, i_y): (Vec<f64>, Vec<f64>) = hi.iter().map(|&i| (logt[i], lq_inf(i))).unzip();
    let last = *hi.last().unwrap();
    let (infinity, slope_infinity) = estimate(&i_x, &i_y, 10f64.powf(lq_inf(last)), 1.0);

    let both = [origin, infinity];
    let bounded_verdict = if both.iter().any(|l| matches!(l, LimitEstimate::Infinite)) {
        Verdict::Fails
    } else if both.iter().all(|l| l.is_finite()) {
        Verdict::Holds
    } else {
        Verdict::Inconclusive
    };
    let compact_verdict = if both.iter().all(|l| l.is_zero()) {
        Verdict::Holds
    } else if both.iter().any(|l| matches!(l, LimitEstimate::Infinite) || (l.is_finite() && !l.is_zero())) {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    };
    Ok(GrowthClassification {
        k,
        limsup_infinity: infinity,
        limsup_origin: origin,
        slope_infinity,
        slope_origin,
        t_max_used: *ts.last().unwrap(),
        bounded_verdict,
        compact_verdict,
    })
}

/// A trial function for [`bounded_functional_probe`]: either samples on a
/// grid or an exact piecewise profile.
pub enum Trial<'a> {
    Field(&'a RadialField),
    Exact(&'a Profile),
}

impl Trial<'_> {
    fn dimension(&self) -> Dimension {
        match self {
            Trial::Field(u) => u.grid().dimension(),
            Trial::Exact(p) => p.dimension(),
        }
    }

    fn l2_sq(&self) -> f64 {
        match self {
            Trial::Field(u) => u.grid().inner(u.values(), u.values()),
            Trial::Exact(p) => p.l2_sq(),
        }
    }

    fn lap_sq(&self) -> f64 {
        match self {
            Trial::Field(u) => {
                let l = u.grid().laplacian_values(u.values());
                u.grid().inner(&l, &l)
            }
            Trial::Exact(p) => p.lap_l2_sq(),
        }
    }

    fn integral(&self, g: &dyn Fn(f64) -> f64) -> f64 {
        match self {
            Trial::Field(u) => u.grid().weights().iter().zip(u.values()).map(|(w, &x)| w * g(x)).sum(),
            Trial::Exact(p) => p.integral(g),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub max_ratio: f64,
    /// `∫g(u)/∫u²` per trial, `None` where the trial was skipped.
    pub ratios: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
}

/// `max ∫g(u) / ∫u²` over trials with `‖Δu‖² ≤ 32π²K` (n=4).
pub fn bounded_functional_probe(g: &dyn Fn(f64) -> f64, k: f64, trials: &[Trial]) -> Result<ProbeReport> {
    let budget = 32.0 * std::f64::consts::PI.powi(2) * k;
    let mut ratios = Vec::with_capacity(trials.len());
    let mut skipped = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for (i, t) in trials.iter().enumerate() {
        if t.dimension() != Dimension::Four {
            return Err(Error::InvalidArgument("bounded functional probe is posed in R⁴".into()));
        }
        let l2 = t.l2_sq();
        if t.lap_sq() > budget * (1.0 + 1e-12) || !(l2 > 0.0) {
            skipped.push(i);
            ratios.push(None);
            continue;
        }
        let r = t.integral(g) / l2;
        if !r.is_finite() {
            return Err(Error::NotEvaluable(format!("∫g(u) is not finite for trial {i}")));
        }
        max_ratio = max_ratio.max(r);
        ratios.push(Some(r));
    }
    Ok(ProbeReport { max_ratio, ratios, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::expm1_minus_id;

    fn glam(t: f64) -> f64 {
        expm1_minus_id(2.0 * t * t)
    }

    #[test]
    fn g_lambda_shape_against_k() {
        let probes = default_probes();
        let c = classify_growth(&glam, 1.0 / 2.1, &probes).unwrap();
        assert_eq!(c.compact_verdict, Verdict::Holds);
        let c = classify_growth(&glam, 1.0 / 1.9, &probes).unwrap();
        assert_eq!(c.bounded_verdict, Verdict::Fails);
        // t² exp(-2t²) g(t) ~ t², so the boundary K still diverges
        let c = classify_growth(&glam, 0.5, &probes).unwrap();
        assert_eq!(c.limsup_infinity, LimitEstimate::Infinite);
        assert!(c.slope_infinity > 1.5, "{}", c.slope_infinity);
    }

    #[test]
    fn polynomial_and_linear() {
        let probes = default_probes();
        let c = classify_growth(&|t: f64| t.powi(4), 1.0, &probes).unwrap();
        assert_eq!(c.bounded_verdict, Verdict::Holds);
        assert_eq!(c.compact_verdict, Verdict::Holds);
        let c = classify_growth(&|t| t, 1.0, &probes).unwrap();
        assert_eq!(c.limsup_origin, LimitEstimate::Infinite);
        assert_eq!(c.bounded_verdict, Verdict::Fails);
        let c = classify_growth(&|t| t * t, 1.0, &probes).unwrap();
        assert_eq!(c.limsup_origin, LimitEstimate::Finite { value: 1.0 });
        assert_eq!(c.compact_verdict, Verdict::Fails);
        assert_eq!(c.bounded_verdict, Verdict::Holds);
    }

    #[test]
    fn scaling_passes_through() {
        let probes = default_probes();
        let a = classify_growth(&|t| t * t * (1.0 + t), 1.0, &probes).unwrap();
        let b = classify_growth(&|t| 3.0 * t * t * (1.0 + t), 1.0, &probes).unwrap();
        let (LimitEstimate::Finite { value: x }, LimitEstimate::Finite { value: y }) = (a.limsup_origin, b.limsup_origin) else {
            panic!("{a:?}");
        };
        assert!((y - 3.0 * x).abs() < 1e-12 * y);
        assert_eq!(a.bounded_verdict, b.bounded_verdict);
    }

    #[test]
    fn zero_and_bad_input() {
        let probes = default_probes();
        let c = classify_growth(&|_| 0.0, 1.0, &probes).unwrap();
        assert_eq!(c.compact_verdict, Verdict::Holds);
        assert!(classify_growth(&|t| t, 0.0, &probes).is_err());
        assert!(classify_growth(&|_| -1.0, 1.0, &probes).is_err());
        assert!(classify_growth(&|_| f64::NAN, 1.0, &probes).is_err());
    }

    #[test]
    fn probe_of_zero_function() {
        let g = crate::grid::build_grid(10.0, 512, 4).unwrap();
        let u = RadialField::from_fn(g, |r| (-r * r).exp()).unwrap();
        let r = bounded_functional_probe(&|_| 0.0, 1.0, &[Trial::Field(&u)]).unwrap();
        assert_eq!(r.max_ratio, 0.0);
    }
}
