use std::sync::Arc;

use biharm_core::diagnostics::{classify_growth, default_probes, LimitEstimate};
use biharm_core::functionals::{evaluate_all, nehari_energy_identity_gap};
use biharm_core::grid::integrate;
use biharm_core::model::{eval_g_lambda, NonlinearitySpec, OrderDim, ProblemConfig};
use biharm_core::moser::{moser_profile, moser_profile_with_cap, Cap, MoserParams};
use biharm_core::rearrangement::fourier_rearrange;
use biharm_core::solvers::{constraint_scan, project_nehari};
use biharm_core::{build_grid, RadialField, RadialGrid};
use proptest::prelude::*;

type Bump = (f64, f64, f64);

fn bumps() -> impl Strategy<Value = Vec<Bump>> {
    prop::collection::vec((-1.0f64..1.0, 0.0f64..4.0, 0.4f64..1.5), 1..4)
        .prop_filter("not identically tiny", |b| b.iter().any(|(a, _, _)| a.abs() > 0.05))
}

fn field(grid: &Arc<RadialGrid>, b: &[Bump]) -> RadialField {
    RadialField::from_fn(grid.clone(), |r| b.iter().map(|(a, c, s)| a * (-(r - c).powi(2) / (2.0 * s * s)).exp()).sum())
        .unwrap()
}

fn exp_config(n: usize, lambda: f64) -> ProblemConfig {
    let od = if n == 4 { OrderDim::Biharmonic4 } else { OrderDim::Laplace2 };
    ProblemConfig::exp_critical(od, 1.0, lambda).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scale_law_on_proportional_grids(b in bumps(), s in 0.5f64..2.0) {
        let g = build_grid(20.0, 512, 4).unwrap();
        let gs = build_grid(20.0 * s, 512, 4).unwrap();
        let u = field(&g, &b);
        let us = RadialField::new(gs, u.values().to_vec()).unwrap();
        let cfg = exp_config(4, 0.5);
        let (a, c) = (evaluate_all(&u, &cfg).unwrap(), evaluate_all(&us, &cfg).unwrap());
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
        prop_assert!(rel(c.mass_terms.l2_sq, s.powi(4) * a.mass_terms.l2_sq) < 1e-12);
        prop_assert!(rel(c.mass_terms.lap_l2_sq, a.mass_terms.lap_l2_sq) < 1e-12);
    }

    #[test]
    fn integrate_is_linear_and_monotone(b1 in bumps(), b2 in bumps(), k in -3.0f64..3.0) {
        let g = build_grid(20.0, 256, 4).unwrap();
        let (u, v) = (field(&g, &b1), field(&g, &b2));
        let sum = RadialField::new(g.clone(), u.values().iter().zip(v.values()).map(|(x, y)| x + k * y).collect()).unwrap();
        let lin = integrate(&u) + k * integrate(&v);
        prop_assert!((integrate(&sum) - lin).abs() <= 1e-12 * (integrate(&u).abs() + (k * integrate(&v)).abs() + 1.0));
        let sq = RadialField::new(g.clone(), u.values().iter().map(|x| x * x).collect()).unwrap();
        prop_assert!(integrate(&sq) >= 0.0);
    }

    #[test]
    fn g_lambda_matches_its_closed_form(t in 0.5f64..4.0, lambda in 0.05f64..0.95) {
        let cfg = exp_config(4, lambda);
        let direct = lambda / 2.0 * ((2.0 * t * t).exp() - 1.0) - lambda * t * t;
        let got = eval_g_lambda(&cfg, t).unwrap();
        prop_assert!((got - direct).abs() <= 1e-12 * direct.abs());
    }

    #[test]
    fn g_lambda_is_cancellation_safe(t in 1e-6f64..1e-3, lambda in 0.05f64..0.95) {
        let cfg = exp_config(4, lambda);
        let quartic = lambda * t.powi(4);
        prop_assert!((eval_g_lambda(&cfg, t).unwrap() - quartic).abs() <= 1e-6 * quartic);
    }

    #[test]
    fn exp_critical_is_superquadratic(t in -6.0f64..6.0, lambda in 0.05f64..0.95) {
        for od in [OrderDim::Biharmonic4, OrderDim::Laplace2] {
            let nl = NonlinearitySpec::exp_critical(lambda, od);
            prop_assert!(t * nl.f(t) - 2.0 * nl.big_f(t) >= -1e-14 * (t * nl.f(t)).abs());
        }
    }

    #[test]
    fn nehari_algebra_is_definitional(b in bumps(), lambda in 0.05f64..0.95) {
        let g = build_grid(20.0, 256, 4).unwrap();
        let cfg = exp_config(4, lambda);
        let r = evaluate_all(&field(&g, &b), &cfg).unwrap();
        let m = r.mass_terms;
        let n = m.lap_l2_sq + m.pot_l2_sq - lambda * m.exp_weighted;
        prop_assert!((r.nehari_n - n).abs() <= 1e-10 * (m.lap_l2_sq + m.pot_l2_sq + lambda * m.exp_weighted));
    }

    #[test]
    fn nehari_projection_and_identity(b in bumps(), lambda in 0.05f64..0.95, n in prop::sample::select(vec![2usize, 4])) {
        let g = build_grid(if n == 4 { 20.0 } else { 30.0 }, 256, n).unwrap();
        let cfg = exp_config(n, lambda);
        let u = field(&g, &b);
        let t = project_nehari(&u, &cfg).unwrap();
        let tu = u.scaled(t);
        let r = evaluate_all(&tu, &cfg).unwrap();
        prop_assert!(r.nehari_n.abs() <= 1e-9 * (r.mass_terms.lap_l2_sq + r.mass_terms.pot_l2_sq));
        prop_assert!(nehari_energy_identity_gap(&tu, &cfg).unwrap() <= 1e-8 * (1.0 + r.energy_i.abs()));
    }

    #[test]
    fn pohozaev_has_one_sign_change(b in bumps(), lambda in 0.05f64..0.95) {
        let g = build_grid(20.0, 256, 4).unwrap();
        let scan = constraint_scan(&field(&g, &b), &exp_config(4, lambda), false, 400, 6.0).unwrap();
        prop_assert_eq!(scan.sign_changes, 1);
        prop_assert!(scan.values[0] > 0.0);
    }

    #[test]
    fn moser_profiles_are_c1(b in 2.0f64..12.0, k in 0.5f64..2.0, biharmonic in any::<bool>()) {
        let params = MoserParams::moser(b, k);
        let p = if biharmonic { moser_profile_with_cap(&params, Cap::Biharmonic) } else { moser_profile(&params) }.unwrap();
        for i in 0..p.pieces().len() {
            let [(v0, d0), (v1, d1)] = p.one_sided(i);
            prop_assert!((v0 - v1).abs() <= 1e-10 * (1.0 + v0.abs()));
            prop_assert!((d0 - d1).abs() <= 1e-6 * (1.0 + d0.abs()));
        }
    }

    #[test]
    fn classifier_is_scale_coherent(c in 0.1f64..100.0, p in 3.0f64..6.0) {
        let probes = default_probes();
        let g = |t: f64| t.powf(p);
        let a = classify_growth(&g, 1.0, &probes).unwrap();
        let b = classify_growth(&|t| c * g(t), 1.0, &probes).unwrap();
        prop_assert_eq!(a.bounded_verdict, b.bounded_verdict);
        prop_assert_eq!(a.compact_verdict, b.compact_verdict);
        for (x, y) in [(a.limsup_origin, b.limsup_origin), (a.limsup_infinity, b.limsup_infinity)] {
            if let (LimitEstimate::Finite { value: vx }, LimitEstimate::Finite { value: vy }) = (x, y) {
                prop_assert!((vy - c * vx).abs() <= 1e-9 * (c * vx).abs().max(1e-300));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rearrangement_properties(b in bumps()) {
        let g = build_grid(20.0, 512, 4).unwrap();
        let u = field(&g, &b);
        let c = fourier_rearrange(&u).unwrap().checks;
        prop_assert!(c.plancherel_error <= 1e-6);
        prop_assert!(c.lap_w <= c.lap_u * (1.0 + 1e-6));
        prop_assert!(c.exp_mass_w >= c.exp_mass_u * (1.0 - 1e-4));
    }
}
