use lognls::{Gausson, NonlinearityModel};
use proptest::prelude::*;

fn model() -> impl Strategy<Value = NonlinearityModel> {
    prop_oneof![
        (0.2f64..20.0, 1usize..=2).prop_map(|(s, d)| NonlinearityModel::pure_log(s, d).unwrap()),
        (0.2f64..20.0, 0.0f64..3.0, 0.0f64..1.0, 1usize..=2).prop_map(|(s, mu, t, d)| {
            let top = 2.0 + 4.0 / d as f64;
            NonlinearityModel::log_plus_power(s, mu, 2.05 + t * (top - 2.1), d).unwrap()
        }),
        (0.0f64..1.0, 0.0f64..1.0, 1usize..=2).prop_map(|(a, b, d)| {
            let top = 2.0 + 4.0 / d as f64;
            NonlinearityModel::double_power(1.05 + 0.9 * a, 2.05 + b * (top - 2.1), d).unwrap()
        }),
    ]
}

fn positive() -> impl Strategy<Value = f64> {
    (-4.0f64..2.5).prop_map(|e| 10f64.powf(e))
}

fn away_from_zero_of_f(m: &NonlinearityModel, s: f64) -> bool {
    let t0 = m.t0();
    !t0.is_finite() || (s - t0).abs() > 1e-6 * t0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quotient_f_over_s_increasing(m in model(), a in positive(), r in 1.001f64..5.0) {
        let b = a * r;
        prop_assert!(m.f(b) / b > m.f(a) / a);
    }

    #[test]
    fn big_f_over_square_increasing(m in model(), a in positive(), r in 1.001f64..5.0) {
        let b = a * r;
        prop_assert!(m.big_f(b) / (b * b) > m.big_f(a) / (a * a));
    }

    #[test]
    fn euler_inequality(m in model(), s in positive()) {
        prop_assume!(away_from_zero_of_f(&m, s));
        prop_assert!(m.f(s) * s > 2.0 * m.big_f(s));
    }

    #[test]
    fn two_point_convexity(m in model(), s in positive(), tau in 0.01f64..0.99) {
        let lhs = m.big_f((1.0 - tau).sqrt() * s) + m.big_f((1.0 + tau).sqrt() * s);
        prop_assert!(lhs > 2.0 * m.big_f(s));
    }

    #[test]
    fn sign_split_is_consistent(m in model(), s in -300.0f64..300.0) {
        let v = m.evaluate(s);
        let scale = 1.0 + v.big_f1.abs() + v.big_f2.abs() + v.f1.abs() + v.f2.abs();
        prop_assert!((v.f - (v.f2 - v.f1)).abs() <= 1e-12 * scale);
        prop_assert!((v.big_f - (v.big_f2 - v.big_f1)).abs() <= 1e-12 * scale);
        prop_assert!(v.big_f1 >= 0.0 && v.big_f2 >= 0.0);
    }

    #[test]
    fn parity(m in model(), s in positive()) {
        prop_assert_eq!(m.f(-s), -m.f(s));
        prop_assert_eq!(m.big_f(-s), m.big_f(s));
    }

    #[test]
    fn truncation_agrees_below_level(m in model(), k in positive(), frac in 0.0f64..1.0) {
        let t = m.truncate(k).unwrap();
        let s = frac * k;
        prop_assert_eq!(t.f(s), m.f(s));
        prop_assert_eq!(t.big_f(s), m.big_f(s));
    }

    #[test]
    fn truncation_lowers_f(m in model(), k in positive(), s in positive()) {
        let t = m.truncate(k).unwrap();
        prop_assert!(t.f(s) <= m.f(s));
    }

    #[test]
    fn truncation_idempotent_above(m in model(), k in positive(), r in 1.0f64..10.0, s in positive()) {
        let once = m.truncate(k).unwrap();
        let twice = once.truncate(k * r).unwrap();
        prop_assert_eq!(twice.f(s), once.f(s));
        prop_assert_eq!(twice.big_f(s), once.big_f(s));
    }

    #[test]
    fn gausson_solves_radial_ode(sigma in 0.2f64..20.0, alpha in 0.01f64..50.0, dim in 1usize..=2, r in 0.0f64..6.0) {
        let g = Gausson::new(sigma, alpha, dim).unwrap();
        let scale = 1.0 + g.amplitude * (sigma + g.lambda.abs() + sigma * r * r);
        prop_assert!(g.ode_residual(r).abs() < 1e-10 * scale, "{}", g.ode_residual(r));
    }
}
