use lognls::analysis::{
    certify_concavity, decay_fit, interaction_scaling_fit, random_admissible_sequence, recurrence_check, EnergyCurve,
};
use lognls::multipeak::{
    gamma0, mass_fractions, rho1_from_template, separation, tail_mass, upsilon, upsilon_with_order, MultiBumpSpec,
    UpsilonConfig,
};
use lognls::{Cutoff, Field, Grid};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid() -> Grid {
    Grid::new(1, 10.0, 0.05).unwrap()
}

/// Two well separated Gaussian peaks of comparable height.
fn pair() -> impl Strategy<Value = (Field, [f64; 2])> {
    (-7.0f64..-3.0, 3.0f64..7.0, 0.3f64..0.6, 0.7f64..1.4).prop_map(|(a, b, w, amp)| {
        let u = Field::from_fn(grid(), |x| {
            (-(x[0] - a).powi(2) / (2.0 * w * w)).exp() + amp * (-(x[0] - b).powi(2) / (2.0 * w * w)).exp()
        });
        (u, [a, b])
    })
}

fn probe(u: &Field) -> UpsilonConfig {
    let r0 = 0.5;
    UpsilonConfig::new(2, r0, rho1_from_template(u, r0, 0.3).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn upsilon_finds_both_peaks((u, c) in pair()) {
        let p = upsilon(&u, &probe(&u)).unwrap();
        prop_assert_eq!(p.len(), 2);
        prop_assert!((p.points[0][0] - c[0]).abs() < 0.1);
        prop_assert!((p.points[1][0] - c[1]).abs() < 0.1);
    }

    #[test]
    fn upsilon_translation_equivariant((u, _) in pair(), cells in -40isize..=40) {
        let cfg = probe(&u);
        let base = upsilon(&u, &cfg).unwrap();
        let moved = upsilon(&u.shift(&[cells]).unwrap(), &cfg).unwrap();
        for (p, q) in base.points.iter().zip(&moved.points) {
            prop_assert!((q[0] - p[0] - cells as f64 * 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn upsilon_ignores_probe_order((u, _) in pair(), seed in any::<u64>()) {
        let cfg = probe(&u);
        let mut order: Vec<usize> = (0..u.grid().len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(upsilon_with_order(&u, &cfg, &order).unwrap(), upsilon(&u, &cfg).unwrap());
    }

    #[test]
    fn mass_fractions_normalized_and_equivariant((u, _) in pair(), t in 0.2f64..3.0) {
        let p = upsilon(&u, &probe(&u)).unwrap();
        let n = mass_fractions(&u, &p, t).unwrap();
        prop_assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut swapped = p.clone();
        swapped.points.reverse();
        let m = mass_fractions(&u, &swapped, t).unwrap();
        prop_assert!((m[0] - n[1]).abs() < 1e-14 && (m[1] - n[0]).abs() < 1e-14);
    }

    #[test]
    fn tail_mass_nonincreasing((u, _) in pair(), r in 0.1f64..4.0, dr in 0.01f64..2.0) {
        let p = upsilon(&u, &probe(&u)).unwrap();
        prop_assert!(tail_mass(&u, &p, r + dr).unwrap() <= tail_mass(&u, &p, r).unwrap());
    }

    #[test]
    fn gamma0_has_exact_mass(s in 0.05f64..0.95, alpha in 0.1f64..5.0, half in 3.0f64..6.0) {
        let template = Field::from_fn(Grid::new(1, 4.0, 0.05).unwrap(), |x| (-x[0] * x[0]).exp());
        let bump = MultiBumpSpec::new(vec![[-half, 0.0], [half, 0.0]], vec![s, 1.0 - s], 1.0, alpha, 1, 2.0).unwrap();
        let u = gamma0(&bump, &template, grid(), Cutoff::none()).unwrap();
        prop_assert!((u.mass() - alpha).abs() <= 1e-12 * alpha);
    }

    #[test]
    fn smoothed_separation_window(pts in prop::collection::vec(-50.0f64..50.0, 2..5)) {
        let points: Vec<[f64; 2]> = pts.iter().map(|&x| [x, 0.0]).collect();
        let (xi, xi1) = separation(&points, 1, None);
        prop_assert!(xi1 <= xi && xi1 >= xi - 1.0);
    }

    #[test]
    fn recurrence_accepts_admissible(seed in any::<u64>(), theta in 1.01f64..5.0, b in 0.0f64..3.0, len in 2usize..100, r1 in 0.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_admissible_sequence(&mut rng, len, theta, b);
        let rep = recurrence_check(&q, r1, theta, b).unwrap();
        prop_assert!(rep.hypothesis_ok && rep.conclusion_ok);
    }

    #[test]
    fn concavity_certifies_closed_form(mut alphas in prop::collection::vec(0.05f64..12.0, 3..8)) {
        alphas.sort_by(f64::total_cmp);
        alphas.dedup_by(|a, b| (*a - *b).abs() < 0.05);
        prop_assume!(alphas.len() >= 3);
        let c = 1.0 + 0.25 * std::f64::consts::PI.ln();
        let curve = EnergyCurve::from_fn(&alphas, |a| a * (c - 0.5 * a.ln())).unwrap();
        prop_assert!(certify_concavity(&curve, 1e-8).unwrap().pass());
    }

    #[test]
    fn decay_fit_is_mirror_symmetric((u, _) in pair(), sigma in 0.5f64..4.0) {
        let a = decay_fit(&u, sigma, (0.5, 2.0)).unwrap();
        let b = decay_fit(&u.mirrored(), sigma, (0.5, 2.0)).unwrap();
        prop_assert!((a.plateau - b.plateau).abs() <= 1e-12 * (1.0 + a.plateau.abs()));
    }

    #[test]
    fn scaling_fit_recovers_synthetic_slope(sigma in 0.5f64..6.0, c in 0.01f64..100.0) {
        let samples: Vec<(f64, f64)> = (2..7).map(|k| {
            let xi = k as f64;
            (xi, c * xi * (-sigma * xi * xi / 8.0).exp())
        }).collect();
        let fit = interaction_scaling_fit(&samples, sigma).unwrap();
        prop_assert!(fit.rel_err < 1e-9);
    }
}
