use std::f64::consts::PI;

use ks_core::biorthogonal::build_family;
use ks_core::modal::gauss_legendre;
use ks_core::spectral::{counting_function, critical_set_check, x_eigenvalue, CrossSection, SpectrumSpec, Verdict};
use proptest::prelude::*;

/// `(j, k, l)` with `k < l` and `2j² + k² + l² = ν` on `a = π`, `Ω_y = (0, π)`.
fn brute_force_collision(nu: i64, jy: usize) -> Option<(usize, usize, usize)> {
    for j in 1..=jy as i64 {
        for k in 1..=11i64 {
            for l in (k + 1)..=11 {
                if 2 * j * j + k * k + l * l == nu {
                    return Some((j as usize, k as usize, l as usize));
                }
            }
        }
    }
    None
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tensor_identity(a in 0.5f64..5.0, b in 0.5f64..4.0, nu in 0.0f64..20.0, k in 1usize..=12, j in 1usize..=12) {
        let s = SpectrumSpec::new(a, nu, CrossSection::Box(vec![b]), 12, 12).unwrap();
        let r = s.rate(k, j).unwrap();
        let kappa = (k as f64 * PI / a).powi(2);
        let m = s.mu(j).unwrap();
        let want = -(kappa + m).powi(2) + nu * (kappa + m);
        prop_assert!((r.lambda_x + r.lambda_y_shift - want).abs() <= 1e-12 * want.abs().max(1.0));
        prop_assert!((r.total - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn criticality_matches_rate_collisions(nu in 0i64..120) {
        let s = SpectrumSpec::from_literals("pi", &nu.to_string(), &["pi"], 8, 4).unwrap();
        match critical_set_check(&s, 8) {
            Verdict::Critical { j, k, l } => {
                prop_assert!(k < l);
                prop_assert_eq!(x_eigenvalue(k, &s, j).unwrap(), x_eigenvalue(l, &s, j).unwrap());
                prop_assert!(brute_force_collision(nu, 4).is_some());
            }
            _ => prop_assert!(brute_force_collision(nu, 4).is_none()),
        }
        let half = SpectrumSpec::from_literals("pi", &format!("{}/2", 2 * nu + 1), &["pi"], 8, 4).unwrap();
        prop_assert_eq!(critical_set_check(&half, 8), Verdict::Clear);
    }

    #[test]
    fn counting_is_monotone_and_right_continuous(
        mut rates in proptest::collection::vec(0.0f64..100.0, 1..30),
        r1 in 0.0f64..120.0,
        dr in 0.0f64..20.0,
    ) {
        prop_assert!(counting_function(&rates, r1) <= counting_function(&rates, r1 + dr));
        rates.sort_by(f64::total_cmp);
        for (i, &x) in rates.iter().enumerate() {
            let at = counting_function(&rates, x);
            prop_assert!(at > i);
            prop_assert_eq!(at, counting_function(&rates, x + 1e-12 * x.max(1.0)));
        }
    }

    #[test]
    fn small_families_against_quadrature(
        raw in proptest::collection::vec(0.5f64..60.0, 1..=4),
        t in 0.3f64..2.0,
    ) {
        let mut e = raw;
        e.sort_by(f64::total_cmp);
        e.dedup_by(|x, y| (*x - *y).abs() < 0.5);
        let fam = build_family(&e, t).unwrap();
        let panels = 400;
        let h = t / panels as f64;
        let (nodes, weights) = gauss_legendre(16, h);
        for m in 0..e.len() {
            for (k, &lk) in e.iter().enumerate() {
                let mut acc = 0.0;
                for p in 0..panels {
                    for (x, w) in nodes.iter().zip(&weights) {
                        let s = p as f64 * h + x;
                        acc += w * (-lk * s).exp() * fam.eval(m, s);
                    }
                }
                let want = if k == m { 1.0 } else { 0.0 };
                prop_assert!((acc - want).abs() <= 1e-8, "m={} k={} moment {}", m, k, acc);
            }
        }
    }
}
