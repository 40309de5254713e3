use std::f64::consts::PI;

use ks_core::control_1d::{
    cost_scan, critical_counterexample, synthesize_boundary_control, verify_null,
};
use ks_core::spectral::{CrossSection, SpectrumSpec};
use ks_core::KsError;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(nu: f64) -> SpectrumSpec {
    SpectrumSpec::new(PI, nu, CrossSection::Box(vec![PI]), 16, 4).unwrap()
}

#[test]
fn first_mode_is_nulled() {
    let s = spec(0.0);
    let u0 = [1.0];
    let (q, rep) = synthesize_boundary_control(&u0, 1.0, &s, 1, 8).unwrap();
    assert!(rep.moment_residual_rel <= 1e-8, "{rep:?}");
    let out = verify_null(&u0, &q, 1.0, &s, 1, 8).unwrap();
    assert!(out.final_relative <= 1e-6, "{out:?}");
}

#[test]
fn zero_data_gives_zero_control() {
    let s = spec(1.0);
    let (q, rep) = synthesize_boundary_control(&[0.0; 5], 0.5, &s, 2, 8).unwrap();
    assert_eq!(rep.control_norm, 0.0);
    assert_eq!(q.value(0.2)[0], 0.0);
}

#[test]
fn basis_data_over_the_parameter_grid() {
    for &nu in &[0.0, 1.0, 6.5] {
        let s = spec(nu);
        for j in 1..=3 {
            for &t in &[0.5, 1.0] {
                for k in 0..8 {
                    let mut u0 = vec![0.0; 8];
                    u0[k] = 1.0;
                    let (q, rep) = synthesize_boundary_control(&u0, t, &s, j, 8).unwrap();
                    assert!(rep.moment_residual_rel <= 1e-8, "nu={nu} j={j} t={t} k={k}: {rep:?}");
                    let out = verify_null(&u0, &q, t, &s, j, 8).unwrap();
                    assert!(out.final_relative <= 1e-6, "nu={nu} j={j} t={t} k={k}: {}", out.final_relative);
                }
            }
        }
    }
}

#[test]
fn random_data_and_truncation_order() {
    let s = spec(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let u0: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut finals = Vec::new();
    for &k in &[8, 12] {
        let (q, _) = synthesize_boundary_control(&u0, 0.5, &s, 1, k).unwrap();
        let out = verify_null(&u0, &q, 0.5, &s, 1, k).unwrap();
        assert!(out.final_relative <= 1e-6);
        let common: f64 = out.residuals[..8].iter().map(|x| x * x).sum::<f64>().sqrt() / out.initial_norm;
        finals.push(common);
    }
    assert!(finals[1] <= finals[0].max(1e-12), "{finals:?}");
}

#[test]
fn corrupted_control_is_detected() {
    let s = spec(0.0);
    let u0 = [1.0, 0.5, -0.25];
    let (q, _) = synthesize_boundary_control(&u0, 0.5, &s, 1, 8).unwrap();
    let bad = q.scaled(1.1);
    let out = verify_null(&u0, &bad, 0.5, &s, 1, 8).unwrap();
    assert!(out.final_relative > 1e-3, "{}", out.final_relative);
}

#[test]
fn free_decay_per_mode() {
    let s = spec(0.0);
    let u0 = [1.0, 2.0];
    let q = ks_core::signal::ControlSignal::zero(ks_core::signal::ControlKind::Boundary1D, vec![0.0, 0.3], 1).unwrap();
    let out = verify_null(&u0, &q, 0.3, &s, 1, 2).unwrap();
    for k in 0..2 {
        let want = (s.lambda_x(k + 1, 1).unwrap() * 0.3).exp() * u0[k];
        assert!((out.residuals[k] - want).abs() <= 1e-15 * want);
    }
}

#[test]
fn control_is_linear_in_the_data() {
    let s = spec(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (al, be) = (0.7, -1.3);
    let mix: Vec<f64> = u.iter().zip(&w).map(|(a, b)| al * a + be * b).collect();
    let (qu, _) = synthesize_boundary_control(&u, 0.5, &s, 2, 8).unwrap();
    let (qw, _) = synthesize_boundary_control(&w, 0.5, &s, 2, 8).unwrap();
    let (qm, _) = synthesize_boundary_control(&mix, 0.5, &s, 2, 8).unwrap();
    let times: Vec<f64> = (0..=200).map(|i| 0.5 * i as f64 / 200.0).collect();
    let scale = times.iter().map(|&t| qm.value(t)[0].abs()).fold(0.0, f64::max);
    for &t in &times {
        let lin = al * qu.value(t)[0] + be * qw.value(t)[0];
        assert!((qm.value(t)[0] - lin).abs() <= 1e-10 * scale, "t={t}");
    }
}

#[test]
fn cost_table_shapes() {
    let s = spec(0.0);
    let table = cost_scan(&s, &[1, 2, 3], &[0.25, 0.5, 1.0], 8).unwrap();
    for j in 1..=3 {
        let row: Vec<_> = table.rows.iter().filter(|r| r.j == j).collect();
        for w in row.windows(2) {
            assert!(w[1].cost <= w[0].cost * (1.0 + 1e-9), "j={j}: {} then {}", w[0].cost, w[1].cost);
        }
    }
    // The extra damping −2μ_jκ of higher slices outweighs the growth of the family norms.
    for &t in &[0.25, 0.5, 1.0] {
        let row: Vec<_> = table.rows.iter().filter(|r| r.t == t).collect();
        for w in row.windows(2) {
            assert!(w[1].cost < w[0].cost, "t={t}: {} then {}", w[0].cost, w[1].cost);
        }
    }
    // One-term sum.
    let (_, rep) = synthesize_boundary_control(&[1.0], 0.5, &s, 1, 1).unwrap();
    let single = cost_scan(&s, &[1], &[0.5], 1).unwrap();
    assert!((single.rows[0].cost - rep.control_norm).abs() <= 1e-12 * rep.control_norm);
}

#[test]
fn critical_parameters_are_refused_and_explained() {
    let s = SpectrumSpec::from_literals("pi", "7", &["pi"], 8, 3).unwrap();
    assert!(matches!(
        synthesize_boundary_control(&[1.0], 1.0, &s, 1, 4),
        Err(KsError::CriticalParameter { j: 1, k: 1, l: 2 })
    ));
    let ce = critical_counterexample(&s, 1.0, 1000, Some(1.0)).unwrap();
    assert!(ce.exact && (ce.k0, ce.l0) == (1, 2));
    assert!((ce.rate_k0 - 4.0).abs() < 1e-12 && (ce.rate_l0 - 4.0).abs() < 1e-12);
    assert!(ce.observation_max <= 1e-12, "{}", ce.observation_max);
    assert!(ce.pointwise.as_ref().unwrap().observation_max <= 1e-12);
    assert!((ce.norm_final - 4f64.exp() * ce.norm_initial).abs() <= 1e-12 * ce.norm_final);
    let clear = SpectrumSpec::from_literals("pi", "6.5", &["pi"], 8, 3).unwrap();
    assert!(matches!(critical_counterexample(&clear, 1.0, 10, None), Err(KsError::NotCritical)));
}
