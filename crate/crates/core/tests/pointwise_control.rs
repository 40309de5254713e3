use std::f64::consts::PI;

use ks_core::control_1d::verify_null;
use ks_core::pointwise::{
    minimal_time_estimate, negative_certificate, synthesize_point_control, PointSpec, PointValue,
};
use ks_core::signal::ControlSignal;
use ks_core::spectral::{CrossSection, SpectrumSpec};
use ks_core::KsError;

fn silver() -> PointSpec {
    PointSpec::new(PointValue::Algebraic { coeffs: vec![-1, 2, 1], root: 0 })
}

fn liouville() -> PointSpec {
    PointSpec::new(PointValue::Liouville { base: 10, terms: 6 })
}

fn spec() -> SpectrumSpec {
    SpectrumSpec::new(PI, 0.0, CrossSection::Box(vec![PI]), 16, 2).unwrap()
}

#[test]
fn algebraic_point_has_negligible_minimal_time() {
    let mt = minimal_time_estimate(&silver(), PI).unwrap();
    assert!(mt.t_hat <= 1e-3, "{}", mt.t_hat);
    assert_eq!(mt.s.len(), 10_000);
    assert!(mt.running_max.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn rational_point_is_refused() {
    let p = PointSpec::new(PointValue::Rational { p: 1, q: 2 });
    assert!(matches!(minimal_time_estimate(&p, PI), Err(KsError::RationalPoint { p: 1, q: 2, p_mode: 2 })));
    let r = synthesize_point_control(&[1.0], 1.0, &p, &spec(), 1, 4);
    assert!(matches!(r, Err(KsError::RationalPoint { .. })));
}

#[test]
fn truncated_liouville_spike_at_one_hundred() {
    let mt = minimal_time_estimate(&liouville(), PI).unwrap();
    // 100θ = 11.0001…, the closest approach of kθ to an integer beyond k = 9.
    let s100 = mt.s[99];
    assert!((s100 - (-(PI * 1e-4).sin().ln()) / 1e8).abs() < 1e-12 * s100);
    assert!((100..=10_000).all(|k| mt.s[k - 1] <= s100));
    assert!((mt.running_max[99] - s100).abs() == 0.0);
}

#[test]
fn algebraic_point_is_controllable_at_short_and_long_horizons() {
    let s = spec();
    let u0 = [1.0, 1.0];
    let mut norms = Vec::new();
    for &t in &[1.0, 0.5, 0.1] {
        let (q, rep) = synthesize_point_control(&u0, t, &silver(), &s, 1, 8).unwrap();
        assert!(rep.moment_residual_rel <= 1e-8, "{rep:?}");
        let out = verify_null(&u0, &q, t, &s, 1, 8).unwrap();
        assert!(out.final_relative <= 1e-6, "T={t}: {}", out.final_relative);
        norms.push(rep.control_norm);
    }
    assert!(norms[2] > norms[0], "{norms:?}");
}

#[test]
fn zero_data_and_grid_refinement() {
    let s = spec();
    let (q, rep) = synthesize_point_control(&[0.0, 0.0], 0.5, &silver(), &s, 1, 8).unwrap();
    assert_eq!(rep.control_norm, 0.0);
    assert_eq!(q.value(0.25)[0], 0.0);
    let u0 = [0.3, -1.0, 0.2];
    let (q, _) = synthesize_point_control(&u0, 0.5, &silver(), &s, 2, 8).unwrap();
    let fine: Vec<f64> = (0..=400).map(|i| 0.5 * i as f64 / 400.0).collect();
    let refined = ControlSignal::analytic(q.kind.clone(), fine, 1, q.segments().to_vec()).unwrap();
    let a = verify_null(&u0, &q, 0.5, &s, 2, 8).unwrap();
    let b = verify_null(&u0, &refined, 0.5, &s, 2, 8).unwrap();
    assert!((a.final_relative - b.final_relative).abs() <= 1e-10);
}

#[test]
fn below_minimal_time_is_refused_with_a_witness() {
    let s = spec();
    let mt = minimal_time_estimate(&liouville(), PI).unwrap();
    let t = mt.t_hat / 2.0;
    assert!(matches!(
        synthesize_point_control(&[1.0], t, &liouville(), &s, 1, 4),
        Err(KsError::BelowMinimalTime { .. })
    ));
    let w = negative_certificate(&liouville(), &s, 1, t).unwrap();
    assert!(w.monotone);
    assert_eq!(w.rows.last().unwrap().k, 100);
    assert!(w.max_log10_ratio > 6.0);
}

#[test]
fn algebraic_point_has_no_witness_at_desk_horizons() {
    let s = spec();
    for &t in &[0.1, 0.5, 1.0] {
        assert!(matches!(negative_certificate(&silver(), &s, 1, t), Err(KsError::NoWitnessFound { .. })));
    }
}
