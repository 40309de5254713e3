//! Internal control through a Dirac mass at `x₀`.
//!
//! The gain of mode `k` is `√(2/a)·sin(kπθ)` with `θ = x₀/a`. Null control is
//! possible for `T > T₀(θ) = limsup −log|sin(kπθ)|/(k⁴π⁴/a⁴)`; this module
//! estimates that quantity on a finite scan, synthesizes controls above it and
//! tabulates blow-up witnesses below it.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biorthogonal::Precision;
use crate::control_1d::{targets_from_state, MomentFamily};
use crate::dd::Dd;
use crate::error::{KsError, Result};
use crate::exact::parse_rational;
use crate::signal::{ControlKind, ControlSignal, ExpSegment};
use crate::spectral::{critical_set_check, n0_index, SpectrumSpec};

/// Default scan depth.
pub const DEFAULT_K_MAX: usize = 10_000;
/// Relative margin required above the estimated minimal time.
pub const TIME_MARGIN: f64 = 0.1;
/// Largest Liouville partial sum handled exactly.
pub const LIOUVILLE_MAX_TERMS: u32 = 8;

/// Position `θ = x₀/a` of the actuator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PointValue {
    Rational { p: i64, q: i64 },
    /// Decimal literal, read to double-double accuracy.
    Real { value: String },
    /// Root of `Σ c_i θ^i` in `(0, 1)`, `root` counting from 0 in ascending order.
    Algebraic { coeffs: Vec<i64>, root: usize },
    /// `Σ_{n=1}^{terms} base^{−n!}`.
    Liouville { base: u32, terms: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub x0_over_a: PointValue,
    pub k_max: usize,
}

impl PointSpec {
    pub fn new(x0_over_a: PointValue) -> Self {
        PointSpec { x0_over_a, k_max: DEFAULT_K_MAX }
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }
}

/// `θ` in a form that gives `kθ mod 1` accurately.
#[derive(Clone, Debug)]
pub enum Theta {
    Approx(Dd),
    Exact(BigRational),
}

fn rational_to_dd(r: &BigRational) -> Dd {
    let hi = r.to_f64().unwrap_or(f64::NAN);
    let rest = r - BigRational::from_float(hi).unwrap_or_else(BigRational::zero);
    Dd::sum(hi, rest.to_f64().unwrap_or(0.0))
}

fn horner_dd(coeffs: &[i64], x: Dd) -> (Dd, Dd) {
    let mut p = Dd::ZERO;
    let mut dp = Dd::ZERO;
    for &c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + c as f64;
    }
    (p, dp)
}

fn horner(coeffs: &[i64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c as f64)
}

fn rational_root(coeffs: &[i64], root: f64) -> Option<(i64, i64)> {
    let lead = coeffs.iter().rev().find(|&&c| c != 0)?.unsigned_abs() as i64;
    for q in 1..=lead {
        if lead % q != 0 {
            continue;
        }
        let p = (root * q as f64).round() as i64;
        let r = BigRational::new(p.into(), q.into());
        let mut acc = BigRational::zero();
        for &c in coeffs.iter().rev() {
            acc = acc * &r + BigRational::from_integer(c.into());
        }
        if acc.is_zero() {
            let g = p.gcd(&q);
            return Some((p / g, q / g));
        }
    }
    None
}

fn algebraic_root(coeffs: &[i64], index: usize) -> Result<Dd> {
    if coeffs.len() < 2 || coeffs.iter().all(|&c| c == 0) {
        return Err(KsError::InvalidInput("polynomial must have degree at least 1".into()));
    }
    let n = 1 << 14;
    let mut roots = Vec::new();
    let mut prev = horner(coeffs, 0.0);
    for i in 1..n {
        let x = i as f64 / n as f64;
        let v = horner(coeffs, x);
        if v == 0.0 {
            roots.push(x);
        } else if prev != 0.0 && v.signum() != prev.signum() {
            let (mut lo, mut hi) = ((i - 1) as f64 / n as f64, x);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if horner(coeffs, mid).signum() == horner(coeffs, lo).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = v;
    }
    let r = *roots.get(index).ok_or_else(|| {
        KsError::InvalidInput(format!("polynomial has {} roots in (0,1), index {index} requested", roots.len()))
    })?;
    if let Some((p, q)) = rational_root(coeffs, r) {
        return Err(KsError::RationalPoint { p, q, p_mode: q as u64 });
    }
    let mut x = Dd::new(r);
    for _ in 0..4 {
        let (p, dp) = horner_dd(coeffs, x);
        if dp.hi == 0.0 {
            break;
        }
        x = x - p / dp;
    }
    Ok(x)
}

impl Theta {
    pub fn resolve(v: &PointValue) -> Result<Theta> {
        let theta = match v {
            PointValue::Rational { p, q } => {
                if *q <= 0 {
                    return Err(KsError::InvalidInput("denominator must be positive".into()));
                }
                let g = p.gcd(q);
                let (p, q) = (p / g, q / g);
                if !(p > 0 && p < q) {
                    return Err(KsError::InvalidInput("x0/a must lie in (0, 1)".into()));
                }
                return Err(KsError::RationalPoint { p, q, p_mode: q as u64 });
            }
            PointValue::Real { value } => Theta::Approx(rational_to_dd(&parse_rational(value)?)),
            PointValue::Algebraic { coeffs, root } => Theta::Approx(algebraic_root(coeffs, *root)?),
            PointValue::Liouville { base, terms } => {
                if *base < 2 || *terms == 0 || *terms > LIOUVILLE_MAX_TERMS {
                    return Err(KsError::InvalidInput(format!(
                        "Liouville constant needs base ≥ 2 and 1..={LIOUVILLE_MAX_TERMS} terms"
                    )));
                }
                let mut s = BigRational::zero();
                let mut fact: u32 = 1;
                for n in 1..=*terms {
                    fact *= n;
                    let den = num_traits::pow(BigInt::from(*base), fact as usize);
                    s += BigRational::new(BigInt::one(), den);
                }
                Theta::Exact(s)
            }
        };
        let f = theta.to_f64();
        if !(f > 0.0 && f < 1.0) {
            return Err(KsError::InvalidInput(format!("x0/a = {f} must lie in (0, 1)")));
        }
        Ok(theta)
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Theta::Approx(d) => d.to_f64(),
            Theta::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
        }
    }

    /// Distance of `kθ` to the nearest integer and the parity of `⌊kθ⌋`.
    pub fn reduce(&self, k: u64) -> (f64, bool) {
        match self {
            Theta::Approx(t) => {
                let kf = k as f64;
                let x = Dd::prod(kf, t.hi) + t.lo * kf;
                let mut fl = x.hi.floor();
                let mut f = x - fl;
                if f.hi < 0.0 {
                    fl -= 1.0;
                    f += 1.0;
                }
                let d = if f.hi > 0.5 { (Dd::ONE - f).to_f64() } else { f.to_f64() };
                (d, (fl as i64).rem_euclid(2) == 1)
            }
            Theta::Exact(r) => {
                let num = r.numer() * BigInt::from(k);
                let den = r.denom();
                let (fl, rem) = num.div_rem(den);
                let other = den - &rem;
                let near = if rem <= other { rem } else { other };
                let d = BigRational::new_raw(near, den.clone()).to_f64().unwrap_or(0.0);
                (d, fl.is_odd())
            }
        }
    }

    /// `sin(kπθ)` from the reduced argument.
    pub fn sin_k(&self, k: u64) -> f64 {
        // sin(π(n + f)) = (−1)^n sin(πf) with f ∈ [0, 1).
        match self {
            Theta::Approx(t) => {
                let kf = k as f64;
                let x = Dd::prod(kf, t.hi) + t.lo * kf;
                let mut fl = x.hi.floor();
                let mut f = x - fl;
                if f.hi < 0.0 {
                    fl -= 1.0;
                    f += 1.0;
                }
                let s = if f.hi > 0.5 { (PI * (Dd::ONE - f).to_f64()).sin() } else { (PI * f.to_f64()).sin() };
                if (fl as i64).rem_euclid(2) == 1 {
                    -s
                } else {
                    s
                }
            }
            Theta::Exact(_) => {
                let (d, odd) = self.reduce(k);
                let s = (PI * d).sin();
                if odd {
                    -s
                } else {
                    s
                }
            }
        }
    }
}

/// Scan of `s_k = −log|sin(kπθ)|/(k⁴π⁴/a⁴)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimalTime {
    pub theta: f64,
    pub k_max: usize,
    /// `s_k` for `k = 1..=k_max`.
    pub s: Vec<f64>,
    /// `max_{k' ≥ k} s_{k'}` over the scanned range.
    pub running_max: Vec<f64>,
    /// `max_{k ≥ k_max/2} s_k`.
    pub t_hat: f64,
    pub argmax: usize,
    /// Liouville input whose tail maximum still exceeds the maximum over `[k_max/4, k_max/2)`.
    pub still_growing: bool,
}

fn s_value(theta: &Theta, k: usize, a: f64) -> f64 {
    let (d, _) = theta.reduce(k as u64);
    let sn = (PI * d).sin();
    let w = (k as f64 * PI / a).powi(4);
    if sn <= 0.0 {
        f64::INFINITY
    } else {
        -sn.ln() / w
    }
}

fn argmax_range(s: &[f64], lo: usize, hi: usize) -> (usize, f64) {
    // 1-based indices, smallest k on ties.
    (lo..=hi).fold((lo, f64::NEG_INFINITY), |b, k| if s[k - 1] > b.1 { (k, s[k - 1]) } else { b })
}

pub fn minimal_time_estimate(point: &PointSpec, a: f64) -> Result<MinimalTime> {
    let theta = Theta::resolve(&point.x0_over_a)?;
    minimal_time_for(&theta, point, a)
}

fn minimal_time_for(theta: &Theta, point: &PointSpec, a: f64) -> Result<MinimalTime> {
    let k_max = point.k_max;
    if k_max < 4 {
        return Err(KsError::InvalidInput("k_max must be at least 4".into()));
    }
    let s: Vec<f64> = (1..=k_max).into_par_iter().map(|k| s_value(theta, k, a)).collect();
    let mut running_max = vec![0.0; k_max];
    let mut m = f64::NEG_INFINITY;
    for k in (0..k_max).rev() {
        m = m.max(s[k]);
        running_max[k] = m;
    }
    let (argmax, t_hat) = argmax_range(&s, (k_max / 2).max(1), k_max);
    let (_, prior) = argmax_range(&s, (k_max / 4).max(1), (k_max / 2).max(2) - 1);
    let still_growing = matches!(point.x0_over_a, PointValue::Liouville { .. }) && t_hat >= prior;
    Ok(MinimalTime { theta: theta.to_f64(), k_max, s, running_max, t_hat, argmax, still_growing })
}

/// `k,s_k` rows.
pub fn sequence_csv(mt: &MinimalTime) -> String {
    let mut out = String::from("k,s_k\n");
    for (i, v) in mt.s.iter().enumerate() {
        out.push_str(&format!("{},{v:e}\n", i + 1));
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointControlReport {
    pub theta: f64,
    pub x0: f64,
    pub horizon: f64,
    pub t_hat: f64,
    pub k_trunc: usize,
    pub shift_c0: f64,
    pub gains: Vec<f64>,
    pub targets: Vec<f64>,
    pub control_norm: f64,
    pub moment_residual_abs: f64,
    pub moment_residual_rel: f64,
    pub family_residual: f64,
    pub gram_condition: f64,
    pub precision: Precision,
}

/// Null control through `δ_{x₀}` for the modes `k ≤ k_trunc` of slice `j`.
pub fn synthesize_point_control(
    u0: &[f64],
    t: f64,
    point: &PointSpec,
    spec: &SpectrumSpec,
    j: usize,
    k_trunc: usize,
) -> Result<(ControlSignal, PointControlReport)> {
    critical_set_check(spec, 4).require_clear()?;
    let theta = Theta::resolve(&point.x0_over_a)?;
    let mt = minimal_time_for(&theta, point, spec.a)?;
    if t <= (1.0 + TIME_MARGIN) * mt.t_hat {
        return Err(KsError::BelowMinimalTime { t, t_hat: mt.t_hat });
    }
    let rates: Vec<f64> = (1..=k_trunc).map(|k| spec.lambda_x(k, j)).collect::<Result<_>>()?;
    let n0 = n0_index(spec).unwrap_or(usize::MAX);
    let fam = MomentFamily::new(&rates, t, j < n0)?;
    let gains: Vec<f64> = (1..=k_trunc).map(|k| (2.0 / spec.a).sqrt() * theta.sin_k(k as u64)).collect();
    let mut z = vec![0.0; k_trunc];
    for k in 0..k_trunc.min(u0.len()) {
        z[k] = (rates[k] * t).exp() * u0[k];
    }
    let targets = targets_from_state(&z, &gains)?;
    let terms = fam.terms(&targets);
    let (abs, rel) = fam.residual(&terms, &targets);
    let x0 = theta.to_f64() * spec.a;
    let seg = ExpSegment { start: 0.0, end: t, anchor: t, channels: vec![terms] };
    let q = ControlSignal::analytic(ControlKind::Pointwise1D { x0 }, vec![0.0, t], 1, vec![seg])?;
    let report = PointControlReport {
        theta: theta.to_f64(),
        x0,
        horizon: t,
        t_hat: mt.t_hat,
        k_trunc,
        shift_c0: fam.c0,
        gains,
        targets: targets.iter().map(|m| m.to_f64()).collect(),
        control_norm: q.l2_norm(),
        moment_residual_abs: abs,
        moment_residual_rel: rel,
        family_residual: fam.family.residual_max(),
        gram_condition: fam.family.gram_condition(),
        precision: fam.family.precision(),
    };
    Ok((q, report))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessRow {
    pub k: usize,
    pub s_k: f64,
    pub sin_abs: f64,
    pub rate: f64,
    /// `log₁₀(e^{2λ_k T}/sin²(kπθ))`.
    pub log10_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub theta: f64,
    pub horizon: f64,
    pub t_hat: f64,
    /// Best-approximation denominators `k` (record small `‖kθ‖`) with `s_k > T`.
    pub rows: Vec<WitnessRow>,
    pub monotone: bool,
    pub max_log10_ratio: f64,
}

/// Blow-up of the observability ratio along the near-resonant `k` for `T < T̂₀`.
pub fn negative_certificate(point: &PointSpec, spec: &SpectrumSpec, j: usize, t: f64) -> Result<Witness> {
    let theta = Theta::resolve(&point.x0_over_a)?;
    let mt = minimal_time_for(&theta, point, spec.a)?;
    let mut best = f64::INFINITY;
    let mut rows = Vec::new();
    for k in 1..=point.k_max {
        let (d, _) = theta.reduce(k as u64);
        if d >= best {
            continue;
        }
        best = d;
        let s_k = mt.s[k - 1];
        if s_k <= t {
            continue;
        }
        let sin_abs = (PI * d).sin();
        let rate = spec.lambda_x(k, j)?;
        let log10_ratio = (2.0 * rate * t - 2.0 * sin_abs.ln()) / std::f64::consts::LN_10;
        rows.push(WitnessRow { k, s_k, sin_abs, rate, log10_ratio });
    }
    if rows.is_empty() {
        return Err(KsError::NoWitnessFound { k_max: point.k_max as u64 });
    }
    let monotone = rows.windows(2).all(|w| w[1].log10_ratio > w[0].log10_ratio);
    let max_log10_ratio = rows.iter().map(|r| r.log10_ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(Witness { theta: theta.to_f64(), horizon: t, t_hat: mt.t_hat, rows, monotone, max_log10_ratio })
}
