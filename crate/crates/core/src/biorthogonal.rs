//! Minimal-norm biorthogonal families to `{e^{−Λ_k t}}` in `L²(0, T)`.
//!
//! With the Gram matrix `G[k,m] = (1 − e^{−(Λ_k+Λ_m)T})/(Λ_k+Λ_m)` the family
//! `q_m = Σ_k C[m,k] e^{−Λ_k t}` with `C = G⁻¹` is biorthogonal and has the
//! smallest norm inside the exponential span. Gram matrices of this kind are
//! totally positive and badly conditioned, so the solve climbs a precision
//! ladder: double precision first, double-double when the condition number
//! exceeds `1e12` or the double residual is too large.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dd::{gfun, Dd, DdMatrix};
use crate::error::{KsError, Result};
use crate::spectral::{shift_c0, x_eigenvalue, SpectrumSpec};

/// Largest supported family size.
pub const K_BIO_MAX: usize = 24;
/// Residual required of every family.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Condition number above which the double-precision solve is skipped.
pub const DOUBLE_COND_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    Double,
    DoubleDouble,
}

/// Family `q_m(t) = Σ_k C[m,k]·e^{−Λ_k t}` on `[0, T]`.
#[derive(Clone, Debug)]
pub struct BiorthogonalFamily {
    exponents: Vec<Dd>,
    horizon: f64,
    coeffs: DdMatrix,
    residual_max: f64,
    gram_condition: f64,
    precision: Precision,
}

#[derive(Serialize)]
struct FamilyJson<'a> {
    exponents: Vec<f64>,
    #[serde(rename = "T")]
    t: f64,
    coeffs: Vec<Vec<f64>>,
    residual_max: f64,
    gram_condition: f64,
    precision: &'a Precision,
}

impl BiorthogonalFamily {
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> Vec<f64> {
        self.exponents.iter().map(|e| e.to_f64()).collect()
    }

    pub fn exponents_dd(&self) -> &[Dd] {
        &self.exponents
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn residual_max(&self) -> f64 {
        self.residual_max
    }

    pub fn gram_condition(&self) -> f64 {
        self.gram_condition
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn coeffs_dd(&self) -> &DdMatrix {
        &self.coeffs
    }

    pub fn coeffs(&self) -> DMatrix<f64> {
        self.coeffs.to_f64()
    }

    /// `q_m(t)`, 0-based `m`.
    pub fn eval(&self, m: usize, t: f64) -> f64 {
        (0..self.len())
            .map(|k| self.coeffs.get(m, k) * (-(self.exponents[k] * t)).exp())
            .sum::<Dd>()
            .to_f64()
    }

    /// Exponential-sum coefficients of `Σ_m targets_m q_m`.
    pub fn combine(&self, targets: &[Dd]) -> Vec<Dd> {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|m| targets[m] * self.coeffs.get(m, i)).sum()).collect()
    }

    /// `∫₀ᵀ e^{−Λ_k t} h(t) dt` for `h = Σ_i c_i e^{−Λ_i t}`.
    pub fn moments_of(&self, c: &[Dd]) -> Vec<Dd> {
        let g = gram_dd_unchecked(&self.exponents, self.horizon);
        g.mul_vec(c)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let c = self.coeffs();
        serde_json::to_value(FamilyJson {
            exponents: self.exponents(),
            t: self.horizon,
            coeffs: (0..c.nrows()).map(|r| c.row(r).iter().cloned().collect()).collect(),
            residual_max: self.residual_max,
            gram_condition: self.gram_condition,
            precision: &self.precision,
        })
        .expect("family serializes")
    }
}

fn validate(exponents: &[Dd], t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(KsError::InvalidInput(format!("horizon must be positive, got {t}")));
    }
    for (i, e) in exponents.iter().enumerate() {
        if !(e.hi > 0.0) || !e.is_finite() {
            return Err(KsError::InvalidInput(format!("exponent {} must be positive, got {}", i + 1, e)));
        }
    }
    for i in 0..exponents.len() {
        for m in i + 1..exponents.len() {
            let d = (exponents[i] - exponents[m]).abs().to_f64();
            if d <= 1e-12 * exponents[i].to_f64().max(exponents[m].to_f64()) {
                return Err(KsError::DuplicateRate { index: m + 1 });
            }
        }
    }
    Ok(())
}

fn gram_dd_unchecked(exponents: &[Dd], t: f64) -> DdMatrix {
    let n = exponents.len();
    let mut g = DdMatrix::zeros(n);
    for k in 0..n {
        for m in k..n {
            let v = gfun(exponents[k] + exponents[m], t);
            g.set(k, m, v);
            g.set(m, k, v);
        }
    }
    g
}

/// Gram matrix of the exponentials in double precision.
pub fn gram_matrix(exponents: &[f64], t: f64) -> Result<DMatrix<f64>> {
    let e: Vec<Dd> = exponents.iter().map(|&x| Dd::new(x)).collect();
    validate(&e, t)?;
    Ok(gram_dd_unchecked(&e, t).to_f64())
}

/// Gram matrix of the exponentials in double-double precision.
pub fn gram_matrix_dd(exponents: &[Dd], t: f64) -> Result<DdMatrix> {
    validate(exponents, t)?;
    Ok(gram_dd_unchecked(exponents, t))
}

fn lambda_max(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn residual(g: &DdMatrix, c: &DdMatrix) -> f64 {
    let n = g.n;
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for col in 0..n {
            let mut s: Dd = (0..n).map(|k| g.get(r, k) * c.get(col, k)).sum();
            if r == col {
                s -= Dd::ONE;
            }
            worst = worst.max(s.abs().to_f64());
        }
    }
    worst
}

pub fn build_family(exponents: &[f64], t: f64) -> Result<BiorthogonalFamily> {
    let e: Vec<Dd> = exponents.iter().map(|&x| Dd::new(x)).collect();
    build_family_dd(&e, t)
}

/// Builds the family for exponents carried in double-double precision.
pub fn build_family_dd(exponents: &[Dd], t: f64) -> Result<BiorthogonalFamily> {
    validate(exponents, t)?;
    let n = exponents.len();
    if n == 0 || n > K_BIO_MAX {
        return Err(KsError::InvalidInput(format!("family size {n} outside 1..={K_BIO_MAX}")));
    }
    let g_dd = gram_dd_unchecked(exponents, t);
    let g64 = g_dd.to_f64();
    let g_max = lambda_max(&g64);

    if let Some(chol) = g64.clone().cholesky() {
        let c64 = chol.inverse();
        let cond = g_max * lambda_max(&c64);
        if cond.is_finite() && cond <= DOUBLE_COND_LIMIT {
            let mut c = DdMatrix::zeros(n);
            for r in 0..n {
                for col in 0..n {
                    c.set(r, col, Dd::new(c64[(r, col)]));
                }
            }
            let res = residual(&g_dd, &c);
            if res <= RESIDUAL_TOL {
                return Ok(BiorthogonalFamily {
                    exponents: exponents.to_vec(),
                    horizon: t,
                    coeffs: c,
                    residual_max: res,
                    gram_condition: cond,
                    precision: Precision::Double,
                });
            }
        }
    }

    let lu = g_dd.lu().ok_or(KsError::IllConditioned { condition: f64::INFINITY, residual: f64::INFINITY })?;
    let inv = lu.inverse();
    // The inverse of a symmetric matrix is symmetric; average out rounding asymmetry.
    let mut c = DdMatrix::zeros(n);
    for r in 0..n {
        for col in 0..n {
            c.set(r, col, (inv.get(r, col) + inv.get(col, r)).mul_pow2(0.5));
        }
    }
    let cond = g_max * lambda_max(&c.to_f64());
    let res = residual(&g_dd, &c);
    if !(res <= RESIDUAL_TOL) {
        return Err(KsError::IllConditioned { condition: cond, residual: res });
    }
    Ok(BiorthogonalFamily {
        exponents: exponents.to_vec(),
        horizon: t,
        coeffs: c,
        residual_max: res,
        gram_condition: cond,
        precision: Precision::DoubleDouble,
    })
}

/// `‖q_m‖_{L²(0,T)} = √(C[m,:]·G·C[m,:]ᵀ)`, 0-based `m`.
pub fn family_norm(family: &BiorthogonalFamily, m: usize) -> f64 {
    let g = gram_dd_unchecked(&family.exponents, family.horizon);
    let n = family.len();
    let row: Vec<Dd> = (0..n).map(|k| family.coeffs.get(m, k)).collect();
    let gr = g.mul_vec(&row);
    let q: Dd = row.iter().zip(&gr).map(|(a, b)| *a * *b).sum();
    q.abs().sqrt().to_f64()
}

/// Exponents `−λ_x(k, j)` for `k = 1..=count`, with the positivity shift
/// applied when the slice lies below `n₀` or has a nonpositive exponent.
pub fn slice_exponents(spec: &SpectrumSpec, j: usize, count: usize, shift_case: bool) -> Result<(Vec<f64>, f64)> {
    let e: Vec<f64> = (1..=count).map(|k| x_eigenvalue(k, spec, j).map(|l| -l)).collect::<Result<_>>()?;
    let needs = shift_case || e.iter().any(|&x| x <= 0.0);
    let c0 = if needs { shift_c0(&e) } else { 0.0 };
    Ok((e, c0))
}

/// One row of the cost table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostSample {
    pub t: f64,
    pub k: usize,
    pub exponent: f64,
    pub norm: f64,
}

/// Least-squares line `y ≈ intercept + slope·x`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub rms_residual: f64,
}

pub fn fit_line(pts: &[(f64, f64)]) -> LineFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rms = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    LineFit { intercept, slope, rms_residual: rms }
}

/// Diagnostic fits of the family norms.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostFit {
    pub theta: f64,
    pub samples: Vec<CostSample>,
    /// `log‖q_k‖` against `Λ_k^θ + T^{−θ/(1−θ)}` over all samples.
    pub joint: LineFit,
    /// Per-horizon fits of `log‖q_k‖` against `Λ_k^θ`.
    pub per_horizon: Vec<(f64, LineFit)>,
}

pub fn cost_fit(spec: &SpectrumSpec, j: usize, t_grid: &[f64], k: usize) -> Result<CostFit> {
    let theta = 0.25;
    let n0 = crate::spectral::n0_index(spec).unwrap_or(usize::MAX);
    let (e, c0) = slice_exponents(spec, j, k, j < n0)?;
    let shifted: Vec<f64> = e.iter().map(|x| x + c0).collect();
    let mut samples = Vec::new();
    let mut joint = Vec::new();
    let mut per_horizon = Vec::new();
    for &t in t_grid {
        let fam = build_family(&shifted, t)?;
        let mut pts = Vec::new();
        for m in 0..k {
            let norm = family_norm(&fam, m);
            let x = shifted[m].powf(theta);
            samples.push(CostSample { t, k: m + 1, exponent: shifted[m], norm });
            joint.push((x + t.powf(-theta / (1.0 - theta)), norm.ln()));
            pts.push((x, norm.ln()));
        }
        per_horizon.push((t, fit_line(&pts)));
    }
    Ok(CostFit { theta, samples, joint: fit_line(&joint), per_horizon })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_examples() {
        let g = gram_matrix(&[1.0], 50.0).unwrap();
        assert!((g[(0, 0)] - 0.5).abs() < 1e-20);
        let g = gram_matrix(&[1.0, 2.0], 1.0).unwrap();
        assert!((g[(0, 1)] - (1.0 - (-3f64).exp()) / 3.0).abs() < 1e-16);
        assert!(matches!(gram_matrix(&[1.0, 1.0], 1.0), Err(KsError::DuplicateRate { index: 2 })));
    }

    #[test]
    fn single_exponential_family() {
        let lam = 3.0;
        let t = 0.7;
        let f = build_family(&[lam], t).unwrap();
        let want = 2.0 * lam / (1.0 - (-2.0 * lam * t).exp());
        assert!((f.coeffs()[(0, 0)] - want).abs() < 1e-13 * want);
        let f = build_family(&[1.0], 50.0).unwrap();
        assert!((family_norm(&f, 0) - 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn small_family_residual() {
        let f = build_family(&[1.0, 16.0, 81.0, 256.0], 1.0).unwrap();
        assert!(f.residual_max() <= 1e-10);
    }

    #[test]
    fn ladder_switches_precision() {
        let e: Vec<f64> = (1..=16).map(|k| (k as f64).powi(4)).collect();
        let f = build_family(&e, 0.5).unwrap();
        assert_eq!(f.precision(), Precision::DoubleDouble);
        assert!(f.gram_condition() > 1e12);
        assert!(f.residual_max() <= 1e-8);
        let f = build_family(&e[..4], 0.5).unwrap();
        assert_eq!(f.precision(), Precision::Double);
    }

    #[test]
    fn norms_grow_with_k() {
        let e: Vec<f64> = (1..=10).map(|k| (k as f64).powi(4)).collect();
        let f = build_family(&e, 0.5).unwrap();
        let norms: Vec<f64> = (0..10).map(|m| family_norm(&f, m)).collect();
        // The last members of a truncated family are cheaper than the bulk.
        for w in norms[..8].windows(2) {
            assert!(w[1] > w[0]);
        }
        let pts: Vec<(f64, f64)> = e.iter().zip(&norms).map(|(l, n)| (l.powf(0.25), n.ln())).collect();
        assert!(fit_line(&pts).slope > 0.0);
    }

    #[test]
    fn appending_an_exponent_never_lowers_norms() {
        let e: Vec<f64> = (1..=9).map(|k| (k as f64).powi(4) + 2.0 * (k as f64).powi(2)).collect();
        let small = build_family(&e[..8], 0.5).unwrap();
        let big = build_family(&e, 0.5).unwrap();
        for m in 0..8 {
            assert!(family_norm(&big, m) >= family_norm(&small, m) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn scale_covariance() {
        let e = [1.0, 5.0, 14.0, 30.0];
        let f = build_family(&e, 1.0).unwrap();
        let s = 2.0;
        let es: Vec<f64> = e.iter().map(|x| x * s).collect();
        let g = build_family(&es, 1.0 / s).unwrap();
        let g0 = gram_matrix(&e, 1.0).unwrap();
        let g1 = gram_matrix(&es, 1.0 / s).unwrap();
        assert!((g1 - g0 / s).abs().max() < 1e-15);
        for m in 0..4 {
            let a = family_norm(&f, m).powi(2) * s;
            let b = family_norm(&g, m).powi(2);
            assert!((a - b).abs() < 1e-9 * b);
        }
    }

    #[test]
    fn permutation_invariance_of_norms() {
        let e = [1.0, 16.0, 81.0, 256.0];
        let p = [81.0, 1.0, 256.0, 16.0];
        let f = build_family(&e, 1.0).unwrap();
        let g = build_family(&p, 1.0).unwrap();
        assert!((family_norm(&f, 2) - family_norm(&g, 0)).abs() < 1e-10 * family_norm(&f, 2));
    }
}
