//! Eigendata of the linearized operator on `(0, a) × Ω_y`.
//!
//! Sine modes `√(2/a)·sin(kπx/a)` in `x` and Dirichlet modes of the box (or an
//! external eigenvalue list) in `y`. The decoupled rate of mode `(k, j)` is
//! `Λ_{k,j} = λ_x(k, j) + λ_y(j)` with
//! `λ_x = −κ² + (ν − 2μ_j)κ`, `κ = (kπ/a)²` and `λ_y = −μ_j² + νμ_j`.

use std::f64::consts::PI;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{KsError, Result};
use crate::exact::{ExactLength, PiQuad};

/// Cross-section description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CrossSection {
    /// Box `Π (0, b_i)` with Dirichlet conditions.
    Box(Vec<f64>),
    /// User-supplied Dirichlet eigenvalues, ascending.
    External(Vec<f64>),
}

/// Exact copies of the inputs, used for critical-set decisions.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactInputs {
    pub a: ExactLength,
    pub nu: BigRational,
    /// Box side lengths; empty for external spectra.
    pub dims: Vec<ExactLength>,
}

/// Domain geometry, parameter ν and truncation orders.
#[derive(Clone, Debug)]
pub struct SpectrumSpec {
    pub a: f64,
    pub nu: f64,
    pub cross_section: CrossSection,
    /// Number of retained x-modes.
    pub k_x: usize,
    /// Number of retained y-modes.
    pub j_y: usize,
    /// Distance to the critical set below which parameters count as near-critical.
    pub crit_tol: f64,
    exact: Option<ExactInputs>,
    mu: Vec<f64>,
    y_modes: Vec<Vec<u64>>,
}

/// Rates of a single tensor mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRate {
    pub k: usize,
    pub j: usize,
    pub lambda_x: f64,
    pub lambda_y_shift: f64,
    pub total: f64,
}

pub const DEFAULT_K_X: usize = 32;
pub const DEFAULT_J_Y: usize = 64;
pub const DEFAULT_CRIT_TOL: f64 = 1e-9;

impl SpectrumSpec {
    pub fn new(a: f64, nu: f64, cross_section: CrossSection, k_x: usize, j_y: usize) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(KsError::InvalidInput(format!("a must be positive, got {a}")));
        }
        if !nu.is_finite() {
            return Err(KsError::InvalidInput("nu must be finite".into()));
        }
        if k_x == 0 || j_y == 0 {
            return Err(KsError::InvalidInput("truncations K_x and J_y must be >= 1".into()));
        }
        let (mu, y_modes) = match &cross_section {
            CrossSection::Box(dims) => {
                if dims.is_empty() || dims.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
                    return Err(KsError::InvalidInput("box dimensions must be positive".into()));
                }
                let bs = y_eigenvalues_box(dims, j_y);
                (bs.values, bs.modes)
            }
            CrossSection::External(list) => {
                if list.len() < j_y {
                    return Err(KsError::InvalidInput(format!(
                        "external spectrum has {} values, J_y = {j_y}",
                        list.len()
                    )));
                }
                if list.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
                    return Err(KsError::InvalidInput("external eigenvalues must be positive".into()));
                }
                if list.windows(2).any(|w| w[1] < w[0]) {
                    return Err(KsError::InvalidInput("external eigenvalues must be nondecreasing".into()));
                }
                (list[..j_y].to_vec(), Vec::new())
            }
        };
        Ok(SpectrumSpec { a, nu, cross_section, k_x, j_y, crit_tol: DEFAULT_CRIT_TOL, exact: None, mu, y_modes })
    }

    /// Builds a box spec from exact literals, e.g. `("pi", "7/1", &["pi"])`.
    pub fn from_literals(a: &str, nu: &str, dims: &[&str], k_x: usize, j_y: usize) -> Result<Self> {
        let a_e = crate::exact::parse_length(a)?;
        let nu_e = crate::exact::parse_rational(nu)?;
        let dims_e = dims.iter().map(|d| crate::exact::parse_length(d)).collect::<Result<Vec<_>>>()?;
        let spec = SpectrumSpec::new(
            a_e.to_f64(),
            num_traits::ToPrimitive::to_f64(&nu_e).unwrap_or(f64::NAN),
            CrossSection::Box(dims_e.iter().map(|d| d.to_f64()).collect()),
            k_x,
            j_y,
        )?;
        spec.with_exact(ExactInputs { a: a_e, nu: nu_e, dims: dims_e })
    }

    pub fn with_exact(mut self, exact: ExactInputs) -> Result<Self> {
        if let CrossSection::Box(d) = &self.cross_section {
            if d.len() != exact.dims.len() {
                return Err(KsError::InvalidInput("exact dims do not match the box".into()));
            }
        } else if !exact.dims.is_empty() {
            return Err(KsError::InvalidInput("exact dims given for an external spectrum".into()));
        }
        self.exact = Some(exact);
        Ok(self)
    }

    pub fn with_crit_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(KsError::InvalidInput("crit_tol must be positive".into()));
        }
        self.crit_tol = tol;
        Ok(self)
    }

    pub fn with_truncation(&self, k_x: usize, j_y: usize) -> Result<Self> {
        let mut s = SpectrumSpec::new(self.a, self.nu, self.cross_section.clone(), k_x, j_y)?;
        s.crit_tol = self.crit_tol;
        s.exact = self.exact.clone();
        Ok(s)
    }

    pub fn exact(&self) -> Option<&ExactInputs> {
        self.exact.as_ref()
    }

    /// Number of cross-section dimensions (`N − 1`).
    pub fn cross_dims(&self) -> usize {
        match &self.cross_section {
            CrossSection::Box(d) => d.len(),
            CrossSection::External(_) => 1,
        }
    }

    /// `μ_j`, 1-based.
    pub fn mu(&self, j: usize) -> Result<f64> {
        if j == 0 || j > self.mu.len() {
            return Err(KsError::IndexOutOfRange { index: j });
        }
        Ok(self.mu[j - 1])
    }

    pub fn mus(&self) -> &[f64] {
        &self.mu
    }

    /// Index tuples of the box modes (empty for external spectra).
    pub fn y_modes(&self) -> &[Vec<u64>] {
        &self.y_modes
    }

    pub fn box_dims(&self) -> Option<&[f64]> {
        match &self.cross_section {
            CrossSection::Box(d) => Some(d),
            CrossSection::External(_) => None,
        }
    }

    /// `λ_y(j) = −μ_j² + νμ_j`.
    pub fn lambda_y(&self, j: usize) -> Result<f64> {
        let m = self.mu(j)?;
        Ok(-(m * m - self.nu * m))
    }

    pub fn lambda_x(&self, k: usize, j: usize) -> Result<f64> {
        x_eigenvalue(k, self, j)
    }

    pub fn rate(&self, k: usize, j: usize) -> Result<ModeRate> {
        let lx = self.lambda_x(k, j)?;
        let ly = self.lambda_y(j)?;
        Ok(ModeRate { k, j, lambda_x: lx, lambda_y_shift: ly, total: lx + ly })
    }

    /// `Λ_{k,j}` as the factored form `−(κ+μ)² + ν(κ+μ)`.
    pub fn total_rate(&self, k: usize, j: usize) -> Result<f64> {
        if k == 0 {
            return Err(KsError::IndexOutOfRange { index: k });
        }
        let s = kappa(k, self.a) + self.mu(j)?;
        Ok(-s * s + self.nu * s)
    }

    /// `K_x × J_y` matrix of total rates.
    pub fn rate_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.k_x, self.j_y, |r, c| self.total_rate(r + 1, c + 1).unwrap())
    }

    /// `√(2/a)·kπ/a`, the derivative of the k-th x-mode at `x = 0`.
    pub fn boundary_weight(&self, k: usize) -> f64 {
        (2.0 / self.a).sqrt() * k as f64 * PI / self.a
    }

    /// `√(2/a)·sin(kπx0/a)`.
    pub fn point_weight(&self, k: usize, x0: f64) -> f64 {
        (2.0 / self.a).sqrt() * (k as f64 * PI * x0 / self.a).sin()
    }

    /// Exact `μ_j` for box cross-sections with exact inputs.
    pub fn mu_exact(&self, j: usize) -> Option<PiQuad> {
        let ex = self.exact.as_ref()?;
        let modes = self.y_modes.get(j.checked_sub(1)?)?;
        let mut s = PiQuad::zero();
        for (m, d) in modes.iter().zip(&ex.dims) {
            s = s + d.wavenumber_sq(*m);
        }
        Some(s)
    }
}

/// `κ = (kπ/a)²`.
#[inline]
pub fn kappa(k: usize, a: f64) -> f64 {
    let w = k as f64 * PI / a;
    w * w
}

/// `−k⁴π⁴/a⁴ + (ν − 2μ)k²π²/a²`.
pub fn lambda_x(k: usize, a: f64, nu: f64, mu: f64) -> f64 {
    let kap = kappa(k, a);
    -kap * kap + (nu - 2.0 * mu) * kap
}

pub fn x_eigenvalue(k: usize, spec: &SpectrumSpec, j: usize) -> Result<f64> {
    if k == 0 {
        return Err(KsError::IndexOutOfRange { index: k });
    }
    Ok(lambda_x(k, spec.a, spec.nu, spec.mu(j)?))
}

/// First `count` Dirichlet eigenvalues of a box with their index tuples.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSpectrum {
    pub values: Vec<f64>,
    pub modes: Vec<Vec<u64>>,
}

pub fn y_eigenvalues_box(dims: &[f64], count: usize) -> BoxSpectrum {
    let w: Vec<f64> = dims.iter().map(|b| (PI / b) * (PI / b)).collect();
    let base: f64 = w.iter().sum();
    let mut limit = base * 4.0;
    loop {
        let mut found: Vec<(f64, Vec<u64>)> = Vec::new();
        let mut idx = vec![1u64; dims.len()];
        enumerate(&w, 0, 0.0, limit, &mut idx, &mut found);
        if found.len() >= count {
            found.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then_with(|| x.1.cmp(&y.1)));
            found.truncate(count);
            return BoxSpectrum {
                values: found.iter().map(|f| f.0).collect(),
                modes: found.into_iter().map(|f| f.1).collect(),
            };
        }
        limit *= 2.0;
    }
}

fn enumerate(w: &[f64], d: usize, acc: f64, limit: f64, idx: &mut Vec<u64>, out: &mut Vec<(f64, Vec<u64>)>) {
    if d == w.len() {
        out.push((acc, idx.clone()));
        return;
    }
    let rest_min: f64 = w[d + 1..].iter().sum();
    let mut m = 1u64;
    loop {
        let v = acc + (m * m) as f64 * w[d];
        if v + rest_min > limit {
            break;
        }
        idx[d] = m;
        enumerate(w, d + 1, v, limit, idx, out);
        m += 1;
    }
}

/// Outcome of the critical-set scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Clear,
    Critical { j: usize, k: usize, l: usize },
    Near { j: usize, k: usize, l: usize, distance: f64 },
}

impl Verdict {
    pub fn is_clear(&self) -> bool {
        matches!(self, Verdict::Clear)
    }

    /// Refusal error for synthesis routines.
    pub fn require_clear(&self) -> Result<()> {
        match *self {
            Verdict::Clear => Ok(()),
            Verdict::Critical { j, k, l } | Verdict::Near { j, k, l, .. } => {
                Err(KsError::CriticalParameter { j, k, l })
            }
        }
    }
}

/// Scans `2μ_j + π²(k² + l²)/a²` for `j ≤ J_y`, `k < l`, against ν.
///
/// `search_bound` is a minimum for the scanned `l`; the scan always extends
/// far enough to cover every candidate value up to `ν + crit_tol`.
pub fn critical_set_check(spec: &SpectrumSpec, search_bound: usize) -> Verdict {
    let tol = spec.crit_tol;
    let ceiling = spec.nu + tol;
    let mut best_near: Option<(f64, usize, usize, usize)> = None;
    for j in 1..=spec.j_y {
        let two_mu = 2.0 * spec.mu[j - 1];
        if two_mu + kappa(1, spec.a) + kappa(2, spec.a) > ceiling + tol.max(1e-12 * ceiling.abs()) {
            continue;
        }
        let mut l = 2usize;
        loop {
            let base = two_mu + kappa(1, spec.a) + kappa(l, spec.a);
            if base > ceiling + tol.max(1e-12 * ceiling.abs()) && l > search_bound {
                break;
            }
            for k in 1..l {
                let cand = two_mu + kappa(k, spec.a) + kappa(l, spec.a);
                let dist = (spec.nu - cand).abs();
                if let Some(true) = exact_equal(spec, j, k, l) {
                    return Verdict::Critical { j, k, l };
                }
                if dist <= tol && best_near.map_or(true, |b| dist < b.0) {
                    best_near = Some((dist, j, k, l));
                }
            }
            l += 1;
        }
    }
    match best_near {
        Some((distance, j, k, l)) => Verdict::Near { j, k, l, distance },
        None => Verdict::Clear,
    }
}

fn exact_equal(spec: &SpectrumSpec, j: usize, k: usize, l: usize) -> Option<bool> {
    let ex = spec.exact.as_ref()?;
    let mu = spec.mu_exact(j)?;
    let cand = mu.scale(2) + ex.a.wavenumber_sq(k as u64) + ex.a.wavenumber_sq(l as u64);
    let diff = cand - PiQuad::rational(ex.nu.clone());
    Some(diff.rat.is_zero() && diff.pi2.is_zero())
}

/// `n₀ = min{j : 2μ_j − ν > 0}`, 1-based.
pub fn n0_index(spec: &SpectrumSpec) -> Result<usize> {
    spec.mu
        .iter()
        .position(|&m| 2.0 * m - spec.nu > 0.0)
        .map(|i| i + 1)
        .ok_or(KsError::ThresholdBeyondTruncation { what: "n0", limit: spec.mu.len() })
}

/// `K₀ = min{k : μ_k > ν}`, 1-based.
pub fn k0_index(spec: &SpectrumSpec) -> Result<usize> {
    spec.mu
        .iter()
        .position(|&m| m > spec.nu)
        .map(|i| i + 1)
        .ok_or(KsError::ThresholdBeyondTruncation { what: "K0", limit: spec.mu.len() })
}

/// `N(r) = #{Λ ∈ rates : Λ ≤ r}`.
pub fn counting_function(rates: &[f64], r: f64) -> usize {
    rates.iter().filter(|&&x| x <= r).count()
}

/// Positivity shift: `max(0, −min Λ) + 1`.
pub fn shift_c0(exponents: &[f64]) -> f64 {
    let m = exponents.iter().cloned().fold(f64::INFINITY, f64::min);
    (-m).max(0.0) + 1.0
}

/// One evaluation of the counting function on the grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CountingSample {
    pub r: f64,
    pub count: usize,
    pub bound: f64,
}

/// Diagnostics for the `N(r) < C r^{1/4}` hypothesis on one slice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub j: usize,
    /// Positivity shift applied to the exponents (0 when not needed).
    pub shift: f64,
    /// Smallest `C` with `N(r) ≤ C r^{1/4}` on the grid.
    pub min_constant: f64,
    /// Grid points violating `N(r) < (a/π) r^{1/4}`; only populated when `j ≥ n₀`.
    pub violations: Vec<CountingSample>,
    pub samples: Vec<CountingSample>,
    pub in_regime: bool,
}

/// Evaluates the counting function of slice `j` over a log grid of `points` values of r.
pub fn bound_check(spec: &SpectrumSpec, j: usize, points: usize) -> Result<BoundReport> {
    let n0 = n0_index(spec).unwrap_or(usize::MAX);
    let mut rates: Vec<f64> = (1..=spec.k_x).map(|k| x_eigenvalue(k, spec, j).map(|l| -l)).collect::<Result<_>>()?;
    let shift = if j < n0 || rates.iter().any(|&r| r <= 0.0) { shift_c0(&rates) } else { 0.0 };
    for r in rates.iter_mut() {
        *r += shift;
    }
    let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-12);
    let hi = rates.iter().cloned().fold(0.0, f64::max);
    let points = points.max(2);
    let coeff = spec.a / PI;
    let mut samples = Vec::with_capacity(points);
    let mut min_c: f64 = 0.0;
    let mut violations = Vec::new();
    let in_regime = j >= n0;
    for i in 0..points {
        let r = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (points - 1) as f64).exp();
        let count = counting_function(&rates, r);
        let bound = coeff * r.powf(0.25);
        min_c = min_c.max(count as f64 / r.powf(0.25));
        let s = CountingSample { r, count, bound };
        if in_regime && (count as f64) >= bound {
            violations.push(s.clone());
        }
        samples.push(s);
    }
    Ok(BoundReport { j, shift, min_constant: min_c, violations, samples, in_regime })
}

/// Pairwise-gap diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapReport {
    /// `min_{k≠m} |Λ_k − Λ_m|`.
    pub rho_hat: f64,
    /// `min_{k≠m} |Λ_k − Λ_m| / |k − m|`.
    pub linear_gap: f64,
    /// `min_k |Λ_{k+1} − Λ_k|`.
    pub consecutive_gap: f64,
}

pub fn gap_check(rates: &[f64]) -> Result<GapReport> {
    let mut rho = f64::INFINITY;
    let mut lin = f64::INFINITY;
    let mut cons = f64::INFINITY;
    for i in 0..rates.len() {
        for m in i + 1..rates.len() {
            let d = (rates[i] - rates[m]).abs();
            let scale = rates[i].abs().max(rates[m].abs()).max(f64::MIN_POSITIVE);
            if d <= 1e-12 * scale {
                return Err(KsError::DuplicateRate { index: m + 1 });
            }
            rho = rho.min(d);
            lin = lin.min(d / (m - i) as f64);
            if m == i + 1 {
                cons = cons.min(d);
            }
        }
    }
    Ok(GapReport { rho_hat: rho, linear_gap: lin, consecutive_gap: cons })
}

/// Smallest `k*` such that `λ_x(·, j)` is strictly decreasing on `k ≥ k*`.
pub fn monotone_tail_index(spec: &SpectrumSpec, j: usize) -> Result<usize> {
    let c = spec.nu - 2.0 * spec.mu(j)?;
    let mut k = 1usize;
    while kappa(k, spec.a) < c / 2.0 {
        k += 1;
    }
    Ok(k)
}

/// Least-squares slope of `log μ_j` against `log j` over `j ∈ [J_y/2, J_y]`.
pub fn weyl_slope(spec: &SpectrumSpec) -> f64 {
    let lo = (spec.j_y / 2).max(1);
    let pts: Vec<(f64, f64)> = (lo..=spec.j_y).map(|j| ((j as f64).ln(), spec.mu[j - 1].ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Reads an external eigenvalue list: one positive decimal per line, ascending, `#` comments.
pub fn parse_eigenvalue_file(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| KsError::InvalidInput(format!("line {}: not a decimal: {line:?}", i + 1)))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(KsError::InvalidInput(format!("line {}: eigenvalue must be positive", i + 1)));
        }
        if out.last().is_some_and(|&p| v < p) {
            return Err(KsError::InvalidInput(format!("line {}: eigenvalues must be ascending", i + 1)));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(KsError::InvalidInput("eigenvalue file is empty".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ext(mu: &[f64], nu: f64, a: f64) -> SpectrumSpec {
        SpectrumSpec::new(a, nu, CrossSection::External(mu.to_vec()), 8, mu.len()).unwrap()
    }

    #[test]
    fn x_eigenvalue_examples() {
        assert!((lambda_x(1, PI, 0.0, 0.0) + 1.0).abs() < 1e-14);
        let s = ext(&[1.0], 5.0, PI);
        assert!((x_eigenvalue(2, &s, 1).unwrap() + 4.0).abs() < 1e-12);
        let s = ext(&[PI * PI], 0.0, 1.0);
        let want = -99.0 * PI.powi(4);
        assert!((x_eigenvalue(3, &s, 1).unwrap() - want).abs() < 1e-12 * want.abs());
        assert_eq!(x_eigenvalue(1, &s, 2), Err(KsError::IndexOutOfRange { index: 2 }));
    }

    #[test]
    fn box_spectra() {
        let b = y_eigenvalues_box(&[PI], 3);
        assert!(b.values.iter().zip([1.0, 4.0, 9.0]).all(|(x, y)| (x - y).abs() < 1e-12));
        let b = y_eigenvalues_box(&[PI, PI], 4);
        assert!(b.values.iter().zip([2.0, 5.0, 5.0, 8.0]).all(|(x, y)| (x - y).abs() < 1e-12));
        let b = y_eigenvalues_box(&[1.0], 2);
        assert!((b.values[0] - PI * PI).abs() < 1e-12 && (b.values[1] - 4.0 * PI * PI).abs() < 1e-11);
    }

    #[test]
    fn critical_set_examples() {
        let s = SpectrumSpec::from_literals("pi", "7", &["pi"], 8, 8).unwrap();
        assert_eq!(critical_set_check(&s, 4), Verdict::Critical { j: 1, k: 1, l: 2 });
        let s = SpectrumSpec::from_literals("pi", "6.5", &["pi"], 8, 8).unwrap();
        assert_eq!(critical_set_check(&s, 4), Verdict::Clear);
        let s = SpectrumSpec::from_literals("pi", "0", &["pi"], 8, 8).unwrap();
        assert_eq!(critical_set_check(&s, 4), Verdict::Clear);
        // Floating inputs can only be near.
        let s = SpectrumSpec::new(PI, 7.0, CrossSection::Box(vec![PI]), 8, 8).unwrap();
        assert!(matches!(critical_set_check(&s, 4), Verdict::Near { j: 1, k: 1, l: 2, .. }));
    }

    #[test]
    fn thresholds() {
        let s = ext(&[1.0, 4.0, 9.0], 0.0, PI);
        assert_eq!((n0_index(&s).unwrap(), k0_index(&s).unwrap()), (1, 1));
        let s = ext(&[1.0, 4.0, 9.0], 5.0, PI);
        assert_eq!((n0_index(&s).unwrap(), k0_index(&s).unwrap()), (2, 3));
        let s = ext(&[1.0, 4.0, 9.0], 100.0, PI);
        assert!(matches!(n0_index(&s), Err(KsError::ThresholdBeyondTruncation { .. })));
        assert!(matches!(k0_index(&s), Err(KsError::ThresholdBeyondTruncation { .. })));
    }

    #[test]
    fn counting_and_gaps() {
        assert_eq!(counting_function(&[1.0, 16.0, 81.0], 16.0), 2);
        assert_eq!(counting_function(&[1.0, 16.0, 81.0], 0.5), 0);
        let rates: Vec<f64> = (1..=20).map(|k| (k as f64).powi(4) + 2.0 * (k as f64).powi(2)).collect();
        let n = counting_function(&rates, 1e4);
        assert!(n <= 10 && (n as f64) < 10.0);
        let k4: Vec<f64> = (1..=6).map(|k| (k as f64).powi(4)).collect();
        assert!((gap_check(&k4).unwrap().rho_hat - 15.0).abs() < 1e-12);
        let crit = ext(&[1.0], 7.0, PI);
        let r: Vec<f64> = (1..=3).map(|k| x_eigenvalue(k, &crit, 1).unwrap()).collect();
        assert!(matches!(gap_check(&r), Err(KsError::DuplicateRate { .. })));
        let s = ext(&[PI * PI], 0.0, 1.0);
        let r: Vec<f64> = (1..=6).map(|k| -x_eigenvalue(k, &s, 1).unwrap()).collect();
        let g = gap_check(&r).unwrap();
        assert!(g.rho_hat > 0.0 && g.linear_gap > 0.0);
    }

    #[test]
    fn monotone_tail() {
        let s = ext(&[1.0], 20.0, PI);
        let ks = monotone_tail_index(&s, 1).unwrap();
        for k in ks..40 {
            assert!(x_eigenvalue(k + 1, &s, 1).unwrap() < x_eigenvalue(k, &s, 1).unwrap());
        }
    }

    #[test]
    fn weyl_slope_box() {
        let s = SpectrumSpec::new(PI, 0.0, CrossSection::Box(vec![PI, 2.0]), 4, 400).unwrap();
        assert!((weyl_slope(&s) - 1.0).abs() < 0.15);
        let s = SpectrumSpec::new(PI, 0.0, CrossSection::Box(vec![1.3]), 4, 200).unwrap();
        assert!((weyl_slope(&s) - 2.0).abs() < 0.15);
    }
}
