//! Projection of `−½|∇u|²` onto the retained sine basis.
//!
//! For `u` in the span of sines of degree `≤ M` per direction, `|∇u|²` is a
//! cosine polynomial of degree `≤ 2M` in every direction. Sampling it on the
//! uniform grid `x_i = iL/n`, `i = 0..=n`, with `n ≥ 2M` and applying a DCT-I
//! recovers that polynomial exactly; the sine projection of each cosine is
//! then a closed-form integral.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{KsError, Result};
use crate::spectral::SpectrumSpec;

/// `∫₀ᴸ √(2/L) sin(mπx/L) cos(pπx/L) dx`.
fn sine_cosine(m: usize, p: usize, len: f64) -> f64 {
    if (m + p) % 2 == 0 {
        return 0.0;
    }
    let (mf, pf) = (m as f64, p as f64);
    (2.0 / len).sqrt() * (len / PI) * 2.0 * mf / (mf * mf - pf * pf)
}

/// `Q[m−1][i]`: sine coefficient `m` of the cosine interpolant of nodal data.
fn projection_matrix(modes: usize, n: usize, len: f64) -> DMatrix<f64> {
    let nf = n as f64;
    let dct = DMatrix::from_fn(n + 1, n + 1, |p, i| {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let scale = if p == 0 || p == n { 1.0 / nf } else { 2.0 / nf };
        scale * w * (PI * (p * i) as f64 / nf).cos()
    });
    let proj = DMatrix::from_fn(modes, n + 1, |m, p| sine_cosine(m + 1, p, len));
    proj * dct
}

/// Orthonormal sine values and derivatives at the grid nodes, `(n+1) × modes`.
fn sine_tables(modes: usize, n: usize, len: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = (2.0 / len).sqrt();
    let s = DMatrix::from_fn(n + 1, modes, |i, m| {
        c * (((m + 1) * i) as f64 * PI / n as f64).sin()
    });
    let d = DMatrix::from_fn(n + 1, modes, |i, m| {
        let w = (m + 1) as f64 * PI / len;
        c * w * (((m + 1) * i) as f64 * PI / n as f64).cos()
    });
    (s, d)
}

/// Required grid parameter `n` for `spec`.
pub fn required_resolution(spec: &SpectrumSpec) -> Result<usize> {
    let modes = spec.y_modes();
    let dims = spec
        .box_dims()
        .ok_or_else(|| KsError::InvalidInput("the nonlinear term needs a box cross-section".into()))?;
    let mut m = spec.k_x;
    for d in 0..dims.len() {
        m = m.max(modes[..spec.j_y].iter().map(|t| t[d] as usize).max().unwrap_or(1));
    }
    Ok(2 * m)
}

/// Modal coefficients of `F(u) = −½|∇u|²` for `u` given by `coeffs` (`K_x × J_y`).
pub fn nonlinear_rhs(spec: &SpectrumSpec, coeffs: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let required = required_resolution(spec)?;
    if n < required {
        return Err(KsError::QuadratureUnderResolved { points: n, required });
    }
    let (kx, jy) = (spec.k_x, spec.j_y);
    if coeffs.nrows() != kx || coeffs.ncols() != jy {
        return Err(KsError::InvalidInput(format!(
            "coefficient matrix is {}x{}, expected {kx}x{jy}",
            coeffs.nrows(),
            coeffs.ncols()
        )));
    }
    let dims = spec.box_dims().unwrap().to_vec();
    let modes = &spec.y_modes()[..jy];
    let nd = dims.len();
    let mdir: Vec<usize> = (0..nd).map(|d| modes.iter().map(|t| t[d] as usize).max().unwrap()).collect();
    let tables: Vec<_> = (0..nd).map(|d| sine_tables(mdir[d], n, dims[d])).collect();
    let ny = (n + 1).pow(nd as u32);

    // y-factors on the flattened cross-section grid.
    let mut yval = DMatrix::zeros(ny, jy);
    let mut yder: Vec<DMatrix<f64>> = (0..nd).map(|_| DMatrix::zeros(ny, jy)).collect();
    for iy in 0..ny {
        let mut idx = [0usize; 8];
        let mut r = iy;
        for slot in idx.iter_mut().take(nd) {
            *slot = r % (n + 1);
            r /= n + 1;
        }
        for (j, t) in modes.iter().enumerate() {
            let vals: Vec<f64> = (0..nd).map(|d| tables[d].0[(idx[d], t[d] as usize - 1)]).collect();
            yval[(iy, j)] = vals.iter().product();
            for d in 0..nd {
                let mut p = tables[d].1[(idx[d], t[d] as usize - 1)];
                for (e, v) in vals.iter().enumerate() {
                    if e != d {
                        p *= v;
                    }
                }
                yder[d][(iy, j)] = p;
            }
        }
    }
    let (xs, xd) = sine_tables(kx, n, spec.a);
    let a = coeffs * yval.transpose();
    let ux = &xd * &a;
    let mut w = ux.component_mul(&ux);
    for yd in &yder {
        let uy = &xs * (coeffs * yd.transpose());
        w += uy.component_mul(&uy);
    }
    let f = w * -0.5;

    let qx = projection_matrix(kx, n, spec.a);
    let qd: Vec<DMatrix<f64>> = (0..nd).map(|d| projection_matrix(mdir[d], n, dims[d])).collect();
    let mut qy = DMatrix::zeros(jy, ny);
    for iy in 0..ny {
        let mut r = iy;
        let mut idx = [0usize; 8];
        for slot in idx.iter_mut().take(nd) {
            *slot = r % (n + 1);
            r /= n + 1;
        }
        for (j, t) in modes.iter().enumerate() {
            qy[(j, iy)] = (0..nd).map(|d| qd[d][(t[d] as usize - 1, idx[d])]).product();
        }
    }
    Ok(qx * f * qy.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::CrossSection;

    #[test]
    fn zero_state_and_resolution_guard() {
        let s = SpectrumSpec::new(PI, 1.0, CrossSection::Box(vec![PI]), 4, 3).unwrap();
        let z = nonlinear_rhs(&s, &DMatrix::zeros(4, 3), 8).unwrap();
        assert_eq!(z.norm(), 0.0);
        assert!(matches!(
            nonlinear_rhs(&s, &DMatrix::zeros(4, 3), 7),
            Err(KsError::QuadratureUnderResolved { points: 7, required: 8 })
        ));
    }

    #[test]
    fn cosine_interpolant_is_exact() {
        let q = projection_matrix(5, 12, 2.0);
        // cos²(πx/L) = ½ + ½cos(2πx/L).
        let nodal: Vec<f64> = (0..=12).map(|i| (PI * i as f64 / 12.0).cos().powi(2)).collect();
        let got = &q * DMatrix::from_column_slice(13, 1, &nodal);
        for m in 1..=5 {
            let want = 0.5 * sine_cosine(m, 0, 2.0) + 0.5 * sine_cosine(m, 2, 2.0);
            assert!((got[(m - 1, 0)] - want).abs() < 1e-14);
        }
    }
}
