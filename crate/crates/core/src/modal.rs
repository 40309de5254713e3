//! Exact-in-time evolution of the truncated modal system.
//!
//! The state is a `K × J` matrix of coefficients `u_{k,j}` in the orthonormal
//! basis `√(2/a) sin(kπx/a)·Ψ_j(y)`. Each mode obeys
//! `u̇_{k,j} = Λ_{k,j} u_{k,j} + xgain_k Σ_c Y[c,j] q_c(t) + f_{k,j}(t)`,
//! which is integrated exactly for the supported control and source shapes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{KsError, Result};
use crate::signal::{channel_response, phi1, phi2, ControlKind, ControlSignal, Omega, Quadrature, SignalBody};
use crate::spectral::{critical_set_check, SpectrumSpec};

/// Sign of the boundary gain, fixed by the duality calibration test.
pub const BOUNDARY_SIGN: f64 = -1.0;

/// Modal coefficients at a time instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalState {
    pub coeffs: DMatrix<f64>,
    pub time: f64,
}

impl ModalState {
    pub fn zeros(k: usize, j: usize, time: f64) -> Self {
        ModalState { coeffs: DMatrix::zeros(k, j), time }
    }

    pub fn from_column(v: &[f64], time: f64) -> Self {
        ModalState { coeffs: DMatrix::from_column_slice(v.len(), 1, v), time }
    }

    /// Basis state `e_{k,j}` (1-based).
    pub fn basis(kx: usize, jy: usize, k: usize, j: usize) -> Self {
        let mut s = Self::zeros(kx, jy, 0.0);
        s.coeffs[(k - 1, j - 1)] = 1.0;
        s
    }

    /// `L²` norm by Parseval.
    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    /// Norm over the leading `k × j` block.
    pub fn block_norm(&self, k: usize, j: usize) -> f64 {
        let k = k.min(self.coeffs.nrows());
        let j = j.min(self.coeffs.ncols());
        self.coeffs.view((0, 0), (k, j)).norm()
    }

    /// Norm of the columns `j ≤ jmax` (the projection onto `E_J`).
    pub fn low_y_norm(&self, jmax: usize) -> f64 {
        self.block_norm(self.coeffs.nrows(), jmax)
    }
}

/// Rates, input gains and channel coupling of a truncated system.
#[derive(Clone, Debug)]
pub struct ModalSystem {
    /// `K × J` rates.
    pub rates: DMatrix<f64>,
    /// Gain of the x-profile on each x-mode.
    pub xgain: Vec<f64>,
    /// `channels × J` coupling `Y[c, j]` of control channels into y-modes.
    pub ycoupling: DMatrix<f64>,
}

impl ModalSystem {
    /// 1-D slice `j` with `n` x-modes and rates `λ_x(k, j)`, no input.
    pub fn free_1d(spec: &SpectrumSpec, j: usize, n: usize) -> Result<Self> {
        let rates = (1..=n).map(|k| spec.lambda_x(k, j)).collect::<Result<Vec<_>>>()?;
        Ok(ModalSystem {
            rates: DMatrix::from_column_slice(n, 1, &rates),
            xgain: vec![0.0; n],
            ycoupling: DMatrix::from_element(1, 1, 1.0),
        })
    }

    /// 1-D slice with the input of `kind` (`Boundary1D` or `Pointwise1D`).
    pub fn slice_1d(spec: &SpectrumSpec, j: usize, n: usize, kind: &ControlKind) -> Result<Self> {
        let mut s = Self::free_1d(spec, j, n)?;
        s.xgain = xgains(spec, n, kind)?;
        Ok(s)
    }

    /// Full `K_x × J_y` system with tensor rates and the input of `kind`.
    pub fn nd(spec: &SpectrumSpec, kind: &ControlKind) -> Result<Self> {
        let rates = spec.rate_matrix();
        let xgain = xgains(spec, spec.k_x, kind)?;
        let ycoupling = match kind {
            ControlKind::BoundaryNd { omega } | ControlKind::PointwiseNd { omega, .. } => mass_matrix(spec, omega)?,
            _ => return Err(KsError::InvalidInput("N-D system needs an N-D control kind".into())),
        };
        Ok(ModalSystem { rates, xgain, ycoupling })
    }

    /// Full system without input.
    pub fn free_nd(spec: &SpectrumSpec) -> Self {
        ModalSystem {
            rates: spec.rate_matrix(),
            xgain: vec![0.0; spec.k_x],
            ycoupling: DMatrix::identity(spec.j_y, spec.j_y),
        }
    }

    pub fn n_x(&self) -> usize {
        self.rates.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.rates.ncols()
    }

    pub fn channels(&self) -> usize {
        self.ycoupling.nrows()
    }

    /// Gain of channel `c` on mode `(k, j)`, 0-based.
    #[inline]
    pub fn input(&self, k: usize, j: usize, c: usize) -> f64 {
        self.xgain[k] * self.ycoupling[(c, j)]
    }
}

fn xgains(spec: &SpectrumSpec, n: usize, kind: &ControlKind) -> Result<Vec<f64>> {
    Ok(match kind {
        ControlKind::Boundary1D | ControlKind::BoundaryNd { .. } => {
            (1..=n).map(|k| BOUNDARY_SIGN * spec.boundary_weight(k)).collect()
        }
        ControlKind::Pointwise1D { x0 } | ControlKind::PointwiseNd { x0, .. } => {
            if !(*x0 > 0.0 && *x0 < spec.a) {
                return Err(KsError::InvalidInput(format!("x0 = {x0} must lie in (0, a)")));
            }
            (1..=n).map(|k| spec.point_weight(k, *x0)).collect()
        }
    })
}

fn sine_overlap(m: u64, n: u64, b: f64, w0: f64, w1: f64) -> f64 {
    let c = PI / b;
    let (mf, nf) = (m as f64, n as f64);
    if m == n {
        let f = |y: f64| y - (2.0 * mf * c * y).sin() / (2.0 * mf * c);
        (f(w1) - f(w0)) / b
    } else {
        let f = |y: f64| ((mf - nf) * c * y).sin() / ((mf - nf) * c) - ((mf + nf) * c * y).sin() / ((mf + nf) * c);
        (f(w1) - f(w0)) / b
    }
}

/// `M[j, l] = ⟨Ψ_j, Ψ_l⟩_{L²(ω)}` for the first `J_y` box modes, in closed form.
pub fn mass_matrix(spec: &SpectrumSpec, omega: &Omega) -> Result<DMatrix<f64>> {
    let jy = spec.j_y;
    let dims = match spec.box_dims() {
        Some(d) => d,
        None => {
            if omega.intervals.is_empty() {
                return Ok(DMatrix::identity(jy, jy));
            }
            return Err(KsError::InvalidInput("partial ω needs a box cross-section".into()));
        }
    };
    if omega.is_full(dims) {
        return Ok(DMatrix::identity(jy, jy));
    }
    if omega.intervals.len() != dims.len()
        || omega.intervals.iter().zip(dims).any(|(iv, &b)| !(iv.0 >= 0.0 && iv.1 <= b && iv.1 > iv.0))
    {
        return Err(KsError::InvalidInput("ω must be a box inside the cross-section".into()));
    }
    let modes = spec.y_modes();
    Ok(DMatrix::from_fn(jy, jy, |r, c| {
        (0..dims.len())
            .map(|d| sine_overlap(modes[r][d], modes[c][d], dims[d], omega.intervals[d].0, omega.intervals[d].1))
            .product()
    }))
}

/// Modal source sampled in time and interpolated linearly; zero outside its range.
#[derive(Clone, Debug, Default)]
pub struct SourceTrace {
    pub times: Vec<f64>,
    pub values: Vec<DMatrix<f64>>,
}

impl SourceTrace {
    pub fn is_empty(&self) -> bool {
        self.times.len() < 2
    }

    fn value_at(&self, t: f64) -> Option<DMatrix<f64>> {
        if self.is_empty() || t < self.times[0] || t > *self.times.last().unwrap() {
            return None;
        }
        let i = match self.times.binary_search_by(|g| g.partial_cmp(&t).unwrap()) {
            Ok(i) => return Some(self.values[i].clone()),
            Err(i) => i - 1,
        };
        let th = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Some(&self.values[i] * (1.0 - th) + &self.values[i + 1] * th)
    }
}

/// `u ← e^{Λ dt} u`.
pub fn evolve_free(state: &ModalState, rates: &DMatrix<f64>, dt: f64) -> ModalState {
    let coeffs = state.coeffs.zip_map(rates, |u, l| u * (l * dt).exp());
    ModalState { coeffs, time: state.time + dt }
}

/// Interval overlap of `[a, b]` with `[t0, t1]`.
fn overlap(a: f64, b: f64, t0: f64, t1: f64) -> Option<(f64, f64)> {
    let s0 = a.max(t0);
    let s1 = b.min(t1);
    (s1 > s0).then_some((s0, s1))
}

/// Exact update of `state` from `state.time` to `t1`.
pub fn evolve(
    sys: &ModalSystem,
    state: &ModalState,
    t1: f64,
    control: Option<&ControlSignal>,
    source: Option<&SourceTrace>,
) -> ModalState {
    let t0 = state.time;
    let mut out = evolve_free(state, &sys.rates, t1 - t0);
    out.time = t1;
    if t1 <= t0 {
        return out;
    }
    let (nk, nj) = (sys.n_x(), sys.n_y());
    if let Some(q) = control {
        match &q.body {
            SignalBody::Sampled { values, quadrature } => {
                for i in 0..q.grid.len() - 1 {
                    let Some((s0, s1)) = overlap(q.grid[i], q.grid[i + 1], t0, t1) else { continue };
                    let (v0, v1) = match quadrature {
                        Quadrature::PiecewiseConstant => (values[i].clone(), values[i].clone()),
                        Quadrature::PiecewiseLinear => (q.value(s0), q.value(s1)),
                    };
                    let l = s1 - s0;
                    for j in 0..nj {
                        let y0: f64 = (0..q.channels).map(|c| sys.ycoupling[(c, j)] * v0[c]).sum();
                        let y1: f64 = (0..q.channels).map(|c| sys.ycoupling[(c, j)] * v1[c]).sum();
                        if y0 == 0.0 && y1 == 0.0 {
                            continue;
                        }
                        for k in 0..nk {
                            let lam = sys.rates[(k, j)];
                            let z = lam * l;
                            let g = sys.xgain[k];
                            out.coeffs[(k, j)] +=
                                (lam * (t1 - s1)).exp() * l * g * (phi1(z) * y0 + phi2(z) * (y1 - y0));
                        }
                    }
                }
            }
            SignalBody::Analytic { segments } => {
                let active: Vec<_> = segments
                    .iter()
                    .filter_map(|s| overlap(s.start, s.end, t0, t1).map(|iv| (s, iv)))
                    .collect();
                if !active.is_empty() {
                    let cols: Vec<DVector<f64>> = (0..nj)
                        .into_par_iter()
                        .map(|j| {
                            let mut col = DVector::zeros(nk);
                            for k in 0..nk {
                                if sys.xgain[k] == 0.0 {
                                    continue;
                                }
                                let lam = sys.rates[(k, j)];
                                let mut acc = Dd::ZERO;
                                for (seg, (s0, s1)) in &active {
                                    for c in 0..q.channels {
                                        let y = sys.ycoupling[(c, j)];
                                        if y == 0.0 || seg.channels[c].is_empty() {
                                            continue;
                                        }
                                        acc += channel_response(lam, &seg.channels[c], seg.anchor, *s0, *s1, t1) * y;
                                    }
                                }
                                col[k] = (acc * sys.xgain[k]).to_f64();
                            }
                            col
                        })
                        .collect();
                    for (j, col) in cols.into_iter().enumerate() {
                        for k in 0..nk {
                            out.coeffs[(k, j)] += col[k];
                        }
                    }
                }
            }
        }
    }
    if let Some(src) = source {
        if !src.is_empty() {
            let times = &src.times;
            for i in 0..times.len() - 1 {
                let Some((s0, s1)) = overlap(times[i], times[i + 1], t0, t1) else { continue };
                let f0 = src.value_at(s0).unwrap();
                let f1 = src.value_at(s1).unwrap();
                let l = s1 - s0;
                for j in 0..nj {
                    for k in 0..nk {
                        let lam = sys.rates[(k, j)];
                        let z = lam * l;
                        let (a, b) = (f0[(k, j)], f1[(k, j)]);
                        if a == 0.0 && b == 0.0 {
                            continue;
                        }
                        out.coeffs[(k, j)] += (lam * (t1 - s1)).exp() * l * (phi1(z) * a + phi2(z) * (b - a));
                    }
                }
            }
        }
    }
    out
}

/// States at every time of `times` (the first must equal the initial time).
pub fn simulate(
    sys: &ModalSystem,
    state: &ModalState,
    times: &[f64],
    control: Option<&ControlSignal>,
    source: Option<&SourceTrace>,
) -> Vec<ModalState> {
    let mut out = Vec::with_capacity(times.len());
    let mut cur = state.clone();
    for &t in times {
        if t > cur.time {
            cur = evolve(sys, &cur, t, control, source);
        }
        out.push(cur.clone());
    }
    out
}

fn require_not_critical(spec: &SpectrumSpec) -> Result<()> {
    critical_set_check(spec, 4).require_clear()
}

/// Boundary-controlled evolution over `window`, refusing critical parameters.
pub fn evolve_boundary_controlled(
    spec: &SpectrumSpec,
    sys: &ModalSystem,
    state: &ModalState,
    control: &ControlSignal,
    window: (f64, f64),
) -> Result<ModalState> {
    if !matches!(control.kind, ControlKind::Boundary1D | ControlKind::BoundaryNd { .. }) {
        return Err(KsError::InvalidInput("boundary evolution needs a boundary control".into()));
    }
    require_not_critical(spec)?;
    let mut s = state.clone();
    s.time = window.0;
    Ok(evolve(sys, &s, window.1, Some(control), None))
}

/// Pointwise-controlled evolution over `window`, refusing critical parameters.
pub fn evolve_pointwise_controlled(
    spec: &SpectrumSpec,
    sys: &ModalSystem,
    state: &ModalState,
    control: &ControlSignal,
    window: (f64, f64),
) -> Result<ModalState> {
    if !matches!(control.kind, ControlKind::Pointwise1D { .. } | ControlKind::PointwiseNd { .. }) {
        return Err(KsError::InvalidInput("pointwise evolution needs a pointwise control".into()));
    }
    require_not_critical(spec)?;
    let mut s = state.clone();
    s.time = window.0;
    Ok(evolve(sys, &s, window.1, Some(control), None))
}

/// Adjoint state `φ(t) = e^{Λ(T − t)} φ_T`.
pub fn adjoint_solution(phi_t: &DMatrix<f64>, t: f64, horizon: f64, rates: &DMatrix<f64>) -> DMatrix<f64> {
    phi_t.zip_map(rates, |p, l| p * (l * (horizon - t)).exp())
}

/// `∂ₓφ(·, 0, ·)` as a y-modal row: `Σ_k √(2/a)(kπ/a) φ_{k,j}`.
pub fn boundary_observation(spec: &SpectrumSpec, phi: &DMatrix<f64>) -> Vec<f64> {
    (0..phi.ncols()).map(|j| (0..phi.nrows()).map(|k| spec.boundary_weight(k + 1) * phi[(k, j)]).sum()).collect()
}

/// `φ(·, x0, ·)` as a y-modal row.
pub fn point_observation(spec: &SpectrumSpec, phi: &DMatrix<f64>, x0: f64) -> Vec<f64> {
    (0..phi.ncols()).map(|j| (0..phi.nrows()).map(|k| spec.point_weight(k + 1, x0) * phi[(k, j)]).sum()).collect()
}

/// Observation record of a forward trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub norm: f64,
    /// `v_x(t, 0, ·)` y-modal row.
    pub boundary: Vec<f64>,
    /// `v(t, x0, ·)` y-modal row.
    pub point: Option<Vec<f64>>,
}

pub fn observe(spec: &SpectrumSpec, trace: &[ModalState], x0: Option<f64>) -> Vec<Observation> {
    trace
        .iter()
        .map(|s| Observation {
            t: s.time,
            norm: s.norm(),
            boundary: boundary_observation(spec, &s.coeffs),
            point: x0.map(|x| point_observation(spec, &s.coeffs, x)),
        })
        .collect()
}

/// Gauss-Legendre nodes and weights on `[0, L]`.
pub fn gauss_legendre(n: usize, len: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for m in 2..=n {
                let p2 = ((2 * m - 1) as f64 * z * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * len * (1.0 - z);
        w[i] = len / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Projects `u0(x, y…)` onto the retained basis by tensor Gauss quadrature.
///
/// `points` is the per-direction node count; it must give at least four
/// nodes per wavelength of the highest retained mode in every direction.
pub fn project_initial(spec: &SpectrumSpec, u0: &dyn Fn(&[f64]) -> f64, points: usize) -> Result<ModalState> {
    let dims = spec
        .box_dims()
        .ok_or_else(|| KsError::InvalidInput("callable projection needs a box cross-section".into()))?
        .to_vec();
    let modes = spec.y_modes();
    let mut need = 2 * spec.k_x;
    for d in 0..dims.len() {
        let mmax = modes.iter().map(|m| m[d]).max().unwrap_or(1) as usize;
        need = need.max(2 * mmax);
    }
    if points < need {
        return Err(KsError::QuadratureUnderResolved { points, required: need });
    }
    let (xs, xw) = gauss_legendre(points, spec.a);
    let ys: Vec<(Vec<f64>, Vec<f64>)> = dims.iter().map(|&b| gauss_legendre(points, b)).collect();
    let nd = dims.len();
    // Samples on the tensor grid, y-index flattened.
    let ny: usize = points.pow(nd as u32);
    let mut samples = DMatrix::zeros(points, ny);
    let mut pt = vec![0.0; nd + 1];
    for iy in 0..ny {
        let mut r = iy;
        for d in 0..nd {
            pt[d + 1] = ys[d].0[r % points];
            r /= points;
        }
        for ix in 0..points {
            pt[0] = xs[ix];
            samples[(ix, iy)] = u0(&pt);
        }
    }
    let sx = DMatrix::from_fn(spec.k_x, points, |k, i| xw[i] * spec.point_weight(k + 1, xs[i]));
    let sy = DMatrix::from_fn(ny, spec.j_y, |iy, j| {
        let mut r = iy;
        let mut v = 1.0;
        for d in 0..nd {
            let i = r % points;
            r /= points;
            let b = dims[d];
            v *= ys[d].1[i] * (2.0 / b).sqrt() * (modes[j][d] as f64 * PI * ys[d].0[i] / b).sin();
        }
        v
    });
    Ok(ModalState { coeffs: sx * samples * sy, time: 0.0 })
}

/// `Σ e^{2Λ t} u0²` over modes not in the leading `k × j` block.
pub fn tail_bound(rates: &DMatrix<f64>, u0: &DMatrix<f64>, keep: (usize, usize), t: f64) -> f64 {
    let mut s = 0.0;
    for j in 0..u0.ncols() {
        for k in 0..u0.nrows() {
            if k < keep.0 && j < keep.1 {
                continue;
            }
            s += (2.0 * rates[(k, j)] * t).exp() * u0[(k, j)].powi(2);
        }
    }
    s.sqrt()
}

/// CSV with one row per coefficient: `t,k,j,coeff`.
pub fn state_csv(trace: &[ModalState]) -> String {
    let mut out = String::from("t,k,j,coeff\n");
    for s in trace {
        for j in 0..s.coeffs.ncols() {
            for k in 0..s.coeffs.nrows() {
                out.push_str(&format!("{:e},{},{},{:e}\n", s.time, k + 1, j + 1, s.coeffs[(k, j)]));
            }
        }
    }
    out
}

/// CSV with columns `t,norm,obs_1..obs_J` (boundary observation rows).
pub fn observation_csv(obs: &[Observation]) -> String {
    let nj = obs.first().map_or(0, |o| o.boundary.len());
    let np = obs.first().and_then(|o| o.point.as_ref()).map_or(0, |p| p.len());
    let mut out = String::from("t,norm");
    for j in 1..=nj {
        out.push_str(&format!(",vx_{j}"));
    }
    for j in 1..=np {
        out.push_str(&format!(",v_x0_{j}"));
    }
    out.push('\n');
    for o in obs {
        out.push_str(&format!("{:e},{:e}", o.t, o.norm));
        for v in &o.boundary {
            out.push_str(&format!(",{v:e}"));
        }
        if let Some(p) = &o.point {
            for v in p {
                out.push_str(&format!(",{v:e}"));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Quadrature;
    use crate::spectral::CrossSection;

    fn spec1() -> SpectrumSpec {
        SpectrumSpec::new(PI, 1.0, CrossSection::Box(vec![PI]), 6, 4).unwrap()
    }

    #[test]
    fn free_flow_semigroup_and_identity() {
        let s = spec1();
        let sys = ModalSystem::free_nd(&s);
        let st = ModalState { coeffs: DMatrix::from_fn(6, 4, |k, j| (k + 2 * j) as f64 * 0.1 - 0.3), time: 0.0 };
        let same = evolve_free(&st, &sys.rates, 0.0);
        assert_eq!(same.coeffs, st.coeffs);
        let a = evolve_free(&evolve_free(&st, &sys.rates, 0.013), &sys.rates, 0.021);
        let b = evolve_free(&st, &sys.rates, 0.034);
        assert!((a.coeffs - b.coeffs).abs().max() <= 1e-12 * st.coeffs.abs().max());
    }

    #[test]
    fn constant_boundary_control_matches_duhamel() {
        let s = spec1();
        let sys = ModalSystem::slice_1d(&s, 1, 1, &ControlKind::Boundary1D).unwrap();
        let q = ControlSignal::sampled(ControlKind::Boundary1D, vec![0.0, 1.0], vec![vec![2.0]], Quadrature::PiecewiseConstant)
            .unwrap();
        let st = ModalState::from_column(&[0.5], 0.0);
        let out = evolve(&sys, &st, 1.0, Some(&q), None);
        let lam = sys.rates[(0, 0)];
        let want = (lam).exp() * 0.5 + sys.xgain[0] * 2.0 * (lam.exp() - 1.0) / lam;
        assert!((out.coeffs[(0, 0)] - want).abs() < 1e-10);
    }

    #[test]
    fn unobservable_point_leaves_mode_untouched() {
        let s = spec1();
        let kind = ControlKind::Pointwise1D { x0: PI / 2.0 };
        let sys = ModalSystem::slice_1d(&s, 1, 4, &kind).unwrap();
        let q = ControlSignal::sampled(kind, vec![0.0, 0.3], vec![vec![5.0]], Quadrature::PiecewiseConstant).unwrap();
        let out = evolve(&sys, &ModalState::zeros(4, 1, 0.0), 0.3, Some(&q), None);
        assert!(out.coeffs[(1, 0)].abs() < 1e-14 && out.coeffs[(3, 0)].abs() < 1e-14);
        assert!(out.coeffs[(0, 0)].abs() > 0.1);
    }

    #[test]
    fn adjoint_examples() {
        let s = spec1();
        let rates = s.rate_matrix();
        let phi = DMatrix::from_fn(6, 4, |k, j| 1.0 / (1 + k + j) as f64);
        assert_eq!(adjoint_solution(&phi, 2.0, 2.0, &rates), phi);
        let single = DMatrix::from_fn(6, 1, |k, _| if k == 2 { 1.0 } else { 0.0 });
        let r1 = DMatrix::from_fn(6, 1, |k, _| rates[(k, 0)]);
        let p = adjoint_solution(&single, 0.1, 0.3, &r1);
        let obs = boundary_observation(&s, &p)[0];
        let want = (2.0 / PI).sqrt() * 3.0 * (r1[(2, 0)] * 0.2).exp();
        assert!((obs - want).abs() < 1e-12 * want.abs());
        let p0 = adjoint_solution(&phi, 0.0, 0.05, &rates);
        let parseval: f64 = phi.zip_map(&rates, |f, l| (2.0 * l * 0.05).exp() * f * f).sum();
        assert!((p0.norm_squared() - parseval).abs() < 1e-12 * parseval);
    }

    #[test]
    fn projection_of_polynomial_matches_sine_integrals() {
        let s = SpectrumSpec::new(PI, 0.0, CrossSection::Box(vec![PI]), 8, 6).unwrap();
        let f = |p: &[f64]| p[0] * (PI - p[0]) * p[1] * (PI - p[1]);
        let st = project_initial(&s, &f, 40).unwrap();
        // ∫₀^π x(π−x) √(2/π) sin(kx) dx = √(2/π)·4/k³ for odd k, else 0.
        let c = |k: usize| if k % 2 == 1 { (2.0 / PI).sqrt() * 4.0 / (k as f64).powi(3) } else { 0.0 };
        for k in 1..=8 {
            for j in 1..=6 {
                assert!((st.coeffs[(k - 1, j - 1)] - c(k) * c(j)).abs() < 1e-10, "k={k} j={j}");
            }
        }
        let b = project_initial(
            &s,
            &|p: &[f64]| (2.0 / PI) * p[0].sin() * p[1].sin(),
            16,
        )
        .unwrap();
        assert!((b.coeffs[(0, 0)] - 1.0).abs() < 1e-12 && b.coeffs.norm() - 1.0 < 1e-12);
        assert!(matches!(project_initial(&s, &f, 10), Err(KsError::QuadratureUnderResolved { .. })));
    }

    #[test]
    fn mass_matrix_full_and_partial() {
        let s = SpectrumSpec::new(PI, 0.0, CrossSection::Box(vec![PI]), 4, 5).unwrap();
        let m = mass_matrix(&s, &Omega::full(&[PI])).unwrap();
        assert_eq!(m, DMatrix::identity(5, 5));
        let om = Omega { intervals: vec![(0.3, 1.2)] };
        let m = mass_matrix(&s, &om).unwrap();
        // Gauss-Legendre oracle.
        let (x, w) = gauss_legendre(60, 0.9);
        for r in 0..5 {
            for c in 0..5 {
                let q: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(&y, &wt)| wt * (2.0 / PI) * ((r + 1) as f64 * (y + 0.3)).sin() * ((c + 1) as f64 * (y + 0.3)).sin())
                    .sum();
                assert!((m[(r, c)] - q).abs() < 1e-13);
            }
        }
    }
}
