//! Frequency-splitting null control on the box cylinder.
//!
//! The horizon is cut into windows `[a_k, a_k + 2T_k]` with cutoffs
//! `γ_k = β2^k`. In the first half of a window the modes of `E_{γ_k}` are
//! steered to zero; in the second half the state decays freely. Each active
//! half is split into a control interval of length `τ = ¾T_k` and a guard of
//! length `δ = ¼T_k`: the control kills every mode of `E_{γ_k}` whose decay
//! rate is below `cut/δ` at `a_k + τ`, and the guard damps the remaining ones
//! by at least `e^{−cut}`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biorthogonal::{fit_line, LineFit, K_BIO_MAX};
use crate::control_1d::{targets_from_state, MomentFamily};
use crate::dd::{gfun, Dd, DdMatrix};
use crate::error::{KsError, Result};
use crate::modal::{evolve, mass_matrix, ModalState, ModalSystem, SourceTrace};
use crate::pointwise::{minimal_time_estimate, PointSpec, Theta, TIME_MARGIN};
use crate::signal::{ControlKind, ControlSignal, ExpSegment, ExpTerm, Omega};
use crate::spectral::{critical_set_check, k0_index, n0_index, SpectrumSpec};

/// Default damping exponent of the guard interval.
pub const DEFAULT_CUT: f64 = 40.0;
/// Increment of the guard exponent after a failed postcondition.
pub const CUT_STEP: f64 = 20.0;
/// Attempts per active window.
pub const MAX_ATTEMPTS: usize = 4;
/// Relative size of `Π_{E_γ} u` required after an active phase.
pub const PROJECTION_TOL: f64 = 1e-8;
/// Gramian eigenvalue ratio below which the steering problem is refused.
pub const GRAMIAN_RATIO_MIN: f64 = 1e-13;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    /// `a_k`.
    pub start: f64,
    /// `T_k`, the length of each half.
    pub half: f64,
    /// `β2^k`.
    pub gamma_nominal: f64,
    /// Cutoff used, `min(γ_k, J_y)`.
    pub gamma: usize,
}

impl Window {
    pub fn guard(&self) -> f64 {
        0.25 * self.half
    }

    pub fn kill_time(&self) -> f64 {
        self.start + self.half - self.guard()
    }

    pub fn mid(&self) -> f64 {
        self.start + self.half
    }

    pub fn end(&self) -> f64 {
        self.start + 2.0 * self.half
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LrSchedule {
    pub horizon: f64,
    pub rho: f64,
    pub beta: f64,
    pub alpha: f64,
    pub windows: Vec<Window>,
    /// Start of the terminal free-decay segment.
    pub coast_start: f64,
    /// `Σ 2T_k / T` over the realized windows.
    pub realized_fraction: f64,
    /// `|Σ 2T_k + coast − T|`.
    pub closure_error: f64,
}

/// Default `β = max(2K₀, 4)`.
pub fn default_beta(spec: &SpectrumSpec) -> Result<f64> {
    Ok((2 * k0_index(spec)?).max(4) as f64)
}

pub fn build_schedule(t: f64, rho: f64, beta: f64, spec: &SpectrumSpec) -> Result<LrSchedule> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(KsError::InvalidInput(format!("horizon must be positive, got {t}")));
    }
    let upper = 1.0 / spec.cross_dims().max(1) as f64;
    if !(rho > 0.0 && rho < upper) {
        return Err(KsError::BadRho(rho));
    }
    let k0 = k0_index(spec)? as f64;
    if !(beta > k0) {
        return Err(KsError::BetaTooSmall { beta, min: k0 });
    }
    let alpha = beta * t * (1.0 - (-rho).exp2()) / 2.0;
    let mut windows = Vec::new();
    let mut start = 0.0;
    let mut k = 0;
    loop {
        let half = alpha / beta * (-(k as f64) * rho).exp2();
        let gamma_nominal = beta * (k as f64).exp2();
        let gamma = (gamma_nominal.floor() as usize).min(spec.j_y);
        windows.push(Window { index: k, start, half, gamma_nominal, gamma });
        start += 2.0 * half;
        if gamma >= spec.j_y {
            break;
        }
        k += 1;
    }
    let realized: f64 = windows.iter().map(|w| 2.0 * w.half).sum();
    let closure_error = (realized + (t - start) - t).abs();
    Ok(LrSchedule {
        horizon: t,
        rho,
        beta,
        alpha,
        windows,
        coast_start: start,
        realized_fraction: realized / t,
        closure_error,
    })
}

/// Actuator geometry.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    /// Boundary control on `{0} × ω`.
    BoundaryGamma { omega: Omega },
    /// Internal control on `{x₀} × ω`.
    InternalPoint { point: PointSpec, omega: Omega },
}

impl Geometry {
    pub fn omega(&self) -> &Omega {
        match self {
            Geometry::BoundaryGamma { omega } | Geometry::InternalPoint { omega, .. } => omega,
        }
    }
}

/// Synthesis used in the active phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveMode {
    /// Tensor when `ω = Ω_y`, Gramian otherwise.
    Auto,
    Tensor,
    Gramian,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LrParams {
    pub rho: f64,
    /// `None` selects `max(2K₀, 4)`.
    pub beta: Option<f64>,
    pub cut: f64,
    pub mode: ActiveMode,
}

impl Default for LrParams {
    fn default() -> Self {
        LrParams { rho: 0.5, beta: None, cut: DEFAULT_CUT, mode: ActiveMode::Auto }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GramianInfo {
    pub size: usize,
    pub min_eig: f64,
    pub max_eig: f64,
    /// Smallest to largest eigenvalue of the Jacobi-scaled Gramian.
    pub scaled_ratio: f64,
    pub log_inv_min_eig: f64,
    pub sqrt_mu_gamma: f64,
}

/// Outcome of one active phase.
#[derive(Clone, Debug)]
pub struct ActiveOutcome {
    pub segment: ExpSegment,
    /// State at `a_k + T_k`.
    pub state: ModalState,
    pub record: ActiveRecord,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActiveRecord {
    pub cut: f64,
    pub attempts: usize,
    pub kill_count: usize,
    pub control_norm: f64,
    /// `‖u_S(a_k + τ)‖/‖u(a_k)‖` over the killed modes.
    pub kill_residual: f64,
    /// `‖Π_{E_γ} u(a_k + T_k)‖/‖u(a_k)‖`, without the source over the guard.
    pub projection_residual: f64,
    /// `‖Π_{E_γ} u(a_k + T_k)‖` injected by the source over the guard.
    pub source_leak: f64,
    pub postcondition_met: bool,
    /// Largest relative moment error of the per-slice families (tensor mode).
    pub moment_residual: f64,
    pub gramian: Option<GramianInfo>,
}

fn kill_set(sys: &ModalSystem, gamma: usize, delta: f64, cut: f64) -> Vec<(usize, usize)> {
    let mut s = Vec::new();
    for j in 0..gamma {
        let mut count = 0;
        for k in 0..sys.n_x() {
            if -sys.rates[(k, j)] <= cut / delta && count < K_BIO_MAX {
                s.push((k, j));
                count += 1;
            }
        }
    }
    s
}

fn state_at(sys: &ModalSystem, state: &ModalState, t: f64, source: Option<&SourceTrace>) -> ModalState {
    evolve(sys, state, t, None, source)
}

fn tensor_terms(
    sys: &ModalSystem,
    spec: &SpectrumSpec,
    z: &ModalState,
    set: &[(usize, usize)],
    tau: f64,
    gamma: usize,
) -> Result<(Vec<Vec<ExpTerm>>, f64)> {
    let n0 = n0_index(spec).unwrap_or(usize::MAX);
    let per_slice = (0..gamma)
        .into_par_iter()
        .map(|j| -> Result<(Vec<ExpTerm>, f64)> {
            let ks: Vec<usize> = set.iter().filter(|p| p.1 == j).map(|p| p.0).collect();
            if ks.is_empty() {
                return Ok((Vec::new(), 0.0));
            }
            let rates: Vec<f64> = ks.iter().map(|&k| sys.rates[(k, j)]).collect();
            let gains: Vec<f64> = ks.iter().map(|&k| sys.input(k, j, j)).collect();
            let zs: Vec<f64> = ks.iter().map(|&k| z.coeffs[(k, j)]).collect();
            if zs.iter().all(|&v| v == 0.0) {
                return Ok((Vec::new(), 0.0));
            }
            let fam = MomentFamily::new(&rates, tau, j + 1 < n0)?;
            let targets = targets_from_state(&zs, &gains)?;
            let terms = fam.terms(&targets);
            let (_, rel) = fam.residual(&terms, &targets);
            Ok((terms, rel))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut channels = vec![Vec::new(); sys.channels()];
    let mut worst: f64 = 0.0;
    for (j, (terms, rel)) in per_slice.into_iter().enumerate() {
        channels[j] = terms;
        worst = worst.max(rel);
    }
    Ok((channels, worst))
}

fn sym_eigs(m: &DMatrix<f64>) -> (f64, f64) {
    let e = ((m + m.transpose()) * 0.5).symmetric_eigenvalues();
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn gramian_terms(
    sys: &ModalSystem,
    spec: &SpectrumSpec,
    z: &ModalState,
    set: &[(usize, usize)],
    tau: f64,
    window: usize,
    gamma: usize,
) -> Result<(Vec<Vec<ExpTerm>>, GramianInfo)> {
    let n = set.len();
    let neg: Vec<Dd> = set.iter().map(|&(k, j)| Dd::new(-sys.rates[(k, j)])).collect();
    let gain: Vec<f64> = set.iter().map(|&(k, _)| sys.xgain[k]).collect();
    let mut w = DdMatrix::zeros(n);
    for p in 0..n {
        for q in p..n {
            let m = sys.ycoupling[(set[p].1, set[q].1)];
            let v = if m == 0.0 { Dd::ZERO } else { gfun(neg[p] + neg[q], tau) * (gain[p] * gain[q]) * m };
            w.set(p, q, v);
            w.set(q, p, v);
        }
    }
    let wf = w.to_f64();
    let (min_eig, max_eig) = sym_eigs(&wf);
    let d: Vec<f64> = (0..n).map(|p| 1.0 / wf[(p, p)].abs().sqrt().max(1e-300)).collect();
    let scaled = DMatrix::from_fn(n, n, |p, q| wf[(p, q)] * d[p] * d[q]);
    let (smin, smax) = sym_eigs(&scaled);
    let scaled_ratio = smin / smax;
    let info = GramianInfo {
        size: n,
        min_eig,
        max_eig,
        scaled_ratio,
        log_inv_min_eig: -min_eig.abs().max(f64::MIN_POSITIVE).ln(),
        sqrt_mu_gamma: spec.mu(gamma).map(|m| m.sqrt()).unwrap_or(f64::NAN),
    };
    if !(scaled_ratio >= GRAMIAN_RATIO_MIN) {
        return Err(KsError::GramianSingular { window, ratio: scaled_ratio });
    }
    let mut ws = DdMatrix::zeros(n);
    for p in 0..n {
        for q in 0..n {
            ws.set(p, q, w.get(p, q) * d[p] * d[q]);
        }
    }
    let rhs: Vec<Dd> = set.iter().enumerate().map(|(p, &(k, j))| Dd::new(-z.coeffs[(k, j)]) * d[p]).collect();
    let lu = ws.lu().ok_or(KsError::GramianSingular { window, ratio: 0.0 })?;
    let mut eta = lu.solve(&rhs);
    for _ in 0..2 {
        let r = ws.mul_vec(&eta);
        let res: Vec<Dd> = rhs.iter().zip(&r).map(|(a, b)| *a - *b).collect();
        let corr = lu.solve(&res);
        for (e, c) in eta.iter_mut().zip(corr) {
            *e += c;
        }
    }
    let mut channels = vec![Vec::new(); sys.channels()];
    for (p, &(_, j)) in set.iter().enumerate() {
        let coef = eta[p] * d[p] * gain[p];
        channels[j].push(ExpTerm { coef, rate: neg[p] });
    }
    Ok((channels, info))
}

fn proj_norm(state: &ModalState, gamma: usize) -> f64 {
    state.low_y_norm(gamma)
}

fn active_phase(
    sys: &ModalSystem,
    spec: &SpectrumSpec,
    state: &ModalState,
    window: &Window,
    cut0: f64,
    gramian: bool,
    mass: Option<&DMatrix<f64>>,
    source: Option<&SourceTrace>,
) -> Result<ActiveOutcome> {
    let t_kill = window.kill_time();
    let tau = t_kill - window.start;
    let delta = window.guard();
    let z = state_at(sys, state, t_kill, source);
    let base = state.norm();
    let mut cut = cut0;
    let mut last = None;
    for attempt in 1..=MAX_ATTEMPTS {
        let set = kill_set(sys, window.gamma, delta, cut);
        let (channels, moment_residual, info) = if gramian {
            let (c, info) = gramian_terms(sys, spec, &z, &set, tau, window.index, window.gamma)?;
            (c, 0.0, Some(info))
        } else {
            let (c, r) = tensor_terms(sys, spec, &z, &set, tau, window.gamma)?;
            (c, r, None)
        };
        let segment = ExpSegment { start: window.start, end: t_kill, anchor: t_kill, channels };
        let mut sig = ControlSignal::analytic(
            ControlKind::Boundary1D,
            vec![window.start, t_kill],
            sys.channels(),
            vec![segment.clone()],
        )?;
        if let Some(m) = mass {
            sig = sig.with_mass(m.clone());
        }
        let at_kill = evolve(sys, state, t_kill, Some(&sig), source);
        let at_mid = evolve(sys, &at_kill, window.mid(), None, source);
        let killed = set.iter().map(|&(k, j)| at_kill.coeffs[(k, j)].powi(2)).sum::<f64>().sqrt();
        let rel = |x: f64| if base > 0.0 { x / base } else { x };
        let (projection_residual, source_leak) = match source {
            Some(f) if !f.is_empty() => {
                let homog = evolve(sys, &at_kill, window.mid(), None, None);
                let leak = ModalState { coeffs: &at_mid.coeffs - &homog.coeffs, time: homog.time };
                (rel(proj_norm(&homog, window.gamma)), proj_norm(&leak, window.gamma))
            }
            _ => (rel(proj_norm(&at_mid, window.gamma)), 0.0),
        };
        let record = ActiveRecord {
            cut,
            attempts: attempt,
            kill_count: set.len(),
            control_norm: sig.l2_norm(),
            kill_residual: rel(killed),
            projection_residual,
            source_leak,
            postcondition_met: projection_residual <= PROJECTION_TOL,
            moment_residual,
            gramian: info,
        };
        let done = record.postcondition_met;
        last = Some(ActiveOutcome { segment, state: at_mid, record });
        if done {
            break;
        }
        cut += CUT_STEP;
    }
    Ok(last.expect("at least one attempt"))
}

/// Per-slice moment synthesis on `[a_k, a_k + τ]` (requires `ω = Ω_y`).
pub fn active_phase_tensor(
    sys: &ModalSystem,
    spec: &SpectrumSpec,
    state: &ModalState,
    window: &Window,
    cut: f64,
    source: Option<&SourceTrace>,
) -> Result<ActiveOutcome> {
    let identity = (sys.ycoupling.clone() - DMatrix::identity(sys.channels(), sys.n_y())).abs().max() == 0.0;
    if !identity {
        return Err(KsError::InvalidInput("tensor synthesis needs ω equal to the cross-section".into()));
    }
    active_phase(sys, spec, state, window, cut, false, None, source)
}

/// Minimum-norm steering of the kill set through the mass-coupled channels.
pub fn active_phase_gramian(
    sys: &ModalSystem,
    spec: &SpectrumSpec,
    state: &ModalState,
    window: &Window,
    cut: f64,
    source: Option<&SourceTrace>,
) -> Result<ActiveOutcome> {
    let m = sys.ycoupling.clone();
    active_phase(sys, spec, state, window, cut, true, Some(&m), source)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PassiveRecord {
    pub orth_start: f64,
    pub orth_end: f64,
    /// `e^{λ_y(γ+1)T_k}`, absent when `γ = J_y`.
    pub bound_factor: Option<f64>,
    /// `‖Π_{E_γ} u‖` at the end of the phase.
    pub leak: f64,
}

/// Free decay over `[a_k + T_k, a_k + 2T_k]` with the dissipation check.
pub fn passive_phase(
    sys: &ModalSystem,
    spec: &SpectrumSpec,
    state: &ModalState,
    window: &Window,
    source: Option<&SourceTrace>,
) -> Result<(ModalState, PassiveRecord)> {
    let out = evolve(sys, state, window.end(), None, source);
    let orth = |s: &ModalState| {
        let n = s.coeffs.ncols();
        s.coeffs.columns(window.gamma, n - window.gamma).norm()
    };
    let (o0, o1) = (orth(state), orth(&out));
    let bound_factor = if window.gamma < spec.j_y {
        Some((spec.lambda_y(window.gamma + 1)? * (window.end() - state.time)).exp())
    } else {
        None
    };
    if let (Some(f), true) = (bound_factor, source.map_or(true, |s| s.is_empty())) {
        if o1 > f * o0 * (1.0 + 1e-10) {
            return Err(KsError::DissipationViolated { window: window.index, lhs: o1, rhs: f * o0 });
        }
    }
    let record = PassiveRecord { orth_start: o0, orth_end: o1, bound_factor, leak: proj_norm(&out, window.gamma) };
    Ok((out, record))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: Window,
    pub norm_start: f64,
    pub norm_mid: f64,
    pub norm_end: f64,
    pub active: ActiveRecord,
    pub passive: PassiveRecord,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LrReport {
    pub schedule: LrSchedule,
    pub mode: ActiveMode,
    pub windows: Vec<WindowReport>,
    pub coast_norm_end: f64,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub final_relative: f64,
    pub total_control_norm: f64,
    /// `log‖u(a_{k+1})‖` against `2^{k(4/(N−1) − ρ)}`.
    pub window_fit: Option<LineFit>,
    /// Window-start norms decrease from the second window on.
    pub eventually_decreasing: bool,
    /// `log(1/λ_min)` against `√μ_γ` over the Gramian windows.
    pub gramian_fit: Option<LineFit>,
    pub t_hat: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct LrRun {
    pub control: ControlSignal,
    pub report: LrReport,
    /// States at `0`, every `a_k`, `a_k + T_k` and `T`.
    pub trace: Vec<ModalState>,
}

/// Kind, input system and mass matrix for a geometry.
pub fn geometry_system(spec: &SpectrumSpec, geometry: &Geometry) -> Result<(ControlKind, ModalSystem)> {
    let kind = match geometry {
        Geometry::BoundaryGamma { omega } => ControlKind::BoundaryNd { omega: omega.clone() },
        Geometry::InternalPoint { point, omega } => {
            let theta = Theta::resolve(&point.x0_over_a)?;
            ControlKind::PointwiseNd { x0: theta.to_f64() * spec.a, omega: omega.clone() }
        }
    };
    let mut sys = ModalSystem::nd(spec, &kind)?;
    if let Geometry::InternalPoint { point, .. } = geometry {
        let theta = Theta::resolve(&point.x0_over_a)?;
        for k in 0..sys.n_x() {
            sys.xgain[k] = (2.0 / spec.a).sqrt() * theta.sin_k(k as u64 + 1);
        }
    }
    Ok((kind, sys))
}

/// Full frequency-splitting run on `[0, T]`.
pub fn run_lr(
    u0: &ModalState,
    t: f64,
    spec: &SpectrumSpec,
    geometry: &Geometry,
    params: &LrParams,
    source: Option<&SourceTrace>,
) -> Result<LrRun> {
    critical_set_check(spec, 4).require_clear()?;
    if u0.coeffs.nrows() != spec.k_x || u0.coeffs.ncols() != spec.j_y {
        return Err(KsError::InvalidInput("initial state does not match the truncation".into()));
    }
    let omega = geometry.omega();
    let full = match spec.box_dims() {
        Some(d) => omega.intervals.is_empty() || omega.is_full(d),
        None => true,
    };
    let mode = match params.mode {
        ActiveMode::Auto if full => ActiveMode::Tensor,
        ActiveMode::Auto => ActiveMode::Gramian,
        m => m,
    };
    if mode == ActiveMode::Tensor && !full {
        return Err(KsError::InvalidInput("tensor synthesis needs ω equal to the cross-section".into()));
    }
    let mut t_hat = None;
    if let Geometry::InternalPoint { point, .. } = geometry {
        let mt = minimal_time_estimate(point, spec.a)?;
        if full && t <= (1.0 + TIME_MARGIN) * mt.t_hat {
            return Err(KsError::BelowMinimalTime { t, t_hat: mt.t_hat });
        }
        t_hat = Some(mt.t_hat);
    }
    let beta = match params.beta {
        Some(b) => b,
        None => default_beta(spec)?,
    };
    let schedule = build_schedule(t, params.rho, beta, spec)?;
    let (kind, sys) = geometry_system(spec, geometry)?;
    let mass = if full { DMatrix::identity(spec.j_y, spec.j_y) } else { mass_matrix(spec, omega)? };

    let mut state = ModalState { coeffs: u0.coeffs.clone(), time: 0.0 };
    let mut trace = vec![state.clone()];
    let mut segments = Vec::new();
    let mut windows = Vec::new();
    for w in &schedule.windows {
        let norm_start = state.norm();
        let active = match mode {
            ActiveMode::Gramian => active_phase_gramian(&sys, spec, &state, w, params.cut, source)?,
            _ => active_phase_tensor(&sys, spec, &state, w, params.cut, source)?,
        };
        let mid = active.state.clone();
        trace.push(mid.clone());
        let (end, passive) = passive_phase(&sys, spec, &mid, w, source)?;
        trace.push(end.clone());
        windows.push(WindowReport {
            window: w.clone(),
            norm_start,
            norm_mid: mid.norm(),
            norm_end: end.norm(),
            active: active.record,
            passive,
        });
        segments.push(active.segment);
        state = end;
    }
    let final_state = evolve(&sys, &state, t, None, source);
    trace.push(final_state.clone());

    let mut grid: Vec<f64> = vec![0.0];
    for w in &schedule.windows {
        grid.extend([w.kill_time(), w.mid(), w.end()]);
    }
    if t > *grid.last().unwrap() {
        grid.push(t);
    }
    grid.dedup_by(|a, b| (*a - *b).abs() <= 0.0);
    let control = ControlSignal::analytic(kind, grid, sys.channels(), segments)?.with_mass(mass);

    let initial_norm = u0.norm();
    let final_norm = final_state.norm();
    let nd = spec.cross_dims().max(1) as f64;
    let expo = 4.0 / nd - params.rho;
    let pts: Vec<(f64, f64)> = windows
        .iter()
        .filter(|r| r.norm_end > 0.0)
        .map(|r| ((r.window.index as f64 * expo).exp2(), r.norm_end.ln()))
        .collect();
    let window_fit = (pts.len() >= 2).then(|| fit_line(&pts));
    let starts: Vec<f64> = windows.iter().map(|r| r.norm_start).chain([final_norm]).collect();
    let eventually_decreasing = starts.len() < 3 || starts[1..].windows(2).all(|w| w[1] <= w[0]);
    let gpts: Vec<(f64, f64)> = windows
        .iter()
        .filter_map(|r| r.active.gramian.as_ref().map(|g| (g.sqrt_mu_gamma, g.log_inv_min_eig)))
        .collect();
    let gramian_fit = (gpts.len() >= 2).then(|| fit_line(&gpts));
    let report = LrReport {
        schedule,
        mode,
        windows,
        coast_norm_end: final_norm,
        initial_norm,
        final_norm,
        final_relative: if initial_norm > 0.0 { final_norm / initial_norm } else { final_norm },
        total_control_norm: control.l2_norm(),
        window_fit,
        eventually_decreasing,
        gramian_fit,
        t_hat,
    };
    Ok(LrRun { control, report, trace })
}

/// `t,j,value` rows of an N-D control sampled per window.
pub fn control_csv(q: &ControlSignal, samples_per_segment: usize) -> String {
    let mut out = String::from("t,j,value\n");
    for seg in q.segments() {
        for i in 0..samples_per_segment {
            let t = seg.start + (seg.end - seg.start) * i as f64 / (samples_per_segment - 1) as f64;
            for c in 0..q.channels {
                if seg.channels[c].is_empty() {
                    continue;
                }
                out.push_str(&format!("{t:e},{},{:e}\n", c + 1, seg.value(c, t)));
            }
        }
    }
    out
}

/// Control cost `‖q‖/‖u0‖` of full runs over several horizons.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LrCostFit {
    pub samples: Vec<(f64, f64)>,
    /// Fit of `log cost` against `1/T`; the slope estimates `C` in `e^{C/T}`.
    pub fit: LineFit,
}

pub fn lr_cost_fit(
    u0: &ModalState,
    horizons: &[f64],
    spec: &SpectrumSpec,
    geometry: &Geometry,
    params: &LrParams,
) -> Result<LrCostFit> {
    let n0 = u0.norm();
    let mut samples = Vec::new();
    for &t in horizons {
        let run = run_lr(u0, t, spec, geometry, params, None)?;
        samples.push((t, run.report.total_control_norm / n0));
    }
    let pts: Vec<(f64, f64)> = samples.iter().filter(|s| s.1 > 0.0).map(|&(t, c)| (1.0 / t, c.ln())).collect();
    Ok(LrCostFit { samples, fit: fit_line(&pts) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::CrossSection;
    use std::f64::consts::PI;

    #[test]
    fn schedule_geometry() {
        let s = SpectrumSpec::new(PI, 0.0, CrossSection::Box(vec![PI]), 8, 16).unwrap();
        let sch = build_schedule(1.0, 0.5, 4.0, &s).unwrap();
        let t0 = (1.0 - 0.5f64.sqrt()) / 2.0;
        assert!((sch.windows[0].half - t0).abs() < 1e-15);
        for w in sch.windows.windows(2) {
            assert!((w[1].half / w[0].half - 0.5f64.sqrt()).abs() < 1e-14);
            assert_eq!(w[1].gamma_nominal, 2.0 * w[0].gamma_nominal);
        }
        assert_eq!(sch.windows.iter().map(|w| w.gamma).collect::<Vec<_>>(), vec![4, 8, 16]);
        assert!(sch.closure_error < 1e-12);
        assert!(matches!(build_schedule(1.0, 1.0, 4.0, &s), Err(KsError::BadRho(_))));
        assert!(matches!(build_schedule(1.0, 0.5, 1.0, &s), Err(KsError::BetaTooSmall { .. })));
    }
}
