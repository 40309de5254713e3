//! Local null control of `u_t + Δ²u + νΔu + ½|∇u|² = control` by the source-term method.
//!
//! The quadratic term is treated as a source `f = −½|∇u|²` of the linear
//! controlled problem and the pair (state, source) is iterated to a fixed
//! point in spaces weighted by `ρ₀` and `ρ_F`, which vanish at `t = T`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biorthogonal::LineFit;
use crate::error::{KsError, Result};
use crate::lr::{geometry_system, lr_cost_fit, run_lr, Geometry, LrParams, LrRun, LrSchedule};
use crate::modal::{evolve, simulate, ModalState, ModalSystem, SourceTrace};
use crate::rhs::{nonlinear_rhs, required_resolution};
use crate::signal::{phi1, phi2, ControlSignal};
use crate::spectral::SpectrumSpec;

/// Default weight exponent `q`.
pub const DEFAULT_Q: f64 = 1.2;
/// Contraction ratio above which an iterate counts as a strike.
pub const STRIKE_RATIO: f64 = 0.9;
/// Consecutive strikes before the iteration is abandoned.
pub const MAX_STRIKES: usize = 3;
/// Largest log-ratio of a weighted quantity before it is declared unrepresentable.
const LOG_RATIO_MAX: f64 = 700.0;
/// Step-halving tolerance of the nonlinear integrator, relative to `‖u0‖`.
pub const STEP_TOL: f64 = 1e-6;

/// `p = 1.2·q²/(2 − q²)`.
pub fn default_p(q: f64) -> f64 {
    1.2 * q * q / (2.0 - q * q)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WeightPair {
    pub p: f64,
    pub q: f64,
    /// Control-cost constant in the exponents.
    pub c: f64,
    pub horizon: f64,
}

impl WeightPair {
    pub fn new(c: f64, horizon: f64, q: f64, p: f64) -> Result<Self> {
        if !(q > 1.0 && q < 2f64.sqrt()) {
            return Err(KsError::InvalidInput(format!("weight exponent q = {q} is outside (1, √2)")));
        }
        let floor = q * q / (2.0 - q * q);
        if !(p > floor) {
            return Err(KsError::InvalidInput(format!("weight exponent p = {p} must exceed {floor}")));
        }
        if !(c > 0.0 && c.is_finite() && horizon > 0.0) {
            return Err(KsError::InvalidInput("cost constant and horizon must be positive".into()));
        }
        Ok(WeightPair { p, q, c, horizon })
    }

    pub fn with_defaults(c: f64, horizon: f64) -> Result<Self> {
        Self::new(c, horizon, DEFAULT_Q, default_p(DEFAULT_Q))
    }

    /// `ln ρ₀(t) = −pC/((q−1)(T−t))`.
    pub fn log_rho0(&self, t: f64) -> f64 {
        let r = self.horizon - t;
        if r <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -self.p * self.c / ((self.q - 1.0) * r)
    }

    /// `ln ρ_F(t) = −(1+p)q²C/((q−1)(T−t))`.
    pub fn log_rho_f(&self, t: f64) -> f64 {
        let r = self.horizon - t;
        if r <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -(1.0 + self.p) * self.q * self.q * self.c / ((self.q - 1.0) * r)
    }

    pub fn rho0(&self, t: f64) -> f64 {
        self.log_rho0(t).exp()
    }

    pub fn rho_f(&self, t: f64) -> f64 {
        self.log_rho_f(t).exp()
    }
}

/// `x/ρ` from `x ≥ 0` and `ln ρ`, with `0/0 = 0`.
fn divide(x: f64, log_rho: f64, t: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(0.0);
    }
    let l = x.ln() - log_rho;
    if !(l <= LOG_RATIO_MAX) {
        return Err(KsError::WeightUnderflow { t });
    }
    Ok(l.exp())
}

/// `∫ g` for nonnegative samples, exact when `g` is exponential on each interval.
fn trapezoid(times: &[f64], vals: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| {
            let h = t[1] - t[0];
            if v[0] > 0.0 && v[1] > 0.0 {
                let l = (v[1] / v[0]).ln();
                if l.abs() > 1e-6 {
                    return h * (v[1] - v[0]) / l;
                }
            }
            0.5 * h * (v[0] + v[1])
        })
        .sum()
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct WeightedNorms {
    /// `sup ‖u/ρ₀‖`.
    pub u_sup: f64,
    /// `‖Δu/ρ₀‖` in `L²(0, t_c; L²)`.
    pub u_h2: f64,
    /// `‖q/ρ₀‖` in `L²(0, t_c; L²(ω))`.
    pub control: f64,
    /// `‖f/ρ_F‖` in `L²(0, t_c; L²)`.
    pub source: f64,
    /// Upper end of the integration range.
    pub until: f64,
}

fn laplacian_norm(spec: &SpectrumSpec, c: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..c.ncols() {
        let mu = spec.mu(j + 1).unwrap_or(0.0);
        for k in 0..c.nrows() {
            let kappa = ((k + 1) as f64 * std::f64::consts::PI / spec.a).powi(2);
            s += ((kappa + mu) * c[(k, j)]).powi(2);
        }
    }
    s.sqrt()
}

/// `‖q(t±)‖_{L²(ω)}`: one-sided limits at the segment ends.
fn control_norm_at(q: &ControlSignal, t: f64, right: bool) -> f64 {
    let v: Vec<f64> = if q.segments().is_empty() {
        q.value(t)
    } else {
        (0..q.channels)
            .map(|c| {
                q.segments()
                    .iter()
                    .filter(|s| if right { t >= s.start && t < s.end } else { t > s.start && t <= s.end })
                    .map(|s| s.value(c, t))
                    .sum()
            })
            .collect()
    };
    let mut s = 0.0;
    for c in 0..v.len() {
        for d in 0..v.len() {
            let m = match &q.mass {
                Some(m) => m[(c, d)],
                None => f64::from(u8::from(c == d)),
            };
            s += m * v[c] * v[d];
        }
    }
    s.max(0.0).sqrt()
}

/// `∫ g` from one-sided samples `(g(t_i+), g(t_{i+1}−))` per interval.
fn integrate_pairs(times: &[f64], pairs: &[(f64, f64)]) -> f64 {
    let ts: Vec<f64> = times.to_vec();
    ts.windows(2).zip(pairs).map(|(t, &(a, b))| trapezoid(t, &[a, b])).sum()
}

/// Weighted norms over the grid points `t ≤ until < T`.
pub fn weighted_norms(
    spec: &SpectrumSpec,
    times: &[f64],
    states: &[ModalState],
    control: Option<&ControlSignal>,
    source: Option<&SourceTrace>,
    weights: &WeightPair,
    until: f64,
) -> Result<WeightedNorms> {
    let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] <= until && times[i] < weights.horizon).collect();
    let ts: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
    let mut out = WeightedNorms { until, ..Default::default() };
    let mut h2 = Vec::with_capacity(idx.len());
    let mut qv = Vec::with_capacity(idx.len());
    let mut fv = Vec::with_capacity(idx.len());
    for &i in &idx {
        let t = times[i];
        let l0 = weights.log_rho0(t);
        out.u_sup = out.u_sup.max(divide(states[i].norm(), l0, t)?);
        h2.push(divide(laplacian_norm(spec, &states[i].coeffs), l0, t)?.powi(2));
        qv.push(match control {
            Some(q) => (
                divide(control_norm_at(q, t, true), l0, t)?.powi(2),
                divide(control_norm_at(q, t, false), l0, t)?.powi(2),
            ),
            None => (0.0, 0.0),
        });
        fv.push(match source {
            Some(f) if !f.is_empty() => divide(f.values[i].norm(), weights.log_rho_f(t), t)?.powi(2),
            _ => 0.0,
        });
    }
    out.u_h2 = trapezoid(&ts, &h2).sqrt();
    let pairs: Vec<(f64, f64)> = qv.windows(2).map(|w| (w[0].0, w[1].1)).collect();
    out.control = integrate_pairs(&ts, &pairs).sqrt();
    out.source = trapezoid(&ts, &fv).sqrt();
    Ok(out)
}

/// `‖(f − g)/ρ_F‖` over the grid points `t ≤ until`.
pub fn source_distance(f: &SourceTrace, g: &SourceTrace, weights: &WeightPair, until: f64) -> Result<f64> {
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (i, &t) in f.times.iter().enumerate() {
        if t > until || t >= weights.horizon {
            break;
        }
        ts.push(t);
        vs.push(divide((&f.values[i] - &g.values[i]).norm(), weights.log_rho_f(t), t)?.powi(2));
    }
    Ok(trapezoid(&ts, &vs).sqrt())
}

/// Time grid with step `≤ 1e−3·T`, refined to `≤ δ/(32·cut)` over `[a_k + T_k/4, a_k + T_k]`.
pub fn control_grid(schedule: &LrSchedule, cut: f64) -> Vec<f64> {
    let t = schedule.horizon;
    let coarse = 1e-3 * t;
    let mut marks = vec![(0.0, coarse)];
    for w in &schedule.windows {
        let fine = (w.guard() / (32.0 * cut)).min(coarse);
        let kill = w.kill_time();
        marks.push((kill - 2.0 * w.guard(), fine));
        marks.push((kill, fine));
        marks.push((w.mid(), coarse));
        marks.push((w.end(), coarse));
    }
    marks.push((t, coarse));
    marks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut grid = vec![0.0];
    for pair in marks.windows(2) {
        let (a, h) = pair[0];
        let b = pair[1].0;
        if b <= a {
            continue;
        }
        let n = ((b - a) / h).ceil().max(1.0) as usize;
        for i in 1..=n {
            grid.push(if i == n { b } else { a + (b - a) * i as f64 / n as f64 });
        }
    }
    grid.dedup_by(|x, y| *x <= *y);
    grid
}

fn halve(grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * grid.len());
    for w in grid.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(*grid.last().unwrap());
    out
}

/// Linear controlled solve with source, sampled on `grid`.
#[derive(Clone, Debug)]
pub struct ControlledSolve {
    pub run: LrRun,
    pub times: Vec<f64>,
    pub states: Vec<ModalState>,
}

impl ControlledSolve {
    /// End of the last active half window.
    pub fn active_end(&self) -> f64 {
        self.run.report.schedule.windows.last().map_or(0.0, |w| w.mid())
    }
}

pub fn controlled_solve_with_source(
    u0: &ModalState,
    source: Option<&SourceTrace>,
    t: f64,
    spec: &SpectrumSpec,
    geometry: &Geometry,
    params: &LrParams,
    grid: &[f64],
) -> Result<ControlledSolve> {
    let run = run_lr(u0, t, spec, geometry, params, source)?;
    let (_, sys) = geometry_system(spec, geometry)?;
    let states = simulate(&sys, u0, grid, Some(&run.control), source);
    Ok(ControlledSolve { run, times: grid.to_vec(), states })
}

/// `−½|∇u|²` at every state of a trace.
pub fn source_of(spec: &SpectrumSpec, times: &[f64], states: &[ModalState]) -> Result<SourceTrace> {
    let n = required_resolution(spec)?;
    let values = states.par_iter().map(|s| nonlinear_rhs(spec, &s.coeffs, n)).collect::<Result<Vec<_>>>()?;
    Ok(SourceTrace { times: times.to_vec(), values })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    /// `‖(f⁽ⁿ⁾ − f⁽ⁿ⁻¹⁾)/ρ_F‖`.
    pub delta_f: f64,
    pub ratio: Option<f64>,
    pub control_norm: f64,
    pub linear_final_relative: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixedPointParams {
    pub horizon: f64,
    /// Relative stopping tolerance on `‖Δf/ρ_F‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub lr: LrParams,
    pub q: f64,
    pub p: f64,
    /// Cost constant; `None` fits it from linear runs over `T ∈ [0.25, 1]`.
    pub cost_constant: Option<f64>,
}

impl Default for FixedPointParams {
    fn default() -> Self {
        FixedPointParams {
            horizon: 1.0,
            tol: 1e-9,
            max_iter: 30,
            lr: LrParams::default(),
            q: DEFAULT_Q,
            p: default_p(DEFAULT_Q),
            cost_constant: None,
        }
    }
}

/// Floor of the fitted cost constant.
pub const COST_CONSTANT_FLOOR: f64 = 0.1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostConstant {
    pub c: f64,
    pub fit: Option<LineFit>,
    pub samples: Vec<(f64, f64)>,
}

/// `C` from `ln(‖q‖/‖u0‖)` against `1/T` for `T ∈ {0.25, 0.5, 0.75, 1}`, floored at `COST_CONSTANT_FLOOR`.
pub fn fit_cost_constant(
    u0: &ModalState,
    spec: &SpectrumSpec,
    geometry: &Geometry,
    params: &LrParams,
) -> Result<CostConstant> {
    if u0.norm() == 0.0 {
        return Ok(CostConstant { c: COST_CONSTANT_FLOOR, fit: None, samples: Vec::new() });
    }
    let f = lr_cost_fit(u0, &[0.25, 0.5, 0.75, 1.0], spec, geometry, params)?;
    Ok(CostConstant { c: f.fit.slope.max(COST_CONSTANT_FLOOR), fit: Some(f.fit), samples: f.samples })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verification {
    pub final_norm: f64,
    pub final_relative: f64,
    pub step_discrepancy: f64,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct FixedPointOutcome {
    pub control: ControlSignal,
    pub solve: ControlledSolve,
    pub source: SourceTrace,
    pub weights: WeightPair,
    pub cost: CostConstant,
    pub log: Vec<IterationRecord>,
    pub norms: WeightedNorms,
    pub verification: Verification,
    pub nonlinear: NonlinearTrace,
}

/// Picard iteration on the source, followed by an independent nonlinear closed-loop run.
pub fn fixed_point(
    u0: &ModalState,
    spec: &SpectrumSpec,
    geometry: &Geometry,
    params: &FixedPointParams,
) -> Result<FixedPointOutcome> {
    let t = params.horizon;
    let cost = match params.cost_constant {
        Some(c) => CostConstant { c, fit: None, samples: Vec::new() },
        None => fit_cost_constant(u0, spec, geometry, &params.lr)?,
    };
    let weights = WeightPair::new(cost.c, t, params.q, params.p)?;
    let first = run_lr(u0, t, spec, geometry, &params.lr, None)?;
    let grid = control_grid(&first.report.schedule, params.lr.cut);
    let mut source = SourceTrace { times: grid.clone(), values: vec![DMatrix::zeros(spec.k_x, spec.j_y); grid.len()] };
    let mut log: Vec<IterationRecord> = Vec::new();
    let mut strikes = 0;
    let mut last_delta: Option<f64> = None;
    for n in 1..=params.max_iter {
        let solve = controlled_solve_with_source(u0, Some(&source), t, spec, geometry, &params.lr, &grid)?;
        let until = solve.active_end();
        let next = source_of(spec, &grid, &solve.states)?;
        let delta = source_distance(&next, &source, &weights, until)?;
        let scale = weighted_norms(spec, &grid, &solve.states, None, Some(&next), &weights, until)?.source;
        let ratio = last_delta.map(|d| if d > 0.0 { delta / d } else { 0.0 });
        log.push(IterationRecord {
            n,
            delta_f: delta,
            ratio,
            control_norm: solve.run.report.total_control_norm,
            linear_final_relative: solve.run.report.final_relative,
        });
        if !delta.is_finite() || !scale.is_finite() {
            return Err(KsError::NoContraction { iteration: n, ratio: f64::INFINITY });
        }
        if let Some(r) = ratio {
            strikes = if r > STRIKE_RATIO { strikes + 1 } else { 0 };
            if strikes >= MAX_STRIKES {
                return Err(KsError::NoContraction { iteration: n, ratio: r });
            }
        }
        let converged = delta <= params.tol * scale || delta == 0.0;
        source = next;
        last_delta = Some(delta);
        if converged {
            let solve = controlled_solve_with_source(u0, Some(&source), t, spec, geometry, &params.lr, &grid)?;
            let norms = weighted_norms(
                spec,
                &grid,
                &solve.states,
                Some(&solve.run.control),
                Some(&source),
                &weights,
                solve.active_end(),
            )?;
            let nonlinear = nonlinear_simulate(u0, Some(&solve.run.control), spec, geometry, &grid)?;
            let final_norm = nonlinear.final_state().norm();
            let n0 = u0.norm();
            let verification = Verification {
                final_norm,
                final_relative: if n0 > 0.0 { final_norm / n0 } else { final_norm },
                step_discrepancy: nonlinear.step_discrepancy,
                steps: nonlinear.times.len() - 1,
            };
            return Ok(FixedPointOutcome {
                control: solve.run.control.clone(),
                solve,
                source,
                weights,
                cost,
                log,
                norms,
                verification,
                nonlinear,
            });
        }
    }
    let r = log.last().and_then(|l| l.ratio).unwrap_or(f64::NAN);
    Err(KsError::NoContraction { iteration: params.max_iter, ratio: r })
}

/// Smallest scale `s ∈ [lo, hi]` of `shape` at which the iteration stops contracting (bisection).
pub fn locality_radius(
    shape: &ModalState,
    spec: &SpectrumSpec,
    geometry: &Geometry,
    params: &FixedPointParams,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<f64> {
    let cost = fit_cost_constant(shape, spec, geometry, &params.lr)?;
    let p = FixedPointParams { cost_constant: Some(cost.c), ..params.clone() };
    let converges = |s: f64| -> Result<bool> {
        let u = ModalState { coeffs: &shape.coeffs * s, time: 0.0 };
        match fixed_point(&u, spec, geometry, &p) {
            Ok(_) => Ok(true),
            Err(KsError::NoContraction { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let (mut a, mut b) = (lo, hi);
    for _ in 0..steps {
        let m = (a * b).sqrt();
        if converges(m)? {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(a * shape.norm())
}

#[derive(Clone, Debug)]
pub struct NonlinearTrace {
    pub times: Vec<f64>,
    pub states: Vec<ModalState>,
    /// `|‖u_h(T)‖ − ‖u_{h/2}(T)‖|/‖u0‖`.
    pub step_discrepancy: f64,
}

impl NonlinearTrace {
    pub fn final_state(&self) -> &ModalState {
        self.states.last().unwrap()
    }
}

fn etd2(
    sys: &ModalSystem,
    spec: &SpectrumSpec,
    n: usize,
    u0: &ModalState,
    control: Option<&ControlSignal>,
    grid: &[f64],
) -> Result<Vec<ModalState>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut u = ModalState { coeffs: u0.coeffs.clone(), time: grid[0] };
    out.push(u.clone());
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        let nl = nonlinear_rhs(spec, &u.coeffs, n)?;
        let lin = evolve(sys, &u, w[1], control, None);
        let p1 = sys.rates.map(|l| h * phi1(l * h));
        let p2 = sys.rates.map(|l| h * phi2(l * h));
        let pred = &lin.coeffs + p1.component_mul(&nl);
        let nl_pred = nonlinear_rhs(spec, &pred, n)?;
        let coeffs = pred + p2.component_mul(&(nl_pred - &nl));
        if !coeffs.iter().all(|v| v.is_finite()) {
            return Err(KsError::StepUnconverged { t: w[1], discrepancy: f64::INFINITY });
        }
        u = ModalState { coeffs, time: w[1] };
        out.push(u.clone());
    }
    Ok(out)
}

/// Exponential time differencing (second order) of the nonlinear system under `control`.
///
/// The grid is used as given and once halved; the halved run is returned.
pub fn nonlinear_simulate(
    u0: &ModalState,
    control: Option<&ControlSignal>,
    spec: &SpectrumSpec,
    geometry: &Geometry,
    grid: &[f64],
) -> Result<NonlinearTrace> {
    let horizon = *grid.last().unwrap();
    if grid.windows(2).any(|w| w[1] - w[0] > 1e-3 * (horizon - grid[0]) * (1.0 + 1e-9)) {
        return Err(KsError::InvalidInput("nonlinear steps must not exceed 1e-3·T".into()));
    }
    let (_, sys) = geometry_system(spec, geometry)?;
    let n = required_resolution(spec)?;
    let coarse = etd2(&sys, spec, n, u0, control, grid)?;
    let fine_grid = halve(grid);
    let fine = etd2(&sys, spec, n, u0, control, &fine_grid)?;
    let a = coarse.last().unwrap().norm();
    let b = fine.last().unwrap().norm();
    let n0 = u0.norm();
    let step_discrepancy = if n0 > 0.0 { (a - b).abs() / n0 } else { (a - b).abs() };
    if step_discrepancy > STEP_TOL {
        return Err(KsError::StepUnconverged { t: horizon, discrepancy: step_discrepancy });
    }
    Ok(NonlinearTrace { times: fine_grid, states: fine, step_discrepancy })
}

/// `t,‖u‖` rows of a trace.
pub fn norm_csv(times: &[f64], states: &[ModalState]) -> String {
    let mut out = String::from("t,norm\n");
    for (t, s) in times.iter().zip(states) {
        out.push_str(&format!("{t:e},{:e}\n", s.norm()));
    }
    out
}

/// `n,delta_f,ratio` rows of an iteration log.
pub fn iteration_csv(log: &[IterationRecord]) -> String {
    let mut out = String::from("n,delta_f,ratio\n");
    for r in log {
        let ratio = r.ratio.map_or(String::new(), |x| format!("{x:e}"));
        out.push_str(&format!("{},{:e},{ratio}\n", r.n, r.delta_f));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_follow_their_exponents() {
        let w = WeightPair::with_defaults(2.0, 1.0).unwrap();
        for &t in &[0.0, 0.3, 0.9, 0.999] {
            let want0 = (-w.p * 2.0 / (0.2 * (1.0 - t))).exp();
            let want_f = (-(1.0 + w.p) * 1.44 * 2.0 / (0.2 * (1.0 - t))).exp();
            assert!((w.rho0(t) - want0).abs() <= 1e-12 * want0);
            assert!((w.rho_f(t) - want_f).abs() <= 1e-12 * want_f.max(f64::MIN_POSITIVE));
        }
        assert_eq!(w.rho0(1.0), 0.0);
        assert_eq!(w.rho_f(1.0), 0.0);
        assert!(WeightPair::new(1.0, 1.0, 1.5, 10.0).is_err());
        assert!(WeightPair::new(1.0, 1.0, 1.2, 2.0).is_err());
    }

    #[test]
    fn halving_keeps_the_endpoints() {
        let g = halve(&[0.0, 0.5, 1.0]);
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
