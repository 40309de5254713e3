//! Control signals and their exact Duhamel responses.
//!
//! A signal is either sampled data on a time grid (piecewise constant or
//! piecewise linear) or an analytic sum of exponentials per channel. Analytic
//! signals come out of the moment solvers and carry double-double
//! coefficients. Their responses are evaluated in closed form with all
//! exponents combined before exponentiation, so large cancelling
//! coefficients reproduce the moments they were built for.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dd::{gfun, Dd};
use crate::error::{KsError, Result};

/// Where the control acts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ControlKind {
    /// `∂²ₓv(t, 0) = q(t)` on an interval.
    Boundary1D,
    /// `δ_{x0}·h(t)` on an interval.
    Pointwise1D { x0: f64 },
    /// Boundary control on `{0} × ω`.
    BoundaryNd { omega: Omega },
    /// Internal control on `{x0} × ω`.
    PointwiseNd { x0: f64, omega: Omega },
}

/// Box support `ω = Π [lo_i, hi_i]` inside the cross-section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Omega {
    pub intervals: Vec<(f64, f64)>,
}

impl Omega {
    pub fn full(dims: &[f64]) -> Self {
        Omega { intervals: dims.iter().map(|&b| (0.0, b)).collect() }
    }

    pub fn is_full(&self, dims: &[f64]) -> bool {
        self.intervals.len() == dims.len()
            && self.intervals.iter().zip(dims).all(|(iv, &b)| iv.0 <= 0.0 && iv.1 >= b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    PiecewiseConstant,
    PiecewiseLinear,
}

/// `coef·e^{rate·(t − anchor)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub coef: Dd,
    pub rate: Dd,
}

/// Exponential sums active on `[start, end]`, one list per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpSegment {
    pub start: f64,
    pub end: f64,
    pub anchor: f64,
    pub channels: Vec<Vec<ExpTerm>>,
}

impl ExpSegment {
    pub fn value(&self, c: usize, t: f64) -> f64 {
        if t < self.start || t > self.end {
            return 0.0;
        }
        let dt = t - self.anchor;
        self.channels[c].iter().map(|term| term.coef * (term.rate * dt).exp()).sum::<Dd>().to_f64()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SignalBody {
    /// One row per grid interval (piecewise constant) or per grid node (piecewise linear).
    Sampled { values: Vec<Vec<f64>>, quadrature: Quadrature },
    /// Zero outside the listed segments.
    Analytic { segments: Vec<ExpSegment> },
}

/// Time-dependent control with `channels` components.
///
/// For cross-section controls, channel `c` multiplies the restriction of the
/// `(c+1)`-th y-mode to `ω`; `mass` is the Gram matrix of those restrictions
/// and defines the physical `L²` norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub kind: ControlKind,
    pub grid: Vec<f64>,
    pub channels: usize,
    pub body: SignalBody,
    pub mass: Option<DMatrix<f64>>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(KsError::InvalidInput("control grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

impl ControlSignal {
    pub fn sampled(kind: ControlKind, grid: Vec<f64>, values: Vec<Vec<f64>>, quadrature: Quadrature) -> Result<Self> {
        check_grid(&grid)?;
        let want = match quadrature {
            Quadrature::PiecewiseConstant => grid.len() - 1,
            Quadrature::PiecewiseLinear => grid.len(),
        };
        if values.len() != want {
            return Err(KsError::InvalidInput(format!("expected {want} sample rows, got {}", values.len())));
        }
        let channels = values[0].len();
        if channels == 0 || values.iter().any(|r| r.len() != channels || r.iter().any(|v| !v.is_finite())) {
            return Err(KsError::InvalidInput("sample rows must be finite with a common channel count".into()));
        }
        Ok(ControlSignal { kind, grid, channels, body: SignalBody::Sampled { values, quadrature }, mass: None })
    }

    pub fn analytic(kind: ControlKind, grid: Vec<f64>, channels: usize, segments: Vec<ExpSegment>) -> Result<Self> {
        check_grid(&grid)?;
        if segments.iter().any(|s| s.channels.len() != channels || !(s.end > s.start)) {
            return Err(KsError::InvalidInput("segment channel count or extent mismatch".into()));
        }
        Ok(ControlSignal { kind, grid, channels, body: SignalBody::Analytic { segments }, mass: None })
    }

    pub fn zero(kind: ControlKind, grid: Vec<f64>, channels: usize) -> Result<Self> {
        Self::analytic(kind, grid, channels, Vec::new())
    }

    pub fn with_mass(mut self, mass: DMatrix<f64>) -> Self {
        self.mass = Some(mass);
        self
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn segments(&self) -> &[ExpSegment] {
        match &self.body {
            SignalBody::Analytic { segments } => segments,
            SignalBody::Sampled { .. } => &[],
        }
    }

    /// Channel values at time `t`.
    pub fn value(&self, t: f64) -> Vec<f64> {
        match &self.body {
            SignalBody::Analytic { segments } => (0..self.channels)
                .map(|c| segments.iter().filter(|s| t >= s.start && t <= s.end).map(|s| s.value(c, t)).sum())
                .collect(),
            SignalBody::Sampled { values, quadrature } => {
                if t < self.start() || t > self.end() {
                    return vec![0.0; self.channels];
                }
                let i = match self.grid.binary_search_by(|g| g.partial_cmp(&t).unwrap()) {
                    Ok(i) => i.min(self.grid.len() - 2),
                    Err(i) => i - 1,
                };
                match quadrature {
                    Quadrature::PiecewiseConstant => values[i].clone(),
                    Quadrature::PiecewiseLinear => {
                        let th = (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
                        (0..self.channels).map(|c| values[i][c] * (1.0 - th) + values[i + 1][c] * th).collect()
                    }
                }
            }
        }
    }

    fn mass_entry(&self, c: usize, d: usize) -> f64 {
        match &self.mass {
            Some(m) => m[(c, d)],
            None => {
                if c == d {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `‖q‖²` in `L²(window; L²(ω))`, exact for the declared representation.
    pub fn l2_norm_sq(&self) -> f64 {
        let nc = self.channels;
        match &self.body {
            SignalBody::Sampled { values, quadrature } => {
                let quad = |a: &[f64], b: &[f64]| -> f64 {
                    let mut s = 0.0;
                    for c in 0..nc {
                        for d in 0..nc {
                            let m = self.mass_entry(c, d);
                            if m != 0.0 {
                                s += m * a[c] * b[d];
                            }
                        }
                    }
                    s
                };
                let mut total = 0.0;
                for i in 0..self.grid.len() - 1 {
                    let h = self.grid[i + 1] - self.grid[i];
                    total += match quadrature {
                        Quadrature::PiecewiseConstant => h * quad(&values[i], &values[i]),
                        Quadrature::PiecewiseLinear => {
                            let (a, b) = (&values[i], &values[i + 1]);
                            h / 3.0 * (quad(a, a) + quad(a, b) + quad(b, b))
                        }
                    };
                }
                total.max(0.0)
            }
            SignalBody::Analytic { segments } => {
                let mut total = Dd::ZERO;
                for s in segments {
                    let l = s.end - s.start;
                    let off = s.end - s.anchor;
                    for c in 0..nc {
                        for d in 0..nc {
                            let m = self.mass_entry(c, d);
                            if m == 0.0 {
                                continue;
                            }
                            let mut acc = Dd::ZERO;
                            for ti in &s.channels[c] {
                                for tj in &s.channels[d] {
                                    let r = ti.rate + tj.rate;
                                    acc += ti.coef * tj.coef * (r * off).exp() * gfun(r, l);
                                }
                            }
                            total += acc * m;
                        }
                    }
                }
                total.to_f64().max(0.0)
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Copy with every value multiplied by `s`.
    pub fn scaled(&self, s: f64) -> ControlSignal {
        let mut out = self.clone();
        match &mut out.body {
            SignalBody::Sampled { values, .. } => {
                for r in values.iter_mut() {
                    for v in r.iter_mut() {
                        *v *= s;
                    }
                }
            }
            SignalBody::Analytic { segments } => {
                for seg in segments.iter_mut() {
                    for ch in seg.channels.iter_mut() {
                        for t in ch.iter_mut() {
                            t.coef = t.coef * s;
                        }
                    }
                }
            }
        }
        out
    }

    /// Sum of two analytic signals on the union of their grids.
    pub fn merge(&self, other: &ControlSignal) -> Result<ControlSignal> {
        match (&self.body, &other.body) {
            (SignalBody::Analytic { segments: a }, SignalBody::Analytic { segments: b }) if self.channels == other.channels => {
                let mut grid: Vec<f64> = self.grid.iter().chain(&other.grid).cloned().collect();
                grid.sort_by(|x, y| x.partial_cmp(y).unwrap());
                grid.dedup();
                let mut segs = a.clone();
                segs.extend(b.iter().cloned());
                let mut out = ControlSignal::analytic(self.kind.clone(), grid, self.channels, segs)?;
                out.mass = self.mass.clone().or_else(|| other.mass.clone());
                Ok(out)
            }
            _ => Err(KsError::InvalidInput("only analytic signals with equal channel counts merge".into())),
        }
    }

    /// Resamples onto `grid` as a piecewise-linear signal.
    pub fn sample_on(&self, grid: &[f64]) -> Vec<Vec<f64>> {
        grid.iter().map(|&t| self.value(t)).collect()
    }
}

/// `(e^z − 1)/z`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

/// `(e^z − 1 − z)/z²`.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 0.5 {
        let mut term = 0.5;
        let mut s = 0.5;
        for n in 3..25 {
            term *= z / n as f64;
            s += term;
        }
        s
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// `∫_{s0}^{s1} e^{λ(t1 − s)}·coef·e^{r(s − anchor)} ds` in double-double.
pub fn exp_term_response(lambda: f64, term: &ExpTerm, anchor: f64, s0: f64, s1: f64, t1: f64) -> Dd {
    let l = s1 - s0;
    if !(l > 0.0) {
        return Dd::ZERO;
    }
    let lam = Dd::new(lambda);
    let top = if term.rate >= lam { term.rate } else { lam };
    let expo = Dd::prod(lambda, t1 - s1) + term.rate * (s0 - anchor) + top * l;
    let d = (term.rate - lam).abs();
    term.coef * expo.exp() * gfun(d, l)
}

/// Response of one mode to a single channel's exponential sum over `[s0, s1]`.
pub fn channel_response(lambda: f64, terms: &[ExpTerm], anchor: f64, s0: f64, s1: f64, t1: f64) -> Dd {
    terms.iter().map(|t| exp_term_response(lambda, t, anchor, s0, s1, t1)).sum()
}
