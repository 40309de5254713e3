//! Scenario files.
//!
//! One TOML file describes one scenario: the domain, the initial data and
//! the parameters of the task to run. Unknown fields are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use ks_core::exact::{parse_length, parse_rational};
use ks_core::lr::{ActiveMode, Geometry, LrParams};
use ks_core::modal::ModalState;
use ks_core::nonlinear::{default_p, FixedPointParams, DEFAULT_Q};
use ks_core::pointwise::{PointSpec, PointValue, DEFAULT_K_MAX};
use ks_core::signal::Omega;
use ks_core::spectral::{critical_set_check, parse_eigenvalue_file, CrossSection, ExactInputs, SpectrumSpec};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Schema or validation failure of a scenario file.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Spectrum,
    CriticalSet,
    Biortho,
    #[serde(rename = "control-1d")]
    Control1d,
    ControlPoint,
    MinimalTime,
    #[serde(rename = "control-nd")]
    ControlNd,
    Nonlinear,
    Simulate,
}

impl Task {
    pub const ALL: [Task; 9] = [
        Task::Spectrum,
        Task::CriticalSet,
        Task::Biortho,
        Task::Control1d,
        Task::ControlPoint,
        Task::MinimalTime,
        Task::ControlNd,
        Task::Nonlinear,
        Task::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Spectrum => "spectrum",
            Task::CriticalSet => "critical-set",
            Task::Biortho => "biortho",
            Task::Control1d => "control-1d",
            Task::ControlPoint => "control-point",
            Task::MinimalTime => "minimal-time",
            Task::ControlNd => "control-nd",
            Task::Nonlinear => "nonlinear",
            Task::Simulate => "simulate",
        }
    }

    /// Tasks that synthesize a control and refuse critical parameters.
    pub fn is_control(self) -> bool {
        matches!(self, Task::Control1d | Task::ControlPoint | Task::ControlNd | Task::Nonlinear)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| format!("unknown task `{s}`"))
    }
}

/// A number or an exact literal such as `"pi"`, `"7/1"` or `"6.5"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Text(String),
    Int(i64),
    Float(f64),
}

impl Literal {
    fn text(&self) -> String {
        match self {
            Literal::Text(s) => s.clone(),
            Literal::Int(i) => i.to_string(),
            Literal::Float(x) => format!("{x:?}"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CrossSectionConfig {
    Box(Vec<Literal>),
    /// Path to an eigenvalue list, relative to the config file.
    EigenvalueFile(PathBuf),
}

fn default_modes() -> usize {
    16
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub a: Literal,
    pub nu: Literal,
    pub cross_section: CrossSectionConfig,
    #[serde(default = "default_modes")]
    pub k_x: usize,
    #[serde(default = "default_modes")]
    pub j_y: usize,
    pub crit_tol: Option<f64>,
}

/// Initial data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    /// `amplitude·Ψ_kΨ_j` (1-based).
    Basis {
        k: usize,
        #[serde(default = "one_index")]
        j: usize,
        #[serde(default = "unit")]
        amplitude: f64,
    },
    /// Coefficients of one slice, `k = 1, 2, …`.
    Coeffs { values: Vec<f64> },
    /// `(k, j, value)` triples.
    Entries { entries: Vec<(usize, usize, f64)> },
    /// Uniform `[−1, 1]` coefficients scaled by `amplitude/(k + j − 1)^decay`, drawn from the scenario seed.
    Random {
        #[serde(default = "unit")]
        amplitude: f64,
        #[serde(default)]
        decay: f64,
    },
}

fn one_index() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl Default for Initial {
    fn default() -> Self {
        Initial::Basis { k: 1, j: 1, amplitude: 1.0 }
    }
}

impl Initial {
    /// Full `K_x × J_y` coefficient matrix; `Coeffs` fills column `slice`.
    pub fn state(&self, spec: &SpectrumSpec, slice: usize, seed: u64) -> Result<ModalState> {
        let mut s = ModalState::zeros(spec.k_x, spec.j_y, 0.0);
        let check = |k: usize, j: usize| -> Result<()> {
            if k == 0 || j == 0 || k > spec.k_x || j > spec.j_y {
                bail!("initial mode ({k}, {j}) is outside the {}x{} truncation", spec.k_x, spec.j_y);
            }
            Ok(())
        };
        match self {
            Initial::Basis { k, j, amplitude } => {
                check(*k, *j)?;
                s.coeffs[(k - 1, j - 1)] = *amplitude;
            }
            Initial::Coeffs { values } => {
                check(values.len().max(1), slice)?;
                for (k, v) in values.iter().enumerate() {
                    s.coeffs[(k, slice - 1)] = *v;
                }
            }
            Initial::Entries { entries } => {
                for &(k, j, v) in entries {
                    check(k, j)?;
                    s.coeffs[(k - 1, j - 1)] += v;
                }
            }
            Initial::Random { amplitude, decay } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for j in 0..spec.j_y {
                    for k in 0..spec.k_x {
                        let w = amplitude / ((k + j + 1) as f64).powf(*decay);
                        s.coeffs[(k, j)] = w * rng.random_range(-1.0..1.0);
                    }
                }
            }
        }
        Ok(s)
    }

    /// Coefficients of slice `j` (1-based).
    pub fn slice(&self, spec: &SpectrumSpec, j: usize, seed: u64) -> Result<Vec<f64>> {
        if let Initial::Coeffs { values } = self {
            return Ok(values.clone());
        }
        let s = self.state(spec, j, seed)?;
        Ok(s.coeffs.column(j - 1).iter().copied().collect())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumTask {
    /// Slices to scan; defaults to `1..=min(J_y, 4)`.
    pub slices: Option<Vec<usize>>,
    /// Log-grid size of the counting-function scan.
    pub points: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalSetTask {
    pub search_bound: Option<usize>,
    /// Horizon of the counterexample run when parameters are critical.
    pub horizon: Option<f64>,
    pub samples: Option<usize>,
    /// Actuator position for the pointwise counterexample.
    pub x0: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiorthoTask {
    #[serde(default = "one_index")]
    pub j: usize,
    pub count: usize,
    pub horizons: Vec<f64>,
}

fn default_samples() -> usize {
    201
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Control1dTask {
    #[serde(default = "one_index")]
    pub j: usize,
    pub t: f64,
    pub k_trunc: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Optional cost scan.
    pub cost_slices: Option<Vec<usize>>,
    pub cost_horizons: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPointTask {
    pub point: PointValue,
    pub k_max: Option<usize>,
    #[serde(default = "one_index")]
    pub j: usize,
    pub t: f64,
    pub k_trunc: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimalTimeTask {
    pub point: PointValue,
    pub k_max: Option<usize>,
    /// Horizon for a blow-up witness.
    pub witness_t: Option<f64>,
    #[serde(default = "one_index")]
    pub j: usize,
}

/// Actuator of the N-D tasks.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Actuator {
    Boundary,
    Point { point: PointValue, k_max: Option<usize> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrConfig {
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub cut: Option<f64>,
    pub mode: Option<ActiveMode>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlNdTask {
    pub t: f64,
    pub actuator: Actuator,
    /// Control region, one interval per cross-section direction; the whole cross-section when absent.
    pub omega: Option<Vec<(f64, f64)>>,
    pub lr: Option<LrConfig>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearTask {
    pub t: f64,
    pub actuator: Actuator,
    pub omega: Option<Vec<(f64, f64)>>,
    pub lr: Option<LrConfig>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub q: Option<f64>,
    pub p: Option<f64>,
    /// Cost constant of the weights; fitted from linear runs when absent.
    pub cost_constant: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTask {
    pub t: f64,
    pub steps: usize,
    #[serde(default)]
    pub nonlinear: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub domain: Domain,
    #[serde(default)]
    pub initial: Initial,
    pub spectrum: Option<SpectrumTask>,
    pub critical_set: Option<CriticalSetTask>,
    pub biortho: Option<BiorthoTask>,
    pub control_1d: Option<Control1dTask>,
    pub control_point: Option<ControlPointTask>,
    pub minimal_time: Option<MinimalTimeTask>,
    pub control_nd: Option<ControlNdTask>,
    pub nonlinear: Option<NonlinearTask>,
    pub simulate: Option<SimulateTask>,
    /// Directory of the config file, for relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A parsed scenario with its resolved spectrum.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub scenario: Scenario,
    pub task: Task,
    pub spec: SpectrumSpec,
    /// Raw config text.
    pub source: String,
}

pub fn parse_str(text: &str, base_dir: &Path) -> Result<Scenario> {
    let de = toml::Deserializer::parse(text).map_err(|e| config_err(e.to_string()))?;
    let mut sc: Scenario = serde_path_to_error::deserialize(de)
        .map_err(|e| config_err(format!("at `{}`: {}", e.path(), e.inner())))?;
    sc.base_dir = base_dir.to_path_buf();
    Ok(sc)
}

pub fn build_spec(domain: &Domain, base_dir: &Path) -> Result<SpectrumSpec> {
    let a = domain.a.text();
    let nu = domain.nu.text();
    let mut spec = match &domain.cross_section {
        CrossSectionConfig::Box(dims) => {
            let dims: Vec<String> = dims.iter().map(Literal::text).collect();
            let refs: Vec<&str> = dims.iter().map(String::as_str).collect();
            SpectrumSpec::from_literals(&a, &nu, &refs, domain.k_x, domain.j_y)?
        }
        CrossSectionConfig::EigenvalueFile(path) => {
            let full = base_dir.join(path);
            let text = std::fs::read_to_string(&full)
                .with_context(|| format!("reading eigenvalue file {}", full.display()))?;
            let mu = parse_eigenvalue_file(&text)?;
            let a_e = parse_length(&a)?;
            let nu_e = parse_rational(&nu)?;
            let nu_f: f64 = num_traits::ToPrimitive::to_f64(&nu_e).unwrap_or(f64::NAN);
            SpectrumSpec::new(a_e.to_f64(), nu_f, CrossSection::External(mu), domain.k_x, domain.j_y)?
                .with_exact(ExactInputs { a: a_e, nu: nu_e, dims: Vec::new() })?
        }
    };
    if let Some(tol) = domain.crit_tol {
        spec = spec.with_crit_tol(tol)?;
    }
    Ok(spec)
}

/// Parses, validates and resolves a scenario for `task`.
pub fn load(text: &str, base_dir: &Path, task: Option<Task>) -> Result<Loaded> {
    let scenario = parse_str(text, base_dir)?;
    let task = match (task, scenario.task) {
        (Some(a), Some(b)) if a != b => return Err(config_err(format!("task `{b}` in the file conflicts with `{a}`"))),
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(config_err("no task given")),
    };
    let spec = build_spec(&scenario.domain, base_dir).map_err(|e| config_err(format!("[domain]: {e:#}")))?;
    let present = match task {
        Task::Spectrum | Task::CriticalSet => true,
        Task::Biortho => scenario.biortho.is_some(),
        Task::Control1d => scenario.control_1d.is_some(),
        Task::ControlPoint => scenario.control_point.is_some(),
        Task::MinimalTime => scenario.minimal_time.is_some(),
        Task::ControlNd => scenario.control_nd.is_some(),
        Task::Nonlinear => scenario.nonlinear.is_some(),
        Task::Simulate => scenario.simulate.is_some(),
    };
    if !present {
        return Err(config_err(format!("missing section [{}]", task.name().replace('-', "_"))));
    }
    if task.is_control() {
        critical_set_check(&spec, 4).require_clear()?;
    }
    Ok(Loaded { scenario, task, spec, source: text.to_string() })
}

pub fn load_file(path: &Path, task: Option<Task>) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load(&text, &base, task)
}

impl LrConfig {
    pub fn params(cfg: Option<&LrConfig>) -> LrParams {
        let d = LrParams::default();
        match cfg {
            None => d,
            Some(c) => LrParams {
                rho: c.rho.unwrap_or(d.rho),
                beta: c.beta.or(d.beta),
                cut: c.cut.unwrap_or(d.cut),
                mode: c.mode.unwrap_or(d.mode),
            },
        }
    }
}

pub fn geometry(spec: &SpectrumSpec, actuator: &Actuator, omega: Option<&Vec<(f64, f64)>>) -> Result<Geometry> {
    let omega = match omega {
        Some(iv) => Omega { intervals: iv.clone() },
        None => match spec.box_dims() {
            Some(d) => Omega { intervals: d.iter().map(|&b| (0.0, b)).collect() },
            None => Omega { intervals: Vec::new() },
        },
    };
    Ok(match actuator {
        Actuator::Boundary => Geometry::BoundaryGamma { omega },
        Actuator::Point { point, k_max } => Geometry::InternalPoint {
            point: PointSpec::new(point.clone()).with_k_max(k_max.unwrap_or(DEFAULT_K_MAX)),
            omega,
        },
    })
}

impl NonlinearTask {
    pub fn params(&self) -> FixedPointParams {
        let d = FixedPointParams::default();
        let q = self.q.unwrap_or(DEFAULT_Q);
        FixedPointParams {
            horizon: self.t,
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            lr: LrConfig::params(self.lr.as_ref()),
            q,
            p: self.p.unwrap_or_else(|| default_p(q)),
            cost_constant: self.cost_constant,
        }
    }
}
