//! Task execution.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use ks_core::biorthogonal::{build_family, cost_fit, slice_exponents};
use ks_core::control_1d::{control_csv, cost_scan, critical_counterexample, synthesize_boundary_control, verify_null};
use ks_core::modal::{simulate, state_csv, ModalSystem};
use ks_core::nonlinear::{fixed_point, iteration_csv, nonlinear_simulate, norm_csv};
use ks_core::pointwise::{minimal_time_estimate, negative_certificate, sequence_csv, synthesize_point_control, PointSpec};
use ks_core::signal::Omega;
use ks_core::spectral::{bound_check, critical_set_check, gap_check, k0_index, n0_index, weyl_slope};
use ks_core::KsError;
use serde_json::{json, Value};

use crate::config::{geometry, Actuator, Loaded, LrConfig, Task};
use crate::output::{sha256_hex, ErrorInfo, Manifest, RunDir, Versions};

/// Samples per segment of N-D control exports.
const ND_SAMPLES: usize = 17;

/// What a task hands back for the manifest.
#[derive(Debug, Default)]
pub struct TaskResult {
    pub verdicts: Value,
    pub results: Value,
}

/// Exit code for a failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<crate::config::ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<KsError>() {
        Some(KsError::CriticalParameter { .. }) => 3,
        Some(KsError::BelowMinimalTime { .. }) => 4,
        Some(KsError::IllConditioned { .. } | KsError::GramianSingular { .. }) => 5,
        Some(KsError::NoContraction { .. }) => 6,
        _ => 1,
    }
}

fn error_kind(err: &anyhow::Error) -> String {
    if err.downcast_ref::<crate::config::ConfigError>().is_some() {
        return "ConfigError".into();
    }
    match err.downcast_ref::<KsError>() {
        Some(e) => format!("{e:?}").split([' ', '(', '{']).next().unwrap_or("KsError").to_string(),
        None => "Error".into(),
    }
}

/// Outcome of `run_scenario`.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub exit_code: i32,
    pub error: Option<anyhow::Error>,
}

/// Runs a loaded scenario into a fresh directory under `out_root`.
pub fn run_scenario(loaded: &Loaded, out_root: &Path) -> Result<RunOutcome> {
    let sc = &loaded.scenario;
    let config_hash = sha256_hex(format!("{}\n{}\n{}", loaded.task, sc.seed, loaded.source).as_bytes());
    let mut dir = RunDir::create(out_root, &config_hash)?;
    let start = Instant::now();
    let outcome = execute(loaded, &mut dir);
    let elapsed = start.elapsed().as_secs_f64();
    let (status, result, error) = match outcome {
        Ok(r) => ("ok", r, None),
        Err(e) => ("error", TaskResult::default(), Some(e)),
    };
    let info = error.as_ref().map(|e| ErrorInfo {
        exit_code: exit_code(e),
        kind: error_kind(e),
        message: format!("{e:#}"),
    });
    let manifest = Manifest {
        task: loaded.task.name().into(),
        seed: sc.seed,
        config_sha256: config_hash,
        config: loaded.source.clone(),
        inputs: json!({
            "scenario": sc,
            "spectrum": {
                "a": loaded.spec.a,
                "nu": loaded.spec.nu,
                "k_x": loaded.spec.k_x,
                "j_y": loaded.spec.j_y,
                "crit_tol": loaded.spec.crit_tol,
                "mu": loaded.spec.mus(),
            },
        }),
        versions: Versions::current(),
        status,
        verdicts: result.verdicts,
        results: result.results,
        exit_code: info.as_ref().map_or(0, |i| i.exit_code),
        error: info,
        artifacts: dir.artifacts().clone(),
    };
    dir.write_json("manifest.json", &manifest)?;
    let timings = json!({ "task": loaded.task.name(), "elapsed_seconds": elapsed });
    std::fs::write(dir.path.join("timings.json"), format!("{}\n", serde_json::to_string_pretty(&timings)?))
        .context("writing timings.json")?;
    Ok(RunOutcome { dir: dir.path, exit_code: manifest.exit_code, error })
}

fn execute(l: &Loaded, dir: &mut RunDir) -> Result<TaskResult> {
    match l.task {
        Task::Spectrum => spectrum(l, dir),
        Task::CriticalSet => critical_set(l, dir),
        Task::Biortho => biortho(l, dir),
        Task::Control1d => control_1d(l, dir),
        Task::ControlPoint => control_point(l, dir),
        Task::MinimalTime => minimal_time(l, dir),
        Task::ControlNd => control_nd(l, dir),
        Task::Nonlinear => nonlinear(l, dir),
        Task::Simulate => simulate_task(l, dir),
    }
}

fn verdict_json(l: &Loaded, bound: usize) -> Value {
    json!({ "critical_set": critical_set_check(&l.spec, bound) })
}

fn spectrum(l: &Loaded, dir: &mut RunDir) -> Result<TaskResult> {
    let spec = &l.spec;
    let cfg = l.scenario.spectrum.clone().unwrap_or_default();
    let mut csv = String::from("k,j,lambda_x,lambda_y,total\n");
    for j in 1..=spec.j_y {
        for k in 1..=spec.k_x {
            let r = spec.rate(k, j)?;
            csv.push_str(&format!("{k},{j},{:e},{:e},{:e}\n", r.lambda_x, spec.lambda_y(j)?, r.total));
        }
    }
    dir.write("spectrum.csv", csv)?;
    let slices = cfg.slices.unwrap_or_else(|| (1..=spec.j_y.min(4)).collect());
    let points = cfg.points.unwrap_or(64);
    let mut counting = String::from("j,r,count,bound\n");
    let mut per_slice = Vec::new();
    for &j in &slices {
        let b = bound_check(spec, j, points)?;
        for s in &b.samples {
            counting.push_str(&format!("{j},{:e},{},{:e}\n", s.r, s.count, s.bound));
        }
        let rates: Vec<f64> = (1..=spec.k_x).map(|k| spec.total_rate(k, j)).collect::<ks_core::Result<_>>()?;
        let gap = gap_check(&rates)?;
        per_slice.push(json!({
            "j": j,
            "shift": b.shift,
            "min_constant": b.min_constant,
            "violations": b.violations.len(),
            "in_regime": b.in_regime,
            "gap": gap,
        }));
    }
    dir.write("counting.csv", counting)?;
    Ok(TaskResult {
        verdicts: verdict_json(l, 4),
        results: json!({
            "n0": n0_index(spec).ok(),
            "k0": k0_index(spec).ok(),
            "weyl_slope": weyl_slope(spec),
            "slices": per_slice,
        }),
    })
}

fn critical_set(l: &Loaded, dir: &mut RunDir) -> Result<TaskResult> {
    let cfg = l.scenario.critical_set.clone().unwrap_or_default();
    let bound = cfg.search_bound.unwrap_or(4);
    let verdict = critical_set_check(&l.spec, bound);
    let mut results = json!({ "clear": verdict.is_clear() });
    if !verdict.is_clear() {
        let ce = critical_counterexample(&l.spec, cfg.horizon.unwrap_or(1.0), cfg.samples.unwrap_or(1000), cfg.x0)?;
        dir.write_json("counterexample.json", &ce)?;
        results["observation_max"] = json!(ce.observation_max);
        results["growth_rate"] = json!(ce.rate_k0);
        results["norm_ratio"] = json!(ce.norm_final / ce.norm_initial);
    }
    Ok(TaskResult { verdicts: json!({ "critical_set": verdict }), results })
}

fn biortho(l: &Loaded, dir: &mut RunDir) -> Result<TaskResult> {
    let cfg = l.scenario.biortho.as_ref().expect("section checked at load");
    let n0 = n0_index(&l.spec).unwrap_or(usize::MAX);
    let (e, c0) = slice_exponents(&l.spec, cfg.j, cfg.count, cfg.j < n0)?;
    let shifted: Vec<f64> = e.iter().map(|x| x + c0).collect();
    let mut families = Vec::new();
    for (i, &t) in cfg.horizons.iter().enumerate() {
        let fam = build_family(&shifted, t)?;
        dir.write_json(&format!("family_{}.json", i + 1), &fam.to_json())?;
        families.push(json!({
            "t": t,
            "residual_max": fam.residual_max(),
            "gram_condition": fam.gram_condition(),
            "precision": fam.precision(),
        }));
    }
    let fit = cost_fit(&l.spec, cfg.j, &cfg.horizons, cfg.count)?;
    let mut csv = String::from("t,k,exponent,norm\n");
    for s in &fit.samples {
        csv.push_str(&format!("{:e},{},{:e},{:e}\n", s.t, s.k, s.exponent, s.norm));
    }
    dir.write("family_norms.csv", csv)?;
    Ok(TaskResult {
        verdicts: verdict_json(l, 4),
        results: json!({
            "j": cfg.j,
            "shift_c0": c0,
            "exponents": shifted,
            "families": families,
            "cost_fit": { "theta": fit.theta, "joint": fit.joint, "per_horizon": fit.per_horizon },
        }),
    })
}

fn control_1d(l: &Loaded, dir: &mut RunDir) -> Result<TaskResult> {
    let cfg = l.scenario.control_1d.as_ref().expect("section checked at load");
    let u0 = l.scenario.initial.slice(&l.spec, cfg.j, l.scenario.seed)?;
    let (q, report) = synthesize_boundary_control(&u0, cfg.t, &l.spec, cfg.j, cfg.k_trunc)?;
    dir.write("control.csv", control_csv(&q, cfg.samples))?;
    let check = verify_null(&u0, &q, cfg.t, &l.spec, cfg.j, cfg.k_trunc)?;
    dir.write_json("verification.json", &check)?;
    let mut results = json!({ "synthesis": report, "verification": check });
    if let (Some(js), Some(ts)) = (&cfg.cost_slices, &cfg.cost_horizons) {
        let table = cost_scan(&l.spec, js, ts, cfg.k_trunc)?;
        let mut csv = String::from("j,t,cost,worst_k\n");
        for r in &table.rows {
            csv.push_str(&format!("{},{:e},{:e},{}\n", r.j, r.t, r.cost, r.worst_k));
        }
        dir.write("cost.csv", csv)?;
        results["cost_fit"] = json!(table.fit);
    }
    Ok(TaskResult { verdicts: verdict_json(l, 4), results })
}

fn control_point(l: &Loaded, dir: &mut RunDir) -> Result<TaskResult> {
    let cfg = l.scenario.control_point.as_ref().expect("section checked at load");
    let point = point_spec(&cfg.point, cfg.k_max);
    let u0 = l.scenario.initial.slice(&l.spec, cfg.j, l.scenario.seed)?;
    let (q, report) = synthesize_point_control(&u0, cfg.t, &point, &l.spec, cfg.j, cfg.k_trunc)?;
    dir.write("control.csv", control_csv(&q, cfg.samples))?;
    let check = verify_null(&u0, &q, cfg.t, &l.spec, cfg.j, cfg.k_trunc)?;
    dir.write_json("verification.json", &check)?;
    Ok(TaskResult {
        verdicts: json!({
            "critical_set": critical_set_check(&l.spec, 4),
            "above_minimal_time": true,
        }),
        results: json!({ "synthesis": report, "verification": check }),
    })
}

fn point_spec(v: &ks_core::pointwise::PointValue, k_max: Option<usize>) -> PointSpec {
    let p = PointSpec::new(v.clone());
    match k_max {
        Some(k) => p.with_k_max(k),
        None => p,
    }
}

fn minimal_time(l: &Loaded, dir: &mut RunDir) -> Result<TaskResult> {
    let cfg = l.scenario.minimal_time.as_ref().expect("section checked at load");
    let point = point_spec(&cfg.point, cfg.k_max);
    let mt = minimal_time_estimate(&point, l.spec.a)?;
    dir.write("sequence.csv", sequence_csv(&mt))?;
    let mut results = json!({
        "theta": mt.theta,
        "k_max": mt.k_max,
        "t_hat": mt.t_hat,
        "argmax": mt.argmax,
        "still_growing": mt.still_growing,
    });
    if let Some(t) = cfg.witness_t {
        let w = negative_certificate(&point, &l.spec, cfg.j, t)?;
        dir.write_json("witness.json", &w)?;
        results["witness"] = json!({ "horizon": t, "max_log10_ratio": w.max_log10_ratio, "monotone": w.monotone });
    }
    Ok(TaskResult { verdicts: json!({}), results })
}

fn control_nd(l: &Loaded, dir: &mut RunDir) -> Result<TaskResult> {
    let cfg = l.scenario.control_nd.as_ref().expect("section checked at load");
    let geo = geometry(&l.spec, &cfg.actuator, cfg.omega.as_ref())?;
    let u0 = l.scenario.initial.state(&l.spec, 1, l.scenario.seed)?;
    let run = ks_core::lr::run_lr(&u0, cfg.t, &l.spec, &geo, &LrConfig::params(cfg.lr.as_ref()), None)?;
    dir.write("control.csv", ks_core::lr::control_csv(&run.control, cfg.samples.min(ND_SAMPLES).max(2)))?;
    dir.write("trace.csv", state_csv(&run.trace))?;
    let mut csv = String::from("window,start,gamma,norm_start,norm_mid,norm_end,kill_count,control_norm\n");
    for w in &run.report.windows {
        csv.push_str(&format!(
            "{},{:e},{},{:e},{:e},{:e},{},{:e}\n",
            w.window.index,
            w.window.start,
            w.window.gamma,
            w.norm_start,
            w.norm_mid,
            w.norm_end,
            w.active.kill_count,
            w.active.control_norm
        ));
    }
    dir.write("windows.csv", csv)?;
    Ok(TaskResult { verdicts: verdict_json(l, 4), results: json!({ "geometry": geo, "report": run.report }) })
}

fn nonlinear(l: &Loaded, dir: &mut RunDir) -> Result<TaskResult> {
    let cfg = l.scenario.nonlinear.as_ref().expect("section checked at load");
    let geo = geometry(&l.spec, &cfg.actuator, cfg.omega.as_ref())?;
    let u0 = l.scenario.initial.state(&l.spec, 1, l.scenario.seed)?;
    let params = cfg.params();
    let out = fixed_point(&u0, &l.spec, &geo, &params)?;
    dir.write("iterations.csv", iteration_csv(&out.log))?;
    dir.write("control.csv", ks_core::lr::control_csv(&out.control, ND_SAMPLES))?;
    dir.write("norms.csv", norm_csv(&out.nonlinear.times, &out.nonlinear.states))?;
    dir.write_json("verification.json", &out.verification)?;
    Ok(TaskResult {
        verdicts: verdict_json(l, 4),
        results: json!({
            "params": params,
            "cost": out.cost,
            "weights": out.weights,
            "iterations": out.log,
            "norms": out.norms,
            "verification": out.verification,
            "linear_report": out.solve.run.report,
        }),
    })
}

fn simulate_task(l: &Loaded, dir: &mut RunDir) -> Result<TaskResult> {
    let cfg = l.scenario.simulate.as_ref().expect("section checked at load");
    let spec = &l.spec;
    let u0 = l.scenario.initial.state(spec, 1, l.scenario.seed)?;
    let times: Vec<f64> = (0..=cfg.steps).map(|i| cfg.t * i as f64 / cfg.steps as f64).collect();
    let (states, step_discrepancy) = if cfg.nonlinear {
        let omega = spec.box_dims().map_or(Omega { intervals: Vec::new() }, Omega::full);
        let geo = geometry(spec, &Actuator::Boundary, Some(&omega.intervals))?;
        let tr = nonlinear_simulate(&u0, None, spec, &geo, &times)?;
        let keep: Vec<_> = tr.states.iter().step_by(2).cloned().collect();
        (keep, Some(tr.step_discrepancy))
    } else {
        (simulate(&ModalSystem::free_nd(spec), &u0, &times, None, None), None)
    };
    dir.write("trace.csv", state_csv(&states))?;
    let end = states.last().expect("nonempty trace");
    let mut rates = Vec::new();
    let mut max_rate_error: f64 = 0.0;
    for j in 0..spec.j_y {
        for k in 0..spec.k_x {
            let (a, b) = (u0.coeffs[(k, j)], end.coeffs[(k, j)]);
            if a == 0.0 || b == 0.0 || b.signum() != a.signum() {
                continue;
            }
            let measured = (b / a).ln() / cfg.t;
            let expected = spec.total_rate(k + 1, j + 1)?;
            max_rate_error = max_rate_error.max((measured - expected).abs() / expected.abs().max(1.0));
            rates.push(json!({ "k": k + 1, "j": j + 1, "measured": measured, "expected": expected }));
        }
    }
    Ok(TaskResult {
        verdicts: json!({}),
        results: json!({
            "nonlinear": cfg.nonlinear,
            "initial_norm": u0.norm(),
            "final_norm": end.norm(),
            "decay_rates": rates,
            "max_rate_error": max_rate_error,
            "step_discrepancy": step_discrepancy,
        }),
    })
}
