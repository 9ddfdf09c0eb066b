use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pulsefront::classify::{
    classify_trajectory, dichotomy_inputs, dichotomy_predict, mu_threshold_search, CertificateOptions, ThresholdOptions,
    Verdict,
};
use pulsefront::eigen::{
    closed_form_lambda, floquet_lambda, generalized_bracket, lambda0, lambda_sensitivity, EigenProblemSpec, EigenResult,
    Eigenfunctions,
};
use pulsefront::periodic::{
    monotone_iteration, ode_periodic_linear, ode_periodic_logistic, Direction, MonotoneOptions, PeriodicSolution,
};
use pulsefront::simulator::{run_fixed, run_free, AuditCounters, SimConfig, Trajectory};
use pulsefront::{HarvestRule, InitialData, ModelParams};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ConfigErrors, RunConfig, SweepParameter, SweepTask};
use crate::output::{fmt, num, nums, write_file, write_json, write_stdout, Csv};

/// Audit violations found in a run; maps to its own exit code.
#[derive(Debug)]
pub struct AuditFailure(pub AuditCounters);

impl std::fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = &self.0;
        write!(
            f,
            "invariant audit failed: positivity {}, bound {}, pulse exactness {}, front monotonicity {} (over {} frames)",
            a.positivity, a.bound, a.pulse_exactness, a.front_monotonicity, a.frames
        )
    }
}

impl std::error::Error for AuditFailure {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EigenMode {
    Lambda0,
    Closed,
    Floquet,
    Bracket,
    Sensitivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PeriodicMode {
    Spatial,
    OdeLinear,
    OdeLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StartFrom {
    Upper,
    Lower,
}

fn sim_config(cfg: &RunConfig, params: &ModelParams) -> SimConfig {
    let n = &cfg.numerics;
    let mut sc = SimConfig::auto(params, n.dx, n.horizon);
    if let Some(steps) = n.steps_per_period {
        sc.steps_per_period = steps;
    }
    sc.record_stride = n.record_stride.unwrap_or(sc.steps_per_period);
    sc.snapshot_every = n.snapshot_every;
    sc.fixed_edge = n.fixed_edge;
    sc.core_window = Some(cfg.tolerances.core);
    sc
}

fn audit_json(a: &AuditCounters) -> Value {
    json!({
        "frames": a.frames,
        "pulses": a.pulses,
        "positivity": a.positivity,
        "bound": a.bound,
        "pulse_exactness": a.pulse_exactness,
        "front_monotonicity": a.front_monotonicity,
        "violations": a.violations(),
    })
}

fn verdict_json(v: &Verdict) -> Value {
    let evidence = v.evidence.as_ref().map(|e| {
        json!({
            "final_span": num(e.final_span),
            "final_sup": num(e.final_sup),
            "core_min": num(e.core_min),
            "front_advance": num(e.front_advance),
            "span_slope": num(e.span_slope),
            "log_sup_slope": num(e.log_sup_slope),
        })
    });
    json!({ "outcome": v.outcome.name(), "horizon": v.horizon, "evidence": evidence })
}

fn check_audit(traj: &Trajectory, audit: bool) -> Result<()> {
    if audit && traj.audit.violations() > 0 {
        return Err(AuditFailure(traj.audit).into());
    }
    Ok(())
}

fn header(command: &str, cfg: &RunConfig) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), Value::from(command));
    m.insert("config".into(), cfg.resolved.clone());
    m.insert("warnings".into(), Value::from(cfg.warnings.clone()));
    m
}

pub fn simulate(cfg: &RunConfig, fixed: Option<(f64, f64)>, out: &Path, audit: bool) -> Result<()> {
    let params = &cfg.params;
    let sc = sim_config(cfg, params);
    let traj = match fixed {
        Some(interval) => run_fixed(params, interval, &sc)?,
        None => run_free(params, &sc)?,
    };
    let mut csv = Csv::new(&["t", "g", "h", "mass1", "mass2", "max1", "max2"]);
    for r in &traj.records {
        csv.row(&[r.t, r.g, r.h, r.mass1, r.mass2, r.max1, r.max2]);
    }
    write_file(&out.join("trajectory.csv"), &csv.into_string())?;
    let mut snaps = Vec::new();
    for s in &traj.snapshots {
        let mut csv = Csv::new(&["x", "u1", "u2"]);
        for (i, (a, b)) in s.pre.0.iter().zip(&s.pre.1).enumerate() {
            csv.row(&[s.x(i), *a, *b]);
        }
        let name = format!("snap_{}.csv", s.period);
        write_file(&out.join(&name), &csv.into_string())?;
        snaps.push(json!({ "period": s.period, "t": num(s.t), "file": name }));
    }
    let verdict = classify_trajectory(&traj, &cfg.tolerances);
    let fin = &traj.final_state;
    let mut m = header("simulate", cfg);
    m.insert("mode".into(), Value::from(if fixed.is_some() { "fixed" } else { "free" }));
    if let Some((l1, l2)) = fixed {
        m.insert("interval".into(), nums(&[l1, l2]));
    }
    m.insert("dt".into(), num(traj.dt));
    m.insert("steps_per_period".into(), Value::from(traj.steps_per_period));
    m.insert("record_stride".into(), Value::from(sc.record_stride));
    m.insert("a_bound".into(), num(traj.a_bound));
    m.insert("periods_run".into(), Value::from(traj.periods_run()));
    m.insert("final".into(), json!({ "t": num(fin.t), "g": num(fin.g), "h": num(fin.h) }));
    m.insert("verdict".into(), verdict_json(&verdict));
    m.insert("audit".into(), audit_json(&traj.audit));
    m.insert("trajectory".into(), Value::from("trajectory.csv"));
    m.insert("snapshots".into(), Value::Array(snaps));
    write_json(Some(&out.join("summary.json")), &Value::Object(m))?;
    check_audit(&traj, audit)
}

fn eigen_spec(cfg: &RunConfig, params: &ModelParams, interval: (f64, f64)) -> Result<EigenProblemSpec> {
    let n = &cfg.numerics;
    Ok(EigenProblemSpec::new(
        interval,
        params.coefficients.clone(),
        params.k1.clone(),
        params.k2.clone(),
        params.harvest.slope0(),
        n.eigen_n,
        n.eigen_steps,
    )?)
}

fn eigen_json(r: &EigenResult) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("lambda".into(), num(r.lambda));
    m.insert("method".into(), Value::from(r.method.name()));
    m.insert("residual".into(), num(r.residual));
    m.insert("surrogate".into(), Value::from(r.surrogate));
    if let Some(g) = r.grid {
        m.insert("grid".into(), json!({ "start": num(g.start), "dx": num(g.dx), "nodes": g.nodes }));
    }
    m
}

/// Pre-pulse eigenfunction profiles as CSV, when the result carries them.
fn eigenfunction_csv(r: &EigenResult) -> Option<String> {
    let g = r.grid?;
    let mut csv;
    if let Some(Eigenfunctions::Spatial(v)) = &r.eigenfunctions {
        csv = Csv::new(&["x", "psi"]);
        for (j, p) in v.iter().enumerate() {
            csv.row(&[g.x(j), *p]);
        }
    } else {
        let (phi, psi) = r.profiles_at_zero()?;
        csv = Csv::new(&["x", "phi", "psi"]);
        for (j, (a, b)) in phi.iter().zip(&psi).enumerate() {
            csv.row(&[g.x(j), *a, *b]);
        }
    }
    Some(csv.into_string())
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("result");
    out.with_file_name(format!("{stem}{suffix}"))
}

pub fn eigen(cfg: &RunConfig, mode: EigenMode, out: Option<&Path>) -> Result<()> {
    let params = &cfg.params;
    let spec = eigen_spec(cfg, params, cfg.numerics.interval)?;
    let mut m = header("eigen", cfg);
    let result = match mode {
        EigenMode::Lambda0 => Some(lambda0(&params.k1, spec.length(), spec.n)?),
        EigenMode::Closed => Some(closed_form_lambda(&spec)?),
        EigenMode::Floquet => Some(floquet_lambda(&spec)?),
        EigenMode::Bracket => {
            let b = generalized_bracket(&spec)?;
            m.insert("lower".into(), num(b.lower));
            m.insert("upper".into(), num(b.upper));
            m.insert("tolerance".into(), num(b.tolerance));
            let w: Vec<Value> = b
                .witnesses
                .iter()
                .map(|w| json!({ "lambda": num(w.lambda), "ratio": num(w.ratio), "description": w.description }))
                .collect();
            m.insert("witnesses".into(), Value::Array(w));
            None
        }
        EigenMode::Sensitivity => {
            m.insert("sensitivity".into(), num(lambda_sensitivity(&spec)?));
            m.insert("lambda".into(), num(closed_form_lambda(&spec)?.lambda));
            None
        }
    };
    if let Some(r) = result {
        m.extend(eigen_json(&r));
        if let (Some(path), Some(text)) = (out, eigenfunction_csv(&r)) {
            let csv = sibling(path, "_eigenfunctions.csv");
            write_file(&csv, &text)?;
            let name = csv.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            m.insert("eigenfunctions".into(), Value::from(name));
        }
    }
    write_json(out, &Value::Object(m))
}

pub fn periodic(cfg: &RunConfig, mode: PeriodicMode, start: StartFrom, out: Option<&Path>) -> Result<()> {
    let params = &cfg.params;
    let sol: PeriodicSolution = match mode {
        PeriodicMode::Spatial => {
            let n = &cfg.numerics;
            let mut opts = MonotoneOptions::auto(params, n.dx);
            if let Some(steps) = n.steps_per_period {
                opts.steps_per_period = steps;
            }
            opts.tol = n.monotone_tol;
            opts.max_iter = n.max_iter;
            let direction = match start {
                StartFrom::Upper => Direction::FromUpper,
                StartFrom::Lower => Direction::FromLower,
            };
            monotone_iteration(n.interval, params, direction, &opts)?
        }
        PeriodicMode::OdeLinear => ode_periodic_linear(&params.coefficients, &params.harvest)?,
        PeriodicMode::OdeLogistic => ode_periodic_logistic(&params.coefficients, &params.harvest)?,
    };
    let text = match sol.grid {
        Some(g) => {
            let mut csv = Csv::new(&["t", "x", "U1", "U2"]);
            for (k, t) in sol.times.iter().enumerate() {
                for j in 0..g.nodes {
                    csv.row(&[*t, g.x(j), sol.u1[k][j], sol.u2[k][j]]);
                }
            }
            csv.into_string()
        }
        None => {
            let mut csv = Csv::new(&["t", "U1", "U2"]);
            for (k, t) in sol.times.iter().enumerate() {
                csv.row(&[*t, sol.u1[k][0], sol.u2[k][0]]);
            }
            csv.into_string()
        }
    };
    match out {
        Some(p) => write_file(p, &text)?,
        None => write_stdout(&text)?,
    }
    eprintln!(
        "{}: residual {}, iterations {}, sup {}",
        sol.kind.name(),
        fmt(sol.residual),
        sol.iterations,
        fmt(sol.sup())
    );
    Ok(())
}

fn run_classified(cfg: &RunConfig, params: &ModelParams) -> Result<(Trajectory, Verdict)> {
    let mut sc = sim_config(cfg, params);
    sc.early_stop = Some(cfg.tolerances);
    let traj = run_free(params, &sc)?;
    let verdict = classify_trajectory(&traj, &cfg.tolerances);
    Ok((traj, verdict))
}

fn prediction_json(cfg: &RunConfig, params: &ModelParams) -> Value {
    let n = &cfg.numerics;
    match dichotomy_inputs(params, n.eigen_n, n.eigen_steps).and_then(|i| dichotomy_predict(&i)) {
        Ok(p) => json!({ "predicted": format!("{:?}", p.predicted), "rationale": p.rationale }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn classify(cfg: &RunConfig, out: Option<&Path>, audit: bool) -> Result<()> {
    let (traj, verdict) = run_classified(cfg, &cfg.params)?;
    let mut m = header("classify", cfg);
    m.insert("verdict".into(), verdict_json(&verdict));
    m.insert("prediction".into(), prediction_json(cfg, &cfg.params));
    m.insert("stopped_early".into(), Value::from(traj.stopped_early));
    m.insert("audit".into(), audit_json(&traj.audit));
    write_json(out, &Value::Object(m))?;
    check_audit(&traj, audit)
}

pub fn threshold(cfg: &RunConfig, ratio: Option<f64>, bracket: Option<(f64, f64)>, out: Option<&Path>) -> Result<()> {
    let t = &cfg.threshold;
    let n = &cfg.numerics;
    let mut opts = ThresholdOptions::new(ratio.unwrap_or(t.ratio), bracket.unwrap_or(t.bracket), n.horizon, n.dx);
    opts.budget = t.budget;
    opts.tol = t.tol;
    opts.tolerances = Some(cfg.tolerances);
    opts.certificate = CertificateOptions { n: n.eigen_n, steps_per_period: n.eigen_steps, ..CertificateOptions::default() };
    let r = mu_threshold_search(&cfg.params, &opts)?;
    let probes: Vec<Value> = r
        .probes
        .iter()
        .map(|p| json!({ "mu": num(p.mu), "outcome": p.outcome.name(), "horizon": p.horizon }))
        .collect();
    let mut m = header("threshold", cfg);
    m.insert("ratio".into(), num(opts.ratio));
    m.insert("bracket".into(), nums(&[opts.bracket.0, opts.bracket.1]));
    m.insert("mu_low".into(), num(r.mu_low));
    m.insert("mu_high".into(), num(r.mu_high));
    m.insert("analytic_mu_low".into(), r.analytic_mu_low.map_or(Value::Null, num));
    m.insert("probes".into(), Value::Array(probes));
    write_json(out, &Value::Object(m))
}

fn with_h0(params: &ModelParams, h0: f64) -> ModelParams {
    let mut p = params.clone();
    p.frontier.h0 = h0;
    p.initial = InitialData { h0, ..p.initial };
    p
}

fn sweep_point(cfg: &RunConfig, parameter: SweepParameter, task: SweepTask, value: f64) -> Result<Value> {
    let base = &cfg.params;
    let mut m = serde_json::Map::new();
    m.insert("value".into(), num(value));
    match task {
        SweepTask::Eigen => {
            let (params, interval) = match parameter {
                SweepParameter::Slope => (base.clone(), cfg.numerics.interval),
                SweepParameter::Length => (base.clone(), (-0.5 * value, 0.5 * value)),
                SweepParameter::H0 => (base.clone(), (-value, value)),
                SweepParameter::Mu => unreachable!("rejected while parsing"),
            };
            let mut spec = eigen_spec(cfg, &params, interval)?;
            if parameter == SweepParameter::Slope {
                spec = EigenProblemSpec::new(
                    interval,
                    spec.coefficients.clone(),
                    spec.k1.clone(),
                    spec.k2.clone(),
                    value,
                    spec.n,
                    spec.steps_per_period,
                )?;
            }
            m.extend(eigen_json(&floquet_lambda(&spec)?));
        }
        SweepTask::Classify => {
            let params = match parameter {
                SweepParameter::Slope => {
                    ModelParams { harvest: HarvestRule::Linear { c: value }, ..base.clone() }
                }
                SweepParameter::Mu => {
                    let total = base.frontier.mu_total();
                    let share = if total > 0.0 { base.frontier.mu1 / total } else { 0.5 };
                    let mut p = base.clone();
                    p.frontier.mu1 = share * value;
                    p.frontier.mu2 = (1.0 - share) * value;
                    p
                }
                SweepParameter::Length => with_h0(base, 0.5 * value),
                SweepParameter::H0 => with_h0(base, value),
            };
            params.validate()?;
            let (_, verdict) = run_classified(cfg, &params)?;
            m.insert("verdict".into(), verdict_json(&verdict));
        }
    }
    Ok(Value::Object(m))
}

/// Runs every grid point in parallel; a failing point is recorded in the
/// manifest and does not stop the others. Returns the number of failures.
pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let Some(sw) = &cfg.sweep else {
        return Err(ConfigErrors(vec!["sweep: the config has no [sweep] section".into()]).into());
    };
    if sw.values.is_empty() {
        return Err(ConfigErrors(vec!["sweep.values: empty grid".into()]).into());
    }
    let results: Vec<Result<Value>> =
        sw.values.par_iter().map(|v| sweep_point(cfg, sw.parameter, sw.task, *v)).collect();
    let mut entries = Vec::with_capacity(results.len());
    let mut failures = 0;
    for (i, (value, r)) in sw.values.iter().zip(results).enumerate() {
        match r {
            Ok(point) => {
                let name = format!("point_{i}.json");
                write_json(Some(&out.join(&name)), &point)?;
                let mut e = json!({ "index": i, "value": num(*value), "file": name });
                if let Some(l) = point.get("lambda") {
                    e["lambda"] = l.clone();
                }
                if let Some(o) = point.pointer("/verdict/outcome") {
                    e["outcome"] = o.clone();
                }
                entries.push(e);
            }
            Err(err) => {
                failures += 1;
                entries.push(json!({ "index": i, "value": num(*value), "error": format!("{err:#}") }));
            }
        }
    }
    let mut m = header("sweep", cfg);
    m.insert("failures".into(), Value::from(failures));
    m.insert("points".into(), Value::Array(entries));
    write_json(Some(&out.join("manifest.json")), &Value::Object(m)).context("writing the sweep manifest")?;
    Ok(failures)
}
