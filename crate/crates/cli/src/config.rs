//! Run configuration: a TOML file walked by hand so that every violation is
//! reported at once and unknown keys are rejected.
//!
//! Every value actually used, defaults included, is echoed into
//! [`RunConfig::resolved`] and from there into each output summary.

use std::path::{Path, PathBuf};

use pulsefront::classify::Tolerances;
use pulsefront::model::{validate_hypotheses, Periodic};
use pulsefront::simulator::FixedEdge;
use pulsefront::{Coefficients, FrontierParams, HarvestRule, InitialData, KernelSpec, ModelParams};
use serde_json::{Map, Value};
use toml::Table;

use crate::output::{num, nums};

/// Config problems; all of them, not just the first.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub dx: f64,
    /// From `dt` or `steps_per_period`; `None` picks the smallest stable value.
    pub steps_per_period: Option<usize>,
    pub horizon: usize,
    /// `None` records once per period.
    pub record_stride: Option<usize>,
    pub snapshot_every: usize,
    pub fixed_edge: FixedEdge,
    /// Fixed interval for eigen, periodic and fixed-domain runs; defaults to `[-h0, h0]`.
    pub interval: (f64, f64),
    pub eigen_n: usize,
    pub eigen_steps: usize,
    pub monotone_tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSection {
    pub ratio: f64,
    pub bracket: (f64, f64),
    pub budget: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// `H'(0)`; for simulation tasks the pulse becomes `Linear { c }`.
    Slope,
    /// Total expansion capacity at the configured `mu1 : mu2` ratio.
    Mu,
    /// Interval length `L` on `(-L/2, L/2)`.
    Length,
    H0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTask {
    Eigen,
    Classify,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub task: SweepTask,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub numerics: Numerics,
    pub tolerances: Tolerances,
    pub threshold: ThresholdSection,
    pub sweep: Option<SweepSection>,
    pub resolved: Value,
    pub warnings: Vec<String>,
}

const SECTIONS: [&str; 9] =
    ["kernel", "coefficients", "harvest", "frontier", "initial", "numerics", "classify", "threshold", "sweep"];

/// One TOML table being consumed; tracks used keys and resolved values.
struct Section {
    name: String,
    table: Table,
    used: Vec<String>,
    errors: Vec<String>,
    resolved: Map<String, Value>,
}

impl Section {
    fn new(name: &str, value: Option<&toml::Value>, errors: &mut Vec<String>) -> Self {
        let table = match value {
            None => Table::new(),
            Some(toml::Value::Table(t)) => t.clone(),
            Some(other) => {
                errors.push(format!("{name}: expected a table, found {}", other.type_str()));
                Table::new()
            }
        };
        Self { name: name.to_string(), table, used: Vec::new(), errors: Vec::new(), resolved: Map::new() }
    }

    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.used.push(key.to_string());
        self.table.get(key).cloned()
    }

    fn fail(&mut self, key: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{}.{key}: {msg}", self.name));
    }

    fn opt_f64(&mut self, key: &str) -> Option<f64> {
        let v = match self.take(key)? {
            toml::Value::Float(x) => x,
            toml::Value::Integer(i) => i as f64,
            other => {
                self.fail(key, format!("expected a number, found {}", other.type_str()));
                return None;
            }
        };
        if !v.is_finite() {
            self.fail(key, "must be finite");
            return None;
        }
        self.resolved.insert(key.into(), num(v));
        Some(v)
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        let present = self.table.contains_key(key);
        match self.opt_f64(key) {
            Some(v) => v,
            None => {
                if !present {
                    self.resolved.insert(key.into(), num(default));
                }
                default
            }
        }
    }

    fn opt_usize(&mut self, key: &str) -> Option<usize> {
        match self.take(key)? {
            toml::Value::Integer(i) if i >= 0 => {
                self.resolved.insert(key.into(), Value::from(i));
                Some(i as usize)
            }
            other => {
                self.fail(key, format!("expected a nonnegative integer, found {other}"));
                None
            }
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> usize {
        let present = self.table.contains_key(key);
        self.opt_usize(key).unwrap_or_else(|| {
            if !present {
                self.resolved.insert(key.into(), Value::from(default));
            }
            default
        })
    }

    fn opt_string(&mut self, key: &str) -> Option<String> {
        match self.take(key)? {
            toml::Value::String(s) => {
                self.resolved.insert(key.into(), Value::from(s.clone()));
                Some(s)
            }
            other => {
                self.fail(key, format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        let present = self.table.contains_key(key);
        self.opt_string(key).unwrap_or_else(|| {
            if !present {
                self.resolved.insert(key.into(), Value::from(default));
            }
            default.to_string()
        })
    }

    fn opt_list(&mut self, key: &str) -> Option<Vec<f64>> {
        let v = self.take(key)?;
        let toml::Value::Array(items) = v else {
            self.fail(key, format!("expected an array of numbers, found {}", v.type_str()));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                toml::Value::Float(x) if x.is_finite() => out.push(x),
                toml::Value::Integer(i) => out.push(i as f64),
                other => {
                    self.fail(key, format!("array entry {other} is not a finite number"));
                    return None;
                }
            }
        }
        self.resolved.insert(key.into(), nums(&out));
        Some(out)
    }

    /// A number (constant) or an array (equal time slots over one period).
    fn periodic(&mut self, key: &str, default: f64) -> Periodic {
        match self.table.get(key) {
            Some(toml::Value::Array(_)) => match self.opt_list(key) {
                Some(v) if !v.is_empty() => Periodic::Table(v),
                Some(_) => {
                    self.fail(key, "table must not be empty");
                    Periodic::Constant(default)
                }
                None => Periodic::Constant(default),
            },
            _ => Periodic::Constant(self.f64(key, default)),
        }
    }

    fn sub(&mut self, key: &str) -> Option<Section> {
        let v = self.take(key)?;
        let mut errors = Vec::new();
        let s = Section::new(&format!("{}.{key}", self.name), Some(&v), &mut errors);
        self.errors.extend(errors);
        Some(s)
    }

    /// Reports unknown keys and hands over the errors and resolved values.
    fn finish(mut self, errors: &mut Vec<String>) -> Value {
        let mut unknown: Vec<&String> = self.table.keys().filter(|k| !self.used.contains(k)).collect();
        unknown.sort();
        for k in unknown {
            self.errors.push(format!("{}.{k}: unknown key", self.name));
        }
        errors.append(&mut self.errors);
        Value::Object(self.resolved)
    }
}

pub fn parse_config(path: &Path, strict: bool) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_str(&text, &base, strict)
}

/// Parses config text; relative paths inside it resolve against `base`.
pub fn parse_str(text: &str, base: &Path, strict: bool) -> Result<RunConfig, ConfigErrors> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![format!("TOML syntax: {e}")]))?;
    let mut errors = Vec::new();
    for key in root.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            errors.push(format!("{key}: unknown section"));
        }
    }
    let mut resolved = Map::new();

    let mut s = Section::new("kernel", root.get("kernel"), &mut errors);
    let k1 = kernel(s.sub("k1"), "kernel.k1", base, &mut errors, &mut resolved);
    let k2 = match s.sub("k2") {
        Some(sub) => kernel(Some(sub), "kernel.k2", base, &mut errors, &mut resolved),
        None => k1.clone(),
    };
    s.finish(&mut errors);

    let mut s = Section::new("coefficients", root.get("coefficients"), &mut errors);
    let d1 = s.f64("d1", 1.0);
    let d2 = s.f64("d2", 1.0);
    let tau = s.f64("tau", 1.0);
    let coefficients = Coefficients {
        d1,
        d2,
        tau,
        b: s.periodic("b", 2.0),
        a: s.periodic("a", 1.0),
        m1: s.periodic("m1", 0.5),
        m2: s.periodic("m2", 0.5),
        alpha1: s.periodic("alpha1", 1.0),
        alpha2: s.periodic("alpha2", 1.0),
    };
    resolved.insert("coefficients".into(), s.finish(&mut errors));
    if let Err(e) = coefficients.validate() {
        errors.push(format!("coefficients: {e}"));
    }

    let mut s = Section::new("harvest", root.get("harvest"), &mut errors);
    let harvest = match s.string("rule", "linear").as_str() {
        "linear" => HarvestRule::Linear { c: s.f64("c", 0.5) },
        "beverton-holt" => HarvestRule::BevertonHolt { m: s.f64("m", 0.5), a: s.f64("a", 1.0) },
        "ricker" => HarvestRule::Ricker { r: s.f64("r", -0.5), b: s.f64("b", 1.0) },
        "identity" => HarvestRule::Identity,
        other => {
            s.fail("rule", format!("unknown rule {other:?} (linear, beverton-holt, ricker, identity)"));
            HarvestRule::Identity
        }
    };
    resolved.insert("harvest".into(), s.finish(&mut errors));
    if let Err(e) = harvest.validate() {
        errors.push(format!("harvest: {e}"));
    }

    let mut s = Section::new("frontier", root.get("frontier"), &mut errors);
    let frontier = FrontierParams { mu1: s.f64("mu1", 1.0), mu2: s.f64("mu2", 1.0), h0: s.f64("h0", 1.0) };
    resolved.insert("frontier".into(), s.finish(&mut errors));
    if let Err(e) = frontier.validate() {
        errors.push(format!("frontier: {e}"));
    }
    let h0 = frontier.h0;

    let mut s = Section::new("initial", root.get("initial"), &mut errors);
    let initial = initial_data(&mut s, h0, base);
    resolved.insert("initial".into(), s.finish(&mut errors));

    let mut s = Section::new("numerics", root.get("numerics"), &mut errors);
    let numerics = numerics(&mut s, &coefficients, h0);
    resolved.insert("numerics".into(), s.finish(&mut errors));

    let mut s = Section::new("threshold", root.get("threshold"), &mut errors);
    let bracket = pair(&mut s, "bracket", (0.01, 10.0));
    let threshold = ThresholdSection {
        ratio: s.f64("ratio", 1.0),
        bracket,
        budget: s.usize("budget", 12),
        tol: s.f64("tol", 1e-3),
    };
    resolved.insert("threshold".into(), s.finish(&mut errors));

    let sweep = match root.get("sweep") {
        None => None,
        Some(v) => {
            let mut s = Section::new("sweep", Some(v), &mut errors);
            let sw = sweep(&mut s);
            resolved.insert("sweep".into(), s.finish(&mut errors));
            sw
        }
    };

    // classify tolerances default from the bound, so they need the model first
    let classify_table = root.get("classify").cloned();
    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    let params = ModelParams { k1, k2, coefficients, harvest, frontier, initial };
    if let Err(e) = params.validate() {
        return Err(ConfigErrors(vec![e.to_string()]));
    }
    let mut s = Section::new("classify", classify_table.as_ref(), &mut errors);
    let defaults = Tolerances::defaults(params.a_priori_bound(), h0);
    let core = pair(&mut s, "core", defaults.core);
    let tolerances = Tolerances {
        eps_vanish: s.f64("eps_vanish", defaults.eps_vanish),
        eps_front: s.f64("eps_front", defaults.eps_front),
        l_spread: s.f64("l_spread", defaults.l_spread),
        delta: s.f64("delta", defaults.delta),
        core,
    };
    resolved.insert("classify".into(), s.finish(&mut errors));

    let mut warnings = Vec::new();
    let report = validate_hypotheses(
        &params.k1,
        &params.k2,
        &params.coefficients,
        &params.harvest,
        &params.frontier,
        &params.initial,
    );
    for check in report.checks() {
        if !check.passed {
            let label = match check.name {
                "harvest" => "(A) on the pulse",
                "kernel" => "(J) on the kernels",
                _ => "on the initial data",
            };
            let witness = check.witness.map(|w| format!(" (witness {w})")).unwrap_or_default();
            let msg = format!("hypothesis {label} fails: {}{witness}", check.detail);
            if strict {
                errors.push(msg);
            } else {
                warnings.push(msg);
            }
        }
    }
    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(RunConfig { params, numerics, tolerances, threshold, sweep, resolved: Value::Object(resolved), warnings })
}

fn kernel(
    section: Option<Section>,
    name: &str,
    base: &Path,
    errors: &mut Vec<String>,
    resolved: &mut Map<String, Value>,
) -> KernelSpec {
    let fallback = || KernelSpec::triangular(1.0).expect("unit triangular kernel");
    let mut s = section.unwrap_or_else(|| Section::new(name, None, errors));
    let built = match s.string("family", "triangular").as_str() {
        "triangular" => KernelSpec::triangular(s.f64("sigma", 1.0)),
        "gaussian" => KernelSpec::truncated_gaussian(s.f64("sigma", 1.0)),
        "table" => match (s.opt_string("path"), s.opt_f64("step"), s.opt_list("values")) {
            (Some(p), None, None) => KernelSpec::table_from_csv(resolve(base, &p)),
            (None, Some(step), Some(values)) => KernelSpec::table(step, values),
            _ => {
                s.fail("family", "a table kernel needs either path or both step and values");
                Ok(fallback())
            }
        },
        other => {
            s.fail("family", format!("unknown family {other:?} (triangular, gaussian, table)"));
            Ok(fallback())
        }
    };
    let k = built.unwrap_or_else(|e| {
        s.fail("family", e);
        fallback()
    });
    let key = name.rsplit('.').next().unwrap_or(name).to_string();
    let r = s.finish(errors);
    resolved.entry("kernel").or_insert_with(|| Value::Object(Map::new()))[key.as_str()] = r;
    k
}

/// `[left, right]` with `left < right`.
fn pair(s: &mut Section, key: &str, default: (f64, f64)) -> (f64, f64) {
    match s.opt_list(key) {
        Some(v) if v.len() == 2 && v[0] < v[1] => (v[0], v[1]),
        Some(_) => {
            s.fail(key, "expected [left, right] with left < right");
            default
        }
        None => {
            s.resolved.insert(key.into(), nums(&[default.0, default.1]));
            default
        }
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn initial_data(s: &mut Section, h0: f64, base: &Path) -> InitialData {
    let fallback = InitialData::bump(h0, 1.0, 1.0);
    let kind = s.string("kind", "bump");
    let built = match kind.as_str() {
        "bump" => Ok(InitialData::bump(h0, s.f64("amp1", 1.0), s.f64("amp2", 1.0))),
        "samples" => match (s.opt_list("u1"), s.opt_list("u2")) {
            (Some(u1), Some(u2)) => InitialData::samples(h0, u1, u2).map_err(|e| e.to_string()),
            _ => Err("samples need both u1 and u2 arrays".to_string()),
        },
        "csv" => match s.opt_string("path") {
            Some(p) => profile_csv(&resolve(base, &p), h0),
            None => Err("csv initial data needs a path".to_string()),
        },
        other => Err(format!("unknown kind {other:?} (bump, samples, csv)")),
    };
    built.unwrap_or_else(|e| {
        s.fail("kind", e);
        fallback
    })
}

/// Three-column CSV `x,u1,u2` on a uniform grid from `-h0` to `h0`.
fn profile_csv(path: &Path, h0: f64) -> Result<InitialData, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let (mut xs, mut u1, mut u2) = (Vec::new(), Vec::new(), Vec::new());
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("{} line {}: {e}", path.display(), lineno + 1))?;
        let [x, a, b] = cells[..] else {
            return Err(format!("{} line {}: expected x,u1,u2", path.display(), lineno + 1));
        };
        xs.push(x);
        u1.push(a);
        u2.push(b);
    }
    if xs.len() < 2 {
        return Err(format!("{}: need at least two rows", path.display()));
    }
    let n = xs.len() - 1;
    let step = 2.0 * h0 / n as f64;
    for (j, x) in xs.iter().enumerate() {
        let expected = -h0 + j as f64 * step;
        if (x - expected).abs() > 1e-9 * h0.max(1.0) {
            return Err(format!("{}: x = {x} at row {j}, expected {expected} (uniform on [-h0, h0])", path.display()));
        }
    }
    InitialData::samples(h0, u1, u2).map_err(|e| e.to_string())
}

fn numerics(s: &mut Section, c: &Coefficients, h0: f64) -> Numerics {
    let dx = s.f64("dx", 0.05);
    if !(dx > 0.0) {
        s.fail("dx", "must be positive");
    }
    let slots = c.slot_lcm();
    let mut steps = None;
    match (s.opt_f64("dt"), s.opt_usize("steps_per_period")) {
        (Some(_), Some(_)) => s.fail("dt", "give either dt or steps_per_period, not both"),
        (Some(dt), None) => {
            let ratio = c.tau / dt;
            let k = ratio.round();
            if !(dt > 0.0) || (ratio - k).abs() > 1e-9 * ratio.max(1.0) || k < 1.0 {
                s.fail("dt", format!("tau / dt = {ratio} must be a positive integer"));
            } else {
                steps = Some(k as usize);
            }
        }
        (None, Some(n)) => steps = Some(n),
        (None, None) => {}
    }
    if let Some(n) = steps {
        if n == 0 || n % slots != 0 {
            s.fail("steps_per_period", format!("{n} steps per period is not a positive multiple of the {slots} coefficient slots"));
        }
    }
    let interval = pair(s, "interval", (-h0, h0));
    let record_stride = s.opt_usize("record_stride");
    if record_stride == Some(0) {
        s.fail("record_stride", "must be positive");
    }
    let fixed_edge = match s.string("fixed_edge", "open").as_str() {
        "open" => FixedEdge::Open,
        "zero" => FixedEdge::Zero,
        other => {
            s.fail("fixed_edge", format!("unknown edge {other:?} (open, zero)"));
            FixedEdge::Open
        }
    };
    let eigen_n = s.usize("eigen_n", 128);
    let eigen_steps = s.usize("eigen_steps", 64);
    if eigen_steps == 0 || eigen_steps % slots != 0 {
        s.fail("eigen_steps", format!("{eigen_steps} is not a positive multiple of the {slots} coefficient slots"));
    }
    Numerics {
        dx,
        steps_per_period: steps,
        horizon: s.usize("horizon", 50),
        record_stride,
        snapshot_every: s.usize("snapshot_every", 0),
        fixed_edge,
        interval,
        eigen_n,
        eigen_steps,
        monotone_tol: s.f64("monotone_tol", 1e-8),
        max_iter: s.usize("max_iter", 200_000),
    }
}

fn sweep(s: &mut Section) -> Option<SweepSection> {
    let parameter = match s.string("parameter", "").as_str() {
        "slope" => SweepParameter::Slope,
        "mu" => SweepParameter::Mu,
        "length" => SweepParameter::Length,
        "h0" => SweepParameter::H0,
        other => {
            s.fail("parameter", format!("unknown sweep parameter {other:?} (slope, mu, length, h0)"));
            return None;
        }
    };
    let task = match s.string("task", "eigen").as_str() {
        "eigen" => SweepTask::Eigen,
        "classify" => SweepTask::Classify,
        other => {
            s.fail("task", format!("unknown task {other:?} (eigen, classify)"));
            return None;
        }
    };
    if parameter == SweepParameter::Mu && task == SweepTask::Eigen {
        s.fail("parameter", "eigenvalues do not depend on mu; use task = \"classify\"");
    }
    let values = s.opt_list("values").unwrap_or_default();
    Some(SweepSection { parameter, task, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pulsefront::Rates;

    fn parse(text: &str) -> Result<RunConfig, ConfigErrors> {
        parse_str(text, Path::new("."), false)
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.params.harvest, HarvestRule::Linear { c: 0.5 });
        assert_eq!(c.params.frontier, FrontierParams { mu1: 1.0, mu2: 1.0, h0: 1.0 });
        assert_eq!(c.numerics.dx, 0.05);
        assert_eq!(c.numerics.interval, (-1.0, 1.0));
        assert!(c.warnings.is_empty());
        let r = Rates { b: 2.0, a: 1.0, m1: 0.5, m2: 0.5, alpha1: 1.0, alpha2: 1.0 };
        assert_eq!(c.params.coefficients, Coefficients::constant(1.0, 1.0, 1.0, r).unwrap());
        assert_eq!(c.resolved["frontier"]["h0"], num(1.0));
        assert_eq!(c.resolved["numerics"]["horizon"], Value::from(50));
    }

    #[test]
    fn all_errors_reported() {
        let e = parse("[frontier]\nh0 = \"wide\"\nspeed = 3\n[numerics]\ndt = 0.3\n[bogus]\n").unwrap_err();
        let text = e.to_string();
        for needle in ["frontier.h0", "frontier.speed: unknown key", "tau / dt", "bogus: unknown section"] {
            assert!(text.contains(needle), "{needle} missing from {text}");
        }
    }

    #[test]
    fn tables_and_kernels() {
        let c = parse(
            "[kernel]\nk1 = { family = \"gaussian\", sigma = 0.5 }\nk2 = { family = \"table\", step = 0.5, values = [1.0, 0.5, 0.0] }\n\
             [coefficients]\nb = [1.0, 2.0]\n[numerics]\nsteps_per_period = 64\n",
        )
        .unwrap();
        assert_eq!(c.params.coefficients.b, Periodic::Table(vec![1.0, 2.0]));
        assert!(!c.params.same_kernels());
        assert_eq!(c.numerics.steps_per_period, Some(64));
        let e = parse("[coefficients]\nb = [1.0, 2.0]\n[numerics]\nsteps_per_period = 3\n").unwrap_err();
        assert!(e.to_string().contains("multiple of the 2"));
    }

    #[test]
    fn strict_mode_rejects_ricker_growth() {
        let text = "[harvest]\nrule = \"ricker\"\nr = 0.5\nb = 1.0\n";
        let lax = parse(text).unwrap();
        assert!(lax.warnings.iter().any(|w| w.contains("(A)")));
        let e = parse_str(text, Path::new("."), true).unwrap_err();
        assert!(e.to_string().contains("(A)") && e.to_string().contains("witness"));
    }
}
