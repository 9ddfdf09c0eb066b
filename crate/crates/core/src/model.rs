//! Model parameters: periodic coefficients, harvesting rules, expansion
//! capacities and initial data, plus numerical checks of the standing
//! hypotheses.

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

/// Number of sample points used when checking the harvest hypothesis on `[0, A]`.
pub const HARVEST_CHECK_POINTS: usize = 1000;

/// A positive `tau`-periodic function of time, piecewise constant on equal slots.
#[derive(Debug, Clone, PartialEq)]
pub enum Periodic {
    Constant(f64),
    Table(Vec<f64>),
}

impl Periodic {
    pub fn slots(&self) -> usize {
        match self {
            Periodic::Constant(_) => 1,
            Periodic::Table(v) => v.len(),
        }
    }

    /// Value on slot `floor(phase * slots)`, where `phase` is the time
    /// fraction of the current period.
    pub fn at(&self, t: f64, tau: f64) -> f64 {
        match self {
            Periodic::Constant(v) => *v,
            Periodic::Table(v) => v[slot_index(t, tau, v.len())],
        }
    }

    /// Value used by explicit step `k` of `steps` equal steps per period
    /// (left endpoint of the step).
    pub fn at_step(&self, k: usize, steps: usize) -> f64 {
        match self {
            Periodic::Constant(v) => *v,
            Periodic::Table(v) => v[(k % steps) * v.len() / steps],
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            Periodic::Constant(v) => *v,
            Periodic::Table(v) => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn inf(&self) -> f64 {
        match self {
            Periodic::Constant(v) => *v,
            Periodic::Table(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Periodic::Constant(_) => true,
            Periodic::Table(v) => v.iter().all(|x| *x == v[0]),
        }
    }

    fn check(&self, name: &str, errors: &mut Vec<String>) {
        match self {
            Periodic::Table(v) if v.is_empty() => errors.push(format!("{name}: empty table")),
            _ => {
                let lo = self.inf();
                let hi = self.sup();
                if !(lo > 0.0 && hi.is_finite()) {
                    errors.push(format!("{name}: values must be positive and finite (range [{lo}, {hi}])"));
                }
            }
        }
    }
}

impl From<f64> for Periodic {
    fn from(v: f64) -> Self {
        Periodic::Constant(v)
    }
}

fn slot_index(t: f64, tau: f64, len: usize) -> usize {
    let q = t / tau * len as f64;
    let r = q.round();
    let cell = if (q - r).abs() < 1e-9 * r.abs().max(1.0) { r } else { q.floor() };
    (cell as i64).rem_euclid(len as i64) as usize
}

/// Coefficient values frozen at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub b: f64,
    pub a: f64,
    pub m1: f64,
    pub m2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub d1: f64,
    pub d2: f64,
    pub tau: f64,
    pub b: Periodic,
    pub a: Periodic,
    pub m1: Periodic,
    pub m2: Periodic,
    pub alpha1: Periodic,
    pub alpha2: Periodic,
}

impl Coefficients {
    /// Time-independent coefficients.
    pub fn constant(d1: f64, d2: f64, tau: f64, r: Rates) -> Result<Self> {
        let c = Self {
            d1,
            d2,
            tau,
            b: r.b.into(),
            a: r.a.into(),
            m1: r.m1.into(),
            m2: r.m2.into(),
            alpha1: r.alpha1.into(),
            alpha2: r.alpha2.into(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(self.d1 >= 0.0 && self.d1.is_finite()) {
            errors.push(format!("d1 = {} must be nonnegative", self.d1));
        }
        if !(self.d2 >= 0.0 && self.d2.is_finite()) {
            errors.push(format!("d2 = {} must be nonnegative", self.d2));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            errors.push(format!("tau = {} must be positive", self.tau));
        }
        for (name, f) in self.named() {
            f.check(name, &mut errors);
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errors.join("; ")))
        }
    }

    fn named(&self) -> [(&'static str, &Periodic); 6] {
        [
            ("b", &self.b),
            ("a", &self.a),
            ("m1", &self.m1),
            ("m2", &self.m2),
            ("alpha1", &self.alpha1),
            ("alpha2", &self.alpha2),
        ]
    }

    pub fn is_constant(&self) -> bool {
        self.named().iter().all(|(_, f)| f.is_constant())
    }

    pub fn rates_at(&self, t: f64) -> Rates {
        let tau = self.tau;
        Rates {
            b: self.b.at(t, tau),
            a: self.a.at(t, tau),
            m1: self.m1.at(t, tau),
            m2: self.m2.at(t, tau),
            alpha1: self.alpha1.at(t, tau),
            alpha2: self.alpha2.at(t, tau),
        }
    }

    pub fn rates_at_step(&self, k: usize, steps: usize) -> Rates {
        Rates {
            b: self.b.at_step(k, steps),
            a: self.a.at_step(k, steps),
            m1: self.m1.at_step(k, steps),
            m2: self.m2.at_step(k, steps),
            alpha1: self.alpha1.at_step(k, steps),
            alpha2: self.alpha2.at_step(k, steps),
        }
    }

    /// Constant rates, or a route error if any coefficient varies in time.
    pub fn constant_rates(&self) -> Result<Rates> {
        if !self.is_constant() {
            return Err(Error::RouteUnavailable("coefficients are not constant in time".into()));
        }
        Ok(self.rates_at(0.0))
    }

    /// Smallest number of slots that resolves every coefficient table.
    pub fn slot_lcm(&self) -> usize {
        self.named().iter().fold(1, |acc, (_, f)| lcm(acc, f.slots()))
    }

    /// `dt` times this quantity must not exceed 1 for the explicit scheme.
    pub fn rate_bound(&self, a_bound: f64) -> f64 {
        self.d1.max(self.d2)
            + self.a.sup()
            + self.m1.sup()
            + self.m2.sup()
            + self.b.sup()
            + 2.0 * self.alpha1.sup().max(self.alpha2.sup()) * a_bound
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// The pulse map applied to adults at every `t = n tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HarvestRule {
    /// `H(u) = c u`
    Linear { c: f64 },
    /// `H(u) = m u / (a + u)`
    BevertonHolt { m: f64, a: f64 },
    /// `H(u) = u exp(r - b u)`
    Ricker { r: f64, b: f64 },
    Identity,
}

impl HarvestRule {
    pub fn apply(&self, u: f64) -> Result<f64> {
        if u < 0.0 || u.is_nan() {
            return Err(Error::NegativeDensity(u));
        }
        Ok(self.eval(u))
    }

    /// Evaluation without the sign check; callers guarantee `u >= 0`.
    pub(crate) fn eval(&self, u: f64) -> f64 {
        match *self {
            HarvestRule::Linear { c } => c * u,
            HarvestRule::BevertonHolt { m, a } => m * u / (a + u),
            HarvestRule::Ricker { r, b } => u * (r - b * u).exp(),
            HarvestRule::Identity => u,
        }
    }

    /// `H'(0)`.
    pub fn slope0(&self) -> f64 {
        match *self {
            HarvestRule::Linear { c } => c,
            HarvestRule::BevertonHolt { m, a } => m / a,
            HarvestRule::Ricker { r, .. } => r.exp(),
            HarvestRule::Identity => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            HarvestRule::Linear { c } => c > 0.0 && c.is_finite(),
            HarvestRule::BevertonHolt { m, a } => m > 0.0 && a > 0.0 && m.is_finite() && a.is_finite(),
            HarvestRule::Ricker { r, b } => r.is_finite() && b > 0.0 && b.is_finite(),
            HarvestRule::Identity => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid harvest rule {self:?}")))
        }
    }
}

pub fn apply_harvest(rule: &HarvestRule, u: f64) -> Result<f64> {
    rule.apply(u)
}

pub fn harvest_slope0(rule: &HarvestRule) -> f64 {
    rule.slope0()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierParams {
    pub mu1: f64,
    pub mu2: f64,
    pub h0: f64,
}

impl FrontierParams {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(self.mu1 >= 0.0 && self.mu1.is_finite()) {
            errors.push(format!("mu1 = {} must be nonnegative", self.mu1));
        }
        if !(self.mu2 >= 0.0 && self.mu2.is_finite()) {
            errors.push(format!("mu2 = {} must be nonnegative", self.mu2));
        }
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            errors.push(format!("h0 = {} must be positive", self.h0));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errors.join("; ")))
        }
    }

    pub fn mu_total(&self) -> f64 {
        self.mu1 + self.mu2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `amplitude * cos(pi x / (2 h0))` on `[-h0, h0]`.
    Bump { amplitude: f64 },
    /// Values at `-h0 + j * 2 h0 / (len - 1)`, linearly interpolated.
    Samples(Vec<f64>),
}

/// Initial densities on `[-h0, h0]`, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub h0: f64,
    pub u1: Profile,
    pub u2: Profile,
}

impl InitialData {
    pub fn bump(h0: f64, amplitude1: f64, amplitude2: f64) -> Self {
        Self { h0, u1: Profile::Bump { amplitude: amplitude1 }, u2: Profile::Bump { amplitude: amplitude2 } }
    }

    pub fn samples(h0: f64, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        for (name, v) in [("u10", &u1), ("u20", &u2)] {
            if v.len() < 2 {
                return Err(Error::InvalidParams(format!("{name}: need at least two samples")));
            }
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::InvalidParams(format!("{name}: sample {x} is not a finite nonnegative number")));
            }
        }
        Ok(Self { h0, u1: Profile::Samples(u1), u2: Profile::Samples(u2) })
    }

    /// Same shapes scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |p: &Profile| match p {
            Profile::Bump { amplitude } => Profile::Bump { amplitude: amplitude * factor },
            Profile::Samples(v) => Profile::Samples(v.iter().map(|x| x * factor).collect()),
        };
        Self { h0: self.h0, u1: scale(&self.u1), u2: scale(&self.u2) }
    }

    pub fn value(&self, x: f64) -> (f64, f64) {
        (profile_value(&self.u1, self.h0, x), profile_value(&self.u2, self.h0, x))
    }

    /// `(sup u10, sup u20)`.
    pub fn sup_norms(&self) -> (f64, f64) {
        (profile_sup(&self.u1), profile_sup(&self.u2))
    }
}

fn profile_value(p: &Profile, h0: f64, x: f64) -> f64 {
    if x.abs() > h0 {
        return 0.0;
    }
    match p {
        Profile::Bump { amplitude } => (amplitude * (std::f64::consts::FRAC_PI_2 * x / h0).cos()).max(0.0),
        Profile::Samples(v) => {
            let n = v.len() - 1;
            let pos = (x + h0) / (2.0 * h0) * n as f64;
            let j = (pos.floor() as usize).min(n - 1);
            let frac = pos - j as f64;
            v[j] + (v[j + 1] - v[j]) * frac
        }
    }
}

fn profile_sup(p: &Profile) -> f64 {
    match p {
        Profile::Bump { amplitude } => amplitude.max(0.0),
        Profile::Samples(v) => v.iter().copied().fold(0.0, f64::max),
    }
}

/// Everything needed to run the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub k1: KernelSpec,
    pub k2: KernelSpec,
    pub coefficients: Coefficients,
    pub harvest: HarvestRule,
    pub frontier: FrontierParams,
    pub initial: InitialData,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.coefficients.validate()?;
        self.harvest.validate()?;
        self.frontier.validate()?;
        if (self.initial.h0 - self.frontier.h0).abs() > 1e-12 * self.frontier.h0 {
            return Err(Error::InvalidParams(format!(
                "initial data lives on [-{}, {}] but h0 = {}",
                self.initial.h0, self.initial.h0, self.frontier.h0
            )));
        }
        Ok(())
    }

    pub fn a_priori_bound(&self) -> f64 {
        a_priori_bound(&self.coefficients, &self.initial)
    }

    pub fn same_kernels(&self) -> bool {
        self.k1 == self.k2
    }
}

/// `max{b^M / alpha1^m, a^M / alpha2^m, |u10|_inf, |u20|_inf}`.
pub fn a_priori_bound(c: &Coefficients, init: &InitialData) -> f64 {
    let (n1, n2) = init.sup_norms();
    bound_from_parts(c.b.sup(), c.alpha1.inf(), c.a.sup(), c.alpha2.inf(), n1, n2)
}

pub fn bound_from_parts(b_sup: f64, alpha1_inf: f64, a_sup: f64, alpha2_inf: f64, norm1: f64, norm2: f64) -> f64 {
    (b_sup / alpha1_inf).max(a_sup / alpha2_inf).max(norm1).max(norm2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    /// First violating point (a density for the harvest check, a position for the others).
    pub witness: Option<f64>,
    pub detail: String,
}

impl HypothesisCheck {
    fn pass(name: &'static str) -> Self {
        Self { name, passed: true, witness: None, detail: String::new() }
    }

    fn fail(name: &'static str, witness: Option<f64>, detail: String) -> Self {
        Self { name, passed: false, witness, detail }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub kernel: HypothesisCheck,
    pub harvest: HypothesisCheck,
    pub initial: HypothesisCheck,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    pub fn checks(&self) -> [&HypothesisCheck; 3] {
        [&self.kernel, &self.harvest, &self.initial]
    }
}

/// Numerical check that `0 < H(u)/u < 1` and `H(u)/u` is nonincreasing on `(0, upper]`.
pub fn check_harvest(rule: &HarvestRule, upper: f64) -> HypothesisCheck {
    const NAME: &str = "harvest";
    let mut prev = f64::INFINITY;
    for j in 1..=HARVEST_CHECK_POINTS {
        let u = upper * j as f64 / HARVEST_CHECK_POINTS as f64;
        let ratio = rule.eval(u) / u;
        if !(ratio > 0.0 && ratio < 1.0) {
            return HypothesisCheck::fail(NAME, Some(u), format!("H(u)/u = {ratio} outside (0, 1) at u = {u}"));
        }
        if ratio > prev * (1.0 + 1e-14) {
            return HypothesisCheck::fail(NAME, Some(u), format!("H(u)/u increases at u = {u}"));
        }
        prev = ratio;
    }
    HypothesisCheck::pass(NAME)
}

fn check_kernel(k: &KernelSpec) -> Option<String> {
    if !(k.peak() > 0.0) {
        return Some("J(0) must be positive".into());
    }
    let mass = k.mass();
    if (mass - 1.0).abs() > 1e-10 {
        return Some(format!("kernel mass {mass} differs from 1"));
    }
    None
}

/// Checks the kernel hypothesis, the harvest hypothesis on `[0, A]` and the
/// sign conditions on the initial data.
pub fn validate_hypotheses(
    k1: &KernelSpec,
    k2: &KernelSpec,
    c: &Coefficients,
    rule: &HarvestRule,
    fp: &FrontierParams,
    init: &InitialData,
) -> HypothesisReport {
    let kernel = match check_kernel(k1).or_else(|| check_kernel(k2)) {
        None => HypothesisCheck::pass("kernel"),
        Some(msg) => HypothesisCheck::fail("kernel", None, msg),
    };
    let harvest = check_harvest(rule, a_priori_bound(c, init));
    let initial = check_initial(fp.h0, init);
    HypothesisReport { kernel, harvest, initial }
}

fn check_initial(h0: f64, init: &InitialData) -> HypothesisCheck {
    const NAME: &str = "initial";
    if (init.h0 - h0).abs() > 1e-12 * h0 {
        return HypothesisCheck::fail(NAME, None, format!("initial data half-length {} differs from h0 = {h0}", init.h0));
    }
    for (name, p) in [("u10", &init.u1), ("u20", &init.u2)] {
        match p {
            Profile::Bump { amplitude } => {
                if !(*amplitude > 0.0) {
                    return HypothesisCheck::fail(NAME, Some(0.0), format!("{name} amplitude must be positive"));
                }
            }
            Profile::Samples(v) => {
                let n = v.len() - 1;
                for (j, x) in [(0usize, -h0), (n, h0)] {
                    if v[j] != 0.0 {
                        return HypothesisCheck::fail(NAME, Some(x), format!("{name}({x}) = {} is not zero", v[j]));
                    }
                }
                if let Some(j) = (1..n).find(|&j| !(v[j] > 0.0)) {
                    let x = -h0 + 2.0 * h0 * j as f64 / n as f64;
                    return HypothesisCheck::fail(NAME, Some(x), format!("{name}({x}) = {} is not positive", v[j]));
                }
            }
        }
    }
    HypothesisCheck::pass(NAME)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rates(b: f64, a: f64, m1: f64, m2: f64, alpha1: f64, alpha2: f64) -> Rates {
        Rates { b, a, m1, m2, alpha1, alpha2 }
    }

    #[test]
    fn harvest_examples() {
        assert_eq!(HarvestRule::Linear { c: 0.5 }.apply(2.0).unwrap(), 1.0);
        assert_eq!(HarvestRule::BevertonHolt { m: 2.0, a: 1.0 }.apply(1.0).unwrap(), 1.0);
        let ricker = HarvestRule::Ricker { r: 0.1, b: 1.0 }.apply(0.5).unwrap();
        assert_abs_diff_eq!(ricker, 0.5 * (-0.4f64).exp(), epsilon = 1e-15);
        assert!(HarvestRule::Identity.apply(-1e-3).is_err());
        assert_eq!(HarvestRule::Identity.apply(0.0).unwrap(), 0.0);
    }

    #[test]
    fn slope_examples() {
        assert_eq!(HarvestRule::Linear { c: 0.7 }.slope0(), 0.7);
        assert_eq!(HarvestRule::BevertonHolt { m: 2.0, a: 4.0 }.slope0(), 0.5);
        assert_eq!(HarvestRule::Ricker { r: 0.0, b: 3.0 }.slope0(), 1.0);
        assert_eq!(HarvestRule::Identity.slope0(), 1.0);
    }

    #[test]
    fn bound_examples() {
        let c = Coefficients::constant(1.0, 1.0, 1.0, rates(1.0, 1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let init = InitialData::bump(1.0, 0.5, 0.5);
        assert_eq!(a_priori_bound(&c, &init), 1.0);
        assert_eq!(bound_from_parts(2.0, 1.0, 2.0, 1.0, 2.0, 2.0), 2.0);
        let c = Coefficients::constant(1.0, 1.0, 1.0, rates(3.0, 1.0, 1.0, 1.0, 2.0, 4.0)).unwrap();
        assert_eq!(a_priori_bound(&c, &InitialData::bump(1.0, 0.1, 0.1)), 1.5);
    }

    #[test]
    fn hypothesis_examples() {
        let k = KernelSpec::triangular(1.0).unwrap();
        let c = Coefficients::constant(1.0, 1.0, 1.0, rates(10.0, 1.0, 1.0, 1.0, 1.0, 1.0)).unwrap();
        let fp = FrontierParams { mu1: 1.0, mu2: 1.0, h0: 1.0 };
        let init = InitialData::bump(1.0, 1.0, 1.0);
        let r = validate_hypotheses(&k, &k, &c, &HarvestRule::Linear { c: 0.5 }, &fp, &init);
        assert!(r.all_passed(), "{r:?}");
        assert_eq!(a_priori_bound(&c, &init), 10.0);

        let r = validate_hypotheses(&k, &k, &c, &HarvestRule::Ricker { r: 0.5, b: 1.0 }, &fp, &init);
        assert!(!r.harvest.passed);
        let w = r.harvest.witness.unwrap();
        // exp(r - b u) = 1 at u = r / b
        assert!(w > 0.0 && w < 0.5, "witness {w}");

        let mut v: Vec<f64> = (0..=20).map(|j| 1.0 - ((j as f64 - 10.0) / 10.0).powi(2)).collect();
        v[20] = 0.1;
        let init = InitialData::samples(1.0, v.clone(), v).unwrap();
        let r = validate_hypotheses(&k, &k, &c, &HarvestRule::Linear { c: 0.5 }, &fp, &init);
        assert!(!r.initial.passed);
        assert_eq!(r.initial.witness, Some(1.0));
    }

    #[test]
    fn periodic_slots() {
        let p = Periodic::Table(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.at(0.0, 2.0), 1.0);
        assert_eq!(p.at(0.5, 2.0), 2.0);
        assert_eq!(p.at(1.99, 2.0), 4.0);
        // a time that rounds to a period boundary from below
        assert_eq!(p.at(3.0 * 0.1 / 0.1 * 2.0 - 1e-15, 2.0), 1.0);
        assert_eq!(p.at_step(5, 8), 3.0);
        assert_eq!(p.sup(), 4.0);
        assert_eq!(p.inf(), 1.0);
        assert!(!p.is_constant());
        assert!(Periodic::Table(vec![2.0, 2.0]).is_constant());
    }

    #[test]
    fn invalid_coefficients_report_every_violation() {
        let c = Coefficients {
            d1: -1.0,
            d2: 1.0,
            tau: 0.0,
            b: Periodic::Constant(1.0),
            a: Periodic::Constant(-1.0),
            m1: Periodic::Constant(1.0),
            m2: Periodic::Constant(1.0),
            alpha1: Periodic::Constant(1.0),
            alpha2: Periodic::Constant(1.0),
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("d1") && msg.contains("tau") && msg.contains("a:"), "{msg}");
    }

    #[test]
    fn bump_profile_vanishes_at_edges() {
        let init = InitialData::bump(2.0, 1.0, 0.5);
        assert_abs_diff_eq!(init.value(2.0).0, 0.0, epsilon = 1e-15);
        assert_eq!(init.value(0.0), (1.0, 0.5));
        assert_eq!(init.value(2.5), (0.0, 0.0));
    }
}
