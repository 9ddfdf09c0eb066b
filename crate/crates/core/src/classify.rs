//! Spreading/vanishing verdicts, eigenvalue-based predictions, the small-data
//! vanishing certificate, and the search for expansion-capacity thresholds.

use crate::eigen::{floquet_lambda, generalized_bracket, homogeneous_lambda, EigenProblemSpec, EigenResult};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::simulator::{run_free, PeriodSummary, SimConfig, Trajectory};

/// Fewer recorded periods than this always yield `Undetermined`.
pub const MIN_PERIODS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Spreading,
    Vanishing,
    Undetermined,
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Spreading => "spreading",
            Outcome::Vanishing => "vanishing",
            Outcome::Undetermined => "undetermined",
        }
    }
}

/// Finite-horizon surrogates for the asymptotic definitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Vanishing: sup of both densities over the last period at most this.
    pub eps_vanish: f64,
    /// Vanishing: growth of `h - g` over the last period at most this.
    pub eps_front: f64,
    /// Spreading: `h - g` at least this.
    pub l_spread: f64,
    /// Spreading: minimum density on the core window over the last period at least this.
    pub delta: f64,
    pub core: (f64, f64),
}

impl Tolerances {
    pub fn defaults(a_bound: f64, h0: f64) -> Self {
        Self {
            eps_vanish: 1e-5 * a_bound,
            eps_front: 1e-6,
            l_spread: 10.0 * h0,
            delta: 1e-3 * a_bound,
            core: (-0.5 * h0, 0.5 * h0),
        }
    }
}

pub(crate) fn period_outcome(s: &PeriodSummary, tol: &Tolerances) -> Outcome {
    if s.h - s.g >= tol.l_spread && s.core_min >= tol.delta {
        Outcome::Spreading
    } else if s.max1.max(s.max2) <= tol.eps_vanish && s.front_advance <= tol.eps_front {
        Outcome::Vanishing
    } else {
        Outcome::Undetermined
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evidence {
    pub final_span: f64,
    pub final_sup: f64,
    pub core_min: f64,
    pub front_advance: f64,
    /// Mean growth of `h - g` per period over the last periods.
    pub span_slope: f64,
    /// Mean change of `ln(sup u)` per period over the last periods.
    pub log_sup_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub outcome: Outcome,
    pub evidence: Option<Evidence>,
    /// Periods covered by the trajectory.
    pub horizon: usize,
}

pub fn classify_trajectory(traj: &Trajectory, tol: &Tolerances) -> Verdict {
    let periods = &traj.periods;
    let horizon = periods.len();
    let Some(last) = periods.last() else {
        return Verdict { outcome: Outcome::Undetermined, evidence: None, horizon };
    };
    let window = &periods[periods.len().saturating_sub(MIN_PERIODS)..];
    let first = window[0];
    let steps = (window.len() - 1).max(1) as f64;
    let sup = |s: &PeriodSummary| s.max1.max(s.max2);
    let log_sup_slope = if sup(&first) > 0.0 && sup(last) > 0.0 {
        (sup(last).ln() - sup(&first).ln()) / steps
    } else {
        0.0
    };
    let evidence = Evidence {
        final_span: last.h - last.g,
        final_sup: sup(last),
        core_min: last.core_min,
        front_advance: last.front_advance,
        span_slope: ((last.h - last.g) - (first.h - first.g)) / steps,
        log_sup_slope,
    };
    let outcome = if horizon < MIN_PERIODS { Outcome::Undetermined } else { period_outcome(last, tol) };
    Verdict { outcome, evidence: Some(evidence), horizon }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicted {
    Vanishing,
    Spreading,
    /// Depends on the expansion capacities and the initial size.
    Conditional,
    /// Spreading is possible but not guaranteed by the eigenvalue signs.
    ConditionalSpreading,
}

/// Eigenvalues feeding the dichotomy rules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DichotomyInputs {
    pub same_kernels: bool,
    /// `lambda*` on the whole line (identical kernels).
    pub lambda_inf: Option<f64>,
    /// `lambda*` on `(-h0, h0)` (identical kernels).
    pub lambda_domain: Option<f64>,
    /// Generalized bracket on the whole line (different kernels).
    pub lower_inf: Option<f64>,
    pub upper_inf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub predicted: Predicted,
    pub rationale: String,
}

pub fn dichotomy_predict(inputs: &DichotomyInputs) -> Result<Prediction> {
    let missing = |what: &str| Error::Precondition(format!("missing eigen input: {what}"));
    let p = |predicted, rationale: String| Ok(Prediction { predicted, rationale });
    if inputs.same_kernels {
        let inf = inputs.lambda_inf.ok_or_else(|| missing("lambda*(inf)"))?;
        if inf >= 0.0 {
            return p(Predicted::Vanishing, format!("lambda*(inf) = {inf} >= 0"));
        }
        let dom = inputs.lambda_domain.ok_or_else(|| missing("lambda*(-h0, h0)"))?;
        if dom <= 0.0 {
            return p(Predicted::Spreading, format!("lambda*(-h0, h0) = {dom} <= 0"));
        }
        p(Predicted::Conditional, format!("lambda*(-h0, h0) = {dom} > 0 > lambda*(inf) = {inf}"))
    } else {
        let lower = inputs.lower_inf.ok_or_else(|| missing("lower generalized eigenvalue at inf"))?;
        if lower >= 0.0 {
            return p(Predicted::Vanishing, format!("lower generalized eigenvalue at inf = {lower} >= 0"));
        }
        let upper = inputs.upper_inf.ok_or_else(|| missing("upper generalized eigenvalue at inf"))?;
        if upper < 0.0 {
            return p(Predicted::ConditionalSpreading, format!("upper generalized eigenvalue at inf = {upper} < 0"));
        }
        p(Predicted::Conditional, format!("bracket at inf [{lower}, {upper}] straddles 0"))
    }
}

/// Eigen inputs for `params`: whole-line values from the homogeneous
/// problem, the domain value from the discrete period map on `n` cells.
pub fn dichotomy_inputs(params: &ModelParams, n: usize, steps_per_period: usize) -> Result<DichotomyInputs> {
    let c = &params.coefficients;
    let slope = params.harvest.slope0();
    let inf = homogeneous_lambda(c, slope)?;
    let same = params.same_kernels();
    let mut inputs = DichotomyInputs { same_kernels: same, ..Default::default() };
    if same {
        inputs.lambda_inf = Some(inf);
        let h0 = params.frontier.h0;
        let spec = EigenProblemSpec::new((-h0, h0), c.clone(), params.k1.clone(), params.k2.clone(), slope, n, steps_per_period)?;
        inputs.lambda_domain = Some(floquet_lambda(&spec)?.lambda);
    } else {
        // constant test pairs make both dispersal terms vanish on the whole line
        inputs.lower_inf = Some(inf);
        inputs.upper_inf = Some(inf);
    }
    Ok(inputs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishingCertificate {
    pub h0: f64,
    pub h1: f64,
    /// Lower generalized eigenvalue on `(-h1, h1)`.
    pub lambda_lower: f64,
    pub gamma: f64,
    pub c1: f64,
    /// Minimum over `[-h0, h0]` of both eigenfunctions at time 0.
    pub eigen_min: f64,
    /// Initial data with `|u10| + |u20|` at most this vanish.
    pub smallness: f64,
    /// Upper barrier for the fronts: `h0 + (h1 - h0)(1 - exp(-gamma t))`.
    pub barrier: String,
}

impl VanishingCertificate {
    pub fn barrier_at(&self, t: f64) -> f64 {
        self.h0 + (self.h1 - self.h0) * (1.0 - (-self.gamma * t).exp())
    }
}

/// Options of the eigen solves used by the certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateOptions {
    pub n: usize,
    pub steps_per_period: usize,
    /// Candidate widenings, as fractions of `h0`.
    pub fractions: [f64; 3],
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self { n: 64, steps_per_period: 64, fractions: [0.1, 0.2, 0.5] }
    }
}

struct Widened {
    h1: f64,
    lambda_lower: f64,
    eigen_min: f64,
}

fn widened_eigen(params: &ModelParams, eps: f64, opts: &CertificateOptions) -> Result<Widened> {
    let h0 = params.frontier.h0;
    let h1 = h0 + eps;
    if !(h1 > h0) {
        return Err(Error::Precondition(format!("h1 = {h1} must exceed h0 = {h0}")));
    }
    let c = &params.coefficients;
    let slope = params.harvest.slope0();
    let steps = opts.steps_per_period.div_ceil(c.slot_lcm()) * c.slot_lcm();
    let spec = EigenProblemSpec::new((-h1, h1), c.clone(), params.k1.clone(), params.k2.clone(), slope, opts.n, steps)?;
    let eig = floquet_lambda(&spec)?;
    let lambda_lower = if params.same_kernels() { eig.lambda } else { generalized_bracket(&spec)?.lower };
    let eigen_min = min_on_window(&eig, h0)?;
    Ok(Widened { h1, lambda_lower, eigen_min })
}

/// `min(phi(0, x), psi(0, x))` for `x` in `[-h0, h0]`, with the end values
/// linearly interpolated between grid nodes.
fn min_on_window(eig: &EigenResult, h0: f64) -> Result<f64> {
    let grid = eig.grid.ok_or_else(|| Error::Precondition("eigen result has no grid".into()))?;
    let (phi, psi) = eig.profiles_at_zero().ok_or_else(|| Error::Precondition("eigen result has no eigenfunctions".into()))?;
    let interp = |v: &[f64], x: f64| {
        let pos = (x - grid.start) / grid.dx;
        let j = (pos.floor().max(0.0) as usize).min(grid.nodes - 2);
        let f = pos - j as f64;
        v[j] + (v[j + 1] - v[j]) * f
    };
    let mut best = f64::INFINITY;
    for v in [&phi, &psi] {
        best = best.min(interp(v, -h0)).min(interp(v, h0));
        for (j, val) in v.iter().enumerate() {
            let x = grid.x(j);
            if x >= -h0 && x <= h0 {
                best = best.min(*val);
            }
        }
    }
    Ok(best)
}

/// Small-data vanishing certificate using the widening `h1 = h0 + eps` that
/// gives the largest admissible initial size.
pub fn vanishing_certificate(params: &ModelParams, opts: &CertificateOptions) -> Result<VanishingCertificate> {
    let mu = params.frontier.mu_total();
    if !(mu > 0.0) {
        return Err(Error::Precondition("the certificate needs mu1 + mu2 > 0".into()));
    }
    let h0 = params.frontier.h0;
    let mut best: Option<VanishingCertificate> = None;
    for frac in opts.fractions {
        let w = widened_eigen(params, frac * h0, opts)?;
        if w.lambda_lower <= 0.0 {
            continue;
        }
        let gamma = 0.5 * w.lambda_lower;
        let c1 = (w.h1 - h0) * gamma / (2.0 * w.h1 * mu);
        let cert = VanishingCertificate {
            h0,
            h1: w.h1,
            lambda_lower: w.lambda_lower,
            gamma,
            c1,
            eigen_min: w.eigen_min,
            smallness: c1 * w.eigen_min,
            barrier: format!("eta(t) = {h0} + {}(1 - exp(-{gamma} t))", w.h1 - h0),
        };
        if best.as_ref().is_none_or(|b| cert.smallness > b.smallness) {
            best = Some(cert);
        }
    }
    best.ok_or_else(|| Error::Precondition("certificate unavailable: no widening with a positive eigenvalue".into()))
}

/// Certificate for an explicit widening; errors if `h1 <= h0`.
pub fn vanishing_certificate_at(params: &ModelParams, h1: f64, opts: &CertificateOptions) -> Result<VanishingCertificate> {
    let h0 = params.frontier.h0;
    let w = widened_eigen(params, h1 - h0, opts)?;
    let mu = params.frontier.mu_total();
    if w.lambda_lower <= 0.0 || !(mu > 0.0) {
        return Err(Error::Precondition("certificate unavailable".into()));
    }
    let gamma = 0.5 * w.lambda_lower;
    let c1 = (w.h1 - h0) * gamma / (2.0 * w.h1 * mu);
    Ok(VanishingCertificate {
        h0,
        h1: w.h1,
        lambda_lower: w.lambda_lower,
        gamma,
        c1,
        eigen_min: w.eigen_min,
        smallness: c1 * w.eigen_min,
        barrier: format!("eta(t) = {h0} + {}(1 - exp(-{gamma} t))", w.h1 - h0),
    })
}

/// Analytic lower threshold: every `mu1 + mu2` at most this value leads to
/// vanishing for the given initial data. `None` when no widening has a
/// positive eigenvalue.
pub fn analytic_mu_low(params: &ModelParams, opts: &CertificateOptions) -> Result<Option<f64>> {
    let h0 = params.frontier.h0;
    let (n1, n2) = params.initial.sup_norms();
    let size = n1 + n2;
    let mut best: Option<f64> = None;
    for frac in opts.fractions {
        let w = widened_eigen(params, frac * h0, opts)?;
        if w.lambda_lower <= 0.0 {
            continue;
        }
        let gamma = 0.5 * w.lambda_lower;
        let mu = (w.h1 - h0) * gamma * w.eigen_min / (2.0 * w.h1 * size);
        best = Some(best.map_or(mu, |b: f64| b.max(mu)));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub mu: f64,
    pub outcome: Outcome,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    /// Largest total capacity observed to vanish.
    pub mu_low: f64,
    /// Smallest total capacity observed to spread.
    pub mu_high: f64,
    pub analytic_mu_low: Option<f64>,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdOptions {
    /// `mu1 / mu2`.
    pub ratio: f64,
    pub bracket: (f64, f64),
    pub horizon: usize,
    pub dx: f64,
    /// Number of probes after the two endpoints.
    pub budget: usize,
    /// Stop once the open gap is narrower than this.
    pub tol: f64,
    pub tolerances: Option<Tolerances>,
    pub certificate: CertificateOptions,
}

impl ThresholdOptions {
    pub fn new(ratio: f64, bracket: (f64, f64), horizon: usize, dx: f64) -> Self {
        Self {
            ratio,
            bracket,
            horizon,
            dx,
            budget: 12,
            tol: 1e-3,
            tolerances: None,
            certificate: CertificateOptions::default(),
        }
    }
}

pub(crate) fn with_total_mu(params: &ModelParams, mu: f64, ratio: f64) -> ModelParams {
    let mut p = params.clone();
    p.frontier.mu1 = mu * ratio / (1.0 + ratio);
    p.frontier.mu2 = mu / (1.0 + ratio);
    p
}

/// Runs the free problem at total capacity `mu` and classifies it; an
/// undetermined outcome is retried once on a doubled horizon.
pub fn probe(params: &ModelParams, mu: f64, opts: &ThresholdOptions) -> Result<Probe> {
    let p = with_total_mu(params, mu, opts.ratio);
    let tol = opts.tolerances.unwrap_or_else(|| Tolerances::defaults(p.a_priori_bound(), p.frontier.h0));
    let mut horizon = opts.horizon;
    for attempt in 0..2 {
        let mut cfg = SimConfig::auto(&p, opts.dx, horizon);
        cfg.early_stop = Some(tol);
        cfg.core_window = Some(tol.core);
        let traj = run_free(&p, &cfg)?;
        let verdict = classify_trajectory(&traj, &tol);
        if verdict.outcome != Outcome::Undetermined || attempt == 1 {
            return Ok(Probe { mu, outcome: verdict.outcome, horizon });
        }
        horizon *= 2;
    }
    unreachable!()
}

/// Bisection on the total expansion capacity at a fixed `mu1 : mu2` ratio.
pub fn mu_threshold_search(params: &ModelParams, opts: &ThresholdOptions) -> Result<ThresholdResult> {
    let (lo, hi) = opts.bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParams(format!("bad bracket [{lo}, {hi}]")));
    }
    if !(opts.ratio > 0.0) {
        return Err(Error::InvalidParams(format!("ratio {} must be positive", opts.ratio)));
    }
    let mut probes = Vec::new();
    let p_lo = probe(params, lo, opts)?;
    let p_hi = probe(params, hi, opts)?;
    probes.push(p_lo);
    probes.push(p_hi);
    if p_lo.outcome != Outcome::Vanishing || p_hi.outcome != Outcome::Spreading {
        return Err(Error::Precondition(format!(
            "bracket endpoints must vanish and spread; got {} at {lo} and {} at {hi}",
            p_lo.outcome.name(),
            p_hi.outcome.name()
        )));
    }
    let mut vanish = lo;
    let mut spread = hi;
    // undetermined probes inside (vanish, spread)
    let mut gap: Option<(f64, f64)> = None;
    for _ in 0..opts.budget {
        let (a, b) = match gap {
            None => (vanish, spread),
            Some((u_lo, u_hi)) => {
                if u_lo - vanish >= spread - u_hi {
                    (vanish, u_lo)
                } else {
                    (u_hi, spread)
                }
            }
        };
        if b - a <= opts.tol {
            break;
        }
        let mid = 0.5 * (a + b);
        let pr = probe(params, mid, opts)?;
        probes.push(pr);
        match pr.outcome {
            Outcome::Vanishing => vanish = vanish.max(mid),
            Outcome::Spreading => spread = spread.min(mid),
            Outcome::Undetermined => {
                gap = Some(gap.map_or((mid, mid), |(u, v)| (u.min(mid), v.max(mid))));
            }
        }
    }
    let analytic = analytic_mu_low(params, &opts.certificate)?;
    Ok(ThresholdResult { mu_low: vanish, mu_high: spread, analytic_mu_low: analytic, probes })
}
