//! Principal eigenvalues of the linearized pulsed problem.
//!
//! `lambda0` is the Perron eigenvalue of the time-independent nonlocal
//! operator on an interval. The periodic eigenvalue `lambda*` is obtained
//! either from the separated 2x2 algebraic system (constant coefficients,
//! identical kernels) or from the spectral radius `rho` of the discrete period
//! map (pulse first, then evolution), through `lambda* = -ln(rho) / tau`.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};
use crate::kernel::{trapezoid_weight, ConvolutionStencil, KernelSpec};
use crate::model::{Coefficients, Rates};
use crate::ode::{rk4_step, simpson};

/// Relative width of the Collatz-Wielandt enclosure at which power iteration stops.
pub const POWER_TOL: f64 = 1e-13;
pub const POWER_MAX_ITER: usize = 1_000_000;
/// Tolerance of the bisections used by the algebraic route and the bracket.
pub const BISECTION_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Power,
    ClosedForm,
    Floquet,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Power => "power",
            Method::ClosedForm => "closed-form",
            Method::Floquet => "floquet",
        }
    }
}

/// Uniform grid `start + j dx`, `j = 0..nodes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub dx: f64,
    pub nodes: usize,
}

impl Grid {
    pub fn x(&self, j: usize) -> f64 {
        self.start + j as f64 * self.dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Eigenfunctions {
    /// Eigenfunction of the time-independent operator, max-normalized.
    Spatial(Vec<f64>),
    /// `(phi, psi)` at `times`; index 0 is the post-pulse instant `0+`,
    /// the last index is `tau` (the pre-pulse value at `0` by periodicity).
    Periodic { times: Vec<f64>, phi: Vec<Vec<f64>>, psi: Vec<Vec<f64>> },
    /// `phi = alpha(t) Psi(x)`, `psi = beta(t) Psi(x)`.
    Separated { times: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>, profile: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub lambda: f64,
    pub method: Method,
    pub residual: f64,
    pub grid: Option<Grid>,
    pub eigenfunctions: Option<Eigenfunctions>,
    /// Set when the kernels differ: the value is the Perron eigenvalue of the
    /// discretization, not a continuum principal eigenvalue.
    pub surrogate: bool,
}

impl EigenResult {
    /// `(phi(0, .), psi(0, .))` at the pre-pulse instant, when available.
    pub fn profiles_at_zero(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self.eigenfunctions.as_ref()? {
            Eigenfunctions::Periodic { phi, psi, .. } => Some((phi[phi.len() - 1].clone(), psi[psi.len() - 1].clone())),
            Eigenfunctions::Separated { alpha, beta, profile, .. } => {
                let a = alpha[alpha.len() - 1];
                let b = beta[beta.len() - 1];
                Some((profile.iter().map(|p| a * p).collect(), profile.iter().map(|p| b * p).collect()))
            }
            Eigenfunctions::Spatial(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenProblemSpec {
    start: f64,
    length: f64,
    pub coefficients: Coefficients,
    pub k1: KernelSpec,
    pub k2: KernelSpec,
    /// `H'(0)`.
    pub slope: f64,
    /// Number of grid cells; the grid has `n + 1` nodes.
    pub n: usize,
    /// Time samples per period for eigenfunctions (multiple of the coefficient slots).
    pub steps_per_period: usize,
}

impl EigenProblemSpec {
    pub fn new(
        interval: (f64, f64),
        coefficients: Coefficients,
        k1: KernelSpec,
        k2: KernelSpec,
        slope: f64,
        n: usize,
        steps_per_period: usize,
    ) -> Result<Self> {
        let mut errors = Vec::new();
        if !(interval.0 < interval.1) || !interval.0.is_finite() || !interval.1.is_finite() {
            errors.push(format!("interval [{}, {}] is empty", interval.0, interval.1));
        }
        if !(slope > 0.0 && slope <= 1.0) {
            errors.push(format!("pulse slope {slope} outside (0, 1]"));
        }
        if n < 8 {
            errors.push(format!("n = {n} is below 8"));
        }
        if steps_per_period == 0 || steps_per_period % coefficients.slot_lcm() != 0 {
            errors.push(format!(
                "steps_per_period = {steps_per_period} is not a positive multiple of {} coefficient slots",
                coefficients.slot_lcm()
            ));
        }
        if let Err(e) = coefficients.validate() {
            errors.push(e.to_string());
        }
        if !errors.is_empty() {
            return Err(Error::InvalidParams(errors.join("; ")));
        }
        Ok(Self {
            start: interval.0,
            length: interval.1 - interval.0,
            coefficients,
            k1,
            k2,
            slope,
            n,
            steps_per_period,
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.start, self.start + self.length)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn grid(&self) -> Grid {
        Grid { start: self.start, dx: self.length / self.n as f64, nodes: self.n + 1 }
    }

    pub fn with_slope(&self, slope: f64) -> Self {
        Self { slope, ..self.clone() }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    /// Same problem on `[start, start + length]`.
    pub fn with_interval(&self, start: f64, length: f64) -> Self {
        Self { start, length, ..self.clone() }
    }
}

/// The same problem shifted by `shift`; every eigen quantity is unchanged.
pub fn translate_interval(spec: &EigenProblemSpec, shift: f64) -> EigenProblemSpec {
    EigenProblemSpec { start: spec.start + shift, ..spec.clone() }
}

/// Collatz-Wielandt power iteration for a nonnegative operator.
/// Returns `(rho, vector, enclosure width relative to rho)`.
pub(crate) fn perron_power(
    n: usize,
    mut apply: impl FnMut(&[f64], &mut [f64]),
    start: Vec<f64>,
    what: &'static str,
) -> Result<(f64, Vec<f64>, f64)> {
    let mut v = start;
    normalize_max(&mut v);
    let mut w = vec![0.0; n];
    let mut width = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        apply(&v, &mut w);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (a, b) in w.iter().zip(&v) {
            let r = a / b;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::NoConvergence { what, iterations: 0, residual: f64::NAN });
        }
        let rho = 0.5 * (lo + hi);
        width = (hi - lo) / rho;
        std::mem::swap(&mut v, &mut w);
        normalize_max(&mut v);
        if width <= POWER_TOL {
            return Ok((rho, v, width));
        }
    }
    Err(Error::NoConvergence { what, iterations: POWER_MAX_ITER, residual: width })
}

fn normalize_max(v: &mut [f64]) {
    let m = v.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
}

/// Symmetric positive start vector on `nodes` points.
pub(crate) fn bump(nodes: usize) -> Vec<f64> {
    (0..nodes).map(|j| 0.5 + (std::f64::consts::PI * (j as f64 + 0.5) / nodes as f64).sin()).collect()
}

/// Principal eigenvalue of `u -> int_0^L J(x - y) u(y) dy - u` on `n` cells.
pub fn lambda0(k: &KernelSpec, length: f64, n: usize) -> Result<EigenResult> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidParams(format!("length {length} must be positive")));
    }
    if n < 1 {
        return Err(Error::InvalidParams("need at least one cell".into()));
    }
    let dx = length / n as f64;
    let nodes = n + 1;
    let stencil = ConvolutionStencil::new(k, dx);
    let mut scratch = Vec::new();
    let (theta, v, width) = perron_power(
        nodes,
        |u, out| stencil.apply(u, out, &mut scratch),
        bump(nodes),
        "lambda0 power iteration",
    )?;
    Ok(EigenResult {
        lambda: theta - 1.0,
        method: Method::Power,
        residual: width * theta,
        grid: Some(Grid { start: 0.0, dx, nodes }),
        eigenfunctions: Some(Eigenfunctions::Spatial(v)),
        surrogate: false,
    })
}

/// Roots `c1 > c2` of the characteristic equation of the constant 2x2 system
/// with dispersal replaced by `d_i lambda0`.
pub fn characteristic_roots(c: &Coefficients, lambda0: f64) -> Result<(f64, f64)> {
    let r = c.constant_rates()?;
    Ok(roots(c.d1, c.d2, &r, lambda0))
}

fn roots(d1: f64, d2: f64, r: &Rates, l0: f64) -> (f64, f64) {
    let mean = -r.a - r.m1 - r.m2 + (d1 + d2) * l0;
    let skew = r.a + r.m1 - r.m2 - d1 * l0 + d2 * l0;
    let disc = (skew * skew + 4.0 * r.a * r.b).sqrt();
    (0.5 * (mean + disc), 0.5 * (mean - disc))
}

/// Intersection of the two branches of the separated periodicity conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraicRoot {
    pub m: f64,
    /// `exp((lambda + c1) tau)`.
    pub big_lambda: f64,
    pub c1: f64,
    pub c2: f64,
    pub lambda0: f64,
    pub lambda: f64,
}

/// Solves the separated system for given `lambda0`; exposed for testing the
/// algebraic route independently of the spatial discretization.
pub fn algebraic_root(d1: f64, d2: f64, tau: f64, r: &Rates, lambda0: f64, slope: f64) -> Result<AlgebraicRoot> {
    let (c1, c2) = roots(d1, d2, r, lambda0);
    let a12 = r.a + r.m1 - d1 * lambda0 + c1;
    let e = ((c2 - c1) * tau).exp();
    let h = slope;
    let curve1 = |m: f64| (r.b - a12 * m) / (r.b - a12 * e * m);
    let curve2 = |m: f64| (r.a * m + a12) / (h * r.a * e * m + h * a12);
    let diff = |m: f64| curve1(m) - curve2(m);
    let done = |m: f64| {
        let big = curve1(m);
        AlgebraicRoot { m, big_lambda: big, c1, c2, lambda0, lambda: big.ln() / tau - c1 }
    };
    let d0 = diff(0.0);
    if d0.abs() <= 1e-15 {
        return Ok(done(0.0));
    }
    // left end of the admissible window: pole of the second branch
    let m_lo = -a12 / (r.a * e);
    let mut samples = Vec::new();
    let mut bracket = None;
    let mut prev = 0.0;
    // geometric approach away from 0, then geometric approach to the pole
    for j in 1..=200 {
        let m = if j <= 100 { m_lo * 0.5f64.powi(101 - j) } else { m_lo * (1.0 - 0.5f64.powi(j - 99)) };
        let dm = diff(m);
        samples.push((m, dm));
        if dm.is_finite() && dm > 0.0 {
            bracket = Some((m, prev));
            break;
        }
        prev = m;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Err(Error::NoRoot(format!("no sign change of the branch difference; samples {samples:?}")));
    };
    // diff(lo) > 0 >= diff(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if diff(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= BISECTION_TOL * lo.abs().max(1e-300) {
            break;
        }
    }
    Ok(done(0.5 * (lo + hi)))
}

/// Time factors `(alpha, beta)` of the separated eigenfunction on `[0+, tau]`.
pub fn separated_factors(d1: f64, r: &Rates, root: &AlgebraicRoot, t: f64) -> (f64, f64) {
    let a12 = r.a + r.m1 - d1 * root.lambda0 + root.c1;
    let mu1 = root.lambda + root.c1;
    let mu2 = root.lambda + root.c2;
    let cc = r.a * r.b + a12 * a12;
    let (e1, e2) = ((mu1 * t).exp(), (mu2 * t).exp());
    ((r.b * e1 - a12 * root.m * e2) / cc, (a12 * e1 + r.a * root.m * e2) / cc)
}

/// `lambda*` from the separated algebraic system.
pub fn closed_form_lambda(spec: &EigenProblemSpec) -> Result<EigenResult> {
    let c = &spec.coefficients;
    let r = c.constant_rates()?;
    if spec.k1 != spec.k2 {
        return Err(Error::RouteUnavailable("kernels differ; the separated form needs k1 = k2".into()));
    }
    let l0 = lambda0(&spec.k1, spec.length, spec.n)?;
    let root = algebraic_root(c.d1, c.d2, c.tau, &r, l0.lambda, spec.slope)?;
    let steps = spec.steps_per_period;
    let times: Vec<f64> = (0..=steps).map(|k| c.tau * k as f64 / steps as f64).collect();
    let (alpha, beta): (Vec<f64>, Vec<f64>) = times.iter().map(|t| separated_factors(c.d1, &r, &root, *t)).unzip();
    if alpha.iter().chain(&beta).any(|v| !(*v > 0.0)) {
        return Err(Error::HypothesisViolated("separated time factors are not positive".into()));
    }
    // periodicity defect of the reconstructed factors, plus the lambda0 enclosure
    let (alpha0, beta0) = (alpha[0], beta[0]);
    let (alpha_tau, beta_tau) = (alpha[steps], beta[steps]);
    let residual = (alpha_tau - alpha0).abs().max((spec.slope * beta_tau - beta0).abs()) + l0.residual;
    let Some(Eigenfunctions::Spatial(profile)) = l0.eigenfunctions else { unreachable!() };
    Ok(EigenResult {
        lambda: root.lambda,
        method: Method::ClosedForm,
        residual,
        grid: Some(spec.grid()),
        eigenfunctions: Some(Eigenfunctions::Separated { times, alpha, beta, profile }),
        surrogate: false,
    })
}

/// Generator of the linear system on the grid for frozen rates.
fn generator(spec: &EigenProblemSpec, r: &Rates) -> DMatrix<f64> {
    let grid = spec.grid();
    let nodes = grid.nodes;
    let c = &spec.coefficients;
    let mut a = DMatrix::<f64>::zeros(2 * nodes, 2 * nodes);
    for (block, k, d) in [(0, &spec.k1, c.d1), (1, &spec.k2, c.d2)] {
        let off = block * nodes;
        for i in 0..nodes {
            for j in 0..nodes {
                let kij = k.evaluate((i as f64 - j as f64) * grid.dx) * trapezoid_weight(j, nodes, grid.dx);
                a[(off + i, off + j)] = d * kij;
            }
        }
    }
    for i in 0..nodes {
        a[(i, i)] -= c.d1 + r.a + r.m1;
        a[(nodes + i, nodes + i)] -= c.d2 + r.m2;
        a[(i, nodes + i)] = r.b;
        a[(nodes + i, i)] = r.a;
    }
    a
}

fn matrix_power(m: &DMatrix<f64>, mut k: usize) -> DMatrix<f64> {
    let mut result = DMatrix::<f64>::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// One-step propagators `exp(A dt)` for each step of the period, shared
/// between steps with equal rates.
fn step_propagators(spec: &EigenProblemSpec) -> Vec<(usize, DMatrix<f64>)> {
    let c = &spec.coefficients;
    let steps = spec.steps_per_period;
    let dt = c.tau / steps as f64;
    let mut runs: Vec<(usize, DMatrix<f64>)> = Vec::new();
    let mut k = 0;
    while k < steps {
        let r = c.rates_at_step(k, steps);
        let mut len = 1;
        while k + len < steps && c.rates_at_step(k + len, steps) == r {
            len += 1;
        }
        runs.push((len, (generator(spec, &r) * dt).exp()));
        k += len;
    }
    runs
}

/// Discrete monodromy `M = E_{N-1} ... E_0 P`.
fn monodromy(spec: &EigenProblemSpec, runs: &[(usize, DMatrix<f64>)]) -> DMatrix<f64> {
    let size = 2 * spec.grid().nodes;
    let mut m = DMatrix::<f64>::identity(size, size);
    for (len, e) in runs {
        m = matrix_power(e, *len) * m;
    }
    let nodes = spec.grid().nodes;
    for j in nodes..size {
        m.column_mut(j).scale_mut(spec.slope);
    }
    m
}

struct Perron {
    rho: f64,
    vector: Vec<f64>,
    width: f64,
    matrix: DMatrix<f64>,
}

fn monodromy_perron(spec: &EigenProblemSpec, runs: &[(usize, DMatrix<f64>)]) -> Result<Perron> {
    let m = monodromy(spec, runs);
    let nodes = spec.grid().nodes;
    let mut start = bump(nodes);
    start.extend(bump(nodes));
    let (rho, vector, width) = perron_power(
        2 * nodes,
        |u, out| {
            let uv = DVector::from_column_slice(u);
            out.copy_from_slice((&m * uv).as_slice());
        },
        start,
        "monodromy power iteration",
    )?;
    Ok(Perron { rho, vector, width, matrix: m })
}

/// `lambda*` from the spectral radius of the discrete period map.
pub fn floquet_lambda(spec: &EigenProblemSpec) -> Result<EigenResult> {
    let runs = step_propagators(spec);
    let p = monodromy_perron(spec, &runs)?;
    let tau = spec.coefficients.tau;
    let lambda = -p.rho.ln() / tau;
    let nodes = spec.grid().nodes;
    let steps = spec.steps_per_period;
    let dt = tau / steps as f64;
    let growth = (lambda * dt).exp();
    let mut state = DVector::from_column_slice(&p.vector);
    for j in nodes..2 * nodes {
        state[j] *= spec.slope;
    }
    let mut times = vec![0.0];
    let mut phi = vec![state.rows(0, nodes).iter().copied().collect::<Vec<_>>()];
    let mut psi = vec![state.rows(nodes, nodes).iter().copied().collect::<Vec<_>>()];
    let mut k = 0;
    for (len, e) in &runs {
        for _ in 0..*len {
            state = e * state * growth;
            k += 1;
            times.push(k as f64 * dt);
            phi.push(state.rows(0, nodes).iter().copied().collect());
            psi.push(state.rows(nodes, nodes).iter().copied().collect());
        }
    }
    let scale = phi.iter().chain(&psi).flatten().copied().fold(0.0, f64::max);
    for row in phi.iter_mut().chain(psi.iter_mut()) {
        row.iter_mut().for_each(|v| *v /= scale);
    }
    if phi.iter().chain(&psi).flatten().any(|v| !(*v > 0.0)) {
        return Err(Error::HypothesisViolated("periodic eigenfunction is not positive".into()));
    }
    Ok(EigenResult {
        lambda,
        method: Method::Floquet,
        residual: p.width / tau,
        grid: Some(spec.grid()),
        eigenfunctions: Some(Eigenfunctions::Periodic { times, phi, psi }),
        surrogate: spec.k1 != spec.k2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub lambda: f64,
    /// `min_i (Mv)_i / v_i` (upper) or `max_i` (lower) for the candidate.
    pub ratio: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedBracket {
    pub lower: f64,
    pub upper: f64,
    pub witnesses: Vec<Witness>,
    pub tolerance: f64,
}

/// Enclosure of the principal eigenvalue by test pairs built from the
/// discrete Perron vector `v`: the upper estimate is the least `lambda` with
/// `v <= e^{lambda tau} M v`, the lower estimate the largest `lambda` with
/// `v >= e^{lambda tau} M v`.
pub fn generalized_bracket(spec: &EigenProblemSpec) -> Result<GeneralizedBracket> {
    let c = &spec.coefficients;
    let r = c.constant_rates()?;
    let runs = step_propagators(spec);
    let p = monodromy_perron(spec, &runs)?;
    let v = DVector::from_column_slice(&p.vector);
    let mv = &p.matrix * &v;
    let tau = c.tau;
    let span = c.d1 + c.d2 + r.a + r.b + r.m1 + r.m2 - spec.slope.ln() / tau;
    let is_super = |lam: f64| mv.iter().zip(v.iter()).all(|(m, x)| (lam * tau).exp() * m >= *x);
    let is_sub = |lam: f64| mv.iter().zip(v.iter()).all(|(m, x)| (lam * tau).exp() * m <= *x);
    let tol = 1e-12;
    let upper = bisect_threshold(-span, span, tol, |l| is_super(l))
        .ok_or_else(|| Error::NoRoot(format!("upper estimate not bracketed in [{}, {span}]", -span)))?;
    let lower = bisect_threshold(-span, span, tol, |l| !is_sub(l))
        .ok_or_else(|| Error::NoRoot(format!("lower estimate not bracketed in [{}, {span}]", -span)))?;
    // lower is the largest lambda for which is_sub holds: just below the flip
    let lower = lower - tol;
    let ratios = mv.iter().zip(v.iter()).map(|(m, x)| m / x);
    let (min_r, max_r) = ratios.fold((f64::INFINITY, 0.0f64), |(lo, hi), q| (lo.min(q), hi.max(q)));
    Ok(GeneralizedBracket {
        lower: lower.min(upper),
        upper,
        witnesses: vec![
            Witness {
                lambda: upper,
                ratio: min_r,
                description: format!("super pair: discrete Perron vector on {} nodes", spec.grid().nodes),
            },
            Witness {
                lambda: lower,
                ratio: max_r,
                description: format!("sub pair: discrete Perron vector on {} nodes", spec.grid().nodes),
            },
        ],
        tolerance: tol,
    })
}

/// Smallest point of `[lo, hi]` where the monotone predicate turns true.
fn bisect_threshold(mut lo: f64, mut hi: f64, tol: f64, pred: impl Fn(f64) -> bool) -> Option<f64> {
    if pred(lo) || !pred(hi) {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// `d lambda* / d H'(0)` for constant coefficients and identical kernels,
/// from the forward time factors and the adjoint pair.
pub fn lambda_sensitivity(spec: &EigenProblemSpec) -> Result<f64> {
    let c = &spec.coefficients;
    let r = c.constant_rates()?;
    if spec.k1 != spec.k2 {
        return Err(Error::RouteUnavailable("kernels differ; the separated form needs k1 = k2".into()));
    }
    let l0 = lambda0(&spec.k1, spec.length, spec.n)?.lambda;
    let root = algebraic_root(c.d1, c.d2, c.tau, &r, l0, spec.slope)?;
    Ok(sensitivity_from_root(c.d1, c.d2, c.tau, &r, &root, spec.slope))
}

pub(crate) fn sensitivity_from_root(d1: f64, d2: f64, tau: f64, r: &Rates, root: &AlgebraicRoot, slope: f64) -> f64 {
    let lam = root.lambda;
    // forward matrix B = B0 + lambda I
    let b = Matrix2::new(-(r.a + r.m1) + d1 * root.lambda0 + lam, r.b, r.a, -r.m2 + d2 * root.lambda0 + lam);
    let bt = b.transpose();
    const FINE: usize = 4096;
    let h = tau / FINE as f64;
    let adjoint_rhs = |_: f64, y: [f64; 2]| {
        let v = -(bt * nalgebra::Vector2::new(y[0], y[1]));
        [v[0], v[1]]
    };
    // y*(t) = Phi(t) y*(0+); Phi(tau) from two unit solutions
    let propagate = |y0: [f64; 2]| {
        let mut y = y0;
        let mut out = Vec::with_capacity(FINE + 1);
        out.push(y);
        for k in 0..FINE {
            y = rk4_step(adjoint_rhs, k as f64 * h, y, h);
            out.push(y);
        }
        out
    };
    let col0 = propagate([1.0, 0.0]);
    let col1 = propagate([0.0, 1.0]);
    // periodicity with pulse: y*(tau) = P y*(0+)  <=>  (Phi(tau) - P) z = 0
    let phi_tau = Matrix2::new(col0[FINE][0], col1[FINE][0], col0[FINE][1], col1[FINE][1]);
    let pulse = Matrix2::new(1.0, 0.0, 0.0, slope);
    let sys = phi_tau - pulse;
    // null vector of a (numerically) singular 2x2 matrix: pick the better-conditioned row
    let (r0, r1) = (sys.row(0), sys.row(1));
    let row = if r0.norm() >= r1.norm() { r0 } else { r1 };
    let mut z = [row[1], -row[0]];
    if z[0] < 0.0 {
        z = [-z[0], -z[1]];
    }
    let adj: Vec<[f64; 2]> = (0..=FINE)
        .map(|k| [z[0] * col0[k][0] + z[1] * col1[k][0], z[0] * col0[k][1] + z[1] * col1[k][1]])
        .collect();
    let pairing: Vec<f64> = (0..=FINE)
        .map(|k| {
            let (al, be) = separated_factors(d1, r, root, k as f64 * h);
            al * adj[k][0] + be * adj[k][1]
        })
        .collect();
    let denom = simpson(&pairing, h);
    let (_, beta_pre) = separated_factors(d1, r, root, tau);
    let beta_star_pre = adj[FINE][1];
    -(beta_pre * beta_star_pre) / (slope * denom)
}

/// `lambda*` of the spatially homogeneous problem (dispersal terms vanish),
/// for possibly time-dependent coefficients.
pub fn homogeneous_lambda(c: &Coefficients, slope: f64) -> Result<f64> {
    c.validate()?;
    if !(slope > 0.0) {
        return Err(Error::InvalidParams(format!("pulse slope {slope} must be positive")));
    }
    let slots = c.slot_lcm();
    let dt = c.tau / slots as f64;
    let mut m = Matrix2::new(1.0, 0.0, 0.0, slope);
    for s in 0..slots {
        let r = c.rates_at_step(s, slots);
        let b0 = Matrix2::new(-(r.a + r.m1), r.b, r.a, -r.m2);
        m = (b0 * dt).exp() * m;
    }
    let rho = spectral_radius2(&m);
    Ok(-rho.ln() / c.tau)
}

pub(crate) fn spectral_radius2(m: &Matrix2<f64>) -> f64 {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    0.5 * (tr.abs() + disc)
}

/// Two grid levels combined for a second-order error: `(4 fine - coarse) / 3`.
pub fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}
