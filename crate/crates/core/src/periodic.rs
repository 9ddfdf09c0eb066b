//! Periodic states: monotone iteration for the pulsed problem on a fixed
//! interval, and the spatially homogeneous pulsed ODE systems.
//!
//! Profiles over one period are stored at the step instants `t_k = k tau / N`;
//! index 0 is the post-pulse instant `0+` and index `N` is `tau`, whose value
//! is the pre-pulse value at `0` by periodicity.

use crate::eigen::{bump, homogeneous_lambda, perron_power, Grid};
use crate::error::{Error, Result};
use crate::kernel::ConvolutionStencil;
use crate::model::{Coefficients, HarvestRule, ModelParams};
use crate::ode::rk4_step;
use crate::simulator::{aligned_index, euler_update, Buffers, FrontState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodicKind {
    SpatialPeriodic,
    OdeLinear,
    OdeLogistic,
}

impl PeriodicKind {
    pub fn name(&self) -> &'static str {
        match self {
            PeriodicKind::SpatialPeriodic => "spatial",
            PeriodicKind::OdeLinear => "ode-linear",
            PeriodicKind::OdeLogistic => "ode-logistic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSolution {
    pub kind: PeriodicKind,
    pub times: Vec<f64>,
    /// Spatial grid (absent for the ODE kinds, whose profiles have one entry).
    pub grid: Option<Grid>,
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
    /// Sup distance between the stored orbit and one period of the defining
    /// scheme started from its pulsed end value.
    pub residual: f64,
    pub iterations: usize,
}

impl PeriodicSolution {
    /// Sup norm of both components over the period.
    pub fn sup(&self) -> f64 {
        self.u1.iter().chain(&self.u2).flatten().copied().fold(0.0, f64::max)
    }

    /// Pre-pulse profiles at `t = 0` (equal to the values at `tau`).
    pub fn at_zero(&self) -> (&[f64], &[f64]) {
        let n = self.times.len() - 1;
        (&self.u1[n], &self.u2[n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    FromUpper,
    FromLower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneOptions {
    pub dx: f64,
    pub steps_per_period: usize,
    /// Target distance to the limit.
    pub tol: f64,
    pub max_iter: usize,
}

impl MonotoneOptions {
    /// Steps per period satisfying the explicit stability constraint.
    pub fn auto(params: &ModelParams, dx: f64) -> Self {
        let c = &params.coefficients;
        let rate = c.rate_bound(params.a_priori_bound());
        let slots = c.slot_lcm();
        let n = ((c.tau * rate).ceil().max(1.0) as usize).div_ceil(slots) * slots;
        Self { dx, steps_per_period: n, tol: 1e-8, max_iter: 200_000 }
    }
}

type Profiles = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// The shifted iteration `U^(m-1) -> U^(m)` on a fixed interval.
pub struct MonotoneIteration<'a> {
    params: &'a ModelParams,
    template: FrontState,
    dt: f64,
    steps: usize,
    k1: f64,
    k2: f64,
    st1: ConvolutionStencil,
    st2: ConvolutionStencil,
    current: Profiles,
    count: usize,
    direction: Direction,
    a_bound: f64,
}

impl<'a> MonotoneIteration<'a> {
    pub fn new(interval: (f64, f64), params: &'a ModelParams, direction: Direction, opts: &MonotoneOptions) -> Result<Self> {
        params.validate()?;
        let c = &params.coefficients;
        let a_bound = params.a_priori_bound();
        let steps = opts.steps_per_period;
        if steps == 0 || steps % c.slot_lcm() != 0 {
            return Err(Error::InvalidParams(format!("steps_per_period = {steps} must be a multiple of the slots")));
        }
        let dt = c.tau / steps as f64;
        let k1 = c.a.sup() + c.m1.sup() + 2.0 * c.alpha1.sup() * a_bound;
        let k2 = c.m2.sup() + 2.0 * c.alpha2.sup() * a_bound;
        let q = dt * (c.d1 + k1).max(c.d2 + k2);
        if q > 1.0 {
            return Err(Error::Stability(q));
        }
        let first = aligned_index(interval.0, opts.dx)?;
        let last = aligned_index(interval.1, opts.dx)?;
        if last <= first {
            return Err(Error::InvalidParams(format!("empty interval [{}, {}]", interval.0, interval.1)));
        }
        let nodes = (last - first + 1) as usize;
        let template = FrontState {
            t: 0.0,
            g: interval.0,
            h: interval.1,
            dx: opts.dx,
            first,
            u1: vec![0.0; nodes],
            u2: vec![0.0; nodes],
            pinned: false,
        };
        let mut it = Self {
            params,
            template,
            dt,
            steps,
            k1,
            k2,
            st1: ConvolutionStencil::sub_unit(&params.k1, opts.dx),
            st2: ConvolutionStencil::sub_unit(&params.k2, opts.dx),
            current: (Vec::new(), Vec::new()),
            count: 0,
            direction,
            a_bound,
        };
        it.current = match direction {
            Direction::FromUpper => {
                let row = vec![a_bound; nodes];
                (vec![row.clone(); steps + 1], vec![row; steps + 1])
            }
            Direction::FromLower => it.lower_seed()?,
        };
        Ok(it)
    }

    pub fn grid(&self) -> Grid {
        Grid { start: self.template.x(0), dx: self.template.dx, nodes: self.template.len() }
    }

    pub fn current(&self) -> &Profiles {
        &self.current
    }

    pub fn iterations(&self) -> usize {
        self.count
    }

    /// Perron pair of the linearized discrete period map.
    fn linear_perron(&self) -> Result<(f64, Vec<f64>)> {
        let c = &self.params.coefficients;
        let nodes = self.template.len();
        let slope = self.params.harvest.slope0();
        let mut bufs = Buffers::default();
        let mut start = bump(nodes);
        start.extend(bump(nodes));
        let (rho, v, _) = perron_power(
            2 * nodes,
            |u, out| {
                let mut s = self.template.clone();
                s.u1.copy_from_slice(&u[..nodes]);
                s.u2.iter_mut().zip(&u[nodes..]).for_each(|(a, b)| *a = slope * b);
                for k in 0..self.steps {
                    let mut r = c.rates_at_step(k, self.steps);
                    r.alpha1 = 0.0;
                    r.alpha2 = 0.0;
                    euler_update(&mut s, r, c.d1, c.d2, self.dt, &self.st1, &self.st2, &mut bufs);
                }
                out[..nodes].copy_from_slice(&s.u1);
                out[nodes..].copy_from_slice(&s.u2);
            },
            start,
            "linearized period map power iteration",
        )?;
        Ok((rho, v))
    }

    /// `eps e^{(lambda + upsilon)(tau - t)} (phi, psi)(t)` with the largest
    /// `eps = 2^-j 1e-3 A` for which one iteration does not decrease it.
    fn lower_seed(&self) -> Result<Profiles> {
        let c = &self.params.coefficients;
        let tau = c.tau;
        let nodes = self.template.len();
        let slope = self.params.harvest.slope0();
        let (rho, v) = self.linear_perron()?;
        let lambda = -rho.ln() / tau;
        if lambda >= 0.0 {
            return Err(Error::Precondition(format!("no positive lower seed: discrete principal eigenvalue {lambda} >= 0")));
        }
        let upsilon = 0.5 * lambda.abs();
        // phi_k = rho^{-k/N} E^k P v
        let mut s = self.template.clone();
        s.u1.copy_from_slice(&v[..nodes]);
        s.u2.iter_mut().zip(&v[nodes..]).for_each(|(a, b)| *a = slope * b);
        let mut phi = vec![s.u1.clone()];
        let mut psi = vec![s.u2.clone()];
        let mut bufs = Buffers::default();
        let per_step = rho.powf(-1.0 / self.steps as f64);
        for k in 0..self.steps {
            let mut r = c.rates_at_step(k, self.steps);
            r.alpha1 = 0.0;
            r.alpha2 = 0.0;
            euler_update(&mut s, r, c.d1, c.d2, self.dt, &self.st1, &self.st2, &mut bufs);
            s.u1.iter_mut().chain(s.u2.iter_mut()).for_each(|x| *x *= per_step);
            phi.push(s.u1.clone());
            psi.push(s.u2.clone());
        }
        let mut eps = 1e-3 * self.a_bound;
        for _ in 0..=20 {
            let seed: Profiles = (0..=self.steps)
                .map(|k| {
                    let w = eps * ((lambda + upsilon) * (tau - k as f64 * self.dt)).exp();
                    (phi[k].iter().map(|x| w * x).collect::<Vec<_>>(), psi[k].iter().map(|x| w * x).collect::<Vec<_>>())
                })
                .unzip();
            let next = self.iterate_from(&seed)?;
            let ok = next.0.iter().flatten().zip(seed.0.iter().flatten()).all(|(a, b)| a >= b)
                && next.1.iter().flatten().zip(seed.1.iter().flatten()).all(|(a, b)| a >= b);
            if ok {
                return Ok(seed);
            }
            eps *= 0.5;
        }
        Err(Error::Precondition("no verifiable lower seed after 20 halvings".into()))
    }

    fn iterate_from(&self, prev: &Profiles) -> Result<Profiles> {
        let c = &self.params.coefficients;
        let rule = &self.params.harvest;
        let n = self.steps;
        let mut s = self.template.clone();
        s.u1.copy_from_slice(&prev.0[n]);
        for (dst, src) in s.u2.iter_mut().zip(&prev.1[n]) {
            *dst = rule.apply(*src)?;
        }
        let mut u1 = Vec::with_capacity(n + 1);
        let mut u2 = Vec::with_capacity(n + 1);
        u1.push(s.u1.clone());
        u2.push(s.u2.clone());
        let nodes = s.len();
        let mut conv1 = vec![0.0; nodes];
        let mut conv2 = vec![0.0; nodes];
        let mut scratch = Vec::new();
        let dt = self.dt;
        for k in 0..n {
            let r = c.rates_at_step(k, n);
            self.st1.apply(&s.u1, &mut conv1, &mut scratch);
            self.st2.apply(&s.u2, &mut conv2, &mut scratch);
            let (p1, p2) = (&prev.0[k], &prev.1[k]);
            for i in 0..nodes {
                let (up, vp) = (p1[i], p2[i]);
                let g1 = r.b * vp + (self.k1 - r.a - r.m1 - r.alpha1 * up) * up;
                let g2 = r.a * up + (self.k2 - r.m2 - r.alpha2 * vp) * vp;
                s.u1[i] = s.u1[i] * (1.0 - dt * (c.d1 + self.k1)) + dt * (c.d1 * conv1[i] + g1);
                s.u2[i] = s.u2[i] * (1.0 - dt * (c.d2 + self.k2)) + dt * (c.d2 * conv2[i] + g2);
            }
            u1.push(s.u1.clone());
            u2.push(s.u2.clone());
        }
        Ok((u1, u2))
    }

    /// Advances one iterate; returns the sup distance to the previous one.
    pub fn step(&mut self) -> Result<f64> {
        let next = self.iterate_from(&self.current)?;
        let slack = 1e-12 * self.a_bound;
        let mut diff = 0.0f64;
        let mut excess = 0.0f64;
        for (new, old) in next.0.iter().flatten().zip(self.current.0.iter().flatten()).chain(
            next.1.iter().flatten().zip(self.current.1.iter().flatten()),
        ) {
            diff = diff.max((new - old).abs());
            let wrong_way = match self.direction {
                Direction::FromUpper => new - old,
                Direction::FromLower => old - new,
            };
            excess = excess.max(wrong_way);
        }
        self.count += 1;
        if excess > slack {
            return Err(Error::NotMonotone { iterate: self.count, excess });
        }
        self.current = next;
        Ok(diff)
    }

    /// One period of the explicit scheme from the pulsed end value, compared
    /// with the stored profiles.
    fn defect(&self) -> Result<f64> {
        let c = &self.params.coefficients;
        let n = self.steps;
        let mut s = self.template.clone();
        s.u1.copy_from_slice(&self.current.0[n]);
        for (dst, src) in s.u2.iter_mut().zip(&self.current.1[n]) {
            *dst = self.params.harvest.apply(*src)?;
        }
        let mut bufs = Buffers::default();
        let mut worst = 0.0f64;
        for k in 0..=n {
            if k > 0 {
                euler_update(&mut s, c.rates_at_step(k - 1, n), c.d1, c.d2, self.dt, &self.st1, &self.st2, &mut bufs);
            }
            for (a, b) in s.u1.iter().zip(&self.current.0[k]).chain(s.u2.iter().zip(&self.current.1[k])) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }
}

/// Maximal (`FromUpper`) or minimal (`FromLower`) periodic solution on `interval`.
///
/// Iteration stops once the successive difference is below `tol` and the
/// geometric tail estimate `diff q / (1 - q)` (with `q` the observed
/// contraction ratio) is below `tol / 2`.
pub fn monotone_iteration(
    interval: (f64, f64),
    params: &ModelParams,
    direction: Direction,
    opts: &MonotoneOptions,
) -> Result<PeriodicSolution> {
    let mut it = MonotoneIteration::new(interval, params, direction, opts)?;
    let mut prev_diff = f64::INFINITY;
    loop {
        let diff = it.step()?;
        let q = if prev_diff.is_finite() && prev_diff > 0.0 { (diff / prev_diff).min(0.999_999) } else { 0.999_999 };
        let tail = if diff == 0.0 { 0.0 } else { diff * q / (1.0 - q) };
        if diff < opts.tol && tail < 0.5 * opts.tol {
            break;
        }
        if it.iterations() >= opts.max_iter {
            return Err(Error::NoConvergence { what: "monotone iteration", iterations: it.iterations(), residual: diff });
        }
        prev_diff = diff;
    }
    let residual = it.defect()?;
    let times = (0..=it.steps).map(|k| k as f64 * it.dt).collect();
    let grid = Some(it.grid());
    let iterations = it.iterations();
    let (u1, u2) = it.current;
    Ok(PeriodicSolution { kind: PeriodicKind::SpatialPeriodic, times, grid, u1, u2, residual, iterations })
}

/// RK4 steps per period used by the ODE solvers (rounded up to the slots).
pub const ODE_STEPS: usize = 2000;
pub const ODE_MAX_PERIODS: usize = 1_000_000;

fn ode_orbit<'a>(
    c: &'a Coefficients,
    rule: &HarvestRule,
    logistic: bool,
) -> impl FnMut([f64; 2]) -> Result<(Vec<[f64; 2]>, usize)> + 'a {
    let slots = c.slot_lcm();
    let steps = ODE_STEPS.div_ceil(slots) * slots;
    let h = c.tau / steps as f64;
    let rule = *rule;
    move |y0: [f64; 2]| {
        let mut y = [y0[0], rule.apply(y0[1])?];
        let mut orbit = Vec::with_capacity(steps + 1);
        orbit.push(y);
        for k in 0..steps {
            let r = c.rates_at_step(k, steps);
            let f = |_: f64, v: [f64; 2]| {
                let (q1, q2) = if logistic { (r.alpha1 * v[0], r.alpha2 * v[1]) } else { (0.0, 0.0) };
                [r.b * v[1] - (r.a + r.m1 + q1) * v[0], r.a * v[0] - (r.m2 + q2) * v[1]]
            };
            y = rk4_step(f, k as f64 * h, y, h);
            orbit.push(y);
        }
        Ok((orbit, steps))
    }
}

fn ode_solution(kind: PeriodicKind, c: &Coefficients, orbit: Vec<[f64; 2]>, residual: f64, iterations: usize) -> PeriodicSolution {
    let steps = orbit.len() - 1;
    let times = (0..=steps).map(|k| c.tau * k as f64 / steps as f64).collect();
    let (u1, u2) = orbit.iter().map(|y| (vec![y[0]], vec![y[1]])).unzip();
    PeriodicSolution { kind, times, grid: None, u1, u2, residual, iterations }
}

fn run_to_period(
    kind: PeriodicKind,
    c: &Coefficients,
    rule: &HarvestRule,
    start: [f64; 2],
    logistic: bool,
    tol: f64,
) -> Result<PeriodicSolution> {
    let mut period = ode_orbit(c, rule, logistic);
    let mut y = start;
    let norm = |v: [f64; 2]| v[0].abs().max(v[1].abs());
    let mut reference = norm(start);
    for n in 1..=ODE_MAX_PERIODS {
        let (orbit, steps) = period(y)?;
        let next = orbit[steps];
        let change = (next[0] - y[0]).abs().max((next[1] - y[1]).abs());
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::HypothesisViolated("orbit left the finite range".into()));
        }
        y = next;
        if change < tol {
            // residual: one more period from the returned end value
            let (check, _) = period(y)?;
            let residual = check
                .iter()
                .zip(&orbit)
                .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
                .fold(0.0, f64::max);
            return Ok(ode_solution(kind, c, orbit, residual, n));
        }
        if n % 10 == 0 {
            if norm(y) >= 2.0 * reference {
                return Err(Error::HypothesisViolated(format!("orbit norm doubled within 10 periods (now {})", norm(y))));
            }
            reference = norm(y);
        }
    }
    Err(Error::NoConvergence { what: "ode periodic orbit", iterations: ODE_MAX_PERIODS, residual: f64::NAN })
}

/// Periodic orbit of the linear pulsed system started from the super level `A*`.
pub fn ode_periodic_linear(c: &Coefficients, rule: &HarvestRule) -> Result<PeriodicSolution> {
    let lambda = homogeneous_lambda(c, rule.slope0())?;
    if lambda >= 0.0 {
        return Err(Error::Precondition(format!("homogeneous principal eigenvalue {lambda} is not negative")));
    }
    let a_star = (c.b.sup() / (c.a.inf() + c.m1.inf())).max(c.a.sup() / c.m2.inf());
    run_to_period(PeriodicKind::OdeLinear, c, rule, [a_star, a_star], false, 1e-10)
}

/// Positive periodic orbit of the logistic pulsed system started from `(A, A)`.
pub fn ode_periodic_logistic(c: &Coefficients, rule: &HarvestRule) -> Result<PeriodicSolution> {
    let lambda = homogeneous_lambda(c, rule.slope0())?;
    if lambda >= 0.0 {
        return Err(Error::Precondition(format!("homogeneous principal eigenvalue {lambda} is not negative")));
    }
    let a = (c.b.sup() / c.alpha1.inf()).max(c.a.sup() / c.alpha2.inf());
    let sol = run_to_period(PeriodicKind::OdeLogistic, c, rule, [a, a], true, 1e-12)?;
    if sol.sup() < 1e-8 {
        return Err(Error::HypothesisViolated("logistic attractor is zero".into()));
    }
    Ok(sol)
}

/// Positive root of `bV - (a + m1)U - alpha1 U^2 = 0`, `aU - m2 V - alpha2 V^2 = 0`
/// for constant rates, by bisection on `U`.
pub fn autonomous_equilibrium(c: &Coefficients) -> Result<(f64, f64)> {
    let r = c.constant_rates()?;
    // V(U) from the second equation, then residual of the first
    let v_of = |u: f64| {
        let disc = r.m2 * r.m2 + 4.0 * r.alpha2 * r.a * u;
        (-r.m2 + disc.sqrt()) / (2.0 * r.alpha2)
    };
    let f = |u: f64| r.b * v_of(u) - (r.a + r.m1) * u - r.alpha1 * u * u;
    let mut hi = r.b / r.alpha1 + r.a / r.alpha2 + 1.0;
    let mut lo = 1e-12 * hi;
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::NoRoot("no positive equilibrium".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    Ok((u, v_of(u)))
}
