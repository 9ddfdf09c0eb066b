//! Explicit time stepping of the pulsed nonlocal system, with moving fronts
//! (free mode) or on a fixed interval.
//!
//! Grid nodes sit at global integer multiples of `dx`, so translating a
//! problem by a multiple of `dx` reproduces the same arithmetic. In free mode
//! the outermost nodes are held at zero and a new zero node is appended each
//! time a continuous boundary passes the next node.

use crate::classify::{self, Outcome, Tolerances};
use crate::error::{Error, Result};
use crate::kernel::{trapezoid_weight, ConvolutionStencil, KernelSpec, KernelFamily, Side};
use crate::model::{Coefficients, FrontierParams, HarvestRule, InitialData, ModelParams, Rates};

/// Slack allowed above the a-priori bound when auditing.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FrontState {
    pub t: f64,
    pub g: f64,
    pub h: f64,
    pub dx: f64,
    /// Global index of the first node: `x_i = (first + i) dx`.
    pub first: i64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// End nodes lying on `g` or `h` are held at zero; once a boundary moves
    /// past its end node, that node evolves like any interior node.
    pub pinned: bool,
}

impl FrontState {
    /// State on the nodes of `[g, h]`; both ends must be grid aligned.
    pub fn from_initial(init: &InitialData, g: f64, h: f64, dx: f64, pinned: bool) -> Result<Self> {
        let first = aligned_index(g, dx)?;
        let last = aligned_index(h, dx)?;
        if last <= first {
            return Err(Error::InvalidParams(format!("empty interval [{g}, {h}]")));
        }
        let (u1, u2) = (first..=last).map(|i| init.value(i as f64 * dx)).unzip();
        let (g, h) = (first as f64 * dx, last as f64 * dx);
        let mut s = Self { t: 0.0, g, h, dx, first, u1, u2, pinned };
        s.pin();
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.u1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u1.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        (self.first + i as i64) as f64 * self.dx
    }

    pub fn last_index(&self) -> i64 {
        self.first + self.len() as i64 - 1
    }

    /// Trapezoid integrals of `(u1, u2)` over the grid.
    pub fn masses(&self) -> (f64, f64) {
        let n = self.len();
        let m = |u: &[f64]| u.iter().enumerate().map(|(i, v)| trapezoid_weight(i, n, self.dx) * v).sum();
        (m(&self.u1), m(&self.u2))
    }

    pub fn maxima(&self) -> (f64, f64) {
        let m = |u: &[f64]| u.iter().copied().fold(0.0, f64::max);
        (m(&self.u1), m(&self.u2))
    }

    /// `min(u1, u2)` over nodes in `[lo, hi]`; zero when no node falls inside.
    pub fn min_on(&self, lo: f64, hi: f64) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            let x = self.x(i);
            if x >= lo && x <= hi {
                best = best.min(self.u1[i]).min(self.u2[i]);
            }
        }
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }

    /// Index range of the nodes that evolve (the others are pinned at zero).
    fn free_range(&self) -> (usize, usize) {
        let n = self.len();
        if !self.pinned || n == 0 {
            return (0, n);
        }
        let lo = usize::from(self.x(0) <= self.g);
        let hi = if self.x(n - 1) >= self.h { n - 1 } else { n };
        (lo, hi.max(lo))
    }

    fn pin(&mut self) {
        let (lo, hi) = self.free_range();
        for i in (0..lo).chain(hi..self.len()) {
            self.u1[i] = 0.0;
            self.u2[i] = 0.0;
        }
    }

    /// Appends zero nodes until the grid covers every node inside `[g, h]`.
    fn extend_to_boundaries(&mut self) {
        while ((self.last_index() + 1) as f64) * self.dx <= self.h {
            self.u1.push(0.0);
            self.u2.push(0.0);
        }
        let mut front = 0;
        while ((self.first - 1 - front) as f64) * self.dx >= self.g {
            front += 1;
        }
        if front > 0 {
            let pad = vec![0.0; front as usize];
            self.u1.splice(0..0, pad.iter().copied());
            self.u2.splice(0..0, pad);
            self.first -= front;
        }
    }
}

pub(crate) fn aligned_index(x: f64, dx: f64) -> Result<i64> {
    let q = x / dx;
    let r = q.round();
    if (q - r).abs() > 1e-9 * r.abs().max(1.0) {
        return Err(Error::InvalidParams(format!("{x} is not a multiple of the grid step {dx}")));
    }
    Ok(r as i64)
}

/// Behavior of a fixed domain at its ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixedEdge {
    /// No boundary condition: end nodes evolve like any other node.
    #[default]
    Open,
    /// End nodes held at zero, as in free mode.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dx: f64,
    pub steps_per_period: usize,
    /// Number of periods to simulate.
    pub horizon: usize,
    /// Record every this many steps; period ends are always recorded.
    pub record_stride: usize,
    /// Keep full pre/post pulse profiles every this many periods (0: never).
    pub snapshot_every: usize,
    pub fixed_edge: FixedEdge,
    /// Window on which the per-period interior minimum is tracked.
    pub core_window: Option<(f64, f64)>,
    /// Stop once a spreading or vanishing criterion holds (after at least
    /// the minimum number of periods).
    pub early_stop: Option<Tolerances>,
}

impl SimConfig {
    /// Smallest steps-per-period meeting the stability constraints for `params`.
    pub fn auto(params: &ModelParams, dx: f64, horizon: usize) -> Self {
        let a = params.a_priori_bound();
        let c = &params.coefficients;
        let rate = c.rate_bound(a).max(front_rate(params, dx, a));
        let mut n = (c.tau * rate).ceil().max(1.0) as usize;
        let slots = c.slot_lcm();
        n = n.div_ceil(slots) * slots;
        Self {
            dx,
            steps_per_period: n,
            horizon,
            record_stride: n,
            snapshot_every: 0,
            fixed_edge: FixedEdge::Open,
            core_window: None,
            early_stop: None,
        }
    }

    pub fn dt(&self, tau: f64) -> f64 {
        tau / self.steps_per_period as f64
    }
}

/// Bound on the sensitivity of the front speeds to the front positions;
/// `dt` times this must not exceed 1 for the discrete comparison principle.
pub fn front_rate(params: &ModelParams, dx: f64, a_bound: f64) -> f64 {
    let fp = &params.frontier;
    let per_kernel = |k: &KernelSpec| match k.family() {
        KernelFamily::Triangular | KernelFamily::TruncatedGaussian => 0.5 + dx * k.peak(),
        KernelFamily::Table => k.peak() * (k.support() + dx),
    };
    a_bound * (fp.mu1 * per_kernel(&params.k1) + fp.mu2 * per_kernel(&params.k2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub t: f64,
    pub g: f64,
    pub h: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub max1: f64,
    pub max2: f64,
}

impl Record {
    fn of(s: &FrontState) -> Self {
        let (mass1, mass2) = s.masses();
        let (max1, max2) = s.maxima();
        Self { t: s.t, g: s.g, h: s.h, mass1, mass2, max1, max2 }
    }
}

/// Profiles at a period boundary, before and after the pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub period: usize,
    pub t: f64,
    pub first: i64,
    pub dx: f64,
    pub g: f64,
    pub h: f64,
    pub pre: (Vec<f64>, Vec<f64>),
    /// Absent for the final frame, which is not followed by a pulse.
    pub post: Option<(Vec<f64>, Vec<f64>)>,
}

impl Snapshot {
    pub fn x(&self, i: usize) -> f64 {
        (self.first + i as i64) as f64 * self.dx
    }
}

/// Summary of period `period`, i.e. of `((period - 1) tau, period tau]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodSummary {
    pub period: usize,
    pub t_end: f64,
    pub g: f64,
    pub h: f64,
    /// Sup of `u1`, `u2` over all steps of the period.
    pub max1: f64,
    pub max2: f64,
    /// Min of `min(u1, u2)` on the core window over the period.
    pub core_min: f64,
    /// `(h - g)` gained during the period.
    pub front_advance: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AuditCounters {
    pub frames: usize,
    pub pulses: usize,
    pub positivity: usize,
    pub bound: usize,
    pub pulse_exactness: usize,
    pub front_monotonicity: usize,
}

impl AuditCounters {
    pub fn violations(&self) -> usize {
        self.positivity + self.bound + self.pulse_exactness + self.front_monotonicity
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub snapshots: Vec<Snapshot>,
    pub periods: Vec<PeriodSummary>,
    pub audit: AuditCounters,
    pub a_bound: f64,
    pub dt: f64,
    pub tau: f64,
    pub h0: f64,
    pub steps_per_period: usize,
    pub stopped_early: bool,
    pub final_state: FrontState,
}

impl Trajectory {
    pub fn periods_run(&self) -> usize {
        self.periods.len()
    }
}

/// Applies `u2 <- H(u2)` at a period boundary.
pub fn apply_pulse(state: &FrontState, rule: &HarvestRule, tau: f64) -> Result<FrontState> {
    let q = state.t / tau;
    if (q - q.round()).abs() > 1e-9 * q.abs().max(1.0) {
        return Err(Error::OffSchedule(state.t));
    }
    let mut out = state.clone();
    for v in &mut out.u2 {
        *v = rule.apply(*v)?;
    }
    Ok(out)
}

/// One explicit Euler step of the densities at time `state.t`.
pub fn step_interior(state: &FrontState, c: &Coefficients, k1: &KernelSpec, k2: &KernelSpec, dt: f64) -> Result<FrontState> {
    let (m1, m2) = state.maxima();
    let local_bound = crate::model::bound_from_parts(c.b.sup(), c.alpha1.inf(), c.a.sup(), c.alpha2.inf(), m1, m2);
    let q = dt * c.rate_bound(local_bound);
    if q > 1.0 {
        return Err(Error::Stability(q));
    }
    let st1 = ConvolutionStencil::sub_unit(k1, state.dx);
    let st2 = ConvolutionStencil::sub_unit(k2, state.dx);
    let mut out = state.clone();
    let mut bufs = Buffers::default();
    euler_update(&mut out, c.rates_at(state.t), c.d1, c.d2, dt, &st1, &st2, &mut bufs);
    out.t = state.t + dt;
    Ok(out)
}

/// Front positions after one step driven by the current densities.
pub fn step_boundaries(state: &FrontState, fp: &FrontierParams, k1: &KernelSpec, k2: &KernelSpec, dt: f64) -> (f64, f64) {
    if fp.mu1 == 0.0 && fp.mu2 == 0.0 {
        return (state.g, state.h);
    }
    let n = state.len();
    let flux = |side: Side| {
        let mut total = 0.0;
        for (mu, k, u) in [(fp.mu1, k1, &state.u1), (fp.mu2, k2, &state.u2)] {
            if mu == 0.0 {
                continue;
            }
            let reach = k.support();
            let mut acc = 0.0;
            let mut visit = |i: usize| -> bool {
                let x = state.x(i);
                let gap = match side {
                    Side::Right => state.h - x,
                    Side::Left => x - state.g,
                };
                if gap >= reach {
                    return false;
                }
                acc += trapezoid_weight(i, n, state.dx) * u[i] * k.upper_tail(gap);
                true
            };
            match side {
                Side::Right => {
                    for i in (0..n).rev() {
                        if !visit(i) {
                            break;
                        }
                    }
                }
                Side::Left => {
                    for i in 0..n {
                        if !visit(i) {
                            break;
                        }
                    }
                }
            }
            total += mu * acc;
        }
        total
    };
    (state.g - dt * flux(Side::Left), state.h + dt * flux(Side::Right))
}

#[derive(Default)]
pub(crate) struct Buffers {
    scratch: Vec<f64>,
    conv1: Vec<f64>,
    conv2: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn euler_update(
    state: &mut FrontState,
    r: Rates,
    d1: f64,
    d2: f64,
    dt: f64,
    st1: &ConvolutionStencil,
    st2: &ConvolutionStencil,
    bufs: &mut Buffers,
) {
    let n = state.len();
    bufs.conv1.resize(n, 0.0);
    bufs.conv2.resize(n, 0.0);
    st1.apply(&state.u1, &mut bufs.conv1, &mut bufs.scratch);
    st2.apply(&state.u2, &mut bufs.conv2, &mut bufs.scratch);
    let (lo, hi) = state.free_range();
    let k1 = d1 + r.a + r.m1;
    let k2 = d2 + r.m2;
    for i in lo..hi {
        let p = state.u1[i];
        let q = state.u2[i];
        state.u1[i] = p * (1.0 - dt * (k1 + r.alpha1 * p)) + dt * (d1 * bufs.conv1[i] + r.b * q);
        state.u2[i] = q * (1.0 - dt * (k2 + r.alpha2 * q)) + dt * (d2 * bufs.conv2[i] + r.a * p);
    }
}

impl ConvolutionStencil {
    /// Stencil rescaled, if needed, so its discrete mass does not exceed 1.
    /// This keeps the constant `A` a super-solution of the discrete scheme.
    pub fn sub_unit(k: &KernelSpec, dx: f64) -> Self {
        let st = Self::new(k, dx);
        let mass = st.discrete_mass();
        if mass > 1.0 {
            st.scaled(1.0 / mass)
        } else {
            st
        }
    }
}

/// Free-boundary run starting from `[-h0, h0]`.
pub fn run_free(params: &ModelParams, config: &SimConfig) -> Result<Trajectory> {
    params.validate()?;
    let h0 = params.frontier.h0;
    let state = FrontState::from_initial(&params.initial, -h0, h0, config.dx, true)?;
    Engine::new(params, config, true)?.run(state)
}

/// Fixed-domain run on `[l1, l2]`; initial data are taken as zero outside `[-h0, h0]`.
pub fn run_fixed(params: &ModelParams, interval: (f64, f64), config: &SimConfig) -> Result<Trajectory> {
    params.validate()?;
    let pinned = config.fixed_edge == FixedEdge::Zero;
    let state = FrontState::from_initial(&params.initial, interval.0, interval.1, config.dx, pinned)?;
    Engine::new(params, config, false)?.run(state)
}

/// Runs from an explicit initial state (free or fixed according to `free`).
pub fn run_from_state(params: &ModelParams, config: &SimConfig, state: FrontState, free: bool) -> Result<Trajectory> {
    params.validate()?;
    Engine::new(params, config, free)?.run(state)
}

struct Engine<'a> {
    params: &'a ModelParams,
    config: &'a SimConfig,
    free: bool,
    dt: f64,
    a_bound: f64,
    st1: ConvolutionStencil,
    st2: ConvolutionStencil,
    bufs: Buffers,
}

impl<'a> Engine<'a> {
    fn new(params: &'a ModelParams, config: &'a SimConfig, free: bool) -> Result<Self> {
        if config.steps_per_period == 0 {
            return Err(Error::InvalidParams("steps_per_period must be positive".into()));
        }
        if !(config.dx > 0.0 && config.dx.is_finite()) {
            return Err(Error::InvalidParams(format!("dx = {} must be positive", config.dx)));
        }
        let c = &params.coefficients;
        let dt = config.dt(c.tau);
        let a_bound = params.a_priori_bound();
        let q = dt * c.rate_bound(a_bound);
        if q > 1.0 {
            return Err(Error::Stability(q));
        }
        if free {
            let q = dt * front_rate(params, config.dx, a_bound);
            if q > 1.0 {
                return Err(Error::Stability(q));
            }
        }
        Ok(Self {
            params,
            config,
            free,
            dt,
            a_bound,
            st1: ConvolutionStencil::sub_unit(&params.k1, config.dx),
            st2: ConvolutionStencil::sub_unit(&params.k2, config.dx),
            bufs: Buffers::default(),
        })
    }

    fn run(mut self, mut state: FrontState) -> Result<Trajectory> {
        let p = self.params;
        let c = &p.coefficients;
        let cfg = self.config;
        let n_steps = cfg.steps_per_period;
        let stride = if cfg.record_stride == 0 { n_steps } else { cfg.record_stride };
        let h0 = p.frontier.h0;
        let core = cfg
            .core_window
            .or(cfg.early_stop.map(|t| t.core))
            .unwrap_or((-0.5 * h0, 0.5 * h0));
        let mut traj = Trajectory {
            records: vec![Record::of(&state)],
            snapshots: Vec::new(),
            periods: Vec::new(),
            audit: AuditCounters::default(),
            a_bound: self.a_bound,
            dt: self.dt,
            tau: c.tau,
            h0,
            steps_per_period: n_steps,
            stopped_early: false,
            final_state: state.clone(),
        };
        self.audit_frame(&state, None, &mut traj.audit);

        for period in 0..cfg.horizon {
            let pre = state.clone();
            state = self.pulse(&state, &mut traj.audit)?;
            if cfg.snapshot_every > 0 && period % cfg.snapshot_every == 0 {
                traj.snapshots.push(snapshot(&pre, Some(&state), period));
            }
            let (g_start, h_start) = (state.g, state.h);
            let mut max1 = 0.0f64;
            let mut max2 = 0.0f64;
            let mut core_min = f64::INFINITY;
            for k in 0..n_steps {
                let prev = (state.g, state.h);
                self.advance(&mut state, period * n_steps + k + 1)?;
                let (a, b) = state.maxima();
                max1 = max1.max(a);
                max2 = max2.max(b);
                core_min = core_min.min(state.min_on(core.0, core.1));
                let global = period * n_steps + k + 1;
                if k + 1 == n_steps || global % stride == 0 {
                    traj.records.push(Record::of(&state));
                    self.audit_frame(&state, Some(prev), &mut traj.audit);
                }
            }
            let summary = PeriodSummary {
                period: period + 1,
                t_end: state.t,
                g: state.g,
                h: state.h,
                max1,
                max2,
                core_min,
                front_advance: (state.h - state.g) - (h_start - g_start),
            };
            traj.periods.push(summary);
            if let Some(tol) = &cfg.early_stop {
                if traj.periods.len() >= classify::MIN_PERIODS
                    && classify::period_outcome(&summary, tol) != Outcome::Undetermined
                {
                    traj.stopped_early = true;
                    break;
                }
            }
        }
        if cfg.snapshot_every > 0 {
            traj.snapshots.push(snapshot(&state, None, traj.periods.len()));
        }
        traj.final_state = state;
        Ok(traj)
    }

    fn pulse(&self, state: &FrontState, audit: &mut AuditCounters) -> Result<FrontState> {
        let rule = &self.params.harvest;
        let out = apply_pulse(state, rule, self.params.coefficients.tau)?;
        audit.pulses += 1;
        let exact = state.u1.iter().zip(&out.u1).all(|(a, b)| a.to_bits() == b.to_bits())
            && state.u2.iter().zip(&out.u2).all(|(a, b)| rule.eval(*a).to_bits() == b.to_bits());
        if !exact {
            audit.pulse_exactness += 1;
        }
        Ok(out)
    }

    /// One step; `step` is the global index of the step being completed.
    fn advance(&mut self, state: &mut FrontState, step: usize) -> Result<()> {
        let p = self.params;
        let c = &p.coefficients;
        let (g_new, h_new) = if self.free {
            step_boundaries(state, &p.frontier, &p.k1, &p.k2, self.dt)
        } else {
            (state.g, state.h)
        };
        euler_update(state, c.rates_at(state.t), c.d1, c.d2, self.dt, &self.st1, &self.st2, &mut self.bufs);
        state.t = step as f64 * self.dt;
        if self.free {
            state.g = g_new;
            state.h = h_new;
            state.extend_to_boundaries();
        }
        Ok(())
    }

    fn audit_frame(&self, s: &FrontState, prev: Option<(f64, f64)>, audit: &mut AuditCounters) {
        audit.frames += 1;
        let all = s.u1.iter().chain(&s.u2);
        if all.clone().any(|v| !(*v >= 0.0)) {
            audit.positivity += 1;
        }
        if all.clone().any(|v| *v > self.a_bound + BOUND_SLACK) {
            audit.bound += 1;
        }
        if let Some((g, h)) = prev {
            if s.h < h || s.g > g {
                audit.front_monotonicity += 1;
            }
        }
    }
}

fn snapshot(pre: &FrontState, post: Option<&FrontState>, period: usize) -> Snapshot {
    Snapshot {
        period,
        t: pre.t,
        first: pre.first,
        dx: pre.dx,
        g: pre.g,
        h: pre.h,
        pre: (pre.u1.clone(), pre.u2.clone()),
        post: post.map(|s| (s.u1.clone(), s.u2.clone())),
    }
}
