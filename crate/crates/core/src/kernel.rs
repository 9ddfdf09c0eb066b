//! Dispersal kernels and the quadrature primitives built on them.
//!
//! Every kernel is even, nonnegative, bounded, has `J(0) > 0` and unit mass.
//! All families are compactly supported so the exterior tail integrals used by
//! the free-boundary laws are available in closed form.

use std::f64::consts::SQRT_2;
use std::path::Path;

use crate::error::{Error, Result};

/// Truncation radius of the Gaussian family, in units of sigma.
pub const GAUSSIAN_CUTOFF: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Triangular,
    TruncatedGaussian,
    Table,
}

/// Sampled half-kernel `J(k * step)`, `k = 0..len`, extended evenly and
/// linearly interpolated. Values are normalized to unit mass on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    step: f64,
    values: Vec<f64>,
    // tail[k] = integral of the interpolant over [k * step, radius]
    tail: Vec<f64>,
}

impl KernelTable {
    fn new(step: f64, mut values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidKernel(format!("table step {step} must be positive")));
        }
        if values.len() < 2 {
            return Err(Error::InvalidKernel("table needs at least two samples".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidKernel(format!("table value {v} is not a finite nonnegative number")));
        }
        if values[0] <= 0.0 {
            return Err(Error::InvalidKernel("table value at x = 0 must be positive".into()));
        }
        let half: f64 = values.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
        let mass = 2.0 * half;
        for v in &mut values {
            *v /= mass;
        }
        let mut tail = vec![0.0; values.len()];
        for k in (0..values.len() - 1).rev() {
            tail[k] = tail[k + 1] + 0.5 * (values[k] + values[k + 1]) * step;
        }
        Ok(Self { step, values, tail })
    }

    fn radius(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        let pos = x / self.step;
        let k = pos.floor() as usize;
        if k + 1 >= self.values.len() {
            return if k + 1 == self.values.len() && pos == k as f64 {
                self.values[k]
            } else {
                0.0
            };
        }
        let frac = pos - k as f64;
        self.values[k] + (self.values[k + 1] - self.values[k]) * frac
    }

    fn upper_tail(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        let pos = s / self.step;
        let k = pos.floor() as usize;
        if k + 1 >= self.values.len() {
            return 0.0;
        }
        let x_next = (k + 1) as f64 * self.step;
        let v_s = self.eval(s);
        0.5 * (v_s + self.values[k + 1]) * (x_next - s) + self.tail[k + 1]
    }
}

/// A dispersal kernel `J`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    width: f64,
    table: Option<KernelTable>,
}

impl KernelSpec {
    /// `J(x) = (1 - |x|/sigma)_+ / sigma`.
    pub fn triangular(sigma: f64) -> Result<Self> {
        check_width(sigma)?;
        Ok(Self { family: KernelFamily::Triangular, width: sigma, table: None })
    }

    /// Gaussian with standard deviation `sigma`, truncated at `4 sigma` and
    /// renormalized to unit mass.
    pub fn truncated_gaussian(sigma: f64) -> Result<Self> {
        check_width(sigma)?;
        Ok(Self { family: KernelFamily::TruncatedGaussian, width: sigma, table: None })
    }

    /// Kernel tabulated at `x = 0, step, 2 step, ...`; extended evenly.
    pub fn table(step: f64, values: Vec<f64>) -> Result<Self> {
        let table = KernelTable::new(step, values)?;
        Ok(Self { family: KernelFamily::Table, width: table.radius(), table: Some(table) })
    }

    /// Reads a two-column CSV `x,value` with `x` starting at 0 on a uniform grid.
    pub fn table_from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(x), Some(v)) = (cols.next(), cols.next()) else {
                return Err(Error::InvalidKernel(format!("{}:{}: expected `x,value`", path.display(), lineno + 1)));
            };
            match (x.parse::<f64>(), v.parse::<f64>()) {
                (Ok(x), Ok(v)) => {
                    xs.push(x);
                    vs.push(v);
                }
                // header line
                _ if xs.is_empty() => continue,
                _ => {
                    return Err(Error::InvalidKernel(format!(
                        "{}:{}: cannot parse `{line}`",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        if xs.len() < 2 {
            return Err(Error::InvalidKernel(format!("{}: fewer than two samples", path.display())));
        }
        if xs[0].abs() > 1e-12 {
            return Err(Error::InvalidKernel(format!("{}: first sample must be at x = 0", path.display())));
        }
        let step = xs[1] - xs[0];
        for (k, x) in xs.iter().enumerate() {
            if (x - k as f64 * step).abs() > 1e-9 * step.max(1.0) {
                return Err(Error::InvalidKernel(format!("{}: grid is not uniform at x = {x}", path.display())));
            }
        }
        Self::table(step, vs)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Length scale: sigma for the analytic families, the support radius for tables.
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Radius `R` with `J(x) = 0` for `|x| > R`.
    pub fn support(&self) -> f64 {
        match self.family {
            KernelFamily::Triangular => self.width,
            KernelFamily::TruncatedGaussian => GAUSSIAN_CUTOFF * self.width,
            KernelFamily::Table => self.width,
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match self.family {
            KernelFamily::Triangular => {
                let s = self.width;
                (1.0 - x.abs() / s).max(0.0) / s
            }
            KernelFamily::TruncatedGaussian => {
                let s = self.width;
                if x.abs() > GAUSSIAN_CUTOFF * s {
                    0.0
                } else {
                    (-0.5 * (x / s).powi(2)).exp() / gaussian_norm(s)
                }
            }
            KernelFamily::Table => self.table.as_ref().map_or(0.0, |t| t.eval(x)),
        }
    }

    /// `sup J`.
    pub fn peak(&self) -> f64 {
        match &self.table {
            Some(t) => t.values.iter().copied().fold(0.0, f64::max),
            None => self.evaluate(0.0),
        }
    }

    /// Total mass computed from the closed-form (or tabulated) antiderivative.
    pub fn mass(&self) -> f64 {
        2.0 * self.upper_tail(0.0)
    }

    /// `int_s^inf J(z) dz` for any real `s`.
    pub fn upper_tail(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 1.0 - self.upper_tail(-s);
        }
        match self.family {
            KernelFamily::Triangular => {
                let r = (1.0 - s / self.width).max(0.0);
                0.5 * r * r
            }
            KernelFamily::TruncatedGaussian => {
                let s_max = GAUSSIAN_CUTOFF * self.width;
                if s >= s_max {
                    return 0.0;
                }
                let full = libm::erf(GAUSSIAN_CUTOFF / SQRT_2);
                (full - libm::erf(s / (self.width * SQRT_2))) / (2.0 * full)
            }
            KernelFamily::Table => self.table.as_ref().map_or(0.0, |t| t.upper_tail(s)),
        }
    }
}

fn check_width(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("width {sigma} must be positive and finite")))
    }
}

fn gaussian_norm(sigma: f64) -> f64 {
    sigma * (2.0 * std::f64::consts::PI).sqrt() * libm::erf(GAUSSIAN_CUTOFF / SQRT_2)
}

/// Which tail of the kernel lies beyond a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

/// `J(x)`; zero outside the support.
pub fn evaluate(k: &KernelSpec, x: f64) -> f64 {
    k.evaluate(x)
}

/// Trapezoid weight of node `i` on a grid with `n` nodes.
#[inline]
pub fn trapezoid_weight(i: usize, n: usize, dx: f64) -> f64 {
    if i == 0 || i + 1 == n {
        0.5 * dx
    } else {
        dx
    }
}

/// Composite trapezoid approximation of `int_g^h J(x_i - y) u(y) dy` where
/// `values[j]` samples `u` at `g + j dx` and `h = g + (len - 1) dx`.
pub fn interior_convolve(k: &KernelSpec, dx: f64, values: &[f64], i: usize) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let radius = (k.support() / dx).ceil() as usize;
    let lo = i.saturating_sub(radius);
    let hi = (i + radius).min(n - 1);
    (lo..=hi)
        .map(|j| trapezoid_weight(j, n, dx) * k.evaluate((i as f64 - j as f64) * dx) * values[j])
        .sum()
}

/// `int_boundary^inf J(x - y) dy` (Right) or `int_-inf^boundary J(x - y) dy` (Left).
pub fn exterior_mass(k: &KernelSpec, x: f64, boundary: f64, side: Side) -> Result<f64> {
    let gap = match side {
        Side::Right => boundary - x,
        Side::Left => x - boundary,
    };
    if gap < 0.0 {
        return Err(Error::InvalidParams(format!(
            "exterior_mass: point {x} lies beyond the {side:?} boundary {boundary}"
        )));
    }
    Ok(k.upper_tail(gap))
}

/// Kernel sampled at integer multiples of a grid step, used for fast
/// trapezoid convolutions on uniform grids.
#[derive(Debug, Clone)]
pub struct ConvolutionStencil {
    dx: f64,
    // taps[m] = J(m dx), m = 0..=radius
    taps: Vec<f64>,
}

impl ConvolutionStencil {
    pub fn new(k: &KernelSpec, dx: f64) -> Self {
        let radius = (k.support() / dx).ceil() as usize;
        let taps = (0..=radius).map(|m| k.evaluate(m as f64 * dx)).collect();
        Self { dx, taps }
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn radius(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Same stencil with every tap multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { dx: self.dx, taps: self.taps.iter().map(|t| t * factor).collect() }
    }

    /// Discrete mass `dx * sum_m J(m dx)` seen by an interior node.
    pub fn discrete_mass(&self) -> f64 {
        self.dx * (self.taps[0] + 2.0 * self.taps[1..].iter().sum::<f64>())
    }

    /// `out[i] = sum_j w_j J((i - j) dx) values[j]` with trapezoid weights `w_j`.
    /// `scratch` holds the weighted values and is resized as needed.
    pub fn apply(&self, values: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
        let n = values.len();
        debug_assert_eq!(out.len(), n);
        if n < 2 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        scratch.clear();
        scratch.extend(values.iter().enumerate().map(|(j, v)| trapezoid_weight(j, n, self.dx) * v));
        let r = self.radius();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = self.taps[0] * scratch[i];
            let reach = r.min(n - 1);
            for m in 1..=reach {
                let tap = self.taps[m];
                if i >= m {
                    acc += tap * scratch[i - m];
                }
                if i + m < n {
                    acc += tap * scratch[i + m];
                }
            }
            *o = acc;
        }
    }
}
