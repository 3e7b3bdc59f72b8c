//! Euler–Maruyama for `dX = μ(X) dt + dW` along a given Brownian path, and
//! Riemann-sum occupation functionals `∫ μ(W_s) ds`.

use crate::drift::PiecewiseLipschitzFn;
use crate::error::{Error, Result};
use crate::noise::{FinePath, Grid};

/// Scalar SDE with unit diffusion.
#[derive(Clone, Debug, PartialEq)]
pub struct SdeSpec {
    drift: PiecewiseLipschitzFn,
    x0: f64,
}

impl SdeSpec {
    /// Fails unless the drift is piecewise Lipschitz and `x0` is finite.
    pub fn new(drift: PiecewiseLipschitzFn, x0: f64) -> Result<Self> {
        let check = drift.validate().lipschitz;
        if !check.holds {
            return Err(Error::InvalidDrift(check.detail));
        }
        if !x0.is_finite() {
            return Err(Error::InvalidDrift(format!("initial value {x0} is not finite")));
        }
        Ok(Self { drift, x0 })
    }

    pub fn drift(&self) -> &PiecewiseLipschitzFn {
        &self.drift
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn at_end(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Euler steps over raw `times` / `w` slices, calling `visit(j, x_j)` for
/// every grid index. Returns the terminal value.
///
/// The recursion is evaluated in the summed form
/// `X_j = Σ_{l<j} μ(X_l)(s_{l+1} − s_l) + (x₀ + (W_{s_j} − W_{s_0}))`,
/// so a zero drift reproduces `x₀ + W` without rounding drift.
#[inline]
pub fn euler_visit(
    drift: &PiecewiseLipschitzFn,
    x0: f64,
    times: &[f64],
    w: &[f64],
    mut visit: impl FnMut(usize, f64),
) -> f64 {
    debug_assert_eq!(times.len(), w.len());
    // accumulated drift kept apart from the noise: zero drift reproduces x0 + W exactly
    let mut x = x0;
    let mut d = 0.0;
    visit(0, x);
    for j in 1..times.len() {
        d += drift.eval(x) * (times[j] - times[j - 1]);
        x = d + (x0 + (w[j] - w[0]));
        visit(j, x);
    }
    x
}

/// `X_{j+1} = X_j + μ(X_j)(s_{j+1} − s_j) + (W_{s_{j+1}} − W_{s_j})`, `X_0 = x₀`.
pub fn euler(spec: &SdeSpec, path: &FinePath) -> Trajectory {
    let mut values = Vec::with_capacity(path.values().len());
    euler_visit(&spec.drift, spec.x0, path.grid().times(), path.values(), |_, x| values.push(x));
    Trajectory { grid: path.grid().clone(), values }
}

/// Terminal value of [`euler`], without storing the trajectory.
pub fn solve_at_one(spec: &SdeSpec, path: &FinePath) -> f64 {
    euler_visit(&spec.drift, spec.x0, path.grid().times(), path.values(), |_, _| {})
}

/// `n^{-1} Σ_{i=1}^n f(W_{t_{i-1}})` on an equidistant grid with `n` cells.
/// Values at `t_0, …, t_{n-1}` are required; a trailing value at `t_n` is
/// accepted and ignored.
pub fn occupation_riemann(f: &PiecewiseLipschitzFn, w_at_coarse: &[f64], coarse: &Grid) -> Result<f64> {
    if !coarse.is_equidistant() {
        return Err(Error::InvalidGrid("Riemann-sum estimator needs an equidistant grid".into()));
    }
    let n = coarse.cells();
    if w_at_coarse.len() != n && w_at_coarse.len() != n + 1 {
        return Err(Error::InvalidGrid(format!("expected {n} or {} values, got {}", n + 1, w_at_coarse.len())));
    }
    Ok(w_at_coarse[..n].iter().map(|&w| f.eval(w)).sum::<f64>() / n as f64)
}

/// Left-endpoint Riemann sum of `f` along `path`.
pub fn occupation_fine(f: &PiecewiseLipschitzFn, path: &FinePath) -> f64 {
    left_riemann(f, path.grid().times(), path.values())
}

#[inline]
pub(crate) fn left_riemann(f: &PiecewiseLipschitzFn, times: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 1..times.len() {
        acc += f.eval(values[j - 1]) * (times[j] - times[j - 1]);
    }
    acc
}

/// Left-endpoint approximation of `∫_0^1 1{|x_s − level| ≤ eps} ds`.
pub fn time_near_level(traj: &Trajectory, level: f64, eps: f64) -> f64 {
    let t = traj.grid.times();
    (1..t.len()).filter(|&j| (traj.values[j - 1] - level).abs() <= eps).map(|j| t[j] - t[j - 1]).sum()
}
