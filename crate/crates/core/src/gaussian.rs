//! Explicit Gaussian quantities: the constant `κ`, the covariance lower bound
//! for monotone transforms of a correlated normal pair, the bridge-integral
//! lower bound built on it, and independent covariance oracles.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::drift::PiecewiseLipschitzFn;
use crate::error::{Error, Result};
use crate::montecarlo::{MCEstimate, SeedProvenance};
use crate::noise::SeedStream;
use crate::quadrature::integrate;

/// Relative tolerance used for [`kappa`].
pub const KAPPA_TOLERANCE: f64 = 1e-6;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x * FRAC_1_SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `κ = e^{-6}/(16π) ∫_0^{1/√3} (1-x²)^{-1/2} e^{-24/(1-x²)} dx`.
pub fn kappa() -> f64 {
    static KAPPA: OnceLock<f64> = OnceLock::new();
    *KAPPA.get_or_init(|| kappa_with_tolerance(KAPPA_TOLERANCE))
}

/// [`kappa`] with an explicit relative quadrature tolerance.
pub fn kappa_with_tolerance(rel_tol: f64) -> f64 {
    let integrand = |x: f64| {
        let s = 1.0 - x * x;
        (-24.0 / s).exp() / s.sqrt()
    };
    let q = integrate(integrand, 0.0, 1.0 / 3f64.sqrt(), 0.0, rel_tol);
    (-6f64).exp() / (16.0 * PI) * q.value
}

/// Correlation and jump data for the covariance lower bound of monotone
/// transforms `f(Z)`, `g(Y)` of a standard normal pair with correlation `rho`.
#[derive(Clone, Debug, PartialEq)]
pub struct BivariateBoundInput {
    pub rho: f64,
    /// `(a_i, f(a_i+) − f(a_i−))`, strictly increasing in `a_i`.
    pub a_breaks: Vec<(f64, f64)>,
    /// `(b_j, g(b_j+) − g(b_j−))`, strictly increasing in `b_j`.
    pub b_breaks: Vec<(f64, f64)>,
}

impl BivariateBoundInput {
    pub fn new(rho: f64, a_breaks: Vec<(f64, f64)>, b_breaks: Vec<(f64, f64)>) -> Result<Self> {
        let input = Self { rho, a_breaks, b_breaks };
        input.check()?;
        Ok(input)
    }

    /// Breakpoints and jumps read off two drifts.
    pub fn from_fns(f: &PiecewiseLipschitzFn, g: &PiecewiseLipschitzFn, rho: f64) -> Result<Self> {
        let breaks = |h: &PiecewiseLipschitzFn| -> Result<Vec<(f64, f64)>> {
            (1..=h.num_breakpoints()).map(|i| Ok((h.breakpoints()[i - 1], h.jump(i)?))).collect()
        };
        Self::new(rho, breaks(f)?, breaks(g)?)
    }

    fn check(&self) -> Result<()> {
        check_rho(self.rho)?;
        for (name, list) in [("a", &self.a_breaks), ("b", &self.b_breaks)] {
            if list.iter().any(|(x, j)| !x.is_finite() || !j.is_finite()) {
                return Err(Error::BoundInput(format!("non-finite entry in {name}_breaks")));
            }
            if list.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::BoundInput(format!("{name}_breaks not strictly increasing")));
            }
        }
        Ok(())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::Correlation(rho))
    }
}

/// Lower bound on `Cov(f(Z), g(Y))` for `f`, `g` both nondecreasing (or both
/// nonincreasing):
///
/// `Σ_i Σ_j Δf_i Δg_j (2π)^{-1} e^{-a_i²/2} ∫_0^ρ (1-u²)^{-1/2} e^{-(b_j - a_i u)²/(2(1-u²))} du`.
///
/// The inner integral is evaluated in `θ = arcsin u`, which removes the
/// endpoint singularity at `u = 1`.
pub fn tong_lower_bound(input: &BivariateBoundInput) -> Result<f64> {
    input.check()?;
    if input.rho == 0.0 {
        return Ok(0.0);
    }
    let theta_max = input.rho.asin();
    let mut total = 0.0;
    for &(a, df) in &input.a_breaks {
        for &(b, dg) in &input.b_breaks {
            if df == 0.0 || dg == 0.0 {
                continue;
            }
            let integrand = |theta: f64| {
                let (s, c) = theta.sin_cos();
                let d = b - a * s;
                (-(d * d) / (2.0 * c * c)).exp()
            };
            let inner = integrate(integrand, 0.0, theta_max, 1e-15, 1e-12).value;
            total += df * dg * (-0.5 * a * a).exp() / (2.0 * PI) * inner;
        }
    }
    Ok(total)
}

/// `Cov(1{Z > a}, 1{Y > b})` for a standard normal pair with correlation
/// `rho`, from `P(Z>a, Y>b) = Φ(-a)Φ(-b) + ∫_0^ρ φ₂(a, b; r) dr`.
///
/// The integral is taken in `s = √(1-r)`, under which
/// `(1-r²)^{-1/2} dr = 2 (2-s²)^{-1/2} ds` stays bounded at `r = 1`.
pub fn bivariate_step_cov(a: f64, b: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if rho == 0.0 {
        return Ok(0.0);
    }
    let diff2 = (a - b) * (a - b);
    let ab = a * b;
    let integrand = |s: f64| {
        let s2 = s * s;
        let one_minus_r2 = s2 * (2.0 - s2);
        // a² - 2rab + b² with r = 1 - s²
        let q = diff2 + 2.0 * s2 * ab;
        (-q / (2.0 * one_minus_r2)).exp() * 2.0 / (2.0 - s2).sqrt() / (2.0 * PI)
    };
    let q = integrate(integrand, (1.0 - rho).sqrt(), 1.0, 1e-14, 1e-10);
    Ok(q.value)
}

/// Monte Carlo estimate of `Cov(f(Z), g(Y))` with `Y = ρZ + √(1-ρ²) Z'`.
///
/// The standard error is that of the mean of the centred products.
pub fn mc_cov(
    f: &PiecewiseLipschitzFn,
    g: &PiecewiseLipschitzFn,
    rho: f64,
    reps: usize,
    seed: &SeedStream,
) -> Result<MCEstimate> {
    check_rho(rho)?;
    if reps < 2 {
        return Err(Error::BoundInput(format!("need at least 2 replications, got {reps}")));
    }
    let mut rng = seed.rng();
    let tail = (1.0 - rho * rho).sqrt();
    let pairs: Vec<(f64, f64)> = (0..reps)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            (f.eval(z), g.eval(rho * z + tail * z2))
        })
        .collect();
    let n = reps as f64;
    let mf = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mg = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let products: Vec<f64> = pairs.iter().map(|(x, y)| (x - mf) * (y - mg)).collect();
    let mean = products.iter().sum::<f64>() / n;
    let var = products.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / (n - 1.0);
    Ok(MCEstimate {
        mean: mean * n / (n - 1.0),
        stderr: (var / n).sqrt(),
        replications: reps,
        provenance: SeedProvenance::from(seed),
    })
}

/// Inputs of the lower bound for the squared difference of two bridge-driven
/// occupation integrals.
#[derive(Clone, Debug)]
pub struct BrBrInput {
    pub h: PiecewiseLipschitzFn,
    /// Interval length, in `(0, 1]`.
    pub t: f64,
    /// 1-based breakpoint index of `h`.
    pub i: usize,
    /// `P(U ∈ [ξ_i, ξ_i + √t])`.
    pub p_u: f64,
    /// `P(V ∈ [0, 1/√t])`.
    pub p_v: f64,
}

/// `κ (h(ξ_i+) − h(ξ_i−))² t² p_u p_v`.
pub fn brbr_lower_bound(input: &BrBrInput) -> Result<f64> {
    if !(input.t > 0.0 && input.t <= 1.0) {
        return Err(Error::BoundInput(format!("interval length {} outside (0, 1]", input.t)));
    }
    for (name, p) in [("p_u", input.p_u), ("p_v", input.p_v)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::BoundInput(format!("{name} = {p} is not a probability")));
        }
    }
    let jump = input.h.jump(input.i)?;
    Ok(kappa() * jump * jump * input.t * input.t * input.p_u * input.p_v)
}
