//! Asymptotic predictions for the box-relaxation decoder.
//!
//! Everything here derives from the scalar potential
//!
//! ```text
//! F(tau; t, delta) = tau/2 (delta - 1/2) + t/(2 tau) + tau/2 int_{2/tau}^inf (x - 2/tau)^2 phi(x) dx
//! ```
//!
//! whose minimiser `tau_p` and minimum `f_p` summarise the high-dimensional
//! problem. `t` is the noise variance. The per-bit error probability is
//! `Phi(-1/tau_p)` and the number of bit errors is asymptotically Poisson
//! with rate `lambda_p = p Phi(-1/tau_p)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gaussian::{cdf_raw, ln_upper_tail_raw, partial_moments_raw};

/// Problem dimensions and noise level of one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Signal dimension.
    pub p: usize,
    /// Sampling ratio `n / p`.
    #[serde(alias = "delta")]
    pub delta_p: f64,
    /// Noise variance.
    #[serde(alias = "sigma2")]
    pub sigma2_p: f64,
}

impl SystemParams {
    pub fn new(p: usize, delta_p: f64, sigma2_p: f64) -> Result<Self> {
        let params = Self {
            p,
            delta_p,
            sigma2_p,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks `p >= 1`, `delta_p > 1/2` and finite `sigma2_p > 0`.
    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return domain("p must be at least 1");
        }
        check_delta(self.delta_p)?;
        check_positive(self.sigma2_p, "sigma2_p")
    }

    /// Number of measurements `round(delta_p p)`.
    pub fn n(&self) -> usize {
        (self.delta_p * self.p as f64).round() as usize
    }
}

/// Closed-form asymptotic quantities for one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub tau_p: f64,
    pub f_p: f64,
    pub lambda_p: f64,
    /// Limiting curvature `f_p / tau_p` of the leave-one-out scalar problem.
    pub a_p_star: f64,
    pub alpha_p: f64,
    /// Per-bit error probability `Phi(-1/tau_p)`.
    pub ber_asymptotic: f64,
    /// Poisson prediction of the exact-recovery probability, `exp(-lambda_p)`.
    pub p_correct_poisson: f64,
}

fn check_positive(x: f64, name: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        domain(format!("{name} must be finite and positive, got {x}"))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.5 {
        Ok(())
    } else {
        domain(format!("delta must be finite and > 1/2, got {delta}"))
    }
}

fn check_args(tau: f64, t: f64, delta: f64) -> Result<()> {
    check_positive(tau, "tau")?;
    check_positive(t, "t")?;
    check_delta(delta)
}

fn potential_raw(tau: f64, t: f64, delta: f64) -> f64 {
    let m2 = partial_moments_raw(2.0 / tau)[2];
    0.5 * tau * (delta - 0.5) + t / (2.0 * tau) + 0.5 * tau * m2
}

/// `h(tau) = 2 dF/dtau`, written with the partial moments as
/// `delta - 1/2 + M2(a) + 2a M1(a) - t/tau^2` where `a = 2/tau`.
fn stationarity_raw(tau: f64, t: f64, delta: f64) -> f64 {
    let a = 2.0 / tau;
    let [_, m1, m2] = partial_moments_raw(a);
    delta - 0.5 + (m2 + 2.0 * a * m1) - t / (tau * tau)
}

fn stationarity_deriv_raw(tau: f64, t: f64) -> f64 {
    let tail = partial_moments_raw(2.0 / tau)[0];
    (8.0 * tail + 2.0 * t) / (tau * tau * tau)
}

/// The potential `F(tau; t, delta)`.
pub fn potential_f(tau: f64, t: f64, delta: f64) -> Result<f64> {
    check_args(tau, t, delta)?;
    Ok(potential_raw(tau, t, delta))
}

/// The stationarity function `h(tau)` whose unique root is the minimiser of
/// the potential. Strictly increasing from `-inf` to `delta`.
pub fn stationarity_h(tau: f64, t: f64, delta: f64) -> Result<f64> {
    check_args(tau, t, delta)?;
    Ok(stationarity_raw(tau, t, delta))
}

/// Derivative `h'(tau) = (8 Phi(-2/tau) + 2t) / tau^3`.
pub fn stationarity_h_prime(tau: f64, t: f64, delta: f64) -> Result<f64> {
    check_args(tau, t, delta)?;
    Ok(stationarity_deriv_raw(tau, t))
}

/// Interval guaranteed to contain the root of `h`:
///
/// ```text
/// sqrt(t / (delta - 1/2 + v)) <= tau(t) <= min(sqrt(t / (delta - 1/2)), sqrt((4 + t) / delta))
/// ```
///
/// with `v = int_b^inf x^2 phi(x) dx` and `b = 2 sqrt((delta - 1/2) / t)`.
pub fn tau_bracket(t: f64, delta: f64) -> Result<(f64, f64)> {
    check_positive(t, "t")?;
    check_delta(delta)?;
    let excess = delta - 0.5;
    let b = 2.0 * (excess / t).sqrt();
    // int_b^inf x^2 phi = M2 + 2b M1 + b^2 M0
    let [m0, m1, m2] = partial_moments_raw(b);
    let v = m2 + 2.0 * b * m1 + b * b * m0;
    let lo = (t / (excess + v)).sqrt();
    let hi = (t / excess).sqrt().min(((4.0 + t) / delta).sqrt());
    Ok((lo, hi))
}

/// Absolute tolerance on `|h|` at the returned root.
fn root_tolerance(delta: f64) -> f64 {
    1e-13 * delta.max(1.0)
}

/// Unique root `tau(t)` of the stationarity equation, i.e. the minimiser of
/// the potential, by safeguarded Newton inside [`tau_bracket`].
pub fn solve_tau(t: f64, delta: f64) -> Result<f64> {
    let (mut lo, mut hi) = tau_bracket(t, delta)?;
    let tol = root_tolerance(delta);

    let h_lo = stationarity_raw(lo, t, delta);
    if h_lo.abs() <= tol {
        return Ok(lo);
    }
    let h_hi = stationarity_raw(hi, t, delta);
    if h_hi.abs() <= tol {
        return Ok(hi);
    }
    if h_lo > 0.0 || h_hi < 0.0 {
        return Err(Error::Bracket(format!(
            "t={t}, delta={delta}: h({lo})={h_lo}, h({hi})={h_hi}"
        )));
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let hx = stationarity_raw(x, t, delta);
        if hx.abs() <= tol {
            return Ok(x);
        }
        if hx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(x);
        }
        let newton = x - hx / stationarity_deriv_raw(x, t);
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::Bracket(format!(
        "t={t}, delta={delta}: no convergence inside [{lo}, {hi}]"
    )))
}

/// `(tau(t), f(t))`: minimiser and minimum of the potential.
pub fn minimize_potential(t: f64, delta: f64) -> Result<(f64, f64)> {
    let tau = solve_tau(t, delta)?;
    Ok((tau, potential_raw(tau, t, delta)))
}

/// `Phi(-1/tau)`, tail-stable.
pub fn per_bit_error_probability(tau: f64) -> Result<f64> {
    check_positive(tau, "tau")?;
    let x = 1.0 / tau;
    Ok(if x > 8.0 {
        ln_upper_tail_raw(x).exp()
    } else {
        cdf_raw(-x)
    })
}

fn lambda_raw(p: usize, tau: f64) -> f64 {
    let x = 1.0 / tau;
    if x > 8.0 {
        ((p as f64).ln() + ln_upper_tail_raw(x)).exp()
    } else {
        p as f64 * cdf_raw(-x)
    }
}

/// Phase coordinate `(delta - 1/2) / (2 sigma^2 ln p)`.
pub fn alpha_p(params: &SystemParams) -> Result<f64> {
    params.validate()?;
    if params.p < 2 {
        return domain("alpha_p requires p >= 2");
    }
    Ok((params.delta_p - 0.5) / (2.0 * params.sigma2_p * (params.p as f64).ln()))
}

/// Noise variance that puts `(p, delta)` at phase coordinate `alpha`.
pub fn sigma2_for_alpha(p: usize, delta: f64, alpha: f64) -> Result<f64> {
    check_delta(delta)?;
    check_positive(alpha, "alpha")?;
    if p < 2 {
        return domain("sigma2_for_alpha requires p >= 2");
    }
    Ok((delta - 0.5) / (2.0 * alpha * (p as f64).ln()))
}

/// All asymptotic predictions for one operating point.
pub fn predict(params: &SystemParams) -> Result<TheoryPrediction> {
    let alpha_p = alpha_p(params)?;
    let (tau_p, f_p) = minimize_potential(params.sigma2_p, params.delta_p)?;
    let ber = per_bit_error_probability(tau_p)?;
    let lambda_p = params.p as f64 * ber;
    Ok(TheoryPrediction {
        tau_p,
        f_p,
        lambda_p,
        a_p_star: f_p / tau_p,
        alpha_p,
        ber_asymptotic: ber,
        p_correct_poisson: (-lambda_p).exp(),
    })
}

fn lambda_at(p: usize, sigma2: f64, delta: f64) -> Result<f64> {
    let tau = solve_tau(sigma2, delta)?;
    Ok(lambda_raw(p, tau))
}

/// Sampling ratio `delta` at which `lambda_p` equals `lambda_target`.
///
/// `lambda_p` is strictly decreasing in `delta`, so the root is bracketed by
/// doubling and then bisected to full precision.
pub fn solve_delta_for_lambda(p: usize, sigma2: f64, lambda_target: f64) -> Result<f64> {
    check_positive(sigma2, "sigma2")?;
    if p < 2 {
        return domain("solve_delta_for_lambda requires p >= 2");
    }
    let half_p = p as f64 / 2.0;
    if !(lambda_target > 0.0 && lambda_target < half_p) {
        return Err(Error::TargetOutOfRange(format!(
            "lambda target {lambda_target} outside (0, {half_p})"
        )));
    }

    let mut lo = 0.5 + 1e-12;
    let lambda_max = lambda_at(p, sigma2, lo)?;
    if lambda_target >= lambda_max {
        return Err(Error::TargetOutOfRange(format!(
            "lambda target {lambda_target} not attainable: sup over delta > 1/2 is {lambda_max}"
        )));
    }
    let mut hi = 1.0;
    while lambda_at(p, sigma2, hi)? > lambda_target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::TargetOutOfRange(format!(
                "lambda target {lambda_target} needs delta > 1e9"
            )));
        }
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lambda_at(p, sigma2, mid)? > lambda_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Poisson probability mass `e^{-lambda} lambda^k / k!`, computed in log space.
pub fn poisson_pmf(lambda: f64, k: u64) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return domain(format!("lambda must be finite and >= 0, got {lambda}"));
    }
    if lambda == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    let kf = k as f64;
    Ok((kf * lambda.ln() - lambda - libm::lgamma(kf + 1.0)).exp())
}

/// Gumbel CDF `exp(-exp(-x))`.
pub fn gumbel_p_correct(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return domain(format!("x must be finite, got {x}"));
    }
    Ok((-(-x).exp()).exp())
}

/// Phase coordinate inside the Gumbel window:
/// `1 - ln ln p / (2 ln p) + (x - ln sqrt(4 pi)) / ln p`.
pub fn alpha_p_of_x(p: usize, x: f64) -> Result<f64> {
    if p < 2 {
        return domain("alpha_p_of_x requires p >= 2");
    }
    if !x.is_finite() {
        return domain(format!("x must be finite, got {x}"));
    }
    let lp = (p as f64).ln();
    let ln_sqrt_4pi = 0.5 * (4.0 * std::f64::consts::PI).ln();
    Ok(1.0 - lp.ln() / (2.0 * lp) + (x - ln_sqrt_4pi) / lp)
}

/// Limiting squared fitting error when the noise variance is raised by
/// `theta`: `1/2 [min_tau F(tau; theta + sigma^2, delta)]^2`.
pub fn ao_scalar_loss(theta: f64, params: &SystemParams) -> Result<f64> {
    if !(theta.is_finite() && theta >= 0.0) {
        return domain(format!("theta must be finite and >= 0, got {theta}"));
    }
    params.validate()?;
    let (_, f) = minimize_potential(theta + params.sigma2_p, params.delta_p)?;
    Ok(0.5 * f * f)
}
