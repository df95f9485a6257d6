//! Standard normal special functions.
//!
//! The public functions validate their arguments. The crate-internal
//! `*_raw` variants skip validation and are what the theory formulas call
//! in their inner loops.
//!
//! Tail quantities are evaluated through the Mills ratio so that they stay
//! accurate long after `Phi(-x)` itself underflows (around `x = 38`).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{domain, Result};

/// `1 / sqrt(2 pi)`.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Above this argument the Mills ratio is taken from its continued fraction.
const MILLS_CF_THRESHOLD: f64 = 8.0;

/// Above this argument the truncated moments are evaluated as products of
/// continued-fraction ratios instead of differences of tail terms.
const MOMENT_CF_THRESHOLD: f64 = 3.0;

/// Depth of the backward continued-fraction recurrence. At `a = 3` the
/// truncation error is far below one ulp.
const MOMENT_CF_DEPTH: usize = 400;

fn check_finite(x: f64, name: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be finite, got {x}"))
    }
}

pub(crate) fn cdf_raw(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub(crate) fn pdf_raw(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF `Phi(x)`.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    check_finite(x, "x")?;
    Ok(cdf_raw(x))
}

/// Standard normal density `phi(x)`.
pub fn std_normal_pdf(x: f64) -> Result<f64> {
    check_finite(x, "x")?;
    Ok(pdf_raw(x))
}

/// Continued fraction `1/(x + 1/(x + 2/(x + 3/(x + ...))))`, modified Lentz.
fn mills_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

pub(crate) fn mills_raw(x: f64) -> f64 {
    if x > MILLS_CF_THRESHOLD {
        mills_continued_fraction(x)
    } else {
        cdf_raw(-x) / pdf_raw(x)
    }
}

/// Mills ratio `m(x) = Phi(-x) / phi(x)` for `x > 0`.
pub fn mills_ratio(x: f64) -> Result<f64> {
    check_finite(x, "x")?;
    if x <= 0.0 {
        return domain(format!("mills_ratio requires x > 0, got {x}"));
    }
    Ok(mills_raw(x))
}

/// Natural log of the upper tail `ln Phi(-x)`, finite for every finite `x`.
pub(crate) fn ln_upper_tail_raw(x: f64) -> f64 {
    if x > MILLS_CF_THRESHOLD {
        mills_continued_fraction(x).ln() - 0.5 * x * x - 0.5 * (2.0 * PI).ln()
    } else {
        cdf_raw(-x).ln()
    }
}

/// Upper tail `Phi(-x)`, routed through the Mills ratio for large `x`.
pub(crate) fn upper_tail_raw(x: f64) -> f64 {
    if x > MILLS_CF_THRESHOLD {
        ln_upper_tail_raw(x).exp()
    } else {
        cdf_raw(-x)
    }
}

/// Partial moments `M_k(a) = int_a^inf (x - a)^k phi(x) dx` for `k = 0, 1, 2`.
///
/// For large `a` the moments are `phi(a) m(a) r_1 ... r_k` where
/// `r_k = I_k / I_{k-1}` follows the recurrence `r_k = k / (a + r_{k+1})`,
/// which avoids the cancellation in the textbook closed forms.
pub(crate) fn partial_moments_raw(a: f64) -> [f64; 3] {
    if a <= MOMENT_CF_THRESHOLD {
        let tail = cdf_raw(-a);
        let dens = pdf_raw(a);
        [tail, dens - a * tail, (1.0 + a * a) * tail - a * dens]
    } else {
        let mut r = 0.0;
        for k in (3..=MOMENT_CF_DEPTH).rev() {
            r = k as f64 / (a + r);
        }
        let r2 = 2.0 / (a + r);
        let r1 = 1.0 / (a + r2);
        let m0 = upper_tail_raw(a);
        let m1 = m0 * r1;
        [m0, m1, m1 * r2]
    }
}

/// `int_a^inf (x - a)^2 phi(x) dx = (1 + a^2) Phi(-a) - a phi(a)` for `a >= 0`.
pub fn truncated_sq_moment(a: f64) -> Result<f64> {
    check_finite(a, "a")?;
    if a < 0.0 {
        return domain(format!("truncated_sq_moment requires a >= 0, got {a}"));
    }
    Ok(partial_moments_raw(a)[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from 300-digit mpmath evaluations of the closed forms.
    const CDF_AT_1: f64 = 0.841_344_746_068_542_9;
    const PDF_AT_1: f64 = 0.241_970_724_519_143_35;
    const TSM_AT_2: f64 = 0.005_768_726_714_519_932;
    const TSM_AT_30: f64 = 1.084_372_487_398_349e-200;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        assert!((std_normal_cdf(40.0).unwrap() - 1.0).abs() <= 1e-15);
        assert!((std_normal_cdf(1.0).unwrap() - CDF_AT_1).abs() <= 1e-14);
    }

    #[test]
    fn cdf_symmetry_on_grid() {
        for i in 0..=1600 {
            let x = -8.0 + i as f64 * 0.01;
            let s = std_normal_cdf(x).unwrap() + std_normal_cdf(-x).unwrap();
            assert!((s - 1.0).abs() <= 1e-14, "x={x}");
        }
    }

    #[test]
    fn cdf_is_monotone() {
        let mut prev = 0.0;
        for i in 0..=4000 {
            let v = std_normal_cdf(-10.0 + i as f64 * 0.005).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn pdf_reference_points() {
        assert_eq!(std_normal_pdf(0.0).unwrap(), INV_SQRT_2PI);
        assert!((INV_SQRT_2PI - 0.398_942_280_401_432_7).abs() < 1e-17);
        assert_eq!(std_normal_pdf(2.0).unwrap(), std_normal_pdf(-2.0).unwrap());
        assert!((std_normal_pdf(1.0).unwrap() - PDF_AT_1).abs() <= 1e-16);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
        assert!(std_normal_pdf(f64::NEG_INFINITY).is_err());
        assert!(mills_ratio(f64::NAN).is_err());
        assert!(truncated_sq_moment(f64::INFINITY).is_err());
    }

    #[test]
    fn mills_ratio_sandwich() {
        for &x in &[0.5, 1.0, 2.0, 5.0, 8.0, 8.5, 10.0, 20.0, 40.0] {
            let m = mills_ratio(x).unwrap();
            assert!(m <= 1.0 / x, "upper x={x}");
            assert!(m >= 1.0 / x - 1.0 / x.powi(3), "lower x={x}");
        }
        let m10 = mills_ratio(10.0).unwrap();
        assert!((0.099..=0.1).contains(&m10));
        let m40 = mills_ratio(40.0).unwrap();
        assert!(m40.is_finite() && ((m40 - 1.0 / 40.0) * 40.0).abs() < 1e-3);
    }

    #[test]
    fn mills_ratio_matches_direct_ratio_at_moderate_x() {
        let direct = std_normal_cdf(-1.0).unwrap() / std_normal_pdf(1.0).unwrap();
        assert!((mills_ratio(1.0).unwrap() - direct).abs() < 1e-15);
        // The two branches agree where they meet.
        let x = MILLS_CF_THRESHOLD;
        let cf = mills_continued_fraction(x);
        let dr = cdf_raw(-x) / pdf_raw(x);
        assert!(((cf - dr) / dr).abs() < 1e-13);
    }

    #[test]
    fn mills_ratio_rejects_non_positive() {
        assert!(mills_ratio(0.0).is_err());
        assert!(mills_ratio(-1.0).is_err());
    }

    #[test]
    fn truncated_moment_reference_points() {
        assert!((truncated_sq_moment(0.0).unwrap() - 0.5).abs() < 1e-16);
        assert!((truncated_sq_moment(2.0).unwrap() - TSM_AT_2).abs() < 1e-16);
        let t30 = truncated_sq_moment(30.0).unwrap();
        assert!((0.0..=1e-100).contains(&t30));
        assert!(((t30 - TSM_AT_30) / TSM_AT_30).abs() < 1e-12);
        assert_eq!(truncated_sq_moment(60.0).unwrap(), 0.0);
        assert!(truncated_sq_moment(-0.1).is_err());
    }

    #[test]
    fn moment_branches_agree_at_switch() {
        let a = MOMENT_CF_THRESHOLD;
        let tail = cdf_raw(-a);
        let dens = pdf_raw(a);
        let direct = [tail, dens - a * tail, (1.0 + a * a) * tail - a * dens];
        let mut r = 0.0;
        for k in (3..=MOMENT_CF_DEPTH).rev() {
            r = k as f64 / (a + r);
        }
        let r2 = 2.0 / (a + r);
        let r1 = 1.0 / (a + r2);
        let m0 = tail;
        let cf = [m0, m0 * r1, m0 * r1 * r2];
        for k in 0..3 {
            assert!(((cf[k] - direct[k]) / direct[k]).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn ln_tail_continuous_across_threshold() {
        let below = ln_upper_tail_raw(MILLS_CF_THRESHOLD - 1e-9);
        let above = ln_upper_tail_raw(MILLS_CF_THRESHOLD + 1e-9);
        assert!((below - above).abs() < 1e-7);
        // Deep tail stays finite where Phi(-x) underflows.
        let deep = ln_upper_tail_raw(60.0);
        assert!(deep.is_finite() && deep < -1800.0);
    }
}
