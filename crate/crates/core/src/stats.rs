//! Empirical summaries of error counts and their comparison with the
//! predicted Poisson law.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::theory::poisson_pmf;

/// Discrete distribution on the non-negative integers, keyed by value.
pub type Pmf = BTreeMap<u64, f64>;

/// Two-sided 95% normal quantile used for every reported interval.
pub const Z_95: f64 = 1.96;

/// Relative frequency of each observed value.
pub fn empirical_pmf(values: &[u64]) -> Result<Pmf> {
    if values.is_empty() {
        return domain("empirical_pmf needs at least one value");
    }
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    let total = values.len() as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / total)).collect())
}

fn validate_pmf(pmf: &Pmf) -> Result<()> {
    if pmf.is_empty() {
        return domain("pmf is empty");
    }
    if let Some((k, v)) = pmf.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return domain(format!("pmf mass at {k} is invalid: {v}"));
    }
    let total: f64 = pmf.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return domain(format!("pmf sums to {total}, not 1"));
    }
    Ok(())
}

/// Total variation distance `1/2 sum_k |a(k) - b(k)|` between two PMFs.
pub fn tv_distance(a: &Pmf, b: &Pmf) -> Result<f64> {
    validate_pmf(a)?;
    validate_pmf(b)?;
    let mut sum = 0.0;
    for (k, &pa) in a {
        sum += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &pb) in b {
        if !a.contains_key(k) {
            sum += pb;
        }
    }
    Ok((0.5 * sum).clamp(0.0, 1.0))
}

/// Total variation distance between `pmf` and Poisson(`lambda`).
///
/// Poisson terms are summed explicitly up to
/// `K = max(max observed, lambda + 12 sqrt(lambda) + 30)`; the mass beyond
/// `K`, where the empirical PMF is zero, contributes half its total.
pub fn tv_distance_to_poisson(pmf: &Pmf, lambda: f64) -> Result<f64> {
    validate_pmf(pmf)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return domain(format!("lambda must be finite and >= 0, got {lambda}"));
    }
    let max_observed = *pmf.keys().next_back().expect("validated non-empty");
    let k_max = max_observed.max((lambda + 12.0 * lambda.sqrt() + 30.0).ceil() as u64);
    let mut sum = 0.0;
    let mut poisson_mass = 0.0;
    for k in 0..=k_max {
        let q = poisson_pmf(lambda, k)?;
        poisson_mass += q;
        sum += (pmf.get(&k).copied().unwrap_or(0.0) - q).abs();
    }
    let tail = (1.0 - poisson_mass).max(0.0);
    Ok((0.5 * (sum + tail)).clamp(0.0, 1.0))
}

/// Binomial(`p`, `q`) PMF over `0..=p`, evaluated in log space.
pub fn binomial_reference_pmf(p: u64, q: f64) -> Result<Pmf> {
    if !(0.0..=1.0).contains(&q) {
        return domain(format!("q must lie in [0, 1], got {q}"));
    }
    if q == 0.0 {
        return Ok(BTreeMap::from([(0, 1.0)]));
    }
    if q == 1.0 {
        return Ok(BTreeMap::from([(p, 1.0)]));
    }
    // Log-probabilities relative to the mode, accumulated from the ratio
    // pmf(k + 1) / pmf(k) = (p - k) / (k + 1) * q / (1 - q), then normalised.
    // This avoids the absolute error of lgamma at large arguments.
    let log_odds = q.ln() - (-q).ln_1p();
    let mode = (((p + 1) as f64) * q).floor().min(p as f64) as u64;
    let mut logs = vec![0.0; p as usize + 1];
    for k in mode..p {
        let i = k as usize;
        logs[i + 1] = logs[i] + ((p - k) as f64).ln() - ((k + 1) as f64).ln() + log_odds;
    }
    for k in (1..=mode).rev() {
        let i = k as usize;
        logs[i - 1] = logs[i] - ((p - k + 1) as f64).ln() + (k as f64).ln() - log_odds;
    }
    let total: f64 = logs.iter().map(|l| l.exp()).sum();
    Ok(logs
        .iter()
        .enumerate()
        .map(|(k, l)| (k as u64, l.exp() / total))
        .collect())
}

/// Point estimate and Wilson score interval for a proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Result<ProportionEstimate> {
    if trials == 0 {
        return domain("wilson_interval needs at least one trial");
    }
    if successes > trials {
        return domain(format!("{successes} successes exceed {trials} trials"));
    }
    let n = trials as f64;
    let p_hat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p_hat + z2 / (2.0 * n)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(ProportionEstimate {
        p_hat,
        ci_lo: (centre - half).clamp(0.0, p_hat),
        ci_hi: (centre + half).clamp(p_hat, 1.0),
    })
}

/// Fraction of error-free trials with its 95% Wilson interval.
pub fn success_probability(ne_values: &[u64]) -> Result<ProportionEstimate> {
    if ne_values.is_empty() {
        return domain("success_probability needs at least one trial");
    }
    let zeros = ne_values.iter().filter(|&&v| v == 0).count() as u64;
    wilson_interval(zeros, ne_values.len() as u64, Z_95)
}

/// Mean Pearson correlation over all pairs of columns of a trials-by-coordinates
/// boolean matrix. Constant columns have no defined correlation and are skipped.
pub fn pairwise_error_correlation(rows: &[Vec<bool>]) -> Result<f64> {
    if rows.len() < 30 {
        return domain(format!("need at least 30 trials, got {}", rows.len()));
    }
    let m = rows[0].len();
    if m < 2 {
        return domain("need at least two coordinates");
    }
    if rows.iter().any(|r| r.len() != m) {
        return domain("rows have unequal lengths");
    }
    let t = rows.len() as f64;
    let means: Vec<f64> = (0..m)
        .map(|j| rows.iter().filter(|r| r[j]).count() as f64 / t)
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for j in 0..m {
        for k in j + 1..m {
            let (mj, mk) = (means[j], means[k]);
            let (vj, vk) = (mj * (1.0 - mj), mk * (1.0 - mk));
            if vj == 0.0 || vk == 0.0 {
                continue;
            }
            let both = rows.iter().filter(|r| r[j] && r[k]).count() as f64 / t;
            total += (both - mj * mk) / (vj * vk).sqrt();
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Undefined(
            "every coordinate pair has a constant column".into(),
        ));
    }
    Ok(total / pairs as f64)
}

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and
/// `N(0, sd^2)`.
pub fn ks_distance_to_normal(samples: &[f64], sd: f64) -> Result<f64> {
    if samples.is_empty() {
        return domain("ks_distance_to_normal needs samples");
    }
    if !(sd.is_finite() && sd > 0.0) {
        return domain(format!("sd must be positive, got {sd}"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return domain("samples must be finite");
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in sorted.iter().enumerate() {
        let c = crate::gaussian::std_normal_cdf(v / sd)?;
        d = d.max(c - i as f64 / n).max((i + 1) as f64 / n - c);
    }
    Ok(d)
}

/// Summary of one grid point's error counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub grid_index: usize,
    pub trials_used: usize,
    pub trials_excluded: usize,
    pub pmf: Pmf,
    pub mean_ne: f64,
    pub ber_mean: f64,
    pub p_correct_hat: f64,
    pub p_correct_ci: (f64, f64),
    pub tv_to_poisson: f64,
    pub lambda_p_used: f64,
    /// `None` when too few trials or only constant error columns were seen.
    pub pairwise_error_corr: Option<f64>,
}

impl EmpiricalSummary {
    /// Builds the summary from the error counts of the converged trials and,
    /// optionally, a trials-by-coordinates error-indicator matrix.
    pub fn from_counts(
        grid_index: usize,
        ne_values: &[u64],
        excluded: usize,
        p: usize,
        lambda: f64,
        error_indicators: Option<&[Vec<bool>]>,
    ) -> Result<Self> {
        let pmf = empirical_pmf(ne_values)?;
        let mean_ne = ne_values.iter().sum::<u64>() as f64 / ne_values.len() as f64;
        let success = success_probability(ne_values)?;
        let pairwise_error_corr = match error_indicators {
            Some(rows) if rows.len() >= 30 => match pairwise_error_correlation(rows) {
                Ok(c) => Some(c),
                Err(Error::Undefined(_)) => None,
                Err(e) => return Err(e),
            },
            _ => None,
        };
        Ok(Self {
            grid_index,
            trials_used: ne_values.len(),
            trials_excluded: excluded,
            tv_to_poisson: tv_distance_to_poisson(&pmf, lambda)?,
            pmf,
            mean_ne,
            ber_mean: mean_ne / p as f64,
            p_correct_hat: success.p_hat,
            p_correct_ci: (success.ci_lo, success.ci_hi),
            lambda_p_used: lambda,
            pairwise_error_corr,
        })
    }
}
