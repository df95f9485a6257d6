//! Seeded trial campaigns over grids of operating points.
//!
//! Every trial draws its instance from its own ChaCha8 stream keyed by
//! `(master_seed, grid_index, trial_index)`, so a campaign's output depends
//! only on its configuration. Trials run on a rayon pool and are collected
//! in `(grid_index, trial_index)` order.
//!
//! Instances are drawn in a fixed order: the entries of `A` row by row
//! (each `N(0, 1/p)`), then `beta` (random-sign mode only), then `w`.

pub mod loo;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{noise_dot_residual, solve_box_ls_detailed, ProblemInstance, SolverConfig};
use crate::error::{domain, Error, Result};
use crate::linalg::{norm_sq, DenseMatrix};
use crate::rng::{SeedTrace, TrialRng};
use crate::stats::EmpiricalSummary;
use crate::theory::{predict, SystemParams, TheoryPrediction};

/// Number of leading coordinates whose error indicators are kept for the
/// pairwise-correlation estimate.
pub const CORRELATION_COORDS: usize = 50;

/// Fraction of excluded (unconverged) trials above which a grid point is
/// flagged.
pub const EXCLUSION_WARNING_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordLevel {
    /// Only per-grid summaries are written.
    Summary,
    /// Summaries plus one CSV row per trial.
    #[default]
    PerTrial,
    /// As `PerTrial`, plus each trial's relaxed solution and sign estimate.
    FullVectors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    #[default]
    AllMinusOne,
    RandomSigns,
}

fn default_tol() -> f64 {
    1e-10
}

/// A campaign: `trials` independent instances at each grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: Vec<SystemParams>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    /// `None` means the solver default of `50 p`.
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub record_level: RecordLevel,
    #[serde(default)]
    pub beta_mode: BetaMode,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("grid must contain at least one point".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.trials > u32::MAX as usize || self.grid.len() > u32::MAX as usize {
            return Err(Error::Config("grid or trial count exceeds 2^32".into()));
        }
        for (g, params) in self.grid.iter().enumerate() {
            params
                .validate()
                .map_err(|e| Error::Config(format!("grid point {g}: {e}")))?;
            if params.p < 2 {
                return Err(Error::Config(format!("grid point {g}: p must be at least 2")));
            }
            if params.n() == 0 {
                return Err(Error::Config(format!("grid point {g}: round(delta p) is 0")));
            }
        }
        self.solver_config().validate()
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.solver_tol,
            max_iter: self.max_iter,
            ..SolverConfig::default()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

/// Draws one instance from the stream identified by `trace`.
pub fn generate_instance(
    params: &SystemParams,
    beta_mode: BetaMode,
    trace: SeedTrace,
) -> Result<ProblemInstance> {
    params.validate()?;
    let (n, p) = (params.n(), params.p);
    if n == 0 {
        return domain("round(delta p) must be at least 1");
    }
    let mut rng = TrialRng::new(trace);
    let mut a = vec![0.0; n * p];
    rng.fill_gaussian(&mut a, 1.0 / (p as f64).sqrt());
    let beta = match beta_mode {
        BetaMode::AllMinusOne => vec![-1.0; p],
        BetaMode::RandomSigns => (0..p).map(|_| rng.sign()).collect(),
    };
    let mut w = vec![0.0; n];
    rng.fill_gaussian(&mut w, params.sigma2_p.sqrt());
    ProblemInstance::new(
        DenseMatrix::from_row_major(n, p, a)?,
        beta,
        w,
        params.sigma2_p,
        Some(trace),
    )
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_index: usize,
    pub trial_index: usize,
    pub p: usize,
    pub n: usize,
    /// Realised sampling ratio `n / p`.
    pub delta: f64,
    pub sigma2: f64,
    pub n_errors: usize,
    pub ber: f64,
    pub converged: bool,
    pub kkt_residual: f64,
    pub objective_per_p: f64,
    pub u_norm_over_sqrt_p: f64,
    /// `w^T (y - A x*)`.
    pub noise_dot_residual: f64,
    /// Coordinates of `x*` within `1e-8` of zero.
    pub near_ties: usize,
}

/// Per-trial data beyond the scalar record, kept in memory only.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDetail {
    /// Error indicators of the first `CORRELATION_COORDS` coordinates.
    pub error_indicators: Vec<bool>,
    /// Present at `RecordLevel::FullVectors`.
    pub x_star: Option<Vec<f64>>,
    pub beta_hat: Option<Vec<i8>>,
}

/// Runs one trial: generate, solve, record.
pub fn run_trial(
    config: &ExperimentConfig,
    grid_index: usize,
    trial_index: usize,
) -> Result<(TrialRecord, TrialDetail)> {
    let params = config
        .grid
        .get(grid_index)
        .ok_or_else(|| Error::Config(format!("grid index {grid_index} out of range")))?;
    let trace = SeedTrace::new(config.master_seed, grid_index as u32, trial_index as u32);
    let instance = generate_instance(params, config.beta_mode, trace)?;
    let (sol, out) = solve_box_ls_detailed(&instance, &config.solver_config())?;
    let (n, p) = (instance.n(), instance.p());
    if sol.near_ties > 0 {
        log::warn!(
            "grid {grid_index} trial {trial_index}: {} near-tie coordinates",
            sol.near_ties
        );
    }
    let record = TrialRecord {
        grid_index,
        trial_index,
        p,
        n,
        delta: n as f64 / p as f64,
        sigma2: params.sigma2_p,
        n_errors: sol.n_errors,
        ber: sol.n_errors as f64 / p as f64,
        converged: sol.converged,
        kkt_residual: sol.kkt_residual,
        objective_per_p: sol.objective / p as f64,
        u_norm_over_sqrt_p: (norm_sq(&out.residual) / p as f64).sqrt(),
        noise_dot_residual: noise_dot_residual(instance.noise(), &out.residual),
        near_ties: sol.near_ties,
    };
    let error_indicators = sol
        .beta_hat
        .iter()
        .zip(instance.beta())
        .take(CORRELATION_COORDS)
        .map(|(&b, &t)| f64::from(b) != t)
        .collect();
    let full = config.record_level == RecordLevel::FullVectors;
    let detail = TrialDetail {
        error_indicators,
        x_star: full.then(|| sol.x_star.clone()),
        beta_hat: full.then_some(sol.beta_hat),
    };
    Ok((record, detail))
}

/// Results of a campaign, ordered by `(grid_index, trial_index)`.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub details: Vec<TrialDetail>,
    /// Predictions at each grid point's realised `delta = n / p`.
    pub predictions: Vec<TheoryPrediction>,
    pub summaries: Vec<EmpiricalSummary>,
    /// Grid points whose exclusion rate exceeded the warning threshold.
    pub warnings: Vec<String>,
}

impl CampaignResult {
    pub fn records_for(&self, grid_index: usize) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.grid_index == grid_index)
    }

    pub fn has_warnings(&self) -> bool {
        !self.warnings.is_empty()
    }
}

/// Theory at the realised sampling ratio of a grid point.
pub fn realized_prediction(params: &SystemParams) -> Result<TheoryPrediction> {
    let realized = SystemParams::new(params.p, params.n() as f64 / params.p as f64, params.sigma2_p)?;
    predict(&realized)
}

fn build_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))
}

/// Runs every trial of `config` on `threads` workers (`None`: one per core).
pub fn run_campaign(config: &ExperimentConfig, threads: Option<usize>) -> Result<CampaignResult> {
    config.validate()?;
    let predictions = config
        .grid
        .iter()
        .map(realized_prediction)
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..config.grid.len())
        .flat_map(|g| (0..config.trials).map(move |t| (g, t)))
        .collect();
    let pool = build_pool(threads)?;
    let results: Vec<(TrialRecord, TrialDetail)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(g, t)| run_trial(config, g, t))
            .collect::<Result<Vec<_>>>()
    })?;
    let (records, details): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let mut summaries = Vec::with_capacity(config.grid.len());
    let mut warnings = Vec::new();
    for (g, params) in config.grid.iter().enumerate() {
        let range = g * config.trials..(g + 1) * config.trials;
        let mut ne = Vec::with_capacity(config.trials);
        let mut indicators = Vec::with_capacity(config.trials);
        for (rec, det) in records[range.clone()].iter().zip(&details[range]) {
            if rec.converged {
                ne.push(rec.n_errors as u64);
                indicators.push(det.error_indicators.clone());
            }
        }
        let excluded = config.trials - ne.len();
        if excluded as f64 > EXCLUSION_WARNING_FRACTION * config.trials as f64 {
            let msg = format!(
                "grid point {g}: {excluded} of {} trials did not converge and were excluded",
                config.trials
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        if ne.is_empty() {
            return Err(Error::NotConverged(format!(
                "grid point {g}: no trial converged"
            )));
        }
        summaries.push(EmpiricalSummary::from_counts(
            g,
            &ne,
            excluded,
            params.p,
            predictions[g].lambda_p,
            Some(&indicators),
        )?);
        log::info!(
            "grid point {g} done: mean N_e {:.4}, lambda {:.4}",
            summaries[g].mean_ne,
            predictions[g].lambda_p
        );
    }
    Ok(CampaignResult {
        config: config.clone(),
        records,
        details,
        predictions,
        summaries,
        warnings,
    })
}

/// Mean of `w^T (y - A x*) / (sigma^2 p)` over converged records.
pub fn empirical_a_p(records: &[TrialRecord], sigma2: f64, p: usize) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return domain(format!("sigma2 must be positive, got {sigma2}"));
    }
    if p == 0 {
        return domain("p must be positive");
    }
    let used: Vec<f64> = records
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.noise_dot_residual)
        .collect();
    if used.is_empty() {
        return domain("empirical_a_p needs at least one converged record");
    }
    Ok(used.iter().sum::<f64>() / (used.len() as f64 * sigma2 * p as f64))
}
