//! Drivers for the standard experiments: the error-count distribution at a
//! fixed Poisson rate, the exact-recovery phase transition, the Gumbel
//! window around it, and the leave-one-out comparisons.
//!
//! Each driver returns structured results plus ready-to-write tables; the
//! command-line front end only adds file handling.

use rayon::prelude::*;
use serde::Serialize;

use crate::decoder::{estimate_lipschitz, BoxLeastSquares, DecoderSolution, SolverConfig};
use crate::error::{Error, Result};
use crate::montecarlo::loo::{loo_diagnostics, LooCoordinate};
use crate::montecarlo::{
    empirical_a_p, generate_instance, realized_prediction, run_campaign, BetaMode, CampaignResult,
    ExperimentConfig, RecordLevel, TrialRecord,
};
use crate::output::{fmt_real, Table};
use crate::rng::SeedTrace;
use crate::theory::{
    alpha_p_of_x, gumbel_p_correct, poisson_pmf, sigma2_for_alpha, solve_delta_for_lambda,
    SystemParams, TheoryPrediction,
};

/// Settings shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    /// Worker threads; `None` uses one per core.
    pub threads: Option<usize>,
    pub solver_tol: f64,
    pub record_level: RecordLevel,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: None,
            solver_tol: 1e-10,
            record_level: RecordLevel::PerTrial,
        }
    }
}

impl RunOptions {
    fn campaign(&self, grid: Vec<SystemParams>, trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            grid,
            trials,
            master_seed: self.seed,
            solver_tol: self.solver_tol,
            max_iter: None,
            record_level: self.record_level,
            beta_mode: BetaMode::AllMinusOne,
        }
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig::default().with_tol(self.solver_tol)
    }
}

/// Error-count distribution at the sampling ratio that targets a Poisson rate.
#[derive(Debug, Clone)]
pub struct Fig1Result {
    /// Sampling ratios solved for each `p`, before rounding `n`.
    pub delta_solved: Vec<f64>,
    pub campaign: CampaignResult,
}

impl Fig1Result {
    /// Rows `(p, delta, lambda_p, k, empirical, poisson)` for `k` up to the
    /// larger of the largest observed count and `lambda + 6 sqrt(lambda) + 5`.
    pub fn pmf_table(&self) -> Result<Table> {
        let mut t = Table::new(&["p", "delta", "lambda_p", "k", "empirical_pmf", "poisson_pmf"]);
        for (g, s) in self.campaign.summaries.iter().enumerate() {
            let params = &self.campaign.config.grid[g];
            let lambda = s.lambda_p_used;
            let observed = s.pmf.keys().next_back().copied().unwrap_or(0);
            let k_max = observed.max((lambda + 6.0 * lambda.sqrt() + 5.0).ceil() as u64);
            for k in 0..=k_max {
                t.push(vec![
                    params.p.to_string(),
                    fmt_real(params.n() as f64 / params.p as f64),
                    fmt_real(lambda),
                    k.to_string(),
                    fmt_real(s.pmf.get(&k).copied().unwrap_or(0.0)),
                    fmt_real(poisson_pmf(lambda, k)?),
                ]);
            }
        }
        Ok(t)
    }

    /// One row per `p` with the distances of interest.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&[
            "p", "n", "delta", "lambda_p", "trials_used", "mean_ne", "tv_to_poisson",
        ]);
        for (g, s) in self.campaign.summaries.iter().enumerate() {
            let params = &self.campaign.config.grid[g];
            t.push(vec![
                params.p.to_string(),
                params.n().to_string(),
                fmt_real(params.n() as f64 / params.p as f64),
                fmt_real(s.lambda_p_used),
                s.trials_used.to_string(),
                fmt_real(s.mean_ne),
                fmt_real(s.tv_to_poisson),
            ]);
        }
        t
    }
}

/// For each `p`, solves for the sampling ratio giving rate `lambda_target`
/// at noise `sigma2` and runs `trials` decodings.
pub fn fig1(
    p_list: &[usize],
    sigma2: f64,
    lambda_target: f64,
    trials: usize,
    opts: &RunOptions,
) -> Result<Fig1Result> {
    if p_list.is_empty() {
        return Err(Error::Config("at least one p is required".into()));
    }
    let mut delta_solved = Vec::with_capacity(p_list.len());
    let mut grid = Vec::with_capacity(p_list.len());
    for &p in p_list {
        let delta = solve_delta_for_lambda(p, sigma2, lambda_target)?;
        delta_solved.push(delta);
        grid.push(SystemParams::new(p, delta, sigma2)?);
    }
    let campaign = run_campaign(&opts.campaign(grid, trials), opts.threads)?;
    Ok(Fig1Result {
        delta_solved,
        campaign,
    })
}

/// One point of a success-probability sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessPoint {
    /// Window coordinate `x`, for Gumbel sweeps only.
    pub x: Option<f64>,
    pub alpha_p: f64,
    pub sigma2: f64,
    pub p_correct_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `exp(-lambda_p)` at the realised sampling ratio.
    pub p_correct_poisson: f64,
    /// `exp(-exp(-x))`, for Gumbel sweeps only.
    pub gumbel_prediction: Option<f64>,
    pub mean_ne: f64,
    pub lambda_p: f64,
    pub trials_used: usize,
}

/// Result of a phase or Gumbel sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SuccessPoint>,
    pub campaign: CampaignResult,
}

impl SweepResult {
    pub fn phase_table(&self) -> Table {
        let mut t = Table::new(&[
            "alpha_p",
            "sigma2",
            "p_correct_hat",
            "ci_lo",
            "ci_hi",
            "p_correct_poisson_prediction",
            "mean_ne",
            "lambda_p",
        ]);
        for pt in &self.points {
            t.push(vec![
                fmt_real(pt.alpha_p),
                fmt_real(pt.sigma2),
                fmt_real(pt.p_correct_hat),
                fmt_real(pt.ci_lo),
                fmt_real(pt.ci_hi),
                fmt_real(pt.p_correct_poisson),
                fmt_real(pt.mean_ne),
                fmt_real(pt.lambda_p),
            ]);
        }
        t
    }

    pub fn gumbel_table(&self) -> Table {
        let mut t = Table::new(&[
            "x",
            "alpha_p",
            "sigma2",
            "p_correct_hat",
            "ci_lo",
            "ci_hi",
            "gumbel_prediction",
            "poisson_prediction",
        ]);
        for pt in &self.points {
            t.push(vec![
                fmt_real(pt.x.unwrap_or(f64::NAN)),
                fmt_real(pt.alpha_p),
                fmt_real(pt.sigma2),
                fmt_real(pt.p_correct_hat),
                fmt_real(pt.ci_lo),
                fmt_real(pt.ci_hi),
                fmt_real(pt.gumbel_prediction.unwrap_or(f64::NAN)),
                fmt_real(pt.p_correct_poisson),
            ]);
        }
        t
    }
}

fn sweep(
    p: usize,
    delta: f64,
    sigma2s: Vec<f64>,
    xs: Option<&[f64]>,
    trials: usize,
    opts: &RunOptions,
) -> Result<SweepResult> {
    let grid = sigma2s
        .iter()
        .map(|&s| SystemParams::new(p, delta, s))
        .collect::<Result<Vec<_>>>()?;
    let campaign = run_campaign(&opts.campaign(grid, trials), opts.threads)?;
    let mut points = Vec::with_capacity(sigma2s.len());
    for (g, s) in campaign.summaries.iter().enumerate() {
        let pred = &campaign.predictions[g];
        let x = xs.map(|xs| xs[g]);
        points.push(SuccessPoint {
            x,
            alpha_p: pred.alpha_p,
            sigma2: sigma2s[g],
            p_correct_hat: s.p_correct_hat,
            ci_lo: s.p_correct_ci.0,
            ci_hi: s.p_correct_ci.1,
            p_correct_poisson: pred.p_correct_poisson,
            gumbel_prediction: x.map(gumbel_p_correct).transpose()?,
            mean_ne: s.mean_ne,
            lambda_p: pred.lambda_p,
            trials_used: s.trials_used,
        });
    }
    Ok(SweepResult { points, campaign })
}

/// How the noise levels of a phase sweep are specified.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseGrid {
    /// Phase coordinates; noise follows from `alpha = (delta - 1/2) / (2 sigma^2 ln p)`.
    Alpha(Vec<f64>),
    Sigma2(Vec<f64>),
}

/// Exact-recovery probability across a grid of noise levels at fixed `delta`.
pub fn phase(p: usize, delta: f64, grid: &PhaseGrid, trials: usize, opts: &RunOptions) -> Result<SweepResult> {
    let sigma2s = match grid {
        PhaseGrid::Alpha(alphas) => alphas
            .iter()
            .map(|&a| sigma2_for_alpha(p, delta, a))
            .collect::<Result<Vec<_>>>()?,
        PhaseGrid::Sigma2(s) => s.clone(),
    };
    if sigma2s.is_empty() {
        return Err(Error::Config("the phase grid is empty".into()));
    }
    sweep(p, delta, sigma2s, None, trials, opts)
}

/// Sampling ratio used by the Gumbel sweep.
pub const GUMBEL_DELTA: f64 = 1.0;

/// Noise level placing `p` at window coordinate `x` (with `delta = 1`).
pub fn gumbel_sigma2(p: usize, x: f64) -> Result<f64> {
    let alpha = alpha_p_of_x(p, x)?;
    if alpha <= 0.0 {
        return Err(Error::Config(format!(
            "x = {x} gives a non-positive phase coordinate {alpha} at p = {p}"
        )));
    }
    sigma2_for_alpha(p, GUMBEL_DELTA, alpha)
}

/// Exact-recovery probability across the Gumbel window.
pub fn gumbel(p: usize, xs: &[f64], trials: usize, opts: &RunOptions) -> Result<SweepResult> {
    if xs.is_empty() {
        return Err(Error::Config("the x grid is empty".into()));
    }
    let sigma2s = xs
        .iter()
        .map(|&x| gumbel_sigma2(p, x))
        .collect::<Result<Vec<_>>>()?;
    sweep(p, GUMBEL_DELTA, sigma2s, Some(xs), trials, opts)
}

/// Leave-one-out study settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LooSettings {
    pub p: usize,
    pub delta: f64,
    pub sigma2: f64,
    pub instances: usize,
    /// Coordinates sampled per instance, evenly spaced over `0..p`.
    pub coords: usize,
    /// Grid for `g`; empty skips the curves.
    pub v_grid: Vec<f64>,
}

/// Evenly spaced `v` values covering `[-2, 2]`.
pub fn default_v_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|k| -2.0 + 4.0 * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// One sampled coordinate of one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LooEntry {
    pub instance: usize,
    #[serde(flatten)]
    pub coord: LooCoordinate,
}

#[derive(Debug, Clone)]
pub struct LooResult {
    pub settings: LooSettings,
    pub prediction: TheoryPrediction,
    pub records: Vec<TrialRecord>,
    pub entries: Vec<LooEntry>,
    /// Mean of `w^T (y - A x*) / (sigma^2 p)` over the instances.
    pub empirical_a_p: f64,
}

impl LooResult {
    pub fn g_table(&self) -> Table {
        let mut t = Table::new(&["instance", "i", "v", "g_value", "quad_value"]);
        let a = self.prediction.a_p_star;
        for e in &self.entries {
            for (v, g) in self.settings.v_grid.iter().zip(&e.coord.g_values) {
                t.push(vec![
                    e.instance.to_string(),
                    e.coord.index.to_string(),
                    fmt_real(*v),
                    fmt_real(*g),
                    fmt_real(0.5 * a * v * v),
                ]);
            }
        }
        t
    }

    pub fn coordinate_table(&self) -> Table {
        let mut t = Table::new(&[
            "instance",
            "i",
            "x_star_i",
            "x_tilde_i",
            "abs_gap",
            "a_dot_u_loo",
            "a_dot_u_full",
        ]);
        for e in &self.entries {
            let c = &e.coord;
            t.push(vec![
                e.instance.to_string(),
                c.index.to_string(),
                fmt_real(c.x_star_i),
                fmt_real(c.x_tilde_i),
                fmt_real(c.abs_gap),
                fmt_real(c.a_dot_u_loo),
                fmt_real(c.a_dot_u_full),
            ]);
        }
        t
    }

    /// Largest `|g(v) - A* v^2 / 2|` over all sampled curves.
    pub fn max_quadratic_deviation(&self) -> f64 {
        let a = self.prediction.a_p_star;
        self.entries
            .iter()
            .flat_map(|e| {
                self.settings
                    .v_grid
                    .iter()
                    .zip(&e.coord.g_values)
                    .map(move |(v, g)| (g - 0.5 * a * v * v).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Full solve of one instance, with the curvature bound reused downstream.
struct FullSolve {
    instance: crate::decoder::ProblemInstance,
    solution: DecoderSolution,
    dual: Vec<f64>,
    lipschitz: f64,
}

/// Solves `instances` seeded problems and runs the leave-one-out analysis at
/// `coords` evenly spaced coordinates of each.
pub fn loo(settings: &LooSettings, opts: &RunOptions) -> Result<LooResult> {
    let params = SystemParams::new(settings.p, settings.delta, settings.sigma2)?;
    if settings.instances == 0 {
        return Err(Error::Config("at least one instance is required".into()));
    }
    if settings.coords == 0 || settings.coords > settings.p {
        return Err(Error::Config(format!(
            "coords must lie in 1..={}, got {}",
            settings.p, settings.coords
        )));
    }
    if let Some(v) = settings.v_grid.iter().find(|v| !(-2.0..=2.0).contains(*v)) {
        return Err(Error::Config(format!("v values must lie in [-2, 2], got {v}")));
    }
    let prediction = realized_prediction(&params)?;
    let cfg = opts.solver();
    let coords: Vec<usize> = (0..settings.coords)
        .map(|k| k * settings.p / settings.coords)
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;

    let solves: Vec<FullSolve> = pool.install(|| {
        (0..settings.instances)
            .into_par_iter()
            .map(|t| {
                let trace = SeedTrace::new(opts.seed, 0, t as u32);
                let instance = generate_instance(&params, BetaMode::AllMinusOne, trace)?;
                let lipschitz = estimate_lipschitz(instance.a(), cfg.lanczos_steps);
                let out = BoxLeastSquares::with_lipschitz(instance.a(), instance.y(), lipschitz)?
                    .solve(&cfg, None)?;
                let solution = DecoderSolution::from_outcome(&instance, out);
                let dual = solution.dual_residual(&instance)?;
                Ok(FullSolve {
                    instance,
                    solution,
                    dual,
                    lipschitz,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let jobs: Vec<(usize, usize)> = (0..settings.instances)
        .flat_map(|t| coords.iter().map(move |&i| (t, i)))
        .collect();
    let entries: Vec<LooEntry> = pool.install(|| {
        jobs.par_iter()
            .map(|&(t, i)| {
                let s = &solves[t];
                let mut out = loo_diagnostics(
                    &s.instance,
                    &s.solution.x_star,
                    &s.dual,
                    &[i],
                    prediction.a_p_star,
                    &settings.v_grid,
                    &cfg,
                    Some(s.lipschitz),
                )?;
                Ok(LooEntry {
                    instance: t,
                    coord: out.remove(0),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let records: Vec<TrialRecord> = solves
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let (n, p) = (s.instance.n(), s.instance.p());
            let w_dot: f64 = -crate::linalg::dot(s.instance.noise(), &s.dual);
            TrialRecord {
                grid_index: 0,
                trial_index: t,
                p,
                n,
                delta: n as f64 / p as f64,
                sigma2: settings.sigma2,
                n_errors: s.solution.n_errors,
                ber: s.solution.n_errors as f64 / p as f64,
                converged: s.solution.converged,
                kkt_residual: s.solution.kkt_residual,
                objective_per_p: s.solution.objective / p as f64,
                u_norm_over_sqrt_p: (crate::linalg::norm_sq(&s.dual) / p as f64).sqrt(),
                noise_dot_residual: w_dot,
                near_ties: s.solution.near_ties,
            }
        })
        .collect();
    let empirical_a_p = empirical_a_p(&records, settings.sigma2, settings.p)?;
    Ok(LooResult {
        settings: settings.clone(),
        prediction,
        records,
        entries,
        empirical_a_p,
    })
}
