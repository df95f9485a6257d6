use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use boxrelax::experiments::{self, default_v_grid, LooSettings, PhaseGrid, RunOptions};
use boxrelax::output::{
    fmt_real, summaries_table, trials_table, write_json, write_table, PredictionReport, Table,
};
use boxrelax::theory::solve_delta_for_lambda;
use boxrelax::{
    predict, run_campaign, solve_box_ls, CampaignResult, Error, ExperimentConfig, ProblemInstance,
    RecordLevel, Result, SolverConfig, SystemParams,
};
use serde::Serialize;

use crate::plot::PlotKind;
use crate::{
    Cli, Command, DecodeArgs, Fig1Args, GlobalArgs, GumbelArgs, LooArgs, PhaseArgs, SimulateArgs,
    TheoryArgs, EXIT_WARNINGS,
};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_TOL: f64 = 1e-10;
const DEFAULT_ALPHAS: [f64; 5] = [0.4, 0.7, 1.0, 1.4, 2.0];

/// What a command produced.
#[derive(Debug, Default)]
pub struct CommandOutcome {
    pub exit_code: u8,
    pub artifacts_written: Vec<PathBuf>,
    pub summary_text: String,
}

impl CommandOutcome {
    fn table(&mut self, dir: &Path, name: &str, table: &Table) -> Result<()> {
        let path = dir.join(name);
        write_table(&path, table)?;
        self.artifacts_written.push(path);
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, dir: &Path, name: &str, value: &T) -> Result<()> {
        let path = dir.join(name);
        write_json(&path, value)?;
        self.artifacts_written.push(path);
        Ok(())
    }

    fn plot(&mut self, global: &GlobalArgs, kind: PlotKind) -> Result<()> {
        if global.plot_script {
            let path = global.out_dir.join(kind.file_name());
            boxrelax::output::write_atomic(&path, kind.script().as_bytes())?;
            self.artifacts_written.push(path);
        }
        Ok(())
    }

    fn warn_if(&mut self, warnings: &[String]) {
        if !warnings.is_empty() {
            self.exit_code = EXIT_WARNINGS;
            for w in warnings {
                let _ = writeln!(self.summary_text, "warning: {w}");
            }
        }
    }
}

fn run_options(global: &GlobalArgs) -> RunOptions {
    RunOptions {
        seed: global.seed.unwrap_or(DEFAULT_SEED),
        threads: global.threads.0,
        solver_tol: global.tol.unwrap_or(DEFAULT_TOL),
        record_level: RecordLevel::PerTrial,
    }
}

fn check_tol(global: &GlobalArgs) -> Result<()> {
    SolverConfig::default()
        .with_tol(global.tol.unwrap_or(DEFAULT_TOL))
        .validate()
}

pub fn run(cli: &Cli) -> Result<CommandOutcome> {
    check_tol(&cli.global)?;
    let g = &cli.global;
    match &cli.command {
        Command::Theory(args) => theory(g, args),
        Command::Decode(args) => decode(g, args),
        Command::Simulate(args) => simulate(g, args),
        Command::Fig1(args) => fig1(g, args),
        Command::Phase(args) => phase(g, args),
        Command::Gumbel(args) => gumbel(g, args),
        Command::Loo(args) => loo(g, args),
    }
}

fn theory(g: &GlobalArgs, args: &TheoryArgs) -> Result<CommandOutcome> {
    let delta = match (args.delta, args.lambda_target) {
        (Some(d), _) => d,
        (None, Some(target)) => solve_delta_for_lambda(args.p, args.sigma2, target)?,
        (None, None) => return Err(Error::Config("one of --delta or --lambda-target is required".into())),
    };
    let params = SystemParams::new(args.p, delta, args.sigma2)?;
    let report = PredictionReport {
        p: params.p,
        delta: params.delta_p,
        sigma2: params.sigma2_p,
        prediction: predict(&params)?,
    };
    let mut out = CommandOutcome {
        summary_text: serde_json::to_string_pretty(&report)?,
        ..CommandOutcome::default()
    };
    out.json(&g.out_dir, "theory.json", &report)?;
    Ok(out)
}

fn decode(g: &GlobalArgs, args: &DecodeArgs) -> Result<CommandOutcome> {
    let instance = ProblemInstance::read_json(&args.input)?;
    let mut cfg = SolverConfig::default().with_tol(g.tol.unwrap_or(DEFAULT_TOL));
    if let Some(m) = args.max_iter {
        cfg = cfg.with_max_iter(m);
    }
    cfg.validate()?;
    let sol = solve_box_ls(&instance, &cfg)?;
    let mut out = CommandOutcome {
        summary_text: format!(
            "n = {}, p = {}: {} bit errors, objective {}, kkt residual {:.3e}, {} iterations, converged: {}",
            instance.n(),
            instance.p(),
            sol.n_errors,
            fmt_real(sol.objective),
            sol.kkt_residual,
            sol.iterations,
            sol.converged
        ),
        ..CommandOutcome::default()
    };
    if !sol.converged {
        out.warn_if(&["the solver stopped before reaching the tolerance".to_string()]);
    }
    out.json(&g.out_dir, "solution.json", &sol)?;
    Ok(out)
}

#[derive(Serialize)]
struct TrialVectors<'a> {
    grid_index: usize,
    trial_index: usize,
    x_star: &'a [f64],
    beta_hat: &'a [i8],
}

fn write_campaign(out: &mut CommandOutcome, dir: &Path, prefix: &str, res: &CampaignResult) -> Result<()> {
    let level = res.config.record_level;
    if level != RecordLevel::Summary {
        out.table(dir, &format!("{prefix}trials.csv"), &trials_table(&res.records))?;
    }
    if level == RecordLevel::FullVectors {
        let vectors: Vec<TrialVectors<'_>> = res
            .records
            .iter()
            .zip(&res.details)
            .filter_map(|(r, d)| {
                Some(TrialVectors {
                    grid_index: r.grid_index,
                    trial_index: r.trial_index,
                    x_star: d.x_star.as_deref()?,
                    beta_hat: d.beta_hat.as_deref()?,
                })
            })
            .collect();
        out.json(dir, &format!("{prefix}vectors.json"), &vectors)?;
    }
    out.table(dir, &format!("{prefix}summaries.csv"), &summaries_table(&res.summaries))?;
    Ok(())
}

fn simulate(g: &GlobalArgs, args: &SimulateArgs) -> Result<CommandOutcome> {
    let mut config = ExperimentConfig::from_json_file(&args.config)?;
    if let Some(seed) = g.seed {
        config.master_seed = seed;
    }
    if let Some(tol) = g.tol {
        config.solver_tol = tol;
    }
    config.validate()?;
    let res = run_campaign(&config, g.threads.0)?;
    let mut out = CommandOutcome::default();
    for (s, pred) in res.summaries.iter().zip(&res.predictions) {
        let params = &config.grid[s.grid_index];
        let _ = writeln!(
            out.summary_text,
            "grid {}: p = {}, n = {}, sigma2 = {}: mean N_e {:.4} (lambda {:.4}), P(correct) {:.4}, TV {:.4}, {} excluded",
            s.grid_index,
            params.p,
            params.n(),
            params.sigma2_p,
            s.mean_ne,
            pred.lambda_p,
            s.p_correct_hat,
            s.tv_to_poisson,
            s.trials_excluded
        );
    }
    write_campaign(&mut out, &g.out_dir, "", &res)?;
    out.json(&g.out_dir, "summaries.json", &res.summaries)?;
    out.warn_if(&res.warnings);
    Ok(out)
}

fn fig1(g: &GlobalArgs, args: &Fig1Args) -> Result<CommandOutcome> {
    let res = experiments::fig1(&args.p, args.sigma2, args.lambda_target, args.trials, &run_options(g))?;
    let mut out = CommandOutcome::default();
    for (k, s) in res.campaign.summaries.iter().enumerate() {
        let params = &res.campaign.config.grid[k];
        let _ = writeln!(
            out.summary_text,
            "p = {}: delta = {:.6} (n = {}), lambda = {:.4}, mean N_e = {:.4}, TV to Poisson = {:.4}",
            params.p,
            res.delta_solved[k],
            params.n(),
            s.lambda_p_used,
            s.mean_ne,
            s.tv_to_poisson
        );
    }
    out.table(&g.out_dir, "fig1_pmf.csv", &res.pmf_table()?)?;
    out.table(&g.out_dir, "fig1_summary.csv", &res.summary_table())?;
    write_campaign(&mut out, &g.out_dir, "fig1_", &res.campaign)?;
    out.plot(g, PlotKind::Fig1)?;
    out.warn_if(&res.campaign.warnings);
    Ok(out)
}

fn sweep_summary(points: &[experiments::SuccessPoint]) -> String {
    let mut text = String::new();
    for pt in points {
        let _ = write!(text, "alpha = {:.4}", pt.alpha_p);
        if let Some(x) = pt.x {
            let _ = write!(text, " (x = {x})");
        }
        let _ = write!(
            text,
            ", sigma2 = {:.6}: P(correct) = {:.3} [{:.3}, {:.3}], exp(-lambda) = {:.3}",
            pt.sigma2, pt.p_correct_hat, pt.ci_lo, pt.ci_hi, pt.p_correct_poisson
        );
        if let Some(gp) = pt.gumbel_prediction {
            let _ = write!(text, ", Gumbel = {gp:.3}");
        }
        text.push('\n');
    }
    text
}

fn phase(g: &GlobalArgs, args: &PhaseArgs) -> Result<CommandOutcome> {
    let grid = if !args.sigma2.is_empty() {
        PhaseGrid::Sigma2(args.sigma2.clone())
    } else if !args.alpha.is_empty() {
        PhaseGrid::Alpha(args.alpha.clone())
    } else {
        PhaseGrid::Alpha(DEFAULT_ALPHAS.to_vec())
    };
    let res = experiments::phase(args.p, args.delta, &grid, args.trials, &run_options(g))?;
    let mut out = CommandOutcome {
        summary_text: sweep_summary(&res.points),
        ..CommandOutcome::default()
    };
    out.table(&g.out_dir, "phase.csv", &res.phase_table())?;
    write_campaign(&mut out, &g.out_dir, "phase_", &res.campaign)?;
    out.plot(g, PlotKind::Phase)?;
    out.warn_if(&res.campaign.warnings);
    Ok(out)
}

fn gumbel(g: &GlobalArgs, args: &GumbelArgs) -> Result<CommandOutcome> {
    let res = experiments::gumbel(args.p, &args.x, args.trials, &run_options(g))?;
    let mut out = CommandOutcome {
        summary_text: sweep_summary(&res.points),
        ..CommandOutcome::default()
    };
    out.table(&g.out_dir, "gumbel.csv", &res.gumbel_table())?;
    write_campaign(&mut out, &g.out_dir, "gumbel_", &res.campaign)?;
    out.plot(g, PlotKind::Gumbel)?;
    out.warn_if(&res.campaign.warnings);
    Ok(out)
}

#[derive(Serialize)]
struct LooSummary {
    p: usize,
    delta: f64,
    sigma2: f64,
    a_p_star: f64,
    f_p: f64,
    empirical_a_p: f64,
    median_abs_gap: f64,
    max_quadratic_deviation: f64,
}

fn loo(g: &GlobalArgs, args: &LooArgs) -> Result<CommandOutcome> {
    let settings = LooSettings {
        p: args.p,
        delta: args.delta,
        sigma2: args.sigma2,
        instances: args.instances,
        coords: args.coords,
        v_grid: default_v_grid(args.v_points),
    };
    let res = experiments::loo(&settings, &run_options(g))?;
    let mut gaps: Vec<f64> = res.entries.iter().map(|e| e.coord.abs_gap).collect();
    gaps.sort_by(f64::total_cmp);
    let median_abs_gap = if gaps.len() % 2 == 1 {
        gaps[gaps.len() / 2]
    } else {
        0.5 * (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2])
    };
    let summary = LooSummary {
        p: settings.p,
        delta: settings.delta,
        sigma2: settings.sigma2,
        a_p_star: res.prediction.a_p_star,
        f_p: res.prediction.f_p,
        empirical_a_p: res.empirical_a_p,
        median_abs_gap,
        max_quadratic_deviation: res.max_quadratic_deviation(),
    };
    let mut out = CommandOutcome {
        summary_text: format!(
            "{} coordinates on {} instances: median |x* - x~| = {:.4}, A_p = {:.4} vs A* = {:.4}, \
             max |g - A* v^2/2| = {:.4}",
            res.entries.len(),
            settings.instances,
            summary.median_abs_gap,
            summary.empirical_a_p,
            summary.a_p_star,
            summary.max_quadratic_deviation
        ),
        ..CommandOutcome::default()
    };
    if !settings.v_grid.is_empty() {
        out.table(&g.out_dir, "loo_g.csv", &res.g_table())?;
    }
    out.table(&g.out_dir, "loo_coords.csv", &res.coordinate_table())?;
    out.json(&g.out_dir, "loo_summary.json", &summary)?;
    out.plot(g, PlotKind::Loo)?;
    Ok(out)
}
