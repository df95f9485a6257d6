//! Leave-one-out diagnostics.
//!
//! Removing coordinate `i` gives the reduced system
//! `y_{\i} = A_{\i} beta_{\i} + w = y - a_i beta_i`. Its box-LS solution
//! `x_{\i}` yields the leave-one-out dual `u_{\i} = A_{\i} x_{\i} - y_{\i}`,
//! which is independent of the column `a_i`. From it:
//!
//! * the surrogate `x~_i = clip(beta_i - a_i^T u_{\i} / A*, -1, 1)`
//!   approximates the true coordinate `x*_i`;
//! * `g(v) = Q(v) - Q(0) - (a_i^T u_{\i}) v`, with
//!   `Q(v) = min_x 1/2 ||A_{\i} x - (y_{\i} - a_i v)||^2`, is convex with
//!   `g(0) = 0` and approaches `A* v^2 / 2`.

use serde::{Deserialize, Serialize};

use crate::decoder::{BoxLeastSquares, ProblemInstance, SolverConfig};
use crate::error::{domain, Error, Result};
use crate::linalg::{dot, DenseMatrix};

/// The system with one column removed, together with the removed column.
#[derive(Debug, Clone)]
pub struct LeaveOneOut {
    pub index: usize,
    pub reduced: DenseMatrix,
    pub y_reduced: Vec<f64>,
    pub column: Vec<f64>,
    pub beta_i: f64,
}

impl LeaveOneOut {
    pub fn new(instance: &ProblemInstance, i: usize) -> Result<Self> {
        if i >= instance.p() {
            return domain(format!("coordinate {i} out of range for p = {}", instance.p()));
        }
        let column = instance.a().column(i);
        let beta_i = instance.beta()[i];
        let y_reduced = instance
            .y()
            .iter()
            .zip(&column)
            .map(|(y, a)| y - a * beta_i)
            .collect();
        Ok(Self {
            index: i,
            reduced: instance.a().without_column(i)?,
            y_reduced,
            column,
            beta_i,
        })
    }
}

/// Converged solution of a reduced problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSolution {
    pub x: Vec<f64>,
    /// `A_{\i} x - y_{\i}`.
    pub dual: Vec<f64>,
    pub objective: f64,
}

fn solve_reduced(
    reduced: &DenseMatrix,
    target: &[f64],
    cfg: &SolverConfig,
    lipschitz: Option<f64>,
    start: Option<&[f64]>,
) -> Result<ReducedSolution> {
    let problem = match lipschitz {
        Some(l) => BoxLeastSquares::with_lipschitz(reduced, target, l)?,
        None => BoxLeastSquares::new(reduced, target, cfg)?,
    };
    let out = problem.solve(cfg, start)?;
    if !out.converged {
        return Err(Error::NotConverged(format!(
            "reduced problem: kkt residual {:e} after {} iterations",
            out.kkt_residual, out.iterations
        )));
    }
    Ok(ReducedSolution {
        x: out.x,
        dual: out.residual,
        objective: out.objective,
    })
}

/// Solves the reduced problem `min 1/2 ||A_{\i} x - y_{\i}||^2` over the box
/// and returns its solution and dual `u_{\i}`. Only the reduced system is
/// seen here, so the result cannot depend on the removed column.
///
/// `lipschitz` may carry the full matrix's curvature bound, which also
/// bounds every column-deleted submatrix.
pub fn leave_one_out_dual(
    reduced: &DenseMatrix,
    y_reduced: &[f64],
    cfg: &SolverConfig,
    lipschitz: Option<f64>,
) -> Result<ReducedSolution> {
    solve_reduced(reduced, y_reduced, cfg, lipschitz, None)
}

/// `clip(beta_i - a_dot_u / a_p_star, -1, 1)`.
pub fn surrogate_x(beta_i: f64, a_dot_u: f64, a_p_star: f64) -> Result<f64> {
    if !(a_p_star.is_finite() && a_p_star > 0.0) {
        return domain(format!("a_p_star must be positive, got {a_p_star}"));
    }
    if !a_dot_u.is_finite() {
        return domain("a_i^T u must be finite");
    }
    Ok((beta_i - a_dot_u / a_p_star).clamp(-1.0, 1.0))
}

/// Evaluates `g` on `v_grid` (each value in `[-2, 2]`). The reduced solves
/// are warm-started along the grid in order of increasing `|v|`.
pub fn g_curve(
    loo: &LeaveOneOut,
    base: &ReducedSolution,
    v_grid: &[f64],
    cfg: &SolverConfig,
    lipschitz: Option<f64>,
) -> Result<Vec<f64>> {
    if let Some(v) = v_grid.iter().find(|v| !(-2.0..=2.0).contains(*v)) {
        return domain(format!("g_curve grid values must lie in [-2, 2], got {v}"));
    }
    let slope = dot(&loo.column, &base.dual);
    let mut order: Vec<usize> = (0..v_grid.len()).collect();
    order.sort_by(|&a, &b| v_grid[a].abs().total_cmp(&v_grid[b].abs()).then(a.cmp(&b)));

    let mut values = vec![0.0; v_grid.len()];
    let mut last_pos: Option<Vec<f64>> = None;
    let mut last_neg: Option<Vec<f64>> = None;
    let mut target = vec![0.0; loo.y_reduced.len()];
    for k in order {
        let v = v_grid[k];
        if v == 0.0 {
            values[k] = 0.0;
            continue;
        }
        for ((t, y), a) in target.iter_mut().zip(&loo.y_reduced).zip(&loo.column) {
            *t = y - a * v;
        }
        let warm = if v > 0.0 { &mut last_pos } else { &mut last_neg };
        let start = warm.as_deref().unwrap_or(&base.x);
        let sol = solve_reduced(&loo.reduced, &target, cfg, lipschitz, Some(start))?;
        values[k] = sol.objective - base.objective - slope * v;
        *warm = Some(sol.x);
    }
    Ok(values)
}

/// Diagnostics for one sampled coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooCoordinate {
    pub index: usize,
    pub x_star_i: f64,
    pub x_tilde_i: f64,
    pub abs_gap: f64,
    /// `a_i^T u_{\i}`.
    pub a_dot_u_loo: f64,
    /// `a_i^T u*` from the full problem.
    pub a_dot_u_full: f64,
    /// `g` on the requested grid (empty when no grid was requested).
    pub g_values: Vec<f64>,
}

/// Runs the leave-one-out analysis at each coordinate in `coords`, given the
/// converged full solution `x_star` and its dual `u_star`.
#[allow(clippy::too_many_arguments)]
pub fn loo_diagnostics(
    instance: &ProblemInstance,
    x_star: &[f64],
    u_star: &[f64],
    coords: &[usize],
    a_p_star: f64,
    v_grid: &[f64],
    cfg: &SolverConfig,
    lipschitz: Option<f64>,
) -> Result<Vec<LooCoordinate>> {
    if x_star.len() != instance.p() || u_star.len() != instance.n() {
        return domain("full solution does not match the instance");
    }
    coords
        .iter()
        .map(|&i| {
            let loo = LeaveOneOut::new(instance, i)?;
            let base = leave_one_out_dual(&loo.reduced, &loo.y_reduced, cfg, lipschitz)?;
            let a_dot_u_loo = dot(&loo.column, &base.dual);
            let x_tilde_i = surrogate_x(loo.beta_i, a_dot_u_loo, a_p_star)?;
            let g_values = if v_grid.is_empty() {
                Vec::new()
            } else {
                g_curve(&loo, &base, v_grid, cfg, lipschitz)?
            };
            Ok(LooCoordinate {
                index: i,
                x_star_i: x_star[i],
                x_tilde_i,
                abs_gap: (x_star[i] - x_tilde_i).abs(),
                a_dot_u_loo,
                a_dot_u_full: dot(&loo.column, u_star),
                g_values,
            })
        })
        .collect()
}
