//! Box-relaxation decoder: `x* = argmin_{x in [-1,1]^p} 1/2 ||y - A x||^2`
//! followed by entrywise sign rounding.
//!
//! The solver is an accelerated projected gradient method with a monotone
//! function-value restart: an extrapolated step is only accepted if it does
//! not increase the objective, otherwise momentum is reset and a plain
//! projected gradient step is taken from the current iterate. Optimality is
//! certified by the projected-gradient residual
//! `||x - clip(x - grad f(x))||_inf`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{axpy, dot, norm_sq, DenseMatrix};
use crate::rng::SeedTrace;

/// One realisation of `y = A beta + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    a: DenseMatrix,
    beta: Vec<f64>,
    noise: Vec<f64>,
    y: Vec<f64>,
    sigma2_p: f64,
    seed_trace: Option<SeedTrace>,
}

impl ProblemInstance {
    /// Builds an instance and computes `y = A beta + w`.
    pub fn new(
        a: DenseMatrix,
        beta: Vec<f64>,
        noise: Vec<f64>,
        sigma2_p: f64,
        seed_trace: Option<SeedTrace>,
    ) -> Result<Self> {
        if beta.len() != a.cols() {
            return domain(format!("beta has length {}, expected {}", beta.len(), a.cols()));
        }
        if noise.len() != a.rows() {
            return domain(format!("noise has length {}, expected {}", noise.len(), a.rows()));
        }
        if let Some(b) = beta.iter().find(|&&b| b != 1.0 && b != -1.0) {
            return domain(format!("beta entries must be +1 or -1, found {b}"));
        }
        if !(sigma2_p.is_finite() && sigma2_p >= 0.0) {
            return domain(format!("sigma2 must be finite and >= 0, got {sigma2_p}"));
        }
        let mut y = a.mul_vec(&beta);
        for (yi, wi) in y.iter_mut().zip(&noise) {
            *yi += wi;
        }
        Ok(Self {
            a,
            beta,
            noise,
            y,
            sigma2_p,
            seed_trace,
        })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn p(&self) -> usize {
        self.a.cols()
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2_p
    }

    pub fn seed_trace(&self) -> Option<SeedTrace> {
        self.seed_trace
    }

    /// The same instance with `A` and `w` (hence `y`) multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.a.scaled(c),
            self.beta.clone(),
            self.noise.iter().map(|w| w * c).collect(),
            self.sigma2_p * c * c,
            self.seed_trace,
        )
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            n: self.n(),
            p: self.p(),
            sigma2: self.sigma2_p,
            seed_trace: self.seed_trace,
            beta: self.beta.iter().map(|&b| b as i8).collect(),
            a: self.a.as_slice().to_vec(),
            w: self.noise.clone(),
        }
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        let a = DenseMatrix::from_row_major(file.n, file.p, file.a)?;
        let beta = file.beta.iter().map(|&b| f64::from(b)).collect();
        Self::new(a, beta, file.w, file.sigma2, file.seed_trace)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

/// Serialised instance: `A` is a row-major flat array of `n * p` entries and
/// `y` is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub p: usize,
    pub sigma2: f64,
    pub seed_trace: Option<SeedTrace>,
    pub beta: Vec<i8>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub w: Vec<f64>,
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Target projected-gradient residual.
    pub tol: f64,
    /// Iteration cap; `None` means `50 p`.
    pub max_iter: Option<usize>,
    /// Cap on Lanczos steps for the Lipschitz estimate.
    pub lanczos_steps: usize,
    /// Explore the face of the current bound set with conjugate gradients
    /// once that set has stabilised.
    pub face_cg: bool,
    /// Keep the objective value of every iteration.
    #[serde(skip)]
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            lanczos_steps: 60,
            face_cg: true,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = Some(max_iter);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == Some(0) {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Raw result of a box-constrained least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLsOutcome {
    pub x: Vec<f64>,
    /// `1/2 ||y - A x||^2`.
    pub objective: f64,
    /// `A x - y`.
    pub residual: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Step-size constant actually used (after any backtracking).
    pub lipschitz: f64,
    /// Objective after each iteration, when requested.
    pub trace: Vec<f64>,
}

/// Estimate of `lambda_max(A^T A)` by Lanczos iteration with full
/// reorthogonalisation, started from the normalised all-ones vector.
///
/// The top Ritz value is a lower bound that converges much faster than
/// plain power iteration on Gaussian designs, whose spectral edge is
/// crowded. Iteration stops once the Ritz value settles to `1e-4`
/// relative, after `max_steps` steps, or when the Krylov space is exhausted.
pub fn estimate_lipschitz(a: &DenseMatrix, max_steps: usize) -> f64 {
    let p = a.cols();
    let steps = max_steps.clamp(1, p);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut v = vec![1.0 / (p as f64).sqrt(); p];
    let mut av = vec![0.0; a.rows()];
    let mut w = vec![0.0; p];
    let mut estimate = 0.0;
    for _ in 0..steps {
        a.residual_gradient_into(&v, None, &mut av, &mut w);
        alphas.push(dot(&v, &w));
        basis.push(std::mem::take(&mut v));
        // Two rounds of Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let ritz = top_tridiagonal_eigenvalue(&alphas, &betas);
        let settled = (ritz - estimate).abs() <= 1e-4 * ritz;
        estimate = ritz;
        let beta = norm_sq(&w).sqrt();
        if settled || beta <= 1e-12 * ritz.max(f64::MIN_POSITIVE) {
            break;
        }
        betas.push(beta);
        v = w.iter().map(|wi| wi / beta).collect();
    }
    estimate
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal
/// `diag` and off-diagonal `off` (one shorter), by Sturm-sequence bisection.
fn top_tridiagonal_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let m = diag.len();
    // Number of eigenvalues strictly below x.
    let count_below = |x: f64| {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..m {
            let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
            q = diag[i] - x - if i == 0 { 0.0 } else { b2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let radius = |i: usize| {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < m { off[i].abs() } else { 0.0 };
        left + right
    };
    let mut lo = (0..m).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..m).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(mid) == m {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Safety factor applied to the power-iteration estimate, which approaches
/// the top eigenvalue from below.
const LIPSCHITZ_MARGIN: f64 = 1.02;

fn kkt_residual(x: &[f64], grad: &[f64]) -> f64 {
    x.iter()
        .zip(grad)
        .map(|(&xi, &gi)| (xi - (xi - gi).clamp(-1.0, 1.0)).abs())
        .fold(0.0, f64::max)
}

fn half_sq_residual(ax: &[f64], y: &[f64]) -> f64 {
    0.5 * ax.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `out = z + m (z - x)`.
fn extrapolate(out: &mut [f64], z: &[f64], x: &[f64], m: f64) {
    for ((o, &zi), &xi) in out.iter_mut().zip(z).zip(x) {
        *o = zi + m * (zi - xi);
    }
}

/// A box-constrained least-squares problem `min 1/2 ||y - A x||^2`,
/// `x in [-1, 1]^p`, with its step-size constant.
#[derive(Debug, Clone)]
pub struct BoxLeastSquares<'a> {
    a: &'a DenseMatrix,
    y: &'a [f64],
    lipschitz: f64,
}

impl<'a> BoxLeastSquares<'a> {
    pub fn new(a: &'a DenseMatrix, y: &'a [f64], cfg: &SolverConfig) -> Result<Self> {
        let l = estimate_lipschitz(a, cfg.lanczos_steps);
        Self::with_lipschitz(a, y, l)
    }

    /// Uses a caller-supplied curvature bound, e.g. the full matrix's bound
    /// for a column-deleted submatrix.
    pub fn with_lipschitz(a: &'a DenseMatrix, y: &'a [f64], lipschitz: f64) -> Result<Self> {
        if y.len() != a.rows() {
            return domain(format!("y has length {}, expected {}", y.len(), a.rows()));
        }
        if !(lipschitz.is_finite() && lipschitz >= 0.0) {
            return domain(format!("invalid Lipschitz constant {lipschitz}"));
        }
        Ok(Self { a, y, lipschitz })
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        half_sq_residual(&self.a.mul_vec(x), self.y)
    }

    /// Runs the solver from `start` (clipped into the box) or from zero.
    ///
    /// Each iteration makes one fused pass over `A` at the new point `z`,
    /// producing `A z` and the gradient there; the extrapolated point's
    /// image and gradient follow by linearity. The gradient at the current
    /// iterate is therefore always exact and the optimality residual is
    /// checked every iteration.
    pub fn solve(&self, cfg: &SolverConfig, start: Option<&[f64]>) -> Result<BoxLsOutcome> {
        cfg.validate()?;
        let a = self.a;
        let (n, p) = (a.rows(), a.cols());
        let max_iter = cfg.max_iter.unwrap_or(50 * p);

        let mut x: Vec<f64> = match start {
            Some(s) if s.len() == p => s.iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
            Some(s) => return domain(format!("start has length {}, expected {p}", s.len())),
            None => vec![0.0; p],
        };
        let mut lip = (self.lipschitz * LIPSCHITZ_MARGIN).max(f64::MIN_POSITIVE);

        let mut ax = vec![0.0; n];
        let mut gx = vec![0.0; p];
        a.residual_gradient_into(&x, Some(self.y), &mut ax, &mut gx);
        let mut fx = half_sq_residual(&ax, self.y);

        // Extrapolated point with its image and gradient.
        let mut yk = x.clone();
        let mut ayk = ax.clone();
        let mut gy = gx.clone();
        let mut z = vec![0.0; p];
        let mut az = vec![0.0; n];
        let mut gz = vec![0.0; p];
        let mut t = 1.0f64;
        let mut at_x = true;
        let mut trace = Vec::new();
        let mut pattern = bound_pattern(&x);
        let mut stable = 0usize;
        let mut face = FaceWork::new(n, p);

        let mut kkt;
        let mut iterations = 0;
        loop {
            kkt = kkt_residual(&x, &gx);
            if kkt <= cfg.tol || iterations == max_iter {
                break;
            }
            iterations += 1;

            // Projected step with a curvature check along the step: f is
            // quadratic, so the step is safe iff ||A d||^2 <= L ||d||^2.
            loop {
                let step = 1.0 / lip;
                for ((zi, &yi), &gi) in z.iter_mut().zip(&yk).zip(&gy) {
                    *zi = (yi - step * gi).clamp(-1.0, 1.0);
                }
                a.residual_gradient_into(&z, Some(self.y), &mut az, &mut gz);
                let d_sq = sq_dist(&z, &yk);
                let ad_sq = sq_dist(&az, &ayk);
                if ad_sq <= lip * d_sq * (1.0 + 1e-10) || d_sq == 0.0 {
                    break;
                }
                lip = (ad_sq / d_sq).max(lip) * 1.5;
                log::debug!("step-size backtrack, L -> {lip}");
            }
            let fz = half_sq_residual(&az, self.y);

            // A plain projected step from x is a descent step in exact
            // arithmetic; accept it even when rounding lifts fz above fx by
            // an ulp near the optimum, or the iteration would stall.
            if fz <= fx || at_x {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let mom = (t - 1.0) / t_next;
                extrapolate(&mut yk, &z, &x, mom);
                extrapolate(&mut ayk, &az, &ax, mom);
                extrapolate(&mut gy, &gz, &gx, mom);
                std::mem::swap(&mut x, &mut z);
                std::mem::swap(&mut ax, &mut az);
                std::mem::swap(&mut gx, &mut gz);
                fx = fz;
                t = t_next;
                at_x = mom == 0.0;

                if cfg.face_cg {
                    let next = bound_pattern(&x);
                    stable = if next == pattern { stable + 1 } else { 0 };
                    pattern = next;
                }
                if cfg.face_cg && stable >= FACE_STABLE_ITERS && max_iter - iterations >= 2 {
                    let budget = max_iter - iterations;
                    let used = face.minimize(a, self.y, cfg.tol, budget, &mut x, &mut ax, &mut gx);
                    iterations += used;
                    fx = half_sq_residual(&ax, self.y);
                    t = 1.0;
                    yk.copy_from_slice(&x);
                    ayk.copy_from_slice(&ax);
                    gy.copy_from_slice(&gx);
                    at_x = true;
                    stable = 0;
                    pattern = bound_pattern(&x);
                }
            } else {
                t = 1.0;
                yk.copy_from_slice(&x);
                ayk.copy_from_slice(&ax);
                gy.copy_from_slice(&gx);
                at_x = true;
            }
            if cfg.record_trace {
                trace.push(fx);
            }
        }

        let residual: Vec<f64> = ax.iter().zip(self.y).map(|(u, v)| u - v).collect();
        Ok(BoxLsOutcome {
            x,
            objective: fx,
            residual,
            kkt_residual: kkt,
            iterations,
            converged: kkt <= cfg.tol,
            lipschitz: lip,
            trace,
        })
    }
}

/// Accepted steps with an unchanged set of bound coordinates before the
/// face is explored by conjugate gradients.
const FACE_STABLE_ITERS: usize = 3;

/// Per coordinate: -1 / +1 at the corresponding bound, 0 strictly inside.
fn bound_pattern(x: &[f64]) -> Vec<i8> {
    x.iter()
        .map(|&v| {
            if v <= -1.0 {
                -1
            } else if v >= 1.0 {
                1
            } else {
                0
            }
        })
        .collect()
}

/// Scratch space for conjugate gradients restricted to the current face
/// (coordinates strictly inside the box move, the rest stay fixed).
#[derive(Debug)]
struct FaceWork {
    r: Vec<f64>,
    d: Vec<f64>,
    ad: Vec<f64>,
    q: Vec<f64>,
}

impl FaceWork {
    fn new(n: usize, p: usize) -> Self {
        Self {
            r: vec![0.0; p],
            d: vec![0.0; p],
            ad: vec![0.0; n],
            q: vec![0.0; p],
        }
    }

    /// Runs CG on the free coordinates of `x` until the face gradient falls
    /// below `tol / 10`, a step would leave the box (the step is then cut at
    /// the boundary), or `budget` passes are spent. Every step decreases the
    /// objective. On return `ax` and `gx` are recomputed exactly at `x`.
    /// Returns the number of passes over the matrix.
    #[allow(clippy::too_many_arguments)]
    fn minimize(
        &mut self,
        a: &DenseMatrix,
        y: &[f64],
        tol: f64,
        budget: usize,
        x: &mut [f64],
        ax: &mut [f64],
        gx: &mut [f64],
    ) -> usize {
        let free: Vec<bool> = x.iter().map(|v| v.abs() < 1.0).collect();
        for i in 0..x.len() {
            self.r[i] = if free[i] { -gx[i] } else { 0.0 };
        }
        self.d.copy_from_slice(&self.r);
        let mut rr = norm_sq(&self.r);
        let mut passes = 0;
        while passes + 1 < budget {
            if self.r.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= 0.1 * tol {
                break;
            }
            a.residual_gradient_into(&self.d, None, &mut self.ad, &mut self.q);
            passes += 1;
            let curv = norm_sq(&self.ad);
            if curv.is_nan() || curv <= 0.0 {
                break;
            }
            let alpha = rr / curv;
            // Largest feasible step along d.
            let mut alpha_max = f64::INFINITY;
            for (&xi, &di) in x.iter().zip(&self.d) {
                if di > 0.0 {
                    alpha_max = alpha_max.min((1.0 - xi) / di);
                } else if di < 0.0 {
                    alpha_max = alpha_max.min((-1.0 - xi) / di);
                }
            }
            let hit = alpha >= alpha_max;
            let step = alpha.min(alpha_max);
            for (xi, &di) in x.iter_mut().zip(&self.d) {
                *xi = (*xi + step * di).clamp(-1.0, 1.0);
            }
            if hit {
                break;
            }
            axpy(step, &self.q, gx);
            for i in 0..x.len() {
                self.r[i] = if free[i] { -gx[i] } else { 0.0 };
            }
            let rr_next = norm_sq(&self.r);
            let beta = rr_next / rr;
            rr = rr_next;
            for (di, &ri) in self.d.iter_mut().zip(&self.r) {
                *di = ri + beta * *di;
            }
        }
        a.residual_gradient_into(x, Some(y), ax, gx);
        passes + 1
    }
}

/// Entrywise sign with `sign(0) = +1`.
pub fn sign_round(x: &[f64]) -> Vec<i8> {
    x.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect()
}

/// Decoded estimate for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderSolution {
    pub x_star: Vec<f64>,
    pub beta_hat: Vec<i8>,
    /// Number of bit errors.
    pub n_errors: usize,
    pub kkt_residual: f64,
    /// `1/2 ||y - A x*||^2`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Coordinates with `|x*_i| < 1e-8`, whose sign a different solver
    /// could plausibly flip.
    pub near_ties: usize,
}

pub const NEAR_TIE_THRESHOLD: f64 = 1e-8;

impl DecoderSolution {
    /// Rounds a raw solver outcome for `instance`.
    pub fn from_outcome(instance: &ProblemInstance, out: BoxLsOutcome) -> Self {
        let beta_hat = sign_round(&out.x);
        let n_errors = beta_hat
            .iter()
            .zip(instance.beta())
            .filter(|(&b, &t)| f64::from(b) != t)
            .count();
        let near_ties = out.x.iter().filter(|v| v.abs() < NEAR_TIE_THRESHOLD).count();
        if near_ties > 0 {
            log::debug!("{near_ties} near-tie coordinates in decoded solution");
        }
        Self {
            x_star: out.x,
            beta_hat,
            n_errors,
            kkt_residual: out.kkt_residual,
            objective: out.objective,
            iterations: out.iterations,
            converged: out.converged,
            near_ties,
        }
    }

    /// Dual vector `u* = A x* - y`. Refuses unconverged solutions.
    pub fn dual_residual(&self, instance: &ProblemInstance) -> Result<Vec<f64>> {
        if !self.converged {
            return Err(Error::NotConverged(format!(
                "dual residual requested for an unconverged solution (kkt = {:e})",
                self.kkt_residual
            )));
        }
        let mut u = instance.a().mul_vec(&self.x_star);
        for (ui, yi) in u.iter_mut().zip(instance.y()) {
            *ui -= yi;
        }
        Ok(u)
    }
}

/// Solves the box-constrained least-squares problem for `instance` and rounds.
/// An unconverged solve still returns its best iterate with `converged = false`.
pub fn solve_box_ls(instance: &ProblemInstance, cfg: &SolverConfig) -> Result<DecoderSolution> {
    Ok(solve_box_ls_detailed(instance, cfg)?.0)
}

/// As [`solve_box_ls`], also returning the raw solver outcome.
pub fn solve_box_ls_detailed(
    instance: &ProblemInstance,
    cfg: &SolverConfig,
) -> Result<(DecoderSolution, BoxLsOutcome)> {
    let problem = BoxLeastSquares::new(instance.a(), instance.y(), cfg)?;
    let out = problem.solve(cfg, None)?;
    if !out.converged {
        log::warn!(
            "box-LS did not converge in {} iterations (kkt = {:e})",
            out.iterations,
            out.kkt_residual
        );
    }
    Ok((DecoderSolution::from_outcome(instance, out.clone()), out))
}

/// `w^T (y - A x)` given the residual `A x - y`.
pub fn noise_dot_residual(noise: &[f64], residual: &[f64]) -> f64 {
    -dot(noise, residual)
}
