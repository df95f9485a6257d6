//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here calls into the library's own special functions or solver:
//! the Gaussian density is written out directly, integrals use adaptive
//! Gauss-Kronrod quadrature, roots use plain bisection and box-constrained least
//! squares uses cyclic coordinate descent.

#![allow(dead_code, clippy::excessive_precision)]

use boxrelax::DenseMatrix;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn phi(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (nonnegative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5 and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Kronrod estimate and |Kronrod - Gauss| on `[a, b]`.
fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gauss_kronrod(f, a, b);
    if err <= tol || depth == 0 {
        return value;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss-Kronrod quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // Split into unit panels first so narrow peaks are never stepped over.
    let panels = ((b - a).ceil() as usize).max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = if k + 1 == panels { b } else { lo + h };
            adapt(&f, lo, hi, tol / panels as f64, 30)
        })
        .sum()
}

/// Beyond this distance past the lower limit every integrand used here is
/// below `1e-40` relative to its value at the limit.
pub const TAIL_SPAN: f64 = 14.0;

/// `int_a^inf (x - a)^2 phi(x) dx`.
pub fn truncated_sq_moment_quadrature(a: f64) -> f64 {
    integrate(|x| (x - a) * (x - a) * phi(x), a, a + TAIL_SPAN, 1e-14)
}

/// `int_x^inf phi` for `x >= 0`, to a tolerance relative to the tail size.
pub fn upper_tail_quadrature(x: f64) -> f64 {
    assert!(x >= 0.0);
    let tol = 1e-16 * phi(x) / (1.0 + x);
    integrate(phi, x, x + TAIL_SPAN, tol)
}

/// `int_{-inf}^x phi`, via the upper tail for accuracy.
pub fn cdf_quadrature(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - upper_tail_quadrature(x)
    } else {
        upper_tail_quadrature(-x)
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    assert!(f_lo * f(hi) <= 0.0, "no sign change on [{lo}, {hi}]");
    while hi - lo > tol * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if (fm < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Result of the coordinate-descent reference solve.
pub struct Reference {
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt: f64,
    pub sweeps: usize,
}

/// `max_j |x_j - clip(x_j - grad_j, -1, 1)|` computed from scratch.
pub fn kkt_residual(a: &DenseMatrix, y: &[f64], x: &[f64]) -> f64 {
    let r = residual(a, y, x);
    (0..a.cols())
        .map(|j| {
            let g: f64 = (0..a.rows()).map(|i| a.get(i, j) * r[i]).sum();
            (x[j] - (x[j] - g).clamp(-1.0, 1.0)).abs()
        })
        .fold(0.0, f64::max)
}

fn residual(a: &DenseMatrix, y: &[f64], x: &[f64]) -> Vec<f64> {
    (0..a.rows())
        .map(|i| (0..a.cols()).map(|j| a.get(i, j) * x[j]).sum::<f64>() - y[i])
        .collect()
}

pub fn objective(a: &DenseMatrix, y: &[f64], x: &[f64]) -> f64 {
    0.5 * residual(a, y, x).iter().map(|r| r * r).sum::<f64>()
}

/// Cyclic coordinate descent with exact one-dimensional minimisation,
/// run until the KKT residual is below `tol` or `max_sweeps` is reached.
pub fn coordinate_descent(a: &DenseMatrix, y: &[f64], tol: f64, max_sweeps: usize) -> Reference {
    let (n, p) = (a.rows(), a.cols());
    let cols: Vec<Vec<f64>> = (0..p).map(|j| a.column(j)).collect();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut x = vec![0.0; p];
    let mut r: Vec<f64> = y.iter().map(|v| -v).collect();
    let mut sweeps = 0;
    let mut kkt = f64::INFINITY;
    while sweeps < max_sweeps {
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let g: f64 = cols[j].iter().zip(&r).map(|(c, ri)| c * ri).sum();
            let new = (x[j] - g / norms[j]).clamp(-1.0, 1.0);
            let step = new - x[j];
            if step != 0.0 {
                for i in 0..n {
                    r[i] += step * cols[j][i];
                }
                x[j] = new;
            }
        }
        sweeps += 1;
        if sweeps % 10 == 0 {
            // Refresh the running residual to stop drift, then test.
            r = residual(a, y, &x);
            kkt = kkt_residual(a, y, &x);
            if kkt <= tol {
                break;
            }
        }
    }
    Reference {
        objective: objective(a, y, &x),
        kkt,
        x,
        sweeps,
    }
}
