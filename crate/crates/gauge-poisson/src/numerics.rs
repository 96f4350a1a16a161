//! Shared numerical kernels: quadrature, finite differences, dense rank,
//! matrix exponential action and the RK4 stepper.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Default relative finite-difference step for 2nd-order central schemes.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Default node count per periodic quadrature axis.
pub const DEFAULT_PERIODIC_NODES: usize = 64;
/// Default fixed RK4 step.
pub const DEFAULT_ODE_STEP: f64 = 1e-3;

/// Quadrature rule kinds supported by the averaging operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadKind {
    /// Equispaced trapezoid on `[0, 2pi)`; spectrally accurate for periodic
    /// integrands.
    PeriodicTrapezoid,
    /// Gauss-Legendre on a finite interval.
    GaussLegendre,
    /// Product rule on the SO(3) ball: Gauss-Legendre in radius, uniform in
    /// azimuth, Gauss-Legendre in the polar cosine.
    ProductSpherical,
}

/// A 1d (or per-axis) quadrature rule.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub kind: QuadKind,
    pub node_count: usize,
}

impl QuadratureRule {
    pub fn periodic_trapezoid(node_count: usize) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::Invalid("quadrature needs node_count >= 2".into()));
        }
        Ok(Self { kind: QuadKind::PeriodicTrapezoid, node_count })
    }

    pub fn gauss_legendre(node_count: usize) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::Invalid("quadrature needs node_count >= 2".into()));
        }
        Ok(Self { kind: QuadKind::GaussLegendre, node_count })
    }
}

/// Integrate a scalar function over one period `[0, 2pi)` by the periodic
/// trapezoid rule. Exact for trigonometric polynomials of degree `< n/2`.
pub fn integrate_periodic<F: Fn(f64) -> f64>(f: F, rule: &QuadratureRule) -> Result<f64> {
    if rule.kind != QuadKind::PeriodicTrapezoid {
        return Err(Error::Invalid("integrate_periodic expects a periodic-trapezoid rule".into()));
    }
    let n = rule.node_count;
    let h = 2.0 * PI / n as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let t = h * k as f64;
        let v = f(t);
        if !v.is_finite() {
            return Err(Error::NonFinite { at: format!("quadrature node t = {t}") });
        }
        acc += v;
    }
    Ok(acc * h)
}

/// Integrate `(t - pi) g(t)` over `[0, 2pi)` for a smooth periodic `g`.
///
/// The sawtooth weight breaks the spectral accuracy of the plain trapezoid
/// sum (the product has a derivative jump at the period boundary), so the
/// weight is integrated exactly against the trigonometric interpolant of
/// `g` instead: with `c_m` the DFT coefficients of the samples,
/// `int (t - pi) g dt = sum_{m>0} (4 pi / m) Im c_m`. Exact whenever `g` is
/// a trigonometric polynomial resolved by the grid.
pub fn integrate_sawtooth<F: Fn(f64) -> f64>(g: F, rule: &QuadratureRule) -> Result<f64> {
    if rule.kind != QuadKind::PeriodicTrapezoid {
        return Err(Error::Invalid("integrate_sawtooth expects a periodic-trapezoid rule".into()));
    }
    let n = rule.node_count;
    let h = 2.0 * PI / n as f64;
    let weights = sawtooth_weights(n);
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let t = h * k as f64;
        let v = g(t);
        if !v.is_finite() {
            return Err(Error::NonFinite { at: format!("quadrature node t = {t}") });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Node weights for [`integrate_sawtooth`] at `t_k = 2 pi k / n`.
pub fn sawtooth_weights(n: usize) -> Vec<f64> {
    let h = 2.0 * PI / n as f64;
    let max_m = if n % 2 == 0 { n / 2 - 1 } else { n / 2 };
    (0..n)
        .map(|k| {
            let t = h * k as f64;
            let mut w = 0.0;
            for m in 1..=max_m {
                w += (m as f64 * t).sin() / m as f64;
            }
            -4.0 * PI / n as f64 * w
        })
        .collect()
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
///
/// Newton iteration on the Legendre polynomial; plenty for the node counts
/// used here (<= a few hundred).
pub fn gauss_legendre_nodes(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    for i in 0..n {
        // Tricomi-style initial guess on [-1, 1].
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = mid - half * x;
        weights[i] = 2.0 * half / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Central-difference Jacobian of a vector function. The per-coordinate step
/// is `scheme.step * max(1, |x_k|)`.
pub fn jacobian_fd<F>(f: F, x: &DVector<f64>, scheme: &crate::DiffScheme) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let rows = f0.len();
    let cols = x.len();
    let mut jac = DMatrix::zeros(rows, cols);
    for k in 0..cols {
        let h = scheme.step_at(x[k]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let fp = f(&xp);
        let fm = f(&xm);
        if fp.len() != rows || fm.len() != rows {
            return Err(Error::Dimension("jacobian_fd: f changed output length".into()));
        }
        for r in 0..rows {
            let d = (fp[r] - fm[r]) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::NonFinite { at: format!("jacobian_fd column {k}, row {r}") });
            }
            jac[(r, k)] = d;
        }
    }
    Ok(jac)
}

/// Numerical rank: number of singular values above `tol * sigma_max`.
pub fn matrix_rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { at: "matrix_rank input".into() });
    }
    if m.is_empty() {
        return Ok(0);
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(svd.singular_values.iter().filter(|&&s| s > tol * smax).count())
}

/// Apply `exp(t M)` to a vector via dense scaling-and-squaring.
pub fn matrix_exp_action(m: &DMatrix<f64>, t: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    if !m.is_square() || m.nrows() != v.len() {
        return Err(Error::Dimension(format!(
            "matrix_exp_action: matrix {}x{} vs vector {}",
            m.nrows(),
            m.ncols(),
            v.len()
        )));
    }
    if t == 0.0 || m.iter().all(|&x| x == 0.0) {
        return Ok(v.clone());
    }
    Ok((m * t).exp() * v)
}

/// One classical RK4 step for `x' = rhs(t, x)`.
pub fn rk4_step<F>(rhs: &F, t: f64, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = rhs(t, x)?;
    let k2 = rhs(t + 0.5 * h, &(x + &k1 * (0.5 * h)))?;
    let k3 = rhs(t + 0.5 * h, &(x + &k2 * (0.5 * h)))?;
    let k4 = rhs(t + h, &(x + &k3 * h))?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration { t, reason: "non-finite RK4 stage".into() });
    }
    Ok(next)
}
