//! Gauss–Legendre rules, tensor-product box integration and adaptive Simpson.

use thiserror::Error;

/// Largest Gauss–Legendre order accepted.
pub const MAX_ORDER: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("unsupported Gauss-Legendre order {0} (must be 1..={MAX_ORDER})")]
    UnsupportedOrder(usize),
    #[error("adaptive Simpson did not converge on [{a}, {b}] within depth {depth}")]
    NoConvergence { a: f64, b: f64, depth: usize },
    #[error("integrand returned a non-finite value at {0}")]
    NonFinite(f64),
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self, QuadratureError> {
        if order == 0 || order > MAX_ORDER {
            return Err(QuadratureError::UnsupportedOrder(order));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let k = (i + 1) as f64;
            let mut x = (std::f64::consts::PI * (k - 0.25) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product rule over an axis-aligned box, composite with `cells[d]`
/// equal sub-intervals per axis. Calls `visit(point, weight)` for every node.
pub fn tensor_box(
    rule: &GaussLegendre,
    lower: &[f64],
    upper: &[f64],
    cells: &[usize],
    mut visit: impl FnMut(&[f64], f64),
) {
    let dim = lower.len();
    let axes: Vec<Vec<(f64, f64)>> = (0..dim)
        .map(|d| {
            let c = cells.get(d).copied().unwrap_or(1).max(1);
            let width = (upper[d] - lower[d]) / c as f64;
            (0..c)
                .flat_map(|k| {
                    let a = lower[d] + k as f64 * width;
                    rule.mapped(a, a + width).collect::<Vec<_>>()
                })
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    if axes.iter().any(|a| a.is_empty()) {
        return;
    }
    loop {
        let mut w = 1.0;
        for d in 0..dim {
            let (x, wd) = axes[d][idx[d]];
            point[d] = x;
            w *= wd;
        }
        visit(&point, w);
        let mut d = 0;
        loop {
            if d == dim {
                return;
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Adaptive Simpson quadrature. Subintervals are accepted once the
/// Richardson error estimate is below `max(abs_tol, rel_tol * |whole|)`
/// (tolerances halve with each bisection).
pub fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_depth: usize,
) -> Result<f64, QuadratureError> {
    if a == b {
        return Ok(0.0);
    }
    let fa = eval_finite(f, a)?;
    let fb = eval_finite(f, b)?;
    let m = 0.5 * (a + b);
    let fm = eval_finite(f, m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = abs_tol.max(rel_tol * whole.abs());
    simpson_step(f, a, b, fa, fm, fb, whole, tol, rel_tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    rel_tol: f64,
    depth: usize,
) -> Result<f64, QuadratureError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval_finite(f, lm)?;
    let frm = eval_finite(f, rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let tol = tol.max(rel_tol * (left + right).abs() * 1e-3);
    if delta.abs() <= 15.0 * tol || (m - a).abs() <= 4.0 * f64::EPSILON * m.abs().max(1e-300) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadratureError::NoConvergence { a, b, depth: 0 });
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, rel_tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, rel_tol, depth - 1)?;
    Ok(l + r)
}

fn eval_finite(f: &impl Fn(f64) -> f64, x: f64) -> Result<f64, QuadratureError> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QuadratureError::NonFinite(x))
    }
}
