//! Displacement kernels, their first and second moments, and assembly of the
//! coefficient fields `A`, `K`, `B` of the nonlinear operator.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::function::erf::erf;
use statrs::function::gamma::gamma_lr;
use thiserror::Error;

use crate::grid::Grid;
use crate::linalg::{asymmetry, inf_norm, sym_eigenvalues, sym_part};
use crate::quadrature::{GaussLegendre, QuadratureError};
use crate::statelaw::StateLaw;

/// Largest dimension handled by the moment routines.
pub const MAX_DIM: usize = 4;
/// Truncation radius (in standard deviations) used when none is given.
pub const DEFAULT_TRUNCATION: f64 = 6.0;
pub const DEFAULT_ORDER: usize = 32;
/// Accepted deviation of the quadrature mass from 1.
pub const NORMALIZATION_TOL: f64 = 1e-8;
/// Relative PSD and symmetry tolerance (times `‖M‖_∞`).
pub const PSD_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel mass {mass} deviates from 1 by more than {tol}")]
    Normalization { mass: f64, tol: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("matrix is not symmetric (max |m_ij - m_ji| = {asymmetry})")]
    Asymmetric { asymmetry: f64 },
    #[error(
        "diffusion matrix not elliptic at x = {x:?}, t = {t}: min eigenvalue {min_eigenvalue}"
    )]
    Ellipticity {
        min_eigenvalue: f64,
        x: Vec<f64>,
        t: f64,
    },
    #[error("alignment matrix fails the nonnegative quadratic form test (min eigenvalue {0})")]
    Alignment(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid kernel: {0}")]
    Invalid(String),
    #[error("tabulated density: {0}")]
    Table(String),
}

/// Quadrature settings for moment computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub order: usize,
    /// Composite cells per axis; `None` picks a dimension-dependent default.
    pub cells: Option<usize>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            cells: None,
        }
    }
}

impl QuadratureConfig {
    fn cells_for(&self, dim: usize) -> usize {
        self.cells.unwrap_or(match dim {
            1 => 8,
            2 => 4,
            3 => 2,
            _ => 1,
        })
    }
}

pub type GaussianParamFn = Arc<dyn Fn(&[f64], f64) -> (DVector<f64>, DMatrix<f64>) + Send + Sync>;

/// Mean and covariance of a shifted Gaussian, fixed or depending on `(x, t)`.
#[derive(Clone)]
pub enum GaussianParams {
    Constant {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    },
    Field {
        dim: usize,
        f: GaussianParamFn,
    },
}

impl fmt::Debug for GaussianParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { mean, cov } => f
                .debug_struct("Constant")
                .field("mean", &mean.as_slice())
                .field("cov", &cov.as_slice())
                .finish(),
            Self::Field { dim, .. } => write!(f, "Field {{ dim: {dim} }}"),
        }
    }
}

/// One-dimensional factor of a product kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    /// Gaussian truncated at `trunc` standard deviations and renormalized.
    Gaussian {
        mean: f64,
        sd: f64,
        trunc: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Symmetric triangle on `[center - half_width, center + half_width]`.
    Triangular {
        center: f64,
        half_width: f64,
    },
}

impl Marginal {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Gaussian { mean, sd, trunc } => (mean - trunc * sd, mean + trunc * sd),
            Marginal::Uniform { low, high } => (low, high),
            Marginal::Triangular { center, half_width } => {
                (center - half_width, center + half_width)
            }
        }
    }

    pub fn is_even_about_zero(&self) -> bool {
        match *self {
            Marginal::Gaussian { mean, .. } => mean == 0.0,
            Marginal::Uniform { low, high } => low == -high,
            Marginal::Triangular { center, .. } => center == 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Gaussian { mean, .. } => mean,
            Marginal::Uniform { low, high } => 0.5 * (low + high),
            Marginal::Triangular { center, .. } => center,
        }
    }

    fn validate(&self) -> Result<(), KernelError> {
        let ok = match *self {
            Marginal::Gaussian { mean, sd, trunc } => {
                mean.is_finite() && sd >= 0.0 && sd.is_finite() && trunc > 0.0 && trunc.is_finite()
            }
            Marginal::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            Marginal::Triangular { center, half_width } => {
                center.is_finite() && half_width > 0.0 && half_width.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(KernelError::Invalid(format!("bad marginal {self:?}")))
        }
    }

    /// Nodes and probability weights of a composite rule for this factor.
    fn rule(&self, gl: &GaussLegendre, cells: usize) -> Vec<(f64, f64)> {
        match *self {
            Marginal::Gaussian { mean, sd, trunc } => {
                let mass = erf(trunc / std::f64::consts::SQRT_2);
                composite(gl, -trunc, trunc, cells, |z| std_normal_pdf(z) / mass)
                    .into_iter()
                    .map(|(z, w)| (mean + sd * z, w))
                    .collect()
            }
            Marginal::Uniform { low, high } => {
                let d = 1.0 / (high - low);
                composite(gl, low, high, cells, |_| d)
            }
            Marginal::Triangular { center, half_width } => {
                // even cell count keeps the apex on a cell boundary
                let cells = cells.max(2).div_ceil(2) * 2;
                composite(gl, center - half_width, center + half_width, cells, |z| {
                    (1.0 - (z - center).abs() / half_width).max(0.0) / half_width
                })
            }
        }
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn composite(
    gl: &GaussLegendre,
    a: f64,
    b: f64,
    cells: usize,
    density: impl Fn(f64) -> f64,
) -> Vec<(f64, f64)> {
    let cells = cells.max(1);
    let width = (b - a) / cells as f64;
    let mut out = Vec::with_capacity(cells * gl.order());
    for c in 0..cells {
        let lo = a + c as f64 * width;
        for (x, w) in gl.mapped(lo, lo + width) {
            out.push((x, w * density(x)));
        }
    }
    out
}

/// Piecewise-constant density on a box centered at the origin: `counts[d]`
/// cells of width `h[d]` per axis, values in row-major order (last axis
/// fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    pub h: Vec<f64>,
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(h: Vec<f64>, counts: Vec<usize>, values: Vec<f64>) -> Result<Self, KernelError> {
        let n = h.len();
        if n == 0 || n > MAX_DIM || counts.len() != n {
            return Err(KernelError::Table(format!(
                "need 1..={MAX_DIM} axes with one spacing and one count each"
            )));
        }
        if h.iter().any(|&x| !(x > 0.0 && x.is_finite())) || counts.iter().any(|&c| c == 0) {
            return Err(KernelError::Table(
                "spacings and counts must be positive".into(),
            ));
        }
        let total: usize = counts.iter().product();
        if values.len() != total {
            return Err(KernelError::Table(format!(
                "expected {total} density values, found {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(KernelError::Table(format!(
                "density value #{k} = {} is negative or not finite",
                values[k]
            )));
        }
        Ok(Self { h, counts, values })
    }

    /// Parses `n h_1..h_n N_1..N_n` followed by the values.
    pub fn parse(text: &str) -> Result<Self, KernelError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| KernelError::Table("empty file".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let n: usize = head
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| KernelError::Table("header must start with the dimension".into()))?;
        if head.len() != 1 + 2 * n {
            return Err(KernelError::Table(format!(
                "header needs {} fields, found {}",
                1 + 2 * n,
                head.len()
            )));
        }
        let mut h = Vec::with_capacity(n);
        for tok in &head[1..=n] {
            h.push(
                tok.parse::<f64>()
                    .map_err(|_| KernelError::Table(format!("bad spacing '{tok}'")))?,
            );
        }
        let mut counts = Vec::with_capacity(n);
        for tok in &head[n + 1..] {
            counts.push(
                tok.parse::<usize>()
                    .map_err(|_| KernelError::Table(format!("bad count '{tok}'")))?,
            );
        }
        let mut values = Vec::new();
        for line in lines {
            for tok in line.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() {
                    continue;
                }
                values.push(
                    tok.parse::<f64>()
                        .map_err(|_| KernelError::Table(format!("bad value '{tok}'")))?,
                );
            }
        }
        Self::new(h, counts, values)
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.h
            .iter()
            .zip(&self.counts)
            .map(|(h, &c)| 0.5 * h * c as f64)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Center of cell with linear (row-major) index `k`.
    pub fn cell_center(&self, k: usize) -> Vec<f64> {
        let n = self.dim();
        let mut idx = vec![0; n];
        let mut rem = k;
        for d in (0..n).rev() {
            idx[d] = rem % self.counts[d];
            rem /= self.counts[d];
        }
        let half = self.half_widths();
        (0..n)
            .map(|d| -half[d] + (idx[d] as f64 + 0.5) * self.h[d])
            .collect()
    }

    /// Value at `z` (zero outside the box).
    pub fn density(&self, z: &[f64]) -> f64 {
        let half = self.half_widths();
        let mut k = 0;
        for d in 0..self.dim() {
            let pos = (z[d] + half[d]) / self.h[d];
            if !(0.0..self.counts[d] as f64).contains(&pos) {
                return 0.0;
            }
            k = k * self.counts[d] + (pos as usize).min(self.counts[d] - 1);
        }
        self.values[k]
    }

    /// Mirror symmetry of the table through the origin.
    pub fn is_even(&self) -> bool {
        let total = self.values.len();
        (0..total).all(|k| self.values[k] == self.values[total - 1 - k])
    }
}

#[derive(Debug, Clone)]
pub enum KernelFamily {
    /// Gaussian with mean `mu` and covariance `Sigma`, truncated at
    /// Mahalanobis radius `trunc` and renormalized.
    GaussianShifted {
        params: GaussianParams,
        trunc: f64,
    },
    ProductOfMarginals(Vec<Marginal>),
    Tabulated(TabulatedDensity),
}

/// Displacement probability kernel `phi(x, t, zeta)` with observation
/// interval `tau`.
#[derive(Debug, Clone)]
pub struct ProbabilityKernel {
    pub family: KernelFamily,
    pub tau: f64,
}

impl ProbabilityKernel {
    pub fn gaussian(
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        trunc: f64,
        tau: f64,
    ) -> Result<Self, KernelError> {
        let kernel = Self {
            family: KernelFamily::GaussianShifted {
                params: GaussianParams::Constant { mean, cov },
                trunc,
            },
            tau,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn product(marginals: Vec<Marginal>, tau: f64) -> Result<Self, KernelError> {
        let kernel = Self {
            family: KernelFamily::ProductOfMarginals(marginals),
            tau,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn tabulated(table: TabulatedDensity, tau: f64) -> Result<Self, KernelError> {
        let kernel = Self {
            family: KernelFamily::Tabulated(table),
            tau,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn dim(&self) -> usize {
        match &self.family {
            KernelFamily::GaussianShifted { params, .. } => match params {
                GaussianParams::Constant { mean, .. } => mean.len(),
                GaussianParams::Field { dim, .. } => *dim,
            },
            KernelFamily::ProductOfMarginals(m) => m.len(),
            KernelFamily::Tabulated(t) => t.dim(),
        }
    }

    /// `true` when the kernel does not depend on `(x, t)`.
    pub fn is_homogeneous(&self) -> bool {
        !matches!(
            self.family,
            KernelFamily::GaussianShifted {
                params: GaussianParams::Field { .. },
                ..
            }
        )
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(KernelError::Invalid(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        let n = self.dim();
        if n == 0 || n > MAX_DIM {
            return Err(KernelError::Dimension(format!(
                "kernel dimension {n} outside 1..={MAX_DIM}"
            )));
        }
        match &self.family {
            KernelFamily::GaussianShifted { params, trunc } => {
                if !(*trunc > 0.0 && trunc.is_finite()) {
                    return Err(KernelError::Invalid(format!("truncation radius {trunc}")));
                }
                if let GaussianParams::Constant { mean, cov } = params {
                    check_gaussian(mean, cov)?;
                }
            }
            KernelFamily::ProductOfMarginals(m) => {
                for marginal in m {
                    marginal.validate()?;
                }
            }
            KernelFamily::Tabulated(_) => {}
        }
        Ok(())
    }

    /// Mean and covariance at `(x, t)` for the Gaussian family.
    pub fn gaussian_params(&self, x: &[f64], t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        match &self.family {
            KernelFamily::GaussianShifted { params, .. } => Some(match params {
                GaussianParams::Constant { mean, cov } => (mean.clone(), cov.clone()),
                GaussianParams::Field { f, .. } => f(x, t),
            }),
            _ => None,
        }
    }

    /// Radius of a ball around the origin holding all mass.
    pub fn support_radius(&self, x: &[f64], t: f64) -> f64 {
        match &self.family {
            KernelFamily::GaussianShifted { trunc, .. } => {
                let (mean, cov) = self.gaussian_params(x, t).expect("gaussian family");
                let top = sym_eigenvalues(&cov)
                    .last()
                    .copied()
                    .unwrap_or(0.0)
                    .max(0.0);
                mean.norm() + trunc * top.sqrt()
            }
            KernelFamily::ProductOfMarginals(m) => m
                .iter()
                .map(|mg| {
                    let (a, b) = mg.support();
                    a.abs().max(b.abs()).powi(2)
                })
                .sum::<f64>()
                .sqrt(),
            KernelFamily::Tabulated(t) => t.half_widths().iter().map(|w| w * w).sum::<f64>().sqrt(),
        }
    }

    /// Pointwise evenness `phi(-zeta) = phi(zeta)`, decided from parameters.
    pub fn is_even(&self, x: &[f64], t: f64) -> bool {
        match &self.family {
            KernelFamily::GaussianShifted { .. } => {
                let (mean, _) = self.gaussian_params(x, t).expect("gaussian family");
                mean.iter().all(|&m| m == 0.0)
            }
            KernelFamily::ProductOfMarginals(m) => m.iter().all(Marginal::is_even_about_zero),
            KernelFamily::Tabulated(t) => t.is_even(),
        }
    }
}

fn check_gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<(), KernelError> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(KernelError::Dimension(format!(
            "mean has length {n}, covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
        return Err(KernelError::Invalid("non-finite Gaussian parameter".into()));
    }
    let (psd, min) = psd_check(cov)?;
    if !psd {
        return Err(KernelError::Invalid(format!(
            "covariance is not positive semi-definite (min eigenvalue {min})"
        )));
    }
    Ok(())
}

/// Moments of a kernel at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentResult {
    /// Expected displacement `∫ zeta phi`.
    pub e: DVector<f64>,
    /// Raw second moment `∫ zeta zetaᵀ phi`.
    pub a_bar: DMatrix<f64>,
    /// `a_bar / (2 tau)`.
    pub a: DMatrix<f64>,
    /// `E / tau`.
    pub drift: DVector<f64>,
    /// Quadrature mass before the normalization check.
    pub mass: f64,
}

impl MomentResult {
    fn from_raw(
        mass: f64,
        first: DVector<f64>,
        second: DMatrix<f64>,
        tau: f64,
    ) -> Result<Self, KernelError> {
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(KernelError::Normalization {
                mass,
                tol: NORMALIZATION_TOL,
            });
        }
        let a_bar = sym_part(&second);
        Ok(Self {
            a: &a_bar / (2.0 * tau),
            drift: &first / tau,
            e: first,
            a_bar,
            mass,
        })
    }
}

/// `E`, `a_bar`, `A` and `E/tau` of `kernel` at `(x, t)` by tensor-product
/// Gauss–Legendre quadrature.
///
/// Gaussian kernels are integrated in whitened coordinates `zeta = mu + S z`
/// (`S` the symmetric square root of `Sigma`) over the box `[-trunc, trunc]^n`
/// with the ball indicator applied; product kernels use the tensor product of
/// per-axis composite rules; tabulated kernels use a two-point rule per cell,
/// exact for the piecewise-constant density.
pub fn kernel_moments(
    kernel: &ProbabilityKernel,
    x: &[f64],
    t: f64,
    quad: QuadratureConfig,
) -> Result<MomentResult, KernelError> {
    let gl = GaussLegendre::new(quad.order)?;
    let n = kernel.dim();
    let mut mass = 0.0;
    let mut first = DVector::zeros(n);
    let mut second = DMatrix::zeros(n, n);
    let mut accumulate = |z: &[f64], w: f64| {
        mass += w;
        for i in 0..n {
            first[i] += w * z[i];
            for j in i..n {
                second[(i, j)] += w * z[i] * z[j];
            }
        }
    };
    match &kernel.family {
        KernelFamily::GaussianShifted { trunc, .. } => {
            let trunc = *trunc;
            let (mean, cov) = kernel.gaussian_params(x, t).expect("gaussian family");
            check_gaussian(&mean, &cov)?;
            let root = sym_sqrt(&cov);
            let ball_mass = gamma_lr(0.5 * n as f64, 0.5 * trunc * trunc);
            let mut zeta = vec![0.0; n];
            let mut visit = |z: &[f64], w: f64| {
                for i in 0..n {
                    zeta[i] = mean[i] + (0..n).map(|j| root[(i, j)] * z[j]).sum::<f64>();
                }
                accumulate(&zeta, w / ball_mass);
            };
            if n == 2 {
                // polar rule: the ball edge is a coordinate line
                let radial = composite(&gl, 0.0, trunc, quad.cells_for(1), |r| {
                    r * (-0.5 * r * r).exp()
                });
                let m = 2 * quad.order;
                let dtheta = 2.0 * std::f64::consts::PI / m as f64;
                for &(r, wr) in &radial {
                    for k in 0..m {
                        let th = k as f64 * dtheta;
                        visit(
                            &[r * th.cos(), r * th.sin()],
                            wr * dtheta / (2.0 * std::f64::consts::PI),
                        );
                    }
                }
            } else {
                let axis = composite(&gl, -trunc, trunc, quad.cells_for(n), std_normal_pdf);
                let r2 = trunc * trunc;
                for_each_tensor(&axis, n, |z, w| {
                    if z.iter().map(|v| v * v).sum::<f64>() <= r2 {
                        visit(z, w);
                    }
                });
            }
        }
        KernelFamily::ProductOfMarginals(marginals) => {
            let cells = quad.cells_for(1);
            let rules: Vec<Vec<(f64, f64)>> =
                marginals.iter().map(|m| m.rule(&gl, cells)).collect();
            for_each_product(&rules, &mut accumulate);
        }
        KernelFamily::Tabulated(table) => {
            let two = GaussLegendre::new(2)?;
            let half: Vec<f64> = table.h.iter().map(|h| 0.5 * h).collect();
            let offsets: Vec<(f64, f64)> = two
                .nodes()
                .iter()
                .copied()
                .zip(two.weights().iter().map(|w| 0.5 * w))
                .collect();
            let vol = table.cell_volume();
            let mut z = vec![0.0; n];
            for k in 0..table.values.len() {
                let v = table.values[k];
                if v == 0.0 {
                    continue;
                }
                let c = table.cell_center(k);
                for_each_tensor(&offsets, n, |off, w| {
                    for d in 0..n {
                        z[d] = c[d] + half[d] * off[d];
                    }
                    accumulate(&z, v * vol * w);
                });
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            second[(i, j)] = second[(j, i)];
        }
    }
    MomentResult::from_raw(mass, first, second, kernel.tau)
}

/// Same 1D rule on every axis.
fn for_each_tensor(axis: &[(f64, f64)], n: usize, mut visit: impl FnMut(&[f64], f64)) {
    let rules: Vec<&[(f64, f64)]> = vec![axis; n];
    for_each_product_ref(&rules, &mut visit);
}

fn for_each_product(rules: &[Vec<(f64, f64)>], visit: &mut impl FnMut(&[f64], f64)) {
    let refs: Vec<&[(f64, f64)]> = rules.iter().map(Vec::as_slice).collect();
    for_each_product_ref(&refs, visit);
}

fn for_each_product_ref(rules: &[&[(f64, f64)]], visit: &mut impl FnMut(&[f64], f64)) {
    let n = rules.len();
    if rules.iter().any(|r| r.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; n];
    let mut point = vec![0.0; n];
    loop {
        let mut w = 1.0;
        for d in 0..n {
            let (z, wd) = rules[d][idx[d]];
            point[d] = z;
            w *= wd;
        }
        visit(&point, w);
        let mut d = 0;
        loop {
            if d == n {
                return;
            }
            idx[d] += 1;
            if idx[d] < rules[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Symmetric square root of a PSD matrix (negative round-off eigenvalues
/// are clipped to zero).
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(sym_part(m));
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Smallest eigenvalue and the PSD flag `min_eig >= -1e-10 ‖M‖_∞`.
pub fn psd_check(m: &DMatrix<f64>) -> Result<(bool, f64), KernelError> {
    if m.nrows() != m.ncols() {
        return Err(KernelError::Dimension(format!(
            "matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let tol = PSD_REL_TOL * inf_norm(m);
    let asym = asymmetry(m);
    if asym > tol {
        return Err(KernelError::Asymmetric { asymmetry: asym });
    }
    let min = sym_eigenvalues(m).first().copied().unwrap_or(0.0);
    Ok((min >= -tol, min))
}

/// Alignment matrix, Darcy mobility, gravity and the state-law factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DarcyData {
    pub m0: DMatrix<f64>,
    pub k_bar: DMatrix<f64>,
    pub g: DVector<f64>,
    pub state_constant: f64,
}

impl DarcyData {
    pub fn new(
        m0: DMatrix<f64>,
        k_bar: DMatrix<f64>,
        g: DVector<f64>,
        state_constant: f64,
    ) -> Result<Self, KernelError> {
        let n = g.len();
        if m0.shape() != (n, n) || k_bar.shape() != (n, n) {
            return Err(KernelError::Dimension(format!(
                "M0 {:?}, K_bar {:?}, g has length {n}",
                m0.shape(),
                k_bar.shape()
            )));
        }
        if !(state_constant > 0.0 && state_constant.is_finite()) {
            return Err(KernelError::Invalid(format!(
                "state constant must be positive, got {state_constant}"
            )));
        }
        let (ok, min) = psd_check(&sym_part(&m0))?;
        if !ok {
            return Err(KernelError::Alignment(min));
        }
        Ok(Self {
            m0,
            k_bar,
            g,
            state_constant,
        })
    }

    /// Uses the Darcy factor of `law` (`c` or `1/kappa`).
    pub fn for_law(
        m0: DMatrix<f64>,
        k_bar: DMatrix<f64>,
        g: DVector<f64>,
        law: &StateLaw,
    ) -> Result<Self, KernelError> {
        Self::new(m0, k_bar, g, law.darcy_scale())
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// `K = state_constant · M0 K̄`.
    pub fn k(&self) -> DMatrix<f64> {
        (&self.m0 * &self.k_bar) * self.state_constant
    }

    /// `B = -M0 K̄ g`.
    pub fn b(&self) -> DVector<f64> {
        -(&self.m0 * &self.k_bar * &self.g)
    }
}

pub type MatrixFn = Arc<dyn Fn(&[f64], f64) -> DMatrix<f64> + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64], f64) -> DVector<f64> + Send + Sync>;

/// Matrix-valued coefficient `(x, t) -> M`.
#[derive(Clone)]
pub enum MatrixField {
    Constant(DMatrix<f64>),
    Varying { f: MatrixFn, time_dependent: bool },
}

impl MatrixField {
    pub fn eval(&self, x: &[f64], t: f64) -> DMatrix<f64> {
        match self {
            Self::Constant(m) => m.clone(),
            Self::Varying { f, .. } => f(x, t),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(
            self,
            Self::Varying {
                time_dependent: true,
                ..
            }
        )
    }
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(m) => write!(f, "Constant({:?})", m.as_slice()),
            Self::Varying { time_dependent, .. } => {
                write!(f, "Varying {{ time_dependent: {time_dependent} }}")
            }
        }
    }
}

/// Vector-valued coefficient `(x, t) -> v`.
#[derive(Clone)]
pub enum VectorField {
    Constant(DVector<f64>),
    Varying { f: VectorFn, time_dependent: bool },
}

impl VectorField {
    pub fn zeros(n: usize) -> Self {
        Self::Constant(DVector::zeros(n))
    }

    pub fn eval(&self, x: &[f64], t: f64) -> DVector<f64> {
        match self {
            Self::Constant(v) => v.clone(),
            Self::Varying { f, .. } => f(x, t),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(
            self,
            Self::Varying {
                time_dependent: true,
                ..
            }
        )
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Constant(v) if v.iter().all(|&c| c == 0.0))
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(v) => write!(f, "Constant({:?})", v.as_slice()),
            Self::Varying { time_dependent, .. } => {
                write!(f, "Varying {{ time_dependent: {time_dependent} }}")
            }
        }
    }
}

pub type MomentFn = Arc<dyn Fn(&[f64], f64) -> Result<MomentResult, KernelError> + Send + Sync>;

/// Kernel moments over the domain.
#[derive(Clone)]
pub enum MomentField {
    Constant(MomentResult),
    Varying { f: MomentFn, time_dependent: bool },
}

impl MomentField {
    /// Moments of `kernel`, computed once when it is homogeneous and on
    /// demand otherwise.
    pub fn from_kernel(
        kernel: &ProbabilityKernel,
        quad: QuadratureConfig,
    ) -> Result<Self, KernelError> {
        kernel.validate()?;
        let n = kernel.dim();
        if kernel.is_homogeneous() {
            return Ok(Self::Constant(kernel_moments(
                kernel,
                &vec![0.0; n],
                0.0,
                quad,
            )?));
        }
        let k = kernel.clone();
        Ok(Self::Varying {
            f: Arc::new(move |x, t| kernel_moments(&k, x, t, quad)),
            time_dependent: true,
        })
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<MomentResult, KernelError> {
        match self {
            Self::Constant(m) => Ok(m.clone()),
            Self::Varying { f, .. } => f(x, t),
        }
    }
}

/// Coefficients `A`, `K`, `B` of
/// `Lu = u_t - <A, D²u> + u B·∇u + P'(u) (K∇u)·∇u (+ b·∇u)`.
///
/// The optional linear drift `b` is zero for every model derived from a
/// Darcy law; it carries the first-order term of the linear density
/// equation used by the random-walk comparison.
#[derive(Debug, Clone)]
pub struct PDECoefficients {
    pub dim: usize,
    pub a: MatrixField,
    pub k: MatrixField,
    pub b: VectorField,
    pub drift: VectorField,
    pub law: StateLaw,
    /// Smallest eigenvalue of `A` found by the last ellipticity check.
    pub c0: Option<f64>,
}

impl PDECoefficients {
    pub fn new(dim: usize, a: MatrixField, k: MatrixField, b: VectorField, law: StateLaw) -> Self {
        Self {
            dim,
            a,
            k,
            b,
            drift: VectorField::zeros(dim),
            law,
            c0: None,
        }
    }

    /// Constant coefficients.
    pub fn constant(
        a: DMatrix<f64>,
        k: DMatrix<f64>,
        b: DVector<f64>,
        law: StateLaw,
    ) -> Result<Self, KernelError> {
        let n = b.len();
        if a.shape() != (n, n) || k.shape() != (n, n) {
            return Err(KernelError::Dimension(format!(
                "A {:?}, K {:?}, B has length {n}",
                a.shape(),
                k.shape()
            )));
        }
        Ok(Self::new(
            n,
            MatrixField::Constant(a),
            MatrixField::Constant(k),
            VectorField::Constant(b),
            law,
        ))
    }

    pub fn with_drift(mut self, drift: VectorField) -> Self {
        self.drift = drift;
        self
    }

    pub fn is_time_dependent(&self) -> bool {
        self.a.is_time_dependent()
            || self.k.is_time_dependent()
            || self.b.is_time_dependent()
            || self.drift.is_time_dependent()
    }

    /// `K ≡ 0`, so the quadratic gradient term is absent.
    pub fn is_linear(&self) -> bool {
        matches!(&self.k, MatrixField::Constant(k) if k.iter().all(|&v| v == 0.0))
    }

    /// Checks `min eig A >= c0 > 0` at every node of `grid` and every time.
    pub fn check_ellipticity(&mut self, grid: &Grid, times: &[f64]) -> Result<f64, KernelError> {
        if grid.dim() != self.dim {
            return Err(KernelError::Dimension(format!(
                "grid is {}D, coefficients are {}D",
                grid.dim(),
                self.dim
            )));
        }
        let mut c0 = f64::INFINITY;
        let times: &[f64] = if times.is_empty() { &[0.0] } else { times };
        let nodes: Vec<usize> = match &self.a {
            MatrixField::Constant(_) => vec![0],
            MatrixField::Varying { .. } => (0..grid.len()).collect(),
        };
        for &t in times {
            for &k in &nodes {
                let x = grid.coord(k);
                let a = self.a.eval(&x, t);
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(KernelError::Ellipticity {
                        min_eigenvalue: f64::NAN,
                        x,
                        t,
                    });
                }
                let (_, min) = psd_check(&a)?;
                if !(min > 0.0) {
                    return Err(KernelError::Ellipticity {
                        min_eigenvalue: min,
                        x,
                        t,
                    });
                }
                c0 = c0.min(min);
            }
        }
        self.c0 = Some(c0);
        Ok(c0)
    }
}

/// `A` from the kernel moments, `K = state_constant · M0 K̄`, `B = -M0 K̄ g`,
/// with the ellipticity of `A` checked on `grid` at `times`.
pub fn assemble_coefficients(
    moments: &MomentField,
    darcy: &DarcyData,
    law: &StateLaw,
    grid: &Grid,
    times: &[f64],
) -> Result<PDECoefficients, KernelError> {
    let n = darcy.dim();
    let a = match moments {
        MomentField::Constant(m) => {
            if m.a.nrows() != n {
                return Err(KernelError::Dimension(format!(
                    "moments are {}D, Darcy data {n}D",
                    m.a.nrows()
                )));
            }
            MatrixField::Constant(m.a.clone())
        }
        MomentField::Varying { f, time_dependent } => {
            let f = f.clone();
            MatrixField::Varying {
                f: Arc::new(move |x, t| match f(x, t) {
                    Ok(m) => m.a,
                    Err(_) => DMatrix::from_element(n, n, f64::NAN),
                }),
                time_dependent: *time_dependent,
            }
        }
    };
    let mut coeffs = PDECoefficients::new(
        n,
        a,
        MatrixField::Constant(darcy.k()),
        VectorField::Constant(darcy.b()),
        law.clone(),
    );
    coeffs.check_ellipticity(grid, times)?;
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statelaw::IdealDomain;
    use approx::assert_relative_eq;

    fn gauss(mean: &[f64], cov: &[f64], trunc: f64) -> ProbabilityKernel {
        let n = mean.len();
        ProbabilityKernel::gaussian(
            DVector::from_column_slice(mean),
            DMatrix::from_row_slice(n, n, cov),
            trunc,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn even_gaussian_has_zero_mean() {
        let k = gauss(&[0.0, 0.0], &[1.0, 0.3, 0.3, 0.5], DEFAULT_TRUNCATION);
        let m = kernel_moments(&k, &[0.0, 0.0], 0.0, QuadratureConfig::default()).unwrap();
        assert!(m.e.norm() <= 1e-14, "{}", m.e);
    }

    #[test]
    fn wide_gaussian_raw_second_moment() {
        let mean = [0.3, -0.2];
        let cov = [0.5, 0.1, 0.1, 0.2];
        let k = gauss(&mean, &cov, 8.0);
        let m = kernel_moments(&k, &[0.0, 0.0], 0.0, QuadratureConfig::default()).unwrap();
        for i in 0..2 {
            assert_relative_eq!(m.e[i], mean[i], max_relative = 1e-12);
            for j in 0..2 {
                let expected = cov[2 * i + j] + mean[i] * mean[j];
                assert_relative_eq!(m.a_bar[(i, j)], expected, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn uniform_table_moments() {
        let h = 0.1;
        let table = TabulatedDensity::parse("1 0.1 2\n5 5\n").unwrap();
        let k = ProbabilityKernel::tabulated(table, 0.05).unwrap();
        let m = kernel_moments(&k, &[0.0], 0.0, QuadratureConfig::default()).unwrap();
        let a_bar = h * h / 3.0;
        assert!(m.e[0].abs() < 1e-16);
        assert_relative_eq!(m.a_bar[(0, 0)], a_bar, max_relative = 1e-14);
        assert_relative_eq!(m.a[(0, 0)], a_bar / 0.1, max_relative = 1e-14);
    }

    #[test]
    fn table_normalization_error() {
        let table = TabulatedDensity::parse("1 0.1 2\n5 4\n").unwrap();
        let k = ProbabilityKernel::tabulated(table, 1.0).unwrap();
        assert!(matches!(
            kernel_moments(&k, &[0.0], 0.0, QuadratureConfig::default()),
            Err(KernelError::Normalization { .. })
        ));
    }

    #[test]
    fn table_parse_errors() {
        assert!(TabulatedDensity::parse("").is_err());
        assert!(TabulatedDensity::parse("2 0.1 0.1 2\n1 1 1 1").is_err());
        assert!(TabulatedDensity::parse("1 0.1 2\n5 -5").is_err());
        assert!(TabulatedDensity::parse("1 0.1 2\n5 5 5").is_err());
    }

    #[test]
    fn unsupported_order() {
        let k = gauss(&[0.0], &[1.0], 6.0);
        let q = QuadratureConfig {
            order: 0,
            cells: None,
        };
        assert!(matches!(
            kernel_moments(&k, &[0.0], 0.0, q),
            Err(KernelError::Quadrature(_))
        ));
    }

    #[test]
    fn psd_examples() {
        assert_eq!(psd_check(&DMatrix::identity(2, 2)).unwrap(), (true, 1.0));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 4.0]));
        assert_eq!(psd_check(&d).unwrap(), (true, 0.25));
        let (ok, min) = psd_check(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(!ok);
        assert_relative_eq!(min, -1.0, epsilon = 1e-15);
        assert!(matches!(
            psd_check(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])),
            Err(KernelError::Asymmetric { .. })
        ));
    }

    #[test]
    fn darcy_assembly_hand_product() {
        let law = StateLaw::slightly_compressible(0.5).unwrap();
        let darcy = DarcyData::for_law(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]),
            DVector::from_vec(vec![0.0, -9.81]),
            &law,
        )
        .unwrap();
        let grid = Grid::rectangle([0.0, 0.0], [1.0, 1.0], [4, 4]).unwrap();
        let moments = MomentField::Constant(
            kernel_moments(
                &gauss(&[0.0, 0.0], &[0.02, 0.0, 0.0, 0.02], 6.0),
                &[0.0, 0.0],
                0.0,
                QuadratureConfig::default(),
            )
            .unwrap(),
        );
        let c = assemble_coefficients(&moments, &darcy, &law, &grid, &[0.0]).unwrap();
        let k = c.k.eval(&[0.0, 0.0], 0.0);
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 4.0, 4.0]));
        let b = c.b.eval(&[0.0, 0.0], 0.0);
        assert_eq!(b[0], 0.0);
        assert_relative_eq!(b[1], 19.62, epsilon = 1e-14);
        assert!(c.c0.unwrap() > 0.0);
    }

    #[test]
    fn identity_darcy_ideal_gas() {
        let law = StateLaw::ideal(1.0, IdealDomain::HalfLine).unwrap();
        let g = DVector::from_vec(vec![0.5, -1.5]);
        let darcy = DarcyData::for_law(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            g.clone(),
            &law,
        )
        .unwrap();
        assert_eq!(darcy.k(), DMatrix::identity(2, 2));
        assert_eq!(darcy.b(), -g);
        let zero_g = DarcyData::for_law(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            &law,
        )
        .unwrap();
        assert!(zero_g.b().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_indefinite_alignment() {
        let law = StateLaw::ideal(1.0, IdealDomain::HalfLine).unwrap();
        let r = DarcyData::for_law(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            &law,
        );
        assert!(matches!(r, Err(KernelError::Alignment(_))));
    }

    #[test]
    fn ellipticity_error_for_degenerate_a() {
        let law = StateLaw::ideal(1.0, IdealDomain::FullLine).unwrap();
        let mut c = PDECoefficients::constant(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            law,
        )
        .unwrap();
        let grid = Grid::rectangle([0.0, 0.0], [1.0, 1.0], [4, 4]).unwrap();
        assert!(matches!(
            c.check_ellipticity(&grid, &[0.0]),
            Err(KernelError::Ellipticity { .. })
        ));
    }

    #[test]
    fn varying_gaussian_kernel() {
        let kernel = ProbabilityKernel {
            family: KernelFamily::GaussianShifted {
                params: GaussianParams::Field {
                    dim: 1,
                    f: Arc::new(|x: &[f64], _t| {
                        (
                            DVector::zeros(1),
                            DMatrix::from_element(1, 1, 0.01 * (1.0 + x[0] * x[0])),
                        )
                    }),
                },
                trunc: 8.0,
            },
            tau: 0.5,
        };
        let field = MomentField::from_kernel(&kernel, QuadratureConfig::default()).unwrap();
        let m = field.eval(&[2.0], 0.0).unwrap();
        assert_relative_eq!(m.a[(0, 0)], 0.05, max_relative = 1e-10);
    }
}
