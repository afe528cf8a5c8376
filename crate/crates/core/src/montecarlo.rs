//! Random-walk ensembles driven by a displacement kernel, histogram
//! densities and comparison with the linear density equation.
//!
//! Each step moves every particle by `ζ ~ φ(x, t, ·)` sampled at its
//! departure point. The density of the walk then solves
//! `ρ_t = <A, D²ρ> - (E/τ)·∇ρ` for homogeneous kernels.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Field, Grid};
use crate::kernel::{
    sym_sqrt, GaussianParams, KernelError, KernelFamily, Marginal, ProbabilityKernel,
    TabulatedDensity,
};
use crate::solver::Trajectory;

/// Particle partitions, each with its own RNG stream. Fixed so that
/// results do not depend on the worker count.
pub const DEFAULT_PARTITIONS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error("sampler: {0}")]
    Sampler(String),
    #[error("mismatched sampling: {0}")]
    MismatchedSampling(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Inverse-CDF table over the cells of a tabulated density.
#[derive(Debug, Clone)]
struct CellTable {
    cdf: Vec<f64>,
    table: TabulatedDensity,
}

impl CellTable {
    fn new(table: &TabulatedDensity) -> Result<Self, MonteCarloError> {
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(table.values.len());
        for &v in &table.values {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MonteCarloError::Sampler(format!(
                    "cell value {v} is not a density"
                )));
            }
            acc += v;
            cdf.push(acc);
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(MonteCarloError::Sampler(format!(
                "table mass {acc} cannot be normalized"
            )));
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(Self {
            cdf,
            table: table.clone(),
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let u: f64 = rng.random();
        let k = self
            .cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1);
        let center = self.table.cell_center(k);
        for d in 0..out.len() {
            let v: f64 = rng.random();
            out[d] = center[d] + (v - 0.5) * self.table.h[d];
        }
    }
}

/// Pre-processed sampler for one kernel.
#[derive(Debug, Clone)]
enum Sampler {
    Gaussian {
        mean: DVector<f64>,
        root: DMatrix<f64>,
        trunc: f64,
    },
    GaussianField {
        trunc: f64,
    },
    Product(Vec<Marginal>),
    Table(CellTable),
}

fn truncated_normal(rng: &mut ChaCha8Rng, z: &mut [f64], trunc: f64) {
    loop {
        let mut r2 = 0.0;
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
            r2 += *v * *v;
        }
        if r2 <= trunc * trunc {
            return;
        }
    }
}

fn sample_marginal(rng: &mut ChaCha8Rng, m: &Marginal) -> f64 {
    match *m {
        Marginal::Gaussian { mean, sd, trunc } => {
            let mut z = [0.0];
            truncated_normal(rng, &mut z, trunc);
            mean + sd * z[0]
        }
        Marginal::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        Marginal::Triangular { center, half_width } => {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            center + half_width * (a + b - 1.0)
        }
    }
}

impl Sampler {
    fn new(kernel: &ProbabilityKernel) -> Result<Self, MonteCarloError> {
        Ok(match &kernel.family {
            KernelFamily::GaussianShifted {
                params: GaussianParams::Constant { mean, cov },
                trunc,
            } => Sampler::Gaussian {
                mean: mean.clone(),
                root: sym_sqrt(cov),
                trunc: *trunc,
            },
            KernelFamily::GaussianShifted { trunc, .. } => Sampler::GaussianField { trunc: *trunc },
            KernelFamily::ProductOfMarginals(m) => Sampler::Product(m.clone()),
            KernelFamily::Tabulated(t) => Sampler::Table(CellTable::new(t)?),
        })
    }

    fn draw(
        &self,
        kernel: &ProbabilityKernel,
        rng: &mut ChaCha8Rng,
        x: &[f64],
        t: f64,
        out: &mut [f64],
    ) {
        let n = out.len();
        match self {
            Sampler::Gaussian { mean, root, trunc } => {
                let mut z = [0.0; crate::kernel::MAX_DIM];
                truncated_normal(rng, &mut z[..n], *trunc);
                for i in 0..n {
                    out[i] = mean[i] + (0..n).map(|j| root[(i, j)] * z[j]).sum::<f64>();
                }
            }
            Sampler::GaussianField { trunc } => {
                let (mean, cov) = kernel
                    .gaussian_params(x, t)
                    .expect("Gaussian kernel has parameters");
                let root = sym_sqrt(&cov);
                let mut z = [0.0; crate::kernel::MAX_DIM];
                truncated_normal(rng, &mut z[..n], *trunc);
                for i in 0..n {
                    out[i] = mean[i] + (0..n).map(|j| root[(i, j)] * z[j]).sum::<f64>();
                }
            }
            Sampler::Product(ms) => {
                for (o, m) in out.iter_mut().zip(ms) {
                    *o = sample_marginal(rng, m);
                }
            }
            Sampler::Table(t) => t.sample(rng, out),
        }
    }
}

/// Particles of a walk, split into partitions with independent streams.
#[derive(Debug, Clone)]
pub struct WalkEnsemble {
    dim: usize,
    /// Flattened positions, `dim` entries per particle.
    positions: Vec<f64>,
    kernel: ProbabilityKernel,
    sampler: Sampler,
    rngs: Vec<ChaCha8Rng>,
    seed: u64,
    steps: usize,
}

impl WalkEnsemble {
    /// Ensemble from given positions (`dim` entries per particle).
    pub fn new(
        kernel: ProbabilityKernel,
        positions: Vec<f64>,
        seed: u64,
        partitions: usize,
    ) -> Result<Self, MonteCarloError> {
        kernel.validate()?;
        let dim = kernel.dim();
        if positions.len() % dim != 0 || positions.is_empty() {
            return Err(MonteCarloError::Dimension(format!(
                "{} coordinates do not form {dim}-dimensional particles",
                positions.len()
            )));
        }
        let sampler = Sampler::new(&kernel)?;
        let partitions = partitions.max(1).min(positions.len() / dim);
        let rngs = (0..partitions)
            .map(|p| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(p as u64 + 1);
                r
            })
            .collect();
        Ok(Self {
            dim,
            positions,
            kernel,
            sampler,
            rngs,
            seed,
            steps: 0,
        })
    }

    /// `n_p` particles drawn from `N(center, sd² I)`.
    pub fn gaussian_cloud(
        kernel: ProbabilityKernel,
        n_p: usize,
        center: &[f64],
        sd: f64,
        seed: u64,
        partitions: usize,
    ) -> Result<Self, MonteCarloError> {
        let dim = kernel.dim();
        if center.len() != dim {
            return Err(MonteCarloError::Dimension(format!(
                "center has {} coordinates, kernel {dim}",
                center.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pos = Vec::with_capacity(n_p * dim);
        for _ in 0..n_p {
            for &c in center {
                let z: f64 = rng.sample(StandardNormal);
                pos.push(c + sd * z);
            }
        }
        Self::new(kernel, pos, seed, partitions)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.kernel.tau
    }

    pub fn kernel(&self) -> &ProbabilityKernel {
        &self.kernel
    }

    /// Centroid of the particles.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.positions.chunks(self.dim) {
            for d in 0..self.dim {
                m[d] += p[d];
            }
        }
        let n = self.len() as f64;
        m.iter().map(|v| v / n).collect()
    }

    fn chunk_len(&self) -> usize {
        let n = self.len();
        n.div_ceil(self.rngs.len()) * self.dim
    }

    /// Moves every particle by an independent draw and advances time by `τ`.
    pub fn walk_step(&mut self) {
        let t = self.time();
        let dim = self.dim;
        let chunk = self.chunk_len();
        let kernel = &self.kernel;
        let sampler = &self.sampler;
        self.positions
            .par_chunks_mut(chunk)
            .zip(self.rngs.par_iter_mut())
            .for_each(|(part, rng)| {
                let mut zeta = [0.0; crate::kernel::MAX_DIM];
                for p in part.chunks_mut(dim) {
                    sampler.draw(kernel, rng, p, t, &mut zeta[..dim]);
                    for d in 0..dim {
                        p[d] += zeta[d];
                    }
                }
            });
        self.steps += 1;
    }

    pub fn walk(&mut self, steps: usize) {
        for _ in 0..steps {
            self.walk_step();
        }
    }

    /// `n` single-step displacements drawn at `(x, t)` with a stream
    /// independent of the particle streams. Flattened, `dim` per draw.
    pub fn sample_displacements(&self, x: &[f64], t: f64, n: usize, stream: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::MAX - stream);
        let mut out = vec![0.0; n * self.dim];
        for z in out.chunks_mut(self.dim) {
            self.sampler.draw(&self.kernel, &mut rng, x, t, z);
        }
        out
    }
}

/// Histogram with cells of size `h` centered on the grid nodes, normalized by
/// the total particle count. Particles outside every cell are not counted.
pub fn empirical_density(e: &WalkEnsemble, grid: &Grid) -> Result<Field, MonteCarloError> {
    if grid.dim() != e.dim() {
        return Err(MonteCarloError::Dimension(format!(
            "grid is {}D, ensemble {}D",
            grid.dim(),
            e.dim()
        )));
    }
    let h = grid.h().to_vec();
    let lo = grid.lower().to_vec();
    let dims: Vec<usize> = (0..grid.dim()).map(|d| grid.nodes_per_axis(d)).collect();
    let dim = e.dim();
    let chunk = e.chunk_len();
    let counts = e
        .positions
        .par_chunks(chunk)
        .map(|part| {
            let mut c = vec![0u64; grid.len()];
            'particle: for p in part.chunks(dim) {
                let mut k = 0;
                for d in (0..dim).rev() {
                    let pos = ((p[d] - lo[d]) / h[d] + 0.5).floor();
                    if !(pos >= 0.0 && pos < dims[d] as f64) {
                        continue 'particle;
                    }
                    k = k * dims[d] + pos as usize;
                }
                c[k] += 1;
            }
            c
        })
        .reduce(
            || vec![0u64; grid.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let norm = e.len() as f64 * grid.cell_volume();
    Ok(Field {
        t: e.time(),
        values: counts.into_iter().map(|c| c as f64 / norm).collect(),
    })
}

/// Empirical densities at recorded step counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory {
    pub grid: Grid,
    pub frames: Vec<Field>,
    pub particles: usize,
}

impl DensityTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    /// `t,x(,y),rho` rows.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        if self.grid.dim() == 1 {
            writeln!(out, "t,x,rho")?;
        } else {
            writeln!(out, "t,x,y,rho")?;
        }
        for f in &self.frames {
            for (k, v) in f.values.iter().enumerate() {
                let x = self.grid.coord(k);
                write!(out, "{:.16e}", f.t)?;
                for c in x {
                    write!(out, ",{c:.16e}")?;
                }
                writeln!(out, ",{v:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Walks the ensemble and records the density after each listed step count
/// (and at the start when `0` is listed).
pub fn run_walk(
    e: &mut WalkEnsemble,
    grid: &Grid,
    record_steps: &[usize],
) -> Result<DensityTrajectory, MonteCarloError> {
    let mut marks = record_steps.to_vec();
    marks.sort_unstable();
    marks.dedup();
    let mut frames = Vec::with_capacity(marks.len());
    for m in marks {
        if m < e.steps() {
            return Err(MonteCarloError::MismatchedSampling(format!(
                "step {m} is already past (ensemble at step {})",
                e.steps()
            )));
        }
        e.walk(m - e.steps());
        frames.push(empirical_density(e, grid)?);
    }
    Ok(DensityTrajectory {
        grid: grid.clone(),
        frames,
        particles: e.len(),
    })
}

/// Discrepancies between walk and PDE densities at matched times.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    /// `Σ |ρ_mc - ρ_pde| · cell volume`.
    pub l1: Vec<f64>,
    pub linf: Vec<f64>,
}

impl ErrorReport {
    pub fn max_l1(&self) -> f64 {
        self.l1.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_linf(&self) -> f64 {
        self.linf.iter().copied().fold(0.0, f64::max)
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Compares every walk frame with the PDE frame at the same time.
pub fn compare_to_pde(
    mc: &DensityTrajectory,
    pde: &Trajectory,
) -> Result<ErrorReport, MonteCarloError> {
    if mc.grid != pde.grid {
        return Err(MonteCarloError::MismatchedSampling(
            "walk and PDE grids differ".into(),
        ));
    }
    let vol = mc.grid.cell_volume();
    let mut rep = ErrorReport {
        times: Vec::new(),
        l1: Vec::new(),
        linf: Vec::new(),
    };
    for f in &mc.frames {
        let p = pde
            .frames
            .iter()
            .find(|p| same_time(p.t(), f.t))
            .ok_or_else(|| {
                MonteCarloError::MismatchedSampling(format!("no PDE frame at t = {}", f.t))
            })?;
        let (mut l1, mut linf) = (0.0f64, 0.0f64);
        for (a, b) in f.values.iter().zip(&p.field.values) {
            let d = (a - b).abs();
            l1 += d * vol;
            linf = linf.max(d);
        }
        rep.times.push(f.t);
        rep.l1.push(l1);
        rep.linf.push(linf);
    }
    Ok(rep)
}

/// Center of mass `Σ x ρ vol / Σ ρ vol` of a field.
pub fn center_of_mass(field: &Field, grid: &Grid) -> Vec<f64> {
    let n = grid.dim();
    let mut m = vec![0.0; n];
    let mut mass = 0.0;
    for (k, &v) in field.values.iter().enumerate() {
        let x = grid.coord(k);
        for d in 0..n {
            m[d] += x[d] * v;
        }
        mass += v;
    }
    m.iter().map(|v| v / mass).collect()
}
