//! Explicit monotone finite-difference solver for
//! `u_t = <A, D²u> - u B·∇u - P'(u) (K∇u)·∇u - b·∇u` with constant Dirichlet
//! data on 1D intervals and 2D rectangles.
//!
//! Every update is written as `u + dt Σ c_nb (u_nb - u)` with `c_nb >= 0`,
//! so a step under `stable_dt` is a convex combination of neighbor values.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Field, Grid, GridError};
use crate::kernel::{KernelError, PDECoefficients};
use crate::statelaw::LawKind;

/// Values pushed just inside an open lower end of `J` by the range clamp.
pub const U_FLOOR: f64 = 1e-12;
/// Safety factor used when none is configured.
pub const DEFAULT_SAFETY: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("degenerate problem: {0}")]
    DegenerateCoefficients(String),
    #[error(
        "mixed coefficient |a12| = {a12} at node {node} exceeds the positive-stencil bound {bound}"
    )]
    Monotonicity { node: usize, a12: f64, bound: f64 },
    #[error("value {value} at node {node}, t = {t} leaves the closure of J")]
    RangeViolation { node: usize, value: f64, t: f64 },
    #[error("time step {dt} exceeds the stable step {stable}")]
    StepTooLarge { dt: f64, stable: f64 },
    #[error("incompatible problem data: {0}")]
    Incompatible(String),
    #[error("non-finite value produced at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Treatment of the first-order terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Advection {
    /// Centered differences wherever they keep every neighbor weight
    /// nonnegative, first-order upwinding elsewhere.
    #[default]
    Hybrid,
    /// Upwinding everywhere.
    Upwind,
}

/// Nonlinear initial-boundary-value problem with constant boundary value.
#[derive(Debug, Clone)]
pub struct IBVProblem {
    pub coefficients: PDECoefficients,
    pub u_star: f64,
    pub u0: Field,
    /// Check (and clamp within tolerance) the range against `J`.
    pub check_range: bool,
}

impl IBVProblem {
    pub fn new(
        coefficients: PDECoefficients,
        u_star: f64,
        u0: Field,
        grid: &Grid,
    ) -> Result<Self, SolverError> {
        if grid.dim() != coefficients.dim {
            return Err(SolverError::Incompatible(format!(
                "grid is {}D, coefficients {}D",
                grid.dim(),
                coefficients.dim
            )));
        }
        if u0.values.len() != grid.len() {
            return Err(GridError::Size {
                expected: grid.len(),
                got: u0.values.len(),
            }
            .into());
        }
        u0.check_finite()?;
        if !u_star.is_finite() {
            return Err(SolverError::Incompatible(format!("u* = {u_star}")));
        }
        for k in grid.boundary_indices() {
            if u0.values[k] != u_star {
                return Err(SolverError::Incompatible(format!(
                    "u0 = {} at boundary node {k} differs from u* = {u_star}",
                    u0.values[k]
                )));
            }
        }
        let j = coefficients.law.domain();
        for (k, &v) in u0.values.iter().enumerate() {
            if !j.closure_contains(v) {
                return Err(SolverError::RangeViolation {
                    node: k,
                    value: v,
                    t: u0.t,
                });
            }
        }
        Ok(Self {
            coefficients,
            u_star,
            u0,
            check_range: true,
        })
    }

    pub fn range_tol(&self) -> f64 {
        1e-12 * (1.0 + self.u_star.abs())
    }
}

/// Coefficients sampled at one node.
#[derive(Debug, Clone, Copy, Default)]
struct NodeCoef {
    a11: f64,
    a12: f64,
    a22: f64,
    k: [f64; 4],
    b: [f64; 2],
    d: [f64; 2],
}

/// Problem, grid and sampled coefficients ready for stepping.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    problem: &'a IBVProblem,
    grid: &'a Grid,
    advection: Advection,
    coef: Vec<NodeCoef>,
    sampled_at: f64,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        problem: &'a IBVProblem,
        grid: &'a Grid,
        advection: Advection,
    ) -> Result<Self, SolverError> {
        if grid.dim() != problem.coefficients.dim {
            return Err(SolverError::Incompatible(format!(
                "grid is {}D, coefficients {}D",
                grid.dim(),
                problem.coefficients.dim
            )));
        }
        if grid.is_empty() {
            return Err(SolverError::DegenerateCoefficients(
                "grid has no interior nodes".into(),
            ));
        }
        let mut s = Self {
            problem,
            grid,
            advection,
            coef: Vec::new(),
            sampled_at: f64::NAN,
            interior: grid.interior_indices(),
            boundary: grid.boundary_indices(),
        };
        s.sample(problem.u0.t)?;
        Ok(s)
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn problem(&self) -> &IBVProblem {
        self.problem
    }

    fn sample(&mut self, t: f64) -> Result<(), SolverError> {
        if !self.coef.is_empty()
            && (self.sampled_at == t || !self.problem.coefficients.is_time_dependent())
        {
            return Ok(());
        }
        let c = &self.problem.coefficients;
        let g = self.grid;
        let dim = g.dim();
        let h = g.h();
        let mut coef = vec![NodeCoef::default(); g.len()];
        for &k in &self.interior {
            let x = g.coord(k);
            let a = c.a.eval(&x, t);
            let kk = c.k.eval(&x, t);
            let b = c.b.eval(&x, t);
            let d = c.drift.eval(&x, t);
            let mut nc = NodeCoef::default();
            if dim == 1 {
                nc.a11 = a[(0, 0)];
                nc.k[0] = kk[(0, 0)];
                nc.b[0] = b[0];
                nc.d[0] = d[0];
            } else {
                nc.a11 = a[(0, 0)];
                nc.a22 = a[(1, 1)];
                nc.a12 = 0.5 * (a[(0, 1)] + a[(1, 0)]);
                nc.k = [kk[(0, 0)], kk[(0, 1)], kk[(1, 0)], kk[(1, 1)]];
                nc.b = [b[0], b[1]];
                nc.d = [d[0], d[1]];
                let bound = (nc.a11 * h[1] / h[0]).min(nc.a22 * h[0] / h[1]);
                if nc.a12.abs() > bound {
                    return Err(SolverError::Monotonicity {
                        node: k,
                        a12: nc.a12,
                        bound,
                    });
                }
            }
            let all = [
                nc.a11, nc.a12, nc.a22, nc.k[0], nc.k[1], nc.k[2], nc.k[3], nc.b[0], nc.b[1],
                nc.d[0], nc.d[1],
            ];
            if all.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::DegenerateCoefficients(format!(
                    "non-finite coefficient at node {k}"
                )));
            }
            coef[k] = nc;
        }
        self.coef = coef;
        self.sampled_at = t;
        Ok(())
    }

    /// Centered gradient at interior node `k`.
    fn grad(&self, u: &[f64], k: usize) -> [f64; 2] {
        let g = self.grid;
        let h = g.h();
        let gx = (u[k + 1] - u[k - 1]) / (2.0 * h[0]);
        if g.dim() == 1 {
            return [gx, 0.0];
        }
        let s = g.stride(1);
        [gx, (u[k + s] - u[k - s]) / (2.0 * h[1])]
    }

    /// Frozen velocity `b + u B + P'(u) K ∇ᶜu` (nonlinear) or `b + u B` (truncated).
    fn velocity(&self, u: &[f64], k: usize, nonlinear: bool) -> [f64; 2] {
        let c = &self.coef[k];
        let uk = u[k];
        let mut w = [c.d[0] + uk * c.b[0], c.d[1] + uk * c.b[1]];
        if nonlinear {
            let g = self.grad(u, k);
            let pp = self.problem.coefficients.law.p_prime_unchecked(uk);
            if self.grid.dim() == 1 {
                w[0] += pp * c.k[0] * g[0];
            } else {
                w[0] += pp * (c.k[0] * g[0] + c.k[1] * g[1]);
                w[1] += pp * (c.k[2] * g[0] + c.k[3] * g[1]);
            }
        }
        w
    }

    /// `Σ c_nb (v_nb - v)` at node `k` for the velocity `w`.
    fn spatial(&self, v: &[f64], k: usize, w: [f64; 2]) -> f64 {
        let g = self.grid;
        let h = g.h();
        let c = &self.coef[k];
        let vk = v[k];
        let cx = c.a11 / (h[0] * h[0]);
        if g.dim() == 1 {
            let (e, wst) = self.first_order(cx, w[0], h[0]);
            return e * (v[k + 1] - vk) + wst * (v[k - 1] - vk);
        }
        let s = g.stride(1);
        let cy = c.a22 / (h[1] * h[1]);
        let cm = c.a12.abs() / (h[0] * h[1]);
        let (e, wst) = self.first_order(cx - cm, w[0], h[0]);
        let (n, so) = self.first_order(cy - cm, w[1], h[1]);
        let mut sum = e * (v[k + 1] - vk)
            + wst * (v[k - 1] - vk)
            + n * (v[k + s] - vk)
            + so * (v[k - s] - vk);
        if cm > 0.0 {
            let diag = if c.a12 > 0.0 {
                (v[k + s + 1] - vk) + (v[k - s - 1] - vk)
            } else {
                (v[k + s - 1] - vk) + (v[k - s + 1] - vk)
            };
            sum += cm * diag;
        }
        sum
    }

    /// (forward, backward) neighbor weights along one axis given the
    /// diffusive weight `base` and velocity component `w`.
    fn first_order(&self, base: f64, w: f64, h: f64) -> (f64, f64) {
        let half = 0.5 * w / h;
        let centered = self.advection == Advection::Hybrid && half.abs() <= base;
        if centered {
            (base - half, base + half)
        } else if w > 0.0 {
            (base, base + w / h)
        } else {
            (base - w / h, base)
        }
    }

    /// Stable explicit step for the current state.
    pub fn stable_dt(&mut self, state: &Field, safety: f64) -> Result<f64, SolverError> {
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(SolverError::DegenerateCoefficients(format!(
                "safety factor {safety} outside (0, 1]"
            )));
        }
        self.sample(state.t)?;
        let g = self.grid;
        let h = g.h();
        let dim = g.dim();
        let mut sup_a = [0.0f64; 3];
        let mut sup_w = [0.0f64; 2];
        for &k in &self.interior {
            let c = &self.coef[k];
            sup_a[0] = sup_a[0].max(c.a11.abs());
            sup_a[1] = sup_a[1].max(c.a12.abs());
            sup_a[2] = sup_a[2].max(c.a22.abs());
            let w = self.velocity(&state.values, k, true);
            sup_w[0] = sup_w[0].max(w[0].abs());
            sup_w[1] = sup_w[1].max(w[1].abs());
        }
        let mut denom = 2.0 * sup_a[0] / (h[0] * h[0]) + sup_w[0] / h[0];
        if dim == 2 {
            denom += 2.0 * sup_a[2] / (h[1] * h[1])
                + 2.0 * sup_a[1] / (2.0 * h[0] * h[1])
                + sup_w[1] / h[1];
        }
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(SolverError::DegenerateCoefficients(format!(
                "stability denominator {denom}"
            )));
        }
        Ok(safety / denom)
    }

    /// One forward-Euler step.
    pub fn step(&mut self, state: &Field, dt: f64) -> Result<Field, SolverError> {
        self.sample(state.t)?;
        let u = &state.values;
        let mut out = u.clone();
        let g = self.grid;
        let nx = g.nodes_per_axis(0);
        let update = |k: usize| -> f64 {
            let w = self.velocity(u, k, true);
            u[k] + dt * self.spatial(u, k, w)
        };
        if g.dim() == 1 {
            for k in 1..nx - 1 {
                out[k] = update(k);
            }
        } else {
            let ny = g.nodes_per_axis(1);
            out[nx..nx * (ny - 1)]
                .par_chunks_mut(nx)
                .enumerate()
                .for_each(|(r, row)| {
                    let base = (r + 1) * nx;
                    for i in 1..nx - 1 {
                        row[i] = update(base + i);
                    }
                });
        }
        let t = state.t + dt;
        self.enforce(&mut out, t)?;
        Ok(Field { t, values: out })
    }

    /// Boundary reimposition, finiteness and range handling.
    fn enforce(&self, v: &mut [f64], t: f64) -> Result<(), SolverError> {
        let u_star = self.problem.u_star;
        for &k in &self.boundary {
            v[k] = u_star;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SolverError::NonFinite(t));
        }
        if !self.problem.check_range {
            return Ok(());
        }
        let law = &self.problem.coefficients.law;
        let j = law.domain();
        let tol = self.problem.range_tol();
        let open_log = matches!(law.kind(), LawKind::SlightlyCompressible { .. });
        for &k in &self.interior {
            let x = v[k];
            if j.closure_contains(x) {
                continue;
            }
            let excess = j.excess(x);
            if excess > tol {
                return Err(SolverError::RangeViolation {
                    node: k,
                    value: x,
                    t,
                });
            }
            v[k] = if x < j.lo.value {
                if open_log {
                    j.lo.value + U_FLOOR
                } else {
                    j.lo.value
                }
            } else {
                j.hi.value
            };
        }
        Ok(())
    }

    /// Discrete `Lu` at interior nodes (zero on the boundary ring), with the
    /// stencils of `step`.
    pub fn residual_l(&mut self, state: &Field, time_deriv: &Field) -> Result<Field, SolverError> {
        self.sample(state.t)?;
        let mut r = vec![0.0; state.values.len()];
        for &k in &self.interior {
            let w = self.velocity(&state.values, k, true);
            r[k] = time_deriv.values[k] - self.spatial(&state.values, k, w);
        }
        Ok(Field {
            t: state.t,
            values: r,
        })
    }

    /// Discrete truncated operator `w_t - <A, D²w> + (b + u B)·∇w`, with the
    /// drift frozen at `u`.
    pub fn residual_truncated(
        &mut self,
        w: &Field,
        w_t: &Field,
        u: &Field,
    ) -> Result<Field, SolverError> {
        self.sample(u.t)?;
        let mut r = vec![0.0; w.values.len()];
        for &k in &self.interior {
            let vel = self.velocity(&u.values, k, false);
            r[k] = w_t.values[k] - self.spatial(&w.values, k, vel);
        }
        Ok(Field { t: u.t, values: r })
    }
}

/// Time-step rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    /// `stable_dt` with this safety factor, recomputed every step.
    Stable(f64),
    /// Fixed step; an error if it ever exceeds the stable step (safety 1).
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub t_end: f64,
    pub time_step: TimeStep,
    /// Record a frame every this many steps (0: only checkpoints and the end).
    pub record_every: usize,
    /// Times that are hit exactly and recorded.
    pub checkpoints: Vec<f64>,
    /// Store with each frame the result of one further step of the same
    /// rule, for forward-difference time derivatives.
    pub companions: bool,
    pub advection: Advection,
    pub max_steps: usize,
}

impl SolveOptions {
    pub fn new(t_end: f64, record_every: usize) -> Self {
        Self {
            t_end,
            time_step: TimeStep::Stable(DEFAULT_SAFETY),
            record_every,
            checkpoints: Vec::new(),
            companions: false,
            advection: Advection::Hybrid,
            max_steps: 50_000_000,
        }
    }
}

/// Recorded state with its closed-domain extrema.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub field: Field,
    pub max: f64,
    pub min: f64,
    /// One further step from `field` and its length.
    pub companion: Option<(Field, f64)>,
}

impl Frame {
    fn new(field: Field) -> Self {
        Self {
            max: field.max(),
            min: field.min(),
            field,
            companion: None,
        }
    }

    pub fn t(&self) -> f64 {
        self.field.t
    }

    pub fn osc(&self) -> f64 {
        self.max - self.min
    }

    /// Forward-difference time derivative from the companion.
    pub fn time_derivative(&self) -> Option<Field> {
        self.companion.as_ref().map(|(next, dt)| Field {
            t: self.field.t,
            values: next
                .values
                .iter()
                .zip(&self.field.values)
                .map(|(a, b)| (a - b) / dt)
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub frames: Vec<Frame>,
    pub u_star: f64,
    pub m_star: f64,
    pub big_m_star: f64,
    /// Hash of the sampled coefficients and the state law.
    pub coefficients_id: u64,
    pub steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(Frame::t).collect()
    }

    pub fn initial(&self) -> &Frame {
        &self.frames[0]
    }

    pub fn last(&self) -> &Frame {
        self.frames.last().expect("trajectory has a frame")
    }

    /// First frame with `t >= target` (within a relative 1e-12).
    pub fn frame_at_or_after(&self, target: f64) -> Option<&Frame> {
        let slack = 1e-12 * target.abs().max(1.0);
        self.frames.iter().find(|f| f.t() >= target - slack)
    }

    /// Same grid and times, values mapped through `f`.
    pub fn map_values(
        &self,
        mut f: impl FnMut(f64) -> Result<f64, String>,
    ) -> Result<Trajectory, String> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for fr in &self.frames {
            let mut map_field = |field: &Field| -> Result<Field, String> {
                let values = field
                    .values
                    .iter()
                    .map(|&v| f(v))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Field { t: field.t, values })
            };
            let field = map_field(&fr.field)?;
            let companion = match &fr.companion {
                Some((c, dt)) => Some((map_field(c)?, *dt)),
                None => None,
            };
            let mut frame = Frame::new(field);
            frame.companion = companion;
            frames.push(frame);
        }
        let first = &frames[0];
        let (m, big_m) = (first.min, first.max);
        Ok(Trajectory {
            grid: self.grid.clone(),
            u_star: f(self.u_star)?,
            m_star: m,
            big_m_star: big_m,
            coefficients_id: self.coefficients_id,
            steps: self.steps,
            frames,
        })
    }

    /// `t, x (, y), u` rows for every recorded frame.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        let dim = self.grid.dim();
        if dim == 1 {
            writeln!(out, "t,x,u")?;
        } else {
            writeln!(out, "t,x,y,u")?;
        }
        for fr in &self.frames {
            for (k, v) in fr.field.values.iter().enumerate() {
                let x = self.grid.coord(k);
                write!(out, "{:.16e}", fr.t())?;
                for c in &x {
                    write!(out, ",{c:.16e}")?;
                }
                writeln!(out, ",{v:.16e}")?;
            }
        }
        Ok(())
    }

    /// `t, max_u, min_u, osc_u` rows.
    pub fn write_summary_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "t,max_u,min_u,osc_u")?;
        for fr in &self.frames {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                fr.t(),
                fr.max,
                fr.min,
                fr.osc()
            )?;
        }
        Ok(())
    }
}

/// Hash of the coefficients sampled on `grid` at `t` plus the state law.
pub fn coefficients_id(c: &PDECoefficients, grid: &Grid, t: f64) -> u64 {
    let mut h = DefaultHasher::new();
    format!("{:?}", c.law).hash(&mut h);
    for k in 0..grid.len() {
        let x = grid.coord(k);
        for v in
            c.a.eval(&x, t)
                .iter()
                .chain(c.k.eval(&x, t).iter())
                .chain(c.b.eval(&x, t).iter())
                .chain(c.drift.eval(&x, t).iter())
        {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// `stable_dt` evaluated on the initial data.
pub fn stable_dt(p: &IBVProblem, g: &Grid, safety: f64) -> Result<f64, SolverError> {
    Stepper::new(p, g, Advection::Hybrid)?.stable_dt(&p.u0, safety)
}

pub fn step(state: &Field, p: &IBVProblem, g: &Grid, dt: f64) -> Result<Field, SolverError> {
    let mut s = Stepper::new(p, g, Advection::Hybrid)?;
    let stable = s.stable_dt(state, 1.0)?;
    if dt > stable {
        return Err(SolverError::StepTooLarge { dt, stable });
    }
    s.step(state, dt)
}

pub fn residual_l(
    state: &Field,
    time_deriv: &Field,
    p: &IBVProblem,
    g: &Grid,
) -> Result<Field, SolverError> {
    Stepper::new(p, g, Advection::Hybrid)?.residual_l(state, time_deriv)
}

pub fn solve(
    p: &IBVProblem,
    g: &Grid,
    t_end: f64,
    record_every: usize,
) -> Result<Trajectory, SolverError> {
    solve_with(p, g, &SolveOptions::new(t_end, record_every))
}

pub fn solve_with(
    p: &IBVProblem,
    g: &Grid,
    opts: &SolveOptions,
) -> Result<Trajectory, SolverError> {
    if !(opts.t_end >= 0.0 && opts.t_end.is_finite()) {
        return Err(SolverError::Incompatible(format!("t_end = {}", opts.t_end)));
    }
    let mut stepper = Stepper::new(p, g, opts.advection)?;
    let t0 = p.u0.t;
    let t_end = t0 + opts.t_end;
    let mut marks: Vec<f64> = opts
        .checkpoints
        .iter()
        .map(|c| t0 + c)
        .filter(|&c| c > t0 && c < t_end)
        .collect();
    if t_end > t0 {
        marks.push(t_end);
    }
    marks.sort_by(f64::total_cmp);
    marks.dedup();

    let choose_dt = |stepper: &mut Stepper, state: &Field| -> Result<f64, SolverError> {
        match opts.time_step {
            TimeStep::Stable(safety) => stepper.stable_dt(state, safety),
            TimeStep::Fixed(dt) => {
                let stable = stepper.stable_dt(state, 1.0)?;
                if dt > stable {
                    Err(SolverError::StepTooLarge { dt, stable })
                } else {
                    Ok(dt)
                }
            }
        }
    };
    let record = |stepper: &mut Stepper, field: Field| -> Result<Frame, SolverError> {
        let mut frame = Frame::new(field);
        if opts.companions {
            let dt = choose_dt(stepper, &frame.field)?;
            let next = stepper.step(&frame.field, dt)?;
            frame.companion = Some((next, dt));
        }
        Ok(frame)
    };

    let mut state = p.u0.clone();
    let mut frames = vec![record(&mut stepper, state.clone())?];
    let mut steps = 0usize;
    let mut next_mark = 0usize;
    while next_mark < marks.len() {
        let target = marks[next_mark];
        let mut dt = choose_dt(&mut stepper, &state)?;
        let landing = state.t + dt >= target || (target - state.t - dt) <= 1e-12 * dt;
        if landing {
            dt = target - state.t;
        }
        let mut next = stepper.step(&state, dt)?;
        steps += 1;
        if landing {
            next.t = target;
            next_mark += 1;
        }
        state = next;
        if landing || (opts.record_every > 0 && steps % opts.record_every == 0) {
            frames.push(record(&mut stepper, state.clone())?);
        }
        if steps >= opts.max_steps {
            return Err(SolverError::DegenerateCoefficients(format!(
                "step budget {} exhausted at t = {}",
                opts.max_steps, state.t
            )));
        }
    }
    let first = &frames[0];
    Ok(Trajectory {
        grid: g.clone(),
        u_star: p.u_star,
        m_star: first.min,
        big_m_star: first.max,
        coefficients_id: coefficients_id(&p.coefficients, g, t0),
        steps,
        frames,
    })
}
