//! derive → solve → transform → check, with the output files.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use porolab::analysis::{
    self, BarrierSpec, CoefficientBounds, DecayMode, DomainGeometry, GrowthConstants, Report,
    TailBounds,
};
use porolab::grid::{Field, Grid};
use porolab::kernel::{
    kernel_moments, DarcyData, Marginal, MatrixField, MomentField, PDECoefficients,
    ProbabilityKernel, QuadratureConfig, TabulatedDensity, VectorField,
};
use porolab::montecarlo::{self, WalkEnsemble};
use porolab::solver::{self, Advection, IBVProblem, SolveOptions, TimeStep, Trajectory};
use porolab::statelaw::{
    classify_edges, EdgeCase, EdgeClassification, IdealDomain, LawKind, StateLaw,
};
use porolab::transform::{self, Edge, Transform};
use thiserror::Error;

use crate::config::{
    AdvectionConfig, CheckKind, ConfigError, DecayModeConfig, DomainConfig, KernelConfig,
    LawConfig, MarginalConfig, MonteCarloConfig, ProfileConfig, Scenario,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {message}")]
    Module {
        stage: &'static str,
        message: String,
    },
    #[error("io: {0}")]
    Io(String),
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> RunError {
    move |e| RunError::Module {
        stage,
        message: e.to_string(),
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Result of one scenario.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: String,
    pub reports: Vec<Report>,
    pub constants: Option<GrowthConstants>,
    pub geometry: Option<DomainGeometry>,
    pub trajectory: Trajectory,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(Report::passed)
    }

    pub fn report(&self, name: &str) -> Option<&Report> {
        self.reports.iter().find(|r| r.name == name)
    }
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

pub fn build_grid(s: &Scenario) -> Result<Grid, RunError> {
    let interior: Vec<usize> = s.grid.cells.iter().map(|c| c.saturating_sub(1)).collect();
    Grid::new(&s.grid.lower, &s.grid.upper, &interior)
        .map_err(|e| ConfigError::key("grid", e.to_string()).into())
}

pub fn build_law(s: &Scenario) -> Result<StateLaw, RunError> {
    let law = match s.state_law {
        LawConfig::Ideal { c, domain } => StateLaw::ideal(
            c,
            match domain {
                DomainConfig::HalfLine => IdealDomain::HalfLine,
                DomainConfig::FullLine => IdealDomain::FullLine,
            },
        ),
        LawConfig::Isentropic { gamma, c } => StateLaw::isentropic(gamma, c),
        LawConfig::SlightlyCompressible { kappa } => StateLaw::slightly_compressible(kappa),
    };
    law.map_err(|e| ConfigError::key("state_law", e.to_string()).into())
}

pub fn build_kernel(s: &Scenario) -> Result<Option<ProbabilityKernel>, RunError> {
    let Some(k) = &s.kernel else { return Ok(None) };
    let kernel = match k {
        KernelConfig::Gaussian {
            mean,
            cov,
            trunc,
            tau,
        } => ProbabilityKernel::gaussian(
            DVector::from_column_slice(mean),
            matrix(cov),
            trunc.unwrap_or(porolab::kernel::DEFAULT_TRUNCATION),
            *tau,
        ),
        KernelConfig::Product { marginals, tau } => ProbabilityKernel::product(
            marginals
                .iter()
                .map(|m| match *m {
                    MarginalConfig::Gaussian { mean, sd, trunc } => Marginal::Gaussian {
                        mean,
                        sd,
                        trunc: trunc.unwrap_or(porolab::kernel::DEFAULT_TRUNCATION),
                    },
                    MarginalConfig::Uniform { low, high } => Marginal::Uniform { low, high },
                    MarginalConfig::Triangular { center, half_width } => {
                        Marginal::Triangular { center, half_width }
                    }
                })
                .collect(),
            *tau,
        ),
        KernelConfig::Tabulated { file, table, tau } => {
            let text = match (file, table) {
                (Some(f), _) => {
                    let path = match &s.base_dir {
                        Some(b) if f.is_relative() => b.join(f),
                        _ => f.clone(),
                    };
                    fs::read_to_string(&path).map_err(|e| {
                        ConfigError::key("kernel.file", format!("{}: {e}", path.display()))
                    })?
                }
                (None, Some(t)) => t.clone(),
                (None, None) => return Err(ConfigError::key("kernel.file", "missing").into()),
            };
            let t = TabulatedDensity::parse(&text)
                .map_err(|e| ConfigError::key("kernel.table", e.to_string()))?;
            ProbabilityKernel::tabulated(t, *tau)
        }
    };
    kernel
        .map(Some)
        .map_err(|e| ConfigError::key("kernel", e.to_string()).into())
}

/// Coefficients of the scenario; `kernel_drift` adds `b = E/τ` (density
/// equation of the walk).
pub fn build_coefficients(
    s: &Scenario,
    grid: &Grid,
    law: &StateLaw,
    kernel: Option<&ProbabilityKernel>,
    kernel_drift: bool,
) -> Result<PDECoefficients, RunError> {
    let n = s.dim();
    let center: Vec<f64> = s
        .grid
        .lower
        .iter()
        .zip(&s.grid.upper)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let mut drift = VectorField::zeros(n);
    let a = match (s.coefficients.as_ref().and_then(|c| c.a.as_ref()), kernel) {
        (Some(a), _) => MatrixField::Constant(matrix(a)),
        (None, Some(k)) if k.is_homogeneous() => {
            let m = kernel_moments(k, &center, 0.0, QuadratureConfig::default())
                .map_err(stage("kernel moments"))?;
            if kernel_drift {
                drift = VectorField::Constant(m.drift.clone());
            }
            MatrixField::Constant(m.a)
        }
        (None, Some(k)) => {
            if kernel_drift {
                return Err(ConfigError::key(
                    "kernel",
                    "the walk comparison needs a homogeneous kernel",
                )
                .into());
            }
            let field = MomentField::from_kernel(k, QuadratureConfig::default())
                .map_err(stage("kernel moments"))?;
            match field {
                MomentField::Constant(m) => MatrixField::Constant(m.a),
                MomentField::Varying { f, time_dependent } => MatrixField::Varying {
                    f: std::sync::Arc::new(move |x, t| match f(x, t) {
                        Ok(m) => m.a,
                        Err(_) => DMatrix::from_element(n, n, f64::NAN),
                    }),
                    time_dependent,
                },
            }
        }
        (None, None) => return Err(ConfigError::key("kernel", "missing").into()),
    };
    let (k, b) = if let Some(d) = &s.darcy {
        let dd = DarcyData::for_law(
            matrix(&d.m0),
            matrix(&d.k_bar),
            DVector::from_column_slice(&d.g),
            law,
        )
        .map_err(|e| ConfigError::key("darcy", e.to_string()))?;
        (dd.k(), dd.b())
    } else {
        let c = s.coefficients.as_ref();
        (
            c.and_then(|c| c.k.as_ref())
                .map(|k| matrix(k))
                .unwrap_or_else(|| DMatrix::zeros(n, n)),
            c.and_then(|c| c.b.as_ref())
                .map(|b| DVector::from_column_slice(b))
                .unwrap_or_else(|| DVector::zeros(n)),
        )
    };
    let mut coeffs = PDECoefficients::new(
        n,
        a,
        MatrixField::Constant(k),
        VectorField::Constant(b),
        law.clone(),
    )
    .with_drift(drift);
    coeffs
        .check_ellipticity(grid, &[0.0])
        .map_err(stage("coefficients"))?;
    Ok(coeffs)
}

pub fn profile_field(p: &ProfileConfig, grid: &Grid, u_star: f64) -> Result<Field, RunError> {
    let lo = grid.lower().to_vec();
    let hi = grid.upper().to_vec();
    let mut f = match p {
        ProfileConfig::Constant { value } => Field::constant(grid, 0.0, *value),
        ProfileConfig::Sine { amplitude, power } => grid.sample(0.0, |x| {
            let s: f64 = (0..x.len())
                .map(|d| (std::f64::consts::PI * (x[d] - lo[d]) / (hi[d] - lo[d])).sin())
                .product();
            u_star + amplitude * s.powi(power.unwrap_or(1) as i32)
        }),
        ProfileConfig::Bump {
            amplitude,
            center,
            width,
        } => {
            if center.len() != grid.dim() {
                return Err(ConfigError::key(
                    "initial.profile.center",
                    format!("expected {} entries", grid.dim()),
                )
                .into());
            }
            grid.sample(0.0, |x| {
                let r2: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    / (width * width);
                if r2 < 1.0 {
                    u_star + amplitude * (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    u_star
                }
            })
        }
        ProfileConfig::Gaussian { mass, center, sd } => {
            if center.len() != grid.dim() {
                return Err(ConfigError::key(
                    "initial.profile.center",
                    format!("expected {} entries", grid.dim()),
                )
                .into());
            }
            let n = grid.dim() as i32;
            let norm = (sd * (2.0 * std::f64::consts::PI).sqrt()).powi(n);
            grid.sample(0.0, |x| {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                u_star + mass * (-r2 / (2.0 * sd * sd)).exp() / norm
            })
        }
        ProfileConfig::Table { values } => Field::new(grid, 0.0, values.clone())
            .map_err(|e| ConfigError::key("initial.profile.values", e.to_string()))?,
    };
    for k in grid.boundary_indices() {
        f.values[k] = u_star;
    }
    Ok(f)
}

fn record_times(t_end: f64, dt: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut k = 1u64;
    loop {
        let t = k as f64 * dt;
        if t > t_end * (1.0 + 1e-12) {
            break;
        }
        v.push(t.min(t_end));
        k += 1;
    }
    v
}

fn advection(s: &Scenario) -> Advection {
    match s.run.advection {
        AdvectionConfig::Hybrid => Advection::Hybrid,
        AdvectionConfig::Upwind => Advection::Upwind,
    }
}

fn solve(
    s: &Scenario,
    grid: &Grid,
    problem: &IBVProblem,
    companions: bool,
) -> Result<Trajectory, RunError> {
    let mut opts = SolveOptions::new(s.run.t_end, usize::MAX);
    opts.time_step = match s.run.dt {
        Some(dt) => TimeStep::Fixed(dt),
        None => TimeStep::Stable(s.run.safety.unwrap_or(solver::DEFAULT_SAFETY)),
    };
    opts.checkpoints = record_times(s.run.t_end, s.run.record_dt);
    opts.companions = companions;
    opts.advection = advection(s);
    solver::solve_with(problem, grid, &opts).map_err(stage("solver"))
}

/// `F_λ` with constants giving `s^{λ+1}` for the slightly compressible law,
/// `e^{λs}`-type maps otherwise, extended to an excluded edge when the
/// range touches it.
pub fn transform_for(
    law: &StateLaw,
    lambda: f64,
    class: &EdgeClassification,
    sub: bool,
) -> Result<Option<Transform>, RunError> {
    let (c, c_prime, s0) = match law.kind() {
        LawKind::SlightlyCompressible { .. } => {
            let q = lambda + 1.0;
            if q == 0.0 {
                (1.0, 0.0, 1.0)
            } else {
                (q.abs(), q.signum(), 1.0)
            }
        }
        _ => (1.0, 0.0, 0.0),
    };
    let t = transform::make_transform(law, lambda, c, c_prime, s0).map_err(stage("transform"))?;
    let j = law.domain();
    if j.contains(class.m_star) && j.contains(class.big_m_star) {
        return Ok(Some(t));
    }
    let edge = match (sub, class.case) {
        (true, EdgeCase::E1) if lambda > 0.0 => Edge::Lower,
        (false, EdgeCase::E2) if lambda < 0.0 => Edge::Upper,
        _ => return Ok(None),
    };
    transform::extend_to_edge(&t, edge, class)
        .map(Some)
        .map_err(stage("transform"))
}

/// `F(u*) - F(u)` (`sub = false`) or `F(u) - F(u*)` as a trajectory.
fn transformed(traj: &Trajectory, f: &Transform, sub: bool) -> Result<Trajectory, RunError> {
    let fs = f.eval_f(traj.u_star).map_err(stage("transform"))?;
    traj.map_values(|v| {
        let w = f.eval_f(v).map_err(|e| e.to_string())?;
        Ok(if sub { w - fs } else { fs - w })
    })
    .map_err(|m| RunError::Module {
        stage: "transform",
        message: m,
    })
}

struct Constants {
    bounds: CoefficientBounds,
    geom: DomainGeometry,
    gc: GrowthConstants,
    class: EdgeClassification,
}

fn constants(
    s: &Scenario,
    grid: &Grid,
    coeffs: &PDECoefficients,
    traj: &Trajectory,
) -> Result<Constants, RunError> {
    let law = &coeffs.law;
    let class =
        classify_edges(law, traj.m_star, traj.big_m_star).map_err(stage("classification"))?;
    let samples = if coeffs.is_time_dependent() {
        traj.times()
    } else {
        vec![0.0]
    };
    let mut bounds =
        analysis::coefficient_bounds(coeffs, grid, &samples, traj.m_star, traj.big_m_star)
            .map_err(stage("coefficient bounds"))?;
    if let Some(c1) = s.checks.c1 {
        bounds = bounds
            .with_c1(c1)
            .map_err(|e| ConfigError::key("checks.c1", e.to_string()))?;
    }
    let x0 = s
        .checks
        .x0
        .clone()
        .unwrap_or_else(|| analysis::default_x0(grid.lower(), grid.upper()));
    let geom = analysis::geometry(grid.lower(), grid.upper(), &x0)
        .map_err(|e| ConfigError::key("checks.x0", e.to_string()))?;
    let (l1, l2) = transform::lambda_thresholds(bounds.c0, bounds.c1, bounds.c2, false)
        .map_err(stage("transform"))?;
    let gc = analysis::growth_constants(
        &bounds,
        &geom,
        law,
        (l1, l2),
        traj.u_star,
        traj.m_star,
        traj.big_m_star,
    )
    .map_err(stage("growth constants"))?;
    Ok(Constants {
        bounds,
        geom,
        gc,
        class,
    })
}

fn constants_text(c: &Constants) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# inputs: c0 c1 c2 M0 M1 M2 from coefficient samples, r0 R from x0"
    );
    let _ = writeln!(s, "# beta = (M1 + M2 R)/(2 c0)");
    let _ = writeln!(s, "# T_star = R^2/(4 c0 beta)");
    let _ = writeln!(s, "# eta_star = 1 - (r0/R)^(2 beta)");
    let _ = writeln!(s, "# nu = ln(1/eta_star)/T_star");
    let _ = writeln!(s, "# nu0 = R^2/(2 c0) ln(R/r0)");
    let _ = writeln!(s, "# C1 = min(e^(l1 P(m*)), e^(l2 P(M*))), C2 = max(e^(l1 P(M*)), e^(l2 P(m*))), C0 = C2/(C1 eta_star)");
    let _ = writeln!(s, "# M2 = M0 max(|m*|, |M*|) + sup|b|");
    for (i, x) in c.geom.x0.iter().enumerate() {
        let _ = writeln!(s, "x0_{i} = {x:.16e}");
    }
    for (k, v) in c.gc.entries() {
        let _ = writeln!(s, "{k} = {:.16e}", v + 0.0);
    }
    let _ = writeln!(s, "range_case = {:?}", c.class.case);
    let _ = writeln!(s, "c1_sampled_or_override = {:.16e}", c.bounds.c1);
    s
}

/// Runs every requested check; writes files under `out/<name>` when `out`
/// is given.
pub fn run_scenario(s: &Scenario, out: Option<&Path>) -> Result<Outcome, RunError> {
    s.validate()?;
    let grid = build_grid(s)?;
    let law = build_law(s)?;
    let kernel = build_kernel(s)?;
    let mc = s.has(CheckKind::MonteCarlo);
    let coeffs = build_coefficients(s, &grid, &law, kernel.as_ref(), mc)?;
    let u_star = s.initial.u_star;
    let u0 = profile_field(&s.initial.profile, &grid, u_star)?;
    let problem = IBVProblem::new(coeffs.clone(), u_star, u0, &grid)
        .map_err(|e| ConfigError::key("initial", e.to_string()))?;
    let traj = solve(s, &grid, &problem, s.has(CheckKind::SignTransfer))?;

    let dir = out.map(|o| o.join(&s.name));
    let mut files = Vec::new();
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
        let p = d.join("scenario.toml");
        fs::write(&p, s.to_toml())?;
        files.push(p);
        let p = d.join("trajectory.csv");
        traj.write_csv(BufWriter::new(fs::File::create(&p)?))?;
        files.push(p);
        let p = d.join("summary.csv");
        traj.write_summary_csv(BufWriter::new(fs::File::create(&p)?))?;
        files.push(p);
    }

    let mut reports = Vec::new();
    if s.has(CheckKind::MaxPrinciple) {
        reports.push(analysis::check_max_principle(&traj));
    }
    let needs_constants = [
        CheckKind::SignTransfer,
        CheckKind::GrowthLemma,
        CheckKind::Barrier,
        CheckKind::Decay,
        CheckKind::RateIndependence,
    ]
    .iter()
    .any(|c| s.has(*c));
    let mut consts = None;
    if needs_constants {
        let c = constants(s, &grid, &coeffs, &traj)?;
        let gc = &c.gc;
        let sub = transform_for(&law, gc.lambda1, &c.class, true)?;
        let sup = transform_for(&law, gc.lambda2, &c.class, false)?;
        if s.has(CheckKind::SignTransfer) {
            let r = analysis::check_sign_transfer(
                &traj,
                &problem,
                sub.as_ref(),
                sup.as_ref(),
                advection(s),
            )
            .map_err(stage("sign transfer"))?;
            reports.push(r);
        }
        if s.has(CheckKind::GrowthLemma) {
            let windows = s.checks.windows.unwrap_or(5);
            for (label, f, is_sub) in [("sub", &sub, true), ("super", &sup, false)] {
                let Some(f) = f else { continue };
                let w = transformed(&traj, f, is_sub)?;
                let mut r =
                    analysis::check_growth_lemma(&w, gc, windows).map_err(stage("growth lemma"))?;
                r.name = format!("growth_lemma_{label}");
                r.value("lambda", f.lambda);
                reports.push(r);
            }
        }
        if s.has(CheckKind::Barrier) {
            let spec = BarrierSpec::from_constants(gc, &c.geom).map_err(stage("barrier"))?;
            let times: Vec<f64> = (1..=400).map(|k| gc.t_star * k as f64 / 400.0).collect();
            let r = analysis::check_barrier_residual(&spec, &c.geom, &grid, gc.bounds.c0, &times)
                .map_err(stage("barrier"))?;
            reports.push(r);
        }
        if s.has(CheckKind::Decay) {
            let mode = match s.checks.decay_mode {
                Some(DecayModeConfig::Interior) => DecayMode::Interior,
                Some(DecayModeConfig::Power) => DecayMode::PowerTransformed {
                    m: gc.lambda1 + 1.0,
                },
                Some(DecayModeConfig::OneSided) => DecayMode::OneSided {
                    upper_edge: c.class.case == EdgeCase::E2,
                },
                None => match c.class.case {
                    EdgeCase::Interior | EdgeCase::Degenerate => DecayMode::Interior,
                    EdgeCase::E1
                        if matches!(law.kind(), LawKind::SlightlyCompressible { .. })
                            && u_star == traj.m_star
                            && gc.lambda1 > 0.0 =>
                    {
                        DecayMode::PowerTransformed {
                            m: gc.lambda1 + 1.0,
                        }
                    }
                    EdgeCase::E1 => DecayMode::OneSided { upper_edge: false },
                    EdgeCase::E2 => DecayMode::OneSided { upper_edge: true },
                },
            };
            let d = analysis::check_decay(&traj, u_star, gc, mode, coeffs.is_linear())
                .map_err(stage("decay"))?;
            reports.push(d.report);
        }
        if s.has(CheckKind::RateIndependence) {
            let mut trajs = vec![traj.clone()];
            for p in &s.checks.rate_profiles {
                let u0 = profile_field(p, &grid, u_star)?;
                let pr = IBVProblem::new(coeffs.clone(), u_star, u0, &grid)
                    .map_err(|e| ConfigError::key("checks.rate_profiles", e.to_string()))?;
                trajs.push(solve(s, &grid, &pr, false)?);
            }
            let delta = s.checks.delta.unwrap_or(1.0);
            let tail = TailBounds::from_samples(&coeffs, &grid, &traj.times(), delta)
                .map_err(stage("rate independence"))?;
            let r = analysis::check_rate_initial_data_independence(
                &trajs, u_star, &law, &tail, &c.geom,
            )
            .map_err(stage("rate independence"))?;
            reports.push(r);
        }
        consts = Some(c);
    }
    if mc {
        let mcfg = s.monte_carlo.as_ref().expect("validated");
        let kernel = kernel.as_ref().expect("validated");
        reports.push(run_monte_carlo(
            s,
            mcfg,
            kernel,
            &grid,
            &law,
            &traj,
            dir.as_deref(),
            &mut files,
        )?);
    }

    if let Some(d) = &dir {
        let mut csv = String::from(analysis::REPORT_CSV_HEADER);
        csv.push('\n');
        let mut txt = String::new();
        for r in &reports {
            csv.push_str(&r.csv_rows());
            txt.push_str(&r.to_key_value());
            txt.push('\n');
        }
        let _ = writeln!(
            txt,
            "[scenario]\nname = {}\npassed = {}",
            s.name,
            reports.iter().all(Report::passed)
        );
        let p = d.join("report.csv");
        fs::write(&p, csv)?;
        files.push(p);
        let p = d.join("report.txt");
        fs::write(&p, txt)?;
        files.push(p);
        if let Some(c) = &consts {
            let p = d.join("constants.txt");
            fs::write(&p, constants_text(c))?;
            files.push(p);
        }
    }
    Ok(Outcome {
        name: s.name.clone(),
        reports,
        constants: consts.as_ref().map(|c| c.gc.clone()),
        geometry: consts.map(|c| c.geom),
        trajectory: traj,
        files,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub const MC_SLOPE: f64 = -0.5;
pub const MC_SLOPE_TOL: f64 = 0.15;
/// Width of the cloud-center band in standard errors.
pub const MC_SIGMAS: f64 = 5.0;

#[allow(clippy::too_many_arguments)]
fn run_monte_carlo(
    s: &Scenario,
    mc: &MonteCarloConfig,
    kernel: &ProbabilityKernel,
    grid: &Grid,
    law: &StateLaw,
    pde: &Trajectory,
    dir: Option<&Path>,
    files: &mut Vec<PathBuf>,
) -> Result<Report, RunError> {
    let ProfileConfig::Gaussian { center, sd, .. } = &s.initial.profile else {
        unreachable!("validated")
    };
    let tau = kernel.tau;
    if ((mc.record_steps as f64) * tau - s.run.record_dt).abs() > 1e-12 * s.run.record_dt {
        return Err(ConfigError::key(
            "monte_carlo.record_steps",
            "record_steps · tau must equal run.record_dt",
        )
        .into());
    }
    let total = (s.run.t_end / tau).round() as usize;
    if ((total as f64) * tau - s.run.t_end).abs() > 1e-9 * s.run.t_end.max(1.0) {
        return Err(ConfigError::key("run.t_end", "must be a whole number of kernel steps").into());
    }
    let marks: Vec<usize> = (1..)
        .map(|k| k * mc.record_steps)
        .take_while(|&m| m <= total)
        .collect();
    let partitions = mc.partitions.unwrap_or(montecarlo::DEFAULT_PARTITIONS);
    let mut r = Report::new("monte_carlo");
    let mut finals = Vec::new();
    for (i, &np) in mc.particles.iter().enumerate() {
        let mut e = WalkEnsemble::gaussian_cloud(
            kernel.clone(),
            np,
            center,
            *sd,
            s.seed.wrapping_add(i as u64),
            partitions,
        )
        .map_err(stage("monte carlo"))?;
        let d = montecarlo::run_walk(&mut e, grid, &marks).map_err(stage("monte carlo"))?;
        let err = montecarlo::compare_to_pde(&d, pde).map_err(stage("monte carlo"))?;
        let last = *err.l1.last().expect("frames");
        r.value(&format!("l1_np{np}"), last);
        r.value(&format!("linf_np{np}"), err.max_linf());
        let f = d.frames.last().expect("frames");
        let mass: f64 = f.values.iter().sum::<f64>() * grid.cell_volume();
        r.ge(
            "mass",
            &format!("np{np}_mass_on_grid"),
            mass,
            1.0 - 1e-3,
            Some(f.t),
            None,
        );
        finals.push(last);
        if let Some(dir) = dir {
            let p = dir.join(format!("mc_density_np{np}.csv"));
            d.write_csv(BufWriter::new(fs::File::create(&p)?))?;
            files.push(p);
        }
    }
    let np: Vec<f64> = mc.particles.iter().map(|&n| n as f64).collect();
    let slope = log_log_slope(&np, &finals);
    r.value("l1_slope", slope);
    r.le(
        "l1_slope",
        "abs_slope_error",
        (slope - MC_SLOPE).abs(),
        mc.slope_tol.unwrap_or(MC_SLOPE_TOL),
        None,
        None,
    );

    if let Some(mean) = &mc.drift_mean {
        let KernelConfig::Gaussian { cov, trunc, .. } = s.kernel.as_ref().expect("validated")
        else {
            return Err(
                ConfigError::key("monte_carlo.drift_mean", "needs a gaussian kernel").into(),
            );
        };
        if mean.len() != s.dim() {
            return Err(ConfigError::key(
                "monte_carlo.drift_mean",
                format!("expected {} entries", s.dim()),
            )
            .into());
        }
        let shifted = ProbabilityKernel::gaussian(
            DVector::from_column_slice(mean),
            matrix(cov),
            trunc.unwrap_or(porolab::kernel::DEFAULT_TRUNCATION),
            tau,
        )
        .map_err(|e| ConfigError::key("monte_carlo.drift_mean", e.to_string()))?;
        let mut s2 = s.clone();
        s2.kernel = Some(KernelConfig::Gaussian {
            mean: mean.clone(),
            cov: cov.clone(),
            trunc: *trunc,
            tau,
        });
        let coeffs = build_coefficients(&s2, grid, law, Some(&shifted), true)?;
        let u0 = profile_field(&s.initial.profile, grid, s.initial.u_star)?;
        let p =
            IBVProblem::new(coeffs, s.initial.u_star, u0, grid).map_err(stage("monte carlo"))?;
        let traj = solve(s, grid, &p, false)?;
        let com = montecarlo::center_of_mass(&traj.last().field, grid);
        let n_max = *mc.particles.iter().max().expect("particles");
        let mut e = WalkEnsemble::gaussian_cloud(
            shifted,
            n_max,
            center,
            *sd,
            s.seed.wrapping_add(1000),
            partitions,
        )
        .map_err(stage("monte carlo"))?;
        e.walk(total);
        let m = e.mean();
        let c = matrix(cov);
        for d in 0..s.dim() {
            let spread = (sd * sd + total as f64 * c[(d, d)]).sqrt();
            let band = MC_SIGMAS * spread / (n_max as f64).sqrt();
            let predicted = center[d] + mean[d] / tau * s.run.t_end;
            r.value(&format!("center_mc_{d}"), m[d]);
            r.value(&format!("center_pde_{d}"), com[d]);
            r.value(&format!("center_predicted_{d}"), predicted);
            r.le(
                "drift",
                &format!("center_gap_{d}"),
                (m[d] - com[d]).abs(),
                band,
                Some(s.run.t_end),
                None,
            );
            r.le(
                "drift",
                &format!("predicted_gap_{d}"),
                (m[d] - predicted).abs(),
                band,
                Some(s.run.t_end),
                None,
            );
        }
    }
    Ok(r)
}
