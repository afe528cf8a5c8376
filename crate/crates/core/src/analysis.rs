//! Explicit constants of the long-time estimates, the growth-lemma barrier,
//! and checkers that compare trajectories with the maximum principle, the
//! growth lemma, the decay envelopes and the sign of transformed residuals.

use std::fmt::Write as _;

use thiserror::Error;

use crate::grid::{Field, Grid};
use crate::kernel::PDECoefficients;
use crate::linalg::{sym2_eigenvalues, sym_eigenvalues, sym_part};
use crate::solver::{Advection, IBVProblem, SolverError, Stepper, Trajectory};
use crate::statelaw::StateLaw;
use crate::transform::{Transform, TransformError};

/// Relative fit tolerance for decay rates.
pub const FIT_TOL: f64 = 0.05;
/// Max-principle tolerance in machine epsilons.
pub const MP_EPS_FACTOR: f64 = 10.0;
/// Truncation constant `C` of `tol_res = C (h² + dt) S`, calibrated by
/// [`calibration::residual_constant`] on the two exact solutions used for the
/// convergence study.
pub const RESIDUAL_CONSTANT: f64 = 5.8e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("reference point {0:?} lies in the closed domain")]
    InteriorPoint(Vec<f64>),
    #[error("not elliptic: c0 = {0}")]
    Ellipticity(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("transform constants need m*, M* in J ({0})")]
    EdgeCaseUnsupported(String),
    #[error("trajectory ends at {t_last}, shorter than the window {window}")]
    Window { t_last: f64, window: f64 },
    #[error("decay mode does not match the range classification: {0}")]
    Classification(String),
    #[error("need at least {needed} trajectories, got {got}")]
    InsufficientTrajectories { needed: usize, got: usize },
    #[error("trajectories come from different coefficients")]
    MismatchedCoefficients,
    #[error("frame at t = {0} has no companion step")]
    MissingCompanion(f64),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// `10 ε max(1, scale)`.
pub fn tol_mp(scale: f64) -> f64 {
    MP_EPS_FACTOR * f64::EPSILON * scale.abs().max(1.0)
}

/// Exterior reference point and its distances to the closed box.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGeometry {
    pub x0: Vec<f64>,
    pub r0: f64,
    pub r_big: f64,
}

pub fn geometry(lower: &[f64], upper: &[f64], x0: &[f64]) -> Result<DomainGeometry, AnalysisError> {
    let n = lower.len();
    if upper.len() != n || x0.len() != n || n == 0 {
        return Err(AnalysisError::Invalid("dimension mismatch".into()));
    }
    if (0..n).any(|d| !(lower[d] < upper[d])) {
        return Err(AnalysisError::Invalid("empty box".into()));
    }
    if (0..n).all(|d| x0[d] >= lower[d] && x0[d] <= upper[d]) {
        return Err(AnalysisError::InteriorPoint(x0.to_vec()));
    }
    let mut near = 0.0;
    let mut far = 0.0;
    for d in 0..n {
        let gap = if x0[d] < lower[d] {
            lower[d] - x0[d]
        } else if x0[d] > upper[d] {
            x0[d] - upper[d]
        } else {
            0.0
        };
        near += gap * gap;
        let span = (x0[d] - lower[d]).abs().max((x0[d] - upper[d]).abs());
        far += span * span;
    }
    Ok(DomainGeometry {
        x0: x0.to_vec(),
        r0: near.sqrt(),
        r_big: far.sqrt(),
    })
}

/// One box diameter to the left along the first axis, centered on the others.
pub fn default_x0(lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let diam = lower
        .iter()
        .zip(upper)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    let mut x0: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    x0[0] = lower[0] - diam;
    x0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientBounds {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// `sup |B|`.
    pub m0_bound: f64,
    /// `sup Tr A`.
    pub m1: f64,
    /// `sup |B| max(|m*|, |M*|) + sup |b|`.
    pub m2: f64,
    /// `sup |b|` of the linear drift (zero for Darcy models).
    pub drift_bound: f64,
}

impl CoefficientBounds {
    /// Replaces `c1` by a larger admissible value.
    pub fn with_c1(mut self, c1: f64) -> Result<Self, AnalysisError> {
        if !(c1 >= self.c1) {
            return Err(AnalysisError::Invalid(format!(
                "c1 = {c1} is below the sampled bound {}",
                self.c1
            )));
        }
        self.c1 = c1;
        Ok(self)
    }
}

pub fn coefficient_bounds(
    coeffs: &PDECoefficients,
    grid: &Grid,
    t_samples: &[f64],
    m_star: f64,
    big_m_star: f64,
) -> Result<CoefficientBounds, AnalysisError> {
    if t_samples.is_empty() {
        return Err(AnalysisError::Invalid("no time samples".into()));
    }
    let mut c0 = f64::INFINITY;
    let mut q_min = f64::INFINITY;
    let mut q_max = f64::NEG_INFINITY;
    let mut m0 = 0.0f64;
    let mut m1 = 0.0f64;
    let mut drift = 0.0f64;
    for &t in t_samples {
        for k in 0..grid.len() {
            let x = grid.coord(k);
            let a = coeffs.a.eval(&x, t);
            let kk = sym_part(&coeffs.k.eval(&x, t));
            let (lo_a, lo_k, hi_k) = if a.nrows() == 2 {
                let (lo_a, _) =
                    sym2_eigenvalues(a[(0, 0)], 0.5 * (a[(0, 1)] + a[(1, 0)]), a[(1, 1)]);
                let (lo_k, hi_k) = sym2_eigenvalues(kk[(0, 0)], kk[(0, 1)], kk[(1, 1)]);
                (lo_a, lo_k, hi_k)
            } else {
                let ea = sym_eigenvalues(&sym_part(&a));
                let ek = sym_eigenvalues(&kk);
                (ea[0], ek[0], *ek.last().unwrap())
            };
            c0 = c0.min(lo_a);
            q_min = q_min.min(lo_k);
            q_max = q_max.max(hi_k);
            m0 = m0.max(coeffs.b.eval(&x, t).norm());
            m1 = m1.max(a.trace());
            drift = drift.max(coeffs.drift.eval(&x, t).norm());
        }
    }
    if !(c0 > 0.0) {
        return Err(AnalysisError::Ellipticity(c0));
    }
    Ok(CoefficientBounds {
        c0,
        c1: (-q_min).max(0.0),
        c2: q_max.max(0.0),
        m0_bound: m0,
        m1,
        m2: m0 * m_star.abs().max(big_m_star.abs()) + drift,
        drift_bound: drift,
    })
}

/// Constants of the growth lemma and decay estimates, with their inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthConstants {
    pub bounds: CoefficientBounds,
    pub r0: f64,
    pub r_big: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub u_star: f64,
    pub m_star: f64,
    pub big_m_star: f64,
    pub beta: f64,
    pub t_star: f64,
    pub eta_star: f64,
    pub nu: f64,
    pub nu0: f64,
    /// Present only when `m*, M* ∈ J`.
    pub c1_lip: Option<f64>,
    pub c2_lip: Option<f64>,
}

impl GrowthConstants {
    /// `C0 = C2 / (C1 η*)`.
    pub fn decay_prefactor(&self) -> Result<f64, AnalysisError> {
        match (self.c1_lip, self.c2_lip) {
            (Some(c1), Some(c2)) => Ok(c2 / (c1 * self.eta_star)),
            _ => Err(AnalysisError::EdgeCaseUnsupported(format!(
                "m* = {}, M* = {}",
                self.m_star, self.big_m_star
            ))),
        }
    }

    /// `(name, value)` pairs for reports.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let b = &self.bounds;
        let mut v = vec![
            ("c0", b.c0),
            ("c1", b.c1),
            ("c2", b.c2),
            ("M0", b.m0_bound),
            ("M1", b.m1),
            ("M2", b.m2),
            ("drift_bound", b.drift_bound),
            ("r0", self.r0),
            ("R", self.r_big),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("u_star", self.u_star),
            ("m_star", self.m_star),
            ("M_star", self.big_m_star),
            ("beta", self.beta),
            ("T_star", self.t_star),
            ("eta_star", self.eta_star),
            ("nu", self.nu),
            ("nu0", self.nu0),
        ];
        if let (Some(c1), Some(c2)) = (self.c1_lip, self.c2_lip) {
            v.push(("C1", c1));
            v.push(("C2", c2));
            v.push(("C0", c2 / (c1 * self.eta_star)));
        }
        v
    }
}

/// `β = (M1 + M2 R)/(2c0)`, `T* = R²/(4c0β)`, `η* = 1 - (r0/R)^{2β}`,
/// `ν = ln(1/η*)/T*`, `ν0 = R²/(2c0) ln(R/r0)`.
pub fn growth_core(
    c0: f64,
    m1: f64,
    m2: f64,
    r0: f64,
    r_big: f64,
) -> Result<(f64, f64, f64, f64, f64), AnalysisError> {
    if !(c0 > 0.0) || !(m1 > 0.0) || !(m2 >= 0.0) || !(r_big > r0 && r0 > 0.0) {
        return Err(AnalysisError::Invalid(format!(
            "need c0 > 0, M1 > 0, M2 >= 0, R > r0 > 0 (c0={c0}, M1={m1}, M2={m2}, r0={r0}, R={r_big})"
        )));
    }
    let beta = (m1 + m2 * r_big) / (2.0 * c0);
    let t_star = r_big * r_big / (4.0 * c0 * beta);
    let q = (2.0 * beta * (r0 / r_big).ln()).exp();
    let eta_star = -(2.0 * beta * (r0 / r_big).ln()).exp_m1();
    // ln(1/η*) without cancellation when (r0/R)^{2β} is tiny
    let nu = -(-q).ln_1p() / t_star;
    let nu0 = r_big * r_big / (2.0 * c0) * (r_big / r0).ln();
    Ok((beta, t_star, eta_star, nu, nu0))
}

#[allow(clippy::too_many_arguments)]
pub fn growth_constants(
    b: &CoefficientBounds,
    geom: &DomainGeometry,
    law: &StateLaw,
    lambdas: (f64, f64),
    u_star: f64,
    m_star: f64,
    big_m_star: f64,
) -> Result<GrowthConstants, AnalysisError> {
    let (beta, t_star, eta_star, nu, nu0) = growth_core(b.c0, b.m1, b.m2, geom.r0, geom.r_big)?;
    let j = law.domain();
    let (c1_lip, c2_lip) = if j.contains(m_star) && j.contains(big_m_star) {
        let (l1, l2) = lambdas;
        let pm = law.p_unchecked(m_star);
        let pbig = law.p_unchecked(big_m_star);
        let e = |lam: f64, p: f64| if lam == 0.0 { 1.0 } else { (lam * p).exp() };
        (
            Some(e(l1, pm).min(e(l2, pbig))),
            Some(e(l1, pbig).max(e(l2, pm))),
        )
    } else {
        (None, None)
    };
    Ok(GrowthConstants {
        bounds: *b,
        r0: geom.r0,
        r_big: geom.r_big,
        lambda1: lambdas.0,
        lambda2: lambdas.1,
        u_star,
        m_star,
        big_m_star,
        beta,
        t_star,
        eta_star,
        nu,
        nu0,
        c1_lip,
        c2_lip,
    })
}

/// Parameters of the barrier `W = t^{-β} e^{-φ/t}`, `φ = μ|x - x0|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec {
    pub mu: f64,
    pub d0: f64,
    pub d1: f64,
    /// `μR` as listed with the other constants.
    pub d2: f64,
    /// `2μR`, the actual bound on `|∇φ|`.
    pub d2_gradient: f64,
    pub d3: f64,
    pub eta: f64,
    pub beta: f64,
}

impl BarrierSpec {
    pub fn new(c0: f64, m1: f64, geom: &DomainGeometry, beta: f64) -> Result<Self, AnalysisError> {
        if !(c0 > 0.0 && beta > 0.0) {
            return Err(AnalysisError::Invalid(format!("c0 = {c0}, beta = {beta}")));
        }
        let mu = 1.0 / (4.0 * c0);
        let d0 = mu * geom.r0 * geom.r0;
        let eta = (d0 * std::f64::consts::E / beta).powf(beta);
        Ok(Self {
            mu,
            d0,
            d1: mu * geom.r_big * geom.r_big,
            d2: mu * geom.r_big,
            d2_gradient: 2.0 * mu * geom.r_big,
            d3: 2.0 * mu * m1,
            eta,
            beta,
        })
    }

    pub fn from_constants(
        gc: &GrowthConstants,
        geom: &DomainGeometry,
    ) -> Result<Self, AnalysisError> {
        Self::new(gc.bounds.c0, gc.bounds.m1, geom, gc.beta)
    }
}

pub fn barrier_phi(spec: &BarrierSpec, geom: &DomainGeometry, x: &[f64]) -> f64 {
    spec.mu
        * x.iter()
            .zip(&geom.x0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
}

/// `W(x, t)`, zero for `t <= 0`.
pub fn barrier_eval(spec: &BarrierSpec, geom: &DomainGeometry, x: &[f64], t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    t.powf(-spec.beta) * (-barrier_phi(spec, geom, x) / t).exp()
}

/// `W̃ = M (1 - η W)`.
pub fn barrier_tilde(
    spec: &BarrierSpec,
    geom: &DomainGeometry,
    big_m: f64,
    x: &[f64],
    t: f64,
) -> f64 {
    big_m * (1.0 - spec.eta * barrier_eval(spec, geom, x, t))
}

/// One line of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub check: String,
    pub quantity: String,
    pub bound: f64,
    pub observed: f64,
    pub slack: f64,
    pub pass: bool,
    pub t: Option<f64>,
    pub node: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub name: String,
    pub items: Vec<CheckItem>,
    pub values: Vec<(String, f64)>,
}

impl Report {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    /// Records `observed <= bound`.
    pub fn le(
        &mut self,
        check: &str,
        quantity: &str,
        observed: f64,
        bound: f64,
        t: Option<f64>,
        node: Option<usize>,
    ) -> bool {
        let pass = observed <= bound;
        self.items.push(CheckItem {
            check: check.into(),
            quantity: quantity.into(),
            bound,
            observed,
            slack: bound - observed,
            pass,
            t,
            node,
        });
        pass
    }

    /// Records `observed >= bound`.
    pub fn ge(
        &mut self,
        check: &str,
        quantity: &str,
        observed: f64,
        bound: f64,
        t: Option<f64>,
        node: Option<usize>,
    ) -> bool {
        let pass = observed >= bound;
        self.items.push(CheckItem {
            check: check.into(),
            quantity: quantity.into(),
            bound,
            observed,
            slack: observed - bound,
            pass,
            t,
            node,
        });
        pass
    }

    pub fn value(&mut self, key: &str, v: f64) {
        self.values.push((key.into(), v));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Smallest slack per (check, quantity), in first-seen order.
    pub fn worst(&self) -> Vec<&CheckItem> {
        let mut out: Vec<&CheckItem> = Vec::new();
        for it in &self.items {
            match out
                .iter_mut()
                .find(|o| o.check == it.check && o.quantity == it.quantity)
            {
                Some(o) => {
                    if it.slack < o.slack || (!it.pass && o.pass) {
                        *o = it;
                    }
                }
                None => out.push(it),
            }
        }
        out
    }

    pub fn merge(&mut self, other: Report) {
        self.items.extend(other.items);
        self.values.extend(other.values);
    }

    /// `key = value` block with the worst item of every check.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}]", self.name);
        let _ = writeln!(s, "passed = {}", self.passed());
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v:.16e}");
        }
        for it in self.worst() {
            let key = format!("{}.{}", it.check, it.quantity);
            let _ = writeln!(s, "{key}.observed = {:.16e}", it.observed);
            let _ = writeln!(s, "{key}.bound = {:.16e}", it.bound);
            let _ = writeln!(s, "{key}.slack = {:.16e}", it.slack);
            if let Some(t) = it.t {
                let _ = writeln!(s, "{key}.t = {t:.16e}");
            }
            if let Some(n) = it.node {
                let _ = writeln!(s, "{key}.node = {n}");
            }
            let _ = writeln!(s, "{key}.pass = {}", it.pass);
        }
        s
    }

    /// `check,quantity,bound,observed,slack,pass` rows (no header).
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for it in &self.items {
            let _ = writeln!(
                s,
                "{}:{},{},{:.16e},{:.16e},{:.16e},{}",
                self.name, it.check, it.quantity, it.bound, it.observed, it.slack, it.pass
            );
        }
        s
    }
}

pub const REPORT_CSV_HEADER: &str = "check,quantity,bound,observed,slack,pass";

/// Discrete maximum principle and oscillation bound per recorded time.
pub fn check_max_principle(traj: &Trajectory) -> Report {
    let mut r = Report::new("max_principle");
    let u0 = &traj.initial().field;
    let top = u0.max().max(traj.u_star);
    let bottom = u0.min().min(traj.u_star);
    let osc_gamma = top - bottom;
    let tol = tol_mp(top.abs().max(bottom.abs()));
    r.value("parabolic_max", top);
    r.value("parabolic_min", bottom);
    r.value("tol_mp", tol);
    for fr in &traj.frames {
        let (kmax, vmax) = argmax(&fr.field.values);
        let (kmin, vmin) = argmin(&fr.field.values);
        r.le("max", "max_u", vmax, top + tol, Some(fr.t()), Some(kmax));
        r.ge("min", "min_u", vmin, bottom - tol, Some(fr.t()), Some(kmin));
        r.le(
            "osc",
            "osc_u",
            vmax - vmin,
            osc_gamma + 2.0 * tol,
            Some(fr.t()),
            None,
        );
    }
    let f0 = traj.initial();
    r.le(
        "osc_equality_t0",
        "osc_gap",
        (f0.osc() - osc_gamma).abs(),
        2.0 * tol,
        Some(0.0),
        None,
    );
    r
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (k, x)| if x > acc.1 { (k, x) } else { acc },
    )
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold(
        (0, f64::INFINITY),
        |acc, (k, x)| if x < acc.1 { (k, x) } else { acc },
    )
}

/// Window inequalities `J_k <= η* J_{k-1}` and `J_k <= η*^k J_0` with
/// `J_k = max{0, max w(·, kT*)}`, using the first frame at or after `kT*`.
pub fn check_growth_lemma(
    w_traj: &Trajectory,
    gc: &GrowthConstants,
    windows: usize,
) -> Result<Report, AnalysisError> {
    let t_last = w_traj.last().t();
    let t0 = w_traj.initial().t();
    if t_last - t0 < gc.t_star * (1.0 - 1e-12) {
        return Err(AnalysisError::Window {
            t_last,
            window: gc.t_star,
        });
    }
    let mut r = Report::new("growth_lemma");
    r.value("T_star", gc.t_star);
    r.value("eta_star", gc.eta_star);
    let grid = &w_traj.grid;
    let boundary = grid.boundary_indices();
    let lateral = w_traj
        .frames
        .iter()
        .flat_map(|f| boundary.iter().map(move |&k| f.field.values[k]))
        .fold(f64::NEG_INFINITY, f64::max);
    let j0 = w_traj.initial().max.max(0.0);
    // below FIT_FLOOR·J0 the windows only see round-off in u around u*
    let tol = tol_mp(j0) + FIT_FLOOR * j0;
    r.le("precondition", "lateral_max_w", lateral, 0.0, None, None);
    r.value("J0", j0);
    let mut prev = j0;
    for k in 1..=windows {
        let target = t0 + k as f64 * gc.t_star;
        let Some(fr) = w_traj.frame_at_or_after(target) else {
            if k == 1 {
                return Err(AnalysisError::Window {
                    t_last,
                    window: gc.t_star,
                });
            }
            break;
        };
        let jk = fr.max.max(0.0);
        r.le(
            "window",
            &format!("J{k}_step"),
            jk,
            gc.eta_star * prev + tol,
            Some(fr.t()),
            None,
        );
        r.le(
            "window",
            &format!("J{k}_chain"),
            jk,
            gc.eta_star.powi(k as i32) * j0 + tol,
            Some(fr.t()),
            None,
        );
        r.value(&format!("J{k}"), jk);
        prev = jk;
    }
    Ok(r)
}

/// What the decay check compares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayMode {
    /// `max|u - u*| <= C0 e^{-νt} max|u0 - u*|` (`m*, M* ∈ J`).
    Interior,
    /// Edge case with `u* = 0` at the lower end and `F = s^m`:
    /// `max u <= η*^{-1/m} e^{-νt/m} max u0`.
    PowerTransformed { m: f64 },
    /// Edge cases without a two-sided envelope: `max(u - u*)` (lower) or
    /// `max(u* - u)` (upper) must not grow and must end below its start.
    OneSided { upper_edge: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub report: Report,
    pub nu_fit: Option<f64>,
    pub rate_bound: f64,
}

/// Least-squares slope of `ln y` against `t` over `t >= t_from`, ignoring
/// samples at or below `floor`. Returns `-slope`.
pub fn fitted_rate(times: &[f64], values: &[f64], t_from: f64, floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= t_from && **v > floor)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

/// Deviation samples are ignored below this fraction of the initial value.
pub const FIT_FLOOR: f64 = 1e-12;

/// Start of the fit window: the midpoint between the first time and the
/// last time at which `values` is still above `floor`.
pub fn fit_window_start(times: &[f64], values: &[f64], floor: f64) -> f64 {
    let t0 = times[0];
    let t_eff = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > floor)
        .map(|(t, _)| *t)
        .fold(t0, f64::max);
    t0 + 0.5 * (t_eff - t0)
}

pub fn check_decay(
    traj: &Trajectory,
    u_star: f64,
    gc: &GrowthConstants,
    mode: DecayMode,
    linear: bool,
) -> Result<DecayReport, AnalysisError> {
    let mut r = Report::new("decay");
    let times = traj.times();
    let t0 = times[0];
    let t_end = *times.last().unwrap();
    let u0 = &traj.initial().field;
    match mode {
        DecayMode::Interior => {
            let c0 = gc
                .decay_prefactor()
                .map_err(|e| AnalysisError::Classification(e.to_string()))?;
            let dev0 = u0.max_abs_dev(u_star);
            let tol = tol_mp(dev0.max(u_star.abs()));
            r.value("C0", c0);
            r.value("nu", gc.nu);
            let mut devs = Vec::with_capacity(times.len());
            for fr in &traj.frames {
                let t = fr.t() - t0;
                let dev = fr.field.max_abs_dev(u_star);
                devs.push(dev);
                r.le(
                    "envelope",
                    "max_abs_dev",
                    dev,
                    c0 * (-gc.nu * t).exp() * dev0 + tol,
                    Some(fr.t()),
                    None,
                );
                if linear && t > 0.0 && t <= gc.t_star {
                    let factor = -(-gc.nu0 / t).exp_m1();
                    r.le(
                        "small_time",
                        "max_abs_dev",
                        dev,
                        factor * dev0 + tol,
                        Some(fr.t()),
                        None,
                    );
                }
            }
            let floor = FIT_FLOOR * dev0;
            let fit = fitted_rate(&times, &devs, fit_window_start(&times, &devs, floor), floor);
            let bound = gc.nu * (1.0 - FIT_TOL);
            // u0 = u*: nothing to fit
            if dev0 > 0.0 {
                r.ge(
                    "fitted_rate",
                    "nu_fit",
                    fit.unwrap_or(f64::NAN),
                    bound,
                    None,
                    None,
                );
            }
            Ok(DecayReport {
                report: r,
                nu_fit: fit,
                rate_bound: bound,
            })
        }
        DecayMode::PowerTransformed { m } => {
            if !(m >= 1.0) {
                return Err(AnalysisError::Invalid(format!(
                    "power exponent m = {m} < 1"
                )));
            }
            if u_star != 0.0 || traj.m_star != 0.0 {
                return Err(AnalysisError::Classification(format!(
                    "power-transformed envelope needs u* = m* = 0 (u* = {u_star}, m* = {})",
                    traj.m_star
                )));
            }
            let max0 = u0.max();
            let tol = tol_mp(max0);
            let pre = gc.eta_star.powf(-1.0 / m);
            r.value("m", m);
            r.value("prefactor", pre);
            let mut maxes = Vec::with_capacity(times.len());
            for fr in &traj.frames {
                let t = fr.t() - t0;
                maxes.push(fr.max);
                r.le(
                    "power_envelope",
                    "max_u",
                    fr.max,
                    pre * (-gc.nu * t / m).exp() * max0 + tol,
                    Some(fr.t()),
                    None,
                );
            }
            let floor = FIT_FLOOR * max0;
            let fit = fitted_rate(
                &times,
                &maxes,
                fit_window_start(&times, &maxes, floor),
                floor,
            );
            let bound = gc.nu / m * (1.0 - FIT_TOL);
            if max0 > 0.0 {
                r.ge(
                    "fitted_rate",
                    "nu_fit",
                    fit.unwrap_or(f64::NAN),
                    bound,
                    None,
                    None,
                );
            }
            Ok(DecayReport {
                report: r,
                nu_fit: fit,
                rate_bound: bound,
            })
        }
        DecayMode::OneSided { upper_edge } => {
            let sign = if upper_edge { -1.0 } else { 1.0 };
            let excess = |f: &Field| {
                f.values
                    .iter()
                    .map(|v| sign * (v - u_star))
                    .fold(0.0f64, f64::max)
            };
            let e0 = excess(u0);
            let tol = tol_mp(e0.max(u_star.abs()));
            let mut prev = e0;
            for fr in &traj.frames {
                let e = excess(&fr.field);
                r.le(
                    "one_sided_monotone",
                    "excess",
                    e,
                    prev + tol,
                    Some(fr.t()),
                    None,
                );
                prev = e;
            }
            r.le("one_sided_final", "excess", prev, e0, Some(t_end), None);
            Ok(DecayReport {
                report: r,
                nu_fit: None,
                rate_bound: 0.0,
            })
        }
    }
}

/// Tail data for the profile-independent rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBounds {
    /// Lower ellipticity bound over the tail.
    pub c0: f64,
    /// Upper bounds for `|B|`, `Tr A` and `|b|` over the tail.
    pub m0: f64,
    pub m1: f64,
    pub drift: f64,
    /// Half-width `δ` of the band `[u* - δ, u* + δ]`.
    pub delta: f64,
}

impl TailBounds {
    /// From bounds sampled over the final quarter of the time samples; the
    /// strict upper bounds are taken just above the sampled suprema.
    pub fn from_samples(
        c: &PDECoefficients,
        grid: &Grid,
        t_samples: &[f64],
        delta: f64,
    ) -> Result<Self, AnalysisError> {
        let n = t_samples.len();
        if n == 0 {
            return Err(AnalysisError::Invalid("no time samples".into()));
        }
        let tail = &t_samples[(3 * n) / 4..];
        let tail = if tail.is_empty() {
            &t_samples[n - 1..]
        } else {
            tail
        };
        let b = coefficient_bounds(c, grid, tail, 0.0, 0.0)?;
        let above = |x: f64| x * (1.0 + 1e-9) + 1e-9;
        Ok(Self {
            c0: b.c0,
            m0: above(b.m0_bound),
            m1: above(b.m1),
            drift: b.drift_bound,
            delta,
        })
    }
}

/// `ν*` from `c0'/2`, `M0'`, `M1'` and `m', M' = u* ∓ δ`.
pub fn nu_star(
    tail: &TailBounds,
    geom: &DomainGeometry,
    u_star: f64,
) -> Result<f64, AnalysisError> {
    let (lo, hi) = (u_star - tail.delta, u_star + tail.delta);
    let m2 = tail.m0 * lo.abs().max(hi.abs()) + tail.drift;
    let (_, _, _, nu, _) = growth_core(0.5 * tail.c0, tail.m1, m2, geom.r0, geom.r_big)?;
    Ok(nu)
}

/// Fitted tail rates (final half) of trajectories that differ only in `u0`
/// must all reach `ν* (1 - FIT_TOL)`.
pub fn check_rate_initial_data_independence(
    trajs: &[Trajectory],
    u_star: f64,
    law: &StateLaw,
    tail: &TailBounds,
    geom: &DomainGeometry,
) -> Result<Report, AnalysisError> {
    if trajs.len() < 3 {
        return Err(AnalysisError::InsufficientTrajectories {
            needed: 3,
            got: trajs.len(),
        });
    }
    let id = trajs[0].coefficients_id;
    if trajs
        .iter()
        .any(|t| t.coefficients_id != id || t.grid != trajs[0].grid)
    {
        return Err(AnalysisError::MismatchedCoefficients);
    }
    let j = law.domain();
    for t in trajs {
        if !(j.contains(t.m_star) && j.contains(t.big_m_star)) {
            return Err(AnalysisError::Classification(format!(
                "range [{}, {}] is not interior to {j}",
                t.m_star, t.big_m_star
            )));
        }
    }
    let nu = nu_star(tail, geom, u_star)?;
    let bound = nu * (1.0 - FIT_TOL);
    let mut r = Report::new("rate_independence");
    r.value("nu_star", nu);
    for (i, t) in trajs.iter().enumerate() {
        let times = t.times();
        let devs: Vec<f64> = t
            .frames
            .iter()
            .map(|f| f.field.max_abs_dev(u_star))
            .collect();
        let dev0 = devs[0];
        let n = times.len();
        let tail_dev = devs[(3 * n) / 4..].iter().copied().fold(0.0, f64::max);
        r.le(
            "tail_band",
            &format!("profile{i}_tail_dev"),
            tail_dev,
            tail.delta,
            None,
            None,
        );
        let floor = FIT_FLOOR * dev0;
        let fit = fitted_rate(&times, &devs, fit_window_start(&times, &devs, floor), floor);
        r.ge(
            "fitted_rate",
            &format!("profile{i}_nu_fit"),
            fit.unwrap_or(f64::NAN),
            bound,
            None,
            None,
        );
        if let Some(f) = fit {
            r.value(&format!("profile{i}_nu_fit"), f);
        }
    }
    Ok(r)
}

/// Size of the leading truncation terms of the diffusion stencils:
/// the largest `a11 |δ⁴_x w|/h₁⁴ + a22 |δ⁴_y w|/h₂⁴ + 2|a12| |δ²_x δ²_y w|/(h₁²h₂²)`
/// over nodes where the stencils fit, with `A` of `coeffs` at time `field.t`.
pub fn truncation_scale(field: &Field, grid: &Grid, coeffs: &PDECoefficients) -> f64 {
    let v = &field.values;
    let h = grid.h();
    let nx = grid.nodes_per_axis(0);
    let d4 = |k: usize, s: usize| {
        v[k + 2 * s] - 4.0 * v[k + s] + 6.0 * v[k] - 4.0 * v[k - s] + v[k - 2 * s]
    };
    let mut best = 0.0f64;
    if grid.dim() == 1 {
        for k in 2..nx.saturating_sub(2) {
            let a = coeffs.a.eval(&grid.coord(k), field.t)[(0, 0)];
            best = best.max(a * d4(k, 1).abs() / h[0].powi(4));
        }
        return best;
    }
    let ny = grid.nodes_per_axis(1);
    let s = nx;
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            let k = j * nx + i;
            let a = coeffs.a.eval(&grid.coord(k), field.t);
            let mut val = 0.0;
            if i >= 2 && i + 2 < nx {
                val += a[(0, 0)] * d4(k, 1).abs() / h[0].powi(4);
            }
            if j >= 2 && j + 2 < ny {
                val += a[(1, 1)] * d4(k, s).abs() / h[1].powi(4);
            }
            let dxy = (v[k + s + 1] - 2.0 * v[k + s] + v[k + s - 1])
                - 2.0 * (v[k + 1] - 2.0 * v[k] + v[k - 1])
                + (v[k - s + 1] - 2.0 * v[k - s] + v[k - s - 1]);
            let a12 = 0.5 * (a[(0, 1)] + a[(1, 0)]);
            val += 2.0 * a12.abs() * dxy.abs() / (h[0] * h[0] * h[1] * h[1]);
            best = best.max(val);
        }
    }
    best
}

/// `C (h² + dt) S`.
pub fn tol_res(grid: &Grid, dt: f64, scale: f64) -> f64 {
    RESIDUAL_CONSTANT * (grid.h_squared_max() + dt) * scale
}

/// Sign of the truncated residual of `F_{λ1}(u)` (must be `<= tol_res`) and
/// `F_{λ2}(u)` (must be `>= -tol_res`) on frames that carry a companion step.
pub fn check_sign_transfer(
    u_traj: &Trajectory,
    problem: &IBVProblem,
    sub: Option<&Transform>,
    sup: Option<&Transform>,
    advection: Advection,
) -> Result<Report, AnalysisError> {
    let grid = &u_traj.grid;
    let mut stepper = Stepper::new(problem, grid, advection)?;
    let mut r = Report::new("sign_transfer");
    for (label, tr, upper) in [("lambda1", sub, true), ("lambda2", sup, false)] {
        let Some(f) = tr else { continue };
        r.value(&format!("{label}"), f.lambda);
        for fr in &u_traj.frames {
            let (next, dt) = fr
                .companion
                .as_ref()
                .ok_or(AnalysisError::MissingCompanion(fr.t()))?;
            let w = map_field(&fr.field, f)?;
            let wn = map_field(next, f)?;
            let wt = Field {
                t: fr.t(),
                values: wn
                    .values
                    .iter()
                    .zip(&w.values)
                    .map(|(a, b)| (a - b) / dt)
                    .collect(),
            };
            let res = stepper.residual_truncated(&w, &wt, &fr.field)?;
            let w_max = w.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            // forward differences turn round-off in w into round-off / dt
            let tol = tol_res(grid, *dt, truncation_scale(&w, grid, &problem.coefficients))
                + tol_mp(w_max) / dt;
            let interior = grid.interior_indices();
            if upper {
                let (k, v) = interior
                    .iter()
                    .map(|&k| (k, res.values[k]))
                    .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
                r.le(label, "max_residual", v, tol, Some(fr.t()), Some(k));
            } else {
                let (k, v) = interior
                    .iter()
                    .map(|&k| (k, res.values[k]))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                r.ge(label, "min_residual", v, -tol, Some(fr.t()), Some(k));
            }
        }
    }
    Ok(r)
}

fn map_field(u: &Field, f: &Transform) -> Result<Field, TransformError> {
    let values = u
        .values
        .iter()
        .map(|&v| f.eval_f(v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Field { t: u.t, values })
}

/// Smallest time at which `W` changes by at most a factor `e` per cell:
/// `h |∇φ|/t <= 1` with `|∇φ| <= 2μR`.
pub fn barrier_resolved_from(spec: &BarrierSpec, grid: &Grid) -> f64 {
    let h = grid.h().iter().copied().fold(0.0, f64::max);
    spec.d2_gradient * h
}

/// Residual of the barrier `W` under the constant-coefficient operator
/// `w_t - c0 Δw` (zero drift) with the solver's stencils and a forward
/// difference in time with the solver's default stable step, at the given
/// times in `(0, T*]`. Must be `<= tol_res`. Times before [`barrier_resolved_from`] are counted in
/// `unresolved_times` and not compared.
pub fn check_barrier_residual(
    spec: &BarrierSpec,
    geom: &DomainGeometry,
    grid: &Grid,
    c0: f64,
    times: &[f64],
) -> Result<Report, AnalysisError> {
    use crate::kernel::PDECoefficients;
    use crate::statelaw::IdealDomain;
    use nalgebra::{DMatrix, DVector};
    let n = grid.dim();
    let law = StateLaw::ideal(1.0, IdealDomain::FullLine)
        .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let coeffs = PDECoefficients::constant(
        DMatrix::identity(n, n) * c0,
        DMatrix::zeros(n, n),
        DVector::zeros(n),
        law,
    )
    .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let mut problem = IBVProblem::new(coeffs, 0.0, Field::constant(grid, 0.0, 0.0), grid)?;
    problem.check_range = false;
    let mut stepper = Stepper::new(&problem, grid, Advection::Hybrid)?;
    let dt = stepper.stable_dt(&problem.u0, crate::solver::DEFAULT_SAFETY)?;
    let interior = grid.interior_indices();
    let t_res = barrier_resolved_from(spec, grid);
    let mut r = Report::new("barrier_residual");
    r.value("beta", spec.beta);
    r.value("eta", spec.eta);
    r.value("resolved_from", t_res);
    r.value("dt", dt);
    let mut unresolved = 0usize;
    let mut ratio = f64::NEG_INFINITY;
    for &t in times {
        if !(t > 0.0) {
            return Err(AnalysisError::Invalid(format!(
                "barrier time {t} must be positive"
            )));
        }
        let tilde_min = (0..grid.len())
            .map(|k| barrier_tilde(spec, geom, 1.0, &grid.coord(k), t))
            .fold(f64::INFINITY, f64::min);
        r.ge(
            "barrier_tilde",
            "min_w_tilde",
            tilde_min,
            -tol_mp(1.0),
            Some(t),
            None,
        );
        if t < t_res {
            unresolved += 1;
            continue;
        }
        let w = grid.sample(t, |x| barrier_eval(spec, geom, x, t));
        let wn = grid.sample(t + dt, |x| barrier_eval(spec, geom, x, t + dt));
        let wt = Field {
            t,
            values: wn
                .values
                .iter()
                .zip(&w.values)
                .map(|(a, b)| (a - b) / dt)
                .collect(),
        };
        let res = stepper.residual_truncated(&w, &wt, &w)?;
        let (k, v) = interior
            .iter()
            .map(|&k| (k, res.values[k]))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let tol = tol_res(grid, dt, truncation_scale(&w, grid, &problem.coefficients));
        ratio = ratio.max(v / tol);
        r.le("barrier", "max_residual", v, tol, Some(t), Some(k));
    }
    r.value("unresolved_times", unresolved as f64);
    r.value("worst_ratio", ratio);
    Ok(r)
}

/// Calibration of [`RESIDUAL_CONSTANT`].
pub mod calibration {
    use super::*;
    use crate::kernel::PDECoefficients;
    use crate::statelaw::IdealDomain;
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::PI;

    /// Cells per axis of the refinement study on `(0, π)`.
    pub const CELLS: [usize; 3] = [20, 40, 80];
    /// `dt = DT_FACTOR h²`.
    pub const DT_FACTOR: f64 = 0.25;
    /// Amplitude of the Cole–Hopf datum `θ = 1 + ε e^{-t} sin x`.
    pub const COLE_HOPF_EPS: f64 = 0.1;
    pub const T_FINAL: f64 = 0.5;

    /// The two exact solutions on `(0, π)` with `u* = 0`.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Oracle {
        /// `u_t = u_xx`, `u = e^{-t} sin x`.
        Heat,
        /// `u_t = u_xx - u_x²`, `u = -ln(1 + ε e^{-t} sin x)`.
        ColeHopf,
    }

    impl Oracle {
        pub fn exact(&self, x: f64, t: f64) -> f64 {
            match self {
                Oracle::Heat => (-t).exp() * x.sin(),
                Oracle::ColeHopf => -(COLE_HOPF_EPS * (-t).exp() * x.sin()).ln_1p(),
            }
        }

        pub fn k(&self) -> f64 {
            match self {
                Oracle::Heat => 0.0,
                Oracle::ColeHopf => 1.0,
            }
        }

        pub fn problem(&self, cells: usize) -> Result<(Grid, IBVProblem), AnalysisError> {
            let grid = Grid::interval(0.0, PI, cells).map_err(SolverError::from)?;
            let law = StateLaw::ideal(1.0, IdealDomain::FullLine)
                .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
            let c = PDECoefficients::constant(
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, self.k()),
                DVector::zeros(1),
                law,
            )
            .map_err(|e| AnalysisError::Invalid(e.to_string()))?;
            let mut u0 = grid.sample(0.0, |x| self.exact(x[0], 0.0));
            for b in grid.boundary_indices() {
                u0.values[b] = 0.0;
            }
            let p = IBVProblem::new(c, 0.0, u0, &grid)?;
            Ok((grid, p))
        }
    }

    /// Largest `|residual| / ((h² + dt) S)` of the exact solutions under the
    /// solver's own stencils, over the refinement study and 51 times in
    /// `[0, T_FINAL]`.
    pub fn residual_constant() -> Result<f64, AnalysisError> {
        let mut c = 0.0f64;
        for oracle in [Oracle::Heat, Oracle::ColeHopf] {
            for cells in CELLS {
                let (grid, p) = oracle.problem(cells)?;
                let h = grid.h()[0];
                let dt = DT_FACTOR * h * h;
                let mut st = Stepper::new(&p, &grid, Advection::Hybrid)?;
                for j in 0..=50 {
                    let t = T_FINAL * j as f64 / 50.0;
                    let u = grid.sample(t, |x| oracle.exact(x[0], t));
                    let un = grid.sample(t + dt, |x| oracle.exact(x[0], t + dt));
                    let ut = Field {
                        t,
                        values: un
                            .values
                            .iter()
                            .zip(&u.values)
                            .map(|(a, b)| (a - b) / dt)
                            .collect(),
                    };
                    let r = st.residual_l(&u, &ut)?;
                    let worst = r.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    let scale = truncation_scale(&u, &grid, &p.coefficients);
                    c = c.max(worst / ((h * h + dt) * scale));
                }
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statelaw::IdealDomain;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    #[test]
    fn geometry_examples() {
        let g = geometry(&[1.0], &[2.0], &[0.0]).unwrap();
        assert_eq!((g.r0, g.r_big), (1.0, 2.0));
        let g = geometry(&[0.0, 0.0], &[1.0, 1.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(g.r0, 1.0);
        assert_relative_eq!(g.r_big, 5f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(
            geometry(&[1.0], &[2.0], &[1.5]),
            Err(AnalysisError::InteriorPoint(_))
        ));
        assert!(geometry(&[1.0], &[2.0], &[2.0]).is_err());
        assert_eq!(default_x0(&[1.0], &[2.0]), vec![0.0]);
    }

    fn consts(c0: f64, m1: f64, m2: f64) -> CoefficientBounds {
        CoefficientBounds {
            c0,
            c1: 0.0,
            c2: 0.0,
            m0_bound: 0.0,
            m1,
            m2,
            drift_bound: 0.0,
        }
    }

    #[test]
    fn hand_growth_constants() {
        let geom = geometry(&[1.0], &[2.0], &[0.0]).unwrap();
        let law = StateLaw::ideal(1.0, IdealDomain::FullLine).unwrap();
        let gc = growth_constants(
            &consts(1.0, 1.0, 0.0),
            &geom,
            &law,
            (0.0, 0.0),
            0.0,
            0.0,
            1.0,
        )
        .unwrap();
        assert_relative_eq!(gc.beta, 0.5, epsilon = 1e-15);
        assert_relative_eq!(gc.t_star, 2.0, epsilon = 1e-15);
        assert_relative_eq!(gc.eta_star, 0.5, epsilon = 1e-15);
        assert_relative_eq!(gc.nu, 0.5 * 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(gc.nu0, 2.0 * 2f64.ln(), epsilon = 1e-15);
        assert_eq!((gc.c1_lip, gc.c2_lip), (Some(1.0), Some(1.0)));
        assert_relative_eq!(gc.decay_prefactor().unwrap(), 2.0, epsilon = 1e-15);

        let gc = growth_constants(
            &consts(1.0, 1.0, 0.0),
            &geom,
            &law,
            (1.0, -1.0),
            0.0,
            0.0,
            1.0,
        )
        .unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(gc.c1_lip.unwrap(), 1.0 / e, epsilon = 1e-15);
        assert_relative_eq!(gc.c2_lip.unwrap(), e, epsilon = 1e-15);
    }

    #[test]
    fn edge_range_has_no_prefactor() {
        let geom = geometry(&[1.0], &[2.0], &[0.0]).unwrap();
        let law = StateLaw::slightly_compressible(1.0).unwrap();
        let gc = growth_constants(
            &consts(1.0, 1.0, 0.0),
            &geom,
            &law,
            (1.0, 0.0),
            0.0,
            0.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            gc.decay_prefactor(),
            Err(AnalysisError::EdgeCaseUnsupported(_))
        ));
    }

    #[test]
    fn coefficient_bound_examples() {
        let grid = Grid::rectangle([0.0, 0.0], [1.0, 1.0], [4, 4]).unwrap();
        let law = StateLaw::ideal(1.0, IdealDomain::FullLine).unwrap();
        let c = PDECoefficients::constant(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DVector::zeros(2),
            law.clone(),
        )
        .unwrap();
        let b = coefficient_bounds(&c, &grid, &[0.0], 0.0, 1.0).unwrap();
        assert_eq!(
            (b.c0, b.c1, b.c2, b.m0_bound, b.m1, b.m2),
            (1.0, 0.0, 0.0, 0.0, 2.0, 0.0)
        );

        let c = PDECoefficients::constant(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DVector::zeros(2),
            law,
        )
        .unwrap();
        let b = coefficient_bounds(&c, &grid, &[0.0], 0.0, 1.0).unwrap();
        assert_eq!((b.c0, b.m1, b.c1, b.c2), (1.0, 3.0, 0.0, 0.0));
    }

    #[test]
    fn barrier_examples() {
        let geom = geometry(&[1.0], &[2.0], &[0.0]).unwrap();
        let spec = BarrierSpec::new(1.0, 1.0, &geom, 0.5).unwrap();
        assert_eq!(barrier_eval(&spec, &geom, &[1.5], 0.0), 0.0);
        assert_eq!(barrier_eval(&spec, &geom, &[1.5], -1.0), 0.0);
        // phi(x) = d0 at x = r0 = 1; t0 = d0/beta
        let t0 = spec.d0 / spec.beta;
        let w = barrier_eval(&spec, &geom, &[1.0], t0);
        assert_relative_eq!(w, 1.0 / spec.eta, max_relative = 1e-14);
        assert!(barrier_tilde(&spec, &geom, 3.0, &[1.0], t0).abs() < 1e-14);

        // beta = 1, phi = 1, t = 1
        let geom1 = DomainGeometry {
            x0: vec![0.0],
            r0: 1.0,
            r_big: 2.0,
        };
        let mut s1 = BarrierSpec::new(0.25, 1.0, &geom1, 1.0).unwrap();
        s1.mu = 1.0;
        assert_relative_eq!(
            barrier_eval(&s1, &geom1, &[1.0], 1.0),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn fitted_rate_recovers_exponent() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-1.7 * t).exp()).collect();
        assert_relative_eq!(fitted_rate(&t, &y, 0.0, 0.0).unwrap(), 1.7, epsilon = 1e-12);
    }

    #[test]
    fn residual_constant_is_reproduced() {
        let c = calibration::residual_constant().unwrap();
        assert!(c <= RESIDUAL_CONSTANT, "calibrated {c}");
        assert!(c >= 0.95 * RESIDUAL_CONSTANT, "calibrated {c}");
    }

    fn valid_inputs() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
        (
            0.05f64..5.0,
            0.05f64..5.0,
            0.0f64..3.0,
            0.1f64..3.0,
            1.01f64..4.0,
        )
            .prop_map(|(c0, m1, m2, r0, ratio)| (c0, m1, m2, r0, r0 * ratio))
    }

    proptest! {
        #[test]
        fn formula_consistency((c0, m1, m2, r0, r) in valid_inputs()) {
            let (beta, t_star, eta, nu, _) = growth_core(c0, m1, m2, r0, r).unwrap();
            prop_assert!((t_star * 4.0 * c0 * beta - r * r).abs() <= 8.0 * f64::EPSILON * r * r);
            prop_assert!(eta > 0.0 && eta <= 1.0);
            prop_assert!(nu > 0.0);
            if eta < 0.999 {
                prop_assert!((nu * t_star - (1.0 / eta).ln()).abs() <= 1e-12 * (1.0 / eta).ln().max(1.0));
            }
        }

        #[test]
        fn monotone_dependence((c0, m1, m2, r0, r) in valid_inputs(), grow in 1.01f64..2.0) {
            let (b1, _, _, _, n1) = growth_core(c0, m1, m2, r0, r).unwrap();
            let (b2, _, _, _, n2) = growth_core(c0, m1, m2, r0, r * grow).unwrap();
            if m2 > 0.0 {
                prop_assert!(b2 > b1);
            }
            prop_assert!(b2 >= b1);
            prop_assert!(n2 > n1);
            let (b3, _, _, _, _) = growth_core(c0 * grow, m1, m2, r0, r).unwrap();
            prop_assert!(b3 < b1);
        }

        #[test]
        fn barrier_tilde_nonnegative(x in 1.0f64..2.0, t in 1e-3f64..10.0, big_m in 0.0f64..5.0) {
            let geom = geometry(&[1.0], &[2.0], &[0.0]).unwrap();
            let spec = BarrierSpec::new(1.0, 1.0, &geom, 0.5).unwrap();
            prop_assert!(barrier_tilde(&spec, &geom, big_m, &[x], t) >= -1e-14 * big_m);
        }
    }
}
