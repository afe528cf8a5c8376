//! Bernstein–Cole–Hopf maps `F(s) = C ∫_{s0}^s e^{λP(z)} dz + C'`, their
//! inverses, the threshold exponents and the extension to an open edge of `J`.

use thiserror::Error;

use crate::quadrature::{adaptive_simpson, QuadratureError};
use crate::statelaw::{EdgeCase, EdgeClassification, Interval, LawKind, StateLaw};

/// Offset used by the strict threshold variant.
pub const EPS_LAMBDA: f64 = 1e-6;
const SIMPSON_ABS_TOL: f64 = 1e-12;
const SIMPSON_REL_TOL: f64 = 1e-14;
const SIMPSON_DEPTH: usize = 60;
const MAX_INVERSE_ITER: usize = 200;
/// Series limits for the isentropic closed form (`|λ s^γ|`).
const SERIES_POS_LIMIT: f64 = 40.0;
const SERIES_NEG_LIMIT: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("s = {s} outside the transform domain {domain}")]
    Domain { s: f64, domain: Interval },
    #[error("w = {w} outside the range of F")]
    Range { w: f64 },
    #[error("inverse did not converge for w = {w} after {iterations} iterations")]
    Convergence { w: f64, iterations: usize },
    #[error("invalid bound: {0}")]
    InvalidBound(String),
    #[error("edge extension refused: {0}")]
    Extension(String),
    #[error("invalid transform parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Closed forms recognized at construction (all modulo the affine constants).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedForm {
    /// `∫ e^{λ z^γ}` by its power series.
    IsentropicIntegral,
    /// Ideal law, `λ = 0`: `F` affine.
    IdentityMap,
    /// Ideal law, `λ ≠ 0`: `F ~ e^{λ s}`.
    Exponential,
    /// Slightly compressible law: `F ~ s^{λ+1}` (`ln s` at `λ = -1`).
    PowerMap,
}

impl ClosedForm {
    pub fn name(&self) -> &'static str {
        match self {
            ClosedForm::IsentropicIntegral => "isentropic_integral",
            ClosedForm::IdentityMap => "identity",
            ClosedForm::Exponential => "exponential",
            ClosedForm::PowerMap => "power",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Lower,
    Upper,
}

/// Edge point added to the domain, with the value of `P` there taken as the
/// one-sided limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeExtension {
    pub edge: Edge,
    pub point: f64,
    pub p_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub lambda: f64,
    pub c: f64,
    pub c_prime: f64,
    pub s0: f64,
    law: StateLaw,
    closed_form: Option<ClosedForm>,
    extension: Option<EdgeExtension>,
    force_quadrature: bool,
}

pub fn make_transform(
    law: &StateLaw,
    lambda: f64,
    c: f64,
    c_prime: f64,
    s0: f64,
) -> Result<Transform, TransformError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(TransformError::InvalidParameter(format!(
            "C must be positive, got {c}"
        )));
    }
    if !lambda.is_finite() || !c_prime.is_finite() {
        return Err(TransformError::InvalidParameter(
            "lambda and C' must be finite".into(),
        ));
    }
    if !law.domain().contains(s0) {
        return Err(TransformError::Domain {
            s: s0,
            domain: law.domain(),
        });
    }
    let closed_form = match law.kind() {
        LawKind::Ideal { .. } if lambda == 0.0 => Some(ClosedForm::IdentityMap),
        LawKind::Ideal { .. } => Some(ClosedForm::Exponential),
        LawKind::SlightlyCompressible { .. } => Some(ClosedForm::PowerMap),
        LawKind::Isentropic { .. } => Some(ClosedForm::IsentropicIntegral),
        LawKind::Custom(_) => None,
    };
    Ok(Transform {
        lambda,
        c,
        c_prime,
        s0,
        law: law.clone(),
        closed_form,
        extension: None,
        force_quadrature: false,
    })
}

impl Transform {
    pub fn law(&self) -> &StateLaw {
        &self.law
    }

    pub fn closed_form(&self) -> Option<ClosedForm> {
        if self.force_quadrature {
            None
        } else {
            self.closed_form
        }
    }

    pub fn extension(&self) -> Option<EdgeExtension> {
        self.extension
    }

    /// The same map evaluated by adaptive quadrature only.
    pub fn quadrature_only(&self) -> Self {
        let mut t = self.clone();
        t.force_quadrature = true;
        t
    }

    /// `J`, plus the extension point if any.
    pub fn domain(&self) -> Interval {
        let mut j = self.law.domain();
        if let Some(ext) = self.extension {
            match ext.edge {
                Edge::Lower => j.lo.closed = true,
                Edge::Upper => j.hi.closed = true,
            }
        }
        j
    }

    fn check(&self, s: f64) -> Result<(), TransformError> {
        let d = self.domain();
        if d.contains(s) {
            Ok(())
        } else {
            Err(TransformError::Domain { s, domain: d })
        }
    }

    fn p_at(&self, z: f64) -> f64 {
        match self.extension {
            Some(ext) if z == ext.point => ext.p_limit,
            _ => self.law.p_unchecked(z),
        }
    }

    /// `e^{λ P(z)}`, with `0 · ∞` read as `λ = 0 ⇒ 1`.
    fn integrand(&self, z: f64) -> f64 {
        if self.lambda == 0.0 {
            return 1.0;
        }
        (self.lambda * self.p_at(z)).exp()
    }

    pub fn eval_f(&self, s: f64) -> Result<f64, TransformError> {
        self.check(s)?;
        self.eval_unchecked(s)
    }

    /// `F'(s) = C e^{λ P(s)}`.
    pub fn eval_fprime(&self, s: f64) -> Result<f64, TransformError> {
        self.check(s)?;
        Ok(self.c * self.integrand(s))
    }

    /// `F''(s) = λ P'(s) F'(s)`.
    pub fn eval_fsecond(&self, s: f64) -> Result<f64, TransformError> {
        self.check(s)?;
        let fp = self.c * self.integrand(s);
        if self.lambda == 0.0 || fp == 0.0 {
            return Ok(0.0);
        }
        Ok(self.lambda * self.law.p_prime_unchecked(s) * fp)
    }

    fn eval_unchecked(&self, s: f64) -> Result<f64, TransformError> {
        if s == self.s0 {
            return Ok(self.c_prime);
        }
        let lam = self.lambda;
        let s0 = self.s0;
        let integral = match (self.closed_form(), self.law.kind()) {
            (Some(ClosedForm::IdentityMap), _) => Some(s - s0),
            (Some(ClosedForm::Exponential), _) => {
                Some((lam * s0).exp() * (lam * (s - s0)).exp_m1() / lam)
            }
            (Some(ClosedForm::PowerMap), _) => {
                let q = lam + 1.0;
                if q == 0.0 {
                    Some((s / s0).ln())
                } else {
                    Some(s0.powf(q) * (q * (s / s0).ln()).exp_m1() / q)
                }
            }
            (Some(ClosedForm::IsentropicIntegral), LawKind::Isentropic { gamma, .. }) => {
                match (series(lam, *gamma, s), series(lam, *gamma, s0)) {
                    (Some(a), Some(b)) => Some(a - b),
                    _ => None,
                }
            }
            _ => None,
        };
        let integral = match integral {
            Some(v) => v,
            None => self.quadrature(s0, s)?,
        };
        Ok(self.c * integral + self.c_prime)
    }

    fn quadrature(&self, a: f64, b: f64) -> Result<f64, TransformError> {
        let f = |z: f64| self.integrand(z);
        let scale = f(a).max(f(b)).max(f(0.5 * (a + b)));
        let rel = SIMPSON_REL_TOL;
        let abs = SIMPSON_ABS_TOL.min(SIMPSON_ABS_TOL * scale.max(1e-300) * (b - a).abs().max(1.0));
        let v = adaptive_simpson(&f, a, b, abs.max(f64::MIN_POSITIVE), rel, SIMPSON_DEPTH)?;
        Ok(v)
    }

    /// Inverse of the strictly increasing `F`: bracketing, bisection down to
    /// a relative width of `1e-3`, then safeguarded Newton.
    pub fn eval_f_inv(&self, w: f64) -> Result<f64, TransformError> {
        if !w.is_finite() {
            return Err(TransformError::Range { w });
        }
        if w == self.c_prime {
            return Ok(self.s0);
        }
        let (mut a, mut b) = self.bracket(w)?;
        let mut fa = self.eval_unchecked(a)? - w;
        if fa == 0.0 {
            return Ok(a);
        }
        if self.eval_unchecked(b)? == w {
            return Ok(b);
        }
        let mut iterations = 0;
        while (b - a) > 1e-3 * (1.0 + a.abs().min(b.abs())) {
            let m = 0.5 * (a + b);
            let fm = self.eval_unchecked(m)? - w;
            if fm == 0.0 {
                return Ok(m);
            }
            if (fm < 0.0) == (fa < 0.0) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
            iterations += 1;
            if iterations > MAX_INVERSE_ITER {
                return Err(TransformError::Convergence { w, iterations });
            }
        }
        let tol_w = 1e-12 * (1.0 + w.abs());
        let mut s = 0.5 * (a + b);
        for _ in 0..MAX_INVERSE_ITER {
            iterations += 1;
            let fs = self.eval_unchecked(s)? - w;
            if fs.abs() <= 0.25 * f64::EPSILON * (1.0 + w.abs()) {
                return Ok(s);
            }
            if fs < 0.0 {
                a = s;
            } else {
                b = s;
            }
            let slope = self.c * self.integrand(s);
            let mut next = if slope > 0.0 && slope.is_finite() {
                s - fs / slope
            } else {
                f64::NAN
            };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            let step = (next - s).abs();
            s = next;
            if step <= 2.0 * f64::EPSILON * (1.0 + s.abs())
                || b - a <= 2.0 * f64::EPSILON * (1.0 + s.abs())
            {
                let r = self.eval_unchecked(s)? - w;
                if r.abs() <= tol_w || b - a <= 4.0 * f64::EPSILON * (1.0 + s.abs()) {
                    return Ok(s);
                }
            }
        }
        Err(TransformError::Convergence { w, iterations })
    }

    /// Bracket `[a, b]` around the root of `F(s) = w`, walking out from `s0`.
    fn bracket(&self, w: f64) -> Result<(f64, f64), TransformError> {
        let d = self.domain();
        let up = w > self.c_prime;
        let end = if up { d.hi } else { d.lo };
        let sign = if up { 1.0 } else { -1.0 };
        let mut inner = self.s0;
        let mut width = 0.5
            * (1.0 + self.s0.abs()).min(if end.value.is_finite() {
                (end.value - self.s0).abs()
            } else {
                f64::INFINITY
            });
        for _ in 0..2100 {
            let mut outer = inner + sign * width;
            let at_end = end.value.is_finite() && (outer - end.value) * sign >= 0.0;
            if at_end {
                if d.contains(end.value) {
                    let fe = self.eval_unchecked(end.value)?;
                    if (fe - w) * sign >= 0.0 {
                        return Ok(order(inner, end.value));
                    }
                    return Err(TransformError::Range { w });
                }
                // open end: approach it geometrically
                outer = inner + 0.5 * (end.value - inner);
                if outer == inner || outer == end.value {
                    return Err(TransformError::Range { w });
                }
            } else if !outer.is_finite() {
                return Err(TransformError::Range { w });
            }
            let fo = self.eval_unchecked(outer)?;
            if fo.is_nan() {
                return Err(TransformError::Range { w });
            }
            if (fo - w) * sign >= 0.0 {
                return Ok(order(inner, outer));
            }
            inner = outer;
            width *= 2.0;
        }
        Err(TransformError::Range { w })
    }
}

fn order(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// `Σ_k λ^k s^{kγ+1} / (k! (kγ+1))`, or `None` outside the accurate range.
fn series(lam: f64, gamma: f64, s: f64) -> Option<f64> {
    if s == 0.0 {
        return Some(0.0);
    }
    let x = lam * s.powf(gamma);
    if (lam > 0.0 && x > SERIES_POS_LIMIT) || (lam < 0.0 && x < -SERIES_NEG_LIMIT) {
        return None;
    }
    let mut term = 1.0; // x^k / k!
    let mut sum = 1.0;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= x / k as f64;
        let add = term / (k as f64 * gamma + 1.0);
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() && k as f64 > x.abs() {
            break;
        }
        if k > 400 {
            return None;
        }
    }
    Some(s * sum)
}

/// `λ1 = c1/c0`, `λ2 = -c2/c0`; with `strict` they are pushed to at least
/// `±EPS_LAMBDA` away from zero.
pub fn lambda_thresholds(
    c0: f64,
    c1: f64,
    c2: f64,
    strict: bool,
) -> Result<(f64, f64), TransformError> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(TransformError::InvalidBound(format!(
            "c0 must be positive, got {c0}"
        )));
    }
    if !(c1 >= 0.0 && c2 >= 0.0 && c1.is_finite() && c2.is_finite()) {
        return Err(TransformError::InvalidBound(format!(
            "c1, c2 must be nonnegative, got {c1}, {c2}"
        )));
    }
    let (mut l1, mut l2) = (c1 / c0, -c2 / c0);
    if strict {
        l1 = l1.max(EPS_LAMBDA);
        l2 = l2.min(-EPS_LAMBDA);
    }
    Ok((l1, l2))
}

/// Adds the edge point `m*` (lower) or `M*` (upper) to the domain.
pub fn extend_to_edge(
    t: &Transform,
    edge: Edge,
    classification: &EdgeClassification,
) -> Result<Transform, TransformError> {
    let j = t.law.domain();
    let point = match edge {
        Edge::Lower => classification.m_star,
        Edge::Upper => classification.big_m_star,
    };
    if !point.is_finite() {
        return Err(TransformError::Extension(format!(
            "edge point {point} is not finite"
        )));
    }
    if j.contains(point) {
        return Ok(t.clone());
    }
    let end = match edge {
        Edge::Lower => j.lo.value,
        Edge::Upper => j.hi.value,
    };
    if point != end {
        return Err(TransformError::Extension(format!(
            "{point} is not the {edge:?} end {end} of {j}"
        )));
    }
    let (needed, sign_ok) = match edge {
        Edge::Lower => (EdgeCase::E1, t.lambda > 0.0),
        Edge::Upper => (EdgeCase::E2, t.lambda < 0.0),
    };
    if classification.case != needed {
        return Err(TransformError::Extension(format!(
            "{edge:?} edge needs {needed:?}, range is {:?}",
            classification.case
        )));
    }
    if !sign_ok {
        return Err(TransformError::Extension(format!(
            "{edge:?} edge needs lambda {} 0, got {}",
            if edge == Edge::Lower { ">" } else { "<" },
            t.lambda
        )));
    }
    let p_limit = classification
        .edge_limit
        .ok_or_else(|| TransformError::Extension("missing limit of P at the edge".into()))?;
    let mut out = t.clone();
    out.extension = Some(EdgeExtension {
        edge,
        point,
        p_limit,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statelaw::{classify_edges, IdealDomain};
    use approx::assert_relative_eq;

    fn ideal() -> StateLaw {
        StateLaw::ideal(1.0, IdealDomain::FullLine).unwrap()
    }

    #[test]
    fn selects_closed_forms() {
        let t = make_transform(&ideal(), 0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(t.closed_form(), Some(ClosedForm::IdentityMap));
        assert_eq!(t.eval_f(1.7).unwrap(), 1.7);

        let t = make_transform(&ideal(), 3.0, 3.0, 1.0, 0.0).unwrap();
        assert_eq!(t.closed_form(), Some(ClosedForm::Exponential));
        for s in [-1.0, 0.3, 2.0] {
            assert_relative_eq!(t.eval_f(s).unwrap(), (3.0 * s).exp(), max_relative = 1e-14);
        }

        let slight = StateLaw::slightly_compressible(1.0).unwrap();
        let t = make_transform(&slight, 2.0, 3.0, 1.0, 1.0).unwrap();
        assert_eq!(t.closed_form(), Some(ClosedForm::PowerMap));
        for s in [0.2, 1.5, 4.0] {
            assert_relative_eq!(t.eval_f(s).unwrap(), s * s * s, max_relative = 1e-14);
        }
    }

    #[test]
    fn hand_integrals() {
        let isen = StateLaw::isentropic(1.0, 1.0).unwrap();
        let t = make_transform(&isen, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(
            t.eval_f(1.0).unwrap(),
            std::f64::consts::E - 1.0,
            epsilon = 1e-14
        );

        let slight = StateLaw::slightly_compressible(1.0).unwrap();
        let t = make_transform(&slight, -2.0, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(t.eval_f(2.0).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn s0_outside_domain() {
        let slight = StateLaw::slightly_compressible(1.0).unwrap();
        assert!(matches!(
            make_transform(&slight, 1.0, 1.0, 0.0, 0.0),
            Err(TransformError::Domain { .. })
        ));
    }

    #[test]
    fn fixed_point_at_s0() {
        let t = make_transform(&ideal(), 2.0, 0.7, -3.0, 0.25).unwrap();
        assert_eq!(t.eval_f(0.25).unwrap(), -3.0);
        assert_eq!(t.eval_f_inv(-3.0).unwrap(), 0.25);
    }

    #[test]
    fn thresholds() {
        assert_eq!(lambda_thresholds(1.0, 0.0, 0.0, false).unwrap(), (0.0, 0.0));
        assert_eq!(
            lambda_thresholds(2.0, 1.0, 4.0, false).unwrap(),
            (0.5, -2.0)
        );
        assert_eq!(
            lambda_thresholds(1.0, 0.0, 0.0, true).unwrap(),
            (EPS_LAMBDA, -EPS_LAMBDA)
        );
        assert!(lambda_thresholds(0.0, 1.0, 1.0, false).is_err());
        assert!(lambda_thresholds(1.0, -1.0, 1.0, false).is_err());
        // power-map exponent for the edge case: m = c1/c0 + 1
        let (l1, _) = lambda_thresholds(0.5, 1.0, 1.0, false).unwrap();
        assert_eq!(l1 + 1.0, 3.0);
    }

    #[test]
    fn lower_edge_extension_of_power_map() {
        let slight = StateLaw::slightly_compressible(1.0).unwrap();
        let class = classify_edges(&slight, 0.0, 1.0).unwrap();
        let t = make_transform(&slight, 2.0, 1.0, 0.0, 1.0).unwrap();
        assert!(t.eval_f(0.0).is_err());
        let ext = extend_to_edge(&t, Edge::Lower, &class).unwrap();
        // F(s) = (s^3 - 1)/3
        assert_relative_eq!(ext.eval_f(0.0).unwrap(), -1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(ext.eval_fprime(0.0).unwrap(), 0.0);
        assert_relative_eq!(
            ext.quadrature_only().eval_f(0.0).unwrap(),
            -1.0 / 3.0,
            epsilon = 1e-11
        );
        assert_eq!(ext.eval_f_inv(-1.0 / 3.0).unwrap(), 0.0);
    }

    #[test]
    fn extension_no_op_and_errors() {
        let isen = StateLaw::isentropic(2.0, 1.0).unwrap();
        let class = classify_edges(&isen, 0.0, 2.0).unwrap();
        let t = make_transform(&isen, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(extend_to_edge(&t, Edge::Lower, &class).unwrap(), t);

        let half = StateLaw::ideal(1.0, IdealDomain::HalfLine).unwrap();
        let t = make_transform(&half, -1.0, 1.0, 0.0, 1.0).unwrap();
        let fake = EdgeClassification {
            case: EdgeCase::E2,
            m_star: 0.0,
            big_m_star: f64::INFINITY,
            edge_limit: Some(f64::INFINITY),
        };
        assert!(matches!(
            extend_to_edge(&t, Edge::Upper, &fake),
            Err(TransformError::Extension(_))
        ));

        let slight = StateLaw::slightly_compressible(1.0).unwrap();
        let class = classify_edges(&slight, 0.0, 1.0).unwrap();
        let neg = make_transform(&slight, -1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(extend_to_edge(&neg, Edge::Lower, &class).is_err());
    }

    #[test]
    fn inverse_range_error() {
        let slight = StateLaw::slightly_compressible(1.0).unwrap();
        // F(s) = 1 - 1/s < 1 on (0, inf)
        let t = make_transform(&slight, -2.0, 1.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            t.eval_f_inv(1.5),
            Err(TransformError::Range { .. })
        ));
        assert_relative_eq!(t.eval_f_inv(0.5).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn isentropic_series_matches_quadrature() {
        for (gamma, lam) in [(1.4, 1.0), (1.4, -0.8), (2.0, 3.0), (1.0, -2.0)] {
            let law = StateLaw::isentropic(gamma, 1.0).unwrap();
            let t = make_transform(&law, lam, 1.0, 0.0, 0.5).unwrap();
            let q = t.quadrature_only();
            for s in [0.0, 0.1, 0.9, 1.6] {
                let a = t.eval_f(s).unwrap();
                let b = q.eval_f(s).unwrap();
                assert!(
                    (a - b).abs() <= 1e-10 * (1.0 + a.abs()),
                    "{gamma} {lam} {s}: {a} {b}"
                );
            }
        }
    }
}
