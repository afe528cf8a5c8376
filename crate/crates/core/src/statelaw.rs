//! Equations of state `P` with `P' >= 0` on an interval `J`, and the
//! classification of the initial range `[m*, M*]` against the ends of `J`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateLawError {
    #[error("s = {s} lies outside the state-law domain {domain}")]
    Domain { s: f64, domain: Interval },
    #[error("invalid state-law parameter: {0}")]
    InvalidParameter(String),
    #[error("inconsistent range: m* = {m_star}, M* = {big_m_star} for domain {domain}")]
    InconsistentRange {
        m_star: f64,
        big_m_star: f64,
        domain: Interval,
    },
    #[error("range [{m_star}, {big_m_star}] leaves the domain {domain} at both ends")]
    Unclassifiable {
        m_star: f64,
        big_m_star: f64,
        domain: Interval,
    },
    #[error("custom state table rejected: {0}")]
    Table(String),
}

/// One end of an interval. `value` may be infinite, in which case `closed`
/// is ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint {
    pub value: f64,
    pub closed: bool,
}

impl Endpoint {
    pub fn closed(value: f64) -> Self {
        Self {
            value,
            closed: true,
        }
    }

    pub fn open(value: f64) -> Self {
        Self {
            value,
            closed: false,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// Interval with independently open or closed ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: Endpoint,
    pub hi: Endpoint,
}

impl Interval {
    pub fn new(lo: Endpoint, hi: Endpoint) -> Self {
        Self { lo, hi }
    }

    pub fn real_line() -> Self {
        Self::new(
            Endpoint::open(f64::NEG_INFINITY),
            Endpoint::open(f64::INFINITY),
        )
    }

    /// Membership uses exact comparison with the stored end points.
    pub fn contains(&self, s: f64) -> bool {
        if !s.is_finite() {
            return false;
        }
        let above = if self.lo.closed && self.lo.is_finite() {
            s >= self.lo.value
        } else {
            s > self.lo.value
        };
        let below = if self.hi.closed && self.hi.is_finite() {
            s <= self.hi.value
        } else {
            s < self.hi.value
        };
        above && below
    }

    pub fn closure_contains(&self, s: f64) -> bool {
        s.is_finite() && s >= self.lo.value && s <= self.hi.value
    }

    /// Distance by which `s` lies outside the closure (0 inside).
    pub fn excess(&self, s: f64) -> f64 {
        if s < self.lo.value {
            self.lo.value - s
        } else if s > self.hi.value {
            s - self.hi.value
        } else {
            0.0
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lo.closed && self.lo.is_finite() {
            '['
        } else {
            '('
        };
        let r = if self.hi.closed && self.hi.is_finite() {
            ']'
        } else {
            ')'
        };
        write!(f, "{l}{}, {}{r}", self.lo.value, self.hi.value)
    }
}

/// Domain choice for the ideal-gas law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdealDomain {
    HalfLine,
    FullLine,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    /// `P(s) = s^gamma` on `[0, inf)`, Darcy scale `c`.
    Isentropic {
        gamma: f64,
        c: f64,
    },
    /// `P(s) = s`, Darcy scale `c`.
    Ideal {
        c: f64,
        domain: IdealDomain,
    },
    /// `P(s) = ln s` on `(0, inf)`, Darcy scale `1/kappa`.
    SlightlyCompressible {
        kappa: f64,
    },
    Custom(TabulatedLaw),
}

/// Equation of state with its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLaw {
    kind: LawKind,
    domain: Interval,
}

impl StateLaw {
    pub fn isentropic(gamma: f64, c: f64) -> Result<Self, StateLawError> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(StateLawError::InvalidParameter(format!(
                "isentropic gamma must be >= 1, got {gamma}"
            )));
        }
        check_positive("c", c)?;
        Ok(Self {
            kind: LawKind::Isentropic { gamma, c },
            domain: Interval::new(Endpoint::closed(0.0), Endpoint::open(f64::INFINITY)),
        })
    }

    pub fn ideal(c: f64, domain: IdealDomain) -> Result<Self, StateLawError> {
        check_positive("c", c)?;
        let interval = match domain {
            IdealDomain::HalfLine => {
                Interval::new(Endpoint::closed(0.0), Endpoint::open(f64::INFINITY))
            }
            IdealDomain::FullLine => Interval::real_line(),
        };
        Ok(Self {
            kind: LawKind::Ideal { c, domain },
            domain: interval,
        })
    }

    pub fn slightly_compressible(kappa: f64) -> Result<Self, StateLawError> {
        check_positive("kappa", kappa)?;
        Ok(Self {
            kind: LawKind::SlightlyCompressible { kappa },
            domain: Interval::new(Endpoint::open(0.0), Endpoint::open(f64::INFINITY)),
        })
    }

    pub fn custom(table: TabulatedLaw) -> Self {
        let domain = table.domain;
        Self {
            kind: LawKind::Custom(table),
            domain,
        }
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LawKind::Isentropic { .. } => "isentropic",
            LawKind::Ideal { .. } => "ideal",
            LawKind::SlightlyCompressible { .. } => "slightly_compressible",
            LawKind::Custom(_) => "custom",
        }
    }

    /// Factor turning `M0 K̄` into the coefficient `K`: `c` for gases,
    /// `1/kappa` for slightly compressible fluids.
    pub fn darcy_scale(&self) -> f64 {
        match &self.kind {
            LawKind::Isentropic { c, .. } | LawKind::Ideal { c, .. } => *c,
            LawKind::SlightlyCompressible { kappa } => 1.0 / kappa,
            LawKind::Custom(t) => t.darcy_scale,
        }
    }

    pub fn p(&self, s: f64) -> Result<f64, StateLawError> {
        self.check(s)?;
        Ok(self.p_unchecked(s))
    }

    pub fn p_prime(&self, s: f64) -> Result<f64, StateLawError> {
        self.check(s)?;
        Ok(self.p_prime_unchecked(s))
    }

    /// `P(s)` without the domain check.
    pub fn p_unchecked(&self, s: f64) -> f64 {
        match &self.kind {
            LawKind::Isentropic { gamma, .. } => s.powf(*gamma),
            LawKind::Ideal { .. } => s,
            LawKind::SlightlyCompressible { .. } => s.ln(),
            LawKind::Custom(t) => t.eval(s).0,
        }
    }

    /// `P'(s)` without the domain check.
    pub fn p_prime_unchecked(&self, s: f64) -> f64 {
        match &self.kind {
            LawKind::Isentropic { gamma, .. } => gamma * s.powf(gamma - 1.0),
            LawKind::Ideal { .. } => 1.0,
            LawKind::SlightlyCompressible { .. } => 1.0 / s,
            LawKind::Custom(t) => t.eval(s).1,
        }
    }

    /// `lim P(z)` as `z` approaches the lower end of `J` from inside.
    pub fn lower_limit(&self) -> f64 {
        let lo = self.domain.lo.value;
        if lo == f64::NEG_INFINITY {
            return match &self.kind {
                // only the linear law reaches the full line
                LawKind::Ideal { .. } => f64::NEG_INFINITY,
                _ => self.p_unchecked(lo),
            };
        }
        match &self.kind {
            LawKind::SlightlyCompressible { .. } => f64::NEG_INFINITY,
            _ => self.p_unchecked(lo),
        }
    }

    /// `lim P(z)` as `z` approaches the upper end of `J` from inside.
    pub fn upper_limit(&self) -> f64 {
        let hi = self.domain.hi.value;
        if hi == f64::INFINITY {
            return f64::INFINITY;
        }
        self.p_unchecked(hi)
    }

    fn check(&self, s: f64) -> Result<(), StateLawError> {
        if self.domain.contains(s) {
            Ok(())
        } else {
            Err(StateLawError::Domain {
                s,
                domain: self.domain,
            })
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), StateLawError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(StateLawError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Tabulated `(s, P, P')` with piecewise cubic Hermite interpolation.
///
/// The slopes are the supplied `P'` values; the table is rejected unless
/// every cubic piece is monotone (Fritsch–Carlson region `alpha, beta <= 3`),
/// so the interpolated `P'` stays nonnegative between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedLaw {
    s: Vec<f64>,
    p: Vec<f64>,
    dp: Vec<f64>,
    domain: Interval,
    darcy_scale: f64,
}

impl TabulatedLaw {
    pub fn new(
        s: Vec<f64>,
        p: Vec<f64>,
        dp: Vec<f64>,
        lower_closed: bool,
        upper_closed: bool,
        darcy_scale: f64,
    ) -> Result<Self, StateLawError> {
        let n = s.len();
        if n < 2 || p.len() != n || dp.len() != n {
            return Err(StateLawError::Table(
                "need at least two rows with s, P and P' columns".into(),
            ));
        }
        check_positive("darcy scale", darcy_scale)?;
        for k in 0..n {
            if !(s[k].is_finite() && p[k].is_finite() && dp[k].is_finite()) {
                return Err(StateLawError::Table(format!("row {k} is not finite")));
            }
            if dp[k] < 0.0 {
                return Err(StateLawError::Table(format!(
                    "P'({}) = {} is negative",
                    s[k], dp[k]
                )));
            }
        }
        for k in 0..n - 1 {
            let h = s[k + 1] - s[k];
            if h <= 0.0 {
                return Err(StateLawError::Table(format!(
                    "s values must be strictly increasing (row {})",
                    k + 1
                )));
            }
            let delta = (p[k + 1] - p[k]) / h;
            if delta < 0.0 {
                return Err(StateLawError::Table(format!(
                    "P decreases on [{}, {}]",
                    s[k],
                    s[k + 1]
                )));
            }
            if delta == 0.0 {
                if dp[k] != 0.0 || dp[k + 1] != 0.0 {
                    return Err(StateLawError::Table(format!(
                        "flat piece [{}, {}] needs zero slopes",
                        s[k],
                        s[k + 1]
                    )));
                }
            } else if dp[k] / delta > 3.0 || dp[k + 1] / delta > 3.0 {
                return Err(StateLawError::Table(format!(
                    "slopes on [{}, {}] leave the monotone Hermite region",
                    s[k],
                    s[k + 1]
                )));
            }
        }
        let domain = Interval::new(
            Endpoint {
                value: s[0],
                closed: lower_closed,
            },
            Endpoint {
                value: s[n - 1],
                closed: upper_closed,
            },
        );
        Ok(Self {
            s,
            p,
            dp,
            domain,
            darcy_scale,
        })
    }

    /// `(P(s), P'(s))`; clamps to the table ends.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let n = self.s.len();
        if s <= self.s[0] {
            return (self.p[0], self.dp[0]);
        }
        if s >= self.s[n - 1] {
            return (self.p[n - 1], self.dp[n - 1]);
        }
        let k = self.s.partition_point(|&x| x <= s) - 1;
        let h = self.s[k + 1] - self.s[k];
        let t = (s - self.s[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let (p0, p1) = (self.p[k], self.p[k + 1]);
        let (m0, m1) = (self.dp[k], self.dp[k + 1]);
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * h * m1;
        let slope = ((6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * h * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * h * m1)
            / h;
        (value, slope.max(0.0))
    }
}

/// How `[m*, M*]` sits relative to the ends of `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeCase {
    Interior,
    /// `M* ∈ J`, `m*` is the (excluded) lower end of `J`.
    E1,
    /// `m* ∈ J`, `M*` is the (excluded) upper end of `J`.
    E2,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeClassification {
    pub case: EdgeCase,
    pub m_star: f64,
    pub big_m_star: f64,
    /// Limit of `P` at the excluded edge (E1: from the right, E2: from the left).
    pub edge_limit: Option<f64>,
}

pub fn classify_edges(
    law: &StateLaw,
    m_star: f64,
    big_m_star: f64,
) -> Result<EdgeClassification, StateLawError> {
    let j = law.domain();
    if !(m_star <= big_m_star && j.closure_contains(m_star) && j.closure_contains(big_m_star)) {
        return Err(StateLawError::InconsistentRange {
            m_star,
            big_m_star,
            domain: j,
        });
    }
    let (case, edge_limit) = if m_star == big_m_star {
        (EdgeCase::Degenerate, None)
    } else {
        match (j.contains(m_star), j.contains(big_m_star)) {
            (true, true) => (EdgeCase::Interior, None),
            (false, true) => (EdgeCase::E1, Some(law.lower_limit())),
            (true, false) => (EdgeCase::E2, Some(law.upper_limit())),
            (false, false) => {
                return Err(StateLawError::Unclassifiable {
                    m_star,
                    big_m_star,
                    domain: j,
                })
            }
        }
    };
    Ok(EdgeClassification {
        case,
        m_star,
        big_m_star,
        edge_limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn named_law_values() {
        let ideal = StateLaw::ideal(1.0, IdealDomain::HalfLine).unwrap();
        assert_eq!(ideal.p(2.5).unwrap(), 2.5);
        assert_eq!(ideal.p_prime(2.5).unwrap(), 1.0);

        let slight = StateLaw::slightly_compressible(0.5).unwrap();
        assert_eq!(slight.p(1.0).unwrap(), 0.0);
        assert_eq!(slight.p_prime(1.0).unwrap(), 1.0);

        let isen = StateLaw::isentropic(1.4, 1.0).unwrap();
        // hand evaluation: 2^1.4 and 1.4 * 2^0.4
        assert_relative_eq!(isen.p(2.0).unwrap(), 2.639_015_821_545_789, epsilon = 1e-12);
        assert_relative_eq!(
            isen.p_prime(2.0).unwrap(),
            1.847_311_075_082_052,
            epsilon = 1e-12
        );
    }

    #[test]
    fn domain_errors() {
        let slight = StateLaw::slightly_compressible(1.0).unwrap();
        assert!(matches!(slight.p(0.0), Err(StateLawError::Domain { .. })));
        let isen = StateLaw::isentropic(2.0, 1.0).unwrap();
        assert!(isen.p(0.0).is_ok());
        assert!(isen.p(-1e-300).is_err());
        assert!(StateLaw::isentropic(0.9, 1.0).is_err());
        assert!(StateLaw::slightly_compressible(0.0).is_err());
    }

    #[test]
    fn edge_classification_examples() {
        let slight = StateLaw::slightly_compressible(1.0).unwrap();
        let c = classify_edges(&slight, 0.0, 1.0).unwrap();
        assert_eq!(c.case, EdgeCase::E1);
        assert_eq!(c.edge_limit, Some(f64::NEG_INFINITY));

        let ideal = StateLaw::ideal(1.0, IdealDomain::FullLine).unwrap();
        assert_eq!(
            classify_edges(&ideal, -1.0, 1.0).unwrap().case,
            EdgeCase::Interior
        );

        let isen = StateLaw::isentropic(2.0, 1.0).unwrap();
        assert_eq!(
            classify_edges(&isen, 0.0, 3.0).unwrap().case,
            EdgeCase::Interior
        );

        assert!(matches!(
            classify_edges(&isen, 2.0, 1.0),
            Err(StateLawError::InconsistentRange { .. })
        ));
        assert!(matches!(
            classify_edges(&isen, -1.0, 1.0),
            Err(StateLawError::InconsistentRange { .. })
        ));
    }

    #[test]
    fn e2_on_open_upper_table_end() {
        let t = TabulatedLaw::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
            vec![1.0, 1.0, 1.0],
            true,
            false,
            1.0,
        )
        .unwrap();
        let law = StateLaw::custom(t);
        let c = classify_edges(&law, 0.5, 2.0).unwrap();
        assert_eq!(c.case, EdgeCase::E2);
        assert_eq!(c.edge_limit, Some(2.0));
    }

    #[test]
    fn tabulated_law_rejects_bad_tables() {
        let bad_slope = TabulatedLaw::new(
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![-0.1, 1.0],
            true,
            true,
            1.0,
        );
        assert!(bad_slope.is_err());
        let decreasing = TabulatedLaw::new(
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 0.0],
            true,
            true,
            1.0,
        );
        assert!(decreasing.is_err());
        let overshoot = TabulatedLaw::new(
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![4.0, 0.0],
            true,
            true,
            1.0,
        );
        assert!(overshoot.is_err());
    }

    #[test]
    fn tabulated_law_reproduces_cubic_data() {
        // P(s) = s^3/3 + s sampled with exact slopes is reproduced exactly.
        let s: Vec<f64> = (0..=10).map(|k| k as f64 * 0.2).collect();
        let p: Vec<f64> = s.iter().map(|x| x * x * x / 3.0 + x).collect();
        let dp: Vec<f64> = s.iter().map(|x| x * x + 1.0).collect();
        let law = StateLaw::custom(TabulatedLaw::new(s, p, dp, true, true, 1.0).unwrap());
        for x in [0.05, 0.37, 1.11, 1.99] {
            assert_relative_eq!(law.p(x).unwrap(), x * x * x / 3.0 + x, epsilon = 1e-13);
            assert_relative_eq!(law.p_prime(x).unwrap(), x * x + 1.0, epsilon = 1e-12);
        }
    }

    fn named_laws() -> Vec<(StateLaw, f64, f64)> {
        vec![
            (StateLaw::isentropic(1.4, 2.0).unwrap(), 0.05, 10.0),
            (StateLaw::isentropic(2.5, 1.0).unwrap(), 0.05, 10.0),
            (
                StateLaw::ideal(1.0, IdealDomain::FullLine).unwrap(),
                -10.0,
                10.0,
            ),
            (StateLaw::slightly_compressible(0.3).unwrap(), 0.05, 10.0),
        ]
    }

    #[test]
    fn derivative_matches_centered_difference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for (law, lo, hi) in named_laws() {
            for _ in 0..200 {
                let s: f64 = rng.random_range(lo..hi);
                let h = 1e-5 * s.abs().max(1e-2);
                let fd = (law.p(s + h).unwrap() - law.p(s - h).unwrap()) / (2.0 * h);
                let exact = law.p_prime(s).unwrap();
                assert!(
                    (fd - exact).abs() <= 1e-6 * exact.abs().max(1e-12),
                    "{}: s={s} fd={fd} exact={exact}",
                    law.name()
                );
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_on_named_laws(a in 0.01f64..50.0, b in 0.01f64..50.0) {
            prop_assume!(a != b);
            let (s1, s2) = if a < b { (a, b) } else { (b, a) };
            for (law, _, _) in named_laws() {
                prop_assert!(law.p(s1).unwrap() < law.p(s2).unwrap());
            }
        }

        #[test]
        fn degenerate_iff_equal(m in 0.01f64..5.0, d in 0.0f64..5.0) {
            let law = StateLaw::slightly_compressible(1.0).unwrap();
            let c = classify_edges(&law, m, m + d).unwrap();
            prop_assert_eq!(c.case == EdgeCase::Degenerate, d == 0.0);
        }
    }
}
