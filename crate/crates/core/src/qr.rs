//! Quantum real numbers: sections over a condition built from the locally
//! linear generators `rho -> Tr(rho A)` by arithmetic and continuous
//! functions.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QrError, Result};
use crate::interval::Interval;
use crate::operator::{check_dims, ComplexMatrix, HermitianOperator, UNITARY_TOL};
use crate::optimize::{linear_enclosure, linear_extremes, Refinement};
use crate::state::{
    intersection_cover, random_state, sample_states_with, Ball, Condition, DensityState, SamplerConfig,
    BOUNDARY_MARGIN,
};

/// The continuous real functions that may be applied to a qr-number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealFunction {
    Abs,
    /// Square root, defined on `[0, inf)`.
    SqrtPos,
    Exp,
    Sin,
    Cos,
    /// `c0 + c1 x + c2 x^2 + ...`
    Polynomial(Vec<f64>),
}

impl RealFunction {
    pub fn name(&self) -> &'static str {
        match self {
            RealFunction::Abs => "abs",
            RealFunction::SqrtPos => "sqrt",
            RealFunction::Exp => "exp",
            RealFunction::Sin => "sin",
            RealFunction::Cos => "cos",
            RealFunction::Polynomial(_) => "polynomial",
        }
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        Ok(match self {
            RealFunction::Abs => x.abs(),
            RealFunction::SqrtPos => {
                if x < 0.0 {
                    return Err(QrError::Domain {
                        function: "sqrt",
                        argument: x,
                    });
                }
                x.sqrt()
            }
            RealFunction::Exp => x.exp(),
            RealFunction::Sin => x.sin(),
            RealFunction::Cos => x.cos(),
            RealFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &k| acc * x + k),
        })
    }

    /// Enclosure of the image of `x` (of its nonnegative part for `SqrtPos`).
    pub fn enclose(&self, x: Interval) -> Result<Interval> {
        Ok(match self {
            RealFunction::Abs => x.abs(),
            RealFunction::SqrtPos => x.sqrt_pos().ok_or(QrError::Domain {
                function: "sqrt",
                argument: x.hi,
            })?,
            RealFunction::Exp => x.exp(),
            RealFunction::Sin => x.sin(),
            RealFunction::Cos => x.cos(),
            RealFunction::Polynomial(c) => horner(c, x),
        })
    }

    /// Bound on `|f'|` over `x`; infinite where no finite bound exists.
    pub fn derivative_bound(&self, x: Interval) -> f64 {
        match self {
            RealFunction::Abs => 1.0,
            RealFunction::SqrtPos => {
                if x.lo > 0.0 {
                    0.5 / x.lo.sqrt()
                } else {
                    f64::INFINITY
                }
            }
            RealFunction::Exp => x.hi.exp(),
            RealFunction::Sin => x.cos().mag(),
            RealFunction::Cos => x.sin().mag(),
            RealFunction::Polynomial(c) => {
                let d: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect();
                horner(&d, x).mag()
            }
        }
    }
}

fn horner(c: &[f64], x: Interval) -> Interval {
    c.iter()
        .rev()
        .fold(Interval::point(0.0), |acc, &k| acc * x + Interval::point(k))
}

/// Expression tree of a qr-number.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    /// `rho -> Tr(rho A)`
    Linear(HermitianOperator),
    Constant(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Scale(f64, Box<Expr>),
    Apply(RealFunction, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, rho: &DensityState) -> Result<f64> {
        Ok(match self {
            Expr::Linear(a) => rho.expectation(a),
            Expr::Constant(c) => *c,
            Expr::Add(x, y) => x.eval(rho)? + y.eval(rho)?,
            Expr::Sub(x, y) => x.eval(rho)? - y.eval(rho)?,
            Expr::Mul(x, y) => x.eval(rho)? * y.eval(rho)?,
            Expr::Scale(s, x) => s * x.eval(rho)?,
            Expr::Apply(f, x) => f.apply(x.eval(rho)?)?,
        })
    }

    /// Outer enclosure of the expression over a ball, by interval extension
    /// of the exact leaf enclosures.
    pub fn enclose(&self, ball: &Ball) -> Result<Interval> {
        Ok(match self {
            Expr::Linear(a) => linear_enclosure(a, ball)?,
            Expr::Constant(c) => Interval::point(*c),
            Expr::Add(x, y) => x.enclose(ball)? + y.enclose(ball)?,
            Expr::Sub(x, y) => x.enclose(ball)? - y.enclose(ball)?,
            Expr::Mul(x, y) => x.enclose(ball)? * y.enclose(ball)?,
            Expr::Scale(s, x) => x.enclose(ball)?.scale(*s),
            Expr::Apply(f, x) => f.enclose(x.enclose(ball)?)?,
        })
    }

    /// Lipschitz bound in trace distance, valid between states of `ball`.
    pub fn lipschitz(&self, ball: &Ball) -> Result<f64> {
        Ok(match self {
            Expr::Linear(a) => a.half_spread()?,
            Expr::Constant(_) => 0.0,
            Expr::Add(x, y) | Expr::Sub(x, y) => x.lipschitz(ball)? + y.lipschitz(ball)?,
            Expr::Mul(x, y) => {
                x.enclose(ball)?.mag() * y.lipschitz(ball)? + y.enclose(ball)?.mag() * x.lipschitz(ball)?
            }
            Expr::Scale(s, x) => s.abs() * x.lipschitz(ball)?,
            Expr::Apply(f, x) => {
                let l = x.lipschitz(ball)?;
                if l == 0.0 {
                    0.0
                } else {
                    f.derivative_bound(x.enclose(ball)?) * l
                }
            }
        })
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Expr::Linear(a) => check_dims(dim, a.dim()),
            Expr::Constant(_) => Ok(()),
            Expr::Add(x, y) | Expr::Sub(x, y) | Expr::Mul(x, y) => {
                x.check_dim(dim)?;
                y.check_dim(dim)
            }
            Expr::Scale(_, x) | Expr::Apply(_, x) => x.check_dim(dim),
        }
    }
}

/// A locally linear qr-number: `Tr(rho A)` restricted to an extent.
#[derive(Clone, Debug, PartialEq)]
pub struct LocallyLinearQr {
    pub operator: HermitianOperator,
    pub extent: Condition,
}

impl LocallyLinearQr {
    pub fn new(operator: HermitianOperator, extent: Condition) -> Result<Self> {
        extent.require_nonempty()?;
        check_dims(operator.dim(), extent.dim())?;
        Ok(Self { operator, extent })
    }

    pub fn to_qr(&self) -> QrNumber {
        QrNumber {
            expr: Expr::Linear(self.operator.clone()),
            extent: self.extent.clone(),
        }
    }
}

impl From<LocallyLinearQr> for QrNumber {
    fn from(q: LocallyLinearQr) -> Self {
        QrNumber {
            expr: Expr::Linear(q.operator),
            extent: q.extent,
        }
    }
}

/// A qr-number: an expression over locally linear generators, defined on a
/// nonempty extent.
#[derive(Clone, Debug, PartialEq)]
pub struct QrNumber {
    expr: Expr,
    extent: Condition,
}

/// Sampling effort and seed for range estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Refinement of the closed-form extremes; `None` picks by dimension.
    #[serde(default)]
    pub refine: Option<Refinement>,
}

impl Budget {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            sampler: SamplerConfig::default(),
            refine: None,
        }
    }

    pub fn with_refinement(mut self, refine: Refinement) -> Self {
        self.refine = Some(refine);
        self
    }

    pub fn with_support(mut self, support: usize) -> Self {
        self.sampler.support = Some(support);
        self
    }
}

/// How a range was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rigor", rename_all = "kebab-case")]
pub enum Rigor {
    /// Closed-form extremal candidates for a single locally linear
    /// generator, refined and merged with `samples` sampled values.
    ClosedForm { samples: usize, seed: u64 },
    Sampled { samples: usize, seed: u64 },
}

/// Estimated value range of a section over its extent. Every endpoint is a
/// value attained at some state of the extent, so the true range contains
/// `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeInterval {
    pub lo: f64,
    pub hi: f64,
    #[serde(flatten)]
    pub rigor: Rigor,
}

impl RangeInterval {
    pub fn interval(&self) -> Interval {
        Interval {
            lo: self.lo,
            hi: self.hi,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A range together with the states attaining its endpoints.
#[derive(Clone, Debug)]
pub struct RangeEstimate {
    pub range: RangeInterval,
    pub argmin: DensityState,
    pub argmax: DensityState,
}

impl QrNumber {
    pub fn new(expr: Expr, extent: Condition) -> Result<Self> {
        extent.require_nonempty()?;
        expr.check_dim(extent.dim())?;
        Ok(Self { expr, extent })
    }

    pub fn linear(operator: HermitianOperator, extent: Condition) -> Result<Self> {
        Ok(LocallyLinearQr::new(operator, extent)?.into())
    }

    /// The locally constant section with value `value`.
    pub fn constant(value: f64, extent: Condition) -> Result<Self> {
        Self::new(Expr::Constant(value), extent)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn extent(&self) -> &Condition {
        &self.extent
    }

    pub fn dim(&self) -> usize {
        self.extent.dim()
    }

    /// Same expression on a smaller extent.
    pub fn restrict(&self, extent: Condition) -> Result<Self> {
        Self::new(self.expr.clone(), extent)
    }

    pub fn eval_at(&self, rho: &DensityState) -> Result<f64> {
        if !self.extent.contains(rho)? {
            return Err(QrError::ExtentViolation);
        }
        self.expr.eval(rho)
    }

    /// Outer enclosure over the whole extent.
    pub fn enclosure(&self) -> Result<Interval> {
        self.extent.require_nonempty()?;
        let mut out: Option<Interval> = None;
        for b in self.extent.balls() {
            let e = self.expr.enclose(b)?;
            out = Some(out.map_or(e, |o| o.hull(&e)));
        }
        Ok(out.expect("nonempty extent"))
    }

    /// Largest Lipschitz bound over the balls of the extent.
    pub fn lipschitz(&self) -> Result<f64> {
        let mut l: f64 = 0.0;
        for b in self.extent.balls() {
            l = l.max(self.expr.lipschitz(b)?);
        }
        Ok(l)
    }

    pub fn eval_range(&self, budget: &Budget) -> Result<RangeInterval> {
        Ok(self.eval_range_detailed(budget)?.range)
    }

    /// Range over the extent: closed-form extremes for a bare locally linear
    /// generator, merged with `budget.samples` sampled values.
    pub fn eval_range_detailed(&self, budget: &Budget) -> Result<RangeEstimate> {
        self.extent.require_nonempty()?;
        let mut best: Option<(f64, DensityState, f64, DensityState)> = None;
        let mut update = |v: f64, s: &DensityState| match &mut best {
            None => best = Some((v, s.clone(), v, s.clone())),
            Some((lo, lo_s, hi, hi_s)) => {
                if v < *lo {
                    *lo = v;
                    *lo_s = s.clone();
                }
                if v > *hi {
                    *hi = v;
                    *hi_s = s.clone();
                }
            }
        };
        let rigor = if let Expr::Linear(a) = &self.expr {
            let refine = budget.refine.unwrap_or_else(|| Refinement::auto(a.dim()));
            for b in self.extent.balls() {
                let e = linear_extremes(a, b, refine)?;
                update(e.min.value, &e.min.state);
                update(e.max.value, &e.max.state);
            }
            Rigor::ClosedForm {
                samples: budget.samples,
                seed: budget.seed,
            }
        } else {
            Rigor::Sampled {
                samples: budget.samples,
                seed: budget.seed,
            }
        };
        let states = sample_states_with(&self.extent, budget.samples, budget.seed, budget.sampler)?;
        let values = states
            .par_iter()
            .map(|s| self.expr.eval(s))
            .collect::<Result<Vec<f64>>>()?;
        for (v, s) in values.iter().zip(&states) {
            update(*v, s);
        }
        let (lo, argmin, hi, argmax) = best.expect("at least one sample");
        Ok(RangeEstimate {
            range: RangeInterval { lo, hi, rigor },
            argmin,
            argmax,
        })
    }
}

/// Extent shared by two qr-numbers: identical extents are kept, otherwise the
/// inner cover of the intersection by witness balls.
pub fn common_extent(a: &Condition, b: &Condition) -> Result<Condition> {
    check_dims(a.dim(), b.dim())?;
    if a == b {
        return Ok(a.clone());
    }
    intersection_cover(a, b)
}

fn binary(a: &QrNumber, b: &QrNumber, node: fn(Box<Expr>, Box<Expr>) -> Expr) -> Result<QrNumber> {
    let extent = common_extent(&a.extent, &b.extent)?;
    if extent.is_empty() {
        return Err(QrError::EmptySection);
    }
    Ok(QrNumber {
        expr: node(Box::new(a.expr.clone()), Box::new(b.expr.clone())),
        extent,
    })
}

pub fn qr_add(a: &QrNumber, b: &QrNumber) -> Result<QrNumber> {
    binary(a, b, Expr::Add)
}

pub fn qr_sub(a: &QrNumber, b: &QrNumber) -> Result<QrNumber> {
    binary(a, b, Expr::Sub)
}

pub fn qr_mul(a: &QrNumber, b: &QrNumber) -> Result<QrNumber> {
    binary(a, b, Expr::Mul)
}

pub fn qr_scale(q: &QrNumber, alpha: f64) -> QrNumber {
    QrNumber {
        expr: Expr::Scale(alpha, Box::new(q.expr.clone())),
        extent: q.extent.clone(),
    }
}

pub fn qr_apply(f: RealFunction, q: &QrNumber) -> QrNumber {
    QrNumber {
        expr: Expr::Apply(f, Box::new(q.expr.clone())),
        extent: q.extent.clone(),
    }
}

/// Sub-condition of the common extent on which `a < b` holds everywhere.
///
/// Sampled states with `a < b` become centers of balls whose radius is the
/// gap `b - a` divided by the summed Lipschitz bounds, capped by `grain` and
/// by the room left inside the extent. Within such a ball the gap cannot
/// close, so the union is a genuine (inner) part of `{a < b}`. The result
/// may be empty.
pub fn order_extent(a: &QrNumber, b: &QrNumber, grain: f64, budget: &Budget) -> Result<Condition> {
    if !(grain > 0.0) {
        return Err(QrError::InvalidParameter(format!("grain must be positive, got {grain}")));
    }
    let common = common_extent(&a.extent, &b.extent)?;
    if common.is_empty() {
        return Ok(common);
    }
    let lips = common
        .balls()
        .iter()
        .map(|ball| Ok(a.expr.lipschitz(ball)? + b.expr.lipschitz(ball)?))
        .collect::<Result<Vec<f64>>>()?;
    let states = sample_states_with(&common, budget.samples, budget.seed, budget.sampler)?;
    let mut balls = Vec::new();
    for rho in states {
        let gap = b.expr.eval(&rho)? - a.expr.eval(&rho)?;
        if !(gap > 0.0) {
            continue;
        }
        let (idx, slack) = common.best_slack(&rho)?.expect("nonempty extent");
        let lip = lips[idx];
        let by_gap = if lip > 0.0 { gap / lip } else { f64::INFINITY };
        let radius = by_gap.min(grain).min(slack * (1.0 - 1e-9));
        if radius > 10.0 * BOUNDARY_MARGIN {
            balls.push(Ball::new(rho, radius)?);
        }
    }
    if balls.is_empty() {
        Ok(Condition::empty(common.dim()))
    } else {
        Condition::new(balls)
    }
}

/// A dyadic rational approximating a section near a state, with the
/// sub-condition on which it is within the tolerance of the section.
#[derive(Clone, Debug)]
pub struct RationalApproximation {
    pub value: Ratio<i64>,
    pub tolerance: f64,
    pub condition: Condition,
}

/// Round `q(rho)` to a dyadic rational with denominator `2^k >= 2 / tol`
/// (so the rounding error is at most `tol / 4`) and return the part of
/// `ν(rho, grain) ∩ extent` where `|q - value| < tol`.
pub fn rational_approximation(
    q: &QrNumber,
    rho: &DensityState,
    tol: f64,
    grain: f64,
    budget: &Budget,
) -> Result<RationalApproximation> {
    if !(tol > 0.0) {
        return Err(QrError::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let v = q.eval_at(rho)?;
    let mut denom: i64 = 1;
    while (denom as f64) < 2.0 / tol {
        denom = denom.checked_mul(2).ok_or_else(|| {
            QrError::InvalidParameter(format!("tolerance {tol} too small for a 64-bit denominator"))
        })?;
    }
    let numer = (v * denom as f64).round() as i64;
    let value = Ratio::new(numer, denom);
    let local = intersection_cover(q.extent(), &Condition::ball(rho.clone(), grain)?)?;
    if local.is_empty() {
        return Err(QrError::EmptySection);
    }
    let approx = numer as f64 / denom as f64;
    let deviation = qr_apply(
        RealFunction::Abs,
        &qr_sub(&q.restrict(local.clone())?, &QrNumber::constant(approx, local.clone())?)?,
    );
    let bound = QrNumber::constant(tol, local)?;
    let condition = order_extent(&deviation, &bound, grain, budget)?;
    Ok(RationalApproximation {
        value,
        tolerance: tol,
        condition,
    })
}

/// A qr-number prolonged by zero to all of state space.
#[derive(Clone, Debug)]
pub struct ExtendedQr {
    inner: QrNumber,
}

pub fn extend_by_zero(q: &QrNumber) -> ExtendedQr {
    ExtendedQr { inner: q.clone() }
}

impl ExtendedQr {
    pub fn inner(&self) -> &QrNumber {
        &self.inner
    }

    pub fn eval(&self, rho: &DensityState) -> Result<f64> {
        if self.inner.extent.contains(rho)? {
            self.inner.expr.eval(rho)
        } else {
            Ok(0.0)
        }
    }

    /// Whether some state lies outside the extent; searched over basis states
    /// and random states. A ball of radius above 2 covers everything.
    pub fn has_exterior(&self, seed: u64) -> Result<bool> {
        let w = &self.inner.extent;
        if w.balls().iter().any(|b| b.radius > 2.0) {
            return Ok(false);
        }
        let dim = w.dim();
        for i in 0..dim {
            if !w.contains(&DensityState::basis(dim, i))? {
                return Ok(true);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            if !w.contains(&random_state(dim, &mut rng))? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Range over all of state space: the range on the extent, joined with
    /// 0 when the extent does not cover state space.
    pub fn range_over_state_space(&self, budget: &Budget) -> Result<RangeInterval> {
        let r = self.inner.eval_range(budget)?;
        let (mut lo, mut hi) = (r.lo, r.hi);
        if self.has_exterior(budget.seed)? {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        Ok(RangeInterval {
            lo,
            hi,
            rigor: Rigor::Sampled {
                samples: budget.samples,
                seed: budget.seed,
            },
        })
    }
}

/// Image of a locally linear qr-number under a unitary.
#[derive(Clone, Debug)]
pub struct CovariantPair {
    /// `U A U^H` on the original extent `W`.
    pub transformed: LocallyLinearQr,
    /// `A` on `W' = {U^H rho U : rho in W}`; takes the same values as
    /// `transformed` at corresponding states.
    pub equivalent: LocallyLinearQr,
}

pub fn covariance_transform(q: &LocallyLinearQr, u: &ComplexMatrix) -> Result<CovariantPair> {
    check_dims(q.operator.dim(), u.dim())?;
    let dev = u.unitary_deviation();
    if dev > UNITARY_TOL {
        return Err(QrError::NotUnitary(dev));
    }
    let transformed = LocallyLinearQr::new(q.operator.conjugate_by(u)?, q.extent.clone())?;
    let equivalent = LocallyLinearQr::new(q.operator.clone(), q.extent.conjugate_by(&u.adjoint())?)?;
    Ok(CovariantPair {
        transformed,
        equivalent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{basis_vector, CMatrix};
    use crate::state::sample_states;
    use num_complex::Complex64;

    fn ket0() -> DensityState {
        DensityState::basis(2, 0)
    }

    fn half() -> DensityState {
        DensityState::maximally_mixed(2)
    }

    fn z_on(center: DensityState, r: f64) -> QrNumber {
        QrNumber::linear(HermitianOperator::pauli_z(), Condition::ball(center, r).unwrap()).unwrap()
    }

    fn plus_x() -> DensityState {
        DensityState::pure(&(basis_vector(2, 0) + basis_vector(2, 1))).unwrap()
    }

    #[test]
    fn eval_at_examples() {
        let w = Condition::ball(half(), 0.3).unwrap();
        let id = QrNumber::linear(HermitianOperator::identity(2), w.clone()).unwrap();
        assert!((id.eval_at(&half()).unwrap() - 1.0).abs() < 1e-15);
        let z = QrNumber::linear(HermitianOperator::pauli_z(), w).unwrap();
        assert_eq!(z.eval_at(&half()).unwrap(), 0.0);

        let wx = Condition::ball(plus_x(), 0.1).unwrap();
        let x = QrNumber::linear(HermitianOperator::pauli_x(), wx).unwrap();
        let xx = qr_mul(&x, &x).unwrap();
        assert!((xx.eval_at(&plus_x()).unwrap() - 1.0).abs() < 1e-14);
        // a_Q squared, not (a^2)_Q: at I/2 inside a larger ball they differ
        let big = Condition::ball(half(), 1.5).unwrap();
        let xb = QrNumber::linear(HermitianOperator::pauli_x(), big.clone()).unwrap();
        let sq = qr_mul(&xb, &xb).unwrap();
        let x2 = QrNumber::linear(HermitianOperator::pauli_x().square(), big).unwrap();
        assert_eq!(sq.eval_at(&half()).unwrap(), 0.0);
        assert!((x2.eval_at(&half()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eval_errors() {
        let z = z_on(ket0(), 0.1);
        assert!(matches!(z.eval_at(&half()), Err(QrError::ExtentViolation)));
        let neg = qr_apply(RealFunction::SqrtPos, &qr_scale(&z, -1.0));
        assert!(matches!(neg.eval_at(&ket0()), Err(QrError::Domain { .. })));
        assert!(QrNumber::linear(HermitianOperator::pauli_z(), Condition::empty(2)).is_err());
        assert!(QrNumber::linear(HermitianOperator::identity(3), Condition::ball(ket0(), 0.1).unwrap()).is_err());
    }

    #[test]
    fn range_examples() {
        let budget = Budget::new(2000, 42);
        let r = z_on(half(), 0.2).eval_range(&budget).unwrap();
        assert!((r.lo + 0.2).abs() < 0.01 && (r.hi - 0.2).abs() < 0.01, "{r:?}");
        assert!(matches!(r.rigor, Rigor::ClosedForm { .. }));

        let w = Condition::ball(ket0(), 0.37).unwrap();
        let id = QrNumber::linear(HermitianOperator::identity(2), w).unwrap();
        let r = id.eval_range(&budget).unwrap();
        assert!((r.lo - 1.0).abs() < 1e-12 && (r.hi - 1.0).abs() < 1e-12);

        let r = z_on(ket0(), 0.1).eval_range(&budget).unwrap();
        assert!((r.lo - 0.9).abs() < 0.005 && (r.hi - 1.0).abs() < 0.005, "{r:?}");
    }

    #[test]
    fn range_is_monotone_in_samples() {
        let z = z_on(half(), 0.4);
        let q = qr_apply(RealFunction::Sin, &qr_mul(&z, &z).unwrap());
        let small = q.eval_range(&Budget::new(50, 9)).unwrap();
        let large = q.eval_range(&Budget::new(500, 9)).unwrap();
        assert!(large.lo <= small.lo && large.hi >= small.hi);
        assert!(matches!(small.rigor, Rigor::Sampled { .. }));
    }

    #[test]
    fn enclosure_contains_samples() {
        let w = Condition::ball(DensityState::from_bloch([0.2, -0.1, 0.3]).unwrap(), 0.3).unwrap();
        let x = QrNumber::linear(HermitianOperator::pauli_x(), w.clone()).unwrap();
        let y = QrNumber::linear(HermitianOperator::pauli_y(), w).unwrap();
        let q = qr_apply(
            RealFunction::Polynomial(vec![0.5, -1.0, 2.0]),
            &qr_add(&qr_mul(&x, &y).unwrap(), &qr_apply(RealFunction::Exp, &x)).unwrap(),
        );
        let enc = q.enclosure().unwrap();
        let lip = q.lipschitz().unwrap();
        let states = sample_states(q.extent(), 300, 3).unwrap();
        let c = &q.extent().balls()[0].center;
        let vc = q.eval_at(c).unwrap();
        for s in &states {
            let v = q.eval_at(s).unwrap();
            assert!(enc.lo - 1e-12 <= v && v <= enc.hi + 1e-12);
            let d = crate::state::trace_distance(c, s).unwrap();
            assert!((v - vc).abs() <= lip * d + 1e-12);
        }
    }

    #[test]
    fn arithmetic_identities() {
        let w = Condition::ball(half(), 0.5).unwrap();
        let a = QrNumber::linear(HermitianOperator::pauli_x(), w.clone()).unwrap();
        let b = QrNumber::linear(HermitianOperator::pauli_z(), w.clone()).unwrap();
        let zero = QrNumber::constant(0.0, w.clone()).unwrap();
        let a0 = qr_add(&a, &zero).unwrap();
        let ab = qr_mul(&a, &b).unwrap();
        let ba = qr_mul(&b, &a).unwrap();
        for s in sample_states(&w, 100, 1).unwrap() {
            assert_eq!(a0.eval_at(&s).unwrap(), a.eval_at(&s).unwrap());
            assert_eq!(ab.eval_at(&s).unwrap(), ba.eval_at(&s).unwrap());
        }
        let z = z_on(half(), 0.3);
        let s = qr_apply(RealFunction::Sin, &z);
        assert_eq!(s.eval_at(&half()).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_extents_fail() {
        let a = z_on(ket0(), 0.5);
        let b = z_on(DensityState::basis(2, 1), 0.5);
        assert!(matches!(qr_add(&a, &b), Err(QrError::EmptySection)));
        let c = z_on(DensityState::basis(2, 1), 1.8);
        let sum = qr_add(&a, &c).unwrap();
        assert!(sum.extent().is_inside(a.extent()).unwrap());
        assert!(sum.extent().is_inside(c.extent()).unwrap());
    }

    #[test]
    fn order_extent_examples() {
        let budget = Budget::new(400, 5);
        let a = z_on(ket0(), 0.05);
        let zero = QrNumber::constant(0.0, a.extent().clone()).unwrap();
        let pos = order_extent(&zero, &a, 0.1, &budget).unwrap();
        assert!(!pos.is_empty());
        for s in sample_states(&pos, 200, 2).unwrap() {
            assert!(a.eval_at(&s).unwrap() > 0.0);
        }
        assert!(order_extent(&a, &zero, 0.1, &budget).unwrap().is_empty());
        assert!(order_extent(&a, &a, 0.1, &budget).unwrap().is_empty());
    }

    #[test]
    fn trichotomy_fails_on_straddling_section() {
        let budget = Budget::new(400, 8);
        let a = z_on(half(), 0.3);
        let zero = QrNumber::constant(0.0, a.extent().clone()).unwrap();
        let neg = order_extent(&a, &zero, 0.05, &budget).unwrap();
        let pos = order_extent(&zero, &a, 0.05, &budget).unwrap();
        assert!(!neg.is_empty() && !pos.is_empty());
        // the center, where a = 0, is in neither part
        assert!(!neg.contains(&half()).unwrap());
        assert!(!pos.contains(&half()).unwrap());
        // a = 0 is not stable: arbitrarily close states have a != 0
        for eps in [1e-1, 1e-3, 1e-6] {
            let s = crate::state::perturb_nonzero(&half(), &HermitianOperator::pauli_z(), eps).unwrap();
            assert!(a.eval_at(&s).unwrap() != 0.0);
        }
    }

    #[test]
    fn extension_by_zero() {
        let q = z_on(ket0(), 0.1);
        let e = extend_by_zero(&q);
        let inside = ket0().mix(&half(), 0.02).unwrap();
        assert_eq!(e.eval(&inside).unwrap(), q.eval_at(&inside).unwrap());
        assert_eq!(e.eval(&half()).unwrap(), 0.0);
        let r = e.range_over_state_space(&Budget::new(500, 3)).unwrap();
        assert_eq!(r.lo, 0.0);
        assert!((r.hi - 1.0).abs() < 1e-9);
        let whole = QrNumber::linear(HermitianOperator::pauli_z(), Condition::ball(half(), 2.5).unwrap()).unwrap();
        assert!(!extend_by_zero(&whole).has_exterior(1).unwrap());
    }

    #[test]
    fn covariance_examples() {
        let budget = Budget::new(500, 4);
        let q = LocallyLinearQr::new(HermitianOperator::pauli_z(), Condition::ball(ket0(), 0.1).unwrap()).unwrap();
        let same = covariance_transform(&q, &ComplexMatrix::identity(2)).unwrap();
        assert_eq!(same.transformed.operator, q.operator);

        let u = HermitianOperator::pauli_x().matrix().clone();
        let pair = covariance_transform(&q, &u).unwrap();
        let minus_z = HermitianOperator::pauli_z().scale(-1.0);
        assert!(pair.transformed.operator.matrix().max_abs_diff(minus_z.matrix()) < 1e-15);
        let w1 = &pair.equivalent.extent.balls()[0];
        assert!(crate::state::trace_distance(&w1.center, &DensityState::basis(2, 1)).unwrap() < 1e-15);
        let r1 = pair.transformed.to_qr().eval_range(&budget).unwrap();
        let r2 = pair.equivalent.to_qr().eval_range(&budget).unwrap();
        assert!((r1.lo + 1.0).abs() < 0.005 && (r1.hi + 0.9).abs() < 0.005, "{r1:?}");
        assert!((r1.lo - r2.lo).abs() < 1e-9 && (r1.hi - r2.hi).abs() < 1e-9);

        let bad = ComplexMatrix::from_real_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(covariance_transform(&q, &bad), Err(QrError::NotUnitary(_))));
    }

    #[test]
    fn conjugation_preserves_trace_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = {
            let r = random_state(3, &mut rng);
            HermitianOperator::from_matrix(r.matrix().as_matrix().scale(5.0)).unwrap()
        };
        // U = exp(iH) via the spectral decomposition
        let s = h.spectrum().unwrap();
        let v = s.eigenvectors();
        let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            3,
            s.raw_eigenvalues().iter().map(|&l| Complex64::from_polar(1.0, l)),
        ));
        let u = ComplexMatrix::new(v * phases * v.adjoint()).unwrap();
        let a = random_state(3, &mut rng);
        let b = random_state(3, &mut rng);
        let d0 = crate::state::trace_distance(&a, &b).unwrap();
        let d1 = crate::state::trace_distance(&a.conjugate_by(&u).unwrap(), &b.conjugate_by(&u).unwrap()).unwrap();
        assert!((d0 - d1).abs() < 1e-10);
    }

    #[test]
    fn rational_approximation_on_qubit() {
        let q = z_on(DensityState::from_bloch([0.1, 0.2, 0.3]).unwrap(), 0.4);
        let rho = DensityState::from_bloch([0.1, 0.2, 0.3]).unwrap();
        let tol = 0.01;
        let approx = rational_approximation(&q, &rho, tol, 0.05, &Budget::new(300, 2)).unwrap();
        assert!(!approx.condition.is_empty());
        let r = *approx.value.numer() as f64 / *approx.value.denom() as f64;
        assert!((r - 0.3).abs() <= tol / 4.0);
        for s in sample_states(&approx.condition, 200, 6).unwrap() {
            assert!((q.eval_at(&s).unwrap() - r).abs() < tol);
        }
    }
}
