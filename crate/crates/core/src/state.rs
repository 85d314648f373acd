//! Density states, trace-norm balls and conditions (finite unions of balls).

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QrError, Result};
use crate::operator::{
    check_dims, from_eigen, hermitian_eigen, hermitian_trace_norm, hermitize, trace_product, CMatrix,
    CVector, ComplexMatrix, HermitianOperator, OperatorJson, HERMITIAN_TOL,
};

pub const PSD_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Margin applied to strict boundary inequalities `d < r`.
pub const BOUNDARY_MARGIN: f64 = 1e-12;

/// A positive semidefinite, unit-trace matrix.
#[derive(Clone)]
pub struct DensityState {
    matrix: Arc<ComplexMatrix>,
}

impl DensityState {
    /// Validate a candidate density matrix. Eigenvalues in `[-1e-10, 0)` are
    /// clamped to zero and the trace renormalized; anything more negative is
    /// rejected.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let scale = matrix.max_abs().max(1.0);
        let dev = matrix.hermitian_deviation();
        if dev > HERMITIAN_TOL * scale {
            return Err(QrError::NotHermitian(dev));
        }
        let m = hermitize(matrix.as_matrix());
        let tr = m.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(QrError::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let (values, vectors) = hermitian_eigen(&m)?;
        let min = values[0];
        if min < -PSD_TOL {
            return Err(QrError::InvalidState(format!(
                "eigenvalue {min:e} is below -{PSD_TOL:e}"
            )));
        }
        if min < 0.0 {
            let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
            let total: f64 = clipped.iter().sum();
            let normalized: Vec<f64> = clipped.iter().map(|v| v / total).collect();
            return Ok(Self::from_trusted(from_eigen(&normalized, &vectors)));
        }
        Ok(Self::from_trusted(m))
    }

    pub(crate) fn from_trusted(m: CMatrix) -> Self {
        Self {
            matrix: Arc::new(ComplexMatrix::new(m).expect("trusted state matrix is square and finite")),
        }
    }

    pub fn from_json(json: &OperatorJson) -> Result<Self> {
        Self::new(json.to_matrix()?)
    }

    /// `|psi><psi|` for a nonzero vector, normalized.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let n = psi.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(QrError::InvalidState("state vector has zero or non-finite norm".into()));
        }
        let u = psi.unscale(n);
        Ok(Self::from_trusted(hermitize(&(&u * u.adjoint()))))
    }

    /// Computational basis state `|i><i|`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(i, i)] = Complex64::new(1.0, 0.0);
        Self::from_trusted(m)
    }

    /// `I / dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self::from_trusted(CMatrix::identity(dim, dim).unscale(dim as f64))
    }

    /// Qubit state with Bloch vector `b`, `|b| <= 1`.
    pub fn from_bloch(b: [f64; 3]) -> Result<Self> {
        let r2 = b.iter().map(|x| x * x).sum::<f64>();
        if r2 > 1.0 + 1e-12 {
            return Err(QrError::InvalidState(format!("Bloch vector has length {}", r2.sqrt())));
        }
        let s = HermitianOperator::pauli_dot(b);
        let m = (CMatrix::identity(2, 2) + s.matrix().as_matrix()).scale(0.5);
        Self::new(ComplexMatrix::new(m)?)
    }

    /// Nearest state (in Frobenius norm, up to the final renormalization) to
    /// a Hermitian matrix: negative eigenvalues are clipped and the trace
    /// rescaled to one.
    pub fn psd_projection(m: &CMatrix) -> Result<Self> {
        let (values, vectors) = hermitian_eigen(&hermitize(m))?;
        let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if !(total > 0.0) {
            return Err(QrError::InvalidState("matrix has no positive part".into()));
        }
        let normalized: Vec<f64> = clipped.iter().map(|v| v / total).collect();
        Ok(Self::from_trusted(from_eigen(&normalized, &vectors)))
    }

    /// `(1 - t) self + t other`.
    pub fn mix(&self, other: &DensityState, t: f64) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        if !(0.0..=1.0).contains(&t) {
            return Err(QrError::InvalidParameter(format!("mixing weight {t} outside [0, 1]")));
        }
        Ok(Self::from_trusted(self.raw().scale(1.0 - t) + other.raw().scale(t)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub(crate) fn raw(&self) -> &CMatrix {
        self.matrix.as_matrix()
    }

    /// `Tr(rho A)`. Panics if the dimensions differ.
    pub fn expectation(&self, a: &HermitianOperator) -> f64 {
        assert_eq!(self.dim(), a.dim(), "state and operator dimensions differ");
        trace_product(self.raw(), a.matrix().as_matrix())
    }

    /// `U rho U^H`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<Self> {
        check_dims(self.dim(), u.dim())?;
        let m = u.as_matrix() * self.raw() * u.as_matrix().adjoint();
        Ok(Self::from_trusted(hermitize(&m)))
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(hermitian_eigen(self.raw())?.0[0])
    }

    pub fn to_json(&self) -> OperatorJson {
        self.matrix.to_json()
    }
}

impl fmt::Debug for DensityState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityState(dim={}){}", self.dim(), self.raw())
    }
}

impl PartialEq for DensityState {
    fn eq(&self, other: &Self) -> bool {
        self.raw() == other.raw()
    }
}

impl Serialize for DensityState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let json = OperatorJson::deserialize(d)?;
        DensityState::from_json(&json).map_err(serde::de::Error::custom)
    }
}

/// `Tr|rho1 - rho2|`.
pub fn trace_distance(a: &DensityState, b: &DensityState) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    hermitian_trace_norm(&(a.raw() - b.raw()))
}

/// Open trace-norm ball `{rho : Tr|rho - center| < radius}` within state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: DensityState,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: DensityState, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(QrError::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn contains(&self, rho: &DensityState) -> Result<bool> {
        Ok(trace_distance(&self.center, rho)? + BOUNDARY_MARGIN < self.radius)
    }

    /// `radius - distance(center, rho)`, positive exactly for members.
    pub fn slack(&self, rho: &DensityState) -> Result<f64> {
        Ok(self.radius - trace_distance(&self.center, rho)?)
    }

    /// Sufficient test that `self` lies inside `other`.
    pub fn is_inside(&self, other: &Ball) -> Result<bool> {
        Ok(trace_distance(&self.center, &other.center)? + self.radius <= other.radius)
    }

    /// Ball with center `U c U^H`; conjugation preserves trace distance.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<Ball> {
        Ball::new(self.center.conjugate_by(u)?, self.radius)
    }

    /// Largest radius strictly usable for points that must stay inside.
    pub(crate) fn inner_radius(&self) -> f64 {
        self.radius * (1.0 - 1e-9) - 2.0 * BOUNDARY_MARGIN
    }
}

/// An open region of state space, stored as a finite union of balls. An empty
/// ball list is the empty region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Condition {
    #[serde(skip)]
    dim: usize,
    balls: Vec<Ball>,
}

impl Condition {
    pub fn new(balls: Vec<Ball>) -> Result<Self> {
        let first = balls.first().ok_or(QrError::EmptyCondition)?;
        let dim = first.dim();
        for b in &balls {
            check_dims(dim, b.dim())?;
        }
        Ok(Self { dim, balls })
    }

    pub fn ball(center: DensityState, radius: f64) -> Result<Self> {
        Self::new(vec![Ball::new(center, radius)?])
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            balls: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(QrError::EmptyCondition)
        } else {
            Ok(())
        }
    }

    pub fn contains(&self, rho: &DensityState) -> Result<bool> {
        check_dims(self.dim, rho.dim())?;
        for b in &self.balls {
            if b.contains(rho)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Largest slack of `rho` over the balls, with the index of that ball.
    pub fn best_slack(&self, rho: &DensityState) -> Result<Option<(usize, f64)>> {
        let mut best: Option<(usize, f64)> = None;
        for (i, b) in self.balls.iter().enumerate() {
            let s = b.slack(rho)?;
            if best.is_none_or(|(_, t)| s > t) {
                best = Some((i, s));
            }
        }
        Ok(best)
    }

    pub fn union(&self, other: &Condition) -> Result<Condition> {
        check_dims(self.dim, other.dim)?;
        let mut balls = self.balls.clone();
        balls.extend(other.balls.iter().cloned());
        Ok(Self { dim: self.dim, balls })
    }

    /// `{U rho U^H : rho in self}`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<Condition> {
        check_dims(self.dim, u.dim())?;
        let balls = self
            .balls
            .iter()
            .map(|b| b.conjugate_by(u))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim: self.dim, balls })
    }

    /// Sufficient test that every ball of `self` sits inside some ball of
    /// `other`.
    pub fn is_inside(&self, other: &Condition) -> Result<bool> {
        for b in &self.balls {
            let mut inside = false;
            for o in &other.balls {
                if b.is_inside(o)? {
                    inside = true;
                    break;
                }
            }
            if !inside {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Deserialize)]
struct ConditionJson {
    balls: Vec<Ball>,
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let json = ConditionJson::deserialize(d)?;
        for b in &json.balls {
            if !(b.radius > 0.0) || !b.radius.is_finite() {
                return Err(serde::de::Error::custom(format!("invalid ball radius {}", b.radius)));
            }
        }
        Condition::new(json.balls).map_err(serde::de::Error::custom)
    }
}

/// For two balls with centers at distance `d < r1 + r2`, the ball around the
/// segment point `(1-t) c1 + t c2` that maximizes the smaller slack. It lies
/// inside both balls.
pub fn ball_pair_witness(b1: &Ball, b2: &Ball) -> Result<Option<Ball>> {
    let d = trace_distance(&b1.center, &b2.center)?;
    if d + BOUNDARY_MARGIN >= b1.radius + b2.radius {
        return Ok(None);
    }
    if d <= BOUNDARY_MARGIN {
        let (small, r) = if b1.radius <= b2.radius {
            (&b1.center, b1.radius)
        } else {
            (&b2.center, b2.radius)
        };
        return Ok(Some(Ball::new(small.clone(), r)?));
    }
    let t = ((b1.radius - b2.radius + d) / (2.0 * d)).clamp(0.0, 1.0);
    let radius = (b1.radius - t * d).min(b2.radius - (1.0 - t) * d);
    if !(radius > BOUNDARY_MARGIN) {
        return Ok(None);
    }
    Ok(Some(Ball::new(b1.center.mix(&b2.center, t)?, radius)?))
}

/// Emptiness test for `W1 ∩ W2`, with a witness state when nonempty.
#[derive(Clone, Debug)]
pub struct Intersection {
    pub nonempty: bool,
    pub witness: Option<DensityState>,
}

pub fn conditions_intersect(w1: &Condition, w2: &Condition) -> Result<Intersection> {
    check_dims(w1.dim(), w2.dim())?;
    for b1 in w1.balls() {
        for b2 in w2.balls() {
            if let Some(w) = ball_pair_witness(b1, b2)? {
                return Ok(Intersection {
                    nonempty: true,
                    witness: Some(w.center),
                });
            }
        }
    }
    Ok(Intersection {
        nonempty: false,
        witness: None,
    })
}

/// Inner approximation of `W1 ∩ W2` by the witness balls of every
/// intersecting ball pair. May be empty.
pub fn intersection_cover(w1: &Condition, w2: &Condition) -> Result<Condition> {
    check_dims(w1.dim(), w2.dim())?;
    let mut balls = Vec::new();
    for b1 in w1.balls() {
        for b2 in w2.balls() {
            if let Some(w) = ball_pair_witness(b1, b2)? {
                balls.push(w);
            }
        }
    }
    Ok(Condition { dim: w1.dim(), balls })
}

/// Restrictions on the random directions used by the sampler.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Draw random pure states and perturbations only from the span of the
    /// first `support` basis vectors.
    pub support: Option<usize>,
}

/// Per-index random stream derived from a seed; sample `i` depends only on
/// `(seed, i)`, so serial and parallel runs agree.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Haar-random unit vector on the first `support` coordinates.
pub fn random_pure_vector(dim: usize, support: usize, rng: &mut impl Rng) -> CVector {
    let k = support.clamp(1, dim);
    let mut v = CVector::zeros(dim);
    for i in 0..k {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        v[i] = Complex64::new(re, im);
    }
    let n = v.norm();
    v.unscale(n)
}

/// A random state: a mixture of `dim` random pure states with random weights.
pub fn random_state(dim: usize, rng: &mut impl Rng) -> DensityState {
    let mut m = CMatrix::zeros(dim, dim);
    let mut total = 0.0;
    for _ in 0..dim {
        let w: f64 = rng.random::<f64>().powi(2);
        let v = random_pure_vector(dim, dim, rng);
        m += (&v * v.adjoint()).scale(w);
        total += w;
    }
    DensityState::from_trusted(hermitize(&m.unscale(total)))
}

/// Random traceless Hermitian matrix on the first `support` coordinates.
fn random_traceless(dim: usize, support: usize, rng: &mut impl Rng) -> CMatrix {
    let k = support.clamp(1, dim);
    let mut m = CMatrix::zeros(dim, dim);
    for r in 0..k {
        for c in 0..k {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(r, c)] = Complex64::new(re, im);
        }
    }
    let mut h = hermitize(&m);
    let shift = h.trace().re / k as f64;
    for i in 0..k {
        h[(i, i)] -= Complex64::new(shift, 0.0);
    }
    h
}

/// Draw `n` states from `W`, deterministically in `seed`.
///
/// Each draw picks a ball uniformly, then either mixes the center with a
/// random pure state (distance uniform in `[0, radius)`) or adds a random
/// traceless Hermitian perturbation, projects back onto state space and
/// rejection-checks membership.
pub fn sample_states(w: &Condition, n: usize, seed: u64) -> Result<Vec<DensityState>> {
    sample_states_with(w, n, seed, SamplerConfig::default())
}

pub fn sample_states_with(
    w: &Condition,
    n: usize,
    seed: u64,
    config: SamplerConfig,
) -> Result<Vec<DensityState>> {
    w.require_nonempty()?;
    if n == 0 {
        return Err(QrError::InvalidParameter("sample count must be at least 1".into()));
    }
    let budget = 10 * n;
    let draws: Vec<Result<(Option<DensityState>, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| draw_one(w, seed, i as u64, budget, config))
        .collect();
    let mut states = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let mut exhausted = false;
    for d in draws {
        let (s, a) = d?;
        attempts += a;
        match s {
            Some(s) => states.push(s),
            None => exhausted = true,
        }
    }
    if exhausted || attempts > budget {
        return Err(QrError::SamplingExhausted {
            attempts,
            accepted: states.len(),
            rate: states.len() as f64 / attempts.max(1) as f64,
        });
    }
    Ok(states)
}

fn draw_one(
    w: &Condition,
    seed: u64,
    index: u64,
    budget: usize,
    config: SamplerConfig,
) -> Result<(Option<DensityState>, usize)> {
    let mut rng = substream(seed, index);
    let dim = w.dim();
    let support = config.support.unwrap_or(dim);
    for attempt in 1..=budget {
        let ball = &w.balls()[rng.random_range(0..w.balls().len())];
        let target = rng.random::<f64>() * ball.inner_radius();
        let candidate = if rng.random::<bool>() {
            let psi = random_pure_vector(dim, support, &mut rng);
            let pure = DensityState::pure(&psi)?;
            let gap = trace_distance(&ball.center, &pure)?;
            let t = if gap > 0.0 { (target / gap).min(1.0) } else { 0.0 };
            // the segment toward a pure state scales distance linearly
            if t * gap < ball.inner_radius() {
                return Ok((Some(ball.center.mix(&pure, t)?), attempt));
            }
            ball.center.mix(&pure, t)?
        } else {
            let h = random_traceless(dim, support, &mut rng);
            let norm = hermitian_trace_norm(&h)?;
            let step = if norm > 0.0 { target / norm } else { 0.0 };
            DensityState::psd_projection(&(ball.center.raw() + h.scale(step)))?
        };
        if w.contains(&candidate)? {
            return Ok((Some(candidate), attempt));
        }
    }
    Ok((None, budget))
}

/// Move `rho` toward an eigenvector of `A` whose eigenvalue is farthest from
/// `Tr(rho A)`, so the value changes while staying within `eps` of `rho`.
/// The weight is chosen so the trace distance is `0.8 eps`.
pub fn perturb_nonzero(rho: &DensityState, a: &HermitianOperator, eps: f64) -> Result<DensityState> {
    let (phi, _) = farthest_eigenvector(rho, a)?;
    let gap = trace_distance(rho, &phi)?;
    let t = (0.8 * eps / gap).min(1.0);
    perturb_nonzero_with_weight(rho, a, eps, t)
}

/// `(1-t) rho + t |phi><phi|` with `phi` as in [`perturb_nonzero`]; fails if
/// the result is not within `eps` of `rho`.
pub fn perturb_nonzero_with_weight(
    rho: &DensityState,
    a: &HermitianOperator,
    eps: f64,
    t: f64,
) -> Result<DensityState> {
    check_dims(rho.dim(), a.dim())?;
    if !(eps > 0.0) {
        return Err(QrError::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(QrError::InvalidParameter(format!("weight must lie in (0, 1], got {t}")));
    }
    let (phi, _) = farthest_eigenvector(rho, a)?;
    let sigma = rho.mix(&phi, t)?;
    let d = trace_distance(rho, &sigma)?;
    if d >= eps {
        return Err(QrError::InvalidParameter(format!(
            "weight {t} moves the state by {d}, not below eps = {eps}"
        )));
    }
    Ok(sigma)
}

fn farthest_eigenvector(rho: &DensityState, a: &HermitianOperator) -> Result<(DensityState, f64)> {
    let value = rho.expectation(a);
    let s = a.spectrum()?;
    let values = s.raw_eigenvalues();
    let (idx, lambda) = values
        .iter()
        .copied()
        .enumerate()
        .max_by(|x, y| (x.1 - value).abs().total_cmp(&(y.1 - value).abs()))
        .expect("nonempty spectrum");
    let scale = a.op_norm()?.max(1.0);
    if (lambda - value).abs() <= 1e-14 * scale {
        return Err(QrError::NoPerturbation(value));
    }
    let phi = DensityState::pure(&s.eigenvectors().column(idx).into_owned())?;
    Ok((phi, lambda))
}
