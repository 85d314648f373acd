//! End-to-end experiments: Bell-Bohm correlations and CHSH, Born-rule
//! ensembles, the Lueders rule and double-slit location.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::collimation::{disturbance, is_strictly_eps_sharp, location_bound};
use crate::error::{QrError, Result};
use crate::interval::Interval;
use crate::operator::{
    check_dims, spectral_projection, tensor_hermitian, CVector, HermitianOperator,
};
use crate::optimize::{linear_enclosure, linear_extremes, Refinement};
use crate::qr::{Budget, QrNumber, RangeInterval};
use crate::state::{intersection_cover, sample_states, substream, Ball, Condition, DensityState};

const UNIT_TOL: f64 = 1e-10;
const SNAP_TOL: f64 = 1e-12;
// separates the outcome variates from the sampler streams of the same seed
const OUTCOME_STREAM_KEY: u64 = 0xD1B5_4A32_D192_ED03;

/// A prepared ensemble: epistemic condition `ν(center, eps)`, `runs`
/// repetitions, ontic radius `ontic_fraction * eps`.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleSpec {
    pub center: DensityState,
    pub eps: f64,
    pub runs: usize,
    pub ontic_fraction: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(center: DensityState, eps: f64, runs: usize, seed: u64) -> Self {
        Self {
            center,
            eps,
            runs,
            ontic_fraction: 0.1,
            seed,
        }
    }

    pub fn ontic_radius(&self) -> f64 {
        self.ontic_fraction * self.eps
    }

    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(QrError::InvalidParameter("at least one run is required".into()));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(QrError::InvalidParameter(format!("epistemic radius must be nonnegative, got {}", self.eps)));
        }
        if !(self.ontic_fraction > 0.0 && self.ontic_fraction < 1.0) {
            return Err(QrError::InvalidParameter(format!(
                "ontic fraction must lie in (0, 1), got {}",
                self.ontic_fraction
            )));
        }
        Ok(())
    }

    /// Ontic centers: samples of the epistemic ball, or the center itself
    /// when `eps = 0`.
    fn ontic_states(&self) -> Result<Vec<DensityState>> {
        if self.eps == 0.0 {
            Ok(vec![self.center.clone(); self.runs])
        } else {
            sample_states(&Condition::ball(self.center.clone(), self.eps)?, self.runs, self.seed)
        }
    }
}

/// Per-run values compared against a theoretical target.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub values: Vec<f64>,
    pub mean: f64,
    pub target: f64,
    pub bound: f64,
    pub pass: bool,
}

impl ExperimentReport {
    fn new(values: Vec<f64>, target: f64, bound: f64) -> Self {
        // order-fixed summation keeps reports bit-reproducible
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self {
            pass: (mean - target).abs() <= bound,
            values,
            mean,
            target,
            bound,
        }
    }
}

fn check_unit(u: [f64; 3]) -> Result<()> {
    let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(QrError::InvalidParameter(format!("setting vector has norm {n}, expected 1")));
    }
    Ok(())
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `(sigma . u_L) ⊗ (sigma . u_R)`
pub fn correlation_operator(u_l: [f64; 3], u_r: [f64; 3]) -> Result<HermitianOperator> {
    check_unit(u_l)?;
    check_unit(u_r)?;
    Ok(tensor_hermitian(&HermitianOperator::pauli_dot(u_l), &HermitianOperator::pauli_dot(u_r)))
}

/// Singlet `(|01> - |10>) / sqrt 2`.
pub fn singlet() -> DensityState {
    let mut v = CVector::zeros(4);
    v[1] = 1.0.into();
    v[2] = (-1.0).into();
    DensityState::pure(&v).expect("nonzero vector")
}

#[derive(Clone, Debug, Serialize)]
pub struct BellReport {
    #[serde(flatten)]
    pub report: ExperimentReport,
    pub u_l: [f64; 3],
    pub u_r: [f64; 3],
    /// `-u_L . u_R`, the singlet correlation.
    pub singlet_correlation: f64,
    pub ontic_radius: f64,
    /// Largest `|c_n - Tr(rho_n C)| / delta_n` over pairs; below 1 when the
    /// per-pair bound holds.
    pub max_relative_pair_gap: f64,
    /// Pairs with `|c_n - Tr(rho_n C)| >= delta_n`.
    pub pair_violations: usize,
}

/// Each pair `n` has ontic condition `ν(rho_n, delta_n)` around a sample of
/// the epistemic ball; its value is the midpoint of the certified range of
/// `c_Q` there. The mean is compared with `Tr(rho_0 C)` within
/// `eps + delta_n`.
pub fn bell_bohm(u_l: [f64; 3], u_r: [f64; 3], spec: &EnsembleSpec) -> Result<BellReport> {
    spec.validate()?;
    let c = correlation_operator(u_l, u_r)?;
    check_dims(spec.center.dim(), 4)?;
    let delta = spec.ontic_radius();
    let states = spec.ontic_states()?;
    let pairs = states
        .par_iter()
        .map(|rho| {
            let exact = rho.expectation(&c);
            if delta == 0.0 {
                return Ok((exact, 0.0));
            }
            let range = linear_enclosure(&c, &Ball::new(rho.clone(), delta)?)?;
            let value = range.midpoint();
            Ok((value, (value - exact).abs() / delta))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let max_gap = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let violations = if delta == 0.0 { 0 } else { pairs.iter().filter(|p| p.1 >= 1.0).count() };
    let target = spec.center.expectation(&c);
    Ok(BellReport {
        report: ExperimentReport::new(values, target, spec.eps + delta),
        u_l,
        u_r,
        singlet_correlation: -dot(u_l, u_r),
        ontic_radius: delta,
        max_relative_pair_gap: max_gap,
        pair_violations: violations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChshReport {
    #[serde(rename = "S")]
    pub s: f64,
    /// `E(a,b), E(a,b'), E(a',b), E(a',b')`
    pub correlations: [f64; 4],
    pub classical_bound: f64,
    pub tsirelson_bound: f64,
    pub runs: Vec<BellReport>,
}

/// `S = |E(a,b) - E(a,b')| + |E(a',b) + E(a',b')|` from four Bell-Bohm runs
/// with seeds `seed, seed+1, seed+2, seed+3`.
pub fn chsh(a: [f64; 3], a2: [f64; 3], b: [f64; 3], b2: [f64; 3], spec: &EnsembleSpec) -> Result<ChshReport> {
    let settings = [(a, b), (a, b2), (a2, b), (a2, b2)];
    let mut runs = Vec::with_capacity(4);
    for (k, (l, r)) in settings.into_iter().enumerate() {
        let mut s = spec.clone();
        s.seed = spec.seed.wrapping_add(k as u64);
        runs.push(bell_bohm(l, r, &s)?);
    }
    let e: Vec<f64> = runs.iter().map(|r| r.report.mean).collect();
    Ok(ChshReport {
        s: (e[0] - e[1]).abs() + (e[2] + e[3]).abs(),
        correlations: [e[0], e[1], e[2], e[3]],
        classical_bound: 2.0,
        tsirelson_bound: 2.0 * std::f64::consts::SQRT_2,
        runs,
    })
}

/// Unit vector at angle `deg` from z toward x.
pub fn xz_direction(deg: f64) -> [f64; 3] {
    let t = deg.to_radians();
    [t.sin(), 0.0, t.cos()]
}

#[derive(Clone, Debug, Serialize)]
pub struct DichotomicReport {
    #[serde(flatten)]
    pub report: ExperimentReport,
    /// `Tr(rho_n P)` per run.
    pub probabilities: Vec<f64>,
}

/// Born-rule ensemble: run `n` has ontic state `rho_n` in `ν(rho_0, eps)` and
/// registers 1 when an auxiliary uniform variate falls below
/// `Tr(rho_n P)`. The frequency is compared with `Tr(rho_0 P)` within
/// `eps + 3 sqrt(p(1-p)/N)`.
pub fn dichotomic_ensemble(p: &HermitianOperator, spec: &EnsembleSpec) -> Result<DichotomicReport> {
    spec.validate()?;
    check_dims(p.dim(), spec.center.dim())?;
    let dev = p.matrix().as_matrix();
    let idem = (dev * dev - dev).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if idem > 1e-10 {
        return Err(QrError::NotProjection(idem));
    }
    let states = spec.ontic_states()?;
    let outcome_seed = spec.seed ^ OUTCOME_STREAM_KEY;
    let runs: Vec<(f64, f64)> = states
        .par_iter()
        .enumerate()
        .map(|(n, rho)| {
            let mut pn = rho.expectation(p).clamp(0.0, 1.0);
            if pn < SNAP_TOL {
                pn = 0.0;
            } else if pn > 1.0 - SNAP_TOL {
                pn = 1.0;
            }
            let u: f64 = substream(outcome_seed, n as u64).random();
            (if u < pn { 1.0 } else { 0.0 }, pn)
        })
        .collect();
    let target = spec.center.expectation(p);
    let n = spec.runs as f64;
    let q = target.clamp(0.0, 1.0);
    let bound = spec.eps + 3.0 * (q * (1.0 - q) / n).sqrt();
    Ok(DichotomicReport {
        report: ExperimentReport::new(runs.iter().map(|r| r.0).collect(), target, bound),
        probabilities: runs.iter().map(|r| r.1).collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LuedersReport {
    pub collapse_probability: f64,
    pub collapsed: DensityState,
    /// `Tr(rho_0' B)`
    pub target: f64,
    /// Largest `|b_Q - target|` attained on the cover of `U ∩ W`.
    pub deviation: f64,
    /// Rigorous upper bound on the same supremum.
    pub certified_deviation: f64,
    pub b_range: RangeInterval,
    pub delta: f64,
    pub eps: f64,
    pub constant: f64,
    /// `K (delta + 2 eps)`
    pub bound: f64,
    pub pass: bool,
}

/// Lueders rule: with `A` strictly eps-sharp in `I_a` on `U`, the values of
/// `b_Q` on `U ∩ ν(rho_0, delta)` approximate `Tr(rho_0' B)`, where
/// `rho_0' = P rho_0 P / Tr(P rho_0)`, within `K (delta + 2 eps)`.
#[allow(clippy::too_many_arguments)]
pub fn lueders_experiment(
    a: &HermitianOperator,
    i_a: &Interval,
    b: &HermitianOperator,
    w: &Ball,
    u: &Condition,
    eps: f64,
    constant: f64,
    budget: &Budget,
) -> Result<LuedersReport> {
    check_dims(a.dim(), b.dim())?;
    check_dims(a.dim(), w.dim())?;
    check_dims(a.dim(), u.dim())?;
    let p = spectral_projection(a, i_a)?;
    let rho0 = &w.center;
    let prob = rho0.expectation(&p);
    if prob <= 1e-9 {
        return Err(QrError::Precondition(format!("collapse probability Tr(P rho0) = {prob:e} is zero")));
    }
    let strict = is_strictly_eps_sharp(a, i_a, eps, u, budget)?;
    if strict.verdicts.strict != Some(true) {
        return Err(QrError::Precondition(format!(
            "A is not strictly {eps}-sharp collimated in {i_a} on U (sharp: {}, disturbance bound {:e})",
            strict.verdicts.sharp,
            strict.disturbance.map_or(f64::NAN, |d| d.certified_sup)
        )));
    }
    let cover = intersection_cover(u, &Condition::new(vec![w.clone()])?)?;
    if cover.is_empty() {
        return Err(QrError::EmptySection);
    }
    let pm = p.raw();
    let collapsed = DensityState::new(crate::operator::ComplexMatrix::new(
        (pm * rho0.raw() * pm).unscale(prob),
    )?)?;
    let target = collapsed.expectation(b);
    let b_range = QrNumber::linear(b.clone(), cover.clone())?.eval_range(budget)?;
    let deviation = (b_range.hi - target).abs().max((b_range.lo - target).abs());
    let mut certified: f64 = 0.0;
    for ball in cover.balls() {
        let e = linear_enclosure(b, ball)?;
        certified = certified.max((e.hi - target).abs()).max((e.lo - target).abs());
    }
    let bound = constant * (w.radius + 2.0 * eps);
    Ok(LuedersReport {
        collapse_probability: prob,
        collapsed,
        target,
        deviation,
        certified_deviation: certified,
        b_range,
        delta: w.radius,
        eps,
        constant,
        bound,
        pass: deviation <= bound,
    })
}

/// Largest radius `r` (within `rel_tol`) such that `A` is certified strictly
/// eps-sharp in `I_a` on `ν(center, r)`, searched in `(0, r_max]`.
pub fn largest_strict_radius(
    a: &HermitianOperator,
    i_a: &Interval,
    eps: f64,
    center: &DensityState,
    r_max: f64,
    budget: &Budget,
) -> Result<Option<f64>> {
    let ok = |r: f64| -> Result<bool> {
        let rep = is_strictly_eps_sharp(a, i_a, eps, &Condition::ball(center.clone(), r)?, budget)?;
        Ok(rep.verdicts.strict == Some(true))
    };
    if ok(r_max)? {
        return Ok(Some(r_max));
    }
    let mut lo = r_max;
    for _ in 0..60 {
        lo /= 2.0;
        if ok(lo)? {
            break;
        }
    }
    if !ok(lo)? {
        return Ok(None);
    }
    let mut hi = (2.0 * lo).min(r_max);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Position operator `diag(x_0, ..., x_{n-1})` on a uniform grid over `[lo, hi]`.
pub fn grid_position(dim: usize, lo: f64, hi: f64) -> Result<HermitianOperator> {
    if dim < 2 || !(hi > lo) {
        return Err(QrError::InvalidParameter(format!("invalid grid: {dim} points on [{lo}, {hi}]")));
    }
    let step = (hi - lo) / (dim - 1) as f64;
    Ok(HermitianOperator::diagonal(
        &(0..dim).map(|k| lo + k as f64 * step).collect::<Vec<_>>(),
    ))
}

/// Normalized superposition of Gaussian amplitudes `exp(-(x - c)^2 / (2 w^2))`
/// on the grid of `position`.
pub fn gaussian_superposition(position: &HermitianOperator, centers: &[f64], width: f64) -> Result<DensityState> {
    let m = position.matrix().as_matrix();
    let v = CVector::from_iterator(
        position.dim(),
        (0..position.dim()).map(|k| {
            let x = m[(k, k)].re;
            centers
                .iter()
                .map(|c| (-(x - c).powi(2) / (2.0 * width * width)).exp())
                .sum::<f64>()
                .into()
        }),
    );
    DensityState::pure(&v)
}

#[derive(Clone, Debug, Serialize)]
pub struct SlitReport {
    pub located_union: bool,
    pub located_plus: bool,
    pub located_minus: bool,
    /// Certified lower bounds on `inf_W Tr(rho P)`.
    pub union_bound: f64,
    pub plus_bound: f64,
    pub minus_bound: f64,
    pub z_range: RangeInterval,
}

/// Location of `z` in two disjoint slits and in their union.
pub fn double_slit_location(
    z: &HermitianOperator,
    i_plus: &Interval,
    i_minus: &Interval,
    w: &Condition,
    eps: f64,
    budget: &Budget,
) -> Result<SlitReport> {
    if i_plus.intersects(i_minus) {
        return Err(QrError::InvalidParameter(format!("slits {i_plus} and {i_minus} overlap")));
    }
    let plus_bound = location_bound(z, i_plus, eps, w)?;
    let minus_bound = location_bound(z, i_minus, eps, w)?;
    let union = spectral_projection(z, i_plus)?.add(&spectral_projection(z, i_minus)?)?;
    let mut union_bound = f64::INFINITY;
    for b in w.balls() {
        union_bound = union_bound.min(linear_enclosure(&union, b)?.lo);
    }
    let z_range = QrNumber::linear(z.clone(), w.clone())?.eval_range(budget)?;
    Ok(SlitReport {
        located_union: union_bound > 1.0 - eps,
        located_plus: plus_bound > 1.0 - eps,
        located_minus: minus_bound > 1.0 - eps,
        union_bound,
        plus_bound,
        minus_bound,
        z_range,
    })
}

/// Attained extremes of `Tr(rho P)` over a ball; used to cross-check slit
/// bounds against inner estimates.
pub fn projection_extremes(p: &HermitianOperator, ball: &Ball) -> Result<(f64, f64)> {
    let e = linear_extremes(p, ball, Refinement::auto(p.dim()))?;
    Ok((e.min.value, e.max.value))
}

/// `Tr|rho - P rho P|` at the ontic centers of an ensemble; exposed for
/// reports on collapse quality.
pub fn mean_disturbance(p: &HermitianOperator, states: &[DensityState]) -> Result<f64> {
    let d = states.iter().map(|s| disturbance(s, p)).collect::<Result<Vec<f64>>>()?;
    Ok(d.iter().sum::<f64>() / d.len().max(1) as f64)
}
