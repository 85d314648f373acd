//! Collimation predicates: epsilon-sharp collimation, epsilon-location,
//! strict collimation and the qr-number Heisenberg inequality.
//!
//! Every "for all states of W" clause is decided on rigorous per-ball
//! enclosures, so a `true` verdict never comes from under-sampling. Sampled
//! ranges are reported alongside and supply witness states for failed
//! clauses.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QrError, Result};
use crate::interval::Interval;
use crate::operator::{
    check_dims, commutator_hermitian, ComplexMatrix, hermitian_trace_norm, spectral_projection, HermitianOperator,
};
use crate::optimize::{linear_enclosure, linear_extremes, Refinement};
use crate::qr::{Budget, RangeInterval, Rigor};
use crate::state::{sample_states_with, Ball, Condition, DensityState};

/// Clause-by-clause outcome of the sharp collimation test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Clauses {
    /// `|a - a0| <= eps |I| / 2`
    pub value_near_midpoint: bool,
    /// `a0 - |I|/2 <= a - s / sqrt(eps)`
    pub lower_bracket: bool,
    /// `a + s / sqrt(eps) <= a0 + |I|/2`
    pub upper_bracket: bool,
    /// `s^2 <= eps |I|^2 / 4`, implied by the two brackets.
    pub variance_bound: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Verdicts {
    pub sharp: bool,
    pub located: bool,
    /// Only decided by the strict test.
    pub strict: Option<bool>,
}

/// A sampled state violating a clause.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub clause: &'static str,
    pub value: f64,
    pub state: DensityState,
}

/// Bounds on `Tr(rho P)` for the spectral projection `P` of `I`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProjectionBounds {
    /// Rigorous lower bound on the infimum over the condition.
    pub certified_inf: f64,
    pub sampled_min: f64,
}

/// Bounds on `Tr|rho - P rho P|`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DisturbanceBounds {
    /// Rigorous upper bound on the supremum over the condition.
    pub certified_sup: f64,
    pub sampled_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CollimationReport {
    pub a_range: RangeInterval,
    pub s_range: RangeInterval,
    pub a_enclosure: Interval,
    pub s_enclosure: Interval,
    pub interval: Interval,
    pub midpoint: f64,
    pub width: f64,
    pub eps: f64,
    pub clauses: Clauses,
    pub projection: ProjectionBounds,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceBounds>,
    pub verdicts: Verdicts,
    pub witnesses: Vec<Witness>,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(QrError::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")))
    }
}

fn spread_value(a: f64, a2: f64) -> f64 {
    (a2 - a * a).max(0.0).sqrt()
}

/// Enclosure of the spread `sqrt(a2 - a^2)` over a ball.
fn spread_enclosure(a: Interval, a2: Interval) -> Interval {
    let lo = (a2.lo - a.mag() * a.mag()).max(0.0);
    let hi = (a2.hi - a.mig() * a.mig()).max(0.0);
    Interval {
        lo: lo.min(hi).sqrt(),
        hi: hi.sqrt(),
    }
}

// Rigorous lower bound on Tr(rho P) over a ball: the linear enclosure, or
// Chebyshev's inequality when the value stays inside I.
fn projection_lower_bound(p: &HermitianOperator, ball: &Ball, a: Interval, s: Interval, i: &Interval) -> Result<f64> {
    let linear = linear_enclosure(p, ball)?.lo;
    let d = (a.lo - i.lo).min(i.hi - a.hi);
    let chebyshev = if d > 0.0 { 1.0 - s.hi * s.hi / (d * d) } else { f64::NEG_INFINITY };
    Ok(linear.max(chebyshev))
}

/// `Tr|rho - P rho P|`
pub fn disturbance(rho: &DensityState, p: &HermitianOperator) -> Result<f64> {
    check_dims(rho.dim(), p.dim())?;
    let pm = p.raw();
    hermitian_trace_norm(&(rho.raw() - pm * rho.raw() * pm))
}

struct Sampled {
    states: Vec<DensityState>,
    a: Vec<f64>,
    s: Vec<f64>,
    p: Vec<f64>,
    closed_form: usize,
}

fn sample_values(
    a: &HermitianOperator,
    a2: &HermitianOperator,
    p: &HermitianOperator,
    w: &Condition,
    budget: &Budget,
) -> Result<Sampled> {
    let refine = budget.refine.unwrap_or_else(|| Refinement::auto(a.dim()));
    let mut states = Vec::new();
    for b in w.balls() {
        let e = linear_extremes(a, b, refine)?;
        states.push(e.min.state);
        states.push(e.max.state);
        states.push(b.center.clone());
    }
    let closed_form = states.len();
    states.extend(sample_states_with(w, budget.samples, budget.seed, budget.sampler)?);
    let values: Vec<(f64, f64, f64)> = states
        .par_iter()
        .map(|r| {
            let av = r.expectation(a);
            (av, spread_value(av, r.expectation(a2)), r.expectation(p))
        })
        .collect();
    Ok(Sampled {
        states,
        a: values.iter().map(|v| v.0).collect(),
        s: values.iter().map(|v| v.1).collect(),
        p: values.iter().map(|v| v.2).collect(),
        closed_form,
    })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

// Most violating sampled state for a clause, if any violates it.
fn worst(clause: &'static str, states: &[DensityState], excess: impl Fn(usize) -> f64, value: impl Fn(usize) -> f64) -> Option<Witness> {
    let (idx, e) = (0..states.len())
        .map(|k| (k, excess(k)))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    (e > 0.0).then(|| Witness {
        clause,
        value: value(idx),
        state: states[idx].clone(),
    })
}

/// Range of the spread `s(a) = sqrt(Tr(rho A^2) - Tr(rho A)^2)` over `w`.
pub fn spread(a: &HermitianOperator, w: &Condition, budget: &Budget) -> Result<RangeInterval> {
    w.require_nonempty()?;
    check_dims(a.dim(), w.dim())?;
    let a2 = a.square();
    let sampled = sample_values(a, &a2, &HermitianOperator::identity(a.dim()), w, budget)?;
    let (lo, hi) = min_max(&sampled.s);
    Ok(RangeInterval {
        lo,
        hi,
        rigor: Rigor::Sampled {
            samples: budget.samples,
            seed: budget.seed,
        },
    })
}

fn collimation(
    a: &HermitianOperator,
    i: &Interval,
    eps: f64,
    w: &Condition,
    budget: &Budget,
    strict: bool,
) -> Result<CollimationReport> {
    check_eps(eps)?;
    w.require_nonempty()?;
    check_dims(a.dim(), w.dim())?;
    let a2 = a.square();
    let p = spectral_projection(a, i)?;
    let (a0, width) = (i.midpoint(), i.width());
    let root = eps.sqrt();

    let mut a_enc: Option<Interval> = None;
    let mut s_enc: Option<Interval> = None;
    let mut clauses = Clauses {
        value_near_midpoint: true,
        lower_bracket: true,
        upper_bracket: true,
        variance_bound: true,
    };
    let mut certified_inf = f64::INFINITY;
    let mut certified_sup = f64::NEG_INFINITY;
    // Tr|rho - P rho P| is constant when P is 0 or I, 2-Lipschitz otherwise
    let n = a.dim();
    let trivial = p.matrix().max_abs() < 1e-12 || p.matrix().max_abs_diff(&ComplexMatrix::identity(n)) < 1e-12;
    let lip = if trivial { 0.0 } else { 2.0 };
    for b in w.balls() {
        let ab = linear_enclosure(a, b)?;
        let sb = spread_enclosure(ab, linear_enclosure(&a2, b)?);
        clauses.value_near_midpoint &= (ab.lo - a0).abs().max((ab.hi - a0).abs()) <= eps * width / 2.0;
        clauses.lower_bracket &= i.lo <= ab.lo - sb.hi / root;
        clauses.upper_bracket &= ab.hi + sb.hi / root <= i.hi;
        clauses.variance_bound &= sb.hi * sb.hi <= eps * width * width / 4.0;
        certified_inf = certified_inf.min(projection_lower_bound(&p, b, ab, sb, i)?);
        if strict {
            certified_sup = certified_sup.max(disturbance(&b.center, &p)? + lip * b.radius);
        }
        a_enc = Some(a_enc.map_or(ab, |e| e.hull(&ab)));
        s_enc = Some(s_enc.map_or(sb, |e| e.hull(&sb)));
    }
    let sharp = clauses.value_near_midpoint && clauses.lower_bracket && clauses.upper_bracket;
    let located = certified_inf > 1.0 - eps;

    let sm = sample_values(a, &a2, &p, w, budget)?;
    let (alo, ahi) = min_max(&sm.a);
    let (slo, shi) = min_max(&sm.s);
    let (pmin, _) = min_max(&sm.p[sm.closed_form..]);
    let pmin = pmin.min(min_max(&sm.p[..sm.closed_form]).0);

    let mut witnesses: Vec<Witness> = [
        worst("value_near_midpoint", &sm.states, |k| (sm.a[k] - a0).abs() - eps * width / 2.0, |k| sm.a[k]),
        worst("lower_bracket", &sm.states, |k| i.lo - (sm.a[k] - sm.s[k] / root), |k| sm.a[k] - sm.s[k] / root),
        worst("upper_bracket", &sm.states, |k| sm.a[k] + sm.s[k] / root - i.hi, |k| sm.a[k] + sm.s[k] / root),
        worst("located", &sm.states, |k| (1.0 - eps) - sm.p[k] + f64::MIN_POSITIVE, |k| sm.p[k]),
    ]
    .into_iter()
    .flatten()
    .collect();

    let (disturbance_bounds, strict_verdict) = if strict {
        let d = sm
            .states
            .par_iter()
            .map(|r| disturbance(r, &p))
            .collect::<Result<Vec<f64>>>()?;
        let (_, dmax) = min_max(&d);
        if let Some(wit) = worst("strict", &sm.states, |k| d[k] - eps + f64::MIN_POSITIVE, |k| d[k]) {
            witnesses.push(wit);
        }
        (
            Some(DisturbanceBounds {
                certified_sup,
                sampled_max: dmax,
            }),
            Some(sharp && certified_sup < eps),
        )
    } else {
        (None, None)
    };

    Ok(CollimationReport {
        a_range: RangeInterval {
            lo: alo,
            hi: ahi,
            rigor: Rigor::ClosedForm {
                samples: budget.samples,
                seed: budget.seed,
            },
        },
        s_range: RangeInterval {
            lo: slo,
            hi: shi,
            rigor: Rigor::Sampled {
                samples: budget.samples,
                seed: budget.seed,
            },
        },
        a_enclosure: a_enc.expect("nonempty"),
        s_enclosure: s_enc.expect("nonempty"),
        interval: *i,
        midpoint: a0,
        width,
        eps,
        clauses,
        projection: ProjectionBounds {
            certified_inf,
            sampled_min: pmin,
        },
        disturbance: disturbance_bounds,
        verdicts: Verdicts {
            sharp,
            located,
            strict: strict_verdict,
        },
        witnesses,
    })
}

/// Epsilon-sharp collimation of `a` in `i` on `w`; the report also carries
/// the location verdict.
pub fn is_eps_sharp(
    a: &HermitianOperator,
    i: &Interval,
    eps: f64,
    w: &Condition,
    budget: &Budget,
) -> Result<CollimationReport> {
    collimation(a, i, eps, w, budget, false)
}

/// Whether `Tr(rho P(I)) > 1 - eps` is certified on all of `w`.
pub fn is_eps_located(a: &HermitianOperator, i: &Interval, eps: f64, w: &Condition) -> Result<bool> {
    Ok(location_bound(a, i, eps, w)? > 1.0 - eps)
}

/// Certified lower bound on `inf_w Tr(rho P(I))`.
pub fn location_bound(a: &HermitianOperator, i: &Interval, eps: f64, w: &Condition) -> Result<f64> {
    check_eps(eps)?;
    w.require_nonempty()?;
    check_dims(a.dim(), w.dim())?;
    let a2 = a.square();
    let p = spectral_projection(a, i)?;
    let mut inf = f64::INFINITY;
    for b in w.balls() {
        let ab = linear_enclosure(a, b)?;
        let sb = spread_enclosure(ab, linear_enclosure(&a2, b)?);
        inf = inf.min(projection_lower_bound(&p, b, ab, sb, i)?);
    }
    Ok(inf)
}

/// Sharp collimation plus `Tr|rho - P rho P| < eps` on all of `w`.
pub fn is_strictly_eps_sharp(
    a: &HermitianOperator,
    i: &Interval,
    eps: f64,
    w: &Condition,
    budget: &Budget,
) -> Result<CollimationReport> {
    collimation(a, i, eps, w, budget, true)
}

#[derive(Clone, Debug, Serialize)]
pub struct HeisenbergReport {
    pub both_sharp: bool,
    /// `|I_a| |I_b|`
    pub lhs: f64,
    /// `2 inf|c| / eps`
    pub rhs: f64,
    pub c_enclosure: Interval,
    /// Certified lower bound on `inf_w |Tr(rho C)|`.
    pub c_inf: f64,
    pub satisfied: bool,
    pub a: CollimationReport,
    pub b: CollimationReport,
}

/// Checks `|I_a| |I_b| >= 2 |c| / eps` for `C = -i[A, B]`.
#[allow(clippy::too_many_arguments)]
pub fn heisenberg_check(
    a: &HermitianOperator,
    b: &HermitianOperator,
    ia: &Interval,
    ib: &Interval,
    eps: f64,
    w: &Condition,
    budget: &Budget,
) -> Result<HeisenbergReport> {
    check_dims(a.dim(), b.dim())?;
    let c = commutator_hermitian(a, b)?;
    let ra = is_eps_sharp(a, ia, eps, w, budget)?;
    let rb = is_eps_sharp(b, ib, eps, w, budget)?;
    let mut enc: Option<Interval> = None;
    let mut c_inf = f64::INFINITY;
    for ball in w.balls() {
        let e = linear_enclosure(&c, ball)?;
        c_inf = c_inf.min(e.mig());
        enc = Some(enc.map_or(e, |x| x.hull(&e)));
    }
    let lhs = ia.width() * ib.width();
    let rhs = 2.0 * c_inf / eps;
    Ok(HeisenbergReport {
        both_sharp: ra.verdicts.sharp && rb.verdicts.sharp,
        lhs,
        rhs,
        c_enclosure: enc.expect("nonempty"),
        c_inf,
        satisfied: lhs >= rhs,
        a: ra,
        b: rb,
    })
}
