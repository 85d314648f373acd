//! Extremes of a linear functional `rho -> Tr(rho A)` over a trace-norm ball
//! intersected with state space.
//!
//! Two kinds of answer are produced. [`linear_enclosure`] is an outer bound:
//! for any state `rho` in the ball, `Tr((rho - c) A) = Tr((rho - c)(A - mI))`
//! because the difference is traceless, so with `m` the midpoint of the
//! spectrum the value moves by at most `radius (lambda_max - lambda_min) / 2`.
//! [`linear_extremes`] is an inner estimate: every reported value is attained
//! at an explicit state strictly inside the ball, so the true range contains
//! it.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::interval::Interval;
use crate::operator::{from_eigen, hermitian_eigen, hermitize, CMatrix, HermitianOperator};
use crate::state::{trace_distance, Ball, DensityState};

/// Projected-ascent refinement settings. Each level projects the point
/// `center + step * A` (with `step` growing geometrically) onto the feasible
/// set by Dykstra's alternating projections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub levels: usize,
    pub iterations: usize,
}

impl Refinement {
    pub const NONE: Refinement = Refinement {
        levels: 0,
        iterations: 0,
    };

    /// Default effort for a given dimension. Each iteration costs two dense
    /// eigendecompositions, so large operators skip refinement.
    pub fn auto(dim: usize) -> Refinement {
        if dim <= 16 {
            Refinement {
                levels: 5,
                iterations: 40,
            }
        } else if dim <= 64 {
            Refinement {
                levels: 2,
                iterations: 10,
            }
        } else {
            Refinement::NONE
        }
    }
}

/// A value attained at an explicit state.
#[derive(Clone, Debug)]
pub struct Attained {
    pub value: f64,
    pub state: DensityState,
}

#[derive(Clone, Debug)]
pub struct LinearExtremes {
    pub min: Attained,
    pub max: Attained,
}

/// Outer enclosure of `Tr(rho A)` over `ball`.
pub fn linear_enclosure(a: &HermitianOperator, ball: &Ball) -> Result<Interval> {
    let (lo, hi) = a.eigen_bounds()?;
    let at_center = ball.center.expectation(a);
    let reach = ball.radius * 0.5 * (hi - lo);
    Ok(Interval {
        lo: (at_center - reach).max(lo),
        hi: (at_center + reach).min(hi),
    })
}

/// Inner estimate of the range of `Tr(rho A)` over `ball`.
pub fn linear_extremes(a: &HermitianOperator, ball: &Ball, refine: Refinement) -> Result<LinearExtremes> {
    let max = maximize(a, ball, refine)?;
    let neg = a.scale(-1.0);
    let min = maximize(&neg, ball, refine)?;
    Ok(LinearExtremes {
        min: Attained {
            value: -min.value,
            state: min.state,
        },
        max,
    })
}

fn maximize(a: &HermitianOperator, ball: &Ball, refine: Refinement) -> Result<Attained> {
    let c = &ball.center;
    let r = ball.inner_radius();
    let spec = a.spectrum()?;
    let vectors = spec.eigenvectors();
    let n = a.dim();

    let mut best = Attained {
        value: c.expectation(a),
        state: c.clone(),
    };
    let mut consider = |s: DensityState| -> Result<()> {
        let s = pull_back(c, s, r)?;
        let v = s.expectation(a);
        if v > best.value {
            best = Attained { value: v, state: s };
        }
        Ok(())
    };

    // Mix toward the top eigenvector, and toward the part of the center that
    // already lies in the top eigenspace.
    let top_group = spec.eigenvalues.len() - 1;
    let top_cols = spec.eigenspace_columns(top_group);
    let vmax = vectors.column(n - 1).into_owned();
    consider(DensityState::pure(&vmax)?)?;
    let p_top = spec.projector(top_group);
    let compressed = p_top.matrix().as_matrix() * c.matrix().as_matrix() * p_top.matrix().as_matrix();
    let weight = compressed.trace().re;
    if weight > 1e-12 && top_cols.len() > 1 {
        consider(DensityState::from_trusted(hermitize(&compressed.unscale(weight))))?;
    }

    // Unconstrained trace-norm-ball maximizer, clipped to the PSD cone.
    let vmin = vectors.column(0).into_owned();
    let shift = (&vmax * vmax.adjoint() - &vmin * vmin.adjoint()).scale(0.5 * r);
    consider(DensityState::psd_projection(&(c.matrix().as_matrix() + shift))?)?;

    if refine.levels > 0 && n > 1 {
        let mut direction = a.matrix().as_matrix().clone();
        let shift = a.matrix().trace().re / n as f64;
        for i in 0..n {
            direction[(i, i)].re -= shift;
        }
        let norm = direction.norm();
        if norm > 0.0 {
            direction.unscale_mut(norm);
            let mut step = r;
            for _ in 0..refine.levels {
                let target = c.matrix().as_matrix() + direction.scale(step);
                let projected = dykstra(&target, c.matrix().as_matrix(), r, refine.iterations)?;
                consider(DensityState::psd_projection(&projected)?)?;
                step *= 4.0;
            }
        }
    }
    Ok(best)
}

/// Move `s` along the segment toward `c` until it is within `r` of `c`.
/// Trace distance is linear along the segment and state space is convex, so
/// the result is a state at distance `min(d, r)`.
fn pull_back(c: &DensityState, s: DensityState, r: f64) -> Result<DensityState> {
    let d = trace_distance(c, &s)?;
    if d <= r {
        Ok(s)
    } else {
        c.mix(&s, r / d)
    }
}

/// Frobenius projection of `y` onto `{states} ∩ {x : ||x - c||_1 <= r}`.
fn dykstra(y: &CMatrix, c: &CMatrix, r: f64, iterations: usize) -> Result<CMatrix> {
    let n = y.nrows();
    let mut x = y.clone();
    let mut p = CMatrix::zeros(n, n);
    let mut q = CMatrix::zeros(n, n);
    for _ in 0..iterations {
        let u = project_states(&(&x + &p))?;
        p = &x + &p - &u;
        let v = project_ball(&(&u + &q), c, r)?;
        q = &u + &q - &v;
        x = v;
    }
    Ok(x)
}

fn project_states(m: &CMatrix) -> Result<CMatrix> {
    let (values, vectors) = hermitian_eigen(&hermitize(m))?;
    Ok(from_eigen(&project_simplex(&values), &vectors))
}

fn project_ball(m: &CMatrix, c: &CMatrix, r: f64) -> Result<CMatrix> {
    let (values, vectors) = hermitian_eigen(&hermitize(&(m - c)))?;
    Ok(c + from_eigen(&project_l1_ball(&values, r), &vectors))
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Euclidean projection onto the l1 ball of radius `r`.
pub(crate) fn project_l1_ball(v: &[f64], r: f64) -> Vec<f64> {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total <= r {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumulative += m;
        let t = (cumulative - r) / (k + 1) as f64;
        if m - t > 0.0 {
            theta = t;
        }
    }
    v.iter()
        .map(|x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}


#[cfg(test)]
mod bloch_oracle {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Brute force over a Bloch-vector grid: for qubits, trace distance is the
    // Euclidean distance between Bloch vectors and Tr(rho A) = a0 + a.b.
    fn grid_range(a0: f64, a: [f64; 3], c: [f64; 3], r: f64, steps: i32) -> (f64, f64) {
        let h = r / steps as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in -steps..=steps {
            for j in -steps..=steps {
                for k in -steps..=steps {
                    let d = [i as f64 * h, j as f64 * h, k as f64 * h];
                    if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] >= r * r {
                        continue;
                    }
                    let b = [c[0] + d[0], c[1] + d[1], c[2] + d[2]];
                    if b[0] * b[0] + b[1] * b[1] + b[2] * b[2] > 1.0 {
                        continue;
                    }
                    let v = a0 + a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        (lo, hi)
    }

    #[test]
    fn matches_bloch_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let a0 = rng.random_range(-1.0..1.0);
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let len = rng.random_range(0.0..1.0f64);
            let mut c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0f64)];
            let cn = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            for x in &mut c {
                *x *= len / cn;
            }
            let r = rng.random_range(0.05..0.8);
            let op = HermitianOperator::pauli_dot(a).add(&HermitianOperator::identity(2).scale(a0)).unwrap();
            let ball = Ball::new(DensityState::from_bloch(c).unwrap(), r).unwrap();
            let e = linear_extremes(&op, &ball, Refinement::auto(2)).unwrap();
            let (lo, hi) = grid_range(a0, a, c, r, 60);
            worst = worst.max((e.min.value - lo).abs()).max((e.max.value - hi).abs());
        }
        assert!(worst < 0.01, "worst deviation {worst}");
    }
}
