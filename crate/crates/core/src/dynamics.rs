//! Equations of motion on a truncated oscillator: classical Hamilton flow of
//! the qr-number pair `(q_Q, p_Q)` against exact unitary evolution averaged
//! over the same states.
//!
//! Units: hbar = m = omega = 1.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QrError, Result};
use crate::operator::{CMatrix, CVector, HermitianOperator};
use crate::qr::Budget;
use crate::state::{sample_states_with, Condition, DensityState, SamplerConfig};

pub const MIN_DIM: usize = 16;
pub const MAX_STEP: f64 = 1e-2;
/// Top-level population above which truncation artifacts are flagged.
pub const TRUNCATION_WARNING: f64 = 1e-6;
/// `sup_dev` at or below this counts as equal trajectories.
pub const LINEAR_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hamiltonian {
    /// `p^2 / 2`
    Free,
    /// `p^2 / 2 + q^2 / 2`
    Harmonic,
    /// `p^2 / 2 + q^2 / 2 + lambda q^4`
    Quartic { lambda: f64 },
}

/// A truncated oscillator model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub dim: usize,
    pub hamiltonian: Hamiltonian,
    q: HermitianOperator,
    p: HermitianOperator,
    h: HermitianOperator,
}

impl ModelSpec {
    pub fn new(dim: usize, hamiltonian: Hamiltonian) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(QrError::InvalidParameter(format!("truncation dimension must be at least {MIN_DIM}, got {dim}")));
        }
        if let Hamiltonian::Quartic { lambda } = hamiltonian {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(QrError::InvalidParameter(format!("quartic coupling must be nonnegative, got {lambda}")));
            }
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // powers are formed on a larger ladder and then compressed, so that
        // H is the exact compression of the untruncated operator
        let big = dim + 4;
        let a = annihilation(big);
        let ad = a.adjoint();
        let qb = (&a + &ad).scale(s);
        let pb = (&ad - &a) * Complex64::new(0.0, s);
        let compress = |m: &CMatrix| HermitianOperator::from_matrix(m.view((0, 0), (dim, dim)).into_owned());
        let q = compress(&qb)?;
        let p = compress(&pb)?;
        let q2b = &qb * &qb;
        let q2 = compress(&q2b)?;
        let kinetic = compress(&(&pb * &pb))?.scale(0.5);
        let h = match hamiltonian {
            Hamiltonian::Free => kinetic,
            Hamiltonian::Harmonic => kinetic.add(&q2.scale(0.5))?,
            Hamiltonian::Quartic { lambda } => kinetic
                .add(&q2.scale(0.5))?
                .add(&compress(&(&q2b * &q2b))?.scale(lambda))?,
        };
        Ok(Self {
            dim,
            hamiltonian,
            q,
            p,
            h,
        })
    }

    pub fn position(&self) -> &HermitianOperator {
        &self.q
    }

    pub fn momentum(&self) -> &HermitianOperator {
        &self.p
    }

    pub fn hamiltonian_operator(&self) -> &HermitianOperator {
        &self.h
    }

    /// Classical `h(q, p)`.
    pub fn energy(&self, q: f64, p: f64) -> f64 {
        0.5 * p * p
            + match self.hamiltonian {
                Hamiltonian::Free => 0.0,
                Hamiltonian::Harmonic => 0.5 * q * q,
                Hamiltonian::Quartic { lambda } => 0.5 * q * q + lambda * q.powi(4),
            }
    }

    /// `-dV/dq`
    pub fn force(&self, q: f64) -> f64 {
        match self.hamiltonian {
            Hamiltonian::Free => 0.0,
            Hamiltonian::Harmonic => -q,
            Hamiltonian::Quartic { lambda } => -q - 4.0 * lambda * q.powi(3),
        }
    }

    /// Sampler restricted to the lower half of the Fock ladder.
    pub fn default_sampler(&self) -> SamplerConfig {
        SamplerConfig {
            support: Some(self.dim / 2),
        }
    }
}

fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Truncated coherent state centred at phase-space point `(q0, p0)`.
pub fn coherent_state(dim: usize, q0: f64, p0: f64) -> Result<DensityState> {
    let alpha = Complex64::new(q0, p0) * std::f64::consts::FRAC_1_SQRT_2;
    let mut v = CVector::zeros(dim);
    let mut c = Complex64::new(1.0, 0.0);
    for n in 0..dim {
        if n > 0 {
            c *= alpha / (n as f64).sqrt();
        }
        v[n] = c;
    }
    DensityState::pure(&v)
}

/// Uniform time grid `0, dt, ..., t_end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() || steps == 0 {
            return Err(QrError::InvalidParameter(format!("invalid time grid: t_end {t_end}, {steps} steps")));
        }
        let g = Self { t_end, steps };
        if g.step() > MAX_STEP * (1.0 + 1e-12) {
            return Err(QrError::InvalidParameter(format!(
                "time step {} exceeds the maximum {MAX_STEP}",
                g.step()
            )));
        }
        Ok(g)
    }

    /// Finest grid with step at most `MAX_STEP`.
    pub fn with_max_step(t_end: f64) -> Result<Self> {
        Self::new(t_end, (t_end / MAX_STEP).ceil() as usize)
    }

    pub fn step(&self) -> f64 {
        self.t_end / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| k as f64 * self.step()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// Family of phase-space trajectories, one per sampled state.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseSection {
    pub times: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// Per sample, the largest population of the top tenth of the levels
    /// over the run (unitary evolution only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<Vec<f64>>,
    pub truncation_warning: bool,
}

impl PhaseSection {
    pub fn max_truncation(&self) -> f64 {
        self.truncation
            .as_ref()
            .map_or(0.0, |t| t.iter().copied().fold(0.0, f64::max))
    }
}

/// Classical trajectory from `(q0, p0)` by fixed-step RK4.
pub fn hamilton_trajectory(model: &ModelSpec, q0: f64, p0: f64, grid: &TimeGrid) -> Result<Trajectory> {
    let h = grid.step();
    let mut q = Vec::with_capacity(grid.steps + 1);
    let mut p = Vec::with_capacity(grid.steps + 1);
    let (mut x, mut v) = (q0, p0);
    q.push(x);
    p.push(v);
    for k in 0..grid.steps {
        let (k1x, k1v) = (v, model.force(x));
        let (k2x, k2v) = (v + 0.5 * h * k1v, model.force(x + 0.5 * h * k1x));
        let (k3x, k3v) = (v + 0.5 * h * k2v, model.force(x + 0.5 * h * k2x));
        let (k4x, k4v) = (v + h * k3v, model.force(x + h * k3x));
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        if !x.is_finite() || !v.is_finite() {
            return Err(QrError::BlowUp((k + 1) as f64 * h));
        }
        q.push(x);
        p.push(v);
    }
    Ok(Trajectory { q, p })
}

fn sample(model: &ModelSpec, w: &Condition, budget: &Budget) -> Result<Vec<DensityState>> {
    crate::operator::check_dims(model.dim, w.dim())?;
    let sampler = if budget.sampler.support.is_some() {
        budget.sampler
    } else {
        model.default_sampler()
    };
    sample_states_with(w, budget.samples, budget.seed, sampler)
}

/// Integrates Hamilton's equations from `(Tr rho Q, Tr rho P)` for each
/// sampled state of `w`.
pub fn qr_hamilton_evolve(model: &ModelSpec, w: &Condition, grid: &TimeGrid, budget: &Budget) -> Result<PhaseSection> {
    let states = sample(model, w, budget)?;
    let trajectories = states
        .par_iter()
        .map(|rho| hamilton_trajectory(model, rho.expectation(&model.q), rho.expectation(&model.p), grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseSection {
        times: grid.times(),
        trajectories,
        truncation: None,
        truncation_warning: false,
    })
}

/// Exact propagator in the eigenbasis of the Hamiltonian.
pub struct Propagator {
    energies: Vec<f64>,
    vectors: CMatrix,
}

impl Propagator {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        let s = model.h.spectrum()?;
        Ok(Self {
            energies: s.raw_eigenvalues().to_vec(),
            vectors: s.eigenvectors().clone(),
        })
    }

    fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        self.vectors.adjoint() * m * &self.vectors
    }

    fn phases(&self, t: f64) -> DVector<Complex64> {
        DVector::from_iterator(
            self.energies.len(),
            self.energies.iter().map(|&e| Complex64::from_polar(1.0, -e * t)),
        )
    }

    /// `exp(-iHt) rho exp(iHt)`
    pub fn evolve(&self, rho: &DensityState, t: f64) -> Result<DensityState> {
        let u = self.phases(t);
        let mut r = self.to_eigenbasis(rho.raw());
        for j in 0..r.nrows() {
            for k in 0..r.ncols() {
                r[(j, k)] *= u[j] * u[k].conj();
            }
        }
        DensityState::new(crate::operator::ComplexMatrix::new(&self.vectors * r * self.vectors.adjoint())?)
    }

    // Tr(rho(t) A) for many A at once: with rho~ = V^H rho V and A~ likewise,
    // Tr(rho(t) A) = sum_jk u_j rho~_jk conj(u_k) A~_kj.
    fn expectations(&self, rho: &DensityState, ops: &[CMatrix], times: &[f64]) -> Vec<Vec<f64>> {
        let r = self.to_eigenbasis(rho.raw());
        let weights: Vec<CMatrix> = ops
            .iter()
            .map(|a| r.component_mul(&self.to_eigenbasis(a).transpose()))
            .collect();
        let mut out = vec![Vec::with_capacity(times.len()); ops.len()];
        for &t in times {
            let u = self.phases(t);
            let uc = u.map(|z| z.conj());
            for (o, m) in out.iter_mut().zip(&weights) {
                o.push(u.dot(&(m * &uc)).re);
            }
        }
        out
    }
}

/// Evolves each sampled state exactly and records `(Tr rho(t) Q, Tr rho(t) P)`
/// together with the top-level population diagnostic.
pub fn heisenberg_average_evolve(
    model: &ModelSpec,
    w: &Condition,
    grid: &TimeGrid,
    budget: &Budget,
) -> Result<PhaseSection> {
    let states = sample(model, w, budget)?;
    let prop = Propagator::new(model)?;
    let n = model.dim;
    let top = n - n / 10;
    let mut top_proj = CMatrix::zeros(n, n);
    for k in top..n {
        top_proj[(k, k)] = Complex64::new(1.0, 0.0);
    }
    let ops = [model.q.raw().clone(), model.p.raw().clone(), top_proj];
    let times = grid.times();
    let results: Vec<(Trajectory, f64)> = states
        .par_iter()
        .map(|rho| {
            let mut v = prop.expectations(rho, &ops, &times);
            let pop = v.pop().expect("three observables");
            let mut p = v.pop().expect("three observables");
            let mut q = v.pop().expect("three observables");
            // the initial values need no propagation
            q[0] = rho.expectation(&model.q);
            p[0] = rho.expectation(&model.p);
            (Trajectory { q, p }, pop.into_iter().fold(0.0, f64::max))
        })
        .collect();
    let (trajectories, truncation): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let warning = truncation.iter().any(|&t| t > TRUNCATION_WARNING);
    Ok(PhaseSection {
        times,
        trajectories,
        truncation: Some(truncation),
        truncation_warning: warning,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub sup_dev: f64,
    /// Per time, the largest `|q1 - q2|` or `|p1 - p2|` over samples.
    pub dev_curve: Vec<f64>,
    pub linear_equal: bool,
}

pub fn compare_evolutions(s1: &PhaseSection, s2: &PhaseSection) -> Result<Comparison> {
    if s1.times != s2.times {
        return Err(QrError::InvalidParameter("time grids differ".into()));
    }
    if s1.trajectories.len() != s2.trajectories.len() {
        return Err(QrError::InvalidParameter(format!(
            "sample counts differ: {} vs {}",
            s1.trajectories.len(),
            s2.trajectories.len()
        )));
    }
    let mut dev_curve = vec![0.0f64; s1.times.len()];
    for (a, b) in s1.trajectories.iter().zip(&s2.trajectories) {
        for (k, d) in dev_curve.iter_mut().enumerate() {
            *d = d.max((a.q[k] - b.q[k]).abs()).max((a.p[k] - b.p[k]).abs());
        }
    }
    let sup_dev = dev_curve.iter().copied().fold(0.0, f64::max);
    Ok(Comparison {
        sup_dev,
        dev_curve,
        linear_equal: sup_dev <= LINEAR_TOL,
    })
}
