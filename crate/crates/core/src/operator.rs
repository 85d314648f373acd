//! Dense complex matrices, Hermitian operators and their spectral data.

use std::fmt;
use std::ops::Range;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QrError, Result};
use crate::interval::Interval;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Hermiticity tolerance, relative to the largest entry (floored at 1).
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues closer than this (relative to the spectral radius, floored at
/// 1) share an eigenspace.
pub const DEGENERACY_GAP: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-10;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// A square complex matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(CMatrix);

impl ComplexMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(QrError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(QrError::InvalidParameter("dimension must be positive".into()));
        }
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let z = m[(r, c)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(QrError::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(Self(m))
    }

    /// Build from separate real and imaginary row-major parts.
    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let n = re.len();
        if im.len() != n {
            return Err(QrError::DimensionMismatch(n, im.len()));
        }
        for (r, (a, b)) in re.iter().zip(im).enumerate() {
            if a.len() != n {
                return Err(QrError::Format(format!("re row {r} has {} entries, expected {n}", a.len())));
            }
            if b.len() != n {
                return Err(QrError::Format(format!("im row {r} has {} entries, expected {n}", b.len())));
            }
        }
        Self::new(CMatrix::from_fn(n, n, |r, c| Complex64::new(re[r][c], im[r][c])))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let zeros: Vec<Vec<f64>> = rows.iter().map(|r| vec![0.0; r.len()]).collect();
        Self::from_parts(rows, &zeros)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        max_abs(&(&self.0 - &other.0))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    /// Largest entry of `|A - A^H|`.
    pub fn hermitian_deviation(&self) -> f64 {
        max_abs(&(&self.0 - self.0.adjoint()))
    }

    pub fn unitary_deviation(&self) -> f64 {
        let n = self.dim();
        max_abs(&(self.0.adjoint() * &self.0 - CMatrix::identity(n, n)))
    }

    pub fn mul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(&self.0 * &other.0))
    }

    pub fn to_json(&self) -> OperatorJson {
        OperatorJson::from_matrix(&self.0)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix(dim={}){}", self.dim(), self.0)
    }
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(QrError::DimensionMismatch(a, b))
    }
}

/// `Re Tr(rho A)` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending, eigenvectors as
/// the columns of the returned matrix.
// entries this far below the scale underflow inside the rotations and
// poison the result with NaN
fn flush_tiny(m: &CMatrix) -> CMatrix {
    let floor = max_abs(m) * 1e-30;
    m.map(|z| if z.norm() < floor { ZERO } else { z })
}

pub(crate) fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = m.nrows();
    let max_iter = 1000 * n.max(1);
    let cleaned = flush_tiny(m);
    let fail = QrError::NoConvergence {
        dim: n,
        iterations: max_iter,
    };
    let eig = SymmetricEigen::try_new(cleaned, f64::EPSILON, max_iter).ok_or_else(|| fail.clone())?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(fail);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Rebuild `V diag(values) V^H`.
pub(crate) fn from_eigen(values: &[f64], vectors: &CMatrix) -> CMatrix {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (c, &v) in values.iter().enumerate() {
        scaled.column_mut(c).scale_mut(v);
    }
    let mut out = scaled * vectors.adjoint();
    // exact Hermitian symmetry
    for r in 0..n {
        out[(r, r)].im = 0.0;
    }
    hermitize(&out)
}

struct HermitianInner {
    matrix: ComplexMatrix,
    spectrum: OnceLock<SpectralDecomposition>,
}

/// A self-adjoint matrix. Cheap to clone; the spectral decomposition is
/// computed once on first use and shared between clones.
#[derive(Clone)]
pub struct HermitianOperator {
    inner: Arc<HermitianInner>,
}

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let scale = matrix.max_abs().max(1.0);
        let dev = matrix.hermitian_deviation();
        if dev > HERMITIAN_TOL * scale {
            return Err(QrError::NotHermitian(dev));
        }
        Ok(Self::from_hermitian_unchecked(hermitize(matrix.as_matrix())))
    }

    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        Self::new(ComplexMatrix::new(m)?)
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(ComplexMatrix::from_real_rows(rows)?)
    }

    pub(crate) fn from_hermitian_unchecked(m: CMatrix) -> Self {
        Self {
            inner: Arc::new(HermitianInner {
                matrix: ComplexMatrix(m),
                spectrum: OnceLock::new(),
            }),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_hermitian_unchecked(CMatrix::from_diagonal(&CVector::from_vec(v)))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_hermitian_unchecked(CMatrix::identity(dim, dim))
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_hermitian_unchecked(CMatrix::zeros(dim, dim))
    }

    /// `|v><v|` for a (not necessarily normalized) vector.
    pub fn projector_onto(v: &CVector) -> Self {
        let n = v.norm();
        let u = v.unscale(n);
        Self::from_hermitian_unchecked(hermitize(&(&u * u.adjoint())))
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    pub fn pauli_y() -> Self {
        Self::from_hermitian_unchecked(CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]))
    }

    pub fn pauli_z() -> Self {
        Self::diagonal(&[1.0, -1.0])
    }

    /// `sigma . u` for a 3-vector `u`.
    pub fn pauli_dot(u: [f64; 3]) -> Self {
        let m = Self::pauli_x().matrix().as_matrix().scale(u[0])
            + Self::pauli_y().matrix().as_matrix().scale(u[1])
            + Self::pauli_z().matrix().as_matrix().scale(u[2]);
        Self::from_hermitian_unchecked(m)
    }

    pub fn dim(&self) -> usize {
        self.inner.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.inner.matrix
    }

    pub(crate) fn raw(&self) -> &CMatrix {
        self.inner.matrix.as_matrix()
    }

    /// `Tr(rho A)` for a matrix `rho` of matching dimension.
    pub fn expectation(&self, rho: &ComplexMatrix) -> f64 {
        trace_product(rho.as_matrix(), self.raw())
    }

    pub fn spectrum(&self) -> Result<&SpectralDecomposition> {
        if let Some(s) = self.inner.spectrum.get() {
            return Ok(s);
        }
        let s = SpectralDecomposition::compute(self.raw())?;
        let _ = self.inner.spectrum.set(s);
        Ok(self.inner.spectrum.get().expect("spectrum just set"))
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_bounds(&self) -> Result<(f64, f64)> {
        let s = self.spectrum()?;
        Ok((s.eigenvalues[0], *s.eigenvalues.last().expect("nonempty spectrum")))
    }

    /// Operator norm, the largest `|lambda|`.
    pub fn op_norm(&self) -> Result<f64> {
        let (lo, hi) = self.eigen_bounds()?;
        Ok(lo.abs().max(hi.abs()))
    }

    /// Lipschitz constant of `rho -> Tr(rho A)` in trace distance: for a
    /// traceless difference `D`, `|Tr(D A)| <= ||D||_1 (lambda_max - lambda_min) / 2`.
    pub fn half_spread(&self) -> Result<f64> {
        let (lo, hi) = self.eigen_bounds()?;
        Ok(0.5 * (hi - lo))
    }

    pub fn add(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self::from_hermitian_unchecked(self.raw() + other.raw()))
    }

    pub fn sub(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self::from_hermitian_unchecked(self.raw() - other.raw()))
    }

    pub fn scale(&self, alpha: f64) -> HermitianOperator {
        Self::from_hermitian_unchecked(self.raw().scale(alpha))
    }

    /// `A^2`.
    pub fn square(&self) -> HermitianOperator {
        Self::from_hermitian_unchecked(hermitize(&(self.raw() * self.raw())))
    }

    /// Symmetrized product `(AB + BA)/2`.
    pub fn jordan_product(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        check_dims(self.dim(), other.dim())?;
        let ab = self.raw() * other.raw();
        Ok(Self::from_hermitian_unchecked(hermitize(&ab)))
    }

    /// `U A U^H`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<HermitianOperator> {
        check_dims(self.dim(), u.dim())?;
        let m = u.as_matrix() * self.raw() * u.as_matrix().adjoint();
        Ok(Self::from_hermitian_unchecked(hermitize(&m)))
    }

    pub fn is_projection(&self, tol: f64) -> bool {
        max_abs(&(self.raw() * self.raw() - self.raw())) <= tol
    }

    pub fn to_json(&self) -> OperatorJson {
        self.matrix().to_json()
    }
}

impl fmt::Debug for HermitianOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianOperator(dim={}){}", self.dim(), self.raw())
    }
}

impl PartialEq for HermitianOperator {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.raw() == other.raw()
    }
}

/// Eigenvalues with their eigenspaces.
///
/// `eigenvalues` are the distinct values, ascending, after merging values
/// closer than [`DEGENERACY_GAP`]. Each eigenspace is a block of consecutive
/// columns of `vectors`; projectors are formed on demand because a full set
/// for a large nondegenerate operator is `dim` dense matrices.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    groups: Vec<Range<usize>>,
    raw_values: Vec<f64>,
    vectors: CMatrix,
}

impl SpectralDecomposition {
    fn compute(m: &CMatrix) -> Result<Self> {
        let (raw_values, vectors) = hermitian_eigen(m)?;
        let scale = raw_values
            .iter()
            .fold(1.0f64, |acc, v| acc.max(v.abs()));
        let gap = DEGENERACY_GAP * scale;
        let mut groups: Vec<Range<usize>> = Vec::new();
        let mut start = 0;
        for i in 1..=raw_values.len() {
            if i == raw_values.len() || raw_values[i] - raw_values[i - 1] >= gap {
                groups.push(start..i);
                start = i;
            }
        }
        let eigenvalues = groups
            .iter()
            .map(|g| raw_values[g.clone()].iter().sum::<f64>() / g.len() as f64)
            .collect();
        Ok(Self {
            eigenvalues,
            groups,
            raw_values,
            vectors,
        })
    }

    /// Eigenvalues with multiplicity, ascending.
    pub fn raw_eigenvalues(&self) -> &[f64] {
        &self.raw_values
    }

    /// Orthonormal eigenvectors, one per column, ordered as
    /// [`raw_eigenvalues`](Self::raw_eigenvalues).
    pub fn eigenvectors(&self) -> &CMatrix {
        &self.vectors
    }

    /// Columns of [`eigenvectors`](Self::eigenvectors) spanning eigenspace `k`.
    pub fn eigenspace_columns(&self, k: usize) -> Range<usize> {
        self.groups[k].clone()
    }

    pub fn multiplicity(&self, k: usize) -> usize {
        self.groups[k].len()
    }

    /// Orthogonal projection onto eigenspace `k`.
    pub fn projector(&self, k: usize) -> HermitianOperator {
        self.projector_sum(std::iter::once(k))
    }

    pub fn projectors(&self) -> Vec<HermitianOperator> {
        (0..self.eigenvalues.len()).map(|k| self.projector(k)).collect()
    }

    fn projector_sum(&self, ks: impl Iterator<Item = usize>) -> HermitianOperator {
        let n = self.vectors.nrows();
        let cols: Vec<usize> = ks.flat_map(|k| self.groups[k].clone()).collect();
        if cols.is_empty() {
            return HermitianOperator::zero(n);
        }
        let v = self.vectors.select_columns(cols.iter());
        HermitianOperator::from_hermitian_unchecked(hermitize(&(&v * v.adjoint())))
    }

    /// `sum_i lambda_i P_i`.
    pub fn reconstruct(&self) -> CMatrix {
        let mut values = vec![0.0; self.raw_values.len()];
        for (k, g) in self.groups.iter().enumerate() {
            for i in g.clone() {
                values[i] = self.eigenvalues[k];
            }
        }
        from_eigen(&values, &self.vectors)
    }
}

/// Spectral decomposition of `A`, degenerate eigenvalues merged.
pub fn eig_decompose(a: &HermitianOperator) -> Result<SpectralDecomposition> {
    a.spectrum().cloned()
}

/// Projection onto the eigenspaces of `A` whose eigenvalue lies in the closed
/// interval `interval`; the zero operator when none does.
pub fn spectral_projection(a: &HermitianOperator, interval: &Interval) -> Result<HermitianOperator> {
    let s = a.spectrum()?;
    let inside = s
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| interval.contains(l))
        .map(|(k, _)| k);
    Ok(s.projector_sum(inside))
}

/// `C = -i[A, B]`, the Hermitian operator with `iC = [A, B]`.
pub fn commutator_hermitian(a: &HermitianOperator, b: &HermitianOperator) -> Result<HermitianOperator> {
    check_dims(a.dim(), b.dim())?;
    let ab = a.raw() * b.raw();
    let ba = b.raw() * a.raw();
    let c = (ab - ba) * (-I);
    Ok(HermitianOperator::from_hermitian_unchecked(hermitize(&c)))
}

/// Kronecker product `A (x) B`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix(a.as_matrix().kronecker(b.as_matrix()))
}

pub fn tensor_hermitian(a: &HermitianOperator, b: &HermitianOperator) -> HermitianOperator {
    HermitianOperator::from_hermitian_unchecked(a.raw().kronecker(b.raw()))
}

/// `Tr|T|`, the sum of singular values.
pub fn trace_norm(t: &ComplexMatrix) -> Result<f64> {
    let m = t.as_matrix();
    let scale = t.max_abs().max(1.0);
    if t.hermitian_deviation() <= HERMITIAN_TOL * scale {
        hermitian_trace_norm(&hermitize(m))
    } else {
        let svd = nalgebra::SVD::try_new(m.clone(), false, false, f64::EPSILON, 1000 * t.dim())
            .ok_or(QrError::NoConvergence {
                dim: t.dim(),
                iterations: 1000 * t.dim(),
            })?;
        Ok(svd.singular_values.iter().sum())
    }
}

pub(crate) fn hermitian_trace_norm(m: &CMatrix) -> Result<f64> {
    let values = flush_tiny(m).symmetric_eigenvalues();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QrError::NoConvergence {
            dim: m.nrows(),
            iterations: 0,
        });
    }
    Ok(values.iter().map(|v| v.abs()).sum())
}

/// Computational basis vector `|i>` in dimension `dim`.
pub fn basis_vector(dim: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[i] = ONE;
    v
}

/// Plain JSON form of an operator: `{"dim": n, "re": [[..]], "im": [[..]]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OperatorJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl OperatorJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let n = m.nrows();
        Self {
            dim: n,
            re: (0..n).map(|r| (0..n).map(|c| m[(r, c)].re).collect()).collect(),
            im: (0..n).map(|r| (0..n).map(|c| m[(r, c)].im).collect()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        if self.re.len() != self.dim {
            return Err(QrError::Format(format!(
                "field `re` has {} rows but dim is {}",
                self.re.len(),
                self.dim
            )));
        }
        if self.im.len() != self.dim {
            return Err(QrError::Format(format!(
                "field `im` has {} rows but dim is {}",
                self.im.len(),
                self.dim
            )));
        }
        ComplexMatrix::from_parts(&self.re, &self.im)
    }

    pub fn to_hermitian(&self) -> Result<HermitianOperator> {
        HermitianOperator::new(self.to_matrix()?)
    }
}
