//! Hermitian operator algebra: tensor products, Frobenius pairings, spans,
//! dual bases and positivity.
//!
//! Hermitian operators on a `d`-dimensional space are identified with real
//! vectors of length `d²` through an isometry (diagonal entries, then `√2`
//! times the real and imaginary parts of the strict upper triangle), so the
//! Frobenius pairing becomes the Euclidean dot product and every rank or
//! span question turns into a real SVD.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg;
use crate::tolerance::Tolerances;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has dimension zero")]
    Empty,
    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("empty operator list")]
    EmptyList,
    #[error("basis elements are linearly dependent (rank {rank} < {len})")]
    DependentBasis { rank: usize, len: usize },
    #[error("degenerate basis: Gram condition number {condition:.3e}")]
    DegenerateBasis { condition: f64 },
    #[error("Frobenius pairing has imaginary part {imag:.3e}")]
    ComplexPairing { imag: f64 },
    #[error("subsystem dimensions {dims:?} do not multiply to {dim}")]
    BadSubsystems { dims: Vec<usize>, dim: usize },
}

/// A finite-dimensional Hermitian matrix.
///
/// Construction symmetrizes the input after the Hermiticity check, so the
/// stored matrix equals its conjugate transpose exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    mat: CMatrix,
}

impl HermitianOperator {
    pub fn new(mat: CMatrix) -> Result<Self, OperatorError> {
        Self::with_tolerance(mat, Tolerances::default().hermitian)
    }

    pub fn with_tolerance(mat: CMatrix, tol_herm: f64) -> Result<Self, OperatorError> {
        let (rows, cols) = mat.shape();
        if rows != cols {
            return Err(OperatorError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(OperatorError::Empty);
        }
        let adj = mat.adjoint();
        let scale = mat.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let dev = (&mat - &adj).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let deviation = if scale > 0.0 { dev / scale } else { 0.0 };
        if deviation > tol_herm {
            return Err(OperatorError::NotHermitian { deviation });
        }
        Ok(Self { mat: (&mat + &adj).scale(0.5) })
    }

    /// Operator from a real symmetric matrix given row by row.
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self, OperatorError> {
        Self::new(CMatrix::from_row_iterator(dim, dim, entries.iter().map(|&x| C64::new(x, 0.0))))
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: CMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: CMatrix::zeros(dim, dim) }
    }

    /// Hermitian part `(M + M†)/2` of an arbitrary square matrix.
    pub fn hermitian_part(mat: &CMatrix) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "square matrix");
        Self { mat: (mat + mat.adjoint()).scale(0.5) }
    }

    /// Rank-1 projector onto the normalized `ket`.
    pub fn projector(ket: &[C64]) -> Self {
        let v = DVector::from_column_slice(ket);
        let n = v.norm();
        let v = v.unscale(n);
        let mat = &v * v.adjoint();
        Self { mat: (&mat + mat.adjoint()).scale(0.5) }
    }

    /// Projector onto a real ket.
    pub fn real_projector(ket: &[f64]) -> Self {
        let v: Vec<C64> = ket.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::projector(&v)
    }

    /// Projector onto the computational basis state `|k>` in dimension `dim`.
    pub fn basis_projector(dim: usize, k: usize) -> Self {
        let mut mat = CMatrix::zeros(dim, dim);
        mat[(k, k)] = C64::new(1.0, 0.0);
        Self { mat }
    }

    pub fn pauli_x() -> Self {
        Self::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn pauli_y() -> Self {
        let i = C64::new(0.0, 1.0);
        let z = C64::new(0.0, 0.0);
        Self::new(CMatrix::from_row_slice(2, 2, &[z, -i, i, z])).unwrap()
    }

    pub fn pauli_z() -> Self {
        Self::from_real(2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { mat: self.mat.map(|z| z * s) }
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max-norm distance between two operators of equal dimension.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        (&self.mat - &other.mat).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Isometric real coordinates (length `dim²`).
    pub fn real_vec(&self) -> DVector<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            out.push(self.mat[(i, i)].re);
        }
        let s = std::f64::consts::SQRT_2;
        for i in 0..d {
            for j in (i + 1)..d {
                let z = self.mat[(i, j)];
                out.push(s * z.re);
                out.push(s * z.im);
            }
        }
        DVector::from_vec(out)
    }

    /// Inverse of [`real_vec`](Self::real_vec).
    pub fn from_real_vec(dim: usize, v: &DVector<f64>) -> Self {
        assert_eq!(v.len(), dim * dim, "real vector length");
        let mut mat = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            mat[(i, i)] = C64::new(v[i], 0.0);
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut k = dim;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let z = C64::new(v[k] * s, v[k + 1] * s);
                mat[(i, j)] = z;
                mat[(j, i)] = z.conj();
                k += 2;
            }
        }
        Self { mat }
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.mat.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Linear combination `Σ coeffs_k · ops_k`.
    pub fn combination(ops: &[HermitianOperator], coeffs: &[f64]) -> Result<Self, OperatorError> {
        let first = ops.first().ok_or(OperatorError::EmptyList)?;
        let d = first.dim();
        let mut mat = CMatrix::zeros(d, d);
        for (op, &c) in ops.iter().zip(coeffs) {
            if op.dim() != d {
                return Err(OperatorError::DimensionMismatch { left: d, right: op.dim() });
            }
            if c != 0.0 {
                mat += op.mat.map(|z| z * c);
            }
        }
        Ok(Self { mat })
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: Self) -> HermitianOperator {
        HermitianOperator { mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: Self) -> HermitianOperator {
        HermitianOperator { mat: &self.mat - &rhs.mat }
    }
}

impl Add for HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: Self) -> HermitianOperator {
        &self + &rhs
    }
}

impl Sub for HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: Self) -> HermitianOperator {
        &self - &rhs
    }
}

impl AddAssign<&HermitianOperator> for HermitianOperator {
    fn add_assign(&mut self, rhs: &HermitianOperator) {
        self.mat += &rhs.mat;
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, s: f64) -> HermitianOperator {
        self.scaled(s)
    }
}

impl Mul<f64> for HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, s: f64) -> HermitianOperator {
        self.scaled(s)
    }
}

impl Neg for HermitianOperator {
    type Output = HermitianOperator;
    fn neg(self) -> HermitianOperator {
        self.scaled(-1.0)
    }
}

/// Kronecker product in the given party order.
pub fn tensor(factors: &[HermitianOperator]) -> Result<HermitianOperator, OperatorError> {
    let (first, rest) = factors.split_first().ok_or(OperatorError::EmptyList)?;
    let mut mat = first.mat.clone();
    for f in rest {
        mat = mat.kronecker(&f.mat);
    }
    Ok(HermitianOperator { mat })
}

/// `Tr[x† y]`, real for Hermitian inputs.
pub fn frobenius(x: &HermitianOperator, y: &HermitianOperator) -> Result<f64, OperatorError> {
    if x.dim() != y.dim() {
        return Err(OperatorError::DimensionMismatch { left: x.dim(), right: y.dim() });
    }
    let z: C64 = x.mat.iter().zip(y.mat.iter()).map(|(a, b)| a.conj() * b).sum();
    let scale = 1.0_f64.max(z.re.abs());
    if z.im.abs() > 1e-10 * scale {
        return Err(OperatorError::ComplexPairing { imag: z.im });
    }
    Ok(z.re)
}

/// Real matrix whose columns are the isometric coordinates of `ops`.
pub fn stack(ops: &[HermitianOperator]) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = ops.iter().map(HermitianOperator::real_vec).collect();
    if cols.is_empty() {
        return DMatrix::zeros(0, 0);
    }
    DMatrix::from_columns(&cols)
}

/// Indices of a maximal linearly independent subset, chosen greedily in input
/// order.
///
/// The threshold is fixed once from the full stack, `max(rows, cols) · σ_max ·
/// rank_rel`, and each candidate is kept when it raises the rank of the
/// selection so far.
pub fn independent_subset(ops: &[HermitianOperator], tol: &Tolerances) -> Vec<usize> {
    if ops.is_empty() {
        return Vec::new();
    }
    let d = ops[0].dim();
    assert!(ops.iter().all(|o| o.dim() == d), "independent_subset: mixed dimensions");
    let full = stack(ops);
    let smax = linalg::singular_values(&full).first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Vec::new();
    }
    let threshold = tol.rank_threshold(full.nrows(), full.ncols(), smax);

    let mut chosen: Vec<usize> = Vec::new();
    let mut rank = 0;
    for i in 0..ops.len() {
        let mut cols: Vec<DVector<f64>> = chosen.iter().map(|&k| full.column(k).into_owned()).collect();
        cols.push(full.column(i).into_owned());
        let m = DMatrix::from_columns(&cols);
        let r = linalg::singular_values(&m).iter().filter(|&&s| s > threshold).count();
        if r > rank {
            rank = r;
            chosen.push(i);
        }
    }
    chosen
}

/// An ordered, linearly independent list of Hermitian operators of one
/// dimension, with its Frobenius Gram matrix.
#[derive(Clone, Debug)]
pub struct OperatorBasis {
    elements: Vec<HermitianOperator>,
    gram: DMatrix<f64>,
}

impl OperatorBasis {
    pub fn new(elements: Vec<HermitianOperator>, tol: &Tolerances) -> Result<Self, OperatorError> {
        let first = elements.first().ok_or(OperatorError::EmptyList)?;
        let d = first.dim();
        if let Some(bad) = elements.iter().find(|e| e.dim() != d) {
            return Err(OperatorError::DimensionMismatch { left: d, right: bad.dim() });
        }
        let kept = independent_subset(&elements, tol);
        if kept.len() != elements.len() {
            return Err(OperatorError::DependentBasis { rank: kept.len(), len: elements.len() });
        }
        let s = stack(&elements);
        let gram = s.transpose() * &s;
        Ok(Self { elements, gram })
    }

    /// Basis of the span of `ops`, keeping a greedy independent subset.
    pub fn spanning(ops: &[HermitianOperator], tol: &Tolerances) -> Result<Self, OperatorError> {
        let idx = independent_subset(ops, tol);
        Self::new(idx.into_iter().map(|i| ops[i].clone()).collect(), tol)
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Hilbert-space dimension the elements act on.
    pub fn space_dim(&self) -> usize {
        self.elements[0].dim()
    }

    /// Orthogonal projection of `x` onto the span, and the max-norm residual.
    pub fn project(&self, x: &HermitianOperator) -> (HermitianOperator, f64) {
        let s = stack(&self.elements);
        let v = x.real_vec();
        let rhs = s.transpose() * &v;
        let coeffs = self
            .gram
            .clone()
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(self.len()));
        let proj = HermitianOperator::combination(&self.elements, coeffs.as_slice())
            .expect("basis is nonempty");
        let resid = proj.max_abs_diff(x);
        (proj, resid)
    }
}

/// The dual basis `{Y_k}` in the same span with `Tr[Y_k† X_j] = δ_jk`.
pub fn dual_basis(basis: &OperatorBasis, tol: &Tolerances) -> Result<OperatorBasis, OperatorError> {
    let sv = linalg::singular_values(basis.gram());
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > tol.max_condition {
        return Err(OperatorError::DegenerateBasis { condition });
    }
    // Duals are the columns of (S⁺)ᵀ = U Σ⁻¹ Vᵀ for the coordinate stack S; going
    // through the SVD of S avoids squaring its condition number.
    let d = basis.space_dim();
    let svd = stack(basis.elements()).svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_inv = DMatrix::from_diagonal(&svd.singular_values.map(|x| 1.0 / x));
    let coords = u * sigma_inv * v_t;
    let duals: Vec<HermitianOperator> = coords
        .column_iter()
        .map(|c| HermitianOperator::from_real_vec(d, &c.into_owned()))
        .collect();
    let s = stack(&duals);
    let gram = s.transpose() * &s;
    Ok(OperatorBasis { elements: duals, gram })
}

/// Smallest eigenvalue is at least `-tol_psd · max(1, |λ|_max)`.
pub fn is_psd(x: &HermitianOperator) -> bool {
    is_psd_with(x, &Tolerances::default())
}

pub fn is_psd_with(x: &HermitianOperator, tol: &Tolerances) -> bool {
    let ev = x.eigenvalues();
    let lmax = ev.iter().map(|l| l.abs()).fold(0.0, f64::max);
    ev[0] >= -tol.psd * lmax.max(1.0)
}

/// Reorder the tensor factors of `mat` so that subsystem `order[k]` of the
/// input becomes subsystem `k` of the output.
pub fn permute_subsystems(mat: &CMatrix, dims: &[usize], order: &[usize]) -> Result<CMatrix, OperatorError> {
    let total: usize = dims.iter().product();
    if total != mat.nrows() || mat.nrows() != mat.ncols() || order.len() != dims.len() {
        return Err(OperatorError::BadSubsystems { dims: dims.to_vec(), dim: mat.nrows() });
    }
    let new_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let index_map: Vec<usize> = (0..total)
        .map(|new_idx| {
            let digits = split_index(new_idx, &new_dims);
            let mut old_digits = vec![0; dims.len()];
            for (k, &src) in order.iter().enumerate() {
                old_digits[src] = digits[k];
            }
            join_index(&old_digits, dims)
        })
        .collect();
    Ok(CMatrix::from_fn(total, total, |r, c| mat[(index_map[r], index_map[c])]))
}

/// Partial trace keeping the subsystems listed in `keep` (in their original
/// relative order).
pub fn partial_trace(mat: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix, OperatorError> {
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep_sorted.contains(k)).collect();
    let mut order = keep_sorted.clone();
    order.extend(&traced);
    let permuted = permute_subsystems(mat, dims, &order)?;
    let dk: usize = keep_sorted.iter().map(|&k| dims[k]).product();
    let dt: usize = traced.iter().map(|&k| dims[k]).product();
    Ok(CMatrix::from_fn(dk, dk, |a, b| {
        (0..dt).map(|x| permuted[(a * dt + x, b * dt + x)]).sum()
    }))
}

fn split_index(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
    out
}

fn join_index(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ket0() -> HermitianOperator {
        HermitianOperator::basis_projector(2, 0)
    }

    fn plus() -> HermitianOperator {
        HermitianOperator::real_projector(&[1.0, 1.0])
    }

    fn random_herm(d: usize, vals: &[f64]) -> HermitianOperator {
        let mut m = CMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            m[(i, i)] = C64::new(vals[k], 0.0);
            k += 1;
            for j in (i + 1)..d {
                let z = C64::new(vals[k], vals[k + 1]);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
                k += 2;
            }
        }
        HermitianOperator::new(m).unwrap()
    }

    #[test]
    fn tensor_of_rank_one_projectors() {
        let t = tensor(&[ket0(), ket0()]).unwrap();
        assert_eq!(t.dim(), 4);
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == 0 && c == 0 { 1.0 } else { 0.0 };
                assert_eq!(t.matrix()[(r, c)], C64::new(want, 0.0));
            }
        }
        let id = tensor(&[HermitianOperator::identity(2), HermitianOperator::identity(2)]).unwrap();
        assert_eq!(id, HermitianOperator::identity(4));
    }

    #[test]
    fn tensor_zero_with_plus() {
        let t = tensor(&[ket0(), plus()]).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let want = if r < 2 && c < 2 { 0.5 } else { 0.0 };
                assert!((t.matrix()[(r, c)] - C64::new(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn tensor_rejects_empty() {
        assert_eq!(tensor(&[]), Err(OperatorError::EmptyList));
    }

    #[test]
    fn frobenius_paulis() {
        let z = HermitianOperator::pauli_z();
        let x = HermitianOperator::pauli_x();
        assert_eq!(frobenius(&z, &z).unwrap(), 2.0);
        assert_eq!(frobenius(&z, &x).unwrap(), 0.0);
        assert_eq!(frobenius(&ket0(), &HermitianOperator::identity(2)).unwrap(), 1.0);
        assert!(matches!(
            frobenius(&z, &HermitianOperator::identity(3)),
            Err(OperatorError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        assert!(matches!(HermitianOperator::new(m), Err(OperatorError::NotHermitian { .. })));
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(HermitianOperator::new(rect), Err(OperatorError::NotSquare { .. })));
    }

    #[test]
    fn independent_subset_drops_sum() {
        let i = HermitianOperator::identity(2);
        let z = HermitianOperator::pauli_z();
        let s = &i + &z;
        assert_eq!(independent_subset(&[i, z, s], &Tolerances::default()), vec![0, 1]);
    }

    #[test]
    fn independent_subset_all_zero() {
        let zero = HermitianOperator::zeros(3);
        assert!(independent_subset(&[zero.clone(), zero], &Tolerances::default()).is_empty());
    }

    #[test]
    fn twenty_random_qutrit_operators_span_nine_dims() {
        // The real dimension of 3x3 Hermitian matrices is 9.
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let ops: Vec<_> = (0..20)
            .map(|_| {
                let v: Vec<f64> = (0..9).map(|_| next()).collect();
                random_herm(3, &v)
            })
            .collect();
        assert_eq!(independent_subset(&ops, &Tolerances::default()).len(), 9);
    }

    #[test]
    fn dual_of_orthogonal_paulis() {
        let tol = Tolerances::default();
        let b = OperatorBasis::new(
            vec![HermitianOperator::identity(2), HermitianOperator::pauli_z(), HermitianOperator::pauli_x()],
            &tol,
        )
        .unwrap();
        let d = dual_basis(&b, &tol).unwrap();
        for (dual, orig) in d.elements().iter().zip(b.elements()) {
            assert!(dual.max_abs_diff(&orig.scaled(0.5)) < 1e-14);
        }
    }

    #[test]
    fn orthonormal_basis_is_self_dual() {
        let tol = Tolerances::default();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = OperatorBasis::new(
            vec![
                HermitianOperator::identity(2).scaled(s),
                HermitianOperator::pauli_x().scaled(s),
                HermitianOperator::pauli_y().scaled(s),
                HermitianOperator::pauli_z().scaled(s),
            ],
            &tol,
        )
        .unwrap();
        let d = dual_basis(&b, &tol).unwrap();
        for (dual, orig) in d.elements().iter().zip(b.elements()) {
            assert!(dual.max_abs_diff(orig) < 1e-14);
        }
    }

    #[test]
    fn dual_of_identity_and_ket0() {
        // Gram [[2,1],[1,1]] has inverse [[1,-1],[-1,2]]: duals are [1] and σz.
        let tol = Tolerances::default();
        let b = OperatorBasis::new(vec![HermitianOperator::identity(2), ket0()], &tol).unwrap();
        let d = dual_basis(&b, &tol).unwrap();
        assert!(d.elements()[0].max_abs_diff(&HermitianOperator::basis_projector(2, 1)) < 1e-14);
        assert!(d.elements()[1].max_abs_diff(&HermitianOperator::pauli_z()) < 1e-14);
        for (k, y) in d.elements().iter().enumerate() {
            for (j, x) in b.elements().iter().enumerate() {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((frobenius(y, x).unwrap() - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dual_rejects_ill_conditioned() {
        let tol = Tolerances::default();
        let z = HermitianOperator::pauli_z();
        let almost = &z + &HermitianOperator::pauli_x().scaled(1e-8);
        let b = OperatorBasis::new(vec![z, almost], &tol).unwrap();
        assert!(matches!(dual_basis(&b, &tol), Err(OperatorError::DegenerateBasis { .. })));
    }

    #[test]
    fn dependent_basis_rejected() {
        let tol = Tolerances::default();
        let z = HermitianOperator::pauli_z();
        assert!(matches!(
            OperatorBasis::new(vec![z.clone(), z.scaled(2.0)], &tol),
            Err(OperatorError::DependentBasis { .. })
        ));
    }

    #[test]
    fn psd_checks() {
        assert!(is_psd(&ket0()));
        assert!(!is_psd(&HermitianOperator::pauli_z()));
        assert!(is_psd(&HermitianOperator::zeros(2)));
    }

    #[test]
    fn real_vec_is_an_isometry() {
        let a = random_herm(3, &[0.3, 0.1, -0.2, 0.7, 0.4, 0.5, -0.6, 0.2, 0.9]);
        let b = random_herm(3, &[-0.1, 0.8, 0.3, 0.2, -0.5, 0.6, 0.1, -0.4, 0.25]);
        let dot = a.real_vec().dot(&b.real_vec());
        assert!((dot - frobenius(&a, &b).unwrap()).abs() < 1e-14);
        let back = HermitianOperator::from_real_vec(3, &a.real_vec());
        assert!(back.max_abs_diff(&a) < 1e-15);
    }

    #[test]
    fn partial_trace_of_product() {
        let a = random_herm(2, &[0.3, 0.1, -0.2, 0.7]);
        let b = random_herm(3, &[1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 3.0]);
        let ab = tensor(&[a.clone(), b.clone()]).unwrap();
        let ta = partial_trace(ab.matrix(), &[2, 3], &[0]).unwrap();
        let expect = a.matrix().map(|z| z * b.trace());
        assert!((ta - expect).iter().all(|z| z.norm() < 1e-14));
        let swapped = permute_subsystems(ab.matrix(), &[2, 3], &[1, 0]).unwrap();
        let ba = tensor(&[b, a]).unwrap();
        assert!((swapped - ba.matrix()).iter().all(|z| z.norm() < 1e-15));
    }

    fn small_int_herm(d: usize) -> impl Strategy<Value = HermitianOperator> {
        prop::collection::vec(-3i32..=3, d * d).prop_map(move |v| {
            let f: Vec<f64> = v.into_iter().map(f64::from).collect();
            random_herm(d, &f)
        })
    }

    fn real_herm(d: usize) -> impl Strategy<Value = HermitianOperator> {
        prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| random_herm(d, &v))
    }

    proptest! {
        #[test]
        fn tensor_is_associative(a in small_int_herm(2), b in small_int_herm(3), c in small_int_herm(2)) {
            let left = tensor(&[tensor(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
            let right = tensor(&[a.clone(), tensor(&[b.clone(), c.clone()]).unwrap()]).unwrap();
            let flat = tensor(&[a, b, c]).unwrap();
            prop_assert_eq!(&left, &right);
            prop_assert_eq!(&left, &flat);
        }

        #[test]
        fn frobenius_self_is_nonnegative(x in real_herm(3)) {
            prop_assert!(frobenius(&x, &x).unwrap() >= 0.0);
        }

        #[test]
        fn dual_of_dual_recovers_basis(ops in prop::collection::vec(real_herm(2), 1..5)) {
            let tol = Tolerances::default();
            let basis = match OperatorBasis::spanning(&ops, &tol) {
                Ok(b) => b,
                Err(_) => return Ok(()),
            };
            let dual = match dual_basis(&basis, &tol) {
                Ok(d) => d,
                Err(_) => return Ok(()),
            };
            let sv = linalg::singular_values(basis.gram());
            prop_assume!(sv.last().copied().unwrap_or(0.0) > 1e-6 * sv[0]);
            let back = dual_basis(&dual, &tol).unwrap();
            for (x, y) in back.elements().iter().zip(basis.elements()) {
                prop_assert!(x.max_abs_diff(y) < 1e-8, "diff {:e} cond {:e}", x.max_abs_diff(y), sv[0] / sv.last().unwrap());
            }
            for (k, y) in dual.elements().iter().enumerate() {
                for (j, x) in basis.elements().iter().enumerate() {
                    let want = if j == k { 1.0 } else { 0.0 };
                    prop_assert!((frobenius(y, x).unwrap() - want).abs() < 1e-9);
                }
            }
        }
    }
}
