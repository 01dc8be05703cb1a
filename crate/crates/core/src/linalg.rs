//! Real linear-algebra helpers: SVD-based rank and nullspace decisions.

use nalgebra::{DMatrix, DVector};

use crate::tolerance::Tolerances;

/// Orthonormal nullspace basis of a real matrix together with the evidence
/// behind the rank decision.
#[derive(Clone, Debug)]
pub struct Nullspace {
    /// Columns form an orthonormal basis of the nullspace.
    pub basis: DMatrix<f64>,
    /// All singular values, descending, padded with zeros to the column count.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    /// Some singular value sits within a factor of 10 of the threshold.
    pub marginal: bool,
}

impl Nullspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank of `m` under the shared rank threshold.
pub fn rank(m: &DMatrix<f64>, tol: &Tolerances) -> usize {
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    let thr = tol.rank_threshold(m.nrows(), m.ncols(), smax);
    sv.iter().filter(|&&s| s > thr && s > 0.0).count()
}

/// Nullspace of `q` by singular-value thresholding.
///
/// A matrix with no rows (or only zero entries) has the full space as its
/// nullspace.
pub fn nullspace(q: &DMatrix<f64>, tol: &Tolerances) -> Nullspace {
    let n = q.ncols();
    let rows = q.nrows();
    // Pad with zero rows so the SVD yields a full set of right singular vectors.
    let padded = if rows < n {
        let mut p = DMatrix::<f64>::zeros(n, n);
        p.view_mut((0, 0), (rows, n)).copy_from(q);
        p
    } else {
        q.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = sv.first().copied().unwrap_or(0.0);
    let threshold = tol.rank_threshold(rows, n, smax);

    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut marginal = false;
    for (k, &i) in order.iter().enumerate() {
        let s = sv[k];
        if tol.is_marginal(s, threshold) {
            marginal = true;
        }
        if s <= threshold {
            cols.push(v_t.row(i).transpose());
        }
    }
    let basis = if cols.is_empty() {
        DMatrix::<f64>::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Nullspace { basis, singular_values: sv, threshold, marginal }
}

/// Orthogonal projector onto the column span of `basis`.
pub fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_of_wide_matrix() {
        let q = DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.0]);
        let ns = nullspace(&q, &Tolerances::default());
        assert_eq!(ns.dim(), 2);
        assert!((&q * &ns.basis).abs().max() < 1e-14);
    }

    #[test]
    fn zero_matrix_has_full_nullspace() {
        let q = DMatrix::<f64>::zeros(2, 4);
        assert_eq!(nullspace(&q, &Tolerances::default()).dim(), 4);
        let empty = DMatrix::<f64>::zeros(0, 3);
        assert_eq!(nullspace(&empty, &Tolerances::default()).dim(), 3);
    }

    #[test]
    fn rank_ignores_roundoff() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0 + 1e-15, 3.0, 6.0]);
        assert_eq!(rank(&m, &Tolerances::default()), 1);
    }
}
