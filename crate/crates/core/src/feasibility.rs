//! Q-matrices for a node and a measuring party, their nullspaces, and the
//! reconstruction / factorization of node operators.
//!
//! For party `α` at a node whose other-party factor is `Ā`, a coefficient
//! vector `c` is feasible when `Σ_j c_j Ô_j = A′ ⊗ Ā` for some `A′`. Expanding
//! in a basis of `S_α` and a basis of `S_ᾱ` whose first element is `Ā` (the
//! rest orthogonal to it), the coefficients on every pair with a non-`Ā`
//! complement element must vanish. Those coefficients are the rows of `Q`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone;
use crate::linalg;
use crate::measurement::{self, SeparableMeasurement};
use crate::operator::{self, CMatrix, HermitianOperator, OperatorBasis, OperatorError, C64};
use crate::tolerance::Tolerances;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("node factor for the other parties is outside their span (residual {residual:.3e})")]
    InconsistentNode { residual: f64 },
    #[error("operator is not of the form A' ⊗ Ā (residual {residual:.3e})")]
    NotProduct { residual: f64 },
    #[error("{got} coefficients for {want} outcomes")]
    LengthMismatch { got: usize, want: usize },
    #[error("party index {0} out of range")]
    BadParty(usize),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// A node of the search seen from the party about to measure.
#[derive(Clone, Debug)]
pub struct NodeContext<'m> {
    pub measurement: &'m SeparableMeasurement,
    pub acting_party: usize,
    /// Node coefficient vector against the unweighted outcome products.
    pub coeffs: Vec<f64>,
    /// Joint factor of all other parties, in party order.
    pub abar: HermitianOperator,
}

impl<'m> NodeContext<'m> {
    /// The root: coefficients are the completeness weights, `Ā` is the
    /// identity.
    pub fn root(measurement: &'m SeparableMeasurement, party: usize) -> Self {
        Self {
            measurement,
            acting_party: party,
            coeffs: measurement.weights().to_vec(),
            abar: HermitianOperator::identity(measurement.complement_dim(party)),
        }
    }
}

/// Feasible outcomes for one party at one node.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeasibleCone {
    pub party: usize,
    #[serde(skip)]
    pub qmatrix: DMatrix<f64>,
    /// Orthonormal nullspace vectors.
    pub nullspace_basis: Vec<Vec<f64>>,
    pub nullspace_dim: usize,
    /// Nonnegative, L1-normalized, sorted.
    pub extreme_rays: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub marginal: bool,
    /// Distance from the parent coefficients to the nullspace (max norm).
    pub parent_residual: f64,
}

impl FeasibleCone {
    /// Largest `|Q v|` over nullspace basis vectors and extreme rays.
    pub fn q_residual(&self) -> f64 {
        self.nullspace_basis
            .iter()
            .chain(&self.extreme_rays)
            .map(|v| (&self.qmatrix * DVector::from_column_slice(v)).amax())
            .fold(0.0, f64::max)
    }

    pub fn rays(&self) -> Vec<DVector<f64>> {
        self.extreme_rays.iter().map(|r| DVector::from_column_slice(r)).collect()
    }
}

fn check_context(ctx: &NodeContext<'_>) -> Result<(), FeasibilityError> {
    let m = ctx.measurement;
    if ctx.acting_party >= m.num_parties() {
        return Err(FeasibilityError::BadParty(ctx.acting_party));
    }
    if ctx.coeffs.len() != m.num_outcomes() {
        return Err(FeasibilityError::LengthMismatch { got: ctx.coeffs.len(), want: m.num_outcomes() });
    }
    let want = m.complement_dim(ctx.acting_party);
    if ctx.abar.dim() != want {
        return Err(OperatorError::DimensionMismatch { left: ctx.abar.dim(), right: want }.into());
    }
    Ok(())
}

/// Q-matrix using the default spanning bases of `S_α` and `S_ᾱ`.
pub fn build_q(ctx: &NodeContext<'_>, tol: &Tolerances) -> Result<DMatrix<f64>, FeasibilityError> {
    check_context(ctx)?;
    let local = measurement::local_span(ctx.measurement, ctx.acting_party, tol)?;
    let complement = measurement::complement_span(ctx.measurement, ctx.acting_party, tol)?;
    build_q_with_bases(ctx, &local, &complement, tol)
}

/// Q-matrix from caller-chosen bases of `S_α` and `S_ᾱ`.
///
/// The complement basis is completed against `Ā`: `Ā` goes first and every
/// other element has its `Ā` component removed. Of the complement duals, the
/// one paired with `Ā` is dropped; the rest are orthogonal to `Ā`.
pub fn build_q_with_bases(
    ctx: &NodeContext<'_>,
    local: &OperatorBasis,
    complement: &OperatorBasis,
    tol: &Tolerances,
) -> Result<DMatrix<f64>, FeasibilityError> {
    check_context(ctx)?;
    let m = ctx.measurement;
    let party = ctx.acting_party;
    let n = m.num_outcomes();

    let (_, residual) = complement.project(&ctx.abar);
    let abar_norm = operator::frobenius(&ctx.abar, &ctx.abar)?.sqrt();
    if abar_norm == 0.0 || residual > tol.residual * ctx.abar.max_abs().max(1.0) {
        return Err(FeasibilityError::InconsistentNode { residual });
    }
    let abar_n = ctx.abar.scaled(1.0 / abar_norm);

    let mut candidates = vec![abar_n.clone()];
    for y in complement.elements() {
        let along = operator::frobenius(&abar_n, y)?;
        candidates.push(y - &abar_n.scaled(along));
    }
    let keep = operator::independent_subset(&candidates, tol);
    debug_assert_eq!(keep.first(), Some(&0));
    let completed = OperatorBasis::new(keep.into_iter().map(|i| candidates[i].clone()).collect(), tol)?;

    let local_dual = operator::dual_basis(local, tol)?;
    let comp_dual = operator::dual_basis(&completed, tol)?;

    let local_factors = m.local_factors(party);
    let comp_factors: Vec<HermitianOperator> = (0..n).map(|j| m.complement_factor(j, party)).collect();

    let mut l = DMatrix::<f64>::zeros(local_dual.len(), n);
    for (a, x) in local_dual.elements().iter().enumerate() {
        for (j, f) in local_factors.iter().enumerate() {
            l[(a, j)] = operator::frobenius(x, f)?;
        }
    }
    let retained = &comp_dual.elements()[1..];
    let mut r = DMatrix::<f64>::zeros(retained.len(), n);
    for (i, y) in retained.iter().enumerate() {
        for (j, f) in comp_factors.iter().enumerate() {
            r[(i, j)] = operator::frobenius(y, f)?;
        }
    }

    let mut rows: Vec<DVector<f64>> = Vec::new();
    for a in 0..l.nrows() {
        for i in 0..r.nrows() {
            rows.push(DVector::from_fn(n, |j, _| l[(a, j)] * r[(i, j)]));
        }
    }
    let qmax = rows.iter().map(|v| v.amax()).fold(0.0, f64::max);
    let rows: Vec<_> = rows
        .into_iter()
        .filter(|v| v.amax() > 1e-14 * qmax)
        .map(|v| v.transpose())
        .collect();
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, n));
    }
    Ok(DMatrix::from_rows(&rows))
}

/// Nullspace and extreme rays of the Q-matrix at `ctx`.
pub fn feasible_cone(ctx: &NodeContext<'_>, tol: &Tolerances) -> Result<FeasibleCone, FeasibilityError> {
    let q = build_q(ctx, tol)?;
    Ok(cone_from_q(ctx.acting_party, q, &ctx.coeffs, tol))
}

pub(crate) fn cone_from_q(party: usize, q: DMatrix<f64>, coeffs: &[f64], tol: &Tolerances) -> FeasibleCone {
    let ns = linalg::nullspace(&q, tol);
    let rays = cone::extreme_rays_of_nullspace(&ns.basis);
    let c = DVector::from_column_slice(coeffs);
    let proj = &ns.basis * (ns.basis.transpose() * &c);
    let parent_residual = (proj - &c).amax();
    FeasibleCone {
        party,
        nullspace_basis: ns.basis.column_iter().map(|v| v.iter().copied().collect()).collect(),
        nullspace_dim: ns.dim(),
        extreme_rays: rays.into_iter().map(|r| r.iter().copied().collect()).collect(),
        singular_values: ns.singular_values,
        threshold: ns.threshold,
        marginal: ns.marginal,
        parent_residual,
        qmatrix: q,
    }
}

/// `Σ_j c_j Ô_j`.
pub fn reconstruct(m: &SeparableMeasurement, c: &[f64]) -> Result<HermitianOperator, FeasibilityError> {
    if c.len() != m.num_outcomes() {
        return Err(FeasibilityError::LengthMismatch { got: c.len(), want: m.num_outcomes() });
    }
    Ok(HermitianOperator::combination(m.products(), c)?)
}

/// Finds `A′` with `op = A′ ⊗ Ā`, where `A′` sits at position `party` of the
/// subsystem order `dims` and `Ā` is the joint factor of the others.
pub fn factorize(
    op: &HermitianOperator,
    dims: &[usize],
    party: usize,
    abar: &HermitianOperator,
    tol: &Tolerances,
) -> Result<HermitianOperator, FeasibilityError> {
    if party >= dims.len() {
        return Err(FeasibilityError::BadParty(party));
    }
    let da = dims[party];
    let dc = op.dim() / da.max(1);
    if abar.dim() != dc || da * dc != op.dim() {
        return Err(OperatorError::DimensionMismatch { left: abar.dim(), right: dc }.into());
    }
    let mut order = vec![party];
    order.extend((0..dims.len()).filter(|&k| k != party));
    let perm = operator::permute_subsystems(op.matrix(), dims, &order)?;

    let abar_sq = operator::frobenius(abar, abar)?;
    if abar_sq == 0.0 {
        return Err(FeasibilityError::NotProduct { residual: op.max_abs() });
    }
    let b = abar.matrix();
    let mut a = CMatrix::zeros(da, da);
    for i in 0..da {
        for k in 0..da {
            let mut s = C64::new(0.0, 0.0);
            for x in 0..dc {
                for y in 0..dc {
                    s += b[(x, y)].conj() * perm[(i * dc + x, k * dc + y)];
                }
            }
            a[(i, k)] = s / abar_sq;
        }
    }
    let a = HermitianOperator::hermitian_part(&a);
    let rebuilt = a.matrix().kronecker(b);
    let residual = (rebuilt - perm).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if residual > tol.residual * op.max_abs().max(1.0) {
        return Err(FeasibilityError::NotProduct { residual });
    }
    Ok(a)
}
