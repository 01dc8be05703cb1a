//! Separable measurements: parties, product outcomes and completeness weights.
//!
//! Outcome operators are stored exactly as given; the multiplicities needed
//! for completeness live in a separate weight vector, so `Σ_j w_j Ô_j = I`.
//! A pair (operators, weights) is equivalent to the rescaled operators
//! `w_j Ô_j` with unit weights; every coefficient vector in this crate is
//! expressed against the unweighted `Ô_j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nnls::nnls;
use crate::operator::{self, HermitianOperator, OperatorBasis, OperatorError};
use crate::tolerance::Tolerances;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub name: String,
    pub dim: usize,
}

impl Party {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self { name: name.into(), dim }
    }
}

/// One product outcome: a local factor per party, in party order.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub label: String,
    pub factors: Vec<HermitianOperator>,
}

impl Outcome {
    pub fn new(label: impl Into<String>, factors: Vec<HermitianOperator>) -> Self {
        Self { label: label.into(), factors }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("a measurement needs at least two parties, got {0}")]
    TooFewParties(usize),
    #[error("duplicate party name {0:?}")]
    DuplicateParty(String),
    #[error("party {0:?} has dimension zero")]
    ZeroDim(String),
    #[error("every party has dimension 1")]
    AllTrivial,
    #[error("measurement has no outcomes")]
    NoOutcomes,
    #[error("duplicate outcome label {0:?}")]
    DuplicateLabel(String),
    #[error("outcome {outcome} has {got} factors, expected {want}")]
    FactorCount { outcome: usize, got: usize, want: usize },
    #[error("outcome {outcome}, party {party}: factor dimension {got}, expected {want}")]
    FactorDim { outcome: usize, party: usize, got: usize, want: usize },
    #[error("{got} weights for {want} outcomes")]
    WeightCount { got: usize, want: usize },
    #[error("no nonnegative weights complete the measurement (residual {residual:.3e})")]
    Incomplete { residual: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Clone, Debug)]
pub struct SeparableMeasurement {
    parties: Vec<Party>,
    outcomes: Vec<Outcome>,
    weights: Vec<f64>,
    products: Vec<HermitianOperator>,
}

impl SeparableMeasurement {
    /// Builds a measurement after structural checks. Missing weights are
    /// inferred by nonnegative least squares.
    pub fn new(
        parties: Vec<Party>,
        outcomes: Vec<Outcome>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self, MeasurementError> {
        if parties.len() < 2 {
            return Err(MeasurementError::TooFewParties(parties.len()));
        }
        for (i, p) in parties.iter().enumerate() {
            if p.dim == 0 {
                return Err(MeasurementError::ZeroDim(p.name.clone()));
            }
            if parties[..i].iter().any(|q| q.name == p.name) {
                return Err(MeasurementError::DuplicateParty(p.name.clone()));
            }
        }
        if parties.iter().all(|p| p.dim < 2) {
            return Err(MeasurementError::AllTrivial);
        }
        if outcomes.is_empty() {
            return Err(MeasurementError::NoOutcomes);
        }
        for (j, o) in outcomes.iter().enumerate() {
            if outcomes[..j].iter().any(|p| p.label == o.label) {
                return Err(MeasurementError::DuplicateLabel(o.label.clone()));
            }
            if o.factors.len() != parties.len() {
                return Err(MeasurementError::FactorCount {
                    outcome: j,
                    got: o.factors.len(),
                    want: parties.len(),
                });
            }
            for (k, (f, p)) in o.factors.iter().zip(&parties).enumerate() {
                if f.dim() != p.dim {
                    return Err(MeasurementError::FactorDim { outcome: j, party: k, got: f.dim(), want: p.dim });
                }
            }
        }
        let products = outcomes
            .iter()
            .map(|o| operator::tensor(&o.factors))
            .collect::<Result<Vec<_>, _>>()?;
        let weights = match weights {
            Some(w) => {
                if w.len() != outcomes.len() {
                    return Err(MeasurementError::WeightCount { got: w.len(), want: outcomes.len() });
                }
                w
            }
            None => infer_weights(&products, &Tolerances::default())?,
        };
        Ok(Self { parties, outcomes, weights, products })
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn num_parties(&self) -> usize {
        self.parties.len()
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn num_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dims(&self) -> Vec<usize> {
        self.parties.iter().map(|p| p.dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.parties.iter().map(|p| p.dim).product()
    }

    /// The product operator `Ô_j`.
    pub fn product(&self, j: usize) -> &HermitianOperator {
        &self.products[j]
    }

    pub fn products(&self) -> &[HermitianOperator] {
        &self.products
    }

    pub fn party_index(&self, name: &str) -> Option<usize> {
        self.parties.iter().position(|p| p.name == name)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o.label == label)
    }

    /// Local factors of `party` across all outcomes.
    pub fn local_factors(&self, party: usize) -> Vec<HermitianOperator> {
        self.outcomes.iter().map(|o| o.factors[party].clone()).collect()
    }

    /// Tensor product of every factor except `party`'s, in party order.
    pub fn complement_factor(&self, outcome: usize, party: usize) -> HermitianOperator {
        let others: Vec<HermitianOperator> = self.outcomes[outcome]
            .factors
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != party)
            .map(|(_, f)| f.clone())
            .collect();
        operator::tensor(&others).expect("at least two parties")
    }

    /// Dimension of the joint system of all parties except `party`.
    pub fn complement_dim(&self, party: usize) -> usize {
        self.parties
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != party)
            .map(|(_, p)| p.dim)
            .product()
    }

    /// `Σ_j w_j Ô_j`.
    pub fn weighted_sum(&self) -> HermitianOperator {
        HermitianOperator::combination(&self.products, &self.weights).expect("nonempty")
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(&Tolerances::default())
    }

    /// PSD of every local factor, nonnegative weights and completeness
    /// `Σ_j w_j Ô_j = I`.
    pub fn validate_with(&self, tol: &Tolerances) -> ValidationReport {
        let mut violations = Vec::new();
        for (j, o) in self.outcomes.iter().enumerate() {
            for (k, f) in o.factors.iter().enumerate() {
                if !operator::is_psd_with(f, tol) {
                    violations.push(Violation::NotPsd { outcome: j, party: k, min_eigenvalue: f.min_eigenvalue() });
                }
            }
        }
        for (j, &w) in self.weights.iter().enumerate() {
            if w < 0.0 || !w.is_finite() {
                violations.push(Violation::NegativeWeight { outcome: j, weight: w });
            }
        }
        if !self.weights.iter().any(|&w| w > 0.0) {
            violations.push(Violation::NoPositiveWeight);
        }
        let residual = self
            .weighted_sum()
            .max_abs_diff(&HermitianOperator::identity(self.total_dim()));
        if !(residual <= tol.residual) {
            violations.push(Violation::Incomplete { residual });
        }
        ValidationReport { violations, completeness_residual: residual }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NotPsd { outcome: usize, party: usize, min_eigenvalue: f64 },
    NegativeWeight { outcome: usize, weight: f64 },
    NoPositiveWeight,
    Incomplete { residual: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NotPsd { outcome, party, min_eigenvalue } => write!(
                f,
                "outcome {outcome}, party {party}: factor not PSD (min eigenvalue {min_eigenvalue:.3e})"
            ),
            Violation::NegativeWeight { outcome, weight } => {
                write!(f, "outcome {outcome}: negative weight {weight:.3e}")
            }
            Violation::NoPositiveWeight => write!(f, "no positive weight"),
            Violation::Incomplete { residual } => {
                write!(f, "weighted outcomes miss the identity by {residual:.3e}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub completeness_residual: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Nonnegative weights with `Σ_j w_j Ô_j = I`.
pub fn infer_weights(products: &[HermitianOperator], tol: &Tolerances) -> Result<Vec<f64>, MeasurementError> {
    let first = products.first().ok_or(MeasurementError::NoOutcomes)?;
    let d = first.dim();
    let a = operator::stack(products);
    let b = HermitianOperator::identity(d).real_vec();
    let sol = nnls(&a, &b);
    let w: Vec<f64> = sol.x.iter().map(|&x| if (-1e-10..0.0).contains(&x) { 0.0 } else { x }).collect();
    let recon = &a * DVector::from_column_slice(&w) - &b;
    let residual = HermitianOperator::from_real_vec(d, &recon).max_abs();
    if residual >= tol.residual || w.iter().any(|&x| x < 0.0) {
        return Err(MeasurementError::Incomplete { residual });
    }
    Ok(w)
}

/// Independent Hermitian basis of the span of `party`'s local factors.
pub fn local_span(m: &SeparableMeasurement, party: usize, tol: &Tolerances) -> Result<OperatorBasis, OperatorError> {
    OperatorBasis::spanning(&m.local_factors(party), tol)
}

/// Independent Hermitian basis of the span of the joint complement factors
/// (all parties other than `party`, treated as one system).
pub fn complement_span(
    m: &SeparableMeasurement,
    party: usize,
    tol: &Tolerances,
) -> Result<OperatorBasis, OperatorError> {
    let ops: Vec<HermitianOperator> = (0..m.num_outcomes()).map(|j| m.complement_factor(j, party)).collect();
    OperatorBasis::spanning(&ops, tol)
}

/// Matrix whose columns are the real coordinates of the outcome products.
pub fn product_stack(m: &SeparableMeasurement) -> DMatrix<f64> {
    operator::stack(m.products())
}
