//! JSON formats for measurements, protocol trees and certificates.
//!
//! Complex matrices are written as arrays of rows, each row an array of
//! `[re, im]` pairs. A flat row-major array of `d²` pairs is accepted on input.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::engine::Certificate;
use crate::measurement::{MeasurementError, Outcome, Party, SeparableMeasurement, Violation};
use crate::operator::{CMatrix, HermitianOperator, OperatorError, C64};
use crate::tolerance::Tolerances;
use crate::tree::{Leaf, ProtocolNode, ProtocolTree};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid JSON at line {line}, column {column} (field `{field}`): {message}")]
    Json { line: usize, column: usize, field: String, message: String },
    #[error("outcome {outcome:?}, factor {factor}: {message}")]
    Matrix { outcome: String, factor: usize, message: String },
    #[error("{0}")]
    BadMatrix(String),
    #[error("either every outcome carries a weight or none does")]
    MixedWeights,
    #[error("unknown party {0:?}")]
    UnknownParty(String),
    #[error("unknown outcome label {0:?}")]
    UnknownOutcome(String),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error("measurement fails validation: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// `[[re, im], ...]` rows, or a flat row-major list of pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixRecord {
    Rows(Vec<Vec<[f64; 2]>>),
    Flat(Vec<[f64; 2]>),
}

impl MatrixRecord {
    pub fn from_matrix(m: &CMatrix) -> Self {
        MatrixRecord::Rows(
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|k| [m[(i, k)].re, m[(i, k)].im]).collect()).collect(),
        )
    }

    pub fn to_matrix(&self) -> Result<CMatrix, String> {
        let (d, flat): (usize, Vec<[f64; 2]>) = match self {
            MatrixRecord::Rows(rows) => {
                let d = rows.len();
                if let Some(bad) = rows.iter().find(|r| r.len() != d) {
                    return Err(format!("{d} rows but a row of length {}", bad.len()));
                }
                (d, rows.iter().flatten().copied().collect())
            }
            MatrixRecord::Flat(v) => {
                let d = (v.len() as f64).sqrt().round() as usize;
                if d * d != v.len() {
                    return Err(format!("{} entries is not a square count", v.len()));
                }
                (d, v.clone())
            }
        };
        if d == 0 {
            return Err("empty matrix".into());
        }
        Ok(CMatrix::from_row_iterator(d, d, flat.into_iter().map(|[re, im]| C64::new(re, im))))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyRecord {
    pub name: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeRecord {
    pub label: String,
    pub factors: Vec<MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementFile {
    pub parties: Vec<PartyRecord>,
    pub outcomes: Vec<OutcomeRecord>,
}

impl MeasurementFile {
    pub fn from_measurement(m: &SeparableMeasurement) -> Self {
        Self {
            parties: m.parties().iter().map(|p| PartyRecord { name: p.name.clone(), dim: p.dim }).collect(),
            outcomes: m
                .outcomes()
                .iter()
                .zip(m.weights())
                .map(|(o, &w)| OutcomeRecord {
                    label: o.label.clone(),
                    factors: o.factors.iter().map(|f| MatrixRecord::from_matrix(f.matrix())).collect(),
                    weight: Some(w),
                })
                .collect(),
        }
    }

    /// Structural conversion; missing weights are inferred. Positivity and
    /// completeness are left to [`SeparableMeasurement::validate`].
    pub fn to_measurement(&self, tol: &Tolerances) -> Result<SeparableMeasurement, IoError> {
        let parties = self.parties.iter().map(|p| Party::new(p.name.clone(), p.dim)).collect();
        let mut outcomes = Vec::with_capacity(self.outcomes.len());
        for o in &self.outcomes {
            let mut factors = Vec::with_capacity(o.factors.len());
            for (k, f) in o.factors.iter().enumerate() {
                let err = |message: String| IoError::Matrix { outcome: o.label.clone(), factor: k, message };
                let mat = f.to_matrix().map_err(err)?;
                let op = HermitianOperator::with_tolerance(mat, tol.hermitian)
                    .map_err(|e: OperatorError| err(e.to_string()))?;
                factors.push(op);
            }
            outcomes.push(Outcome::new(o.label.clone(), factors));
        }
        let given: Vec<f64> = self.outcomes.iter().filter_map(|o| o.weight).collect();
        let weights = if given.is_empty() {
            None
        } else if given.len() == self.outcomes.len() {
            Some(given)
        } else {
            return Err(IoError::MixedWeights);
        };
        Ok(SeparableMeasurement::new(parties, outcomes, weights)?)
    }
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        IoError::Json { line: inner.line(), column: inner.column(), field, message: inner.to_string() }
    })
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::Read { path: path.to_path_buf(), message: e.to_string() })
}

pub fn parse_measurement_file(text: &str) -> Result<MeasurementFile, IoError> {
    parse(text)
}

/// Parses, builds and validates a measurement.
pub fn measurement_from_str(text: &str, tol: &Tolerances) -> Result<SeparableMeasurement, IoError> {
    let m = parse_measurement_file(text)?.to_measurement(tol)?;
    let report = m.validate_with(tol);
    if !report.is_valid() {
        return Err(IoError::Invalid(report.violations));
    }
    Ok(m)
}

pub fn load_measurement(path: &Path, tol: &Tolerances) -> Result<SeparableMeasurement, IoError> {
    measurement_from_str(&read(path)?, tol)
}

pub fn measurement_to_string(m: &SeparableMeasurement) -> String {
    serde_json::to_string_pretty(&MeasurementFile::from_measurement(m)).expect("serializable")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafRecord {
    pub outcome: String,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub party: Option<String>,
    pub coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf: Option<LeafRecord>,
    #[serde(default)]
    pub children: Vec<NodeRecord>,
}

/// Where the measurement of a protocol file lives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasurementRef {
    Path(String),
    Inline(MeasurementFile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolFile {
    pub measurement_ref: MeasurementRef,
    pub root: NodeRecord,
}

pub fn node_record(node: &ProtocolNode, m: &SeparableMeasurement) -> NodeRecord {
    NodeRecord {
        party: node.party.map(|p| m.parties()[p].name.clone()),
        coeffs: node.coeffs.clone(),
        leaf: node
            .leaf
            .as_ref()
            .map(|l| LeafRecord { outcome: m.outcomes()[l.outcome].label.clone(), scale: l.scale }),
        children: node.children.iter().map(|c| node_record(c, m)).collect(),
    }
}

pub fn node_from_record(rec: &NodeRecord, m: &SeparableMeasurement) -> Result<ProtocolNode, IoError> {
    let party = match &rec.party {
        None => None,
        Some(name) => Some(m.party_index(name).ok_or_else(|| IoError::UnknownParty(name.clone()))?),
    };
    let leaf = match &rec.leaf {
        None => None,
        Some(l) => Some(Leaf {
            outcome: m.label_index(&l.outcome).ok_or_else(|| IoError::UnknownOutcome(l.outcome.clone()))?,
            scale: l.scale,
        }),
    };
    let children = rec.children.iter().map(|c| node_from_record(c, m)).collect::<Result<_, _>>()?;
    Ok(ProtocolNode { coeffs: rec.coeffs.clone(), party, leaf, children })
}

impl ProtocolFile {
    pub fn new(tree: &ProtocolTree, m: &SeparableMeasurement, measurement_ref: MeasurementRef) -> Self {
        Self { measurement_ref, root: node_record(&tree.root, m) }
    }

    pub fn tree(&self, m: &SeparableMeasurement) -> Result<ProtocolTree, IoError> {
        Ok(ProtocolTree { root: node_from_record(&self.root, m)? })
    }

    /// Loads the referenced measurement; relative paths are resolved against
    /// `base` (normally the protocol file's directory).
    pub fn measurement(&self, base: &Path, tol: &Tolerances) -> Result<SeparableMeasurement, IoError> {
        match &self.measurement_ref {
            MeasurementRef::Path(p) => {
                let p = Path::new(p);
                let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
                load_measurement(&full, tol)
            }
            MeasurementRef::Inline(f) => {
                let m = f.to_measurement(tol)?;
                let report = m.validate_with(tol);
                if !report.is_valid() {
                    return Err(IoError::Invalid(report.violations));
                }
                Ok(m)
            }
        }
    }
}

pub fn parse_protocol_file(text: &str) -> Result<ProtocolFile, IoError> {
    parse(text)
}

pub fn load_protocol_file(path: &Path) -> Result<ProtocolFile, IoError> {
    parse_protocol_file(&read(path)?)
}

pub fn parse_state(text: &str) -> Result<CMatrix, IoError> {
    let rec: MatrixRecord = parse(text)?;
    rec.to_matrix().map_err(IoError::BadMatrix)
}

/// JSON view of a certificate with party and outcome names.
pub fn certificate_json(cert: &Certificate, m: &SeparableMeasurement) -> Value {
    let name = |p: usize| m.parties()[p].name.clone();
    let root_dims: serde_json::Map<String, Value> =
        cert.root.iter().map(|c| (name(c.party), json!(c.nullspace_dim))).collect();
    let root: Vec<Value> = cert
        .root
        .iter()
        .map(|c| {
            json!({
                "party": name(c.party),
                "nullspace_dim": c.nullspace_dim,
                "extreme_rays": c.extreme_rays,
                "singular_values": c.singular_values,
                "rank_threshold": c.threshold,
                "marginal": c.marginal,
            })
        })
        .collect();
    json!({
        "verdict": cert.verdict,
        "root_dims": root_dims,
        "root": root,
        "rounds": cert.tree.as_ref().map(|t| t.rounds()),
        "tree": cert.tree.as_ref().map(|t| node_record(&t.root, m)),
        "verification": cert.verification,
        "stats": cert.stats,
        "options": cert.options,
        "warnings": cert.warnings,
    })
}
