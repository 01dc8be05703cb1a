//! Synthesis and refutation of LOCC protocols for separable multipartite
//! measurements.
//!
//! The pipeline: local and complement operator spans, dual bases, the
//! Q-matrix of a node, its nullspace and the extreme rays of the feasible
//! cone, then a depth-first search over ray decompositions.

pub mod catalog;
pub mod cone;
pub mod engine;
pub mod feasibility;
pub mod io;
pub mod linalg;
pub mod measurement;
mod nnls;
pub mod operator;
pub mod tolerance;
pub mod tree;
pub mod verifier;

pub use engine::{synthesize, Certificate, SearchOptions, Verdict};
pub use feasibility::{FeasibleCone, NodeContext};
pub use measurement::{Outcome, Party, SeparableMeasurement};
pub use operator::{HermitianOperator, OperatorBasis};
pub use tolerance::Tolerances;
pub use tree::{Leaf, ProtocolNode, ProtocolTree};
