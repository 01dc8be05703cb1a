//! Independent validation of protocol trees and simulation of their outcome
//! statistics.
//!
//! Node operators are rebuilt from coefficient vectors and checked with
//! partial traces only; nothing here goes through the Q-matrix machinery.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::SeparableMeasurement;
use crate::operator::{self, CMatrix, HermitianOperator, C64};
use crate::tolerance::Tolerances;
use crate::tree::{path_string, ProtocolNode, ProtocolTree};

/// Failures are capped so a badly broken tree does not flood the report.
const MAX_LISTED: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructuralError {
    #[error("{path}: {got} coefficients, measurement has {want} outcomes")]
    CoeffLength { path: String, got: usize, want: usize },
    #[error("{path}: party index {party} out of range")]
    BadParty { path: String, party: usize },
    #[error("root must not name a measuring party")]
    RootHasParty,
    #[error("{path}: non-root node without a measuring party")]
    MissingParty { path: String },
    #[error("{path}: children of one node name different parties")]
    MixedSiblings { path: String },
    #[error("{path}: leaf has children")]
    LeafWithChildren { path: String },
    #[error("{path}: internal node has {count} children, need at least 2")]
    TooFewChildren { path: String, count: usize },
    #[error("{path}: leaf outcome {outcome} out of range")]
    BadOutcome { path: String, outcome: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub passed: bool,
    pub worst_residual: f64,
    /// Offending node paths with their residuals.
    pub failures: Vec<String>,
}

impl CheckResult {
    fn new() -> Self {
        Self { passed: true, worst_residual: 0.0, failures: Vec::new() }
    }

    fn record(&mut self, path: &[usize], residual: f64, limit: f64) {
        let residual = if residual.is_nan() { f64::INFINITY } else { residual };
        self.worst_residual = self.worst_residual.max(residual);
        if residual > limit {
            self.passed = false;
            if self.failures.len() < MAX_LISTED {
                self.failures.push(format!("{} ({residual:.3e})", path_string(path)));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Every internal node equals the sum of its children.
    pub node_sum: CheckResult,
    /// Every node operator is a product across parties.
    pub product_structure: CheckResult,
    /// Along every edge only the measuring party's factor changes.
    pub single_party_change: CheckResult,
    /// Leaves equal `scale · Ô_j` with a positive scale.
    pub leaf_matching: CheckResult,
    /// The root is the identity.
    pub root_completeness: CheckResult,
    /// Every node operator is positive semidefinite.
    pub positivity: CheckResult,
    /// Every node equals the sum of its descendant leaves.
    pub descendant_leaves: CheckResult,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed)
    }

    pub fn checks(&self) -> [(&'static str, &CheckResult); 7] {
        [
            ("node-sum", &self.node_sum),
            ("product-structure", &self.product_structure),
            ("single-party-change", &self.single_party_change),
            ("leaf-matching", &self.leaf_matching),
            ("root-completeness", &self.root_completeness),
            ("positivity", &self.positivity),
            ("descendant-leaves", &self.descendant_leaves),
        ]
    }
}

fn check_structure(node: &ProtocolNode, m: &SeparableMeasurement, path: &mut Vec<usize>) -> Result<(), StructuralError> {
    let p = || path_string(path);
    if node.coeffs.len() != m.num_outcomes() {
        return Err(StructuralError::CoeffLength { path: p(), got: node.coeffs.len(), want: m.num_outcomes() });
    }
    match (path.is_empty(), node.party) {
        (true, Some(_)) => return Err(StructuralError::RootHasParty),
        (false, None) => return Err(StructuralError::MissingParty { path: p() }),
        (_, Some(party)) if party >= m.num_parties() => return Err(StructuralError::BadParty { path: p(), party }),
        _ => {}
    }
    if let Some(leaf) = &node.leaf {
        if !node.children.is_empty() {
            return Err(StructuralError::LeafWithChildren { path: p() });
        }
        if leaf.outcome >= m.num_outcomes() {
            return Err(StructuralError::BadOutcome { path: p(), outcome: leaf.outcome });
        }
        return Ok(());
    }
    if node.children.len() < 2 {
        return Err(StructuralError::TooFewChildren { path: p(), count: node.children.len() });
    }
    let first = node.children[0].party;
    if node.children.iter().any(|c| c.party != first) {
        return Err(StructuralError::MixedSiblings { path: p() });
    }
    for (i, c) in node.children.iter().enumerate() {
        path.push(i);
        check_structure(c, m, path)?;
        path.pop();
    }
    Ok(())
}

struct Verifier<'a> {
    m: &'a SeparableMeasurement,
    products: Vec<HermitianOperator>,
    dims: Vec<usize>,
    tol: Tolerances,
    report: VerificationReport,
}

impl Verifier<'_> {
    fn operator(&self, coeffs: &[f64]) -> HermitianOperator {
        HermitianOperator::combination(&self.products, coeffs).expect("nonempty outcome list")
    }

    /// Local marginals `Tr_{¬k} X` for every party.
    fn marginals(&self, x: &HermitianOperator) -> Vec<CMatrix> {
        (0..self.dims.len())
            .map(|k| operator::partial_trace(x.matrix(), &self.dims, &[k]).expect("dims multiply to total"))
            .collect()
    }

    fn product_residual(&self, x: &HermitianOperator, marginals: &[CMatrix]) -> f64 {
        let t = x.trace();
        if t.abs() < 1e-300 {
            return x.max_abs();
        }
        let mut prod = marginals[0].clone();
        for mk in &marginals[1..] {
            prod = prod.kronecker(mk);
        }
        let scale = t.powi(self.dims.len() as i32 - 1);
        prod.iter().zip(x.matrix().iter()).map(|(a, b)| (a / scale - b).norm()).fold(0.0, f64::max)
    }

    /// Returns the operator of `node` and the sum of its descendant leaves.
    fn visit(
        &mut self,
        node: &ProtocolNode,
        parent: Option<(&HermitianOperator, &[CMatrix])>,
        path: &mut Vec<usize>,
    ) -> (HermitianOperator, HermitianOperator) {
        let r = self.tol.residual;
        let x = self.operator(&node.coeffs);
        let marg = self.marginals(&x);

        self.report.product_structure.record(path, self.product_residual(&x, &marg), r);
        let lmin = x.min_eigenvalue();
        let lmax = x.eigenvalues().iter().map(|l| l.abs()).fold(1.0, f64::max);
        self.report.positivity.record(path, (-lmin).max(0.0), self.tol.psd * lmax);

        if let (Some((px, pm)), Some(party)) = (parent, node.party) {
            let (tc, tp) = (x.trace(), px.trace());
            let mut worst: f64 = 0.0;
            for k in (0..self.dims.len()).filter(|&k| k != party) {
                let d = if tc.abs() < 1e-300 || tp.abs() < 1e-300 {
                    f64::INFINITY
                } else {
                    (&marg[k] / C64::new(tc, 0.0) - &pm[k] / C64::new(tp, 0.0))
                        .iter()
                        .map(|z| z.norm())
                        .fold(0.0, f64::max)
                };
                worst = worst.max(d);
            }
            self.report.single_party_change.record(path, worst, r);
        }

        let leaf_sum = if let Some(leaf) = &node.leaf {
            let target = self.products[leaf.outcome].scaled(leaf.scale);
            let res = if leaf.scale > 0.0 { x.max_abs_diff(&target) } else { f64::INFINITY };
            self.report.leaf_matching.record(path, res, r);
            target
        } else {
            let mut child_sum = HermitianOperator::zeros(x.dim());
            let mut leaf_sum = HermitianOperator::zeros(x.dim());
            for (i, c) in node.children.iter().enumerate() {
                path.push(i);
                let (cx, cl) = self.visit(c, Some((&x, &marg)), path);
                path.pop();
                child_sum += &cx;
                leaf_sum += &cl;
            }
            self.report.node_sum.record(path, child_sum.max_abs_diff(&x), r);
            leaf_sum
        };
        self.report.descendant_leaves.record(path, leaf_sum.max_abs_diff(&x), r);
        (x, leaf_sum)
    }
}

/// Checks a tree against a measurement. Structural problems are errors; all
/// numerical checks are reported with their worst residual.
pub fn verify_tree(
    tree: &ProtocolTree,
    m: &SeparableMeasurement,
    tol: &Tolerances,
) -> Result<VerificationReport, StructuralError> {
    check_structure(&tree.root, m, &mut Vec::new())?;
    let products = m
        .outcomes()
        .iter()
        .map(|o| operator::tensor(&o.factors).expect("at least one factor"))
        .collect();
    let mut v = Verifier {
        m,
        products,
        dims: m.dims(),
        tol: *tol,
        report: VerificationReport {
            node_sum: CheckResult::new(),
            product_structure: CheckResult::new(),
            single_party_change: CheckResult::new(),
            leaf_matching: CheckResult::new(),
            root_completeness: CheckResult::new(),
            positivity: CheckResult::new(),
            descendant_leaves: CheckResult::new(),
        },
    };
    let (root, _) = v.visit(&tree.root, None, &mut Vec::new());
    let id = HermitianOperator::identity(v.m.total_dim());
    v.report.root_completeness.record(&[], root.max_abs_diff(&id), tol.residual);
    Ok(v.report)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("state is {rows}x{cols}, expected {want}x{want}")]
    Shape { rows: usize, cols: usize, want: usize },
    #[error("state is not Hermitian")]
    NotHermitian,
    #[error("state is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("state has trace {0}, expected 1")]
    NotNormalized(f64),
    #[error(transparent)]
    Structure(#[from] StructuralError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafProbability {
    pub path: String,
    pub outcome: usize,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbability {
    pub outcome: usize,
    /// Sum of the leaf probabilities for this outcome.
    pub from_leaves: f64,
    /// `w_j Tr[Ô_j ρ]`.
    pub direct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub leaves: Vec<LeafProbability>,
    pub outcomes: Vec<OutcomeProbability>,
    pub total: f64,
    pub max_difference: f64,
    pub trials: u64,
    /// Sampled counts per leaf, in leaf order.
    pub counts: Vec<u64>,
}

fn collect_leaf_nodes<'a>(node: &'a ProtocolNode, path: &mut Vec<usize>, out: &mut Vec<(String, &'a ProtocolNode)>) {
    if node.leaf.is_some() {
        out.push((path_string(path), node));
    }
    for (i, c) in node.children.iter().enumerate() {
        path.push(i);
        collect_leaf_nodes(c, path, out);
        path.pop();
    }
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s.re
}

/// Exact leaf probabilities `Tr[N_leaf ρ]`, their aggregation by outcome
/// against the direct POVM probabilities, and `trials` multinomial samples.
pub fn simulate(
    tree: &ProtocolTree,
    m: &SeparableMeasurement,
    rho: &CMatrix,
    trials: u64,
    seed: u64,
) -> Result<SimulationReport, SimulationError> {
    let d = m.total_dim();
    if rho.nrows() != d || rho.ncols() != d {
        return Err(SimulationError::Shape { rows: rho.nrows(), cols: rho.ncols(), want: d });
    }
    let state = HermitianOperator::new(rho.clone()).map_err(|_| SimulationError::NotHermitian)?;
    let tr = state.trace();
    if (tr - 1.0).abs() > 1e-9 {
        return Err(SimulationError::NotNormalized(tr));
    }
    let lmin = state.min_eigenvalue();
    if lmin < -1e-9 {
        return Err(SimulationError::NotPsd(lmin));
    }
    check_structure(&tree.root, m, &mut Vec::new())?;

    let products: Vec<HermitianOperator> = m
        .outcomes()
        .iter()
        .map(|o| operator::tensor(&o.factors).expect("at least one factor"))
        .collect();
    let mut leaf_nodes = Vec::new();
    collect_leaf_nodes(&tree.root, &mut Vec::new(), &mut leaf_nodes);

    let mut leaves = Vec::new();
    let mut from_leaves = vec![0.0; m.num_outcomes()];
    for (path, node) in &leaf_nodes {
        let n = HermitianOperator::combination(&products, &node.coeffs).expect("nonempty");
        let p = trace_product(n.matrix(), state.matrix());
        let outcome = node.leaf.as_ref().expect("leaf node").outcome;
        from_leaves[outcome] += p;
        leaves.push(LeafProbability { path: path.clone(), outcome, probability: p });
    }
    let outcomes: Vec<OutcomeProbability> = (0..m.num_outcomes())
        .map(|j| OutcomeProbability {
            outcome: j,
            from_leaves: from_leaves[j],
            direct: m.weights()[j] * trace_product(products[j].matrix(), state.matrix()),
        })
        .collect();
    let total = leaves.iter().map(|l| l.probability).sum();
    let max_difference = outcomes.iter().map(|o| (o.from_leaves - o.direct).abs()).fold(0.0, f64::max);

    let mut counts = vec![0u64; leaves.len()];
    if trials > 0 && !leaves.is_empty() {
        let w: Vec<f64> = leaves.iter().map(|l| l.probability.max(0.0)).collect();
        if let Ok(dist) = WeightedIndex::new(&w) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..trials {
                counts[dist.sample(&mut rng)] += 1;
            }
        }
    }
    Ok(SimulationReport { leaves, outcomes, total, max_difference, trials, counts })
}

/// `G G† / Tr[G G†]` for a standard complex Gaussian `G`.
pub fn random_density_matrix<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    });
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    let rho = rho / tr;
    // Exact Hermiticity after rounding.
    (&rho + rho.adjoint()) * C64::new(0.5, 0.0)
}

/// [`random_density_matrix`] driven by a ChaCha8 stream seeded with `seed`.
pub fn seeded_density_matrix(dim: usize, seed: u64) -> CMatrix {
    random_density_matrix(dim, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn maximally_mixed(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::tree::Leaf;

    fn unit(n: usize, j: usize, s: f64) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[j] = s;
        v
    }

    /// Alice measures {[0], [1]}, then Bob measures in the matching basis.
    fn qubit_pair_tree() -> ProtocolTree {
        let leaf = |j: usize| ProtocolNode::leaf(unit(4, j, 1.0), Some(1), Leaf { outcome: j, scale: 1.0 });
        let a0 = ProtocolNode { coeffs: vec![1.0, 1.0, 0.0, 0.0], party: Some(0), leaf: None, children: vec![leaf(0), leaf(1)] };
        let a1 = ProtocolNode { coeffs: vec![0.0, 0.0, 1.0, 1.0], party: Some(0), leaf: None, children: vec![leaf(2), leaf(3)] };
        ProtocolTree { root: ProtocolNode { coeffs: vec![1.0; 4], party: None, leaf: None, children: vec![a0, a1] } }
    }

    #[test]
    fn hand_tree_passes() {
        let m = catalog::qubit_pair();
        let rep = verify_tree(&qubit_pair_tree(), &m, &Tolerances::default()).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.node_sum.worst_residual < 1e-12);
    }

    #[test]
    fn perturbed_leaf_fails_node_sum() {
        let m = catalog::qubit_pair();
        let mut t = qubit_pair_tree();
        let leaf = t.root.at_mut(&[0, 0]).unwrap();
        leaf.coeffs[0] += 1e-3;
        leaf.leaf.as_mut().unwrap().scale += 1e-3;
        let rep = verify_tree(&t, &m, &Tolerances::default()).unwrap();
        assert!(!rep.node_sum.passed);
        assert!((rep.node_sum.worst_residual - 1e-3).abs() < 1e-12);
        assert!(rep.leaf_matching.passed);
        assert!(!rep.passed());
    }

    #[test]
    fn wrong_party_order_breaks_single_party_change() {
        // Claiming Bob produced Alice's split.
        let m = catalog::qubit_pair();
        let mut t = qubit_pair_tree();
        for c in &mut t.root.children {
            c.party = Some(1);
            for g in &mut c.children {
                g.party = Some(0);
            }
        }
        let rep = verify_tree(&t, &m, &Tolerances::default()).unwrap();
        assert!(!rep.single_party_change.passed);
    }

    #[test]
    fn entangled_node_breaks_product_structure() {
        // (1,1,1,1) split into (1,0,0,1) + (0,1,1,0) is not a product split.
        let m = catalog::qubit_pair();
        let leaf = |j: usize| ProtocolNode::leaf(unit(4, j, 1.0), Some(1), Leaf { outcome: j, scale: 1.0 });
        let x = ProtocolNode { coeffs: vec![1.0, 0.0, 0.0, 1.0], party: Some(0), leaf: None, children: vec![leaf(0), leaf(3)] };
        let y = ProtocolNode { coeffs: vec![0.0, 1.0, 1.0, 0.0], party: Some(0), leaf: None, children: vec![leaf(1), leaf(2)] };
        let t = ProtocolTree { root: ProtocolNode { coeffs: vec![1.0; 4], party: None, leaf: None, children: vec![x, y] } };
        let rep = verify_tree(&t, &m, &Tolerances::default()).unwrap();
        assert!(!rep.product_structure.passed);
        assert!(rep.node_sum.passed && rep.root_completeness.passed);
    }

    #[test]
    fn structural_errors_name_the_node() {
        let m = catalog::qubit_pair();
        let mut t = qubit_pair_tree();
        t.root.at_mut(&[0, 1]).unwrap().coeffs.pop();
        let err = verify_tree(&t, &m, &Tolerances::default()).unwrap_err();
        assert_eq!(err, StructuralError::CoeffLength { path: "root/0/1".into(), got: 3, want: 4 });

        let mut t = qubit_pair_tree();
        t.root.children[1].children.pop();
        assert!(matches!(
            verify_tree(&t, &m, &Tolerances::default()),
            Err(StructuralError::TooFewChildren { count: 1, .. })
        ));

        let mut t = qubit_pair_tree();
        t.root.party = Some(0);
        assert_eq!(verify_tree(&t, &m, &Tolerances::default()), Err(StructuralError::RootHasParty));
    }

    #[test]
    fn simulate_maximally_mixed() {
        let m = catalog::qubit_pair();
        let rep = simulate(&qubit_pair_tree(), &m, &maximally_mixed(4), 1000, 7).unwrap();
        for l in &rep.leaves {
            assert!((l.probability - 0.25).abs() < 1e-15);
        }
        assert!((rep.total - 1.0).abs() < 1e-12);
        assert_eq!(rep.counts.iter().sum::<u64>(), 1000);
        let again = simulate(&qubit_pair_tree(), &m, &maximally_mixed(4), 1000, 7).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn simulate_random_states() {
        let m = catalog::qubit_pair();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let rho = random_density_matrix(4, &mut rng);
            let rep = simulate(&qubit_pair_tree(), &m, &rho, 0, 0).unwrap();
            assert!((rep.total - 1.0).abs() < 1e-9);
            assert!(rep.max_difference < 1e-8);
        }
    }

    #[test]
    fn simulate_rejects_bad_states() {
        let m = catalog::qubit_pair();
        let t = qubit_pair_tree();
        let unnorm = CMatrix::identity(4, 4);
        assert!(matches!(simulate(&t, &m, &unnorm, 0, 0), Err(SimulationError::NotNormalized(_))));
        let mut neg = maximally_mixed(4);
        neg[(0, 0)] = C64::new(-0.25, 0.0);
        neg[(1, 1)] = C64::new(0.75, 0.0);
        assert!(matches!(simulate(&t, &m, &neg, 0, 0), Err(SimulationError::NotPsd(_))));
        assert!(matches!(simulate(&t, &m, &maximally_mixed(2), 0, 0), Err(SimulationError::Shape { .. })));
    }
}
