//! Depth-first search for LOCC protocol trees.
//!
//! At every node each eligible party's feasible cone is computed, the node's
//! coefficient vector is split over extreme rays, and every child must in turn
//! be resolved into leaves. A party whose cone is one-dimensional cannot move,
//! and a node where no party can move is a dead end.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone;
use crate::feasibility::{self, FeasibilityError, FeasibleCone, NodeContext};
use crate::measurement::SeparableMeasurement;
use crate::operator::{self, HermitianOperator};
use crate::tolerance::Tolerances;
use crate::tree::{Leaf, ProtocolNode, ProtocolTree};
use crate::verifier::{self, VerificationReport};

pub const DEFAULT_MAX_ROUNDS: usize = 8;
pub const DEFAULT_MAX_SUPPORT: usize = 6;
/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "LOCC_FORGE_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    ProtocolFound,
    ImpossibleAtRoot,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::ProtocolFound => "PROTOCOL_FOUND",
            Verdict::ImpossibleAtRoot => "IMPOSSIBLE_AT_ROOT",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("max_rounds must be at least 1")]
    ZeroRounds,
    #[error("measurement is invalid: {0}")]
    InvalidMeasurement(String),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub max_rounds: usize,
    pub max_support: usize,
    pub tolerances: Tolerances,
    /// Worker threads; falls back to `LOCC_FORGE_THREADS`, then rayon's default.
    pub threads: Option<usize>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
            max_support: DEFAULT_MAX_SUPPORT,
            tolerances: Tolerances::default(),
            threads: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes_expanded: usize,
    pub cones_evaluated: usize,
    pub dead_ends: usize,
    pub memo_hits: usize,
    /// Branches cut because the round budget ran out.
    pub round_limit_hits: usize,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub tree: Option<ProtocolTree>,
    /// Root cone of every party, in party order.
    pub root: Vec<FeasibleCone>,
    pub verification: Option<VerificationReport>,
    pub stats: SearchStats,
    pub options: SearchOptions,
    pub warnings: Vec<String>,
}

impl Certificate {
    pub fn root_dims(&self) -> Vec<usize> {
        self.root.iter().map(|c| c.nullspace_dim).collect()
    }
}

impl PartialEq for FeasibleCone {
    fn eq(&self, other: &Self) -> bool {
        self.party == other.party
            && self.nullspace_dim == other.nullspace_dim
            && self.extreme_rays == other.extreme_rays
            && self.nullspace_basis == other.nullspace_basis
    }
}

/// `P · (P − 1)^(r − 1)`: party orderings over `r` rounds when nobody measures
/// twice in a row.
pub fn ordering_bound(parties: usize, rounds: usize) -> u128 {
    if parties == 0 || rounds == 0 {
        return 0;
    }
    let mut n = parties as u128;
    for _ in 1..rounds {
        n = n.saturating_mul(parties as u128 - 1);
    }
    n
}

/// Root cone of every party.
pub fn check_root(m: &SeparableMeasurement, tol: &Tolerances) -> Result<Vec<FeasibleCone>, FeasibilityError> {
    (0..m.num_parties()).map(|p| feasibility::feasible_cone(&NodeContext::root(m, p), tol)).collect()
}

fn thread_count(opt: Option<usize>) -> usize {
    opt.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or(0)
}

/// Searches for a protocol tree of at most `max_rounds` measurement rounds.
pub fn synthesize(m: &SeparableMeasurement, opts: &SearchOptions) -> Result<Certificate, EngineError> {
    if opts.max_rounds == 0 {
        return Err(EngineError::ZeroRounds);
    }
    let tol = &opts.tolerances;
    let validation = m.validate_with(tol);
    if !validation.is_valid() {
        let msgs: Vec<String> = validation.violations.iter().map(ToString::to_string).collect();
        return Err(EngineError::InvalidMeasurement(msgs.join("; ")));
    }
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(opts.threads))
        .build()
        .expect("thread pool");

    let root = pool.install(|| {
        (0..m.num_parties())
            .into_par_iter()
            .map(|p| feasibility::feasible_cone(&NodeContext::root(m, p), tol))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut warnings = Vec::new();
    for c in &root {
        if c.marginal {
            warnings.push(format!(
                "marginal rank decision at the root for party {}: a singular value lies within 10x of the threshold {:.3e}",
                m.parties()[c.party].name,
                c.threshold
            ));
        }
    }

    let mut cert = Certificate {
        verdict: Verdict::Inconclusive,
        tree: None,
        root,
        verification: None,
        stats: SearchStats::default(),
        options: *opts,
        warnings,
    };

    if cert.root.iter().all(|c| c.nullspace_dim == 1) {
        // The only root cone element is the weights vector itself; check it
        // rebuilds the identity before certifying.
        let id = feasibility::reconstruct(m, m.weights())?;
        let resid = id.max_abs_diff(&HermitianOperator::identity(m.total_dim()));
        if resid < tol.residual && cert.root.iter().all(|c| c.parent_residual < tol.residual) {
            cert.verdict = Verdict::ImpossibleAtRoot;
        } else {
            cert.warnings.push(format!("root cones are one-dimensional but the weights check failed ({resid:.3e})"));
        }
        cert.stats.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        return Ok(cert);
    }

    let search = Search {
        m,
        dims: m.dims(),
        opts,
        pool: &pool,
        failed: Mutex::new(HashMap::new()),
        stats: Mutex::new(SearchStats::default()),
        notes: Mutex::new(Vec::new()),
    };
    let start_node = Node {
        coeffs: DVector::from_column_slice(m.weights()),
        factors: m.parties().iter().map(|p| HermitianOperator::identity(p.dim)).collect(),
    };
    let found = search.solve(&start_node, None, opts.max_rounds, Some(&cert.root));
    cert.stats = search.stats.into_inner().expect("stats lock");
    cert.warnings.extend(search.notes.into_inner().expect("notes lock"));

    if let Some(root) = found {
        let tree = ProtocolTree { root };
        match verifier::verify_tree(&tree, m, tol) {
            Ok(rep) if rep.passed() => {
                cert.verdict = Verdict::ProtocolFound;
                cert.tree = Some(tree);
                cert.verification = Some(rep);
            }
            Ok(rep) => {
                cert.warnings.push("search produced a tree that failed verification".into());
                cert.verification = Some(rep);
            }
            Err(e) => cert.warnings.push(format!("search produced a malformed tree: {e}")),
        }
    }
    cert.stats.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(cert)
}

struct Node {
    coeffs: DVector<f64>,
    /// Current local factor of every party; their tensor product is the node
    /// operator.
    factors: Vec<HermitianOperator>,
}

type MemoKey = (Option<usize>, Vec<i64>);

struct Search<'a> {
    m: &'a SeparableMeasurement,
    dims: Vec<usize>,
    opts: &'a SearchOptions,
    pool: &'a rayon::ThreadPool,
    /// Nodes known to fail with at most this many rounds left.
    failed: Mutex<HashMap<MemoKey, usize>>,
    stats: Mutex<SearchStats>,
    notes: Mutex<Vec<String>>,
}

impl Search<'_> {
    fn tol(&self) -> &Tolerances {
        &self.opts.tolerances
    }

    fn bump(&self, f: impl FnOnce(&mut SearchStats)) {
        f(&mut self.stats.lock().expect("stats lock"));
    }

    fn memo_key(&self, coeffs: &DVector<f64>, last: Option<usize>) -> MemoKey {
        let l1: f64 = coeffs.iter().map(|x| x.abs()).sum();
        let q = coeffs.iter().map(|x| (x / l1 / 1e-9).round() as i64).collect();
        (last, q)
    }

    /// `Some((outcome, scale))` when the node is a single outcome: its
    /// coefficients are supported on one index, or its operator is a multiple
    /// of one `Ô_j`.
    fn leaf_of(&self, coeffs: &DVector<f64>) -> Option<(usize, f64)> {
        let (jmax, cmax) = coeffs.argmax();
        if cmax <= 0.0 {
            return None;
        }
        let second = coeffs.iter().enumerate().filter(|&(j, _)| j != jmax).map(|(_, &x)| x.abs()).fold(0.0, f64::max);
        if second < self.tol().leaf_support * cmax {
            return Some((jmax, cmax));
        }
        let op = feasibility::reconstruct(self.m, coeffs.as_slice()).ok()?;
        for (j, p) in self.m.products().iter().enumerate() {
            let pp = operator::frobenius(p, p).ok()?;
            let s = operator::frobenius(p, &op).ok()? / pp;
            if s > 0.0 && op.max_abs_diff(&p.scaled(s)) < self.tol().residual {
                return Some((j, s));
            }
        }
        None
    }

    fn abar(&self, node: &Node, party: usize) -> HermitianOperator {
        let others: Vec<HermitianOperator> =
            node.factors.iter().enumerate().filter(|&(k, _)| k != party).map(|(_, f)| f.clone()).collect();
        operator::tensor(&others).expect("at least two parties")
    }

    fn cones(&self, node: &Node, last: Option<usize>) -> Vec<(usize, HermitianOperator, Option<FeasibleCone>)> {
        let parties: Vec<usize> = (0..self.m.num_parties()).filter(|&p| Some(p) != last).collect();
        let out: Vec<_> = self.pool.install(|| {
            parties
                .par_iter()
                .map(|&p| {
                    let abar = self.abar(node, p);
                    let ctx = NodeContext {
                        measurement: self.m,
                        acting_party: p,
                        coeffs: node.coeffs.iter().copied().collect(),
                        abar: abar.clone(),
                    };
                    let cone = feasibility::feasible_cone(&ctx, self.tol());
                    (p, abar, cone)
                })
                .collect()
        });
        self.bump(|s| s.cones_evaluated += out.len());
        out.into_iter()
            .map(|(p, abar, cone)| match cone {
                Ok(c) => (p, abar, Some(c)),
                Err(e) => {
                    self.note(format!("party {} skipped at a node: {e}", self.m.parties()[p].name));
                    (p, abar, None)
                }
            })
            .collect()
    }

    fn note(&self, msg: String) {
        let mut notes = self.notes.lock().expect("notes lock");
        if notes.len() < 32 && !notes.contains(&msg) {
            notes.push(msg);
        }
    }

    fn solve(
        &self,
        node: &Node,
        last: Option<usize>,
        remaining: usize,
        precomputed: Option<&[FeasibleCone]>,
    ) -> Option<ProtocolNode> {
        let coeffs: Vec<f64> = node.coeffs.iter().copied().collect();
        if last.is_some() {
            if let Some((outcome, scale)) = self.leaf_of(&node.coeffs) {
                return Some(ProtocolNode::leaf(coeffs, last, Leaf { outcome, scale }));
            }
        }
        if remaining == 0 {
            self.bump(|s| s.round_limit_hits += 1);
            return None;
        }
        let key = self.memo_key(&node.coeffs, last);
        if let Some(&r) = self.failed.lock().expect("memo lock").get(&key) {
            if r >= remaining {
                self.bump(|s| s.memo_hits += 1);
                return None;
            }
        }
        self.bump(|s| s.nodes_expanded += 1);

        let cones = match precomputed {
            Some(root) => root
                .iter()
                .map(|c| (c.party, self.abar(node, c.party), Some(c.clone())))
                .collect(),
            None => self.cones(node, last),
        };

        let mut any_move = false;
        for (party, abar, cone) in cones {
            let Some(cone) = cone else { continue };
            if cone.marginal {
                self.note(format!(
                    "marginal rank decision below the root for party {}",
                    self.m.parties()[party].name
                ));
            }
            // A one-dimensional cone admits only the trivial measurement.
            if cone.nullspace_dim <= 1 {
                continue;
            }
            let rays = cone.rays();
            let decs = cone::decompose(&node.coeffs, &rays, self.opts.max_support, self.tol());
            'dec: for dec in decs {
                let mut children = Vec::with_capacity(dec.rays_used.len());
                for (&r, &s) in dec.rays_used.iter().zip(&dec.scales) {
                    let c = &rays[r] * s;
                    let Ok(op) = feasibility::reconstruct(self.m, c.as_slice()) else { continue 'dec };
                    let Ok(local) = feasibility::factorize(&op, &self.dims, party, &abar, self.tol()) else {
                        self.note("dropped a decomposition whose child does not factorize".into());
                        continue 'dec;
                    };
                    let mut factors = node.factors.clone();
                    factors[party] = local;
                    children.push(Node { coeffs: c, factors });
                }
                any_move = true;
                let mut solved = Vec::with_capacity(children.len());
                // Resolve leaves first so a failing sibling is found cheaply.
                let mut order: Vec<usize> = (0..children.len()).collect();
                order.sort_by_key(|&i| self.leaf_of(&children[i].coeffs).is_none());
                let mut slots: Vec<Option<ProtocolNode>> = vec![None; children.len()];
                for i in order {
                    match self.solve(&children[i], Some(party), remaining - 1, None) {
                        Some(t) => slots[i] = Some(t),
                        None => continue 'dec,
                    }
                }
                solved.extend(slots.into_iter().map(|s| s.expect("every child solved")));
                return Some(ProtocolNode { coeffs, party: last, leaf: None, children: solved });
            }
        }
        if !any_move {
            self.bump(|s| s.dead_ends += 1);
        }
        let mut memo = self.failed.lock().expect("memo lock");
        let e = memo.entry(key).or_insert(0);
        *e = (*e).max(remaining);
        None
    }
}
