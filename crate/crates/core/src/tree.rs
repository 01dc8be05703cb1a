//! Protocol trees: nodes carry coefficient vectors against the unweighted
//! outcome products.

use serde::{Deserialize, Serialize};

/// A leaf stands for `scale · Ô_outcome`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub outcome: usize,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolNode {
    pub coeffs: Vec<f64>,
    /// Party whose measurement produced this node; `None` at the root.
    pub party: Option<usize>,
    pub leaf: Option<Leaf>,
    pub children: Vec<ProtocolNode>,
}

impl ProtocolNode {
    pub fn leaf(coeffs: Vec<f64>, party: Option<usize>, leaf: Leaf) -> Self {
        Self { coeffs, party, leaf: Some(leaf), children: Vec::new() }
    }

    pub fn is_leaf(&self) -> bool {
        self.leaf.is_some()
    }

    /// Number of measurement rounds below this node.
    pub fn rounds(&self) -> usize {
        self.children.iter().map(|c| 1 + c.rounds()).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(ProtocolNode::node_count).sum::<usize>()
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Leaf>) {
        if let Some(l) = &self.leaf {
            out.push(l);
        }
        for c in &self.children {
            c.collect_leaves(out);
        }
    }

    /// `Σ_leaves scale · e_outcome`.
    pub fn leaf_weights(&self, num_outcomes: usize) -> Vec<f64> {
        let mut w = vec![0.0; num_outcomes];
        for l in self.leaves() {
            if l.outcome < num_outcomes {
                w[l.outcome] += l.scale;
            }
        }
        w
    }

    /// The node at a path of child indices.
    pub fn at(&self, path: &[usize]) -> Option<&ProtocolNode> {
        match path.split_first() {
            None => Some(self),
            Some((&i, rest)) => self.children.get(i)?.at(rest),
        }
    }

    pub fn at_mut(&mut self, path: &[usize]) -> Option<&mut ProtocolNode> {
        match path.split_first() {
            None => Some(self),
            Some((&i, rest)) => self.children.get_mut(i)?.at_mut(rest),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTree {
    pub root: ProtocolNode,
}

impl ProtocolTree {
    pub fn rounds(&self) -> usize {
        self.root.rounds()
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        self.root.leaves()
    }
}

pub(crate) fn path_string(path: &[usize]) -> String {
    let mut s = String::from("root");
    for i in path {
        s.push('/');
        s.push_str(&i.to_string());
    }
    s
}
