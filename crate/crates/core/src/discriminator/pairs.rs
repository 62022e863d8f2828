//! Disjoint close leaf pairs with edge-disjoint connecting paths.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::{EdgeId, Tree, VertexId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LeafPair {
    pub a: String,
    pub b: String,
    /// Edges from `a` to `b` in the tree the pair was built on.
    pub path: Vec<EdgeId>,
}

impl LeafPair {
    pub fn distance(&self) -> usize {
        self.path.len()
    }
}

/// Leaf-disjoint pairs whose paths are pairwise edge-disjoint in their
/// designated tree.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PairSet {
    pub pairs: Vec<LeafPair>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LeafPair> {
        self.pairs.iter()
    }

    /// Verifies the set against `tree`: stored paths are the tree paths,
    /// leaves are used once, edges are used once.
    pub fn check(&self, tree: &Tree) -> Result<()> {
        let mut leaves = BTreeSet::new();
        let mut edges = BTreeSet::new();
        for p in &self.pairs {
            if tree.path_between(&p.a, &p.b)? != p.path {
                return Err(Error::Invariant(format!("stored path for ({}, {}) is not the tree path", p.a, p.b)));
            }
            for l in [&p.a, &p.b] {
                if !leaves.insert(l.as_str()) {
                    return Err(Error::Invariant(format!("leaf {l} used twice")));
                }
            }
            for &e in &p.path {
                if !edges.insert(e) {
                    return Err(Error::Invariant(format!("edge {e} used by two paths")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Cherry,
    /// Paired with the reserved leaf of the internal child with this index.
    Cross(usize),
    Up,
    Unused,
}

const INFEASIBLE: i64 = i64::MIN / 4;

struct Node {
    leaf_children: Vec<VertexId>,
    internal_children: Vec<VertexId>,
    best: [i64; 2],
    roles: [Vec<Role>; 2],
}

fn role_options(k: usize) -> Vec<Role> {
    let mut out = vec![Role::Cherry];
    out.extend((0..k).map(Role::Cross));
    out.push(Role::Up);
    out.push(Role::Unused);
    out
}

fn best_assignment(node: &Node, nodes: &[Option<Node>], export: usize) -> (i64, Vec<Role>) {
    let options = role_options(node.internal_children.len());
    let m = node.leaf_children.len();
    let mut best = (INFEASIBLE, Vec::new());
    let mut digits = vec![0usize; m];
    loop {
        let roles: Vec<Role> = digits.iter().map(|&d| options[d]).collect();
        if let Some(value) = assignment_value(node, nodes, &roles, export) {
            if value > best.0 {
                best = (value, roles);
            }
        }
        // Leaf 0 is the most significant digit, so earlier roles are tried first.
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < options.len() {
                break;
            }
            digits[i] = 0;
        }
    }
}

fn assignment_value(node: &Node, nodes: &[Option<Node>], roles: &[Role], export: usize) -> Option<i64> {
    let cherries = roles.iter().filter(|&&r| r == Role::Cherry).count();
    let ups = roles.iter().filter(|&&r| r == Role::Up).count();
    if (cherries != 0 && cherries != 2) || ups != export {
        return None;
    }
    let mut value = (cherries / 2) as i64;
    for (j, &c) in node.internal_children.iter().enumerate() {
        let crossing = roles.iter().filter(|&&r| r == Role::Cross(j)).count();
        let child = nodes[c].as_ref().unwrap();
        match crossing {
            0 => value += child.best[0],
            1 if child.best[1] > INFEASIBLE => value += 1 + child.best[1],
            _ => return None,
        }
    }
    Some(value)
}

fn leaf_edge(tree: &Tree, leaf: VertexId) -> EdgeId {
    tree.neighbors(leaf)[0].1
}

/// Maximum set of leaf-disjoint pairs at distance 2 or 3 whose paths are
/// pairwise edge-disjoint, by dynamic programming over the tree hung from
/// the neighbour of the first leaf. Pairs come out ordered by label.
pub fn close_pairs(tree: &Tree) -> Result<PairSet> {
    if tree.n_leaves() < 4 {
        return Err(Error::TooFewLeaves { needed: 4, got: tree.n_leaves() });
    }
    if !tree.is_binary() {
        return Err(Error::NotBinary);
    }
    let root = tree.neighbors(tree.leaves()[0])[0].0;
    let rooted = tree.rooted_at(root);
    let nv = tree.n_vertices();
    let mut nodes: Vec<Option<Node>> = (0..nv).map(|_| None).collect();

    for &v in rooted.preorder.iter().rev() {
        if tree.is_leaf(v) {
            continue;
        }
        let mut leaf_children = Vec::new();
        let mut internal_children = Vec::new();
        for &(w, _) in tree.neighbors(v) {
            if rooted.parent[v].map(|(p, _)| p) == Some(w) {
                continue;
            }
            if tree.is_leaf(w) {
                leaf_children.push(w);
            } else {
                internal_children.push(w);
            }
        }
        leaf_children.sort_by_key(|&l| tree.leaf_rank(l));
        internal_children.sort_unstable();
        let mut node = Node { leaf_children, internal_children, best: [INFEASIBLE; 2], roles: [Vec::new(), Vec::new()] };
        for export in 0..2 {
            if export == 1 && v == root {
                continue;
            }
            let (value, roles) = best_assignment(&node, &nodes, export);
            node.best[export] = value;
            node.roles[export] = roles;
        }
        nodes[v] = Some(node);
    }

    let mut export = vec![0usize; nv];
    // Leaf waiting for the reserved leaf of this vertex, with the edge to it.
    let mut waiting: Vec<Option<VertexId>> = vec![None; nv];
    let mut raw: Vec<(VertexId, VertexId, Vec<EdgeId>)> = Vec::new();
    for &v in &rooted.preorder {
        let Some(node) = nodes[v].as_ref() else { continue };
        let roles = &node.roles[export[v]];
        let mut cherry = Vec::new();
        for (&l, &role) in node.leaf_children.iter().zip(roles) {
            match role {
                Role::Cherry => cherry.push(l),
                Role::Cross(j) => {
                    let c = node.internal_children[j];
                    export[c] = 1;
                    waiting[c] = Some(l);
                }
                Role::Up => {
                    let partner = waiting[v].expect("reserved leaf has a partner");
                    let (_, up) = rooted.parent[v].unwrap();
                    raw.push((partner, l, vec![leaf_edge(tree, partner), up, leaf_edge(tree, l)]));
                }
                Role::Unused => {}
            }
        }
        if let [a, b] = cherry[..] {
            raw.push((a, b, vec![leaf_edge(tree, a), leaf_edge(tree, b)]));
        }
    }

    let mut pairs: Vec<(usize, LeafPair)> = raw
        .into_iter()
        .map(|(x, y, mut path)| {
            let (rx, ry) = (tree.leaf_rank(x).unwrap(), tree.leaf_rank(y).unwrap());
            let (a, b) = if rx < ry { (x, y) } else {
                path.reverse();
                (y, x)
            };
            let pair = LeafPair { a: tree.label(a).unwrap().to_string(), b: tree.label(b).unwrap().to_string(), path };
            (rx.min(ry), pair)
        })
        .collect();
    pairs.sort_by_key(|(r, _)| *r);
    Ok(PairSet { pairs: pairs.into_iter().map(|(_, p)| p).collect() })
}

/// `⌈n/4⌉`, the guaranteed size of [`close_pairs`].
pub fn close_pair_guarantee(n: usize) -> usize {
    n.div_ceil(4)
}
