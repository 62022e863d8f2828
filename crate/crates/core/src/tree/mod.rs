//! Unrooted leaf-labelled trees (phylogenetic X-trees).
//!
//! Vertices and edges are addressed by dense indices that stay stable for
//! the lifetime of a [`Tree`]. Trees are immutable once built; every
//! operation that changes shape (restriction, relabelling, generation)
//! returns a new tree.

mod newick;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;
use num_bigint::BigUint;

use crate::error::{Error, Result};

pub use newick::{parse_newick, parse_newick_with, write_newick, write_newick_with_values, Composition};

pub type VertexId = usize;
pub type EdgeId = usize;

#[derive(Clone, Debug)]
pub struct Tree {
    adj: Vec<Vec<(VertexId, EdgeId)>>,
    edges: Vec<[VertexId; 2]>,
    labels: Vec<Option<String>>,
    annotations: Vec<Option<f64>>,
    /// Leaf vertices ordered by label.
    leaves: Vec<VertexId>,
    leaf_rank: Vec<Option<usize>>,
    by_label: HashMap<String, VertexId>,
    binary: bool,
}

/// Mutable edge list used while assembling a tree. Edges carry an
/// arbitrary payload so restriction can thread model values through
/// degree-2 suppression.
#[derive(Clone, Debug)]
pub(crate) struct Skeleton<T> {
    labels: Vec<Option<String>>,
    edges: Vec<Option<(VertexId, VertexId, T)>>,
}

impl<T: Clone> Skeleton<T> {
    pub(crate) fn new() -> Self {
        Self { labels: Vec::new(), edges: Vec::new() }
    }

    pub(crate) fn add_vertex(&mut self, label: Option<String>) -> VertexId {
        self.labels.push(label);
        self.labels.len() - 1
    }

    pub(crate) fn add_edge(&mut self, u: VertexId, v: VertexId, payload: T) -> EdgeId {
        self.edges.push(Some((u, v, payload)));
        self.edges.len() - 1
    }

    pub(crate) fn set_label(&mut self, v: VertexId, label: String) {
        self.labels[v] = Some(label);
    }

    pub(crate) fn num_labelled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Removes every unlabelled vertex of degree 2, merging its two edges
    /// into one whose payload is `compose(first, second)`.
    pub(crate) fn suppress_degree_two(&mut self, compose: impl Fn(&T, &T) -> T) {
        let mut incident: Vec<Vec<EdgeId>> = vec![Vec::new(); self.labels.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            if let Some((u, v, _)) = edge {
                incident[*u].push(e);
                incident[*v].push(e);
            }
        }
        for v in 0..self.labels.len() {
            if self.labels[v].is_some() || incident[v].len() != 2 {
                continue;
            }
            let (e1, e2) = (incident[v][0], incident[v][1]);
            let (a1, b1, p1) = self.edges[e1].take().expect("live edge");
            let (a2, b2, p2) = self.edges[e2].take().expect("live edge");
            let far1 = if a1 == v { b1 } else { a1 };
            let far2 = if a2 == v { b2 } else { a2 };
            self.edges[e1] = Some((far1, far2, compose(&p1, &p2)));
            for slot in incident[far2].iter_mut() {
                if *slot == e2 {
                    *slot = e1;
                }
            }
            incident[v].clear();
        }
    }

    /// Compacts live vertices and edges and validates the result.
    pub(crate) fn finish(self) -> Result<(Tree, Vec<T>)> {
        let mut degree = vec![0usize; self.labels.len()];
        for (u, v, _) in self.edges.iter().flatten() {
            degree[*u] += 1;
            degree[*v] += 1;
        }
        let mut remap = vec![usize::MAX; self.labels.len()];
        let mut labels = Vec::new();
        for (v, label) in self.labels.into_iter().enumerate() {
            if degree[v] > 0 || label.is_some() {
                remap[v] = labels.len();
                labels.push(label);
            }
        }
        let mut edges = Vec::new();
        let mut payloads = Vec::new();
        for (u, v, p) in self.edges.into_iter().flatten() {
            edges.push([remap[u], remap[v]]);
            payloads.push(p);
        }
        let tree = Tree::from_parts(labels, edges, vec![None; payloads.len()])?;
        Ok((tree, payloads))
    }
}

impl Tree {
    /// Builds a tree from raw parts, validating connectivity, acyclicity and
    /// the leaf labelling.
    pub fn from_parts(
        labels: Vec<Option<String>>,
        edges: Vec<[VertexId; 2]>,
        annotations: Vec<Option<f64>>,
    ) -> Result<Self> {
        let nv = labels.len();
        if annotations.len() != edges.len() {
            return Err(Error::InvalidTree("annotation count differs from edge count".into()));
        }
        if nv == 0 || edges.len() + 1 != nv {
            return Err(Error::InvalidTree(format!("{nv} vertices but {} edges", edges.len())));
        }
        let mut adj: Vec<Vec<(VertexId, EdgeId)>> = vec![Vec::new(); nv];
        for (e, &[u, v]) in edges.iter().enumerate() {
            if u >= nv || v >= nv || u == v {
                return Err(Error::InvalidTree(format!("bad edge {u}-{v}")));
            }
            adj[u].push((v, e));
            adj[v].push((u, e));
        }
        // connected + (|E| = |V| - 1) => acyclic
        let mut seen = vec![false; nv];
        let mut stack = vec![0];
        seen[0] = true;
        let mut reached = 1;
        while let Some(x) = stack.pop() {
            for &(y, _) in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    reached += 1;
                    stack.push(y);
                }
            }
        }
        if reached != nv {
            return Err(Error::InvalidTree("graph is disconnected".into()));
        }

        let mut by_label = HashMap::new();
        for (v, label) in labels.iter().enumerate() {
            match label {
                Some(l) => {
                    if adj[v].len() != 1 {
                        return Err(Error::InvalidTree(format!("labelled vertex `{l}` is not a leaf")));
                    }
                    if by_label.insert(l.clone(), v).is_some() {
                        return Err(Error::DuplicateLabel(l.clone()));
                    }
                }
                None if adj[v].len() <= 1 => {
                    return Err(Error::InvalidTree("unlabelled leaf".into()));
                }
                None => {}
            }
        }
        if by_label.len() < 2 {
            return Err(Error::TooFewLeaves { needed: 2, got: by_label.len() });
        }
        let mut leaves: Vec<VertexId> = by_label.values().copied().collect();
        leaves.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
        let mut leaf_rank = vec![None; nv];
        for (r, &v) in leaves.iter().enumerate() {
            leaf_rank[v] = Some(r);
        }
        let binary = adj.iter().all(|n| n.len() == 1 || n.len() == 3);
        Ok(Self { adj, edges, labels, annotations, leaves, leaf_rank, by_label, binary })
    }

    /// The unique tree on two leaves.
    pub fn two_leaf(a: &str, b: &str) -> Result<Self> {
        Self::from_parts(vec![Some(a.into()), Some(b.into())], vec![[0, 1]], vec![None])
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn edge(&self, e: EdgeId) -> [VertexId; 2] {
        self.edges[e]
    }

    pub fn edges(&self) -> &[[VertexId; 2]] {
        &self.edges
    }

    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, EdgeId)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.adj[v].len()
    }

    pub fn is_leaf(&self, v: VertexId) -> bool {
        self.labels[v].is_some()
    }

    pub fn label(&self, v: VertexId) -> Option<&str> {
        self.labels[v].as_deref()
    }

    /// Raw branch values captured by the Newick parser.
    pub fn annotations(&self) -> &[Option<f64>] {
        &self.annotations
    }

    pub(crate) fn with_annotations(mut self, annotations: Vec<Option<f64>>) -> Self {
        assert_eq!(annotations.len(), self.edges.len());
        self.annotations = annotations;
        self
    }

    /// Leaf vertices in sorted-label order.
    pub fn leaves(&self) -> &[VertexId] {
        &self.leaves
    }

    /// Position of a leaf in the sorted label order.
    pub fn leaf_rank(&self, v: VertexId) -> Option<usize> {
        self.leaf_rank[v]
    }

    pub fn leaf_labels(&self) -> Vec<&str> {
        self.leaves.iter().map(|&v| self.labels[v].as_deref().unwrap()).collect()
    }

    pub fn leaf(&self, label: &str) -> Result<VertexId> {
        self.by_label.get(label).copied().ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.by_label.contains_key(label)
    }

    pub fn same_labels(&self, other: &Tree) -> bool {
        self.n_leaves() == other.n_leaves()
            && self.leaves.iter().zip(&other.leaves).all(|(&a, &b)| self.labels[a] == other.labels[b])
    }

    /// Rooted view hanging the tree from `root`.
    pub fn rooted_at(&self, root: VertexId) -> Rooted {
        let nv = self.n_vertices();
        let mut parent = vec![None; nv];
        let mut depth = vec![0usize; nv];
        let mut preorder = Vec::with_capacity(nv);
        let mut stack = vec![root];
        let mut seen = vec![false; nv];
        seen[root] = true;
        while let Some(x) = stack.pop() {
            preorder.push(x);
            for &(y, e) in self.adj[x].iter().rev() {
                if !seen[y] {
                    seen[y] = true;
                    parent[y] = Some((x, e));
                    depth[y] = depth[x] + 1;
                    stack.push(y);
                }
            }
        }
        Rooted { root, parent, depth, preorder }
    }

    /// Edges on the unique path from leaf `u` to leaf `v`, in order.
    pub fn path_between(&self, u: &str, v: &str) -> Result<Vec<EdgeId>> {
        let (a, b) = (self.leaf(u)?, self.leaf(v)?);
        if a == b {
            return Err(Error::SameEndpoints(u.to_string()));
        }
        Ok(self.rooted_at(a).path(b).into_iter().rev().collect())
    }

    /// Number of edges between two leaves.
    pub fn distance(&self, u: &str, v: &str) -> Result<usize> {
        self.path_between(u, v).map(|p| p.len())
    }

    /// All pairs of leaves sharing a neighbour, each pair ordered by label.
    pub fn cherries(&self) -> Result<Vec<(String, String)>> {
        if !self.binary {
            return Err(Error::NotBinary);
        }
        if self.n_leaves() < 4 {
            return Err(Error::TooFewLeaves { needed: 4, got: self.n_leaves() });
        }
        let mut out = Vec::new();
        for v in 0..self.n_vertices() {
            if self.is_leaf(v) {
                continue;
            }
            let mut leaf_nbrs: Vec<&str> =
                self.adj[v].iter().filter_map(|&(w, _)| self.label(w)).collect();
            leaf_nbrs.sort_unstable();
            for i in 0..leaf_nbrs.len() {
                for j in i + 1..leaf_nbrs.len() {
                    out.push((leaf_nbrs[i].to_string(), leaf_nbrs[j].to_string()));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Leaf sets (as bitsets over the sorted label order) on the far side of
    /// each edge when the tree hangs from vertex 0.
    fn edge_sides(&self) -> Vec<(EdgeId, FixedBitSet)> {
        let n = self.n_leaves();
        let rooted = self.rooted_at(0);
        let mut below: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(n); self.n_vertices()];
        let mut out = Vec::with_capacity(self.n_edges());
        for &v in rooted.preorder.iter().rev() {
            if let Some(r) = self.leaf_rank[v] {
                below[v].insert(r);
            }
            if let Some((p, e)) = rooted.parent[v] {
                let side = below[v].clone();
                below[p].union_with(&side);
                out.push((e, side));
            }
        }
        out
    }

    /// Nontrivial splits (both sides with at least two leaves), sorted.
    pub fn splits(&self) -> Vec<Split> {
        let n = self.n_leaves();
        let mut out: Vec<Split> = self
            .edge_sides()
            .into_iter()
            .filter_map(|(_, side)| {
                let k = side.count_ones(..);
                (k >= 2 && n - k >= 2).then(|| Split::canonical(side, n))
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Split induced by deleting edge `e`.
    pub fn split_of_edge(&self, e: EdgeId) -> Split {
        let n = self.n_leaves();
        let side = self.edge_sides().into_iter().find(|(id, _)| *id == e).expect("edge in tree").1;
        Split::canonical(side, n)
    }
}

/// A tree hung from a chosen vertex.
#[derive(Clone, Debug)]
pub struct Rooted {
    pub root: VertexId,
    /// `(parent, edge to parent)` for every non-root vertex.
    pub parent: Vec<Option<(VertexId, EdgeId)>>,
    pub depth: Vec<usize>,
    /// Parents appear before their children.
    pub preorder: Vec<VertexId>,
}

impl Rooted {
    /// Edges from `v` up to the root, in order.
    pub fn path(&self, mut v: VertexId) -> Vec<EdgeId> {
        let mut out = Vec::with_capacity(self.depth[v]);
        while let Some((p, e)) = self.parent[v] {
            out.push(e);
            v = p;
        }
        out
    }

    /// Edges on the path from `u` to `v`, ordered from `u`.
    pub fn path_between(&self, mut u: VertexId, mut v: VertexId) -> Vec<EdgeId> {
        let mut from_u = Vec::new();
        let mut from_v = Vec::new();
        while self.depth[u] > self.depth[v] {
            let (p, e) = self.parent[u].unwrap();
            from_u.push(e);
            u = p;
        }
        while self.depth[v] > self.depth[u] {
            let (p, e) = self.parent[v].unwrap();
            from_v.push(e);
            v = p;
        }
        while u != v {
            let (pu, eu) = self.parent[u].unwrap();
            let (pv, ev) = self.parent[v].unwrap();
            from_u.push(eu);
            from_v.push(ev);
            u = pu;
            v = pv;
        }
        from_u.extend(from_v.into_iter().rev());
        from_u
    }
}

/// A bipartition of the leaf set, stored as the side containing the
/// smallest label.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Split {
    side: Vec<usize>,
    n: usize,
}

impl Split {
    fn canonical(mut side: FixedBitSet, n: usize) -> Self {
        if !side.contains(0) {
            side.toggle_range(..n);
        }
        Self { side: side.ones().collect(), n }
    }

    /// Leaf ranks on the side holding the smallest label.
    pub fn first_side(&self) -> &[usize] {
        &self.side
    }

    pub fn second_side(&self) -> Vec<usize> {
        let first: BTreeSet<usize> = self.side.iter().copied().collect();
        (0..self.n).filter(|r| !first.contains(r)).collect()
    }

    /// `ab|cd` style rendering using the tree's labels.
    pub fn display(&self, tree: &Tree) -> String {
        let name = |r: &usize| tree.label(tree.leaves()[*r]).unwrap().to_string();
        let left: Vec<String> = self.side.iter().map(name).collect();
        let right: Vec<String> = self.second_side().iter().map(name).collect();
        format!("{}|{}", left.join(","), right.join(","))
    }
}

/// True when both trees induce the same splits, i.e. they are the same
/// phylogenetic X-tree.
pub fn tree_identity(t1: &Tree, t2: &Tree) -> Result<bool> {
    if !t1.same_labels(t2) {
        return Err(Error::LabelMismatch);
    }
    Ok(t1.splits() == t2.splits())
}

/// Minimal subtree spanning `subset`, with degree-2 vertices suppressed.
/// Each suppressed path receives `compose` folded over its edge values.
pub fn restrict<T, S>(tree: &Tree, values: &[T], subset: &[S], compose: impl Fn(&T, &T) -> T) -> Result<(Tree, Vec<T>)>
where
    T: Clone,
    S: AsRef<str>,
{
    if values.len() != tree.n_edges() {
        return Err(Error::InvalidParameter(format!(
            "{} edge values for {} edges",
            values.len(),
            tree.n_edges()
        )));
    }
    let mut keep: Vec<VertexId> = subset.iter().map(|s| tree.leaf(s.as_ref())).collect::<Result<_>>()?;
    keep.sort_unstable();
    keep.dedup();
    if keep.len() < 2 {
        return Err(Error::TooFewLeaves { needed: 2, got: keep.len() });
    }
    let rooted = tree.rooted_at(keep[0]);
    let mut marked = vec![false; tree.n_vertices()];
    marked[keep[0]] = true;
    for &v in &keep[1..] {
        let mut x = v;
        while !marked[x] {
            marked[x] = true;
            x = rooted.parent[x].expect("root is marked").0;
        }
    }
    let mut sk = Skeleton::new();
    let mut remap = vec![usize::MAX; tree.n_vertices()];
    for v in 0..tree.n_vertices() {
        if marked[v] {
            let label = if keep.binary_search(&v).is_ok() { tree.labels[v].clone() } else { None };
            remap[v] = sk.add_vertex(label);
        }
    }
    for (e, &[u, v]) in tree.edges.iter().enumerate() {
        if marked[u] && marked[v] {
            sk.add_edge(remap[u], remap[v], values[e].clone());
        }
    }
    sk.suppress_degree_two(compose);
    sk.finish()
}

/// `(2n-5)!!`, the number of binary phylogenetic X-trees on `n` leaves.
pub fn count_binary_trees(n: usize) -> Result<BigUint> {
    if n < 3 {
        return Err(Error::TooFewLeaves { needed: 3, got: n });
    }
    Ok((1..=2 * n - 5).step_by(2).fold(BigUint::from(1u32), |acc, k| acc * BigUint::from(k)))
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&write_newick(self))
    }
}
