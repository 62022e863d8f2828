//! Cutting a binary tree into pieces of `q` to `2q − 2` leaves.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tree::{EdgeId, Tree, VertexId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Component {
    pub vertices: Vec<VertexId>,
    /// Leaf labels in sorted order.
    pub leaves: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChopResult {
    pub q_chop: usize,
    pub cut_edges: Vec<EdgeId>,
    /// Ordered by smallest leaf label.
    pub components: Vec<Component>,
    /// Index of the one component allowed fewer than `q_chop` leaves.
    pub degenerate: Option<usize>,
}

impl ChopResult {
    /// Number of components with between `q_chop` and `2q_chop − 2` leaves.
    pub fn nondegenerate(&self) -> usize {
        self.components.len() - usize::from(self.degenerate.is_some())
    }

    /// Verifies partition and size bounds against `tree`.
    pub fn check(&self, tree: &Tree) -> Result<()> {
        let q = self.q_chop;
        let mut owner = vec![usize::MAX; tree.n_vertices()];
        for (i, c) in self.components.iter().enumerate() {
            for &v in &c.vertices {
                if owner[v] != usize::MAX {
                    return Err(Error::Invariant(format!("vertex {v} in two components")));
                }
                owner[v] = i;
            }
            let k = c.leaves.len();
            if Some(i) == self.degenerate {
                if k >= q {
                    return Err(Error::Invariant(format!("degenerate component has {k} ≥ {q} leaves")));
                }
            } else if k < q || k > 2 * q - 2 {
                return Err(Error::Invariant(format!("component with {k} leaves outside [{q}, {}]", 2 * q - 2)));
            }
        }
        if owner.contains(&usize::MAX) {
            return Err(Error::Invariant("vertex in no component".into()));
        }
        for (e, &[u, v]) in tree.edges().iter().enumerate() {
            let cut = self.cut_edges.contains(&e);
            if cut == (owner[u] == owner[v]) {
                return Err(Error::Invariant(format!("edge {e} inconsistent with components")));
            }
        }
        if self.components.len() != self.cut_edges.len() + 1 {
            return Err(Error::Invariant("components are not connected".into()));
        }
        Ok(())
    }
}

/// Hangs the tree from its first leaf, accumulates leaf counts bottom-up
/// and cuts the edge above a vertex as soon as its count reaches `q_chop`.
pub fn chop(tree: &Tree, q_chop: usize) -> Result<ChopResult> {
    if q_chop < 2 {
        return Err(Error::InvalidParameter(format!("chopping parameter must be at least 2, got {q_chop}")));
    }
    if !tree.is_binary() {
        return Err(Error::NotBinary);
    }
    let root = tree.leaves()[0];
    let rooted = tree.rooted_at(root);
    let nv = tree.n_vertices();
    let mut count = vec![0usize; nv];
    let mut is_top = vec![false; nv];
    is_top[root] = true;
    let mut cut_edges = Vec::new();
    for &v in rooted.preorder.iter().rev() {
        count[v] += usize::from(tree.is_leaf(v));
        if let Some((p, e)) = rooted.parent[v] {
            if count[v] >= q_chop {
                is_top[v] = true;
                cut_edges.push(e);
            } else {
                count[p] += count[v];
            }
        }
    }
    cut_edges.sort_unstable();

    let mut comp_of = vec![usize::MAX; nv];
    let mut components: Vec<Component> = Vec::new();
    for &v in &rooted.preorder {
        if is_top[v] {
            comp_of[v] = components.len();
            components.push(Component { vertices: Vec::new(), leaves: Vec::new() });
        } else {
            comp_of[v] = comp_of[rooted.parent[v].unwrap().0];
        }
        let c = &mut components[comp_of[v]];
        c.vertices.push(v);
        if let Some(l) = tree.label(v) {
            c.leaves.push(l.to_string());
        }
    }
    let root_small = count[root] < q_chop;
    for c in &mut components {
        c.vertices.sort_unstable();
        c.leaves.sort();
    }
    // The root component holds the first leaf, so it sorts first.
    components.sort_by(|x, y| x.leaves.cmp(&y.leaves));
    Ok(ChopResult { q_chop, cut_edges, components, degenerate: root_small.then_some(0) })
}
