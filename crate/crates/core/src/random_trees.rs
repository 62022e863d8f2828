//! Seeded generators for random binary phylogenetic X-trees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::tree::{Skeleton, Tree, VertexId};

/// Supported tree measures. Both are invariant under relabelling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeKind {
    Uniform,
    YuleHarding,
}

impl FromStr for TreeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(TreeKind::Uniform),
            "yule-harding" | "yule" => Ok(TreeKind::YuleHarding),
            other => Err(Error::InvalidParameter(format!("unknown tree distribution `{other}`"))),
        }
    }
}

impl fmt::Display for TreeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TreeKind::Uniform => "uniform",
            TreeKind::YuleHarding => "yule-harding",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TreeDistribution {
    pub kind: TreeKind,
    pub labels: Vec<String>,
}

impl TreeDistribution {
    pub fn new(kind: TreeKind, labels: Vec<String>) -> Result<Self> {
        check_labels(&labels)?;
        Ok(Self { kind, labels })
    }

    pub fn sample(&self, seed: u64) -> Result<Tree> {
        match self.kind {
            TreeKind::Uniform => uniform_tree(&self.labels, seed),
            TreeKind::YuleHarding => yule_harding_tree(&self.labels, seed),
        }
    }
}

/// `t1, t2, ...` zero-padded so lexicographic order matches numeric order.
pub fn default_labels(n: usize) -> Vec<String> {
    let width = n.to_string().len();
    (1..=n).map(|i| format!("t{i:0width$}")).collect()
}

fn check_labels(labels: &[String]) -> Result<()> {
    if labels.len() < 3 {
        return Err(Error::TooFewLeaves { needed: 3, got: labels.len() });
    }
    let mut seen = BTreeSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

/// Builds the tree whose leaf `i` carries `labels[i]` and whose internal
/// vertices are numbered from `labels.len()`.
fn assemble(labels: &[String], edges: Vec<[VertexId; 2]>) -> Result<Tree> {
    let mut all: Vec<Option<String>> = labels.iter().cloned().map(Some).collect();
    all.resize(edges.len() + 1, None);
    let ne = edges.len();
    Tree::from_parts(all, edges, vec![None; ne])
}

/// Uniform draw from the `(2n-5)!!` binary trees on `labels`, by attaching
/// each successive leaf to a uniformly chosen edge.
pub fn uniform_tree(labels: &[String], seed: u64) -> Result<Tree> {
    check_labels(labels)?;
    let n = labels.len();
    let mut rng = rng::stream(seed, &[0]);
    let mut edges: Vec<[VertexId; 2]> = vec![[0, n], [1, n], [2, n]];
    let mut next = n + 1;
    for leaf in 3..n {
        let e = rng.gen_range(0..edges.len());
        let [x, y] = edges[e];
        edges[e] = [x, next];
        edges.push([next, y]);
        edges.push([next, leaf]);
        next += 1;
    }
    assemble(labels, edges)
}

/// Unrooted Yule–Harding draw: grow a rooted tree from a cherry by
/// splitting a uniformly chosen leaf until there are `n` leaves, suppress
/// the root, then label the leaves by a uniform random permutation.
pub fn yule_harding_tree(labels: &[String], seed: u64) -> Result<Tree> {
    check_labels(labels)?;
    let n = labels.len();
    let mut rng = rng::stream(seed, &[1]);
    let mut sk: Skeleton<()> = Skeleton::new();
    let root = sk.add_vertex(None);
    let mut tips = Vec::with_capacity(n);
    for _ in 0..2 {
        let c = sk.add_vertex(None);
        sk.add_edge(root, c, ());
        tips.push(c);
    }
    while tips.len() < n {
        let j = rng.gen_range(0..tips.len());
        let v = tips[j];
        let a = sk.add_vertex(None);
        let b = sk.add_vertex(None);
        sk.add_edge(v, a, ());
        sk.add_edge(v, b, ());
        tips[j] = a;
        tips.push(b);
    }
    let mut shuffled = labels.to_vec();
    shuffled.shuffle(&mut rng);
    for (&v, l) in tips.iter().zip(shuffled) {
        sk.set_label(v, l);
    }
    sk.suppress_degree_two(|_, _| ());
    Ok(sk.finish()?.0)
}

/// Draws from `kind`. Two-leaf label sets return the unique tree.
pub fn random_tree(kind: TreeKind, labels: &[String], seed: u64) -> Result<Tree> {
    if labels.len() == 2 {
        return Tree::two_leaf(&labels[0], &labels[1]);
    }
    TreeDistribution::new(kind, labels.to_vec())?.sample(seed)
}

/// Replaces every leaf label `v` by `pi[v]`.
pub fn relabel(tree: &Tree, pi: &BTreeMap<String, String>) -> Result<Tree> {
    let labels: BTreeSet<&str> = tree.leaf_labels().into_iter().collect();
    let keys: BTreeSet<&str> = pi.keys().map(String::as_str).collect();
    let images: BTreeSet<&str> = pi.values().map(String::as_str).collect();
    if keys != labels || images != labels {
        return Err(Error::InvalidParameter("permutation is not a bijection of the label set".into()));
    }
    let new_labels = (0..tree.n_vertices())
        .map(|v| tree.label(v).map(|l| pi[l].clone()))
        .collect();
    Tree::from_parts(new_labels, tree.edges().to_vec(), tree.annotations().to_vec())
}

/// Uniform random permutation of `labels`, as a map.
pub fn random_permutation(labels: &[String], seed: u64) -> BTreeMap<String, String> {
    let mut images = labels.to_vec();
    images.shuffle(&mut rng::stream(seed, &[2]));
    labels.iter().cloned().zip(images).collect()
}

/// Every binary tree on `labels`, one per insertion sequence.
pub fn all_binary_trees(labels: &[String]) -> Result<Vec<Tree>> {
    check_labels(labels)?;
    let n = labels.len();
    let mut level: Vec<Vec<[VertexId; 2]>> = vec![vec![[0, n], [1, n], [2, n]]];
    for leaf in 3..n {
        let w = n + leaf - 2;
        let mut next = Vec::with_capacity(level.len() * (2 * leaf - 3));
        for edges in &level {
            for e in 0..edges.len() {
                let mut grown = edges.clone();
                let [x, y] = grown[e];
                grown[e] = [x, w];
                grown.push([w, y]);
                grown.push([w, leaf]);
                next.push(grown);
            }
        }
        level = next;
    }
    level.into_iter().map(|edges| assemble(labels, edges)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{count_binary_trees, parse_newick, tree_identity, write_newick};

    fn labels(n: usize) -> Vec<String> {
        default_labels(n)
    }

    #[test]
    fn label_helper_sorts_numerically() {
        let l = default_labels(12);
        assert_eq!(l[0], "t01");
        assert_eq!(l[11], "t12");
        let mut sorted = l.clone();
        sorted.sort();
        assert_eq!(sorted, l);
    }

    #[test]
    fn generators_produce_binary_trees() {
        for n in 3..40 {
            for seed in 0..5 {
                for t in [uniform_tree(&labels(n), seed).unwrap(), yule_harding_tree(&labels(n), seed).unwrap()] {
                    assert!(t.is_binary());
                    assert_eq!(t.n_leaves(), n);
                    assert_eq!(t.n_edges(), 2 * n - 3);
                }
            }
        }
    }

    #[test]
    fn quartets_are_one_of_three() {
        let all = all_binary_trees(&labels(4)).unwrap();
        assert_eq!(all.len(), 3);
        for seed in 0..20 {
            let t = uniform_tree(&labels(4), seed).unwrap();
            assert_eq!(all.iter().filter(|a| tree_identity(a, &t).unwrap()).count(), 1);
        }
    }

    #[test]
    fn determinism() {
        let a = write_newick(&uniform_tree(&labels(30), 99).unwrap());
        let b = write_newick(&uniform_tree(&labels(30), 99).unwrap());
        assert_eq!(a, b);
        let c = write_newick(&yule_harding_tree(&labels(30), 99).unwrap());
        let d = write_newick(&yule_harding_tree(&labels(30), 99).unwrap());
        assert_eq!(c, d);
        assert_ne!(a, write_newick(&uniform_tree(&labels(30), 100).unwrap()));
    }

    #[test]
    fn enumeration_is_complete_and_distinct() {
        for n in 3..=7 {
            let all = all_binary_trees(&labels(n)).unwrap();
            assert_eq!(all.len().to_string(), count_binary_trees(n).unwrap().to_string());
            let distinct: BTreeSet<String> = all.iter().map(write_newick).collect();
            assert_eq!(distinct.len(), all.len());
        }
    }

    #[test]
    fn relabel_behaviour() {
        let t = parse_newick("((a,b),(c,d));").unwrap();
        let ident: BTreeMap<String, String> = ["a", "b", "c", "d"].iter().map(|l| (l.to_string(), l.to_string())).collect();
        assert!(tree_identity(&t, &relabel(&t, &ident).unwrap()).unwrap());

        let mut swap = ident.clone();
        swap.insert("a".into(), "c".into());
        swap.insert("c".into(), "a".into());
        let r = relabel(&t, &swap).unwrap();
        assert!(tree_identity(&r, &parse_newick("((c,b),(a,d));").unwrap()).unwrap());
        assert!(!tree_identity(&t, &r).unwrap());

        let mut bad = ident.clone();
        bad.insert("a".into(), "b".into());
        assert!(relabel(&t, &bad).is_err());
    }

    #[test]
    fn input_validation() {
        assert!(matches!(uniform_tree(&labels(2), 0), Err(Error::TooFewLeaves { .. })));
        let dup = vec!["a".to_string(), "b".into(), "a".into()];
        assert!(matches!(yule_harding_tree(&dup, 0), Err(Error::DuplicateLabel(_))));
        assert_eq!(random_tree(TreeKind::Uniform, &labels(2), 0).unwrap().n_edges(), 1);
        assert!("bogus".parse::<TreeKind>().is_err());
        assert_eq!("yule-harding".parse::<TreeKind>().unwrap(), TreeKind::YuleHarding);
    }
}
