//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use treevar::random_trees::{default_labels, uniform_tree};
use treevar::rng;
use treevar::tree::Tree;
use treevar::{Family, Mechanism64};

/// Transition probability of one edge of the symmetric model.
pub fn transition(q: u32, p: f64, x: usize, y: usize) -> f64 {
    if x == y {
        1.0 - p
    } else {
        p / (q - 1) as f64
    }
}

/// Pattern distribution by summing the joint law of every full state
/// assignment, with vertex 0 uniform. Index base q, first sorted leaf most
/// significant.
pub fn brute_force_distribution(tree: &Tree, mech: &Mechanism64) -> Vec<f64> {
    let q = mech.family().states() as usize;
    let nv = tree.n_vertices();
    let probs = mech.probabilities();
    let total = q.pow(nv as u32);
    let mut out = vec![0.0; q.pow(tree.n_leaves() as u32)];
    let mut states = vec![0usize; nv];
    for code in 0..total {
        let mut c = code;
        for s in states.iter_mut() {
            *s = c % q;
            c /= q;
        }
        let mut w = 1.0 / q as f64;
        for (e, &[u, v]) in tree.edges().iter().enumerate() {
            w *= transition(q as u32, probs[e], states[u], states[v]);
        }
        let idx = tree.leaves().iter().fold(0usize, |acc, &l| acc * q + states[l]);
        out[idx] += w;
    }
    out
}

/// CFN disagreement along a path by summing over every flip vector with an
/// odd number of flips.
pub fn flip_enumeration(ps: &[f64]) -> f64 {
    let m = ps.len();
    let mut total = 0.0;
    for xi in 0u32..1 << m {
        if xi.count_ones() % 2 == 1 {
            total += (0..m).map(|i| if xi >> i & 1 == 1 { ps[i] } else { 1.0 - ps[i] }).product::<f64>();
        }
    }
    total
}

/// Small deterministic generator for test parameters.
pub struct Draws(rng::StreamRng);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Self(rng::stream(seed, &[0xD2A5]))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        use rand::Rng;
        self.0.gen_range(lo..hi)
    }

    pub fn int(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        use rand::Rng;
        self.0.gen_range(lo..=hi_inclusive)
    }
}

/// Uniform random tree on `t1..tn` with per-edge probabilities in `[lo, hi)`.
pub fn random_model(n: usize, family: Family, lo: f64, hi: f64, seed: u64) -> (Tree, Mechanism64) {
    let tree = uniform_tree(&default_labels(n), seed).unwrap();
    let mut d = Draws::new(seed);
    let values = (0..tree.n_edges()).map(|_| d.uniform(lo, hi)).collect();
    let mech = Mechanism64::new(family, treevar::Scale::Probability, values).unwrap();
    (tree, mech)
}
