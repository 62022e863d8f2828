//! Leaf-state patterns and their distributions.
//!
//! A pattern assigns one of `q` states to every leaf. Leaves are always
//! ordered by sorted label; a pattern's index is its base-`q` number with
//! the first leaf as the most significant digit, so on two leaves the
//! indices 0..4 are `00, 01, 10, 11`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::TransitionMechanism;
use crate::rng;
use crate::scalar::Real;
use crate::tree::{Tree, VertexId};

/// Default cap on dense enumeration: `q^n ≤ 2^24`.
pub const DEFAULT_BUDGET: u64 = 1 << 24;

/// Patterns with fewer than this many bits of state space are scored in
/// linear space; larger ones use per-vertex rescaling.
const LINEAR_SPACE_BITS: f64 = 40.0;

const SITE_BLOCK: usize = 1024;
const INDEX_BLOCK: u64 = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern(Vec<u8>);

impl Pattern {
    pub fn new(states: Vec<u8>) -> Self {
        Self(states)
    }

    pub fn states(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Base-`q` index, or `None` when it does not fit in a `u64`.
    pub fn index(&self, q: u32) -> Option<u64> {
        self.0.iter().try_fold(0u64, |acc, &s| acc.checked_mul(q as u64)?.checked_add(s as u64))
    }

    pub fn from_index(mut index: u64, n: usize, q: u32) -> Self {
        let mut states = vec![0u8; n];
        for slot in states.iter_mut().rev() {
            *slot = (index % q as u64) as u8;
            index /= q as u64;
        }
        Self(states)
    }

    /// Swaps states 0 and 1 (two-state patterns).
    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|&s| 1 - s).collect())
    }

    pub fn to_digits(&self) -> String {
        self.0.iter().map(|&s| char::from_digit(s as u32, 36).unwrap()).collect()
    }

    pub fn from_digits(text: &str, q: u32) -> Result<Self> {
        text.chars()
            .map(|c| match c.to_digit(36) {
                Some(d) if d < q => Ok(d as u8),
                _ => Err(Error::InvalidParameter(format!("bad state `{c}` for q = {q}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }
}

fn state_space_bits(n: usize, q: u32) -> f64 {
    n as f64 * (q as f64).log2()
}

fn state_count(n: usize, q: u32) -> Option<u64> {
    (q as u64).checked_pow(n as u32)
}

struct Step<R> {
    child: VertexId,
    parent: VertexId,
    lambda: R,
}

/// Pruning evaluator for one model tree: leaf-to-root elimination of the
/// per-edge transition matrices `λ I + (1-λ)/q J`, costing `O(q n)` per
/// pattern.
pub struct Likelihood<R> {
    q: usize,
    n_vertices: usize,
    root: VertexId,
    steps: Vec<Step<R>>,
    leaves: Vec<VertexId>,
}

impl<R: Real> Likelihood<R> {
    pub fn new(tree: &Tree, mech: &TransitionMechanism<R>) -> Result<Self> {
        Self::with_root(tree, mech, tree.leaves()[0])
    }

    /// Uses `root` as the vertex whose state is drawn from the uniform
    /// distribution. The resulting distribution does not depend on it.
    pub fn with_root(tree: &Tree, mech: &TransitionMechanism<R>, root: VertexId) -> Result<Self> {
        mech.check_tree(tree)?;
        if root >= tree.n_vertices() {
            return Err(Error::InvalidParameter(format!("no vertex {root}")));
        }
        let rooted = tree.rooted_at(root);
        let lambdas = mech.eigenvalues();
        let steps = rooted
            .preorder
            .iter()
            .rev()
            .filter_map(|&v| rooted.parent[v].map(|(p, e)| Step { child: v, parent: p, lambda: lambdas[e] }))
            .collect();
        Ok(Self {
            q: mech.family().states() as usize,
            n_vertices: tree.n_vertices(),
            root,
            steps,
            leaves: tree.leaves().to_vec(),
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn states(&self) -> u32 {
        self.q as u32
    }

    fn check(&self, pattern: &Pattern) -> Result<()> {
        if pattern.len() != self.leaves.len() {
            return Err(Error::InvalidParameter(format!(
                "pattern has {} states, tree has {} leaves",
                pattern.len(),
                self.leaves.len()
            )));
        }
        if pattern.states().iter().any(|&s| s as usize >= self.q) {
            return Err(Error::InvalidParameter(format!("pattern state out of range for q = {}", self.q)));
        }
        Ok(())
    }

    /// Returns (linear value, accumulated log scale).
    fn eliminate(&self, pattern: &Pattern, rescale: bool) -> (R, R) {
        let q = self.q;
        let qr = R::from_count(q);
        let mut partial = vec![R::one(); self.n_vertices * q];
        for (&v, &s) in self.leaves.iter().zip(pattern.states()) {
            for (k, slot) in partial[v * q..(v + 1) * q].iter_mut().enumerate() {
                *slot = if k == s as usize { R::one() } else { R::zero() };
            }
        }
        let mut log_scale = R::zero();
        let mut message = vec![R::zero(); q];
        for step in &self.steps {
            let child = &mut partial[step.child * q..(step.child + 1) * q];
            if rescale {
                let top = child.iter().copied().fold(R::zero(), R::max);
                if top > R::zero() {
                    child.iter_mut().for_each(|x| *x /= top);
                    log_scale += top.ln();
                }
            }
            let total: R = child.iter().copied().sum();
            let spread = (R::one() - step.lambda) / qr * total;
            for (m, &c) in message.iter_mut().zip(child.iter()) {
                *m = step.lambda * c + spread;
            }
            let parent = &mut partial[step.parent * q..(step.parent + 1) * q];
            for (p, &m) in parent.iter_mut().zip(&message) {
                *p *= m;
            }
        }
        let root: R = partial[self.root * q..(self.root + 1) * q].iter().copied().sum();
        (root / qr, log_scale)
    }

    /// Pattern probability in linear space. Underflows to zero for very
    /// large trees; use [`Likelihood::log_probability`] there.
    pub fn probability(&self, pattern: &Pattern) -> Result<R> {
        self.check(pattern)?;
        Ok(self.eliminate(pattern, false).0)
    }

    /// Natural log of the pattern probability. Small state spaces are
    /// evaluated in linear space, larger ones with per-vertex rescaling.
    pub fn log_probability(&self, pattern: &Pattern) -> Result<R> {
        self.check(pattern)?;
        let rescale = state_space_bits(self.leaves.len(), self.q as u32) >= LINEAR_SPACE_BITS;
        let (value, scale) = self.eliminate(pattern, rescale);
        Ok(value.ln() + scale)
    }
}

/// Probability of one pattern under the model.
pub fn pattern_likelihood<R: Real>(tree: &Tree, mech: &TransitionMechanism<R>, pattern: &Pattern) -> Result<R> {
    Likelihood::new(tree, mech)?.probability(pattern)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Support<R> {
    /// One probability per pattern index.
    Dense(Vec<R>),
    /// Exact counts `m_χ` out of `total` observations.
    Empirical { counts: BTreeMap<Pattern, u64>, total: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternDistribution<R> {
    labels: Vec<String>,
    q: u32,
    support: Support<R>,
}

impl<R: Real> PatternDistribution<R> {
    pub fn dense(labels: Vec<String>, q: u32, probs: Vec<R>) -> Result<Self> {
        if state_count(labels.len(), q) != Some(probs.len() as u64) {
            return Err(Error::InvalidParameter("dense vector length is not q^n".into()));
        }
        Ok(Self { labels, q, support: Support::Dense(probs) })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn support(&self) -> &Support<R> {
        &self.support
    }

    pub fn as_dense(&self) -> Option<&[R]> {
        match &self.support {
            Support::Dense(p) => Some(p),
            Support::Empirical { .. } => None,
        }
    }

    pub fn probability(&self, pattern: &Pattern) -> R {
        match &self.support {
            Support::Dense(p) => pattern.index(self.q).map_or(R::zero(), |i| p[i as usize]),
            Support::Empirical { counts, total } => {
                counts.get(pattern).map_or(R::zero(), |&m| R::from_count(m as usize) / R::from_count(*total as usize))
            }
        }
    }

    pub fn total_mass(&self) -> R {
        match &self.support {
            Support::Dense(p) => p.iter().copied().sum(),
            Support::Empirical { .. } => R::one(),
        }
    }

    /// Patterns with positive mass and their probabilities.
    pub fn entries(&self) -> Vec<(Pattern, R)> {
        match &self.support {
            Support::Dense(p) => p
                .iter()
                .enumerate()
                .filter(|(_, &x)| x > R::zero())
                .map(|(i, &x)| (Pattern::from_index(i as u64, self.n(), self.q), x))
                .collect(),
            Support::Empirical { counts, total } => counts
                .iter()
                .map(|(pat, &m)| (pat.clone(), R::from_count(m as usize) / R::from_count(*total as usize)))
                .collect(),
        }
    }

    /// Total probability of the patterns satisfying `event`.
    pub fn event_probability(&self, event: impl Fn(&[u8]) -> bool) -> R {
        self.entries().into_iter().filter(|(p, _)| event(p.states())).map(|(_, x)| x).sum()
    }

    /// Dense distribution of the states on `subset`.
    pub fn marginal<S: AsRef<str>>(&self, subset: &[S]) -> Result<Self> {
        let mut keep: Vec<usize> = subset
            .iter()
            .map(|s| {
                self.labels
                    .iter()
                    .position(|l| l == s.as_ref())
                    .ok_or_else(|| Error::UnknownLabel(s.as_ref().to_string()))
            })
            .collect::<Result<_>>()?;
        keep.sort_unstable();
        keep.dedup();
        let size = state_count(keep.len(), self.q).ok_or(Error::BudgetExceeded {
            states: (self.q as f64).powi(keep.len() as i32),
            budget: DEFAULT_BUDGET,
        })?;
        let mut out = vec![R::zero(); size as usize];
        for (pat, x) in self.entries() {
            let sub = Pattern::new(keep.iter().map(|&i| pat.states()[i]).collect());
            out[sub.index(self.q).unwrap() as usize] += x;
        }
        let labels = keep.iter().map(|&i| self.labels[i].clone()).collect();
        Self::dense(labels, self.q, out)
    }

    /// TSV dump: a `#` header with leaf order, q and n, then one
    /// `pattern<TAB>probability` row per pattern with positive mass. The
    /// pattern column is the index when `q^n` fits in 64 bits, otherwise the
    /// digit string.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# leaves={}\tq={}\tn={}\npattern\tprobability\n", self.labels.join(","), self.q, self.n());
        let by_index = state_count(self.n(), self.q).is_some();
        for (pat, x) in self.entries() {
            let key = if by_index { pat.index(self.q).unwrap().to_string() } else { pat.to_digits() };
            writeln!(out, "{key}\t{x}").unwrap();
        }
        out
    }
}

fn leaf_labels(tree: &Tree) -> Vec<String> {
    tree.leaf_labels().into_iter().map(String::from).collect()
}

/// Dense pattern distribution, refusing when `q^n` exceeds `budget`.
pub fn exact_distribution_with_budget<R: Real>(
    tree: &Tree,
    mech: &TransitionMechanism<R>,
    budget: u64,
) -> Result<PatternDistribution<R>> {
    let like = Likelihood::new(tree, mech)?;
    let (n, q) = (tree.n_leaves(), like.states());
    let total = match state_count(n, q) {
        Some(t) if t <= budget => t,
        _ => return Err(Error::BudgetExceeded { states: (q as f64).powi(n as i32), budget }),
    };
    let blocks = total.div_ceil(INDEX_BLOCK);
    let probs: Vec<R> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let end = ((b + 1) * INDEX_BLOCK).min(total);
            (b * INDEX_BLOCK..end)
                .map(|i| like.eliminate(&Pattern::from_index(i, n, q), false).0)
                .collect::<Vec<R>>()
        })
        .collect::<Vec<_>>()
        .concat();
    PatternDistribution::dense(leaf_labels(tree), q, probs)
}

pub fn exact_distribution<R: Real>(tree: &Tree, mech: &TransitionMechanism<R>) -> Result<PatternDistribution<R>> {
    exact_distribution_with_budget(tree, mech, DEFAULT_BUDGET)
}

/// Pre-order sampler shared by site simulation and Monte Carlo.
pub(crate) struct Sampler {
    q: u8,
    n_vertices: usize,
    root: VertexId,
    steps: Vec<(VertexId, VertexId, f64)>,
    leaves: Vec<VertexId>,
}

impl Sampler {
    pub(crate) fn new<R: Real>(tree: &Tree, mech: &TransitionMechanism<R>) -> Result<Self> {
        mech.check_tree(tree)?;
        let root = tree.leaves()[0];
        let rooted = tree.rooted_at(root);
        let ps: Vec<f64> = mech.probabilities().into_iter().map(Real::as_f64).collect();
        let steps = rooted
            .preorder
            .iter()
            .filter_map(|&v| rooted.parent[v].map(|(p, e)| (v, p, ps[e])))
            .collect();
        Ok(Self {
            q: mech.family().states() as u8,
            n_vertices: tree.n_vertices(),
            root,
            steps,
            leaves: tree.leaves().to_vec(),
        })
    }

    pub(crate) fn sample(&self, rng: &mut impl Rng, scratch: &mut Vec<u8>) -> Pattern {
        scratch.clear();
        scratch.resize(self.n_vertices, 0);
        scratch[self.root] = rng.gen_range(0..self.q);
        for &(child, parent, p) in &self.steps {
            let s = scratch[parent];
            scratch[child] = if rng.gen::<f64>() < p {
                if self.q == 2 {
                    1 - s
                } else {
                    let r = rng.gen_range(0..self.q - 1);
                    if r >= s { r + 1 } else { r }
                }
            } else {
                s
            };
        }
        Pattern::new(self.leaves.iter().map(|&v| scratch[v]).collect())
    }

    /// `k` patterns drawn in blocks, each block from its own stream.
    pub(crate) fn sample_many(&self, k: usize, seed: u64) -> Vec<Pattern> {
        let blocks = k.div_ceil(SITE_BLOCK);
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng::stream(seed, &[b as u64]);
                let mut scratch = Vec::new();
                let len = SITE_BLOCK.min(k - b * SITE_BLOCK);
                (0..len).map(|_| self.sample(&mut rng, &mut scratch)).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .concat()
    }
}

/// `k` i.i.d. sites: uniform state at a reference vertex, then an
/// independent change on each edge with probability `p_e`.
pub fn simulate_sites<R: Real>(tree: &Tree, mech: &TransitionMechanism<R>, k: usize, seed: u64) -> Result<Vec<Pattern>> {
    if k == 0 {
        return Err(Error::InvalidParameter("site count must be at least 1".into()));
    }
    Ok(Sampler::new(tree, mech)?.sample_many(k, seed))
}

/// Observed pattern frequencies `m_χ / k`.
pub fn empirical_distribution<R: Real>(sites: &[Pattern], labels: &[String], q: u32) -> Result<PatternDistribution<R>> {
    if sites.is_empty() {
        return Err(Error::InvalidParameter("no sites".into()));
    }
    let mut counts = BTreeMap::new();
    for s in sites {
        if s.len() != labels.len() {
            return Err(Error::InvalidParameter("site length differs from leaf count".into()));
        }
        *counts.entry(s.clone()).or_insert(0u64) += 1;
    }
    Ok(PatternDistribution {
        labels: labels.to_vec(),
        q,
        support: Support::Empirical { counts, total: sites.len() as u64 },
    })
}

/// One site per line, states as digits in sorted-label order.
pub fn write_sites(sites: &[Pattern]) -> String {
    let mut out = String::with_capacity(sites.len() * (sites.first().map_or(0, Pattern::len) + 1));
    for s in sites {
        out.push_str(&s.to_digits());
        out.push('\n');
    }
    out
}

pub fn read_sites(text: &str, n: usize, q: u32) -> Result<Vec<Pattern>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = Pattern::from_digits(l, q)?;
            if p.len() != n {
                return Err(Error::InvalidParameter(format!("site `{l}` has {} states, expected {n}", p.len())));
            }
            Ok(p)
        })
        .collect()
}
