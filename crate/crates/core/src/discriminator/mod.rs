//! Event-based lower bounds on the variational distance between two tree
//! models, built from close leaf pairs of the first tree that are far apart
//! in the second.

mod chop;
mod pairs;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use chop::{chop, ChopResult, Component};
pub use pairs::{close_pair_guarantee, close_pairs, LeafPair, PairSet};

use crate::error::{Error, Result};
use crate::models::{path_disagreement, TransitionMechanism};
use crate::scalar::Real;
use crate::tree::{EdgeId, Rooted, Tree};

/// `max(2, ⌊log₂ log₂ n⌋)`.
pub fn default_h(n: usize) -> usize {
    let ll = (n.max(2) as f64).log2().log2();
    (ll.max(0.0).floor() as usize).max(2)
}

/// `⌈log₂² n⌉`, at least 2.
pub fn default_q_chop(n: usize) -> usize {
    let l = (n.max(2) as f64).log2();
    ((l * l).ceil() as usize).max(2)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Distance filter, then shortest-path-first edge-disjoint greedy.
    #[default]
    Greedy,
    /// One far pair per infected piece of a chopping of the second tree.
    Chopping,
}

impl FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Route::Greedy),
            "chopping" => Ok(Route::Chopping),
            other => Err(Error::InvalidParameter(format!("unknown route `{other}`"))),
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::Greedy => "greedy",
            Route::Chopping => "chopping",
        })
    }
}

fn check_labels(pairs: &PairSet, tree: &Tree) -> Result<()> {
    for p in pairs.iter() {
        for l in [&p.a, &p.b] {
            if !tree.has_label(l) {
                return Err(Error::UnknownLabel(l.clone()));
            }
        }
    }
    Ok(())
}

fn paths_in(rooted: &Rooted, tree: &Tree, pairs: &PairSet) -> Result<Vec<Vec<EdgeId>>> {
    pairs.iter().map(|p| Ok(rooted.path_between(tree.leaf(&p.a)?, tree.leaf(&p.b)?))).collect()
}

/// Indices of pairs at distance at least `h` in `tree2` with pairwise
/// edge-disjoint `tree2` paths, picked greedily shortest path first.
pub fn select_far_pairs(pairs: &PairSet, tree2: &Tree, h: usize) -> Result<Vec<usize>> {
    if h == 0 {
        return Err(Error::InvalidParameter("h must be at least 1".into()));
    }
    check_labels(pairs, tree2)?;
    let rooted = tree2.rooted_at(0);
    let paths = paths_in(&rooted, tree2, pairs)?;
    let mut order: Vec<usize> = (0..pairs.len()).filter(|&i| paths[i].len() >= h).collect();
    order.sort_by_key(|&i| (paths[i].len(), i));
    let mut claimed = BTreeSet::new();
    let mut chosen = Vec::new();
    for i in order {
        if paths[i].iter().all(|e| !claimed.contains(e)) {
            claimed.extend(paths[i].iter().copied());
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Chops `tree2` with parameter `q_chop` and, in every nondegenerate piece
/// containing both members of some pair at distance at least `h`, picks the
/// shortest such pair. Paths inside distinct pieces never share an edge.
pub fn select_far_pairs_chopping(pairs: &PairSet, tree2: &Tree, h: usize, q_chop: usize) -> Result<Vec<usize>> {
    if h == 0 {
        return Err(Error::InvalidParameter("h must be at least 1".into()));
    }
    check_labels(pairs, tree2)?;
    let pieces = chop(tree2, q_chop)?;
    let rooted = tree2.rooted_at(0);
    let paths = paths_in(&rooted, tree2, pairs)?;
    let mut chosen = Vec::new();
    for (j, piece) in pieces.components.iter().enumerate() {
        if Some(j) == pieces.degenerate {
            continue;
        }
        let inside = |l: &String| piece.leaves.binary_search(l).is_ok();
        let pick = (0..pairs.len())
            .filter(|&i| inside(&pairs.pairs[i].a) && inside(&pairs.pairs[i].b) && paths[i].len() >= h)
            .min_by_key(|&i| (paths[i].len(), i));
        chosen.extend(pick);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// `P[state(a_i) = state(b_i)]` for every `i` in `selected`, along the
/// pair's path in `tree`.
pub fn pair_agreement_probs<R: Real>(
    tree: &Tree,
    mech: &TransitionMechanism<R>,
    pairs: &PairSet,
    selected: &[usize],
) -> Result<Vec<R>> {
    mech.check_tree(tree)?;
    let rooted = tree.rooted_at(0);
    selected
        .iter()
        .map(|&i| {
            let p = pairs
                .pairs
                .get(i)
                .ok_or_else(|| Error::InvalidParameter(format!("pair index {i} out of range ({})", pairs.len())))?;
            let path = rooted.path_between(tree.leaf(&p.a)?, tree.leaf(&p.b)?);
            Ok(R::one() - path_disagreement(mech, &path)?)
        })
        .collect()
}

/// Law of a sum of independent Bernoulli variables, by convolution.
pub fn z_distribution<R: Real>(probs: &[R]) -> Result<Vec<R>> {
    let mut pmf = Vec::with_capacity(probs.len() + 1);
    pmf.push(R::one());
    for &p in probs {
        if !(p >= R::zero() && p <= R::one()) {
            return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
        }
        pmf.push(R::zero());
        for k in (0..pmf.len()).rev() {
            let stay = pmf[k] * (R::one() - p);
            let step = if k > 0 { pmf[k - 1] * p } else { R::zero() };
            pmf[k] = stay + step;
        }
    }
    Ok(pmf)
}

/// `P[Z > l]` for every `l` in `0..pmf.len()`.
pub fn upper_tails<R: Real>(pmf: &[R]) -> Vec<R> {
    let mut tails = vec![R::zero(); pmf.len()];
    let mut acc = R::zero();
    for l in (0..pmf.len()).rev() {
        tails[l] = acc;
        acc += pmf[l];
    }
    tails
}

/// `1 − 3g + 6g² − 4g³`: agreement floor for a path of at most three edges
/// each flipping with probability at most `g`.
pub fn close_pair_floor(g: f64) -> f64 {
    1.0 - 3.0 * g + 6.0 * g * g - 4.0 * g * g * g
}

/// `½(1 + (1 − 2f)^h)`: agreement ceiling for a path of at least `h` edges
/// each flipping with probability at least `f`.
pub fn far_pair_ceiling(f: f64, h: usize) -> f64 {
    0.5 * (1.0 + (1.0 - 2.0 * f).powi(h as i32))
}

/// `½(1 − 3g + 6g² − 4g³ + ½)·m`, midway between the two means.
pub fn reference_threshold(g: f64, m: usize) -> f64 {
    0.5 * (close_pair_floor(g) + 0.5) * m as f64
}

/// `2·exp(−λ²/(2t²k))`, the tail bound for a martingale with `k` steps of
/// size at most `t`.
pub fn azuma_bound(t: f64, k: u64, lambda: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) || k == 0 || !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("azuma bound needs t > 0, k ≥ 1, λ ≥ 0; got t={t}, k={k}, λ={lambda}")));
    }
    Ok(2.0 * (-(lambda * lambda) / (2.0 * t * t * k as f64)).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    /// Minimum distance in the second tree; `None` uses [`default_h`].
    pub h: Option<usize>,
    pub route: Route,
    /// Upper bound on the first tree's flip probabilities, for the
    /// reference threshold.
    pub g: Option<f64>,
    /// Chopping parameter; `None` uses [`default_q_chop`].
    pub q_chop: Option<usize>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { h: None, route: Route::Greedy, g: None, q_chop: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceGap<R> {
    pub g: f64,
    pub level: f64,
    pub bound: R,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate<R> {
    pub n: usize,
    pub h: usize,
    pub route: Route,
    pub pairs: PairSet,
    pub selected: Vec<usize>,
    pub probs1: Vec<R>,
    pub probs2: Vec<R>,
    pub pmf1: Vec<R>,
    pub pmf2: Vec<R>,
    /// Maximizing `l` for the event `Z > l`.
    pub threshold: usize,
    pub bound: R,
    pub reference: Option<ReferenceGap<R>>,
}

impl<R: Real> Certificate<R> {
    pub fn mean1(&self) -> R {
        self.probs1.iter().copied().sum()
    }

    pub fn mean2(&self) -> R {
        self.probs2.iter().copied().sum()
    }

    /// `2|P₁[Z > l] − P₂[Z > l]|`.
    pub fn bound_at(&self, l: usize) -> R {
        let (t1, t2) = (upper_tails(&self.pmf1), upper_tails(&self.pmf2));
        match (t1.get(l), t2.get(l)) {
            (Some(&a), Some(&b)) => R::lit(2.0) * (a - b).abs(),
            _ => R::zero(),
        }
    }
}

/// Certificate with default options and the given `h`.
pub fn vardist_lower_bound<R: Real>(
    t1: &Tree,
    m1: &TransitionMechanism<R>,
    t2: &Tree,
    m2: &TransitionMechanism<R>,
    h: usize,
) -> Result<Certificate<R>> {
    certify(t1, m1, t2, m2, &CertifyOptions { h: Some(h), ..CertifyOptions::default() })
}

/// Lower bound on the variational distance from the statistic `Z`, the
/// number of selected pairs whose leaves agree.
pub fn certify<R: Real>(
    t1: &Tree,
    m1: &TransitionMechanism<R>,
    t2: &Tree,
    m2: &TransitionMechanism<R>,
    options: &CertifyOptions,
) -> Result<Certificate<R>> {
    if !t1.same_labels(t2) {
        return Err(Error::LabelMismatch);
    }
    if m1.family() != m2.family() {
        return Err(Error::FamilyMismatch(m1.family().to_string(), m2.family().to_string()));
    }
    m1.check_tree(t1)?;
    m2.check_tree(t2)?;
    let n = t1.n_leaves();
    let h = options.h.unwrap_or_else(|| default_h(n));
    let pairs = close_pairs(t1)?;
    let selected = match options.route {
        Route::Greedy => select_far_pairs(&pairs, t2, h)?,
        Route::Chopping => {
            select_far_pairs_chopping(&pairs, t2, h, options.q_chop.unwrap_or_else(|| default_q_chop(n)))?
        }
    };
    let probs1 = pair_agreement_probs(t1, m1, &pairs, &selected)?;
    let probs2 = pair_agreement_probs(t2, m2, &pairs, &selected)?;
    let pmf1 = z_distribution(&probs1)?;
    let pmf2 = z_distribution(&probs2)?;
    let (tail1, tail2) = (upper_tails(&pmf1), upper_tails(&pmf2));
    let mut threshold = 0;
    let mut gap = R::zero();
    for l in 0..tail1.len() {
        let d = (tail1[l] - tail2[l]).abs();
        if d > gap {
            gap = d;
            threshold = l;
        }
    }
    let mut cert = Certificate {
        n,
        h,
        route: options.route,
        pairs,
        selected,
        probs1,
        probs2,
        pmf1,
        pmf2,
        threshold,
        bound: (R::lit(2.0) * gap).min(R::lit(2.0)),
        reference: None,
    };
    if let Some(g) = options.g {
        let level = reference_threshold(g, cert.selected.len());
        cert.reference = Some(ReferenceGap { g, level, bound: cert.bound_at(level.floor() as usize) });
    }
    Ok(cert)
}
