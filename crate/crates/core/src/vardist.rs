//! Variational distance `Σ_χ |P₁(χ) − P₂(χ)|` between pattern
//! distributions, exactly or by Monte Carlo.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::TransitionMechanism;
use crate::pattern_dist::{Likelihood, Pattern, PatternDistribution, Sampler, Support};
use crate::rng;
use crate::scalar::Real;
use crate::tree::Tree;

const MC_BLOCK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Mc,
    EmpiricalGap,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Mc => "mc",
            Method::EmpiricalGap => "gap",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "mc" => Ok(Method::Mc),
            "gap" | "empirical-gap" => Ok(Method::EmpiricalGap),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VardistEstimate<R> {
    pub estimate: R,
    pub std_error: R,
    pub samples: u64,
    pub method: Method,
}

impl<R: Real> VardistEstimate<R> {
    fn exact(value: R) -> Self {
        Self { estimate: clamp(value), std_error: R::zero(), samples: 0, method: Method::Exact }
    }
}

fn clamp<R: Real>(x: R) -> R {
    x.max(R::zero()).min(R::lit(2.0))
}

fn check_comparable<R: Real>(d1: &PatternDistribution<R>, d2: &PatternDistribution<R>) -> Result<()> {
    if d1.q() != d2.q() || d1.labels() != d2.labels() {
        return Err(Error::LabelMismatch);
    }
    Ok(())
}

/// `Σ|a_i − e_i|` for dense `a` against counts `e`, touching only observed
/// patterns: `Σ_obs |a − m/k| + (mass(a) − Σ_obs a)`.
fn dense_vs_counts<R: Real>(dense: &[R], counts: &BTreeMap<Pattern, u64>, total: u64, q: u32) -> R {
    let k = R::from_count(total as usize);
    let mut observed_mass = R::zero();
    let mut diff = R::zero();
    for (pat, &m) in counts {
        let a = pat.index(q).map_or(R::zero(), |i| dense[i as usize]);
        observed_mass += a;
        diff += (a - R::from_count(m as usize) / k).abs();
    }
    let mass: R = dense.iter().copied().sum();
    diff + (mass - observed_mass).max(R::zero())
}

/// Exact distance between two distributions over the same leaf order.
/// Dense and empirical supports can be mixed.
pub fn vardist_exact<R: Real>(d1: &PatternDistribution<R>, d2: &PatternDistribution<R>) -> Result<VardistEstimate<R>> {
    check_comparable(d1, d2)?;
    let value = match (d1.support(), d2.support()) {
        (Support::Dense(a), Support::Dense(b)) => a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum(),
        (Support::Dense(a), Support::Empirical { counts, total })
        | (Support::Empirical { counts, total }, Support::Dense(a)) => dense_vs_counts(a, counts, *total, d1.q()),
        (Support::Empirical { .. }, Support::Empirical { .. }) => {
            let mut merged: BTreeMap<Pattern, (R, R)> = BTreeMap::new();
            for (p, x) in d1.entries() {
                merged.entry(p).or_insert((R::zero(), R::zero())).0 = x;
            }
            for (p, x) in d2.entries() {
                merged.entry(p).or_insert((R::zero(), R::zero())).1 = x;
            }
            merged.values().map(|&(x, y)| (x - y).abs()).sum()
        }
    };
    Ok(VardistEstimate::exact(value))
}

/// `2(1 − Σ_χ min(P₁, P₂))`, the overlap form of the same distance.
pub fn vardist_overlap<R: Real>(d1: &PatternDistribution<R>, d2: &PatternDistribution<R>) -> Result<R> {
    check_comparable(d1, d2)?;
    let overlap: R = match (d1.as_dense(), d2.as_dense()) {
        (Some(a), Some(b)) => a.iter().zip(b).map(|(&x, &y)| x.min(y)).sum(),
        _ => d1.entries().into_iter().map(|(p, x)| x.min(d2.probability(&p))).sum(),
    };
    Ok(R::lit(2.0) * (R::one() - overlap))
}

fn check_pair<R: Real>(
    t1: &Tree,
    m1: &TransitionMechanism<R>,
    t2: &Tree,
    m2: &TransitionMechanism<R>,
) -> Result<()> {
    if !t1.same_labels(t2) {
        return Err(Error::LabelMismatch);
    }
    if m1.family() != m2.family() {
        return Err(Error::FamilyMismatch(m1.family().to_string(), m2.family().to_string()));
    }
    m1.check_tree(t1)?;
    m2.check_tree(t2)
}

/// Per-block (sum, sum of squares) of `2·max(0, 1 − P_to(χ)/P_from(χ))`
/// with `χ ~ P_from`.
fn one_sided<R: Real>(
    from: (&Tree, &TransitionMechanism<R>),
    to: (&Tree, &TransitionMechanism<R>),
    samples: usize,
    seed: u64,
) -> Result<(R, R)> {
    let sampler = Sampler::new(from.0, from.1)?;
    let l_from = Likelihood::new(from.0, from.1)?;
    let l_to = Likelihood::new(to.0, to.1)?;
    let blocks = samples.div_ceil(MC_BLOCK);
    let partial: Vec<(R, R)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, &[b as u64]);
            let mut scratch = Vec::new();
            let len = MC_BLOCK.min(samples - b * MC_BLOCK);
            let (mut s, mut ss) = (R::zero(), R::zero());
            for _ in 0..len {
                let chi = sampler.sample(&mut rng, &mut scratch);
                let a = l_from.log_probability(&chi).unwrap();
                let b = l_to.log_probability(&chi).unwrap();
                let x = R::lit(2.0) * (R::one() - (b - a).exp()).max(R::zero());
                s += x;
                ss += x * x;
            }
            (s, ss)
        })
        .collect();
    Ok(partial.into_iter().fold((R::zero(), R::zero()), |acc, x| (acc.0 + x.0, acc.1 + x.1)))
}

fn summarize<R: Real>(sum: R, sum_sq: R, count: usize) -> (R, R) {
    let k = R::from_count(count);
    let mean = sum / k;
    if count < 2 {
        return (mean, R::zero());
    }
    let var = ((sum_sq - k * mean * mean) / (k - R::one())).max(R::zero());
    (mean, (var / k).sqrt())
}

/// Unbiased Monte Carlo estimate: `χ ~ P₁`, average of
/// `2·max(0, 1 − P₂(χ)/P₁(χ))`, with the standard error of the mean.
pub fn vardist_mc<R: Real>(
    t1: &Tree,
    m1: &TransitionMechanism<R>,
    t2: &Tree,
    m2: &TransitionMechanism<R>,
    samples: usize,
    seed: u64,
) -> Result<VardistEstimate<R>> {
    check_pair(t1, m1, t2, m2)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    let (s, ss) = one_sided((t1, m1), (t2, m2), samples, seed)?;
    let (mean, se) = summarize(s, ss, samples);
    Ok(VardistEstimate { estimate: clamp(mean), std_error: se, samples: samples as u64, method: Method::Mc })
}

/// Average of the two one-sided estimators, `samples` draws from each side.
pub fn vardist_mc_symmetrized<R: Real>(
    t1: &Tree,
    m1: &TransitionMechanism<R>,
    t2: &Tree,
    m2: &TransitionMechanism<R>,
    samples: usize,
    seed: u64,
) -> Result<VardistEstimate<R>> {
    let a = vardist_mc(t1, m1, t2, m2, samples, rng::derive_seed(seed, &[0]))?;
    let b = vardist_mc(t2, m2, t1, m1, samples, rng::derive_seed(seed, &[1]))?;
    let half = R::lit(0.5);
    Ok(VardistEstimate {
        estimate: half * (a.estimate + b.estimate),
        std_error: half * (a.std_error * a.std_error + b.std_error * b.std_error).sqrt(),
        samples: 2 * samples as u64,
        method: Method::Mc,
    })
}

/// Distance between the empirical distribution of `k` simulated sites and
/// the model they came from, evaluated over the observed patterns only.
pub fn empirical_gap<R: Real>(tree: &Tree, mech: &TransitionMechanism<R>, k: usize, seed: u64) -> Result<VardistEstimate<R>> {
    let sites = crate::pattern_dist::simulate_sites(tree, mech, k, seed)?;
    empirical_gap_from_sites(tree, mech, &sites)
}

pub fn empirical_gap_from_sites<R: Real>(
    tree: &Tree,
    mech: &TransitionMechanism<R>,
    sites: &[Pattern],
) -> Result<VardistEstimate<R>> {
    if sites.is_empty() {
        return Err(Error::InvalidParameter("no sites".into()));
    }
    let like = Likelihood::new(tree, mech)?;
    let mut counts: BTreeMap<&Pattern, u64> = BTreeMap::new();
    for s in sites {
        *counts.entry(s).or_insert(0) += 1;
    }
    let k = R::from_count(sites.len());
    let mut observed = R::zero();
    let mut diff = R::zero();
    for (pat, m) in counts {
        let p = like.log_probability(pat)?.exp();
        observed += p;
        diff += (R::from_count(m as usize) / k - p).abs();
    }
    let value = diff + (R::one() - observed).max(R::zero());
    Ok(VardistEstimate { estimate: clamp(value), std_error: R::zero(), samples: sites.len() as u64, method: Method::EmpiricalGap })
}
