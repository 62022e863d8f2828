//! Transition mechanisms for symmetric Markov processes on trees.
//!
//! Two families are supported: the two-state symmetric channel (`Cfn`) and
//! the symmetric `q`-state model, where a change of state picks one of the
//! other `q - 1` states uniformly. Both are described per edge by a single
//! value, either a change probability `p` or a length `t`, and both are
//! driven by the second eigenvalue `λ` of the edge's transition matrix:
//!
//! | family      | `λ(p)`          | `t(λ)`      | `H(x)`                      |
//! |-------------|-----------------|-------------|-----------------------------|
//! | `Cfn`       | `1 - 2p`        | `-½ ln λ`   | `½ + ½ e^(-2x)`             |
//! | `Symmetric` | `1 - p q/(q-1)` | `-ln λ`     | `1/q + (1 - 1/q) e^(-x)`    |
//!
//! The probability that the endpoints of a path differ is
//! `(1 - 1/q)(1 - Π λ_e) = 1 - H(Σ t_e)`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tree::{restrict as restrict_tree, EdgeId, Tree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Cfn,
    Symmetric { q: u32 },
}

impl Family {
    pub fn symmetric(q: u32) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidParameter(format!("state count must be at least 2, got {q}")));
        }
        Ok(Family::Symmetric { q })
    }

    pub fn states(self) -> u32 {
        match self {
            Family::Cfn => 2,
            Family::Symmetric { q } => q,
        }
    }

    /// Limit of the pairwise agreement probability, `c = 1/q`.
    pub fn limit<R: Real>(self) -> R {
        R::one() / R::from_count(self.states() as usize)
    }

    /// Supremum of admissible change probabilities, `(q-1)/q`.
    pub fn max_probability<R: Real>(self) -> R {
        R::one() - self.limit::<R>()
    }

    pub fn eigen_from_probability<R: Real>(self, p: R) -> R {
        R::one() - p / self.max_probability::<R>()
    }

    pub fn probability_from_eigen<R: Real>(self, lambda: R) -> R {
        self.max_probability::<R>() * (R::one() - lambda)
    }

    fn length_scale<R: Real>(self) -> R {
        match self {
            Family::Cfn => R::lit(0.5),
            Family::Symmetric { .. } => R::one(),
        }
    }

    pub fn length_from_probability<R: Real>(self, p: R) -> R {
        -self.length_scale::<R>() * (-p / self.max_probability::<R>()).ln_1p()
    }

    pub fn probability_from_length<R: Real>(self, t: R) -> R {
        -self.max_probability::<R>() * (-t / self.length_scale::<R>()).exp_m1()
    }

    pub fn eigen_from_length<R: Real>(self, t: R) -> R {
        (-t / self.length_scale::<R>()).exp()
    }

    /// Pairwise agreement probability as a function of path length.
    pub fn h<R: Real>(self, x: R) -> R {
        let c = self.limit::<R>();
        c + (R::one() - c) * self.eigen_from_length(x)
    }

    /// Change probability of two edges in series.
    pub fn compose_probability<R: Real>(self, a: R, b: R) -> R {
        self.probability_from_eigen(self.eigen_from_probability(a) * self.eigen_from_probability(b))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Cfn => f.write_str("cfn"),
            Family::Symmetric { q } => write!(f, "symmetric-{q}"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    /// `cfn`, or `symmetric-<q>` / `q<q>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "cfn" {
            return Ok(Family::Cfn);
        }
        let digits = s.strip_prefix("symmetric-").or_else(|| s.strip_prefix('q'));
        match digits.and_then(|d| d.parse::<u32>().ok()) {
            Some(q) => Family::symmetric(q),
            None => Err(Error::InvalidParameter(format!("unknown model family `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Probability,
    Length,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" | "probability" => Ok(Scale::Probability),
            "t" | "length" => Ok(Scale::Length),
            other => Err(Error::InvalidParameter(format!("unknown parameterization `{other}`"))),
        }
    }
}

/// Per-edge parameters, indexed by edge id of the tree they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMechanism<R> {
    family: Family,
    scale: Scale,
    values: Vec<R>,
}

impl<R: Real> TransitionMechanism<R> {
    pub fn new(family: Family, scale: Scale, values: Vec<R>) -> Result<Self> {
        if let Family::Symmetric { q } = family {
            Family::symmetric(q)?;
        }
        let max_p = family.max_probability::<R>();
        for (e, &v) in values.iter().enumerate() {
            let ok = match scale {
                Scale::Probability => v >= R::zero() && v < max_p,
                Scale::Length => v >= R::zero() && v.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidParameter(format!("edge {e}: value {v} out of range for {family}")));
            }
        }
        Ok(Self { family, scale, values })
    }

    /// Same change probability on every edge of `tree`.
    pub fn constant(tree: &Tree, family: Family, p: R) -> Result<Self> {
        Self::new(family, Scale::Probability, vec![p; tree.n_edges()])
    }

    /// Interprets the tree's raw branch values.
    pub fn from_annotations(tree: &Tree, family: Family, scale: Scale) -> Result<Self> {
        let values = tree
            .annotations()
            .iter()
            .enumerate()
            .map(|(e, a)| {
                a.map(R::lit)
                    .ok_or_else(|| Error::InvalidParameter(format!("edge {e} has no branch value")))
            })
            .collect::<Result<Vec<R>>>()?;
        Self::new(family, scale, values)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn n_edges(&self) -> usize {
        self.values.len()
    }

    fn value(&self, e: EdgeId) -> Result<R> {
        self.values.get(e).copied().ok_or(Error::UnknownEdge(e))
    }

    pub fn probability(&self, e: EdgeId) -> Result<R> {
        let v = self.value(e)?;
        Ok(match self.scale {
            Scale::Probability => v,
            Scale::Length => self.family.probability_from_length(v),
        })
    }

    pub fn length(&self, e: EdgeId) -> Result<R> {
        let v = self.value(e)?;
        Ok(match self.scale {
            Scale::Probability => self.family.length_from_probability(v),
            Scale::Length => v,
        })
    }

    /// Second eigenvalue `λ_e` of the edge's transition matrix.
    pub fn eigenvalue(&self, e: EdgeId) -> Result<R> {
        let v = self.value(e)?;
        Ok(match self.scale {
            Scale::Probability => self.family.eigen_from_probability(v),
            Scale::Length => self.family.eigen_from_length(v),
        })
    }

    pub fn probabilities(&self) -> Vec<R> {
        (0..self.n_edges()).map(|e| self.probability(e).unwrap()).collect()
    }

    pub fn eigenvalues(&self) -> Vec<R> {
        (0..self.n_edges()).map(|e| self.eigenvalue(e).unwrap()).collect()
    }

    pub fn to_length(&self) -> Self {
        let values = (0..self.n_edges()).map(|e| self.length(e).unwrap()).collect();
        Self { family: self.family, scale: Scale::Length, values }
    }

    pub fn to_probability(&self) -> Self {
        Self { family: self.family, scale: Scale::Probability, values: self.probabilities() }
    }

    /// Errors unless the mechanism has exactly one value per edge of `tree`.
    pub fn check_tree(&self, tree: &Tree) -> Result<()> {
        if self.n_edges() != tree.n_edges() {
            return Err(Error::InvalidParameter(format!(
                "mechanism has {} edges, tree has {}",
                self.n_edges(),
                tree.n_edges()
            )));
        }
        Ok(())
    }

    /// Strict model check: every edge has `0 < p_e`.
    pub fn validate_strict(&self) -> Result<()> {
        for e in 0..self.n_edges() {
            if self.probability(e)? <= R::zero() {
                return Err(Error::InvalidParameter(format!("edge {e} has zero change probability")));
            }
        }
        Ok(())
    }

    /// JSON dump: `{family, q, parameterization, values: {edge_id: value}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let values: serde_json::Map<String, serde_json::Value> = self
            .values
            .iter()
            .enumerate()
            .map(|(e, v)| (e.to_string(), serde_json::json!(v.as_f64())))
            .collect();
        serde_json::json!({
            "family": match self.family { Family::Cfn => "cfn", Family::Symmetric { .. } => "symmetric" },
            "q": self.family.states(),
            "parameterization": self.scale,
            "values": values,
        })
    }
}

/// Probability that the endpoints of `path` are in different states.
pub fn path_disagreement<R: Real>(mech: &TransitionMechanism<R>, path: &[EdgeId]) -> Result<R> {
    if path.is_empty() {
        return Err(Error::InvalidParameter("empty path".into()));
    }
    let mut prod = R::one();
    for &e in path {
        prod *= mech.eigenvalue(e)?;
    }
    Ok(mech.family().probability_from_eigen(prod))
}

pub fn evaluate_h<R: Real>(family: Family, x: R) -> Result<R> {
    if !(x >= R::zero()) {
        return Err(Error::InvalidParameter(format!("path length must be non-negative, got {x}")));
    }
    Ok(family.h(x))
}

pub fn constant_c<R: Real>(family: Family) -> R {
    family.limit()
}

pub fn p_to_t<R: Real>(mech: &TransitionMechanism<R>) -> TransitionMechanism<R> {
    mech.to_length()
}

pub fn t_to_p<R: Real>(mech: &TransitionMechanism<R>) -> TransitionMechanism<R> {
    mech.to_probability()
}

/// Restriction of a model tree to a leaf subset. Suppressed paths get the
/// composite change probability (or summed length) of their edges.
pub fn restrict_model<R: Real, S: AsRef<str>>(
    tree: &Tree,
    mech: &TransitionMechanism<R>,
    subset: &[S],
) -> Result<(Tree, TransitionMechanism<R>)> {
    mech.check_tree(tree)?;
    let family = mech.family();
    let (t, values) = match mech.scale() {
        Scale::Probability => restrict_tree(tree, mech.values(), subset, |a, b| family.compose_probability(*a, *b))?,
        Scale::Length => restrict_tree(tree, mech.values(), subset, |a, b| *a + *b)?,
    };
    Ok((t, TransitionMechanism::new(family, mech.scale(), values)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport<R> {
    pub lower: R,
    pub upper: R,
    /// Edges whose change probability falls outside `[lower, upper]`.
    pub violations: Vec<(EdgeId, R)>,
    pub diagnostics: Vec<String>,
    pub passed: bool,
}

/// Checks `f ≤ p_e ≤ g` on every edge.
pub fn validate_mechanism<R: Real>(tree: &Tree, mech: &TransitionMechanism<R>, f: R, g: R) -> ValidationReport<R> {
    let mut diagnostics = Vec::new();
    if f > g {
        diagnostics.push(format!("empty constraint interval: lower bound {f} exceeds upper bound {g}"));
    }
    if let Err(e) = mech.check_tree(tree) {
        diagnostics.push(e.to_string());
    }
    let violations: Vec<(EdgeId, R)> = mech
        .probabilities()
        .into_iter()
        .enumerate()
        .filter(|&(_, p)| p < f || p > g)
        .collect();
    for (e, p) in &violations {
        diagnostics.push(format!("edge {e}: p = {p} outside [{f}, {g}]"));
    }
    let passed = diagnostics.is_empty();
    ValidationReport { lower: f, upper: g, violations, diagnostics, passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::parse_newick;

    fn mech(family: Family, ps: &[f64]) -> TransitionMechanism<f64> {
        TransitionMechanism::new(family, Scale::Probability, ps.to_vec()).unwrap()
    }

    #[test]
    fn disagreement_examples() {
        let m = mech(Family::Cfn, &[0.1, 0.1]);
        assert!((path_disagreement(&m, &[0, 1]).unwrap() - 0.18).abs() < 1e-15);
        let m = mech(Family::Cfn, &[0.1, 0.2, 0.3]);
        assert!((path_disagreement(&m, &[0, 1, 2]).unwrap() - 0.404).abs() < 1e-15);
        assert_eq!(path_disagreement(&m, &[1]).unwrap(), 0.2);
        assert!(path_disagreement(&m, &[]).is_err());
        assert_eq!(path_disagreement(&m, &[7]), Err(Error::UnknownEdge(7)));
    }

    #[test]
    fn two_state_symmetric_matches_cfn() {
        let ps = [0.05, 0.3, 0.45, 0.2];
        let a = mech(Family::Cfn, &ps);
        let b = mech(Family::Symmetric { q: 2 }, &ps);
        for path in [&[0][..], &[0, 1], &[1, 2, 3], &[0, 1, 2, 3]] {
            let (x, y) = (path_disagreement(&a, path).unwrap(), path_disagreement(&b, path).unwrap());
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn conversions() {
        let m = mech(Family::Cfn, &[0.1, 0.0, 0.25]);
        let t = p_to_t(&m);
        assert!((t.values()[0] - 0.111_571_775_657_104_9).abs() < 1e-15);
        assert_eq!(t.values()[1], 0.0);
        let back = t_to_p(&t);
        for (a, b) in m.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300));
        }
        assert_eq!(Family::Cfn.probability_from_length(0.0f64), 0.0);
    }

    #[test]
    fn h_function() {
        assert_eq!(evaluate_h(Family::Cfn, 0.0f64).unwrap(), 1.0);
        let x = -0.5 * 0.8f64.ln();
        assert!((evaluate_h(Family::Cfn, x).unwrap() - 0.9).abs() < 1e-15);
        let q4 = Family::symmetric(4).unwrap();
        assert!((evaluate_h(q4, 60.0f64).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(constant_c::<f64>(q4), 0.25);
        assert_eq!(constant_c::<f64>(Family::Cfn), 0.5);
        assert!(evaluate_h(Family::Cfn, -1.0f64).is_err());
        let mut prev = 1.0;
        for i in 1..50 {
            let h = evaluate_h(q4, i as f64 * 0.1).unwrap();
            assert!(h < prev && h > 0.25);
            prev = h;
        }
    }

    #[test]
    fn range_validation() {
        assert!(TransitionMechanism::new(Family::Cfn, Scale::Probability, vec![0.5f64]).is_err());
        assert!(TransitionMechanism::new(Family::Cfn, Scale::Probability, vec![-0.1f64]).is_err());
        assert!(TransitionMechanism::new(Family::Symmetric { q: 4 }, Scale::Probability, vec![0.7f64]).is_ok());
        assert!(TransitionMechanism::new(Family::Symmetric { q: 4 }, Scale::Probability, vec![0.75f64]).is_err());
        assert!(TransitionMechanism::new(Family::Symmetric { q: 1 }, Scale::Probability, vec![0.1f64]).is_err());
        assert!(TransitionMechanism::new(Family::Cfn, Scale::Length, vec![f64::INFINITY]).is_err());
        let zero = mech(Family::Cfn, &[0.0, 0.1]);
        assert!(zero.validate_strict().is_err());
        assert!(mech(Family::Cfn, &[0.2, 0.1]).validate_strict().is_ok());
    }

    #[test]
    fn validate_report() {
        let t = parse_newick("((a,b),(c,d));").unwrap();
        let m = TransitionMechanism::constant(&t, Family::Cfn, 0.2).unwrap();
        assert!(validate_mechanism(&t, &m, 0.1, 0.3).passed);
        let mut vals = vec![0.2; 5];
        vals[3] = 0.4;
        let m = mech(Family::Cfn, &vals);
        let r = validate_mechanism(&t, &m, 0.1, 0.3);
        assert!(!r.passed);
        assert_eq!(r.violations, vec![(3, 0.4)]);
        let r = validate_mechanism(&t, &TransitionMechanism::constant(&t, Family::Cfn, 0.15).unwrap(), 0.2, 0.1);
        assert!(!r.passed);
        assert!(r.diagnostics.iter().any(|d| d.contains("empty constraint interval")));
    }

    #[test]
    fn annotations_and_json() {
        let t = parse_newick("((a:0.1,b:0.1):0.1,(c:0.1,d:0.1));").unwrap();
        let m = TransitionMechanism::<f64>::from_annotations(&t, Family::Cfn, Scale::Probability).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.1));
        let j = m.to_json();
        assert_eq!(j["family"], "cfn");
        assert_eq!(j["q"], 2);
        assert_eq!(j["parameterization"], "probability");
        assert_eq!(j["values"]["4"], 0.1);
        let bare = parse_newick("((a,b),(c,d));").unwrap();
        assert!(TransitionMechanism::<f64>::from_annotations(&bare, Family::Cfn, Scale::Probability).is_err());
    }

    #[test]
    fn family_parsing() {
        assert_eq!("cfn".parse::<Family>().unwrap(), Family::Cfn);
        assert_eq!("q4".parse::<Family>().unwrap(), Family::Symmetric { q: 4 });
        assert_eq!("symmetric-3".parse::<Family>().unwrap(), Family::Symmetric { q: 3 });
        assert!("q1".parse::<Family>().is_err());
        assert!("jc".parse::<Family>().is_err());
        assert_eq!(Family::Symmetric { q: 4 }.to_string().parse::<Family>().unwrap(), Family::Symmetric { q: 4 });
    }

    #[test]
    fn works_in_single_precision() {
        let m = TransitionMechanism::new(Family::Cfn, Scale::Probability, vec![0.1f32, 0.1]).unwrap();
        assert!((path_disagreement(&m, &[0, 1]).unwrap() - 0.18).abs() < 1e-6);
    }
}
