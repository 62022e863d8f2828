//! Reproducible experiment drivers: configuration, per-trial rows and
//! summary reports.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::discriminator::{self, chop, close_pair_guarantee, close_pairs, CertifyOptions, PairSet, Route};
use crate::error::{Error, Result};
use crate::models::{Family, Scale, TransitionMechanism};
use crate::pattern_dist::{self, PatternDistribution, DEFAULT_BUDGET};
use crate::random_trees::{all_binary_trees, default_labels, random_tree, uniform_tree, TreeKind};
use crate::rng;
use crate::tree::{write_newick, Tree};
use crate::vardist;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    Separation,
    EmpiricalGap,
    LemmaAudit,
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separation" => Ok(Self::Separation),
            "empirical-gap" | "gap" => Ok(Self::EmpiricalGap),
            "lemma-audit" | "audit" => Ok(Self::LemmaAudit),
            other => Err(Error::InvalidParameter(format!("unknown experiment `{other}`"))),
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Separation => "separation",
            Self::EmpiricalGap => "empirical-gap",
            Self::LemmaAudit => "lemma-audit",
        })
    }
}

/// How the separation experiment evaluates the variational distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VardistMode {
    /// Exact when `q^n` is within budget, otherwise Monte Carlo.
    Auto,
    Exact,
    Mc,
    /// Certificates only.
    Off,
}

impl FromStr for VardistMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "exact" => Ok(Self::Exact),
            "mc" => Ok(Self::Mc),
            "off" | "none" => Ok(Self::Off),
            other => Err(Error::InvalidParameter(format!("unknown vardist mode `{other}`"))),
        }
    }
}

impl fmt::Display for VardistMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::Exact => "exact",
            Self::Mc => "mc",
            Self::Off => "off",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    pub ns: Vec<usize>,
    pub family: Family,
    /// Per-edge change probabilities are drawn uniformly from `[f, g]`.
    pub f: f64,
    pub g: f64,
    pub trials: usize,
    pub seed: u64,
    /// Site counts for the empirical gap experiment.
    pub ks: Vec<usize>,
    pub trees: TreeKind,
    pub output: Option<PathBuf>,
    pub h: Option<usize>,
    pub route: Route,
    pub q_chop: Option<usize>,
    pub vardist: VardistMode,
    pub samples: usize,
    pub budget: u64,
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad value `{value}` for `{key}`")))
}

/// Parses `1e6`-style counts as well as plain integers.
fn parse_count(key: &str, value: &str) -> Result<usize> {
    if let Ok(v) = value.trim().parse::<usize>() {
        return Ok(v);
    }
    let x: f64 = parse_value(key, value)?;
    if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
        Ok(x as usize)
    } else {
        Err(Error::InvalidParameter(format!("bad count `{value}` for `{key}`")))
    }
}

impl ExperimentConfig {
    pub fn new(name: ExperimentName) -> Self {
        let (ns, trials, ks) = match name {
            ExperimentName::Separation => (vec![8, 10, 12], 50, vec![1000]),
            ExperimentName::EmpiricalGap => (vec![2, 20], 20, vec![10, 100, 1000, 10_000]),
            ExperimentName::LemmaAudit => (vec![4, 5, 6, 7, 8, 16, 32, 64], 100, vec![15_000]),
        };
        Self {
            name,
            ns,
            family: Family::Cfn,
            f: 0.2,
            g: 0.2,
            trials,
            seed: 0,
            ks,
            trees: TreeKind::Uniform,
            output: None,
            h: None,
            route: Route::Greedy,
            q_chop: None,
            vardist: VardistMode::Auto,
            samples: 100_000,
            budget: DEFAULT_BUDGET,
        }
    }

    /// Sets one `key=value` setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "experiment" | "name" => self.name = value.parse()?,
            "n" | "ns" => self.ns = parse_list(key, value)?,
            "family" | "model" => self.family = value.parse()?,
            "q" => {
                let q: u32 = parse_value(key, value)?;
                self.family = if q == 2 { Family::Cfn } else { Family::symmetric(q)? };
            }
            "f" => self.f = parse_value(key, value)?,
            "g" => self.g = parse_value(key, value)?,
            "p" => {
                self.f = parse_value(key, value)?;
                self.g = self.f;
            }
            "trials" => self.trials = parse_count(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "k" | "ks" => {
                self.ks = value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_count(key, s)).collect::<Result<_>>()?
            }
            "trees" | "tree-distribution" => self.trees = value.parse()?,
            "output" => self.output = Some(PathBuf::from(value)),
            "h" => self.h = Some(parse_value(key, value)?),
            "route" => self.route = value.parse()?,
            "q-chop" | "q_chop" => self.q_chop = Some(parse_value(key, value)?),
            "vardist" => self.vardist = value.parse()?,
            "samples" => self.samples = parse_count(key, value)?,
            "budget" => self.budget = parse_count(key, value)? as u64,
            other => return Err(Error::InvalidParameter(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Reads `key=value` lines; blank lines and `#` comments are skipped.
    /// The file's `experiment` key, when present, overrides `name`.
    pub fn parse(name: ExperimentName, text: &str) -> Result<Self> {
        let mut cfg = Self::new(name);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn apply_overrides<K: AsRef<str>, V: AsRef<str>>(&mut self, overrides: &[(K, V)]) -> Result<()> {
        for (k, v) in overrides {
            self.set(k.as_ref(), v.as_ref())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let max_p: f64 = self.family.max_probability();
        if !(self.f >= 0.0 && self.f <= self.g && self.g < max_p) {
            return Err(Error::InvalidParameter(format!(
                "need 0 ≤ f ≤ g < {max_p} for {}, got f={} g={}",
                self.family, self.f, self.g
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.ns.is_empty() {
            return Err(Error::InvalidParameter("no leaf counts given".into()));
        }
        let min_n = match self.name {
            ExperimentName::Separation | ExperimentName::LemmaAudit => 4,
            ExperimentName::EmpiricalGap => 2,
        };
        if let Some(&n) = self.ns.iter().find(|&&n| n < min_n) {
            return Err(Error::TooFewLeaves { needed: min_n, got: n });
        }
        if self.name == ExperimentName::EmpiricalGap && (self.ks.is_empty() || self.ks.contains(&0)) {
            return Err(Error::InvalidParameter("site counts must be positive".into()));
        }
        if self.h == Some(0) {
            return Err(Error::InvalidParameter("h must be at least 1".into()));
        }
        if matches!(self.q_chop, Some(q) if q < 2) {
            return Err(Error::InvalidParameter("q-chop must be at least 2".into()));
        }
        if matches!(self.vardist, VardistMode::Mc | VardistMode::Auto) && self.samples == 0 {
            return Err(Error::InvalidParameter("samples must be positive".into()));
        }
        Ok(())
    }

    /// Every setting, as `key=value` text that [`ExperimentConfig::parse`]
    /// reads back.
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        line("experiment", self.name.to_string());
        line("n", join(&self.ns));
        line("family", self.family.to_string());
        line("f", self.f.to_string());
        line("g", self.g.to_string());
        line("trials", self.trials.to_string());
        line("seed", self.seed.to_string());
        line("k", join(&self.ks));
        line("trees", self.trees.to_string());
        if let Some(o) = &self.output {
            line("output", o.display().to_string());
        }
        if let Some(h) = self.h {
            line("h", h.to_string());
        }
        line("route", self.route.to_string());
        if let Some(q) = self.q_chop {
            line("q-chop", q.to_string());
        }
        line("vardist", self.vardist.to_string());
        line("samples", self.samples.to_string());
        line("budget", self.budget.to_string());
        out
    }

    fn to_json(&self) -> serde_json::Value {
        let settings: BTreeMap<String, String> = self
            .to_text()
            .lines()
            .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect();
        json!(settings)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    /// Sub-experiment this row belongs to, e.g. `k=1000` or a suite name.
    pub case: String,
    pub n: usize,
    pub trial: usize,
    /// Seed that reproduces this row alone.
    pub seed: u64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q10: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Stats {
    /// Summary of the finite values, `None` when there are none.
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q10: quantile(&v, 0.1),
            q25: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q75: quantile(&v, 0.75),
            q90: quantile(&v, 0.9),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    /// Experiment-specific results beyond the per-group statistics.
    pub extra: serde_json::Value,
}

impl ExperimentReport {
    fn new(config: &ExperimentConfig, columns: &[&str], rows: Vec<Row>) -> Self {
        Self {
            config: config.clone(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
            extra: serde_json::Value::Null,
        }
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of `column` in rows matching `case` and `n`.
    pub fn values(&self, case: &str, n: usize, column: &str) -> Vec<f64> {
        let Some(j) = self.column(column) else { return Vec::new() };
        self.rows.iter().filter(|r| r.case == case && r.n == n).map(|r| r.values[j]).collect()
    }

    pub fn stats(&self, case: &str, n: usize, column: &str) -> Option<Stats> {
        Stats::of(&self.values(case, n, column))
    }

    /// `(case, n)` groups in first-appearance order.
    pub fn groups(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for r in &self.rows {
            if !out.iter().any(|(c, n)| *c == r.case && *n == r.n) {
                out.push((r.case.clone(), r.n));
            }
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("case\tn\ttrial\tseed\t{}\n", self.columns.join("\t"));
        for r in &self.rows {
            write!(out, "{}\t{}\t{}\t{}", r.case, r.n, r.trial, r.seed).unwrap();
            for v in &r.values {
                write!(out, "\t{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Per-group statistics of every column, plus provenance.
    pub fn summary(&self) -> serde_json::Value {
        let groups: Vec<serde_json::Value> = self
            .groups()
            .into_iter()
            .map(|(case, n)| {
                let stats: serde_json::Map<String, serde_json::Value> = self
                    .columns
                    .iter()
                    .map(|c| (c.clone(), json!(self.stats(&case, n, c))))
                    .collect();
                json!({ "case": case, "n": n, "rows": self.values(&case, n, &self.columns[0]).len(), "stats": stats })
            })
            .collect();
        json!({
            "experiment": self.config.name,
            "groups": groups,
            "extra": self.extra,
            "provenance": { "config": self.config.to_json(), "version": crate::VERSION },
        })
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).unwrap() + "\n"
    }

    /// Writes `<prefix>.tsv` and `<prefix>.json`.
    pub fn write(&self, prefix: &Path) -> Result<()> {
        let with_ext = |ext: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(ext);
            PathBuf::from(p)
        };
        std::fs::write(with_ext(".tsv"), self.to_tsv())?;
        std::fs::write(with_ext(".json"), self.summary_json())?;
        Ok(())
    }
}

/// Per-edge change probabilities drawn uniformly from `[f, g]`.
pub fn random_mechanism(tree: &Tree, family: Family, f: f64, g: f64, seed: u64) -> Result<TransitionMechanism<f64>> {
    let mut rng = rng::stream(seed, &[]);
    let values = (0..tree.n_edges()).map(|_| if f == g { f } else { rng.gen_range(f..=g) }).collect();
    TransitionMechanism::new(family, Scale::Probability, values)
}

fn model_tree(kind: TreeKind, n: usize, seed: u64) -> Result<Tree> {
    random_tree(kind, &default_labels(n), seed)
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    match config.name {
        ExperimentName::Separation => exp_separation(config),
        ExperimentName::EmpiricalGap => exp_empirical_gap(config),
        ExperimentName::LemmaAudit => exp_lemma_audit(config),
    }
}

fn within_budget(family: Family, n: usize, budget: u64) -> bool {
    (family.states() as f64).powi(n as i32) <= budget as f64
}

/// For each `n`, one uniform first tree with a fixed mechanism against
/// `trials` random second trees: the variational distance, its gap to 2,
/// and the certified lower bound.
pub fn exp_separation(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let options = CertifyOptions { h: config.h, route: config.route, g: Some(config.g), q_chop: config.q_chop };
    let mut rows = Vec::new();
    for &n in &config.ns {
        let base = rng::derive_seed(config.seed, &[n as u64]);
        let t1 = uniform_tree(&default_labels(n), rng::derive_seed(base, &[0]))?;
        let m1 = random_mechanism(&t1, config.family, config.f, config.g, rng::derive_seed(base, &[1]))?;
        let exact = match config.vardist {
            VardistMode::Exact => true,
            VardistMode::Auto => within_budget(config.family, n, config.budget),
            VardistMode::Mc | VardistMode::Off => false,
        };
        let d1 = if exact { Some(pattern_dist::exact_distribution_with_budget(&t1, &m1, config.budget)?) } else { None };
        let trial_rows: Vec<Row> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = rng::derive_seed(config.seed, &[n as u64, trial as u64]);
                let t2 = model_tree(config.trees, n, rng::derive_seed(seed, &[0]))?;
                let m2 = random_mechanism(&t2, config.family, config.f, config.g, rng::derive_seed(seed, &[1]))?;
                let (v, se) = match (&d1, config.vardist) {
                    (Some(d1), _) => {
                        let d2 = pattern_dist::exact_distribution_with_budget(&t2, &m2, config.budget)?;
                        (vardist::vardist_exact(d1, &d2)?.estimate, 0.0)
                    }
                    (None, VardistMode::Off) => (f64::NAN, f64::NAN),
                    (None, _) => {
                        let e = vardist::vardist_mc(&t1, &m1, &t2, &m2, config.samples, rng::derive_seed(seed, &[2]))?;
                        (e.estimate, e.std_error)
                    }
                };
                let cert = discriminator::certify(&t1, &m1, &t2, &m2, &options)?;
                let reference = cert.reference.as_ref().map_or(f64::NAN, |r| r.bound);
                Ok(Row {
                    case: "separation".into(),
                    n,
                    trial,
                    seed,
                    values: vec![v, se, 2.0 - v, cert.bound, reference, cert.selected.len() as f64, cert.h as f64],
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(trial_rows);
    }
    let mut report =
        ExperimentReport::new(config, &["vardist", "std_error", "gap_to_two", "bound", "reference_bound", "selected", "h"], rows);
    let medians: Vec<serde_json::Value> = config
        .ns
        .iter()
        .map(|&n| {
            json!({
                "n": n,
                "median_vardist": report.stats("separation", n, "vardist").map(|s| s.median),
                "median_bound": report.stats("separation", n, "bound").map(|s| s.median),
            })
        })
        .collect();
    report.extra = json!({ "medians": medians });
    Ok(report)
}

/// Distance between the empirical pattern distribution of `k` simulated
/// sites and the generating model, for each `n` and `k`. The model tree is
/// fixed per `(n, trial)`; only the sites change with `k`.
pub fn exp_empirical_gap(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut rows = Vec::new();
    for &n in &config.ns {
        for &k in &config.ks {
            let group: Vec<Row> = (0..config.trials)
                .into_par_iter()
                .map(|trial| {
                    let seed = rng::derive_seed(config.seed, &[n as u64, trial as u64]);
                    let tree = model_tree(config.trees, n, rng::derive_seed(seed, &[0]))?;
                    let mech = random_mechanism(&tree, config.family, config.f, config.g, rng::derive_seed(seed, &[1]))?;
                    let gap = vardist::empirical_gap(&tree, &mech, k, rng::derive_seed(seed, &[2, k as u64]))?;
                    Ok(Row { case: format!("k={k}"), n, trial, seed, values: vec![gap.estimate, k as f64] })
                })
                .collect::<Result<_>>()?;
            rows.extend(group);
        }
    }
    let mut report = ExperimentReport::new(config, &["gap", "k"], rows);
    let medians: Vec<serde_json::Value> = config
        .ns
        .iter()
        .flat_map(|&n| config.ks.iter().map(move |&k| (n, k)))
        .map(|(n, k)| json!({ "n": n, "k": k, "median_gap": report.stats(&format!("k={k}"), n, "gap").map(|s| s.median) }))
        .collect();
    report.extra = json!({ "medians": medians });
    Ok(report)
}

/// Pearson chi-square test that `kind` draws every binary tree on `n`
/// leaves equally often. Returns `(statistic, degrees of freedom, p-value)`.
pub fn uniformity_chi_square(kind: TreeKind, n: usize, draws: usize, seed: u64) -> Result<(f64, usize, f64)> {
    let labels = default_labels(n);
    let cells: BTreeMap<String, usize> =
        all_binary_trees(&labels)?.iter().enumerate().map(|(i, t)| (write_newick(t), i)).collect();
    let counts = (0..draws)
        .into_par_iter()
        .map(|i| {
            let t = random_tree(kind, &labels, rng::derive_seed(seed, &[i as u64]))?;
            Ok(cells[&write_newick(&t)])
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .fold(vec![0usize; cells.len()], |mut acc, c| {
            acc[c] += 1;
            acc
        });
    let expected = draws as f64 / cells.len() as f64;
    let stat = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum::<f64>();
    let df = cells.len() - 1;
    let p = ChiSquared::new(df as f64).map_err(|e| Error::Invariant(e.to_string()))?.sf(stat);
    Ok((stat, df, p))
}

/// Largest `|P[all pairs in S agree] − Π_{i∈S} P[pair i agrees]|` over all
/// subsets `S` of `pairs`, computed from the exact pattern distribution.
pub fn separability_defect(dist: &PatternDistribution<f64>, pairs: &PairSet) -> Result<f64> {
    let m = pairs.len();
    if m > 16 {
        return Err(Error::InvalidParameter("too many pairs for subset enumeration".into()));
    }
    let pos = |l: &str| dist.labels().iter().position(|x| x == l).ok_or_else(|| Error::UnknownLabel(l.to_string()));
    let idx: Vec<(usize, usize)> = pairs.iter().map(|p| Ok((pos(&p.a)?, pos(&p.b)?))).collect::<Result<_>>()?;
    let mut by_mask = vec![0.0; 1 << m];
    for (pat, x) in dist.entries() {
        let s = pat.states();
        let mask = idx.iter().enumerate().filter(|(_, &(a, b))| s[a] == s[b]).fold(0usize, |acc, (i, _)| acc | 1 << i);
        by_mask[mask] += x;
    }
    // Superset sums: P[every pair in S agrees].
    let mut all_agree = by_mask;
    for i in 0..m {
        for s in 0..1usize << m {
            if s & 1 << i == 0 {
                all_agree[s] += all_agree[s | 1 << i];
            }
        }
    }
    let single: Vec<f64> = (0..m).map(|i| all_agree[1 << i]).collect();
    let mut worst = 0.0f64;
    for (s, &p) in all_agree.iter().enumerate() {
        let prod: f64 = (0..m).filter(|i| s & 1 << i != 0).map(|i| single[i]).product();
        worst = worst.max((p - prod).abs());
    }
    Ok(worst)
}

fn close_pair_failures(tree: &Tree) -> usize {
    match close_pairs(tree) {
        Ok(ps) => {
            let ok = ps.check(tree).is_ok()
                && ps.len() >= close_pair_guarantee(tree.n_leaves())
                && ps.iter().all(|p| p.distance() == 2 || p.distance() == 3);
            usize::from(!ok)
        }
        Err(_) => 1,
    }
}

/// Postcondition suites: close pairs (exhaustive for `n ≤ 8`, random
/// above), chopping, generator uniformity at `n = 5`, and the product law
/// of agreement events over edge-disjoint pairs.
pub fn exp_lemma_audit(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut rows = Vec::new();
    for &n in &config.ns {
        let labels = default_labels(n);
        let (checked, failures) = if n <= 8 {
            let all = all_binary_trees(&labels)?;
            (all.len(), all.par_iter().map(close_pair_failures).sum())
        } else {
            let fails: usize = (0..config.trials)
                .into_par_iter()
                .map(|trial| {
                    let t = uniform_tree(&labels, rng::derive_seed(config.seed, &[0, n as u64, trial as u64]))?;
                    Ok(close_pair_failures(&t))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .sum();
            (config.trials, fails)
        };
        let seed = rng::derive_seed(config.seed, &[0, n as u64]);
        rows.push(Row { case: "close-pairs".into(), n, trial: 0, seed, values: vec![checked as f64, failures as f64, f64::NAN] });
    }

    for &n in &config.ns {
        let labels = default_labels(n);
        let results: Vec<(usize, usize)> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let t = uniform_tree(&labels, rng::derive_seed(config.seed, &[1, n as u64, trial as u64]))?;
                let mut fails = 0;
                for q in 2..=8 {
                    let ok = chop(&t, q).is_ok_and(|r| r.check(&t).is_ok() && r.cut_edges.len() <= n / q);
                    fails += usize::from(!ok);
                }
                Ok((7, fails))
            })
            .collect::<Result<_>>()?;
        let checked = results.iter().map(|r| r.0).sum::<usize>();
        let failures = results.iter().map(|r| r.1).sum::<usize>();
        let seed = rng::derive_seed(config.seed, &[1, n as u64]);
        rows.push(Row { case: "chop".into(), n, trial: 0, seed, values: vec![checked as f64, failures as f64, f64::NAN] });
    }

    let draws = config.ks.iter().copied().max().unwrap_or(15_000).max(1000);
    let seed = rng::derive_seed(config.seed, &[2, 0]);
    let (_, _, p) = uniformity_chi_square(TreeKind::Uniform, 5, draws, seed)?;
    rows.push(Row { case: "uniformity".into(), n: 5, trial: 0, seed, values: vec![draws as f64, f64::from(u8::from(p <= 0.001)), p] });
    let seed = rng::derive_seed(config.seed, &[2, 1]);
    let p = relabel_invariance_p_value(draws, seed)?;
    rows.push(Row { case: "relabelling".into(), n: 5, trial: 0, seed, values: vec![draws as f64, f64::from(u8::from(p <= 0.001)), p] });

    let sep_ns: Vec<usize> = config.ns.iter().map(|&n| n.min(10)).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    for n in sep_ns {
        let worst: Vec<f64> = (0..config.trials.min(100))
            .into_par_iter()
            .map(|trial| {
                let seed = rng::derive_seed(config.seed, &[3, n as u64, trial as u64]);
                let t = uniform_tree(&default_labels(n), rng::derive_seed(seed, &[0]))?;
                let m = random_mechanism(&t, config.family, config.f, config.g, rng::derive_seed(seed, &[1]))?;
                let d = pattern_dist::exact_distribution(&t, &m)?;
                separability_defect(&d, &close_pairs(&t)?)
            })
            .collect::<Result<_>>()?;
        let failures = worst.iter().filter(|&&w| w > 1e-9).count();
        let max = worst.iter().copied().fold(0.0, f64::max);
        let seed = rng::derive_seed(config.seed, &[3, n as u64]);
        rows.push(Row { case: "separability".into(), n, trial: 0, seed, values: vec![worst.len() as f64, failures as f64, max] });
    }

    let mut report = ExperimentReport::new(config, &["checked", "failures", "statistic"], rows);
    let mut totals: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for r in &report.rows {
        let e = totals.entry(r.case.clone()).or_default();
        e.0 += r.values[0] as u64;
        e.1 += r.values[1] as u64;
    }
    let totals: serde_json::Map<String, serde_json::Value> = totals
        .into_iter()
        .map(|(k, (c, f))| (k, json!({ "checked": c, "failures": f, "passed": f == 0 })))
        .collect();
    report.extra = json!({ "suites": totals });
    Ok(report)
}

/// Chi-square p-value for the claim that Yule–Harding draws followed by a
/// uniform relabelling have the Yule–Harding law, on `n = 5` trees.
pub fn relabel_invariance_p_value(draws: usize, seed: u64) -> Result<f64> {
    let labels = default_labels(5);
    let tally = |relabelled: bool, stream: u64| -> Result<BTreeMap<String, usize>> {
        let names = (0..draws)
            .into_par_iter()
            .map(|i| {
                let s = rng::derive_seed(seed, &[stream, i as u64]);
                let t = random_tree(TreeKind::YuleHarding, &labels, s)?;
                let t = if relabelled {
                    crate::random_trees::relabel(&t, &crate::random_trees::random_permutation(&labels, s))?
                } else {
                    t
                };
                Ok(write_newick(&t))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut m = BTreeMap::new();
        for name in names {
            *m.entry(name).or_insert(0) += 1;
        }
        Ok(m)
    };
    let a = tally(false, 0)?;
    let b = tally(true, 1)?;
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    // Two-sample chi-square on equal sample sizes.
    let mut stat = 0.0;
    for k in &keys {
        let (x, y) = (*a.get(*k).unwrap_or(&0) as f64, *b.get(*k).unwrap_or(&0) as f64);
        stat += (x - y).powi(2) / (x + y);
    }
    let df = (keys.len() - 1) as f64;
    Ok(ChiSquared::new(df).map_err(|e| Error::Invariant(e.to_string()))?.sf(stat))
}
