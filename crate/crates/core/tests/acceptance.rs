//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{flip_enumeration, random_model, Draws};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use treevar::discriminator::{
    azuma_bound, chop, close_pair_guarantee, close_pairs, pair_agreement_probs, select_far_pairs, vardist_lower_bound,
    z_distribution,
};
use treevar::experiments::{
    exp_empirical_gap, exp_separation, random_mechanism, relabel_invariance_p_value, separability_defect,
    ExperimentConfig, ExperimentName,
};
use treevar::models::{path_disagreement, restrict_model};
use treevar::pattern_dist::{exact_distribution, simulate_sites, write_sites, Likelihood, Pattern};
use treevar::random_trees::{all_binary_trees, default_labels, uniform_tree};
use treevar::rng::derive_seed;
use treevar::vardist::{vardist_exact, vardist_mc};
use treevar::{write_newick, Family, Mechanism64, Scale};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) }
}

fn c01_path_disagreement() -> Outcome {
    let start = Instant::now();
    let mut d = Draws::new(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = d.int(1, 10);
        let ps: Vec<f64> = (0..len).map(|_| d.uniform(0.0, 0.5)).collect();
        let m = Mechanism64::new(Family::Cfn, Scale::Probability, ps.clone()).unwrap();
        let path: Vec<usize> = (0..len).collect();
        worst = worst.max((path_disagreement(&m, &path).unwrap() - flip_enumeration(&ps)).abs());
    }
    let t = start.elapsed();
    outcome(worst <= 1e-12 && within(t, 1), format!("max error {worst:.2e} over 1000 paths, {t:.2?}"))
}

fn c02_distribution_validity() -> Outcome {
    let start = Instant::now();
    let mut d = Draws::new(102);
    let (mut mass_err, mut sym_err) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let n = d.int(3, 12);
        let (t, m) = random_model(n, Family::Cfn, 0.05, 0.45, derive_seed(102, &[i]));
        let dist = exact_distribution(&t, &m).unwrap();
        mass_err = mass_err.max((dist.total_mass() - 1.0).abs());
        let probs = dist.as_dense().unwrap();
        let mask = (1usize << n) - 1;
        for (idx, &p) in probs.iter().enumerate() {
            sym_err = sym_err.max((p - probs[idx ^ mask]).abs());
        }
    }
    let t = start.elapsed();
    outcome(
        mass_err <= 1e-9 && sym_err <= 1e-12 && within(t, 30),
        format!("mass error {mass_err:.2e}, complement error {sym_err:.2e}, {t:.2?}"),
    )
}

fn c03_invariance() -> Outcome {
    let start = Instant::now();
    let mut d = Draws::new(103);
    let (mut root_err, mut marg_err) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let n = d.int(4, 10);
        let (t, m) = random_model(n, Family::Cfn, 0.05, 0.45, derive_seed(103, &[i]));
        let reference = Likelihood::new(&t, &m).unwrap();
        let other = Likelihood::with_root(&t, &m, d.int(0, t.n_vertices() - 1)).unwrap();
        for _ in 0..16 {
            let p = Pattern::from_index(d.int(0, (1 << n) - 1) as u64, n, 2);
            root_err = root_err.max((reference.probability(&p).unwrap() - other.probability(&p).unwrap()).abs());
        }
        let labels = t.leaf_labels();
        let k = d.int(2, n - 1);
        let mut subset: Vec<&str> = Vec::new();
        while subset.len() < k {
            let l = labels[d.int(0, n - 1)];
            if !subset.contains(&l) {
                subset.push(l);
            }
        }
        let marginal = exact_distribution(&t, &m).unwrap().marginal(&subset).unwrap();
        let (rt, rm) = restrict_model(&t, &m, &subset).unwrap();
        let direct = exact_distribution(&rt, &rm).unwrap();
        for (a, b) in marginal.as_dense().unwrap().iter().zip(direct.as_dense().unwrap()) {
            marg_err = marg_err.max((a - b).abs());
        }
    }
    let t = start.elapsed();
    outcome(
        root_err <= 1e-12 && marg_err <= 1e-9 && within(t, 60),
        format!("root relocation {root_err:.2e}, marginal vs restriction {marg_err:.2e}, {t:.2?}"),
    )
}

fn c04_separability() -> Outcome {
    let mut d = Draws::new(104);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n = d.int(4, 10);
        let (t, m) = random_model(n, Family::Cfn, 0.05, 0.45, derive_seed(104, &[i]));
        let dist = exact_distribution(&t, &m).unwrap();
        worst = worst.max(separability_defect(&dist, &close_pairs(&t).unwrap()).unwrap());
    }
    outcome(worst <= 1e-9, format!("max factorization defect {worst:.2e}"))
}

fn c05_close_pairs_exhaustive() -> Outcome {
    let start = Instant::now();
    let (mut trees, mut failures) = (0, 0);
    for n in 4..=8 {
        for t in all_binary_trees(&default_labels(n)).unwrap() {
            trees += 1;
            let ok = close_pairs(&t).is_ok_and(|ps| {
                ps.check(&t).is_ok()
                    && ps.len() >= close_pair_guarantee(n)
                    && ps.iter().all(|p| p.distance() == 2 || p.distance() == 3)
            });
            failures += usize::from(!ok);
        }
    }
    let t = start.elapsed();
    outcome(trees == 11463 && failures == 0 && within(t, 60), format!("{trees} trees, {failures} failures, {t:.2?}"))
}

fn c06_chop() -> Outcome {
    let mut d = Draws::new(106);
    let mut failures = 0;
    for i in 0..1000 {
        let n = d.int(3, 64);
        let q = d.int(2, 8);
        let t = uniform_tree(&default_labels(n), derive_seed(106, &[i])).unwrap();
        let ok = chop(&t, q).is_ok_and(|r| r.check(&t).is_ok() && r.cut_edges.len() <= n / q);
        failures += usize::from(!ok);
    }
    outcome(failures == 0, format!("1000 cases, {failures} violations"))
}

fn c07_generator_laws() -> Outcome {
    let labels = default_labels(5);
    let index: BTreeMap<String, usize> =
        all_binary_trees(&labels).unwrap().iter().enumerate().map(|(i, t)| (write_newick(t), i)).collect();
    let mut counts = vec![0usize; index.len()];
    for i in 0..15_000 {
        counts[index[&write_newick(&uniform_tree(&labels, derive_seed(107, &[i])).unwrap())]] += 1;
    }
    let expected = 15_000.0 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let p_uniform = ChiSquared::new((counts.len() - 1) as f64).unwrap().sf(stat);
    let p_relabel = relabel_invariance_p_value(15_000, 107).unwrap();
    outcome(
        p_uniform > 0.001 && p_relabel > 0.001,
        format!("uniformity p = {p_uniform:.4}, relabelled law p = {p_relabel:.4}"),
    )
}

fn c08_certificate_soundness() -> Outcome {
    let mut d = Draws::new(108);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100 {
        let n = d.int(4, 10);
        let s = derive_seed(108, &[i]);
        let t1 = uniform_tree(&default_labels(n), derive_seed(s, &[0])).unwrap();
        let t2 = uniform_tree(&default_labels(n), derive_seed(s, &[1])).unwrap();
        let m1 = random_mechanism(&t1, Family::Cfn, 0.2, 0.2, s).unwrap();
        let m2 = random_mechanism(&t2, Family::Cfn, 0.2, 0.2, s).unwrap();
        let exact =
            vardist_exact(&exact_distribution(&t1, &m1).unwrap(), &exact_distribution(&t2, &m2).unwrap()).unwrap().estimate;
        let bound = vardist_lower_bound(&t1, &m1, &t2, &m2, d.int(1, 3)).unwrap().bound;
        worst = worst.max(bound - exact);
        violations += usize::from(bound > exact + 1e-9);
    }
    outcome(violations == 0, format!("100 pairs, {violations} violations, max(bound - exact) = {worst:.3}"))
}

fn c09_z_law() -> Outcome {
    let mut d = Draws::new(109);
    let mut worst_sigma = 0.0f64;
    let mut failures = 0;
    let mut bins = 0;
    for i in 0..20 {
        let n = d.int(6, 12);
        let s = derive_seed(109, &[i]);
        let t1 = uniform_tree(&default_labels(n), derive_seed(s, &[0])).unwrap();
        let t2 = uniform_tree(&default_labels(n), derive_seed(s, &[1])).unwrap();
        let m2 = random_mechanism(&t2, Family::Cfn, 0.05, 0.45, s).unwrap();
        let pairs = close_pairs(&t1).unwrap();
        let selected = select_far_pairs(&pairs, &t2, 1).unwrap();
        let pmf = z_distribution(&pair_agreement_probs(&t2, &m2, &pairs, &selected).unwrap()).unwrap();
        let labels = t2.leaf_labels();
        let pos = |l: &str| labels.iter().position(|x| *x == l).unwrap();
        let idx: Vec<(usize, usize)> =
            selected.iter().map(|&j| (pos(&pairs.pairs[j].a), pos(&pairs.pairs[j].b))).collect();
        let sites = simulate_sites(&t2, &m2, 1_000_000, derive_seed(s, &[2])).unwrap();
        let mut counts = vec![0usize; pmf.len()];
        for site in &sites {
            let st = site.states();
            counts[idx.iter().filter(|&&(a, b)| st[a] == st[b]).count()] += 1;
        }
        let k = sites.len() as f64;
        for (&c, &p) in counts.iter().zip(&pmf) {
            bins += 1;
            let sd = (k * p * (1.0 - p)).sqrt();
            let dev = (c as f64 - k * p).abs();
            if sd > 0.0 {
                worst_sigma = worst_sigma.max(dev / sd);
            }
            failures += usize::from(dev > 4.0 * sd.max(1e-12) && dev >= 1.0);
        }
    }
    outcome(failures == 0, format!("{bins} bins over 20 instances, {failures} beyond 4σ, worst {worst_sigma:.2}σ"))
}

fn c10_trend() -> Outcome {
    let start = Instant::now();
    let mut exact = ExperimentConfig::new(ExperimentName::Separation);
    exact
        .apply_overrides(&[("n", "8,10,12"), ("p", "0.2"), ("trials", "50"), ("seed", "110"), ("vardist", "exact")])
        .unwrap();
    let report = exp_separation(&exact).unwrap();
    let medians: Vec<f64> = [8, 10, 12].iter().map(|&n| report.stats("separation", n, "vardist").unwrap().median).collect();
    let monotone = medians.windows(2).all(|w| w[1] >= w[0]);

    let mut large = ExperimentConfig::new(ExperimentName::Separation);
    large
        .apply_overrides(&[("n", "32,256"), ("p", "0.2"), ("trials", "50"), ("seed", "110"), ("vardist", "off"), ("h", "2")])
        .unwrap();
    let report = exp_separation(&large).unwrap();
    let b32 = report.stats("separation", 32, "bound").unwrap().median;
    let b256 = report.stats("separation", 256, "bound").unwrap().median;
    let t = start.elapsed();
    outcome(
        monotone && b256 > b32 && within(t, 600),
        format!(
            "median vardist n=8,10,12: {:.4}, {:.4}, {:.4}; median bound n=32: {b32:.4}, n=256: {b256:.4}; {t:.2?}",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn c11_empirical_gap() -> Outcome {
    let start = Instant::now();
    let mut c = ExperimentConfig::new(ExperimentName::EmpiricalGap);
    c.apply_overrides(&[("n", "20"), ("p", "0.2"), ("k", "1000"), ("trials", "20"), ("seed", "111")]).unwrap();
    let big = median(exp_empirical_gap(&c).unwrap().values("k=1000", 20, "gap"));
    c.apply_overrides(&[("n", "2"), ("k", "1e6")]).unwrap();
    let small = exp_empirical_gap(&c).unwrap().values("k=1000000", 2, "gap").into_iter().fold(0.0, f64::max);
    let t = start.elapsed();
    outcome(
        big > 1.9 && small < 0.01 && within(t, 60),
        format!("n=20 k=1000 median gap {big:.4}; n=2 k=1e6 max gap {small:.5}; {t:.2?}"),
    )
}

fn c12_monte_carlo() -> Outcome {
    let mut d = Draws::new(112);
    let mut inside = 0;
    for i in 0..100 {
        let n = d.int(4, 10);
        let s = derive_seed(112, &[i]);
        let (t1, m1) = random_model(n, Family::Cfn, 0.05, 0.45, derive_seed(s, &[0]));
        let (t2, m2) = random_model(n, Family::Cfn, 0.05, 0.45, derive_seed(s, &[1]));
        let exact =
            vardist_exact(&exact_distribution(&t1, &m1).unwrap(), &exact_distribution(&t2, &m2).unwrap()).unwrap().estimate;
        let mc = vardist_mc(&t1, &m1, &t2, &m2, 100_000, derive_seed(s, &[2])).unwrap();
        inside += usize::from((mc.estimate - exact).abs() <= 4.0 * mc.std_error);
    }
    outcome(inside >= 95, format!("{inside}/100 estimates within 4 standard errors"))
}

fn c13_azuma() -> Outcome {
    let v = azuma_bound(1.0, 100, 30.0).unwrap();
    let err = (v - 2.0 * (-4.5f64).exp()).abs();
    outcome(err <= 1e-12, format!("azuma(1, 100, 30) = {v:.6}, error {err:.1e}"))
}

/// Output bytes of several seeded runs, the second time on one thread.
fn seeded_outputs() -> Vec<String> {
    let mut out = Vec::new();
    let labels = default_labels(24);
    out.push(write_newick(&uniform_tree(&labels, 114).unwrap()));
    let (t, m) = random_model(12, Family::Cfn, 0.05, 0.45, 114);
    out.push(write_sites(&simulate_sites(&t, &m, 5000, 114).unwrap()));
    let (t2, m2) = random_model(12, Family::Cfn, 0.05, 0.45, 115);
    out.push(format!("{:?}", vardist_mc(&t, &m, &t2, &m2, 20_000, 114).unwrap()));
    let mut c = ExperimentConfig::new(ExperimentName::Separation);
    c.apply_overrides(&[("n", "8,40"), ("trials", "6"), ("seed", "114"), ("samples", "5000")]).unwrap();
    let r = exp_separation(&c).unwrap();
    out.push(r.to_tsv());
    out.push(r.summary_json());
    let mut g = ExperimentConfig::new(ExperimentName::EmpiricalGap);
    g.apply_overrides(&[("n", "2,10"), ("k", "100,10000"), ("trials", "4"), ("seed", "114")]).unwrap();
    let r = exp_empirical_gap(&g).unwrap();
    out.push(r.to_tsv());
    out.push(r.summary_json());
    out
}

fn c14_reproducibility() -> Outcome {
    let first = seeded_outputs();
    let second = seeded_outputs();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(seeded_outputs);
    let same = first == second && first == single;
    outcome(same, format!("{} outputs compared across repeated and single-threaded runs", first.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("path disagreement oracle", c01_path_disagreement),
        ("distribution validity", c02_distribution_validity),
        ("invariance suite", c03_invariance),
        ("separability", c04_separability),
        ("close pairs exhaustive", c05_close_pairs_exhaustive),
        ("chop invariants", c06_chop),
        ("generator laws", c07_generator_laws),
        ("certificate soundness", c08_certificate_soundness),
        ("z-law correctness", c09_z_law),
        ("separation trend", c10_trend),
        ("empirical gap", c11_empirical_gap),
        ("monte carlo estimator", c12_monte_carlo),
        ("azuma bound", c13_azuma),
        ("reproducibility", c14_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.passed);
        println!("criterion {:02} {name}: {} ({})", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
