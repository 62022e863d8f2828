//! Invariants checked on randomly generated instances.

mod common;

use common::random_model;
use proptest::prelude::*;
use treevar::discriminator::{
    certify, chop, close_pair_floor, close_pair_guarantee, close_pairs, far_pair_ceiling, select_far_pairs,
    z_distribution, CertifyOptions,
};
use treevar::experiments::{random_mechanism, separability_defect};
use treevar::pattern_dist::{exact_distribution, Pattern};
use treevar::random_trees::{default_labels, uniform_tree, yule_harding_tree};
use treevar::tree::{parse_newick, tree_identity, write_newick_with_values};
use treevar::vardist::vardist_exact;
use treevar::{write_newick, Family, Mechanism64, Scale};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn newick_round_trip(n in 3usize..40, seed in any::<u64>()) {
        let t = uniform_tree(&default_labels(n), seed).unwrap();
        let text = write_newick(&t);
        let back = parse_newick(&text).unwrap();
        prop_assert!(tree_identity(&t, &back).unwrap());
        prop_assert_eq!(write_newick(&back), text);
    }

    #[test]
    fn annotated_newick_round_trip(n in 3usize..20, seed in any::<u64>()) {
        let (t, m) = random_model(n, Family::Cfn, 0.01, 0.45, seed);
        let text = write_newick_with_values(&t, m.values());
        let back = parse_newick(&text).unwrap();
        let m2 = Mechanism64::from_annotations(&back, Family::Cfn, Scale::Probability).unwrap();
        let d1 = exact_distribution(&t, &m).unwrap();
        let d2 = exact_distribution(&back, &m2).unwrap();
        prop_assert!(vardist_exact(&d1, &d2).unwrap().estimate < 1e-12);
    }

    #[test]
    fn probability_length_round_trip(p in 0.0f64..0.499, q in 2u32..6) {
        let family = if q == 2 { Family::Cfn } else { Family::symmetric(q).unwrap() };
        let p = p * family.max_probability::<f64>() * 2.0;
        let t = family.length_from_probability(p);
        prop_assert!(t >= 0.0);
        prop_assert!((family.probability_from_length(t) - p).abs() <= 1e-12 * p.max(1e-3));
    }

    #[test]
    fn distributions_are_normalized_and_symmetric(n in 2usize..11, seed in any::<u64>()) {
        let (t, m) = if n == 2 {
            let t = parse_newick("(a,b);").unwrap();
            let m = Mechanism64::constant(&t, Family::Cfn, 0.3).unwrap();
            (t, m)
        } else {
            random_model(n, Family::Cfn, 0.05, 0.45, seed)
        };
        let d = exact_distribution(&t, &m).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() < 1e-9);
        for i in 0..1u64 << n {
            let p = Pattern::from_index(i, n, 2);
            prop_assert!((d.probability(&p) - d.probability(&p.complement())).abs() < 1e-12);
        }
    }

    #[test]
    fn vardist_is_a_metric(seed in any::<u64>(), n in 4usize..8) {
        let ds: Vec<_> = (0..3)
            .map(|i| {
                let (t, m) = random_model(n, Family::Cfn, 0.05, 0.45, seed.wrapping_add(i));
                exact_distribution(&t, &m).unwrap()
            })
            .collect();
        let v = |a: usize, b: usize| vardist_exact(&ds[a], &ds[b]).unwrap().estimate;
        prop_assert!((0.0..=2.0).contains(&v(0, 1)));
        prop_assert_eq!(v(0, 0), 0.0);
        prop_assert!((v(0, 1) - v(1, 0)).abs() < 1e-15);
        prop_assert!(v(0, 2) <= v(0, 1) + v(1, 2) + 1e-12);
    }

    #[test]
    fn close_pairs_postconditions(n in 4usize..200, seed in any::<u64>(), yule in any::<bool>()) {
        let labels = default_labels(n);
        let t = if yule { yule_harding_tree(&labels, seed) } else { uniform_tree(&labels, seed) }.unwrap();
        let ps = close_pairs(&t).unwrap();
        prop_assert!(ps.check(&t).is_ok());
        prop_assert!(ps.len() >= close_pair_guarantee(n));
        prop_assert!(ps.iter().all(|p| p.distance() == 2 || p.distance() == 3));
    }

    #[test]
    fn chop_invariants(n in 2usize..64, q in 2usize..9, seed in any::<u64>()) {
        let t = if n < 3 { parse_newick("(a,b);").unwrap() } else { uniform_tree(&default_labels(n), seed).unwrap() };
        let r = chop(&t, q).unwrap();
        prop_assert!(r.check(&t).is_ok());
        prop_assert!(r.cut_edges.len() <= n / q);
    }

    #[test]
    fn far_pairs_are_far_and_disjoint(n in 8usize..120, h in 1usize..6, seed in any::<u64>()) {
        let t1 = uniform_tree(&default_labels(n), seed).unwrap();
        let t2 = uniform_tree(&default_labels(n), seed ^ 0x5555).unwrap();
        let pairs = close_pairs(&t1).unwrap();
        let chosen = select_far_pairs(&pairs, &t2, h).unwrap();
        let mut used = std::collections::BTreeSet::new();
        for &i in &chosen {
            let path = t2.path_between(&pairs.pairs[i].a, &pairs.pairs[i].b).unwrap();
            prop_assert!(path.len() >= h);
            for e in path {
                prop_assert!(used.insert(e));
            }
        }
        if h == 1 && !pairs.is_empty() {
            prop_assert!(!chosen.is_empty());
        }
    }

    #[test]
    fn z_law_is_a_pmf(probs in proptest::collection::vec(0.0f64..=1.0, 0..60)) {
        let pmf = z_distribution(&probs).unwrap();
        prop_assert_eq!(pmf.len(), probs.len() + 1);
        prop_assert!(pmf.iter().all(|&x| x >= -1e-15));
        prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        prop_assert!((mean - probs.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn agreement_factorizes_over_disjoint_pairs(n in 4usize..11, seed in any::<u64>()) {
        let t = uniform_tree(&default_labels(n), seed).unwrap();
        let m = random_mechanism(&t, Family::Cfn, 0.05, 0.45, seed).unwrap();
        let d = exact_distribution(&t, &m).unwrap();
        prop_assert!(separability_defect(&d, &close_pairs(&t).unwrap()).unwrap() < 1e-9);
    }

    #[test]
    fn certificate_is_sound(n in 4usize..10, seed in any::<u64>(), h in 1usize..4, g in 0.05f64..0.3) {
        let t1 = uniform_tree(&default_labels(n), seed).unwrap();
        let t2 = uniform_tree(&default_labels(n), seed.wrapping_add(1)).unwrap();
        let m1 = random_mechanism(&t1, Family::Cfn, 0.01, g, seed).unwrap();
        let f = 0.1;
        let m2 = random_mechanism(&t2, Family::Cfn, f, 0.45, seed).unwrap();
        let exact = vardist_exact(&exact_distribution(&t1, &m1).unwrap(), &exact_distribution(&t2, &m2).unwrap()).unwrap().estimate;
        let cert = certify(&t1, &m1, &t2, &m2, &CertifyOptions { h: Some(h), g: Some(g), ..Default::default() }).unwrap();
        prop_assert!(cert.bound <= exact + 1e-9);
        prop_assert!((0.0..=2.0).contains(&cert.bound));
        prop_assert!(cert.bound >= cert.reference.as_ref().unwrap().bound);
        let m = cert.selected.len() as f64;
        if m > 0.0 {
            prop_assert!(cert.mean1() / m >= close_pair_floor(g) - 1e-12);
            prop_assert!(cert.mean2() / m <= far_pair_ceiling(f, h) + 1e-12);
        }
    }
}
